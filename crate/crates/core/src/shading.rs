//! Second-order spherical-harmonic Lambertian shading.
//!
//! A pixel renders as `albedo × Σ_i l_i · Y_i(n)` with the nine real harmonics
//! below; the Lambertian attenuation factors are folded into the lighting
//! coefficients.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{warp, warp_normals, SimilarityTransform};
use crate::linalg::damped_min_norm_solve;
use crate::manifest::{DatasetManifest, Record};
use crate::normal_map::{NormalMap, UNIT_TOLERANCE};
use crate::raster::{read_fmap, Raster};
use crate::scalar::Real;

pub const SH_COUNT: usize = 9;

/// Pixels whose albedo is at or below this are excluded from lighting fits.
pub const MIN_FIT_ALBEDO: f64 = 1e-3;

/// Diagonal damping of the lighting normal equations.
pub const FIT_DAMPING: f64 = 1e-9;

/// Shading floor used when dividing an image by its shading.
pub const SHADING_FLOOR: f64 = 1e-3;

/// Basis evaluated at one normal, ordered
/// `[Y00, Y1-1, Y10, Y11, Y2-2, Y2-1, Y20, Y21, Y22]`.
pub type ShBasis<T> = [T; SH_COUNT];

struct ShConstants<T> {
    c0: T,
    c1: T,
    c2: T,
    c20: T,
    c22: T,
}

#[inline]
fn constants<T: Real>() -> ShConstants<T> {
    let pi = std::f64::consts::PI;
    ShConstants {
        c0: T::lit(1.0 / (2.0 * pi.sqrt())),
        c1: T::lit((3.0 / (4.0 * pi)).sqrt()),
        c2: T::lit(3.0 * (5.0 / (12.0 * pi)).sqrt()),
        c20: T::lit(0.5 * (5.0 / (4.0 * pi)).sqrt()),
        c22: T::lit(1.5 * (5.0 / (12.0 * pi)).sqrt()),
    }
}

/// Evaluates the basis without checking that `n` is unit length.
#[inline]
pub fn sh_basis_unchecked<T: Real>(n: [T; 3]) -> ShBasis<T> {
    let k = constants::<T>();
    let [x, y, z] = n;
    [
        k.c0,
        k.c1 * y,
        k.c1 * z,
        k.c1 * x,
        k.c2 * x * y,
        k.c2 * y * z,
        k.c20 * (T::lit(3.0) * z * z - T::one()),
        k.c2 * x * z,
        k.c22 * (x * x - y * y),
    ]
}

/// Evaluates the basis at a unit normal.
pub fn sh_basis<T: Real>(n: [T; 3]) -> Result<ShBasis<T>> {
    let norm = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
    if !((norm - T::one()).abs() <= T::lit(UNIT_TOLERANCE)) {
        return Err(Error::Validation(format!(
            "sh_basis needs a unit normal, got length {norm}"
        )));
    }
    Ok(sh_basis_unchecked(n))
}

#[inline]
fn dot9<T: Real>(a: &[T; SH_COUNT], b: &[T; SH_COUNT]) -> T {
    let mut s = T::zero();
    for i in 0..SH_COUNT {
        s += a[i] * b[i];
    }
    s
}

/// Nine lighting coefficients per color channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ShLighting<T> {
    coeffs: Vec<[T; SH_COUNT]>,
}

impl<T: Real> ShLighting<T> {
    pub fn new(coeffs: Vec<[T; SH_COUNT]>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::Validation("lighting needs at least one channel".into()));
        }
        if coeffs.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Validation("non-finite lighting coefficient".into()));
        }
        Ok(ShLighting { coeffs })
    }

    pub fn mono(coeffs: [T; SH_COUNT]) -> Self {
        ShLighting::new(vec![coeffs]).expect("finite coefficients")
    }

    pub fn channels(&self) -> usize {
        self.coeffs.len()
    }

    /// Coefficients for image channel `c` (a single-channel lighting applies
    /// to every channel).
    pub fn channel(&self, c: usize) -> &[T; SH_COUNT] {
        if self.coeffs.len() == 1 {
            &self.coeffs[0]
        } else {
            &self.coeffs[c]
        }
    }

    pub fn coeffs(&self) -> &[[T; SH_COUNT]] {
        &self.coeffs
    }

    pub fn scaled(&self, a: T) -> Self {
        ShLighting {
            coeffs: self.coeffs.iter().map(|c| c.map(|v| v * a)).collect(),
        }
    }

    /// Lighting that, applied to normals rotated in-plane by `angle`, yields the
    /// same shading this lighting gives the unrotated normals.
    pub fn rotated_about_view_axis(&self, angle: T) -> Self {
        let (s1, c1) = angle.sin_cos();
        let (s2, c2) = (angle + angle).sin_cos();
        let rot = |l: &mut [T; SH_COUNT], a: usize, b: usize, s: T, c: T| {
            let (la, lb) = (l[a], l[b]);
            l[a] = c * la + s * lb;
            l[b] = c * lb - s * la;
        };
        let coeffs = self
            .coeffs
            .iter()
            .map(|l| {
                let mut l = *l;
                rot(&mut l, 1, 3, s1, c1);
                rot(&mut l, 5, 7, s1, c1);
                rot(&mut l, 4, 8, s2, c2);
                l
            })
            .collect();
        ShLighting { coeffs }
    }

    /// One line per channel, nine space-separated values.
    pub fn to_text(&self) -> String {
        self.coeffs
            .iter()
            .map(|c| {
                let parts: Vec<String> = c.iter().map(|v| v.to_string()).collect();
                parts.join(" ") + "\n"
            })
            .collect()
    }

    /// Parses 9 or 27 whitespace-separated values.
    pub fn parse(text: &str) -> Result<Self> {
        let vals: Vec<f64> = text
            .split_whitespace()
            .map(|t| {
                t.parse()
                    .map_err(|_| Error::parse("lighting", format!("bad value {t:?}")))
            })
            .collect::<Result<_>>()?;
        if vals.len() != SH_COUNT && vals.len() != 3 * SH_COUNT {
            return Err(Error::parse(
                "lighting",
                format!("expected 9 or 27 values, got {}", vals.len()),
            ));
        }
        let coeffs = vals
            .chunks(SH_COUNT)
            .map(|c| std::array::from_fn(|i| T::lit(c[i])))
            .collect();
        ShLighting::new(coeffs)
    }
}

pub fn read_lighting<T: Real>(path: impl AsRef<Path>) -> Result<ShLighting<T>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ShLighting::parse(&text)
}

pub fn write_lighting<T: Real>(l: &ShLighting<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, l.to_text()).map_err(|e| Error::io(path, e))
}

/// A rendered image plus the number of samples clamped at zero radiance.
#[derive(Debug, Clone)]
pub struct Rendered<T> {
    pub image: Raster<T>,
    pub clamped: usize,
}

fn output_channels(albedo: usize, light: usize) -> Result<usize> {
    match (albedo, light) {
        (a, l) if a == l => Ok(a),
        (1, l) => Ok(l),
        (a, 1) => Ok(a),
        (a, l) => Err(Error::DimensionMismatch(format!(
            "albedo has {a} channels but lighting has {l}"
        ))),
    }
}

/// Renders `albedo × (l · Y(n))` per valid pixel and channel, clamping negative
/// radiance to zero. The output mask is the intersection of the input masks.
pub fn render_diffuse<T: Real>(
    normals: &NormalMap<T>,
    albedo: &Raster<T>,
    light: &ShLighting<T>,
) -> Result<Rendered<T>> {
    let nr = normals.raster();
    if !nr.same_shape(albedo) {
        return Err(Error::DimensionMismatch(format!(
            "normals are {}x{} but albedo is {}x{}",
            nr.width(),
            nr.height(),
            albedo.width(),
            albedo.height()
        )));
    }
    let ch = output_channels(albedo.channels(), light.channels())?;
    let (w, h) = (nr.width(), nr.height());
    let mut data = vec![T::zero(); w * h * ch];
    let mut mask = vec![false; w * h];
    let mut clamped = 0;
    for p in 0..w * h {
        if !(nr.mask()[p] && albedo.mask()[p]) {
            continue;
        }
        mask[p] = true;
        let n = &nr.data()[p * 3..p * 3 + 3];
        let b = sh_basis_unchecked([n[0], n[1], n[2]]);
        for c in 0..ch {
            let rho = albedo.data()[p * albedo.channels() + c.min(albedo.channels() - 1)];
            let v = rho * dot9(light.channel(c), &b);
            data[p * ch + c] = if v < T::zero() {
                clamped += 1;
                T::zero()
            } else {
                v
            };
        }
    }
    Ok(Rendered {
        image: Raster::new(w, h, ch, data, mask)?,
        clamped,
    })
}

/// Result of a per-channel least-squares lighting fit.
#[derive(Debug, Clone)]
pub struct LightingFit<T> {
    pub lighting: ShLighting<T>,
    pub residual_rms: Vec<T>,
    pub rank: Vec<usize>,
    pub used_pixels: usize,
}

/// Fits lighting so that `image ≈ albedo × (l · Y(n))` over valid pixels whose
/// albedo exceeds [`MIN_FIT_ALBEDO`], independently per image channel, as the
/// damped minimum-norm least-squares solution.
pub fn fit_lighting<T: Real>(
    image: &Raster<T>,
    normals: &NormalMap<T>,
    albedo: &Raster<T>,
) -> Result<LightingFit<T>> {
    let nr = normals.raster();
    if !image.same_shape(nr) || !image.same_shape(albedo) {
        return Err(Error::DimensionMismatch(
            "image, normals and albedo must share dimensions".into(),
        ));
    }
    let ch = image.channels();
    if albedo.channels() != 1 && albedo.channels() != ch {
        return Err(Error::DimensionMismatch(format!(
            "albedo has {} channels, image has {ch}",
            albedo.channels()
        )));
    }
    let min_albedo = T::lit(MIN_FIT_ALBEDO);
    let n_px = image.width() * image.height();
    let mut coeffs = Vec::with_capacity(ch);
    let mut residual_rms = Vec::with_capacity(ch);
    let mut ranks = Vec::with_capacity(ch);
    let mut used_pixels = usize::MAX;
    for c in 0..ch {
        let ac = c.min(albedo.channels() - 1);
        let rows = (0..n_px).filter_map(|p| {
            if !(image.mask()[p] && nr.mask()[p] && albedo.mask()[p]) {
                return None;
            }
            let rho = albedo.data()[p * albedo.channels() + ac];
            if !(rho > min_albedo) {
                return None;
            }
            let n = &nr.data()[p * 3..p * 3 + 3];
            let b = sh_basis_unchecked([n[0], n[1], n[2]]);
            Some((b.map(|v| v * rho), image.data()[p * ch + c]))
        });
        let mut ata = [T::zero(); SH_COUNT * SH_COUNT];
        let mut atb = [T::zero(); SH_COUNT];
        let mut count = 0usize;
        for (a, y) in rows.clone() {
            count += 1;
            for i in 0..SH_COUNT {
                atb[i] += a[i] * y;
                for j in i..SH_COUNT {
                    ata[i * SH_COUNT + j] += a[i] * a[j];
                }
            }
        }
        if count < SH_COUNT {
            return Err(Error::Degenerate(format!(
                "lighting fit needs at least {SH_COUNT} usable pixels, channel {c} has {count}"
            )));
        }
        for i in 0..SH_COUNT {
            for j in 0..i {
                ata[i * SH_COUNT + j] = ata[j * SH_COUNT + i];
            }
        }
        let (sol, rank) = damped_min_norm_solve(&ata, &atb, T::lit(FIT_DAMPING));
        let l: [T; SH_COUNT] = std::array::from_fn(|i| sol[i]);
        let mut sse = T::zero();
        for (a, y) in rows {
            let r = y - dot9(&l, &a);
            sse += r * r;
        }
        coeffs.push(l);
        residual_rms.push((sse / T::count(count)).sqrt());
        ranks.push(rank);
        used_pixels = used_pixels.min(count);
    }
    Ok(LightingFit {
        lighting: ShLighting::new(coeffs)?,
        residual_rms,
        rank: ranks,
        used_pixels,
    })
}

/// Where a decomposition came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DecomposerMode {
    /// Maps produced by an external decomposition network, read from files.
    OracleFiles,
    /// Generator ground truth shipped with a synthetic dataset.
    SyntheticGroundTruth,
    /// Classical fit against a canonical face-normal template.
    TemplateFit,
}

impl std::fmt::Display for DecomposerMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DecomposerMode::OracleFiles => "oracle",
            DecomposerMode::SyntheticGroundTruth => "synthetic",
            DecomposerMode::TemplateFit => "template",
        })
    }
}

impl std::str::FromStr for DecomposerMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oracle" | "oracle_files" => Ok(DecomposerMode::OracleFiles),
            "synthetic" | "synthetic_ground_truth" => Ok(DecomposerMode::SyntheticGroundTruth),
            "template" | "template_fit" => Ok(DecomposerMode::TemplateFit),
            other => Err(Error::parse("decomposer", format!("unknown mode {other:?}"))),
        }
    }
}

/// Intrinsic decomposition of one face image.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition<T> {
    pub diffuse: Raster<T>,
    pub normals: NormalMap<T>,
    pub albedo: Raster<T>,
    pub lighting: ShLighting<T>,
    pub source: DecomposerMode,
}

impl<T: Real> Decomposition<T> {
    /// Assembles a decomposition whose diffuse image is rendered from the parts.
    pub fn rendered(
        normals: NormalMap<T>,
        albedo: Raster<T>,
        lighting: ShLighting<T>,
        source: DecomposerMode,
    ) -> Result<Self> {
        let diffuse = render_diffuse(&normals, &albedo, &lighting)?.image;
        Ok(Decomposition {
            diffuse,
            normals,
            albedo,
            lighting,
            source,
        })
    }

    /// Largest deviation between the stored diffuse image and a re-render from
    /// normals, albedo and lighting, over pixels valid in both.
    pub fn consistency_error(&self) -> Result<T> {
        let re = render_diffuse(&self.normals, &self.albedo, &self.lighting)?.image;
        if !re.same_shape(&self.diffuse) || re.channels() != self.diffuse.channels() {
            return Err(Error::DimensionMismatch(
                "diffuse image does not match its factors".into(),
            ));
        }
        let ch = re.channels();
        let mut worst = T::zero();
        for p in 0..re.mask().len() {
            if !(re.mask()[p] && self.diffuse.mask()[p]) {
                continue;
            }
            for c in 0..ch {
                worst = worst.max((re.data()[p * ch + c] - self.diffuse.data()[p * ch + c]).abs());
            }
        }
        Ok(worst)
    }

    /// Resamples the decomposition into another frame. Normals and lighting are
    /// rotated together so shading is preserved; the diffuse image is
    /// re-rendered, except for oracle sources whose diffuse image is warped.
    pub fn warped(&self, t: &SimilarityTransform<T>, out_w: usize, out_h: usize) -> Result<Self> {
        let normals = warp_normals(&self.normals, t, out_w, out_h);
        let albedo = warp(&self.albedo, t, out_w, out_h);
        let lighting = self.lighting.rotated_about_view_axis(t.rotation);
        if self.source == DecomposerMode::OracleFiles {
            return Ok(Decomposition {
                diffuse: warp(&self.diffuse, t, out_w, out_h),
                normals,
                albedo,
                lighting,
                source: self.source,
            });
        }
        Decomposition::rendered(normals, albedo, lighting, self.source)
    }

    pub fn cast<U: Real>(&self) -> Decomposition<U> {
        Decomposition {
            diffuse: self.diffuse.cast(),
            normals: self.normals.cast(),
            albedo: self.albedo.cast(),
            lighting: ShLighting {
                coeffs: self
                    .lighting
                    .coeffs
                    .iter()
                    .map(|c| c.map(|v| U::lit(v.to_f64_lossy())))
                    .collect(),
            },
            source: self.source,
        }
    }
}

/// The diffuse reconstructed image of a decomposition.
pub fn diffuse_reconstruct<T: Real>(d: &Decomposition<T>) -> Result<Raster<T>> {
    match d.source {
        DecomposerMode::OracleFiles => Ok(d.diffuse.clone()),
        _ => Ok(render_diffuse(&d.normals, &d.albedo, &d.lighting)?.image),
    }
}

fn required_path(
    manifest: &DatasetManifest,
    record: &Record,
    what: &str,
    rel: Option<&String>,
) -> Result<std::path::PathBuf> {
    match rel {
        None => Err(Error::MissingFile {
            what: format!("{what} of record {}", record.id),
            path: "<not declared in manifest>".into(),
        }),
        Some(r) => {
            let p = manifest.resolve(r);
            if p.is_file() {
                Ok(p)
            } else {
                Err(Error::MissingFile {
                    what: format!("{what} of record {}", record.id),
                    path: p,
                })
            }
        }
    }
}

/// Decomposes `img` (in its native frame) according to `mode`.
///
/// * oracle files: normals and albedo are read from the record; lighting is
///   read when declared and fitted otherwise; a declared diffuse map is passed
///   through untouched.
/// * synthetic ground truth: normals, albedo and lighting are read from the
///   record and the diffuse image is rendered from them.
/// * template fit: `template` normals with lighting and albedo estimated by
///   [`template_fit`]; `img` must already share the template's frame.
pub fn decompose<T: Real>(
    img: &Raster<T>,
    record: &Record,
    manifest: &DatasetManifest,
    mode: DecomposerMode,
    template: Option<&NormalMap<T>>,
) -> Result<Decomposition<T>> {
    match mode {
        DecomposerMode::OracleFiles => {
            let normals_p = required_path(manifest, record, "normals", record.normals_path.as_ref())?;
            let albedo_p = required_path(manifest, record, "albedo", record.albedo_path.as_ref())?;
            let normals = NormalMap::new(read_fmap(&normals_p)?)?;
            let albedo: Raster<T> = read_fmap(&albedo_p)?;
            let lighting = match &record.lighting_path {
                Some(_) => read_lighting(required_path(
                    manifest,
                    record,
                    "lighting",
                    record.lighting_path.as_ref(),
                )?)?,
                None => fit_lighting(img, &normals, &albedo)?.lighting,
            };
            let diffuse = match &record.diffuse_path {
                Some(_) => read_fmap(required_path(
                    manifest,
                    record,
                    "diffuse",
                    record.diffuse_path.as_ref(),
                )?)?,
                None => render_diffuse(&normals, &albedo, &lighting)?.image,
            };
            Ok(Decomposition {
                diffuse,
                normals,
                albedo,
                lighting,
                source: DecomposerMode::OracleFiles,
            })
        }
        DecomposerMode::SyntheticGroundTruth => {
            let normals_p = required_path(manifest, record, "normals", record.normals_path.as_ref())?;
            let albedo_p = required_path(manifest, record, "albedo", record.albedo_path.as_ref())?;
            let light_p =
                required_path(manifest, record, "lighting", record.lighting_path.as_ref())?;
            Decomposition::rendered(
                NormalMap::new(read_fmap(&normals_p)?)?,
                read_fmap(&albedo_p)?,
                read_lighting(&light_p)?,
                DecomposerMode::SyntheticGroundTruth,
            )
        }
        DecomposerMode::TemplateFit => {
            let template = template.ok_or_else(|| Error::MissingFile {
                what: "face-normal template".into(),
                path: "<none supplied>".into(),
            })?;
            template_fit(img, template)
        }
    }
}

/// Fits lighting against fixed template normals with unit albedo, divides the
/// image by the fitted shading to get albedo, then repeats once with that
/// albedo.
pub fn template_fit<T: Real>(img: &Raster<T>, template: &NormalMap<T>) -> Result<Decomposition<T>> {
    if !img.same_shape(template.raster()) {
        return Err(Error::DimensionMismatch(format!(
            "image is {}x{} but the template is {}x{}",
            img.width(),
            img.height(),
            template.width(),
            template.height()
        )));
    }
    let ch = img.channels();
    let (w, h) = (img.width(), img.height());
    let mut mask: Vec<bool> = img
        .mask()
        .iter()
        .zip(template.raster().mask())
        .map(|(&a, &b)| a && b)
        .collect();
    let mut albedo = Raster::new(w, h, ch, vec![T::one(); w * h * ch], mask.clone())?;
    let floor = T::lit(SHADING_FLOOR);
    let mut lighting = None;
    for _ in 0..2 {
        let fit = fit_lighting(img, template, &albedo)?;
        let shading = render_diffuse(
            template,
            &Raster::new(w, h, 1, vec![T::one(); w * h], mask.clone())?,
            &fit.lighting,
        )?
        .image;
        let mut data = vec![T::zero(); w * h * ch];
        for p in 0..w * h {
            if !mask[p] {
                continue;
            }
            for c in 0..ch {
                let s = shading.data()[p * shading.channels() + c.min(shading.channels() - 1)];
                data[p * ch + c] = img.data()[p * ch + c] / s.max(floor);
            }
        }
        albedo = Raster::new(w, h, ch, data, mask.clone())?;
        lighting = Some(fit.lighting);
    }
    mask.clear();
    Decomposition::rendered(
        template.clone(),
        albedo,
        lighting.expect("two iterations ran"),
        DecomposerMode::TemplateFit,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Closed-form real harmonics written out independently of the table above.
    fn basis_oracle(n: [f64; 3]) -> [f64; 9] {
        let pi = std::f64::consts::PI;
        let [x, y, z] = n;
        [
            0.5 * (1.0 / pi).sqrt(),
            (3.0 / (4.0 * pi)).sqrt() * y,
            (3.0 / (4.0 * pi)).sqrt() * z,
            (3.0 / (4.0 * pi)).sqrt() * x,
            0.5 * (15.0 / pi).sqrt() * x * y,
            0.5 * (15.0 / pi).sqrt() * y * z,
            0.25 * (5.0 / pi).sqrt() * (3.0 * z * z - 1.0),
            0.5 * (15.0 / pi).sqrt() * x * z,
            0.25 * (15.0 / pi).sqrt() * (x * x - y * y),
        ]
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn basis_at_pole_and_equator() {
        let z = sh_basis([0.0, 0.0, 1.0]).unwrap();
        assert!(close(&z, &[0.28209, 0.0, 0.48860, 0.0, 0.0, 0.0, 0.63078, 0.0, 0.0], 1e-5));
        assert!(close(&z, &basis_oracle([0.0, 0.0, 1.0]), 1e-15));
        let x = sh_basis([1.0, 0.0, 0.0]).unwrap();
        assert!(close(&x, &[0.28209, 0.0, 0.0, 0.48860, 0.0, 0.0, -0.31539, 0.0, 0.54627], 1e-5));
        assert!(close(&x, &basis_oracle([1.0, 0.0, 0.0]), 1e-15));
    }

    #[test]
    fn basis_parity_in_y() {
        let up = sh_basis([0.0, 1.0, 0.0]).unwrap();
        let down = sh_basis([0.0, -1.0, 0.0]).unwrap();
        for i in 0..9 {
            if [1, 4, 5].contains(&i) {
                assert_eq!(up[i], -down[i]);
            } else {
                assert_eq!(up[i], down[i]);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let n = random_unit(&mut rng);
            let a = sh_basis(n).unwrap();
            let b = sh_basis([n[0], -n[1], n[2]]).unwrap();
            assert!(close(&a, &basis_oracle(n), 1e-14));
            for i in [1, 4, 5] {
                assert!((a[i] + b[i]).abs() < 1e-15);
            }
            assert!((a[0] - 0.282_094_791_773_878_1).abs() < 1e-15);
            assert!(a.iter().all(|v| v.abs() <= 1.1));
        }
    }

    #[test]
    fn basis_rejects_non_unit() {
        assert!(sh_basis([0.0, 0.0, 0.5]).is_err());
    }

    pub(crate) fn random_unit(rng: &mut impl Rng) -> [f64; 3] {
        loop {
            let v: [f64; 3] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
            let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            if n > 0.1 && n <= 1.0 {
                return v.map(|x| x / n);
            }
        }
    }

    fn random_normals(w: usize, h: usize, rng: &mut impl Rng) -> NormalMap<f64> {
        let mut data = Vec::with_capacity(w * h * 3);
        for _ in 0..w * h {
            let mut n = random_unit(rng);
            n[2] = n[2].abs();
            data.extend_from_slice(&n);
        }
        NormalMap::new(Raster::new(w, h, 3, data, vec![true; w * h]).unwrap()).unwrap()
    }

    #[test]
    fn dc_only_light_renders_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = random_normals(5, 4, &mut rng);
        let mut l = [0.0; 9];
        l[0] = 1.0;
        let out = render_diffuse(&n, &Raster::filled(5, 4, 1, 1.0), &ShLighting::mono(l)).unwrap();
        assert!(out.image.data().iter().all(|&v| (v - 0.28209).abs() < 1e-5));
        assert_eq!(out.clamped, 0);
    }

    #[test]
    fn zero_albedo_renders_black() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = random_normals(4, 4, &mut rng);
        let l = ShLighting::mono([1.0, 0.3, 0.5, -0.2, 0.1, 0.0, 0.2, 0.1, -0.1]);
        let out = render_diffuse(&n, &Raster::filled(4, 4, 1, 0.0), &l).unwrap();
        assert!(out.image.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn flat_normals_with_z_light() {
        let n = NormalMap::uniform(3, 3, [0.0, 0.0, 1.0]).unwrap();
        let mut l = [0.0; 9];
        l[2] = 1.0;
        let out = render_diffuse(&n, &Raster::filled(3, 3, 1, 1.0), &ShLighting::mono(l)).unwrap();
        assert!(out.image.data().iter().all(|&v: &f64| (v - 0.48860).abs() < 1e-5));
    }

    #[test]
    fn negative_radiance_is_clamped_and_counted() {
        let n = NormalMap::uniform(2, 2, [0.0, 0.0, 1.0]).unwrap();
        let mut l = [0.0; 9];
        l[2] = -1.0;
        let out = render_diffuse(&n, &Raster::filled(2, 2, 1, 1.0), &ShLighting::mono(l)).unwrap();
        assert_eq!(out.clamped, 4);
        assert!(out.image.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn render_dimension_mismatch() {
        let n = NormalMap::uniform(2, 2, [0.0, 0.0, 1.0]).unwrap();
        let l = ShLighting::mono([1.0; 9]);
        assert!(render_diffuse(&n, &Raster::filled(3, 2, 1, 1.0), &l).is_err());
        let rgb = ShLighting::new(vec![[1.0; 9]; 3]).unwrap();
        assert!(render_diffuse(&n, &Raster::filled(2, 2, 2, 1.0), &rgb).is_err());
    }

    #[test]
    fn render_is_linear_in_lighting() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = random_normals(6, 6, &mut rng);
        let albedo = Raster::from_fn(6, 6, 1, |x, y, _| 0.2 + 0.1 * ((x + y) % 5) as f64);
        // DC-dominant lights keep every pixel positive, so no clamping occurs.
        let l1: [f64; 9] = std::array::from_fn(|i| if i == 0 { 4.0 } else { rng.random_range(-0.3..0.3) });
        let l2: [f64; 9] = std::array::from_fn(|i| if i == 0 { 3.0 } else { rng.random_range(-0.3..0.3) });
        let (a, b) = (0.7, 1.9);
        let mix: [f64; 9] = std::array::from_fn(|i| a * l1[i] + b * l2[i]);
        let r1 = render_diffuse(&n, &albedo, &ShLighting::mono(l1)).unwrap();
        let r2 = render_diffuse(&n, &albedo, &ShLighting::mono(l2)).unwrap();
        let rm = render_diffuse(&n, &albedo, &ShLighting::mono(mix)).unwrap();
        assert_eq!(r1.clamped + r2.clamped + rm.clamped, 0);
        for i in 0..36 {
            let lin = a * r1.image.data()[i] + b * r2.image.data()[i];
            assert!((lin - rm.image.data()[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn fit_recovers_lighting_from_noiseless_render() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = random_normals(12, 12, &mut rng);
        let albedo = Raster::from_fn(12, 12, 1, |x, y, _| 0.3 + 0.05 * ((3 * x + y) % 7) as f64);
        let truth: [f64; 9] = std::array::from_fn(|i| if i == 0 { 4.0 } else { rng.random_range(-0.5..0.5) });
        let img = render_diffuse(&n, &albedo, &ShLighting::mono(truth)).unwrap();
        assert_eq!(img.clamped, 0);
        let fit = fit_lighting(&img.image, &n, &albedo).unwrap();
        assert_eq!(fit.rank, vec![9]);
        let got = fit.lighting.channel(0);
        let err: f64 = (0..9).map(|i| (got[i] - truth[i]).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = truth.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(err / norm < 1e-6, "relative error {}", err / norm);
        assert!(fit.residual_rms[0] < 1e-6);
    }

    #[test]
    fn identical_normals_fit_rank_one_min_norm() {
        let n = NormalMap::uniform(4, 4, [0.0, 0.0, 1.0]).unwrap();
        let img = Raster::filled(4, 4, 1, 0.5);
        let fit = fit_lighting(&img, &n, &Raster::filled(4, 4, 1, 1.0)).unwrap();
        assert_eq!(fit.rank, vec![1]);
        // Minimum-norm solution lies along the basis vector itself.
        let b = sh_basis([0.0, 0.0, 1.0]).unwrap();
        let bb: f64 = b.iter().map(|v| v * v).sum();
        let l = fit.lighting.channel(0);
        for i in 0..9 {
            assert!((l[i] - 0.5 * b[i] / bb).abs() < 1e-8);
        }
    }

    #[test]
    fn too_few_pixels() {
        let n = NormalMap::uniform(2, 2, [0.0, 0.0, 1.0]).unwrap();
        let img = Raster::filled(2, 2, 1, 0.5);
        assert!(matches!(
            fit_lighting(&img, &n, &Raster::filled(2, 2, 1, 1.0)),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn view_axis_rotation_preserves_shading() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let l: [f64; 9] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let light = ShLighting::mono(l);
        for _ in 0..50 {
            let theta = rng.random_range(-3.0..3.0);
            let n = random_unit(&mut rng);
            let (s, c) = f64::sin_cos(theta);
            let rn = [c * n[0] - s * n[1], s * n[0] + c * n[1], n[2]];
            let before = dot9(light.channel(0), &sh_basis_unchecked(n));
            let after = dot9(
                light.rotated_about_view_axis(theta).channel(0),
                &sh_basis_unchecked(rn),
            );
            assert!((before - after).abs() < 1e-12);
        }
    }

    #[test]
    fn lighting_text_round_trip() {
        let l = ShLighting::new(vec![[0.1, -2.5, 3.0, 0.0, 1e-7, 4.0, 5.0, 6.0, 7.0]; 3]).unwrap();
        assert_eq!(ShLighting::<f64>::parse(&l.to_text()).unwrap(), l);
        assert!(ShLighting::<f64>::parse("1 2 3").is_err());
    }

    #[test]
    fn template_fit_recovers_unit_albedo() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = random_normals(16, 16, &mut rng);
        let l = ShLighting::mono(std::array::from_fn(|i| if i == 0 { 3.0 } else { rng.random_range(-0.3..0.3) }));
        let img = render_diffuse(&n, &Raster::filled(16, 16, 1, 1.0), &l).unwrap().image;
        let d = template_fit(&img, &n).unwrap();
        assert!(d.albedo.data().iter().all(|&a| (a - 1.0).abs() < 1e-3));
        assert!(d.consistency_error().unwrap() < 1e-9);
    }

    #[test]
    fn full_basis_fit_beats_dc_only() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let n = random_normals(16, 16, &mut rng);
        let img = Raster::from_fn(16, 16, 1, |x, y, _| 0.4 + 0.01 * ((x * y) % 3) as f64);
        let d = template_fit(&img, &n).unwrap();
        let fit = fit_lighting(&img, &n, &Raster::filled(16, 16, 1, 1.0)).unwrap();
        // DC-only least squares predicts the mean intensity.
        let mean = img.data().iter().sum::<f64>() / 256.0;
        let dc_rms = (img.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 256.0).sqrt();
        assert!(fit.residual_rms[0] <= dc_rms + 1e-12);
        assert_eq!(d.source, DecomposerMode::TemplateFit);
    }
}
