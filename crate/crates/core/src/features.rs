//! Pair features: 21-bit quantized normals, embeddings and absolute-difference
//! vectors.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::normal_map::NormalMap;
use crate::raster::{read_png8, write_png8, Png8, Raster};
use crate::scalar::Real;

/// Largest code of the 7-bit per-component quantizer.
pub const CODE_MAX: u8 = 127;

/// Side of the grid normal differences are pooled onto.
pub const NORMAL_GRID: usize = 8;

/// Dimension of externally supplied embeddings.
pub const EXTERNAL_DIM: usize = 4096;

/// Blocks per side for the builtin descriptor's mean and orientation parts.
pub const BUILTIN_BLOCKS: usize = 16;

/// Orientation bins per builtin descriptor cell.
pub const BUILTIN_BINS: usize = 8;

/// Dimension of the builtin descriptor.
pub const BUILTIN_DIM: usize = BUILTIN_BLOCKS * BUILTIN_BLOCKS * (1 + BUILTIN_BINS);

/// Maps a component in `[-1, 1]` to `round((c + 1) / 2 · 127)`, ties away
/// from zero, saturating outside the range.
#[inline]
pub fn quantize_component<T: Real>(c: T) -> u8 {
    let v = ((c.to_f64_lossy() + 1.0) * 0.5 * f64::from(CODE_MAX)).round();
    v.clamp(0.0, f64::from(CODE_MAX)) as u8
}

#[inline]
pub fn dequantize_component<T: Real>(k: u8) -> T {
    T::lit(2.0 * f64::from(k) / f64::from(CODE_MAX) - 1.0)
}

/// Per-pixel triples of 7-bit codes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantizedNormalMap {
    width: usize,
    height: usize,
    codes: Vec<[u8; 3]>,
    mask: Vec<bool>,
}

impl QuantizedNormalMap {
    pub fn new(width: usize, height: usize, codes: Vec<[u8; 3]>, mask: Vec<bool>) -> Result<Self> {
        if codes.len() != width * height || mask.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{width}x{height} code map needs {} codes and mask bits, got {} and {}",
                width * height,
                codes.len(),
                mask.len()
            )));
        }
        if let Some(bad) = codes.iter().flatten().find(|&&k| k > CODE_MAX) {
            return Err(Error::Validation(format!("code {bad} exceeds {CODE_MAX}")));
        }
        Ok(QuantizedNormalMap {
            width,
            height,
            codes,
            mask,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn codes(&self) -> &[[u8; 3]] {
        &self.codes
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn code(&self, x: usize, y: usize) -> [u8; 3] {
        self.codes[y * self.width + x]
    }

    /// Decodes to component values `2k/127 - 1`; invalid pixels hold zeros.
    pub fn dequantize<T: Real>(&self) -> Raster<T> {
        let data = self
            .codes
            .iter()
            .zip(&self.mask)
            .flat_map(|(c, &m)| {
                c.map(|k| if m { dequantize_component(k) } else { T::zero() })
            })
            .collect();
        Raster::new(self.width, self.height, 3, data, self.mask.clone())
            .expect("dequantized codes are finite")
    }
}

/// Quantizes each component of a three-channel raster. Invalid pixels get
/// code zero.
pub fn quantize_components<T: Real>(map: &Raster<T>) -> Result<QuantizedNormalMap> {
    if map.channels() != 3 {
        return Err(Error::DimensionMismatch(format!(
            "quantizer needs 3 channels, got {}",
            map.channels()
        )));
    }
    let codes = map
        .data()
        .chunks_exact(3)
        .zip(map.mask())
        .map(|(p, &m)| {
            if m {
                [quantize_component(p[0]), quantize_component(p[1]), quantize_component(p[2])]
            } else {
                [0; 3]
            }
        })
        .collect();
    QuantizedNormalMap::new(map.width(), map.height(), codes, map.mask().to_vec())
}

pub fn quantize_normals<T: Real>(n: &NormalMap<T>) -> QuantizedNormalMap {
    quantize_components(n.raster()).expect("normal maps have 3 channels")
}

/// Writes codes as an RGBA PNG; alpha is 255 on valid pixels and 0 elsewhere.
pub fn write_quantized(q: &QuantizedNormalMap, path: impl AsRef<Path>) -> Result<()> {
    let samples = q
        .codes
        .iter()
        .zip(&q.mask)
        .flat_map(|(c, &m)| [c[0], c[1], c[2], if m { 255 } else { 0 }])
        .collect();
    write_png8(
        path.as_ref(),
        &Png8 {
            width: q.width,
            height: q.height,
            channels: 4,
            samples,
        },
    )
}

pub fn read_quantized(path: impl AsRef<Path>) -> Result<QuantizedNormalMap> {
    let path = path.as_ref();
    let png = read_png8(path)?;
    if png.channels != 4 {
        return Err(Error::UnsupportedFormat(format!(
            "{}: quantized normal maps are RGBA, found {} channels",
            path.display(),
            png.channels
        )));
    }
    let (codes, mask) = png
        .samples
        .chunks_exact(4)
        .map(|p| ([p[0], p[1], p[2]], p[3] != 0))
        .unzip();
    QuantizedNormalMap::new(png.width, png.height, codes, mask)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FeatureKind {
    Reconstruction,
    Normal,
}

impl FeatureKind {
    pub fn tag(self) -> &'static str {
        match self {
            FeatureKind::Reconstruction => "reconstruction",
            FeatureKind::Normal => "normal",
        }
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// Element-wise absolute difference between two representations of a pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairFeature<T> {
    pub kind: FeatureKind,
    pub diff: Vec<T>,
    /// Mean of `diff`, accumulated in double precision.
    pub scalar_l1: f64,
}

impl<T: Real> PairFeature<T> {
    fn from_diff(kind: FeatureKind, diff: Vec<T>) -> Self {
        let scalar_l1 = if diff.is_empty() {
            0.0
        } else {
            diff.iter().map(|v| v.to_f64_lossy()).sum::<f64>() / diff.len() as f64
        };
        PairFeature {
            kind,
            diff,
            scalar_l1,
        }
    }

    pub fn dim(&self) -> usize {
        self.diff.len()
    }
}

fn check_same_grid(q1: &QuantizedNormalMap, q2: &QuantizedNormalMap) -> Result<()> {
    if q1.width != q2.width || q1.height != q2.height {
        return Err(Error::DimensionMismatch(format!(
            "quantized maps are {}x{} and {}x{}",
            q1.width, q1.height, q2.width, q2.height
        )));
    }
    Ok(())
}

/// Full-resolution normal feature: `|q1 - q2| / 127` per component over pixels
/// valid in both maps, row-major.
pub fn normal_pair_feature<T: Real>(
    q1: &QuantizedNormalMap,
    q2: &QuantizedNormalMap,
) -> Result<PairFeature<T>> {
    check_same_grid(q1, q2)?;
    let scale = T::lit(1.0 / f64::from(CODE_MAX));
    let mut diff = Vec::new();
    for p in 0..q1.codes.len() {
        if q1.mask[p] && q2.mask[p] {
            for c in 0..3 {
                diff.push(T::widen_f32(f32::from(q1.codes[p][c].abs_diff(q2.codes[p][c]))) * scale);
            }
        }
    }
    if diff.is_empty() {
        return Err(Error::Degenerate("quantized maps share no valid pixel".into()));
    }
    Ok(PairFeature::from_diff(FeatureKind::Normal, diff))
}

/// Normal feature pooled to a `grid × grid × 3` vector: each entry is the mean
/// scaled code difference over the jointly valid pixels of one block (zero for
/// blocks without any).
pub fn normal_pair_feature_pooled<T: Real>(
    q1: &QuantizedNormalMap,
    q2: &QuantizedNormalMap,
    grid: usize,
) -> Result<PairFeature<T>> {
    check_same_grid(q1, q2)?;
    if grid == 0 || grid > q1.width || grid > q1.height {
        return Err(Error::Validation(format!(
            "pooling grid {grid} does not fit a {}x{} map",
            q1.width, q1.height
        )));
    }
    let mut sums = vec![0u64; grid * grid * 3];
    let mut counts = vec![0u64; grid * grid];
    for y in 0..q1.height {
        let by = y * grid / q1.height;
        for x in 0..q1.width {
            let p = y * q1.width + x;
            if !(q1.mask[p] && q2.mask[p]) {
                continue;
            }
            let b = by * grid + x * grid / q1.width;
            counts[b] += 1;
            for c in 0..3 {
                sums[b * 3 + c] += u64::from(q1.codes[p][c].abs_diff(q2.codes[p][c]));
            }
        }
    }
    if counts.iter().all(|&n| n == 0) {
        return Err(Error::Degenerate("quantized maps share no valid pixel".into()));
    }
    let diff = sums
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let n = counts[i / 3];
            if n == 0 {
                T::zero()
            } else {
                T::lit(s as f64 / (n as f64 * f64::from(CODE_MAX)))
            }
        })
        .collect();
    Ok(PairFeature::from_diff(FeatureKind::Normal, diff))
}

/// A fixed-length image representation tagged with the extractor that made it.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding<T> {
    values: Vec<T>,
    extractor_tag: String,
}

impl<T: Real> Embedding<T> {
    pub fn new(values: Vec<T>, extractor_tag: impl Into<String>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Validation("empty embedding".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Embedding {
            values,
            extractor_tag: extractor_tag.into(),
        })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn extractor_tag(&self) -> &str {
        &self.extractor_tag
    }

    pub fn to_text(&self) -> String {
        self.values.iter().map(|v| format!("{v}\n")).collect()
    }
}

/// Reads an embedding file holding exactly `dim` decimals, one per line.
pub fn read_embedding<T: Real>(
    path: impl AsRef<Path>,
    dim: usize,
    extractor_tag: &str,
) -> Result<Embedding<T>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile {
                what: "embedding".into(),
                path: path.to_path_buf(),
            }
        } else {
            Error::io(path, e)
        }
    })?;
    let values: Vec<T> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .enumerate()
        .map(|(i, l)| {
            l.parse::<f64>().map(T::lit).map_err(|_| {
                Error::parse(path.display().to_string(), format!("line {}: bad value {l:?}", i + 1))
            })
        })
        .collect::<Result<_>>()?;
    if values.len() != dim {
        return Err(Error::DimensionMismatch(format!(
            "{}: expected {dim} values, found {}",
            path.display(),
            values.len()
        )));
    }
    Embedding::new(values, extractor_tag)
}

pub fn write_embedding<T: Real>(e: &Embedding<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, e.to_text()).map_err(|err| Error::io(path, err))
}

/// How diffuse reconstructions are turned into embeddings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Extractor {
    /// The in-process block-mean and orientation-histogram descriptor.
    Builtin,
    /// Vectors produced by an outside network. With a path, files are looked
    /// up as `<path>/<record id>.txt`; without one, each record's own
    /// embedding path is used.
    External(Option<PathBuf>),
}

impl Extractor {
    pub fn tag(&self) -> &'static str {
        match self {
            Extractor::Builtin => "builtin",
            Extractor::External(_) => "external",
        }
    }
}

impl fmt::Display for Extractor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Extractor::Builtin => f.write_str("builtin"),
            Extractor::External(None) => f.write_str("external"),
            Extractor::External(Some(p)) => write!(f, "external:{}", p.display()),
        }
    }
}

impl FromStr for Extractor {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "builtin" => Ok(Extractor::Builtin),
            "external" => Ok(Extractor::External(None)),
            _ => match s.strip_prefix("external:") {
                Some(p) if !p.is_empty() => Ok(Extractor::External(Some(PathBuf::from(p)))),
                _ => Err(Error::parse("extractor", format!("unknown extractor {s:?}"))),
            },
        }
    }
}

/// Builtin descriptor of an image's luminance: 16×16 block means followed by
/// an 8-bin magnitude-weighted gradient-orientation histogram for each of the
/// same 16×16 blocks, L2-normalized as a whole. Gradients are central
/// differences at pixels whose four neighbours are valid.
pub fn builtin_descriptor<T: Real>(img: &Raster<T>) -> Result<Embedding<T>> {
    let (w, h) = (img.width(), img.height());
    if w < BUILTIN_BLOCKS || h < BUILTIN_BLOCKS {
        return Err(Error::Validation(format!(
            "builtin descriptor needs at least {BUILTIN_BLOCKS}x{BUILTIN_BLOCKS} pixels, got {w}x{h}"
        )));
    }
    let lum = img.luminance();
    let (lum, mask) = (lum.data(), img.mask());
    let nb = BUILTIN_BLOCKS * BUILTIN_BLOCKS;
    let mut sums = vec![T::zero(); nb];
    let mut counts = vec![0usize; nb];
    let mut hist = vec![T::zero(); nb * BUILTIN_BINS];
    let two = T::lit(2.0);
    let sector = T::lit(std::f64::consts::TAU / BUILTIN_BINS as f64);
    for y in 0..h {
        let by = y * BUILTIN_BLOCKS / h;
        for x in 0..w {
            let p = y * w + x;
            if !mask[p] {
                continue;
            }
            let b = by * BUILTIN_BLOCKS + x * BUILTIN_BLOCKS / w;
            sums[b] += lum[p];
            counts[b] += 1;
            if x == 0 || y == 0 || x + 1 == w || y + 1 == h {
                continue;
            }
            let (l, r, u, d) = (p - 1, p + 1, p - w, p + w);
            if !(mask[l] && mask[r] && mask[u] && mask[d]) {
                continue;
            }
            let gx = (lum[r] - lum[l]) / two;
            let gy = (lum[d] - lum[u]) / two;
            let mag = (gx * gx + gy * gy).sqrt();
            if mag == T::zero() {
                continue;
            }
            let mut angle = gy.atan2(gx);
            if angle < T::zero() {
                angle += T::TAU();
            }
            let bin = ((angle / sector).to_f64_lossy().floor() as usize).min(BUILTIN_BINS - 1);
            hist[b * BUILTIN_BINS + bin] += mag;
        }
    }
    let mut values: Vec<T> = sums
        .iter()
        .zip(&counts)
        .map(|(&s, &n)| if n == 0 { T::zero() } else { s / T::count(n) })
        .collect();
    values.extend(hist);
    let norm = values.iter().map(|&v| v * v).sum::<T>().sqrt();
    if norm > T::zero() {
        for v in &mut values {
            *v /= norm;
        }
    }
    Embedding::new(values, "builtin")
}

/// Embeds an image. `external_file` is the vector file for the external
/// extractor and is ignored by the builtin one.
pub fn embed<T: Real>(
    img: &Raster<T>,
    extractor: &Extractor,
    external_file: Option<&Path>,
) -> Result<Embedding<T>> {
    match extractor {
        Extractor::Builtin => builtin_descriptor(img),
        Extractor::External(_) => {
            let path = external_file.ok_or_else(|| Error::MissingFile {
                what: "external embedding".into(),
                path: PathBuf::from("<not declared>"),
            })?;
            read_embedding(path, EXTERNAL_DIM, "external")
        }
    }
}

/// `|e1 - e2|` element-wise.
pub fn reconstruction_pair_feature<T: Real>(
    e1: &Embedding<T>,
    e2: &Embedding<T>,
) -> Result<PairFeature<T>> {
    if e1.extractor_tag != e2.extractor_tag {
        return Err(Error::Validation(format!(
            "embeddings come from different extractors ({} vs {})",
            e1.extractor_tag, e2.extractor_tag
        )));
    }
    if e1.dim() != e2.dim() {
        return Err(Error::DimensionMismatch(format!(
            "embedding dimensions {} and {}",
            e1.dim(),
            e2.dim()
        )));
    }
    let diff = e1
        .values
        .iter()
        .zip(&e2.values)
        .map(|(&a, &b)| (a - b).abs())
        .collect();
    Ok(PairFeature::from_diff(FeatureKind::Reconstruction, diff))
}
