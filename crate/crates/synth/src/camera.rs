//! Simulated gate cameras.

use std::f64::consts::PI;

use morphdet::geometry::{warp, warp_normals, LandmarkSet, SimilarityTransform};
use morphdet::shading::{render_diffuse, sh_basis, SH_COUNT};
use morphdet::{CameraId, DecomposerMode, Decomposition, Error, Raster, Result, ShLighting};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::degrade::gaussian_blur;
use crate::face::{Face, FACE_SIZE};

/// Lambertian attenuation per SH band for a clamped-cosine lobe.
const BAND_FACTORS: [f64; 3] = [PI, 2.0 * PI / 3.0, PI / 4.0];

/// SH lighting of a distant directional source of strength `intensity` toward
/// `dir`, plus uniform `ambient` shading.
pub fn directional_lighting(dir: [f64; 3], intensity: f64, ambient: f64) -> Result<ShLighting<f64>> {
    let norm = (dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]).sqrt();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::Validation("light direction must be a non-zero vector".into()));
    }
    let y = sh_basis(dir.map(|v| v / norm))?;
    let mut l = [0.0; SH_COUNT];
    for (i, li) in l.iter_mut().enumerate() {
        let band = match i {
            0 => 0,
            1..=3 => 1,
            _ => 2,
        };
        *li = intensity * BAND_FACTORS[band] * y[i];
    }
    l[0] += ambient * 2.0 * PI.sqrt();
    Ok(ShLighting::mono(l))
}

/// Frontal lighting of the passport studio, slightly from above.
pub fn studio_lighting() -> ShLighting<f64> {
    directional_lighting([0.0, -0.15, 1.0], 0.75, 0.2).expect("constant direction")
}

#[derive(Debug, Clone, PartialEq)]
pub struct CameraProfile {
    pub camera_id: CameraId,
    pub lighting: ShLighting<f64>,
    /// In-plane rotation drawn uniformly from ±this many radians.
    pub rotation_jitter: f64,
    /// Relative scale drawn uniformly from 1 ± this.
    pub scale_jitter: f64,
    /// Translation per axis drawn uniformly from ±this many output pixels.
    pub translation_jitter: f64,
    pub downscale: f64,
    pub noise_sigma: f64,
}

impl CameraProfile {
    pub fn new(
        camera_id: CameraId,
        lighting: ShLighting<f64>,
        rotation_jitter: f64,
        downscale: f64,
        noise_sigma: f64,
    ) -> Result<Self> {
        CameraProfile {
            camera_id,
            lighting,
            rotation_jitter,
            scale_jitter: 0.0,
            translation_jitter: 0.0,
            downscale,
            noise_sigma,
        }
        .validated()
    }

    pub fn validated(self) -> Result<Self> {
        if !(self.downscale >= 1.0) || !self.downscale.is_finite() {
            return Err(Error::Validation(format!(
                "camera {}: downscale factor {} must be >= 1",
                self.camera_id, self.downscale
            )));
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return Err(Error::Validation(format!(
                "camera {}: noise sigma {} must be >= 0",
                self.camera_id, self.noise_sigma
            )));
        }
        for (name, v) in [
            ("rotation", self.rotation_jitter),
            ("scale", self.scale_jitter),
            ("translation", self.translation_jitter),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Validation(format!(
                    "camera {}: {name} jitter {v} must be >= 0",
                    self.camera_id
                )));
            }
        }
        if self.scale_jitter >= 1.0 {
            return Err(Error::Validation("scale jitter must be below 1".into()));
        }
        Ok(self)
    }

    /// Studio lighting, no jitter, no noise, full resolution.
    pub fn identity(camera_id: CameraId) -> Self {
        CameraProfile {
            camera_id,
            lighting: studio_lighting(),
            rotation_jitter: 0.0,
            scale_jitter: 0.0,
            translation_jitter: 0.0,
            downscale: 1.0,
            noise_sigma: 0.0,
        }
    }

    /// The four gate cameras of the default benchmark.
    pub fn defaults() -> [CameraProfile; 4] {
        // (direction, intensity, ambient, rotation jitter, downscale, noise)
        let table = [
            ([-0.3, -0.2, 0.93], 0.7, 0.25, 0.10, 2.0, 0.010),
            ([0.35, -0.25, 0.9], 0.65, 0.25, 0.12, 1.6, 0.012),
            ([0.0, 0.45, 0.89], 0.6, 0.3, 0.15, 2.4, 0.015),
            ([-0.5, 0.1, 0.86], 0.7, 0.2, 0.12, 2.0, 0.012),
        ];
        CameraId::ALL.map(|id| {
            let (dir, s, amb, rot, f, noise) = table[id.slot()];
            CameraProfile {
                camera_id: id,
                lighting: directional_lighting(dir, s, amb).expect("constant direction"),
                rotation_jitter: rot,
                scale_jitter: 0.05,
                translation_jitter: 3.0,
                downscale: f,
                noise_sigma: noise,
            }
        })
    }

    /// Side length of this camera's square output frame.
    pub fn output_size(&self) -> usize {
        ((FACE_SIZE as f64 / self.downscale).round() as usize).max(1)
    }
}

/// One simulated gate image with its ground truth in the camera frame.
#[derive(Debug, Clone, PartialEq)]
pub struct GateCapture {
    pub image: Raster<f64>,
    pub decomposition: Decomposition<f64>,
    pub landmarks: LandmarkSet<f64>,
    /// Passport frame to camera frame.
    pub transform: SimilarityTransform<f64>,
}

/// Photographs `face` with `cam`: jittered similarity pose, anti-aliased
/// downscale, camera lighting, then additive Gaussian noise.
pub fn render_gate_capture(face: &Face, cam: &CameraProfile, seed: u64) -> Result<GateCapture> {
    let cam = cam.clone().validated()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rotation = jitter(&mut rng, cam.rotation_jitter);
    let scale = (1.0 + jitter(&mut rng, cam.scale_jitter)) / cam.downscale;
    let shift = [
        jitter(&mut rng, cam.translation_jitter),
        jitter(&mut rng, cam.translation_jitter),
    ];

    let size = cam.output_size();
    let src_center = [FACE_SIZE as f64 / 2.0; 2];
    let dst_center = [size as f64 / 2.0; 2];
    let linear = SimilarityTransform::new(scale, rotation, [0.0, 0.0])?;
    let moved = linear.apply(src_center);
    let transform = SimilarityTransform::new(
        scale,
        rotation,
        [
            dst_center[0] + shift[0] - moved[0],
            dst_center[1] + shift[1] - moved[1],
        ],
    )?;

    let gt = &face.decomposition;
    let (normals, albedo) = if 1.0 / scale > 1.0 {
        let sigma = 0.5 * (1.0 / (scale * scale) - 1.0).sqrt();
        let blurred = gaussian_blur(gt.normals.raster(), sigma);
        (
            morphdet::NormalMap::from_unnormalized(blurred)?,
            gaussian_blur(&gt.albedo, sigma),
        )
    } else {
        (gt.normals.clone(), gt.albedo.clone())
    };
    let normals = warp_normals(&normals, &transform, size, size);
    let albedo = warp(&albedo, &transform, size, size);
    let decomposition = Decomposition::rendered(
        normals,
        albedo,
        cam.lighting.clone(),
        DecomposerMode::SyntheticGroundTruth,
    )?;

    let clean = render_diffuse(
        &decomposition.normals,
        &decomposition.albedo,
        &decomposition.lighting,
    )?
    .image;
    let mut data = clean.data().to_vec();
    if cam.noise_sigma > 0.0 {
        let noise = Normal::new(0.0, cam.noise_sigma)
            .map_err(|e| Error::Validation(format!("noise sigma: {e}")))?;
        for v in data.iter_mut() {
            *v += noise.sample(&mut rng);
        }
    }
    for (px, &m) in data.chunks_mut(clean.channels()).zip(clean.mask()) {
        for v in px {
            *v = if m { v.clamp(0.0, 1.0) } else { 0.0 };
        }
    }
    let image = Raster::new(size, size, clean.channels(), data, clean.mask().to_vec())?;
    Ok(GateCapture {
        image,
        decomposition,
        landmarks: face.landmarks.transformed(&transform),
        transform,
    })
}

fn jitter(rng: &mut ChaCha8Rng, range: f64) -> f64 {
    if range > 0.0 {
        rng.random_range(-range..=range)
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn directional_lighting_approximates_clamped_cosine() {
        let l = directional_lighting([0.0, 0.0, 1.0], 1.0, 0.0).unwrap();
        let head_on = sh_basis([0.0, 0.0, 1.0]).unwrap();
        let s: f64 = l.channel(0).iter().zip(&head_on).map(|(a, b)| a * b).sum();
        // Order-2 truncation of max(cos, 0) gives 1.0625 head-on.
        assert!((s - 1.0625).abs() < 1e-12, "{s}");
    }

    #[test]
    fn ambient_adds_constant_shading() {
        let base = directional_lighting([0.2, 0.1, 1.0], 0.6, 0.0).unwrap();
        let amb = directional_lighting([0.2, 0.1, 1.0], 0.6, 0.3).unwrap();
        let n = [0.6, 0.0, 0.8];
        let y = sh_basis(n).unwrap();
        let dot = |l: &ShLighting<f64>| -> f64 { l.channel(0).iter().zip(&y).map(|(a, b)| a * b).sum() };
        assert!((dot(&amb) - dot(&base) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn invalid_profiles_are_rejected() {
        let id = CameraId::new(1).unwrap();
        assert!(CameraProfile::new(id, studio_lighting(), 0.0, 0.5, 0.0).is_err());
        assert!(CameraProfile::new(id, studio_lighting(), 0.0, 1.0, -0.1).is_err());
        assert!(CameraProfile::new(id, studio_lighting(), 0.1, 2.0, 0.01).is_ok());
    }

    #[test]
    fn default_output_sizes() {
        let sizes: Vec<usize> = CameraProfile::defaults().iter().map(|c| c.output_size()).collect();
        assert_eq!(sizes, vec![128, 160, 107, 128]);
    }
}
