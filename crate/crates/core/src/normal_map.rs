use crate::error::{Error, Result};
use crate::raster::Raster;
use crate::scalar::Real;

/// Tolerance on `|‖n‖ - 1|` at valid pixels.
pub const UNIT_TOLERANCE: f64 = 1e-4;

/// Three-channel raster of camera-facing unit normals `(n_x, n_y, n_z)`, with
/// `x` along image columns and `y` along image rows.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalMap<T>(Raster<T>);

impl<T: Real> NormalMap<T> {
    pub fn new(map: Raster<T>) -> Result<Self> {
        if map.channels() != 3 {
            return Err(Error::Validation(format!(
                "normal map needs 3 channels, got {}",
                map.channels()
            )));
        }
        let tol = T::lit(UNIT_TOLERANCE);
        for (i, (px, &m)) in map.data().chunks(3).zip(map.mask()).enumerate() {
            if !m {
                continue;
            }
            let norm = (px[0] * px[0] + px[1] * px[1] + px[2] * px[2]).sqrt();
            if (norm - T::one()).abs() > tol {
                return Err(Error::Validation(format!(
                    "normal at pixel {i} has length {norm}"
                )));
            }
            if px[2] < T::zero() {
                return Err(Error::Validation(format!(
                    "normal at pixel {i} faces away from the camera (n_z = {})",
                    px[2]
                )));
            }
        }
        Ok(NormalMap(map))
    }

    /// Normalizes every valid pixel and clamps `n_z` to the camera-facing
    /// hemisphere. Pixels whose vector collapses to zero become invalid.
    pub fn from_unnormalized(mut map: Raster<T>) -> Result<Self> {
        if map.channels() != 3 {
            return Err(Error::Validation(format!(
                "normal map needs 3 channels, got {}",
                map.channels()
            )));
        }
        let n_px = map.width() * map.height();
        for p in 0..n_px {
            if !map.mask()[p] {
                continue;
            }
            let px = &mut map.data_mut()[p * 3..p * 3 + 3];
            let ok = normalize_hemisphere(px);
            if !ok {
                map.mask_mut()[p] = false;
                map.data_mut()[p * 3..p * 3 + 3].fill(T::zero());
            }
        }
        Ok(NormalMap(map))
    }

    /// Constant field of `n`, which must already be unit length.
    pub fn uniform(width: usize, height: usize, n: [T; 3]) -> Result<Self> {
        NormalMap::new(Raster::from_fn(width, height, 3, |_, _, c| n[c]))
    }

    pub fn raster(&self) -> &Raster<T> {
        &self.0
    }

    pub fn into_raster(self) -> Raster<T> {
        self.0
    }

    pub fn width(&self) -> usize {
        self.0.width()
    }

    pub fn height(&self) -> usize {
        self.0.height()
    }

    #[inline]
    pub fn normal(&self, x: usize, y: usize) -> [T; 3] {
        let p = self.0.pixel(x, y);
        [p[0], p[1], p[2]]
    }

    pub fn cast<U: Real>(&self) -> NormalMap<U> {
        NormalMap(self.0.cast())
    }
}

/// In-place unit normalization with `n_z ≥ 0`. Returns false for a zero vector.
pub(crate) fn normalize_hemisphere<T: Real>(px: &mut [T]) -> bool {
    if px[2] < T::zero() {
        px[2] = T::zero();
    }
    let norm = (px[0] * px[0] + px[1] * px[1] + px[2] * px[2]).sqrt();
    if !(norm > T::lit(1e-12)) {
        return false;
    }
    for v in px.iter_mut() {
        *v /= norm;
    }
    true
}
