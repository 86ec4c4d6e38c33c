//! In-plane pose normalization from 68-point landmarks.
//!
//! Pixel centers sit at integer coordinates; `x` runs along columns and `y`
//! down the rows.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::normal_map::{normalize_hemisphere, NormalMap};
use crate::raster::Raster;
use crate::scalar::Real;

pub const LANDMARK_COUNT: usize = 68;

/// 0-based index ranges of the eye contours in the 68-point scheme.
const LEFT_EYE: std::ops::Range<usize> = 36..42;
const RIGHT_EYE: std::ops::Range<usize> = 42..48;

/// Minimum inter-eye distance (pixels) for a usable alignment.
pub const MIN_EYE_DISTANCE: f64 = 2.0;

pub type Point<T> = [T; 2];

/// Exactly 68 finite `(x, y)` points in the standard annotation order.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkSet<T> {
    points: Vec<Point<T>>,
}

impl<T: Real> LandmarkSet<T> {
    pub fn new(points: Vec<Point<T>>) -> Result<Self> {
        if points.len() != LANDMARK_COUNT {
            return Err(Error::Validation(format!(
                "expected {LANDMARK_COUNT} landmarks, got {}",
                points.len()
            )));
        }
        if let Some(i) = points.iter().position(|p| !p[0].is_finite() || !p[1].is_finite()) {
            return Err(Error::Validation(format!("landmark {i} is not finite")));
        }
        Ok(LandmarkSet { points })
    }

    pub fn points(&self) -> &[Point<T>] {
        &self.points
    }

    /// Checks every point lies within the image extended by a 10% margin.
    pub fn check_bounds(&self, width: usize, height: usize) -> Result<()> {
        let (w, h) = (T::count(width), T::count(height));
        let (mx, my) = (w * T::lit(0.1), h * T::lit(0.1));
        for (i, p) in self.points.iter().enumerate() {
            if p[0] < -mx || p[0] > w + mx || p[1] < -my || p[1] > h + my {
                return Err(Error::Validation(format!(
                    "landmark {i} at ({}, {}) lies outside a {width}x{height} image",
                    p[0], p[1]
                )));
            }
        }
        Ok(())
    }

    pub fn transformed(&self, t: &SimilarityTransform<T>) -> LandmarkSet<T> {
        LandmarkSet {
            points: self.points.iter().map(|&p| t.apply(p)).collect(),
        }
    }

    pub fn cast<U: Real>(&self) -> LandmarkSet<U> {
        LandmarkSet {
            points: self
                .points
                .iter()
                .map(|p| [U::lit(p[0].to_f64_lossy()), U::lit(p[1].to_f64_lossy())])
                .collect(),
        }
    }

    /// Text form: 68 lines of `x y`.
    pub fn to_text(&self) -> String {
        self.points
            .iter()
            .map(|p| format!("{} {}\n", p[0], p[1]))
            .collect()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut points = Vec::with_capacity(LANDMARK_COUNT);
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut it = line.split_whitespace().map(|t| t.parse::<f64>());
            match (it.next(), it.next(), it.next()) {
                (Some(Ok(x)), Some(Ok(y)), None) => points.push([T::lit(x), T::lit(y)]),
                _ => {
                    return Err(Error::parse(
                        format!("landmark line {}", i + 1),
                        format!("expected `x y`, got {line:?}"),
                    ))
                }
            }
        }
        LandmarkSet::new(points)
    }
}

pub fn read_landmarks<T: Real>(path: impl AsRef<Path>) -> Result<LandmarkSet<T>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    LandmarkSet::parse(&text)
}

pub fn write_landmarks<T: Real>(lm: &LandmarkSet<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, lm.to_text()).map_err(|e| Error::io(path, e))
}

fn mean_point<T: Real>(pts: &[Point<T>]) -> Point<T> {
    let n = T::count(pts.len());
    let (sx, sy) = pts
        .iter()
        .fold((T::zero(), T::zero()), |(sx, sy), p| (sx + p[0], sy + p[1]));
    [sx / n, sy / n]
}

/// Mean of landmarks 37–42 (left in the image) and 43–48 (right).
pub fn eye_centers<T: Real>(lm: &LandmarkSet<T>) -> (Point<T>, Point<T>) {
    (
        mean_point(&lm.points[LEFT_EYE]),
        mean_point(&lm.points[RIGHT_EYE]),
    )
}

/// `p ↦ scale · R(rotation) · p + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityTransform<T> {
    pub scale: T,
    /// Radians in (-π, π].
    pub rotation: T,
    pub translation: Point<T>,
}

impl<T: Real> SimilarityTransform<T> {
    pub fn identity() -> Self {
        SimilarityTransform {
            scale: T::one(),
            rotation: T::zero(),
            translation: [T::zero(), T::zero()],
        }
    }

    /// Builds a transform, wrapping the angle into (-π, π].
    pub fn new(scale: T, rotation: T, translation: Point<T>) -> Result<Self> {
        if !(scale > T::zero()) || !scale.is_finite() {
            return Err(Error::Validation(format!("scale must be positive, got {scale}")));
        }
        if !rotation.is_finite() || !translation[0].is_finite() || !translation[1].is_finite() {
            return Err(Error::Validation("non-finite transform parameter".into()));
        }
        Ok(SimilarityTransform {
            scale,
            rotation: wrap_angle(rotation),
            translation,
        })
    }

    #[inline]
    pub fn apply(&self, p: Point<T>) -> Point<T> {
        let (s, c) = self.rotation.sin_cos();
        [
            self.scale * (c * p[0] - s * p[1]) + self.translation[0],
            self.scale * (s * p[0] + c * p[1]) + self.translation[1],
        ]
    }

    pub fn inverse(&self) -> Self {
        let inv_scale = T::one() / self.scale;
        let rot = -self.rotation;
        let (s, c) = rot.sin_cos();
        let [tx, ty] = self.translation;
        SimilarityTransform {
            scale: inv_scale,
            rotation: wrap_angle(rot),
            translation: [
                -inv_scale * (c * tx - s * ty),
                -inv_scale * (s * tx + c * ty),
            ],
        }
    }

    /// Rotates a direction vector (no scale or translation).
    #[inline]
    pub fn rotate_vector(&self, v: Point<T>) -> Point<T> {
        let (s, c) = self.rotation.sin_cos();
        [c * v[0] - s * v[1], s * v[0] + c * v[1]]
    }
}

fn wrap_angle<T: Real>(a: T) -> T {
    let two_pi = T::PI() + T::PI();
    let mut r = a % two_pi;
    if r <= -T::PI() {
        r += two_pi;
    } else if r > T::PI() {
        r -= two_pi;
    }
    r
}

/// Target frame for aligned faces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CanonicalFrame {
    pub width: usize,
    pub height: usize,
    pub left_eye: [f64; 2],
    pub right_eye: [f64; 2],
}

impl Default for CanonicalFrame {
    fn default() -> Self {
        CanonicalFrame {
            width: 256,
            height: 256,
            left_eye: [88.0, 120.0],
            right_eye: [168.0, 120.0],
        }
    }
}

/// Exact two-point similarity mapping the eye centers onto the canonical anchors.
pub fn align_transform<T: Real>(
    lm: &LandmarkSet<T>,
    canon: &CanonicalFrame,
) -> Result<SimilarityTransform<T>> {
    let (l, r) = eye_centers(lm);
    let (dx, dy) = (r[0] - l[0], r[1] - l[1]);
    let dist = (dx * dx + dy * dy).sqrt();
    if !(dist >= T::lit(MIN_EYE_DISTANCE)) {
        return Err(Error::Degenerate(format!(
            "inter-eye distance {dist} px is below {MIN_EYE_DISTANCE}"
        )));
    }
    let cl = [T::lit(canon.left_eye[0]), T::lit(canon.left_eye[1])];
    let cr = [T::lit(canon.right_eye[0]), T::lit(canon.right_eye[1])];
    let (cdx, cdy) = (cr[0] - cl[0], cr[1] - cl[1]);
    let cdist = (cdx * cdx + cdy * cdy).sqrt();
    let scale = cdist / dist;
    let rotation = cdy.atan2(cdx) - dy.atan2(dx);
    let partial = SimilarityTransform::new(scale, rotation, [T::zero(), T::zero()])?;
    let moved = partial.apply(l);
    SimilarityTransform::new(scale, rotation, [cl[0] - moved[0], cl[1] - moved[1]])
}

/// Bilinear sample at `(x, y)`; `None` outside the image or when a contributing
/// corner is invalid. The lerp form keeps constant neighborhoods exact.
#[inline]
pub fn sample_bilinear<T: Real>(img: &Raster<T>, x: T, y: T, out: &mut [T]) -> bool {
    let (w, h) = (img.width(), img.height());
    if w == 0 || h == 0 {
        return false;
    }
    let max_x = T::count(w - 1);
    let max_y = T::count(h - 1);
    if !(x >= T::zero() && y >= T::zero() && x <= max_x && y <= max_y) {
        return false;
    }
    let x0 = x.floor().to_usize().unwrap().min(w - 1);
    let y0 = y.floor().to_usize().unwrap().min(h - 1);
    let fx = x - T::count(x0);
    let fy = y - T::count(y0);
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let need = |xx: usize, yy: usize, wx: bool, wy: bool| !(wx && wy) || img.is_valid(xx, yy);
    let has_fx = fx > T::zero();
    let has_fy = fy > T::zero();
    if !(img.is_valid(x0, y0)
        && need(x1, y0, has_fx, true)
        && need(x0, y1, true, has_fy)
        && need(x1, y1, has_fx, has_fy))
    {
        return false;
    }
    for (c, o) in out.iter_mut().enumerate() {
        let v00 = img.get(x0, y0, c);
        let v10 = img.get(x1, y0, c);
        let v01 = img.get(x0, y1, c);
        let v11 = img.get(x1, y1, c);
        let top = if has_fx { v00 + fx * (v10 - v00) } else { v00 };
        let bottom = if has_fx { v01 + fx * (v11 - v01) } else { v01 };
        *o = if has_fy { top + fy * (bottom - top) } else { top };
    }
    true
}

/// Resamples `img` into an `out_w × out_h` frame where output pixel `q` takes
/// the source value at `t⁻¹(q)`. Unreachable pixels are masked out.
pub fn warp<T: Real>(
    img: &Raster<T>,
    t: &SimilarityTransform<T>,
    out_w: usize,
    out_h: usize,
) -> Raster<T> {
    let inv = t.inverse();
    let ch = img.channels();
    let mut data = vec![T::zero(); out_w * out_h * ch];
    let mut mask = vec![false; out_w * out_h];
    for y in 0..out_h {
        for x in 0..out_w {
            let src = inv.apply([T::count(x), T::count(y)]);
            let p = y * out_w + x;
            mask[p] = sample_bilinear(img, src[0], src[1], &mut data[p * ch..(p + 1) * ch]);
        }
    }
    Raster::new(out_w, out_h, ch, data, mask).expect("warp preserves finiteness")
}

/// Warps a normal field: resamples the components, rotates their in-plane part
/// with the transform, then renormalizes onto the camera-facing hemisphere.
pub fn warp_normals<T: Real>(
    normals: &NormalMap<T>,
    t: &SimilarityTransform<T>,
    out_w: usize,
    out_h: usize,
) -> NormalMap<T> {
    let mut raw = warp(normals.raster(), t, out_w, out_h);
    for p in 0..out_w * out_h {
        if !raw.mask()[p] {
            continue;
        }
        let px = &mut raw.data_mut()[p * 3..p * 3 + 3];
        let [rx, ry] = t.rotate_vector([px[0], px[1]]);
        px[0] = rx;
        px[1] = ry;
        if !normalize_hemisphere(px) {
            raw.mask_mut()[p] = false;
            raw.data_mut()[p * 3..p * 3 + 3].fill(T::zero());
        }
    }
    NormalMap::new(raw).expect("renormalized normals satisfy the unit invariant")
}
