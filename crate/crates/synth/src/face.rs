//! Parametric identities: a sum-of-Gaussians heightmap, a layered albedo and
//! 68 landmarks, all placed in a face frame anchored at the eyes.

use morphdet::geometry::{eye_centers, sample_bilinear, LandmarkSet, Point, SimilarityTransform, LANDMARK_COUNT};
use morphdet::shading::render_diffuse;
use morphdet::{DecomposerMode, Decomposition, Error, NormalMap, Raster, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::camera::studio_lighting;
use crate::degrade::gaussian_blur;

/// Side of the square passport frame.
pub const FACE_SIZE: usize = 256;

/// Albedo outside the face outline.
pub const BACKGROUND_ALBEDO: f64 = 0.2;

const NOMINAL_EYE_DISTANCE: f64 = 72.0;
const FINE_BUMPS: usize = 6;
const ALBEDO_BLOBS: usize = 8;
const TEXTURE_SIGMA: f64 = 1.5;
const TEXTURE_STD: f64 = 0.03;
const ALBEDO_RANGE: (f64, f64) = (0.05, 0.95);

/// Anisotropic Gaussian `amplitude · exp(-½((dx/σx)² + (dy/σy)²))` in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bump {
    pub center: Point<f64>,
    pub sigma: [f64; 2],
    pub amplitude: f64,
}

impl Bump {
    #[inline]
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let dx = (x - self.center[0]) / self.sigma[0];
        let dy = (y - self.center[1]) / self.sigma[1];
        self.amplitude * (-0.5 * (dx * dx + dy * dy)).exp()
    }
}

/// Soft elliptical region painted with a constant albedo.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Patch {
    pub center: Point<f64>,
    pub radii: [f64; 2],
    pub value: f64,
    /// Width of the soft edge in units of the normalized radius.
    pub softness: f64,
}

impl Patch {
    /// Coverage in [0, 1]: 1 inside, 0 outside, smooth across the edge.
    #[inline]
    pub fn weight(&self, x: f64, y: f64) -> f64 {
        let dx = (x - self.center[0]) / self.radii[0];
        let dy = (y - self.center[1]) / self.radii[1];
        let r = (dx * dx + dy * dy).sqrt();
        1.0 - smoothstep(1.0 - self.softness, 1.0 + self.softness, r)
    }
}

/// Everything needed to rasterize one face.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentityParams {
    pub seed: u64,
    pub bumps: Vec<Bump>,
    pub skin: f64,
    pub albedo_blobs: Vec<Bump>,
    /// Brows, irises and mouth, painted in order.
    pub patches: Vec<Patch>,
    pub outline: Patch,
    /// Fine-scale albedo texture, `FACE_SIZE²` values in row-major order.
    pub texture: Vec<f64>,
    pub landmarks: LandmarkSet<f64>,
}

struct Frame {
    mid: Point<f64>,
    d: f64,
    cos: f64,
    sin: f64,
}

impl Frame {
    /// Image position of face-frame coordinates `(u, v)` in eye-distance units.
    fn at(&self, u: f64, v: f64) -> Point<f64> {
        [
            self.mid[0] + self.d * (u * self.cos - v * self.sin),
            self.mid[1] + self.d * (u * self.sin + v * self.cos),
        ]
    }
}

struct Shape {
    jaw_w: f64,
    jaw_h: f64,
    brow_v: f64,
    nose_len: f64,
    mouth_w: f64,
    mouth_v: f64,
    eye_rx: f64,
    eye_ry: f64,
}

impl IdentityParams {
    /// Draws a random identity; the result depends only on `seed`.
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mid = [
            FACE_SIZE as f64 / 2.0 + rng.random_range(-3.0..3.0),
            120.0 + rng.random_range(-3.0..3.0),
        ];
        let d = NOMINAL_EYE_DISTANCE * rng.random_range(0.95..1.05);
        let (sin, cos) = rng.random_range(-0.03f64..0.03).sin_cos();
        let f = Frame { mid, d, cos, sin };
        let s = Shape {
            jaw_w: rng.random_range(0.85..1.0),
            jaw_h: rng.random_range(1.3..1.45),
            brow_v: -0.35 + rng.random_range(-0.04..0.04),
            nose_len: rng.random_range(0.5..0.62),
            mouth_w: rng.random_range(0.32..0.42),
            mouth_v: rng.random_range(0.95..1.08),
            eye_rx: rng.random_range(0.13..0.17),
            eye_ry: rng.random_range(0.05..0.07),
        };

        // (u, v, σu, σv, amplitude), all in eye-distance units.
        let structural = [
            (0.0, 0.45, 0.85, 1.15, 1.3),
            (0.0, s.brow_v + 0.05, 0.6, 0.12, 0.10),
            (-0.5, 0.0, 0.18, 0.13, -0.12),
            (0.5, 0.0, 0.18, 0.13, -0.12),
            (0.0, s.nose_len * 0.5, 0.08, s.nose_len * 0.5, 0.15),
            (0.0, s.nose_len + 0.05, 0.12, 0.1, 0.14),
            (-0.45, 0.55, 0.22, 0.2, 0.08),
            (0.45, 0.55, 0.22, 0.2, 0.08),
            (0.0, s.jaw_h - 0.15, 0.3, 0.15, 0.08),
            (0.0, s.mouth_v - 0.07, s.mouth_w * 0.7, 0.06, 0.04),
            (0.0, s.mouth_v + 0.07, s.mouth_w * 0.6, 0.06, 0.04),
        ];
        let mut bumps: Vec<Bump> = structural
            .iter()
            .map(|&(u, v, su, sv, amp)| {
                let du = rng.random_range(-0.06..0.06);
                let dv = rng.random_range(-0.06..0.06);
                Bump {
                    center: f.at(u + du, v + dv),
                    sigma: [
                        d * su * rng.random_range(0.8..1.2),
                        d * sv * rng.random_range(0.8..1.2),
                    ],
                    amplitude: d * amp * rng.random_range(0.75..1.25),
                }
            })
            .collect();
        for _ in 0..FINE_BUMPS {
            let (u, v) = (rng.random_range(-0.7..0.7), rng.random_range(-0.4..1.3));
            bumps.push(Bump {
                center: f.at(u, v),
                sigma: [
                    d * rng.random_range(0.08..0.2),
                    d * rng.random_range(0.08..0.2),
                ],
                amplitude: d * rng.random_range(-0.04..0.04),
            });
        }

        let skin = rng.random_range(0.45..0.7);
        let albedo_blobs = (0..ALBEDO_BLOBS)
            .map(|_| {
                let (u, v) = (rng.random_range(-0.9..0.9), rng.random_range(-0.6..1.5));
                let sig = d * rng.random_range(0.15..0.4);
                Bump {
                    center: f.at(u, v),
                    sigma: [sig, sig * rng.random_range(0.7..1.3)],
                    amplitude: rng.random_range(-0.06..0.06),
                }
            })
            .collect();
        let brow = rng.random_range(0.12..0.3);
        let iris = rng.random_range(0.15..0.4);
        let lips = rng.random_range(0.3..0.5);
        let patch = |u: f64, v: f64, ru: f64, rv: f64, value: f64, softness: f64| Patch {
            center: f.at(u, v),
            radii: [d * ru, d * rv],
            value,
            softness,
        };
        let patches = vec![
            patch(-0.45, s.brow_v, 0.25, 0.05, brow, 0.3),
            patch(0.45, s.brow_v, 0.25, 0.05, brow, 0.3),
            patch(-0.5, 0.0, s.eye_rx * 0.6, s.eye_ry, iris, 0.3),
            patch(0.5, 0.0, s.eye_rx * 0.6, s.eye_ry, iris, 0.3),
            patch(0.0, s.mouth_v, s.mouth_w, 0.07, lips, 0.3),
        ];
        let outline = patch(0.0, 0.45, s.jaw_w + 0.1, s.jaw_h - 0.05, 1.0, 0.1);

        let texture = random_texture(&mut rng);
        let landmarks = template_landmarks(&f, &s);
        IdentityParams {
            seed,
            bumps,
            skin,
            albedo_blobs,
            patches,
            outline,
            texture,
            landmarks,
        }
    }

    /// The same face moved by `t`: positions are mapped, lengths and heights
    /// scaled. Ellipse axes stay image-aligned, and the texture is resampled
    /// bilinearly.
    pub fn warped(&self, t: &SimilarityTransform<f64>) -> IdentityParams {
        if *t == SimilarityTransform::identity() {
            return self.clone();
        }
        let bump = |b: &Bump, height: f64| Bump {
            center: t.apply(b.center),
            sigma: b.sigma.map(|v| v * t.scale),
            amplitude: b.amplitude * height,
        };
        let patch = |p: &Patch| Patch {
            center: t.apply(p.center),
            radii: p.radii.map(|v| v * t.scale),
            ..*p
        };
        let src = Raster::from_fn(FACE_SIZE, FACE_SIZE, 1, |x, y, _| self.texture[y * FACE_SIZE + x]);
        let inv = t.inverse();
        let edge = (FACE_SIZE - 1) as f64;
        let texture = (0..FACE_SIZE * FACE_SIZE)
            .map(|i| {
                let p = inv.apply([(i % FACE_SIZE) as f64, (i / FACE_SIZE) as f64]);
                let mut v = [0.0];
                sample_bilinear(&src, p[0].clamp(0.0, edge), p[1].clamp(0.0, edge), &mut v);
                v[0]
            })
            .collect();
        IdentityParams {
            seed: self.seed,
            bumps: self.bumps.iter().map(|b| bump(b, t.scale)).collect(),
            skin: self.skin,
            albedo_blobs: self.albedo_blobs.iter().map(|b| bump(b, 1.0)).collect(),
            patches: self.patches.iter().map(patch).collect(),
            outline: patch(&self.outline),
            texture,
            landmarks: self.landmarks.transformed(t),
        }
    }

    /// Heightmap in pixels.
    pub fn heightmap(&self) -> Raster<f64> {
        Raster::from_fn(FACE_SIZE, FACE_SIZE, 1, |x, y, _| {
            let (x, y) = (x as f64, y as f64);
            self.bumps.iter().map(|b| b.eval(x, y)).sum()
        })
    }

    pub fn normals(&self) -> NormalMap<f64> {
        normals_from_heightmap(&self.heightmap())
    }

    pub fn albedo(&self) -> Raster<f64> {
        Raster::from_fn(FACE_SIZE, FACE_SIZE, 1, |x, y, _| {
            let (xf, yf) = (x as f64, y as f64);
            let mut a = self.skin
                + self.albedo_blobs.iter().map(|b| b.eval(xf, yf)).sum::<f64>()
                + self.texture[y * FACE_SIZE + x];
            for p in &self.patches {
                let w = p.weight(xf, yf);
                a = a * (1.0 - w) + p.value * w;
            }
            let w = self.outline.weight(xf, yf);
            let a = BACKGROUND_ALBEDO * (1.0 - w) + a * w;
            a.clamp(ALBEDO_RANGE.0, ALBEDO_RANGE.1)
        })
    }
}

/// Normals `normalize(−∂h/∂x, −∂h/∂y, 1)` by central differences, one-sided at
/// the border.
pub fn normals_from_heightmap(h: &Raster<f64>) -> NormalMap<f64> {
    let (w, ht) = (h.width(), h.height());
    let diff = |lo: usize, hi: usize, f: &dyn Fn(usize) -> f64| {
        if hi == lo {
            0.0
        } else {
            (f(hi) - f(lo)) / (hi - lo) as f64
        }
    };
    let raw = Raster::from_fn(w, ht, 3, |x, y, c| match c {
        0 => -diff(x.saturating_sub(1), (x + 1).min(w - 1), &|xx| h.get(xx, y, 0)),
        1 => -diff(y.saturating_sub(1), (y + 1).min(ht - 1), &|yy| h.get(x, yy, 0)),
        _ => 1.0,
    });
    NormalMap::from_unnormalized(raw).expect("three-channel raster")
}

/// What a face is rendered from: one identity, or a morph of two.
#[derive(Debug, Clone, PartialEq)]
pub enum FaceModel {
    Identity(IdentityParams),
    /// Both parents moved onto the blended eye positions, then their
    /// heightmaps and albedos mixed with weight `alpha` on `a`.
    Morph {
        a: IdentityParams,
        b: IdentityParams,
        alpha: f64,
    },
}

impl FaceModel {
    pub fn identity(&self) -> Option<&IdentityParams> {
        match self {
            FaceModel::Identity(p) => Some(p),
            FaceModel::Morph { .. } => None,
        }
    }

    pub fn landmarks(&self) -> Result<LandmarkSet<f64>> {
        match self {
            FaceModel::Identity(p) => Ok(p.landmarks.clone()),
            FaceModel::Morph { a, b, alpha } => LandmarkSet::new(
                a.landmarks
                    .points()
                    .iter()
                    .zip(b.landmarks.points())
                    .map(|(&p, &q)| lerp2(p, q, *alpha))
                    .collect(),
            ),
        }
    }

    /// Ground-truth normals and albedo.
    fn maps(&self) -> Result<(NormalMap<f64>, Raster<f64>)> {
        match self {
            FaceModel::Identity(p) => Ok((p.normals(), p.albedo())),
            FaceModel::Morph { a, b, alpha } => {
                let target = self.landmarks()?;
                let wa = a.warped(&eye_similarity(&a.landmarks, &target)?);
                let wb = b.warped(&eye_similarity(&b.landmarks, &target)?);
                let mix = |x: Raster<f64>, y: Raster<f64>| {
                    Raster::from_fn(FACE_SIZE, FACE_SIZE, 1, |i, j, _| {
                        lerp(x.get(i, j, 0), y.get(i, j, 0), *alpha)
                    })
                };
                let height = mix(wa.heightmap(), wb.heightmap());
                Ok((normals_from_heightmap(&height), mix(wa.albedo(), wb.albedo())))
            }
        }
    }
}

/// Similarity taking the eye centres of `from` onto those of `to`; exactly
/// the identity when they already coincide.
fn eye_similarity(from: &LandmarkSet<f64>, to: &LandmarkSet<f64>) -> Result<SimilarityTransform<f64>> {
    let (l, r) = eye_centers(from);
    let (tl, tr) = eye_centers(to);
    if (l, r) == (tl, tr) {
        return Ok(SimilarityTransform::identity());
    }
    let (dx, dy) = (r[0] - l[0], r[1] - l[1]);
    let (tx, ty) = (tr[0] - tl[0], tr[1] - tl[1]);
    let scale = (tx.hypot(ty)) / dx.hypot(dy);
    let rotation = ty.atan2(tx) - dy.atan2(dx);
    let partial = SimilarityTransform::new(scale, rotation, [0.0, 0.0])?;
    let moved = partial.apply(l);
    SimilarityTransform::new(scale, rotation, [tl[0] - moved[0], tl[1] - moved[1]])
}

/// A rendered face: its model, studio passport image and ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Face {
    pub model: FaceModel,
    pub passport: Raster<f64>,
    pub decomposition: Decomposition<f64>,
    pub landmarks: LandmarkSet<f64>,
}

impl Face {
    /// Rasterizes `model` and renders the passport under the studio lighting.
    pub fn render(model: FaceModel) -> Result<Face> {
        let (normals, albedo) = model.maps()?;
        let decomposition = Decomposition::rendered(
            normals,
            albedo,
            studio_lighting(),
            DecomposerMode::SyntheticGroundTruth,
        )?;
        let passport = render_diffuse(
            &decomposition.normals,
            &decomposition.albedo,
            &decomposition.lighting,
        )?
        .image
        .map(|v| v.clamp(0.0, 1.0));
        let landmarks = model.landmarks()?;
        Ok(Face {
            model,
            passport,
            decomposition,
            landmarks,
        })
    }

    /// Parameters of a bona fide face; `None` for morphs.
    pub fn params(&self) -> Option<&IdentityParams> {
        self.model.identity()
    }
}

pub fn gen_identity(seed: u64) -> Result<Face> {
    Face::render(FaceModel::Identity(IdentityParams::random(seed)))
}

/// Morph of two identities with weight `alpha` on `a`: both are aligned on
/// the blended landmarks' eye centres and their maps blended.
pub fn gen_morph(a: &IdentityParams, b: &IdentityParams, alpha: f64) -> Result<Face> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Validation(format!("morph weight {alpha} outside [0, 1]")));
    }
    if a == b {
        return Err(Error::Validation("morph parents must be distinct identities".into()));
    }
    Face::render(FaceModel::Morph {
        a: a.clone(),
        b: b.clone(),
        alpha,
    })
}

fn random_texture(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let noise = Raster::from_fn(FACE_SIZE, FACE_SIZE, 1, |_, _, _| {
        StandardNormal.sample(&mut *rng)
    });
    let smooth = gaussian_blur(&noise, TEXTURE_SIGMA);
    let n = smooth.data().len() as f64;
    let mean = smooth.data().iter().sum::<f64>() / n;
    let var = smooth.data().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let k = TEXTURE_STD / var.sqrt();
    smooth.data().iter().map(|v| (v - mean) * k).collect()
}

fn ellipse(f: &Frame, cu: f64, cv: f64, ru: f64, rv: f64, angles: &[f64]) -> Vec<Point<f64>> {
    angles
        .iter()
        .map(|a: &f64| f.at(cu + ru * a.cos(), cv + rv * a.sin()))
        .collect()
}

/// The 68-point layout: jaw, brows, nose bridge, nostrils, eyes, outer and
/// inner lips.
fn template_landmarks(f: &Frame, s: &Shape) -> LandmarkSet<f64> {
    use std::f64::consts::PI;
    let mut pts = Vec::with_capacity(LANDMARK_COUNT);
    for k in 0..17 {
        let t = PI * k as f64 / 16.0;
        pts.push(f.at(-s.jaw_w * t.cos(), 0.05 + s.jaw_h * t.sin()));
    }
    for side in [-1.0, 1.0] {
        for k in 0..5 {
            let t = k as f64 / 4.0;
            let u = if side < 0.0 { -0.75 + 0.6 * t } else { 0.15 + 0.6 * t };
            let arch = 0.08 * (PI * t).sin();
            pts.push(f.at(u, s.brow_v - arch));
        }
    }
    for k in 0..4 {
        pts.push(f.at(0.0, -0.05 + s.nose_len * k as f64 / 3.0));
    }
    for k in 0..5 {
        let u = -0.2 + 0.1 * k as f64;
        let dip = if k == 2 { 0.04 } else { 0.0 };
        pts.push(f.at(u, s.nose_len + 0.13 + dip));
    }
    // Contour order: outer corner, two upper, inner corner, two lower. The six
    // angles are symmetric so each eye's centroid is its anchor.
    let eye = [PI, 4.0 * PI / 3.0, 5.0 * PI / 3.0, 0.0, PI / 3.0, 2.0 * PI / 3.0];
    pts.extend(ellipse(f, -0.5, 0.0, s.eye_rx, s.eye_ry, &eye));
    let eye_r: Vec<f64> = eye.iter().map(|a| PI - a).collect();
    pts.extend(ellipse(f, 0.5, 0.0, s.eye_rx, s.eye_ry, &eye_r));
    let outer: Vec<f64> = (0..12).map(|k| PI + 2.0 * PI * k as f64 / 12.0).collect();
    pts.extend(ellipse(f, 0.0, s.mouth_v, s.mouth_w, 0.15, &outer));
    let inner: Vec<f64> = (0..8).map(|k| PI + 2.0 * PI * k as f64 / 8.0).collect();
    pts.extend(ellipse(f, 0.0, s.mouth_v, s.mouth_w * 0.75, 0.06, &inner));
    LandmarkSet::new(pts).expect("template has 68 finite points")
}

/// Eye anchors of the face frame, in image pixels.
pub fn eye_anchors(params: &IdentityParams) -> (Point<f64>, Point<f64>) {
    morphdet::geometry::eye_centers(&params.landmarks)
}

#[inline]
fn lerp(x: f64, y: f64, a: f64) -> f64 {
    a * x + (1.0 - a) * y
}

#[inline]
fn lerp2(p: [f64; 2], q: [f64; 2], a: f64) -> [f64; 2] {
    [lerp(p[0], q[0], a), lerp(p[1], q[1], a)]
}

fn smoothstep(e0: f64, e1: f64, x: f64) -> f64 {
    let t = ((x - e0) / (e1 - e0)).clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}
