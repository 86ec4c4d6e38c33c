//! Score normalization, weighted sum fusion and simplex-grid weight search.

use crate::error::{Error, Result};
use crate::evaluation::{d_eer_of, Rate};
use crate::scores::Label;

/// Min-max normalization fitted on training scores; applied values are
/// clipped to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinMax {
    pub min: f64,
    pub max: f64,
}

impl MinMax {
    pub fn fit(train: &[f64]) -> Result<Self> {
        let min = train.iter().copied().fold(f64::INFINITY, f64::min);
        let max = train.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(min.is_finite() && max.is_finite()) || max <= min {
            return Err(Error::Degenerate(format!(
                "cannot normalize training scores spanning [{min}, {max}]"
            )));
        }
        Ok(MinMax { min, max })
    }

    pub fn apply(&self, v: f64) -> f64 {
        ((v - self.min) / (self.max - self.min)).clamp(0.0, 1.0)
    }
}

/// Fits on `train` and maps `apply` into `[0, 1]`.
pub fn normalize_scores(train: &[f64], apply: &[f64]) -> Result<Vec<f64>> {
    let mm = MinMax::fit(train)?;
    Ok(apply.iter().map(|&v| mm.apply(v)).collect())
}

/// `Σ w_i s_i`.
pub fn fuse(scores: &[f64], weights: &[f64]) -> Result<f64> {
    if scores.len() != weights.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} scores but {} weights",
            scores.len(),
            weights.len()
        )));
    }
    Ok(scores.iter().zip(weights).map(|(s, w)| s * w).sum())
}

const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

fn check_simplex(w: &[f64], what: &str) -> Result<()> {
    if w.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(Error::Validation(format!("{what} weights must be non-negative: {w:?}")));
    }
    let sum: f64 = w.iter().sum();
    if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
        return Err(Error::Validation(format!("{what} weights sum to {sum}, not 1")));
    }
    Ok(())
}

/// Rescales non-negative weights to sum to one.
pub fn renormalize(w: &[f64]) -> Result<Vec<f64>> {
    let sum: f64 = w.iter().sum();
    if w.iter().any(|&v| !(v >= 0.0)) || !(sum > 0.0) {
        return Err(Error::Validation(format!("cannot renormalize weights {w:?}")));
    }
    Ok(w.iter().map(|v| v / sum).collect())
}

/// Feature-level weights `(reconstruction, normal)` and camera-level weights
/// for cameras 1 to 4.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionWeights {
    feature: [f64; 2],
    camera: [f64; 4],
}

/// Feature weights reported for the published operating point.
pub const PAPER_FEATURE_WEIGHTS: [f64; 2] = [0.7, 0.3];

/// Published camera weights; they sum to 0.9 and are renormalized before use.
pub const PAPER_CAMERA_WEIGHTS: [f64; 4] = [0.2, 0.3, 0.2, 0.2];

impl FusionWeights {
    pub fn new(feature: [f64; 2], camera: [f64; 4]) -> Result<Self> {
        check_simplex(&feature, "feature")?;
        check_simplex(&camera, "camera")?;
        Ok(FusionWeights { feature, camera })
    }

    /// The published weights, with camera weights renormalized to sum to one.
    pub fn paper() -> Self {
        log::warn!("published camera weights sum to 0.9; renormalizing to 1");
        let c = renormalize(&PAPER_CAMERA_WEIGHTS).expect("positive weights");
        FusionWeights::new(PAPER_FEATURE_WEIGHTS, [c[0], c[1], c[2], c[3]])
            .expect("published weights are valid after renormalization")
    }

    pub fn feature(&self) -> [f64; 2] {
        self.feature
    }

    pub fn camera(&self) -> [f64; 4] {
        self.camera
    }
}

/// All weight vectors of length `k` with entries in steps of 1/`steps` that sum
/// to one, in lexicographic order.
pub fn simplex_grid(k: usize, steps: u32) -> Vec<Vec<f64>> {
    fn rec(k: usize, left: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if k == 1 {
            prefix.push(left);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for v in 0..=left {
            prefix.push(v);
            rec(k - 1, left - v, prefix, out);
            prefix.pop();
        }
    }
    if k == 0 {
        return Vec::new();
    }
    let mut out = Vec::new();
    rec(k, steps, &mut Vec::new(), &mut out);
    out.into_iter()
        .map(|v| v.into_iter().map(|x| f64::from(x) / f64::from(steps)).collect())
        .collect()
}

/// Grid resolution of the weight search (step 0.1).
pub const SEARCH_STEPS: u32 = 10;

/// Outcome of a weight search.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSearch {
    pub weights: Vec<f64>,
    pub eer: Rate,
}

/// Evaluates every grid point and returns the one whose fused scores have the
/// lowest D-EER, preferring the lexicographically smallest weights on ties.
/// `branches[b][i]` is branch `b`'s score for sample `i`.
pub fn greedy_weight_search(branches: &[Vec<f64>], labels: &[Label]) -> Result<WeightSearch> {
    if branches.is_empty() {
        return Err(Error::Validation("weight search needs at least one branch".into()));
    }
    for (b, s) in branches.iter().enumerate() {
        if s.is_empty() {
            return Err(Error::Degenerate(format!("branch {b} has no scores")));
        }
        if s.len() != labels.len() {
            return Err(Error::DimensionMismatch(format!(
                "branch {b} has {} scores for {} labels",
                s.len(),
                labels.len()
            )));
        }
    }
    let mut best: Option<WeightSearch> = None;
    let (mut g, mut a) = (Vec::new(), Vec::new());
    for w in simplex_grid(branches.len(), SEARCH_STEPS) {
        g.clear();
        a.clear();
        for (i, &label) in labels.iter().enumerate() {
            let v: f64 = branches.iter().zip(&w).map(|(s, wb)| s[i] * wb).sum();
            match label {
                Label::Genuine => g.push(v),
                Label::Attack => a.push(v),
            }
        }
        let eer = d_eer_of(&g, &a)?.eer;
        if best.as_ref().is_none_or(|b| eer < b.eer) {
            best = Some(WeightSearch { weights: w, eer });
        }
    }
    Ok(best.expect("grid is non-empty"))
}
