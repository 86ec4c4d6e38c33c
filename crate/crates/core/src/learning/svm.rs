//! Linear soft-margin SVM trained in the dual.
//!
//! The primal is `½‖w‖² + Σ C_i · max(0, 1 - y_i (w·x_i + b))` with an
//! unregularized bias. Its dual carries the constraint `Σ y_i α_i = 0`, so
//! coordinates are updated in pairs along directions that keep it satisfied.
//! Each pair step is an exact line minimization clipped to the box, which makes
//! the dual objective non-increasing.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Pair steps whose exact dual decrease is below this are skipped.
const MIN_STEP_GAIN: f64 = 1e-13;

/// A dense row-major sample matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples<T> {
    dim: usize,
    data: Vec<T>,
}

impl<T: Real> Samples<T> {
    pub fn new(dim: usize, data: Vec<T>) -> Result<Self> {
        if dim == 0 || data.len() % dim != 0 {
            return Err(Error::DimensionMismatch(format!(
                "{} values do not form rows of dimension {dim}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Samples { dim, data })
    }

    /// Stacks rows, failing on ragged input.
    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(dim * rows.len());
        for (i, r) in rows.iter().enumerate() {
            if r.as_ref().len() != dim {
                return Err(Error::DimensionMismatch(format!(
                    "row {i} has dimension {}, expected {dim}",
                    r.as_ref().len()
                )));
            }
            data.extend_from_slice(r.as_ref());
        }
        Samples::new(dim, data)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[T]> {
        self.data.chunks_exact(self.dim)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmParams {
    pub c: f64,
    pub seed: u64,
    /// Scale each sample's `C` by `n / (2 n_class)`.
    pub balance_classes: bool,
    /// Train on z-scored features and fold the scaling back into the model.
    pub standardize: bool,
    pub max_epochs: usize,
    /// Stop once an epoch lowers the dual objective by less than
    /// `tolerance · max(1, |objective|)` while the largest KKT violation is
    /// below `kkt_tolerance`.
    pub tolerance: f64,
    pub kkt_tolerance: f64,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams {
            c: 1.0,
            seed: 0,
            balance_classes: true,
            standardize: true,
            max_epochs: 1000,
            tolerance: 1e-6,
            kkt_tolerance: 1e-5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainMeta {
    pub epochs: usize,
    /// Primal objective at the returned solution (in the training space).
    pub objective: f64,
    /// Dual objective `½‖w‖² - Σα` after each epoch.
    pub dual_history: Vec<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearSvmModel<T> {
    pub weights: Vec<T>,
    pub bias: T,
    pub c: f64,
    pub extractor_tag: String,
    pub meta: TrainMeta,
}

#[inline]
fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 4];
    let chunks = a.len() / 4;
    for k in 0..chunks {
        for l in 0..4 {
            acc[l] += a[4 * k + l] * b[4 * k + l];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for k in 4 * chunks..a.len() {
        s += a[k] * b[k];
    }
    s
}

/// `(w·a, w·b, a·b)` in one pass, accumulated in double precision.
fn dots3<T: Real>(w: &[f64], a: &[T], b: &[T]) -> (f64, f64, f64) {
    let (mut wa, mut wb, mut ab) = ([0.0f64; 4], [0.0f64; 4], [0.0f64; 4]);
    let chunks = w.len() / 4;
    for k in 0..chunks {
        for l in 0..4 {
            let i = 4 * k + l;
            let (x, y) = (a[i].to_f64_lossy(), b[i].to_f64_lossy());
            wa[l] += w[i] * x;
            wb[l] += w[i] * y;
            ab[l] += x * y;
        }
    }
    let sum = |v: [f64; 4]| (v[0] + v[1]) + (v[2] + v[3]);
    let (mut sa, mut sb, mut sab) = (sum(wa), sum(wb), sum(ab));
    for i in 4 * chunks..w.len() {
        let (x, y) = (a[i].to_f64_lossy(), b[i].to_f64_lossy());
        sa += w[i] * x;
        sb += w[i] * y;
        sab += x * y;
    }
    (sa, sb, sab)
}

/// `w·x` accumulated in double precision.
fn dot_wide<T: Real>(w: &[f64], x: &[T]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = w.len() / 4;
    for k in 0..chunks {
        for l in 0..4 {
            acc[l] += w[4 * k + l] * x[4 * k + l].to_f64_lossy();
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for k in 4 * chunks..w.len() {
        s += w[k] * x[k].to_f64_lossy();
    }
    s
}

/// Bias minimizing `Σ C_i · max(0, 1 - y_i (s_i + b))` for fixed scores `s`.
/// The loss is convex piecewise linear; when it is flat at its minimum the
/// midpoint of the flat stretch is returned.
pub(crate) fn optimal_bias(scores: &[f64], y: &[f64], cost: &[f64]) -> f64 {
    let mut bps: Vec<(f64, f64)> = scores
        .iter()
        .zip(y)
        .zip(cost)
        .map(|((&s, &yi), &ci)| (yi - s, ci))
        .collect();
    bps.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut slope: f64 = -y.iter().zip(cost).filter(|(&yi, _)| yi > 0.0).map(|(_, &c)| c).sum::<f64>();
    let mut k = 0;
    while k < bps.len() {
        let at = bps[k].0;
        while k < bps.len() && bps[k].0 == at {
            slope += bps[k].1;
            k += 1;
        }
        if slope > 0.0 {
            return at;
        }
        if slope == 0.0 {
            return match bps.get(k) {
                Some(&(next, _)) => 0.5 * (at + next),
                None => at,
            };
        }
    }
    bps.last().map_or(0.0, |b| b.0)
}

fn primal_objective(w_sq: f64, scores: &[f64], y: &[f64], cost: &[f64], b: f64) -> f64 {
    let hinge: f64 = scores
        .iter()
        .zip(y)
        .zip(cost)
        .map(|((&s, &yi), &ci)| ci * (1.0 - yi * (s + b)).max(0.0))
        .sum();
    0.5 * w_sq + hinge
}

/// Trains on rows of `x` with labels `y` in {-1, +1}.
pub fn svm_train<T: Real>(
    x: &Samples<T>,
    y: &[f64],
    params: &SvmParams,
) -> Result<LinearSvmModel<T>> {
    let n = x.len();
    if y.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{n} samples but {} labels",
            y.len()
        )));
    }
    if let Some(bad) = y.iter().find(|&&v| v != 1.0 && v != -1.0) {
        return Err(Error::Validation(format!("label {bad} is not -1 or +1")));
    }
    let n_pos = y.iter().filter(|&&v| v > 0.0).count();
    let n_neg = n - n_pos;
    if n_pos < 2 || n_neg < 2 {
        return Err(Error::Degenerate(format!(
            "SVM training needs two samples per class, got {n_neg} negative and {n_pos} positive"
        )));
    }
    if !(params.c > 0.0 && params.c.is_finite()) {
        return Err(Error::Validation(format!("C must be positive, got {}", params.c)));
    }
    let d = x.dim();

    let (mean, scale) = if params.standardize {
        let mut mean = vec![0.0f64; d];
        for r in x.rows() {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v.to_f64_lossy();
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0f64; d];
        for r in x.rows() {
            for k in 0..d {
                let dv = r[k].to_f64_lossy() - mean[k];
                var[k] += dv * dv;
            }
        }
        let scale: Vec<f64> = var
            .iter()
            .map(|v| {
                let sd = (v / n as f64).sqrt();
                if sd > 1e-12 { 1.0 / sd } else { 0.0 }
            })
            .collect();
        (mean, scale)
    } else {
        (vec![0.0; d], vec![1.0; d])
    };
    let z: Vec<T> = x
        .rows()
        .flat_map(|r| (0..d).map(|k| T::lit((r[k].to_f64_lossy() - mean[k]) * scale[k])))
        .collect();
    let zrow = |i: usize| &z[i * d..(i + 1) * d];

    let cost: Vec<f64> = y
        .iter()
        .map(|&v| {
            if params.balance_classes {
                let nc = if v > 0.0 { n_pos } else { n_neg };
                params.c * n as f64 / (2.0 * nc as f64)
            } else {
                params.c
            }
        })
        .collect();
    let sq: Vec<f64> = (0..n).map(|i| dot(zrow(i), zrow(i)).to_f64_lossy()).collect();

    let mut alpha = vec![0.0f64; n];
    let mut w = vec![0.0f64; d];
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::new();
    let mut prev = 0.0f64;
    let mut v = vec![0.0f64; n];

    let in_up = |a: f64, yi: f64, ci: f64| if yi > 0.0 { a < ci } else { a > 0.0 };
    let in_low = |a: f64, yi: f64, ci: f64| if yi > 0.0 { a > 0.0 } else { a < ci };

    // Exact clipped line search along α_i += y_i t, α_j -= y_j t.
    let pair_step = |i: usize, j: usize, alpha: &mut [f64], w: &mut [f64]| {
        if i == j {
            return;
        }
        let (xi, xj) = (zrow(i), zrow(j));
        let (wi, wj, xij) = dots3(w, xi, xj);
        let (vi, vj) = (y[i] - wi, y[j] - wj);
        let eta = sq[i] + sq[j] - 2.0 * xij;
        let (lo_i, hi_i) = if y[i] > 0.0 {
            (-alpha[i], cost[i] - alpha[i])
        } else {
            (alpha[i] - cost[i], alpha[i])
        };
        let (lo_j, hi_j) = if y[j] > 0.0 {
            (alpha[j] - cost[j], alpha[j])
        } else {
            (-alpha[j], cost[j] - alpha[j])
        };
        let (lo, hi) = (lo_i.max(lo_j), hi_i.min(hi_j));
        let g = vi - vj;
        let t = if eta > 1e-12 {
            (g / eta).clamp(lo, hi)
        } else if g > 0.0 {
            hi
        } else if g < 0.0 {
            lo
        } else {
            0.0
        };
        // Steps gaining less than rounding noise can raise the computed dual.
        if t * g - 0.5 * eta * t * t <= MIN_STEP_GAIN {
            return;
        }
        alpha[i] = (alpha[i] + y[i] * t).clamp(0.0, cost[i]);
        alpha[j] = (alpha[j] - y[j] * t).clamp(0.0, cost[j]);
        for k in 0..d {
            w[k] += t * (xi[k].to_f64_lossy() - xj[k].to_f64_lossy());
        }
    };

    let mut epochs = 0;
    let mut decrease = f64::INFINITY;
    while epochs < params.max_epochs {
        for i in 0..n {
            v[i] = y[i] - dot_wide(&w, zrow(i));
        }
        // Candidates ordered by stale violation, most violating first.
        let mut ups: Vec<usize> = (0..n).filter(|&i| in_up(alpha[i], y[i], cost[i])).collect();
        let mut lows: Vec<usize> = (0..n).filter(|&i| in_low(alpha[i], y[i], cost[i])).collect();
        ups.sort_by(|&a, &b| v[b].total_cmp(&v[a]).then(a.cmp(&b)));
        lows.sort_by(|&a, &b| v[a].total_cmp(&v[b]).then(a.cmp(&b)));
        let violation = match (ups.first(), lows.first()) {
            (Some(&i), Some(&j)) => v[i] - v[j],
            _ => 0.0,
        };
        if decrease < params.tolerance * prev.abs().max(1.0) && violation < params.kkt_tolerance {
            break;
        }
        epochs += 1;
        if let (Some(&i), Some(&j)) = (ups.first(), lows.first()) {
            pair_step(i, j, &mut alpha, &mut w);
        }
        order.shuffle(&mut rng);
        let (mut pu, mut pl) = (0usize, 0usize);
        for &i in &order {
            if in_up(alpha[i], y[i], cost[i]) {
                while pl < lows.len() && !in_low(alpha[lows[pl]], y[lows[pl]], cost[lows[pl]]) {
                    pl += 1;
                }
                if let Some(&j) = lows.get(pl) {
                    pair_step(i, j, &mut alpha, &mut w);
                }
            } else {
                while pu < ups.len() && !in_up(alpha[ups[pu]], y[ups[pu]], cost[ups[pu]]) {
                    pu += 1;
                }
                if let Some(&j) = ups.get(pu) {
                    pair_step(j, i, &mut alpha, &mut w);
                }
            }
        }
        let w_sq: f64 = w.iter().map(|v| v * v).sum();
        let dual = 0.5 * w_sq - alpha.iter().sum::<f64>();
        if !dual.is_finite() {
            return Err(Error::Numeric("dual objective diverged".into()));
        }
        let slack = 1e-9 * dual.abs().max(1.0);
        if let Some(&last) = history.last() {
            if dual > last + slack {
                return Err(Error::Numeric(format!(
                    "dual objective rose from {last} to {dual} in epoch {epochs}"
                )));
            }
        }
        history.push(dual);
        decrease = prev - dual;
        prev = dual;
    }

    let scores: Vec<f64> = (0..n).map(|i| dot_wide(&w, zrow(i))).collect();
    let b = optimal_bias(&scores, y, &cost);
    let w_sq: f64 = w.iter().map(|v| v * v).sum();
    let objective = primal_objective(w_sq, &scores, y, &cost, b);

    let weights: Vec<T> = (0..d).map(|k| T::lit(w[k] * scale[k])).collect();
    let shift: f64 = (0..d).map(|k| weights[k].to_f64_lossy() * mean[k]).sum();
    Ok(LinearSvmModel {
        weights,
        bias: T::lit(b - shift),
        c: params.c,
        extractor_tag: String::new(),
        meta: TrainMeta {
            epochs,
            objective,
            dual_history: history,
            seed: params.seed,
        },
    })
}

impl<T: Real> LinearSvmModel<T> {
    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    /// `w·x + b`; positive values point towards the attack class.
    pub fn score(&self, x: &[T]) -> Result<T> {
        if x.len() != self.weights.len() {
            return Err(Error::DimensionMismatch(format!(
                "model has dimension {}, sample has {}",
                self.weights.len(),
                x.len()
            )));
        }
        Ok(dot(&self.weights, x) + self.bias)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("morphdet-linear-svm 1\n");
        let _ = writeln!(s, "dim {}", self.dim());
        let _ = writeln!(s, "c {}", self.c);
        let _ = writeln!(s, "bias {}", self.bias);
        let _ = writeln!(s, "seed {}", self.meta.seed);
        let _ = writeln!(s, "extractor_tag {}", self.extractor_tag);
        let _ = writeln!(s, "epochs {}", self.meta.epochs);
        let _ = writeln!(s, "objective {}", self.meta.objective);
        s.push_str("weights\n");
        for w in &self.weights {
            let _ = writeln!(s, "{w}");
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let perr = |m: String| Error::parse("svm model", m);
        let mut lines = text.lines();
        if lines.next() != Some("morphdet-linear-svm 1") {
            return Err(perr("missing model header".into()));
        }
        let mut field = |key: &str| -> Result<String> {
            let line = lines.next().ok_or_else(|| perr(format!("missing {key}")))?;
            match line.split_once(' ') {
                Some((k, v)) if k == key => Ok(v.to_string()),
                None if line == key => Ok(String::new()),
                _ => Err(perr(format!("expected {key}, found {line:?}"))),
            }
        };
        let num = |key: &str, v: String| -> Result<f64> {
            v.parse().map_err(|_| perr(format!("bad {key} {v:?}")))
        };
        let dim = field("dim")?.parse::<usize>().map_err(|_| perr("bad dim".into()))?;
        let c = num("c", field("c")?)?;
        let bias = num("bias", field("bias")?)?;
        let seed = field("seed")?.parse::<u64>().map_err(|_| perr("bad seed".into()))?;
        let extractor_tag = field("extractor_tag")?;
        let epochs = field("epochs")?.parse::<usize>().map_err(|_| perr("bad epochs".into()))?;
        let objective = num("objective", field("objective")?)?;
        if lines.next() != Some("weights") {
            return Err(perr("missing weights section".into()));
        }
        let weights = lines
            .filter(|l| !l.trim().is_empty())
            .map(|l| l.trim().parse::<f64>().map(T::lit).map_err(|_| perr(format!("bad weight {l:?}"))))
            .collect::<Result<Vec<T>>>()?;
        if weights.len() != dim {
            return Err(perr(format!("declared {dim} weights, found {}", weights.len())));
        }
        if weights.iter().any(|w| !w.is_finite()) || !bias.is_finite() {
            return Err(Error::Validation("non-finite model parameter".into()));
        }
        Ok(LinearSvmModel {
            weights,
            bias: T::lit(bias),
            c,
            extractor_tag,
            meta: TrainMeta {
                epochs,
                objective,
                dual_history: Vec::new(),
                seed,
            },
        })
    }
}

pub fn write_model<T: Real>(m: &LinearSvmModel<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, m.to_text()).map_err(|e| Error::io(path, e))
}

pub fn read_model<T: Real>(path: impl AsRef<Path>) -> Result<LinearSvmModel<T>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    LinearSvmModel::parse(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plain() -> SvmParams {
        SvmParams {
            balance_classes: false,
            standardize: false,
            ..SvmParams::default()
        }
    }

    #[test]
    fn separable_one_dimensional() {
        let x = Samples::new(1, vec![-1.0f64, -2.0, 1.0, 2.0]).unwrap();
        let y = [-1.0, -1.0, 1.0, 1.0];
        let m = svm_train(&x, &y, &plain()).unwrap();
        for (i, r) in x.rows().enumerate() {
            assert_eq!(m.score(r).unwrap().signum(), y[i]);
        }
        // Hard-margin solution w = 1, b = 0 has objective 0.5.
        assert!((m.meta.objective - 0.5).abs() < 1e-6);
    }

    #[test]
    fn xor_is_not_separable() {
        let x = Samples::from_rows(&[
            [0.0f64, 0.0],
            [1.0, 1.0],
            [0.0, 1.0],
            [1.0, 0.0],
        ])
        .unwrap();
        let y = [-1.0, -1.0, 1.0, 1.0];
        let m = svm_train(&x, &y, &plain()).unwrap();
        let errors = x
            .rows()
            .zip(&y)
            .filter(|(r, &t)| m.score(r).unwrap() * t <= 0.0)
            .count();
        assert!(errors > 0);
    }

    #[test]
    fn single_class_is_rejected() {
        let x = Samples::new(1, vec![0.0f64, 1.0, 2.0]).unwrap();
        assert!(matches!(
            svm_train(&x, &[1.0, 1.0, 1.0], &plain()),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn bias_of_symmetric_problem() {
        // Hinge terms 1-(s+b) for the positive at s=0 and 1+(s+b) for the
        // negative at s=0: flat on [-1, 1], midpoint 0.
        assert_eq!(optimal_bias(&[0.0, 0.0], &[1.0, -1.0], &[1.0, 1.0]), 0.0);
        assert_eq!(optimal_bias(&[0.0, 0.0, 0.0], &[1.0, 1.0, -1.0], &[1.0; 3]), 1.0);
    }

    #[test]
    fn score_linearity_and_dimension_check() {
        let m = LinearSvmModel {
            weights: vec![1.0f64, -2.0],
            bias: 0.0,
            c: 1.0,
            extractor_tag: String::new(),
            meta: TrainMeta { epochs: 0, objective: 0.0, dual_history: vec![], seed: 0 },
        };
        assert_eq!(m.score(&[2.0, 1.0]).unwrap(), 0.0);
        assert_eq!(m.score(&[2.0, 4.0]).unwrap() * 2.0, m.score(&[4.0, 8.0]).unwrap());
        assert!(m.score(&[1.0]).is_err());
    }

    #[test]
    fn model_text_round_trip() {
        let x = Samples::from_rows(&[[0.0f64, 1.0], [1.0, 0.5], [3.0, 2.0], [2.5, 3.0]]).unwrap();
        let mut m = svm_train(&x, &[-1.0, -1.0, 1.0, 1.0], &SvmParams::default()).unwrap();
        m.extractor_tag = "builtin".into();
        let back = LinearSvmModel::<f64>::parse(&m.to_text()).unwrap();
        assert_eq!(back.weights, m.weights);
        assert_eq!(back.bias, m.bias);
        assert_eq!(back.extractor_tag, "builtin");
        assert_eq!(back.to_text(), m.to_text());
    }
}
