use morphdet::learning::{svm_train, Samples, SvmParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn costs(y: &[f64], c: f64, balance: bool) -> Vec<f64> {
    let n = y.len() as f64;
    let pos = y.iter().filter(|&&v| v > 0.0).count() as f64;
    y.iter()
        .map(|&v| if balance { c * n / (2.0 * if v > 0.0 { pos } else { n - pos }) } else { c })
        .collect()
}

fn primal(w: [f64; 2], b: f64, x: &[[f64; 2]], y: &[f64], cost: &[f64]) -> f64 {
    let mut obj = 0.5 * (w[0] * w[0] + w[1] * w[1]);
    for i in 0..x.len() {
        let m = y[i] * (w[0] * x[i][0] + w[1] * x[i][1] + b);
        obj += cost[i] * (1.0 - m).max(0.0);
    }
    obj
}

/// Minimizes the primal over a lattice in `(w1, w2, b)` that is repeatedly
/// re-centred on the best node and shrunk.
fn lattice_minimum(x: &[[f64; 2]], y: &[f64], cost: &[f64]) -> f64 {
    let (mut centre, mut radius) = ([0.0f64; 3], 16.0f64);
    let steps = 16i32;
    let mut best = f64::INFINITY;
    for _ in 0..40 {
        let h = radius / f64::from(steps);
        let mut arg = centre;
        for i in -steps..=steps {
            for j in -steps..=steps {
                for k in -steps..=steps {
                    let p = [
                        centre[0] + f64::from(i) * h,
                        centre[1] + f64::from(j) * h,
                        centre[2] + f64::from(k) * h,
                    ];
                    let v = primal([p[0], p[1]], p[2], x, y, cost);
                    if v < best {
                        best = v;
                        arg = p;
                    }
                }
            }
        }
        centre = arg;
        radius *= 0.5;
    }
    best
}

fn tiny_problem(rng: &mut impl Rng) -> (Vec<[f64; 2]>, Vec<f64>) {
    let n = rng.random_range(4..=8);
    let mut y: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
    y.swap(0, rng.random_range(0..n));
    let x = y
        .iter()
        .map(|&t| [rng.random_range(-2.0..2.0) + 0.8 * t, rng.random_range(-2.0..2.0)])
        .collect();
    (x, y)
}

#[test]
fn tiny_problems_reach_the_lattice_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    for trial in 0..20 {
        let (x, y) = tiny_problem(&mut rng);
        let balance = trial % 2 == 1;
        let c = [0.3, 1.0, 3.0][trial % 3];
        let params = SvmParams { c, seed: trial as u64, balance_classes: balance, standardize: false, ..SvmParams::default() };
        let m = svm_train(&Samples::from_rows(&x).unwrap(), &y, &params).unwrap();
        let cost = costs(&y, c, balance);
        let ours = primal([m.weights[0], m.weights[1]], m.bias, &x, &y, &cost);
        assert!((ours - m.meta.objective).abs() < 1e-9);
        let lattice = lattice_minimum(&x, &y, &cost);
        assert!(ours <= lattice + 1e-3, "trial {trial}: {ours} vs lattice {lattice}; epochs {} hist {:?}", m.meta.epochs, &m.meta.dual_history[m.meta.dual_history.len().saturating_sub(5)..]);
        assert!(ours >= lattice - 1e-3, "trial {trial}: {ours} below lattice {lattice}");
        assert!(m.meta.dual_history.windows(2).all(|w| w[1] <= w[0]));
    }
}

fn blobs(n: usize, d: usize, rng: &mut impl Rng) -> (Samples<f64>, Vec<f64>) {
    let mut data = Vec::with_capacity(n * d);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let t = if i % 3 == 0 { 1.0 } else { -1.0 };
        y.push(t);
        for k in 0..d {
            let signal = if k < 5 { 0.6 * t } else { 0.0 };
            data.push(signal + rng.random_range(-1.0..1.0) * (1.0 + k as f64 * 0.1));
        }
    }
    (Samples::new(d, data).unwrap(), y)
}

#[test]
fn training_is_bit_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(52);
    let (x, y) = blobs(120, 30, &mut rng);
    let p = SvmParams { seed: 9, ..SvmParams::default() };
    let a = svm_train(&x, &y, &p).unwrap();
    let b = svm_train(&x, &y, &p).unwrap();
    assert_eq!(a.to_text(), b.to_text());
    assert_eq!(a.meta.dual_history, b.meta.dual_history);
}

#[test]
fn standardized_training_separates_blobs() {
    let mut rng = ChaCha8Rng::seed_from_u64(53);
    let (x, y) = blobs(400, 40, &mut rng);
    let m = svm_train(&x, &y, &SvmParams::default()).unwrap();
    assert!(m.meta.objective.is_finite() && m.meta.objective >= 0.0);
    assert!(m.meta.dual_history.windows(2).all(|w| w[1] <= w[0] + 1e-9 * w[0].abs().max(1.0)));
    let correct = x.rows().zip(&y).filter(|(r, &t)| m.score(r).unwrap() * t > 0.0).count();
    assert!(correct as f64 / y.len() as f64 > 0.85, "accuracy {correct}/400");
}
