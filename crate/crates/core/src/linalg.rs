//! Small dense symmetric solvers for the 9×9 lighting normal equations.

use crate::scalar::Real;

/// Cyclic Jacobi eigendecomposition of a symmetric `n×n` matrix (row-major).
/// Returns eigenvalues and column eigenvectors (`vecs[i*n + k]` is component
/// `i` of eigenvector `k`).
pub fn symmetric_eigen<T: Real>(a: &[T], n: usize) -> (Vec<T>, Vec<T>) {
    assert_eq!(a.len(), n * n);
    let mut m = a.to_vec();
    let mut v = vec![T::zero(); n * n];
    for i in 0..n {
        v[i * n + i] = T::one();
    }
    for _sweep in 0..100 {
        let mut off = T::zero();
        let mut diag = T::zero();
        for i in 0..n {
            diag += m[i * n + i] * m[i * n + i];
            for j in (i + 1)..n {
                off += m[i * n + j] * m[i * n + j];
            }
        }
        if off <= T::epsilon() * T::epsilon() * diag || off == T::zero() {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p * n + q];
                if apq == T::zero() {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let theta = (aqq - app) / (apq + apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[k * n + p];
                    let mkq = m[k * n + q];
                    m[k * n + p] = c * mkp - s * mkq;
                    m[k * n + q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p * n + k];
                    let mqk = m[q * n + k];
                    m[p * n + k] = c * mpk - s * mqk;
                    m[q * n + k] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| m[i * n + i]).collect(), v)
}

/// Damped minimum-norm solution of the normal equations `ata · x = atb`.
///
/// Eigen-directions whose eigenvalue falls below a relative tolerance are
/// treated as null space and contribute nothing; the rest are solved with
/// `1 / (λ + damping)`. Returns the solution and the numerical rank.
pub fn damped_min_norm_solve<T: Real>(ata: &[T], atb: &[T], damping: T) -> (Vec<T>, usize) {
    let n = atb.len();
    let (vals, vecs) = symmetric_eigen(ata, n);
    let max = vals.iter().fold(T::zero(), |m, &v| m.max(v.abs()));
    let tol = max * T::lit(1e4) * T::epsilon();
    let mut x = vec![T::zero(); n];
    let mut rank = 0;
    for k in 0..n {
        if !(vals[k] > tol) {
            continue;
        }
        rank += 1;
        let proj: T = (0..n).map(|i| vecs[i * n + k] * atb[i]).sum();
        let coef = proj / (vals[k] + damping);
        for i in 0..n {
            x[i] += coef * vecs[i * n + k];
        }
    }
    (x, rank)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_reconstructs_matrix() {
        let a = [4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 1.0];
        let (vals, vecs) = symmetric_eigen(&a, 3);
        for i in 0..3 {
            for j in 0..3 {
                let r: f64 = (0..3).map(|k| vecs[i * 3 + k] * vals[k] * vecs[j * 3 + k]).sum();
                assert!((r - a[i * 3 + j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rank_deficient_gives_min_norm() {
        // Rank-1 system: x0 + x1 = 2 (twice). Minimum-norm solution is (1, 1).
        let ata: [f64; 4] = [2.0, 2.0, 2.0, 2.0];
        let atb = [4.0, 4.0];
        let (x, rank) = damped_min_norm_solve(&ata, &atb, 1e-9);
        assert_eq!(rank, 1);
        assert!((x[0] - 1.0).abs() < 1e-8 && (x[1] - 1.0).abs() < 1e-8);
    }
}
