//! Simplex-constrained quadratic programming.
//!
//! Minimizes `w'Gw - 2b'w` over the probability simplex with accelerated
//! projected gradient descent (Nesterov momentum with adaptive restart) and
//! exact Euclidean projection onto the simplex. Candidate counts are small
//! (M <= ~64 in every experiment here), so each iteration is a single
//! matrix-vector product plus a sort.

use crate::criteria::WeightVector;
use crate::error::{Error, Result};
use crate::scalar::Real;
use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy)]
pub struct QpOptions<T> {
    /// Stop once the KKT residual (on the scale-normalized problem) is below this.
    pub tol: T,
    pub max_iter: usize,
    /// Coordinates above this are treated as active in the KKT check.
    pub active_tol: T,
}

impl<T: Real> Default for QpOptions<T> {
    fn default() -> Self {
        Self { tol: T::of(1e-8), max_iter: 100_000, active_tol: T::of(1e-9) }
    }
}

/// Euclidean projection onto `{ w : w >= 0, sum w = 1 }`.
pub fn simplex_project<T: Real>(v: &DVector<T>) -> DVector<T> {
    let m = v.len();
    let mut sorted: Vec<T> = v.iter().cloned().collect();
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("finite entries"));
    let mut cumsum = T::zero();
    let mut theta = T::zero();
    let mut rho = 0;
    for (i, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let candidate = (cumsum - T::one()) / T::of((i + 1) as f64);
        if u - candidate > T::zero() {
            rho = i + 1;
            theta = candidate;
        }
    }
    debug_assert!(rho > 0);
    DVector::from_fn(m, |i, _| (v[i] - theta).max(T::zero()))
}

/// KKT residual at `w` for gradient `grad` on the simplex: active coordinates
/// must share a common gradient value, inactive ones must not undercut it.
pub(crate) fn kkt_residual_from_grad<T: Real>(grad: &DVector<T>, w: &DVector<T>) -> T {
    let active_tol = T::of(1e-9);
    // Weighted average gradient over the support; with sum w = 1 this is the
    // multiplier candidate.
    let mu = grad.dot(w);
    let mut residual = T::zero();
    for m in 0..w.len() {
        if w[m] > active_tol {
            residual = residual.max((grad[m] - mu).abs());
        } else {
            residual = residual.max((mu - grad[m]).max(T::zero()));
        }
    }
    residual
}

/// KKT residual of `w` for the program `min w'Gw - 2b'w` on the simplex.
pub fn simplex_kkt_residual<T: Real>(g: &DMatrix<T>, b: &DVector<T>, w: &DVector<T>) -> T {
    let grad = (g * w - b) * T::of(2.0);
    kkt_residual_from_grad(&grad, w)
}

/// Minimize `w'Gw - 2b'w` over the simplex with default options.
pub fn simplex_qp<T: Real>(g: &DMatrix<T>, b: &DVector<T>) -> Result<WeightVector<T>> {
    simplex_qp_with(g, b, QpOptions::default())
}

pub fn simplex_qp_with<T: Real>(
    g: &DMatrix<T>,
    b: &DVector<T>,
    opts: QpOptions<T>,
) -> Result<WeightVector<T>> {
    let m = g.nrows();
    if g.ncols() != m {
        return Err(Error::DimensionMismatch { what: "qp matrix", expected: m, got: g.ncols() });
    }
    if b.len() != m {
        return Err(Error::DimensionMismatch { what: "qp rhs", expected: m, got: b.len() });
    }
    if m == 0 {
        return Err(Error::Invalid("empty quadratic program".into()));
    }

    // Normalize scale so tolerances mean the same thing across instances.
    let scale = T::one().max(g.amax()).max(b.amax());
    let g = g / scale;
    let b = b / scale;

    let sym_tol = T::of(1e-8);
    for i in 0..m {
        for j in (i + 1)..m {
            if (g[(i, j)] - g[(j, i)]).abs() > sym_tol {
                return Err(Error::NotPsd {
                    detail: format!("asymmetry at ({i},{j}): {}", (g[(i, j)] - g[(j, i)]).abs().as_f64()),
                });
            }
        }
    }
    let eigs = g.clone().symmetric_eigen().eigenvalues;
    let mut min_eig = T::of(f64::INFINITY);
    let mut max_eig = T::of(f64::NEG_INFINITY);
    for &e in eigs.iter() {
        min_eig = min_eig.min(e);
        max_eig = max_eig.max(e);
    }
    if min_eig < -sym_tol {
        return Err(Error::NotPsd {
            detail: format!("minimum eigenvalue {}", min_eig.as_f64()),
        });
    }

    if m == 1 {
        return WeightVector::simplex(DVector::from_element(1, T::one()));
    }

    // Degenerate quadratic part: the objective is linear, put all mass on the
    // largest rhs coordinates (uniformly over exact ties).
    if max_eig <= T::of(1e-14) {
        let best = b.iter().cloned().fold(T::of(f64::NEG_INFINITY), |a, v| a.max(v));
        let hits: Vec<usize> =
            (0..m).filter(|&i| (b[i] - best).abs() <= T::of(1e-12)).collect();
        let mut w = DVector::zeros(m);
        for &i in &hits {
            w[i] = T::one() / T::of(hits.len() as f64);
        }
        return WeightVector::simplex(w);
    }

    let lipschitz = T::of(2.0) * max_eig;
    let step = T::one() / lipschitz;
    let grad = |w: &DVector<T>| (&g * w - &b) * T::of(2.0);

    let mut w = DVector::from_element(m, T::one() / T::of(m as f64));
    let mut momentum_point = w.clone();
    let mut t = T::one();
    let mut last_residual = T::of(f64::INFINITY);

    for iter in 0..opts.max_iter {
        let gr = grad(&w);
        last_residual = kkt_residual_from_grad(&gr, &w);
        if last_residual <= opts.tol {
            return WeightVector::simplex(w);
        }

        let gr_momentum = grad(&momentum_point);
        let next = simplex_project(&(&momentum_point - gr_momentum * step));
        let t_next = (T::one() + (T::one() + T::of(4.0) * t * t).sqrt()) / T::of(2.0);
        let delta = &next - &w;
        // Adaptive restart: drop momentum when it points uphill.
        if gr_momentum.dot(&delta) > T::zero() {
            momentum_point = next.clone();
            t = T::one();
        } else {
            momentum_point = &next + &delta * ((t - T::one()) / t_next);
            t = t_next;
        }
        w = next;
        let _ = iter;
    }

    let gr = grad(&w);
    last_residual = kkt_residual_from_grad(&gr, &w).min(last_residual);
    if last_residual <= opts.tol {
        return WeightVector::simplex(w);
    }
    Err(Error::NonConvergence { iters: opts.max_iter, residual: last_residual.as_f64() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;
    use rand_distr::StandardNormal;

    fn random_psd(m: usize, rng: &mut ChaCha12Rng) -> DMatrix<f64> {
        let a = DMatrix::from_fn(m, m, |_, _| rng.sample::<f64, _>(StandardNormal));
        let g = a.transpose() * &a;
        // Exact symmetry against accumulated rounding.
        (g.transpose() + &g) * 0.5
    }

    /// Exhaustive search over the simplex at the given resolution (M = 3).
    fn grid_minimum(g: &DMatrix<f64>, b: &DVector<f64>, steps: usize) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..=steps {
            let w1 = i as f64 / steps as f64;
            for j in 0..=(steps - i) {
                let w2 = j as f64 / steps as f64;
                let w = DVector::from_vec(vec![w1, w2, 1.0 - w1 - w2]);
                let value = (w.transpose() * g * &w)[(0, 0)] - 2.0 * b.dot(&w);
                best = best.min(value);
            }
        }
        best
    }

    #[test]
    fn identity_with_aligned_rhs_returns_vertex() {
        // min (w1-1)^2 + w2^2 - 1 on the simplex: the target (1,0) is feasible.
        let g = DMatrix::identity(2, 2);
        let b = DVector::from_vec(vec![1.0, 0.0]);
        let w = simplex_qp(&g, &b).unwrap();
        assert_relative_eq!(w.as_vector()[0], 1.0, epsilon = 1e-8);
        assert_relative_eq!(w.as_vector()[1], 0.0, epsilon = 1e-8);
    }

    #[test]
    fn identity_with_interior_solution() {
        // min w'w - (1,0)'w: unconstrained optimum (0.5, 0), simplex optimum
        // at (0.75, 0.25) from equalizing the gradient 2w - (1,0).
        let g = DMatrix::identity(2, 2);
        let b = DVector::from_vec(vec![0.5, 0.0]);
        let w = simplex_qp(&g, &b).unwrap();
        assert_relative_eq!(w.as_vector()[0], 0.75, epsilon = 1e-8);
        assert_relative_eq!(w.as_vector()[1], 0.25, epsilon = 1e-8);
    }

    #[test]
    fn zero_rhs_gives_uniform_weights() {
        let g = DMatrix::identity(3, 3);
        let b = DVector::zeros(3);
        let w = simplex_qp(&g, &b).unwrap();
        for i in 0..3 {
            assert_relative_eq!(w.as_vector()[i], 1.0 / 3.0, epsilon = 1e-8);
        }
    }

    #[test]
    fn random_psd_instances_match_grid_oracle() {
        let mut rng = ChaCha12Rng::seed_from_u64(99);
        for _ in 0..10 {
            let g = random_psd(3, &mut rng);
            let b = DVector::from_fn(3, |_, _| rng.sample::<f64, _>(StandardNormal));
            let w = simplex_qp(&g, &b).unwrap();
            let value = (w.as_vector().transpose() * &g * w.as_vector())[(0, 0)]
                - 2.0 * b.dot(w.as_vector());
            let oracle = grid_minimum(&g, &b, 1000);
            assert!(value <= oracle + 1e-5, "qp {value} vs grid {oracle}");
            assert!(simplex_kkt_residual(&g, &b, w.as_vector()) <= 1e-6);
        }
    }

    #[test]
    fn kkt_postcondition_structure() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let g = random_psd(6, &mut rng);
        let b = DVector::from_fn(6, |_, _| rng.sample::<f64, _>(StandardNormal));
        let w = simplex_qp(&g, &b).unwrap();
        let grad = (&g * w.as_vector() - &b) * 2.0;
        let active: Vec<usize> = (0..6).filter(|&m| w.as_vector()[m] > 1e-9).collect();
        let mu = grad.dot(w.as_vector());
        for &m in &active {
            assert!((grad[m] - mu).abs() <= 1e-6, "active gradient spread");
        }
        for m in 0..6 {
            if !active.contains(&m) {
                assert!(grad[m] >= mu - 1e-6, "inactive gradient below multiplier");
            }
        }
    }

    #[test]
    fn rejects_asymmetric_and_indefinite_inputs() {
        let mut g = DMatrix::identity(2, 2);
        g[(0, 1)] = 0.5;
        let b = DVector::zeros(2);
        assert!(matches!(simplex_qp(&g, &b), Err(Error::NotPsd { .. })));

        let neg = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0]));
        assert!(matches!(simplex_qp(&neg, &b), Err(Error::NotPsd { .. })));
    }

    #[test]
    fn singular_gram_still_converges() {
        // Duplicate columns: flat direction on the optimal face.
        let g = DMatrix::from_row_slice(3, 3, &[2.0, 2.0, 0.5, 2.0, 2.0, 0.5, 0.5, 0.5, 1.0]);
        let b = DVector::from_vec(vec![1.0, 1.0, 0.2]);
        let w = simplex_qp(&g, &b).unwrap();
        assert!(simplex_kkt_residual(&g, &b, w.as_vector()) <= 1e-6);
    }

    #[test]
    fn projection_is_exact_on_known_cases() {
        let v = DVector::from_vec(vec![0.2, 0.3, 0.5]);
        let p = simplex_project(&v);
        for i in 0..3 {
            assert_relative_eq!(p[i], v[i], epsilon = 1e-14);
        }
        let far = DVector::from_vec(vec![10.0, 0.0]);
        let p = simplex_project(&far);
        assert_relative_eq!(p[0], 1.0);
        assert_relative_eq!(p[1], 0.0);
    }
}
