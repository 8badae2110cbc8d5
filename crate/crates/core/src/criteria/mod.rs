//! Weight-selection criteria.
//!
//! Two criterion families act on the fitted-value matrices: the Mallows form
//! `C(w) = ||y - omega_hat w||^2 + 2 sigma^2 w'kappa + lambda w'w` and the
//! jackknife form `J(w) = ||y - omega_bar w||^2 + lambda w'w`. With
//! `lambda > 0` both are strictly convex on all of `R^M` and have closed-form
//! ridge minimizers; with weights constrained to the simplex the penalized
//! term is dropped and the minimizer comes from a projected-gradient QP.
//! Information-criterion selection and exponential smoothing round out the
//! ten methods compared in the benchmark.

mod qp;

pub use qp::{simplex_kkt_residual, simplex_project, simplex_qp, simplex_qp_with, QpOptions};

use crate::error::{Error, Result};
use crate::model_space::{CriterionMatrices, Dataset, FitBundle, ModelSpec, COND_FLOOR};
use crate::scalar::Real;
use nalgebra::{DMatrix, DVector};

/// Tolerated negative noise on simplex entries before renormalization.
pub const SIMPLEX_NEG_TOL: f64 = 1e-10;

/// Tolerated deviation of a simplex weight sum from one.
pub const SIMPLEX_SUM_TOL: f64 = 1e-8;

/// Which constraint set a weight vector was produced under.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintTag {
    Unrestricted,
    Simplex,
    Vertex,
}

/// A weight vector over the M candidate models.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector<T: Real> {
    w: DVector<T>,
    tag: ConstraintTag,
}

impl<T: Real> WeightVector<T> {
    pub fn unrestricted(w: DVector<T>) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::Invalid("empty weight vector".into()));
        }
        if w.iter().any(|v| !v.is_finite_scalar()) {
            return Err(Error::Invalid("non-finite weight".into()));
        }
        Ok(Self { w, tag: ConstraintTag::Unrestricted })
    }

    /// Simplex-constrained weights. Entries within `-1e-10` of zero are
    /// clamped and the vector renormalized; anything worse is rejected.
    pub fn simplex(mut w: DVector<T>) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::Invalid("empty weight vector".into()));
        }
        if w.iter().any(|v| !v.is_finite_scalar()) {
            return Err(Error::Invalid("non-finite weight".into()));
        }
        let neg_tol = T::of(-SIMPLEX_NEG_TOL);
        if w.iter().any(|&v| v < neg_tol) {
            return Err(Error::Invalid("simplex weight below -1e-10".into()));
        }
        let sum: T = w.iter().cloned().fold(T::zero(), |a, b| a + b);
        if (sum - T::one()).abs() > T::of(SIMPLEX_SUM_TOL) {
            return Err(Error::Invalid(format!(
                "simplex weights sum to {}, not 1",
                sum.as_f64()
            )));
        }
        for v in w.iter_mut() {
            if *v < T::zero() {
                *v = T::zero();
            }
        }
        let clamped: T = w.iter().cloned().fold(T::zero(), |a, b| a + b);
        w /= clamped;
        Ok(Self { w, tag: ConstraintTag::Simplex })
    }

    /// All weight on one model.
    pub fn vertex(index: usize, n_models: usize) -> Result<Self> {
        if index >= n_models {
            return Err(Error::DimensionMismatch {
                what: "vertex index",
                expected: n_models,
                got: index,
            });
        }
        let mut w = DVector::zeros(n_models);
        w[index] = T::one();
        Ok(Self { w, tag: ConstraintTag::Vertex })
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn as_vector(&self) -> &DVector<T> {
        &self.w
    }

    pub fn into_vector(self) -> DVector<T> {
        self.w
    }

    pub fn tag(&self) -> ConstraintTag {
        self.tag
    }

    /// Index of the single unit entry, when this is a vertex.
    pub fn vertex_index(&self) -> Option<usize> {
        if self.tag != ConstraintTag::Vertex {
            return None;
        }
        self.w.iter().position(|&v| v == T::one())
    }
}

/// The ten weight-selection methods of the benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Ridge-penalized Mallows averaging (unrestricted weights).
    Rmma,
    /// Ridge-penalized jackknife averaging (unrestricted weights).
    Rjma,
    /// Mallows averaging on the simplex.
    Mma,
    /// Jackknife averaging on the simplex.
    Jma,
    /// Generalized-cross-validation averaging on the simplex.
    Gm,
    /// Smoothed-AIC averaging.
    Saic,
    /// Smoothed-BIC averaging.
    Sbic,
    /// Single-model selection by AIC.
    Aic,
    /// Single-model selection by BIC.
    Bic,
    /// Single-model selection by Mallows Cp.
    Cp,
}

impl Method {
    pub const ALL: [Method; 10] = [
        Method::Aic,
        Method::Cp,
        Method::Bic,
        Method::Saic,
        Method::Sbic,
        Method::Mma,
        Method::Rmma,
        Method::Gm,
        Method::Jma,
        Method::Rjma,
    ];

    /// Two-letter code used in output files.
    pub fn code(self) -> &'static str {
        match self {
            Method::Rmma => "RM",
            Method::Rjma => "RJ",
            Method::Mma => "MM",
            Method::Jma => "JM",
            Method::Gm => "GM",
            Method::Saic => "SA",
            Method::Sbic => "SB",
            Method::Aic => "AI",
            Method::Bic => "BI",
            Method::Cp => "Cp",
        }
    }

    pub fn from_code(code: &str) -> Option<Method> {
        Method::ALL.iter().copied().find(|m| m.code().eq_ignore_ascii_case(code))
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.code())
    }
}

/// A method together with its ridge penalty (used by RM/RJ only).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriterionConfig<T> {
    pub method: Method,
    pub lambda: T,
}

impl<T: Real> CriterionConfig<T> {
    pub fn new(method: Method, lambda: T) -> Result<Self> {
        if lambda < T::zero() || !lambda.is_finite_scalar() {
            return Err(Error::Invalid("lambda must be finite and nonnegative".into()));
        }
        Ok(Self { method, lambda })
    }

    pub fn plain(method: Method) -> Self {
        Self { method, lambda: T::zero() }
    }
}

/// Per-model information-criterion scores.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector<T: Real> {
    pub scores: Vec<T>,
}

/// Which information criterion [`info_scores`] computes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InfoCriterion {
    Aic,
    Bic,
    Cp,
}

fn check_weight_dims<T: Real>(w: &WeightVector<T>, cm: &CriterionMatrices<T>, y: &DVector<T>) -> Result<()> {
    if w.len() != cm.n_models() {
        return Err(Error::DimensionMismatch {
            what: "weights per model",
            expected: cm.n_models(),
            got: w.len(),
        });
    }
    if y.len() != cm.n() {
        return Err(Error::DimensionMismatch {
            what: "response length",
            expected: cm.n(),
            got: y.len(),
        });
    }
    Ok(())
}

fn check_lambda<T: Real>(lambda: T) -> Result<()> {
    if lambda < T::zero() || !lambda.is_finite_scalar() {
        return Err(Error::Invalid("lambda must be finite and nonnegative".into()));
    }
    Ok(())
}

/// Penalized Mallows criterion
/// `||y - omega_hat w||^2 + 2 sigma^2 w'kappa + lambda w'w`.
pub fn mallows_value<T: Real>(
    w: &WeightVector<T>,
    cm: &CriterionMatrices<T>,
    y: &DVector<T>,
    lambda: T,
) -> Result<T> {
    check_weight_dims(w, cm, y)?;
    check_lambda(lambda)?;
    let resid = y - &cm.omega_hat * w.as_vector();
    let penalty = T::of(2.0) * cm.sigma2_hat * w.as_vector().dot(&cm.kappa_vec());
    Ok(resid.norm_squared() + penalty + lambda * w.as_vector().norm_squared())
}

/// Penalized jackknife criterion `||y - omega_bar w||^2 + lambda w'w`.
pub fn jackknife_value<T: Real>(
    w: &WeightVector<T>,
    cm: &CriterionMatrices<T>,
    y: &DVector<T>,
    lambda: T,
) -> Result<T> {
    check_weight_dims(w, cm, y)?;
    check_lambda(lambda)?;
    let resid = y - &cm.omega_bar * w.as_vector();
    Ok(resid.norm_squared() + lambda * w.as_vector().norm_squared())
}

/// Eigendecomposition of a Gram matrix, reused across a whole ridge path.
///
/// Solves `(G + lambda I) w = b` for any `lambda >= 0` without refactorizing.
#[derive(Debug, Clone)]
pub struct RidgeSolver<T: Real> {
    eigenvalues: DVector<T>,
    eigenvectors: DMatrix<T>,
}

impl<T: Real> RidgeSolver<T> {
    pub fn new(gram: DMatrix<T>) -> Result<Self> {
        if gram.nrows() != gram.ncols() {
            return Err(Error::DimensionMismatch {
                what: "gram matrix",
                expected: gram.nrows(),
                got: gram.ncols(),
            });
        }
        let eig = gram.symmetric_eigen();
        Ok(Self { eigenvalues: eig.eigenvalues, eigenvectors: eig.eigenvectors })
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues_sorted(&self) -> Vec<T> {
        let mut v: Vec<T> = self.eigenvalues.iter().cloned().collect();
        v.sort_by(|a, b| a.partial_cmp(b).expect("finite eigenvalues"));
        v
    }

    pub fn rcond_at(&self, lambda: T) -> T {
        let mut lo = T::of(f64::INFINITY);
        let mut hi = T::zero();
        for &z in self.eigenvalues.iter() {
            let s = z + lambda;
            lo = lo.min(s);
            hi = hi.max(s);
        }
        if hi <= T::zero() {
            T::zero()
        } else {
            (lo / hi).max(T::zero())
        }
    }

    /// `(G + lambda I)^{-1} b` through the eigenbasis.
    pub fn solve(&self, lambda: T, b: &DVector<T>) -> Result<DVector<T>> {
        check_lambda(lambda)?;
        if lambda == T::zero() {
            let rcond = self.rcond_at(T::zero());
            if rcond < T::of(COND_FLOOR) {
                return Err(Error::SingularGram { rcond: rcond.as_f64() });
            }
        }
        let mut coeffs = self.eigenvectors.transpose() * b;
        for (i, c) in coeffs.iter_mut().enumerate() {
            *c /= self.eigenvalues[i] + lambda;
        }
        Ok(&self.eigenvectors * coeffs)
    }
}

/// Right-hand side `omega_hat' y - sigma^2 kappa` of the Mallows normal equations.
pub fn mallows_rhs<T: Real>(cm: &CriterionMatrices<T>, y: &DVector<T>) -> DVector<T> {
    cm.omega_hat.transpose() * y - cm.kappa_vec() * cm.sigma2_hat
}

/// Closed-form ridge-Mallows weights
/// `(omega_hat'omega_hat + lambda I)^{-1} (omega_hat'y - sigma^2 kappa)`.
pub fn rmma_weights<T: Real>(
    cm: &CriterionMatrices<T>,
    y: &DVector<T>,
    lambda: T,
) -> Result<WeightVector<T>> {
    if y.len() != cm.n() {
        return Err(Error::DimensionMismatch { what: "response length", expected: cm.n(), got: y.len() });
    }
    let solver = RidgeSolver::new(cm.omega_hat.transpose() * &cm.omega_hat)?;
    WeightVector::unrestricted(solver.solve(lambda, &mallows_rhs(cm, y))?)
}

/// Closed-form ridge-jackknife weights
/// `(omega_bar'omega_bar + lambda I)^{-1} omega_bar'y`.
pub fn rjma_weights<T: Real>(
    cm: &CriterionMatrices<T>,
    y: &DVector<T>,
    lambda: T,
) -> Result<WeightVector<T>> {
    if y.len() != cm.n() {
        return Err(Error::DimensionMismatch { what: "response length", expected: cm.n(), got: y.len() });
    }
    let solver = RidgeSolver::new(cm.omega_bar.transpose() * &cm.omega_bar)?;
    WeightVector::unrestricted(solver.solve(lambda, &(cm.omega_bar.transpose() * y))?)
}

/// Simplex-constrained Mallows averaging.
pub fn mma_weights<T: Real>(cm: &CriterionMatrices<T>, y: &DVector<T>) -> Result<WeightVector<T>> {
    let gram = cm.omega_hat.transpose() * &cm.omega_hat;
    simplex_qp(&gram, &mallows_rhs(cm, y))
}

/// Simplex-constrained jackknife averaging.
pub fn jma_weights<T: Real>(cm: &CriterionMatrices<T>, y: &DVector<T>) -> Result<WeightVector<T>> {
    let gram = cm.omega_bar.transpose() * &cm.omega_bar;
    simplex_qp(&gram, &(cm.omega_bar.transpose() * y))
}

/// How close to zero the GCV denominator may get before erroring.
const GCV_DENOM_FLOOR: f64 = 1e-6;

/// Generalized-cross-validation averaging:
/// minimize `n^{-1}||y - omega_hat w||^2 / (1 - w'kappa/n)^2` on the simplex.
///
/// The objective is a smooth rational function, so this uses monotone
/// projected gradient descent with backtracking instead of the accelerated
/// scheme reserved for quadratics.
pub fn gm_weights<T: Real>(cm: &CriterionMatrices<T>, y: &DVector<T>) -> Result<WeightVector<T>> {
    let m_count = cm.n_models();
    let n = T::of(cm.n() as f64);
    let kappa = cm.kappa_vec();
    let gram = cm.omega_hat.transpose() * &cm.omega_hat;
    let cross = cm.omega_hat.transpose() * y;
    let yy = y.norm_squared();
    let denom_floor = T::of(GCV_DENOM_FLOOR);

    let eval = |w: &DVector<T>| -> Result<(T, DVector<T>)> {
        let gw = &gram * w;
        let a = (yy - T::of(2.0) * cross.dot(w) + w.dot(&gw)) / n;
        let b = T::one() - kappa.dot(w) / n;
        if b <= denom_floor {
            return Err(Error::GcvDenominatorVanishes { value: b.as_f64() });
        }
        let value = a / (b * b);
        // grad = grad_A / B^2 + 2 A kappa / (n B^3)
        let grad_a = (gw - &cross) * (T::of(2.0) / n);
        let grad = grad_a / (b * b) + &kappa * (T::of(2.0) * a / (n * b * b * b));
        Ok((value, grad))
    };

    if m_count == 1 {
        let w = DVector::from_element(1, T::one());
        eval(&w)?;
        return WeightVector::simplex(w);
    }

    let mut w = DVector::from_element(m_count, T::one() / T::of(m_count as f64));
    let (mut value, mut grad) = eval(&w)?;
    // Initial step from the curvature of the quadratic numerator.
    let lmax = RidgeSolver::new(gram.clone())?
        .eigenvalues_sorted()
        .last()
        .cloned()
        .unwrap_or(T::one());
    let mut step = if lmax > T::zero() { n / (T::of(2.0) * lmax) } else { T::one() };

    let max_iter = 100_000;
    let tol = T::of(1e-8);
    let mut residual = simplex_kkt_residual_from_grad(&grad, &w);
    for iters in 0..max_iter {
        if residual <= tol * T::one().max(value.abs()) {
            return WeightVector::simplex(w);
        }
        // Backtrack until the quadratic upper bound around w holds.
        let mut accepted = false;
        for _ in 0..60 {
            let cand = simplex_project(&(&w - &grad * step));
            let diff = &cand - &w;
            let (cand_value, cand_grad) = eval(&cand)?;
            let bound = value + grad.dot(&diff) + diff.norm_squared() / (T::of(2.0) * step);
            if cand_value <= bound {
                w = cand;
                value = cand_value;
                grad = cand_grad;
                accepted = true;
                break;
            }
            step *= T::of(0.5);
        }
        residual = simplex_kkt_residual_from_grad(&grad, &w);
        if !accepted {
            // Step size collapsed; accept only if first-order conditions hold.
            if residual <= T::of(1e-6) * T::one().max(value.abs()) {
                return WeightVector::simplex(w);
            }
            return Err(Error::NonConvergence { iters, residual: residual.as_f64() });
        }
        // Allow the step to grow back slowly.
        step *= T::of(1.25);
    }
    if residual <= T::of(1e-6) * T::one().max(value.abs()) {
        return WeightVector::simplex(w);
    }
    Err(Error::NonConvergence { iters: max_iter, residual: residual.as_f64() })
}

/// KKT residual on the simplex for a precomputed gradient.
fn simplex_kkt_residual_from_grad<T: Real>(grad: &DVector<T>, w: &DVector<T>) -> T {
    qp::kkt_residual_from_grad(grad, w)
}

/// Per-model AIC, BIC, or Mallows-Cp scores.
///
/// `sigma2` enters only the Cp form; pass the criterion matrices' estimate so
/// Cp and Mallows averaging see the same variance.
pub fn info_scores<T: Real>(
    ds: &Dataset<T>,
    specs: &[ModelSpec],
    fits: &[FitBundle<T>],
    which: InfoCriterion,
    sigma2: T,
) -> Result<ScoreVector<T>> {
    if specs.len() != fits.len() {
        return Err(Error::DimensionMismatch {
            what: "fits per spec",
            expected: specs.len(),
            got: fits.len(),
        });
    }
    let n = ds.n();
    let n_t = T::of(n as f64);
    let mut scores = Vec::with_capacity(specs.len());
    for (m, (spec, fit)) in specs.iter().zip(fits).enumerate() {
        if n <= spec.k_m() {
            return Err(Error::Invalid(format!(
                "information scores need n > k_m (model {m} has k={} with n={n})",
                spec.k_m()
            )));
        }
        let rss = (ds.y() - &fit.fitted).norm_squared();
        let k_t = T::of(spec.k_m() as f64);
        let score = match which {
            InfoCriterion::Aic | InfoCriterion::Bic => {
                if rss <= T::zero() {
                    return Err(Error::DegenerateRss { model: m });
                }
                let base = n_t * (rss / n_t).ln();
                match which {
                    InfoCriterion::Aic => base + T::of(2.0) * k_t,
                    _ => base + k_t * n_t.ln(),
                }
            }
            InfoCriterion::Cp => rss + T::of(2.0) * sigma2 * k_t,
        };
        scores.push(score);
    }
    Ok(ScoreVector { scores })
}

/// Exponential smoothing of information scores: `w_m ∝ exp(-s_m / 2)`,
/// stabilized by shifting scores so the minimum maps to `exp(0)`.
pub fn smoothed_weights<T: Real>(s: &ScoreVector<T>) -> Result<WeightVector<T>> {
    if s.scores.is_empty() {
        return Err(Error::Invalid("empty score vector".into()));
    }
    if s.scores.iter().any(|v| !v.is_finite_scalar()) {
        return Err(Error::Invalid("non-finite score".into()));
    }
    let min = s.scores.iter().cloned().fold(T::of(f64::INFINITY), |a, b| a.min(b));
    let half = T::of(0.5);
    let raw: Vec<T> = s.scores.iter().map(|&v| (-half * (v - min)).exp()).collect();
    let total: T = raw.iter().cloned().fold(T::zero(), |a, b| a + b);
    let w = DVector::from_iterator(raw.len(), raw.into_iter().map(|v| v / total));
    WeightVector::simplex(w)
}

/// Single-model selection: the vertex at the smallest score, ties going to
/// the smallest model index.
pub fn select_model<T: Real>(s: &ScoreVector<T>) -> Result<WeightVector<T>> {
    if s.scores.is_empty() {
        return Err(Error::Invalid("empty score vector".into()));
    }
    if s.scores.iter().any(|v| !v.is_finite_scalar()) {
        return Err(Error::Invalid("non-finite score".into()));
    }
    let mut best = 0;
    for (m, &v) in s.scores.iter().enumerate() {
        if v < s.scores[best] {
            best = m;
        }
    }
    WeightVector::vertex(best, s.scores.len())
}

/// Dispatch a configured method to its weight computation.
///
/// RM and RJ here are the fixed-penalty closed forms; the cross-validated
/// tuning average lives in the `tuning` module.
pub fn compute_weights<T: Real>(
    cfg: &CriterionConfig<T>,
    ds: &Dataset<T>,
    specs: &[ModelSpec],
    fits: &[FitBundle<T>],
    cm: &CriterionMatrices<T>,
) -> Result<WeightVector<T>> {
    match cfg.method {
        Method::Rmma => rmma_weights(cm, ds.y(), cfg.lambda),
        Method::Rjma => rjma_weights(cm, ds.y(), cfg.lambda),
        Method::Mma => mma_weights(cm, ds.y()),
        Method::Jma => jma_weights(cm, ds.y()),
        Method::Gm => gm_weights(cm, ds.y()),
        Method::Saic => {
            smoothed_weights(&info_scores(ds, specs, fits, InfoCriterion::Aic, cm.sigma2_hat)?)
        }
        Method::Sbic => {
            smoothed_weights(&info_scores(ds, specs, fits, InfoCriterion::Bic, cm.sigma2_hat)?)
        }
        Method::Aic => {
            select_model(&info_scores(ds, specs, fits, InfoCriterion::Aic, cm.sigma2_hat)?)
        }
        Method::Bic => {
            select_model(&info_scores(ds, specs, fits, InfoCriterion::Bic, cm.sigma2_hat)?)
        }
        Method::Cp => {
            select_model(&info_scores(ds, specs, fits, InfoCriterion::Cp, cm.sigma2_hat)?)
        }
    }
}
