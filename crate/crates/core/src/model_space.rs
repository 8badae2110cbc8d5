//! Candidate models and per-model least-squares machinery.
//!
//! A candidate model is a subset of the design columns. For each candidate we
//! fit ordinary least squares by thin QR, and collect the artifacts every
//! weight-selection criterion consumes: coefficients, fitted values, hat
//! diagonals, and closed-form leave-one-out fitted values. Stacking the
//! per-model fitted values (respectively leave-one-out fitted values)
//! columnwise gives the two n-by-M criterion matrices used throughout the
//! crate, conventionally written `omega_hat` and `omega_bar`.

use crate::criteria::WeightVector;
use crate::error::{Error, Result};
use crate::scalar::Real;
use nalgebra::{DMatrix, DVector};

/// Default floor on the reciprocal condition number of `X_m'X_m`.
pub const COND_FLOOR: f64 = 1e-12;

/// Leverages at or above `1 - LEVERAGE_TOL` are treated as overflow.
pub const LEVERAGE_TOL: f64 = 1e-10;

/// A regression sample: design matrix `x` (n rows, k columns) and response `y`.
///
/// Column 0 may be an all-ones intercept; nothing here assumes it.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T: Real> {
    x: DMatrix<T>,
    y: DVector<T>,
}

impl<T: Real> Dataset<T> {
    pub fn new(x: DMatrix<T>, y: DVector<T>) -> Result<Self> {
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(Error::Invalid("dataset needs n >= 1 and k >= 1".into()));
        }
        if x.nrows() != y.len() {
            return Err(Error::DimensionMismatch {
                what: "dataset rows",
                expected: x.nrows(),
                got: y.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite_scalar()) || y.iter().any(|v| !v.is_finite_scalar()) {
            return Err(Error::Invalid("dataset contains non-finite values".into()));
        }
        Ok(Self { x, y })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    /// Number of design columns.
    pub fn k(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &DMatrix<T> {
        &self.x
    }

    pub fn y(&self) -> &DVector<T> {
        &self.y
    }

    /// The sub-dataset with the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let x = DMatrix::from_fn(rows.len(), self.k(), |i, j| self.x[(rows[i], j)]);
        let y = DVector::from_fn(rows.len(), |i, _| self.y[rows[i]]);
        Self { x, y }
    }
}

/// A candidate model: the design columns it uses, in user order (0-based).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelSpec {
    cols: Vec<usize>,
}

impl ModelSpec {
    pub fn new(cols: Vec<usize>) -> Result<Self> {
        if cols.is_empty() {
            return Err(Error::Invalid("model spec needs at least one column".into()));
        }
        let mut seen = cols.clone();
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Invalid("model spec has duplicate columns".into()));
        }
        Ok(Self { cols })
    }

    /// The first `m` columns, the usual nested family.
    pub fn leading(m: usize) -> Result<Self> {
        Self::new((0..m).collect())
    }

    pub fn cols(&self) -> &[usize] {
        &self.cols
    }

    /// Number of covariates in the model.
    pub fn k_m(&self) -> usize {
        self.cols.len()
    }

    fn check_range(&self, k: usize) -> Result<()> {
        match self.cols.iter().find(|&&c| c >= k) {
            Some(&c) => Err(Error::Invalid(format!(
                "model spec column {c} out of range for {k}-column design"
            ))),
            None => Ok(()),
        }
    }

    /// Design submatrix `X_m` for this model.
    pub fn design<T: Real>(&self, ds: &Dataset<T>) -> Result<DMatrix<T>> {
        self.check_range(ds.k())?;
        Ok(DMatrix::from_fn(ds.n(), self.k_m(), |i, j| {
            ds.x()[(i, self.cols[j])]
        }))
    }

    /// Restriction of a full covariate row to this model's columns.
    pub fn restrict<T: Real>(&self, x_row: &DVector<T>) -> Result<DVector<T>> {
        self.check_range(x_row.len())?;
        Ok(DVector::from_fn(self.k_m(), |j, _| x_row[self.cols[j]]))
    }
}

/// Per-model least-squares artifacts.
#[derive(Debug, Clone)]
pub struct FitBundle<T: Real> {
    /// Coefficient estimates, aligned with the spec's column order.
    pub theta_hat: DVector<T>,
    /// In-sample fitted values `X_m theta_hat`.
    pub fitted: DVector<T>,
    /// Hat-matrix diagonal, each entry in `[0, 1)`.
    pub hat_diag: DVector<T>,
    /// Leave-one-out fitted values `y_i - (1 - h_ii)^{-1} (y_i - fitted_i)`.
    pub loo_fitted: DVector<T>,
    /// Eigenvalues of `X_m'X_m` in ascending order, kept for conditioning
    /// diagnostics (the solve itself goes through QR).
    pub gram_eigenvalues: DVector<T>,
}

impl<T: Real> FitBundle<T> {
    /// Reciprocal condition number of `X_m'X_m`.
    pub fn rcond(&self) -> T {
        let lo = self.gram_eigenvalues[0];
        let hi = self.gram_eigenvalues[self.gram_eigenvalues.len() - 1];
        if hi <= T::zero() {
            T::zero()
        } else {
            (lo / hi).max(T::zero())
        }
    }

    /// Prediction at a full covariate row (restricted to the model's columns).
    pub fn predict(&self, spec: &ModelSpec, x_row: &DVector<T>) -> Result<T> {
        Ok(spec.restrict(x_row)?.dot(&self.theta_hat))
    }
}

/// How the error variance entering Mallows-type penalties is obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sigma2Policy<T> {
    /// Residual mean square of the candidate with the most covariates
    /// (ties broken by the last such spec in user order).
    LargestModel,
    Known(T),
}

/// The two n-by-M criterion matrices plus the model sizes and error variance.
#[derive(Debug, Clone)]
pub struct CriterionMatrices<T: Real> {
    /// Column m holds model m's fitted values.
    pub omega_hat: DMatrix<T>,
    /// Column m holds model m's leave-one-out fitted values.
    pub omega_bar: DMatrix<T>,
    /// Covariate counts `k_1..k_M`.
    pub kappa: Vec<usize>,
    pub sigma2_hat: T,
}

impl<T: Real> CriterionMatrices<T> {
    pub fn n(&self) -> usize {
        self.omega_hat.nrows()
    }

    pub fn n_models(&self) -> usize {
        self.omega_hat.ncols()
    }

    /// `kappa` as a scalar vector, for criterion arithmetic.
    pub fn kappa_vec(&self) -> DVector<T> {
        DVector::from_iterator(self.kappa.len(), self.kappa.iter().map(|&k| T::of(k as f64)))
    }
}

/// Fit one candidate model by thin QR.
pub fn fit_ols<T: Real>(ds: &Dataset<T>, spec: &ModelSpec) -> Result<FitBundle<T>> {
    fit_ols_with_floor(ds, spec, T::of(COND_FLOOR))
}

/// As [`fit_ols`] with an explicit reciprocal-condition-number floor.
pub fn fit_ols_with_floor<T: Real>(
    ds: &Dataset<T>,
    spec: &ModelSpec,
    cond_floor: T,
) -> Result<FitBundle<T>> {
    let n = ds.n();
    let k = spec.k_m();
    if k > n {
        return Err(Error::Invalid(format!(
            "model with {k} covariates cannot be fit on {n} observations"
        )));
    }
    let xm = spec.design(ds)?;

    let gram = xm.transpose() * &xm;
    let mut eigs = gram.symmetric_eigen().eigenvalues;
    eigs.as_mut_slice()
        .sort_by(|a, b| a.partial_cmp(b).expect("finite eigenvalues"));
    let hi = eigs[k - 1];
    let rcond = if hi <= T::zero() { T::zero() } else { (eigs[0] / hi).max(T::zero()) };
    if rcond < cond_floor {
        return Err(Error::SingularDesign { model: 0, rcond: rcond.as_f64() });
    }

    let qr = xm.clone().qr();
    let q = qr.q();
    let qty = q.transpose() * ds.y();
    let theta_hat = qr
        .r()
        .solve_upper_triangular(&qty)
        .ok_or(Error::SingularDesign { model: 0, rcond: rcond.as_f64() })?;

    let fitted = &xm * &theta_hat;
    let hat_diag = DVector::from_fn(n, |i, _| q.row(i).norm_squared());
    let overflow = T::of(1.0 - LEVERAGE_TOL);
    let mut loo_fitted = DVector::zeros(n);
    for i in 0..n {
        let h = hat_diag[i];
        if h >= overflow {
            return Err(Error::LeverageOverflow { model: 0, row: i, leverage: h.as_f64() });
        }
        let y_i = ds.y()[i];
        loo_fitted[i] = y_i - (y_i - fitted[i]) / (T::one() - h);
    }

    Ok(FitBundle { theta_hat, fitted, hat_diag, loo_fitted, gram_eigenvalues: eigs })
}

/// Fit every candidate; errors carry the offending model index.
pub fn fit_all<T: Real>(ds: &Dataset<T>, specs: &[ModelSpec]) -> Result<Vec<FitBundle<T>>> {
    specs
        .iter()
        .enumerate()
        .map(|(m, spec)| fit_ols(ds, spec).map_err(|e| e.with_model(m)))
        .collect()
}

/// Index of the spec with the most covariates, ties broken by the last one.
fn largest_model(specs: &[ModelSpec]) -> usize {
    let mut best = 0;
    for (m, spec) in specs.iter().enumerate() {
        if spec.k_m() >= specs[best].k_m() {
            best = m;
        }
    }
    best
}

/// Assemble the criterion matrices from already-computed fits.
pub fn build_criterion_matrices_from_fits<T: Real>(
    ds: &Dataset<T>,
    specs: &[ModelSpec],
    fits: &[FitBundle<T>],
    sigma2_policy: Sigma2Policy<T>,
) -> Result<CriterionMatrices<T>> {
    if specs.is_empty() {
        return Err(Error::Invalid("need at least one candidate model".into()));
    }
    if specs.len() != fits.len() {
        return Err(Error::DimensionMismatch {
            what: "fits per spec",
            expected: specs.len(),
            got: fits.len(),
        });
    }
    let n = ds.n();
    let m_count = specs.len();
    let omega_hat = DMatrix::from_fn(n, m_count, |i, m| fits[m].fitted[i]);
    let omega_bar = DMatrix::from_fn(n, m_count, |i, m| fits[m].loo_fitted[i]);
    let kappa: Vec<usize> = specs.iter().map(|s| s.k_m()).collect();

    let sigma2_hat = match sigma2_policy {
        Sigma2Policy::Known(v) => {
            if v <= T::zero() || !v.is_finite_scalar() {
                return Err(Error::Invalid("known sigma^2 must be positive and finite".into()));
            }
            v
        }
        Sigma2Policy::LargestModel => {
            let m = largest_model(specs);
            let k_max = specs[m].k_m();
            if n <= k_max {
                return Err(Error::DegenerateVariance { n, k_max });
            }
            let resid = ds.y() - &fits[m].fitted;
            resid.norm_squared() / T::of((n - k_max) as f64)
        }
    };

    Ok(CriterionMatrices { omega_hat, omega_bar, kappa, sigma2_hat })
}

/// Fit all candidates and assemble the criterion matrices in one step.
pub fn build_criterion_matrices<T: Real>(
    ds: &Dataset<T>,
    specs: &[ModelSpec],
    sigma2_policy: Sigma2Policy<T>,
) -> Result<CriterionMatrices<T>> {
    let fits = fit_all(ds, specs)?;
    build_criterion_matrices_from_fits(ds, specs, &fits, sigma2_policy)
}

/// Model-average prediction `sum_m w_m x_m' theta_m` at a full covariate row.
pub fn model_average_prediction<T: Real>(
    specs: &[ModelSpec],
    fits: &[FitBundle<T>],
    w: &WeightVector<T>,
    x_new: &DVector<T>,
) -> Result<T> {
    if w.len() != specs.len() {
        return Err(Error::DimensionMismatch {
            what: "weights per spec",
            expected: specs.len(),
            got: w.len(),
        });
    }
    if fits.len() != specs.len() {
        return Err(Error::DimensionMismatch {
            what: "fits per spec",
            expected: specs.len(),
            got: fits.len(),
        });
    }
    let mut acc = T::zero();
    for (m, spec) in specs.iter().enumerate() {
        acc += w.as_vector()[m] * fits[m].predict(spec, x_new)?;
    }
    Ok(acc)
}
