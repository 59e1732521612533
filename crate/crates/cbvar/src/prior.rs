//! Natural-conjugate Minnesota prior with optional dummy observations,
//! plus marginal-likelihood selection of the overall tightness.
//!
//! The prior is normal-inverse-Wishart: A | Sigma ~ N(A_mean, Sigma (x) V)
//! columnwise, Sigma ~ IW(df, S). Coefficients are centered on a random
//! walk; prior variances shrink with the lag at rate 1/l^2 and are scaled
//! by residual variances of univariate AR fits. Sum-of-coefficients and
//! single-unit-root beliefs enter as dummy observations that are folded
//! into the conjugate form before estimation.

use nalgebra::{DMatrix, DVector};

use crate::dataio::Dataset;
use crate::design::{lag_column, LearningRate, VarDesign};
use crate::error::{Error, Result};
use crate::linalg::{chol_strict, symmetrized};

/// Default prior variance of intercepts (effectively uninformative).
pub const INTERCEPT_VARIANCE: f64 = 1e6;

/// Conjugate prior for the stacked VAR regression.
#[derive(Clone, Debug)]
pub struct PriorSpec {
    /// K x M prior coefficient mean.
    pub a_mean: DMatrix<f64>,
    /// K x K prior coefficient precision (inverse of the column
    /// covariance); diagonal until dummies are folded in.
    pub v_inv: DMatrix<f64>,
    /// M x M inverse-Wishart scale.
    pub s_scale: DMatrix<f64>,
    /// Prior degrees of freedom.
    pub v_df: f64,
    /// Overall tightness the lag variances were built with.
    pub lambda: f64,
    /// Sum-of-coefficients tightness (infinite = off).
    pub kappa: f64,
    /// Single-unit-root tightness (infinite = off).
    pub xi: f64,
    /// Residual scales sigma_hat_j from univariate AR fits.
    pub sigma_hat: DVector<f64>,
    /// Dummy observations not yet folded in (0 rows once folded).
    pub dummy_y: DMatrix<f64>,
    pub dummy_x: DMatrix<f64>,
}

impl PriorSpec {
    pub fn n_vars(&self) -> usize {
        self.a_mean.ncols()
    }

    pub fn n_regressors(&self) -> usize {
        self.a_mean.nrows()
    }

    pub fn has_dummies(&self) -> bool {
        self.dummy_y.nrows() > 0
    }

    pub fn validate(&self) -> Result<()> {
        let (k, m) = (self.n_regressors(), self.n_vars());
        if self.v_inv.nrows() != k || self.v_inv.ncols() != k {
            return Err(Error::config("prior precision shape mismatch".to_string()));
        }
        if self.s_scale.nrows() != m || self.s_scale.ncols() != m {
            return Err(Error::config("prior scale shape mismatch".to_string()));
        }
        if self.sigma_hat.len() != m {
            return Err(Error::config("sigma_hat length mismatch".to_string()));
        }
        if !(self.v_df.is_finite() && self.v_df >= m as f64 + 2.0) {
            return Err(Error::config(format!(
                "prior degrees of freedom must be at least M+2, got {}",
                self.v_df
            )));
        }
        if self.dummy_y.nrows() != self.dummy_x.nrows() {
            return Err(Error::config("dummy blocks disagree on row count".to_string()));
        }
        if self.has_dummies() && (self.dummy_y.ncols() != m || self.dummy_x.ncols() != k) {
            return Err(Error::config("dummy blocks disagree with prior shape".to_string()));
        }
        Ok(())
    }
}

/// How a dummy-observation tightness is set when building priors.
#[derive(Clone, Copy, Debug)]
pub enum TightnessRule {
    /// Scale with the overall tightness: value = factor * lambda.
    ScaleLambda(f64),
    /// Fixed value (infinite disables the block).
    Fixed(f64),
    /// No dummy observations of this kind.
    Off,
}

impl TightnessRule {
    fn resolve(&self, lambda: f64) -> f64 {
        match self {
            TightnessRule::ScaleLambda(c) => c * lambda,
            TightnessRule::Fixed(v) => *v,
            TightnessRule::Off => f64::INFINITY,
        }
    }
}

/// Data-derived ingredients of the Minnesota prior, reusable across
/// tightness values so that grid searches do not refit AR regressions.
#[derive(Clone, Debug)]
pub struct PriorBuilder {
    pub sigma_hat: DVector<f64>,
    /// Per-variable mean of the first p observations (dummy centers).
    pub mu_bar: DVector<f64>,
    pub p: usize,
    pub m: usize,
    pub intercept_variance: f64,
    /// Default: kappa = 10 * lambda.
    pub kappa: TightnessRule,
    /// Default: xi = 10 * lambda.
    pub xi: TightnessRule,
    pub prior_df: f64,
}

impl PriorBuilder {
    /// Estimate the scale ingredients from data: sigma_hat_j is the
    /// residual standard error of a univariate AR(p) fit with intercept.
    pub fn from_data(data: &Dataset, p: usize) -> Result<Self> {
        if p == 0 {
            return Err(Error::config("lag order must be at least 1".to_string()));
        }
        let m = data.n_vars();
        if data.n_rows() < 2 * p + 3 {
            return Err(Error::data(format!(
                "need at least {} rows to scale a lag-{p} prior, got {}",
                2 * p + 3,
                data.n_rows()
            )));
        }
        data.validate()?;
        let mut sigma_hat = DVector::zeros(m);
        for j in 0..m {
            let series: Vec<f64> = data.values.column(j).iter().cloned().collect();
            sigma_hat[j] = ar_residual_scale(&series, p).map_err(|e| {
                Error::data(format!("cannot scale prior for {}: {e}", data.names[j]))
            })?;
        }
        let mut mu_bar = DVector::zeros(m);
        for j in 0..m {
            mu_bar[j] = (0..p).map(|t| data.values[(t, j)]).sum::<f64>() / p as f64;
        }
        Ok(PriorBuilder {
            sigma_hat,
            mu_bar,
            p,
            m,
            intercept_variance: INTERCEPT_VARIANCE,
            kappa: TightnessRule::ScaleLambda(10.0),
            xi: TightnessRule::ScaleLambda(10.0),
            prior_df: m as f64 + 2.0,
        })
    }

    /// Assemble the prior at overall tightness `lambda`.
    pub fn build(&self, lambda: f64) -> Result<PriorSpec> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::config(format!("lambda must be finite and positive, got {lambda}")));
        }
        let (m, p) = (self.m, self.p);
        let k = 1 + p * m;

        let mut a_mean = DMatrix::zeros(k, m);
        for j in 0..m {
            a_mean[(lag_column(m, 1, j), j)] = 1.0;
        }

        let mut v_inv = DMatrix::zeros(k, k);
        v_inv[(0, 0)] = 1.0 / self.intercept_variance;
        for l in 1..=p {
            for j in 0..m {
                let var = lambda * lambda / ((l * l) as f64 * self.sigma_hat[j].powi(2));
                v_inv[(lag_column(m, l, j), lag_column(m, l, j))] = 1.0 / var;
            }
        }

        let s_scale = DMatrix::from_diagonal(&self.sigma_hat.map(|s| s * s));

        let kappa = self.kappa.resolve(lambda);
        let xi = self.xi.resolve(lambda);
        if kappa <= 0.0 || xi <= 0.0 || kappa.is_nan() || xi.is_nan() {
            return Err(Error::config(format!(
                "dummy tightness must be positive, got kappa={kappa}, xi={xi}"
            )));
        }

        let mut rows: Vec<(DVector<f64>, DVector<f64>)> = Vec::new();
        if kappa.is_finite() {
            // sum-of-coefficients: one row per variable, pushing the sum
            // of own-lag coefficients toward 1
            for j in 0..m {
                let mut y = DVector::zeros(m);
                let mut x = DVector::zeros(k);
                let c = self.mu_bar[j] / kappa;
                y[j] = c;
                for l in 1..=p {
                    x[lag_column(m, l, j)] = c;
                }
                rows.push((y, x));
            }
        }
        if xi.is_finite() {
            // single-unit-root: one row tying the intercept to the level
            // implied by no-change dynamics
            let mut y = DVector::zeros(m);
            let mut x = DVector::zeros(k);
            x[0] = 1.0 / xi;
            for j in 0..m {
                y[j] = self.mu_bar[j] / xi;
                for l in 1..=p {
                    x[lag_column(m, l, j)] = self.mu_bar[j] / xi;
                }
            }
            rows.push((y, x));
        }

        let t_d = rows.len();
        let mut dummy_y = DMatrix::zeros(t_d, m);
        let mut dummy_x = DMatrix::zeros(t_d, k);
        for (r, (y, x)) in rows.into_iter().enumerate() {
            dummy_y.set_row(r, &y.transpose());
            dummy_x.set_row(r, &x.transpose());
        }

        let prior = PriorSpec {
            a_mean,
            v_inv,
            s_scale,
            v_df: self.prior_df,
            lambda,
            kappa,
            xi,
            sigma_hat: self.sigma_hat.clone(),
            dummy_y,
            dummy_x,
        };
        prior.validate()?;
        Ok(prior)
    }
}

/// Minnesota prior for a VAR(p) on `data` at tightness `lambda`, with
/// dummy-observation tightnesses `kappa` (sum-of-coefficients) and `xi`
/// (single-unit-root); pass infinity to disable either block.
pub fn minnesota_prior(
    data: &Dataset,
    p: usize,
    lambda: f64,
    kappa: f64,
    xi: f64,
) -> Result<PriorSpec> {
    let mut builder = PriorBuilder::from_data(data, p)?;
    builder.kappa = TightnessRule::Fixed(kappa);
    builder.xi = TightnessRule::Fixed(xi);
    builder.build(lambda)
}

/// Fold dummy observations into the conjugate prior. The returned prior
/// has no dummy rows and yields exactly the posterior one would get by
/// stacking the dummies on top of the data with unit weight (they are
/// never tempered). Degrees of freedom increase by the number of rows.
pub fn apply_dummies(design: &VarDesign, prior: &PriorSpec) -> Result<PriorSpec> {
    prior.validate()?;
    if prior.n_regressors() != design.n_regressors() || prior.n_vars() != design.n_vars() {
        return Err(Error::config(format!(
            "prior ({} x {}) does not match design ({} x {})",
            prior.n_regressors(),
            prior.n_vars(),
            design.n_regressors(),
            design.n_vars()
        )));
    }
    if !prior.has_dummies() {
        return Ok(prior.clone());
    }
    let t_d = prior.dummy_y.nrows();

    let v_inv_new = symmetrized(&(&prior.v_inv + prior.dummy_x.transpose() * &prior.dummy_x));
    let rhs = &prior.v_inv * &prior.a_mean + prior.dummy_x.transpose() * &prior.dummy_y;
    let chol = chol_strict(&v_inv_new, "dummy-augmented prior precision")?;
    let a_new = chol.solve(&rhs);

    // complete the square on the scale matrix
    let s_new = symmetrized(
        &(&prior.s_scale
            + prior.dummy_y.transpose() * &prior.dummy_y
            + prior.a_mean.transpose() * (&prior.v_inv * &prior.a_mean)
            - a_new.transpose() * &rhs),
    );

    Ok(PriorSpec {
        a_mean: a_new,
        v_inv: v_inv_new,
        s_scale: s_new,
        v_df: prior.v_df + t_d as f64,
        lambda: prior.lambda,
        kappa: prior.kappa,
        xi: prior.xi,
        sigma_hat: prior.sigma_hat.clone(),
        dummy_y: DMatrix::zeros(0, prior.n_vars()),
        dummy_x: DMatrix::zeros(0, prior.n_regressors()),
    })
}

/// Log-spaced tightness grid covering very tight to loose priors.
pub fn default_lambda_grid() -> Vec<f64> {
    vec![0.01, 0.025, 0.05, 0.1, 0.2, 0.4, 0.8, 1.6]
}

/// Pick the tightness maximizing the (tempered) marginal likelihood over
/// a grid. Returns the winner and the successful (lambda, log-ml) pairs;
/// ties go to the larger lambda. Errors only if every grid point fails.
pub fn optimize_lambda(
    design: &VarDesign,
    rate: &LearningRate,
    grid: &[f64],
    builder: &PriorBuilder,
) -> Result<(f64, Vec<(f64, f64)>)> {
    if grid.is_empty() {
        return Err(Error::config("lambda grid is empty".to_string()));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::config("lambda grid must be strictly increasing".to_string()));
    }
    let mut curve = Vec::with_capacity(grid.len());
    let mut failures = Vec::new();
    for &lambda in grid {
        let outcome = builder
            .build(lambda)
            .and_then(|prior| crate::posterior::log_marginal_likelihood(design, &prior, rate));
        match outcome {
            Ok(lml) if lml.is_finite() => curve.push((lambda, lml)),
            Ok(lml) => failures.push(format!("lambda={lambda}: non-finite log-ml {lml}")),
            Err(e) => failures.push(format!("lambda={lambda}: {e}")),
        }
    }
    if curve.is_empty() {
        return Err(Error::numeric(format!(
            "marginal likelihood failed at every lambda: {}",
            failures.join("; ")
        )));
    }
    let mut best = curve[0];
    for &(lambda, lml) in &curve[1..] {
        if lml >= best.1 {
            best = (lambda, lml);
        }
    }
    Ok((best.0, curve))
}

/// Residual standard error of a univariate AR(p) with intercept, fit by
/// least squares. This is the scale statistic the prior variances use.
pub fn ar_residual_scale(x: &[f64], p: usize) -> Result<f64> {
    let t = x.len();
    let k = p + 1;
    if t < p + k + 1 {
        return Err(Error::data(format!(
            "series too short for AR({p}) scale: {t} observations"
        )));
    }
    let n = t - p;
    let mut design = DMatrix::zeros(n, k);
    let mut y = DVector::zeros(n);
    for i in 0..n {
        design[(i, 0)] = 1.0;
        for l in 1..=p {
            design[(i, l)] = x[i + p - l];
        }
        y[i] = x[i + p];
    }
    let xtx = symmetrized(&(design.transpose() * &design));
    let xty = design.transpose() * &y;
    let chol = nalgebra::Cholesky::new(xtx).ok_or_else(|| {
        Error::data("degenerate series: AR design is collinear (constant data?)".to_string())
    })?;
    let beta = chol.solve(&xty);
    let resid = &y - &design * beta;
    let dof = n - k;
    let rss: f64 = resid.iter().map(|r| r * r).sum();
    let sigma = (rss / dof as f64).sqrt();
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::data(format!(
            "degenerate series: AR({p}) residual scale is {sigma}"
        )));
    }
    Ok(sigma)
}
