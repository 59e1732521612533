//! Exact tempered posterior of the conjugate VAR, its marginal
//! likelihood, and the fit/complexity statistics used for selecting the
//! coarsening level.
//!
//! With the likelihood raised to zeta, the conjugate update keeps its
//! closed form with the cross products and sample size scaled by zeta:
//! the posterior is matrix-normal-inverse-Wishart with
//!   V_bar = (zeta X'X + V_inv)^-1,
//!   A_bar = V_bar (zeta X'Y + V_inv A_mean),
//!   S_bar = zeta Y'Y + A_mean' V_inv A_mean - A_bar' V_bar^-1 A_bar + S,
//!   df    = prior df + zeta T.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::design::{LearningRate, VarDesign};
use crate::error::{Error, Result};
use crate::linalg::{chol_strict, chol_with_jitter, inverse_factor, logdet, symmetrized};
use crate::prior::{apply_dummies, PriorSpec};

/// Posterior of the stacked VAR regression under a tempered likelihood.
#[derive(Clone, Debug)]
pub struct CoarsenedPosterior {
    /// K x M posterior coefficient mean.
    pub a_bar: DMatrix<f64>,
    /// K x K posterior column covariance of the coefficients; the joint
    /// coefficient covariance is Sigma (x) V_bar and is never formed.
    pub v_bar: DMatrix<f64>,
    /// M x M posterior inverse-Wishart scale.
    pub s_bar: DMatrix<f64>,
    /// Posterior inverse-Wishart degrees of freedom (real-valued).
    pub df: f64,
    pub alpha: f64,
    pub zeta: f64,
    /// Tightness of the prior this posterior came from.
    pub lambda: f64,
    pub t_effective: usize,
    s_chol_l: DMatrix<f64>,
    coef_factor: DMatrix<f64>,
    logdet_v_bar: f64,
    logdet_s_bar: f64,
    jitter: Option<f64>,
}

impl CoarsenedPosterior {
    pub fn n_vars(&self) -> usize {
        self.a_bar.ncols()
    }

    pub fn n_regressors(&self) -> usize {
        self.a_bar.nrows()
    }

    /// Lag order implied by the K = 1 + p*M layout.
    pub fn lag_order(&self) -> Result<usize> {
        let (k, m) = (self.n_regressors(), self.n_vars());
        if k < 1 + m || (k - 1) % m != 0 {
            return Err(Error::config(format!(
                "coefficient block {k} x {m} is not an intercept plus whole lags"
            )));
        }
        Ok((k - 1) / m)
    }

    /// Posterior mean of Sigma, S_bar / (df - M - 1).
    pub fn sigma_mean(&self) -> Result<DMatrix<f64>> {
        let denom = self.df - self.n_vars() as f64 - 1.0;
        if denom <= 0.0 {
            return Err(Error::numeric(format!(
                "posterior mean of Sigma needs df > M + 1, have df = {}",
                self.df
            )));
        }
        Ok(&self.s_bar / denom)
    }

    /// Diagonal jitter that was added to keep S_bar factorizable, if any.
    pub fn jitter(&self) -> Option<f64> {
        self.jitter
    }

    /// Lower Cholesky factor of S_bar.
    pub fn s_chol_l(&self) -> &DMatrix<f64> {
        &self.s_chol_l
    }

    /// Square root of V_bar (upper triangular U with U U' = V_bar).
    pub(crate) fn coef_factor(&self) -> &DMatrix<f64> {
        &self.coef_factor
    }

    pub(crate) fn logdet_s_bar(&self) -> f64 {
        self.logdet_s_bar
    }

    /// Log determinants of (V_bar, S_bar), useful as fit diagnostics.
    pub fn log_dets(&self) -> (f64, f64) {
        (self.logdet_v_bar, self.logdet_s_bar)
    }
}

/// Result of the conjugate update on explicit sufficient statistics.
pub(crate) struct NiwFactors {
    pub a_bar: DMatrix<f64>,
    pub v_bar: DMatrix<f64>,
    pub s_bar: DMatrix<f64>,
    pub df: f64,
    pub logdet_v_bar: f64,
    pub logdet_s_bar: f64,
    pub s_chol_l: DMatrix<f64>,
    pub coef_factor: DMatrix<f64>,
    pub jitter: Option<f64>,
}

/// Conjugate normal-inverse-Wishart update from (already weighted) cross
/// products. `prior` must have no pending dummy rows.
pub(crate) fn niw_update(
    prior: &PriorSpec,
    xtx: &DMatrix<f64>,
    xty: &DMatrix<f64>,
    yty: &DMatrix<f64>,
    n_eff: f64,
) -> Result<NiwFactors> {
    debug_assert!(!prior.has_dummies());
    let precision = symmetrized(&(xtx + &prior.v_inv));
    let chol_q = chol_strict(&precision, "posterior coefficient precision")?;
    let rhs = xty + &prior.v_inv * &prior.a_mean;
    let a_bar = chol_q.solve(&rhs);
    let v_bar = symmetrized(&chol_q.inverse());
    let logdet_v_bar = -logdet(&chol_q);
    let coef_factor = inverse_factor(&chol_q);

    // complete the square: A_bar' precision A_bar = A_bar' rhs
    let mut s_bar = symmetrized(
        &(yty + prior.a_mean.transpose() * (&prior.v_inv * &prior.a_mean)
            - a_bar.transpose() * &rhs
            + &prior.s_scale),
    );
    let outcome = chol_with_jitter(&s_bar, "posterior scale matrix")?;
    if let Some(eps) = outcome.jitter {
        for i in 0..s_bar.nrows() {
            s_bar[(i, i)] += eps;
        }
    }
    let logdet_s_bar = logdet(&outcome.chol);
    Ok(NiwFactors {
        a_bar,
        v_bar,
        s_bar,
        df: prior.v_df + n_eff,
        logdet_v_bar,
        logdet_s_bar,
        s_chol_l: outcome.chol.l(),
        coef_factor,
        jitter: outcome.jitter,
    })
}

fn folded_prior(design: &VarDesign, prior: &PriorSpec) -> Result<PriorSpec> {
    // apply_dummies validates shapes and is the identity without dummies
    apply_dummies(design, prior)
}

fn check_rate(design: &VarDesign, rate: &LearningRate) -> Result<()> {
    if rate.t != design.t_effective() {
        return Err(Error::config(format!(
            "learning rate was built for T = {}, design has T = {}",
            rate.t,
            design.t_effective()
        )));
    }
    Ok(())
}

/// Exact posterior of the VAR under likelihood tempering. Dummy
/// observations still attached to the prior are folded in first, at unit
/// weight; only the data likelihood is tempered.
pub fn coarsened_posterior(
    design: &VarDesign,
    prior: &PriorSpec,
    rate: &LearningRate,
) -> Result<CoarsenedPosterior> {
    check_rate(design, rate)?;
    let prior = folded_prior(design, prior)?;
    let (xtx, xty, yty) = design.cross_products();
    let z = rate.zeta;
    let f = niw_update(&prior, &(z * xtx), &(z * xty), &(z * yty), z * rate.t as f64)?;
    Ok(CoarsenedPosterior {
        a_bar: f.a_bar,
        v_bar: f.v_bar,
        s_bar: f.s_bar,
        df: f.df,
        alpha: rate.alpha,
        zeta: rate.zeta,
        lambda: prior.lambda,
        t_effective: design.t_effective(),
        s_chol_l: f.s_chol_l,
        coef_factor: f.coef_factor,
        logdet_v_bar: f.logdet_v_bar,
        logdet_s_bar: f.logdet_s_bar,
        jitter: f.jitter,
    })
}

/// Log of the multivariate gamma function.
pub fn ln_mv_gamma(m: usize, a: f64) -> Result<f64> {
    if a <= (m as f64 - 1.0) / 2.0 {
        return Err(Error::numeric(format!(
            "multivariate gamma undefined at a = {a} for dimension {m}"
        )));
    }
    let mut s = (m * (m - 1)) as f64 / 4.0 * std::f64::consts::PI.ln();
    for j in 0..m {
        s += ln_gamma(a - j as f64 / 2.0);
    }
    Ok(s)
}

/// Log marginal likelihood of the tempered model,
/// log integral of prior x likelihood^zeta.
///
/// When the prior carries dummy observations they are folded in first, so
/// the value is the marginal likelihood of the tempered data given the
/// dummies (the dummy-only normalizing constant cancels), which is the
/// quantity to compare across tightness values.
pub fn log_marginal_likelihood(
    design: &VarDesign,
    prior: &PriorSpec,
    rate: &LearningRate,
) -> Result<f64> {
    check_rate(design, rate)?;
    let prior = folded_prior(design, prior)?;
    let (xtx, xty, yty) = design.cross_products();
    let z = rate.zeta;
    let n_eff = z * rate.t as f64;
    let f = niw_update(&prior, &(z * xtx), &(z * xty), &(z * yty), n_eff)?;

    let m = design.n_vars();
    let logdet_v_prior = -logdet(&chol_strict(&prior.v_inv, "prior coefficient precision")?);
    let prior_scale_chol = chol_with_jitter(&prior.s_scale, "prior scale matrix")?;
    let logdet_s_prior = logdet(&prior_scale_chol.chol);

    let lml = 0.5 * m as f64 * (f.logdet_v_bar - logdet_v_prior)
        - 0.5 * f.df * f.logdet_s_bar
        + 0.5 * prior.v_df * logdet_s_prior
        + ln_mv_gamma(m, 0.5 * f.df)?
        - ln_mv_gamma(m, 0.5 * prior.v_df)?
        - 0.5 * n_eff * m as f64 * std::f64::consts::PI.ln();
    if !lml.is_finite() {
        return Err(Error::numeric(format!("log marginal likelihood is {lml}")));
    }
    Ok(lml)
}

/// In-sample fit (untempered log score at the posterior mean) and
/// complexity (count of near-zero posterior mean coefficients) of a
/// fitted model; the coordinates traded off when picking alpha.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct FitComplexity {
    pub alpha: f64,
    /// Sum over the full sample of log N(y_t | A_bar' x_t, Sigma_mean).
    pub mf: f64,
    /// Number of coefficients with |mean| below tau (all K*M, intercepts
    /// included).
    pub mc: usize,
    pub tau: f64,
}

/// Evaluate fit and complexity for a fitted posterior on its design.
/// The fit term always uses the full untempered sample, whatever zeta
/// the posterior was estimated with.
pub fn fit_complexity(
    design: &VarDesign,
    posterior: &CoarsenedPosterior,
    rate: &LearningRate,
    tau: f64,
) -> Result<FitComplexity> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::config(format!("tau must be finite and positive, got {tau}")));
    }
    if posterior.n_regressors() != design.n_regressors()
        || posterior.n_vars() != design.n_vars()
    {
        return Err(Error::config("posterior does not match design shape".to_string()));
    }
    if rate.zeta != posterior.zeta {
        return Err(Error::config(format!(
            "rate zeta {} disagrees with posterior zeta {}",
            rate.zeta, posterior.zeta
        )));
    }
    let m = design.n_vars() as f64;
    let t = design.t_effective() as f64;
    let denom = posterior.df - m - 1.0;
    if denom <= 0.0 {
        return Err(Error::numeric(format!(
            "fit statistic needs df > M + 1, have df = {}",
            posterior.df
        )));
    }

    // chol(S_bar / denom) = chol(S_bar) / sqrt(denom)
    let sigma_chol_l = posterior.s_chol_l() / denom.sqrt();
    let logdet_sigma = posterior.logdet_s_bar() - m * denom.ln();

    let resid = &design.y - &design.x * &posterior.a_bar;
    let z = sigma_chol_l
        .solve_lower_triangular(&resid.transpose())
        .ok_or_else(|| Error::numeric("singular predictive scale".to_string()))?;
    let ss: f64 = z.iter().map(|v| v * v).sum();

    let mf = -0.5 * t * m * (2.0 * std::f64::consts::PI).ln() - 0.5 * t * logdet_sigma
        - 0.5 * ss;
    let mc = posterior.a_bar.iter().filter(|a| a.abs() < tau).count();
    Ok(FitComplexity { alpha: posterior.alpha, mf, mc, tau })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{Dataset, MonthDate};
    use crate::design::{build_design, learning_rate};
    use crate::prior::{minnesota_prior, PriorBuilder};
    use nalgebra::DVector;
    use rand_distr::{Distribution, Normal};

    fn noisy_dataset(t: usize, m: usize, seed: u64) -> Dataset {
        let mut rng = crate::rng::stream_rng(seed, 0);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let mut values = DMatrix::zeros(t, m);
        for j in 0..m {
            let mut prev = 0.0;
            for i in 0..t {
                prev = 0.6 * prev + 0.5 * (j as f64 + 1.0) * normal.sample(&mut rng);
                values[(i, j)] = prev + (j as f64 + 1.0);
            }
        }
        let names = (0..m).map(|j| format!("v{j}")).collect();
        Dataset::from_values(names, values, MonthDate::new(1970, 1).unwrap()).unwrap()
    }

    /// Prior with given diagonal coefficient variance, no structure.
    fn plain_prior(k: usize, m: usize, coef_var: f64) -> PriorSpec {
        PriorSpec {
            a_mean: DMatrix::zeros(k, m),
            v_inv: DMatrix::identity(k, k) / coef_var,
            s_scale: DMatrix::identity(m, m),
            v_df: m as f64 + 2.0,
            lambda: 1.0,
            kappa: f64::INFINITY,
            xi: f64::INFINITY,
            sigma_hat: DVector::from_element(m, 1.0),
            dummy_y: DMatrix::zeros(0, m),
            dummy_x: DMatrix::zeros(0, k),
        }
    }

    #[test]
    fn flat_prior_limit_recovers_least_squares() {
        let ds = noisy_dataset(160, 2, 11);
        let design = build_design(&ds, 2).unwrap();
        let rate = learning_rate(f64::INFINITY, design.t_effective()).unwrap();
        let prior = plain_prior(design.n_regressors(), 2, 1e12);
        let post = coarsened_posterior(&design, &prior, &rate).unwrap();

        // independent least squares via thin QR
        let qr = design.x.clone().qr();
        let (q, r) = (qr.q(), qr.r());
        for j in 0..2 {
            let beta = r
                .solve_upper_triangular(&(q.transpose() * design.y.column(j).into_owned()))
                .unwrap();
            for r in 0..design.n_regressors() {
                assert!(
                    (post.a_bar[(r, j)] - beta[r]).abs() < 1e-6,
                    "coef ({r},{j}): {} vs {}",
                    post.a_bar[(r, j)],
                    beta[r]
                );
            }
        }
    }

    #[test]
    fn tempering_equals_scaling_the_sufficient_statistics() {
        // naive oracle with explicit inverses, fed zeta-scaled stats
        let ds = noisy_dataset(60, 2, 12);
        let design = build_design(&ds, 1).unwrap();
        let t = design.t_effective();
        let rate = learning_rate(30.0, t).unwrap();
        let prior = minnesota_prior(&ds, 1, 0.3, f64::INFINITY, f64::INFINITY).unwrap();
        let post = coarsened_posterior(&design, &prior, &rate).unwrap();

        let z = rate.zeta;
        let v_prior = prior.v_inv.clone().try_inverse().unwrap();
        let xtx = design.x.transpose() * &design.x;
        let v_bar = (z * &xtx + &prior.v_inv).try_inverse().unwrap();
        let a_bar = &v_bar
            * (z * design.x.transpose() * &design.y + &prior.v_inv * &prior.a_mean);
        let s_bar = z * design.y.transpose() * &design.y
            + prior.a_mean.transpose() * v_prior.try_inverse().unwrap() * &prior.a_mean
            - a_bar.transpose() * v_bar.clone().try_inverse().unwrap() * &a_bar
            + &prior.s_scale;

        assert!((post.a_bar.clone() - a_bar).abs().max() < 1e-10);
        assert!((post.v_bar.clone() - v_bar).abs().max() < 1e-10);
        assert!((post.s_bar.clone() - s_bar).abs().max() < 1e-8);
        let expect_df = prior.v_df + z * t as f64;
        assert!((post.df - expect_df).abs() < 1e-12);
        assert!(post.df.fract() != 0.0, "tempered df should be fractional here");
    }

    #[test]
    fn vanishing_zeta_returns_the_prior() {
        let ds = noisy_dataset(100, 2, 13);
        let design = build_design(&ds, 2).unwrap();
        let prior = plain_prior(design.n_regressors(), 2, 1.0);
        let rate = learning_rate(1e-9, design.t_effective()).unwrap();
        let post = coarsened_posterior(&design, &prior, &rate).unwrap();
        assert!((post.a_bar.clone() - &prior.a_mean).abs().max() < 1e-6);
        let v_prior = prior.v_inv.clone().try_inverse().unwrap();
        assert!((post.v_bar.clone() - v_prior).abs().max() < 1e-6);
        assert!((post.s_bar.clone() - &prior.s_scale).abs().max() < 1e-5);
        assert!((post.df - prior.v_df).abs() < 1e-6);
    }

    #[test]
    fn lower_zeta_never_tightens_the_coefficient_covariance() {
        for seed in [21, 22, 23] {
            let ds = noisy_dataset(120, 3, seed);
            let design = build_design(&ds, 2).unwrap();
            let t = design.t_effective();
            let prior = minnesota_prior(&ds, 2, 0.2, 2.0, 2.0).unwrap();
            let loose = coarsened_posterior(&design, &prior, &learning_rate(25.0, t).unwrap())
                .unwrap();
            let tight =
                coarsened_posterior(&design, &prior, &learning_rate(f64::INFINITY, t).unwrap())
                    .unwrap();
            let diff = &loose.v_bar - &tight.v_bar;
            let min_eig = crate::linalg::min_symmetric_eigenvalue(&diff);
            assert!(min_eig >= -1e-10, "ordering violated: min eig {min_eig}");
        }
    }

    #[test]
    fn relabeling_variables_relabels_the_posterior() {
        let ds = noisy_dataset(90, 3, 14);
        let perm = [2usize, 0, 1]; // new column j comes from old perm[j]
        let mut permuted = ds.clone();
        for (j, &src) in perm.iter().enumerate() {
            for t in 0..ds.n_rows() {
                permuted.values[(t, j)] = ds.values[(t, src)];
            }
            permuted.names[j] = ds.names[src].clone();
        }
        let p = 2;
        let fit = |data: &Dataset| {
            let design = build_design(data, p).unwrap();
            let rate = learning_rate(50.0, design.t_effective()).unwrap();
            let prior = minnesota_prior(data, p, 0.2, 2.0, 2.0).unwrap();
            coarsened_posterior(&design, &prior, &rate).unwrap()
        };
        let base = fit(&ds);
        let other = fit(&permuted);

        // regressor index map: intercept fixed, lag blocks permuted
        let m = 3;
        let row_map: Vec<usize> = {
            let mut map = vec![0usize; 1 + p * m];
            for l in 1..=p {
                for j in 0..m {
                    map[crate::design::lag_column(m, l, j)] =
                        crate::design::lag_column(m, l, perm[j]);
                }
            }
            map
        };
        for j in 0..m {
            for r in 0..base.a_bar.nrows() {
                let want = base.a_bar[(row_map[r], perm[j])];
                let got = other.a_bar[(r, j)];
                assert!(
                    (want - got).abs() <= 1e-10 * want.abs().max(1.0),
                    "a_bar ({r},{j})"
                );
            }
        }
        for i in 0..m {
            for j in 0..m {
                let want = base.s_bar[(perm[i], perm[j])];
                let got = other.s_bar[(i, j)];
                assert!((want - got).abs() <= 1e-10 * want.abs().max(1.0), "s_bar ({i},{j})");
            }
        }
    }

    #[test]
    fn mv_gamma_reduces_to_known_identities() {
        let a = 3.7;
        assert!((ln_mv_gamma(1, a).unwrap() - ln_gamma(a)).abs() < 1e-12);
        // Gamma_2(a) = sqrt(pi) Gamma(a) Gamma(a - 1/2)
        let expect = 0.5 * std::f64::consts::PI.ln() + ln_gamma(a) + ln_gamma(a - 0.5);
        assert!((ln_mv_gamma(2, a).unwrap() - expect).abs() < 1e-12);
        assert!(ln_mv_gamma(3, 0.9).is_err());
    }

    #[test]
    fn marginal_likelihood_telescopes_over_observations() {
        // chain rule: ml(rows 1..T) = ml(row 1) + ml(row 2 | row 1) + ...
        // with each step's posterior feeding the next prior; exercises
        // every term of the closed form, tempered and not
        for (alpha, seed) in [(f64::INFINITY, 31u64), (20.0, 32u64)] {
            let ds = noisy_dataset(14, 2, seed);
            let design = build_design(&ds, 1).unwrap();
            let t = design.t_effective();
            let rate = learning_rate(alpha, t).unwrap();
            let prior = minnesota_prior(&ds, 1, 0.25, f64::INFINITY, f64::INFINITY).unwrap();
            let joint = log_marginal_likelihood(&design, &prior, &rate).unwrap();

            let z = rate.zeta;
            let mut chained = 0.0;
            let mut acc = prior.clone();
            for row in 0..t {
                let y_r: DMatrix<f64> = design.y.rows(row, 1).into_owned();
                let x_r: DMatrix<f64> = design.x.rows(row, 1).into_owned();
                let one = VarDesign {
                    y: y_r.clone(),
                    x: x_r.clone(),
                    p: design.p,
                    var_names: design.var_names.clone(),
                };
                let step_rate = LearningRate { alpha, zeta: z, t: 1 };
                chained += log_marginal_likelihood(&one, &acc, &step_rate).unwrap();
                // posterior after this row becomes the next prior
                let xtx = x_r.transpose() * &x_r;
                let xty = x_r.transpose() * &y_r;
                let yty = y_r.transpose() * &y_r;
                let f = niw_update(&acc, &(z * xtx), &(z * xty), &(z * yty), z).unwrap();
                acc = PriorSpec {
                    a_mean: f.a_bar,
                    v_inv: symmetrized(&(z * x_r.transpose() * &x_r + &acc.v_inv)),
                    s_scale: f.s_bar,
                    v_df: f.df,
                    ..acc.clone()
                };
            }
            assert!(
                (joint - chained).abs() < 1e-8,
                "alpha={alpha}: joint {joint} vs chained {chained}"
            );
        }
    }

    #[test]
    fn marginal_likelihood_moves_with_lambda_and_zeta() {
        let ds = noisy_dataset(80, 2, 33);
        let design = build_design(&ds, 2).unwrap();
        let t = design.t_effective();
        let builder = PriorBuilder::from_data(&ds, 2).unwrap();
        let rate1 = learning_rate(f64::INFINITY, t).unwrap();
        let rate2 = learning_rate(40.0, t).unwrap();
        let p_a = builder.build(0.1).unwrap();
        let p_b = builder.build(0.2).unwrap();
        let m_a = log_marginal_likelihood(&design, &p_a, &rate1).unwrap();
        let m_b = log_marginal_likelihood(&design, &p_b, &rate1).unwrap();
        let m_c = log_marginal_likelihood(&design, &p_a, &rate2).unwrap();
        assert_ne!(m_a, m_b, "doubling lambda must move the marginal likelihood");
        assert_ne!(m_a, m_c, "tempering must move the marginal likelihood");
    }

    #[test]
    fn fit_statistic_matches_direct_density_sum() {
        let ds = noisy_dataset(70, 2, 34);
        let design = build_design(&ds, 1).unwrap();
        let t = design.t_effective();
        let rate = learning_rate(f64::INFINITY, t).unwrap();
        let prior = minnesota_prior(&ds, 1, 0.2, f64::INFINITY, f64::INFINITY).unwrap();
        let post = coarsened_posterior(&design, &prior, &rate).unwrap();
        let fc = fit_complexity(&design, &post, &rate, 0.01).unwrap();

        // direct bivariate normal log density with explicit inverse
        let sigma = post.sigma_mean().unwrap();
        let det = sigma[(0, 0)] * sigma[(1, 1)] - sigma[(0, 1)] * sigma[(1, 0)];
        let inv = DMatrix::from_row_slice(
            2,
            2,
            &[sigma[(1, 1)] / det, -sigma[(0, 1)] / det, -sigma[(1, 0)] / det, sigma[(0, 0)] / det],
        );
        let mut direct = 0.0;
        for r in 0..t {
            let resid =
                (design.y.row(r) - design.x.row(r) * &post.a_bar).transpose();
            let q = (resid.transpose() * &inv * &resid)[(0, 0)];
            direct += -(2.0 * std::f64::consts::PI).ln() - 0.5 * det.ln() - 0.5 * q;
        }
        assert!((fc.mf - direct).abs() < 1e-8, "{} vs {direct}", fc.mf);
        assert_eq!(fc.alpha, f64::INFINITY);
        assert_eq!(fc.tau, 0.01);
    }

    #[test]
    fn complexity_counts_near_zero_coefficient_means() {
        // pin the posterior mean to the prior mean with a microscopic
        // zeta and count entries below tau by construction
        let ds = noisy_dataset(100, 2, 35);
        let design = build_design(&ds, 1).unwrap();
        let t = design.t_effective();
        let rate = learning_rate(1e-9, t).unwrap();
        let k = design.n_regressors();
        let mut prior = plain_prior(k, 2, 1e-8);
        prior.a_mean[(0, 0)] = 0.005; // below tau
        prior.a_mean[(1, 0)] = 0.5; // above tau
        prior.a_mean[(1, 1)] = 0.5; // above tau
        prior.a_mean[(2, 1)] = 0.0099; // below tau
        let post = coarsened_posterior(&design, &prior, &rate).unwrap();
        let fc = fit_complexity(&design, &post, &rate, 0.01).unwrap();
        // k*m = 6 coefficients, 2 pinned above tau, the rest at or near 0
        assert_eq!(fc.mc, 4);
    }

    #[test]
    fn posterior_rejects_mismatched_rate() {
        let ds = noisy_dataset(50, 2, 36);
        let design = build_design(&ds, 1).unwrap();
        let prior = minnesota_prior(&ds, 1, 0.2, f64::INFINITY, f64::INFINITY).unwrap();
        let rate = learning_rate(f64::INFINITY, 7).unwrap();
        assert!(coarsened_posterior(&design, &prior, &rate).is_err());
    }
}
