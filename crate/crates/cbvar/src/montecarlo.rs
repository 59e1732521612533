//! Posterior simulation: joint draws of coefficients and covariance,
//! simulation-based forecasts, predictive scoring, and recursively
//! identified impulse responses.
//!
//! Draws use one RNG stream per draw index, so results are independent
//! of how work is split across threads.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;

use crate::design::lag_column;
use crate::error::{Error, Result};
use crate::posterior::CoarsenedPosterior;
use crate::rng::stream_rng;

/// Quantile levels reported for impulse responses.
pub const IRF_LEVELS: [f64; 5] = [0.05, 0.16, 0.50, 0.84, 0.95];

/// Joint posterior draws of (A, Sigma).
#[derive(Clone, Debug)]
pub struct PosteriorDraws {
    /// K x M coefficient draws.
    pub a: Vec<DMatrix<f64>>,
    /// M x M covariance draws.
    pub sigma: Vec<DMatrix<f64>>,
    /// Lower Cholesky factor of each covariance draw (the recursive
    /// impact matrix).
    pub sigma_chol: Vec<DMatrix<f64>>,
    pub seed: u64,
    pub zeta: f64,
    pub lambda: f64,
    pub df: f64,
}

impl PosteriorDraws {
    pub fn n_draws(&self) -> usize {
        self.a.len()
    }

    pub fn n_vars(&self) -> usize {
        self.sigma.first().map(|s| s.nrows()).unwrap_or(0)
    }

    pub fn n_regressors(&self) -> usize {
        self.a.first().map(|a| a.nrows()).unwrap_or(0)
    }

    /// Lag order implied by the K = 1 + p*M coefficient layout.
    pub fn lag_order(&self) -> Result<usize> {
        let (k, m) = (self.n_regressors(), self.n_vars());
        if m == 0 || k < 1 + m || (k - 1) % m != 0 {
            return Err(Error::config(format!(
                "draw block {k} x {m} is not an intercept plus whole lags"
            )));
        }
        Ok((k - 1) / m)
    }
}

/// One covariance draw: inverse Wishart via the Bartlett decomposition,
/// valid for real-valued degrees of freedom. `l_s` is the lower Cholesky
/// factor of the scale matrix.
fn draw_sigma<R: rand::Rng>(
    l_s: &DMatrix<f64>,
    df: f64,
    rng: &mut R,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let m = l_s.nrows();
    let mut bartlett = DMatrix::zeros(m, m);
    for j in 0..m {
        // diagonal: sqrt of a chi-square with df - j degrees of freedom
        let shape = 0.5 * (df - j as f64);
        let gamma = Gamma::new(shape, 2.0)
            .map_err(|e| Error::numeric(format!("invalid chi-square shape {shape}: {e}")))?;
        bartlett[(j, j)] = gamma.sample(rng).sqrt();
        for i in (j + 1)..m {
            bartlett[(i, j)] = StandardNormal.sample(rng);
        }
    }
    // Sigma = (L A^-T)(L A^-T)' written as B'B with B = A^-1 L'
    let b = bartlett
        .solve_lower_triangular(&l_s.transpose())
        .ok_or_else(|| Error::numeric("Bartlett factor is singular".to_string()))?;
    let sigma = b.transpose() * &b;
    let chol = nalgebra::Cholesky::new(sigma.clone())
        .ok_or_else(|| Error::numeric("covariance draw failed to factor".to_string()))?;
    Ok((sigma, chol.l()))
}

/// One coefficient draw given a covariance factor: A = A_bar + U Z L',
/// where U U' = V_bar, so vec(A) has covariance Sigma (x) V_bar.
fn draw_coefficients<R: rand::Rng>(
    a_bar: &DMatrix<f64>,
    coef_factor: &DMatrix<f64>,
    sigma_chol_l: &DMatrix<f64>,
    rng: &mut R,
) -> DMatrix<f64> {
    let (k, m) = (a_bar.nrows(), a_bar.ncols());
    let z = DMatrix::from_fn(k, m, |_, _| StandardNormal.sample(rng));
    a_bar + coef_factor * z * sigma_chol_l.transpose()
}

/// Draw `n_draws` joint samples (A, Sigma) from the posterior.
/// Deterministic in `seed` regardless of thread count.
pub fn sample_posterior(
    posterior: &CoarsenedPosterior,
    n_draws: usize,
    seed: u64,
) -> Result<PosteriorDraws> {
    if n_draws == 0 {
        return Err(Error::config("need at least one draw".to_string()));
    }
    let m = posterior.n_vars() as f64;
    if posterior.df <= m - 1.0 {
        return Err(Error::numeric(format!(
            "inverse Wishart needs df > M - 1, have df = {}",
            posterior.df
        )));
    }
    let l_s = posterior.s_chol_l();
    let u = posterior.coef_factor();
    let drawn: Result<Vec<_>> = (0..n_draws)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i as u64);
            let (sigma, chol) = draw_sigma(l_s, posterior.df, &mut rng)?;
            let a = draw_coefficients(&posterior.a_bar, u, &chol, &mut rng);
            Ok((a, sigma, chol))
        })
        .collect();
    let drawn = drawn?;
    let mut a = Vec::with_capacity(n_draws);
    let mut sigma = Vec::with_capacity(n_draws);
    let mut sigma_chol = Vec::with_capacity(n_draws);
    for (ai, si, ci) in drawn {
        a.push(ai);
        sigma.push(si);
        sigma_chol.push(ci);
    }
    Ok(PosteriorDraws {
        a,
        sigma,
        sigma_chol,
        seed,
        zeta: posterior.zeta,
        lambda: posterior.lambda,
        df: posterior.df,
    })
}

/// Simulation-based forecasts at the requested horizons.
#[derive(Clone, Debug)]
pub struct ForecastResult {
    /// Requested horizons, strictly increasing.
    pub horizons: Vec<usize>,
    /// Per-horizon cross-draw medians (rows align with `horizons`).
    pub point: DMatrix<f64>,
    /// Per-horizon predictive draws, each n_draws x M.
    pub draws: Vec<DMatrix<f64>>,
    pub seed: u64,
}

/// Iterate each posterior draw forward with Gaussian shocks from that
/// draw's covariance. `history` supplies at least the last p rows of
/// data (oldest first). Point forecasts are cross-draw medians.
pub fn forecast(
    draws: &PosteriorDraws,
    history: &DMatrix<f64>,
    horizons: &[usize],
    seed: u64,
) -> Result<ForecastResult> {
    let m = draws.n_vars();
    let p = draws.lag_order()?;
    if horizons.is_empty() {
        return Err(Error::config("no forecast horizons requested".to_string()));
    }
    if horizons[0] == 0 || horizons.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::config(
            "horizons must be strictly increasing and at least 1".to_string(),
        ));
    }
    if history.ncols() != m {
        return Err(Error::config(format!(
            "history has {} columns, model has {m}",
            history.ncols()
        )));
    }
    if history.nrows() < p {
        return Err(Error::data(format!(
            "history has {} rows, need at least {p} initial lags",
            history.nrows()
        )));
    }
    let h_max = *horizons.last().unwrap();
    let n = draws.n_draws();

    // initial lag stack, most recent first
    let init: Vec<DVector<f64>> = (0..p)
        .map(|l| history.row(history.nrows() - 1 - l).transpose().into_owned())
        .collect();

    let per_draw: Vec<Vec<DVector<f64>>> = (0..n)
        .into_par_iter()
        .map(|d| {
            let mut rng = stream_rng(seed, d as u64);
            let a = &draws.a[d];
            let l_sig = &draws.sigma_chol[d];
            let mut lags = init.clone();
            let mut keep = Vec::with_capacity(horizons.len());
            for h in 1..=h_max {
                let mut x = DVector::zeros(1 + p * m);
                x[0] = 1.0;
                for l in 1..=p {
                    for j in 0..m {
                        x[lag_column(m, l, j)] = lags[l - 1][j];
                    }
                }
                let eta = DVector::from_fn(m, |_, _| StandardNormal.sample(&mut rng));
                let y = a.transpose() * &x + l_sig * eta;
                lags.rotate_right(1);
                lags[0] = y.clone();
                if horizons.contains(&h) {
                    keep.push(y);
                }
            }
            keep
        })
        .collect();

    let mut out_draws = Vec::with_capacity(horizons.len());
    let mut point = DMatrix::zeros(horizons.len(), m);
    for (hi, _) in horizons.iter().enumerate() {
        let mut mat = DMatrix::zeros(n, m);
        for d in 0..n {
            for j in 0..m {
                mat[(d, j)] = per_draw[d][hi][j];
            }
        }
        for j in 0..m {
            let mut col: Vec<f64> = mat.column(j).iter().cloned().collect();
            col.sort_by(f64::total_cmp);
            point[(hi, j)] = quantile_sorted(&col, 0.5);
        }
        out_draws.push(mat);
    }
    Ok(ForecastResult { horizons: horizons.to_vec(), point, draws: out_draws, seed })
}

/// Forecast accuracy and predictive density scores.
#[derive(Clone, Debug)]
pub struct ForecastScores {
    pub horizons: Vec<usize>,
    /// Absolute error of the median forecast, per horizon x variable.
    pub mae: DMatrix<f64>,
    /// Log predictive likelihood per horizon x focus variable: Gaussian
    /// density with the cross-draw mean and variance of the draws.
    pub lpl: DMatrix<f64>,
    pub focus: Vec<usize>,
}

/// Score forecasts against realizations (rows align with the result's
/// horizons). The density score is evaluated for the `focus` variables.
pub fn score_forecasts(
    fc: &ForecastResult,
    realized: &DMatrix<f64>,
    focus: &[usize],
) -> Result<ForecastScores> {
    let m = fc.point.ncols();
    if realized.nrows() != fc.horizons.len() || realized.ncols() != m {
        return Err(Error::config(format!(
            "realizations are {} x {}, expected {} x {m}",
            realized.nrows(),
            realized.ncols(),
            fc.horizons.len()
        )));
    }
    if focus.is_empty() || focus.iter().any(|&j| j >= m) {
        return Err(Error::config("focus variables out of range".to_string()));
    }
    let n_h = fc.horizons.len();
    let mut mae = DMatrix::zeros(n_h, m);
    let mut lpl = DMatrix::zeros(n_h, focus.len());
    for hi in 0..n_h {
        for j in 0..m {
            mae[(hi, j)] = (fc.point[(hi, j)] - realized[(hi, j)]).abs();
        }
        for (fi, &j) in focus.iter().enumerate() {
            let col = fc.draws[hi].column(j);
            let n = col.len() as f64;
            let mean = col.sum() / n;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            if !(var.is_finite() && var > 0.0) {
                return Err(Error::numeric(format!(
                    "predictive variance is {var} at horizon {} variable {j}",
                    fc.horizons[hi]
                )));
            }
            let y = realized[(hi, j)];
            lpl[(hi, fi)] = -0.5 * (2.0 * std::f64::consts::PI * var).ln()
                - (y - mean).powi(2) / (2.0 * var);
        }
    }
    Ok(ForecastScores { horizons: fc.horizons.to_vec(), mae, lpl, focus: focus.to_vec() })
}

/// Impulse-response quantile bands for one shock.
#[derive(Clone, Debug)]
pub struct IrfSet {
    pub shock: usize,
    /// Maximum horizon; responses cover 0..=h_max.
    pub h_max: usize,
    pub levels: Vec<f64>,
    /// One (h_max + 1) x M matrix per level, same order as `levels`.
    pub quantiles: Vec<DMatrix<f64>>,
    pub n_draws: usize,
}

/// Split a K x M coefficient draw into per-lag M x M matrices acting on
/// y_{t-l}.
fn lag_matrices(a: &DMatrix<f64>, m: usize, p: usize) -> Vec<DMatrix<f64>> {
    (1..=p)
        .map(|l| {
            DMatrix::from_fn(m, m, |i, r| a[(lag_column(m, l, r), i)])
        })
        .collect()
}

/// Response path of all variables to one impact vector, by the moving
/// average recursion Psi_h = sum_{l<=min(h,p)} A_l Psi_{h-l} applied to
/// the impact column.
fn response_path(
    lag_mats: &[DMatrix<f64>],
    impact: &DVector<f64>,
    h_max: usize,
) -> Vec<DVector<f64>> {
    let mut resp: Vec<DVector<f64>> = Vec::with_capacity(h_max + 1);
    resp.push(impact.clone());
    for h in 1..=h_max {
        let mut r = DVector::zeros(impact.len());
        for (l, a_l) in lag_mats.iter().enumerate().take(h.min(lag_mats.len())) {
            r += a_l * &resp[h - 1 - l];
        }
        resp.push(r);
    }
    resp
}

/// Impulse responses to the recursively identified shock `shock` (the
/// corresponding column of each draw's impact matrix chol(Sigma)).
/// Explosive draws are kept: the bands reflect all posterior mass.
pub fn irf(draws: &PosteriorDraws, shock: usize, h_max: usize, p: usize) -> Result<IrfSet> {
    let m = draws.n_vars();
    if shock >= m {
        return Err(Error::config(format!("shock index {shock} out of range for M = {m}")));
    }
    if p != draws.lag_order()? {
        return Err(Error::config(format!(
            "lag order {p} disagrees with the draws' layout ({})",
            draws.lag_order()?
        )));
    }
    let n = draws.n_draws();
    let paths: Vec<Vec<DVector<f64>>> = (0..n)
        .into_par_iter()
        .map(|d| {
            let lag_mats = lag_matrices(&draws.a[d], m, p);
            let impact = draws.sigma_chol[d].column(shock).into_owned();
            response_path(&lag_mats, &impact, h_max)
        })
        .collect();

    let mut quantiles = vec![DMatrix::zeros(h_max + 1, m); IRF_LEVELS.len()];
    let mut buf = vec![0.0; n];
    for h in 0..=h_max {
        for j in 0..m {
            for d in 0..n {
                buf[d] = paths[d][h][j];
            }
            buf.sort_by(f64::total_cmp);
            for (qi, &q) in IRF_LEVELS.iter().enumerate() {
                quantiles[qi][(h, j)] = quantile_sorted(&buf, q);
            }
        }
    }
    Ok(IrfSet {
        shock,
        h_max,
        levels: IRF_LEVELS.to_vec(),
        quantiles,
        n_draws: n,
    })
}

/// Cross-draw median response of every variable to every shock, as an
/// (h_max + 1) x (M * M) matrix with column j * M + i holding the
/// response of variable i to shock j.
pub fn median_irf_all_shocks(
    draws: &PosteriorDraws,
    h_max: usize,
    p: usize,
) -> Result<DMatrix<f64>> {
    let m = draws.n_vars();
    if p != draws.lag_order()? {
        return Err(Error::config(format!(
            "lag order {p} disagrees with the draws' layout ({})",
            draws.lag_order()?
        )));
    }
    let n = draws.n_draws();
    // full-matrix recursion: R_h = Psi_h * chol(Sigma), all shocks at once
    let paths: Vec<Vec<DMatrix<f64>>> = (0..n)
        .into_par_iter()
        .map(|d| {
            let lag_mats = lag_matrices(&draws.a[d], m, p);
            let mut resp = Vec::with_capacity(h_max + 1);
            resp.push(draws.sigma_chol[d].clone());
            for h in 1..=h_max {
                let mut r = DMatrix::zeros(m, m);
                for (l, a_l) in lag_mats.iter().enumerate().take(h.min(p)) {
                    r += a_l * &resp[h - 1 - l];
                }
                resp.push(r);
            }
            resp
        })
        .collect();

    let mut out = DMatrix::zeros(h_max + 1, m * m);
    let mut buf = vec![0.0; n];
    for h in 0..=h_max {
        for j in 0..m {
            for i in 0..m {
                for d in 0..n {
                    buf[d] = paths[d][h][(i, j)];
                }
                buf.sort_by(f64::total_cmp);
                out[(h, j * m + i)] = quantile_sorted(&buf, 0.5);
            }
        }
    }
    Ok(out)
}

/// Quantile with linear interpolation between order statistics; input
/// must be sorted.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}
