//! Monte Carlo misspecification study: nine data-generating processes
//! (three conditional-mean families crossed with three shock families),
//! impulse-response accuracy of the coarsened estimator on each, and the
//! relative-MAE table that summarizes the results.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal, StudentT};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::{Dataset, MonthDate};
use crate::design::{alpha_label, build_design, learning_rate};
use crate::error::{Error, Result};
use crate::montecarlo::{median_irf_all_shocks, sample_posterior};
use crate::posterior::{coarsened_posterior, fit_complexity};
use crate::prior::{default_lambda_grid, optimize_lambda, PriorBuilder};
use crate::rng::{derive_seed, stream_rng};
use crate::selection::{select_alpha_knee, AlphaGrid, EvaluatedAlpha, DEFAULT_TAU};

/// Conditional-mean family of a data-generating process.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MeanFamily {
    /// Linear autoregression: the estimated model is correctly specified.
    Var,
    /// Coefficient matrices perturbed by fresh Gaussian noise each period.
    RandomCoefficients,
    /// Linear autoregression plus loadings on unobserved exogenous series.
    Exogenous,
}

impl MeanFamily {
    pub fn label(self) -> &'static str {
        match self {
            MeanFamily::Var => "VAR",
            MeanFamily::RandomCoefficients => "RC",
            MeanFamily::Exogenous => "EXO",
        }
    }
}

/// Structural shock family of a data-generating process.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ShockFamily {
    /// Standard Gaussian shocks: homoskedastic, thin-tailed.
    Gaussian,
    /// Independent Student-t with 3 degrees of freedom per component.
    StudentT3,
    /// Log-volatility AR(1) per component, Gaussian given the volatility.
    StochasticVolatility,
}

impl ShockFamily {
    pub fn label(self) -> &'static str {
        match self {
            ShockFamily::Gaussian => "GAUSS",
            ShockFamily::StudentT3 => "T3",
            ShockFamily::StochasticVolatility => "SV",
        }
    }
}

/// All nine mean/shock combinations, mean-family major.
pub fn all_dgps() -> Vec<(MeanFamily, ShockFamily)> {
    let means = [MeanFamily::Var, MeanFamily::RandomCoefficients, MeanFamily::Exogenous];
    let shocks =
        [ShockFamily::Gaussian, ShockFamily::StudentT3, ShockFamily::StochasticVolatility];
    means
        .iter()
        .flat_map(|&m| shocks.iter().map(move |&s| (m, s)))
        .collect()
}

/// Coefficient matrices of the three-variable lag-2 core shared by all
/// data-generating processes.
pub fn example_coefficients() -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let a1 = DMatrix::from_row_slice(
        3,
        3,
        &[1.60, 0.09, 0.32, -0.16, 1.54, -0.49, 0.02, 0.00, 1.01],
    );
    let a2 = DMatrix::from_row_slice(
        3,
        3,
        &[-0.61, -0.09, -0.22, 0.16, -0.57, 0.53, -0.02, 0.04, -0.12],
    );
    let q = DMatrix::from_row_slice(3, 3, &[0.30, 0.0, 0.0, 0.0, 0.28, 0.0, 0.17, -0.28, 0.65]);
    (a1, a2, q)
}

/// Full description of one data-generating process.
#[derive(Clone, Debug)]
pub struct DgpSpec {
    pub mean_family: MeanFamily,
    pub shock_family: ShockFamily,
    /// First-lag coefficient matrix of the linear core.
    pub a1: DMatrix<f64>,
    /// Second-lag coefficient matrix of the linear core.
    pub a2: DMatrix<f64>,
    /// Lower-triangular impact matrix of the structural shocks.
    pub q: DMatrix<f64>,
    /// Rows kept after the burn-in.
    pub t_sim: usize,
    /// Initial rows discarded to wash out the zero starting values.
    pub burn_in: usize,
    /// Per-period, per-entry coefficient noise (random-coefficient family).
    pub rc_sd: f64,
    /// Number of exogenous covariates (exogenous family).
    pub exo_count: usize,
    /// Variance of each exogenous covariate.
    pub exo_var: f64,
    /// Standard deviation of the exogenous loadings (drawn once per run).
    pub exo_loading_sd: f64,
    /// Log-volatility persistence (stochastic-volatility family).
    pub sv_rho: f64,
    /// Log-volatility innovation variance.
    pub sv_innov_var: f64,
    /// Degrees of freedom of the Student-t shocks.
    pub t_dof: f64,
    pub seed: u64,
}

impl DgpSpec {
    /// A process built on the standard three-variable core with the
    /// study's default settings.
    pub fn example(mean_family: MeanFamily, shock_family: ShockFamily, seed: u64) -> Self {
        let (a1, a2, q) = example_coefficients();
        DgpSpec {
            mean_family,
            shock_family,
            a1,
            a2,
            q,
            t_sim: 480,
            burn_in: 100,
            rc_sd: 0.035,
            exo_count: 30,
            exo_var: 4.0,
            exo_loading_sd: 0.1,
            sv_rho: 0.8,
            sv_innov_var: 1.0,
            t_dof: 3.0,
            seed,
        }
    }

    pub fn n_vars(&self) -> usize {
        self.a1.nrows()
    }

    pub fn label(&self) -> String {
        format!("{}-{}", self.mean_family.label(), self.shock_family.label())
    }

    fn validate(&self) -> Result<()> {
        let m = self.n_vars();
        if m == 0 {
            return Err(Error::config("process dimension must be positive".to_string()));
        }
        for (name, mat) in [("a1", &self.a1), ("a2", &self.a2), ("q", &self.q)] {
            if mat.nrows() != m || mat.ncols() != m {
                return Err(Error::config(format!(
                    "{name} is {} x {}, expected {m} x {m}",
                    mat.nrows(),
                    mat.ncols()
                )));
            }
        }
        for i in 0..m {
            for j in (i + 1)..m {
                if self.q[(i, j)] != 0.0 {
                    return Err(Error::config(
                        "impact matrix must be lower triangular".to_string(),
                    ));
                }
            }
        }
        if self.t_sim == 0 {
            return Err(Error::config("simulated length must be positive".to_string()));
        }
        if !(self.rc_sd >= 0.0 && self.exo_var > 0.0 && self.exo_loading_sd >= 0.0) {
            return Err(Error::config("noise scales must be non-negative".to_string()));
        }
        if self.mean_family == MeanFamily::Exogenous && self.exo_count == 0 {
            return Err(Error::config("exogenous family needs at least one covariate".to_string()));
        }
        if !(self.t_dof > 0.0 && self.sv_innov_var > 0.0 && self.sv_rho.is_finite()) {
            return Err(Error::config("shock-family parameters out of range".to_string()));
        }
        Ok(())
    }
}

/// Absolute bound beyond which a simulated path counts as explosive.
const OVERFLOW_LIMIT: f64 = 1e8;

/// Attempts before an explosive process is reported as an error.
const MAX_ATTEMPTS: u64 = 5;

/// Simulate one dataset from the process. Explosive paths are retried
/// with a fresh sub-seed up to five times before giving up.
pub fn simulate_dgp(spec: &DgpSpec) -> Result<Dataset> {
    spec.validate()?;
    for attempt in 0..MAX_ATTEMPTS {
        if let Some(values) = simulate_once(spec, derive_seed(spec.seed, &[attempt])) {
            let names = (1..=spec.n_vars()).map(|j| format!("y{j}")).collect();
            let mut data =
                Dataset::from_values(names, values, MonthDate::new(1980, 1).unwrap())?;
            data.notes = vec![format!("simulated process {}", spec.label())];
            return Ok(data);
        }
    }
    Err(Error::numeric(format!(
        "process {} stayed explosive after {MAX_ATTEMPTS} attempts",
        spec.label()
    )))
}

/// One simulation pass; `None` when the path overflows. Separate RNG
/// streams per noise source keep the structural shock sequence identical
/// across mean families with the same seed.
fn simulate_once(spec: &DgpSpec, seed: u64) -> Option<DMatrix<f64>> {
    let m = spec.n_vars();
    let total = spec.burn_in + spec.t_sim;
    let mut shock_rng = stream_rng(seed, 0);
    let mut rc_rng = stream_rng(seed, 1);
    let mut exo_rng = stream_rng(seed, 2);

    let t_dist = StudentT::new(spec.t_dof).ok()?;
    let loadings = (spec.mean_family == MeanFamily::Exogenous).then(|| {
        let mut rng = stream_rng(seed, 3);
        DMatrix::from_fn(m, spec.exo_count, |_, _| {
            let draw: f64 = StandardNormal.sample(&mut rng);
            spec.exo_loading_sd * draw
        })
    });
    let exo_sd = spec.exo_var.sqrt();
    let sv_sd = spec.sv_innov_var.sqrt();

    let mut log_vol: DVector<f64> = DVector::zeros(m);
    let mut prev1: DVector<f64> = DVector::zeros(m);
    let mut prev2: DVector<f64> = DVector::zeros(m);
    let mut out = DMatrix::zeros(spec.t_sim, m);
    for t in 0..total {
        let eps = match spec.shock_family {
            ShockFamily::Gaussian => {
                DVector::from_fn(m, |_, _| StandardNormal.sample(&mut shock_rng))
            }
            ShockFamily::StudentT3 => DVector::from_fn(m, |_, _| t_dist.sample(&mut shock_rng)),
            ShockFamily::StochasticVolatility => DVector::from_fn(m, |j, _| {
                let step: f64 = StandardNormal.sample(&mut shock_rng);
                log_vol[j] = spec.sv_rho * log_vol[j] + sv_sd * step;
                let eta: f64 = StandardNormal.sample(&mut shock_rng);
                (log_vol[j] / 2.0).exp() * eta
            }),
        };
        let mut y = &spec.a1 * &prev1 + &spec.a2 * &prev2 + &spec.q * eps;
        if spec.mean_family == MeanFamily::RandomCoefficients {
            let mut noisy = |_: usize, _: usize| {
                let draw: f64 = StandardNormal.sample(&mut rc_rng);
                spec.rc_sd * draw
            };
            let e1 = DMatrix::from_fn(m, m, &mut noisy);
            let e2 = DMatrix::from_fn(m, m, &mut noisy);
            y += &e1 * &prev1 + &e2 * &prev2;
        }
        if let Some(b) = &loadings {
            let z = DVector::from_fn(spec.exo_count, |_, _| {
                let draw: f64 = StandardNormal.sample(&mut exo_rng);
                exo_sd * draw
            });
            y += b * z;
        }
        if y.iter().any(|v| !v.is_finite() || v.abs() > OVERFLOW_LIMIT) {
            return None;
        }
        if t >= spec.burn_in {
            out.set_row(t - spec.burn_in, &y.transpose());
        }
        prev2 = std::mem::replace(&mut prev1, y);
    }
    Some(out)
}

/// Impulse responses of the linear core (`a1`, `a2`, `q`) for every
/// shock, horizons 0..=h_max, as an (h_max + 1) x (M * M) matrix with
/// column j * M + i holding the response of variable i to shock j --
/// the same layout as the estimated median responses.
pub fn true_irf(spec: &DgpSpec, h_max: usize) -> Result<DMatrix<f64>> {
    spec.validate()?;
    if h_max == 0 {
        return Err(Error::config("need at least horizon 1".to_string()));
    }
    let m = spec.n_vars();
    let mut resp: Vec<DMatrix<f64>> = vec![spec.q.clone()];
    for h in 1..=h_max {
        let mut r = &spec.a1 * &resp[h - 1];
        if h >= 2 {
            r += &spec.a2 * &resp[h - 2];
        }
        resp.push(r);
    }
    let mut out = DMatrix::zeros(h_max + 1, m * m);
    for (h, r) in resp.iter().enumerate() {
        for j in 0..m {
            for i in 0..m {
                out[(h, j * m + i)] = r[(i, j)];
            }
        }
    }
    Ok(out)
}

/// Alpha grid used for the study table (finer mid-range than the
/// selection default).
pub fn default_table_alpha_grid() -> Vec<f64> {
    vec![25.0, 50.0, 75.0, 100.0, 125.0, 150.0, 250.0, 350.0, 500.0, 1000.0, f64::INFINITY]
}

/// Configuration of a full study run.
#[derive(Clone, Debug)]
pub struct StudyConfig {
    pub dgps: Vec<(MeanFamily, ShockFamily)>,
    /// Candidate coarsening levels; must end with infinity (benchmark).
    pub alpha_grid: Vec<f64>,
    pub lambda_grid: Vec<f64>,
    pub replications: usize,
    /// Lag order of the estimated model.
    pub p_est: usize,
    /// Simulated sample length per replication.
    pub t_sim: usize,
    /// Posterior draws per fitted model.
    pub n_draws: usize,
    /// Maximum impulse-response horizon; errors average rows 1..=h_max.
    pub h_max: usize,
    /// Near-zero threshold of the complexity count.
    pub tau: f64,
    pub seed: u64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            dgps: all_dgps(),
            alpha_grid: default_table_alpha_grid(),
            lambda_grid: default_lambda_grid(),
            replications: 50,
            p_est: 12,
            t_sim: 480,
            n_draws: 2000,
            h_max: 12,
            tau: DEFAULT_TAU,
            seed: 1,
        }
    }
}

impl StudyConfig {
    fn validate(&self) -> Result<()> {
        if self.dgps.is_empty() {
            return Err(Error::config("no processes requested".to_string()));
        }
        if self.replications == 0 {
            return Err(Error::config("need at least one replication".to_string()));
        }
        if self.alpha_grid.is_empty()
            || self.alpha_grid.iter().any(|a| a.is_nan() || *a <= 0.0)
            || self.alpha_grid.windows(2).any(|w| !(w[0] < w[1]))
            || !self.alpha_grid.last().unwrap().is_infinite()
        {
            return Err(Error::config(
                "alpha grid must be strictly increasing, positive, ending with inf".to_string(),
            ));
        }
        if self.p_est == 0 || self.h_max == 0 {
            return Err(Error::config("lag order and horizon must be positive".to_string()));
        }
        if self.t_sim < 2 * self.p_est + 3 {
            return Err(Error::config(format!(
                "simulated length {} is too short to fit {} lags",
                self.t_sim, self.p_est
            )));
        }
        if self.n_draws == 0 || !(self.tau > 0.0) {
            return Err(Error::config("draw count and tau must be positive".to_string()));
        }
        Ok(())
    }

    /// Column labels of the result table: the grid plus the automatic
    /// knee choice when the grid is rich enough to support one.
    fn column_labels(&self) -> Vec<String> {
        let mut labels: Vec<String> = self.alpha_grid.iter().map(|&a| alpha_label(a)).collect();
        if self.alpha_grid.len() >= 3 {
            labels.push("BIC".to_string());
        }
        labels
    }
}

/// One aggregated table cell.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StudyCell {
    pub dgp: String,
    /// Grid value ("25", ..., "inf") or "BIC" for the knee choice.
    pub alpha_label: String,
    /// Mean MAE over successful replications, relative to the
    /// uncoarsened benchmark column (NaN if nothing succeeded).
    pub rel_mae: f64,
    pub successes: usize,
    /// Set when fewer than 80 percent of replications produced a value.
    pub flagged: bool,
}

/// One replication-level record (raw, unnormalized errors).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub dgp: String,
    pub replication: usize,
    pub alpha_label: String,
    /// Mean absolute impulse-response error over horizons 1..=h_max.
    pub mae: f64,
    /// Tightness picked by the marginal likelihood at this alpha.
    pub lambda: f64,
}

/// Full study output.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StudyResult {
    pub dgp_labels: Vec<String>,
    pub alpha_labels: Vec<String>,
    pub replications: usize,
    /// Cells in dgp-major, column-minor order.
    pub cells: Vec<StudyCell>,
    pub detail: Vec<ReplicationRecord>,
    /// Human-readable notes for replications or cells that failed.
    pub failures: Vec<String>,
}

impl StudyResult {
    /// Cell lookup by process label and column label.
    pub fn cell(&self, dgp: &str, alpha: &str) -> Option<&StudyCell> {
        self.cells.iter().find(|c| c.dgp == dgp && c.alpha_label == alpha)
    }
}

/// Per-replication outcome before aggregation.
struct RepOutcome {
    dgp_idx: usize,
    replication: usize,
    /// Per grid index: raw MAE and selected tightness, or the failure.
    mae: Vec<std::result::Result<(f64, f64), String>>,
    /// Grid index picked by the knee rule, when computable.
    knee_idx: Option<usize>,
    /// Whole-replication failure (simulation or design stage).
    fatal: Option<String>,
}

fn run_one_replication(config: &StudyConfig, dgp_idx: usize, replication: usize) -> RepOutcome {
    let n_alpha = config.alpha_grid.len();
    let fail_all = |msg: String| RepOutcome {
        dgp_idx,
        replication,
        mae: (0..n_alpha).map(|_| Err(msg.clone())).collect(),
        knee_idx: None,
        fatal: Some(msg),
    };

    let (mean_family, shock_family) = config.dgps[dgp_idx];
    let sim_seed = derive_seed(config.seed, &[dgp_idx as u64, replication as u64, 0]);
    let mut spec = DgpSpec::example(mean_family, shock_family, sim_seed);
    spec.t_sim = config.t_sim;

    let prepared = (|| {
        let data = simulate_dgp(&spec)?;
        let design = build_design(&data, config.p_est)?;
        let builder = PriorBuilder::from_data(&data, config.p_est)?;
        let truth = true_irf(&spec, config.h_max)?;
        Ok::<_, Error>((design, builder, truth))
    })();
    let (design, builder, truth) = match prepared {
        Ok(v) => v,
        Err(e) => return fail_all(e.to_string()),
    };

    let mut mae = Vec::with_capacity(n_alpha);
    let mut fits = Vec::new();
    for (ai, &alpha) in config.alpha_grid.iter().enumerate() {
        let outcome = (|| {
            let rate = learning_rate(alpha, design.t_effective())?;
            let (lambda, _) = optimize_lambda(&design, &rate, &config.lambda_grid, &builder)?;
            let prior = builder.build(lambda)?;
            let post = coarsened_posterior(&design, &prior, &rate)?;
            let fit = fit_complexity(&design, &post, &rate, config.tau)?;
            let draw_seed =
                derive_seed(config.seed, &[dgp_idx as u64, replication as u64, 1 + ai as u64]);
            let draws = sample_posterior(&post, config.n_draws, draw_seed)?;
            let median = median_irf_all_shocks(&draws, config.h_max, config.p_est)?;
            let dim = (config.h_max * truth.ncols()) as f64;
            let err: f64 = (1..=config.h_max)
                .map(|h| {
                    (0..truth.ncols())
                        .map(|c| (median[(h, c)] - truth[(h, c)]).abs())
                        .sum::<f64>()
                })
                .sum::<f64>()
                / dim;
            Ok::<_, Error>((err, lambda, fit))
        })();
        match outcome {
            Ok((err, lambda, fit)) => {
                mae.push(Ok((err, lambda)));
                fits.push((ai, EvaluatedAlpha { fit, lambda }));
            }
            Err(e) => mae.push(Err(e.to_string())),
        }
    }

    // knee choice over the surviving grid points
    let knee_idx = if fits.len() >= 3 {
        AlphaGrid::from_points(fits.iter().map(|(_, pt)| *pt).collect())
            .and_then(|grid| select_alpha_knee(&grid))
            .ok()
            .and_then(|picked| {
                fits.iter().find(|(_, pt)| pt.fit.alpha == picked).map(|(ai, _)| *ai)
            })
    } else {
        None
    };

    RepOutcome { dgp_idx, replication, mae, knee_idx, fatal: None }
}

/// Run the study: per replication, simulate, fit the model at every
/// alpha (tightness re-optimized each time), score median impulse
/// responses against the true ones, and aggregate into a table of MAEs
/// relative to the uncoarsened benchmark. Deterministic in the seed,
/// independent of thread count.
pub fn run_study(config: &StudyConfig) -> Result<StudyResult> {
    config.validate()?;
    let n_alpha = config.alpha_grid.len();
    let jobs: Vec<(usize, usize)> = (0..config.dgps.len())
        .flat_map(|di| (0..config.replications).map(move |r| (di, r)))
        .collect();
    let outcomes: Vec<RepOutcome> = jobs
        .into_par_iter()
        .map(|(di, r)| run_one_replication(config, di, r))
        .collect();

    let dgp_labels: Vec<String> = config
        .dgps
        .iter()
        .map(|&(m, s)| format!("{}-{}", m.label(), s.label()))
        .collect();
    let alpha_labels = config.column_labels();

    let mut cells = Vec::new();
    let mut detail = Vec::new();
    let mut failures = Vec::new();
    for (di, dgp) in dgp_labels.iter().enumerate() {
        let of_dgp: Vec<&RepOutcome> =
            outcomes.iter().filter(|o| o.dgp_idx == di).collect();
        for o in &of_dgp {
            if let Some(msg) = &o.fatal {
                failures.push(format!("{dgp} replication {}: {msg}", o.replication));
            }
        }
        // raw per-column means over successful replications
        let mut col_mean = vec![f64::NAN; alpha_labels.len()];
        let mut col_n = vec![0usize; alpha_labels.len()];
        for (ai, label) in alpha_labels.iter().enumerate() {
            let values: Vec<f64> = of_dgp
                .iter()
                .filter_map(|o| {
                    let idx = if ai < n_alpha { Some(ai) } else { o.knee_idx }?;
                    let (err, lambda) = o.mae[idx].as_ref().ok()?;
                    detail.push(ReplicationRecord {
                        dgp: dgp.clone(),
                        replication: o.replication,
                        alpha_label: label.clone(),
                        mae: *err,
                        lambda: *lambda,
                    });
                    Some(*err)
                })
                .collect();
            col_n[ai] = values.len();
            if !values.is_empty() {
                col_mean[ai] = values.iter().sum::<f64>() / values.len() as f64;
            }
        }
        let bench = col_mean[n_alpha - 1];
        for (ai, label) in alpha_labels.iter().enumerate() {
            let rel = col_mean[ai] / bench;
            let flagged = col_n[ai] * 5 < config.replications * 4;
            if flagged {
                failures.push(format!(
                    "{dgp} alpha={label}: only {}/{} replications succeeded",
                    col_n[ai], config.replications
                ));
            }
            cells.push(StudyCell {
                dgp: dgp.clone(),
                alpha_label: label.clone(),
                rel_mae: rel,
                successes: col_n[ai],
                flagged,
            });
        }
    }
    Ok(StudyResult {
        dgp_labels,
        alpha_labels,
        replications: config.replications,
        cells,
        detail,
        failures,
    })
}
