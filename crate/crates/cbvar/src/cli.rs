//! Command-line front end: estimation, coarsening-level selection,
//! recursive backtests, impulse responses, and the simulation study.
//!
//! Every run writes a `manifest.json` capturing the command, the library
//! version, the resolved configuration, and a hash of each input file.
//! Outputs are pure functions of that manifest plus the inputs: re-running
//! the same configuration reproduces every file byte-identically, for any
//! thread count. Numeric tables are CSV with full-precision values and a
//! leading comment line stating the table's benchmark.

use std::collections::HashMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::{
    load_csv, read_transform_overrides, recursive_windows, Dataset, LoadOptions, ModelSizeSpec,
    MonthDate, Transform,
};
use crate::design::{alpha_label, build_design, learning_rate, parse_alpha, VarDesign};
use crate::error::{Error, Result};
use crate::montecarlo::{forecast, irf, sample_posterior, score_forecasts};
use crate::posterior::{coarsened_posterior, fit_complexity, CoarsenedPosterior};
use crate::prior::{default_lambda_grid, optimize_lambda, PriorBuilder};
use crate::rng::derive_seed;
use crate::selection::{evaluate_alpha_grid, select_alpha_knee, AlphaGrid, DEFAULT_TAU};
use crate::simstudy::{all_dgps, default_table_alpha_grid, run_study, StudyConfig};

#[derive(Parser)]
#[command(
    name = "cbvar",
    version,
    about = "Coarsened Bayesian vector autoregressions",
    long_about = "Estimation, forecasting, and impulse-response analysis for Bayesian \
                  vector autoregressions whose likelihood is tempered by a learning rate \
                  zeta = alpha/(alpha + T), with automatic selection of alpha and of the \
                  prior tightness."
)]
pub struct Cli {
    /// Worker threads (default: all cores; never affects results)
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Fit one model and write the posterior plus the alpha curve
    Estimate(EstimateArgs),
    /// Evaluate the alpha grid and report the knee choice
    SelectAlpha(SelectAlphaArgs),
    /// Recursive out-of-sample forecast evaluation
    Backtest(BacktestArgs),
    /// Impulse-response quantiles for one or more alpha values
    Irf(IrfArgs),
    /// Relative-MAE table over the nine simulated processes
    Simstudy(SimstudyArgs),
}

/// Flags shared by every command that reads a data panel.
#[derive(Args, Clone)]
pub struct DataArgs {
    /// CSV panel: one date column plus named series in levels
    #[arg(long)]
    pub data: PathBuf,
    /// Variable set: small | medium | large | custom:FILE
    #[arg(long, default_value = "small")]
    pub size: String,
    /// TOML file overriding per-variable transforms (NAME = "log" etc.)
    #[arg(long)]
    pub transforms: Option<PathBuf>,
    /// Column prepended in levels as the first (slow-moving) variable
    #[arg(long)]
    pub prepend: Option<String>,
}

/// Flags controlling the coarsening level and prior tightness.
#[derive(Args, Clone)]
pub struct FitArgs {
    /// Lag order of the model
    #[arg(long, default_value_t = 12)]
    pub lags: usize,
    /// Coarsening level: a number, "inf" (standard posterior), or "bic"
    /// (knee of the fit-complexity curve)
    #[arg(long, default_value = "inf")]
    pub alpha: String,
    /// Prior tightness: "auto" (marginal-likelihood grid search) or a number
    #[arg(long, default_value = "auto")]
    pub lambda: String,
    /// Comma-separated alpha grid for "bic" mode; must end with inf
    #[arg(long)]
    pub alpha_grid: Option<String>,
    /// Comma-separated tightness grid for "auto" mode
    #[arg(long)]
    pub lambda_grid: Option<String>,
    /// Near-zero threshold of the complexity count
    #[arg(long, default_value_t = DEFAULT_TAU)]
    pub tau: f64,
}

#[derive(Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub fit: FitArgs,
    /// Sample window START:END (YYYY-MM, inclusive)
    #[arg(long)]
    pub window: Option<String>,
    /// Output directory
    #[arg(long, default_value = "cbvar_out")]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct SelectAlphaArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub fit: FitArgs,
    /// Sample window START:END (YYYY-MM, inclusive)
    #[arg(long)]
    pub window: Option<String>,
    /// Output directory
    #[arg(long, default_value = "cbvar_out")]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct BacktestArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub fit: FitArgs,
    /// Forecast-origin range START:END (YYYY-MM, inclusive); the model is
    /// re-fit on all data up to each origin
    #[arg(long)]
    pub window: String,
    /// Maximum forecast horizon in months
    #[arg(long, default_value_t = 12)]
    pub horizons: usize,
    /// Posterior draws per origin
    #[arg(long, default_value_t = 2000)]
    pub draws: usize,
    /// Master seed for posterior sampling and predictive simulation
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Also write *_cut.csv tables restricted to targets up to this date
    #[arg(long)]
    pub eval_cut: Option<String>,
    /// manifest.json of a previous backtest to compare against
    #[arg(long)]
    pub benchmark: Option<PathBuf>,
    /// Output directory
    #[arg(long, default_value = "cbvar_out")]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct IrfArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub fit: FitArgs,
    /// Sample window START:END (YYYY-MM, inclusive)
    #[arg(long)]
    pub window: Option<String>,
    /// Shocked variable: name or zero-based position
    #[arg(long, default_value = "0")]
    pub shock: String,
    /// Maximum response horizon
    #[arg(long, default_value_t = 12)]
    pub horizons: usize,
    /// Posterior draws
    #[arg(long, default_value_t = 2000)]
    pub draws: usize,
    /// Master seed for posterior sampling
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Output directory
    #[arg(long, default_value = "cbvar_out")]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct SimstudyArgs {
    /// Replications per process
    #[arg(long, default_value_t = 50)]
    pub reps: usize,
    /// Lag order of the estimated models
    #[arg(long, default_value_t = 12)]
    pub lags: usize,
    /// Simulated sample length per replication
    #[arg(long, default_value_t = 480)]
    pub t_sim: usize,
    /// Posterior draws per fitted model
    #[arg(long, default_value_t = 2000)]
    pub draws: usize,
    /// Maximum impulse-response horizon scored
    #[arg(long, default_value_t = 12)]
    pub horizons: usize,
    /// Near-zero threshold of the complexity count
    #[arg(long, default_value_t = DEFAULT_TAU)]
    pub tau: f64,
    /// Master seed
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Output directory
    #[arg(long, default_value = "cbvar_out")]
    pub out: PathBuf,
}

/// Entry point used by the binary; returns the error for exit-code mapping.
pub fn run<I, T>(argv: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e)
            if e.kind() == clap::error::ErrorKind::DisplayHelp
                || e.kind() == clap::error::ErrorKind::DisplayVersion =>
        {
            print!("{e}");
            return Ok(());
        }
        Err(e) => return Err(Error::config(e.to_string())),
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::config("--threads must be positive".to_string()));
        }
        // ignore the error if a global pool already exists (tests)
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match &cli.command {
        Command::Estimate(args) => cmd_estimate(args),
        Command::SelectAlpha(args) => cmd_select_alpha(args),
        Command::Backtest(args) => cmd_backtest(args),
        Command::Irf(args) => cmd_irf(args),
        Command::Simstudy(args) => cmd_simstudy(args),
    }
}

// ---------------------------------------------------------------------
// shared plumbing
// ---------------------------------------------------------------------

/// Full-precision value formatting (17 significant digits round-trips
/// every f64 exactly, making byte-level determinism checks meaningful).
fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_window(s: &str) -> Result<(MonthDate, MonthDate)> {
    let (a, b) = s
        .split_once(':')
        .ok_or_else(|| Error::config(format!("window '{s}' must be START:END")))?;
    let start: MonthDate = a.trim().parse()?;
    let end: MonthDate = b.trim().parse()?;
    if end < start {
        return Err(Error::config(format!("window end {end} precedes start {start}")));
    }
    Ok((start, end))
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum AlphaChoice {
    Fixed(f64),
    Knee,
}

fn parse_alpha_flag(s: &str) -> Result<AlphaChoice> {
    if s.trim().eq_ignore_ascii_case("bic") {
        Ok(AlphaChoice::Knee)
    } else {
        Ok(AlphaChoice::Fixed(parse_alpha(s)?))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum LambdaChoice {
    Auto,
    Fixed(f64),
}

fn parse_lambda_flag(s: &str) -> Result<LambdaChoice> {
    let s = s.trim();
    if s.eq_ignore_ascii_case("auto") {
        return Ok(LambdaChoice::Auto);
    }
    let v: f64 = s
        .parse()
        .map_err(|_| Error::config(format!("cannot parse lambda '{s}'")))?;
    if !(v.is_finite() && v > 0.0) {
        return Err(Error::config(format!("lambda must be a positive number, got {s}")));
    }
    Ok(LambdaChoice::Fixed(v))
}

fn parse_alpha_list(s: &str) -> Result<Vec<f64>> {
    s.split(',').map(parse_alpha).collect()
}

fn parse_lambda_list(s: &str) -> Result<Vec<f64>> {
    let grid: Vec<f64> = s
        .split(',')
        .map(|p| match parse_lambda_flag(p)? {
            LambdaChoice::Fixed(v) => Ok(v),
            LambdaChoice::Auto => {
                Err(Error::config("lambda grid entries must be numbers".to_string()))
            }
        })
        .collect::<Result<_>>()?;
    if grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::config("lambda grid must be strictly increasing".to_string()));
    }
    Ok(grid)
}

/// Grids and selection policy resolved from the fit flags.
struct FitPolicy {
    alpha: AlphaChoice,
    lambda: LambdaChoice,
    alpha_grid: Vec<f64>,
    lambda_grid: Vec<f64>,
    tau: f64,
}

impl FitPolicy {
    fn resolve(fit: &FitArgs) -> Result<FitPolicy> {
        let alpha = parse_alpha_flag(&fit.alpha)?;
        let lambda = parse_lambda_flag(&fit.lambda)?;
        let alpha_grid = match &fit.alpha_grid {
            Some(s) => parse_alpha_list(s)?,
            None => crate::selection::default_alpha_grid(),
        };
        let lambda_grid = match (&fit.lambda_grid, lambda) {
            (_, LambdaChoice::Fixed(v)) => vec![v],
            (Some(s), LambdaChoice::Auto) => parse_lambda_list(s)?,
            (None, LambdaChoice::Auto) => default_lambda_grid(),
        };
        if !(fit.tau > 0.0) {
            return Err(Error::config(format!("tau must be positive, got {}", fit.tau)));
        }
        if fit.lags == 0 {
            return Err(Error::config("lag order must be at least 1".to_string()));
        }
        Ok(FitPolicy { alpha, lambda, alpha_grid, lambda_grid, tau: fit.tau })
    }

    /// Evaluate the curve and pick (alpha, lambda) for one training set.
    /// Fixed alpha gives a one-point curve; "bic" evaluates the grid and
    /// takes the knee.
    fn select(&self, design: &VarDesign, builder: &PriorBuilder) -> Result<(f64, f64, AlphaGrid)> {
        match self.alpha {
            AlphaChoice::Knee => {
                let grid = evaluate_alpha_grid(
                    design,
                    builder,
                    &self.lambda_grid,
                    &self.alpha_grid,
                    self.tau,
                )?;
                let alpha = select_alpha_knee(&grid)?;
                let lambda = grid
                    .points
                    .iter()
                    .find(|p| p.fit.alpha == alpha)
                    .map(|p| p.lambda)
                    .expect("knee choice is one of the evaluated points");
                Ok((alpha, lambda, grid))
            }
            AlphaChoice::Fixed(alpha) => {
                let rate = learning_rate(alpha, design.t_effective())?;
                let (lambda, _) = optimize_lambda(design, &rate, &self.lambda_grid, builder)?;
                let prior = builder.build(lambda)?;
                let post = coarsened_posterior(design, &prior, &rate)?;
                let fit = fit_complexity(design, &post, &rate, self.tau)?;
                let grid = AlphaGrid {
                    points: vec![crate::selection::EvaluatedAlpha { fit, lambda }],
                    failures: vec![],
                };
                Ok((alpha, lambda, grid))
            }
        }
    }
}

/// Loaded panel plus everything the manifest needs to identify it.
struct LoadedData {
    data: Dataset,
    size: ModelSizeSpec,
    window: Option<(MonthDate, MonthDate)>,
    overrides: Vec<(String, Transform)>,
    prepend: Option<String>,
}

fn load_data(args: &DataArgs, window: Option<&str>) -> Result<LoadedData> {
    let size = ModelSizeSpec::parse(&args.size, args.data.parent())?;
    let overrides = match &args.transforms {
        Some(p) => read_transform_overrides(p)?,
        None => HashMap::new(),
    };
    let window = window.map(parse_window).transpose()?;
    let opts = LoadOptions {
        window,
        overrides: overrides.clone(),
        prepend: args.prepend.clone(),
    };
    let data = load_csv(&args.data, &size, &opts)?;
    let mut sorted: Vec<(String, Transform)> = overrides.into_iter().collect();
    sorted.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(LoadedData { data, size, window, overrides: sorted, prepend: args.prepend.clone() })
}

// ---------------------------------------------------------------------
// manifest
// ---------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub config: serde_json::Value,
    pub inputs: Vec<InputRecord>,
    pub outputs: Vec<String>,
}

#[derive(Serialize, Deserialize)]
pub struct InputRecord {
    pub role: String,
    pub path: String,
    pub sha256: String,
}

/// Writer collecting output files so the manifest can list them.
struct OutputDir {
    dir: PathBuf,
    written: Vec<String>,
}

impl OutputDir {
    fn create(dir: &Path) -> Result<OutputDir> {
        std::fs::create_dir_all(dir)?;
        Ok(OutputDir { dir: dir.to_path_buf(), written: vec![] })
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        std::fs::write(self.dir.join(name), contents)?;
        self.written.push(name.to_string());
        Ok(())
    }

    fn finish(
        mut self,
        command: &str,
        config: impl Serialize,
        inputs: Vec<InputRecord>,
    ) -> Result<()> {
        self.written.sort();
        let manifest = Manifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: serde_json::to_value(config)
                .map_err(|e| Error::config(format!("cannot serialize config: {e}")))?,
            inputs,
            outputs: self.written.clone(),
        };
        let body = serde_json::to_string_pretty(&manifest)
            .map_err(|e| Error::config(format!("cannot serialize manifest: {e}")))?;
        std::fs::write(self.dir.join("manifest.json"), body + "\n")?;
        Ok(())
    }
}

fn data_input_record(loaded: &LoadedData, args: &DataArgs) -> InputRecord {
    InputRecord {
        role: "data".to_string(),
        path: args.data.display().to_string(),
        sha256: loaded
            .data
            .provenance
            .as_ref()
            .map(|p| p.sha256.clone())
            .unwrap_or_default(),
    }
}

fn sha256_of_file(path: &Path) -> Result<String> {
    use sha2::{Digest, Sha256};
    let bytes = std::fs::read(path)?;
    let mut h = Sha256::new();
    h.update(&bytes);
    Ok(hex::encode(h.finalize()))
}

/// Common manifest fields describing one model fit on one panel.
#[derive(Serialize)]
struct FitConfig {
    data: String,
    size: String,
    variables: Vec<String>,
    window: Option<String>,
    transforms: Vec<(String, Transform)>,
    prepend: Option<String>,
    lags: usize,
    alpha: String,
    lambda: String,
    alpha_grid: Vec<String>,
    lambda_grid: Vec<f64>,
    tau: f64,
}

fn fit_config(
    args: &DataArgs,
    fit: &FitArgs,
    policy: &FitPolicy,
    loaded: &LoadedData,
) -> FitConfig {
    FitConfig {
        data: args.data.display().to_string(),
        size: loaded.size.name.clone(),
        variables: loaded.data.names.clone(),
        window: loaded.window.map(|(a, b)| format!("{a}:{b}")),
        transforms: loaded.overrides.clone(),
        prepend: loaded.prepend.clone(),
        lags: fit.lags,
        alpha: fit.alpha.to_lowercase(),
        lambda: fit.lambda.to_lowercase(),
        alpha_grid: policy.alpha_grid.iter().map(|&a| alpha_label(a)).collect(),
        lambda_grid: policy.lambda_grid.clone(),
        tau: policy.tau,
    }
}

// ---------------------------------------------------------------------
// shared table fragments
// ---------------------------------------------------------------------

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// The alpha curve as CSV: one row per evaluated grid point, failures as
/// comment lines.
fn alpha_curve_csv(grid: &AlphaGrid, selected: f64) -> String {
    let mut out = String::from(
        "# benchmark: none (mf = tempered full-sample log score, mc = count of \
         posterior-mean coefficients below tau)\n",
    );
    for (a, why) in &grid.failures {
        out.push_str(&format!("# failed: alpha={}: {}\n", alpha_label(*a), why));
    }
    out.push_str("alpha,lambda,mf,mc,selected\n");
    for p in &grid.points {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            alpha_label(p.fit.alpha),
            fmt17(p.lambda),
            fmt17(p.fit.mf),
            p.fit.mc,
            u8::from(p.fit.alpha == selected)
        ));
    }
    out
}

// ---------------------------------------------------------------------
// estimate
// ---------------------------------------------------------------------

/// Posterior summary serialized to `posterior.json`. Alpha is a string
/// because JSON has no representation for infinity.
#[derive(Serialize)]
struct PosteriorReport {
    alpha: String,
    zeta: f64,
    lambda: f64,
    t_effective: usize,
    df: f64,
    lags: usize,
    variables: Vec<String>,
    selection: String,
    mf: f64,
    mc: usize,
    tau: f64,
    a_bar: Vec<Vec<f64>>,
    v_bar: Vec<Vec<f64>>,
    s_bar: Vec<Vec<f64>>,
    sigma_mean: Vec<Vec<f64>>,
    log_det_v_bar: f64,
    log_det_s_bar: f64,
    jitter: Option<f64>,
}

fn posterior_report(
    post: &CoarsenedPosterior,
    grid: &AlphaGrid,
    names: &[String],
    lags: usize,
    selection: &str,
) -> Result<PosteriorReport> {
    let point = grid
        .points
        .iter()
        .find(|p| p.fit.alpha == post.alpha)
        .expect("fitted alpha is on the evaluated curve");
    let (log_det_v_bar, log_det_s_bar) = post.log_dets();
    Ok(PosteriorReport {
        alpha: alpha_label(post.alpha),
        zeta: post.zeta,
        lambda: post.lambda,
        t_effective: post.t_effective,
        df: post.df,
        lags,
        variables: names.to_vec(),
        selection: selection.to_string(),
        mf: point.fit.mf,
        mc: point.fit.mc,
        tau: point.fit.tau,
        a_bar: matrix_rows(&post.a_bar),
        v_bar: matrix_rows(&post.v_bar),
        s_bar: matrix_rows(&post.s_bar),
        sigma_mean: matrix_rows(&post.sigma_mean()?),
        log_det_v_bar,
        log_det_s_bar,
        jitter: post.jitter(),
    })
}

fn cmd_estimate(args: &EstimateArgs) -> Result<()> {
    let policy = FitPolicy::resolve(&args.fit)?;
    let loaded = load_data(&args.data, args.window.as_deref())?;
    let design = build_design(&loaded.data, args.fit.lags)?;
    let builder = PriorBuilder::from_data(&loaded.data, args.fit.lags)?;
    let (alpha, lambda, grid) = policy.select(&design, &builder)?;

    let rate = learning_rate(alpha, design.t_effective())?;
    let prior = builder.build(lambda)?;
    let post = coarsened_posterior(&design, &prior, &rate)?;

    let selection = match policy.alpha {
        AlphaChoice::Knee => "bic",
        AlphaChoice::Fixed(_) => "fixed",
    };
    let report = posterior_report(&post, &grid, &loaded.data.names, args.fit.lags, selection)?;

    let mut out = OutputDir::create(&args.out)?;
    let body = serde_json::to_string_pretty(&report)
        .map_err(|e| Error::config(format!("cannot serialize posterior: {e}")))?;
    out.write("posterior.json", &(body + "\n"))?;
    out.write("alpha_curve.csv", &alpha_curve_csv(&grid, alpha))?;
    let inputs = vec![data_input_record(&loaded, &args.data)];
    out.finish("estimate", fit_config(&args.data, &args.fit, &policy, &loaded), inputs)?;
    println!(
        "estimate: alpha={} zeta={:.6} lambda={} T={} vars={}",
        alpha_label(alpha),
        post.zeta,
        lambda,
        design.t_effective(),
        loaded.data.n_vars()
    );
    Ok(())
}

// ---------------------------------------------------------------------
// select-alpha
// ---------------------------------------------------------------------

#[derive(Serialize)]
struct SelectionReport {
    selected_alpha: String,
    selected_lambda: f64,
    tau: f64,
    evaluated: usize,
    failures: Vec<String>,
}

fn cmd_select_alpha(args: &SelectAlphaArgs) -> Result<()> {
    let mut fit = args.fit.clone();
    fit.alpha = "bic".to_string();
    let policy = FitPolicy::resolve(&fit)?;
    let loaded = load_data(&args.data, args.window.as_deref())?;
    let design = build_design(&loaded.data, fit.lags)?;
    let builder = PriorBuilder::from_data(&loaded.data, fit.lags)?;
    let (alpha, lambda, grid) = policy.select(&design, &builder)?;

    let report = SelectionReport {
        selected_alpha: alpha_label(alpha),
        selected_lambda: lambda,
        tau: policy.tau,
        evaluated: grid.points.len(),
        failures: grid
            .failures
            .iter()
            .map(|(a, why)| format!("alpha={}: {why}", alpha_label(*a)))
            .collect(),
    };
    let mut out = OutputDir::create(&args.out)?;
    let body = serde_json::to_string_pretty(&report)
        .map_err(|e| Error::config(format!("cannot serialize selection: {e}")))?;
    out.write("selection.json", &(body + "\n"))?;
    out.write("alpha_curve.csv", &alpha_curve_csv(&grid, alpha))?;
    let inputs = vec![data_input_record(&loaded, &args.data)];
    out.finish("select-alpha", fit_config(&args.data, &fit, &policy, &loaded), inputs)?;
    println!("selected alpha: {} (lambda {})", alpha_label(alpha), lambda);
    Ok(())
}

// ---------------------------------------------------------------------
// irf
// ---------------------------------------------------------------------

#[derive(Serialize)]
struct IrfConfig {
    #[serde(flatten)]
    fit: FitConfig,
    alphas: Vec<String>,
    shock: String,
    horizons: usize,
    draws: usize,
    seed: u64,
}

fn resolve_shock(spec: &str, names: &[String]) -> Result<usize> {
    if let Ok(idx) = spec.trim().parse::<usize>() {
        if idx >= names.len() {
            return Err(Error::config(format!(
                "shock position {idx} out of range for {} variables",
                names.len()
            )));
        }
        return Ok(idx);
    }
    names
        .iter()
        .position(|n| n == spec.trim())
        .ok_or_else(|| Error::config(format!("shock variable '{spec}' not in the model")))
}

fn cmd_irf(args: &IrfArgs) -> Result<()> {
    // the alpha flag is a comma list here, so resolve the rest of the
    // policy with a placeholder and parse the list separately
    let mut single = args.fit.clone();
    single.alpha = "inf".to_string();
    let policy = FitPolicy::resolve(&single)?;
    if args.draws == 0 || args.horizons == 0 {
        return Err(Error::config("draws and horizons must be positive".to_string()));
    }
    let loaded = load_data(&args.data, args.window.as_deref())?;
    let design = build_design(&loaded.data, args.fit.lags)?;
    let builder = PriorBuilder::from_data(&loaded.data, args.fit.lags)?;
    let shock = resolve_shock(&args.shock, &loaded.data.names)?;

    let mut alphas = Vec::new();
    for part in args.fit.alpha.split(',') {
        match parse_alpha_flag(part)? {
            AlphaChoice::Fixed(a) => alphas.push(a),
            AlphaChoice::Knee => {
                let knee_policy = FitPolicy { alpha: AlphaChoice::Knee, ..clone_policy(&policy) };
                let (a, _, _) = knee_policy.select(&design, &builder)?;
                alphas.push(a);
            }
        }
    }

    let mut csv = String::from("# benchmark: none (posterior impulse-response quantiles)\n");
    csv.push_str("alpha,shock,horizon,variable,level,value\n");
    for (ai, &alpha) in alphas.iter().enumerate() {
        let rate = learning_rate(alpha, design.t_effective())?;
        let (lambda, _) = optimize_lambda(&design, &rate, &policy.lambda_grid, &builder)?;
        let prior = builder.build(lambda)?;
        let post = coarsened_posterior(&design, &prior, &rate)?;
        let draws = sample_posterior(&post, args.draws, derive_seed(args.seed, &[ai as u64]))?;
        let set = irf(&draws, shock, args.horizons, args.fit.lags)?;
        for h in 0..=set.h_max {
            for (j, name) in loaded.data.names.iter().enumerate() {
                for (qi, &level) in set.levels.iter().enumerate() {
                    csv.push_str(&format!(
                        "{},{},{},{},{},{}\n",
                        alpha_label(alpha),
                        loaded.data.names[shock],
                        h,
                        name,
                        level,
                        fmt17(set.quantiles[qi][(h, j)])
                    ));
                }
            }
        }
    }

    let mut out = OutputDir::create(&args.out)?;
    out.write("irf_quantiles.csv", &csv)?;
    let config = IrfConfig {
        fit: fit_config(&args.data, &args.fit, &policy, &loaded),
        alphas: alphas.iter().map(|&a| alpha_label(a)).collect(),
        shock: loaded.data.names[shock].clone(),
        horizons: args.horizons,
        draws: args.draws,
        seed: args.seed,
    };
    let inputs = vec![data_input_record(&loaded, &args.data)];
    out.finish("irf", config, inputs)?;
    println!(
        "irf: shock={} alphas={} horizons=0..{}",
        loaded.data.names[shock],
        alphas.iter().map(|&a| alpha_label(a)).collect::<Vec<_>>().join(","),
        args.horizons
    );
    Ok(())
}

fn clone_policy(p: &FitPolicy) -> FitPolicy {
    FitPolicy {
        alpha: p.alpha,
        lambda: p.lambda,
        alpha_grid: p.alpha_grid.clone(),
        lambda_grid: p.lambda_grid.clone(),
        tau: p.tau,
    }
}

// ---------------------------------------------------------------------
// backtest
// ---------------------------------------------------------------------

#[derive(Serialize)]
struct BacktestConfig {
    #[serde(flatten)]
    fit: FitConfig,
    origins: String,
    horizons: usize,
    draws: usize,
    seed: u64,
    eval_cut: Option<String>,
    benchmark: Option<String>,
}

/// Scores of one forecast origin.
struct OriginScores {
    origin: MonthDate,
    alpha: f64,
    lambda: f64,
    /// (horizon, target date, per-variable absolute error, per-variable lpl)
    rows: Vec<(usize, MonthDate, Vec<f64>, Vec<f64>)>,
}

fn run_origin(
    data: &Dataset,
    split: &crate::dataio::RecursiveSplit,
    origin_index: usize,
    policy: &FitPolicy,
    lags: usize,
    draws: usize,
    seed: u64,
) -> Result<OriginScores> {
    let train = data.head(split.train_rows)?;
    let design = build_design(&train, lags)?;
    let builder = PriorBuilder::from_data(&train, lags)?;
    let (alpha, lambda, _) = policy.select(&design, &builder)?;
    let rate = learning_rate(alpha, design.t_effective())?;
    let prior = builder.build(lambda)?;
    let post = coarsened_posterior(&design, &prior, &rate)?;

    let mut rows = Vec::new();
    if !split.realized.is_empty() {
        let horizons: Vec<usize> = split.realized.iter().map(|(h, _)| *h).collect();
        let sampled = sample_posterior(
            &post,
            draws,
            derive_seed(seed, &[origin_index as u64, 0]),
        )?;
        let fc = forecast(
            &sampled,
            &train.values,
            &horizons,
            derive_seed(seed, &[origin_index as u64, 1]),
        )?;
        let m = data.n_vars();
        let realized = DMatrix::from_fn(horizons.len(), m, |hi, j| {
            data.values[(split.realized[hi].1, j)]
        });
        let focus: Vec<usize> = (0..m).collect();
        let scores = score_forecasts(&fc, &realized, &focus)?;
        for (hi, &(h, _)) in split.realized.iter().enumerate() {
            let target = split.origin.plus_months(h as i64);
            let abs: Vec<f64> = (0..m).map(|j| scores.mae[(hi, j)]).collect();
            let lpl: Vec<f64> = (0..m).map(|j| scores.lpl[(hi, j)]).collect();
            rows.push((h, target, abs, lpl));
        }
    }
    Ok(OriginScores { origin: split.origin, alpha, lambda, rows })
}

/// Benchmark scores parsed back from a previous run's CSV tables, keyed
/// by (origin, horizon, variable).
struct BenchmarkScores {
    path: String,
    mae: HashMap<(String, usize, String), f64>,
    lpl: HashMap<(String, usize, String), f64>,
}

fn parse_score_csv(path: &Path, value_col: &str) -> Result<HashMap<(String, usize, String), f64>> {
    let body = std::fs::read_to_string(path)?;
    let mut rows = HashMap::new();
    let mut header: Option<Vec<String>> = None;
    for line in body.lines() {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        match &header {
            None => header = Some(fields.iter().map(|s| s.to_string()).collect()),
            Some(cols) => {
                let get = |name: &str| -> Result<&str> {
                    cols.iter()
                        .position(|c| c == name)
                        .and_then(|i| fields.get(i).copied())
                        .ok_or_else(|| {
                            Error::data(format!(
                                "benchmark table {} lacks column {name}",
                                path.display()
                            ))
                        })
                };
                let origin = get("origin")?.to_string();
                let horizon: usize = get("horizon")?
                    .parse()
                    .map_err(|_| Error::data("bad horizon in benchmark table".to_string()))?;
                let variable = get("variable")?.to_string();
                let value: f64 = get(value_col)?
                    .parse()
                    .map_err(|_| Error::data("bad value in benchmark table".to_string()))?;
                rows.insert((origin, horizon, variable), value);
            }
        }
    }
    Ok(rows)
}

fn load_benchmark(manifest_path: &Path) -> Result<BenchmarkScores> {
    let body = std::fs::read_to_string(manifest_path)?;
    let manifest: Manifest = serde_json::from_str(&body)
        .map_err(|e| Error::data(format!("cannot parse benchmark manifest: {e}")))?;
    if manifest.command != "backtest" {
        return Err(Error::config(format!(
            "benchmark manifest describes a '{}' run, need a backtest",
            manifest.command
        )));
    }
    let dir = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    Ok(BenchmarkScores {
        path: manifest_path.display().to_string(),
        mae: parse_score_csv(&dir.join("mae.csv"), "abs_error")?,
        lpl: parse_score_csv(&dir.join("lpl.csv"), "lpl")?,
    })
}

/// Flattened score row used to build each output table.
struct ScoreRow {
    origin: MonthDate,
    horizon: usize,
    target: MonthDate,
    variable: String,
    abs_error: f64,
    lpl: f64,
    bench_abs: Option<f64>,
    bench_lpl: Option<f64>,
}

fn backtest_tables(
    rows: &[ScoreRow],
    benchmark: Option<&BenchmarkScores>,
    cut: Option<&MonthDate>,
) -> (String, String, String, String) {
    let included: Vec<&ScoreRow> =
        rows.iter().filter(|r| cut.map_or(true, |c| r.target <= *c)).collect();
    let bench_note = match benchmark {
        Some(b) => format!("{} (this run / benchmark)", b.path),
        None => "none (absolute scores of this run)".to_string(),
    };
    let cut_note = match cut {
        Some(c) => format!("; targets up to {c}"),
        None => String::new(),
    };

    let mut mae = format!("# benchmark: {bench_note}{cut_note}\n");
    mae.push_str(if benchmark.is_some() {
        "origin,horizon,target,variable,abs_error,benchmark_abs_error,ratio\n"
    } else {
        "origin,horizon,target,variable,abs_error\n"
    });
    let mut lpl = format!("# benchmark: {bench_note}{cut_note}\n");
    lpl.push_str(if benchmark.is_some() {
        "origin,horizon,target,variable,lpl,benchmark_lpl,diff\n"
    } else {
        "origin,horizon,target,variable,lpl\n"
    });
    for r in &included {
        match (r.bench_abs, r.bench_lpl) {
            (Some(ba), Some(bl)) => {
                mae.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    r.origin,
                    r.horizon,
                    r.target,
                    r.variable,
                    fmt17(r.abs_error),
                    fmt17(ba),
                    fmt17(r.abs_error / ba)
                ));
                lpl.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    r.origin,
                    r.horizon,
                    r.target,
                    r.variable,
                    fmt17(r.lpl),
                    fmt17(bl),
                    fmt17(r.lpl - bl)
                ));
            }
            _ => {
                mae.push_str(&format!(
                    "{},{},{},{},{}\n",
                    r.origin,
                    r.horizon,
                    r.target,
                    r.variable,
                    fmt17(r.abs_error)
                ));
                lpl.push_str(&format!(
                    "{},{},{},{},{}\n",
                    r.origin,
                    r.horizon,
                    r.target,
                    r.variable,
                    fmt17(r.lpl)
                ));
            }
        }
    }

    // cumulative log scores in origin order, per (horizon, variable);
    // with a benchmark the cumulated quantity is the difference
    let mut cum = format!(
        "# benchmark: {bench_note}{cut_note} (running sum over origins of {})\n",
        if benchmark.is_some() { "lpl - benchmark_lpl" } else { "lpl" }
    );
    cum.push_str("origin,horizon,variable,cumulative\n");
    let mut keys: Vec<(usize, String)> = Vec::new();
    for r in &included {
        let key = (r.horizon, r.variable.clone());
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.sort();
    for (h, var) in &keys {
        let mut acc = 0.0;
        for r in &included {
            if r.horizon == *h && &r.variable == var {
                acc += match r.bench_lpl {
                    Some(bl) => r.lpl - bl,
                    None => r.lpl,
                };
                cum.push_str(&format!("{},{},{},{}\n", r.origin, h, var, fmt17(acc)));
            }
        }
    }

    // per-(horizon, variable) aggregates over origins
    let mut summary = format!("# benchmark: {bench_note}{cut_note}\n");
    summary.push_str(if benchmark.is_some() {
        "horizon,variable,mean_abs_error,total_lpl,rel_mae,lpl_diff\n"
    } else {
        "horizon,variable,mean_abs_error,total_lpl\n"
    });
    for (h, var) in &keys {
        let of_key: Vec<&&ScoreRow> =
            included.iter().filter(|r| r.horizon == *h && &r.variable == var).collect();
        let n = of_key.len() as f64;
        let mean_abs = of_key.iter().map(|r| r.abs_error).sum::<f64>() / n;
        let total_lpl = of_key.iter().map(|r| r.lpl).sum::<f64>();
        if benchmark.is_some() {
            let bench_mean =
                of_key.iter().map(|r| r.bench_abs.unwrap_or(f64::NAN)).sum::<f64>() / n;
            let bench_total = of_key.iter().map(|r| r.bench_lpl.unwrap_or(f64::NAN)).sum::<f64>();
            summary.push_str(&format!(
                "{},{},{},{},{},{}\n",
                h,
                var,
                fmt17(mean_abs),
                fmt17(total_lpl),
                fmt17(mean_abs / bench_mean),
                fmt17(total_lpl - bench_total)
            ));
        } else {
            summary.push_str(&format!("{},{},{},{}\n", h, var, fmt17(mean_abs), fmt17(total_lpl)));
        }
    }
    (mae, lpl, cum, summary)
}

fn cmd_backtest(args: &BacktestArgs) -> Result<()> {
    let policy = FitPolicy::resolve(&args.fit)?;
    if args.draws == 0 || args.horizons == 0 {
        return Err(Error::config("draws and horizons must be positive".to_string()));
    }
    let loaded = load_data(&args.data, None)?;
    let (first, last) = parse_window(&args.window)?;
    let splits = recursive_windows(&loaded.data, &first, &last, args.horizons)?;

    let outcomes: Vec<Result<OriginScores>> = splits
        .par_iter()
        .enumerate()
        .map(|(oi, split)| {
            run_origin(&loaded.data, split, oi, &policy, args.fit.lags, args.draws, args.seed)
        })
        .collect();
    let mut origins = Vec::with_capacity(outcomes.len());
    for o in outcomes {
        origins.push(o?);
    }

    let benchmark = args.benchmark.as_deref().map(load_benchmark).transpose()?;
    let mut rows = Vec::new();
    for o in &origins {
        for (h, target, abs, lpl) in &o.rows {
            for (j, var) in loaded.data.names.iter().enumerate() {
                let key = (o.origin.to_string(), *h, var.clone());
                let (bench_abs, bench_lpl) = match &benchmark {
                    Some(b) => {
                        let ba = b.mae.get(&key).copied().ok_or_else(|| {
                            Error::config(format!(
                                "benchmark run lacks origin {} horizon {h} variable {var}; \
                                 runs must cover identical origins",
                                o.origin
                            ))
                        })?;
                        let bl = b.lpl.get(&key).copied().ok_or_else(|| {
                            Error::config(format!(
                                "benchmark run lacks log score at origin {} horizon {h} \
                                 variable {var}",
                                o.origin
                            ))
                        })?;
                        (Some(ba), Some(bl))
                    }
                    None => (None, None),
                };
                rows.push(ScoreRow {
                    origin: o.origin,
                    horizon: *h,
                    target: *target,
                    variable: var.clone(),
                    abs_error: abs[j],
                    lpl: lpl[j],
                    bench_abs,
                    bench_lpl,
                });
            }
        }
    }
    if let Some(b) = &benchmark {
        let run_keys = rows.len();
        if b.mae.len() != run_keys {
            return Err(Error::config(format!(
                "benchmark run covers {} scores, this run {run_keys}; \
                 origins/horizons/variables must match",
                b.mae.len()
            )));
        }
    }

    let mut out = OutputDir::create(&args.out)?;
    let (mae, lpl, cum, summary) = backtest_tables(&rows, benchmark.as_ref(), None);
    out.write("mae.csv", &mae)?;
    out.write("lpl.csv", &lpl)?;
    out.write("lpl_cumulative.csv", &cum)?;
    out.write("summary.csv", &summary)?;
    let cut = args.eval_cut.as_deref().map(str::parse::<MonthDate>).transpose()?;
    if let Some(c) = &cut {
        let (mae_c, lpl_c, cum_c, summary_c) = backtest_tables(&rows, benchmark.as_ref(), Some(c));
        out.write("mae_cut.csv", &mae_c)?;
        out.write("lpl_cut.csv", &lpl_c)?;
        out.write("lpl_cumulative_cut.csv", &cum_c)?;
        out.write("summary_cut.csv", &summary_c)?;
    }

    // per-origin fit record: which alpha/lambda each refit picked
    let mut fits = String::from("# benchmark: none (per-origin fitted hyperparameters)\n");
    fits.push_str("origin,alpha,lambda\n");
    for o in &origins {
        fits.push_str(&format!("{},{},{}\n", o.origin, alpha_label(o.alpha), fmt17(o.lambda)));
    }
    out.write("origin_fits.csv", &fits)?;

    let mut inputs = vec![data_input_record(&loaded, &args.data)];
    if let Some(p) = &args.benchmark {
        inputs.push(InputRecord {
            role: "benchmark".to_string(),
            path: p.display().to_string(),
            sha256: sha256_of_file(p)?,
        });
    }
    let config = BacktestConfig {
        fit: fit_config(&args.data, &args.fit, &policy, &loaded),
        origins: format!("{first}:{last}"),
        horizons: args.horizons,
        draws: args.draws,
        seed: args.seed,
        eval_cut: cut.map(|c| c.to_string()),
        benchmark: args.benchmark.as_ref().map(|p| p.display().to_string()),
    };
    out.finish("backtest", config, inputs)?;
    println!(
        "backtest: {} origins ({first}..{last}), horizons 1..{}, {} scored targets",
        origins.len(),
        args.horizons,
        rows.len() / loaded.data.n_vars().max(1)
    );
    Ok(())
}

// ---------------------------------------------------------------------
// simstudy
// ---------------------------------------------------------------------

#[derive(Serialize)]
struct SimstudyConfig {
    replications: usize,
    lags: usize,
    t_sim: usize,
    draws: usize,
    horizons: usize,
    tau: f64,
    seed: u64,
    alpha_grid: Vec<String>,
    lambda_grid: Vec<f64>,
}

fn cmd_simstudy(args: &SimstudyArgs) -> Result<()> {
    let config = StudyConfig {
        dgps: all_dgps(),
        alpha_grid: default_table_alpha_grid(),
        lambda_grid: default_lambda_grid(),
        replications: args.reps,
        p_est: args.lags,
        t_sim: args.t_sim,
        n_draws: args.draws,
        h_max: args.horizons,
        tau: args.tau,
        seed: args.seed,
    };
    let result = run_study(&config)?;

    let mut table = String::from(
        "# benchmark: alpha=inf column (cells are mean impulse-response MAEs \
         relative to the uncoarsened model)\n",
    );
    for note in &result.failures {
        table.push_str(&format!("# flagged: {note}\n"));
    }
    table.push_str(&format!("dgp,{}\n", result.alpha_labels.join(",")));
    for dgp in &result.dgp_labels {
        let mut line = dgp.clone();
        for label in &result.alpha_labels {
            let cell = result.cell(dgp, label).expect("every cell is present");
            line.push(',');
            line.push_str(&fmt17(cell.rel_mae));
        }
        table.push_str(&line);
        table.push('\n');
    }

    let mut raw = String::from(
        "# benchmark: none (per-replication raw impulse-response MAEs)\n",
    );
    raw.push_str("dgp,replication,alpha,mae,lambda\n");
    for r in &result.detail {
        raw.push_str(&format!(
            "{},{},{},{},{}\n",
            r.dgp,
            r.replication,
            r.alpha_label,
            fmt17(r.mae),
            fmt17(r.lambda)
        ));
    }

    let mut out = OutputDir::create(&args.out)?;
    out.write("table1.csv", &table)?;
    out.write("table1_raw.csv", &raw)?;
    let config_record = SimstudyConfig {
        replications: args.reps,
        lags: args.lags,
        t_sim: args.t_sim,
        draws: args.draws,
        horizons: args.horizons,
        tau: args.tau,
        seed: args.seed,
        alpha_grid: config.alpha_grid.iter().map(|&a| alpha_label(a)).collect(),
        lambda_grid: config.lambda_grid.clone(),
    };
    out.finish("simstudy", config_record, vec![])?;
    println!(
        "simstudy: {} processes x {} replications, {} flagged notes",
        result.dgp_labels.len(),
        args.reps,
        result.failures.len()
    );
    Ok(())
}
