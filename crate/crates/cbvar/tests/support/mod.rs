//! Shared helpers for the integration suites: textbook conjugate updates
//! computed with explicit matrix inverses, quadrature utilities, synthetic
//! panel generators, and a process-level runner for the command-line tool.

#![allow(dead_code)] // each test binary uses its own subset

use std::path::Path;
use std::process::Output;

use cbvar::dataio::{Dataset, MonthDate};
use cbvar::prior::PriorSpec;
use cbvar::rng::stream_rng;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Largest elementwise difference between two matrices, relative to the
/// largest magnitude in the reference.
pub fn max_rel_diff(got: &DMatrix<f64>, want: &DMatrix<f64>) -> f64 {
    let scale = want.amax().max(1e-300);
    (got - want).amax() / scale
}

/// Textbook normal-inverse-Wishart update computed with explicit inverses
/// (`try_inverse`), independent of the library's factorization-based path.
/// The tempering enters only by scaling the data cross-products and the
/// sample size by `zeta`.
pub struct NaiveNiw {
    pub a_bar: DMatrix<f64>,
    pub v_bar: DMatrix<f64>,
    pub s_bar: DMatrix<f64>,
    pub df: f64,
}

pub fn naive_tempered_niw(
    prior: &PriorSpec,
    xtx: &DMatrix<f64>,
    xty: &DMatrix<f64>,
    yty: &DMatrix<f64>,
    t: usize,
    zeta: f64,
) -> NaiveNiw {
    assert_eq!(prior.dummy_y.nrows(), 0, "oracle expects a folded prior");
    let precision = zeta * xtx + &prior.v_inv;
    let v_bar = precision.clone().try_inverse().expect("posterior precision invertible");
    let a_bar = &v_bar * (zeta * xty + &prior.v_inv * &prior.a_mean);
    let s_bar = zeta * yty + prior.a_mean.transpose() * &prior.v_inv * &prior.a_mean
        - a_bar.transpose() * &precision * &a_bar
        + &prior.s_scale;
    NaiveNiw { a_bar, v_bar, s_bar, df: prior.v_df + zeta * t as f64 }
}

/// Simulate a stationary VAR(1) panel with a random stable coefficient
/// matrix (spectral radius capped via row-sum scaling) and unit shocks.
pub fn random_stationary_dataset(seed: u64, m: usize, t: usize) -> Dataset {
    let mut rng = stream_rng(seed, 0);
    let mut a = DMatrix::from_fn(m, m, |i, j| {
        let base: f64 = if i == j { 0.4 } else { 0.0 };
        let noise: f64 = StandardNormal.sample(&mut rng);
        base + 0.1 * noise
    });
    let max_row_sum = (0..m)
        .map(|i| (0..m).map(|j| a[(i, j)].abs()).sum::<f64>())
        .fold(0.0, f64::max);
    if max_row_sum > 0.9 {
        a *= 0.9 / max_row_sum;
    }
    let intercept = DVector::from_fn(m, |i, _| 0.2 * (i as f64 + 1.0));

    let burn = 50;
    let mut values = DMatrix::zeros(t, m);
    let mut y = DVector::zeros(m);
    for step in 0..burn + t {
        let eps = DVector::from_fn(m, |_, _| StandardNormal.sample(&mut rng));
        y = &intercept + &a * &y + eps;
        if step >= burn {
            values.set_row(step - burn, &y.transpose());
        }
    }
    let names = (0..m).map(|j| format!("y{}", j + 1)).collect();
    Dataset::from_values(names, values, MonthDate::new(1990, 1).unwrap()).unwrap()
}

/// Gauss-Legendre nodes and weights on [-1, 1], by Newton iteration on
/// the Legendre polynomial (standard construction).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Chebyshev-like initial guess for the i-th positive root
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // evaluate P_n(x) and P_n'(x) by the three-term recurrence
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Gauss-Legendre rule mapped onto [lo, hi].
pub fn gauss_legendre_on(n: usize, lo: f64, hi: f64) -> (Vec<f64>, Vec<f64>) {
    let (xs, ws) = gauss_legendre(n);
    let mid = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    (
        xs.iter().map(|x| mid + half * x).collect(),
        ws.iter().map(|w| half * w).collect(),
    )
}

/// Log density of a univariate Student-t with `nu` degrees of freedom,
/// location `mu`, and squared scale `scale2`.
pub fn log_student_t(x: f64, mu: f64, scale2: f64, nu: f64) -> f64 {
    use statrs::function::gamma::ln_gamma;
    let z2 = (x - mu) * (x - mu) / scale2;
    ln_gamma(0.5 * (nu + 1.0))
        - ln_gamma(0.5 * nu)
        - 0.5 * (nu * std::f64::consts::PI).ln()
        - 0.5 * scale2.ln()
        - 0.5 * (nu + 1.0) * (1.0 + z2 / nu).ln()
}

/// Write a monthly CSV in the standard macro-panel layout (date column
/// named `sasdate`, then one column per series) with level paths that the
/// default transforms map to stationary series: rates fluctuate around a
/// level, the price index is a positive random walk in logs.
pub fn write_fred_like_csv(path: &Path, t: usize, seed: u64) {
    let mut rng = stream_rng(seed, 9);
    let mut unrate: f64 = 5.5;
    let mut fedfunds: f64 = 3.0;
    let mut log_cpi: f64 = 100.0f64.ln();
    let mut body = String::from("sasdate,UNRATE,CPIAUCSL,FEDFUNDS\n");
    let start = MonthDate::new(1985, 1).unwrap();
    for step in 0..t {
        let e1: f64 = StandardNormal.sample(&mut rng);
        let e2: f64 = StandardNormal.sample(&mut rng);
        let e3: f64 = StandardNormal.sample(&mut rng);
        unrate = 5.5 + 0.9 * (unrate - 5.5) + 0.2 * e1;
        log_cpi += 0.002 + 0.003 * e2;
        fedfunds = 3.0 + 0.85 * (fedfunds - 3.0) + 0.25 * e3;
        let d = start.plus_months(step as i64);
        body.push_str(&format!("{d},{unrate:.8},{:.8},{fedfunds:.8}\n", log_cpi.exp()));
    }
    std::fs::write(path, body).unwrap();
}

/// Write a plain panel CSV (generic `y*` names load in levels) plus a
/// matching custom variable-list file; returns the list path.
pub fn write_panel_csv(dir: &Path, name: &str, data: &Dataset) -> std::path::PathBuf {
    data.write_csv(&dir.join(name)).unwrap();
    let vars = dir.join("variables.txt");
    std::fs::write(&vars, data.names.join("\n")).unwrap();
    vars
}

/// Run the command-line binary with the given arguments.
pub fn run_cli(args: &[&str]) -> Output {
    std::process::Command::new(env!("CARGO_BIN_EXE_cbvar"))
        .args(args)
        .output()
        .expect("binary runs")
}

pub fn assert_cli_ok(out: &Output) {
    assert!(
        out.status.success(),
        "command failed (status {:?}):\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Random draw helper for oracle tests that need plain uniforms.
pub fn uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    rng.gen_range(lo..hi)
}

/// Rows of an output CSV with comment lines stripped; the first returned
/// row is the header.
pub fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap_or_else(|e| panic!("read {path:?}: {e}"))
        .lines()
        .filter(|l| !l.starts_with('#') && !l.is_empty())
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

/// All values of one named column, header excluded.
pub fn csv_column(rows: &[Vec<String>], name: &str) -> Vec<String> {
    let idx = rows[0]
        .iter()
        .position(|h| h == name)
        .unwrap_or_else(|| panic!("no column {name} in {:?}", rows[0]));
    rows[1..].iter().map(|r| r[idx].clone()).collect()
}

/// Assert that the named file has identical bytes under two run directories.
pub fn assert_same_bytes(a: &Path, b: &Path, name: &str) {
    let x = std::fs::read(a.join(name)).unwrap_or_else(|e| panic!("read {name} in {a:?}: {e}"));
    let y = std::fs::read(b.join(name)).unwrap_or_else(|e| panic!("read {name} in {b:?}: {e}"));
    assert_eq!(x, y, "{name} differs between {a:?} and {b:?}");
}

// ---------------------------------------------------------------------
// criterion runners shared between the oracle and acceptance suites
// ---------------------------------------------------------------------

use cbvar::design::{build_design, learning_rate};
use cbvar::posterior::coarsened_posterior;
use cbvar::prior::{apply_dummies, PriorBuilder, TightnessRule};

/// Worst relative errors of the library posterior against the textbook
/// update over random small instances: full-weight likelihood, tempered
/// likelihood (scaled sufficient statistics), and the degrees of freedom.
pub struct ConjugateErrors {
    pub full: f64,
    pub tempered: f64,
    pub df: f64,
}

pub fn conjugate_oracle_errors(instances: usize, seed: u64) -> ConjugateErrors {
    let mut worst = ConjugateErrors { full: 0.0, tempered: 0.0, df: 0.0 };
    for i in 0..instances {
        let mut rng = stream_rng(seed, 1000 + i as u64);
        let m = rng.gen_range(1..=3usize);
        let p = rng.gen_range(1..=2usize);
        let t_raw = rng.gen_range(3 * p + 8..=60 + p);
        let data = random_stationary_dataset(seed + 7 * i as u64, m, t_raw);
        let design = build_design(&data, p).unwrap();

        let mut builder = PriorBuilder::from_data(&data, p).unwrap();
        if i % 2 == 0 {
            // half the instances without dummy observations
            builder.kappa = TightnessRule::Off;
            builder.xi = TightnessRule::Off;
        }
        let lambda = uniform(&mut rng, 0.05, 1.0);
        let prior = builder.build(lambda).unwrap();
        let folded = apply_dummies(&design, &prior).unwrap();
        let (xtx, xty, yty) = design.cross_products();
        let t = design.t_effective();

        // full-weight likelihood against the textbook update
        let rate_full = learning_rate(f64::INFINITY, t).unwrap();
        let post_full = coarsened_posterior(&design, &prior, &rate_full).unwrap();
        let want = naive_tempered_niw(&folded, &xtx, &xty, &yty, t, 1.0);
        worst.full = worst
            .full
            .max(max_rel_diff(&post_full.a_bar, &want.a_bar))
            .max(max_rel_diff(&post_full.v_bar, &want.v_bar))
            .max(max_rel_diff(&post_full.s_bar, &want.s_bar));
        worst.df = worst.df.max((post_full.df - want.df).abs() / want.df);

        // tempered likelihood against the scaled-statistics oracle
        let alpha = uniform(&mut rng, 5.0, 4.0 * t as f64);
        let rate = learning_rate(alpha, t).unwrap();
        let post = coarsened_posterior(&design, &prior, &rate).unwrap();
        let want = naive_tempered_niw(&folded, &xtx, &xty, &yty, t, rate.zeta);
        worst.tempered = worst
            .tempered
            .max(max_rel_diff(&post.a_bar, &want.a_bar))
            .max(max_rel_diff(&post.v_bar, &want.v_bar))
            .max(max_rel_diff(&post.s_bar, &want.s_bar));
        worst.df = worst.df.max((post.df - want.df).abs() / want.df);
    }
    worst
}

/// Relative errors of the closed-form scalar posterior against dense
/// Gauss-Legendre integration of prior x likelihood^zeta over
/// (intercept, slope, log variance).
pub struct QuadratureReport {
    pub mean_err: f64,
    pub var_err: f64,
    pub sigma2_err: f64,
}

pub fn quadrature_comparison() -> QuadratureReport {
    // six effective observations from an AR(1) with intercept
    let mut rng = stream_rng(424242, 0);
    let (a0_true, a1_true, sd) = (0.5, 0.6, 0.8);
    let mut values = DMatrix::zeros(7, 1);
    let mut y = a0_true / (1.0 - a1_true);
    for t in 0..7 {
        let e: f64 = StandardNormal.sample(&mut rng);
        y = a0_true + a1_true * y + sd * e;
        values[(t, 0)] = y;
    }
    let data =
        Dataset::from_values(vec!["y1".into()], values, MonthDate::new(2000, 1).unwrap()).unwrap();
    let design = build_design(&data, 1).unwrap();
    let t = design.t_effective();
    assert_eq!(t, 6);

    let mut builder = PriorBuilder::from_data(&data, 1).unwrap();
    builder.kappa = TightnessRule::Off;
    builder.xi = TightnessRule::Off;
    let prior = builder.build(0.4).unwrap();
    let rate = learning_rate(25.0, t).unwrap();
    let post = coarsened_posterior(&design, &prior, &rate).unwrap();

    // closed-form summaries under the normal-inverse-gamma posterior
    let df = post.df;
    let s_bar = post.s_bar[(0, 0)];
    let lib_mean = [post.a_bar[(0, 0)], post.a_bar[(1, 0)]];
    let lib_var = [
        post.v_bar[(0, 0)] * s_bar / (df - 2.0),
        post.v_bar[(1, 1)] * s_bar / (df - 2.0),
    ];
    let lib_sigma2 = s_bar / (df - 2.0);

    // prior pieces for the integrand (v_inv is diagonal here)
    let prior_mean = [prior.a_mean[(0, 0)], prior.a_mean[(1, 0)]];
    let prior_prec = [prior.v_inv[(0, 0)], prior.v_inv[(1, 1)]];
    let s_prior = prior.s_scale[(0, 0)];
    let v_df = prior.v_df;
    let zeta = rate.zeta;

    // sufficient statistics of the six regression rows
    let (mut sy, mut sx, mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..t {
        let yi = design.y[(i, 0)];
        let xi = design.x[(i, 1)];
        sy += yi;
        sx += xi;
        sxy += xi * yi;
        sxx += xi * xi;
        syy += yi * yi;
    }

    // integration ranges: posterior location +- 14 posterior scales, log
    // variance +- 9 around the posterior mean of sigma^2
    let (n_a, n_u) = (120, 160);
    let (a0s, w0s) = gauss_legendre_on(
        n_a,
        lib_mean[0] - 14.0 * lib_var[0].sqrt(),
        lib_mean[0] + 14.0 * lib_var[0].sqrt(),
    );
    let (a1s, w1s) = gauss_legendre_on(
        n_a,
        lib_mean[1] - 14.0 * lib_var[1].sqrt(),
        lib_mean[1] + 14.0 * lib_var[1].sqrt(),
    );
    let (us, wus) = gauss_legendre_on(n_u, lib_sigma2.ln() - 9.0, lib_sigma2.ln() + 9.0);

    let tf = t as f64;
    let mut logw = Vec::with_capacity(n_a * n_a * n_u);
    for (&u, _) in us.iter().zip(&wus) {
        let sig2 = u.exp();
        // log prior of sigma^2 (inverse gamma from the Wishart scale) plus
        // the Jacobian of the log substitution
        let lp_sig = -(0.5 * v_df + 1.0) * u - 0.5 * s_prior / sig2 + u;
        for &a1 in &a1s {
            for &a0 in &a0s {
                let ssr = syy - 2.0 * a0 * sy - 2.0 * a1 * sxy
                    + 2.0 * a0 * a1 * sx
                    + a0 * a0 * tf
                    + a1 * a1 * sxx;
                let ll = -0.5 * zeta * tf * (2.0 * std::f64::consts::PI * sig2).ln()
                    - 0.5 * zeta * ssr / sig2;
                // conditional coefficient prior N(prior_mean, sig2 / prec)
                let d0 = a0 - prior_mean[0];
                let d1 = a1 - prior_mean[1];
                let lp_a = -0.5 * (d0 * d0 * prior_prec[0] + d1 * d1 * prior_prec[1]) / sig2
                    - u
                    + 0.5 * (prior_prec[0] * prior_prec[1]).ln();
                logw.push(ll + lp_a + lp_sig);
            }
        }
    }
    let peak = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);

    let mut z = 0.0;
    let (mut m0, mut m1, mut q0, mut q1, mut msig) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let mut idx = 0;
    for (&u, &wu) in us.iter().zip(&wus) {
        for (&a1, &w1) in a1s.iter().zip(&w1s) {
            for (&a0, &w0) in a0s.iter().zip(&w0s) {
                let w = (logw[idx] - peak).exp() * w0 * w1 * wu;
                idx += 1;
                z += w;
                m0 += w * a0;
                m1 += w * a1;
                q0 += w * a0 * a0;
                q1 += w * a1 * a1;
                msig += w * u.exp();
            }
        }
    }
    let mean = [m0 / z, m1 / z];
    let var = [q0 / z - mean[0] * mean[0], q1 / z - mean[1] * mean[1]];
    let sigma2 = msig / z;

    let rel = |got: f64, want: f64| (got - want).abs() / want.abs();
    QuadratureReport {
        mean_err: rel(mean[0], lib_mean[0]).max(rel(mean[1], lib_mean[1])),
        var_err: rel(var[0], lib_var[0]).max(rel(var[1], lib_var[1])),
        sigma2_err: rel(sigma2, lib_sigma2),
    }
}

/// Worst per-dataset gap (in nats, averaged over the panel's variables)
/// between the sampler's moment-matched Gaussian log predictive score at
/// h=1 and the analytic Student-t predictive of the conjugate model.
pub fn predictive_t_worst_gap(datasets: usize, n_draws: usize, seed: u64) -> f64 {
    use cbvar::montecarlo::{forecast, sample_posterior, score_forecasts};
    use cbvar::rng::derive_seed;

    let mut worst: f64 = 0.0;
    for i in 0..datasets {
        let mut rng = stream_rng(seed, 2000 + i as u64);
        let m = rng.gen_range(2..=3usize);
        let p = 2;
        let t_total = rng.gen_range(350..=500);
        let full = random_stationary_dataset(seed + 31 * i as u64, m, t_total);
        let train = full.head(t_total - 1).unwrap();

        let design = build_design(&train, p).unwrap();
        let builder = PriorBuilder::from_data(&train, p).unwrap();
        let prior = builder.build(0.2).unwrap();
        let rate = learning_rate(f64::INFINITY, design.t_effective()).unwrap();
        let post = coarsened_posterior(&design, &prior, &rate).unwrap();

        let draws =
            sample_posterior(&post, n_draws, derive_seed(seed, &[i as u64, 0])).unwrap();
        let fc =
            forecast(&draws, &train.values, &[1], derive_seed(seed, &[i as u64, 1])).unwrap();
        let realized = DMatrix::from_fn(1, m, |_, j| full.values[(t_total - 1, j)]);
        let focus: Vec<usize> = (0..m).collect();
        let scores = score_forecasts(&fc, &realized, &focus).unwrap();

        // analytic predictive: x = (1, y_T', y_{T-1}'), nu = df - M + 1,
        // per-variable squared scale (1 + x'Vx) * S_jj / nu
        let k = design.n_regressors();
        let mut x = DVector::zeros(k);
        x[0] = 1.0;
        for l in 1..=p {
            for j in 0..m {
                x[design.lag_column(l, j)] = train.values[(train.n_rows() - l, j)];
            }
        }
        let mu = post.a_bar.transpose() * &x;
        let c = 1.0 + (x.transpose() * &post.v_bar * &x)[(0, 0)];
        let nu = post.df - m as f64 + 1.0;
        let mut gap = 0.0;
        for j in 0..m {
            let scale2 = c * post.s_bar[(j, j)] / nu;
            let analytic = log_student_t(realized[(0, j)], mu[j], scale2, nu);
            gap += (scores.lpl[(0, j)] - analytic).abs();
        }
        worst = worst.max(gap / m as f64);
    }
    worst
}

/// Most negative scaled eigenvalue of V(zeta1) - V(zeta2) over random
/// instances with zeta1 < zeta2: coarsening more must never shrink the
/// coefficient dispersion in the matrix (PSD) order.
pub fn dispersion_ordering_worst_eig(instances: usize, seed: u64) -> f64 {
    let mut worst = f64::INFINITY;
    for i in 0..instances {
        let mut rng = stream_rng(seed, 3000 + i as u64);
        let m = rng.gen_range(1..=3usize);
        let p = rng.gen_range(1..=2usize);
        let t_raw = rng.gen_range(3 * p + 10..=70);
        let data = random_stationary_dataset(seed + 13 * i as u64, m, t_raw);
        let design = build_design(&data, p).unwrap();
        let builder = PriorBuilder::from_data(&data, p).unwrap();
        let prior = builder.build(uniform(&mut rng, 0.05, 0.8)).unwrap();

        let t = design.t_effective();
        let a_small = uniform(&mut rng, 5.0, 50.0);
        let a_large = a_small + uniform(&mut rng, 10.0, 200.0);
        let post_small =
            coarsened_posterior(&design, &prior, &learning_rate(a_small, t).unwrap()).unwrap();
        let post_large =
            coarsened_posterior(&design, &prior, &learning_rate(a_large, t).unwrap()).unwrap();

        let diff = &post_small.v_bar - &post_large.v_bar;
        let sym = 0.5 * (&diff + diff.transpose());
        let scale = post_large.v_bar.amax();
        let eig = sym.symmetric_eigen();
        let min_eig = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        worst = worst.min(min_eig / scale);
    }
    worst
}

/// Total 5-95% impulse-response band widths of an uncoarsened and a
/// coarsened fit of the same data; the second must be wider.
pub fn irf_band_widths(n_draws: usize, seed: u64) -> (f64, f64) {
    use cbvar::montecarlo::{irf, sample_posterior};
    use cbvar::rng::derive_seed;

    let data = random_stationary_dataset(seed, 2, 160);
    let p = 2;
    let design = build_design(&data, p).unwrap();
    let builder = PriorBuilder::from_data(&data, p).unwrap();
    let prior = builder.build(0.2).unwrap();
    let t = design.t_effective();

    let mut widths = [0.0_f64; 2];
    for (slot, alpha) in [(0, f64::INFINITY), (1, 30.0)] {
        let rate = learning_rate(alpha, t).unwrap();
        let post = coarsened_posterior(&design, &prior, &rate).unwrap();
        let draws = sample_posterior(&post, n_draws, derive_seed(seed, &[slot as u64])).unwrap();
        let set = irf(&draws, 0, 8, p).unwrap();
        let lo = &set.quantiles[0];
        let hi = &set.quantiles[set.levels.len() - 1];
        widths[slot] = (hi - lo).sum();
    }
    (widths[0], widths[1])
}
