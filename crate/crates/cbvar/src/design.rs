//! VAR regression layout and the tempering rate.
//!
//! A VAR(p) for an M-variate series stacks into the multivariate
//! regression Y = X A + E, where row t of X is
//! (1, y'_{t-1}, ..., y'_{t-p}) and A is K x M with K = 1 + p*M.

use nalgebra::DMatrix;

use crate::dataio::Dataset;
use crate::error::{Error, Result};

/// Stacked regression form of a VAR(p).
#[derive(Clone, Debug)]
pub struct VarDesign {
    /// T_eff x M left-hand side; row t is y_{t+p} of the source panel.
    pub y: DMatrix<f64>,
    /// T_eff x K regressors; column 0 is the intercept, then lag blocks in
    /// order lag 1, ..., lag p, each block in variable order.
    pub x: DMatrix<f64>,
    pub p: usize,
    pub var_names: Vec<String>,
}

impl VarDesign {
    pub fn t_effective(&self) -> usize {
        self.y.nrows()
    }

    pub fn n_vars(&self) -> usize {
        self.y.ncols()
    }

    pub fn n_regressors(&self) -> usize {
        self.x.ncols()
    }

    /// Column of X holding lag `l` (1-based) of variable `j` (0-based).
    pub fn lag_column(&self, l: usize, j: usize) -> usize {
        lag_column(self.n_vars(), l, j)
    }

    /// Cross-product sufficient statistics (X'X, X'Y, Y'Y), unweighted.
    pub fn cross_products(&self) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        let xtx = self.x.transpose() * &self.x;
        let xty = self.x.transpose() * &self.y;
        let yty = self.y.transpose() * &self.y;
        (xtx, xty, yty)
    }

    /// Assemble from explicit matrices (simulation and binding helpers);
    /// checks row agreement and the K = 1 + p*M layout.
    pub fn from_parts(
        y: DMatrix<f64>,
        x: DMatrix<f64>,
        p: usize,
        var_names: Vec<String>,
    ) -> Result<Self> {
        if y.nrows() != x.nrows() {
            return Err(Error::config(format!(
                "y has {} rows but x has {}",
                y.nrows(),
                x.nrows()
            )));
        }
        if var_names.len() != y.ncols() {
            return Err(Error::config(format!(
                "{} names for {} equations",
                var_names.len(),
                y.ncols()
            )));
        }
        if x.ncols() != 1 + p * y.ncols() {
            return Err(Error::config(format!(
                "x has {} columns, expected {} for p={p}, M={}",
                x.ncols(),
                1 + p * y.ncols(),
                y.ncols()
            )));
        }
        Ok(VarDesign { y, x, p, var_names })
    }
}

/// Column index of lag `l` (1-based) of variable `j` (0-based) when there
/// are `m` variables; the intercept occupies column 0.
pub fn lag_column(m: usize, l: usize, j: usize) -> usize {
    1 + (l - 1) * m + j
}

/// Build the stacked regression for a VAR(p) on `data`. The first `p`
/// rows of the panel become initial conditions.
pub fn build_design(data: &Dataset, p: usize) -> Result<VarDesign> {
    if p == 0 {
        return Err(Error::config("lag order must be at least 1".to_string()));
    }
    let t_raw = data.n_rows();
    let m = data.n_vars();
    if t_raw < p + 2 {
        return Err(Error::data(format!(
            "need at least {} rows for a VAR({p}), got {t_raw}",
            p + 2
        )));
    }
    // surface NaNs with variable and date before they reach linear algebra
    data.validate()?;

    let t_eff = t_raw - p;
    let k = 1 + p * m;
    let mut y = DMatrix::zeros(t_eff, m);
    let mut x = DMatrix::zeros(t_eff, k);
    for t in 0..t_eff {
        x[(t, 0)] = 1.0;
        for j in 0..m {
            y[(t, j)] = data.values[(t + p, j)];
        }
        for l in 1..=p {
            let src = t + p - l;
            for j in 0..m {
                x[(t, lag_column(m, l, j))] = data.values[(src, j)];
            }
        }
    }
    Ok(VarDesign { y, x, p, var_names: data.names.clone() })
}

/// Tempering rate: the likelihood enters the posterior raised to zeta,
/// with zeta = alpha / (alpha + T); alpha = infinity recovers the
/// standard posterior with zeta exactly 1.
#[derive(Clone, Copy, Debug)]
pub struct LearningRate {
    pub alpha: f64,
    pub zeta: f64,
    pub t: usize,
}

/// Compute the rate for a coarsening level `alpha` in (0, inf] and sample
/// size `t`.
pub fn learning_rate(alpha: f64, t: usize) -> Result<LearningRate> {
    if t == 0 {
        return Err(Error::config("sample size must be positive".to_string()));
    }
    if alpha.is_nan() || alpha <= 0.0 {
        return Err(Error::config(format!("alpha must be in (0, inf], got {alpha}")));
    }
    let zeta = if alpha.is_infinite() { 1.0 } else { alpha / (alpha + t as f64) };
    Ok(LearningRate { alpha, zeta, t })
}

/// Render an alpha value for output ("inf" for the uncoarsened case).
pub fn alpha_label(alpha: f64) -> String {
    if alpha.is_infinite() {
        "inf".to_string()
    } else {
        format!("{alpha}")
    }
}

/// Parse an alpha value rendered by [`alpha_label`].
pub fn parse_alpha(s: &str) -> Result<f64> {
    let s = s.trim();
    if s.eq_ignore_ascii_case("inf") || s.eq_ignore_ascii_case("infinity") {
        return Ok(f64::INFINITY);
    }
    let v: f64 = s
        .parse()
        .map_err(|_| Error::config(format!("cannot parse alpha '{s}'")))?;
    if v.is_nan() || v <= 0.0 {
        return Err(Error::config(format!("alpha must be in (0, inf], got {s}")));
    }
    Ok(v)
}
