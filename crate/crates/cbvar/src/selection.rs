//! Automatic choice of the coarsening level alpha.
//!
//! Each candidate alpha is scored by an in-sample fit statistic MF and a
//! sparsity count MC (both from [`crate::posterior::fit_complexity`]),
//! with the prior tightness re-optimized at every alpha. The winner is
//! the knee of the MF-MC curve: after min-max normalizing both axes,
//! the point farthest from the straight line joining the first and last
//! grid points.

use serde::{Deserialize, Serialize};

use crate::design::{learning_rate, VarDesign};
use crate::error::{Error, Result};
use crate::posterior::{coarsened_posterior, fit_complexity, FitComplexity};
use crate::prior::{optimize_lambda, PriorBuilder};

/// Near-zero threshold for the complexity count.
pub const DEFAULT_TAU: f64 = 0.01;

/// Default alpha grid; infinity (no coarsening) is always the last entry.
pub fn default_alpha_grid() -> Vec<f64> {
    vec![25.0, 50.0, 75.0, 100.0, 125.0, 250.0, 350.0, 500.0, 1000.0, f64::INFINITY]
}

/// Fit/complexity point for one evaluated alpha.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EvaluatedAlpha {
    #[serde(flatten)]
    pub fit: FitComplexity,
    /// Tightness the marginal likelihood picked at this alpha.
    pub lambda: f64,
}

/// Fit/complexity curve over an alpha grid.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct AlphaGrid {
    /// Surviving points, in increasing alpha order.
    pub points: Vec<EvaluatedAlpha>,
    /// Grid values that failed, with the reason.
    pub failures: Vec<(f64, String)>,
}

impl AlphaGrid {
    pub fn from_points(points: Vec<EvaluatedAlpha>) -> Result<Self> {
        let grid = AlphaGrid { points, failures: vec![] };
        grid.check()?;
        Ok(grid)
    }

    fn check(&self) -> Result<()> {
        if self
            .points
            .windows(2)
            .any(|w| !(w[0].fit.alpha < w[1].fit.alpha))
        {
            return Err(Error::config("alpha points must be strictly increasing".to_string()));
        }
        Ok(())
    }
}

pub fn validate_alpha_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < 3 {
        return Err(Error::config(format!(
            "alpha grid needs at least 3 values, got {}",
            grid.len()
        )));
    }
    for &a in grid {
        if a.is_nan() || a <= 0.0 {
            return Err(Error::config(format!("alpha grid values must be in (0, inf], got {a}")));
        }
    }
    if grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::config("alpha grid must be strictly increasing".to_string()));
    }
    if !grid.last().unwrap().is_infinite() {
        return Err(Error::config(
            "alpha grid must end with inf (the uncoarsened benchmark)".to_string(),
        ));
    }
    Ok(())
}

/// Evaluate fit and complexity across an alpha grid, re-optimizing the
/// prior tightness at every alpha. Failing grid points are recorded and
/// skipped; fewer than 3 survivors is an error.
pub fn evaluate_alpha_grid(
    design: &VarDesign,
    builder: &PriorBuilder,
    lambda_grid: &[f64],
    alpha_grid: &[f64],
    tau: f64,
) -> Result<AlphaGrid> {
    validate_alpha_grid(alpha_grid)?;
    let mut points = Vec::with_capacity(alpha_grid.len());
    let mut failures = Vec::new();
    for &alpha in alpha_grid {
        let outcome = (|| {
            let rate = learning_rate(alpha, design.t_effective())?;
            let (lambda, _) = optimize_lambda(design, &rate, lambda_grid, builder)?;
            let prior = builder.build(lambda)?;
            let post = coarsened_posterior(design, &prior, &rate)?;
            let fit = fit_complexity(design, &post, &rate, tau)?;
            Ok::<EvaluatedAlpha, Error>(EvaluatedAlpha { fit, lambda })
        })();
        match outcome {
            Ok(pt) => points.push(pt),
            Err(e) => failures.push((alpha, e.to_string())),
        }
    }
    if points.len() < 3 {
        let detail = failures
            .iter()
            .map(|(a, e)| format!("alpha={}: {e}", crate::design::alpha_label(*a)))
            .collect::<Vec<_>>()
            .join("; ");
        return Err(Error::numeric(format!(
            "only {} alpha grid points survived ({detail})",
            points.len()
        )));
    }
    Ok(AlphaGrid { points, failures })
}

/// Knee of the fit-complexity curve. Both axes are min-max normalized;
/// the selected alpha maximizes the perpendicular distance to the line
/// from the first to the last point. Ties go to the larger alpha; a
/// collinear curve (all distances below 1e-12) selects infinity.
pub fn select_alpha_knee(grid: &AlphaGrid) -> Result<f64> {
    grid.check()?;
    let pts = &grid.points;
    if pts.len() < 3 {
        return Err(Error::config(format!(
            "knee selection needs at least 3 points, got {}",
            pts.len()
        )));
    }
    let norm = |v: &[f64]| -> Vec<f64> {
        let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if hi - lo <= 0.0 {
            // degenerate axis: every point projects to the same spot
            vec![0.0; v.len()]
        } else {
            v.iter().map(|x| (x - lo) / (hi - lo)).collect()
        }
    };
    let xs = norm(&pts.iter().map(|p| p.fit.mf).collect::<Vec<_>>());
    let ys = norm(&pts.iter().map(|p| p.fit.mc as f64).collect::<Vec<_>>());

    let (x0, y0) = (xs[0], ys[0]);
    let (x1, y1) = (*xs.last().unwrap(), *ys.last().unwrap());
    let len = ((x1 - x0).powi(2) + (y1 - y0).powi(2)).sqrt();

    let mut best_alpha = f64::INFINITY;
    let mut best_dist = f64::NEG_INFINITY;
    let mut any_off_line = false;
    for i in 0..pts.len() {
        let dist = if len <= 0.0 {
            // endpoints coincide: distance from the common point
            ((xs[i] - x0).powi(2) + (ys[i] - y0).powi(2)).sqrt()
        } else {
            ((x1 - x0) * (y0 - ys[i]) - (x0 - xs[i]) * (y1 - y0)).abs() / len
        };
        if dist >= 1e-12 {
            any_off_line = true;
        }
        // >= prefers the larger alpha on ties (grid is increasing)
        if dist >= best_dist {
            best_dist = dist;
            best_alpha = pts[i].fit.alpha;
        }
    }
    if !any_off_line {
        return Ok(f64::INFINITY);
    }
    Ok(best_alpha)
}
