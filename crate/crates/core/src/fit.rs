//! Small regression helpers: ordinary least squares and envelope fits on
//! log-transformed growth data.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Straight-line OLS fit `y = slope * x + intercept`.
///
/// Returns `(slope, intercept, r_squared)`.
pub fn ols_line(xs: &[f64], ys: &[f64]) -> Result<(f64, f64, f64)> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::DegenerateFit(format!(
            "need >= 2 paired samples, got {} / {}",
            xs.len(),
            ys.len()
        )));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    if sxx <= f64::EPSILON * n {
        return Err(Error::DegenerateFit("no spread in abscissae".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy > 0.0 { (sxy * sxy) / (sxx * syy) } else { 1.0 };
    Ok((slope, intercept, r2))
}

/// Least-squares solve of an overdetermined linear system `design * beta = y`.
pub fn least_squares(design: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    if design.nrows() < design.ncols() {
        return Err(Error::DegenerateFit(format!(
            "{} rows for {} unknowns",
            design.nrows(),
            design.ncols()
        )));
    }
    let svd = design.clone().svd(true, true);
    svd.solve(y, 1e-12)
        .map_err(|e| Error::DegenerateFit(e.to_string()))
}

/// Upper-envelope adjustment: shifts a fitted model upward so that at most
/// `violation_fraction` of the residuals stay above it, then applies the
/// multiplicative `slack` on the linear scale (additive `ln slack` here).
///
/// `residuals` are `observed - predicted` on the log scale. Returns the
/// intercept shift to add to the fitted model.
pub fn envelope_shift(residuals: &[f64], violation_fraction: f64, slack: f64) -> f64 {
    if residuals.is_empty() {
        return 0.0;
    }
    let mut sorted: Vec<f64> = residuals.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let keep = ((1.0 - violation_fraction) * (sorted.len() as f64 - 1.0)).ceil() as usize;
    let q = sorted[keep.min(sorted.len() - 1)];
    q.max(0.0) + slack.ln()
}
