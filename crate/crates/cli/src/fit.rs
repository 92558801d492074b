//! Least-squares fits on optimality-gap sequences.

use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Successive-gap ratio below which a step counts as part of the quadratic burst.
pub const BURST_RATIO: f64 = 0.1;
pub const MIN_POINTS: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn least_squares(xs: &[f64], ys: &[f64]) -> Option<LineFit> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return None;
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r_squared = if syy > 0.0 { (sxy * sxy) / (sxx * syy) } else { 1.0 };
    Some(LineFit {
        slope,
        intercept: my - slope * mx,
        r_squared,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearRateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// `−1/slope`, the number of iterations per e-fold.
    pub implied_factor: f64,
    /// Iteration indices `[start, end]` used by the fit.
    pub window: (usize, usize),
}

/// Fits `ln gap_k ≈ a + b·k` over the linear window: the positive prefix of
/// the sequence minus the trailing run of steps whose ratio drops below 0.1.
pub fn fit_linear_rate(gaps: &[f64]) -> Result<LinearRateFit> {
    let positive = gaps.iter().take_while(|g| **g > 0.0 && g.is_finite()).count();
    if positive < MIN_POINTS {
        return Err(CliError::InsufficientData(format!(
            "{positive} positive gaps, need {MIN_POINTS}"
        )));
    }
    let g = &gaps[..positive];
    let mut end = positive - 1;
    while end > 0 && g[end] / g[end - 1] < BURST_RATIO {
        end -= 1;
    }
    if end < 1 {
        return Err(CliError::InsufficientData("no linear phase before the burst".into()));
    }
    let xs: Vec<f64> = (0..=end).map(|k| k as f64).collect();
    let ys: Vec<f64> = g[..=end].iter().map(|v| v.ln()).collect();
    let fit = least_squares(&xs, &ys).ok_or_else(|| CliError::InsufficientData("degenerate window".into()))?;
    Ok(LinearRateFit {
        slope: fit.slope,
        intercept: fit.intercept,
        r_squared: fit.r_squared,
        implied_factor: if fit.slope < 0.0 { -1.0 / fit.slope } else { f64::INFINITY },
        window: (0, end),
    })
}

/// Order `p` in `gap_{k+1} ≈ C·gap_k^p` from the last `pairs` successive pairs
/// whose gaps both exceed `floor`.
pub fn fit_quadratic_order(gaps: &[f64], floor: f64, pairs: usize) -> Result<f64> {
    let usable: Vec<f64> = gaps.iter().copied().take_while(|g| *g > floor).collect();
    if usable.len() < pairs + 1 || pairs < 2 {
        return Err(CliError::InsufficientData(format!(
            "{} gaps above the floor, need {}",
            usable.len(),
            pairs + 1
        )));
    }
    let tail = &usable[usable.len() - pairs - 1..];
    let xs: Vec<f64> = tail[..pairs].iter().map(|g| g.ln()).collect();
    let ys: Vec<f64> = tail[1..].iter().map(|g| g.ln()).collect();
    least_squares(&xs, &ys)
        .map(|f| f.slope)
        .ok_or_else(|| CliError::InsufficientData("degenerate pairs".into()))
}

/// Slope of `ln y` against `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.iter().chain(ys).any(|v| !(*v > 0.0)) {
        return Err(CliError::InsufficientData("log-log fit needs positive data".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    least_squares(&lx, &ly)
        .map(|f| f.slope)
        .ok_or_else(|| CliError::InsufficientData("need two distinct x values".into()))
}
