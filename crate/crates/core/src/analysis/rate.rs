use crate::error::{Error, Result};
use crate::optim::OptimizerTrace;

/// Power-law fit `loss_t - floor ~ C * t^(-p)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub exponent: f64,
    pub constant: f64,
    pub r_squared: f64,
}

/// First iteration used by the fit.
const SKIP: usize = 5;

pub fn fit_rate(trace: &OptimizerTrace, loss_floor: f64) -> Result<RateFit> {
    fit_rate_values(&trace.losses(), loss_floor)
}

/// Least squares of `log(loss_t - floor)` on `log t` for `t >= 5`, where
/// `losses[t]` is the loss after iteration `t`. Points at or below the floor
/// are skipped.
pub fn fit_rate_values(losses: &[f64], loss_floor: f64) -> Result<RateFit> {
    if losses.len() < 10 {
        return Err(Error::Parameter(format!(
            "rate fit needs at least 10 records, got {}",
            losses.len()
        )));
    }
    let pts: Vec<(f64, f64)> = losses
        .iter()
        .enumerate()
        .skip(SKIP)
        .filter(|(_, l)| **l - loss_floor > 0.0)
        .map(|(t, l)| ((t as f64).ln(), (l - loss_floor).ln()))
        .collect();
    if pts.len() < 2 {
        return Err(Error::Degenerate("all residuals at the loss floor".into()));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    // a flat series is fitted exactly by slope 0
    let r_squared = if syy <= f64::EPSILON * n * my.abs().max(1.0) {
        1.0
    } else {
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    };
    Ok(RateFit {
        exponent: -slope,
        constant: intercept.exp(),
        r_squared,
    })
}
