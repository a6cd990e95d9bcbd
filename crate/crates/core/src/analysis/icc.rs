use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

/// Two-way random effects, absolute agreement, single measure: ICC(2,1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IccResult {
    pub icc: f64,
    /// Between-subject (row) mean square.
    pub between_subject_ms: f64,
    /// Between-rater (column) mean square.
    pub between_rater_ms: f64,
    /// Residual mean square.
    pub error_ms: f64,
    pub n_subjects: usize,
    pub n_raters: usize,
}

/// ICC(2,1) of a subjects x raters table:
///
/// `(MSR - MSE) / (MSR + (k-1) MSE + k (MSC - MSE) / n)`
pub fn icc(ratings: &DenseMatrix) -> Result<IccResult> {
    let (n, k) = ratings.shape();
    if n < 2 || k < 2 {
        return Err(Error::Parameter(format!(
            "icc needs at least 2 subjects and 2 raters, got {n}x{k}"
        )));
    }
    if !ratings.is_finite() {
        return Err(Error::Input("icc ratings contain non-finite values".into()));
    }
    let (nf, kf) = (n as f64, k as f64);
    let row_means: Vec<f64> = (0..n).map(|i| ratings.row(i).iter().sum::<f64>() / kf).collect();
    let col_means: Vec<f64> = (0..k)
        .map(|j| (0..n).map(|i| ratings.get(i, j)).sum::<f64>() / nf)
        .collect();
    let grand = row_means.iter().sum::<f64>() / nf;

    let ss_rows = kf * row_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>();
    let ss_cols = nf * col_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>();
    let mut ss_err = 0.0;
    let mut ss_total = 0.0;
    for (i, rm) in row_means.iter().enumerate() {
        for (j, cm) in col_means.iter().enumerate() {
            let x = ratings.get(i, j);
            ss_total += (x - grand).powi(2);
            ss_err += (x - rm - cm + grand).powi(2);
        }
    }
    if ss_total == 0.0 {
        return Err(Error::Degenerate("ratings have zero total variance".into()));
    }

    let msr = ss_rows / (nf - 1.0);
    let msc = ss_cols / (kf - 1.0);
    let mse = ss_err / ((nf - 1.0) * (kf - 1.0));
    let denom = msr + (kf - 1.0) * mse + kf * (msc - mse) / nf;
    if denom == 0.0 {
        return Err(Error::Degenerate("icc denominator vanished".into()));
    }
    Ok(IccResult {
        icc: (msr - mse) / denom,
        between_subject_ms: msr,
        between_rater_ms: msc,
        error_ms: mse,
        n_subjects: n,
        n_raters: k,
    })
}
