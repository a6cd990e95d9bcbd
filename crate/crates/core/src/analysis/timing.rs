use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean and sample standard deviation of run durations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingSummary {
    pub method: String,
    pub mean_ms: f64,
    pub std_ms: f64,
    pub n_runs: usize,
}

pub fn timing_summary(method: &str, durations_ms: &[f64]) -> Result<TimingSummary> {
    if durations_ms.is_empty() {
        return Err(Error::Input(format!("no durations recorded for {method}")));
    }
    let n = durations_ms.len() as f64;
    let mean = durations_ms.iter().sum::<f64>() / n;
    let std = if durations_ms.len() == 1 {
        0.0
    } else {
        (durations_ms.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    Ok(TimingSummary {
        method: method.to_string(),
        mean_ms: mean,
        std_ms: std,
        n_runs: durations_ms.len(),
    })
}

impl fmt::Display for TimingSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.2} ± {:.2}", self.mean_ms, self.std_ms)
    }
}
