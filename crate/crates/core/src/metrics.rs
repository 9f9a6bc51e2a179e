//! Forecast error summaries.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `sqrt(mean((f − y)²))` over every entry.
pub fn rmse(forecasts: &[f64], targets: &[f64]) -> Result<f64> {
    if forecasts.len() != targets.len() || targets.is_empty() {
        return Err(Error::shape(
            "rmse",
            format!("{} forecasts vs {} targets", forecasts.len(), targets.len()),
        ));
    }
    let ss: f64 = forecasts
        .iter()
        .zip(targets)
        .map(|(f, y)| (f - y) * (f - y))
        .sum();
    Ok((ss / targets.len() as f64).sqrt())
}

/// RMSE per horizon step for row-major `[samples, horizon]` buffers.
pub fn rmse_by_step(forecasts: &[f64], targets: &[f64], horizon: usize) -> Result<Vec<f64>> {
    if horizon == 0
        || forecasts.len() != targets.len()
        || targets.is_empty()
        || !targets.len().is_multiple_of(horizon)
    {
        return Err(Error::shape(
            "rmse_by_step",
            format!("{} values for horizon {horizon}", targets.len()),
        ));
    }
    let rows = targets.len() / horizon;
    Ok((0..horizon)
        .map(|h| {
            let ss: f64 = (0..rows)
                .map(|r| {
                    let i = r * horizon + h;
                    (forecasts[i] - targets[i]).powi(2)
                })
                .sum();
            (ss / rows as f64).sqrt()
        })
        .collect())
}

/// One row of a results table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub method: String,
    /// Window setting, `N/H`.
    pub config: String,
    pub split: String,
    pub rmse: f64,
}
