use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-channel min-max statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl MinMaxScaler {
    /// Fits on `rows` of a row-major `values` matrix with `channels` columns.
    pub fn fit(values: &[f64], channels: usize, rows: Range<usize>) -> Result<Self> {
        if rows.is_empty() || rows.end * channels > values.len() {
            return Err(Error::Data(format!("cannot fit a scaler on rows {rows:?}")));
        }
        let mut min = vec![f64::INFINITY; channels];
        let mut max = vec![f64::NEG_INFINITY; channels];
        for r in rows {
            for c in 0..channels {
                let v = values[r * channels + c];
                min[c] = min[c].min(v);
                max[c] = max[c].max(v);
            }
        }
        if let Some(c) = (0..channels).find(|&c| max[c] <= min[c]) {
            return Err(Error::Data(format!(
                "channel {c} is constant over the fit range"
            )));
        }
        Ok(Self { min, max })
    }

    pub fn channels(&self) -> usize {
        self.min.len()
    }

    pub fn scale_value(&self, channel: usize, v: f64) -> f64 {
        (v - self.min[channel]) / (self.max[channel] - self.min[channel])
    }

    pub fn unscale_value(&self, channel: usize, v: f64) -> f64 {
        v * (self.max[channel] - self.min[channel]) + self.min[channel]
    }

    pub fn apply(&self, values: &[f64]) -> Vec<f64> {
        let d = self.channels();
        values
            .iter()
            .enumerate()
            .map(|(i, &v)| self.scale_value(i % d, v))
            .collect()
    }

    pub fn inverse(&self, values: &[f64]) -> Vec<f64> {
        let d = self.channels();
        values
            .iter()
            .enumerate()
            .map(|(i, &v)| self.unscale_value(i % d, v))
            .collect()
    }
}

/// Fits on `fit_rows` and scales the whole matrix; no clipping outside the
/// fit range.
pub fn fit_apply_minmax(
    values: &[f64],
    channels: usize,
    fit_rows: Range<usize>,
) -> Result<(Vec<f64>, MinMaxScaler)> {
    let scaler = MinMaxScaler::fit(values, channels, fit_rows)?;
    Ok((scaler.apply(values), scaler))
}
