//! Reference forecasters scored on the same windows as the main model.

mod arima;
mod lstm;
mod persistence;

pub use arima::{arima_forecast, fit_arima, ArimaFit, ArimaOrder};
pub use lstm::{LstmBaseline, LstmBaselineConfig};
pub use persistence::persistence_forecast;

use crate::data::{Split, WindowedDataset};
use crate::error::{Error, Result};
use crate::metrics::rmse;

/// RMSE over the windows a baseline could forecast, plus how many it skipped.
#[derive(Clone, Debug, PartialEq)]
pub struct BaselineScore {
    pub rmse: f64,
    pub evaluated: usize,
    pub skipped: usize,
}

fn score<F>(ds: &WindowedDataset, split: Split, forecast: F) -> Result<BaselineScore>
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
{
    let idx = ds.indices(split);
    if idx.is_empty() {
        return Err(Error::Data(format!("the {split} split is empty")));
    }
    let workers = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(idx.len());
    let chunk = idx.len().div_ceil(workers);
    // Each worker keeps its chunk's order; chunks are joined in order.
    let results: Vec<Vec<Option<Vec<f64>>>> = std::thread::scope(|s| {
        let handles: Vec<_> = idx
            .chunks(chunk)
            .map(|part| {
                let f = &forecast;
                s.spawn(move || {
                    part.iter()
                        .map(|&i| match f(&ds.main_window(i)) {
                            Ok(v) => Ok(Some(v)),
                            Err(Error::Fit(_)) => Ok(None),
                            Err(e) => Err(e),
                        })
                        .collect::<Result<Vec<_>>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("baseline worker panicked"))
            .collect::<Result<Vec<_>>>()
    })?;
    let mut forecasts = Vec::new();
    let mut kept = Vec::new();
    let mut skipped = 0;
    for (&i, f) in idx.iter().zip(results.into_iter().flatten()) {
        match f {
            Some(v) => {
                forecasts.extend(v);
                kept.push(i);
            }
            None => skipped += 1,
        }
    }
    if kept.is_empty() {
        return Err(Error::Fit(format!(
            "no window of the {split} split could be fitted"
        )));
    }
    Ok(BaselineScore {
        rmse: rmse(&forecasts, ds.targets(&kept).data())?,
        evaluated: kept.len(),
        skipped,
    })
}

pub fn evaluate_persistence(ds: &WindowedDataset, split: Split) -> Result<BaselineScore> {
    let h = ds.horizon;
    score(ds, split, |w| persistence_forecast(w, h))
}

/// Refits the model on every window's main-channel history.
pub fn evaluate_arima(
    ds: &WindowedDataset,
    split: Split,
    order: ArimaOrder,
) -> Result<BaselineScore> {
    let h = ds.horizon;
    score(ds, split, |w| arima_forecast(&fit_arima(w, order)?, w, h))
}
