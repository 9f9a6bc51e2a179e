//! Forecast bundles and plot-ready CSV exports.

use std::path::Path;

use chrono::NaiveDate;

use crate::checkpoint::Checkpoint;
use crate::compute::Tensor;
use crate::data::csv_io;
use crate::error::{Error, Result};
use crate::fuzzy::bhattacharyya_matrix;
use crate::model::{Fuzzformer, Prediction, MAIN_CHANNEL};

/// A trailing block of a wide CSV (`date,<channel>,...`), in original units.
#[derive(Clone, Debug, PartialEq)]
pub struct InputWindow {
    pub dates: Vec<NaiveDate>,
    /// Row-major `rows × channels`, in checkpoint channel order.
    pub values: Vec<f64>,
}

/// Reads the last `lookback` rows of a wide CSV, selecting `channels` by
/// header name.
pub fn load_window_csv(
    path: impl AsRef<Path>,
    channels: &[String],
    lookback: usize,
) -> Result<InputWindow> {
    let path = path.as_ref();
    let src = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_io)?;
    let headers = reader.headers().map_err(csv_io)?.clone();
    let mut cols = Vec::with_capacity(channels.len());
    for name in channels {
        let col = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Data(format!("{src}: missing channel `{name}`")))?;
        cols.push(col);
    }
    let mut dates = Vec::new();
    let mut values = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_io)?;
        let line = record.position().map_or(0, |p| p.line());
        let parse_err = |msg: String| Error::Parse {
            path: src.clone(),
            line,
            msg,
        };
        let date = NaiveDate::parse_from_str(&record[0], "%Y-%m-%d")
            .map_err(|e| parse_err(e.to_string()))?;
        dates.push(date);
        for &c in &cols {
            let v: f64 = record
                .get(c)
                .unwrap_or("")
                .parse()
                .map_err(|_| parse_err(format!("bad value in column {}", c + 1)))?;
            if !v.is_finite() {
                return Err(Error::NonFiniteValue {
                    path: src.clone(),
                    line,
                });
            }
            values.push(v);
        }
    }
    if dates.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Data(format!(
            "{src}: dates must be strictly increasing"
        )));
    }
    if dates.len() < lookback {
        return Err(Error::Data(format!(
            "{src}: window holds {} rows, the model needs {lookback}",
            dates.len()
        )));
    }
    let skip = dates.len() - lookback;
    Ok(InputWindow {
        dates: dates.split_off(skip),
        values: values.split_off(skip * channels.len()),
    })
}

/// Writes `date,<channel>,...` rows, the layout [`load_window_csv`] reads.
pub fn write_wide_csv(
    names: &[String],
    dates: &[NaiveDate],
    values: &[f64],
    path: impl AsRef<Path>,
) -> Result<()> {
    let d = names.len();
    if d == 0 || values.len() != dates.len() * d {
        return Err(Error::Data(format!(
            "{} values do not fill {} rows of {d} channels",
            values.len(),
            dates.len()
        )));
    }
    let mut w = writer(path.as_ref())?;
    let mut header = vec!["date".to_string()];
    header.extend(names.iter().cloned());
    w.write_record(&header).map_err(csv_io)?;
    for (date, row) in dates.iter().zip(values.chunks(d)) {
        let mut rec = vec![date.to_string()];
        rec.extend(row.iter().map(f64::to_string));
        w.write_record(&rec).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

/// Everything a forecast run exports, in original units where a scaler is
/// known.
#[derive(Clone, Debug)]
pub struct ForecastBundle {
    pub prediction: Prediction,
    /// `[H]` aggregate forecast, original units.
    pub forecast: Vec<f64>,
    /// `[C][H]` rule forecasts, original units.
    pub rule_forecasts: Vec<Vec<f64>>,
    pub memberships: Vec<f64>,
}

pub fn forecast_bundle(ck: &Checkpoint, window: &InputWindow) -> Result<ForecastBundle> {
    let cfg = ck.model.config();
    let (n, d) = (cfg.lookback, cfg.channels);
    let scaled = match &ck.scaler {
        Some(s) => s.apply(&window.values),
        None => window.values.clone(),
    };
    let inputs = Tensor::new(vec![1, n, d], scaled)?;
    let prediction = ck.model.predict(&inputs)?;
    let unscale = |v: f64| match &ck.scaler {
        Some(s) => s.unscale_value(MAIN_CHANNEL, v),
        None => v,
    };
    let h = cfg.horizon;
    let rule_forecasts = prediction
        .rule_forecasts
        .data()
        .chunks(h)
        .map(|r| r.iter().map(|&v| unscale(v)).collect())
        .collect();
    Ok(ForecastBundle {
        forecast: prediction
            .forecast
            .data()
            .iter()
            .map(|&v| unscale(v))
            .collect(),
        rule_forecasts,
        memberships: prediction.memberships.data().to_vec(),
        prediction,
    })
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(csv_io)
}

/// `step,value,scaled`: the aggregate forecast.
pub fn write_forecast_csv(bundle: &ForecastBundle, path: impl AsRef<Path>) -> Result<()> {
    let mut w = writer(path.as_ref())?;
    w.write_record(["step", "value", "scaled"])
        .map_err(csv_io)?;
    for (j, (v, s)) in bundle
        .forecast
        .iter()
        .zip(bundle.prediction.forecast.data())
        .enumerate()
    {
        w.write_record([(j + 1).to_string(), v.to_string(), s.to_string()])
            .map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

/// `rule,step,value,membership`.
pub fn write_rules_csv(bundle: &ForecastBundle, path: impl AsRef<Path>) -> Result<()> {
    let mut w = writer(path.as_ref())?;
    w.write_record(["rule", "step", "value", "membership"])
        .map_err(csv_io)?;
    for (i, (rule, psi)) in bundle
        .rule_forecasts
        .iter()
        .zip(&bundle.memberships)
        .enumerate()
    {
        for (j, v) in rule.iter().enumerate() {
            w.write_record([
                i.to_string(),
                (j + 1).to_string(),
                v.to_string(),
                psi.to_string(),
            ])
            .map_err(csv_io)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// One row per cluster: centre, covariance (row-major) and Bhattacharyya
/// distances to every cluster.
pub fn write_clusters_csv(model: &Fuzzformer, path: impl AsRef<Path>) -> Result<()> {
    let clusters = model.clusters()?;
    let db = bhattacharyya_matrix(&clusters)?;
    let d = model.config().latent_dim;
    let c = clusters.len();
    let mut header = vec!["rule".to_string()];
    header.extend((0..d).map(|k| format!("mean_{k}")));
    header.extend((0..d * d).map(|k| format!("cov_{}_{}", k / d, k % d)));
    header.extend((0..c).map(|k| format!("bhattacharyya_{k}")));
    let mut w = writer(path.as_ref())?;
    w.write_record(&header).map_err(csv_io)?;
    for (i, cl) in clusters.iter().enumerate() {
        let mut row = vec![i.to_string()];
        row.extend(cl.mean().iter().map(f64::to_string));
        row.extend(cl.covariance().iter().map(f64::to_string));
        row.extend(db[i].iter().map(f64::to_string));
        w.write_record(&row).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

/// `layer,head,query_step,key_step,weight` for the first window of a batch.
pub fn write_attention_csv(prediction: &Prediction, path: impl AsRef<Path>) -> Result<()> {
    let mut w = writer(path.as_ref())?;
    w.write_record(["layer", "head", "query_step", "key_step", "weight"])
        .map_err(csv_io)?;
    for (l, heads) in prediction.attention.iter().enumerate() {
        for (h, t) in heads.iter().enumerate() {
            let n = t.shape()[1];
            for q in 0..n {
                for k in 0..n {
                    w.write_record([
                        l.to_string(),
                        h.to_string(),
                        q.to_string(),
                        k.to_string(),
                        t.data()[q * n + k].to_string(),
                    ])
                    .map_err(csv_io)?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes the full bundle (`forecast.csv`, `rules.csv`, `clusters.csv`,
/// `attention.csv`) into `dir`.
pub fn write_bundle(ck: &Checkpoint, bundle: &ForecastBundle, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    write_forecast_csv(bundle, dir.join("forecast.csv"))?;
    write_rules_csv(bundle, dir.join("rules.csv"))?;
    write_clusters_csv(&ck.model, dir.join("clusters.csv"))?;
    write_attention_csv(&bundle.prediction, dir.join("attention.csv"))?;
    Ok(())
}
