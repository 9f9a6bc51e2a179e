use std::path::Path;

use serde::{Deserialize, Serialize};

use super::align::Aligned;
use super::scale::MinMaxScaler;
use crate::compute::Tensor;
use crate::error::{Error, Result};
use crate::model::MAIN_CHANNEL;

const TRAIN_FRACTION: f64 = 0.8;
const VALID_FRACTION: f64 = 0.1;

const CACHE_FORMAT: &str = "fuzzformer-dataset";
const CACHE_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "valid" | "validation" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split `{other}`"))),
        }
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One window. Inputs are rows `origin + 1 - N ..= origin`; targets are the
/// main channel at rows `origin + 1 ..= origin + H`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub origin: usize,
    pub split: Split,
}

/// Window origins at `stride`, the chronological split, and the number of
/// samples dropped at each boundary because their targets reach into the next
/// split's inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowPlan {
    pub samples: Vec<Sample>,
    pub embargoed: usize,
}

/// Plans sliding windows over `rows` rows.
pub fn make_windows(
    rows: usize,
    lookback: usize,
    horizon: usize,
    stride: usize,
) -> Result<WindowPlan> {
    if lookback == 0 || horizon == 0 || stride == 0 {
        return Err(Error::Config(
            "lookback, horizon and stride must be at least 1".into(),
        ));
    }
    if rows < lookback + horizon {
        return Err(Error::Data(format!(
            "{rows} rows cannot hold a window of {lookback} inputs and {horizon} targets"
        )));
    }
    let origins: Vec<usize> = (lookback - 1..rows - horizon).step_by(stride).collect();
    let n = origins.len();
    let n_train = (TRAIN_FRACTION * n as f64).floor() as usize;
    let n_valid = (VALID_FRACTION * n as f64).floor() as usize;
    let label = |i: usize| {
        if i < n_train {
            Split::Train
        } else if i < n_train + n_valid {
            Split::Valid
        } else {
            Split::Test
        }
    };
    let labelled: Vec<Sample> = origins
        .iter()
        .enumerate()
        .map(|(i, &origin)| Sample {
            origin,
            split: label(i),
        })
        .collect();
    // Earliest input row of each later split.
    let first_input = |split: Split| {
        labelled
            .iter()
            .find(|s| s.split > split)
            .map(|s| s.origin + 1 - lookback)
    };
    let boundary = [first_input(Split::Train), first_input(Split::Valid)];
    let mut samples = Vec::with_capacity(n);
    let mut embargoed = 0;
    for s in labelled {
        let limit = match s.split {
            Split::Train => boundary[0],
            Split::Valid => boundary[1],
            Split::Test => None,
        };
        if limit.is_some_and(|start| s.origin + horizon >= start) {
            embargoed += 1;
        } else {
            samples.push(s);
        }
    }
    Ok(WindowPlan { samples, embargoed })
}

/// A scaled, windowed and split multichannel dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowedDataset {
    pub lookback: usize,
    pub horizon: usize,
    pub stride: usize,
    pub channels: Vec<String>,
    /// ISO dates, one per row.
    pub calendar: Vec<String>,
    /// Scaled values, row-major `rows × channels`.
    pub values: Vec<f64>,
    pub scaler: MinMaxScaler,
    /// Rows the scaler was fitted on (`0..fit_rows`).
    pub fit_rows: usize,
    pub samples: Vec<Sample>,
    pub embargoed: usize,
}

#[derive(Serialize, Deserialize)]
struct CacheFile {
    format: String,
    version: u32,
    dataset: WindowedDataset,
}

impl WindowedDataset {
    /// Windows and splits `aligned`, fits the scaler on the rows spanned by
    /// training samples, and scales every row with it.
    pub fn prepare(
        aligned: &Aligned,
        lookback: usize,
        horizon: usize,
        stride: usize,
    ) -> Result<Self> {
        let plan = make_windows(aligned.rows(), lookback, horizon, stride)?;
        let last_train = plan
            .samples
            .iter()
            .filter(|s| s.split == Split::Train)
            .map(|s| s.origin)
            .max()
            .ok_or_else(|| Error::Data("no training windows".into()))?;
        let fit_rows = last_train + horizon + 1;
        let scaler = MinMaxScaler::fit(&aligned.values, aligned.channels(), 0..fit_rows)?;
        Ok(Self {
            lookback,
            horizon,
            stride,
            channels: aligned.names.clone(),
            calendar: aligned.calendar.iter().map(|d| d.to_string()).collect(),
            values: scaler.apply(&aligned.values),
            scaler,
            fit_rows,
            samples: plan.samples,
            embargoed: plan.embargoed,
        })
    }

    pub fn rows(&self) -> usize {
        self.calendar.len()
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.samples.len())
            .filter(|&i| self.samples[i].split == split)
            .collect()
    }

    pub fn value(&self, row: usize, channel: usize) -> f64 {
        self.values[row * self.num_channels() + channel]
    }

    /// Input windows `[B, N, D_X]`.
    pub fn inputs(&self, idx: &[usize]) -> Tensor {
        let (n, d) = (self.lookback, self.num_channels());
        let mut data = Vec::with_capacity(idx.len() * n * d);
        for &i in idx {
            let start = self.samples[i].origin + 1 - n;
            data.extend_from_slice(&self.values[start * d..(start + n) * d]);
        }
        Tensor::new(vec![idx.len(), n, d], data).expect("consistent window shape")
    }

    /// Main-channel targets `[B, H]`.
    pub fn targets(&self, idx: &[usize]) -> Tensor {
        let h = self.horizon;
        let mut data = Vec::with_capacity(idx.len() * h);
        for &i in idx {
            let o = self.samples[i].origin;
            data.extend((o + 1..=o + h).map(|r| self.value(r, MAIN_CHANNEL)));
        }
        Tensor::new(vec![idx.len(), h], data).expect("consistent target shape")
    }

    /// Main-channel input window of sample `i` (length `N`).
    pub fn main_window(&self, i: usize) -> Vec<f64> {
        let o = self.samples[i].origin;
        (o + 1 - self.lookback..=o)
            .map(|r| self.value(r, MAIN_CHANNEL))
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&CacheFile {
            format: CACHE_FORMAT.into(),
            version: CACHE_VERSION,
            dataset: self.clone(),
        })?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: CacheFile = serde_json::from_str(s)?;
        if file.format != CACHE_FORMAT || file.version != CACHE_VERSION {
            return Err(Error::Data(format!(
                "unsupported dataset cache {} v{}",
                file.format, file.version
            )));
        }
        Ok(file.dataset)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
