//! Fuzzformer: an LSTM and multi-head self-attention encoder feeding an
//! interpretable Takagi-Sugeno fuzzy head with ARIX local models, for
//! multi-horizon multivariate time-series forecasting.

// `!(x > 0.0)` style guards are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod arix;
pub mod attention;
pub mod baselines;
pub mod checkpoint;
pub mod compute;
pub mod data;
pub mod encoder;
pub mod error;
pub mod export;
pub mod fuzzy;
pub mod linalg;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod report;
pub mod train;

pub use checkpoint::Checkpoint;
pub use compute::{AdamConfig, Graph, ParamStore, Tensor, Var};
pub use data::{Split, WindowedDataset};
pub use error::{Error, ErrorKind, Result};
pub use losses::LossWeights;
pub use metrics::ResultRow;
pub use model::{Fuzzformer, ModelConfig};
pub use train::{TrainConfig, TrainOutcome};
