//! Training loop, validation-based model selection and split evaluation.

use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::compute::{adam_step, AdamConfig, AdamState, Graph};
use crate::data::{Split, WindowedDataset};
use crate::error::{Error, Result};
use crate::losses::{composite_loss, LossBreakdown, LossWeights};
use crate::metrics::{rmse, rmse_by_step};
use crate::model::{Fuzzformer, ModelConfig};

/// Generator streams derived from the one run seed.
const STREAM_INIT: u64 = 0;
const STREAM_DROPOUT: u64 = 1;
const STREAM_SHUFFLE: u64 = 2;

/// Upper bound on windows used to place the initial cluster centres.
const CLUSTER_INIT_WINDOWS: usize = 2048;
const EVAL_CHUNK: usize = 256;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub optimizer: AdamConfig,
    pub loss_weights: LossWeights,
    /// Place cluster centres on the initial latent cloud before training.
    pub init_clusters: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 64,
            seed: 0,
            optimizer: AdamConfig::default(),
            loss_weights: LossWeights::default(),
            init_clusters: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if !(self.optimizer.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        self.loss_weights.validate()
    }
}

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Shuffles `indices` and cuts them into batches of at most `batch_size`.
pub fn epoch_batches<R: Rng + ?Sized>(
    indices: &[usize],
    batch_size: usize,
    rng: &mut R,
) -> Vec<Vec<usize>> {
    let mut order = indices.to_vec();
    order.shuffle(rng);
    order
        .chunks(batch_size.max(1))
        .map(<[usize]>::to_vec)
        .collect()
}

/// Per-epoch means of the loss components and the validation score.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: LossBreakdown,
    pub val_rmse: f64,
}

pub const LOSS_CSV_HEADER: &str = "epoch,l_mse,l_fcm,l_overlap,l_balance,composite,val_rmse";

impl EpochLog {
    pub fn csv_line(&self) -> String {
        let l = &self.loss;
        format!(
            "{},{},{},{},{},{},{}",
            self.epoch, l.mse, l.fcm, l.overlap, l.balance, l.composite, self.val_rmse
        )
    }
}

pub struct TrainOutcome {
    /// Parameters with the lowest validation RMSE seen (initialisation
    /// included).
    pub best: Fuzzformer,
    /// 0 when no epoch improved on the initial model.
    pub best_epoch: usize,
    pub best_val_rmse: f64,
    pub initial_val_rmse: f64,
    pub history: Vec<EpochLog>,
    pub seconds: f64,
}

/// Builds and initialises a model for `ds`.
pub fn init_model(
    model: &ModelConfig,
    train: &TrainConfig,
    ds: &WindowedDataset,
) -> Result<Fuzzformer> {
    check_dataset(model, ds)?;
    train.validate()?;
    let mut rng = stream_rng(train.seed, STREAM_INIT);
    let mut m = Fuzzformer::new(model.clone(), &mut rng)?;
    if train.init_clusters {
        let idx = ds.indices(Split::Train);
        let step = idx.len().div_ceil(CLUSTER_INIT_WINDOWS).max(1);
        let pick: Vec<usize> = idx.iter().copied().step_by(step).collect();
        if !pick.is_empty() {
            m.init_clusters(&ds.inputs(&pick))?;
        }
    }
    Ok(m)
}

pub fn check_dataset(model: &ModelConfig, ds: &WindowedDataset) -> Result<()> {
    if ds.lookback != model.lookback
        || ds.horizon != model.horizon
        || ds.num_channels() != model.channels
    {
        return Err(Error::Config(format!(
            "model expects N={} H={} D_X={}, dataset has N={} H={} D_X={}",
            model.lookback,
            model.horizon,
            model.channels,
            ds.lookback,
            ds.horizon,
            ds.num_channels()
        )));
    }
    Ok(())
}

/// Runs the epoch loop. Each epoch line is also written to `log` when given.
pub fn train(
    model: &ModelConfig,
    cfg: &TrainConfig,
    ds: &WindowedDataset,
    mut log: Option<&mut dyn Write>,
) -> Result<TrainOutcome> {
    let start = Instant::now();
    let mut current = init_model(model, cfg, ds)?;
    let train_idx = ds.indices(Split::Train);
    if train_idx.is_empty() {
        return Err(Error::Data("the training split is empty".into()));
    }
    let mut dropout_rng = stream_rng(cfg.seed, STREAM_DROPOUT);
    let mut shuffle_rng = stream_rng(cfg.seed, STREAM_SHUFFLE);
    let mut adam = AdamState::new(cfg.optimizer, current.params());
    let initial_val_rmse = evaluate(&current, ds, Split::Valid)?.rmse;
    let mut best = current.clone();
    let mut best_epoch = 0;
    let mut best_val_rmse = initial_val_rmse;
    let mut history = Vec::with_capacity(cfg.epochs);
    if let Some(w) = log.as_deref_mut() {
        writeln!(w, "{LOSS_CSV_HEADER}")?;
    }
    for epoch in 1..=cfg.epochs {
        let batches = epoch_batches(&train_idx, cfg.batch_size, &mut shuffle_rng);
        let mut sum = LossBreakdown::default();
        for (bi, idx) in batches.iter().enumerate() {
            let diverged = |e: Error| Error::Diverged {
                epoch,
                batch: bi,
                source: Box::new(e),
            };
            let mut g = Graph::new();
            let loss = composite_loss(
                &mut g,
                &current,
                &ds.inputs(idx),
                &ds.targets(idx),
                &cfg.loss_weights,
                Some(&mut dropout_rng),
            )
            .map_err(diverged)?;
            g.backward(loss.root).map_err(diverged)?;
            g.accumulate_param_grads(current.params_mut());
            adam_step(current.params_mut(), &mut adam);
            let b = loss.breakdown;
            sum.mse += b.mse;
            sum.fcm += b.fcm;
            sum.overlap += b.overlap;
            sum.balance += b.balance;
            sum.composite += b.composite;
        }
        let n = batches.len() as f64;
        let val_rmse = evaluate(&current, ds, Split::Valid)?.rmse;
        let entry = EpochLog {
            epoch,
            loss: LossBreakdown {
                mse: sum.mse / n,
                fcm: sum.fcm / n,
                overlap: sum.overlap / n,
                balance: sum.balance / n,
                composite: sum.composite / n,
            },
            val_rmse,
        };
        if let Some(w) = log.as_deref_mut() {
            writeln!(w, "{}", entry.csv_line())?;
        }
        history.push(entry);
        if val_rmse < best_val_rmse {
            best_val_rmse = val_rmse;
            best_epoch = epoch;
            best = current.clone();
        }
    }
    Ok(TrainOutcome {
        best,
        best_epoch,
        best_val_rmse,
        initial_val_rmse,
        history,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Aggregate-mode forecasts of one split with their scores.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub split: Split,
    pub rmse: f64,
    pub rmse_by_step: Vec<f64>,
    pub sample_indices: Vec<usize>,
    /// Row-major `[samples, H]`, scaled units.
    pub forecasts: Vec<f64>,
    pub targets: Vec<f64>,
}

pub fn evaluate(model: &Fuzzformer, ds: &WindowedDataset, split: Split) -> Result<Evaluation> {
    check_dataset(model.config(), ds)?;
    let idx = ds.indices(split);
    if idx.is_empty() {
        return Err(Error::Data(format!("the {split} split is empty")));
    }
    let mut forecasts = Vec::with_capacity(idx.len() * ds.horizon);
    for chunk in idx.chunks(EVAL_CHUNK) {
        forecasts.extend_from_slice(model.predict(&ds.inputs(chunk))?.forecast.data());
    }
    let targets = ds.targets(&idx).into_data();
    Ok(Evaluation {
        split,
        rmse: rmse(&forecasts, &targets)?,
        rmse_by_step: rmse_by_step(&forecasts, &targets, ds.horizon)?,
        sample_indices: idx,
        forecasts,
        targets,
    })
}
