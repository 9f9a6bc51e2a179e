use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::compute::{adam_step, AdamConfig, AdamState, Graph, ParamId, ParamStore, Tensor, Var};
use crate::data::{Split, WindowedDataset};
use crate::encoder::{lstm_layer, LstmLayerParams};
use crate::error::{Error, Result};
use crate::metrics::rmse;
use crate::train::epoch_batches;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LstmBaselineConfig {
    pub layers: usize,
    pub hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub optimizer: AdamConfig,
}

impl Default for LstmBaselineConfig {
    fn default() -> Self {
        Self {
            layers: 2,
            hidden: 32,
            epochs: 50,
            batch_size: 64,
            seed: 0,
            optimizer: AdamConfig::default(),
        }
    }
}

/// Stacked LSTM with a shared linear read-out; the last `H` read-outs of the
/// window are the forecast.
#[derive(Clone, Debug)]
pub struct LstmBaseline {
    config: LstmBaselineConfig,
    lookback: usize,
    horizon: usize,
    store: ParamStore,
    layers: Vec<LstmLayerParams>,
    head_w: ParamId,
    head_b: ParamId,
}

impl LstmBaseline {
    pub fn new(
        config: LstmBaselineConfig,
        channels: usize,
        lookback: usize,
        horizon: usize,
    ) -> Result<Self> {
        if config.layers == 0 || config.hidden == 0 || config.batch_size == 0 {
            return Err(Error::Config(
                "LSTM baseline needs layers, hidden and batch size >= 1".into(),
            ));
        }
        if horizon > lookback {
            return Err(Error::Config(format!(
                "LSTM baseline reads its forecast from the window, so horizon {horizon} must not exceed lookback {lookback}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut store = ParamStore::new();
        let layers = (0..config.layers)
            .map(|l| {
                let input = if l == 0 { channels } else { config.hidden };
                LstmLayerParams::init(
                    &mut store,
                    &format!("lstm.{l}"),
                    input,
                    config.hidden,
                    &mut rng,
                )
            })
            .collect();
        let head_w =
            store.insert_uniform("head.weight", &[config.hidden, 1], config.hidden, &mut rng);
        let head_b = store.insert_uniform("head.bias", &[1], config.hidden, &mut rng);
        Ok(Self {
            config,
            lookback,
            horizon,
            store,
            layers,
            head_w,
            head_b,
        })
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    /// Forecast node `[B, H]` for a window batch `[B, N, D_X]`.
    pub fn forward(&self, g: &mut Graph, inputs: &Tensor) -> Result<Var> {
        let b = inputs.shape()[0];
        let mut seq = g.constant(inputs.clone());
        for layer in &self.layers {
            seq = lstm_layer(g, &self.store, seq, layer)?;
        }
        let w = g.param(&self.store, self.head_w);
        let bias = g.param(&self.store, self.head_b);
        let out = g.matmul(seq, w)?;
        let out = g.add(out, bias)?;
        let tail = g.slice(out, 1, self.lookback - self.horizon, self.horizon)?;
        g.reshape(tail, vec![b, self.horizon])
    }

    pub fn predict(&self, inputs: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let f = self.forward(&mut g, inputs)?;
        g.forward_eval(f)
    }

    /// Adam on the mean squared error of the training split. Returns the
    /// mean training loss of each epoch.
    pub fn train(&mut self, ds: &WindowedDataset) -> Result<Vec<f64>> {
        self.check(ds)?;
        let mut shuffle = ChaCha8Rng::seed_from_u64(self.config.seed.wrapping_add(1));
        let mut adam = AdamState::new(self.config.optimizer, &self.store);
        let train = ds.indices(Split::Train);
        let mut history = Vec::with_capacity(self.config.epochs);
        for epoch in 0..self.config.epochs {
            let mut total = 0.0;
            let batches = epoch_batches(&train, self.config.batch_size, &mut shuffle);
            for (bi, idx) in batches.iter().enumerate() {
                let mut g = Graph::new();
                let f = self.forward(&mut g, &ds.inputs(idx))?;
                let y = g.constant(ds.targets(idx));
                let r = g.sub(f, y)?;
                let sq = g.mul(r, r)?;
                let loss = g.mean(sq);
                let wrap = |e| Error::Diverged {
                    epoch,
                    batch: bi,
                    source: Box::new(e),
                };
                g.forward_eval(loss).map_err(wrap)?;
                g.backward(loss).map_err(wrap)?;
                g.accumulate_param_grads(&mut self.store);
                adam_step(&mut self.store, &mut adam);
                total += g.value(loss).data()[0];
            }
            history.push(total / batches.len().max(1) as f64);
        }
        Ok(history)
    }

    pub fn evaluate(&self, ds: &WindowedDataset, split: Split) -> Result<f64> {
        self.check(ds)?;
        let idx = ds.indices(split);
        if idx.is_empty() {
            return Err(Error::Data(format!("the {split} split is empty")));
        }
        let mut forecasts = Vec::with_capacity(idx.len() * self.horizon);
        for chunk in idx.chunks(256) {
            forecasts.extend_from_slice(self.predict(&ds.inputs(chunk))?.data());
        }
        rmse(&forecasts, ds.targets(&idx).data())
    }

    fn check(&self, ds: &WindowedDataset) -> Result<()> {
        if ds.lookback != self.lookback || ds.horizon != self.horizon {
            return Err(Error::Config(format!(
                "model expects N={} H={}, dataset has N={} H={}",
                self.lookback, self.horizon, ds.lookback, ds.horizon
            )));
        }
        Ok(())
    }
}
