use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use fuzzformer::baselines::{ArimaOrder, LstmBaselineConfig};
use fuzzformer::{Error, ModelConfig, TrainConfig};
use serde::{Deserialize, Serialize};

/// Everything a run needs, loaded from TOML and then patched by flags.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Window stride used by `prepare`.
    pub stride: usize,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub lstm: LstmBaselineConfig,
    pub arima: ArimaOrder,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            stride: 1,
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            lstm: LstmBaselineConfig::default(),
            arima: ArimaOrder { p: 4, d: 1, q: 1 },
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())).into())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = toml::to_string_pretty(self).context("serialising the run config")?;
        std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
    }
}

/// Flag overrides; each mirrors a config field.
#[derive(Args, Debug, Default, Clone)]
pub struct Overrides {
    /// Run configuration file (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub lookback: Option<usize>,
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long)]
    pub stride: Option<usize>,
    #[arg(long)]
    pub lstm_layers: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub attention_layers: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long)]
    pub latent_dim: Option<usize>,
    #[arg(long)]
    pub rules: Option<usize>,
    #[arg(long)]
    pub ar_order: Option<usize>,
    #[arg(long)]
    pub integration: Option<usize>,
    #[arg(long)]
    pub exo_order: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl Overrides {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::load(self.config.as_deref())?;
        let m = &mut cfg.model;
        macro_rules! set {
            ($($flag:ident => $field:expr),* $(,)?) => {
                $(if let Some(v) = self.$flag { $field = v; })*
            };
        }
        set! {
            lookback => m.lookback,
            horizon => m.horizon,
            lstm_layers => m.lstm_layers,
            hidden => m.hidden,
            attention_layers => m.attention_layers,
            heads => m.heads,
            latent_dim => m.latent_dim,
            rules => m.rules,
            ar_order => m.ar_order,
            integration => m.integration,
            exo_order => m.exo_order,
            dropout => m.dropout,
            stride => cfg.stride,
            epochs => cfg.train.epochs,
            batch_size => cfg.train.batch_size,
            learning_rate => cfg.train.optimizer.learning_rate,
            seed => cfg.train.seed,
        }
        Ok(cfg)
    }
}
