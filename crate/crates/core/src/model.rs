//! The assembled forecaster: encoder, Gaussian antecedents and ARIX
//! consequents sharing one parameter store.

use rand::{Rng, RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::arix::{aggregate_op, arix_op, ArixCoefficients};
use crate::compute::{Graph, ParamId, ParamStore, Tensor, Var};
use crate::encoder::{encode_window, EncoderParams, EncoderShape};
use crate::error::{Error, Result};
use crate::fuzzy::{
    clusters_from_tensors, hardmax_from_distances, mahalanobis_op, membership_op, GaussianCluster,
};

/// Column of the input window holding the forecast target.
pub const MAIN_CHANNEL: usize = 0;

/// Initial scale of each cluster's covariance factor.
const INITIAL_FACTOR_SCALE: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Look-back window length `N`.
    pub lookback: usize,
    /// Forecast horizon `H`.
    pub horizon: usize,
    /// Input channels `D_X`; the main series is channel 0.
    pub channels: usize,
    pub lstm_layers: usize,
    /// LSTM and attention width `D_h`.
    pub hidden: usize,
    pub attention_layers: usize,
    pub heads: usize,
    pub residual: bool,
    /// Antecedent latent width `D_Z`.
    pub latent_dim: usize,
    /// Number of rules `C`.
    pub rules: usize,
    /// AR order `p`.
    pub ar_order: usize,
    /// Integration order `d` (0 or 1).
    pub integration: usize,
    /// Exogenous order `q`.
    pub exo_order: usize,
    pub dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            lookback: 60,
            horizon: 30,
            channels: 4,
            lstm_layers: 2,
            hidden: 128,
            attention_layers: 2,
            heads: 4,
            residual: true,
            latent_dim: 2,
            rules: 16,
            ar_order: 4,
            integration: 1,
            exo_order: 1,
            dropout: 0.1,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let extents = [
            ("lookback", self.lookback),
            ("horizon", self.horizon),
            ("channels", self.channels),
            ("lstm_layers", self.lstm_layers),
            ("hidden", self.hidden),
            ("heads", self.heads),
            ("latent_dim", self.latent_dim),
            ("rules", self.rules),
            ("ar_order", self.ar_order),
        ];
        if let Some((name, _)) = extents.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("`{name}` must be at least 1")));
        }
        if !self.hidden.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "hidden width {} is not divisible by {} heads",
                self.hidden, self.heads
            )));
        }
        if self.integration > 1 {
            return Err(Error::Config("integration order must be 0 or 1".into()));
        }
        if self.ar_order + self.integration > self.lookback {
            return Err(Error::Config(format!(
                "ARIX needs {} history values but the window holds {}",
                self.ar_order + self.integration,
                self.lookback
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        Ok(())
    }

    pub fn encoder_shape(&self) -> EncoderShape {
        EncoderShape {
            lookback: self.lookback,
            channels: self.channels,
            lstm_layers: self.lstm_layers,
            hidden: self.hidden,
            attention_layers: self.attention_layers,
            heads: self.heads,
            residual: self.residual,
            latent_dim: self.latent_dim,
            horizon: self.horizon,
            dropout: self.dropout,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Fuzzformer {
    config: ModelConfig,
    store: ParamStore,
    encoder: EncoderParams,
    means: ParamId,
    factors: ParamId,
    ar: ParamId,
    exo: ParamId,
}

/// Switches for one forward pass. The default is evaluation mode.
#[derive(Default)]
pub struct ForwardOptions<'a> {
    /// Enables dropout with masks drawn from this generator.
    pub dropout: Option<&'a mut dyn RngCore>,
    /// Routes every sample through its highest-membership rule only.
    pub winner_takes_all: bool,
}

pub struct ForwardPass {
    pub z: Var,
    pub u: Var,
    /// Squared Mahalanobis distances `[B, C]`.
    pub d2: Var,
    /// Memberships `[B, C]`.
    pub psi: Var,
    /// `[B, H]`: the aggregate, or the winning rule's forecast.
    pub forecast: Var,
    /// `[B, C, H]`, absent in winner-takes-all mode.
    pub rule_forecasts: Option<Var>,
    pub winners: Vec<usize>,
    /// Attention weights per layer then head, each `[B, N, N]`.
    pub attention: Vec<Vec<Var>>,
    pub means: Var,
    pub factors: Var,
}

/// Plain-value outputs of an evaluation-mode pass.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub forecast: Tensor,
    pub rule_forecasts: Tensor,
    pub memberships: Tensor,
    pub latent: Tensor,
    pub exogenous: Tensor,
    pub attention: Vec<Vec<Tensor>>,
}

/// Trailing main-channel values `[B, N]` of a window batch `[B, N, D_X]`.
pub fn main_histories(inputs: &Tensor) -> Result<Tensor> {
    let s = inputs.shape();
    if s.len() != 3 || s[2] < MAIN_CHANNEL + 1 {
        return Err(Error::shape("histories", format!("window batch {s:?}")));
    }
    let (b, n, d) = (s[0], s[1], s[2]);
    let data = inputs
        .data()
        .chunks(d)
        .map(|row| row[MAIN_CHANNEL])
        .collect();
    Tensor::new(vec![b, n], data)
}

impl Fuzzformer {
    pub fn new<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new();
        let encoder = EncoderParams::init(&mut store, &config.encoder_shape(), rng)?;
        let (c, dz) = (config.rules, config.latent_dim);
        let means = store.insert(
            "fuzzy.means",
            Tensor::new(
                vec![c, dz],
                (0..c * dz).map(|_| rng.random_range(-0.5..0.5)).collect(),
            )?,
        );
        let mut factor = vec![0.0; c * dz * dz];
        for i in 0..c {
            for k in 0..dz {
                factor[i * dz * dz + k * dz + k] = INITIAL_FACTOR_SCALE;
            }
        }
        let factors = store.insert("fuzzy.factors", Tensor::new(vec![c, dz, dz], factor)?);
        let ar = store.insert("arix.ar", Tensor::zeros(vec![c, config.ar_order]));
        let exo = store.insert_uniform("arix.exo", &[c, config.exo_order], config.hidden, rng);
        Ok(Self {
            config,
            store,
            encoder,
            means,
            factors,
            ar,
            exo,
        })
    }

    /// Rebuilds a model around an existing parameter store (e.g. a loaded
    /// checkpoint), checking every shape against the configuration.
    pub fn from_store(config: ModelConfig, store: ParamStore) -> Result<Self> {
        config.validate()?;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let template = Self::new(config.clone(), &mut rng)?;
        if template.store.len() != store.len() {
            return Err(Error::Config(format!(
                "parameter count {} does not match configuration ({})",
                store.len(),
                template.store.len()
            )));
        }
        for id in template.store.ids() {
            let name = template.store.name(id);
            let other = store
                .id(name)
                .ok_or_else(|| Error::Config(format!("missing parameter `{name}`")))?;
            if store.value(other).shape() != template.store.value(id).shape() {
                return Err(Error::Config(format!(
                    "parameter `{name}` has shape {:?}, expected {:?}",
                    store.value(other).shape(),
                    template.store.value(id).shape()
                )));
            }
        }
        let get = |n: &str| store.id(n).expect("checked above");
        Ok(Self {
            encoder: EncoderParams::bind(&store, &config.encoder_shape())?,
            means: get("fuzzy.means"),
            factors: get("fuzzy.factors"),
            ar: get("arix.ar"),
            exo: get("arix.exo"),
            config,
            store,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn clusters(&self) -> Result<Vec<GaussianCluster>> {
        clusters_from_tensors(self.store.value(self.means), self.store.value(self.factors))
    }

    pub fn coefficients(&self, rule: usize) -> Result<ArixCoefficients> {
        let (p, q) = (self.config.ar_order, self.config.exo_order);
        let ar = self.store.value(self.ar).data()[rule * p..(rule + 1) * p].to_vec();
        let exo = self.store.value(self.exo).data()[rule * q..(rule + 1) * q].to_vec();
        ArixCoefficients::new(ar, exo, self.config.integration)
    }

    /// Builds the forward graph for a window batch `[B, N, D_X]`.
    pub fn forward(
        &self,
        g: &mut Graph,
        inputs: &Tensor,
        opts: ForwardOptions<'_>,
    ) -> Result<ForwardPass> {
        let histories = main_histories(inputs)?;
        let x = g.constant(inputs.clone());
        let enc = encode_window(
            g,
            &self.store,
            &self.config.encoder_shape(),
            &self.encoder,
            x,
            opts.dropout,
        )?;
        let means = g.param(&self.store, self.means);
        let factors = g.param(&self.store, self.factors);
        let d2 = mahalanobis_op(g, enc.z_latent, means, factors)?;
        let psi = membership_op(g, d2);
        let c = self.config.rules;
        let winners: Vec<usize> = g
            .value(d2)
            .data()
            .chunks(c)
            .map(hardmax_from_distances)
            .collect();
        let ar = g.param(&self.store, self.ar);
        let exo = g.param(&self.store, self.exo);
        let integration = self.config.integration;
        let (forecast, rule_forecasts) = if opts.winner_takes_all {
            let f = arix_op(
                g,
                ar,
                exo,
                enc.u_latent,
                &histories,
                integration,
                Some(&winners),
            )?;
            (f, None)
        } else {
            let rf = arix_op(g, ar, exo, enc.u_latent, &histories, integration, None)?;
            (aggregate_op(g, psi, rf)?, Some(rf))
        };
        Ok(ForwardPass {
            z: enc.z_latent,
            u: enc.u_latent,
            d2,
            psi,
            forecast,
            rule_forecasts,
            winners,
            attention: enc.attention_weights,
            means,
            factors,
        })
    }

    /// Evaluation-mode forecast with every interpretable intermediate.
    pub fn predict(&self, inputs: &Tensor) -> Result<Prediction> {
        let mut g = Graph::new();
        let fp = self.forward(&mut g, inputs, ForwardOptions::default())?;
        let rf = fp.rule_forecasts.expect("aggregate mode");
        g.forward_eval(fp.forecast)?;
        Ok(Prediction {
            forecast: g.value(fp.forecast).clone(),
            rule_forecasts: g.value(rf).clone(),
            memberships: g.value(fp.psi).clone(),
            latent: g.value(fp.z).clone(),
            exogenous: g.value(fp.u).clone(),
            attention: fp
                .attention
                .iter()
                .map(|layer| layer.iter().map(|&w| g.value(w).clone()).collect())
                .collect(),
        })
    }

    /// Latent vectors `[B, D_Z]` in evaluation mode.
    pub fn latents(&self, inputs: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let x = g.constant(inputs.clone());
        let enc = encode_window(
            &mut g,
            &self.store,
            &self.config.encoder_shape(),
            &self.encoder,
            x,
            None,
        )?;
        Ok(g.value(enc.z_latent).clone())
    }

    /// Places the cluster centres on the latent cloud of `inputs` with a few
    /// Lloyd iterations, and sizes each isotropic factor to its cluster's
    /// spread.
    pub fn init_clusters(&mut self, inputs: &Tensor) -> Result<()> {
        let z = self.latents(inputs)?;
        let (n, dz, c) = (z.shape()[0], self.config.latent_dim, self.config.rules);
        if n == 0 {
            return Err(Error::Data("no windows to initialise clusters from".into()));
        }
        let mut centres: Vec<Vec<f64>> = (0..c).map(|i| z.row(i * n / c).to_vec()).collect();
        let mut assign = vec![0usize; n];
        for _ in 0..20 {
            for (s, a) in assign.iter_mut().enumerate() {
                let zs = z.row(s);
                let dist = |m: &Vec<f64>| {
                    zs.iter()
                        .zip(m)
                        .map(|(x, y)| (x - y) * (x - y))
                        .sum::<f64>()
                };
                *a = (0..c)
                    .min_by(|&i, &j| dist(&centres[i]).total_cmp(&dist(&centres[j])))
                    .unwrap_or(0);
            }
            for (i, centre) in centres.iter_mut().enumerate() {
                let members: Vec<usize> = (0..n).filter(|&s| assign[s] == i).collect();
                if members.is_empty() {
                    continue;
                }
                for (k, v) in centre.iter_mut().enumerate() {
                    *v = members.iter().map(|&s| z.row(s)[k]).sum::<f64>() / members.len() as f64;
                }
            }
        }
        // Global spread as a fallback for tiny or empty clusters.
        let global = spread(&z, &(0..n).collect::<Vec<_>>(), &mean_of(&z, n, dz), dz);
        let mut factor = vec![0.0; c * dz * dz];
        for (i, centre) in centres.iter().enumerate() {
            let members: Vec<usize> = (0..n).filter(|&s| assign[s] == i).collect();
            let local = if members.len() >= 2 {
                spread(&z, &members, centre, dz)
            } else {
                global
            };
            let scale = local.max(0.05 * global).max(1e-2);
            for k in 0..dz {
                factor[i * dz * dz + k * dz + k] = scale;
            }
        }
        self.store.set("fuzzy.means", centres.concat())?;
        self.store.set("fuzzy.factors", factor)?;
        Ok(())
    }
}

fn mean_of(z: &Tensor, n: usize, dz: usize) -> Vec<f64> {
    (0..dz)
        .map(|k| (0..n).map(|s| z.row(s)[k]).sum::<f64>() / n as f64)
        .collect()
}

/// Root-mean-square per-coordinate deviation of `members` around `centre`.
fn spread(z: &Tensor, members: &[usize], centre: &[f64], dz: usize) -> f64 {
    let ss: f64 = members
        .iter()
        .map(|&s| {
            z.row(s)
                .iter()
                .zip(centre)
                .map(|(x, m)| (x - m) * (x - m))
                .sum::<f64>()
        })
        .sum();
    (ss / (members.len() * dz) as f64).sqrt()
}
