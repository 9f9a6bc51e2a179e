//! Training objectives: forecast error, fuzzy clustering, cluster overlap and
//! assignment balance, and their weighted composite.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::compute::{Function, Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::fuzzy::{bhattacharyya, bhattacharyya_op, GaussianCluster};
use crate::model::{ForwardOptions, Fuzzformer};

/// Lower bound on a Bhattacharyya distance before it is inverted.
pub const OVERLAP_FLOOR: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub mse: f64,
    pub fcm: f64,
    pub overlap: f64,
    pub balance: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            mse: 1.0,
            fcm: 0.1,
            overlap: 0.01,
            balance: 0.1,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.mse, self.fcm, self.overlap, self.balance];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Config(format!(
                "loss weights must be finite and non-negative: {all:?}"
            )));
        }
        if self.mse <= 0.0 {
            return Err(Error::Config(
                "the forecast-error weight must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// `Σ_k ‖Y(k) − Ŷ(k)‖²` over flattened targets and forecasts.
pub fn mse_loss(targets: &[f64], forecasts: &[f64]) -> Result<f64> {
    if targets.len() != forecasts.len() {
        return Err(Error::shape(
            "mse_loss",
            format!("{} targets vs {} forecasts", targets.len(), forecasts.len()),
        ));
    }
    Ok(targets
        .iter()
        .zip(forecasts)
        .map(|(y, f)| (y - f) * (y - f))
        .sum())
}

/// `Σ_i Σ_k softmax(−d²)_i(k) · ‖Z(k) − μ_i‖²`: Mahalanobis weights, Euclidean
/// distances to the centres.
pub fn fcm_loss(latents: &[Vec<f64>], clusters: &[GaussianCluster]) -> Result<f64> {
    let mut total = 0.0;
    for z in latents {
        let psi = crate::fuzzy::memberships(z, clusters)?;
        for (w, cl) in psi.as_slice().iter().zip(clusters) {
            let e: f64 = z
                .iter()
                .zip(cl.mean())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            total += w * e;
        }
    }
    Ok(total)
}

/// `Σ_m Σ_{n≠m} 1 / max(d_B(m, n), δ)`, counting both orders of each pair.
pub fn overlap_loss(clusters: &[GaussianCluster]) -> Result<f64> {
    let mut total = 0.0;
    for m in 0..clusters.len() {
        for n in m + 1..clusters.len() {
            let d = bhattacharyya(&clusters[m], &clusters[n])?;
            total += 2.0 / d.max(OVERLAP_FLOOR);
        }
    }
    Ok(total)
}

/// KL divergence of the mean membership row from the uniform distribution.
pub fn balance_loss(memberships: &[Vec<f64>]) -> Result<f64> {
    let Some(first) = memberships.first() else {
        return Err(Error::Data("balance loss of an empty batch".into()));
    };
    let c = first.len();
    if memberships.iter().any(|r| r.len() != c) {
        return Err(Error::shape("balance_loss", "ragged membership rows"));
    }
    let n = memberships.len() as f64;
    let mean: Vec<f64> = (0..c)
        .map(|i| memberships.iter().map(|r| r[i]).sum::<f64>() / n)
        .collect();
    Ok(kl_to_uniform(&mean))
}

fn kl_to_uniform(p: &[f64]) -> f64 {
    let c = p.len() as f64;
    p.iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| v * (v * c).ln())
        .sum()
}

/// Sum of squared differences of two equally shaped nodes.
pub fn mse_op(g: &mut Graph, targets: Var, forecasts: Var) -> Result<Var> {
    if g.shape(targets) != g.shape(forecasts) {
        return Err(Error::shape(
            "mse_loss",
            format!(
                "targets {:?} vs forecasts {:?}",
                g.shape(targets),
                g.shape(forecasts)
            ),
        ));
    }
    let r = g.sub(forecasts, targets)?;
    let sq = g.mul(r, r)?;
    Ok(g.sum(sq))
}

/// Membership-weighted squared Euclidean distances of `z: [B, D]` to
/// `means: [C, D]`, summed over the batch.
pub fn fcm_op(g: &mut Graph, z: Var, means: Var, psi: Var) -> Result<Var> {
    let (zs, ms) = (g.shape(z).to_vec(), g.shape(means).to_vec());
    if zs.len() != 2 || ms.len() != 2 || zs[1] != ms[1] || g.shape(psi) != [zs[0], ms[0]] {
        return Err(Error::shape(
            "fcm_loss",
            format!(
                "latent {zs:?}, means {ms:?}, memberships {:?}",
                g.shape(psi)
            ),
        ));
    }
    let z3 = g.reshape(z, vec![zs[0], 1, zs[1]])?;
    let tiled = g.concat(&vec![z3; ms[0]], 1)?;
    let delta = g.sub(tiled, means)?;
    let sq = g.mul(delta, delta)?;
    let e = g.sum_axis(sq, 2)?;
    let weighted = g.mul(psi, e)?;
    Ok(g.sum(weighted))
}

struct InverseFloorFn;

impl Function for InverseFloorFn {
    fn name(&self) -> &'static str {
        "overlap"
    }

    fn backward(
        &self,
        inputs: &[&Tensor],
        _output: &Tensor,
        grad: &[f64],
    ) -> Vec<Option<Vec<f64>>> {
        let d = inputs[0];
        let c = d.shape()[0];
        let mut gd = vec![0.0; d.len()];
        for m in 0..c {
            for n in 0..c {
                let v = d.data()[m * c + n];
                if m != n && v > OVERLAP_FLOOR {
                    gd[m * c + n] = -grad[0] / (v * v);
                }
            }
        }
        vec![Some(gd)]
    }
}

/// Overlap penalty of the clusters held in `means` and `factors`.
pub fn overlap_op(g: &mut Graph, means: Var, factors: Var) -> Result<Var> {
    let db = bhattacharyya_op(g, means, factors)?;
    let t = g.value(db);
    let c = t.shape()[0];
    let mut total = 0.0;
    for m in 0..c {
        for n in 0..c {
            if m != n {
                total += 1.0 / t.data()[m * c + n].max(OVERLAP_FLOOR);
            }
        }
    }
    Ok(g.custom(&[db], Tensor::scalar(total), Box::new(InverseFloorFn)))
}

struct KlUniformFn;

impl Function for KlUniformFn {
    fn name(&self) -> &'static str {
        "balance"
    }

    fn backward(
        &self,
        inputs: &[&Tensor],
        _output: &Tensor,
        grad: &[f64],
    ) -> Vec<Option<Vec<f64>>> {
        let p = inputs[0].data();
        let c = p.len() as f64;
        let gp = p
            .iter()
            .map(|&v| {
                if v > 0.0 {
                    grad[0] * ((v * c).ln() + 1.0)
                } else {
                    0.0
                }
            })
            .collect();
        vec![Some(gp)]
    }
}

/// Balance penalty of a membership batch `[B, C]`.
pub fn balance_op(g: &mut Graph, psi: Var) -> Result<Var> {
    if g.shape(psi).len() != 2 {
        return Err(Error::shape(
            "balance_loss",
            format!("memberships {:?}", g.shape(psi)),
        ));
    }
    let mean = g.mean_axis(psi, 0)?;
    let value = kl_to_uniform(g.value(mean).data());
    Ok(g.custom(&[mean], Tensor::scalar(value), Box::new(KlUniformFn)))
}

/// Unweighted component values and the weighted total of one batch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    /// Forecast error per sample.
    pub mse: f64,
    /// Clustering loss per sample.
    pub fcm: f64,
    pub overlap: f64,
    pub balance: f64,
    pub composite: f64,
}

pub struct CompositeLoss {
    pub root: Var,
    pub breakdown: LossBreakdown,
    pub winners: Vec<usize>,
}

/// Builds the training objective for one batch. The forecast term routes each
/// sample through its highest-membership rule; the per-sample terms are
/// averaged over the batch.
pub fn composite_loss(
    g: &mut Graph,
    model: &Fuzzformer,
    inputs: &Tensor,
    targets: &Tensor,
    weights: &LossWeights,
    dropout: Option<&mut dyn RngCore>,
) -> Result<CompositeLoss> {
    let fp = model.forward(
        g,
        inputs,
        ForwardOptions {
            dropout,
            winner_takes_all: true,
        },
    )?;
    let batch = inputs.shape()[0] as f64;
    let y = g.constant(targets.clone());
    let mse = mse_op(g, y, fp.forecast)?;
    let fcm = fcm_op(g, fp.z, fp.means, fp.psi)?;
    let overlap = overlap_op(g, fp.means, fp.factors)?;
    let balance = balance_op(g, fp.psi)?;
    let terms = [
        g.scale(mse, weights.mse / batch),
        g.scale(fcm, weights.fcm / batch),
        g.scale(overlap, weights.overlap),
        g.scale(balance, weights.balance),
    ];
    let mut root = terms[0];
    for &t in &terms[1..] {
        root = g.add(root, t)?;
    }
    let v = |g: &Graph, x: Var| g.value(x).data()[0];
    let breakdown = LossBreakdown {
        mse: v(g, mse) / batch,
        fcm: v(g, fcm) / batch,
        overlap: v(g, overlap),
        balance: v(g, balance),
        composite: v(g, root),
    };
    if !breakdown.composite.is_finite() {
        return Err(Error::NonFinite {
            op: "composite_loss",
            node: root.index(),
        });
    }
    Ok(CompositeLoss {
        root,
        breakdown,
        winners: fp.winners,
    })
}
