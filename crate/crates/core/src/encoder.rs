//! Stacked LSTM + self-attention encoder producing the two latent outputs:
//! the antecedent vector `z` (width `D_Z`, tanh-bounded) and the exogenous
//! sequence `u` (width `H`) consumed by the ARIX consequents.

use rand::{Rng, RngCore};

use crate::attention::{multi_head, MhaParams};
use crate::compute::{Graph, ParamId, ParamStore, Var};
use crate::error::{Error, Result};

/// Gate column blocks in the packed weight matrices.
const GATE_INPUT: usize = 0;
const GATE_FORGET: usize = 1;
const GATE_CELL: usize = 2;
const GATE_OUTPUT: usize = 3;

/// One LSTM layer. Gate weights are packed as `[input | forget | cell |
/// output]` along the last axis.
#[derive(Clone, Debug)]
pub struct LstmLayerParams {
    /// `[input_dim, 4·hidden]`
    pub w_ih: ParamId,
    /// `[hidden, 4·hidden]`
    pub w_hh: ParamId,
    /// `[4·hidden]`
    pub bias: ParamId,
    pub input_dim: usize,
    pub hidden: usize,
}

impl LstmLayerParams {
    pub fn init<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        input_dim: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        let w_ih = store.insert_uniform(
            format!("{prefix}.w_ih"),
            &[input_dim, 4 * hidden],
            input_dim,
            rng,
        );
        let w_hh =
            store.insert_uniform(format!("{prefix}.w_hh"), &[hidden, 4 * hidden], hidden, rng);
        let bias = store.insert_uniform(format!("{prefix}.bias"), &[4 * hidden], hidden, rng);
        Self {
            w_ih,
            w_hh,
            bias,
            input_dim,
            hidden,
        }
    }

    pub fn bind(store: &ParamStore, prefix: &str) -> Result<Self> {
        let get = |s: &str| {
            store
                .id(&format!("{prefix}.{s}"))
                .ok_or_else(|| Error::Config(format!("missing parameter `{prefix}.{s}`")))
        };
        let (w_ih, w_hh, bias) = (get("w_ih")?, get("w_hh")?, get("bias")?);
        let s = store.value(w_ih).shape();
        Ok(Self {
            w_ih,
            w_hh,
            bias,
            input_dim: s[0],
            hidden: s[1] / 4,
        })
    }
}

/// Gate update from pre-activations `x W_ih + b` (already computed) and the
/// previous state.
fn lstm_cell(
    g: &mut Graph,
    x_proj: Var,
    h: Var,
    c: Var,
    w_hh: Var,
    hidden: usize,
) -> Result<(Var, Var)> {
    let rec = g.matmul(h, w_hh)?;
    let gates = g.add(x_proj, rec)?;
    let axis = g.shape(gates).len() - 1;
    let mut block = |gate: usize| g.slice(gates, axis, gate * hidden, hidden);
    let (i, f, cand, o) = (
        block(GATE_INPUT)?,
        block(GATE_FORGET)?,
        block(GATE_CELL)?,
        block(GATE_OUTPUT)?,
    );
    let i = g.sigmoid(i);
    let f = g.sigmoid(f);
    let cand = g.tanh(cand);
    let o = g.sigmoid(o);
    let keep = g.mul(f, c)?;
    let write = g.mul(i, cand)?;
    let c_next = g.add(keep, write)?;
    let squashed = g.tanh(c_next);
    let h_next = g.mul(o, squashed)?;
    Ok((h_next, c_next))
}

/// One standard LSTM step on a batch: `x: [B, in]`, `h, c: [B, hidden]`.
pub fn lstm_step(
    g: &mut Graph,
    store: &ParamStore,
    x: Var,
    h: Var,
    c: Var,
    params: &LstmLayerParams,
) -> Result<(Var, Var)> {
    let xs = g.shape(x);
    if xs.last() != Some(&params.input_dim)
        || g.shape(h).last() != Some(&params.hidden)
        || g.shape(c).last() != Some(&params.hidden)
    {
        return Err(Error::shape(
            "lstm_step",
            format!(
                "x {:?}, h {:?}, c {:?} for input {} / hidden {}",
                xs,
                g.shape(h),
                g.shape(c),
                params.input_dim,
                params.hidden
            ),
        ));
    }
    let w_ih = g.param(store, params.w_ih);
    let w_hh = g.param(store, params.w_hh);
    let bias = g.param(store, params.bias);
    let proj = g.matmul(x, w_ih)?;
    let proj = g.add(proj, bias)?;
    lstm_cell(g, proj, h, c, w_hh, params.hidden)
}

/// Runs one layer over a `[B, N, in]` sequence from a zero state and returns
/// the hidden sequence `[B, N, hidden]`.
pub fn lstm_layer(
    g: &mut Graph,
    store: &ParamStore,
    seq: Var,
    params: &LstmLayerParams,
) -> Result<Var> {
    let s = g.shape(seq).to_vec();
    if s.len() != 3 || s[2] != params.input_dim {
        return Err(Error::shape(
            "lstm_layer",
            format!("sequence {s:?} for input width {}", params.input_dim),
        ));
    }
    let (b, n, hd) = (s[0], s[1], params.hidden);
    let w_ih = g.param(store, params.w_ih);
    let w_hh = g.param(store, params.w_hh);
    let bias = g.param(store, params.bias);
    // Input projections for all steps in one product.
    let proj = g.matmul(seq, w_ih)?;
    let proj = g.add(proj, bias)?;
    let mut h = g.constant(crate::compute::Tensor::zeros(vec![b, hd]));
    let mut c = h;
    let mut outputs = Vec::with_capacity(n);
    for t in 0..n {
        let step = g.slice(proj, 1, t, 1)?;
        let step = g.reshape(step, vec![b, 4 * hd])?;
        let (h2, c2) = lstm_cell(g, step, h, c, w_hh, hd)?;
        h = h2;
        c = c2;
        outputs.push(g.reshape(h, vec![b, 1, hd])?);
    }
    g.concat(&outputs, 1)
}

/// Encoder architecture knobs.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderShape {
    pub lookback: usize,
    pub channels: usize,
    pub lstm_layers: usize,
    pub hidden: usize,
    pub attention_layers: usize,
    pub heads: usize,
    pub residual: bool,
    pub latent_dim: usize,
    pub horizon: usize,
    pub dropout: f64,
}

#[derive(Clone, Debug)]
pub struct EncoderParams {
    pub lstm: Vec<LstmLayerParams>,
    pub attention: Vec<MhaParams>,
    pub z_weight: ParamId,
    pub z_bias: ParamId,
    pub u_weight: ParamId,
    pub u_bias: ParamId,
}

impl EncoderParams {
    pub fn init<R: Rng + ?Sized>(
        store: &mut ParamStore,
        shape: &EncoderShape,
        rng: &mut R,
    ) -> Result<Self> {
        let mut lstm = Vec::with_capacity(shape.lstm_layers);
        for l in 0..shape.lstm_layers {
            let input = if l == 0 { shape.channels } else { shape.hidden };
            lstm.push(LstmLayerParams::init(
                store,
                &format!("lstm.{l}"),
                input,
                shape.hidden,
                rng,
            ));
        }
        let attention = (0..shape.attention_layers)
            .map(|l| {
                MhaParams::init(
                    store,
                    &format!("attn.{l}"),
                    shape.hidden,
                    shape.heads,
                    shape.hidden,
                    rng,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let d = shape.hidden;
        let z_weight = store.insert_uniform("head.z.weight", &[d, shape.latent_dim], d, rng);
        let z_bias = store.insert_uniform("head.z.bias", &[shape.latent_dim], d, rng);
        let u_weight = store.insert_uniform("head.u.weight", &[d, shape.horizon], d, rng);
        let u_bias = store.insert_uniform("head.u.bias", &[shape.horizon], d, rng);
        Ok(Self {
            lstm,
            attention,
            z_weight,
            z_bias,
            u_weight,
            u_bias,
        })
    }

    pub fn bind(store: &ParamStore, shape: &EncoderShape) -> Result<Self> {
        let get = |name: &str| {
            store
                .id(name)
                .ok_or_else(|| Error::Config(format!("missing parameter `{name}`")))
        };
        Ok(Self {
            lstm: (0..shape.lstm_layers)
                .map(|l| LstmLayerParams::bind(store, &format!("lstm.{l}")))
                .collect::<Result<_>>()?,
            attention: (0..shape.attention_layers)
                .map(|l| MhaParams::bind(store, &format!("attn.{l}"), shape.heads))
                .collect::<Result<_>>()?,
            z_weight: get("head.z.weight")?,
            z_bias: get("head.z.bias")?,
            u_weight: get("head.u.weight")?,
            u_bias: get("head.u.bias")?,
        })
    }
}

pub struct EncoderOutput {
    /// Top LSTM layer output `[B, N, D_h]`.
    pub sequence_features: Var,
    /// Attention stack output `[B, N, D_h]`.
    pub attended: Var,
    /// `[B, D_Z]`
    pub z_latent: Var,
    /// `[B, H]`
    pub u_latent: Var,
    /// Attention weights `[B, N, N]`, indexed by layer then head.
    pub attention_weights: Vec<Vec<Var>>,
}

/// Encodes a batch of windows `x: [B, N, D_X]`. Dropout (after every LSTM
/// layer and on the pooled summary) is active only when `dropout_rng` is
/// given.
pub fn encode_window(
    g: &mut Graph,
    store: &ParamStore,
    shape: &EncoderShape,
    params: &EncoderParams,
    x: Var,
    mut dropout_rng: Option<&mut dyn RngCore>,
) -> Result<EncoderOutput> {
    let xs = g.shape(x).to_vec();
    if xs.len() != 3 || xs[1] != shape.lookback || xs[2] != shape.channels {
        return Err(Error::shape(
            "encode_window",
            format!(
                "window {xs:?}, expected [B, {}, {}]",
                shape.lookback, shape.channels
            ),
        ));
    }
    let mut seq = x;
    for layer in &params.lstm {
        seq = lstm_layer(g, store, seq, layer)?;
        if let Some(rng) = dropout_rng.as_deref_mut() {
            seq = g.dropout(seq, shape.dropout, rng)?;
        }
    }
    let sequence_features = seq;
    let mut attention_weights = Vec::with_capacity(params.attention.len());
    for layer in &params.attention {
        let mh = multi_head(g, store, seq, layer)?;
        seq = if shape.residual {
            g.add(seq, mh.output)?
        } else {
            mh.output
        };
        attention_weights.push(mh.weights);
    }
    let attended = seq;
    let mut pooled = g.mean_axis(attended, 1)?;
    if let Some(rng) = dropout_rng {
        pooled = g.dropout(pooled, shape.dropout, rng)?;
    }
    let zw = g.param(store, params.z_weight);
    let zb = g.param(store, params.z_bias);
    let z = g.matmul(pooled, zw)?;
    let z = g.add(z, zb)?;
    let z_latent = g.tanh(z);
    let uw = g.param(store, params.u_weight);
    let ub = g.param(store, params.u_bias);
    let u = g.matmul(pooled, uw)?;
    let u_latent = g.add(u, ub)?;
    Ok(EncoderOutput {
        sequence_features,
        attended,
        z_latent,
        u_latent,
        attention_weights,
    })
}
