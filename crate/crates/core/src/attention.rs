//! Temporal multi-head self-attention.
//!
//! Queries and keys are projected per head; the value projection is shared
//! by all heads. Per-head width is `D_in / N_h` for both the query/key and
//! value spaces, and the concatenated heads are mapped back to `D_out` by
//! `W_O`.

use rand::Rng;

use crate::compute::{Graph, ParamId, ParamStore, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct MhaParams {
    pub query: Vec<ParamId>,
    pub key: Vec<ParamId>,
    pub value: ParamId,
    pub output: ParamId,
    pub input_dim: usize,
    pub head_dim: usize,
    pub output_dim: usize,
}

impl MhaParams {
    /// Registers `prefix.wq.{h}`, `prefix.wk.{h}`, `prefix.wv` and `prefix.wo`.
    pub fn init<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        input_dim: usize,
        heads: usize,
        output_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if heads == 0 || !input_dim.is_multiple_of(heads) {
            return Err(Error::Config(format!(
                "attention input width {input_dim} is not divisible by {heads} heads"
            )));
        }
        let head_dim = input_dim / heads;
        let mut query = Vec::with_capacity(heads);
        let mut key = Vec::with_capacity(heads);
        for h in 0..heads {
            query.push(store.insert_uniform(
                format!("{prefix}.wq.{h}"),
                &[input_dim, head_dim],
                input_dim,
                rng,
            ));
            key.push(store.insert_uniform(
                format!("{prefix}.wk.{h}"),
                &[input_dim, head_dim],
                input_dim,
                rng,
            ));
        }
        let value = store.insert_uniform(
            format!("{prefix}.wv"),
            &[input_dim, head_dim],
            input_dim,
            rng,
        );
        let output = store.insert_uniform(
            format!("{prefix}.wo"),
            &[heads * head_dim, output_dim],
            heads * head_dim,
            rng,
        );
        Ok(Self {
            query,
            key,
            value,
            output,
            input_dim,
            head_dim,
            output_dim,
        })
    }

    /// Looks the parameters up by name in an existing store.
    pub fn bind(store: &ParamStore, prefix: &str, heads: usize) -> Result<Self> {
        let get = |name: String| {
            store
                .id(&name)
                .ok_or_else(|| Error::Config(format!("missing parameter `{name}`")))
        };
        let query = (0..heads)
            .map(|h| get(format!("{prefix}.wq.{h}")))
            .collect::<Result<Vec<_>>>()?;
        let key = (0..heads)
            .map(|h| get(format!("{prefix}.wk.{h}")))
            .collect::<Result<Vec<_>>>()?;
        let value = get(format!("{prefix}.wv"))?;
        let output = get(format!("{prefix}.wo"))?;
        let vs = store.value(value).shape();
        let os = store.value(output).shape();
        Ok(Self {
            query,
            key,
            input_dim: vs[0],
            head_dim: vs[1],
            output_dim: os[1],
            value,
            output,
        })
    }

    pub fn heads(&self) -> usize {
        self.query.len()
    }
}

/// `softmax(Q Kᵀ / sqrt(D_h)) V` with a row-wise softmax. Inputs are `[N, ·]`
/// or batched `[B, N, ·]`. Returns the output and the attention weights.
pub fn scaled_dot_attention_op(g: &mut Graph, q: Var, k: Var, v: Var) -> Result<(Var, Var)> {
    let (sq, sk, sv) = (
        g.shape(q).to_vec(),
        g.shape(k).to_vec(),
        g.shape(v).to_vec(),
    );
    let r = sq.len();
    if sk.len() != r || sv.len() != r || sk[r - 2] != sv[r - 2] || sq[r - 1] != sk[r - 1] {
        return Err(Error::shape(
            "scaled_dot_attention",
            format!("Q {sq:?}, K {sk:?}, V {sv:?}"),
        ));
    }
    let d_h = sq[r - 1] as f64;
    let scores = g.matmul_ext(q, k, true)?;
    let scaled = g.scale(scores, 1.0 / d_h.sqrt());
    let weights = g.softmax(scaled);
    let out = g.matmul(weights, v)?;
    Ok((out, weights))
}

/// Tensor-level convenience around [`scaled_dot_attention_op`].
pub fn scaled_dot_attention(q: &Tensor, k: &Tensor, v: &Tensor) -> Result<(Tensor, Tensor)> {
    let mut g = Graph::new();
    let (qv, kv, vv) = (
        g.constant(q.clone()),
        g.constant(k.clone()),
        g.constant(v.clone()),
    );
    let (out, w) = scaled_dot_attention_op(&mut g, qv, kv, vv)?;
    Ok((g.value(out).clone(), g.value(w).clone()))
}

/// Output of one multi-head layer.
pub struct MultiHead {
    pub output: Var,
    /// Attention weights per head, each `[B, N, N]` (or `[N, N]`).
    pub weights: Vec<Var>,
}

/// `[H¹, …, H^{N_h}] W_O` with `Hʰ = A(S W_Qʰ, S W_Kʰ, S W_V)`.
pub fn multi_head(
    g: &mut Graph,
    store: &ParamStore,
    s: Var,
    params: &MhaParams,
) -> Result<MultiHead> {
    let ss = g.shape(s).to_vec();
    if ss.last() != Some(&params.input_dim) {
        return Err(Error::shape(
            "multi_head",
            format!("input {ss:?} vs width {}", params.input_dim),
        ));
    }
    let wv = g.param(store, params.value);
    let v = g.matmul(s, wv)?;
    let mut heads = Vec::with_capacity(params.heads());
    let mut weights = Vec::with_capacity(params.heads());
    for (wq_id, wk_id) in params.query.iter().zip(&params.key) {
        let wq = g.param(store, *wq_id);
        let wk = g.param(store, *wk_id);
        let q = g.matmul(s, wq)?;
        let k = g.matmul(s, wk)?;
        let (h, w) = scaled_dot_attention_op(g, q, k, v)?;
        heads.push(h);
        weights.push(w);
    }
    let cat = g.concat(&heads, ss.len() - 1)?;
    let wo = g.param(store, params.output);
    let output = g.matmul(cat, wo)?;
    Ok(MultiHead { output, weights })
}
