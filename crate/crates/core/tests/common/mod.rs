//! Independent oracles and fixtures shared by the integration tests.
#![allow(dead_code, clippy::needless_range_loop)]

use fuzzformer::data::{align, synthetic_series, SyntheticConfig};
use fuzzformer::{ModelConfig, Tensor, WindowedDataset};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..n).map(|_| rng.random_range(lo..hi)).collect(),
    )
    .unwrap()
}

/// `N=6, H=3, D_X=2, D_h=8`, two heads, `C=3`, `p=2`, `d=1`, `q=1`.
pub fn tiny_config() -> ModelConfig {
    ModelConfig {
        lookback: 6,
        horizon: 3,
        channels: 2,
        lstm_layers: 1,
        hidden: 8,
        attention_layers: 1,
        heads: 2,
        residual: true,
        latent_dim: 2,
        rules: 3,
        ar_order: 2,
        integration: 1,
        exo_order: 1,
        dropout: 0.1,
    }
}

/// `N=60, H=30, D_X=4, D_h=16`, two heads, `C=4`, `p=4`.
pub fn desk_config() -> ModelConfig {
    ModelConfig {
        lookback: 60,
        horizon: 30,
        channels: 4,
        hidden: 16,
        heads: 2,
        rules: 4,
        ar_order: 4,
        ..ModelConfig::default()
    }
}

pub fn synthetic_dataset(rows: usize, lookback: usize, horizon: usize) -> WindowedDataset {
    let series = synthetic_series(&SyntheticConfig {
        rows,
        ..SyntheticConfig::default()
    })
    .unwrap();
    WindowedDataset::prepare(&align(&series).unwrap(), lookback, horizon, 1).unwrap()
}

/// Power-series product, truncated to `len` terms.
fn poly_mul(a: &[f64], b: &[f64], len: usize) -> Vec<f64> {
    let mut out = vec![0.0; len];
    for (i, x) in a.iter().enumerate().take(len) {
        for (j, y) in b.iter().enumerate() {
            if i + j < len {
                out[i + j] += x * y;
            }
        }
    }
    out
}

/// First `len` coefficients of `num / den` by long division (`den[0] != 0`).
fn long_division(num: &[f64], den: &[f64], len: usize) -> Vec<f64> {
    let mut rem: Vec<f64> = num.to_vec();
    rem.resize(len.max(num.len()), 0.0);
    let mut quot = vec![0.0; len];
    for k in 0..len {
        let c = rem[k] / den[0];
        quot[k] = c;
        for (j, d) in den.iter().enumerate() {
            if k + j < rem.len() {
                rem[k + j] -= c * d;
            }
        }
    }
    quot
}

/// Forecast of `A(z)(1 - z)^d y = B(z) u` over `horizon` steps, with
/// `A(z) = 1 + a₁z + …`, `B(z) = b₁z + …` and `z` the one-step delay.
///
/// The future is the power series `Y(z) = (F(z) + B(z)U(z)) / Ā(z)` where
/// `Ā = A(1 - z)^d`, `U(z) = Σ_t u[t] z^t` with `u[t]` the input at time
/// `k + t`, and `F` carries the observed levels `history` (most recent last)
/// into the first `deg Ā` steps. Coefficient `j` is `ŷ(k + j)`.
pub fn transfer_function_forecast(
    history: &[f64],
    u: &[f64],
    a: &[f64],
    b: &[f64],
    d: usize,
    horizon: usize,
) -> Vec<f64> {
    let mut abar = vec![1.0];
    abar.extend_from_slice(a);
    for _ in 0..d {
        abar = poly_mul(&abar, &[1.0, -1.0], abar.len() + 1);
    }
    let order = abar.len() - 1;
    let len = horizon + 1;
    // y(k - i) for i = 0..order
    let past = |i: usize| history[history.len() - 1 - i];
    let mut f = vec![0.0; len];
    for (t, slot) in f.iter_mut().enumerate().skip(1) {
        for m in t..=order {
            *slot -= abar[m] * past(m - t);
        }
    }
    let mut bpoly = vec![0.0];
    bpoly.extend_from_slice(b);
    let forced = poly_mul(&bpoly, u, len);
    let num: Vec<f64> = f.iter().zip(&forced).map(|(x, y)| x + y).collect();
    long_division(&num, &abar, len)[1..].to_vec()
}

/// Coefficients `[c₁ … c_n]` of `Π (1 - r z)`: a stable `A(z)` when every
/// `|r| < 1`.
pub fn polynomial_from_roots(roots: &[f64]) -> Vec<f64> {
    let mut p = vec![1.0];
    for r in roots {
        p = poly_mul(&p, &[1.0, -r], p.len() + 1);
    }
    p[1..].to_vec()
}

/// `y_t = φ y_{t-1} + e_t + θ e_{t-1}` with standard normal innovations.
pub fn simulate_arma11(phi: f64, theta: f64, n: usize, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    let burn = 500;
    let (mut y, mut e_prev) = (0.0, 0.0);
    let mut out = Vec::with_capacity(n);
    for t in 0..n + burn {
        let e: f64 = StandardNormal.sample(&mut r);
        y = phi * y + e + theta * e_prev;
        e_prev = e;
        if t >= burn {
            out.push(y);
        }
    }
    out
}
