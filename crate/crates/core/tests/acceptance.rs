//! Acceptance suite: one PASS / FAIL / NOT RUN line per criterion.
//!
//! Runs without the libtest harness so every verdict is printed even when an
//! earlier criterion fails. Exits non-zero if any criterion fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use common::*;
use fuzzformer::arix::{aggregate_op, arix_forecast, arix_op, ArixCoefficients};
use fuzzformer::attention::{multi_head, scaled_dot_attention_op, MhaParams};
use fuzzformer::baselines::{evaluate_arima, evaluate_persistence, fit_arima, ArimaOrder};
use fuzzformer::compute::gradcheck::{check_inputs, check_params, GradCheck};
use fuzzformer::data::{align, DatasetManifest, MinMaxScaler};
use fuzzformer::encoder::{encode_window, lstm_layer, lstm_step, EncoderParams, LstmLayerParams};
use fuzzformer::fuzzy::{
    bhattacharyya, bhattacharyya_op, mahalanobis_op, membership_op, memberships, GaussianCluster,
};
use fuzzformer::losses::{
    balance_loss, balance_op, composite_loss, fcm_loss, fcm_op, mse_loss, mse_op, overlap_loss,
    overlap_op,
};
use fuzzformer::model::ForwardOptions;
use fuzzformer::train::{evaluate, train};
use fuzzformer::{
    Checkpoint, Fuzzformer, Graph, LossWeights, ModelConfig, ParamStore, Result, Split, Tensor,
    TrainConfig, Var, WindowedDataset,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GRAD_TOLERANCE: f64 = 1e-4;
const GRAD_STEP: f64 = 1e-5;

enum Verdict {
    Pass(String),
    Fail(String),
    NotRun(String),
}

fn verdict(ok: bool, detail: String) -> Verdict {
    if ok {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(detail)
    }
}

fn within(elapsed: Duration, limit_s: f64) -> bool {
    elapsed.as_secs_f64() < limit_s
}

/// `Σ w ⊙ v` with fixed, shape-derived weights, so every output element
/// reaches the scalar with a distinct coefficient.
fn project(g: &mut Graph, v: Var) -> Result<Var> {
    let shape = g.shape(v).to_vec();
    let n: usize = shape.iter().product();
    let w = Tensor::new(
        shape,
        (0..n).map(|i| (1.3 * i as f64 + 0.4).sin()).collect(),
    )?;
    let w = g.constant(w);
    let p = g.mul(v, w)?;
    Ok(g.sum(p))
}

fn lower_factors(rng: &mut ChaCha8Rng, c: usize, d: usize) -> Tensor {
    let mut data = vec![0.0; c * d * d];
    for k in 0..c {
        for i in 0..d {
            for j in 0..=i {
                data[k * d * d + i * d + j] = if i == j {
                    rng.random_range(0.6..1.2)
                } else {
                    rng.random_range(-0.3..0.3)
                };
            }
        }
    }
    Tensor::new(vec![c, d, d], data).unwrap()
}

fn softmax_rows(t: &Tensor) -> Tensor {
    let c = t.last_dim();
    let mut data = t.data().to_vec();
    for row in data.chunks_mut(c) {
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let s: f64 = row.iter().map(|v| (v - m).exp()).sum();
        row.iter_mut().for_each(|v| *v = (*v - m).exp() / s);
    }
    Tensor::new(t.shape().to_vec(), data).unwrap()
}

fn gradient_suite() -> Result<Vec<(&'static str, GradCheck)>> {
    let mut r = rng(100);
    let mut out = Vec::new();
    let h = GRAD_STEP;
    let mut push = |name, check: GradCheck| out.push((name, check));

    let a = uniform(&mut r, &[2, 3, 4], -1.0, 1.0);
    let b = uniform(&mut r, &[4, 5], -1.0, 1.0);
    push(
        "matmul",
        check_inputs(&[a.clone(), b.clone()], h, |g, v| {
            let m = g.matmul(v[0], v[1])?;
            project(g, m)
        })?,
    );
    let bt = uniform(&mut r, &[5, 4], -1.0, 1.0);
    push(
        "matmul (transposed)",
        check_inputs(&[a.clone(), bt], h, |g, v| {
            let m = g.matmul_ext(v[0], v[1], true)?;
            project(g, m)
        })?,
    );
    let row = uniform(&mut r, &[4], -1.0, 1.0);
    push(
        "add / sub / mul (broadcast)",
        check_inputs(&[a.clone(), row], h, |g, v| {
            let s = g.add(v[0], v[1])?;
            let d = g.sub(s, v[1])?;
            let d = g.sub(d, v[1])?;
            let m = g.mul(d, v[1])?;
            project(g, m)
        })?,
    );
    push(
        "scale / neg",
        check_inputs(std::slice::from_ref(&a), h, |g, v| {
            let s = g.scale(v[0], 2.5);
            let n = g.neg(s);
            project(g, n)
        })?,
    );
    push(
        "sigmoid / tanh / exp",
        check_inputs(std::slice::from_ref(&a), h, |g, v| {
            let s = g.sigmoid(v[0]);
            let t = g.tanh(s);
            let e = g.exp(t);
            project(g, e)
        })?,
    );
    let pos = uniform(&mut r, &[3, 4], 0.5, 2.0);
    push(
        "log",
        check_inputs(&[pos], h, |g, v| {
            let l = g.log(v[0]);
            project(g, l)
        })?,
    );
    push(
        "softmax",
        check_inputs(std::slice::from_ref(&a), h, |g, v| {
            let s = g.softmax(v[0]);
            project(g, s)
        })?,
    );
    push(
        "sum / mean / axis reductions",
        check_inputs(std::slice::from_ref(&a), h, |g, v| {
            let s1 = g.sum_axis(v[0], 1)?;
            let m2 = g.mean_axis(s1, 0)?;
            let p = project(g, m2)?;
            let m = g.mean(v[0]);
            let sq = g.mul(m, m)?;
            g.add(p, sq)
        })?,
    );
    push(
        "concat / slice / reshape",
        check_inputs(&[a.clone(), a.clone()], h, |g, v| {
            let c = g.concat(&[v[0], v[1]], 1)?;
            let s = g.slice(c, 1, 2, 3)?;
            let rs = g.reshape(s, vec![6, 4])?;
            project(g, rs)
        })?,
    );
    push(
        "dropout (fixed mask)",
        check_inputs(std::slice::from_ref(&a), h, |g, v| {
            let mut mask_rng = ChaCha8Rng::seed_from_u64(5);
            let d = g.dropout(v[0], 0.3, &mut mask_rng)?;
            project(g, d)
        })?,
    );

    let q = uniform(&mut r, &[2, 4, 3], -1.0, 1.0);
    let k = uniform(&mut r, &[2, 4, 3], -1.0, 1.0);
    let vv = uniform(&mut r, &[2, 4, 2], -1.0, 1.0);
    push(
        "scaled dot attention",
        check_inputs(&[q, k, vv], h, |g, v| {
            let (o, w) = scaled_dot_attention_op(g, v[0], v[1], v[2])?;
            let po = project(g, o)?;
            let pw = project(g, w)?;
            g.add(po, pw)
        })?,
    );

    let mut store = ParamStore::new();
    let mha = MhaParams::init(&mut store, "mha", 8, 2, 8, &mut r)?;
    let s_id = store.insert("input", uniform(&mut r, &[2, 5, 8], -1.0, 1.0));
    push(
        "multi-head attention",
        check_params(&store, None, 1, h, |g, st| {
            let s = g.param(st, s_id);
            let m = multi_head(g, st, s, &mha)?;
            project(g, m.output)
        })?,
    );

    let mut store = ParamStore::new();
    let lstm = LstmLayerParams::init(&mut store, "lstm", 2, 3, &mut r);
    let x_id = store.insert("x", uniform(&mut r, &[2, 2], -1.0, 1.0));
    let h_id = store.insert("h", uniform(&mut r, &[2, 3], -0.5, 0.5));
    let c_id = store.insert("c", uniform(&mut r, &[2, 3], -0.5, 0.5));
    push(
        "lstm step",
        check_params(&store, None, 1, h, |g, st| {
            let (x, hh, c) = (g.param(st, x_id), g.param(st, h_id), g.param(st, c_id));
            let (h2, c2) = lstm_step(g, st, x, hh, c, &lstm)?;
            let a = project(g, h2)?;
            let b = project(g, c2)?;
            g.add(a, b)
        })?,
    );
    let seq_id = store.insert("seq", uniform(&mut r, &[2, 4, 2], -1.0, 1.0));
    push(
        "lstm layer",
        check_params(&store, None, 1, h, |g, st| {
            let s = g.param(st, seq_id);
            let out = lstm_layer(g, st, s, &lstm)?;
            project(g, out)
        })?,
    );

    let cfg = tiny_config();
    let shape = cfg.encoder_shape();
    let mut store = ParamStore::new();
    let enc = EncoderParams::init(&mut store, &shape, &mut r)?;
    let win_id = store.insert(
        "window",
        uniform(&mut r, &[2, cfg.lookback, cfg.channels], 0.0, 1.0),
    );
    push(
        "encoder (LSTM + attention + heads)",
        check_params(&store, None, 1, h, |g, st| {
            let x = g.param(st, win_id);
            let e = encode_window(g, st, &shape, &enc, x, None)?;
            let a = project(g, e.z_latent)?;
            let b = project(g, e.u_latent)?;
            g.add(a, b)
        })?,
    );

    let z = uniform(&mut r, &[4, 2], -1.0, 1.0);
    let means = uniform(&mut r, &[3, 2], -1.0, 1.0);
    let factors = lower_factors(&mut r, 3, 2);
    push(
        "mahalanobis + memberships",
        check_inputs(&[z.clone(), means.clone(), factors.clone()], h, |g, v| {
            let d2 = mahalanobis_op(g, v[0], v[1], v[2])?;
            let psi = membership_op(g, d2);
            let a = project(g, d2)?;
            let b = project(g, psi)?;
            g.add(a, b)
        })?,
    );
    push(
        "bhattacharyya",
        check_inputs(&[means.clone(), factors.clone()], h, |g, v| {
            let d = bhattacharyya_op(g, v[0], v[1])?;
            project(g, d)
        })?,
    );

    let ar = uniform(&mut r, &[3, 2], -0.4, 0.4);
    let exo = uniform(&mut r, &[3, 1], -1.0, 1.0);
    let u = uniform(&mut r, &[4, 3], -1.0, 1.0);
    let hist = uniform(&mut r, &[4, 6], 0.0, 1.0);
    let psi = softmax_rows(&uniform(&mut r, &[4, 3], -1.0, 1.0));
    push(
        "ARIX recursion + aggregation",
        check_inputs(
            &[ar.clone(), exo.clone(), u.clone(), psi.clone()],
            h,
            |g, v| {
                let f = arix_op(g, v[0], v[1], v[2], &hist, 1, None)?;
                let y = aggregate_op(g, v[3], f)?;
                project(g, y)
            },
        )?,
    );
    push(
        "ARIX recursion (winner rule)",
        check_inputs(&[ar, exo, u], h, |g, v| {
            let f = arix_op(g, v[0], v[1], v[2], &hist, 1, Some(&[0, 2, 1, 2]))?;
            project(g, f)
        })?,
    );

    let target = uniform(&mut r, &[4, 3], 0.0, 1.0);
    let forecast = uniform(&mut r, &[4, 3], 0.0, 1.0);
    push(
        "mse loss",
        check_inputs(&[target, forecast], h, |g, v| mse_op(g, v[0], v[1]))?,
    );
    push(
        "fcm loss",
        check_inputs(&[z, means.clone(), psi.clone()], h, |g, v| {
            fcm_op(g, v[0], v[1], v[2])
        })?,
    );
    let spread = Tensor::new(vec![3, 2], vec![-0.8, 0.0, 0.8, 0.1, 0.0, 0.9])?;
    push(
        "overlap loss",
        check_inputs(&[spread, factors], h, |g, v| overlap_op(g, v[0], v[1]))?,
    );
    push(
        "balance loss",
        check_inputs(&[psi], h, |g, v| balance_op(g, v[0]))?,
    );

    let mut model = Fuzzformer::new(cfg.clone(), &mut r)?;
    let ar: Vec<f64> = (0..6).map(|_| r.random_range(-0.3..0.3)).collect();
    model.params_mut().set("arix.ar", ar)?;
    model
        .params_mut()
        .set("fuzzy.means", vec![-0.6, 0.0, 0.6, 0.0, 0.0, 0.6])?;
    let x = uniform(&mut r, &[4, cfg.lookback, cfg.channels], 0.0, 1.0);
    let y = uniform(&mut r, &[4, cfg.horizon], 0.0, 1.0);
    let w = LossWeights::default();
    push(
        "composite loss, winner-takes-all path",
        check_params(model.params(), None, 1, h, |g, st| {
            let m = Fuzzformer::from_store(cfg.clone(), st.clone())?;
            Ok(composite_loss(g, &m, &x, &y, &w, None)?.root)
        })?,
    );
    push(
        "aggregate forecast path",
        check_params(model.params(), None, 1, h, |g, st| {
            let m = Fuzzformer::from_store(cfg.clone(), st.clone())?;
            let fp = m.forward(
                g,
                &x,
                ForwardOptions {
                    dropout: None,
                    winner_takes_all: false,
                },
            )?;
            let t = g.constant(y.clone());
            mse_op(g, t, fp.forecast)
        })?,
    );
    Ok(out)
}

fn criterion_1() -> Verdict {
    let start = Instant::now();
    let checks = match gradient_suite() {
        Ok(c) => c,
        Err(e) => return Verdict::Fail(format!("suite error: {e}")),
    };
    let elapsed = start.elapsed();
    let scalars: usize = checks.iter().map(|(_, c)| c.checked).sum();
    let (worst_name, worst) = checks
        .iter()
        .max_by(|a, b| a.1.max_relative_error.total_cmp(&b.1.max_relative_error))
        .expect("non-empty suite");
    if std::env::var_os("ACCEPTANCE_VERBOSE").is_some() {
        for (n, c) in &checks {
            eprintln!("{n}: {:.2e} {:?}", c.max_relative_error, c.worst);
        }
    }
    let failed: Vec<&str> = checks
        .iter()
        .filter(|(_, c)| !c.passes(GRAD_TOLERANCE))
        .map(|(n, _)| *n)
        .collect();
    verdict(
        failed.is_empty() && within(elapsed, 60.0),
        format!(
            "{} checks, {scalars} scalars, max rel err {:.2e} ({worst_name}), failing {failed:?}, {:.1}s",
            checks.len(),
            worst.max_relative_error,
            elapsed.as_secs_f64()
        ),
    )
}

fn random_cluster(r: &mut ChaCha8Rng, d: usize) -> GaussianCluster {
    let mean = (0..d).map(|_| r.random_range(-2.0..2.0)).collect();
    let f = lower_factors(r, 1, d);
    GaussianCluster::new(mean, f.into_data()).unwrap()
}

fn criterion_2() -> Verdict {
    let mut r = rng(200);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let d = r.random_range(1..=3);
        let c = r.random_range(1..=16);
        let clusters: Vec<GaussianCluster> = (0..c).map(|_| random_cluster(&mut r, d)).collect();
        let z: Vec<f64> = (0..d).map(|_| r.random_range(-5.0..5.0)).collect();
        let psi = memberships(&z, &clusters).unwrap();
        worst = worst.max((psi.as_slice().iter().sum::<f64>() - 1.0).abs());
    }
    verdict(
        worst <= 1e-9,
        format!("10000 points, max |Σψ - 1| = {worst:.1e}"),
    )
}

fn criterion_3() -> Verdict {
    let mut r = rng(300);
    let a = random_cluster(&mut r, 2);
    let same = bhattacharyya(&a, &a).unwrap();
    let c0 = GaussianCluster::from_covariance(vec![0.0], &[1.0]).unwrap();
    let c1 = GaussianCluster::from_covariance(vec![1.0], &[1.0]).unwrap();
    let unit = bhattacharyya(&c0, &c1).unwrap();
    let mut asym: f64 = 0.0;
    for _ in 0..1000 {
        let d = r.random_range(1..=3);
        let (p, q) = (random_cluster(&mut r, d), random_cluster(&mut r, d));
        let (x, y) = (
            bhattacharyya(&p, &q).unwrap(),
            bhattacharyya(&q, &p).unwrap(),
        );
        asym = asym.max((x - y).abs() / x.abs().max(1.0));
    }
    verdict(
        same.abs() < 1e-12 && (unit - 0.125).abs() < 1e-12 && asym < 1e-12,
        format!("identical {same:.1e}, unit pair {unit:.15}, max asymmetry {asym:.1e}"),
    )
}

fn criterion_4() -> Verdict {
    let mut r = rng(400);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let p = r.random_range(1..=3);
        let d = r.random_range(0..=1);
        let h = r.random_range(1..=10);
        let roots: Vec<f64> = (0..p).map(|_| r.random_range(-0.95..0.95)).collect();
        let a = polynomial_from_roots(&roots);
        let b = vec![r.random_range(-2.0..2.0)];
        let history: Vec<f64> = (0..p + d + 2).map(|_| r.random_range(-5.0..5.0)).collect();
        let u: Vec<f64> = (0..h).map(|_| r.random_range(-1.0..1.0)).collect();
        let oracle = transfer_function_forecast(&history, &u, &a, &b, d, h);
        let coeffs = ArixCoefficients::new(a, b, d).unwrap();
        let got = arix_forecast(&history, &u, &coeffs, h).unwrap();
        for (x, y) in got.as_slice().iter().zip(&oracle) {
            worst = worst.max((x - y).abs());
        }
    }
    verdict(
        worst < 1e-9,
        format!("100 systems, max |recursion - long division| = {worst:.1e}"),
    )
}

fn criterion_5() -> Verdict {
    let start = Instant::now();
    let y = simulate_arma11(0.6, 0.3, 20_000, 500);
    let fit = match fit_arima(&y, ArimaOrder { p: 1, d: 0, q: 1 }) {
        Ok(f) => f,
        Err(e) => return Verdict::Fail(e.to_string()),
    };
    let elapsed = start.elapsed();
    let (a, b) = (fit.ar[0], fit.ma[0]);
    verdict(
        (a - 0.6).abs() <= 0.05 && (b - 0.3).abs() <= 0.05 && within(elapsed, 30.0),
        format!(
            "AR {a:.4} (0.6), MA {b:.4} (0.3), {:.2}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_6() -> Verdict {
    let balance = balance_loss(&[vec![1.0, 0.0]]).unwrap();
    let c0 = GaussianCluster::from_covariance(vec![0.0], &[1.0]).unwrap();
    let c1 = GaussianCluster::from_covariance(vec![1.0], &[1.0]).unwrap();
    let overlap = overlap_loss(&[c0.clone(), c1]).unwrap();
    let fcm = fcm_loss(&[vec![0.0]], &[c0]).unwrap();
    let mse = mse_loss(&[0.25, 0.5, 0.75], &[0.25, 0.5, 0.75]).unwrap();
    verdict(
        (balance - std::f64::consts::LN_2).abs() <= 1e-12
            && (overlap - 16.0).abs() <= 1e-9
            && fcm == 0.0
            && mse == 0.0,
        format!("balance {balance:.15}, overlap {overlap:.12}, fcm {fcm}, mse {mse}"),
    )
}

fn criterion_7() -> Verdict {
    let start = Instant::now();
    let ds = synthetic_dataset(1500, 60, 30);
    let model = desk_config();
    let cfg = TrainConfig {
        epochs: 200,
        ..TrainConfig::default()
    };
    let outcome = match train(&model, &cfg, &ds, None) {
        Ok(o) => o,
        Err(e) => return Verdict::Fail(format!("training failed: {e}")),
    };
    let test = evaluate(&outcome.best, &ds, Split::Test).unwrap().rmse;
    let persistence = evaluate_persistence(&ds, Split::Test).unwrap();
    let arima = evaluate_arima(&ds, Split::Test, ArimaOrder { p: 4, d: 1, q: 1 }).unwrap();
    let elapsed = start.elapsed();
    verdict(
        test <= 0.9 * persistence.rmse && test <= 1.5 * arima.rmse && within(elapsed, 600.0),
        format!(
            "test rmse {test:.4} vs persistence {:.4} ({:+.1}%), ARIMA(4,1,1) {:.4} ({} windows skipped); best epoch {}, {:.0}s",
            persistence.rmse,
            100.0 * (test / persistence.rmse - 1.0),
            arima.rmse,
            arima.skipped,
            outcome.best_epoch,
            elapsed.as_secs_f64()
        ),
    )
}

/// Needs `FUZZFORMER_MARKET_DIR` holding `manifest.toml` (main index plus
/// exogenous channels, local CSVs or URLs). `FUZZFORMER_MARKET_EPOCHS`
/// overrides the epoch count.
fn criterion_8() -> Verdict {
    let Some(dir) = std::env::var_os("FUZZFORMER_MARKET_DIR").map(PathBuf::from) else {
        return Verdict::NotRun(
            "set FUZZFORMER_MARKET_DIR to a directory with manifest.toml".into(),
        );
    };
    let run = || -> fuzzformer::Result<(f64, f64)> {
        let path = dir.join("manifest.toml");
        let text = std::fs::read_to_string(&path)?;
        let mut manifest: DatasetManifest =
            toml::from_str(&text).map_err(|e| fuzzformer::Error::Config(e.to_string()))?;
        let series = manifest.load(&dir, &dir.join("cache"))?;
        let ds = WindowedDataset::prepare(&align(&series)?, 60, 30, 1)?;
        let model = ModelConfig {
            channels: ds.num_channels(),
            ar_order: 30,
            rules: 16,
            hidden: 128,
            ..ModelConfig::default()
        };
        let epochs = std::env::var("FUZZFORMER_MARKET_EPOCHS")
            .ok()
            .and_then(|s| s.parse().ok())
            .unwrap_or(200);
        let cfg = TrainConfig {
            epochs,
            ..TrainConfig::default()
        };
        let outcome = train(&model, &cfg, &ds, None)?;
        Ok((
            evaluate(&outcome.best, &ds, Split::Valid)?.rmse,
            evaluate(&outcome.best, &ds, Split::Test)?.rmse,
        ))
    };
    match run() {
        Ok((valid, test)) => verdict(
            (0.02..=0.07).contains(&test) && test <= 3.0 * valid,
            format!("valid {valid:.4}, test {test:.4} (band 0.02 to 0.07, test at most 3x valid)"),
        ),
        Err(e) => Verdict::Fail(format!("market run failed: {e}")),
    }
}

fn criterion_9() -> Verdict {
    let ds = synthetic_dataset(260, 6, 3);
    let model = ModelConfig {
        channels: ds.num_channels(),
        ..tiny_config()
    };
    let cfg = TrainConfig {
        epochs: 3,
        batch_size: 16,
        seed: 9,
        ..TrainConfig::default()
    };
    let bytes = |m: Fuzzformer| {
        let mut out = Vec::new();
        Checkpoint {
            model: m,
            channels: ds.channels.clone(),
            scaler: Some(ds.scaler.clone()),
        }
        .write_to(&mut out)
        .unwrap();
        out
    };
    let a = bytes(train(&model, &cfg, &ds, None).unwrap().best);
    let b = bytes(train(&model, &cfg, &ds, None).unwrap().best);
    let loaded = Checkpoint::read_from(&a[..], std::path::Path::new("memory")).unwrap();
    let again = bytes(loaded.model.clone());
    let evals_match = Split::ALL.iter().all(|&s| {
        let original = Checkpoint::read_from(&b[..], std::path::Path::new("memory")).unwrap();
        evaluate(&original.model, &ds, s).unwrap() == evaluate(&loaded.model, &ds, s).unwrap()
    });
    verdict(
        a == b && a == again && evals_match,
        format!(
            "runs identical: {}, save/load bit-exact: {}, evaluation identical: {evals_match} ({} bytes)",
            a == b,
            a == again,
            a.len()
        ),
    )
}

fn criterion_10() -> Verdict {
    let raw = align(&fuzzformer::data::synthetic_series(&Default::default()).unwrap()).unwrap();
    let ds = WindowedDataset::prepare(&raw, 60, 30, 1).unwrap();
    let d = raw.channels();
    let train_idx = ds.indices(Split::Train);
    let last_train_row = train_idx
        .iter()
        .map(|&i| ds.samples[i].origin + ds.horizon)
        .max()
        .unwrap();
    let refit = MinMaxScaler::fit(&raw.values, d, 0..last_train_row + 1).unwrap();
    let scaler_ok = ds.fit_rows == last_train_row + 1 && ds.scaler == refit;
    let mut tampered = raw.clone();
    for v in &mut tampered.values[ds.fit_rows * d..] {
        *v = -*v * 7.0 - 100.0;
    }
    let untouched = WindowedDataset::prepare(&tampered, 60, 30, 1)
        .unwrap()
        .scaler
        == ds.scaler;
    let first_train_input = train_idx
        .iter()
        .map(|&i| ds.samples[i].origin + 1 - ds.lookback)
        .min()
        .unwrap();
    let test_idx = ds.indices(Split::Test);
    let first_test_target = test_idx
        .iter()
        .map(|&i| ds.samples[i].origin + 1)
        .min()
        .unwrap();
    let first_test_input = test_idx
        .iter()
        .map(|&i| ds.samples[i].origin + 1 - ds.lookback)
        .min()
        .unwrap();
    let order_ok = first_test_target > first_train_input && first_test_input > last_train_row;
    verdict(
        scaler_ok && untouched && order_ok,
        format!(
            "scaler rows 0..{} (= last training target + 1: {scaler_ok}), blind to later rows: {untouched}, first test target row {first_test_target} after training rows: {order_ok}",
            ds.fit_rows
        ),
    )
}

type Criterion = (u32, &'static str, fn() -> Verdict);

fn main() {
    let criteria: [Criterion; 10] = [
        (1, "gradient suite", criterion_1),
        (2, "partition of unity", criterion_2),
        (3, "Bhattacharyya unit values", criterion_3),
        (4, "ARIX transfer-function oracle", criterion_4),
        (5, "ARMA(1,1) recovery", criterion_5),
        (6, "loss unit values", criterion_6),
        (7, "desk-scale learning", criterion_7),
        (8, "market data reproduction", criterion_8),
        (9, "determinism", criterion_9),
        (10, "no-leakage audit", criterion_10),
    ];
    let only: Option<u32> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .and_then(|s| s.parse().ok());
    let mut failures = 0;
    for (id, name, run) in criteria {
        if only.is_some_and(|o| o != id) {
            continue;
        }
        let v = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Verdict::Fail(format!("panicked: {msg}"))
        });
        let (tag, detail) = match v {
            Verdict::Pass(d) => ("PASS", d),
            Verdict::Fail(d) => {
                failures += 1;
                ("FAIL", d)
            }
            Verdict::NotRun(d) => ("NOT RUN", d),
        };
        println!("criterion {id:>2} {tag:<7} {name}: {detail}");
    }
    if failures > 0 {
        eprintln!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
}
