mod common;

use std::path::Path;

use chrono::NaiveDate;
use common::*;
use fuzzformer::baselines::persistence_forecast;
use fuzzformer::data::{Aligned, Sample};
use fuzzformer::metrics::rmse;
use fuzzformer::train::{evaluate, train};
use fuzzformer::{
    AdamConfig, Checkpoint, Fuzzformer, ModelConfig, Split, TrainConfig, WindowedDataset,
};

fn checkpoint_bytes(model: &Fuzzformer, ds: &WindowedDataset) -> Vec<u8> {
    let ck = Checkpoint {
        model: model.clone(),
        channels: ds.channels.clone(),
        scaler: Some(ds.scaler.clone()),
    };
    let mut bytes = Vec::new();
    ck.write_to(&mut bytes).unwrap();
    bytes
}

fn tiny_run(epochs: usize) -> (ModelConfig, TrainConfig, WindowedDataset) {
    let ds = synthetic_dataset(200, 6, 3);
    let model = ModelConfig {
        channels: ds.num_channels(),
        ..tiny_config()
    };
    let cfg = TrainConfig {
        epochs,
        batch_size: 16,
        seed: 11,
        ..TrainConfig::default()
    };
    (model, cfg, ds)
}

#[test]
fn zero_epochs_yield_the_initialised_model_as_a_valid_checkpoint() {
    let (model, cfg, ds) = tiny_run(0);
    let out = train(&model, &cfg, &ds, None).unwrap();
    assert_eq!(out.best_epoch, 0);
    assert!(out.history.is_empty());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("init.fzck");
    Checkpoint {
        model: out.best,
        channels: ds.channels.clone(),
        scaler: Some(ds.scaler.clone()),
    }
    .save(&path)
    .unwrap();
    let back = Checkpoint::load(&path).unwrap();
    assert_eq!(
        evaluate(&back.model, &ds, Split::Valid).unwrap().rmse,
        out.initial_val_rmse
    );
}

#[test]
fn identical_runs_give_identical_checkpoints() {
    let (model, cfg, ds) = tiny_run(3);
    let mut log_a = Vec::new();
    let mut log_b = Vec::new();
    let a = train(&model, &cfg, &ds, Some(&mut log_a)).unwrap();
    let b = train(&model, &cfg, &ds, Some(&mut log_b)).unwrap();
    assert_eq!(a.best_val_rmse.to_bits(), b.best_val_rmse.to_bits());
    assert_eq!(log_a, log_b);
    assert_eq!(
        checkpoint_bytes(&a.best, &ds),
        checkpoint_bytes(&b.best, &ds)
    );
    let other = train(&model, &TrainConfig { seed: 12, ..cfg }, &ds, None).unwrap();
    assert_ne!(
        checkpoint_bytes(&a.best, &ds),
        checkpoint_bytes(&other.best, &ds)
    );
}

#[test]
fn loaded_checkpoint_evaluates_identically() {
    let (model, cfg, ds) = tiny_run(2);
    let out = train(&model, &cfg, &ds, None).unwrap();
    let bytes = checkpoint_bytes(&out.best, &ds);
    let back = Checkpoint::read_from(&bytes[..], Path::new("mem")).unwrap();
    for split in Split::ALL {
        assert_eq!(
            evaluate(&out.best, &ds, split).unwrap(),
            evaluate(&back.model, &ds, split).unwrap()
        );
    }
}

#[test]
fn tiny_model_overfits_eight_windows() {
    let full = synthetic_dataset(400, 10, 5);
    let picked: Vec<usize> = full
        .indices(Split::Train)
        .into_iter()
        .step_by(30)
        .take(8)
        .collect();
    assert_eq!(picked.len(), 8);
    let mut samples: Vec<Sample> = picked.iter().map(|&i| full.samples[i]).collect();
    samples.extend(samples.clone().into_iter().map(|s| Sample {
        split: Split::Valid,
        ..s
    }));
    let ds = WindowedDataset { samples, ..full };
    let model = ModelConfig {
        lookback: 10,
        horizon: 5,
        channels: ds.num_channels(),
        lstm_layers: 1,
        hidden: 8,
        attention_layers: 1,
        heads: 2,
        rules: 2,
        ar_order: 2,
        dropout: 0.0,
        ..ModelConfig::default()
    };
    let cfg = TrainConfig {
        epochs: 500,
        batch_size: 8,
        optimizer: AdamConfig {
            learning_rate: 1e-2,
            ..AdamConfig::default()
        },
        ..TrainConfig::default()
    };
    let out = train(&model, &cfg, &ds, None).unwrap();
    let fit = evaluate(&out.best, &ds, Split::Train).unwrap();
    let idx = ds.indices(Split::Train);
    let naive: Vec<f64> = idx
        .iter()
        .flat_map(|&i| persistence_forecast(&ds.main_window(i), ds.horizon).unwrap())
        .collect();
    let baseline = rmse(&naive, &fit.targets).unwrap();
    assert!(
        fit.rmse < 0.1 * baseline,
        "train rmse {} vs persistence {baseline}",
        fit.rmse
    );
}

#[test]
fn exact_dynamics_on_a_ramp_give_zero_error() {
    let start = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
    let rows = 300;
    let aligned = Aligned {
        names: vec!["ramp".into(), "aux".into()],
        calendar: (0..rows)
            .map(|t| start + chrono::Days::new(t as u64))
            .collect(),
        values: (0..rows)
            .flat_map(|t| [2.0 + 0.5 * t as f64, (t as f64 * 0.4).sin()])
            .collect(),
    };
    let ds = WindowedDataset::prepare(&aligned, 8, 4, 1).unwrap();
    let cfg = ModelConfig {
        lookback: 8,
        horizon: 4,
        channels: 2,
        lstm_layers: 1,
        hidden: 4,
        attention_layers: 1,
        heads: 2,
        rules: 3,
        ar_order: 1,
        ..ModelConfig::default()
    };
    let mut model = Fuzzformer::new(cfg, &mut rng(1)).unwrap();
    // Δŷ(k+j) = Δy(k+j-1): a ramp continues exactly
    model.params_mut().set("arix.ar", vec![-1.0; 3]).unwrap();
    model.params_mut().set("arix.exo", vec![0.0; 3]).unwrap();
    for split in Split::ALL {
        let ev = evaluate(&model, &ds, split).unwrap();
        assert!(ev.rmse < 1e-12, "{split}: {}", ev.rmse);
    }
}
