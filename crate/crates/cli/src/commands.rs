use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use chrono::NaiveDate;
use clap::{Args, ValueEnum};
use fuzzformer::baselines::{evaluate_arima, evaluate_persistence, ArimaOrder, LstmBaseline};
use fuzzformer::data::{
    align, fetch_http, synthetic_series, write_csv, DatasetManifest, SyntheticConfig,
};
use fuzzformer::export::{forecast_bundle, load_window_csv, write_bundle, write_wide_csv};
use fuzzformer::model::MAIN_CHANNEL;
use fuzzformer::report::{append_results, read_results, ReportTable};
use fuzzformer::{train, Checkpoint, Error, ResultRow, Split, WindowedDataset};

use crate::config::{Overrides, RunConfig};
use crate::plot::{self, Series};

pub const CACHE_ENV: &str = "FUZZFORMER_CACHE_DIR";
const DEFAULT_CACHE: &str = ".fuzzformer-cache";

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// Creates the directory a file output will live in.
fn create_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => create_dir(dir),
        _ => Ok(()),
    }
}

fn create_file(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn setting(ds: &WindowedDataset) -> String {
    format!("{}/{}", ds.lookback, ds.horizon)
}

#[derive(Args, Debug)]
pub struct FetchArgs {
    /// CSV endpoint returning `date,value` rows.
    #[arg(long)]
    pub url: String,
    #[arg(long, env = CACHE_ENV, default_value = DEFAULT_CACHE)]
    pub cache_dir: PathBuf,
    /// Also copy the series here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn fetch(args: &FetchArgs) -> Result<()> {
    let series = fetch_http(&args.url, &args.cache_dir)?;
    println!(
        "{} observations, {} to {}",
        series.len(),
        series
            .first_date()
            .map_or_else(String::new, |d| d.to_string()),
        series
            .last_date()
            .map_or_else(String::new, |d| d.to_string())
    );
    if let Some(out) = &args.out {
        create_parent(out)?;
        write_csv(&series, out)?;
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct PrepareArgs {
    /// Channel manifest (TOML, one `[[channel]]` table per series).
    #[arg(
        long,
        conflicts_with = "synthetic",
        required_unless_present = "synthetic"
    )]
    pub manifest: Option<PathBuf>,
    /// Generate the seeded synthetic dataset instead of reading sources.
    #[arg(long)]
    pub synthetic: bool,
    #[arg(long, default_value_t = SyntheticConfig::default().rows)]
    pub rows: usize,
    #[arg(long, default_value_t = SyntheticConfig::default().channels)]
    pub channels: usize,
    #[arg(long, default_value_t = SyntheticConfig::default().seed)]
    pub synthetic_seed: u64,
    #[arg(long, env = CACHE_ENV, default_value = DEFAULT_CACHE)]
    pub cache_dir: PathBuf,
    /// Dataset file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the aligned, unscaled matrix as `date,<channel>...`.
    #[arg(long)]
    pub wide: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: Overrides,
}

pub fn prepare(args: &PrepareArgs) -> Result<()> {
    let cfg = args.overrides.resolve()?;
    create_parent(&args.out)?;
    if let Some(wide) = &args.wide {
        create_parent(wide)?;
    }
    let series = match &args.manifest {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            let mut manifest: DatasetManifest = toml::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            let base = path.parent().unwrap_or(Path::new("."));
            let series = manifest.load(base, &args.cache_dir)?;
            let resolved = args.out.with_extension("manifest.toml");
            std::fs::write(&resolved, toml::to_string_pretty(&manifest)?)
                .with_context(|| format!("writing {}", resolved.display()))?;
            series
        }
        None => synthetic_series(&SyntheticConfig {
            rows: args.rows,
            channels: args.channels,
            seed: args.synthetic_seed,
            ..SyntheticConfig::default()
        })?,
    };
    let aligned = align(&series)?;
    let ds = WindowedDataset::prepare(&aligned, cfg.model.lookback, cfg.model.horizon, cfg.stride)?;
    ds.save(&args.out)?;
    cfg.save(&args.out.with_extension("config.toml"))?;
    if let Some(wide) = &args.wide {
        write_wide_csv(&aligned.names, &aligned.calendar, &aligned.values, wide)?;
    }
    println!(
        "{} rows x {} channels; samples train {} valid {} test {}; embargoed {}",
        ds.rows(),
        ds.num_channels(),
        ds.indices(Split::Train).len(),
        ds.indices(Split::Valid).len(),
        ds.indices(Split::Test).len(),
        ds.embargoed
    );
    Ok(())
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Output directory for the checkpoint, loss log, plots and results.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub overrides: Overrides,
}

/// Takes N, H and D_X from the dataset; explicit flags must agree with it.
fn fit_to_dataset(cfg: &mut RunConfig, o: &Overrides, ds: &WindowedDataset) -> Result<()> {
    for (name, flag, actual) in [
        ("lookback", o.lookback, ds.lookback),
        ("horizon", o.horizon, ds.horizon),
    ] {
        if let Some(v) = flag.filter(|&v| v != actual) {
            return Err(Error::Config(format!(
                "--{name} {v} does not match the dataset ({actual})"
            ))
            .into());
        }
    }
    cfg.model.lookback = ds.lookback;
    cfg.model.horizon = ds.horizon;
    cfg.model.channels = ds.num_channels();
    Ok(())
}

pub fn train_cmd(args: &TrainArgs) -> Result<()> {
    let mut cfg = args.overrides.resolve()?;
    let ds = WindowedDataset::load(&args.dataset)?;
    fit_to_dataset(&mut cfg, &args.overrides, &ds)?;
    cfg.model.validate()?;
    create_dir(&args.out)?;
    cfg.save(&args.out.join("config.toml"))?;

    let mut log = create_file(&args.out.join("losses.csv"))?;
    let outcome = train::train(&cfg.model, &cfg.train, &ds, Some(&mut log))?;
    log.flush()?;

    let ck = Checkpoint {
        model: outcome.best,
        channels: ds.channels.clone(),
        scaler: Some(ds.scaler.clone()),
    };
    ck.save(args.out.join("checkpoint.fzck"))?;

    let history = &outcome.history;
    let curve =
        |f: fn(&train::EpochLog) -> f64| history.iter().map(|e| (e.epoch as f64, f(e))).collect();
    plot::write(
        &args.out.join("losses.svg"),
        "training losses",
        "epoch",
        "loss",
        &[
            Series::line("composite", curve(|e| e.loss.composite)),
            Series::line("mse", curve(|e| e.loss.mse)),
            Series::line("validation rmse", curve(|e| e.val_rmse)),
        ],
    )?;

    let mut rows = Vec::new();
    for split in Split::ALL {
        if ds.indices(split).is_empty() {
            continue;
        }
        let ev = train::evaluate(&ck.model, &ds, split)?;
        rows.push(ResultRow {
            method: "Fuzzformer".into(),
            config: setting(&ds),
            split: split.to_string(),
            rmse: ev.rmse,
        });
    }
    let results = args.out.join("results.csv");
    if results.exists() {
        std::fs::remove_file(&results)?;
    }
    append_results(&results, &rows)?;
    println!(
        "best epoch {} of {} (validation rmse {:.6}, initial {:.6}) in {:.1}s",
        outcome.best_epoch,
        cfg.train.epochs,
        outcome.best_val_rmse,
        outcome.initial_val_rmse,
        outcome.seconds
    );
    for r in &rows {
        println!("{} rmse {:.6}", r.split, r.rmse);
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: Split,
    /// Directory for forecast and per-step CSVs and plots.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Results file to append the score to.
    #[arg(long)]
    pub results: Option<PathBuf>,
}

fn check_channels(ck: &Checkpoint, ds: &WindowedDataset) -> Result<()> {
    if ck.channels != ds.channels {
        return Err(Error::Config(format!(
            "checkpoint channels {:?} differ from dataset channels {:?}",
            ck.channels, ds.channels
        ))
        .into());
    }
    Ok(())
}

pub fn evaluate(args: &EvaluateArgs) -> Result<()> {
    let ck = Checkpoint::load(&args.checkpoint)?;
    let ds = WindowedDataset::load(&args.dataset)?;
    check_channels(&ck, &ds)?;
    let ev = train::evaluate(&ck.model, &ds, args.split)?;
    println!(
        "{} rmse {:.6} over {} windows",
        ev.split,
        ev.rmse,
        ev.sample_indices.len()
    );
    if let Some(dir) = &args.out {
        create_dir(dir)?;
        RunConfig {
            model: ck.model.config().clone(),
            ..RunConfig::default()
        }
        .save(&dir.join("config.toml"))?;
        let h = ds.horizon;
        let mut w = csv::Writer::from_path(dir.join(format!("forecasts_{}.csv", ev.split)))?;
        w.write_record(["sample", "origin_date", "step", "forecast", "target"])?;
        for (k, &i) in ev.sample_indices.iter().enumerate() {
            let date = &ds.calendar[ds.samples[i].origin];
            for j in 0..h {
                w.write_record([
                    i.to_string(),
                    date.clone(),
                    (j + 1).to_string(),
                    ev.forecasts[k * h + j].to_string(),
                    ev.targets[k * h + j].to_string(),
                ])?;
            }
        }
        w.flush()?;
        let mut w = csv::Writer::from_path(dir.join(format!("rmse_by_step_{}.csv", ev.split)))?;
        w.write_record(["step", "rmse"])?;
        for (j, r) in ev.rmse_by_step.iter().enumerate() {
            w.write_record([(j + 1).to_string(), r.to_string()])?;
        }
        w.flush()?;
        let steps: Vec<(f64, f64)> = ev
            .rmse_by_step
            .iter()
            .enumerate()
            .map(|(j, &r)| ((j + 1) as f64, r))
            .collect();
        plot::write(
            &dir.join(format!("rmse_by_step_{}.svg", ev.split)),
            &format!("{} rmse by horizon step", ev.split),
            "step",
            "rmse",
            &[Series::line("rmse", steps)],
        )?;
        let first = |v: &[f64]| {
            v.iter()
                .step_by(h)
                .enumerate()
                .map(|(k, &y)| (k as f64, y))
                .collect()
        };
        plot::write(
            &dir.join(format!("forecast_{}.svg", ev.split)),
            &format!("{} one-step-ahead forecasts", ev.split),
            "window",
            "scaled value",
            &[
                Series::line("target", first(&ev.targets)),
                Series::line("forecast", first(&ev.forecasts)),
            ],
        )?;
    }
    if let Some(path) = &args.results {
        create_parent(path)?;
        append_results(
            path,
            &[ResultRow {
                method: "Fuzzformer".into(),
                config: setting(&ds),
                split: ev.split.to_string(),
                rmse: ev.rmse,
            }],
        )?;
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct ForecastArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Wide CSV `date,<channel>...`; its last N rows form the input window.
    #[arg(long)]
    pub window: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn forecast(args: &ForecastArgs) -> Result<()> {
    let ck = Checkpoint::load(&args.checkpoint)?;
    let window = load_window_csv(&args.window, &ck.channels, ck.model.config().lookback)?;
    let bundle = forecast_bundle(&ck, &window)?;
    create_dir(&args.out)?;
    RunConfig {
        model: ck.model.config().clone(),
        ..RunConfig::default()
    }
    .save(&args.out.join("config.toml"))?;
    write_bundle(&ck, &bundle, &args.out)?;

    let d = ck.channels.len();
    let history: Vec<(f64, f64)> = window
        .values
        .iter()
        .skip(MAIN_CHANNEL)
        .step_by(d)
        .enumerate()
        .map(|(t, &v)| (t as f64, v))
        .collect();
    let n = history.len() as f64;
    let ahead = |v: &[f64]| -> Vec<(f64, f64)> {
        v.iter()
            .enumerate()
            .map(|(j, &y)| (n + j as f64, y))
            .collect()
    };
    let mut series = vec![
        Series::line("history", history),
        Series::line("forecast", ahead(&bundle.forecast)),
    ];
    let top = ranked(&bundle.memberships, 3);
    for &i in &top {
        series.push(Series::line(
            format!("rule {i} ({:.2})", bundle.memberships[i]),
            ahead(&bundle.rule_forecasts[i]),
        ));
    }
    plot::write(
        &args.out.join("forecast.svg"),
        &forecast_title(&window.dates),
        "step",
        &ck.channels[MAIN_CHANNEL],
        &series,
    )?;

    let clusters = ck.model.clusters()?;
    let xy = |v: &[f64]| (v[0], v.get(1).copied().unwrap_or(0.0));
    let latent = bundle.prediction.latent.data().to_vec();
    plot::write(
        &args.out.join("clusters.svg"),
        "rule centres and current latent point",
        "z1",
        "z2",
        &[
            Series::dots("centres", clusters.iter().map(|c| xy(c.mean())).collect()),
            Series::dots("window", vec![xy(&latent)]),
        ],
    )?;
    let mut stdout = std::io::stdout().lock();
    for (j, v) in bundle.forecast.iter().enumerate() {
        writeln!(stdout, "{}\t{v}", j + 1)?;
    }
    Ok(())
}

fn forecast_title(dates: &[NaiveDate]) -> String {
    match dates.last() {
        Some(d) => format!("forecast from {d}"),
        None => "forecast".into(),
    }
}

/// Indices of the `k` largest values, largest first.
fn ranked(values: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    idx.truncate(k);
    idx
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Persistence,
    Arima,
    Lstm,
}

#[derive(Args, Debug)]
pub struct BaselineArgs {
    #[arg(long, value_enum)]
    pub method: Method,
    #[arg(long)]
    pub dataset: PathBuf,
    /// ARIMA order `p,d,q`; overrides the config file.
    #[arg(long)]
    pub order: Option<ArimaOrder>,
    /// Splits to score; all three by default.
    #[arg(long, value_delimiter = ',')]
    pub split: Vec<Split>,
    /// Output directory for the results file and resolved config.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub overrides: Overrides,
}

pub fn baseline(args: &BaselineArgs) -> Result<()> {
    let mut cfg = args.overrides.resolve()?;
    if let Some(o) = args.order {
        cfg.arima = o;
    }
    if let Some(e) = args.overrides.epochs {
        cfg.lstm.epochs = e;
    }
    if let Some(s) = args.overrides.seed {
        cfg.lstm.seed = s;
    }
    let ds = WindowedDataset::load(&args.dataset)?;
    fit_to_dataset(&mut cfg, &args.overrides, &ds)?;
    create_dir(&args.out)?;
    cfg.save(&args.out.join("config.toml"))?;
    let splits: Vec<Split> = if args.split.is_empty() {
        Split::ALL.to_vec()
    } else {
        args.split.clone()
    };

    let lstm = match args.method {
        Method::Lstm => {
            let mut m =
                LstmBaseline::new(cfg.lstm.clone(), ds.num_channels(), ds.lookback, ds.horizon)?;
            let losses = m.train(&ds)?;
            if let Some(last) = losses.last() {
                println!("lstm trained {} epochs, final loss {last:.6}", losses.len());
            }
            Some(m)
        }
        _ => None,
    };
    let name = match args.method {
        Method::Persistence => "Persistence".to_string(),
        Method::Arima => cfg.arima.to_string(),
        Method::Lstm => "LSTM".to_string(),
    };
    let mut rows = Vec::new();
    for split in splits {
        let rmse = match (&lstm, args.method) {
            (Some(m), _) => m.evaluate(&ds, split)?,
            (None, Method::Arima) => {
                let s = evaluate_arima(&ds, split, cfg.arima)?;
                if s.skipped > 0 {
                    eprintln!(
                        "{split}: {} of {} windows could not be fitted",
                        s.skipped,
                        s.skipped + s.evaluated
                    );
                }
                s.rmse
            }
            _ => evaluate_persistence(&ds, split)?.rmse,
        };
        println!("{name} {split} rmse {rmse:.6}");
        rows.push(ResultRow {
            method: name.clone(),
            config: setting(&ds),
            split: split.to_string(),
            rmse,
        });
    }
    append_results(args.out.join("results.csv"), &rows)?;
    Ok(())
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Results CSVs (`method,config,split,rmse`).
    #[arg(required = true)]
    pub results: Vec<PathBuf>,
    /// Also write the table as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

pub fn report(args: &ReportArgs) -> Result<()> {
    let mut rows = Vec::new();
    for path in &args.results {
        rows.extend(read_results(path)?);
    }
    if rows.is_empty() {
        bail!(Error::Data("the results files hold no rows".into()));
    }
    let table = ReportTable::build(&rows)?;
    write!(std::io::stdout().lock(), "{}", table.to_text())?;
    if let Some(path) = &args.csv {
        create_parent(path)?;
        table.write_csv(path)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranking_is_descending() {
        assert_eq!(ranked(&[0.1, 0.5, 0.2, 0.2], 3), vec![1, 2, 3]);
        assert_eq!(ranked(&[1.0], 3), vec![0]);
    }
}
