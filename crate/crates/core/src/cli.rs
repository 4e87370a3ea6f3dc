//! Command implementations behind the `volmix` binary.
//!
//! Every command reads a [`RunConfig`], writes its outputs under
//! `RunConfig::out` and records a `manifest.json` with the config hash, the
//! seed and the crate version. Apart from the manifest timestamp, reruns with
//! the same config and inputs write identical bytes.
//!
//! Configs are flat `key = value` text, one pair per line, `#` starting a
//! comment. [`RunConfig::keys`] lists the accepted keys.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde_json::json;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::evaluation::{
    backtest, ks_two_sample, mae, make_splits, read_errors_csv, rmse, KsResult, ModelSpec, Procedure,
    StandardModel, DEFAULT_LAMBDA_GRID, DEFAULT_VALIDATION_FRACTION,
};
use crate::mixture::{MixtureKind, MixtureModel, VarianceMode};
use crate::orderbook::{extract_features, parse_snapshot, write_features_csv, FeatureVector};
use crate::synthgen::{generate, RegimeShift, SynthConfig};
use crate::training::{fit, TrainConfig};
use crate::volatility::{
    align_dataset, read_prices_csv, volatility_from_prices, write_volatility_csv, AlignedDataset, DatasetSpec,
    DEFAULT_BUCKET,
};

/// Largest tolerated share of malformed snapshot records.
pub const MAX_MALFORMED_FRACTION: f64 = 0.001;

/// Exit status for an error: 1 usage or config, 2 data validation, 3 numerical failure.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => 1,
        Error::Parse { .. }
        | Error::InvalidSnapshot { .. }
        | Error::InsufficientData(_)
        | Error::Dimension(_)
        | Error::Domain(_)
        | Error::Alignment(_)
        | Error::Io(_)
        | Error::Json(_) => 2,
        Error::Singular(_) | Error::Initialization(_) | Error::Metric(_) => 3,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub prices: Option<PathBuf>,
    pub snapshots: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    /// Dataset checkpoint written by `dataset` or `train`.
    pub dataset: Option<PathBuf>,
    /// Model checkpoint written by `train`.
    pub checkpoint: Option<PathBuf>,
    pub out: PathBuf,
    pub spec: DatasetSpec,
    pub kind: MixtureKind,
    pub train: TrainConfig,
    pub lambda_grid: Vec<f64>,
    /// Backtest model labels (`tm-g`, `tm-log`, `ar`, `arx`, `ewma`).
    pub models: Vec<String>,
    /// Label of the model the KS tests compare against.
    pub reference: String,
    pub procedure: Procedure,
    pub lookback: usize,
    /// Samples per interval; 0 splits the data into `lookback + test_intervals` intervals.
    pub interval_length: usize,
    pub test_intervals: usize,
    pub validation_fraction: f64,
    pub dump_errors: bool,
    pub synth: SynthConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            prices: None,
            snapshots: None,
            labels: None,
            dataset: None,
            checkpoint: None,
            out: PathBuf::from("out"),
            spec: DatasetSpec::default(),
            kind: MixtureKind::Gaussian,
            train: TrainConfig::default(),
            lambda_grid: DEFAULT_LAMBDA_GRID.to_vec(),
            models: ["tm-g", "ar", "arx", "ewma"].map(String::from).to_vec(),
            reference: "tm-g".into(),
            procedure: Procedure::Rolling,
            lookback: 3,
            interval_length: 0,
            test_intervals: 12,
            validation_fraction: DEFAULT_VALIDATION_FRACTION,
            dump_errors: true,
            synth: SynthConfig::default(),
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Config(format!("invalid value `{value}` for `{key}`")))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>> {
    value.split(',').map(|v| parse(key, v.trim())).collect()
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn path_str(p: &Option<PathBuf>) -> String {
    p.as_ref().map_or_else(String::new, |p| p.display().to_string())
}

fn opt_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

pub fn parse_kind(value: &str) -> Result<MixtureKind> {
    match value {
        "tm-g" | "gaussian" => Ok(MixtureKind::Gaussian),
        "tm-log" | "lognormal" => Ok(MixtureKind::Lognormal),
        _ => Err(Error::Config(format!("unknown model kind `{value}`, expected tm-g or tm-log"))),
    }
}

fn kind_label(kind: MixtureKind) -> &'static str {
    match kind {
        MixtureKind::Gaussian => "tm-g",
        MixtureKind::Lognormal => "tm-log",
    }
}

impl RunConfig {
    /// Accepted keys, in the order [`RunConfig::to_kv`] writes them.
    pub fn keys() -> &'static [&'static str] {
        &[
            "prices",
            "snapshots",
            "labels",
            "dataset",
            "checkpoint",
            "out",
            "lv",
            "lb",
            "horizon",
            "max_gap",
            "kind",
            "seed",
            "learning_rate",
            "max_rounds",
            "steps_per_block",
            "tol_rel_loss",
            "lambda",
            "alpha",
            "delta",
            "variance_mode",
            "grad_check",
            "lambda_grid",
            "models",
            "reference",
            "procedure",
            "lookback",
            "interval_length",
            "test_intervals",
            "validation_fraction",
            "dump_errors",
            "synth.hours",
            "synth.persistence",
            "synth.ar",
            "synth.ob_gain",
            "synth.noise",
            "synth.levels",
            "synth.base_level",
            "synth.regime_spread",
            "synth.shift_at",
            "synth.shift_stay0",
            "synth.shift_stay1",
        ]
    }

    /// Sets one key. `seed` drives both training and synthetic generation.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        fn shift(s: &mut SynthConfig) -> &mut RegimeShift {
            s.regime_shift.get_or_insert(RegimeShift { at_hour: 0, stay0: 0.95, stay1: 0.95 })
        }
        match key.trim() {
            "prices" => self.prices = opt_path(v),
            "snapshots" => self.snapshots = opt_path(v),
            "labels" => self.labels = opt_path(v),
            "dataset" => self.dataset = opt_path(v),
            "checkpoint" => self.checkpoint = opt_path(v),
            "out" => self.out = PathBuf::from(v),
            "lv" => self.spec.history = parse(key, v)?,
            "lb" => self.spec.book_window = parse(key, v)?,
            "horizon" => self.spec.horizon = parse(key, v)?,
            "max_gap" => self.spec.max_gap = parse(key, v)?,
            "kind" => self.kind = parse_kind(v)?,
            "seed" => {
                self.train.seed = parse(key, v)?;
                self.synth.seed = self.train.seed;
            }
            "learning_rate" => self.train.learning_rate = parse(key, v)?,
            "max_rounds" => self.train.max_rounds = parse(key, v)?,
            "steps_per_block" => self.train.steps_per_block = parse(key, v)?,
            "tol_rel_loss" => self.train.tol_rel_loss = parse(key, v)?,
            "lambda" => self.train.lambda = parse(key, v)?,
            "alpha" => self.train.alpha = parse(key, v)?,
            "delta" => self.train.delta = parse(key, v)?,
            "variance_mode" => {
                self.train.variance_mode = match v {
                    "constant" => VarianceMode::Constant,
                    "linear" => VarianceMode::Linear,
                    _ => return Err(Error::Config(format!("unknown variance_mode `{v}`"))),
                }
            }
            "grad_check" => self.train.grad_check = parse(key, v)?,
            "lambda_grid" => self.lambda_grid = parse_list(key, v)?,
            "models" => self.models = v.split(',').map(|m| m.trim().to_ascii_lowercase()).collect(),
            "reference" => self.reference = v.to_ascii_lowercase(),
            "procedure" => self.procedure = v.parse()?,
            "lookback" => self.lookback = parse(key, v)?,
            "interval_length" => self.interval_length = parse(key, v)?,
            "test_intervals" => self.test_intervals = parse(key, v)?,
            "validation_fraction" => self.validation_fraction = parse(key, v)?,
            "dump_errors" => self.dump_errors = parse(key, v)?,
            "synth.hours" => self.synth.hours = parse(key, v)?,
            "synth.persistence" => self.synth.regime_persistence = parse(key, v)?,
            "synth.ar" => self.synth.ar_coefficients = if v.is_empty() { Vec::new() } else { parse_list(key, v)? },
            "synth.ob_gain" => self.synth.ob_gain = parse(key, v)?,
            "synth.noise" => self.synth.noise_scale = parse(key, v)?,
            "synth.levels" => self.synth.book_levels = parse(key, v)?,
            "synth.base_level" => self.synth.base_level = parse(key, v)?,
            "synth.regime_spread" => self.synth.regime_spread = parse(key, v)?,
            "synth.shift_at" => {
                if v == "none" || v.is_empty() {
                    self.synth.regime_shift = None;
                } else {
                    shift(&mut self.synth).at_hour = parse(key, v)?;
                }
            }
            "synth.shift_stay0" => shift(&mut self.synth).stay0 = parse(key, v)?,
            "synth.shift_stay1" => shift(&mut self.synth).stay1 = parse(key, v)?,
            other => return Err(Error::Config(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Applies every `key = value` line of `text` on top of `self`.
    pub fn apply_kv(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("config line {}: expected key = value", i + 1)))?;
            self.set(k, v).map_err(|e| Error::Config(format!("config line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        let mut c = RunConfig::default();
        c.apply_kv(text)?;
        Ok(c)
    }

    /// Canonical text form; [`RunConfig::from_kv`] reads it back unchanged.
    pub fn to_kv(&self) -> String {
        let t = &self.train;
        let s = &self.synth;
        let shift = s.regime_shift;
        let values: Vec<String> = vec![
            path_str(&self.prices),
            path_str(&self.snapshots),
            path_str(&self.labels),
            path_str(&self.dataset),
            path_str(&self.checkpoint),
            self.out.display().to_string(),
            self.spec.history.to_string(),
            self.spec.book_window.to_string(),
            self.spec.horizon.to_string(),
            self.spec.max_gap.to_string(),
            kind_label(self.kind).into(),
            t.seed.to_string(),
            t.learning_rate.to_string(),
            t.max_rounds.to_string(),
            t.steps_per_block.to_string(),
            t.tol_rel_loss.to_string(),
            t.lambda.to_string(),
            t.alpha.to_string(),
            t.delta.to_string(),
            match t.variance_mode {
                VarianceMode::Constant => "constant".into(),
                VarianceMode::Linear => "linear".into(),
            },
            t.grad_check.to_string(),
            join(&self.lambda_grid),
            self.models.join(","),
            self.reference.clone(),
            self.procedure.to_string(),
            self.lookback.to_string(),
            self.interval_length.to_string(),
            self.test_intervals.to_string(),
            self.validation_fraction.to_string(),
            self.dump_errors.to_string(),
            s.hours.to_string(),
            s.regime_persistence.to_string(),
            join(&s.ar_coefficients),
            s.ob_gain.to_string(),
            s.noise_scale.to_string(),
            s.book_levels.to_string(),
            s.base_level.to_string(),
            s.regime_spread.to_string(),
            shift.map_or("none".into(), |r| r.at_hour.to_string()),
            shift.map_or(String::new(), |r| r.stay0.to_string()),
            shift.map_or(String::new(), |r| r.stay1.to_string()),
        ];
        let mut out = String::new();
        for (k, v) in Self::keys().iter().zip(values) {
            if (k.starts_with("synth.shift_stay") && shift.is_none()) || v.is_empty() && !k.starts_with("synth.") {
                continue;
            }
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    /// SHA-256 of [`RunConfig::to_kv`] without the `out` line, hex encoded.
    /// The same experiment hashes alike wherever its results are written.
    pub fn hash(&self) -> String {
        let kv = self.to_kv();
        let body: String = kv.lines().filter(|l| !l.starts_with("out =")).map(|l| format!("{l}\n")).collect();
        Sha256::digest(body.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    fn require<'a>(&self, p: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
        let p = p.as_deref().ok_or_else(|| Error::Config(format!("`{key}` is required for this command")))?;
        if !p.exists() {
            return Err(Error::Config(format!("{key} file {} does not exist", p.display())));
        }
        Ok(p)
    }
}

fn write_manifest(cfg: &RunConfig, command: &str, results: serde_json::Value) -> Result<()> {
    let created = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let manifest = json!({
        "command": command,
        "config_hash": cfg.hash(),
        "config": cfg.to_kv(),
        "seed": cfg.train.seed,
        "versions": { "volmix": env!("CARGO_PKG_VERSION") },
        "created_unix": created,
        "results": results,
    });
    fs::write(cfg.out.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(())
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

/// Features of every well-formed record plus the malformed ones.
pub struct SnapshotScan {
    pub features: Vec<FeatureVector>,
    pub records: usize,
    /// `(line, message)` of each record that failed to parse or validate.
    pub malformed: Vec<(usize, String)>,
}

impl SnapshotScan {
    pub fn from_text(text: &str) -> Self {
        let mut scan = SnapshotScan { features: Vec::new(), records: 0, malformed: Vec::new() };
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            scan.records += 1;
            match parse_snapshot(line, i + 1) {
                Ok(s) => scan.features.push(extract_features(&s)),
                Err(e) => scan.malformed.push((i + 1, e.to_string())),
            }
        }
        scan
    }

    /// Fails once more than [`MAX_MALFORMED_FRACTION`] of the records are malformed.
    pub fn check(&self) -> Result<()> {
        for (line, msg) in self.malformed.iter().take(20) {
            log::warn!("skipping snapshot on line {line}: {msg}");
        }
        let bad = self.malformed.len();
        if bad > 0 && bad as f64 > MAX_MALFORMED_FRACTION * self.records as f64 {
            let (line, msg) = &self.malformed[0];
            return Err(Error::Parse {
                line: *line,
                msg: format!("{bad} of {} snapshot records are malformed; first: {msg}", self.records),
            });
        }
        Ok(())
    }
}

fn load_features(cfg: &RunConfig) -> Result<Vec<FeatureVector>> {
    let scan = SnapshotScan::from_text(&read(cfg.require(&cfg.snapshots, "snapshots")?)?);
    scan.check()?;
    Ok(scan.features)
}

/// The dataset checkpoint if one is configured, otherwise aligned from prices and snapshots.
fn load_dataset(cfg: &RunConfig) -> Result<AlignedDataset> {
    if cfg.dataset.is_some() {
        return AlignedDataset::from_json(&read(cfg.require(&cfg.dataset, "dataset")?)?);
    }
    let prices = read_prices_csv(&read(cfg.require(&cfg.prices, "prices")?)?)?;
    let v = volatility_from_prices(&prices, DEFAULT_BUCKET)?;
    align_dataset(&v, &load_features(cfg)?, &cfg.spec, None)
}

fn prepare_out(cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(&cfg.out)?;
    Ok(())
}

/// Streams `snapshots` through the feature extractor into `features.csv`.
pub fn cmd_features(cfg: &RunConfig) -> Result<String> {
    let scan = SnapshotScan::from_text(&read(cfg.require(&cfg.snapshots, "snapshots")?)?);
    scan.check()?;
    prepare_out(cfg)?;
    let mut buf = Vec::new();
    write_features_csv(&mut buf, &scan.features)?;
    fs::write(cfg.out.join("features.csv"), buf)?;
    write_manifest(cfg, "features", json!({ "records": scan.records, "malformed": scan.malformed.len() }))?;
    Ok(format!(
        "{} feature rows written, {} malformed records skipped\n",
        scan.features.len(),
        scan.malformed.len()
    ))
}

/// Aligns prices and snapshots into `dataset.json` plus `volatility.csv`.
pub fn cmd_dataset(cfg: &RunConfig) -> Result<String> {
    let prices = read_prices_csv(&read(cfg.require(&cfg.prices, "prices")?)?)?;
    let v = volatility_from_prices(&prices, DEFAULT_BUCKET)?;
    let data = align_dataset(&v, &load_features(cfg)?, &cfg.spec, None)?;
    prepare_out(cfg)?;
    fs::write(cfg.out.join("volatility.csv"), write_volatility_csv(&v))?;
    fs::write(cfg.out.join("dataset.json"), data.to_json()?)?;
    write_manifest(cfg, "dataset", json!({ "samples": data.len(), "volatility_points": v.len() }))?;
    Ok(format!("{} aligned samples from {} volatility points\n", data.len(), v.len()))
}

/// Fits `kind` on the leading part of the data and scores the trailing
/// `validation_fraction`.
///
/// Writes `model.json`, `train_report.json`, `dataset.json` (standardized on
/// the training part) and, when nonempty, `validation.json`.
pub fn cmd_train(cfg: &RunConfig) -> Result<String> {
    let mut data = load_dataset(cfg)?;
    if !(0.0..=0.5).contains(&cfg.validation_fraction) {
        return Err(Error::Config("validation_fraction must lie in [0, 0.5]".into()));
    }
    let n = data.len();
    let n_val = (cfg.validation_fraction * n as f64).round() as usize;
    let n_train = n - n_val;
    data.standardize(0..n_train)?;
    let train = data.subset(0..n_train);
    let validation = data.subset(n_train..n);
    let (model, report) = fit(cfg.kind, &train, &cfg.train)?;
    let val_metrics = if validation.is_empty() {
        None
    } else {
        let pred = validation.samples.iter().map(|s| model.predict_sample(s)).collect::<Result<Vec<_>>>()?;
        Some((rmse(&pred, &validation.targets())?, mae(&pred, &validation.targets())?))
    };
    prepare_out(cfg)?;
    fs::write(cfg.out.join("model.json"), model.to_json()?)?;
    fs::write(cfg.out.join("train_report.json"), serde_json::to_string_pretty(&report)?)?;
    fs::write(cfg.out.join("dataset.json"), data.to_json()?)?;
    if !validation.is_empty() {
        fs::write(cfg.out.join("validation.json"), validation.to_json()?)?;
    }
    write_manifest(
        cfg,
        "train",
        json!({
            "kind": kind_label(cfg.kind),
            "train_samples": n_train,
            "validation_samples": n_val,
            "validation_rmse": val_metrics.map(|m| m.0),
            "validation_mae": val_metrics.map(|m| m.1),
            "final_loss": report.final_loss,
            "rounds_used": report.rounds_used,
            "converged": report.converged,
            "stalled": report.stalled,
        }),
    )?;
    let mut msg = format!("{} fitted on {n_train} samples in {} rounds\n", cfg.kind.label(), report.rounds_used);
    if let Some((r, _)) = val_metrics {
        let _ = writeln!(msg, "validation RMSE {r:e} on {n_val} samples");
    }
    Ok(msg)
}

/// Predicts every sample of `dataset` with `checkpoint`.
///
/// Writes `predictions.csv` (`h,prediction,actual`) and `gates.csv`
/// (`h,g,one_minus_g`, the weight on the history component and its complement).
pub fn cmd_predict(cfg: &RunConfig) -> Result<String> {
    let model = MixtureModel::from_json(&read(cfg.require(&cfg.checkpoint, "checkpoint")?)?)?;
    let data = load_dataset(cfg)?;
    let mut preds = String::from("h,prediction,actual\n");
    let mut gates = String::from("h,g,one_minus_g\n");
    let mut p = Vec::with_capacity(data.len());
    for s in &data.samples {
        let y = model.predict_sample(s)?;
        let (g, gc) = model.gate_value(&s.history, &s.features)?;
        let _ = writeln!(preds, "{},{y},{}", s.h, s.target);
        let _ = writeln!(gates, "{},{g},{gc}", s.h);
        p.push(y);
    }
    let (r, m) = (rmse(&p, &data.targets())?, mae(&p, &data.targets())?);
    prepare_out(cfg)?;
    fs::write(cfg.out.join("predictions.csv"), preds)?;
    fs::write(cfg.out.join("gates.csv"), gates)?;
    write_manifest(cfg, "predict", json!({ "samples": data.len(), "rmse": r, "mae": m }))?;
    Ok(format!("{} predictions, RMSE {r:e}, MAE {m:e}\n", data.len()))
}

fn backtest_models(cfg: &RunConfig) -> Result<(Vec<Box<dyn ModelSpec>>, usize)> {
    let mut models: Vec<Box<dyn ModelSpec>> = Vec::new();
    let mut reference = None;
    for label in &cfg.models {
        let mut m = StandardModel::from_label(label, &cfg.train)?;
        if let StandardModel::Mixture { lambda_grid, .. } = &mut m {
            lambda_grid.clone_from(&cfg.lambda_grid);
        }
        if *label == cfg.reference {
            reference = Some(models.len());
        }
        models.push(Box::new(m));
    }
    let reference = reference
        .ok_or_else(|| Error::Config(format!("reference model `{}` is not in models", cfg.reference)))?;
    Ok((models, reference))
}

/// Runs the configured backtest and writes `report.csv`, `report.txt` and,
/// if enabled, one error file per cell under `errors/`.
pub fn cmd_backtest(cfg: &RunConfig) -> Result<String> {
    let data = load_dataset(cfg)?;
    let (models, reference) = backtest_models(cfg)?;
    let length = if cfg.interval_length > 0 {
        cfg.interval_length
    } else {
        data.len() / (cfg.lookback + cfg.test_intervals).max(1)
    };
    let plan = make_splits(data.len(), length, cfg.lookback, cfg.procedure, cfg.validation_fraction)?;
    let report = backtest(&models, &data, &plan, reference)?;
    prepare_out(cfg)?;
    let table = report.to_table();
    fs::write(cfg.out.join("report.csv"), report.to_csv())?;
    fs::write(cfg.out.join("report.txt"), &table)?;
    if cfg.dump_errors {
        report.write_errors(&cfg.out.join("errors"))?;
    }
    let missing: usize = report.cells.iter().flatten().filter(|c| c.is_err()).count();
    write_manifest(
        cfg,
        "backtest",
        json!({
            "samples": data.len(),
            "interval_length": length,
            "test_intervals": plan.intervals.len(),
            "models": report.models,
            "missing_cells": missing,
        }),
    )?;
    Ok(table)
}

/// Generates synthetic data into `prices.csv`, `snapshots.txt` and `labels.csv`.
pub fn cmd_synth(cfg: &RunConfig) -> Result<String> {
    let out = generate(&cfg.synth)?;
    prepare_out(cfg)?;
    out.write_to(&cfg.out)?;
    let ones = out.regime_labels.iter().filter(|&&z| z == 1).count();
    write_manifest(cfg, "synth", json!({ "hours": cfg.synth.hours, "regime1_hours": ones }))?;
    Ok(format!("{} hours generated, {ones} in regime 1\n", cfg.synth.hours))
}

/// Two-sample KS test on the `error` columns (or single columns) of two CSV files.
pub fn cmd_kstest(a: &Path, b: &Path) -> Result<KsResult> {
    let ea = read_errors_csv(&read(a)?)?;
    let eb = read_errors_csv(&read(b)?)?;
    ks_two_sample(&ea, &eb)
}
