//! Rolling and incremental backtests, point-error metrics and the two-sample
//! Kolmogorov-Smirnov test.
//!
//! A [`SplitPlan`] cuts the sample axis into equal intervals. Each interval
//! from index `N` on is a test interval. It is paired with a fit span that
//! covers the `N` preceding intervals (rolling) or everything before it
//! (incremental). The trailing fraction of the fit span is the validation
//! slice used for hyperparameter selection. [`backtest`] fits every model on
//! every interval, scores the test slice and compares error distributions
//! against a reference model.

use std::fmt::{self, Write as _};
use std::fs;
use std::ops::Range;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{
    ar_fit_grid, ar_predict, arx_fit_grid, arx_predict, ewma_predict, ewma_select_alpha, ArModel, ArxModel,
    EwmaModel, DEFAULT_ALPHA_GRID,
};
use crate::error::{Error, Result};
use crate::mixture::{MixtureKind, MixtureModel};
use crate::training::{fit, TrainConfig};
use crate::volatility::{AlignedDataset, Sample};

pub const DEFAULT_VALIDATION_FRACTION: f64 = 0.2;

/// Regularization strengths tried for the mixture models.
pub const DEFAULT_LAMBDA_GRID: [f64; 5] = [1e-4, 1e-3, 1e-2, 0.1, 1.0];

/// Ridge strengths tried for the AR and ARX baselines.
pub const DEFAULT_RIDGE_GRID: [f64; 5] = [1e-8, 1e-6, 1e-4, 1e-2, 1.0];

/// Marker for a missing cell in text reports.
pub const MISSING: &str = "—";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Procedure {
    /// Fit on the `N` intervals right before the test interval.
    Rolling,
    /// Fit on every interval before the test interval.
    Incremental,
}

impl fmt::Display for Procedure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Procedure::Rolling => "rolling",
            Procedure::Incremental => "incremental",
        })
    }
}

impl FromStr for Procedure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rolling" => Ok(Procedure::Rolling),
            "incremental" => Ok(Procedure::Incremental),
            _ => Err(Error::Config(format!("unknown procedure `{s}`, expected rolling or incremental"))),
        }
    }
}

/// Sample-index ranges of one test interval and its fit span.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Interval {
    /// Position of the test interval on the interval axis.
    pub index: usize,
    pub train: Range<usize>,
    pub validation: Range<usize>,
    pub test: Range<usize>,
}

impl Interval {
    /// Train and validation together.
    pub fn fit_span(&self) -> Range<usize> {
        self.train.start..self.validation.end
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitPlan {
    pub procedure: Procedure,
    /// `N`, the number of intervals before the first test interval.
    pub lookback: usize,
    pub interval_length: usize,
    pub intervals: Vec<Interval>,
}

impl SplitPlan {
    /// One past the last sample index any interval touches.
    pub fn samples_needed(&self) -> usize {
        self.intervals.last().map_or(0, |iv| iv.test.end)
    }
}

/// Cuts `total_samples` into intervals of `interval_length` and pairs each
/// test interval with its fit span. Samples past the last whole interval are
/// left out.
pub fn make_splits(
    total_samples: usize,
    interval_length: usize,
    lookback: usize,
    procedure: Procedure,
    validation_fraction: f64,
) -> Result<SplitPlan> {
    if interval_length == 0 || lookback == 0 {
        return Err(Error::Config("interval_length and lookback must be >= 1".into()));
    }
    if !(0.0..=0.5).contains(&validation_fraction) {
        return Err(Error::Config(format!("validation_fraction must lie in [0, 0.5], got {validation_fraction}")));
    }
    let count = total_samples / interval_length;
    if count <= lookback {
        return Err(Error::Config(format!(
            "{total_samples} samples make {count} intervals of {interval_length}; need more than lookback {lookback}"
        )));
    }
    let intervals = (lookback..count)
        .map(|t| {
            let first = match procedure {
                Procedure::Rolling => t - lookback,
                Procedure::Incremental => 0,
            };
            let span = first * interval_length..t * interval_length;
            let n_val = (validation_fraction * span.len() as f64).round() as usize;
            let cut = span.end - n_val;
            Interval { index: t, train: span.start..cut, validation: cut..span.end, test: span.end..span.end + interval_length }
        })
        .collect::<Vec<_>>();
    if intervals.iter().any(|iv| iv.train.is_empty()) {
        return Err(Error::Config("validation slice leaves no training samples".into()));
    }
    Ok(SplitPlan { procedure, lookback, interval_length, intervals })
}

fn check_pair(pred: &[f64], actual: &[f64]) -> Result<()> {
    if pred.len() != actual.len() {
        return Err(Error::Metric(format!("{} predictions for {} observations", pred.len(), actual.len())));
    }
    if pred.is_empty() {
        return Err(Error::Metric("no observations".into()));
    }
    Ok(())
}

pub fn rmse(pred: &[f64], actual: &[f64]) -> Result<f64> {
    check_pair(pred, actual)?;
    let sse: f64 = pred.iter().zip(actual).map(|(p, a)| (p - a) * (p - a)).sum();
    Ok((sse / pred.len() as f64).sqrt())
}

pub fn mae(pred: &[f64], actual: &[f64]) -> Result<f64> {
    check_pair(pred, actual)?;
    Ok(pred.iter().zip(actual).map(|(p, a)| (p - a).abs()).sum::<f64>() / pred.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    /// Largest gap between the two empirical CDFs.
    pub d: f64,
    /// Asymptotic p-value.
    pub p: f64,
}

/// Kolmogorov survival function `Q(x) = 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 x^2)`.
///
/// The alternating series converges slowly for small `x`, so below 1 the
/// equivalent Jacobi theta form `1 - sqrt(2 pi)/x sum exp(-(2k-1)^2 pi^2 / (8 x^2))`
/// is summed instead. Both stop once a term drops below `1e-12`.
pub fn kolmogorov_q(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x <= 0.0 {
        return 1.0;
    }
    if x < 1.0 {
        let c = std::f64::consts::PI * std::f64::consts::PI / (8.0 * x * x);
        let mut sum = 0.0;
        for k in 1.. {
            let j = (2 * k - 1) as f64;
            let term = (-j * j * c).exp();
            sum += term;
            if term < 1e-12 {
                break;
            }
        }
        return (1.0 - (2.0 * std::f64::consts::PI).sqrt() / x * sum).clamp(0.0, 1.0);
    }
    kolmogorov_q_series(x)
}

/// Direct alternating-series evaluation of [`kolmogorov_q`].
pub fn kolmogorov_q_series(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..100_000 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * x * x).exp();
        sum += sign * term;
        if term < 1e-12 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

fn sorted(v: &[f64]) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Err(Error::Metric("KS test needs two nonempty samples".into()));
    }
    if v.iter().any(|x| x.is_nan()) {
        return Err(Error::Metric("KS test input contains NaN".into()));
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    Ok(s)
}

/// `sup |F_a - F_b|` from a merged sweep over both sorted samples.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> Result<f64> {
    let (a, b) = (sorted(a)?, sorted(b)?);
    let (m, n) = (a.len(), b.len());
    let (mut i, mut j) = (0, 0);
    // integer gap |i n - j m| keeps the statistic symmetric and exact
    let mut best: u128 = 0;
    while i < m && j < n {
        let x = if a[i] <= b[j] { a[i] } else { b[j] };
        while i < m && a[i] == x {
            i += 1;
        }
        while j < n && b[j] == x {
            j += 1;
        }
        best = best.max((i as u128 * n as u128).abs_diff(j as u128 * m as u128));
    }
    Ok(best as f64 / (m as f64 * n as f64))
}

/// Two-sample KS test with the asymptotic p-value `Q(D sqrt(mn/(m+n)))`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    let d = ks_statistic(a, b)?;
    let (m, n) = (a.len() as f64, b.len() as f64);
    if a.len() < 8 || b.len() < 8 {
        log::warn!("KS p-value is unreliable for samples of size {} and {}", a.len(), b.len());
    }
    let p = kolmogorov_q(d * (m * n / (m + n)).sqrt());
    Ok(KsResult { d, p })
}

/// `**` below 1%, `*` below 5%, empty otherwise.
pub fn significance_stars(p: f64) -> &'static str {
    if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        ""
    }
}

/// A fitted model that scores single samples.
pub trait Predictor: Send + Sync {
    fn predict(&self, s: &Sample) -> Result<f64>;
}

/// A model recipe that [`backtest`] refits on every interval.
pub trait ModelSpec: Send + Sync {
    /// Unique name used in reports.
    fn name(&self) -> String;

    /// Fits on `train`; `validation` is only for choosing hyperparameters.
    fn fit(&self, train: &AlignedDataset, validation: &AlignedDataset) -> Result<Box<dyn Predictor>>;
}

impl Predictor for MixtureModel {
    fn predict(&self, s: &Sample) -> Result<f64> {
        self.predict_sample(s)
    }
}

impl Predictor for ArModel {
    fn predict(&self, s: &Sample) -> Result<f64> {
        ar_predict(self, s)
    }
}

impl Predictor for ArxModel {
    fn predict(&self, s: &Sample) -> Result<f64> {
        arx_predict(self, s)
    }
}

impl Predictor for EwmaModel {
    fn predict(&self, s: &Sample) -> Result<f64> {
        ewma_predict(self, &s.history)
    }
}

/// The model families a backtest can compare.
#[derive(Debug, Clone, PartialEq)]
pub enum StandardModel {
    Mixture { kind: MixtureKind, config: TrainConfig, lambda_grid: Vec<f64> },
    Ar { ridge_grid: Vec<f64> },
    Arx { ridge_grid: Vec<f64> },
    Ewma { alpha_grid: Vec<f64> },
}

impl StandardModel {
    pub fn mixture(kind: MixtureKind, config: TrainConfig) -> Self {
        StandardModel::Mixture { kind, config, lambda_grid: DEFAULT_LAMBDA_GRID.to_vec() }
    }

    pub fn ar() -> Self {
        StandardModel::Ar { ridge_grid: DEFAULT_RIDGE_GRID.to_vec() }
    }

    pub fn arx() -> Self {
        StandardModel::Arx { ridge_grid: DEFAULT_RIDGE_GRID.to_vec() }
    }

    pub fn ewma() -> Self {
        StandardModel::Ewma { alpha_grid: DEFAULT_ALPHA_GRID.to_vec() }
    }

    /// TM-G followed by the AR, ARX and EWMA baselines.
    pub fn default_set(config: &TrainConfig) -> Vec<StandardModel> {
        vec![Self::mixture(MixtureKind::Gaussian, config.clone()), Self::ar(), Self::arx(), Self::ewma()]
    }

    /// Parses `tm-g`, `tm-log`, `ar`, `arx` or `ewma`.
    pub fn from_label(label: &str, config: &TrainConfig) -> Result<Self> {
        match label.trim().to_ascii_lowercase().as_str() {
            "tm-g" => Ok(Self::mixture(MixtureKind::Gaussian, config.clone())),
            "tm-log" => Ok(Self::mixture(MixtureKind::Lognormal, config.clone())),
            "ar" => Ok(Self::ar()),
            "arx" => Ok(Self::arx()),
            "ewma" => Ok(Self::ewma()),
            other => Err(Error::Config(format!("unknown model `{other}`"))),
        }
    }
}

/// Sum of squared errors on `data`; failures and non-finite predictions count as infinite.
fn sse(p: &dyn Predictor, data: &AlignedDataset) -> f64 {
    let mut total = 0.0;
    for s in &data.samples {
        match p.predict(s) {
            Ok(y) if y.is_finite() => total += (y - s.target) * (y - s.target),
            _ => return f64::INFINITY,
        }
    }
    total
}

/// Picks the candidate with the smallest validation SSE, keeping the earliest
/// on ties. Scores on `train` when there is no validation slice.
fn select(
    candidates: Vec<Result<Box<dyn Predictor>>>,
    train: &AlignedDataset,
    validation: &AlignedDataset,
) -> Result<Box<dyn Predictor>> {
    let score_on = if validation.is_empty() { train } else { validation };
    let mut best: Option<(f64, Box<dyn Predictor>)> = None;
    let mut first_err = None;
    for c in candidates {
        match c {
            Ok(p) => {
                let e = sse(p.as_ref(), score_on);
                if best.as_ref().is_none_or(|(b, _)| e < *b) {
                    best = Some((e, p));
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    match (best, first_err) {
        (Some((_, p)), _) => Ok(p),
        (None, Some(e)) => Err(e),
        (None, None) => Err(Error::Config("empty hyperparameter grid".into())),
    }
}

fn boxed<P: Predictor + 'static>(r: Result<P>) -> Result<Box<dyn Predictor>> {
    r.map(|p| Box::new(p) as Box<dyn Predictor>)
}

impl ModelSpec for StandardModel {
    fn name(&self) -> String {
        match self {
            StandardModel::Mixture { kind, .. } => kind.label().into(),
            StandardModel::Ar { .. } => "AR".into(),
            StandardModel::Arx { .. } => "ARX".into(),
            StandardModel::Ewma { .. } => "EWMA".into(),
        }
    }

    fn fit(&self, train: &AlignedDataset, validation: &AlignedDataset) -> Result<Box<dyn Predictor>> {
        match self {
            StandardModel::Mixture { kind, config, lambda_grid } => {
                let candidates = lambda_grid
                    .iter()
                    .map(|&lambda| {
                        let cfg = TrainConfig { lambda, ..config.clone() };
                        boxed(fit(*kind, train, &cfg).map(|(m, _)| m))
                    })
                    .collect();
                select(candidates, train, validation)
            }
            StandardModel::Ar { ridge_grid } => {
                select(ar_fit_grid(train, ridge_grid)?.into_iter().map(boxed).collect(), train, validation)
            }
            StandardModel::Arx { ridge_grid } => {
                select(arx_fit_grid(train, ridge_grid)?.into_iter().map(boxed).collect(), train, validation)
            }
            StandardModel::Ewma { alpha_grid } => {
                let score_on = if validation.is_empty() { train } else { validation };
                Ok(Box::new(ewma_select_alpha(score_on, alpha_grid)?))
            }
        }
    }
}

/// Predictions and errors of one model on one test interval.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub h: Vec<usize>,
    pub predictions: Vec<f64>,
    pub actual: Vec<f64>,
    /// `prediction - actual`.
    pub errors: Vec<f64>,
    pub rmse: f64,
    pub mae: f64,
}

impl Cell {
    fn new(h: Vec<usize>, predictions: Vec<f64>, actual: Vec<f64>) -> Result<Self> {
        let rmse = rmse(&predictions, &actual)?;
        let mae = mae(&predictions, &actual)?;
        if !(rmse.is_finite() && mae.is_finite()) {
            return Err(Error::Metric("non-finite predictions".into()));
        }
        let errors = predictions.iter().zip(&actual).map(|(p, a)| p - a).collect();
        Ok(Cell { h, predictions, actual, errors, rmse, mae })
    }

    pub fn abs_errors(&self) -> Vec<f64> {
        self.errors.iter().map(|e| e.abs()).collect()
    }
}

/// KS comparison of a model's absolute errors against the reference model's.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Comparison {
    pub ks: KsResult,
    pub stars: &'static str,
}

#[derive(Debug, Clone)]
pub struct BacktestReport {
    pub models: Vec<String>,
    /// Interval indices, in plan order.
    pub intervals: Vec<usize>,
    /// Position of the reference model in `models`.
    pub reference: usize,
    /// `cells[model][interval]`; a failed fit keeps its error message.
    pub cells: Vec<Vec<Result<Cell, String>>>,
    /// `comparisons[model][interval]`; `None` for the reference model and missing cells.
    pub comparisons: Vec<Vec<Option<Comparison>>>,
}

/// Fits every model on every interval of `plan` and scores the test slices.
///
/// Features are re-standardized per interval on its training slice. A fit or
/// prediction failure only marks that cell as missing. Intervals run in
/// parallel; the result does not depend on scheduling.
pub fn backtest(
    models: &[Box<dyn ModelSpec>],
    data: &AlignedDataset,
    plan: &SplitPlan,
    reference: usize,
) -> Result<BacktestReport> {
    if models.is_empty() {
        return Err(Error::Config("backtest needs at least one model".into()));
    }
    if reference >= models.len() {
        return Err(Error::Config(format!("reference model {reference} out of range")));
    }
    if plan.samples_needed() > data.len() {
        return Err(Error::Config(format!(
            "plan needs {} samples but the dataset has {}",
            plan.samples_needed(),
            data.len()
        )));
    }
    let names: Vec<String> = models.iter().map(|m| m.name()).collect();
    for (i, n) in names.iter().enumerate() {
        if names[..i].contains(n) {
            return Err(Error::Config(format!("duplicate model name `{n}`")));
        }
    }

    let by_interval: Vec<Vec<Result<Cell, String>>> = plan
        .intervals
        .par_iter()
        .map(|iv| {
            let offset = iv.train.start;
            let shift = |r: &Range<usize>| r.start - offset..r.end - offset;
            let mut local = data.subset(offset..iv.test.end);
            if let Err(e) = local.standardize(shift(&iv.train)) {
                return vec![Err(e.to_string()); models.len()];
            }
            let train = local.subset(shift(&iv.train));
            let validation = local.subset(shift(&iv.validation));
            let test = local.subset(shift(&iv.test));
            models.iter().map(|m| run_cell(m.as_ref(), &train, &validation, &test).map_err(|e| e.to_string())).collect()
        })
        .collect();

    let cells: Vec<Vec<Result<Cell, String>>> = (0..models.len())
        .map(|m| by_interval.iter().map(|row| row[m].clone()).collect())
        .collect();
    let comparisons = (0..models.len())
        .map(|m| {
            (0..plan.intervals.len())
                .map(|t| {
                    if m == reference {
                        return None;
                    }
                    let (Ok(c), Ok(r)) = (&cells[m][t], &cells[reference][t]) else { return None };
                    let ks = ks_two_sample(&c.abs_errors(), &r.abs_errors()).ok()?;
                    Some(Comparison { ks, stars: significance_stars(ks.p) })
                })
                .collect()
        })
        .collect();
    Ok(BacktestReport {
        models: names,
        intervals: plan.intervals.iter().map(|iv| iv.index).collect(),
        reference,
        cells,
        comparisons,
    })
}

fn run_cell(spec: &dyn ModelSpec, train: &AlignedDataset, validation: &AlignedDataset, test: &AlignedDataset) -> Result<Cell> {
    let model = spec.fit(train, validation)?;
    let predictions = test.samples.iter().map(|s| model.predict(s)).collect::<Result<Vec<_>>>()?;
    Cell::new(test.samples.iter().map(|s| s.h).collect(), predictions, test.targets())
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, |v| v.to_string())
}

impl BacktestReport {
    pub fn model_index(&self, name: &str) -> Option<usize> {
        self.models.iter().position(|m| m == name)
    }

    /// The cell of `model` at plan position `t`, if it was fitted.
    pub fn cell(&self, model: &str, t: usize) -> Option<&Cell> {
        self.cells.get(self.model_index(model)?)?.get(t)?.as_ref().ok()
    }

    /// Per-interval RMSE of `model`, `None` where missing.
    pub fn rmse_series(&self, model: &str) -> Vec<Option<f64>> {
        (0..self.intervals.len()).map(|t| self.cell(model, t).map(|c| c.rmse)).collect()
    }

    /// RMSE over all test samples of `model` pooled together; `None` if any cell is missing.
    pub fn pooled_rmse(&self, model: &str) -> Option<f64> {
        let m = self.model_index(model)?;
        let mut sse = 0.0;
        let mut n = 0usize;
        for c in &self.cells[m] {
            let c = c.as_ref().ok()?;
            sse += c.errors.iter().map(|e| e * e).sum::<f64>();
            n += c.errors.len();
        }
        (n > 0).then(|| (sse / n as f64).sqrt())
    }

    /// `model,interval,rmse,mae,ks_d,ks_p,stars` with empty fields for missing values.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("model,interval,rmse,mae,ks_d,ks_p,stars\n");
        for (m, name) in self.models.iter().enumerate() {
            for (t, idx) in self.intervals.iter().enumerate() {
                let cell = self.cells[m][t].as_ref().ok();
                let cmp = self.comparisons[m][t];
                let _ = writeln!(
                    out,
                    "{name},{idx},{},{},{},{},{}",
                    fmt_opt(cell.map(|c| c.rmse)),
                    fmt_opt(cell.map(|c| c.mae)),
                    fmt_opt(cmp.map(|c| c.ks.d)),
                    fmt_opt(cmp.map(|c| c.ks.p)),
                    cmp.map_or("", |c| c.stars),
                );
            }
        }
        out
    }

    /// Aligned RMSE and MAE tables, one row per model and one column per
    /// interval, with significance stars against the reference model.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        for (title, pick) in [("RMSE", (|c: &Cell| c.rmse) as fn(&Cell) -> f64), ("MAE", |c: &Cell| c.mae)] {
            let mut rows: Vec<Vec<String>> = Vec::new();
            let mut header = vec![title.to_string()];
            header.extend(self.intervals.iter().map(|i| format!("int {i}")));
            header.push("mean".into());
            rows.push(header);
            for (m, name) in self.models.iter().enumerate() {
                let mut row = vec![if m == self.reference { format!("{name} (ref)") } else { name.clone() }];
                let mut present = Vec::new();
                for t in 0..self.intervals.len() {
                    row.push(match &self.cells[m][t] {
                        Ok(c) => {
                            present.push(pick(c));
                            let stars = self.comparisons[m][t].map_or("", |c| c.stars);
                            format!("{:.4e}{stars}", pick(c))
                        }
                        Err(_) => MISSING.into(),
                    });
                }
                row.push(if present.is_empty() {
                    MISSING.into()
                } else {
                    format!("{:.4e}", present.iter().sum::<f64>() / present.len() as f64)
                });
                rows.push(row);
            }
            let widths: Vec<usize> =
                (0..rows[0].len()).map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0)).collect();
            for r in &rows {
                let line: Vec<String> = r
                    .iter()
                    .zip(&widths)
                    .enumerate()
                    .map(|(c, (s, &w))| if c == 0 { format!("{s:<w$}") } else { format!("{s:>w$}") })
                    .collect();
                let _ = writeln!(out, "{}", line.join("  ").trim_end());
            }
            out.push('\n');
        }
        out.push_str("* p < 0.05, ** p < 0.01 (two-sample KS on absolute errors vs the reference model)\n");
        out
    }

    /// Writes `errors_<model>_<interval>.csv` (`h,prediction,actual,error`) for every fitted cell.
    pub fn write_errors(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        for (m, name) in self.models.iter().enumerate() {
            for (t, idx) in self.intervals.iter().enumerate() {
                let Ok(c) = &self.cells[m][t] else { continue };
                let mut s = String::from("h,prediction,actual,error\n");
                for i in 0..c.h.len() {
                    let _ = writeln!(s, "{},{},{},{}", c.h[i], c.predictions[i], c.actual[i], c.errors[i]);
                }
                fs::write(dir.join(format!("errors_{name}_{idx}.csv")), s)?;
            }
        }
        Ok(())
    }
}

/// Reads the `error` column (or the only column) of an error CSV.
pub fn read_errors_csv(text: &str) -> Result<Vec<f64>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let Some((_, header)) = lines.next() else { return Ok(Vec::new()) };
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let (col, mut out) = match cols.iter().position(|c| *c == "error") {
        Some(c) => (c, Vec::new()),
        None if cols.len() == 1 => {
            // headerless single column
            let v = cols[0].parse::<f64>().map_err(|e| Error::Parse { line: 1, msg: e.to_string() })?;
            (0, vec![v])
        }
        None => return Err(Error::Parse { line: 1, msg: "no `error` column".into() }),
    };
    for (i, line) in lines {
        let field = line.split(',').nth(col).ok_or_else(|| Error::Parse { line: i + 1, msg: "missing field".into() })?;
        out.push(field.trim().parse().map_err(|e: std::num::ParseFloatError| Error::Parse { line: i + 1, msg: e.to_string() })?);
    }
    Ok(out)
}
