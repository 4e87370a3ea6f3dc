//! Reference predictors: exponential smoothing of the volatility history,
//! least-squares autoregression, and autoregression with the flattened
//! order-book window as exogenous regressors.
//!
//! The forecast of every baseline is used unchanged at any horizon.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::NormalEquations;
use crate::volatility::{dot, AlignedDataset, Sample};

/// `{0.01, 0.1, 0.2, ..., 0.9}`.
pub const DEFAULT_ALPHA_GRID: [f64; 10] = [0.01, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

/// Default ridge used by [`ar_fit`] and [`arx_fit`] callers.
pub const DEFAULT_RIDGE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EwmaModel {
    pub alpha: f64,
}

impl EwmaModel {
    pub fn new(alpha: f64) -> Result<Self> {
        if alpha > 0.0 && alpha <= 1.0 {
            Ok(EwmaModel { alpha })
        } else {
            Err(Error::Config(format!("EWMA alpha must lie in (0, 1], got {alpha}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArModel {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArxModel {
    pub ar: Vec<f64>,
    pub intercept: f64,
    /// Weights over the row-major flattened `n x l_b` feature window.
    pub exogenous: Vec<f64>,
}

/// Baseline checkpoint, tagged by `kind` like the mixture checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BaselineCheckpoint {
    Ewma(EwmaModel),
    Ar(ArModel),
    Arx(ArxModel),
}

impl BaselineCheckpoint {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Smooths `history` (most recent first) from its oldest entry forward.
pub fn ewma_predict(m: &EwmaModel, history: &[f64]) -> Result<f64> {
    let (&oldest, rest) = history
        .split_last()
        .ok_or_else(|| Error::InsufficientData("EWMA needs a nonempty history".into()))?;
    let mut s = oldest;
    for &v in rest.iter().rev() {
        s = m.alpha * v + (1.0 - m.alpha) * s;
    }
    Ok(s)
}

/// Picks the grid value with the lowest RMSE on `validation`. Ties go to the
/// smaller alpha.
pub fn ewma_select_alpha(validation: &AlignedDataset, grid: &[f64]) -> Result<EwmaModel> {
    if grid.is_empty() {
        return Err(Error::Config("EWMA alpha grid is empty".into()));
    }
    if validation.is_empty() {
        return Err(Error::InsufficientData("no validation samples for EWMA selection".into()));
    }
    let mut sorted: Vec<f64> = grid.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut best: Option<(f64, EwmaModel)> = None;
    for alpha in sorted {
        let m = EwmaModel::new(alpha)?;
        let mut sse = 0.0;
        for s in &validation.samples {
            sse += (ewma_predict(&m, &s.history)? - s.target).powi(2);
        }
        if best.as_ref().is_none_or(|(b, _)| sse < *b) {
            best = Some((sse, m));
        }
    }
    Ok(best.unwrap().1)
}

/// `[1, v_{h-1}, ..., v_{h-l_v}]`, then the flattened feature window if requested.
fn regressors(s: &Sample, with_features: bool, buf: &mut Vec<f64>) {
    buf.clear();
    buf.push(1.0);
    buf.extend_from_slice(&s.history);
    if with_features {
        buf.extend_from_slice(s.features.as_slice());
    }
}

/// Normal equations of a linear baseline, shared by every ridge value of a grid.
struct LinearProblem {
    eq: NormalEquations,
    penalized: Vec<bool>,
    samples: usize,
}

impl LinearProblem {
    fn new(data: &AlignedDataset, with_features: bool) -> Result<Self> {
        let p = 1 + data.history_len + if with_features { data.n_features * data.book_window } else { 0 };
        if data.is_empty() {
            return Err(Error::InsufficientData("cannot fit a regression on zero samples".into()));
        }
        let mut z = Vec::with_capacity(p);
        let rows: Vec<(Vec<f64>, f64)> = data
            .samples
            .iter()
            .map(|s| {
                regressors(s, with_features, &mut z);
                (z.clone(), s.target)
            })
            .collect();
        let mut penalized = vec![true; p];
        penalized[0] = false;
        let eq = NormalEquations::new(p, rows.iter().map(|(z, y)| (z.as_slice(), *y)));
        Ok(LinearProblem { eq, penalized, samples: data.len() })
    }

    fn solve(&self, ridge: f64) -> Result<Vec<f64>> {
        if !(ridge >= 0.0) {
            return Err(Error::Config(format!("ridge must be >= 0, got {ridge}")));
        }
        let p = self.penalized.len();
        // ridge keeps an underdetermined system solvable; plain least squares does not
        if ridge == 0.0 && self.samples <= p {
            return Err(Error::InsufficientData(format!(
                "{} samples cannot determine {p} regression parameters without a ridge",
                self.samples
            )));
        }
        self.eq.solve(&self.penalized, ridge)
    }
}

fn ar_from(beta: Vec<f64>) -> ArModel {
    ArModel { intercept: beta[0], coefficients: beta[1..].to_vec() }
}

fn arx_from(beta: Vec<f64>, l_v: usize) -> ArxModel {
    ArxModel { intercept: beta[0], ar: beta[1..1 + l_v].to_vec(), exogenous: beta[1 + l_v..].to_vec() }
}

/// AR(`l_v`) with intercept. The ridge term skips the intercept.
pub fn ar_fit(data: &AlignedDataset, ridge: f64) -> Result<ArModel> {
    Ok(ar_from(LinearProblem::new(data, false)?.solve(ridge)?))
}

/// AR(`l_v`) plus the standardized feature window as extra regressors.
pub fn arx_fit(data: &AlignedDataset, ridge: f64) -> Result<ArxModel> {
    Ok(arx_from(LinearProblem::new(data, true)?.solve(ridge)?, data.history_len))
}

/// Fits an AR model for every ridge in `grid` from one pass over `data`.
/// Entries that fail to solve are returned as errors in place.
pub fn ar_fit_grid(data: &AlignedDataset, grid: &[f64]) -> Result<Vec<Result<ArModel>>> {
    let lp = LinearProblem::new(data, false)?;
    Ok(grid.iter().map(|&r| lp.solve(r).map(ar_from)).collect())
}

/// ARX counterpart of [`ar_fit_grid`].
pub fn arx_fit_grid(data: &AlignedDataset, grid: &[f64]) -> Result<Vec<Result<ArxModel>>> {
    let lp = LinearProblem::new(data, true)?;
    Ok(grid.iter().map(|&r| lp.solve(r).map(|b| arx_from(b, data.history_len))).collect())
}

pub fn ar_predict(m: &ArModel, s: &Sample) -> Result<f64> {
    if m.coefficients.len() != s.history.len() {
        return Err(Error::dim(format!(
            "AR model has {} lags but the sample history has {}",
            m.coefficients.len(),
            s.history.len()
        )));
    }
    Ok(m.intercept + dot(&m.coefficients, &s.history))
}

pub fn arx_predict(m: &ArxModel, s: &Sample) -> Result<f64> {
    let x = s.features.as_slice();
    if m.ar.len() != s.history.len() || m.exogenous.len() != x.len() {
        return Err(Error::dim(format!(
            "ARX model expects {} lags and {} exogenous inputs, sample has {} and {}",
            m.ar.len(),
            m.exogenous.len(),
            s.history.len(),
            x.len()
        )));
    }
    Ok(m.intercept + dot(&m.ar, &s.history) + dot(&m.exogenous, x))
}
