//! Fitting a [`MixtureModel`] by alternating block gradient descent.
//!
//! Each round first updates the gate (`theta`, then `a`, then `b`) with the
//! component models frozen, then the components (`phi`, `u`, `v` and the
//! log-variance parameters) with the gate frozen. Every parameter group enters
//! exactly one per-sample quantity linearly once the other groups are fixed:
//!
//! | group | quantity | design row |
//! |-------|----------|------------|
//! | `theta` | `s0` | history |
//! | `a` | `s1` | `X b` |
//! | `b` | `s1` | `X^T a` |
//! | `phi` | `mu_0` | history |
//! | `u` | `mu_1` | `X v` |
//! | `v` | `mu_1` | `X^T u` |
//! | variances | `ln sigma^2` | input (plus 1 for the bias) |
//!
//! so the bilinear pairs split into two convex sub-problems and a group step
//! costs one pass over a precomputed design matrix.
//!
//! Each step moves along the exact gradient scaled by the group's curvature
//! (per-sample Fisher weights on the design rows plus the L2 term), which
//! makes the step size independent of the scale of the volatility series.
//! Steps use backtracking: a candidate that raises the objective is retried
//! at half the step size, at most 30 times, and an accepted step lets the next
//! one start from twice its size, up to `learning_rate`. The objective is
//! therefore non-increasing along the whole run.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{ridge_least_squares, SpdFactor};
use crate::mixture::{
    sample_log_lik, Component, Dims, MixtureKind, MixtureModel, Terms, VarianceMode, VarianceSpec,
};
use crate::volatility::{dot, AlignedDataset};

const MAX_HALVINGS: usize = 30;
const STEP_GROWTH: f64 = 2.0;
const INIT_RANGE: f64 = 0.01;
const INIT_AR_RIDGE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Largest step along the scaled gradient; 1 is the full curvature step.
    pub learning_rate: f64,
    pub max_rounds: usize,
    /// Gradient steps per parameter group in each round.
    pub steps_per_block: usize,
    /// Stop once a round changes the objective by less than this fraction.
    pub tol_rel_loss: f64,
    pub lambda: f64,
    pub alpha: f64,
    pub delta: f64,
    pub seed: u64,
    /// Run a finite-difference gradient check on the fitted model.
    pub grad_check: bool,
    pub variance_mode: VarianceMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1.0,
            max_rounds: 200,
            steps_per_block: 25,
            tol_rel_loss: 1e-6,
            lambda: 1e-3,
            alpha: 1.0,
            delta: 0.0,
            seed: 0,
            grad_check: false,
            variance_mode: VarianceMode::Constant,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be > 0".into()));
        }
        if self.max_rounds == 0 {
            return Err(Error::Config("max_rounds must be >= 1".into()));
        }
        if !(self.tol_rel_loss > 0.0) {
            return Err(Error::Config("tol_rel_loss must be > 0".into()));
        }
        if self.lambda < 0.0 || self.alpha < 0.0 {
            return Err(Error::Config("lambda and alpha must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Objective at initialization followed by its value after every block.
    pub loss_trace: Vec<f64>,
    pub rounds_used: usize,
    pub final_loss: f64,
    pub grad_check_max_rel_err: Option<f64>,
    pub converged: bool,
    /// A full round made no progress: every step was rejected after all halvings.
    pub stalled: bool,
}

/// A block of parameters updated together.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamGroup {
    Theta,
    A,
    B,
    Phi,
    U,
    V,
    HistoryVariance,
    OrderBookVariance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Quantity {
    S0,
    S1,
    Mu0,
    Mu1,
    Ls0,
    Ls1,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 8] = [
        ParamGroup::Phi,
        ParamGroup::U,
        ParamGroup::V,
        ParamGroup::Theta,
        ParamGroup::A,
        ParamGroup::B,
        ParamGroup::HistoryVariance,
        ParamGroup::OrderBookVariance,
    ];
    pub const GATE: [ParamGroup; 3] = [ParamGroup::Theta, ParamGroup::A, ParamGroup::B];
    pub const COMPONENTS: [ParamGroup; 5] = [
        ParamGroup::Phi,
        ParamGroup::U,
        ParamGroup::V,
        ParamGroup::HistoryVariance,
        ParamGroup::OrderBookVariance,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ParamGroup::Theta => "theta",
            ParamGroup::A => "a",
            ParamGroup::B => "b",
            ParamGroup::Phi => "phi",
            ParamGroup::U => "u",
            ParamGroup::V => "v",
            ParamGroup::HistoryVariance => "history_variance",
            ParamGroup::OrderBookVariance => "orderbook_variance",
        }
    }

    fn quantity(self) -> Quantity {
        match self {
            ParamGroup::Theta => Quantity::S0,
            ParamGroup::A | ParamGroup::B => Quantity::S1,
            ParamGroup::Phi => Quantity::Mu0,
            ParamGroup::U | ParamGroup::V => Quantity::Mu1,
            ParamGroup::HistoryVariance => Quantity::Ls0,
            ParamGroup::OrderBookVariance => Quantity::Ls1,
        }
    }

    fn index(self) -> usize {
        ParamGroup::ALL.iter().position(|g| *g == self).unwrap()
    }

    pub fn get(self, m: &MixtureModel) -> Vec<f64> {
        match self {
            ParamGroup::Theta => m.gate.theta.clone(),
            ParamGroup::A => m.gate.a.clone(),
            ParamGroup::B => m.gate.b.clone(),
            ParamGroup::Phi => m.history.phi.clone(),
            ParamGroup::U => m.orderbook.u.clone(),
            ParamGroup::V => m.orderbook.v.clone(),
            ParamGroup::HistoryVariance => m.history.variance.params(),
            ParamGroup::OrderBookVariance => m.orderbook.variance.params(),
        }
    }

    pub fn set(self, m: &mut MixtureModel, p: &[f64]) {
        match self {
            ParamGroup::Theta => m.gate.theta = p.to_vec(),
            ParamGroup::A => m.gate.a = p.to_vec(),
            ParamGroup::B => m.gate.b = p.to_vec(),
            ParamGroup::Phi => m.history.phi = p.to_vec(),
            ParamGroup::U => m.orderbook.u = p.to_vec(),
            ParamGroup::V => m.orderbook.v = p.to_vec(),
            ParamGroup::HistoryVariance => {
                m.history.variance = VarianceSpec::from_params(m.history.variance.mode(), p)
                    .expect("variance parameter count is preserved")
            }
            ParamGroup::OrderBookVariance => {
                m.orderbook.variance = VarianceSpec::from_params(m.orderbook.variance.mode(), p)
                    .expect("variance parameter count is preserved")
            }
        }
    }

    /// Which coordinates carry the L2 penalty. Variance offsets do not.
    fn penalty_mask(self, len: usize) -> Vec<bool> {
        match self {
            ParamGroup::HistoryVariance | ParamGroup::OrderBookVariance => {
                let mut mask = vec![true; len];
                mask[len - 1] = false;
                mask
            }
            _ => vec![true; len],
        }
    }
}

/// Dataset flattened into contiguous arrays.
struct Batch {
    len: usize,
    l_v: usize,
    rows: usize,
    cols: usize,
    hist: Vec<f64>,
    x: Vec<f64>,
    y: Vec<f64>,
}

impl Batch {
    fn new(data: &AlignedDataset, dims: Dims) -> Result<Self> {
        if data.history_len != dims.history
            || data.book_window != dims.book_window
            || data.n_features != dims.features
        {
            return Err(Error::dim(format!(
                "dataset dims (l_v={}, l_b={}, n={}) do not match model dims {dims:?}",
                data.history_len, data.book_window, data.n_features
            )));
        }
        let mut hist = Vec::with_capacity(data.len() * dims.history);
        let mut x = Vec::with_capacity(data.len() * dims.features * dims.book_window);
        for s in &data.samples {
            if s.history.len() != dims.history
                || s.features.rows() != dims.features
                || s.features.cols() != dims.book_window
            {
                return Err(Error::dim(format!("sample h={} has inconsistent shape", s.h)));
            }
            hist.extend_from_slice(&s.history);
            x.extend_from_slice(s.features.as_slice());
        }
        Ok(Batch {
            len: data.len(),
            l_v: dims.history,
            rows: dims.features,
            cols: dims.book_window,
            hist,
            x,
            y: data.targets(),
        })
    }

    fn hist(&self, h: usize) -> &[f64] {
        &self.hist[h * self.l_v..(h + 1) * self.l_v]
    }

    fn x(&self, h: usize) -> &[f64] {
        let w = self.rows * self.cols;
        &self.x[h * w..(h + 1) * w]
    }

    fn x_mul(&self, h: usize, v: &[f64], out: &mut [f64]) {
        let x = self.x(h);
        for (i, o) in out.iter_mut().enumerate() {
            *o = dot(&x[i * self.cols..(i + 1) * self.cols], v);
        }
    }

    fn x_tr_mul(&self, h: usize, u: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        let x = self.x(h);
        for (i, &ui) in u.iter().enumerate() {
            for (o, &xv) in out.iter_mut().zip(&x[i * self.cols..(i + 1) * self.cols]) {
                *o += ui * xv;
            }
        }
    }
}

/// Row-major `len x dim` design matrix of one group.
struct Design {
    dim: usize,
    data: Vec<f64>,
}

impl Design {
    fn row(&self, h: usize) -> &[f64] {
        &self.data[h * self.dim..(h + 1) * self.dim]
    }

    fn apply(&self, p: &[f64]) -> Vec<f64> {
        self.data.chunks_exact(self.dim).map(|r| dot(r, p)).collect()
    }
}

fn design(group: ParamGroup, m: &MixtureModel, b: &Batch) -> Design {
    let projected = |dim: usize, f: &dyn Fn(usize, &mut [f64])| {
        let mut data = vec![0.0; b.len * dim];
        for (h, row) in data.chunks_exact_mut(dim).enumerate() {
            f(h, row);
        }
        Design { dim, data }
    };
    match group {
        ParamGroup::Theta | ParamGroup::Phi => Design { dim: b.l_v, data: b.hist.clone() },
        ParamGroup::A => projected(b.rows, &|h, out| b.x_mul(h, &m.gate.b, out)),
        ParamGroup::B => projected(b.cols, &|h, out| b.x_tr_mul(h, &m.gate.a, out)),
        ParamGroup::U => projected(b.rows, &|h, out| b.x_mul(h, &m.orderbook.v, out)),
        ParamGroup::V => projected(b.cols, &|h, out| b.x_tr_mul(h, &m.orderbook.u, out)),
        ParamGroup::HistoryVariance => variance_design(b.len, &m.history.variance, |h| b.hist(h)),
        ParamGroup::OrderBookVariance => variance_design(b.len, &m.orderbook.variance, |h| b.x(h)),
    }
}

fn variance_design<'a>(len: usize, spec: &VarianceSpec, input: impl Fn(usize) -> &'a [f64]) -> Design {
    match spec {
        VarianceSpec::Constant { .. } => Design { dim: 1, data: vec![1.0; len] },
        VarianceSpec::Linear { weights, .. } => {
            let dim = weights.len() + 1;
            let mut data = Vec::with_capacity(len * dim);
            for h in 0..len {
                data.extend_from_slice(input(h));
                data.push(1.0);
            }
            Design { dim, data }
        }
    }
}

struct Quantities {
    s0: Vec<f64>,
    s1: Vec<f64>,
    mu0: Vec<f64>,
    mu1: Vec<f64>,
    ls0: Vec<f64>,
    ls1: Vec<f64>,
}

impl Quantities {
    fn compute(m: &MixtureModel, b: &Batch) -> Self {
        let eval = |g: ParamGroup| design(g, m, b).apply(&g.get(m));
        Quantities {
            s0: eval(ParamGroup::Theta),
            s1: eval(ParamGroup::A),
            mu0: eval(ParamGroup::Phi),
            mu1: eval(ParamGroup::U),
            ls0: eval(ParamGroup::HistoryVariance),
            ls1: eval(ParamGroup::OrderBookVariance),
        }
    }

    fn terms(&self, h: usize) -> Terms {
        Terms {
            s0: self.s0[h],
            s1: self.s1[h],
            mu0: self.mu0[h],
            mu1: self.mu1[h],
            ls0: self.ls0[h],
            ls1: self.ls1[h],
        }
    }

    fn slot(&mut self, q: Quantity) -> &mut Vec<f64> {
        match q {
            Quantity::S0 => &mut self.s0,
            Quantity::S1 => &mut self.s1,
            Quantity::Mu0 => &mut self.mu0,
            Quantity::Mu1 => &mut self.mu1,
            Quantity::Ls0 => &mut self.ls0,
            Quantity::Ls1 => &mut self.ls1,
        }
    }
}

fn with_quantity(mut t: Terms, q: Quantity, value: f64) -> Terms {
    match q {
        Quantity::S0 => t.s0 = value,
        Quantity::S1 => t.s1 = value,
        Quantity::Mu0 => t.mu0 = value,
        Quantity::Mu1 => t.mu1 = value,
        Quantity::Ls0 => t.ls0 = value,
        Quantity::Ls1 => t.ls1 = value,
    }
    t
}

#[derive(Debug, Clone, Copy)]
struct Penalty {
    lambda: f64,
    alpha: f64,
    delta: f64,
}

impl Penalty {
    fn of(cfg: &TrainConfig) -> Self {
        Penalty { lambda: cfg.lambda, alpha: cfg.alpha, delta: cfg.delta }
    }
}

fn data_loss(m: &MixtureModel, b: &Batch, q: &Quantities, pen: Penalty) -> Result<f64> {
    let mut total = 0.0;
    for h in 0..b.len {
        total += m.sample_loss(&q.terms(h), b.y[h], pen.alpha, pen.delta)?;
    }
    Ok(total)
}

fn objective(m: &MixtureModel, b: &Batch, q: &Quantities, pen: Penalty) -> Result<f64> {
    Ok(data_loss(m, b, q, pen)? + pen.lambda * m.l2_norm_sq())
}

/// Derivative of the per-sample data loss (negative log-likelihood plus
/// hinge) with respect to one quantity, for every sample, together with a
/// nonnegative curvature estimate (the Fisher information of the quantity).
fn quantity_derivs(
    m: &MixtureModel,
    b: &Batch,
    q: &Quantities,
    which: Quantity,
    pen: Penalty,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let hinge_active = m.kind == MixtureKind::Gaussian && pen.alpha != 0.0;
    let mut grad = Vec::with_capacity(b.len);
    let mut curv = Vec::with_capacity(b.len);
    for h in 0..b.len {
        let t = q.terms(h);
        let (_, g) = sample_log_lik(m.kind, m.gate_pin, &t, b.y[h])?;
        // subgradient 0 exactly at the kink
        let hinge = |mu: f64| if hinge_active && pen.delta - mu > 0.0 { -pen.alpha } else { 0.0 };
        let resp1 = 1.0 - g.resp0;
        let (d, c) = match which {
            Quantity::S0 => (-g.d_score, g.gate * (1.0 - g.gate)),
            Quantity::S1 => (g.d_score, g.gate * (1.0 - g.gate)),
            Quantity::Mu0 => (-g.d_mu0 + hinge(t.mu0), g.resp0 * (-t.ls0).exp()),
            Quantity::Mu1 => (-g.d_mu1 + hinge(t.mu1), resp1 * (-t.ls1).exp()),
            Quantity::Ls0 => (-g.d_ls0, 0.5 * g.resp0),
            Quantity::Ls1 => (-g.d_ls1, 0.5 * resp1),
        };
        grad.push(d);
        curv.push(c);
    }
    Ok((grad, curv))
}

fn quantity_grad(m: &MixtureModel, b: &Batch, q: &Quantities, which: Quantity, pen: Penalty) -> Result<Vec<f64>> {
    Ok(quantity_derivs(m, b, q, which, pen)?.0)
}

fn group_gradient(group: ParamGroup, m: &MixtureModel, b: &Batch, q: &Quantities, pen: Penalty) -> Result<Vec<f64>> {
    let d = design(group, m, b);
    let dq = quantity_grad(m, b, q, group.quantity(), pen)?;
    let p = group.get(m);
    let mask = group.penalty_mask(p.len());
    Ok(accumulate(&d, &dq, &p, &mask, pen.lambda))
}

fn accumulate(d: &Design, dq: &[f64], p: &[f64], mask: &[bool], lambda: f64) -> Vec<f64> {
    let mut grad: Vec<f64> = p
        .iter()
        .zip(mask)
        .map(|(x, &pen)| if pen { 2.0 * lambda * x } else { 0.0 })
        .collect();
    for (h, &w) in dq.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        for (g, &z) in grad.iter_mut().zip(d.row(h)) {
            *g += w * z;
        }
    }
    grad
}

/// Gradient of the objective with respect to the gate parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct GateGradient {
    pub theta: Vec<f64>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

/// Gradient of the objective with respect to the component parameters.
/// Variance gradients follow [`VarianceSpec::params`] layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentGradient {
    pub phi: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub history_variance: Vec<f64>,
    pub orderbook_variance: Vec<f64>,
}

/// `dO/dtheta`, `dO/da`, `dO/db`. The hinge term does not involve the gate.
pub fn grad_gate(m: &MixtureModel, data: &AlignedDataset, lambda: f64) -> Result<GateGradient> {
    let b = Batch::new(data, m.dims)?;
    let q = Quantities::compute(m, &b);
    let pen = Penalty { lambda, alpha: 0.0, delta: 0.0 };
    Ok(GateGradient {
        theta: group_gradient(ParamGroup::Theta, m, &b, &q, pen)?,
        a: group_gradient(ParamGroup::A, m, &b, &q, pen)?,
        b: group_gradient(ParamGroup::B, m, &b, &q, pen)?,
    })
}

pub fn grad_components(
    m: &MixtureModel,
    data: &AlignedDataset,
    lambda: f64,
    alpha: f64,
    delta: f64,
) -> Result<ComponentGradient> {
    let b = Batch::new(data, m.dims)?;
    let q = Quantities::compute(m, &b);
    let pen = Penalty { lambda, alpha, delta };
    Ok(ComponentGradient {
        phi: group_gradient(ParamGroup::Phi, m, &b, &q, pen)?,
        u: group_gradient(ParamGroup::U, m, &b, &q, pen)?,
        v: group_gradient(ParamGroup::V, m, &b, &q, pen)?,
        history_variance: group_gradient(ParamGroup::HistoryVariance, m, &b, &q, pen)?,
        orderbook_variance: group_gradient(ParamGroup::OrderBookVariance, m, &b, &q, pen)?,
    })
}

/// Analytic gradient of one group, as used by the optimizer.
pub fn group_grad(m: &MixtureModel, data: &AlignedDataset, cfg: &TrainConfig, group: ParamGroup) -> Result<Vec<f64>> {
    let b = Batch::new(data, m.dims)?;
    let q = Quantities::compute(m, &b);
    group_gradient(group, m, &b, &q, Penalty::of(cfg))
}

/// Outcome of [`finite_difference_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct FdCheck {
    pub max_rel_err: f64,
    /// Parameter with the largest error, as `group[index]`.
    pub worst: String,
    pub checked: usize,
    /// Coordinates skipped because a perturbation could cross a hinge kink.
    pub skipped: usize,
}

/// Compares analytic gradients against central differences
/// `(O(x + eps) - O(x - eps)) / 2 eps` over every parameter in `groups`.
///
/// The relative error of a coordinate is
/// `|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)`. Mean parameters
/// whose perturbation could move some component mean across the hinge kink
/// (within `eps * |design| + 1e-6` of `delta`) are skipped.
pub fn finite_difference_check_groups(
    m: &MixtureModel,
    data: &AlignedDataset,
    cfg: &TrainConfig,
    eps: f64,
    groups: &[ParamGroup],
) -> Result<FdCheck> {
    if !(eps > 0.0) {
        return Err(Error::Config("finite-difference step must be > 0".into()));
    }
    let b = Batch::new(data, m.dims)?;
    let pen = Penalty::of(cfg);
    let q = Quantities::compute(m, &b);
    let hinge_active = m.kind == MixtureKind::Gaussian && pen.alpha != 0.0;
    let eval = |model: &MixtureModel| objective(model, &b, &Quantities::compute(model, &b), pen);

    let mut out = FdCheck { max_rel_err: 0.0, worst: String::new(), checked: 0, skipped: 0 };
    for &group in groups {
        let analytic = group_gradient(group, m, &b, &q, pen)?;
        let base = group.get(m);
        let kink_means = match group.quantity() {
            Quantity::Mu0 if hinge_active => Some(&q.mu0),
            Quantity::Mu1 if hinge_active => Some(&q.mu1),
            _ => None,
        };
        let d = kink_means.map(|_| design(group, m, &b));
        for j in 0..base.len() {
            if let (Some(mu), Some(d)) = (kink_means, &d) {
                let near_kink = (0..b.len)
                    .any(|h| (mu[h] - pen.delta).abs() <= eps * d.row(h)[j].abs() + 1e-6);
                if near_kink {
                    out.skipped += 1;
                    continue;
                }
            }
            let mut model = m.clone();
            let mut p = base.clone();
            p[j] = base[j] + eps;
            group.set(&mut model, &p);
            let plus = eval(&model)?;
            p[j] = base[j] - eps;
            group.set(&mut model, &p);
            let minus = eval(&model)?;
            let numeric = (plus - minus) / (2.0 * eps);
            let err = (analytic[j] - numeric).abs() / analytic[j].abs().max(numeric.abs()).max(1e-8);
            out.checked += 1;
            if err > out.max_rel_err || out.worst.is_empty() {
                out.max_rel_err = out.max_rel_err.max(err);
                if err >= out.max_rel_err {
                    out.worst = format!("{}[{j}]", group.name());
                }
            }
        }
    }
    Ok(out)
}

/// [`finite_difference_check_groups`] over every parameter of the model.
pub fn finite_difference_check(m: &MixtureModel, data: &AlignedDataset, cfg: &TrainConfig, eps: f64) -> Result<FdCheck> {
    finite_difference_check_groups(m, data, cfg, eps, &ParamGroup::ALL)
}

/// Initial parameters.
///
/// `phi` is the ridge-stabilized least-squares AR fit of the targets (of
/// `ln v` for the log-normal kind) on the history, falling back to
/// `(1, 0, ..., 0)` if that system is singular. The remaining mean and gate
/// coefficients are uniform in `[-0.01, 0.01]` from a generator seeded by
/// `seed`. Log-variances start at the log of the target variance.
pub fn init_params(
    kind: MixtureKind,
    dims: Dims,
    mode: VarianceMode,
    seed: u64,
    data: &AlignedDataset,
) -> Result<MixtureModel> {
    if data.is_empty() {
        return Err(Error::InsufficientData("cannot initialize on an empty dataset".into()));
    }
    let b = Batch::new(data, dims)?;
    let y: Vec<f64> = match kind {
        MixtureKind::Gaussian => b.y.clone(),
        MixtureKind::Lognormal => b
            .y
            .iter()
            .map(|&v| {
                if v > 0.0 {
                    Ok(v.ln())
                } else {
                    Err(Error::Domain(format!("log-normal model needs positive targets, got {v}")))
                }
            })
            .collect::<Result<_>>()?,
    };

    let mut m = MixtureModel::zeros(kind, dims, mode);
    // ridge relative to the mean diagonal of the normal matrix, so the
    // stabilization does not depend on the volatility scale
    let ridge = INIT_AR_RIDGE * b.hist.iter().map(|x| x * x).sum::<f64>() / dims.history as f64;
    let rows = (0..b.len).map(|h| (b.hist(h), y[h]));
    m.history.phi = match ridge_least_squares(rows, &vec![true; dims.history], ridge) {
        Ok(phi) if phi.iter().all(|x| x.is_finite()) => phi,
        _ => {
            let mut phi = vec![0.0; dims.history];
            phi[0] = 1.0;
            phi
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |len: usize| -> Vec<f64> {
        (0..len).map(|_| rng.random_range(-INIT_RANGE..=INIT_RANGE)).collect()
    };
    m.orderbook.u = draw(dims.features);
    m.orderbook.v = draw(dims.book_window);
    m.gate.theta = draw(dims.history);
    m.gate.a = draw(dims.features);
    m.gate.b = draw(dims.book_window);

    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / y.len() as f64;
    let log_var = if var > 0.0 && var.is_finite() { var.ln() } else { (1e-12f64).ln() };
    m.history.variance = VarianceSpec::flat(mode, dims.history, log_var);
    m.orderbook.variance = VarianceSpec::flat(mode, dims.features * dims.book_window, log_var);
    Ok(m)
}

/// Fits a model of the given kind from the default initialization.
pub fn fit(kind: MixtureKind, data: &AlignedDataset, cfg: &TrainConfig) -> Result<(MixtureModel, TrainReport)> {
    cfg.validate()?;
    let m = init_params(kind, Dims::of(data), cfg.variance_mode, cfg.seed, data)?;
    fit_from(m, data, cfg)
}

/// Continues fitting from an existing model.
pub fn fit_from(mut m: MixtureModel, data: &AlignedDataset, cfg: &TrainConfig) -> Result<(MixtureModel, TrainReport)> {
    cfg.validate()?;
    m.validate()?;
    let (gate_groups, component_groups): (&[ParamGroup], &[ParamGroup]) = match m.gate_pin {
        None => (&ParamGroup::GATE, &ParamGroup::COMPONENTS),
        Some(Component::History) => (&[], &[ParamGroup::Phi, ParamGroup::HistoryVariance]),
        Some(Component::OrderBook) => {
            (&[], &[ParamGroup::U, ParamGroup::V, ParamGroup::OrderBookVariance])
        }
    };
    let report = optimize(&mut m, data, cfg, gate_groups, component_groups)?;
    Ok((m, report))
}

/// Fits a single component with the gate pinned to it. The other component's
/// mean and the gate coefficients are zero.
pub fn fit_single_component(
    kind: MixtureKind,
    data: &AlignedDataset,
    cfg: &TrainConfig,
    keep: Component,
) -> Result<(MixtureModel, TrainReport)> {
    cfg.validate()?;
    let mut m = init_params(kind, Dims::of(data), cfg.variance_mode, cfg.seed, data)?;
    for g in ParamGroup::GATE {
        let zero = vec![0.0; g.get(&m).len()];
        g.set(&mut m, &zero);
    }
    let drop: &[ParamGroup] = match keep {
        Component::History => &[ParamGroup::U, ParamGroup::V],
        Component::OrderBook => &[ParamGroup::Phi],
    };
    for &g in drop {
        let zero = vec![0.0; g.get(&m).len()];
        g.set(&mut m, &zero);
    }
    m.gate_pin = Some(keep);
    fit_from(m, data, cfg)
}

fn optimize(
    m: &mut MixtureModel,
    data: &AlignedDataset,
    cfg: &TrainConfig,
    gate_groups: &[ParamGroup],
    component_groups: &[ParamGroup],
) -> Result<TrainReport> {
    if data.is_empty() {
        return Err(Error::InsufficientData("cannot fit on an empty dataset".into()));
    }
    let b = Batch::new(data, m.dims)?;
    let pen = Penalty::of(cfg);
    let mut q = Quantities::compute(m, &b);
    let mut loss = objective(m, &b, &q, pen)?;
    if !loss.is_finite() {
        return Err(Error::Initialization(format!("objective is {loss} at the initial parameters")));
    }
    let mut steps = [cfg.learning_rate; ParamGroup::ALL.len()];
    let mut report = TrainReport {
        loss_trace: vec![loss],
        rounds_used: 0,
        final_loss: loss,
        grad_check_max_rel_err: None,
        converged: false,
        stalled: false,
    };

    for round in 1..=cfg.max_rounds {
        let start = loss;
        let mut progressed = false;
        for block in [gate_groups, component_groups] {
            if block.is_empty() {
                continue;
            }
            for &group in block {
                let step = &mut steps[group.index()];
                progressed |= descend_group(m, &b, &mut q, &mut loss, group, step, cfg, pen)?;
            }
            report.loss_trace.push(loss);
        }
        report.rounds_used = round;
        if !progressed {
            report.stalled = true;
            break;
        }
        if (start - loss).abs() <= cfg.tol_rel_loss * start.abs().max(f64::MIN_POSITIVE) {
            report.converged = true;
            break;
        }
    }
    report.final_loss = loss;
    if cfg.grad_check {
        report.grad_check_max_rel_err = Some(finite_difference_check(m, data, cfg, 1e-5)?.max_rel_err);
    }
    Ok(report)
}

/// Largest group solved with a full preconditioning matrix; bigger groups
/// use its diagonal.
const DENSE_PRECONDITIONER_MAX_DIM: usize = 64;

/// `sum_h c_h D_h D_h^T + 2 lambda` on penalized coordinates, with a small
/// relative floor on the curvatures so the matrix stays positive definite.
enum Preconditioner {
    Dense(SpdFactor),
    Diagonal(Vec<f64>),
}

impl Preconditioner {
    fn build(d: &Design, curv: &[f64], mask: &[bool], lambda: f64) -> Self {
        let dim = d.dim;
        let c_max = curv.iter().cloned().fold(0.0, f64::max);
        let floor = 1e-4 * c_max + f64::MIN_POSITIVE;
        let weight = |c: f64| c.max(0.0) + floor;
        let dense = dim <= DENSE_PRECONDITIONER_MAX_DIM;
        let mut p = vec![0.0; if dense { dim * dim } else { dim }];
        for (h, &c) in curv.iter().enumerate() {
            let w = weight(c);
            let row = d.row(h);
            if dense {
                for i in 0..dim {
                    let wi = w * row[i];
                    if wi == 0.0 {
                        continue;
                    }
                    for j in i..dim {
                        p[i * dim + j] += wi * row[j];
                    }
                }
            } else {
                for (pj, &x) in p.iter_mut().zip(row) {
                    *pj += w * x * x;
                }
            }
        }
        let trace: f64 = (0..dim).map(|i| if dense { p[i * dim + i] } else { p[i] }).sum();
        let jitter = 1e-10 * trace / dim as f64 + f64::MIN_POSITIVE;
        for i in 0..dim {
            let add = jitter + if mask[i] { 2.0 * lambda } else { 0.0 };
            if dense {
                p[i * dim + i] += add;
                for j in 0..i {
                    p[i * dim + j] = p[j * dim + i];
                }
            } else {
                p[i] += add;
            }
        }
        if dense {
            if let Ok(f) = SpdFactor::new(&p, dim) {
                return Preconditioner::Dense(f);
            }
            return Preconditioner::Diagonal((0..dim).map(|i| p[i * dim + i]).collect());
        }
        Preconditioner::Diagonal(p)
    }

    fn apply(&self, grad: &[f64]) -> Vec<f64> {
        match self {
            Preconditioner::Dense(f) => f.solve(grad),
            Preconditioner::Diagonal(diag) => grad.iter().zip(diag).map(|(g, p)| g / p).collect(),
        }
    }
}

/// Up to `steps_per_block` backtracking steps on one group. Returns whether
/// any step was accepted.
///
/// The step direction is the exact gradient scaled by a curvature matrix
/// built at the start of the sub-block; a candidate is accepted only when the
/// objective does not increase.
#[allow(clippy::too_many_arguments)]
fn descend_group(
    m: &mut MixtureModel,
    b: &Batch,
    q: &mut Quantities,
    loss: &mut f64,
    group: ParamGroup,
    step: &mut f64,
    cfg: &TrainConfig,
    pen: Penalty,
) -> Result<bool> {
    let d = design(group, m, b);
    let which = group.quantity();
    let mut p = group.get(m);
    let mask = group.penalty_mask(p.len());
    let masked_sq = |p: &[f64]| -> f64 {
        p.iter().zip(&mask).filter(|(_, &pen)| pen).map(|(x, _)| x * x).sum()
    };
    let l2_rest = m.l2_norm_sq() - masked_sq(&p);
    let (_, curv) = quantity_derivs(m, b, q, which, pen)?;
    let precond = Preconditioner::build(&d, &curv, &mask, pen.lambda);
    let negligible = 1e-2 * cfg.tol_rel_loss;
    let mut accepted_any = false;

    for _ in 0..cfg.steps_per_block {
        let dq = quantity_grad(m, b, q, which, pen)?;
        let grad = accumulate(&d, &dq, &p, &mask, pen.lambda);
        if grad.iter().all(|g| *g == 0.0) {
            break;
        }
        let dir = precond.apply(&grad);
        let mut eta = *step;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let cand: Vec<f64> = p.iter().zip(&dir).map(|(x, g)| x - eta * g).collect();
            let values = d.apply(&cand);
            let mut total = pen.lambda * (l2_rest + masked_sq(&cand));
            for (h, &value) in values.iter().enumerate() {
                let t = with_quantity(q.terms(h), which, value);
                total += m.sample_loss(&t, b.y[h], pen.alpha, pen.delta)?;
            }
            if total.is_finite() && total <= *loss {
                accepted = Some((cand, values, total));
                break;
            }
            eta *= 0.5;
        }
        let Some((cand, values, total)) = accepted else {
            *step = (*step * 0.5).max(f64::MIN_POSITIVE);
            break;
        };
        let gain = *loss - total;
        p = cand;
        group.set(m, &p);
        *q.slot(which) = values;
        *loss = total;
        *step = (eta * STEP_GROWTH).min(cfg.learning_rate);
        accepted_any = true;
        if gain <= negligible * loss.abs() {
            break;
        }
    }
    Ok(accepted_any)
}
