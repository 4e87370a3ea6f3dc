//! The two-component temporal mixture.
//!
//! Component 0 explains `v` from its own history with an autoregressive mean
//! `mu_0 = phi . history`; component 1 explains it from the standardized
//! order-book window with a bilinear mean `mu_1 = u^T X v`. The gate
//!
//! ```text
//! g = exp(s0) / (exp(s0) + exp(s1)),  s0 = theta . history,  s1 = a^T X b
//! ```
//!
//! is the probability of component 0. It is evaluated as the logistic
//! function of `s0 - s1`, which never overflows.
//!
//! For the Gaussian kind each component is `N(v | mu_k, sigma_k^2)`. For the
//! log-normal kind `ln v` is normal with the same parameterization, so the
//! component mean of `v` is `exp(mu_k + sigma_k^2 / 2)`. Variances are always
//! carried as `ln sigma^2`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volatility::{dot, AlignedDataset, FeatureMatrix, Sample};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Smallest gate value. Keeps `g` strictly inside (0, 1) while `g + (1 - g)`
/// still sums to exactly one.
pub const GATE_FLOOR: f64 = f64::EPSILON / 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MixtureKind {
    Gaussian,
    Lognormal,
}

impl MixtureKind {
    /// Short label used in reports (`TM-G`, `TM-LOG`).
    pub fn label(self) -> &'static str {
        match self {
            MixtureKind::Gaussian => "TM-G",
            MixtureKind::Lognormal => "TM-LOG",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    History,
    OrderBook,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarianceMode {
    #[default]
    Constant,
    Linear,
}

/// How a component's variance is produced. `Linear` regresses `ln sigma^2`
/// on the component's flattened input.
#[derive(Debug, Clone, PartialEq)]
pub enum VarianceSpec {
    Constant { log_sigma2: f64 },
    Linear { weights: Vec<f64>, bias: f64 },
}

impl VarianceSpec {
    pub fn mode(&self) -> VarianceMode {
        match self {
            VarianceSpec::Constant { .. } => VarianceMode::Constant,
            VarianceSpec::Linear { .. } => VarianceMode::Linear,
        }
    }

    /// A spec of the given mode whose variance is `exp(log_sigma2)` everywhere.
    pub fn flat(mode: VarianceMode, input_len: usize, log_sigma2: f64) -> Self {
        match mode {
            VarianceMode::Constant => VarianceSpec::Constant { log_sigma2 },
            VarianceMode::Linear => {
                VarianceSpec::Linear { weights: vec![0.0; input_len], bias: log_sigma2 }
            }
        }
    }

    pub fn log_variance(&self, input: &[f64]) -> Result<f64> {
        match self {
            VarianceSpec::Constant { log_sigma2 } => Ok(*log_sigma2),
            VarianceSpec::Linear { weights, bias } => {
                if weights.len() != input.len() {
                    return Err(Error::dim(format!(
                        "variance weights have length {} but input has {}",
                        weights.len(),
                        input.len()
                    )));
                }
                Ok(dot(weights, input) + bias)
            }
        }
    }

    /// Flat parameter list: `[log_sigma2]` or `weights ++ [bias]`.
    pub fn params(&self) -> Vec<f64> {
        match self {
            VarianceSpec::Constant { log_sigma2 } => vec![*log_sigma2],
            VarianceSpec::Linear { weights, bias } => {
                let mut p = weights.clone();
                p.push(*bias);
                p
            }
        }
    }

    pub fn from_params(mode: VarianceMode, params: &[f64]) -> Result<Self> {
        match (mode, params) {
            (VarianceMode::Constant, [c]) => Ok(VarianceSpec::Constant { log_sigma2: *c }),
            (VarianceMode::Linear, [weights @ .., bias]) => {
                Ok(VarianceSpec::Linear { weights: weights.to_vec(), bias: *bias })
            }
            _ => Err(Error::dim(format!(
                "{} parameters do not describe a {mode:?} variance",
                params.len()
            ))),
        }
    }

    fn l2(&self) -> f64 {
        match self {
            VarianceSpec::Constant { .. } => 0.0,
            VarianceSpec::Linear { weights, .. } => sq_norm(weights),
        }
    }
}

/// `exp` of the component's log-variance, floored at the smallest normal `f64`.
pub fn component_variance(spec: &VarianceSpec, input: &[f64]) -> Result<f64> {
    Ok(spec.log_variance(input)?.exp().max(f64::MIN_POSITIVE))
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistoryComponent {
    pub phi: Vec<f64>,
    pub variance: VarianceSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderBookComponent {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub variance: VarianceSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GateParams {
    pub theta: Vec<f64>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    #[serde(rename = "l_v")]
    pub history: usize,
    #[serde(rename = "l_b")]
    pub book_window: usize,
    #[serde(rename = "n")]
    pub features: usize,
}

impl Dims {
    pub fn of(data: &AlignedDataset) -> Self {
        Dims { history: data.history_len, book_window: data.book_window, features: data.n_features }
    }

    fn check_inputs(&self, history: &[f64], x: &FeatureMatrix) -> Result<()> {
        if history.len() != self.history {
            return Err(Error::dim(format!(
                "history has length {} but the model expects {}",
                history.len(),
                self.history
            )));
        }
        if x.rows() != self.features || x.cols() != self.book_window {
            return Err(Error::dim(format!(
                "feature window is {}x{} but the model expects {}x{}",
                x.rows(),
                x.cols(),
                self.features,
                self.book_window
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureModel {
    pub kind: MixtureKind,
    pub dims: Dims,
    pub history: HistoryComponent,
    pub orderbook: OrderBookComponent,
    pub gate: GateParams,
    /// When set, the gate is fixed to select this component with probability one.
    pub gate_pin: Option<Component>,
}

/// Per-sample scalar quantities every density, loss and gradient is built from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Terms {
    pub s0: f64,
    pub s1: f64,
    pub mu0: f64,
    pub mu1: f64,
    pub ls0: f64,
    pub ls1: f64,
}

/// Derivatives of one sample's log-likelihood with respect to its [`Terms`].
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub(crate) struct TermGrad {
    /// With respect to the score difference `s0 - s1`.
    pub d_score: f64,
    pub d_mu0: f64,
    pub d_mu1: f64,
    pub d_ls0: f64,
    pub d_ls1: f64,
    /// Posterior probability of the history component.
    pub resp0: f64,
    /// Gate weight `g` of the history component.
    pub gate: f64,
}

impl MixtureModel {
    /// A model with every parameter zero and unit variances.
    pub fn zeros(kind: MixtureKind, dims: Dims, mode: VarianceMode) -> Self {
        MixtureModel {
            kind,
            dims,
            history: HistoryComponent {
                phi: vec![0.0; dims.history],
                variance: VarianceSpec::flat(mode, dims.history, 0.0),
            },
            orderbook: OrderBookComponent {
                u: vec![0.0; dims.features],
                v: vec![0.0; dims.book_window],
                variance: VarianceSpec::flat(mode, dims.features * dims.book_window, 0.0),
            },
            gate: GateParams {
                theta: vec![0.0; dims.history],
                a: vec![0.0; dims.features],
                b: vec![0.0; dims.book_window],
            },
            gate_pin: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dims;
        let checks = [
            ("phi", self.history.phi.len(), d.history),
            ("u", self.orderbook.u.len(), d.features),
            ("v", self.orderbook.v.len(), d.book_window),
            ("theta", self.gate.theta.len(), d.history),
            ("a", self.gate.a.len(), d.features),
            ("b", self.gate.b.len(), d.book_window),
        ];
        for (name, got, want) in checks {
            if got != want {
                return Err(Error::dim(format!("{name} has length {got}, expected {want}")));
            }
        }
        if let VarianceSpec::Linear { weights, .. } = &self.history.variance {
            if weights.len() != d.history {
                return Err(Error::dim("history variance weights do not match l_v"));
            }
        }
        if let VarianceSpec::Linear { weights, .. } = &self.orderbook.variance {
            if weights.len() != d.features * d.book_window {
                return Err(Error::dim("order-book variance weights do not match n * l_b"));
            }
        }
        Ok(())
    }

    /// `||Theta||^2`: every mean and gate coefficient plus linear variance
    /// weights. Constant log-variances and variance biases are not penalized.
    pub fn l2_norm_sq(&self) -> f64 {
        sq_norm(&self.history.phi)
            + sq_norm(&self.orderbook.u)
            + sq_norm(&self.orderbook.v)
            + sq_norm(&self.gate.theta)
            + sq_norm(&self.gate.a)
            + sq_norm(&self.gate.b)
            + self.history.variance.l2()
            + self.orderbook.variance.l2()
    }

    pub(crate) fn terms(&self, history: &[f64], x: &FeatureMatrix) -> Result<Terms> {
        self.dims.check_inputs(history, x)?;
        Ok(Terms {
            s0: dot(&self.gate.theta, history),
            s1: dot(&self.gate.a, &x.mul_vec(&self.gate.b)),
            mu0: dot(&self.history.phi, history),
            mu1: dot(&self.orderbook.u, &x.mul_vec(&self.orderbook.v)),
            ls0: self.history.variance.log_variance(history)?,
            ls1: self.orderbook.variance.log_variance(x.as_slice())?,
        })
    }

    /// Gate probability of component 0 and its complement.
    pub fn gate_value(&self, history: &[f64], x: &FeatureMatrix) -> Result<(f64, f64)> {
        self.dims.check_inputs(history, x)?;
        Ok(match self.gate_pin {
            Some(Component::History) => (1.0, 0.0),
            Some(Component::OrderBook) => (0.0, 1.0),
            None => gate_from_scores(dot(&self.gate.theta, history), dot(&self.gate.a, &x.mul_vec(&self.gate.b))),
        })
    }

    pub fn predict(&self, history: &[f64], x: &FeatureMatrix) -> Result<f64> {
        let t = self.terms(history, x)?;
        let (g, gc) = self.gate_value(history, x)?;
        Ok(match self.kind {
            MixtureKind::Gaussian => g * t.mu0 + gc * t.mu1,
            MixtureKind::Lognormal => {
                g * (t.mu0 + 0.5 * t.ls0.exp()).exp() + gc * (t.mu1 + 0.5 * t.ls1.exp()).exp()
            }
        })
    }

    pub fn predict_sample(&self, s: &Sample) -> Result<f64> {
        self.predict(&s.history, &s.features)
    }

    pub fn log_density(&self, s: &Sample) -> Result<f64> {
        let t = self.terms(&s.history, &s.features)?;
        Ok(sample_log_lik(self.kind, self.gate_pin, &t, s.target)?.0)
    }

    /// Per-sample loss contribution excluding the L2 term.
    pub(crate) fn sample_loss(&self, t: &Terms, target: f64, alpha: f64, delta: f64) -> Result<f64> {
        let (ll, _) = sample_log_lik(self.kind, self.gate_pin, t, target)?;
        Ok(-ll + self.hinge(t, alpha, delta))
    }

    fn hinge(&self, t: &Terms, alpha: f64, delta: f64) -> f64 {
        match self.kind {
            MixtureKind::Gaussian if alpha != 0.0 => {
                alpha * ((delta - t.mu0).max(0.0) + (delta - t.mu1).max(0.0))
            }
            _ => 0.0,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelFile::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str::<ModelFile>(text)?.try_into()
    }
}

fn sq_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Stable logistic pair `(g, 1 - g)` for the score difference `s0 - s1`.
///
/// The smaller of the two is computed directly and floored at
/// [`GATE_FLOOR`]; the larger is one minus it, so the pair sums to exactly 1.
pub fn gate_from_scores(s0: f64, s1: f64) -> (f64, f64) {
    let d = s0 - s1;
    let e = (-d.abs()).exp();
    let small = (e / (1.0 + e)).max(GATE_FLOOR);
    let large = 1.0 - small;
    if d >= 0.0 { (large, small) } else { (small, large) }
}

/// Log-likelihood of one sample and its derivatives with respect to the terms.
pub(crate) fn sample_log_lik(
    kind: MixtureKind,
    pin: Option<Component>,
    t: &Terms,
    target: f64,
) -> Result<(f64, TermGrad)> {
    let (y, jacobian) = match kind {
        MixtureKind::Gaussian => (target, 0.0),
        MixtureKind::Lognormal => {
            if !(target > 0.0) {
                return Err(Error::Domain(format!(
                    "log-normal density needs a positive target, got {target}"
                )));
            }
            let ly = target.ln();
            (ly, ly)
        }
    };
    let r0sq = (y - t.mu0) * (y - t.mu0);
    let r1sq = (y - t.mu1) * (y - t.mu1);
    let inv0 = (-t.ls0).exp();
    let inv1 = (-t.ls1).exp();
    let l0 = -HALF_LN_2PI - 0.5 * t.ls0 - 0.5 * r0sq * inv0 - jacobian;
    let l1 = -HALF_LN_2PI - 0.5 * t.ls1 - 0.5 * r1sq * inv1 - jacobian;

    let (ll, resp0, d_score, gate) = match pin {
        Some(Component::History) => (l0, 1.0, 0.0, 1.0),
        Some(Component::OrderBook) => (l1, 0.0, 0.0, 0.0),
        None => {
            let d = t.s0 - t.s1;
            let log_g = -softplus(-d);
            let log_gc = -softplus(d);
            let a0 = log_g + l0;
            let a1 = log_gc + l1;
            let m = a0.max(a1);
            let ll = m + ((a0 - m).exp() + (a1 - m).exp()).ln();
            let resp0 = (a0 - ll).exp();
            let g = log_g.exp();
            (ll, resp0, resp0 - g, g)
        }
    };
    let resp1 = 1.0 - resp0;
    let grad = TermGrad {
        d_score,
        d_mu0: resp0 * (y - t.mu0) * inv0,
        d_mu1: resp1 * (y - t.mu1) * inv1,
        d_ls0: resp0 * (0.5 * r0sq * inv0 - 0.5),
        d_ls1: resp1 * (0.5 * r1sq * inv1 - 0.5),
        resp0,
        gate,
    };
    Ok((ll, grad))
}

/// `phi . history`.
pub fn ar_mean(c: &HistoryComponent, history: &[f64]) -> Result<f64> {
    if c.phi.len() != history.len() {
        return Err(Error::dim(format!(
            "phi has length {} but history has {}",
            c.phi.len(),
            history.len()
        )));
    }
    Ok(dot(&c.phi, history))
}

/// `u^T X v`.
pub fn bilinear_mean(c: &OrderBookComponent, x: &FeatureMatrix) -> Result<f64> {
    if c.u.len() != x.rows() || c.v.len() != x.cols() {
        return Err(Error::dim(format!(
            "u, v have lengths {}, {} but X is {}x{}",
            c.u.len(),
            c.v.len(),
            x.rows(),
            x.cols()
        )));
    }
    Ok(dot(&c.u, &x.mul_vec(&c.v)))
}

/// Probability of the history component.
pub fn gate(g: &GateParams, history: &[f64], x: &FeatureMatrix) -> Result<f64> {
    if g.theta.len() != history.len() || g.a.len() != x.rows() || g.b.len() != x.cols() {
        return Err(Error::dim("gate parameters do not match the inputs"));
    }
    Ok(gate_from_scores(dot(&g.theta, history), dot(&g.a, &x.mul_vec(&g.b))).0)
}

pub fn predict(m: &MixtureModel, history: &[f64], x: &FeatureMatrix) -> Result<f64> {
    m.predict(history, x)
}

pub fn log_density(m: &MixtureModel, sample: &Sample) -> Result<f64> {
    m.log_density(sample)
}

/// Training objective: negative log-likelihood plus `lambda ||Theta||^2`, plus
/// for the Gaussian kind the hinge penalty `alpha * sum max(0, delta - mu)`
/// on both component means.
pub fn loss(m: &MixtureModel, data: &AlignedDataset, lambda: f64, alpha: f64, delta: f64) -> Result<f64> {
    let mut total = 0.0;
    for s in &data.samples {
        let t = m.terms(&s.history, &s.features)?;
        total += m.sample_loss(&t, s.target, alpha, delta)?;
    }
    Ok(total + lambda * m.l2_norm_sq())
}

#[derive(Serialize, Deserialize)]
struct VarianceFile {
    mode: VarianceMode,
    params: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct VariancePair {
    history: VarianceFile,
    orderbook: VarianceFile,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    kind: MixtureKind,
    dims: Dims,
    phi: Vec<f64>,
    u: Vec<f64>,
    v: Vec<f64>,
    theta: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
    variance: VariancePair,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gate_pin: Option<Component>,
}

impl From<&MixtureModel> for ModelFile {
    fn from(m: &MixtureModel) -> Self {
        let var = |s: &VarianceSpec| VarianceFile { mode: s.mode(), params: s.params() };
        ModelFile {
            kind: m.kind,
            dims: m.dims,
            phi: m.history.phi.clone(),
            u: m.orderbook.u.clone(),
            v: m.orderbook.v.clone(),
            theta: m.gate.theta.clone(),
            a: m.gate.a.clone(),
            b: m.gate.b.clone(),
            variance: VariancePair {
                history: var(&m.history.variance),
                orderbook: var(&m.orderbook.variance),
            },
            gate_pin: m.gate_pin,
        }
    }
}

impl TryFrom<ModelFile> for MixtureModel {
    type Error = Error;

    fn try_from(f: ModelFile) -> Result<Self> {
        let m = MixtureModel {
            kind: f.kind,
            dims: f.dims,
            history: HistoryComponent {
                phi: f.phi,
                variance: VarianceSpec::from_params(f.variance.history.mode, &f.variance.history.params)?,
            },
            orderbook: OrderBookComponent {
                u: f.u,
                v: f.v,
                variance: VarianceSpec::from_params(
                    f.variance.orderbook.mode,
                    &f.variance.orderbook.params,
                )?,
            },
            gate: GateParams { theta: f.theta, a: f.a, b: f.b },
            gate_pin: f.gate_pin,
        };
        m.validate()?;
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn dims(l_v: usize, l_b: usize, n: usize) -> Dims {
        Dims { history: l_v, book_window: l_b, features: n }
    }

    fn sample(target: f64, history: Vec<f64>, x: FeatureMatrix) -> Sample {
        Sample { h: 0, target, history, raw: x.clone(), features: x }
    }

    #[test]
    fn ar_mean_examples() {
        let var = VarianceSpec::Constant { log_sigma2: 0.0 };
        let c = HistoryComponent { phi: vec![1.0, 0.0, 0.0], variance: var.clone() };
        assert_eq!(ar_mean(&c, &[7.0, 2.0, 3.0]).unwrap(), 7.0);
        let c = HistoryComponent { phi: vec![0.0; 3], variance: var.clone() };
        assert_eq!(ar_mean(&c, &[7.0, 2.0, 3.0]).unwrap(), 0.0);
        let c = HistoryComponent { phi: vec![0.5, 0.5], variance: var };
        assert_eq!(ar_mean(&c, &[2.0, 4.0]).unwrap(), 3.0);
        assert!(matches!(ar_mean(&c, &[1.0]), Err(Error::Dimension(_))));
    }

    #[test]
    fn bilinear_mean_examples() {
        let var = VarianceSpec::Constant { log_sigma2: 0.0 };
        let x = FeatureMatrix::new(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let c = OrderBookComponent { u: vec![0.0, 1.0], v: vec![0.0, 0.0, 1.0], variance: var.clone() };
        assert_eq!(bilinear_mean(&c, &x).unwrap(), 6.0);
        let c = OrderBookComponent { u: vec![0.0, 0.0], v: vec![3.0, 1.0, 2.0], variance: var.clone() };
        assert_eq!(bilinear_mean(&c, &x).unwrap(), 0.0);
        let x = FeatureMatrix::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let c = OrderBookComponent { u: vec![1.0, 1.0], v: vec![1.0, 1.0], variance: var };
        assert_eq!(bilinear_mean(&c, &x).unwrap(), 10.0);
        let bad = FeatureMatrix::zeros(3, 2);
        assert!(matches!(bilinear_mean(&c, &bad), Err(Error::Dimension(_))));
    }

    #[test]
    fn gate_examples() {
        let x = FeatureMatrix::new(1, 1, vec![2.0]).unwrap();
        let g = GateParams { theta: vec![0.0], a: vec![0.0], b: vec![5.0] };
        assert_eq!(gate(&g, &[1.0], &x).unwrap(), 0.5);
        let g = GateParams { theta: vec![0.0], a: vec![3.0], b: vec![0.0] };
        assert_eq!(gate(&g, &[1.0], &x).unwrap(), 0.5);

        let (hi, lo) = gate_from_scores(50.0, 0.0);
        assert!(hi < 1.0 && 1.0 - hi < 1e-15);
        assert_eq!(hi + lo, 1.0);

        let g = GateParams { theta: vec![3f64.ln()], a: vec![0.0], b: vec![0.0] };
        assert_relative_eq!(gate(&g, &[1.0], &x).unwrap(), 0.75, epsilon = 1e-15);
    }

    #[test]
    fn variance_examples() {
        assert_eq!(component_variance(&VarianceSpec::Constant { log_sigma2: 0.0 }, &[]).unwrap(), 1.0);
        let spec = VarianceSpec::Linear { weights: vec![0.0, 0.0], bias: 4f64.ln() };
        assert_relative_eq!(component_variance(&spec, &[3.0, -2.0]).unwrap(), 4.0, epsilon = 1e-14);
        let spec = VarianceSpec::Linear { weights: vec![-50.0], bias: 0.0 };
        assert!(component_variance(&spec, &[30.0]).unwrap() > 0.0);
        assert!(matches!(component_variance(&spec, &[1.0, 2.0]), Err(Error::Dimension(_))));
    }

    /// Model with `phi = (1)`, `u = v = (1)`, and gate scores set by `theta`.
    fn scalar_model(kind: MixtureKind, theta: f64) -> MixtureModel {
        let mut m = MixtureModel::zeros(kind, dims(1, 1, 1), VarianceMode::Constant);
        m.history.phi = vec![1.0];
        m.orderbook.u = vec![1.0];
        m.orderbook.v = vec![1.0];
        m.gate.theta = vec![theta];
        m
    }

    #[test]
    fn predict_examples() {
        // history 2 -> mu0 = 2, X = 4 -> mu1 = 4
        let x = FeatureMatrix::new(1, 1, vec![4.0]).unwrap();
        let m = scalar_model(MixtureKind::Gaussian, 25.0);
        assert!((m.predict(&[2.0], &x).unwrap() - 2.0).abs() < 1e-12);
        let m = scalar_model(MixtureKind::Gaussian, 0.0);
        assert_eq!(m.predict(&[2.0], &x).unwrap(), 3.0);

        let mut m = scalar_model(MixtureKind::Lognormal, 0.0);
        m.history.phi = vec![0.0];
        m.history.variance = VarianceSpec::Constant { log_sigma2: 2f64.ln() };
        m.gate_pin = Some(Component::History);
        assert_relative_eq!(m.predict(&[2.0], &x).unwrap(), std::f64::consts::E, epsilon = 1e-14);
    }

    #[test]
    fn log_density_examples() {
        let x = FeatureMatrix::new(1, 1, vec![4.0]).unwrap();
        let mut m = scalar_model(MixtureKind::Gaussian, 0.0);
        m.gate_pin = Some(Component::History);
        let lp = m.log_density(&sample(2.0, vec![2.0], x.clone())).unwrap();
        assert_relative_eq!(lp, -HALF_LN_2PI, epsilon = 1e-15);
        assert_relative_eq!(lp, -0.91894, epsilon = 1e-5);

        // identical components: g has no effect
        let mut m = scalar_model(MixtureKind::Gaussian, 0.0);
        m.orderbook.u = vec![0.5];
        let s = sample(1.3, vec![2.0], x.clone());
        let base = m.log_density(&s).unwrap();
        for theta in [-3.0, 0.7, 10.0] {
            m.gate.theta = vec![theta];
            assert_relative_eq!(m.log_density(&s).unwrap(), base, epsilon = 1e-14);
        }

        let mut m = scalar_model(MixtureKind::Lognormal, 0.0);
        m.history.phi = vec![0.0];
        m.gate_pin = Some(Component::History);
        let lp = m.log_density(&sample(1.0, vec![2.0], x.clone())).unwrap();
        assert_relative_eq!(lp, -HALF_LN_2PI, epsilon = 1e-15);
        assert!(matches!(m.log_density(&sample(0.0, vec![2.0], x)), Err(Error::Domain(_))));
    }

    #[test]
    fn log_density_matches_direct_evaluation() {
        let x = FeatureMatrix::new(1, 1, vec![1.5]).unwrap();
        for kind in [MixtureKind::Gaussian, MixtureKind::Lognormal] {
            let mut m = scalar_model(kind, 0.4);
            m.history.variance = VarianceSpec::Constant { log_sigma2: -0.3 };
            m.orderbook.variance = VarianceSpec::Constant { log_sigma2: 0.5 };
            let s = sample(1.2, vec![0.8], x.clone());
            let (g, gc) = m.gate_value(&s.history, &x).unwrap();
            let y = if kind == MixtureKind::Gaussian { 1.2f64 } else { 1.2f64.ln() };
            let jac = if kind == MixtureKind::Gaussian { 1.0 } else { 1.0 / 1.2 };
            let pdf = |mu: f64, var: f64| {
                (-(y - mu).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
            };
            let direct = (g * pdf(0.8, (-0.3f64).exp()) * jac + gc * pdf(1.5, 0.5f64.exp()) * jac).ln();
            assert_relative_eq!(m.log_density(&s).unwrap(), direct, max_relative = 1e-12);
        }
    }

    #[test]
    fn loss_examples() {
        let x = FeatureMatrix::new(1, 1, vec![2.0]).unwrap();
        let mut m = scalar_model(MixtureKind::Gaussian, 0.2);
        let s = sample(0.5, vec![-1.0], x);
        let data = AlignedDataset {
            history_len: 1,
            book_window: 1,
            horizon: 1,
            n_features: 1,
            scaler: crate::volatility::FeatureScaler::identity(1),
            samples: vec![s.clone()],
        };
        let nll = -m.log_density(&s).unwrap();
        assert_relative_eq!(loss(&m, &data, 0.0, 0.0, 0.0).unwrap(), nll, epsilon = 1e-14);
        // mu0 = -1, mu1 = 2: hinge adds alpha * 1
        assert_relative_eq!(loss(&m, &data, 0.0, 3.0, 0.0).unwrap(), nll + 3.0, epsilon = 1e-12);
        let l1 = loss(&m, &data, 0.5, 0.0, 0.0).unwrap();
        let l2 = loss(&m, &data, 1.0, 0.0, 0.0).unwrap();
        assert_relative_eq!(l2 - l1, 0.5 * m.l2_norm_sq(), epsilon = 1e-12);
        // hinge ignored for log-normal
        m.kind = MixtureKind::Lognormal;
        assert_eq!(loss(&m, &data, 0.0, 3.0, 0.0).unwrap(), loss(&m, &data, 0.0, 0.0, 0.0).unwrap());
    }

    #[test]
    fn l2_skips_constant_log_variance() {
        let mut m = scalar_model(MixtureKind::Gaussian, 2.0);
        m.history.variance = VarianceSpec::Constant { log_sigma2: 5.0 };
        assert_eq!(m.l2_norm_sq(), 1.0 + 1.0 + 1.0 + 4.0);
        m.history.variance = VarianceSpec::Linear { weights: vec![3.0], bias: 9.0 };
        assert_eq!(m.l2_norm_sq(), 1.0 + 1.0 + 1.0 + 4.0 + 9.0);
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let mut m = MixtureModel::zeros(MixtureKind::Lognormal, dims(2, 3, 2), VarianceMode::Linear);
        m.history.phi = vec![0.1 + 0.2, std::f64::consts::PI];
        m.gate.b = vec![1e-300, -2.5e17, 1.0 / 3.0];
        m.orderbook.variance = VarianceSpec::Linear { weights: vec![0.7; 6], bias: -1.0 / 7.0 };
        let back = MixtureModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
        for (x, y) in back.history.phi.iter().zip(&m.history.phi) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn checkpoint_rejects_inconsistent_dims() {
        let m = MixtureModel::zeros(MixtureKind::Gaussian, dims(2, 3, 2), VarianceMode::Constant);
        let text = m.to_json().unwrap().replace("\"l_v\": 2", "\"l_v\": 3");
        assert!(MixtureModel::from_json(&text).is_err());
    }
}
