//! Synthetic minutely prices and order books with a planted two-regime
//! volatility process.
//!
//! Each hour `k` carries a latent regime `z_k` from a two-state Markov chain.
//! In regime 0 the hour's volatility follows an AR recursion on earlier
//! realized volatilities; in regime 1 it is `ob_gain` times the order-book
//! imbalance averaged over the hour before last. The imbalance is a smooth
//! minutely signal in `(0.1, 0.9)` that splits the resting volume between the
//! two sides of the book. The order book also announces the regime of hour
//! `k` during hour `k - 2` through a wider spread, which is what lets a gate
//! observing the feature window tell the regimes apart ahead of time.
//!
//! With the defaults the order-book regime is the calmer one: its volatility
//! averages `ob_gain / 2 = 1e-3` against a regime-0 level of `2e-3`.
//!
//! Timestamps are minute indices: prices at `0..=60 * hours`, one snapshot
//! per minute at `1..=60 * hours`. Volatility bucket `k` covers the returns
//! ending at minutes `60k + 1 ..= 60(k + 1)`.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::orderbook::{extract_features, format_snapshot, FeatureVector, Order, OrderBookSnapshot};
use crate::volatility::{
    align_dataset, volatility_from_prices, write_prices_csv, AlignedDataset, DatasetSpec, PriceSeries,
};

const MINUTES: usize = 60;
const INITIAL_PRICE: f64 = 250.0;
const BASE_SPREAD: f64 = 0.05;
const TICK: f64 = 0.01;
const TOTAL_VOLUME: f64 = 50.0;

/// Switches the regime chain to new self-transition probabilities from
/// `at_hour` onwards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeShift {
    pub at_hour: usize,
    /// Probability of staying in regime 0 after the shift.
    pub stay0: f64,
    /// Probability of staying in regime 1 after the shift.
    pub stay1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub hours: usize,
    pub seed: u64,
    /// Self-transition probability of both regimes.
    pub regime_persistence: f64,
    /// Regime-0 coefficients on the realized volatilities of hours `k-2, k-3, ...`.
    pub ar_coefficients: Vec<f64>,
    /// Regime-1 volatility per unit of imbalance.
    pub ob_gain: f64,
    /// Standard deviation of the additive noise on each hour's volatility.
    pub noise_scale: f64,
    /// Minimum number of price levels per side (depth varies in `[L, 2L)`).
    pub book_levels: usize,
    /// Long-run mean of the regime-0 volatility.
    pub base_level: f64,
    /// Relative spread widening that announces regime 1.
    pub regime_spread: f64,
    pub regime_shift: Option<RegimeShift>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            hours: 2000,
            seed: 0,
            regime_persistence: 0.95,
            ar_coefficients: vec![0.9],
            ob_gain: 2e-3,
            noise_scale: 1e-4,
            book_levels: 10,
            base_level: 2e-3,
            regime_spread: 1.0,
            regime_shift: None,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        if self.hours < 3 {
            return Err(Error::Config("synthetic data needs at least 3 hours".into()));
        }
        if !prob(self.regime_persistence) {
            return Err(Error::Config("regime_persistence must lie in [0, 1]".into()));
        }
        if let Some(s) = self.regime_shift {
            if !prob(s.stay0) || !prob(s.stay1) {
                return Err(Error::Config("regime shift probabilities must lie in [0, 1]".into()));
            }
        }
        if self.ar_coefficients.iter().map(|a| a.abs()).sum::<f64>() >= 1.0 {
            return Err(Error::Config("regime-0 AR coefficients must have absolute sum < 1".into()));
        }
        if !(self.noise_scale > 0.0) || !(self.base_level > 0.0) || self.ob_gain < 0.0 {
            return Err(Error::Config("noise_scale and base_level must be > 0, ob_gain >= 0".into()));
        }
        if self.book_levels < 5 {
            return Err(Error::Config("book_levels must be >= 5".into()));
        }
        if self.regime_spread < 0.0 {
            return Err(Error::Config("regime_spread must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub prices: PriceSeries,
    pub snapshots: Vec<OrderBookSnapshot>,
    /// Regime of each hour.
    pub regime_labels: Vec<u8>,
    /// Planted volatility of each hour.
    pub targets: Vec<f64>,
    /// Planted imbalance of each snapshot.
    pub imbalance: Vec<f64>,
}

impl SynthOutput {
    pub fn features(&self) -> Vec<FeatureVector> {
        self.snapshots.iter().map(extract_features).collect()
    }

    /// Realized volatility plus aligned samples, standardized on all of them.
    pub fn dataset(&self, spec: &DatasetSpec) -> Result<AlignedDataset> {
        let v = volatility_from_prices(&self.prices, MINUTES)?;
        align_dataset(&v, &self.features(), spec, None)
    }

    /// Writes `prices.csv`, `snapshots.txt` and `labels.csv` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("prices.csv"), write_prices_csv(&self.prices))?;
        let mut snaps = String::new();
        for s in &self.snapshots {
            snaps.push_str(&format_snapshot(s));
            snaps.push('\n');
        }
        fs::write(dir.join("snapshots.txt"), snaps)?;
        fs::write(dir.join("labels.csv"), write_labels_csv(&self.regime_labels))?;
        Ok(())
    }
}

pub fn write_labels_csv(labels: &[u8]) -> String {
    let mut out = String::from("h,z\n");
    for (h, z) in labels.iter().enumerate() {
        out.push_str(&format!("{h},{z}\n"));
    }
    out
}

pub fn read_labels_csv(text: &str) -> Result<Vec<u8>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == "h,z" => {}
        _ => return Err(Error::Parse { line: 1, msg: "expected header h,z".into() }),
    }
    let mut labels = Vec::new();
    for (i, line) in lines.filter(|(_, l)| !l.trim().is_empty()) {
        let err = || Error::Parse { line: i + 1, msg: format!("malformed label row {line:?}") };
        let (h, z) = line.split_once(',').ok_or_else(err)?;
        let h: usize = h.trim().parse().map_err(|_| err())?;
        let z: u8 = z.trim().parse().ok().filter(|z| *z <= 1).ok_or_else(err)?;
        if h != labels.len() {
            return Err(Error::Parse { line: i + 1, msg: format!("expected h = {}, got {h}", labels.len()) });
        }
        labels.push(z);
    }
    Ok(labels)
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn regimes(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<u8> {
    let mut z = vec![0u8; cfg.hours];
    for k in 1..cfg.hours {
        let (stay0, stay1) = match cfg.regime_shift {
            Some(s) if k >= s.at_hour => (s.stay0, s.stay1),
            _ => (cfg.regime_persistence, cfg.regime_persistence),
        };
        let stay = if z[k - 1] == 0 { stay0 } else { stay1 };
        let u: f64 = rng.random();
        z[k] = if u < stay { z[k - 1] } else { 1 - z[k - 1] };
    }
    z
}

/// Deterministic given `cfg.seed`.
pub fn generate(cfg: &SynthConfig) -> Result<SynthOutput> {
    cfg.validate()?;
    if cfg.hours < 100 {
        log::warn!("synthetic runs below 100 hours give very few samples ({})", cfg.hours);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let labels = regimes(cfg, &mut rng);
    let n_min = cfg.hours * MINUTES;

    // imbalance of the snapshot at minute t is imbalance[t - 1]
    let rho = (-1.0 / MINUTES as f64).exp();
    let innovation = (1.0 - rho * rho).sqrt();
    let mut x = normal(&mut rng);
    let imbalance: Vec<f64> = (0..n_min)
        .map(|_| {
            x = rho * x + innovation * normal(&mut rng);
            0.5 + 0.4 * x.tanh()
        })
        .collect();
    let hour_mean_imbalance = |k: usize| {
        imbalance[k * MINUTES..(k + 1) * MINUTES].iter().sum::<f64>() / MINUTES as f64
    };

    let ar_sum: f64 = cfg.ar_coefficients.iter().sum();
    let mut targets = Vec::with_capacity(cfg.hours);
    let mut realized: Vec<f64> = Vec::with_capacity(cfg.hours);
    let mut prices = Vec::with_capacity(n_min + 1);
    prices.push(INITIAL_PRICE);
    for k in 0..cfg.hours {
        let mean = if labels[k] == 1 && k >= 2 {
            cfg.ob_gain * hour_mean_imbalance(k - 2)
        } else {
            let lagged: f64 = cfg
                .ar_coefficients
                .iter()
                .enumerate()
                .map(|(j, a)| a * realized.get((k as isize - 2 - j as isize) as usize).copied().unwrap_or(cfg.base_level))
                .sum();
            (1.0 - ar_sum) * cfg.base_level + lagged
        };
        let sigma = (mean + cfg.noise_scale * normal(&mut rng)).max(0.05 * cfg.base_level);
        targets.push(sigma);
        let mut hour = Vec::with_capacity(MINUTES);
        for _ in 0..MINUTES {
            let r = sigma * normal(&mut rng);
            hour.push(r);
            let last = *prices.last().unwrap();
            prices.push(last * (1.0 + r));
        }
        let m = hour.iter().sum::<f64>() / MINUTES as f64;
        realized.push((hour.iter().map(|r| (r - m).powi(2)).sum::<f64>() / MINUTES as f64).sqrt());
    }

    let widening = if cfg.ob_gain == 0.0 { 0.0 } else { cfg.regime_spread };
    let mut snapshots = Vec::with_capacity(n_min);
    for t in 1..=n_min {
        let announced = labels.get((t - 1) / MINUTES + 2).copied().unwrap_or(0);
        let spread = (BASE_SPREAD * (1.0 + widening * announced as f64) * rng.random_range(0.9..1.1)).max(TICK);
        let q = TOTAL_VOLUME * rng.random_range(0.95..1.05);
        let imb = imbalance[t - 1];
        let mid = prices[t];
        let bids = ladder(&mut rng, mid - spread / 2.0, -1.0, q * (1.0 + imb) / 2.0, cfg.book_levels);
        let asks = ladder(&mut rng, mid + spread / 2.0, 1.0, q * (1.0 - imb) / 2.0, cfg.book_levels);
        snapshots.push(OrderBookSnapshot::new(t as i64, bids, asks)?);
    }

    let timestamps = (0..=n_min as i64).collect();
    Ok(SynthOutput {
        prices: PriceSeries::new(timestamps, prices)?,
        snapshots,
        regime_labels: labels,
        targets,
        imbalance,
    })
}

/// Levels stepping away from `best` by one to three ticks, holding `volume` in total.
fn ladder(rng: &mut ChaCha8Rng, best: f64, direction: f64, volume: f64, levels: usize) -> Vec<Order> {
    let depth = rng.random_range(levels..2 * levels);
    let weights: Vec<f64> = (0..depth).map(|_| rng.random_range(0.5..1.5)).collect();
    let total: f64 = weights.iter().sum();
    let mut price = best;
    weights
        .iter()
        .enumerate()
        .map(|(i, w)| {
            if i > 0 {
                price += direction * TICK * rng.random_range(1..=3) as f64;
            }
            Order::new(price, volume * w / total)
        })
        .collect()
}

/// Regime of each sample's target hour, `labels[h + D]`.
pub fn label_alignment(labels: &[u8], data: &AlignedDataset) -> Result<Vec<u8>> {
    data.samples
        .iter()
        .map(|s| {
            labels.get(s.h + data.horizon).copied().ok_or_else(|| {
                Error::Alignment(format!(
                    "sample h={} needs label {} but only {} labels exist",
                    s.h,
                    s.h + data.horizon,
                    labels.len()
                ))
            })
        })
        .collect()
}
