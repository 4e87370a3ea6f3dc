//! Realized volatility and dataset alignment.
//!
//! Time is measured in integer minutes. Prices are observed at minutes
//! `origin, origin + 1, ...`; return `r_t` is the relative change between
//! minute `t - 1` and minute `t`. Volatility observation `v_k` is the
//! population standard deviation of the `bucket_size` returns
//! `r_{origin + k*bucket + 1} ..= r_{origin + (k+1)*bucket}`, so `v_k` covers
//! the hour that *starts* at minute `origin + i(k)` with `i(k) = k * bucket`.
//!
//! A training sample indexed by `h` therefore sees only information available
//! at minute `i(h)`: the history `(v_{h-1}, ..., v_{h-l_v})` and the `l_b`
//! feature snapshots ending at `i(h)`. Its target is `v_{h+D}`.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::orderbook::{FeatureVector, N_FEATURES};

/// Default number of minutely returns per volatility observation.
pub const DEFAULT_BUCKET: usize = 60;
/// Default longest run of missing snapshots that is forward-filled.
pub const DEFAULT_MAX_GAP: i64 = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    timestamps: Vec<i64>,
    prices: Vec<f64>,
}

impl PriceSeries {
    pub fn new(timestamps: Vec<i64>, prices: Vec<f64>) -> Result<Self> {
        if timestamps.len() != prices.len() {
            return Err(Error::dim(format!(
                "{} timestamps but {} prices",
                timestamps.len(),
                prices.len()
            )));
        }
        if let Some(w) = timestamps.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::Config(format!(
                "timestamps must be strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
        if let Some(p) = prices.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
            return Err(Error::Domain(format!("price {p} is not positive")));
        }
        Ok(PriceSeries { timestamps, prices })
    }

    pub fn timestamps(&self) -> &[i64] {
        &self.timestamps
    }

    pub fn prices(&self) -> &[f64] {
        &self.prices
    }

    pub fn len(&self) -> usize {
        self.prices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prices.is_empty()
    }
}

/// Relative changes between consecutive prices.
pub fn returns(p: &PriceSeries) -> Result<Vec<f64>> {
    if p.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 prices for returns, got {}",
            p.len()
        )));
    }
    Ok(p.prices.windows(2).map(|w| (w[1] - w[0]) / w[0]).collect())
}

/// Hourly (or per-bucket) realized volatility.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolatilitySeries {
    pub values: Vec<f64>,
    pub bucket_size: usize,
    /// Minute of the first price the returns were computed from.
    pub origin: i64,
}

impl VolatilitySeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

fn population_std(xs: &[f64]) -> f64 {
    let m = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / m;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / m;
    var.sqrt()
}

/// Population standard deviation over consecutive buckets of `bucket_size`
/// returns. A trailing partial bucket is dropped.
pub fn realized_volatility(r: &[f64], bucket_size: usize) -> Result<VolatilitySeries> {
    if bucket_size < 2 {
        return Err(Error::Config(format!("bucket_size must be >= 2, got {bucket_size}")));
    }
    if r.len() < bucket_size {
        return Err(Error::InsufficientData(format!(
            "{} returns do not fill one bucket of {bucket_size}",
            r.len()
        )));
    }
    let values = r.chunks_exact(bucket_size).map(population_std).collect();
    Ok(VolatilitySeries { values, bucket_size, origin: 0 })
}

/// Realized volatility straight from prices, remembering the price origin.
pub fn volatility_from_prices(p: &PriceSeries, bucket_size: usize) -> Result<VolatilitySeries> {
    let mut v = realized_volatility(&returns(p)?, bucket_size)?;
    v.origin = p.timestamps[0];
    Ok(v)
}

/// Maps volatility index `h` to the last snapshot index at or before the
/// start of observation `h`.
pub fn index_map(h: usize, ratio: usize) -> usize {
    h * ratio
}

/// An `n x l_b` feature window stored row-major: row `i` is feature `i`,
/// column `j` is the snapshot `j` minutes before the window end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dim(format!(
                "{} values cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(FeatureMatrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        FeatureMatrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.cols + j] = value;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Row-major values.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// `X v`, length `rows`.
    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    /// `X^T u`, length `cols`.
    pub fn tr_mul_vec(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for (i, &ui) in u.iter().enumerate() {
            for (o, &x) in out.iter_mut().zip(self.row(i)) {
                *o += ui * x;
            }
        }
        out
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Per-feature affine standardization fitted on a training range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaler {
    pub mean: Vec<f64>,
    /// Standard deviation per row, or 1 for rows with zero variance.
    pub scale: Vec<f64>,
}

impl FeatureScaler {
    pub fn identity(rows: usize) -> Self {
        FeatureScaler { mean: vec![0.0; rows], scale: vec![1.0; rows] }
    }

    /// Fits mean and standard deviation per row, pooling every entry of every
    /// matrix.
    pub fn fit<'a>(rows: usize, matrices: impl Iterator<Item = &'a FeatureMatrix> + Clone) -> Self {
        let mut count = 0usize;
        let mut sum = vec![0.0; rows];
        for m in matrices.clone() {
            count += m.cols;
            for (i, s) in sum.iter_mut().enumerate() {
                *s += m.row(i).iter().sum::<f64>();
            }
        }
        if count == 0 {
            return Self::identity(rows);
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
        let mut sq = vec![0.0; rows];
        for m in matrices {
            for (i, s) in sq.iter_mut().enumerate() {
                *s += m.row(i).iter().map(|x| (x - mean[i]).powi(2)).sum::<f64>();
            }
        }
        let scale = sq
            .iter()
            .map(|s| {
                let sd = (s / count as f64).sqrt();
                // constant rows are only shifted
                if sd > 1e-12 * (1.0 + sd) && sd.is_finite() { sd } else { 1.0 }
            })
            .collect();
        FeatureScaler { mean, scale }
    }

    pub fn apply(&self, m: &FeatureMatrix) -> FeatureMatrix {
        let mut out = m.clone();
        for i in 0..m.rows {
            let (mu, sd) = (self.mean[i], self.scale[i]);
            for x in &mut out.data[i * m.cols..(i + 1) * m.cols] {
                *x = (*x - mu) / sd;
            }
        }
        out
    }
}

/// Window lengths and horizon for [`align_dataset`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSpec {
    /// Volatility history length `l_v`.
    pub history: usize,
    /// Order-book window length `l_b` in snapshots.
    pub book_window: usize,
    /// Forecast horizon `D`.
    pub horizon: usize,
    /// Longest run of missing minutes that is forward-filled.
    pub max_gap: i64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec { history: 16, book_window: 30, horizon: 1, max_gap: DEFAULT_MAX_GAP }
    }
}

/// One aligned training example.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub h: usize,
    /// `v_{h+D}`.
    pub target: f64,
    /// `(v_{h-1}, ..., v_{h-l_v})`, most recent first.
    pub history: Vec<f64>,
    /// Unscaled feature window.
    pub raw: FeatureMatrix,
    /// Standardized feature window.
    pub features: FeatureMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignedDataset {
    pub history_len: usize,
    pub book_window: usize,
    pub horizon: usize,
    pub n_features: usize,
    pub scaler: FeatureScaler,
    pub samples: Vec<Sample>,
}

/// Builds samples for every admissible `h`, sorted ascending.
///
/// `h` ranges over `[max(l_v, ceil(l_b / bucket)), H - D]` where `H` is the last
/// volatility index. Missing snapshots are forward-filled from the previous
/// snapshot when it is at most `spec.max_gap` minutes older; samples whose
/// window still has holes are dropped. The feature scaler is fitted on the
/// samples selected by `scaler_range` (indices into the emitted samples) or on
/// all of them when `None`.
pub fn align_dataset(
    v: &VolatilitySeries,
    features: &[FeatureVector],
    spec: &DatasetSpec,
    scaler_range: Option<Range<usize>>,
) -> Result<AlignedDataset> {
    let DatasetSpec { history: l_v, book_window: l_b, horizon: d, max_gap } = *spec;
    if l_v == 0 || l_b == 0 || d == 0 {
        return Err(Error::Config("l_v, l_b and D must all be >= 1".into()));
    }
    if v.is_empty() {
        return Err(Error::InsufficientData("empty volatility series".into()));
    }
    let bucket = v.bucket_size;
    let last = v.len() - 1;
    let h_min = l_v.max(l_b.div_ceil(bucket));
    if last < d || h_min > last - d {
        return Err(Error::InsufficientData(format!(
            "no admissible h: need l_v={l_v}, l_b={l_b}, D={d} but volatility has {} observations",
            v.len()
        )));
    }

    let lookup = MinuteLookup::new(features, max_gap);
    let mut samples = Vec::new();
    for h in h_min..=last - d {
        let end = v.origin + index_map(h, bucket) as i64;
        let Some(raw) = lookup.window(end, l_b) else { continue };
        let history = (1..=l_v).map(|j| v.values[h - j]).collect();
        samples.push(Sample {
            h,
            target: v.values[h + d],
            history,
            features: raw.clone(),
            raw,
        });
    }
    if samples.is_empty() {
        return Err(Error::InsufficientData(
            "every admissible sample falls in a feature gap".into(),
        ));
    }
    let mut ds = AlignedDataset {
        history_len: l_v,
        book_window: l_b,
        horizon: d,
        n_features: N_FEATURES,
        scaler: FeatureScaler::identity(N_FEATURES),
        samples,
    };
    let range = scaler_range.unwrap_or(0..ds.len());
    ds.standardize(range)?;
    Ok(ds)
}

struct MinuteLookup {
    first: i64,
    /// Index into `features` of the snapshot used for each minute, if any.
    slots: Vec<Option<usize>>,
    features: Vec<[f64; N_FEATURES]>,
}

impl MinuteLookup {
    fn new(features: &[FeatureVector], max_gap: i64) -> Self {
        let Some(first) = features.iter().map(|f| f.timestamp).min() else {
            return MinuteLookup { first: 0, slots: Vec::new(), features: Vec::new() };
        };
        let last = features.iter().map(|f| f.timestamp).max().unwrap_or(first);
        let mut exact: Vec<Option<usize>> = vec![None; (last - first + 1) as usize];
        for (i, f) in features.iter().enumerate() {
            exact[(f.timestamp - first) as usize] = Some(i);
        }
        let mut slots = vec![None; exact.len()];
        let mut latest: Option<(i64, usize)> = None;
        for (off, e) in exact.iter().enumerate() {
            let t = first + off as i64;
            if let Some(i) = e {
                latest = Some((t, *i));
            }
            slots[off] = latest.filter(|(lt, _)| t - lt <= max_gap).map(|(_, i)| i);
        }
        let features = features.iter().map(|f| f.to_array()).collect();
        MinuteLookup { first, slots, features }
    }

    fn at(&self, t: i64) -> Option<&[f64; N_FEATURES]> {
        let off = t - self.first;
        if off < 0 {
            return None;
        }
        self.slots.get(off as usize).copied().flatten().map(|i| &self.features[i])
    }

    /// Columns `x_end, x_{end-1}, ..., x_{end-l_b+1}`.
    fn window(&self, end: i64, l_b: usize) -> Option<FeatureMatrix> {
        let mut m = FeatureMatrix::zeros(N_FEATURES, l_b);
        for j in 0..l_b {
            let x = self.at(end - j as i64)?;
            for (i, &value) in x.iter().enumerate() {
                m.set(i, j, value);
            }
        }
        Some(m)
    }
}

impl AlignedDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Refits the scaler on `range` and re-standardizes every sample.
    pub fn standardize(&mut self, range: Range<usize>) -> Result<()> {
        if range.start > range.end || range.end > self.len() {
            return Err(Error::Config(format!(
                "scaler range {range:?} outside 0..{}",
                self.len()
            )));
        }
        self.scaler =
            FeatureScaler::fit(self.n_features, self.samples[range].iter().map(|s| &s.raw));
        for s in &mut self.samples {
            s.features = self.scaler.apply(&s.raw);
        }
        Ok(())
    }

    /// Copy with the scaler refitted on `range`.
    pub fn restandardized(&self, range: Range<usize>) -> Result<AlignedDataset> {
        let mut out = self.clone();
        out.standardize(range)?;
        Ok(out)
    }

    /// Copy of a contiguous slice of samples, keeping the current scaler.
    pub fn subset(&self, range: Range<usize>) -> AlignedDataset {
        AlignedDataset {
            history_len: self.history_len,
            book_window: self.book_window,
            horizon: self.horizon,
            n_features: self.n_features,
            scaler: self.scaler.clone(),
            samples: self.samples[range].to_vec(),
        }
    }

    pub fn targets(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.target).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&DatasetFile::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str::<DatasetFile>(text)?.try_into()
    }
}

/// JSON layout of a dataset checkpoint: dimensions, scaler, and row-major
/// sample arrays of raw (unscaled) features.
#[derive(Serialize, Deserialize)]
struct DatasetFile {
    l_v: usize,
    l_b: usize,
    horizon: usize,
    n: usize,
    scaler: FeatureScaler,
    h: Vec<usize>,
    targets: Vec<f64>,
    history: Vec<f64>,
    features: Vec<f64>,
}

impl From<&AlignedDataset> for DatasetFile {
    fn from(d: &AlignedDataset) -> Self {
        DatasetFile {
            l_v: d.history_len,
            l_b: d.book_window,
            horizon: d.horizon,
            n: d.n_features,
            scaler: d.scaler.clone(),
            h: d.samples.iter().map(|s| s.h).collect(),
            targets: d.targets(),
            history: d.samples.iter().flat_map(|s| s.history.iter().copied()).collect(),
            features: d.samples.iter().flat_map(|s| s.raw.as_slice().iter().copied()).collect(),
        }
    }
}

impl TryFrom<DatasetFile> for AlignedDataset {
    type Error = Error;

    fn try_from(f: DatasetFile) -> Result<Self> {
        let count = f.h.len();
        let window = f.n * f.l_b;
        if f.targets.len() != count
            || f.history.len() != count * f.l_v
            || f.features.len() != count * window
            || f.scaler.mean.len() != f.n
            || f.scaler.scale.len() != f.n
        {
            return Err(Error::dim("dataset checkpoint arrays disagree with its dimensions"));
        }
        let samples = (0..count)
            .map(|k| {
                let raw = FeatureMatrix::new(
                    f.n,
                    f.l_b,
                    f.features[k * window..(k + 1) * window].to_vec(),
                )?;
                Ok(Sample {
                    h: f.h[k],
                    target: f.targets[k],
                    history: f.history[k * f.l_v..(k + 1) * f.l_v].to_vec(),
                    features: f.scaler.apply(&raw),
                    raw,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(AlignedDataset {
            history_len: f.l_v,
            book_window: f.l_b,
            horizon: f.horizon,
            n_features: f.n,
            scaler: f.scaler,
            samples,
        })
    }
}

/// Parses a `ts,price` CSV (header required).
pub fn read_prices_csv(text: &str) -> Result<PriceSeries> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == "ts,price" => {}
        _ => return Err(Error::Parse { line: 1, msg: "expected header ts,price".into() }),
    }
    let mut ts = Vec::new();
    let mut prices = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let err = || Error::Parse { line: i + 1, msg: format!("malformed price row {line:?}") };
        let (t, p) = line.split_once(',').ok_or_else(err)?;
        ts.push(t.trim().parse::<i64>().map_err(|_| err())?);
        prices.push(p.trim().parse::<f64>().map_err(|_| err())?);
    }
    PriceSeries::new(ts, prices)
}

pub fn write_prices_csv(p: &PriceSeries) -> String {
    let mut out = String::from("ts,price\n");
    for (t, x) in p.timestamps.iter().zip(&p.prices) {
        out.push_str(&format!("{t},{x}\n"));
    }
    out
}

pub fn write_volatility_csv(v: &VolatilitySeries) -> String {
    let mut out = String::from("h,v\n");
    for (h, x) in v.values.iter().enumerate() {
        out.push_str(&format!("{h},{x}\n"));
    }
    out
}
