//! Limit order book snapshots and the eleven per-snapshot features.
//!
//! A snapshot is one poll of the exchange: a bid ladder sorted by strictly
//! descending price and an ask ladder sorted by strictly ascending price.
//! Duplicate price levels are merged when the snapshot is built, so the depth
//! of a side is simply its number of price levels.
//!
//! Features follow a handful of conventions:
//!
//! - "10% of depth" means `ceil(depth / 10)` orders, never fewer than one.
//! - The current traded price is not part of a snapshot; the mid price
//!   `(best_bid + best_ask) / 2` stands in for it.
//! - Slope is available volume per unit of price: the cumulative amount of the
//!   best 10% of orders divided by the distance from the mid price to the
//!   deepest of those orders, with the distance clamped below by
//!   [`SLOPE_MIN_OFFSET`].

use std::fmt;
use std::io::Write;

use serde::Deserialize;

use crate::error::{Error, Result};

/// Number of features extracted from one snapshot.
pub const N_FEATURES: usize = 11;

/// Lower clamp on the price offset used by [`slope`].
pub const SLOPE_MIN_OFFSET: f64 = 1e-9;

/// Header of the feature CSV written by [`write_features_csv`].
pub const FEATURE_CSV_HEADER: &str =
    "ts,spread,ask_depth,bid_depth,depth_diff,ask_vol,bid_vol,vol_diff,weighted_spread,ask_slope,bid_slope,mid_price";

/// Feature names in the order of [`FeatureVector::to_array`].
pub const FEATURE_NAMES: [&str; N_FEATURES] = [
    "spread",
    "ask_depth",
    "bid_depth",
    "depth_diff",
    "ask_vol",
    "bid_vol",
    "vol_diff",
    "weighted_spread",
    "ask_slope",
    "bid_slope",
    "mid_price",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Ask,
    Bid,
}

/// A resting limit order: `amount` BTC offered at `price`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Order {
    pub price: f64,
    pub amount: f64,
}

impl Order {
    pub fn new(price: f64, amount: f64) -> Self {
        Order { price, amount }
    }

    fn is_valid(&self) -> bool {
        self.price.is_finite() && self.amount.is_finite() && self.price > 0.0 && self.amount > 0.0
    }
}

/// A validated order-book snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderBookSnapshot {
    timestamp: i64,
    bids: Vec<Order>,
    asks: Vec<Order>,
}

impl OrderBookSnapshot {
    /// Builds a snapshot from unsorted ladders, merging duplicate price levels.
    pub fn new(timestamp: i64, bids: Vec<Order>, asks: Vec<Order>) -> Result<Self> {
        let invalid = |msg: String| Error::InvalidSnapshot { timestamp, msg };
        if let Some(o) = bids.iter().chain(asks.iter()).find(|o| !o.is_valid()) {
            return Err(invalid(format!(
                "order ({}, {}) must have positive finite price and amount",
                o.price, o.amount
            )));
        }
        if bids.is_empty() {
            return Err(invalid("bid side is empty".into()));
        }
        if asks.is_empty() {
            return Err(invalid("ask side is empty".into()));
        }
        let bids = merge_levels(bids, Side::Bid);
        let asks = merge_levels(asks, Side::Ask);
        if bids[0].price >= asks[0].price {
            return Err(invalid(format!(
                "crossed book: best bid {} >= best ask {}",
                bids[0].price, asks[0].price
            )));
        }
        Ok(OrderBookSnapshot { timestamp, bids, asks })
    }

    pub fn timestamp(&self) -> i64 {
        self.timestamp
    }

    /// Bid levels, best (highest price) first.
    pub fn bids(&self) -> &[Order] {
        &self.bids
    }

    /// Ask levels, best (lowest price) first.
    pub fn asks(&self) -> &[Order] {
        &self.asks
    }

    pub fn side(&self, side: Side) -> &[Order] {
        match side {
            Side::Ask => &self.asks,
            Side::Bid => &self.bids,
        }
    }

    pub fn best_bid(&self) -> f64 {
        self.bids[0].price
    }

    pub fn best_ask(&self) -> f64 {
        self.asks[0].price
    }

    pub fn mid_price(&self) -> f64 {
        0.5 * (self.best_bid() + self.best_ask())
    }
}

fn merge_levels(mut orders: Vec<Order>, side: Side) -> Vec<Order> {
    match side {
        Side::Bid => orders.sort_by(|a, b| b.price.total_cmp(&a.price)),
        Side::Ask => orders.sort_by(|a, b| a.price.total_cmp(&b.price)),
    }
    let mut merged: Vec<Order> = Vec::with_capacity(orders.len());
    for o in orders {
        match merged.last_mut() {
            Some(last) if last.price == o.price => last.amount += o.amount,
            _ => merged.push(o),
        }
    }
    merged
}

#[derive(Deserialize)]
struct JsonRecord {
    ts: i64,
    bids: Vec<[f64; 2]>,
    asks: Vec<[f64; 2]>,
}

/// Parses one snapshot record.
///
/// Two encodings are accepted. The compact text form is
/// `timestamp;B p1,a1 p2,a2 ...;A p1,a1 ...` and the JSON form is an object
/// with `ts`, `bids` and `asks`, the latter two arrays of `[price, amount]`.
/// `line` is only used for error reporting.
pub fn parse_snapshot(record: &str, line: usize) -> Result<OrderBookSnapshot> {
    let record = record.trim();
    let parse_err = |msg: String| Error::Parse { line, msg };
    let (ts, bids, asks) = if record.starts_with('{') {
        let rec: JsonRecord =
            serde_json::from_str(record).map_err(|e| parse_err(format!("bad JSON record: {e}")))?;
        let conv = |v: Vec<[f64; 2]>| v.into_iter().map(|[p, a]| Order::new(p, a)).collect();
        (rec.ts, conv(rec.bids), conv(rec.asks))
    } else {
        let mut parts = record.split(';');
        let ts_text = parts.next().unwrap_or_default().trim();
        let ts = ts_text
            .parse::<i64>()
            .map_err(|_| parse_err(format!("bad timestamp {ts_text:?}")))?;
        let mut bids = None;
        let mut asks = None;
        for part in parts {
            let part = part.trim();
            let (tag, slot, body) = if let Some(body) = part.strip_prefix('B') {
                ('B', &mut bids, body)
            } else if let Some(body) = part.strip_prefix('A') {
                ('A', &mut asks, body)
            } else {
                return Err(parse_err(format!("unknown side tag in {part:?}")));
            };
            let ladder = parse_ladder(body).map_err(&parse_err)?;
            if slot.replace(ladder).is_some() {
                return Err(parse_err(format!("side {tag} given twice")));
            }
        }
        let bids = bids.ok_or_else(|| parse_err("missing bid side".into()))?;
        let asks = asks.ok_or_else(|| parse_err("missing ask side".into()))?;
        (ts, bids, asks)
    };
    OrderBookSnapshot::new(ts, bids, asks)
}

fn parse_ladder(body: &str) -> std::result::Result<Vec<Order>, String> {
    body.split_whitespace()
        .map(|pair| {
            let (p, a) = pair
                .split_once(',')
                .ok_or_else(|| format!("expected price,amount but found {pair:?}"))?;
            let price = p.parse::<f64>().map_err(|_| format!("bad price {p:?}"))?;
            let amount = a.parse::<f64>().map_err(|_| format!("bad amount {a:?}"))?;
            Ok(Order::new(price, amount))
        })
        .collect()
}

/// Formats a snapshot in the compact text encoding accepted by [`parse_snapshot`].
pub fn format_snapshot(s: &OrderBookSnapshot) -> String {
    let mut out = format!("{};B", s.timestamp);
    for o in s.bids() {
        out.push_str(&format!(" {},{}", o.price, o.amount));
    }
    out.push_str(";A");
    for o in s.asks() {
        out.push_str(&format!(" {},{}", o.price, o.amount));
    }
    out
}

pub fn spread(s: &OrderBookSnapshot) -> f64 {
    s.best_ask() - s.best_bid()
}

/// Number of price levels on one side.
pub fn depth(s: &OrderBookSnapshot, side: Side) -> usize {
    s.side(side).len()
}

/// Total amount resting on one side.
pub fn volume(s: &OrderBookSnapshot, side: Side) -> f64 {
    s.side(side).iter().map(|o| o.amount).sum()
}

/// `ceil(depth / 10)`, at least one order.
pub fn tenth_of_depth(depth: usize) -> usize {
    depth.div_ceil(10).max(1)
}

/// Difference between the cumulative ask and bid prices over the best 10% of
/// each side. When the two sides contribute a different number of orders the
/// sums are replaced by per-order means.
///
/// The means are taken as offsets from the mid price, so reflecting the book
/// about its mid swaps the two terms and leaves the result bit-identical.
pub fn weighted_spread(s: &OrderBookSnapshot) -> f64 {
    let k_ask = tenth_of_depth(s.asks.len());
    let k_bid = tenth_of_depth(s.bids.len());
    if k_ask == k_bid {
        let ask_sum: f64 = s.asks[..k_ask].iter().map(|o| o.price).sum();
        let bid_sum: f64 = s.bids[..k_bid].iter().map(|o| o.price).sum();
        ask_sum - bid_sum
    } else {
        let mid = s.mid_price();
        let ask_off: f64 = s.asks[..k_ask].iter().map(|o| o.price - mid).sum();
        let bid_off: f64 = s.bids[..k_bid].iter().map(|o| mid - o.price).sum();
        ask_off / k_ask as f64 + bid_off / k_bid as f64
    }
}

/// Volume per unit price over the best 10% of one side, measured from the mid price.
pub fn slope(s: &OrderBookSnapshot, side: Side) -> f64 {
    let orders = s.side(side);
    let k = tenth_of_depth(orders.len());
    let cumulative: f64 = orders[..k].iter().map(|o| o.amount).sum();
    let offset = (orders[k - 1].price - s.mid_price()).abs();
    cumulative / offset.max(SLOPE_MIN_OFFSET)
}

/// The eleven order-book features of one snapshot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector {
    pub timestamp: i64,
    pub spread: f64,
    pub ask_depth: f64,
    pub bid_depth: f64,
    pub depth_difference: f64,
    pub ask_volume: f64,
    pub bid_volume: f64,
    pub volume_difference: f64,
    pub weighted_spread: f64,
    pub ask_slope: f64,
    pub bid_slope: f64,
    pub mid_price: f64,
}

impl FeatureVector {
    /// Feature values in CSV column order (see [`FEATURE_NAMES`]).
    pub fn to_array(&self) -> [f64; N_FEATURES] {
        [
            self.spread,
            self.ask_depth,
            self.bid_depth,
            self.depth_difference,
            self.ask_volume,
            self.bid_volume,
            self.volume_difference,
            self.weighted_spread,
            self.ask_slope,
            self.bid_slope,
            self.mid_price,
        ]
    }

    pub fn from_array(timestamp: i64, v: [f64; N_FEATURES]) -> Self {
        FeatureVector {
            timestamp,
            spread: v[0],
            ask_depth: v[1],
            bid_depth: v[2],
            depth_difference: v[3],
            ask_volume: v[4],
            bid_volume: v[5],
            volume_difference: v[6],
            weighted_spread: v[7],
            ask_slope: v[8],
            bid_slope: v[9],
            mid_price: v[10],
        }
    }
}

impl fmt::Display for FeatureVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.timestamp)?;
        for v in self.to_array() {
            write!(f, ",{v}")?;
        }
        Ok(())
    }
}

pub fn extract_features(s: &OrderBookSnapshot) -> FeatureVector {
    let ask_depth = depth(s, Side::Ask) as f64;
    let bid_depth = depth(s, Side::Bid) as f64;
    let ask_volume = volume(s, Side::Ask);
    let bid_volume = volume(s, Side::Bid);
    FeatureVector {
        timestamp: s.timestamp,
        spread: spread(s),
        ask_depth,
        bid_depth,
        depth_difference: ask_depth - bid_depth,
        ask_volume,
        bid_volume,
        volume_difference: ask_volume - bid_volume,
        weighted_spread: weighted_spread(s),
        ask_slope: slope(s, Side::Ask),
        bid_slope: slope(s, Side::Bid),
        mid_price: s.mid_price(),
    }
}

/// Writes feature vectors as CSV, header included.
pub fn write_features_csv<'a, W: Write>(
    mut out: W,
    features: impl IntoIterator<Item = &'a FeatureVector>,
) -> Result<()> {
    writeln!(out, "{FEATURE_CSV_HEADER}")?;
    for fv in features {
        writeln!(out, "{fv}")?;
    }
    Ok(())
}

/// Reads a feature CSV produced by [`write_features_csv`].
pub fn read_features_csv(text: &str) -> Result<Vec<FeatureVector>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == FEATURE_CSV_HEADER => {}
        Some((_, h)) => {
            return Err(Error::Parse { line: 1, msg: format!("unexpected header {h:?}") });
        }
        None => return Ok(Vec::new()),
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse { line: i + 1, msg };
        let mut fields = line.split(',');
        let ts = fields
            .next()
            .and_then(|t| t.trim().parse::<i64>().ok())
            .ok_or_else(|| err("bad timestamp".into()))?;
        let mut values = [0.0; N_FEATURES];
        for slot in values.iter_mut() {
            *slot = fields
                .next()
                .and_then(|t| t.trim().parse::<f64>().ok())
                .ok_or_else(|| err("missing or malformed feature value".into()))?;
        }
        if fields.next().is_some() {
            return Err(err("too many fields".into()));
        }
        out.push(FeatureVector::from_array(ts, values));
    }
    Ok(out)
}
