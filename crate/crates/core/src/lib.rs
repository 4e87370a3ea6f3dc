//! Volatility forecasting with temporal mixture models.
//!
//! A mixture blends an autoregressive component on past realized volatility
//! with a bilinear component on order-book features, weighted by a
//! softmax gate that depends on both.

pub mod baselines;
pub mod cli;
pub mod error;
pub mod evaluation;
mod linalg;
pub mod mixture;
pub mod orderbook;
pub mod synthgen;
pub mod training;
pub mod volatility;

pub use error::{Error, Result};
pub use evaluation::{backtest, make_splits, BacktestReport, ModelSpec, Procedure, SplitPlan, StandardModel};
pub use mixture::{Component, Dims, MixtureKind, MixtureModel, VarianceMode, VarianceSpec};
pub use orderbook::{extract_features, FeatureVector, OrderBookSnapshot};
pub use training::{fit, TrainConfig, TrainReport};
pub use volatility::{align_dataset, AlignedDataset, DatasetSpec, FeatureMatrix, Sample};
