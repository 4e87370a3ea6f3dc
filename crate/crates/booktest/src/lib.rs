//! Runs the guide's Rust snippets as doc-tests so the book cannot drift from the API.
//!
//! One module per chapter keeps failures traceable to their source file.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/orderbook.md")]
pub mod orderbook {}
#[doc = include_str!("../../../book/src/volatility.md")]
pub mod volatility {}
#[doc = include_str!("../../../book/src/mixture.md")]
pub mod mixture {}
#[doc = include_str!("../../../book/src/training.md")]
pub mod training {}
#[doc = include_str!("../../../book/src/baselines.md")]
pub mod baselines {}
#[doc = include_str!("../../../book/src/evaluation.md")]
pub mod evaluation {}
#[doc = include_str!("../../../book/src/synthgen.md")]
pub mod synthgen {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
#[doc = include_str!("../../../README.md")]
pub mod readme {}
