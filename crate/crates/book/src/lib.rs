//! Runs the snippets of the guide as doc-tests.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/market.md")]
pub mod market {}

#[doc = include_str!("../../../book/src/order_flow.md")]
pub mod order_flow {}

#[doc = include_str!("../../../book/src/special_functions.md")]
pub mod special_functions {}

#[doc = include_str!("../../../book/src/strategy.md")]
pub mod strategy {}

#[doc = include_str!("../../../book/src/manipulation.md")]
pub mod manipulation {}

#[doc = include_str!("../../../book/src/monte_carlo.md")]
pub mod monte_carlo {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
