//! Mean-field learning simulator for battery-owning prosumers bidding into an
//! LMP-cleared wholesale electricity market.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dispatch;
pub mod error;
pub mod grid;
pub mod io;
pub mod metrics;
pub mod prosumer;
pub mod rng;
pub mod simulate;

pub use error::{Error, Result};
