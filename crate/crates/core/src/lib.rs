// `!(a > b)` is used on purpose so NaN fails range checks.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod corollary;
pub mod cost;
pub mod error;
pub mod fliess;
pub mod format;
pub mod lie;
pub mod periodic;
pub mod reactor;
pub mod reference;
pub mod scalar;
pub mod schedule;
pub mod system;

pub use error::{Error, Result};
