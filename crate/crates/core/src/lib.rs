// Negated comparisons such as `!(x > 0.0)` are how NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bsde;
pub mod error;
mod exec;
pub mod forward_sde;
pub mod malliavin_bsde;
pub mod pathspace;
pub mod stats;
pub mod wiener_calculus;

pub use error::{Error, Result};
