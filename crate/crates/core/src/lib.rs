#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod coverage_ip;
pub mod error;
pub mod geometry;
pub mod greedy;
pub mod io;
pub mod linalg;
pub mod map;
pub mod simeval;
#[cfg(test)]
mod testutil;
pub mod utilities;

pub use error::{Error, Result};
