// `!(x > 0.0)` deliberately rejects NaN too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod corpus;
pub mod decoder;
pub mod error;
pub mod gaussian;
pub mod harness;
pub mod infobounds;
pub mod listening;

pub use error::{Error, Result};
