//! Mixed-frequency Bayesian VARs with horseshoe shrinkage, temporal and
//! cross-sectional aggregation constraints, nowcasting and evaluation.

// Negated float comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aggregation;
pub mod analysis;
pub mod error;
pub mod eval;
pub mod linalg;
pub mod mfvar;
pub mod panel;
pub mod prior;
pub mod simulate;
pub mod statespace;
pub mod time;
pub mod transform;

pub use error::{Error, Result};
pub use time::{Month, Quarter};
