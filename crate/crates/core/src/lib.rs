//! Open exclusion process with a boundary-divergent relaxation field, the
//! entropy solver for its balance law, and the harness comparing the two.

// `!(x > 0.0)`-style guards deliberately reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Cell loops index several parallel arrays by the same cell number.
#![allow(clippy::needless_range_loop)]

pub mod error;
pub mod profiles;
pub mod quadrature;

pub use error::{Error, Result};
pub mod coarsegrain;
pub mod diagnostics;
pub mod field;
pub mod harness;
pub mod microsim;
pub mod oracle;
pub mod pde_solver;
