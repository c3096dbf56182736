//! Offline performance optimization of multi-parameter service
//! configurations: factor screening, search-space reduction, pluggable
//! black-box optimizers and evaluation backends, and an offline harness for
//! comparing optimizers on exhaustively collected datasets.

// `!(x > 0.0)` is used on purpose so NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod backends;
pub mod harness;
pub mod numfmt;
pub mod optim;
pub mod screening;
pub mod space;
pub mod utility;

pub use space::{Configuration, NormalizedPoint, ParameterSpec, SearchSpace, SpaceError};
