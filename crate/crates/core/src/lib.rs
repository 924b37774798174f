//! Event-driven simulation of plants steered by leaky integrate-and-fire
//! units, with certified practical-stability bounds.

// `!(x > 0.0)` is the NaN-rejecting form used for parameter checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod linalg;
pub mod model;
pub mod network;
pub mod sim;
pub mod experiments;
pub mod io;
pub mod scenario;
pub mod sweep;
