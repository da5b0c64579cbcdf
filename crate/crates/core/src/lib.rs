//! Decentralized deadlock detection and recovery for automated vehicles
//! sharing a road segment, with a discrete-time simulator to evaluate it.

// `!(a < b)` is used on purpose so that NaN fails range checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod cost;
pub mod engine;
pub mod geometry;
pub mod interaction;
pub mod perception;
pub mod road;
pub mod sim;
pub mod vehicle;
