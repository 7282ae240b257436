#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN
//! Deterministic simulation core for privacy-preserving federated learning:
//! field arithmetic, Shamir sharing, secure aggregation, differential
//! privacy, a small learner, data partitioning, the federation loop and
//! evaluation statistics.

extern crate alloc;

pub mod data;
pub mod dp;
pub mod energy;
pub mod error;
pub mod federation;
pub mod field;
pub mod learner;
pub mod metrics;
pub mod secagg;
pub mod sharing;
pub mod stats;
pub mod stream;
pub mod vecops;

pub use error::*;
pub use field::{FieldElement, FixedPointCodec, MODULUS};
pub use stream::{derive_stream, DeterministicStream, StreamFactory};
