//! Factorisation-model link prediction whose gradient-descent training doubles
//! as a message-passing layer.
//!
//! The crate is `no_std` (with `alloc`). Everything here is pure computation:
//! graph construction from already-read text, DistMult/ComplEx scoring, the
//! exact gradient-descent operator over node embeddings, the equivalent
//! ReFactor message-passing layer, the node-state cache, training loops and
//! ranking metrics. File handling and the command line live in the `rfgn`
//! crate.
//!
//! Enable the `parallel` feature (implies `std`) to evaluate ranking queries
//! on a rayon pool.

#![cfg_attr(not(feature = "std"), no_std)]
#![allow(clippy::too_many_arguments, clippy::neg_cmp_op_on_partial_ord, clippy::type_complexity)]

extern crate alloc;

pub mod cache;
pub mod dynamics;
mod error;
pub mod eval;
pub mod graph;
mod math;
pub mod matrix;
pub mod refactor;
pub mod rng;
pub mod scoring;
pub mod train;
pub mod verify;

pub use error::{Error, Result};
pub use matrix::{Embeddings, NodeStates, RelationTable};

/// Dense entity id in `[0, |E|)`.
pub type EntityId = usize;
/// Dense relation id in `[0, |R|)`.
pub type RelationId = usize;
