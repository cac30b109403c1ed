// Gradient loops index several parallel buffers at once.
#![allow(clippy::needless_range_loop)]

pub mod aligner;
pub mod checkpoint;
pub mod corpus;
pub mod distill;
pub mod error;
pub mod fsio;
pub mod lexicon;
pub mod math;
pub mod metrics;
pub mod nat;
pub mod optim;
pub mod pipeline;
pub mod priors;
pub mod seed;

pub use error::{Error, Result};
