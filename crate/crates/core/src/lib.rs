//! Universal-distortion d-semifaithful lossy codes over finite alphabets.
//!
//! Three codecs are provided: an equivalence-class code (`t1`), a code over
//! quantized distortion measures with one-symbol post-correction (`t2`), and
//! a random code driven by normalized-maximum-likelihood sampling (`nml`).

pub mod bits;
pub mod error;
pub mod exact;
pub mod model;
pub mod rd;
pub mod rng;
pub mod types;
pub mod distortion_space;
pub mod cover;
pub mod table_codecs;
pub mod nml;
pub mod bounds;
pub mod experiment;

pub use error::{Error, Result};

#[cfg(test)]
mod proptests;
