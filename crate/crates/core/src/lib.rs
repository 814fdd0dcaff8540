//! Analytic test bench for generative-diffusion steganography and its
//! detection.
//!
//! The crate provides, in dependency order:
//! * exact variance-preserving noise schedules ([`schedule`]) and
//!   Gaussian-mixture priors with closed-form marginal scores ([`prior`]);
//! * the forward/reverse diffusion processes ([`diffusion`]) and
//!   deterministic probability-flow solvers whose generate/invert pair is
//!   exact on unit-normal priors ([`solvers`]);
//! * bit-to-noise codecs ([`codecs`]) and the embedding layer that carries
//!   them through a backbone ([`stego`]);
//! * the detector stack: inversion features ([`features`]) and a bagged
//!   FLD committee ([`ensemble`]);
//! * divergence analysis connecting codec design to detectability
//!   ([`analysis`]).
//!
//! Everything is deterministic given explicit seeds; batch helpers in
//! [`par`] run on rayon when the `parallel` feature (default) is enabled
//! and fall back to sequential execution otherwise, with identical results.

pub mod analysis;
pub mod codecs;
pub mod diffusion;
pub mod ensemble;
pub mod error;
pub mod features;
pub mod io;
pub mod normal;
pub mod par;
pub mod prior;
pub mod schedule;
pub mod seeds;
pub mod solvers;
pub mod stats;
pub mod stego;

pub use error::{Error, Result};
