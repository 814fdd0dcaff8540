//! Scenario harness for the noise-space steganography bench: named
//! backbones, dataset builders for four detection scenarios, the fixed
//! noise-space detector, ablations, a payload-spread sweep, and report
//! emission.  The `noiselab` binary is a thin CLI over these modules.

pub mod backbones;
pub mod config;
pub mod detector;
pub mod report;
pub mod scenario;
pub mod sweep;
