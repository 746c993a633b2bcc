//! Boosts a base visual place recognition technique by predicting, per query,
//! the most complementary second technique and fusing the pair.
//!
//! The crate covers the whole chain: descriptor I/O and feature transforms,
//! multi-process fusion, multi-hot label construction, the selector network,
//! Recall@1 evaluation against static pairs and an oracle, a seeded synthetic
//! data generator, and the stage-wise pipeline behind the `vprsel` binary.

mod binio;
mod blob;

pub mod classifier;
pub mod descriptor;
pub mod error;
pub mod fusion;
pub mod evaluation;
pub mod labeling;
pub mod pipeline;
pub mod synthetic;

pub use error::{Error, Result};
