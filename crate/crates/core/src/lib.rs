//! Lossless compression with small latent-variable models, and
//! non-parametric classification on top of compressor distances.
//!
//! The pipeline: train a latent-variable model on unlabeled grids,
//! turn it into a lossless codec with bits-back coding over a rANS
//! entropy coder, then classify with kNN over normalized compression
//! distances between test items and a few labeled support items.

pub mod codec;
pub mod compressors;
pub mod data;
pub mod hash;
pub mod model;
pub mod npc;
pub mod rans;
pub mod rng;
