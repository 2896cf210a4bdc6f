//! Discover discrete strategy concepts from a Go 7x7 agent's encoder
//! features, train concept-bottleneck policies, align concept spaces between
//! independently trained agents, transfer policies zero-shot by embedding
//! remapping, and validate the concepts with interventions, ablations, and
//! stability analyses.

pub mod alignment;
pub mod analysis;
pub mod artifact;
pub mod bottleneck;
pub mod concepts;
pub mod config;
pub mod encoder;
pub mod go;
pub mod hungarian;
pub mod nn;
pub mod pipeline;
pub mod rng;
pub mod stats;
