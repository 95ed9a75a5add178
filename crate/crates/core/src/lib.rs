//! Diversity and relevance evaluation for generated questions, pseudo-pair
//! selection, and a resumable dual-model training loop.
//!
//! Start with the `examples/` directory: each file there exercises one
//! capability end to end.

pub mod cli;
pub mod corpus;
pub mod http;
pub mod metrics;
pub mod mock;
pub mod orchestrator;
pub mod protocol;
pub mod relevance;
pub mod selection;
pub mod textproc;
