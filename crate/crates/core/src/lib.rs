//! Multi-agent retrieval-augmented translation.
//!
//! A source text flows through four agents: an unknown-term detector, a
//! knowledge-graph constructor (internal extraction plus external retrieval),
//! a back-translation judge that filters retrieved evidence, and a translator
//! conditioned on the resulting [`transkg::TransKG`].

pub mod agents;
pub mod cli;
pub mod config;
pub mod eval;
pub mod fixtures;
pub mod gateway;
pub mod pipeline;
pub mod retrieval;
pub mod text;
pub mod transkg;
