//! Driving-behavior narration and reasoning on a mesh of roadside units (RSUs).
//!
//! Each RSU ingests frame-annotated video segments, builds a three-stream
//! (environment / agent / motion) prompt, asks a pluggable backend for a
//! narration and a causal explanation, scores the result against human
//! annotations and broadcasts hazard alerts to its peers.
//!
//! Module map:
//!
//! * [`taxonomy`] keyword vocabulary and longest-match phrase matching
//! * [`segments`] manifest ingestion, clip splitting, keyframe selection
//! * [`prompt`] three-stream prompt construction and the enrichment corpus
//! * [`backend`] inference boundary, deterministic mock, HTTP client, timing harness
//! * [`evaluation`] narration / reasoning scoring and report aggregation
//! * [`node`] the per-RSU state machine
//! * [`network`] envelopes, address registration, simulated and socket transports
//! * [`experiment`] end-to-end driver used by the `rsu` command line
//! * [`exec`] sequential / rayon execution switch for the data-parallel loops

pub mod backend;
pub mod evaluation;
pub mod exec;
pub mod experiment;
pub mod network;
pub mod node;
pub mod prompt;
pub mod segments;
pub mod taxonomy;
pub mod text;

pub use taxonomy::{Category, KeywordEntry, Taxonomy};
