//! Controlled pretraining corpora and in-context learning benchmarks over a
//! finite world of objects and unary functions.
//!
//! The crate is organised around the data flow of an experiment:
//!
//! * [`world`] samples the universe of objects and the function tables.
//! * [`grammar`] is the document-script language: syntax, the compound
//!   PCFG sampler, and the stochastic interpreter that turns a script into
//!   a document.
//! * [`corpora`] builds the four pretraining datasets and packs them into
//!   fixed-length training windows.
//! * [`tasks`] defines the first-order test tasks, builds prompts and scores
//!   completions.
//! * [`heldout`] removes documents that contain valid test prompts.
//! * [`oracle`] estimates the idealized count-based next-token predictor
//!   by Monte-Carlo and measures its in-context error.

pub mod corpora;
pub mod error;
pub mod grammar;
pub mod heldout;
pub mod oracle;
pub mod rng;
pub mod tasks;
pub mod world;

pub use error::{Error, Result};
pub use world::WorldModel;

/// Object id. Objects are their own spellout, so a token is an object id
/// (plus the StartOfSequence id `|Ω|` in packed streams).
pub type Token = u32;
