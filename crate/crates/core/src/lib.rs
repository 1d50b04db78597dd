//! Claim verification by interrogating a language model with agreeing and
//! conflicting probes over retrieved abstracts, then fusing the answers.
//!
//! Pipeline stages, one module each:
//!
//! - [`retrieval`]: embed and index abstracts, find the ones relevant to a claim.
//! - [`probegen`]: render agree/conflict probes for a (claim, abstract) pair.
//! - [`gateway`]: sample responses from a remote, scripted or replayed model.
//! - [`resolver`]: map free-text responses to Support / Refute / Neutral.
//! - [`fusion`]: combine per-polarity tallies into verdicts with confidences.
//! - [`harness`]: evaluation, alpha grid search, correlation and configuration.

pub mod domain;
pub mod fusion;
pub mod gateway;
pub mod harness;
pub mod probegen;
pub mod resolver;
pub mod retrieval;

pub use domain::{invert_verdict, Claim, Document, Polarity, Verdict};
pub use fusion::{FusionOutcome, FusionParams, MetaOutcome, ResponseDistribution, Strategy};
pub use harness::{Config, HarnessError};
