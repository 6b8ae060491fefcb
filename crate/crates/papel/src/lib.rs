//! Toolkit for prompting chat-completion language models over privacy
//! policies: a catalog of annotation and contradiction-detection prompts, a
//! backend-agnostic model gateway with record/replay caching, a keyword
//! normalizer that maps free-text answers onto data-practice labels, and an
//! evaluation layer (multi-label F1, bootstrap confidence intervals,
//! annotator agreement) that scores model output against a majority-vote
//! gold standard.

pub mod annotate;
pub mod contradiction;
pub mod corpus;
pub mod gateway;
pub mod hashing;
pub mod label;
pub mod metrics;
pub mod normalize;
pub mod prompt;
pub mod report;
pub mod runcfg;

pub mod cli;
