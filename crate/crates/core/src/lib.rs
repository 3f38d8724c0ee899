//! Grounded question answering over clinical note excerpts.
//!
//! The pipeline has two model-driven steps and a scorer:
//!
//! 1. [`classifier`] labels each note sentence `essential`, `supplementary` or
//!    `not-relevant` by sampling a few-shot prompt many times and thresholding
//!    the vote counts.
//! 2. [`answer`] turns the selected sentences into a short answer whose
//!    sentences carry pipe-delimited citations (see [`citations`]).
//! 3. [`metrics`] scores answers the way the shared-task scorer does.
//!
//! [`pipeline`] wires the stages together over a run directory and backs the
//! `ehrqa` command-line tool. Model access goes through [`gateway`], which
//! also provides deterministic mock backends.

pub mod answer;
pub mod citations;
pub mod classifier;
pub mod corpus;
pub mod gateway;
pub mod metrics;
pub mod pipeline;
pub mod prompts;
pub mod seed;

pub use answer::{generate_answer, GenerationSettings, SelectionMode};
pub use citations::{emit_answer, parse_answer, Answer, AnswerSentence, CitationSet};
pub use classifier::{classify_case, ClassifierSettings, ThresholdPolicy, VoteTally};
pub use corpus::{CaseRecord, NoteSentence, RelevanceLabel};
pub use gateway::{Backend, BackendProfile, Gateway, GenerationRequest};
