//! Reading-passage generation pipeline.
//!
//! The crate is organised along the stages a passage goes through:
//!
//! * [`corpus`]: append-only JSONL store of reference, generated and edited passages.
//! * [`prompting`]: byte-exact prompt templates (one-shot, zero-shot, continuation).
//! * [`llm`]: completion gateway with caching, retry, rate limiting and cost accounting,
//!   backed by an HTTP provider or a deterministic mock.
//! * [`readability`]: tokenizer, syllable heuristic, frequency lexicon and the
//!   difficulty composite used for selection.
//! * [`selection`]: the condition × temperature × replication grid and the SD-band filter.
//! * [`review`]: export/import exchange with human editors.
//! * [`survey`]: Likert instrument, response QC and agreement summaries.
//! * [`pipeline`]: config-driven end-to-end runs.

pub mod clock;
pub mod corpus;
pub mod digest;
pub mod llm;
pub mod pipeline;
pub mod prompting;
pub mod readability;
pub mod review;
pub mod selection;
pub mod survey;
mod svg;

pub use corpus::{Genre, Passage, PassageStore, Provenance, ReferencePool};
pub use llm::{Gateway, GenerationRequest, GenerationResult};
pub use prompting::{PromptMode, PromptSpec, RenderedPrompt};
pub use readability::{DifficultyReport, FormulaConfig, FrequencyLexicon, TokenizedText};
