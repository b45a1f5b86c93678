//! Stepwise generation of long literary texts.
//!
//! Completion models tend to stop early on long stories. The gateway keeps
//! asking for a continuation, feeding everything generated so far back as the
//! prompt, until the story is long enough, ends itself, or the iteration cap
//! is hit.

use serde::{Deserialize, Serialize};

use super::{FinishReason, Gateway, GatewayError, GenerationRequest, GenerationResult};
use crate::corpus::Genre;
use crate::prompting::{ContextBudget, PromptError, PromptSpec, TemplateSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LongFormPolicy {
    pub target_words: usize,
    pub max_iterations: u32,
    /// Text that marks a natural ending when it closes a completion.
    #[serde(default = "default_marker")]
    pub end_marker: String,
    #[serde(default)]
    pub budget: Option<ContextBudget>,
}

fn default_marker() -> String {
    "The End".into()
}

impl LongFormPolicy {
    pub fn new(target_words: usize, max_iterations: u32) -> Self {
        LongFormPolicy { target_words, max_iterations, end_marker: default_marker(), budget: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LongFormStop {
    /// The model closed the story with the end marker.
    NaturalEnd,
    TargetReached,
    /// Iteration cap hit with at least half the target length.
    MaxIterations,
}

impl LongFormStop {
    pub fn finish_reason(self) -> FinishReason {
        match self {
            LongFormStop::NaturalEnd => FinishReason::Stop,
            LongFormStop::TargetReached => FinishReason::Length,
            LongFormStop::MaxIterations => FinishReason::Other,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LongFormResult {
    pub result: GenerationResult,
    pub stop: LongFormStop,
    pub calls: u32,
}

fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

fn ends_with_marker(text: &str, marker: &str) -> bool {
    let t = text.trim_end().trim_end_matches(['.', '!']).to_lowercase();
    !marker.is_empty() && t.ends_with(&marker.to_lowercase())
}

impl Gateway {
    /// Generates a literary text of at least `policy.target_words` words.
    ///
    /// The first call renders `spec` itself; later calls render continuation
    /// prompts over the accumulated text. Outputs are joined with blank lines.
    pub fn complete_long(
        &self,
        spec: &PromptSpec,
        template: &GenerationRequest,
        policy: &LongFormPolicy,
    ) -> Result<LongFormResult, GatewayError> {
        if spec.genre != Genre::Literary {
            return Err(GatewayError::InvalidRequest("long-form generation is for literary passages".into()));
        }
        if policy.target_words == 0 || policy.max_iterations == 0 {
            return Err(GatewayError::InvalidRequest(
                "long-form policy needs a positive target and iteration cap".into(),
            ));
        }
        let templates = TemplateSet::default();
        let budget = policy.budget.unwrap_or(ContextBudget::UNBOUNDED);
        let first = templates.render(spec)?;
        budget.check(&first.text)?;

        let mut text = String::new();
        let mut prompt_tokens = 0;
        let mut completion_tokens = 0;
        let mut calls = 0;
        let mut prompt = first;
        loop {
            let req = GenerationRequest { prompt: prompt.clone(), ..template.clone() };
            let r = self.complete(&req)?;
            calls += 1;
            prompt_tokens += r.prompt_tokens;
            completion_tokens += r.completion_tokens;
            let piece = r.text.trim();
            if !piece.is_empty() {
                if !text.is_empty() {
                    text.push_str("\n\n");
                }
                text.push_str(piece);
            }

            let words = word_count(&text);
            let stop = if ends_with_marker(&text, &policy.end_marker) {
                Some(LongFormStop::NaturalEnd)
            } else if words >= policy.target_words {
                Some(LongFormStop::TargetReached)
            } else if calls >= policy.max_iterations {
                if words * 2 < policy.target_words {
                    return Err(GatewayError::LongFormIncomplete {
                        partial: text,
                        words,
                        target: policy.target_words,
                        calls,
                    });
                }
                Some(LongFormStop::MaxIterations)
            } else {
                None
            };
            if let Some(stop) = stop {
                return Ok(LongFormResult {
                    result: GenerationResult {
                        text,
                        prompt_tokens,
                        completion_tokens,
                        finish_reason: stop.finish_reason(),
                        request_key: r.request_key,
                        received_at: r.received_at,
                    },
                    stop,
                    calls,
                });
            }
            let next =
                PromptSpec { audience_age: spec.audience_age, ..PromptSpec::continuation(spec.genre, text.clone()) };
            prompt = templates.render_continuation(&next, &budget).map_err(|e| match e {
                PromptError::OverBudget { .. } => {
                    log::warn!("continuation prompt exceeds the context budget after {calls} calls");
                    GatewayError::Prompt(e)
                }
                other => GatewayError::Prompt(other),
            })?;
        }
    }
}
