//! Generation grid and SD-band selection.
//!
//! A [`BatchPlan`] expands to condition × temperature × replicate cells.
//! [`run_batch`] generates and scores every cell; [`select`] keeps the
//! candidates whose score lies within `band_halfwidth` of the reference
//! score (inclusive).

mod report;

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusError, Genre, Passage, PassageStore, Provenance, SelectionMark};
use crate::digest::json_digest;
use crate::llm::{FinishReason, Gateway, GatewayError, GenerationRequest, LongFormPolicy};
use crate::prompting::{render_prompt, PromptError, PromptSpec};
use crate::readability::{difficulty_score, tokenize, DifficultyReport, FormulaConfig, FrequencyLexicon};

pub use report::{quantile, render_strip_chart, summarize_conditions, write_csv, ConditionSummary};

/// Tag carried by candidates of a topic-finding batch that must never be selected.
pub const DISCARD_TAG: &str = "discard";

#[derive(Debug, thiserror::Error)]
pub enum SelectionError {
    #[error("invalid batch plan: {0}")]
    InvalidPlan(String),
    #[error("invalid selection policy: {0}")]
    InvalidPolicy(String),
    #[error("standard deviation needs at least 2 scores, got {0}")]
    TooFewScores(usize),
    #[error("scores have zero spread; the band would be empty")]
    DegenerateBand,
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedCondition {
    pub label: String,
    pub spec: PromptSpec,
}

/// Shared parameters of every request in a batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestDefaults {
    pub model_id: String,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
}

fn default_max_tokens() -> u32 {
    GenerationRequest::DEFAULT_MAX_TOKENS
}

impl Default for RequestDefaults {
    fn default() -> Self {
        RequestDefaults { model_id: "text-davinci-002".into(), max_tokens: default_max_tokens() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchPlan {
    pub conditions: Vec<PlannedCondition>,
    pub temperatures: Vec<f64>,
    pub replications: u32,
    #[serde(default)]
    pub request_defaults: RequestDefaults,
    /// Topic-finding batch: generated and stored but never selected.
    #[serde(default)]
    pub discard: bool,
    /// Literary conditions use stepwise continuation when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub long_form: Option<LongFormPolicy>,
}

impl BatchPlan {
    pub fn planned_total(&self) -> usize {
        self.conditions.len() * self.temperatures.len() * self.replications as usize
    }

    /// Every problem with the plan, in field order.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.conditions.is_empty() {
            out.push("conditions: at least one condition is required".to_owned());
        }
        let mut labels: Vec<&str> = Vec::new();
        for (i, c) in self.conditions.iter().enumerate() {
            if c.label.trim().is_empty() {
                out.push(format!("conditions[{i}].label: must not be empty"));
            } else if labels.contains(&c.label.as_str()) {
                out.push(format!("conditions[{i}].label: duplicate label `{}`", c.label));
            }
            labels.push(&c.label);
            if let Err(e) = c.spec.validate() {
                out.push(format!("conditions[{i}].spec: {e}"));
            }
        }
        if self.temperatures.is_empty() {
            out.push("temperatures: at least one temperature is required".to_owned());
        }
        for (i, t) in self.temperatures.iter().enumerate() {
            if !t.is_finite() || !crate::llm::TEMPERATURE_RANGE.contains(t) {
                out.push(format!("temperatures[{i}]: {t} is outside [0, 2]"));
            }
        }
        if self.replications == 0 {
            out.push("replications: must be positive".to_owned());
        }
        if self.request_defaults.model_id.trim().is_empty() {
            out.push("request_defaults.model_id: must not be empty".to_owned());
        }
        if self.request_defaults.max_tokens == 0 {
            out.push("request_defaults.max_tokens: must be positive".to_owned());
        }
        if let Some(lf) = &self.long_form {
            if lf.target_words == 0 || lf.max_iterations == 0 {
                out.push("long_form: target_words and max_iterations must be positive".to_owned());
            }
        }
        out
    }

    pub fn validate(&self) -> Result<(), SelectionError> {
        match self.violations().first() {
            None => Ok(()),
            Some(v) => Err(SelectionError::InvalidPlan(v.clone())),
        }
    }

    /// Content-derived batch id: the same plan always gets the same id.
    pub fn batch_id(&self) -> String {
        format!("batch-{}", &json_digest(self)[..12])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate {
    pub passage: Passage,
    pub report: DifficultyReport,
    pub condition_label: String,
    pub temperature: f64,
    pub replicate_index: u32,
    pub selected: bool,
}

impl ScoredCandidate {
    pub fn score(&self) -> f64 {
        self.report.score
    }

    pub fn is_discarded(&self) -> bool {
        self.passage.has_tag(DISCARD_TAG)
    }
}

/// A grid cell that produced no scored candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationGap {
    pub condition_label: String,
    pub temperature: f64,
    pub replicate_index: u32,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchOutcome {
    pub batch_id: String,
    pub planned: usize,
    pub candidates: Vec<ScoredCandidate>,
    pub gaps: Vec<GenerationGap>,
}

struct Cell<'a> {
    condition: &'a PlannedCondition,
    temperature: f64,
    replicate: u32,
}

fn slug(label: &str) -> String {
    let mut s: String =
        label.chars().map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '-' }).collect();
    while s.contains("--") {
        s = s.replace("--", "-");
    }
    s.trim_matches('-').to_owned()
}

/// Deterministic passage id of a grid cell.
pub fn candidate_id(batch_id: &str, label: &str, temperature: f64, replicate: u32) -> String {
    format!("{batch_id}-{}-t{temperature:.2}-r{replicate:02}", slug(label))
}

fn generate(cell: &Cell<'_>, plan: &BatchPlan, gateway: &Gateway) -> Result<(String, FinishReason), GatewayError> {
    let prompt = render_prompt(&cell.condition.spec)?;
    let mut req = GenerationRequest::new(prompt, cell.temperature, plan.request_defaults.model_id.clone())
        .with_replicate(cell.replicate);
    req.max_tokens = plan.request_defaults.max_tokens;
    match &plan.long_form {
        Some(policy) if cell.condition.spec.genre == Genre::Literary => {
            let r = gateway.complete_long(&cell.condition.spec, &req, policy)?;
            Ok((r.result.text, r.result.finish_reason))
        }
        _ => {
            let r = gateway.complete(&req)?;
            Ok((r.text, r.finish_reason))
        }
    }
}

/// Generates and scores every cell of `plan`.
///
/// Requests run on a pool sized to the gateway's in-flight limit. Failed
/// cells become [`GenerationGap`]s instead of aborting the batch. When a
/// store is given, every scored candidate is appended to it before any
/// selection happens; re-running an identical plan is a no-op for the store.
pub fn run_batch(
    plan: &BatchPlan,
    gateway: &Gateway,
    lexicon: &FrequencyLexicon,
    formula: &FormulaConfig,
    store: Option<&mut PassageStore>,
) -> Result<BatchOutcome, SelectionError> {
    plan.validate()?;
    formula.validate().map_err(|e| SelectionError::InvalidPlan(e.to_string()))?;
    let batch_id = plan.batch_id();
    let mut cells = Vec::with_capacity(plan.planned_total());
    for condition in &plan.conditions {
        for &temperature in &plan.temperatures {
            for replicate in 0..plan.replications {
                cells.push(Cell { condition, temperature, replicate });
            }
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(gateway.config().in_flight_limit.max(1))
        .build()
        .map_err(|e| SelectionError::InvalidPlan(format!("thread pool: {e}")))?;
    let created_at = gateway.clock().now();
    let results: Vec<Result<ScoredCandidate, GenerationGap>> = pool.install(|| {
        cells
            .par_iter()
            .map(|cell| {
                let gap = |error: String| GenerationGap {
                    condition_label: cell.condition.label.clone(),
                    temperature: cell.temperature,
                    replicate_index: cell.replicate,
                    error,
                };
                let (text, finish) = generate(cell, plan, gateway).map_err(|e| gap(e.to_string()))?;
                let spec = &cell.condition.spec;
                if finish == FinishReason::Length && spec.genre == Genre::Informational {
                    log::warn!(
                        "{} t={} rep={}: completion hit max_tokens and may be cut off",
                        cell.condition.label,
                        cell.temperature,
                        cell.replicate
                    );
                }
                let tokens = tokenize(&text).map_err(|e| gap(format!("unscorable completion: {e}")))?;
                let report = difficulty_score(&tokens, lexicon, formula);

                let id = candidate_id(&batch_id, &cell.condition.label, cell.temperature, cell.replicate);
                let title = spec.topic.clone().unwrap_or_else(|| match &spec.exemplar {
                    Some(ex) => format!("After {}", ex.title),
                    None => "Untitled".to_owned(),
                });
                let mut tags = vec![
                    format!("batch:{batch_id}"),
                    format!("condition:{}", cell.condition.label),
                    format!("temperature:{}", cell.temperature),
                    format!("replicate:{}", cell.replicate),
                ];
                if plan.discard {
                    tags.push(DISCARD_TAG.to_owned());
                }
                let passage =
                    Passage::new(id, title, text, spec.genre, Provenance::Generated, created_at).with_tags(tags);
                Ok(ScoredCandidate {
                    passage,
                    report,
                    condition_label: cell.condition.label.clone(),
                    temperature: cell.temperature,
                    replicate_index: cell.replicate,
                    selected: false,
                })
            })
            .collect()
    });

    let mut candidates = Vec::new();
    let mut gaps = Vec::new();
    for r in results {
        match r {
            Ok(c) => candidates.push(c),
            Err(g) => {
                log::warn!("{} t={} rep={} failed: {}", g.condition_label, g.temperature, g.replicate_index, g.error);
                gaps.push(g)
            }
        }
    }

    if let Some(store) = store {
        for c in &mut candidates {
            if let Some(parent) = c.exemplar_id(plan).filter(|p| store.contains(p)) {
                c.passage.parent_id = Some(parent);
            }
            let passage = c.passage.clone();
            match store.get(&passage.id) {
                Some(existing) if existing.text == passage.text => {}
                Some(_) => {
                    return Err(CorpusError::Invariant {
                        id: passage.id.clone(),
                        reason: "stored candidate differs from the regenerated text".into(),
                    }
                    .into())
                }
                None => {
                    store.store_passage(passage)?;
                }
            }
        }
    }

    Ok(BatchOutcome { batch_id, planned: plan.planned_total(), candidates, gaps })
}

impl ScoredCandidate {
    fn exemplar_id(&self, plan: &BatchPlan) -> Option<String> {
        plan.conditions
            .iter()
            .find(|c| c.label == self.condition_label)
            .and_then(|c| c.spec.exemplar.as_ref())
            .and_then(|ex| ex.passage_id.clone())
    }
}

/// Where the band half-width comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SdSource {
    /// SD of the reference (original) passages' scores.
    #[default]
    ReferencePool,
    /// SD of the scores of the candidates themselves.
    CandidateBatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    #[default]
    ClosestScore,
    EarliestReplicate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionPolicy {
    pub reference_score: f64,
    pub band_halfwidth: f64,
    #[serde(default)]
    pub sd_source: SdSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_selected: Option<usize>,
    #[serde(default)]
    pub tie_break: TieBreak,
}

impl SelectionPolicy {
    /// One-SD band around `reference_score`, SD taken from `scores`.
    pub fn one_sd(reference_score: f64, scores: &[f64], sd_source: SdSource) -> Result<Self, SelectionError> {
        Ok(SelectionPolicy {
            reference_score,
            band_halfwidth: compute_band(scores)?,
            sd_source,
            max_selected: None,
            tie_break: TieBreak::default(),
        })
    }

    pub fn validate(&self) -> Result<(), SelectionError> {
        if !self.reference_score.is_finite() {
            return Err(SelectionError::InvalidPolicy("reference_score must be finite".into()));
        }
        if !(self.band_halfwidth.is_finite() && self.band_halfwidth > 0.0) {
            return Err(SelectionError::InvalidPolicy(format!(
                "band_halfwidth must be positive, got {}",
                self.band_halfwidth
            )));
        }
        Ok(())
    }

    pub fn in_band(&self, score: f64) -> bool {
        (score - self.reference_score).abs() <= self.band_halfwidth
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.reference_score - self.band_halfwidth, self.reference_score + self.band_halfwidth)
    }
}

/// Sample standard deviation (n − 1 denominator).
pub fn compute_band(scores: &[f64]) -> Result<f64, SelectionError> {
    if scores.len() < 2 {
        return Err(SelectionError::TooFewScores(scores.len()));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(SelectionError::InvalidPolicy("scores must be finite".into()));
    }
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    let var = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let sd = var.sqrt();
    if sd == 0.0 {
        return Err(SelectionError::DegenerateBand);
    }
    Ok(sd)
}

fn grid_order(a: &ScoredCandidate, b: &ScoredCandidate) -> Ordering {
    a.condition_label
        .cmp(&b.condition_label)
        .then(a.temperature.total_cmp(&b.temperature))
        .then(a.replicate_index.cmp(&b.replicate_index))
        .then_with(|| a.passage.id.cmp(&b.passage.id))
}

/// Marks candidates inside the band as selected.
///
/// Discarded candidates are never selected. With `max_selected`, in-band
/// candidates are ranked by the tie-break and only the first ones kept.
/// Output is ordered by (condition, temperature, replicate) whatever the
/// input order.
pub fn select(
    mut candidates: Vec<ScoredCandidate>,
    policy: &SelectionPolicy,
) -> Result<Vec<ScoredCandidate>, SelectionError> {
    policy.validate()?;
    candidates.sort_by(grid_order);
    let mut eligible: Vec<usize> = Vec::new();
    for (i, c) in candidates.iter_mut().enumerate() {
        c.selected = false;
        if !c.is_discarded() && c.report.score.is_finite() && policy.in_band(c.report.score) {
            eligible.push(i);
        }
    }
    if let Some(max) = policy.max_selected {
        let distance = |i: usize| (candidates[i].report.score - policy.reference_score).abs();
        match policy.tie_break {
            TieBreak::ClosestScore => eligible.sort_by(|&a, &b| {
                distance(a).total_cmp(&distance(b)).then_with(|| grid_order(&candidates[a], &candidates[b]))
            }),
            TieBreak::EarliestReplicate => eligible.sort_by(|&a, &b| {
                candidates[a]
                    .replicate_index
                    .cmp(&candidates[b].replicate_index)
                    .then_with(|| grid_order(&candidates[a], &candidates[b]))
            }),
        }
        eligible.truncate(max);
    }
    for i in eligible {
        candidates[i].selected = true;
    }
    if !candidates.iter().any(|c| c.selected) {
        log::info!("no candidate fell inside the band");
    }
    Ok(candidates)
}

/// Writes a selection mark for every non-discarded candidate.
///
/// Marks already recorded for this batch are left alone.
pub fn record_selection(
    store: &mut PassageStore,
    batch_id: &str,
    candidates: &[ScoredCandidate],
) -> Result<(), SelectionError> {
    for c in candidates.iter().filter(|c| !c.is_discarded()) {
        let exists = store.selection_marks().iter().any(|m| m.passage_id == c.passage.id && m.batch_id == batch_id);
        if !exists {
            store.mark_selection(SelectionMark {
                passage_id: c.passage.id.clone(),
                batch_id: batch_id.to_owned(),
                selected: c.selected,
            })?;
        }
    }
    Ok(())
}
