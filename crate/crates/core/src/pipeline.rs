//! Config-driven end-to-end runs.
//!
//! A run copies the input corpus into the output directory, generates the
//! batch, scores and selects candidates, and exports the selected ones for
//! review. Everything it wrote is listed in `manifest.json` with paths
//! relative to the output directory. Under the mock provider the clock is
//! fixed, so running the same config twice gives byte-identical outputs.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::clock::{Clock, FixedClock, SystemClock};
use crate::corpus::{Genre, PassageStore};
use crate::digest::json_digest;
use crate::llm::{
    CompletionProvider, Gateway, GatewayConfig, HttpProvider, HttpProviderConfig, LongFormPolicy, MockConfig,
    MockProvider, ResponseCache, RetryPolicy, Usd,
};
use crate::prompting::{Exemplar, PromptMode, PromptSpec};
use crate::readability::{difficulty_score, tokenize, FormulaConfig, FrequencyLexicon};
use crate::review::export_packet;
use crate::selection::{
    self, compute_band, record_selection, render_strip_chart, run_batch, summarize_conditions, BatchPlan,
    ConditionSummary, GenerationGap, PlannedCondition, RequestDefaults, SdSource, SelectionPolicy, TieBreak,
};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config {path}: {reason}")]
    Parse { path: PathBuf, reason: String },
    #[error("config is not runnable:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
    #[error("{stage}: {reason}")]
    Stage { stage: &'static str, reason: String },
    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderConfig {
    #[serde(default)]
    pub mock: Option<MockConfig>,
    #[serde(default)]
    pub http: Option<HttpProviderConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GatewaySettings {
    #[serde(default = "default_in_flight")]
    pub in_flight_limit: usize,
    #[serde(default = "default_attempts")]
    pub max_attempts: u32,
    #[serde(default = "default_base_delay")]
    pub base_delay_ms: u64,
    #[serde(default = "default_max_delay")]
    pub max_delay_ms: u64,
    #[serde(default)]
    pub min_interval_ms: Option<u64>,
    /// USD per 1000 tokens, as an exact decimal string.
    #[serde(default = "default_price")]
    pub unit_price_per_1000: String,
    /// Response cache directory; not used with the mock provider.
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
}

fn default_in_flight() -> usize {
    4
}
fn default_attempts() -> u32 {
    3
}
fn default_base_delay() -> u64 {
    500
}
fn default_max_delay() -> u64 {
    30_000
}
fn default_price() -> String {
    "0.02".into()
}

impl Default for GatewaySettings {
    fn default() -> Self {
        GatewaySettings {
            in_flight_limit: default_in_flight(),
            max_attempts: default_attempts(),
            base_delay_ms: default_base_delay(),
            max_delay_ms: default_max_delay(),
            min_interval_ms: None,
            unit_price_per_1000: default_price(),
            cache_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionConfig {
    pub label: String,
    pub mode: PromptMode,
    pub genre: Genre,
    #[serde(default)]
    pub topic: Option<String>,
    #[serde(default)]
    pub section_hints: Option<String>,
    #[serde(default)]
    pub audience_age: Option<u32>,
    /// Id of a corpus passage used as the one-shot example.
    #[serde(default)]
    pub exemplar: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatchConfig {
    pub temperatures: Vec<f64>,
    pub replications: u32,
    #[serde(default = "default_model")]
    pub model_id: String,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default)]
    pub discard: bool,
    #[serde(default)]
    pub long_form: Option<LongFormPolicy>,
    pub conditions: Vec<ConditionConfig>,
}

fn default_model() -> String {
    RequestDefaults::default().model_id
}
fn default_max_tokens() -> u32 {
    RequestDefaults::default().max_tokens
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionConfig {
    #[serde(default)]
    pub reference_score: Option<f64>,
    /// Corpus passage whose computed score is the reference.
    #[serde(default)]
    pub reference_passage: Option<String>,
    #[serde(default)]
    pub pool_scores: Option<Vec<f64>>,
    /// Tag (or genre name) selecting reference passages whose scores form the pool.
    #[serde(default)]
    pub pool_tag: Option<String>,
    #[serde(default)]
    pub sd_source: SdSource,
    #[serde(default)]
    pub max_selected: Option<usize>,
    #[serde(default)]
    pub tie_break: TieBreak,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReviewConfig {
    #[serde(default = "yes")]
    pub export: bool,
}

fn yes() -> bool {
    true
}

impl Default for ReviewConfig {
    fn default() -> Self {
        ReviewConfig { export: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub output_dir: PathBuf,
    /// Input corpus; copied into the output directory before the run.
    #[serde(default)]
    pub corpus: Option<PathBuf>,
    /// Frequency lexicon TSV; the built-in list when absent.
    #[serde(default)]
    pub lexicon: Option<PathBuf>,
    /// Formula TOML; the built-in weights when absent.
    #[serde(default)]
    pub formula: Option<PathBuf>,
    pub provider: ProviderConfig,
    #[serde(default)]
    pub gateway: GatewaySettings,
    pub batch: BatchConfig,
    pub selection: SelectionConfig,
    #[serde(default)]
    pub review: ReviewConfig,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl RunConfig {
    pub fn parse(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self, PipelineError> {
        let mut cfg: RunConfig = toml::from_str(text)
            .map_err(|e| PipelineError::Parse { path: PathBuf::from("<inline>"), reason: e.to_string() })?;
        cfg.base_dir = base_dir.into();
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        let text =
            fs::read_to_string(path).map_err(|source| PipelineError::Read { path: path.to_path_buf(), source })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, base).map_err(|e| match e {
            PipelineError::Parse { reason, .. } => PipelineError::Parse { path: path.to_path_buf(), reason },
            other => other,
        })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Digest of the parsed config; formatting and comments do not count.
    pub fn digest(&self) -> String {
        json_digest(self)
    }

    fn gateway_config(&self) -> Result<GatewayConfig, String> {
        let g = &self.gateway;
        let price: Usd = g.unit_price_per_1000.parse().map_err(|e| format!("gateway.unit_price_per_1000: {e}"))?;
        Ok(GatewayConfig {
            retry: RetryPolicy {
                max_attempts: g.max_attempts,
                base_delay: Duration::from_millis(g.base_delay_ms),
                max_delay: Duration::from_millis(g.max_delay_ms),
            },
            in_flight_limit: g.in_flight_limit,
            min_interval: g.min_interval_ms.map(Duration::from_millis),
            unit_price_per_1000: price,
        })
    }

    /// Builds the batch plan, resolving exemplar ids against `store`.
    pub fn plan(&self, store: Option<&PassageStore>) -> Result<BatchPlan, String> {
        let mut conditions = Vec::new();
        for (i, c) in self.batch.conditions.iter().enumerate() {
            let exemplar = match &c.exemplar {
                None => None,
                Some(id) => Some(Exemplar::from(
                    store
                        .and_then(|s| s.get(id))
                        .ok_or_else(|| format!("batch.conditions[{i}].exemplar: `{id}` is not in the corpus"))?,
                )),
            };
            conditions.push(PlannedCondition {
                label: c.label.clone(),
                spec: PromptSpec {
                    mode: c.mode,
                    genre: c.genre,
                    topic: c.topic.clone(),
                    section_hints: c.section_hints.clone(),
                    audience_age: c.audience_age,
                    exemplar,
                    prior_text: None,
                },
            });
        }
        Ok(BatchPlan {
            conditions,
            temperatures: self.batch.temperatures.clone(),
            replications: self.batch.replications,
            request_defaults: RequestDefaults {
                model_id: self.batch.model_id.clone(),
                max_tokens: self.batch.max_tokens,
            },
            discard: self.batch.discard,
            long_form: self.batch.long_form.clone(),
        })
    }
}

/// Every violated constraint; an empty list means the config can run.
pub fn validate_config(cfg: &RunConfig) -> Vec<String> {
    let mut v = Vec::new();
    match (&cfg.provider.mock, &cfg.provider.http) {
        (Some(_), Some(_)) => v.push("provider: configure exactly one of [provider.mock] and [provider.http]".into()),
        (None, None) => v.push("provider: no provider configured".into()),
        (None, Some(h)) if h.endpoint.trim().is_empty() => v.push("provider.http.endpoint: must not be empty".into()),
        _ => {}
    }

    let mut check_file = |field: &str, p: &Option<PathBuf>| {
        if let Some(p) = p {
            if !cfg.resolve(p).is_file() {
                v.push(format!("{field}: file {} does not exist", p.display()));
            }
        }
    };
    check_file("corpus", &cfg.corpus);
    check_file("lexicon", &cfg.lexicon);
    check_file("formula", &cfg.formula);

    if let Some(p) = &cfg.lexicon {
        let path = cfg.resolve(p);
        if path.is_file() {
            if let Err(e) = FrequencyLexicon::load(&path, None) {
                v.push(format!("lexicon: {e}"));
            }
        }
    }
    if let Some(p) = &cfg.formula {
        let path = cfg.resolve(p);
        if path.is_file() {
            if let Err(e) = FormulaConfig::load(&path) {
                v.push(format!("formula: {e}"));
            }
        }
    }

    if cfg.gateway.in_flight_limit == 0 {
        v.push("gateway.in_flight_limit: must be positive".into());
    }
    if cfg.gateway.max_attempts == 0 {
        v.push("gateway.max_attempts: must be positive".into());
    }
    if let Err(e) = cfg.gateway_config() {
        v.push(e);
    }

    let store = cfg.corpus.as_ref().map(|p| cfg.resolve(p)).filter(|p| p.is_file()).and_then(|p| {
        match PassageStore::open_read_only(&p) {
            Ok(s) => Some(s),
            Err(e) => {
                v.push(format!("corpus: {e}"));
                None
            }
        }
    });

    for (i, c) in cfg.batch.conditions.iter().enumerate() {
        if c.exemplar.is_some() && store.is_none() {
            v.push(format!("batch.conditions[{i}].exemplar: needs a corpus"));
        }
    }
    match cfg.plan(store.as_ref()) {
        Ok(plan) => v.extend(
            plan.violations()
                .into_iter()
                .filter(|m| !(store.is_none() && m.contains("exemplar")))
                .map(|m| format!("batch.{m}")),
        ),
        Err(e) if store.is_some() => v.push(e),
        Err(_) => {}
    }

    let s = &cfg.selection;
    match (&s.reference_score, &s.reference_passage) {
        (Some(_), Some(_)) => v.push("selection: set only one of reference_score and reference_passage".into()),
        (None, None) => v.push("selection: reference_score or reference_passage is required".into()),
        (Some(x), None) if !x.is_finite() => v.push("selection.reference_score: must be finite".into()),
        (None, Some(id)) => match &store {
            Some(st) if !st.contains(id) => v.push(format!("selection.reference_passage: `{id}` is not in the corpus")),
            None => v.push("selection.reference_passage: needs a corpus".into()),
            _ => {}
        },
        _ => {}
    }
    if s.pool_scores.is_some() && s.pool_tag.is_some() {
        v.push("selection: set only one of pool_scores and pool_tag".into());
    }
    if s.sd_source == SdSource::ReferencePool {
        match (&s.pool_scores, &s.pool_tag) {
            (None, None) => {
                v.push("selection: pool_scores or pool_tag is required with sd_source = reference_pool".into())
            }
            (Some(p), None) => {
                if let Err(e) = compute_band(p) {
                    v.push(format!("selection.pool_scores: {e}"));
                }
            }
            (None, Some(tag)) => match &store {
                Some(st) if st.load_pool(Some(tag)).len() < 2 => {
                    v.push(format!("selection.pool_tag: fewer than 2 reference passages match `{tag}`"))
                }
                None => v.push("selection.pool_tag: needs a corpus".into()),
                _ => {}
            },
            _ => {}
        }
    }
    if s.max_selected == Some(0) {
        v.push("selection.max_selected: must be positive".into());
    }
    v
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageState {
    Ok,
    Failed,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageStatus {
    pub stage: String,
    pub state: StageState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandSummary {
    pub reference_score: f64,
    pub halfwidth: f64,
    pub lower: f64,
    pub upper: f64,
    pub sd_source: SdSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_digest: String,
    pub provider: String,
    pub created_at: DateTime<Utc>,
    pub batch_id: String,
    pub planned: usize,
    pub candidate_count: usize,
    pub gaps: Vec<GenerationGap>,
    pub conditions: Vec<ConditionSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub band: Option<BandSummary>,
    pub selected_ids: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub review_packet: Option<String>,
    pub total_tokens: u64,
    pub total_cost_usd: String,
    pub network_calls: u64,
    pub cache_hits: u64,
    pub stages: Vec<StageStatus>,
    /// Output files, relative to the output directory.
    pub outputs: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn succeeded(&self) -> bool {
        self.gaps.is_empty() && self.stages.iter().all(|s| s.state != StageState::Failed)
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.to_path_buf(), source }
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), PipelineError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    fs::write(path, bytes).map_err(io_err(path))
}

fn stage(name: &str, state: StageState, detail: Option<String>) -> StageStatus {
    StageStatus { stage: name.to_owned(), state, detail }
}

/// Runs generation, scoring, selection and review export.
///
/// Config problems and unreadable inputs are errors before anything is
/// generated. Failures after generation starts are recorded as stage
/// statuses in the manifest and the stages depending on them are skipped.
pub fn run_end_to_end(cfg: &RunConfig) -> Result<RunManifest, PipelineError> {
    let violations = validate_config(cfg);
    if !violations.is_empty() {
        return Err(PipelineError::Invalid(violations));
    }
    let stage_err =
        |stage: &'static str| move |e: &dyn std::fmt::Display| PipelineError::Stage { stage, reason: e.to_string() };
    let out_dir = cfg.resolve(&cfg.output_dir);
    fs::create_dir_all(&out_dir).map_err(io_err(&out_dir))?;

    let lexicon = match &cfg.lexicon {
        Some(p) => FrequencyLexicon::load(cfg.resolve(p), None).map_err(|e| stage_err("lexicon")(&e))?,
        None => FrequencyLexicon::builtin(),
    };
    let formula = match &cfg.formula {
        Some(p) => FormulaConfig::load(cfg.resolve(p)).map_err(|e| stage_err("formula")(&e))?,
        None => FormulaConfig::default(),
    };

    // fresh working copy of the corpus
    let corpus_path = out_dir.join("corpus.jsonl");
    let initial = match &cfg.corpus {
        Some(p) => {
            let src = cfg.resolve(p);
            fs::read(&src).map_err(io_err(&src))?
        }
        None => Vec::new(),
    };
    write(&corpus_path, &initial)?;
    let mut store = PassageStore::open(&corpus_path).map_err(|e| stage_err("corpus")(&e))?;

    let gw_cfg = cfg.gateway_config().map_err(|e| stage_err("gateway")(&e))?;
    let (provider, clock): (Arc<dyn CompletionProvider>, Arc<dyn Clock>) =
        match (&cfg.provider.mock, &cfg.provider.http) {
            (Some(m), _) => (Arc::new(MockProvider::new(m.clone())), Arc::new(FixedClock::epoch())),
            (_, Some(h)) => (Arc::new(HttpProvider::from_config(h)), Arc::new(SystemClock)),
            _ => unreachable!("validated"),
        };
    let mut gateway = Gateway::new(provider.clone(), gw_cfg).with_clock(clock.clone());
    if let (Some(dir), None) = (&cfg.gateway.cache_dir, &cfg.provider.mock) {
        let dir = cfg.resolve(dir);
        gateway = gateway.with_cache(ResponseCache::open(&dir).map_err(io_err(&dir))?);
    } else if cfg.gateway.cache_dir.is_some() {
        log::info!("response cache is not used with the mock provider");
    }

    let plan = cfg.plan(Some(&store)).map_err(|e| stage_err("batch")(&e))?;
    let mut stages = Vec::new();
    let mut outputs = BTreeMap::new();
    let created_at = clock.now();

    let outcome = run_batch(&plan, &gateway, &lexicon, &formula, Some(&mut store));
    let mut manifest = RunManifest {
        config_digest: cfg.digest(),
        provider: provider.describe(),
        created_at,
        batch_id: plan.batch_id(),
        planned: plan.planned_total(),
        candidate_count: 0,
        gaps: Vec::new(),
        conditions: Vec::new(),
        band: None,
        selected_ids: Vec::new(),
        review_packet: None,
        total_tokens: 0,
        total_cost_usd: String::new(),
        network_calls: 0,
        cache_hits: 0,
        stages: Vec::new(),
        outputs: BTreeMap::new(),
    };
    let outcome = match outcome {
        Ok(o) => {
            let detail = (!o.gaps.is_empty()).then(|| format!("{} of {} cells failed", o.gaps.len(), o.planned));
            let state = if o.candidates.is_empty() { StageState::Failed } else { StageState::Ok };
            stages.push(stage("batch", state, detail));
            Some(o).filter(|o| !o.candidates.is_empty())
        }
        Err(e) => {
            stages.push(stage("batch", StageState::Failed, Some(e.to_string())));
            None
        }
    };

    if let Some(outcome) = outcome {
        manifest.candidate_count = outcome.candidates.len();
        manifest.gaps = outcome.gaps.clone();
        let selected = select_stage(cfg, &store, &lexicon, &formula, &outcome.candidates);
        match selected {
            Ok((policy, picked)) => {
                stages.push(stage("select", StageState::Ok, None));
                if let Err(e) = record_selection(&mut store, &outcome.batch_id, &picked) {
                    stages.push(stage("record", StageState::Failed, Some(e.to_string())));
                }
                manifest.band = Some(BandSummary {
                    reference_score: policy.reference_score,
                    halfwidth: policy.band_halfwidth,
                    lower: policy.bounds().0,
                    upper: policy.bounds().1,
                    sd_source: policy.sd_source,
                });
                manifest.selected_ids = picked.iter().filter(|c| c.selected).map(|c| c.passage.id.clone()).collect();
                manifest.conditions = summarize_conditions(&picked);
                write_batch_files(&out_dir, &outcome.batch_id, &picked, Some(&policy), &mut outputs)?;

                if !cfg.review.export {
                    stages.push(stage("review", StageState::Skipped, Some("disabled".into())));
                } else if manifest.selected_ids.is_empty() {
                    stages.push(stage("review", StageState::Skipped, Some("no candidate selected".into())));
                } else {
                    let dir = out_dir.join("review");
                    match export_packet(&manifest.selected_ids, &store, &dir, clock.as_ref()) {
                        Ok(packet) => {
                            manifest.review_packet = Some(packet.packet_id);
                            outputs.insert("review_manifest".into(), "review/manifest.json".into());
                            stages.push(stage("review", StageState::Ok, None));
                        }
                        Err(e) => stages.push(stage("review", StageState::Failed, Some(e.to_string()))),
                    }
                }
            }
            Err(e) => {
                stages.push(stage("select", StageState::Failed, Some(e)));
                stages.push(stage("review", StageState::Skipped, Some("selection failed".into())));
                manifest.conditions = summarize_conditions(&outcome.candidates);
                write_batch_files(&out_dir, &outcome.batch_id, &outcome.candidates, None, &mut outputs)?;
            }
        }
    } else {
        stages.push(stage("select", StageState::Skipped, Some("batch failed".into())));
        stages.push(stage("review", StageState::Skipped, Some("batch failed".into())));
    }

    let ledger = gateway.ledger();
    manifest.total_tokens = ledger.total_tokens;
    manifest.total_cost_usd = ledger.total_cost.exact_string();
    manifest.network_calls = gateway.network_calls();
    manifest.cache_hits = gateway.cache_hits();
    manifest.stages = stages;
    outputs.insert("corpus".into(), "corpus.jsonl".into());
    manifest.outputs = outputs;

    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write(&out_dir.join(MANIFEST_FILE), json + "\n")?;
    Ok(manifest)
}

fn score_passage(text: &str, lexicon: &FrequencyLexicon, formula: &FormulaConfig) -> Result<f64, String> {
    let t = tokenize(text).map_err(|e| e.to_string())?;
    Ok(difficulty_score(&t, lexicon, formula).score)
}

fn select_stage(
    cfg: &RunConfig,
    store: &PassageStore,
    lexicon: &FrequencyLexicon,
    formula: &FormulaConfig,
    candidates: &[selection::ScoredCandidate],
) -> Result<(SelectionPolicy, Vec<selection::ScoredCandidate>), String> {
    let s = &cfg.selection;
    let reference_score = match (&s.reference_score, &s.reference_passage) {
        (Some(x), _) => *x,
        (None, Some(id)) => {
            let p = store.get(id).ok_or_else(|| format!("reference passage `{id}` is missing"))?;
            score_passage(&p.text, lexicon, formula)?
        }
        (None, None) => return Err("no reference score".into()),
    };
    let pool: Vec<f64> = match s.sd_source {
        SdSource::CandidateBatch => candidates.iter().filter(|c| !c.is_discarded()).map(|c| c.score()).collect(),
        SdSource::ReferencePool => match (&s.pool_scores, &s.pool_tag) {
            (Some(p), _) => p.clone(),
            (None, Some(tag)) => store
                .load_pool(Some(tag))
                .passages
                .iter()
                .map(|p| score_passage(&p.text, lexicon, formula))
                .collect::<Result<_, _>>()?,
            (None, None) => return Err("no reference pool".into()),
        },
    };
    let band_halfwidth = compute_band(&pool).map_err(|e| e.to_string())?;
    let policy = SelectionPolicy {
        reference_score,
        band_halfwidth,
        sd_source: s.sd_source,
        max_selected: s.max_selected,
        tie_break: s.tie_break,
    };
    let picked = selection::select(candidates.to_vec(), &policy).map_err(|e| e.to_string())?;
    Ok((policy, picked))
}

fn write_batch_files(
    out_dir: &Path,
    batch_id: &str,
    candidates: &[selection::ScoredCandidate],
    policy: Option<&SelectionPolicy>,
    outputs: &mut BTreeMap<String, String>,
) -> Result<(), PipelineError> {
    let csv_rel = format!("batch/{batch_id}.csv");
    let mut buf = Vec::new();
    selection::write_csv(&mut buf, candidates)
        .map_err(|e| PipelineError::Stage { stage: "batch", reason: e.to_string() })?;
    write(&out_dir.join(&csv_rel), buf)?;
    let svg_rel = format!("batch/{batch_id}.svg");
    write(&out_dir.join(&svg_rel), render_strip_chart(candidates, policy, &format!("Difficulty scores, {batch_id}")))?;
    let json_rel = format!("batch/{batch_id}.json");
    let json = serde_json::to_string_pretty(candidates).expect("candidates serialize");
    write(&out_dir.join(&json_rel), json + "\n")?;
    outputs.insert("batch_csv".into(), csv_rel);
    outputs.insert("batch_plot".into(), svg_rel);
    outputs.insert("batch_candidates".into(), json_rel);
    Ok(())
}
