//! Command implementations. Each returns `Ok(true)` only on full success.

use std::fs;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use passage_core::clock::{Clock, FixedClock, SystemClock};
use passage_core::corpus::{Genre, Passage, PassageStore, Provenance};
use passage_core::llm::{
    CompletionProvider, Gateway, GatewayConfig, HttpProvider, MockProvider, ResponseCache, RetryPolicy,
};
use passage_core::pipeline::{run_end_to_end, validate_config, RunConfig};
use passage_core::prompting::{ContextBudget, Exemplar, PromptSpec, TemplateSet};
use passage_core::readability::{difficulty_score, flesch_kincaid_grade, tokenize, FormulaConfig, FrequencyLexicon};
use passage_core::review::{export_packet, import_edits, ReviewPacket};
use passage_core::selection::{
    self, compute_band, record_selection, render_strip_chart, run_batch, summarize_conditions, BatchOutcome, BatchPlan,
    ScoredCandidate, SdSource, SelectionPolicy, TieBreak,
};
use passage_core::survey::{
    read_percentage_tables, read_responses, render_report, render_table, run_qc, summarize, MadConfig, SurveyDefinition,
};

use crate::cli::*;

/// Stdout writes that fail (closed pipe) instead of panicking.
macro_rules! out {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        write!(std::io::stdout().lock(), $($arg)*)?
    }};
}

macro_rules! outln {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        writeln!(std::io::stdout().lock(), $($arg)*)?
    }};
}

impl From<GenreArg> for Genre {
    fn from(g: GenreArg) -> Self {
        match g {
            GenreArg::Literary => Genre::Literary,
            GenreArg::Informational => Genre::Informational,
        }
    }
}

impl From<ProvenanceArg> for Provenance {
    fn from(p: ProvenanceArg) -> Self {
        match p {
            ProvenanceArg::Reference => Provenance::Reference,
            ProvenanceArg::Generated => Provenance::Generated,
            ProvenanceArg::Edited => Provenance::Edited,
        }
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

/// JSON, or TOML when the extension says so.
fn load_doc<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = read(path)?;
    if path.extension().is_some_and(|e| e == "toml") {
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    } else {
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

fn open_store(path: &Path) -> Result<PassageStore> {
    PassageStore::open(path).with_context(|| format!("opening store {}", path.display()))
}

pub fn dispatch(cmd: Command) -> Result<bool> {
    match cmd {
        Command::Corpus(c) => corpus(c),
        Command::Prompt(c) => prompt(c),
        Command::Batch(BatchCmd::Run { plan, store, out, provider }) => {
            batch_run(&plan, store.as_deref(), &out, &provider)
        }
        Command::Batch(BatchCmd::Select(args)) | Command::Select(args) => select(&args),
        Command::Batch(BatchCmd::Summary { candidates, plot, reference_score, halfwidth }) => {
            batch_summary(&candidates, plot.as_deref(), reference_score.zip(halfwidth))
        }
        Command::Score(args) => score(&args),
        Command::Review(c) => review(c),
        Command::Survey(c) => survey(c),
        Command::Run(args) => run(&args),
    }
}

fn corpus(cmd: CorpusCmd) -> Result<bool> {
    match cmd {
        CorpusCmd::Add { store, id, title, genre, provenance, parent, tags, text_file } => {
            let mut s = open_store(&store)?;
            let text = read(&text_file)?;
            let mut p =
                Passage::new(id, title, text, genre.into(), provenance.into(), SystemClock.now()).with_tags(tags);
            if let Some(parent) = parent {
                p = p.with_parent(parent);
            }
            let id = s.store_passage(p)?;
            outln!("{id}");
        }
        CorpusCmd::List { store, provenance, tag } => {
            let s = open_store(&store)?;
            let want: Option<Provenance> = provenance.map(Into::into);
            for p in s.passages() {
                if want.is_some_and(|w| w != p.provenance) {
                    continue;
                }
                if tag.as_deref().is_some_and(|t| !p.has_tag(t)) {
                    continue;
                }
                let sel = if s.is_selected(&p.id) { "selected" } else { "-" };
                outln!("{}\t{}\t{}\t{sel}\t{}", p.id, p.provenance.as_str(), p.genre.as_str(), p.title);
            }
        }
        CorpusCmd::Show { store, id } => {
            let s = open_store(&store)?;
            let lineage = s.lineage(&id)?;
            let out = serde_json::json!({
                "passage": lineage[0],
                "selected": s.is_selected(&id),
                "lineage": lineage.iter().map(|p| &p.id).collect::<Vec<_>>(),
            });
            outln!("{}", serde_json::to_string_pretty(&out)?);
        }
    }
    Ok(true)
}

fn prompt(cmd: PromptCmd) -> Result<bool> {
    let PromptCmd::Render { spec, store, exemplar, context_tokens, reserve } = cmd;
    let mut spec: PromptSpec = load_doc(&spec)?;
    if let (Some(store), Some(id)) = (store, exemplar) {
        let s = PassageStore::open_read_only(&store).with_context(|| format!("opening {}", store.display()))?;
        let p = s.get(&id).with_context(|| format!("`{id}` is not in the store"))?;
        spec.exemplar = Some(Exemplar::from(p));
    }
    let rendered = TemplateSet::default().render(&spec)?;
    if let Some(context_tokens) = context_tokens {
        ContextBudget { context_tokens, reserved_for_completion: reserve }.check(&rendered.text)?;
    }
    out!("{}", rendered.text);
    if !rendered.text.ends_with('\n') {
        outln!("");
    }
    Ok(true)
}

fn score(args: &ScoreArgs) -> Result<bool> {
    let text = read(&args.file)?;
    let lexicon = match &args.lexicon {
        Some(p) => FrequencyLexicon::load(p, None)?,
        None => FrequencyLexicon::builtin(),
    };
    let formula = match &args.formula {
        Some(p) => FormulaConfig::load(p)?,
        None => FormulaConfig::default(),
    };
    let tokens = tokenize(&text)?;
    let report = difficulty_score(&tokens, &lexicon, &formula);
    if args.json {
        let out = serde_json::json!({
            "report": report,
            "flesch_kincaid_grade": flesch_kincaid_grade(&tokens),
            "words": tokens.word_count,
            "sentences": tokens.sentence_count,
        });
        outln!("{}", serde_json::to_string_pretty(&out)?);
    } else {
        outln!("score\t{:.1}", report.score);
        outln!("mean_sentence_length\t{:.2}", report.mean_sentence_length);
        outln!("mean_log_frequency\t{:.3}", report.mean_log_frequency);
        outln!("flesch_kincaid_grade\t{:.1}", flesch_kincaid_grade(&tokens));
        outln!("words\t{}", tokens.word_count);
        outln!("sentences\t{}", tokens.sentence_count);
    }
    Ok(true)
}

fn gateway(args: &ProviderArgs) -> Result<Gateway> {
    let cfg = GatewayConfig {
        retry: RetryPolicy { max_attempts: args.max_attempts, ..RetryPolicy::default() },
        in_flight_limit: args.in_flight,
        ..GatewayConfig::default()
    };
    let provider: Arc<dyn CompletionProvider> = match (&args.sel.mock_seed, &args.sel.endpoint) {
        (Some(seed), _) => Arc::new(MockProvider::seeded(*seed)),
        (_, Some(endpoint)) => {
            let key = std::env::var(&args.api_key_env).ok().filter(|k| !k.is_empty());
            Arc::new(HttpProvider::new(endpoint, key, Duration::from_secs(120)))
        }
        _ => bail!("choose --mock-seed or --endpoint"),
    };
    let mut g = Gateway::new(provider, cfg);
    if args.sel.mock_seed.is_some() {
        g = g.with_clock(Arc::new(FixedClock::epoch()));
    }
    if let Some(dir) = &args.cache_dir {
        g = g.with_cache(ResponseCache::open(dir).with_context(|| format!("opening cache {}", dir.display()))?);
    }
    Ok(g)
}

fn write_candidates_csv(path: &Path, candidates: &[ScoredCandidate]) -> Result<()> {
    let mut buf = Vec::new();
    selection::write_csv(&mut buf, candidates)?;
    write(path, buf)
}

fn batch_run(plan: &Path, store: Option<&Path>, out: &Path, provider: &ProviderArgs) -> Result<bool> {
    let plan: BatchPlan = load_doc(plan)?;
    let g = gateway(provider)?;
    let mut store = store.map(open_store).transpose()?;
    let outcome = run_batch(&plan, &g, &FrequencyLexicon::builtin(), &FormulaConfig::default(), store.as_mut())?;
    let json = out.join(format!("{}.json", outcome.batch_id));
    write(&json, serde_json::to_string_pretty(&outcome)? + "\n")?;
    write_candidates_csv(&out.join(format!("{}.csv", outcome.batch_id)), &outcome.candidates)?;
    let ledger = g.ledger();
    outln!(
        "{}: {} of {} candidates, {} gaps, {} tokens, {}",
        outcome.batch_id,
        outcome.candidates.len(),
        outcome.planned,
        outcome.gaps.len(),
        ledger.total_tokens,
        ledger.total_cost.display_cents()
    );
    for gap in &outcome.gaps {
        eprintln!("gap: {} t={} rep={}: {}", gap.condition_label, gap.temperature, gap.replicate_index, gap.error);
    }
    outln!("{}", json.display());
    Ok(outcome.gaps.is_empty())
}

/// Accepts a batch outcome or a bare candidate list.
fn load_candidates(path: &Path) -> Result<(String, Vec<ScoredCandidate>)> {
    let text = read(path)?;
    if let Ok(o) = serde_json::from_str::<BatchOutcome>(&text) {
        return Ok((o.batch_id, o.candidates));
    }
    let cs: Vec<ScoredCandidate> =
        serde_json::from_str(&text).with_context(|| format!("{} is not a candidate file", path.display()))?;
    let batch = cs
        .first()
        .and_then(|c| c.passage.tags.iter().find_map(|t| t.strip_prefix("batch:")))
        .unwrap_or("batch")
        .to_owned();
    Ok((batch, cs))
}

fn passage_score(store: &PassageStore, id: &str) -> Result<f64> {
    let p = store.get(id).with_context(|| format!("`{id}` is not in the store"))?;
    let t = tokenize(&p.text)?;
    Ok(difficulty_score(&t, &FrequencyLexicon::builtin(), &FormulaConfig::default()).score)
}

fn select(args: &SelectArgs) -> Result<bool> {
    let (batch_id, candidates) = load_candidates(&args.candidates)?;
    let mut store = args.store.as_deref().map(open_store).transpose()?;
    let reference_score = match (&args.reference_score, &args.reference_passage, &store) {
        (Some(x), _, _) => *x,
        (None, Some(id), Some(s)) => passage_score(s, id)?,
        _ => bail!("--reference-score or --reference-passage with --store is required"),
    };
    let sd_source = match args.sd_source {
        SdSourceArg::ReferencePool => SdSource::ReferencePool,
        SdSourceArg::CandidateBatch => SdSource::CandidateBatch,
    };
    let pool: Vec<f64> = match sd_source {
        SdSource::CandidateBatch => candidates.iter().filter(|c| !c.is_discarded()).map(|c| c.score()).collect(),
        SdSource::ReferencePool => match (&args.pool_scores, &args.pool_tag, &store) {
            (Some(p), _, _) => p.clone(),
            (None, Some(tag), Some(s)) => {
                s.load_pool(Some(tag)).passages.iter().map(|p| passage_score(s, &p.id)).collect::<Result<_>>()?
            }
            _ => bail!("--pool-scores or --pool-tag with --store is required for the reference pool"),
        },
    };
    let policy = SelectionPolicy {
        reference_score,
        band_halfwidth: compute_band(&pool)?,
        sd_source,
        max_selected: args.max_selected,
        tie_break: match args.tie_break {
            TieBreakArg::ClosestScore => TieBreak::ClosestScore,
            TieBreakArg::EarliestReplicate => TieBreak::EarliestReplicate,
        },
    };
    let picked = selection::select(candidates, &policy)?;
    if let Some(s) = store.as_mut() {
        record_selection(s, &batch_id, &picked)?;
    }
    let (lo, hi) = policy.bounds();
    let json = args.out.join(format!("{batch_id}.selected.json"));
    write(&json, serde_json::to_string_pretty(&picked)? + "\n")?;
    write_candidates_csv(&args.out.join(format!("{batch_id}.selected.csv")), &picked)?;
    let n = picked.iter().filter(|c| c.selected).count();
    outln!(
        "band [{lo:.1}, {hi:.1}] (reference {reference_score:.1} ± {:.1}): {n} of {} selected",
        policy.band_halfwidth,
        picked.len()
    );
    for c in picked.iter().filter(|c| c.selected) {
        outln!("{}\t{:.1}", c.passage.id, c.score());
    }
    Ok(true)
}

fn batch_summary(candidates: &Path, plot: Option<&Path>, band: Option<(f64, f64)>) -> Result<bool> {
    let (batch_id, cs) = load_candidates(candidates)?;
    if cs.is_empty() {
        bail!("{} holds no candidates", candidates.display());
    }
    outln!("condition\tn\tselected\tmean\tsd\tmin\tmedian\tmax");
    for s in summarize_conditions(&cs) {
        let sd = s.sd.map(|v| format!("{v:.1}")).unwrap_or_else(|| "-".into());
        outln!(
            "{}\t{}\t{}\t{:.1}\t{sd}\t{:.1}\t{:.1}\t{:.1}",
            s.label,
            s.n,
            s.selected,
            s.mean,
            s.min,
            s.median,
            s.max
        );
    }
    if let Some(path) = plot {
        let policy = band.map(|(reference_score, band_halfwidth)| SelectionPolicy {
            reference_score,
            band_halfwidth,
            sd_source: SdSource::ReferencePool,
            max_selected: None,
            tie_break: TieBreak::ClosestScore,
        });
        if let Some(p) = &policy {
            p.validate()?;
        }
        write(path, render_strip_chart(&cs, policy.as_ref(), &format!("Difficulty scores, {batch_id}")))?;
        outln!("{}", path.display());
    }
    Ok(true)
}

fn review(cmd: ReviewCmd) -> Result<bool> {
    match cmd {
        ReviewCmd::Export { store, ids, batch, out } => {
            let s = open_store(&store)?;
            let ids = match batch {
                Some(b) => s
                    .selection_marks()
                    .iter()
                    .filter(|m| m.batch_id == b && m.selected)
                    .map(|m| m.passage_id.clone())
                    .collect(),
                None => ids,
            };
            let packet = export_packet(&ids, &s, &out, &SystemClock)?;
            outln!("{}: {} items in {}", packet.packet_id, packet.items.len(), out.display());
            Ok(true)
        }
        ReviewCmd::Import { store, packet, editor } => {
            let mut s = open_store(&store)?;
            let manifest = ReviewPacket::load(&packet)?;
            let report = import_edits(&manifest, &packet, &mut s, &editor, &SystemClock)?;
            for r in &report.records {
                outln!("{}\t{}\t{}\t{:.3}", r.edited_id, r.candidate_id, r.token_edit_distance, r.fraction_changed);
            }
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            for f in &report.failures {
                eprintln!("failed: {}: {}", f.candidate_id, f.error);
            }
            Ok(report.is_complete())
        }
    }
}

fn load_survey(input: &SurveyInput) -> Result<(SurveyDefinition, Vec<passage_core::survey::SurveyResponse>)> {
    let def = SurveyDefinition::standard(&input.name, &input.generated, &input.original);
    let f = fs::File::open(&input.responses).with_context(|| format!("opening {}", input.responses.display()))?;
    let responses = read_responses(f, &def)?;
    Ok((def, responses))
}

fn mad(threshold: f64) -> MadConfig {
    MadConfig { threshold, ..MadConfig::default() }
}

fn survey(cmd: SurveyCmd) -> Result<bool> {
    match cmd {
        SurveyCmd::Qc(input) => {
            let (def, responses) = load_survey(&input)?;
            let qc = run_qc(&responses, &def, &mad(input.threshold))?;
            for w in &qc.warnings {
                eprintln!("warning: {w}");
            }
            outln!("{}", serde_json::to_string_pretty(&qc.outcomes)?);
            eprintln!("{} of {} raters excluded", qc.excluded(), responses.len());
            Ok(true)
        }
        SurveyCmd::Summarize(input) => {
            let (def, responses) = load_survey(&input)?;
            let qc = run_qc(&responses, &def, &mad(input.threshold))?;
            for w in &qc.warnings {
                eprintln!("warning: {w}");
            }
            let summary = summarize(qc.valid(&responses), &def)?;
            out!("{}", render_table(&summary));
            Ok(true)
        }
        SurveyCmd::Report { percentages, n, responses, generated, original, name, threshold, out } => {
            let summaries = match (percentages, responses) {
                (Some(p), _) => {
                    let f = fs::File::open(&p).with_context(|| format!("opening {}", p.display()))?;
                    read_percentage_tables(f, n)?
                }
                (None, Some(r)) => {
                    let input = SurveyInput {
                        responses: r,
                        generated: generated.unwrap_or_default(),
                        original: original.unwrap_or_default(),
                        name,
                        threshold,
                    };
                    let (def, responses) = load_survey(&input)?;
                    let qc = run_qc(&responses, &def, &mad(threshold))?;
                    vec![summarize(qc.valid(&responses), &def)?]
                }
                (None, None) => bail!("--percentages or --responses is required"),
            };
            let files = render_report(&summaries, &out)?;
            for s in &summaries {
                out!("{}", render_table(s));
            }
            outln!("{}", files.csv.display());
            Ok(true)
        }
    }
}

fn run(args: &RunArgs) -> Result<bool> {
    let cfg = RunConfig::load(&args.config)?;
    if args.check {
        let v = validate_config(&cfg);
        for line in &v {
            outln!("{line}");
        }
        return Ok(v.is_empty());
    }
    let manifest = run_end_to_end(&cfg)?;
    let out_dir = cfg.resolve(&cfg.output_dir);
    for s in &manifest.stages {
        let detail = s.detail.as_deref().map(|d| format!(": {d}")).unwrap_or_default();
        eprintln!("{}: {:?}{detail}", s.stage, s.state);
    }
    outln!(
        "{} candidates, {} selected, {} tokens (${}), {} network calls",
        manifest.candidate_count,
        manifest.selected_ids.len(),
        manifest.total_tokens,
        manifest.total_cost_usd,
        manifest.network_calls
    );
    outln!("{}", out_dir.join(passage_core::pipeline::MANIFEST_FILE).display());
    Ok(manifest.succeeded())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plan_loads_from_json_or_toml() {
        let dir = tempfile::tempdir().unwrap();
        let json = dir.path().join("plan.json");
        let toml = dir.path().join("plan.toml");
        fs::write(
            &json,
            r#"{"conditions":[{"label":"z","spec":{"mode":"zero_shot_detailed","genre":"informational","topic":"Bees"}}],"temperatures":[0.7],"replications":2}"#,
        )
        .unwrap();
        fs::write(
            &toml,
            "temperatures = [0.7]\nreplications = 2\n[[conditions]]\nlabel = \"z\"\n[conditions.spec]\nmode = \"zero_shot_detailed\"\ngenre = \"informational\"\ntopic = \"Bees\"\n",
        )
        .unwrap();
        let a: BatchPlan = load_doc(&json).unwrap();
        let b: BatchPlan = load_doc(&toml).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.planned_total(), 2);
    }

    #[test]
    fn candidates_file_shapes() {
        let dir = tempfile::tempdir().unwrap();
        let outcome =
            BatchOutcome { batch_id: "batch-abc".into(), planned: 0, candidates: Vec::new(), gaps: Vec::new() };
        let a = dir.path().join("a.json");
        fs::write(&a, serde_json::to_string(&outcome).unwrap()).unwrap();
        assert_eq!(load_candidates(&a).unwrap().0, "batch-abc");
        let b = dir.path().join("b.json");
        fs::write(&b, "[]").unwrap();
        assert_eq!(load_candidates(&b).unwrap(), ("batch".to_owned(), Vec::new()));
        let c = dir.path().join("c.json");
        fs::write(&c, "{\"nope\": 1}").unwrap();
        assert!(load_candidates(&c).is_err());
    }
}
