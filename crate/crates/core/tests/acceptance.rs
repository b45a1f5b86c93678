//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

mod common;

use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use chrono::{TimeZone, Utc};
use passage_core::clock::FixedClock;
use passage_core::corpus::{Genre, Passage, PassageStore, Provenance};
use passage_core::llm::{estimate_cost, CostLedger, Gateway, GatewayConfig, MockProvider, RetryPolicy, Usd};
use passage_core::pipeline::{run_end_to_end, RunConfig, MANIFEST_FILE};
use passage_core::prompting::{render_prompt, PromptSpec};
use passage_core::readability::{count_syllables, FormulaConfig, FrequencyLexicon};
use passage_core::review::{export_packet, fraction_changed, import_edits, token_edit_distance};
use passage_core::selection::{
    compute_band, record_selection, run_batch, select, BatchPlan, PlannedCondition, RequestDefaults, SdSource,
    SelectionPolicy, TieBreak,
};
use passage_core::survey::{
    mad_time_filter, read_percentage_tables, read_responses, render_report, summarize, CategoryShares, LikertSummary,
    SurveyDefinition,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

type Criterion = (&'static str, fn() -> Check, Option<Duration>);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)*) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)*));
        }
    };
}

fn prompt_fidelity() -> Check {
    let cases = common::golden_cases();
    for (file, spec) in &cases {
        let got = render_prompt(spec).map_err(|e| format!("{file}: {e}"))?.text;
        let want = common::fixture(file);
        if got != want {
            let at = got.bytes().zip(want.bytes()).position(|(a, b)| a != b).unwrap_or(got.len().min(want.len()));
            return Err(format!("{file} differs at byte {at}"));
        }
    }
    Ok(format!("{} golden prompts byte-identical", cases.len()))
}

fn cost_arithmetic() -> Check {
    let ledger = CostLedger::davinci();
    let cost = |t| estimate_cost(&ledger, t).map_err(|e| e.to_string());
    ensure!(cost(1000)? == Usd::from_cents(2), "1000 tokens cost {}", cost(1000)?.exact_string());
    ensure!(cost(0)? == Usd::ZERO, "0 tokens cost {}", cost(0)?.exact_string());
    ensure!(cost(2500)? == Usd::from_cents(5), "2500 tokens cost {}", cost(2500)?.exact_string());
    ensure!(estimate_cost(&ledger, -1).is_err(), "negative tokens accepted");
    Ok("1000 -> $0.02, 0 -> $0, 2500 -> $0.05 (exact)".into())
}

fn grid_plan() -> BatchPlan {
    let hints = common::BEES_SECTIONS;
    let conditions = vec![
        ("one-shot-initial", PromptSpec::one_shot_initial(Genre::Informational, common::ants()).with_age(10)),
        (
            "one-shot-detailed",
            PromptSpec::one_shot_detailed(Genre::Informational, "Bees", common::ants())
                .with_section_hints(hints)
                .with_age(10),
        ),
        (
            "zero-shot-detailed",
            PromptSpec::zero_shot_detailed(Genre::Informational, "Bees").with_section_hints(hints).with_age(10),
        ),
        ("zero-shot-no-age", PromptSpec::zero_shot_detailed(Genre::Informational, "Bees").with_section_hints(hints)),
    ];
    BatchPlan {
        conditions: conditions
            .into_iter()
            .map(|(label, spec)| PlannedCondition { label: label.into(), spec })
            .collect(),
        temperatures: vec![0.5, 0.7, 0.9],
        replications: 10,
        request_defaults: RequestDefaults::default(),
        discard: false,
        long_form: None,
    }
}

fn selection_soundness() -> Check {
    let plan = grid_plan();
    let lex = FrequencyLexicon::builtin();
    let formula = FormulaConfig::default();
    let sd = compute_band(&[500.0, 560.0, 620.0]).map_err(|e| e.to_string())?;
    ensure!(sd == 60.0, "pool SD is {sd}, expected 60");
    let policy = SelectionPolicy {
        reference_score: 560.0,
        band_halfwidth: sd,
        sd_source: SdSource::ReferencePool,
        max_selected: None,
        tie_break: TieBreak::ClosestScore,
    };
    let (mut below, mut inside, mut above) = (0usize, 0usize, 0usize);
    for seed in 0..100u64 {
        let gateway = Gateway::new(
            Arc::new(MockProvider::seeded(seed)),
            GatewayConfig { retry: RetryPolicy::no_delay(1), ..GatewayConfig::default() },
        )
        .with_clock(Arc::new(FixedClock::epoch()));
        let outcome = run_batch(&plan, &gateway, &lex, &formula, None).map_err(|e| format!("seed {seed}: {e}"))?;
        ensure!(
            outcome.candidates.len() == 120 && outcome.gaps.is_empty(),
            "seed {seed}: {} candidates, {} gaps",
            outcome.candidates.len(),
            outcome.gaps.len()
        );
        let picked = select(outcome.candidates, &policy).map_err(|e| e.to_string())?;
        for c in &picked {
            let s = c.score();
            let expected = (500.0..=620.0).contains(&s);
            ensure!(c.selected == expected, "seed {seed}: {} score {s:.3} selected={}", c.passage.id, c.selected);
            match s {
                s if s < 500.0 => below += 1,
                s if s > 620.0 => above += 1,
                _ => inside += 1,
            }
        }
    }
    ensure!(inside > 0 && above > 0, "scores do not straddle the band: {below} below, {inside} in, {above} above");
    Ok(format!(
        "100 seeds x 120 candidates; selected == scores in [500, 620] ({below} below, {inside} in band, {above} above)"
    ))
}

fn readability_properties() -> Check {
    let (lex, vocab) = common::props::shared();
    let formula = FormulaConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(20230101);
    for case in 0..1000 {
        let n_sentences = rng.random_range(1..12);
        let sentences: Vec<Vec<usize>> = (0..n_sentences)
            .map(|_| (0..rng.random_range(1..25)).map(|_| rng.random_range(0..3000)).collect())
            .collect();
        let ctx = |e: String| format!("case {case}: {e}");
        common::props::merge_never_lowers(vocab, &sentences, rng.random_range(0..100), lex, &formula).map_err(ctx)?;
        common::props::rarer_word_never_lowers(vocab, &sentences, rng.random_range(0..1000), lex, &formula)
            .map_err(ctx)?;
        common::props::deterministic(vocab, &sentences, lex, &formula).map_err(ctx)?;
        let len = rng.random_range(1..16);
        let word: String = (0..len).map(|_| rng.random_range(b'a'..=b'z') as char).collect();
        common::props::syllable_floor(&word).map_err(ctx)?;
    }
    let oracle = common::syllable_oracle();
    let mut agree = 0;
    for c in &oracle {
        let got = count_syllables(&c.word).map_err(|e| e.to_string())?;
        if got == c.syllables {
            agree += 1;
        } else {
            ensure!(!c.pinned, "pinned word {}: heuristic {got}, dictionary {}", c.word, c.syllables);
        }
    }
    let pct = 100.0 * agree as f64 / oracle.len() as f64;
    ensure!(oracle.len() == 50 && pct >= 90.0, "syllable agreement {agree}/{}", oracle.len());
    let pinned = oracle.iter().filter(|c| c.pinned).count();
    Ok(format!("1000 random cases hold; syllables {agree}/50 ({pct:.0}%), {pinned} pinned words exact"))
}

fn mad_qc() -> Check {
    let oracle = mad_time_filter(&[100.0, 102.0, 98.0, 105.0, 300.0], 2.5).map_err(|e| e.to_string())?;
    ensure!(oracle.flags == [false, false, false, false, true], "flags {:?}", oracle.flags);
    let z = oracle.robust_z[4];
    ensure!((z - 44.5).abs() < 0.05, "robust z of 300 is {z}");

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for case in 0..500 {
        let n = rng.random_range(3..40);
        let times: Vec<f64> = (0..n).map(|_| rng.random_range(1..5000) as f64).collect();
        let base = mad_time_filter(&times, 2.5).map_err(|e| e.to_string())?;
        let shift = rng.random_range(-500..5000) as f64;
        let moved: Vec<f64> = times.iter().map(|t| t + shift).collect();
        ensure!(
            mad_time_filter(&moved, 2.5).map_err(|e| e.to_string())?.flags == base.flags,
            "case {case}: translation by {shift} changed flags"
        );
        let k = 2f64.powi(rng.random_range(-3..6));
        let scaled: Vec<f64> = times.iter().map(|t| t * k).collect();
        ensure!(
            mad_time_filter(&scaled, 2.5).map_err(|e| e.to_string())?.flags == base.flags,
            "case {case}: scaling by {k} changed flags"
        );
        let k = rng.random_range(0.01..100.0);
        let scaled: Vec<f64> = times.iter().map(|t| t * k).collect();
        let other = mad_time_filter(&scaled, 2.5).map_err(|e| e.to_string())?;
        for (a, b) in base.robust_z.iter().zip(&other.robust_z) {
            ensure!((a - b).abs() <= 1e-9 * a.abs().max(1.0), "case {case}: z {a} vs {b} after scaling by {k}");
        }
    }

    let flat = mad_time_filter(&[120.0, 120.0, 120.0, 500.0], 2.5).map_err(|e| e.to_string())?;
    ensure!(flat.degenerate && flat.flags.iter().all(|f| !f), "zero MAD flagged {:?}", flat.flags);
    Ok(format!("oracle flags only 300 (z = {z:.2}); 500 randomized invariance cases; MAD 0 flags none"))
}

fn row_agree(s: &LikertSummary, item: &str, passage: &str) -> Result<(i64, [i64; 4]), String> {
    let r = s.row(item, passage).ok_or_else(|| format!("{}: no row {item}/{passage}", s.survey))?;
    Ok((r.shares.agreement(), r.shares.display()))
}

fn likert_reporting() -> Check {
    let input = fs::File::open(common::fixture_path("survey/reported_percentages.csv")).map_err(|e| e.to_string())?;
    let tables = read_percentage_tables(input, None).map_err(|e| e.to_string())?;
    let find = |name: &str| tables.iter().find(|t| t.survey == name).ok_or_else(|| format!("no survey {name}"));
    let bees = find("bees-ants")?;
    let amazon = find("amazon-antarctica")?;
    let coco = find("coco-charlotte")?;
    let (a, _) = row_agree(bees, "adequacy", "bees")?;
    let (b, _) = row_agree(bees, "adequacy", "ants")?;
    ensure!((a, b) == (92, 96), "bees/ants adequacy {a} vs {b}");
    let (a, da) = row_agree(amazon, "adequacy", "amazon")?;
    let (b, db) = row_agree(amazon, "adequacy", "antarctica")?;
    ensure!(
        (a, b, da[3], db[3]) == (97, 97, 38, 54),
        "amazon/antarctica adequacy {a}/{b}, strongly agree {}/{}",
        da[3],
        db[3]
    );
    let (a, _) = row_agree(coco, "engagement", "coco")?;
    let (b, _) = row_agree(coco, "engagement", "charlotte")?;
    ensure!((a, b) == (94, 74), "coco/charlotte engagement {a} vs {b}");

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let files = render_report(&tables, dir.path()).map_err(|e| e.to_string())?;
    let table = fs::read_to_string(dir.path().join("amazon-antarctica.txt")).map_err(|e| e.to_string())?;
    let line = |item: &str, passage: &str| {
        table
            .lines()
            .find(|l| l.split_whitespace().take(2).eq([item, passage]))
            .map(|l| l.split_whitespace().skip(2).collect::<Vec<_>>())
    };
    ensure!(
        line("adequacy", "amazon") == Some(vec!["1", "2", "59", "38", "3", "97"]),
        "rendered amazon adequacy row {:?}",
        line("adequacy", "amazon")
    );
    ensure!(files.tables.len() == 3 && files.charts.len() == 3, "report files {files:?}");

    // 50 synthetic raters, one item answered {1, 1, 23, 25} across the scale.
    let def = SurveyDefinition::standard("synthetic", "gen", "orig");
    let mut csv = String::from("rater_id,completion_seconds,attention");
    for passage in ["gen", "orig"] {
        for i in 0..def.items.len() {
            csv.push_str(&format!(",{}", def.column(i, passage)));
        }
    }
    csv.push('\n');
    let answers: Vec<u8> =
        [(1u8, 1), (2, 1), (3, 23), (4, 25)].iter().flat_map(|&(v, n)| std::iter::repeat_n(v, n)).collect();
    for (r, a) in answers.iter().enumerate() {
        csv.push_str(&format!("r{r},300,2"));
        for _ in 0..2 * def.items.len() {
            csv.push_str(&format!(",{a}"));
        }
        csv.push('\n');
    }
    let responses = read_responses(csv.as_bytes(), &def).map_err(|e| e.to_string())?;
    let summary = summarize(responses.iter(), &def).map_err(|e| e.to_string())?;
    let (agree, _) = row_agree(&summary, "adequacy", "gen")?;
    ensure!(summary.n_valid == Some(50) && agree == 96, "synthetic agreement {agree} over {:?}", summary.n_valid);
    ensure!(
        CategoryShares::from_counts([1, 1, 23, 25]).map_err(|e| e.to_string())?.agreement() == 96,
        "direct shares disagree"
    );
    Ok("92 vs 96, 97/97 (SA 38 vs 54), 94 vs 74; {1,1,23,25} -> 96%".into())
}

const RUN_CONFIG: &str = r#"
output_dir = "out"

[provider.mock]
seed = 42

[batch]
temperatures = [0.5, 0.7, 0.9]
replications = 10

[[batch.conditions]]
label = "zero-shot-detailed"
mode = "zero_shot_detailed"
genre = "informational"
topic = "Bees"
section_hints = "bees' body, their honey production, social life and importance to ecosystem"
audience_age = 10

[[batch.conditions]]
label = "story"
mode = "zero_shot_detailed"
genre = "literary"
topic = "a girl who finds a lost puppy"
audience_age = 10

[selection]
reference_score = 560.0
pool_scores = [500.0, 560.0, 620.0]
"#;

fn end_to_end_determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = RunConfig::parse(RUN_CONFIG, dir.path()).map_err(|e| e.to_string())?;
    let manifest_path = dir.path().join("out").join(MANIFEST_FILE);
    let first = run_end_to_end(&cfg).map_err(|e| e.to_string())?;
    let bytes1 = fs::read(&manifest_path).map_err(|e| e.to_string())?;
    let second = run_end_to_end(&cfg).map_err(|e| e.to_string())?;
    let bytes2 = fs::read(&manifest_path).map_err(|e| e.to_string())?;
    ensure!(bytes1 == bytes2, "manifests differ between runs");
    ensure!(
        first.network_calls == 0 && second.network_calls == 0,
        "network calls {} / {}",
        first.network_calls,
        second.network_calls
    );
    ensure!(first.succeeded(), "run did not succeed: {:?}", first.stages);
    Ok(format!(
        "{} candidates, {} selected; manifest byte-identical ({} bytes), 0 network calls",
        first.candidate_count,
        first.selected_ids.len(),
        bytes1.len()
    ))
}

fn edit_distance() -> Check {
    let words: Vec<String> = (0..100).map(|i| format!("word{i}")).collect();
    let original = words.join(" ");
    let mut changed = words.clone();
    changed[37] = "different".into();
    let changed = changed.join(" ");
    let d = token_edit_distance(&original, &changed);
    let f = fraction_changed(&original, &changed);
    ensure!(d == 1 && f == 0.01, "one substitution gave distance {d}, fraction {f}");

    // Identity round trip through export and import.
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut store = PassageStore::open(dir.path().join("corpus.jsonl")).map_err(|e| e.to_string())?;
    let clock = FixedClock::epoch();
    let passage = Passage::new(
        "cand-1",
        "Bees",
        original.clone(),
        Genre::Informational,
        Provenance::Generated,
        Utc.timestamp_opt(0, 0).unwrap(),
    );
    store.store_passage(passage.clone()).map_err(|e| e.to_string())?;
    let candidate = passage_core::selection::ScoredCandidate {
        passage,
        report: passage_core::readability::difficulty_score(
            &passage_core::readability::tokenize(&original).map_err(|e| e.to_string())?,
            &FrequencyLexicon::builtin(),
            &FormulaConfig::default(),
        ),
        condition_label: "c".into(),
        temperature: 0.7,
        replicate_index: 0,
        selected: true,
    };
    record_selection(&mut store, "batch-x", &[candidate]).map_err(|e| e.to_string())?;
    let packet_dir = dir.path().join("packet");
    let packet = export_packet(&["cand-1".to_owned()], &store, &packet_dir, &clock).map_err(|e| e.to_string())?;
    let report = import_edits(&packet, &packet_dir, &mut store, "Editor", &clock).map_err(|e| e.to_string())?;
    let r = report.records.first().ok_or("identity import produced no record")?;
    ensure!(
        report.is_complete() && r.token_edit_distance == 0 && r.fraction_changed == 0.0,
        "identity import gave distance {}, fraction {}",
        r.token_edit_distance,
        r.fraction_changed
    );
    Ok("1 substitution in 100 tokens -> 1 / 0.01; identity import -> 0".into())
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("prompt fidelity", prompt_fidelity, Some(Duration::from_secs(1))),
        ("cost arithmetic", cost_arithmetic, None),
        ("selection soundness", selection_soundness, Some(Duration::from_secs(10))),
        ("readability properties", readability_properties, Some(Duration::from_secs(30))),
        ("MAD QC oracle", mad_qc, None),
        ("Likert reporting", likert_reporting, None),
        ("end-to-end determinism", end_to_end_determinism, Some(Duration::from_secs(20))),
        ("edit-distance oracle", edit_distance, None),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, check, limit)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let result = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| (*s).to_owned()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let elapsed = start.elapsed();
        let result = match (result, limit) {
            (Ok(_), Some(limit)) if elapsed > limit => Err(format!("took {elapsed:.2?}, limit {limit:?}")),
            (r, _) => r,
        };
        match result {
            Ok(detail) => println!("PASS {} {name}: {detail} [{elapsed:.2?}]", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {} {name}: {why} [{elapsed:.2?}]", i + 1);
            }
        }
    }
    println!("{} of 8 criteria passed", 8 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
