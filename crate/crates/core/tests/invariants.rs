use std::collections::BTreeMap;

use chrono::{TimeZone, Utc};
use num_rational::Ratio;
use passage_core::corpus::{Genre, Passage, Provenance};
use passage_core::readability::DifficultyReport;
use passage_core::review::{fraction_changed, token_edit_distance};
use passage_core::selection::{select, ScoredCandidate, SdSource, SelectionPolicy, TieBreak};
use passage_core::survey::{mad_time_filter, round_half_up, CategoryShares};
use proptest::prelude::*;

fn candidate(label: &str, temperature: f64, rep: u32, score: f64, discard: bool) -> ScoredCandidate {
    let id = format!("b-{label}-t{temperature:.2}-r{rep:02}");
    let mut passage =
        Passage::new(id, "t", "text", Genre::Informational, Provenance::Generated, Utc.timestamp_opt(0, 0).unwrap());
    if discard {
        passage = passage.with_tags(["discard"]);
    }
    ScoredCandidate {
        passage,
        report: DifficultyReport {
            score,
            mean_sentence_length: 0.0,
            mean_log_frequency: 0.0,
            syllables_per_word: 0.0,
            formula_version: "v".into(),
            components_breakdown: BTreeMap::new(),
        },
        condition_label: label.to_owned(),
        temperature,
        replicate_index: rep,
        selected: false,
    }
}

/// A grid of unique cells with arbitrary scores and occasional discards.
fn grid() -> impl Strategy<Value = Vec<ScoredCandidate>> {
    prop::collection::vec((300.0f64..900.0, prop::bool::weighted(0.1)), 1..60).prop_map(|cells| {
        cells
            .into_iter()
            .enumerate()
            .map(|(i, (score, discard))| {
                let label = ["a", "b", "c"][i % 3];
                let temperature = [0.5, 0.7, 0.9][(i / 3) % 3];
                candidate(label, temperature, (i / 9) as u32, score, discard)
            })
            .collect()
    })
}

fn policy(reference: f64, halfwidth: f64, max: Option<usize>) -> SelectionPolicy {
    SelectionPolicy {
        reference_score: reference,
        band_halfwidth: halfwidth,
        sd_source: SdSource::ReferencePool,
        max_selected: max,
        tie_break: TieBreak::ClosestScore,
    }
}

proptest! {
    #[test]
    fn selected_iff_in_band_and_not_discarded(cs in grid(), reference in 400.0f64..800.0, hw in 1.0f64..200.0) {
        let p = policy(reference, hw, None);
        for c in select(cs, &p).unwrap() {
            let expected = !c.is_discarded() && (c.score() - reference).abs() <= hw;
            prop_assert_eq!(c.selected, expected, "{} score {}", c.passage.id, c.score());
        }
    }

    #[test]
    fn selection_ignores_input_order(cs in grid(), seed in any::<u64>(), max in prop::option::of(0usize..10)) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let p = policy(600.0, 80.0, max);
        let mut shuffled = cs.clone();
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(select(cs, &p).unwrap(), select(shuffled, &p).unwrap());
    }

    #[test]
    fn capped_selection_keeps_the_closest(cs in grid(), max in 0usize..10) {
        let uncapped = select(cs.clone(), &policy(600.0, 80.0, None)).unwrap();
        let capped = select(cs, &policy(600.0, 80.0, Some(max))).unwrap();
        let eligible = uncapped.iter().filter(|c| c.selected).count();
        prop_assert_eq!(capped.iter().filter(|c| c.selected).count(), eligible.min(max));
        let worst_kept = capped
            .iter()
            .filter(|c| c.selected)
            .map(|c| (c.score() - 600.0).abs())
            .fold(0.0, f64::max);
        for (u, c) in uncapped.iter().zip(&capped) {
            prop_assert!(!c.selected || u.selected);
            if u.selected && !c.selected {
                prop_assert!((u.score() - 600.0).abs() >= worst_kept);
            }
        }
    }

    #[test]
    fn mad_flags_survive_translation(times in prop::collection::vec(1i64..10_000, 3..40), shift in -500i64..10_000) {
        let base: Vec<f64> = times.iter().map(|&t| t as f64).collect();
        let moved: Vec<f64> = times.iter().map(|&t| (t + shift) as f64).collect();
        let (a, b) = (mad_time_filter(&base, 2.5).unwrap(), mad_time_filter(&moved, 2.5).unwrap());
        prop_assert_eq!(a.flags, b.flags);
        prop_assert_eq!(a.degenerate, b.degenerate);
    }

    #[test]
    fn mad_scores_survive_positive_scaling(times in prop::collection::vec(1i64..10_000, 3..40), k in 0.01f64..100.0, pow in 0i32..8) {
        let base: Vec<f64> = times.iter().map(|&t| t as f64).collect();
        let a = mad_time_filter(&base, 2.5).unwrap();
        // Powers of two scale exactly, so flags match bit for bit.
        let exact: Vec<f64> = base.iter().map(|t| t * 2f64.powi(pow)).collect();
        prop_assert_eq!(&a.flags, &mad_time_filter(&exact, 2.5).unwrap().flags);
        let scaled: Vec<f64> = base.iter().map(|t| t * k).collect();
        let b = mad_time_filter(&scaled, 2.5).unwrap();
        for (za, zb) in a.robust_z.iter().zip(&b.robust_z) {
            prop_assert!((za - zb).abs() <= 1e-9 * za.abs().max(1.0));
        }
    }

    #[test]
    fn higher_threshold_flags_a_subset(times in prop::collection::vec(1.0f64..10_000.0, 3..40), lo in 0.5f64..5.0, extra in 0.0f64..5.0) {
        let a = mad_time_filter(&times, lo).unwrap();
        let b = mad_time_filter(&times, lo + extra).unwrap();
        for (fa, fb) in a.flags.iter().zip(&b.flags) {
            prop_assert!(!fb || *fa);
        }
    }

    #[test]
    fn edit_distance_is_a_metric(a in prop::collection::vec("[a-d]{1,3}", 0..30), b in prop::collection::vec("[a-d]{1,3}", 0..30), c in prop::collection::vec("[a-d]{1,3}", 0..30)) {
        let (a, b, c) = (a.join(" "), b.join(" "), c.join(" "));
        let d = |x: &str, y: &str| token_edit_distance(x, y);
        prop_assert_eq!(d(&a, &a), 0);
        prop_assert_eq!(d(&a, &b), d(&b, &a));
        prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c));
        let longest = a.split_whitespace().count().max(b.split_whitespace().count());
        prop_assert!(d(&a, &b) <= longest);
        let f = fraction_changed(&a, &b);
        prop_assert!((0.0..=1.0).contains(&f));
    }

    #[test]
    fn shares_conserve_the_whole(counts in prop::array::uniform4(0u64..200)) {
        prop_assume!(counts.iter().sum::<u64>() > 0);
        let s = CategoryShares::from_counts(counts).unwrap();
        prop_assert_eq!(s.percent.iter().copied().sum::<Ratio<i64>>(), Ratio::from_integer(100));
        prop_assert_eq!(s.agreement_exact() + s.disagreement_exact(), Ratio::from_integer(100));
        for (exact, shown) in s.percent.iter().zip(s.display()) {
            let err = Ratio::from_integer(shown) - exact;
            prop_assert!(err > Ratio::new(-1, 2) && err <= Ratio::new(1, 2));
        }
        prop_assert!((s.agreement() + s.disagreement() - 100).abs() <= 1);
    }

    #[test]
    fn half_up_rounding(n in -10_000i64..10_000, d in 1i64..500) {
        let x = Ratio::new(n, d);
        let r = round_half_up(x);
        prop_assert!(Ratio::from_integer(r) - x <= Ratio::new(1, 2));
        prop_assert!(Ratio::from_integer(r) - x > Ratio::new(-1, 2));
    }
}
