//! Fixtures and helpers shared by the integration tests and the acceptance target.
#![allow(dead_code)]

use std::fs;
use std::path::PathBuf;

use passage_core::corpus::Genre;
use passage_core::prompting::{Exemplar, PromptSpec};

pub const BEES_SECTIONS: &str = "bees' body, their honey production, social life and importance to ecosystem";

pub fn fixture_path(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(rel)
}

pub fn fixture(rel: &str) -> String {
    let path = fixture_path(rel);
    fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

pub fn ants() -> Exemplar {
    Exemplar { passage_id: Some("ants".into()), title: "Ants".into(), text: fixture("prompts/ants_excerpt.txt") }
}

/// (golden file, spec) for the three informational prompt shapes, with and without the age clause.
pub fn golden_cases() -> Vec<(&'static str, PromptSpec)> {
    let initial = PromptSpec::one_shot_initial(Genre::Informational, ants());
    let detailed =
        PromptSpec::one_shot_detailed(Genre::Informational, "Bees", ants()).with_section_hints(BEES_SECTIONS);
    let zero = PromptSpec::zero_shot_detailed(Genre::Informational, "Bees").with_section_hints(BEES_SECTIONS);
    vec![
        ("prompts/one_shot_initial_no_age.txt", initial.clone()),
        ("prompts/one_shot_initial_age10.txt", initial.with_age(10)),
        ("prompts/one_shot_detailed_no_age.txt", detailed.clone()),
        ("prompts/one_shot_detailed_age10.txt", detailed.with_age(10)),
        ("prompts/zero_shot_detailed_no_age.txt", zero.clone()),
        ("prompts/zero_shot_detailed_age10.txt", zero.with_age(10)),
    ]
}

pub struct SyllableCase {
    pub word: String,
    pub syllables: u32,
    /// Words the heuristic must get right.
    pub pinned: bool,
}

pub fn syllable_oracle() -> Vec<SyllableCase> {
    fixture("readability/syllables.tsv")
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split('\t').collect();
            SyllableCase { word: f[0].to_owned(), syllables: f[1].parse().unwrap(), pinned: f[2] == "yes" }
        })
        .collect()
}

pub mod props {
    use passage_core::readability::{
        count_syllables, difficulty_score, FormulaConfig, FrequencyLexicon, Token, TokenizedText,
    };

    /// Builtin lexicon and its vocabulary, parsed once per test binary.
    pub fn shared() -> &'static (FrequencyLexicon, Vec<(String, u64)>) {
        static SHARED: std::sync::OnceLock<(FrequencyLexicon, Vec<(String, u64)>)> = std::sync::OnceLock::new();
        SHARED.get_or_init(|| {
            let lex = FrequencyLexicon::builtin();
            let v = vocab(&lex);
            (lex, v)
        })
    }

    /// Builtin lexicon words in descending count order, alphabetic only.
    pub fn vocab(lex: &FrequencyLexicon) -> Vec<(String, u64)> {
        let mut v: Vec<(String, u64)> = lex
            .words()
            .filter(|(w, _)| w.chars().all(|c| c.is_ascii_alphabetic()))
            .map(|(w, c)| (w.to_owned(), c))
            .collect();
        v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        v
    }

    pub fn build(vocab: &[(String, u64)], sentences: &[Vec<usize>]) -> TokenizedText {
        TokenizedText::from_sentences(
            sentences
                .iter()
                .map(|s| {
                    s.iter()
                        .map(|&i| {
                            let w = &vocab[i % vocab.len()].0;
                            Token { text: w.clone(), norm: w.clone() }
                        })
                        .collect()
                })
                .collect(),
        )
    }

    fn score(vocab: &[(String, u64)], s: &[Vec<usize>], lex: &FrequencyLexicon, f: &FormulaConfig) -> f64 {
        difficulty_score(&build(vocab, s), lex, f).score
    }

    /// Joining sentence `at` with the next never lowers the score.
    pub fn merge_never_lowers(
        vocab: &[(String, u64)],
        sentences: &[Vec<usize>],
        at: usize,
        lex: &FrequencyLexicon,
        f: &FormulaConfig,
    ) -> Result<(), String> {
        if sentences.len() < 2 {
            return Ok(());
        }
        let at = at % (sentences.len() - 1);
        let mut merged = sentences.to_vec();
        let next = merged.remove(at + 1);
        merged[at].extend(next);
        let (before, after) = (score(vocab, sentences, lex, f), score(vocab, &merged, lex, f));
        if after + 1e-9 < before {
            return Err(format!("merge lowered score {before} -> {after}"));
        }
        Ok(())
    }

    /// Swapping one word for a strictly rarer one never lowers the score.
    pub fn rarer_word_never_lowers(
        vocab: &[(String, u64)],
        sentences: &[Vec<usize>],
        pick: usize,
        lex: &FrequencyLexicon,
        f: &FormulaConfig,
    ) -> Result<(), String> {
        let positions: Vec<(usize, usize)> =
            sentences.iter().enumerate().flat_map(|(i, s)| (0..s.len()).map(move |j| (i, j))).collect();
        let (i, j) = positions[pick % positions.len()];
        let current = sentences[i][j] % vocab.len();
        // vocab is sorted by descending count; move to the first strictly rarer entry.
        let Some(rarer) = (current + 1..vocab.len()).find(|&k| vocab[k].1 < vocab[current].1) else {
            return Ok(());
        };
        let mut swapped = sentences.to_vec();
        swapped[i][j] = rarer;
        let (before, after) = (score(vocab, sentences, lex, f), score(vocab, &swapped, lex, f));
        if after + 1e-9 < before {
            return Err(format!("{} -> {} lowered score {before} -> {after}", vocab[current].0, vocab[rarer].0));
        }
        Ok(())
    }

    pub fn deterministic(
        vocab: &[(String, u64)],
        sentences: &[Vec<usize>],
        lex: &FrequencyLexicon,
        f: &FormulaConfig,
    ) -> Result<(), String> {
        let t = build(vocab, sentences);
        let (a, b) = (difficulty_score(&t, lex, f), difficulty_score(&t.clone(), lex, f));
        if a != b {
            return Err(format!("{a:?} != {b:?}"));
        }
        Ok(())
    }

    pub fn syllable_floor(word: &str) -> Result<(), String> {
        match count_syllables(word) {
            Ok(n) if n >= 1 => Ok(()),
            other => Err(format!("{word}: {other:?}")),
        }
    }
}
