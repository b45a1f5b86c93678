use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{token_syllables, FrequencyLexicon, ReadabilityError, TokenizedText};

/// Coefficients of the difficulty composite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormulaConfig {
    pub version: String,
    /// Weight on mean sentence length (words per sentence).
    pub sentence_length_weight: f64,
    /// Weight on word rarity, the negated mean log10 relative frequency.
    pub rarity_weight: f64,
    pub intercept: f64,
}

impl Default for FormulaConfig {
    fn default() -> Self {
        Self::from_toml(include_str!("../../data/formula.toml")).expect("shipped formula config is valid")
    }
}

impl FormulaConfig {
    pub fn from_toml(text: &str) -> Result<Self, ReadabilityError> {
        let cfg: FormulaConfig = toml::from_str(text).map_err(|e| ReadabilityError::Formula(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ReadabilityError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| ReadabilityError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), ReadabilityError> {
        if self.version.trim().is_empty() {
            return Err(ReadabilityError::Formula("version is empty".into()));
        }
        for (name, v) in
            [("sentence_length_weight", self.sentence_length_weight), ("rarity_weight", self.rarity_weight)]
        {
            if !(v.is_finite() && v > 0.0) {
                return Err(ReadabilityError::Formula(format!("{name} must be positive and finite")));
            }
        }
        if !self.intercept.is_finite() {
            return Err(ReadabilityError::Formula("intercept must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifficultyReport {
    pub score: f64,
    pub mean_sentence_length: f64,
    /// Mean log10 relative frequency of the words (negative).
    pub mean_log_frequency: f64,
    pub syllables_per_word: f64,
    pub formula_version: String,
    pub components_breakdown: BTreeMap<String, f64>,
}

/// Scores tokenized text:
/// `score = a * mean_sentence_length + b * (-mean_log_frequency) + c`.
pub fn difficulty_score(text: &TokenizedText, lexicon: &FrequencyLexicon, formula: &FormulaConfig) -> DifficultyReport {
    let words = text.word_count.max(1) as f64;
    let sentences = text.sentence_count.max(1) as f64;
    let mean_sentence_length = words / sentences;

    let mut log_sum = 0.0;
    let mut syllables = 0u64;
    let mut oov = 0usize;
    for token in text.tokens() {
        let count = lexicon.count(&token.norm);
        log_sum += lexicon.log_frequency_of_count(count);
        syllables += u64::from(token_syllables(&token.text));
        if count == lexicon.floor_count() && lexicon.entry(&token.norm).is_none() {
            oov += 1;
        }
    }
    let mean_log_frequency = log_sum / words;

    let syntax = formula.sentence_length_weight * mean_sentence_length;
    let semantics = formula.rarity_weight * -mean_log_frequency;
    let score = syntax + semantics + formula.intercept;

    let components_breakdown = BTreeMap::from([
        ("syntax_term".to_owned(), syntax),
        ("semantics_term".to_owned(), semantics),
        ("intercept".to_owned(), formula.intercept),
        ("word_count".to_owned(), text.word_count as f64),
        ("sentence_count".to_owned(), text.sentence_count as f64),
        ("oov_rate".to_owned(), oov as f64 / words),
    ]);

    DifficultyReport {
        score,
        mean_sentence_length,
        mean_log_frequency,
        syllables_per_word: syllables as f64 / words,
        formula_version: formula.version.clone(),
        components_breakdown,
    }
}

/// Flesch-Kincaid grade level: `0.39 * words/sentences + 11.8 * syllables/words - 15.59`.
pub fn flesch_kincaid_grade(text: &TokenizedText) -> f64 {
    let words = text.word_count.max(1) as f64;
    let sentences = text.sentence_count.max(1) as f64;
    let syllables: u64 = text.tokens().map(|t| u64::from(token_syllables(&t.text))).sum();
    0.39 * (words / sentences) + 11.8 * (syllables as f64 / words) - 15.59
}

#[cfg(test)]
mod tests {
    use super::super::tokenize;
    use super::*;

    fn toy_lexicon() -> FrequencyLexicon {
        FrequencyLexicon::parse("the\t600\ncat\t200\nsat\t100\non\t90\nmat\t10\n", "toy", Some(1)).unwrap()
    }

    fn toy_formula() -> FormulaConfig {
        FormulaConfig { version: "toy".into(), sentence_length_weight: 10.0, rarity_weight: 100.0, intercept: 50.0 }
    }

    #[test]
    fn hand_computed_toy_passage() {
        // Two sentences, 9 words: "the cat sat" / "the cat sat on the mat".
        // total = 1000; log10 rel freqs: the -0.2218487 (x3), cat -0.69897 (x2),
        // sat -1 (x2), on -1.0457575, mat -2.
        let t = tokenize("The cat sat. The cat sat on the mat.").unwrap();
        let r = difficulty_score(&t, &toy_lexicon(), &toy_formula());
        let mlf =
            (3.0 * 0.6f64.log10() + 2.0 * 0.2f64.log10() + 2.0 * 0.1f64.log10() + 0.09f64.log10() + 0.01f64.log10())
                / 9.0;
        let expected = 10.0 * 4.5 + 100.0 * -mlf + 50.0;
        assert!((r.mean_sentence_length - 4.5).abs() < 1e-12);
        assert!((r.mean_log_frequency - mlf).abs() < 1e-12);
        assert!((r.score - expected).abs() < 1e-9);
        // Spreadsheet value for the same inputs.
        assert!((r.score - 173.99160).abs() < 1e-4, "{}", r.score);
        assert_eq!(r.formula_version, "toy");
    }

    #[test]
    fn longer_sentences_score_higher() {
        let lex = toy_lexicon();
        let f = toy_formula();
        let short = difficulty_score(&tokenize("The cat sat. The cat sat.").unwrap(), &lex, &f);
        let long = difficulty_score(&tokenize("The cat sat the cat sat.").unwrap(), &lex, &f);
        assert!(long.score > short.score);
    }

    #[test]
    fn rarer_word_scores_higher() {
        let lex = toy_lexicon();
        let f = toy_formula();
        let common = difficulty_score(&tokenize("The cat sat on the cat.").unwrap(), &lex, &f);
        let rare = difficulty_score(&tokenize("The cat sat on the mat.").unwrap(), &lex, &f);
        assert!(rare.score > common.score);
    }

    #[test]
    fn fk_grade_known_value() {
        let t = tokenize("The cat sat on the mat.").unwrap();
        assert!((flesch_kincaid_grade(&t) - (-1.45)).abs() < 1e-9);
    }

    #[test]
    fn formula_validation() {
        assert!(FormulaConfig::from_toml(
            "version = \"x\"\nsentence_length_weight = 0.0\nrarity_weight = 1.0\nintercept = 0.0"
        )
        .is_err());
        assert!(FormulaConfig::from_toml("version = \"x\"").is_err());
        let d = FormulaConfig::default();
        assert!(d.validate().is_ok());
    }
}
