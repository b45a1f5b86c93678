//! Text difficulty analysis.
//!
//! The difficulty score is a versioned linear composite of a syntax measure
//! (mean sentence length in words) and a semantics measure (mean negative
//! log10 relative word frequency against a [`FrequencyLexicon`]). The
//! Flesch-Kincaid grade is provided as an independent cross-check.

mod lexicon;
mod score;
mod syllables;
mod tokenize;

pub use lexicon::FrequencyLexicon;
pub use score::{difficulty_score, flesch_kincaid_grade, DifficultyReport, FormulaConfig};
pub use syllables::{count_syllables, token_syllables};
pub use tokenize::{tokenize, tokenize_with, Abbreviations, Token, TokenizedText};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ReadabilityError {
    #[error("text is empty")]
    EmptyText,
    #[error("text contains no word tokens")]
    NoWords,
    #[error("`{0}` is not an alphabetic word")]
    NonAlphabetic(String),
    #[error("lexicon line {line}: {reason}")]
    LexiconFormat { line: usize, reason: String },
    #[error("lexicon is empty")]
    EmptyLexicon,
    #[error("formula config: {0}")]
    Formula(String),
    #[error("I/O error: {0}")]
    Io(String),
}
