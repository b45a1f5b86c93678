use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::ReadabilityError;

/// Abbreviations whose trailing period does not end a sentence.
#[derive(Debug, Clone)]
pub struct Abbreviations(HashSet<String>);

impl Default for Abbreviations {
    fn default() -> Self {
        Abbreviations::parse(include_str!("../../data/abbreviations.txt"))
    }
}

impl Abbreviations {
    /// One abbreviation per line, without the final period. `#` starts a comment.
    pub fn parse(list: &str) -> Self {
        Abbreviations(
            list.lines()
                .map(|l| l.split('#').next().unwrap_or("").trim().to_lowercase())
                .filter(|l| !l.is_empty())
                .collect(),
        )
    }

    pub fn contains(&self, word: &str) -> bool {
        self.0.contains(&word.to_lowercase())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    /// As written, punctuation trimmed.
    pub text: String,
    /// Lowercased form used for lexicon lookup.
    pub norm: String,
}

impl Token {
    fn new(text: &str) -> Self {
        Token { text: text.to_owned(), norm: text.to_lowercase().replace(['\u{2019}', '\u{2018}'], "'") }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedText {
    pub sentences: Vec<Vec<Token>>,
    pub word_count: usize,
    pub sentence_count: usize,
}

impl TokenizedText {
    /// Builds from pre-split sentences, dropping empty ones.
    pub fn from_sentences(sentences: Vec<Vec<Token>>) -> Self {
        let sentences: Vec<Vec<Token>> = sentences.into_iter().filter(|s| !s.is_empty()).collect();
        TokenizedText { word_count: sentences.iter().map(Vec::len).sum(), sentence_count: sentences.len(), sentences }
    }

    pub fn tokens(&self) -> impl Iterator<Item = &Token> {
        self.sentences.iter().flatten()
    }
}

const CLOSERS: &[char] = &['"', '\'', ')', ']', '}', '\u{201D}', '\u{2019}', '*', '_'];
const DASHES: &[char] = &['\u{2014}', '\u{2013}', '/'];

/// Tokenizes with the shipped abbreviation list.
pub fn tokenize(text: &str) -> Result<TokenizedText, ReadabilityError> {
    tokenize_with(text, &Abbreviations::default())
}

/// Splits `text` into sentences of word tokens.
///
/// Sentences end at `.`, `!` or `?` (optionally followed by closing quotes or
/// brackets), and at blank lines, so headings stand alone. A period does not
/// end a sentence after a listed abbreviation or a single-letter initial.
pub fn tokenize_with(text: &str, abbreviations: &Abbreviations) -> Result<TokenizedText, ReadabilityError> {
    if text.trim().is_empty() {
        return Err(ReadabilityError::EmptyText);
    }
    let mut sentences = Vec::new();
    let mut current: Vec<Token> = Vec::new();
    for paragraph in paragraphs(text) {
        for chunk in paragraph.split_whitespace() {
            let pieces: Vec<&str> = split_dashes(chunk);
            for (i, piece) in pieces.iter().enumerate() {
                let core = piece.trim_matches(|c: char| !c.is_alphanumeric());
                if !core.is_empty() {
                    current.push(Token::new(core));
                }
                if i + 1 == pieces.len() && ends_sentence(piece, core, abbreviations) {
                    sentences.push(std::mem::take(&mut current));
                }
            }
        }
        sentences.push(std::mem::take(&mut current));
    }
    let t = TokenizedText::from_sentences(sentences);
    if t.word_count == 0 {
        return Err(ReadabilityError::NoWords);
    }
    Ok(t)
}

fn paragraphs(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut buf = String::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            if !buf.is_empty() {
                out.push(std::mem::take(&mut buf));
            }
        } else {
            buf.push_str(line);
            buf.push('\n');
        }
    }
    if !buf.is_empty() {
        out.push(buf);
    }
    out
}

fn split_dashes(chunk: &str) -> Vec<&str> {
    chunk.split(DASHES).flat_map(|p| p.split("--")).filter(|p| !p.is_empty()).collect()
}

fn ends_sentence(piece: &str, core: &str, abbreviations: &Abbreviations) -> bool {
    let trimmed = piece.trim_end_matches(CLOSERS);
    let Some(last) = trimmed.chars().last() else {
        return false;
    };
    match last {
        '!' | '?' => true,
        '.' => {
            if trimmed.ends_with("..") {
                return true;
            }
            if core.is_empty() {
                return true;
            }
            let single_initial = core.chars().count() == 1 && core.chars().all(char::is_uppercase);
            !(single_initial || abbreviations.contains(core))
        }
        _ => false,
    }
}
