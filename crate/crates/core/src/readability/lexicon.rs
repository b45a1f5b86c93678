use std::collections::HashMap;
use std::fs;
use std::path::Path;

use super::ReadabilityError;

/// Word frequency counts used by the semantics measure.
///
/// Lookups are case-insensitive. A word missing from the table falls back to
/// its stem after removing a possessive or one regular inflection
/// (`-s`, `-es`, `-ed`, `-ing`, `-ly`); if that also misses, `floor_count` is used.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyLexicon {
    entries: HashMap<String, u64>,
    total_count: u64,
    floor_count: u64,
    source_id: String,
}

impl FrequencyLexicon {
    /// Parses `word<TAB>count` lines. Blank lines and `#` comments are skipped.
    ///
    /// With `floor_count = None` the floor is half the smallest entry count (at least 1).
    pub fn parse(text: &str, source_id: impl Into<String>, floor_count: Option<u64>) -> Result<Self, ReadabilityError> {
        let mut entries = HashMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |reason: &str| ReadabilityError::LexiconFormat { line: n + 1, reason: reason.to_owned() };
            let (word, count) = line.split_once('\t').ok_or_else(|| bad("expected word<TAB>count"))?;
            let word = word.trim().to_lowercase();
            if word.is_empty() {
                return Err(bad("empty word"));
            }
            let count: u64 = count.trim().parse().map_err(|_| bad("count is not a non-negative integer"))?;
            if count == 0 {
                return Err(bad("count must be at least 1"));
            }
            *entries.entry(word).or_insert(0) += count;
        }
        if entries.is_empty() {
            return Err(ReadabilityError::EmptyLexicon);
        }
        let min = entries.values().copied().min().unwrap_or(1);
        let floor_count = floor_count.unwrap_or(min / 2).max(1);
        Ok(FrequencyLexicon { total_count: entries.values().sum(), entries, floor_count, source_id: source_id.into() })
    }

    pub fn load(path: impl AsRef<Path>, floor_count: Option<u64>) -> Result<Self, ReadabilityError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| ReadabilityError::Io(format!("{}: {e}", path.display())))?;
        let source = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        Self::parse(&text, source, floor_count)
    }

    /// The shipped lexicon (`data/lexicon.tsv`).
    pub fn builtin() -> Self {
        Self::parse(include_str!("../../data/lexicon.tsv"), "builtin-zipf-v1", None)
            .expect("shipped lexicon is well-formed")
    }

    pub fn total_count(&self) -> u64 {
        self.total_count
    }

    pub fn floor_count(&self) -> u64 {
        self.floor_count
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Exact-table count, without stemming or floor.
    pub fn entry(&self, word: &str) -> Option<u64> {
        self.entries.get(&word.to_lowercase()).copied()
    }

    pub fn words(&self) -> impl Iterator<Item = (&str, u64)> {
        self.entries.iter().map(|(w, &c)| (w.as_str(), c))
    }

    pub fn count(&self, word: &str) -> u64 {
        let lower = word.to_lowercase().replace('\u{2019}', "'");
        if let Some(&c) = self.entries.get(&lower) {
            return c;
        }
        self.stem_candidates(&lower).find_map(|stem| self.entries.get(&stem).copied()).unwrap_or(self.floor_count)
    }

    /// log10 of the word's relative frequency (non-positive).
    pub fn log_relative_frequency(&self, word: &str) -> f64 {
        self.log_frequency_of_count(self.count(word))
    }

    pub(crate) fn log_frequency_of_count(&self, count: u64) -> f64 {
        (count as f64 / self.total_count.max(count) as f64).log10()
    }

    fn stem_candidates(&self, w: &str) -> impl Iterator<Item = String> {
        let mut out = Vec::new();
        if let Some(s) = w.strip_suffix("'s").or_else(|| w.strip_suffix('\'')) {
            out.push(s.to_owned());
        }
        for suffix in ["ing", "ed", "es", "ly", "s"] {
            if let Some(stem) = w.strip_suffix(suffix).filter(|s| s.len() >= 2) {
                out.push(stem.to_owned());
                if suffix == "ing" || suffix == "ed" {
                    out.push(format!("{stem}e"));
                }
            }
        }
        out.into_iter()
    }
}
