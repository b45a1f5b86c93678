//! Rater survey: instrument, response ingestion, QC and agreement summaries.
//!
//! Raters judge a pair of passages (one generated, one original) on five
//! 4-point Likert items. Responses come in as CSV, one row per rater:
//! `rater_id, completion_seconds, attention, item_<k>_<passage>...`, where
//! `k` is the 1-based item number. Further columns are kept as
//! qualification flags.

mod qc;
mod report;
mod summary;

use std::collections::BTreeMap;
use std::io::Read;

use serde::{Deserialize, Serialize};

pub use qc::{
    attention_filter, mad_time_filter, mad_time_filter_with, run_qc, MadConfig, MadOutcome, QcOutcome, QcReason,
    QcReport,
};
pub use report::{render_diverging_svg, render_report, render_table, write_summary_csv, ReportFiles};
pub use summary::{
    read_percentage_tables, round_half_up, summarize, CategoryShares, DisplayRow, ItemRow, LikertSummary,
};

/// Labels of the four response categories, lowest first.
pub const SCALE: [&str; 4] = ["strongly disagree", "disagree", "agree", "strongly agree"];

#[derive(Debug, thiserror::Error)]
pub enum SurveyError {
    #[error("invalid survey definition: {0}")]
    Definition(String),
    #[error("row {row}: {reason}")]
    Response { row: usize, reason: String },
    #[error("MAD filter needs at least 3 completion times, got {0}")]
    TooFewTimes(usize),
    #[error("threshold must be positive and finite, got {0}")]
    Threshold(f64),
    #[error("no valid responses to summarize")]
    Empty,
    #[error("invalid summary input: {0}")]
    Summary(String),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Keying {
    Positive,
    /// Agreement is unfavourable; reported raw, annotated in reports.
    Negative,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurveyItem {
    pub id: String,
    pub prompt: String,
    pub keyed: Keying,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttentionItem {
    /// 1-based position among the items where the check is shown.
    pub position: usize,
    pub prompt: String,
    /// Category (1-4) an attentive rater picks.
    pub expected: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurveyDefinition {
    pub name: String,
    pub items: Vec<SurveyItem>,
    pub attention: AttentionItem,
    /// (generated, original) passage ids, in display order.
    pub passages: (String, String),
}

fn item(id: &str, prompt: &str, keyed: Keying) -> SurveyItem {
    SurveyItem { id: id.into(), prompt: prompt.into(), keyed }
}

/// The five statements every passage is rated on.
pub fn standard_items() -> Vec<SurveyItem> {
    vec![
        item("adequacy", "The story is written at an adequate reading level for a fourth grader", Keying::Positive),
        item("coherence", "The story is written in a coherent manner", Keying::Positive),
        item("main_topic", "Children will be able to identify the main topic of the story", Keying::Positive),
        item("distracting", "There are confusing or distracting elements in the story", Keying::Negative),
        item("engagement", "This story can engage children to answer questions", Keying::Positive),
    ]
}

impl SurveyDefinition {
    pub fn standard(name: impl Into<String>, generated: impl Into<String>, original: impl Into<String>) -> Self {
        SurveyDefinition {
            name: name.into(),
            items: standard_items(),
            attention: AttentionItem {
                position: 3,
                prompt: "To show that you are reading carefully, please select \"disagree\" here".into(),
                expected: 2,
            },
            passages: (generated.into(), original.into()),
        }
    }

    pub fn validate(&self) -> Result<(), SurveyError> {
        let bad = |m: String| Err(SurveyError::Definition(m));
        if self.items.is_empty() {
            return bad("at least one item is required".into());
        }
        for (i, it) in self.items.iter().enumerate() {
            if it.id.trim().is_empty() {
                return bad(format!("item {} has an empty id", i + 1));
            }
            if self.items[..i].iter().any(|o| o.id == it.id) {
                return bad(format!("duplicate item id `{}`", it.id));
            }
        }
        if !(1..=4).contains(&self.attention.expected) {
            return bad(format!("attention answer {} is not on the 4-point scale", self.attention.expected));
        }
        if self.attention.position == 0 || self.attention.position > self.items.len() + 1 {
            return bad(format!("attention position {} is out of range", self.attention.position));
        }
        if self.passages.0.is_empty() || self.passages.1.is_empty() || self.passages.0 == self.passages.1 {
            return bad("the two passages must be distinct and non-empty".into());
        }
        Ok(())
    }

    pub fn passage_ids(&self) -> [&str; 2] {
        [&self.passages.0, &self.passages.1]
    }

    /// CSV column holding the answer to item `index` (0-based) for `passage`.
    pub fn column(&self, index: usize, passage: &str) -> String {
        format!("item_{}_{passage}", index + 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyResponse {
    pub rater_id: String,
    pub completion_seconds: f64,
    #[serde(default)]
    pub attention_answer: Option<u8>,
    /// passage id → item id → category (1-4). Missing answers are absent.
    pub answers: BTreeMap<String, BTreeMap<String, u8>>,
    #[serde(default)]
    pub qualification_flags: BTreeMap<String, String>,
}

impl SurveyResponse {
    pub fn answer(&self, passage: &str, item_id: &str) -> Option<u8> {
        self.answers.get(passage).and_then(|m| m.get(item_id)).copied()
    }

    /// True if every item has an answer for both passages.
    pub fn is_complete(&self, def: &SurveyDefinition) -> bool {
        def.passage_ids().iter().all(|p| def.items.iter().all(|it| self.answer(p, &it.id).is_some()))
    }
}

fn parse_category(raw: &str, row: usize, column: &str) -> Result<Option<u8>, SurveyError> {
    let raw = raw.trim();
    if raw.is_empty() {
        return Ok(None);
    }
    match raw.parse::<u8>() {
        Ok(v @ 1..=4) => Ok(Some(v)),
        _ => Err(SurveyError::Response { row, reason: format!("{column}: `{raw}` is not a category 1-4") }),
    }
}

/// Parses the response CSV against `def`.
///
/// Empty cells are missing answers. Out-of-range categories, non-positive
/// completion times and item columns that do not belong to the definition
/// are errors.
pub fn read_responses<R: Read>(input: R, def: &SurveyDefinition) -> Result<Vec<SurveyResponse>, SurveyError> {
    def.validate()?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = rdr.headers()?.clone();
    for required in ["rater_id", "completion_seconds", "attention"] {
        if !headers.iter().any(|h| h == required) {
            return Err(SurveyError::Response { row: 1, reason: format!("missing column `{required}`") });
        }
    }
    enum Col {
        Rater,
        Time,
        Attention,
        Item { passage: String, item_id: String },
        Flag(String),
    }
    let mut cols = Vec::with_capacity(headers.len());
    for h in headers.iter() {
        let col = match h {
            "rater_id" => Col::Rater,
            "completion_seconds" => Col::Time,
            "attention" => Col::Attention,
            _ => match h.strip_prefix("item_") {
                Some(rest) => {
                    let (num, passage) = rest.split_once('_').ok_or_else(|| SurveyError::Response {
                        row: 1,
                        reason: format!("column `{h}` is not item_<k>_<passage>"),
                    })?;
                    let k: usize = num.parse().map_err(|_| SurveyError::Response {
                        row: 1,
                        reason: format!("column `{h}` has a non-numeric item number"),
                    })?;
                    let Some(it) = k.checked_sub(1).and_then(|i| def.items.get(i)) else {
                        return Err(SurveyError::Response { row: 1, reason: format!("column `{h}`: no item {k}") });
                    };
                    if !def.passage_ids().contains(&passage) {
                        return Err(SurveyError::Response {
                            row: 1,
                            reason: format!("column `{h}`: passage `{passage}` is not under review"),
                        });
                    }
                    Col::Item { passage: passage.to_owned(), item_id: it.id.clone() }
                }
                None => Col::Flag(h.to_owned()),
            },
        };
        cols.push(col);
    }

    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        let mut resp = SurveyResponse {
            rater_id: String::new(),
            completion_seconds: f64::NAN,
            attention_answer: None,
            answers: BTreeMap::new(),
            qualification_flags: BTreeMap::new(),
        };
        for (col, (value, header)) in cols.iter().zip(rec.iter().zip(headers.iter())) {
            match col {
                Col::Rater => resp.rater_id = value.to_owned(),
                Col::Time => {
                    resp.completion_seconds = value.parse().map_err(|_| SurveyError::Response {
                        row,
                        reason: format!("completion_seconds `{value}` is not a number"),
                    })?
                }
                Col::Attention => resp.attention_answer = parse_category(value, row, header)?,
                Col::Item { passage, item_id } => {
                    if let Some(v) = parse_category(value, row, header)? {
                        resp.answers.entry(passage.clone()).or_default().insert(item_id.clone(), v);
                    }
                }
                Col::Flag(name) => {
                    resp.qualification_flags.insert(name.clone(), value.to_owned());
                }
            }
        }
        if resp.rater_id.is_empty() {
            return Err(SurveyError::Response { row, reason: "rater_id is empty".into() });
        }
        if !(resp.completion_seconds.is_finite() && resp.completion_seconds > 0.0) {
            return Err(SurveyError::Response {
                row,
                reason: format!("completion time {} must be positive", resp.completion_seconds),
            });
        }
        out.push(resp);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn def() -> SurveyDefinition {
        SurveyDefinition::standard("bees-ants", "bees", "ants")
    }

    #[test]
    fn standard_definition_is_valid() {
        let d = def();
        d.validate().unwrap();
        assert_eq!(d.items.len(), 5);
        assert_eq!(d.items.iter().filter(|i| i.keyed == Keying::Negative).count(), 1);
        assert_eq!(d.items[3].id, "distracting");
    }

    #[test]
    fn reads_rows() {
        let csv = "rater_id,completion_seconds,attention,item_1_bees,item_1_ants,degree\n\
                   r1,120.5,2,3,4,BA\n\
                   r2,99,,1,,\n";
        let rs = read_responses(csv.as_bytes(), &def()).unwrap();
        assert_eq!(rs.len(), 2);
        assert_eq!(rs[0].answer("bees", "adequacy"), Some(3));
        assert_eq!(rs[0].answer("ants", "adequacy"), Some(4));
        assert_eq!(rs[0].qualification_flags["degree"], "BA");
        assert_eq!(rs[1].attention_answer, None);
        assert_eq!(rs[1].answer("ants", "adequacy"), None);
        assert!(!rs[0].is_complete(&def()));
    }

    #[test]
    fn rejects_bad_cells() {
        let bad_cat = "rater_id,completion_seconds,attention,item_1_bees\nr1,10,2,5\n";
        assert!(matches!(read_responses(bad_cat.as_bytes(), &def()), Err(SurveyError::Response { row: 2, .. })));
        let bad_time = "rater_id,completion_seconds,attention\nr1,0,2\n";
        assert!(read_responses(bad_time.as_bytes(), &def()).is_err());
        let bad_col = "rater_id,completion_seconds,attention,item_9_bees\n";
        assert!(read_responses(bad_col.as_bytes(), &def()).is_err());
        let bad_passage = "rater_id,completion_seconds,attention,item_1_wasps\n";
        assert!(read_responses(bad_passage.as_bytes(), &def()).is_err());
    }
}
