//! Per-item agreement summaries.
//!
//! Shares are exact rationals in percent; rounding to whole percent only
//! happens for display (half up). Agreement is rounded from the exact sum of
//! the two agree categories, not from the rounded parts.

use std::io::Read;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use super::{Keying, SurveyDefinition, SurveyError, SurveyResponse};

pub fn round_half_up(x: Ratio<i64>) -> i64 {
    (x + Ratio::new(1, 2)).floor().to_integer()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CategoryShares {
    /// Raw counts when built from responses.
    pub counts: Option<[u64; 4]>,
    /// Percent per category, lowest category first.
    pub percent: [Ratio<i64>; 4],
}

impl CategoryShares {
    pub fn from_counts(counts: [u64; 4]) -> Result<Self, SurveyError> {
        let n: u64 = counts.iter().sum();
        if n == 0 {
            return Err(SurveyError::Empty);
        }
        Ok(CategoryShares { counts: Some(counts), percent: counts.map(|c| Ratio::new(100 * c as i64, n as i64)) })
    }

    /// Published whole-percent figures; they may sum to 100 ± 2 from rounding.
    pub fn from_percentages(p: [i64; 4]) -> Result<Self, SurveyError> {
        if p.iter().any(|v| !(0..=100).contains(v)) {
            return Err(SurveyError::Summary(format!("percentages {p:?} must lie in 0..=100")));
        }
        let sum: i64 = p.iter().sum();
        if (sum - 100).abs() > 2 {
            return Err(SurveyError::Summary(format!("percentages {p:?} sum to {sum}")));
        }
        Ok(CategoryShares { counts: None, percent: p.map(Ratio::from_integer) })
    }

    pub fn agreement_exact(&self) -> Ratio<i64> {
        self.percent[2] + self.percent[3]
    }

    pub fn disagreement_exact(&self) -> Ratio<i64> {
        self.percent[0] + self.percent[1]
    }

    pub fn display(&self) -> [i64; 4] {
        self.percent.map(round_half_up)
    }

    pub fn agreement(&self) -> i64 {
        round_half_up(self.agreement_exact())
    }

    pub fn disagreement(&self) -> i64 {
        round_half_up(self.disagreement_exact())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ItemRow {
    pub item_id: String,
    pub keyed: Keying,
    pub passage: String,
    pub shares: CategoryShares,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LikertSummary {
    pub survey: String,
    pub passages: (String, String),
    pub n_valid: Option<u64>,
    /// Item order of the definition; generated passage before original.
    pub rows: Vec<ItemRow>,
}

/// Whole-percent view of one row, as written to reports.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DisplayRow {
    pub survey: String,
    pub item: String,
    pub passage: String,
    pub keyed: Keying,
    pub n: Option<u64>,
    pub strongly_disagree: i64,
    pub disagree: i64,
    pub agree: i64,
    pub strongly_agree: i64,
    pub disagreement: i64,
    pub agreement: i64,
}

#[derive(Deserialize)]
struct PercentRecord {
    item: String,
    passage: String,
    strongly_disagree: i64,
    disagree: i64,
    agree: i64,
    strongly_agree: i64,
}

impl LikertSummary {
    pub fn row(&self, item_id: &str, passage: &str) -> Option<&ItemRow> {
        self.rows.iter().find(|r| r.item_id == item_id && r.passage == passage)
    }

    /// Builds a summary from published percentages.
    ///
    /// `table` holds `(item_id, passage, [sd, d, a, sa])`; every item of the
    /// definition must appear once per passage.
    pub fn from_percentages(
        def: &SurveyDefinition,
        n_valid: Option<u64>,
        table: &[(String, String, [i64; 4])],
    ) -> Result<Self, SurveyError> {
        def.validate()?;
        let mut rows = Vec::new();
        for item in &def.items {
            for passage in def.passage_ids() {
                let matches: Vec<_> = table.iter().filter(|(i, p, _)| *i == item.id && p == passage).collect();
                let [(_, _, pct)] = matches.as_slice() else {
                    return Err(SurveyError::Summary(format!(
                        "expected one row for item `{}` / passage `{passage}`, found {}",
                        item.id,
                        matches.len()
                    )));
                };
                rows.push(ItemRow {
                    item_id: item.id.clone(),
                    keyed: item.keyed,
                    passage: passage.to_owned(),
                    shares: CategoryShares::from_percentages(*pct)?,
                });
            }
        }
        if let Some((i, p, _)) = table
            .iter()
            .find(|(i, p, _)| !def.items.iter().any(|it| it.id == *i) || !def.passage_ids().contains(&p.as_str()))
        {
            return Err(SurveyError::Summary(format!("row `{i}` / `{p}` is not part of the survey")));
        }
        Ok(LikertSummary { survey: def.name.clone(), passages: def.passages.clone(), n_valid, rows })
    }

    /// Reads `item,passage,strongly_disagree,disagree,agree,strongly_agree` rows.
    pub fn from_percentages_csv<R: Read>(
        input: R,
        def: &SurveyDefinition,
        n_valid: Option<u64>,
    ) -> Result<Self, SurveyError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        let mut table = Vec::new();
        for rec in rdr.deserialize::<PercentRecord>() {
            let r = rec?;
            table.push((r.item, r.passage, [r.strongly_disagree, r.disagree, r.agree, r.strongly_agree]));
        }
        Self::from_percentages(def, n_valid, &table)
    }

    pub fn display_rows(&self) -> Vec<DisplayRow> {
        self.rows
            .iter()
            .map(|r| {
                let [sd, d, a, sa] = r.shares.display();
                DisplayRow {
                    survey: self.survey.clone(),
                    item: r.item_id.clone(),
                    passage: r.passage.clone(),
                    keyed: r.keyed,
                    n: self.n_valid,
                    strongly_disagree: sd,
                    disagree: d,
                    agree: a,
                    strongly_agree: sa,
                    disagreement: r.shares.disagreement(),
                    agreement: r.shares.agreement(),
                }
            })
            .collect()
    }
}

// csv cannot deserialize numbers through `#[serde(flatten)]`, hence the copy.
#[derive(Deserialize)]
struct SurveyPercentRecord {
    survey: String,
    item: String,
    passage: String,
    strongly_disagree: i64,
    disagree: i64,
    agree: i64,
    strongly_agree: i64,
}

/// Reads several surveys from one `survey,item,passage,strongly_disagree,...` table.
///
/// Surveys keep their order of first appearance; within a survey the first
/// passage seen is taken as the generated one. Items are the standard five.
/// (item, passage, percentages) as read from one table row.
type PercentRow = (String, String, [i64; 4]);

pub fn read_percentage_tables<R: Read>(input: R, n_valid: Option<u64>) -> Result<Vec<LikertSummary>, SurveyError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let mut groups: Vec<(String, Vec<String>, Vec<PercentRow>)> = Vec::new();
    for rec in rdr.deserialize::<SurveyPercentRecord>() {
        let r = rec?;
        let survey = r.survey;
        let idx = match groups.iter().position(|g| g.0 == survey) {
            Some(i) => i,
            None => {
                groups.push((survey, Vec::new(), Vec::new()));
                groups.len() - 1
            }
        };
        let g = &mut groups[idx];
        if !g.1.contains(&r.passage) {
            g.1.push(r.passage.clone());
        }
        g.2.push((r.item, r.passage, [r.strongly_disagree, r.disagree, r.agree, r.strongly_agree]));
    }
    if groups.is_empty() {
        return Err(SurveyError::Empty);
    }
    groups
        .into_iter()
        .map(|(name, passages, table)| {
            let [generated, original] = passages.as_slice() else {
                return Err(SurveyError::Summary(format!(
                    "survey `{name}` needs exactly two passages, found {}",
                    passages.len()
                )));
            };
            let def = SurveyDefinition::standard(name.clone(), generated.clone(), original.clone());
            LikertSummary::from_percentages(&def, n_valid, &table)
        })
        .collect()
}

/// Category counts and shares per (item, passage) over QC-passed responses.
pub fn summarize<'a, I>(responses: I, def: &SurveyDefinition) -> Result<LikertSummary, SurveyError>
where
    I: IntoIterator<Item = &'a SurveyResponse>,
{
    def.validate()?;
    let responses: Vec<&SurveyResponse> = responses.into_iter().collect();
    if responses.is_empty() {
        return Err(SurveyError::Empty);
    }
    let mut rows = Vec::new();
    for item in &def.items {
        for passage in def.passage_ids() {
            let mut counts = [0u64; 4];
            for r in &responses {
                let v = r.answer(passage, &item.id).ok_or_else(|| {
                    SurveyError::Summary(format!(
                        "rater `{}` has no answer for `{}` on `{passage}`",
                        r.rater_id, item.id
                    ))
                })?;
                counts[usize::from(v) - 1] += 1;
            }
            rows.push(ItemRow {
                item_id: item.id.clone(),
                keyed: item.keyed,
                passage: passage.to_owned(),
                shares: CategoryShares::from_counts(counts)?,
            });
        }
    }
    Ok(LikertSummary {
        survey: def.name.clone(),
        passages: def.passages.clone(),
        n_valid: Some(responses.len() as u64),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;

    #[test]
    fn half_up() {
        assert_eq!(round_half_up(Ratio::new(5, 2)), 3);
        assert_eq!(round_half_up(Ratio::new(49, 20)), 2);
        assert_eq!(round_half_up(Ratio::new(200, 3)), 67);
    }

    #[test]
    fn counts_to_agreement() {
        let s = CategoryShares::from_counts([1, 1, 23, 25]).unwrap();
        assert_eq!(s.agreement(), 96);
        assert_eq!(s.disagreement(), 4);
        assert_eq!(s.display(), [2, 2, 46, 50]);

        let unanimous = CategoryShares::from_counts([0, 0, 0, 50]).unwrap();
        assert_eq!((unanimous.agreement(), unanimous.disagreement()), (100, 0));
        let single = CategoryShares::from_counts([0, 1, 0, 0]).unwrap();
        assert_eq!((single.agreement(), single.disagreement()), (0, 100));
    }

    #[test]
    fn agreement_uses_exact_sum() {
        // 1/3 each of agree and strongly agree: parts show 33 + 33, sum shows 67
        let s = CategoryShares::from_counts([1, 0, 1, 1]).unwrap();
        assert_eq!(s.display(), [33, 0, 33, 33]);
        assert_eq!(s.agreement(), 67);
    }

    #[test]
    fn percentages_validated() {
        assert!(CategoryShares::from_percentages([2, 6, 54, 38]).is_ok());
        assert!(CategoryShares::from_percentages([10, 10, 10, 10]).is_err());
        assert!(CategoryShares::from_percentages([-1, 1, 50, 50]).is_err());
    }

    #[test]
    fn summarize_50_raters() {
        let def = SurveyDefinition::standard("s", "gen", "orig");
        let cats = [1u8, 2].into_iter().chain(std::iter::repeat_n(3, 23)).chain(std::iter::repeat_n(4, 25));
        let responses: Vec<SurveyResponse> = cats
            .enumerate()
            .map(|(i, c)| {
                let per_item: BTreeMap<String, u8> = def.items.iter().map(|it| (it.id.clone(), c)).collect();
                SurveyResponse {
                    rater_id: format!("r{i}"),
                    completion_seconds: 100.0,
                    attention_answer: Some(2),
                    answers: [("gen".to_owned(), per_item.clone()), ("orig".to_owned(), per_item)].into(),
                    qualification_flags: BTreeMap::new(),
                }
            })
            .collect();
        let s = summarize(&responses, &def).unwrap();
        assert_eq!(s.n_valid, Some(50));
        assert_eq!(s.rows.len(), 10);
        assert_eq!(s.row("adequacy", "gen").unwrap().shares.agreement(), 96);
        for r in &s.rows {
            assert_eq!(r.shares.counts.unwrap().iter().sum::<u64>(), 50);
        }
        assert!(matches!(summarize(&[], &def), Err(SurveyError::Empty)));
    }
}
