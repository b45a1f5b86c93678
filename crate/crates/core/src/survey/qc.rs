//! Rater quality control: completion-time outliers and attention checks.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{SurveyDefinition, SurveyError, SurveyResponse};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MadConfig {
    pub threshold: f64,
    /// Scales the MAD to a normal-consistent SD estimate.
    pub consistency: f64,
}

impl Default for MadConfig {
    fn default() -> Self {
        MadConfig { threshold: 2.5, consistency: 1.4826 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MadOutcome {
    pub median: f64,
    pub mad: f64,
    /// `|x - median| / (consistency * mad)`; all zero when the MAD is zero.
    pub robust_z: Vec<f64>,
    pub flags: Vec<bool>,
    /// Set when the MAD is zero and nothing could be flagged.
    pub degenerate: bool,
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

pub fn mad_time_filter(times: &[f64], threshold: f64) -> Result<MadOutcome, SurveyError> {
    mad_time_filter_with(times, &MadConfig { threshold, ..MadConfig::default() })
}

/// Flags times whose robust z-score exceeds the threshold.
pub fn mad_time_filter_with(times: &[f64], cfg: &MadConfig) -> Result<MadOutcome, SurveyError> {
    if times.len() < 3 {
        return Err(SurveyError::TooFewTimes(times.len()));
    }
    if !(cfg.threshold.is_finite() && cfg.threshold > 0.0) {
        return Err(SurveyError::Threshold(cfg.threshold));
    }
    if !(cfg.consistency.is_finite() && cfg.consistency > 0.0) {
        return Err(SurveyError::Threshold(cfg.consistency));
    }
    if let Some(bad) = times.iter().find(|t| !t.is_finite()) {
        return Err(SurveyError::Summary(format!("completion time {bad} is not finite")));
    }
    let med = median(times);
    let deviations: Vec<f64> = times.iter().map(|t| (t - med).abs()).collect();
    let mad = median(&deviations);
    if mad == 0.0 {
        log::warn!("completion times have zero MAD; no rater is flagged as a time outlier");
        return Ok(MadOutcome {
            median: med,
            mad,
            robust_z: vec![0.0; times.len()],
            flags: vec![false; times.len()],
            degenerate: true,
        });
    }
    let robust_z: Vec<f64> = deviations.iter().map(|d| d / (cfg.consistency * mad)).collect();
    let flags = robust_z.iter().map(|z| *z > cfg.threshold).collect();
    Ok(MadOutcome { median: med, mad, robust_z, flags, degenerate: false })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QcReason {
    MadTimeOutlier,
    FailedAttention,
    MissingItems,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QcOutcome {
    pub rater_id: String,
    pub excluded: bool,
    pub reasons: BTreeSet<QcReason>,
}

impl QcOutcome {
    fn new(rater_id: &str) -> Self {
        QcOutcome { rater_id: rater_id.to_owned(), excluded: false, reasons: BTreeSet::new() }
    }

    fn add(&mut self, reason: QcReason) {
        self.reasons.insert(reason);
        self.excluded = true;
    }
}

/// Excludes raters who gave the wrong attention answer or none at all.
pub fn attention_filter(responses: &[SurveyResponse], def: &SurveyDefinition) -> Vec<QcOutcome> {
    responses
        .iter()
        .map(|r| {
            let mut o = QcOutcome::new(&r.rater_id);
            match r.attention_answer {
                None => o.add(QcReason::MissingItems),
                Some(a) if a != def.attention.expected => o.add(QcReason::FailedAttention),
                Some(_) => {}
            }
            o
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QcReport {
    pub outcomes: Vec<QcOutcome>,
    pub mad: Option<MadOutcome>,
    pub warnings: Vec<String>,
}

impl QcReport {
    pub fn excluded(&self) -> usize {
        self.outcomes.iter().filter(|o| o.excluded).count()
    }

    /// Responses that passed every check, in input order.
    pub fn valid<'a>(&self, responses: &'a [SurveyResponse]) -> Vec<&'a SurveyResponse> {
        responses.iter().zip(&self.outcomes).filter(|(_, o)| !o.excluded).map(|(r, _)| r).collect()
    }
}

/// Applies the time, attention and completeness checks together.
///
/// With fewer than three responses the time filter is skipped with a warning.
pub fn run_qc(responses: &[SurveyResponse], def: &SurveyDefinition, mad: &MadConfig) -> Result<QcReport, SurveyError> {
    def.validate()?;
    let mut outcomes = attention_filter(responses, def);
    let mut warnings = Vec::new();
    for (o, r) in outcomes.iter_mut().zip(responses) {
        if !r.is_complete(def) {
            o.add(QcReason::MissingItems);
        }
    }
    let times: Vec<f64> = responses.iter().map(|r| r.completion_seconds).collect();
    let mad_outcome = match mad_time_filter_with(&times, mad) {
        Ok(m) => {
            if m.degenerate {
                warnings.push("completion times have zero MAD; time filter flagged nobody".to_owned());
            }
            for (o, flagged) in outcomes.iter_mut().zip(&m.flags) {
                if *flagged {
                    o.add(QcReason::MadTimeOutlier);
                }
            }
            Some(m)
        }
        Err(SurveyError::TooFewTimes(n)) => {
            warnings.push(format!("only {n} responses; time filter skipped"));
            None
        }
        Err(e) => return Err(e),
    };
    Ok(QcReport { outcomes, mad: mad_outcome, warnings })
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;

    #[test]
    fn oracle_vector() {
        let m = mad_time_filter(&[100.0, 102.0, 98.0, 105.0, 300.0], 2.5).unwrap();
        assert_eq!(m.median, 102.0);
        assert_eq!(m.mad, 3.0);
        assert_eq!(m.flags, vec![false, false, false, false, true]);
        assert!((m.robust_z[4] - 198.0 / (1.4826 * 3.0)).abs() < 1e-12);
        assert!((m.robust_z[4] - 44.5).abs() < 0.05);
    }

    #[test]
    fn tight_cluster_has_no_flags() {
        let m = mad_time_filter(&[100.0, 101.0, 102.0], 2.5).unwrap();
        assert!(m.flags.iter().all(|f| !f));
    }

    #[test]
    fn zero_mad_is_degenerate() {
        let m = mad_time_filter(&[50.0; 6], 2.5).unwrap();
        assert!(m.degenerate);
        assert!(m.flags.iter().all(|f| !f));
    }

    #[test]
    fn input_checks() {
        assert!(matches!(mad_time_filter(&[1.0, 2.0], 2.5), Err(SurveyError::TooFewTimes(2))));
        assert!(matches!(mad_time_filter(&[1.0, 2.0, 3.0], 0.0), Err(SurveyError::Threshold(_))));
    }

    fn resp(id: &str, attention: Option<u8>) -> SurveyResponse {
        SurveyResponse {
            rater_id: id.into(),
            completion_seconds: 100.0,
            attention_answer: attention,
            answers: BTreeMap::new(),
            qualification_flags: BTreeMap::new(),
        }
    }

    #[test]
    fn attention_counts() {
        let def = SurveyDefinition::standard("s", "a", "b");
        let mut rs: Vec<SurveyResponse> = (0..50).map(|i| resp(&format!("r{i}"), Some(2))).collect();
        assert_eq!(attention_filter(&rs, &def).iter().filter(|o| o.excluded).count(), 0);
        for r in rs.iter_mut().take(3) {
            r.attention_answer = Some(4);
        }
        rs[10].attention_answer = None;
        let out = attention_filter(&rs, &def);
        assert_eq!(out.iter().filter(|o| o.reasons.contains(&QcReason::FailedAttention)).count(), 3);
        assert!(out[10].reasons.contains(&QcReason::MissingItems));
        assert!(out.iter().all(|o| o.excluded == !o.reasons.is_empty()));
    }
}
