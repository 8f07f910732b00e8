//! Object-to-subject aggregation.
//!
//! A subject's clinical label is decided from the scores of all its objects
//! (frames, videos, sweeps) by a fixed rule with a hyperparameter, e.g. "the
//! score of the 3rd highest-scoring object".

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::scoreset::{Level, ScoreRecord, ScoreTable};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AggregationRule {
    /// n-th order statistic counted from the top (1 = max).
    NthLargest(usize),
    /// Score of the n-th object in input order (1-based).
    NthPositional(usize),
    Max,
    Mean,
    /// Nearest-rank quantile: the `ceil(q * n)`-th smallest score (at least the first).
    Quantile(f64),
}

impl Default for AggregationRule {
    fn default() -> Self {
        AggregationRule::NthLargest(1)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AggregateError {
    #[error("subject {subject} has {have} objects, rule needs {need}")]
    TooFewObjects {
        subject: String,
        have: usize,
        need: usize,
    },
    #[error("subject {0} spans more than one fold")]
    MixedFoldWithinSubject(String),
    #[error("subject {0} spans more than one epoch")]
    MixedEpochWithinSubject(String),
    #[error("table is not object level")]
    NotObjectLevel,
    #[error("bad aggregation rule {0:?}")]
    BadRule(String),
}

impl AggregationRule {
    fn check(&self) -> Result<(), AggregateError> {
        match *self {
            AggregationRule::NthLargest(0) | AggregationRule::NthPositional(0) => {
                Err(AggregateError::BadRule(self.to_string()))
            }
            AggregationRule::Quantile(q) if !(0.0..=1.0).contains(&q) => {
                Err(AggregateError::BadRule(self.to_string()))
            }
            _ => Ok(()),
        }
    }

    /// Applies the rule to one subject's scores, given in input order.
    pub fn apply(&self, scores: &[f64]) -> Option<f64> {
        if scores.is_empty() {
            return None;
        }
        let sorted_desc = || {
            let mut v = scores.to_vec();
            v.sort_by(|a, b| b.total_cmp(a));
            v
        };
        match *self {
            AggregationRule::NthLargest(n) => sorted_desc().get(n.checked_sub(1)?).copied(),
            AggregationRule::NthPositional(n) => scores.get(n.checked_sub(1)?).copied(),
            AggregationRule::Max => scores.iter().copied().reduce(f64::max),
            AggregationRule::Mean => Some(scores.iter().sum::<f64>() / scores.len() as f64),
            AggregationRule::Quantile(q) => {
                let mut v = scores.to_vec();
                v.sort_by(f64::total_cmp);
                let rank = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len());
                Some(v[rank - 1])
            }
        }
    }

    fn min_objects(&self) -> usize {
        match *self {
            AggregationRule::NthLargest(n) | AggregationRule::NthPositional(n) => n,
            _ => 1,
        }
    }
}

impl fmt::Display for AggregationRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AggregationRule::NthLargest(n) => write!(f, "nth_largest:{n}"),
            AggregationRule::NthPositional(n) => write!(f, "nth_positional:{n}"),
            AggregationRule::Max => f.write_str("max"),
            AggregationRule::Mean => f.write_str("mean"),
            AggregationRule::Quantile(q) => write!(f, "quantile:{q}"),
        }
    }
}

impl FromStr for AggregationRule {
    type Err = AggregateError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || AggregateError::BadRule(s.to_string());
        let (kind, arg) = match s.split_once(':') {
            Some((k, a)) => (k, Some(a)),
            None => (s, None),
        };
        let rule = match (kind, arg) {
            ("max", None) => AggregationRule::Max,
            ("mean", None) => AggregationRule::Mean,
            ("nth_largest", Some(a)) => AggregationRule::NthLargest(a.parse().map_err(|_| bad())?),
            ("nth_positional", Some(a)) => {
                AggregationRule::NthPositional(a.parse().map_err(|_| bad())?)
            }
            ("quantile", Some(a)) => AggregationRule::Quantile(a.parse().map_err(|_| bad())?),
            _ => return Err(bad()),
        };
        rule.check().map_err(|_| bad())?;
        Ok(rule)
    }
}

/// One record per subject, in order of first appearance. Label, fold, epoch
/// and the first object's covariates are carried over.
pub fn aggregate_subjects(
    table: &ScoreTable,
    rule: AggregationRule,
) -> Result<ScoreTable, AggregateError> {
    rule.check()?;
    if table.level != Level::Object {
        return Err(AggregateError::NotObjectLevel);
    }
    let mut order: Vec<&str> = Vec::new();
    let mut groups: HashMap<&str, Vec<&ScoreRecord>> = HashMap::new();
    for r in &table.records {
        groups
            .entry(&r.subject_id)
            .or_insert_with(|| {
                order.push(&r.subject_id);
                Vec::new()
            })
            .push(r);
    }

    let mut records = Vec::with_capacity(order.len());
    for subject in order {
        let objects = &groups[subject];
        let first = objects[0];
        if objects.iter().any(|o| o.fold != first.fold) {
            return Err(AggregateError::MixedFoldWithinSubject(subject.to_string()));
        }
        if objects.iter().any(|o| o.epoch != first.epoch) {
            return Err(AggregateError::MixedEpochWithinSubject(subject.to_string()));
        }
        if objects.len() < rule.min_objects() {
            return Err(AggregateError::TooFewObjects {
                subject: subject.to_string(),
                have: objects.len(),
                need: rule.min_objects(),
            });
        }
        let scores: Vec<f64> = objects.iter().map(|o| o.score).collect();
        let score = rule.apply(&scores).expect("object count checked");
        records.push(ScoreRecord {
            subject_id: subject.to_string(),
            object_id: None,
            fold: first.fold,
            epoch: first.epoch,
            label: first.label,
            score,
            covariates: first.covariates.clone(),
        });
    }
    Ok(ScoreTable::new(records, Level::Subject))
}
