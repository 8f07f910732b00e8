//! Named figures of merit and their string grammar:
//! `auc | sliver:<1-99> | sens_at_spec:<pct> | fisher | bce | neg_val_ce`.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::metrics::{self, MetricsError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FomSpec {
    /// Negated balanced cross-entropy, so higher is better.
    NegValCe,
    Auc,
    SliverAuc(i64),
    SensAtSpec(f64),
    /// Negatives vs positives.
    Fisher,
    /// Balanced cross-entropy itself (lower is better).
    Bce,
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("bad figure of merit {0:?}; expected auc, sliver:<1-99>, sens_at_spec:<pct>, fisher, bce or neg_val_ce")]
pub struct FomParseError(pub String);

impl FomSpec {
    pub fn evaluate(&self, labels: &[u8], scores: &[f64]) -> Result<f64, MetricsError> {
        match *self {
            FomSpec::NegValCe => metrics::balanced_cross_entropy(labels, scores).map(|ce| -ce),
            FomSpec::Bce => metrics::balanced_cross_entropy(labels, scores),
            FomSpec::Auc => metrics::roc_curve(labels, scores).map(|roc| metrics::auc(&roc)),
            FomSpec::SliverAuc(spec) => metrics::sliver_auc(labels, scores, spec),
            FomSpec::SensAtSpec(pct) => {
                metrics::sens_at_spec(labels, scores, pct).map(|r| r.sensitivity)
            }
            FomSpec::Fisher => {
                let (mut neg, mut pos) = (Vec::new(), Vec::new());
                for (&l, &s) in labels.iter().zip(scores) {
                    if l == 1 {
                        pos.push(s)
                    } else {
                        neg.push(s)
                    }
                }
                metrics::fisher_distance(&neg, &pos)
            }
        }
    }

    /// Whether larger values are better.
    pub fn higher_is_better(&self) -> bool {
        !matches!(self, FomSpec::Bce)
    }

    /// Target specificity for the FoMs that carry one.
    pub fn target_spec(&self) -> Option<f64> {
        match *self {
            FomSpec::SliverAuc(s) => Some(s as f64),
            FomSpec::SensAtSpec(p) => Some(p),
            _ => None,
        }
    }
}

impl fmt::Display for FomSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FomSpec::NegValCe => f.write_str("neg_val_ce"),
            FomSpec::Auc => f.write_str("auc"),
            FomSpec::SliverAuc(s) => write!(f, "sliver:{s}"),
            FomSpec::SensAtSpec(p) => write!(f, "sens_at_spec:{p}"),
            FomSpec::Fisher => f.write_str("fisher"),
            FomSpec::Bce => f.write_str("bce"),
        }
    }
}

impl FromStr for FomSpec {
    type Err = FomParseError;

    /// Range checks on the argument are left to evaluation, so that
    /// `sliver:0` parses and then fails as a domain error.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || FomParseError(s.to_string());
        Ok(match s.split_once(':') {
            None => match s {
                "auc" => FomSpec::Auc,
                "fisher" => FomSpec::Fisher,
                "bce" => FomSpec::Bce,
                "neg_val_ce" => FomSpec::NegValCe,
                _ => return Err(bad()),
            },
            Some(("sliver", a)) => FomSpec::SliverAuc(a.parse().map_err(|_| bad())?),
            Some(("sens_at_spec", a)) => {
                let pct: f64 = a.parse().map_err(|_| bad())?;
                if !pct.is_finite() {
                    return Err(bad());
                }
                FomSpec::SensAtSpec(pct)
            }
            Some(_) => return Err(bad()),
        })
    }
}
