//! Control-anchored z-scale alignment of k-fold validation scores.
//!
//! Each fold's model is calibrated differently, so pooled validation scores do
//! not share a threshold. For every fold we measure the median and the
//! two-sided spreads of the *control* scores and map the whole fold so those
//! land on a common canonical median and spread:
//!
//! ```text
//! z = (s - m_k) / sigma_right_k   if s > m_k
//! z = (s - m_k) / sigma_left_k    if s < m_k
//! n = m_t + sigma_t * z
//! ```
//!
//! Positive samples are mapped with the same control-derived parameters. A
//! score that sits `x` spreads above its fold median therefore maps to
//! `m_t + x * sigma_t` whatever fold it came from.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{two_sided_std, MetricsError};
use crate::scoreset::ScoreTable;

pub const DEFAULT_CANONICAL_MEDIAN: f64 = 0.3;
pub const DEFAULT_CANONICAL_STD: f64 = 0.2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AlignError {
    #[error("table has no fold assignments")]
    MissingFolds,
    #[error("fold {fold} has {have} control scores, need at least 2")]
    TooFewControls { fold: u32, have: usize },
    #[error("fold {fold} controls have zero spread on one side")]
    ZeroSpread { fold: u32 },
    #[error("fold {0} is not in the alignment model")]
    UnknownFold(u32),
    #[error("invalid canonical scale: {0}")]
    BadCanonical(String),
    #[error("duplicate fold {0} in alignment model")]
    DuplicateFold(u32),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CanonicalScale {
    pub median: f64,
    /// Spread applied to both sides.
    pub std: f64,
    /// Accepted for completeness; the mapping uses `std` on both sides.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub left_std: Option<f64>,
}

impl Default for CanonicalScale {
    fn default() -> Self {
        Self {
            median: DEFAULT_CANONICAL_MEDIAN,
            std: DEFAULT_CANONICAL_STD,
            left_std: None,
        }
    }
}

impl CanonicalScale {
    pub fn new(median: f64, std: f64) -> Result<Self, AlignError> {
        let scale = Self {
            median,
            std,
            left_std: None,
        };
        scale.check()?;
        Ok(scale)
    }

    fn check(&self) -> Result<(), AlignError> {
        if !self.median.is_finite() {
            return Err(AlignError::BadCanonical(format!(
                "median {} is not finite",
                self.median
            )));
        }
        if !(self.std.is_finite() && self.std > 0.0) {
            return Err(AlignError::BadCanonical(format!(
                "std {} must be positive",
                self.std
            )));
        }
        if let Some(l) = self.left_std {
            if !(l.is_finite() && l > 0.0) {
                return Err(AlignError::BadCanonical(format!(
                    "left_std {l} must be positive"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoldParams {
    pub fold: u32,
    pub median: f64,
    pub right_std: f64,
    pub left_std: f64,
    pub n_controls: usize,
}

impl FoldParams {
    /// Signed distance from the fold median in units of the matching side's spread.
    pub fn z(&self, score: f64) -> f64 {
        let d = score - self.median;
        if d > 0.0 {
            d / self.right_std
        } else if d < 0.0 {
            d / self.left_std
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelRepr", into = "ModelRepr")]
pub struct AlignmentModel {
    pub canonical: CanonicalScale,
    per_fold: BTreeMap<u32, FoldParams>,
}

#[derive(Serialize, Deserialize)]
struct ModelRepr {
    canonical: CanonicalScale,
    folds: Vec<FoldParams>,
}

impl TryFrom<ModelRepr> for AlignmentModel {
    type Error = AlignError;

    fn try_from(repr: ModelRepr) -> Result<Self, AlignError> {
        AlignmentModel::new(repr.canonical, repr.folds)
    }
}

impl From<AlignmentModel> for ModelRepr {
    fn from(model: AlignmentModel) -> Self {
        ModelRepr {
            canonical: model.canonical,
            folds: model.per_fold.into_values().collect(),
        }
    }
}

impl AlignmentModel {
    pub fn new(canonical: CanonicalScale, folds: Vec<FoldParams>) -> Result<Self, AlignError> {
        canonical.check()?;
        let mut per_fold = BTreeMap::new();
        for p in folds {
            if !(p.right_std > 0.0 && p.left_std > 0.0) {
                return Err(AlignError::ZeroSpread { fold: p.fold });
            }
            if per_fold.insert(p.fold, p).is_some() {
                return Err(AlignError::DuplicateFold(p.fold));
            }
        }
        Ok(Self {
            canonical,
            per_fold,
        })
    }

    pub fn fold(&self, fold: u32) -> Option<&FoldParams> {
        self.per_fold.get(&fold)
    }

    /// Fold parameters in ascending fold order.
    pub fn folds(&self) -> impl Iterator<Item = &FoldParams> {
        self.per_fold.values()
    }

    /// Maps one score from `fold` onto the canonical scale.
    pub fn map_score(&self, fold: u32, score: f64) -> Result<f64, AlignError> {
        let params = self.fold(fold).ok_or(AlignError::UnknownFold(fold))?;
        Ok(self.canonical.median + self.canonical.std * params.z(score))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("alignment model serializes")
    }
}

/// Fits per-fold control medians and two-sided spreads. Positives are ignored.
pub fn fit_alignment(
    table: &ScoreTable,
    canonical: CanonicalScale,
) -> Result<AlignmentModel, AlignError> {
    canonical.check()?;
    if !table.has_folds() {
        return Err(AlignError::MissingFolds);
    }
    let mut controls: BTreeMap<u32, Vec<f64>> =
        table.folds().into_iter().map(|f| (f, Vec::new())).collect();
    for r in table.records.iter().filter(|r| r.label == 0) {
        controls
            .get_mut(&r.fold.expect("checked by has_folds"))
            .expect("fold key")
            .push(r.score);
    }
    let mut folds = Vec::with_capacity(controls.len());
    for (fold, scores) in controls {
        if scores.len() < 2 {
            return Err(AlignError::TooFewControls {
                fold,
                have: scores.len(),
            });
        }
        let spread = two_sided_std(&scores, None)?;
        if spread.right == 0.0 || spread.left == 0.0 {
            return Err(AlignError::ZeroSpread { fold });
        }
        folds.push(FoldParams {
            fold,
            median: spread.middle,
            right_std: spread.right,
            left_std: spread.left,
            n_controls: scores.len(),
        });
    }
    AlignmentModel::new(canonical, folds)
}

/// Maps every score onto the canonical scale; all other fields are kept.
pub fn apply_alignment(
    table: &ScoreTable,
    model: &AlignmentModel,
) -> Result<ScoreTable, AlignError> {
    apply_alignment_with(table, model, false)
}

/// As [`apply_alignment`], optionally clipping mapped scores into `[0, 1]`.
pub fn apply_alignment_with(
    table: &ScoreTable,
    model: &AlignmentModel,
    clip: bool,
) -> Result<ScoreTable, AlignError> {
    let mut out = table.clone();
    for r in &mut out.records {
        let fold = r.fold.ok_or(AlignError::MissingFolds)?;
        let mapped = model.map_score(fold, r.score)?;
        r.score = if clip { mapped.clamp(0.0, 1.0) } else { mapped };
    }
    Ok(out)
}
