//! Stopping-point selection from per-epoch validation score dumps.
//!
//! A dump holds every validation subject's score at every saved epoch. From
//! it we build one time series per figure of merit, pick the epoch each FoM
//! prefers, and measure how flat the sensitivity and specificity curves are
//! around the clinical operating point (flatter means a more stable model).

use serde::Serialize;
use thiserror::Error;

use crate::fom::FomSpec;
use crate::metrics::{self, MetricsError};
use crate::scoreset::ScoreTable;

pub const DEFAULT_TIE_TOLERANCE: f64 = 0.005;
pub const DEFAULT_STABILITY_WINDOW: f64 = 0.05;
pub const DEFAULT_STABILITY_SPEC_PCT: f64 = 90.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EpochError {
    #[error("score table has no epoch column")]
    MissingEpochColumn,
    #[error("epoch {0} does not contain both classes")]
    DegenerateEpoch(u32),
    #[error("{0} is not in the series")]
    FomNotInSeries(String),
    #[error("{fom} failed at epoch {epoch}: {source}")]
    FomFailed {
        epoch: u32,
        fom: String,
        source: MetricsError,
    },
    #[error("most_stable tie-break needs the score dump")]
    MissingDump,
    #[error("threshold grid must be non-empty and ascending")]
    BadGrid,
    #[error("window must be positive, got {0}")]
    BadWindow(f64),
    #[error("tie tolerance must be in [0, 1), got {0}")]
    BadTolerance(f64),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FomSeries {
    pub epochs: Vec<u32>,
    /// One value list per FoM, aligned with `epochs`, in request order.
    pub values: Vec<(FomSpec, Vec<f64>)>,
}

impl FomSeries {
    pub fn get(&self, fom: &FomSpec) -> Option<&[f64]> {
        self.values
            .iter()
            .find(|(f, _)| f == fom)
            .map(|(_, v)| v.as_slice())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TieBreak {
    Earliest,
    Latest,
    /// Smallest `sens_slope + spec_slope` around the FoM's operating point
    /// (or `target_spec_pct` when the FoM has none).
    MostStable {
        target_spec_pct: f64,
        window: f64,
    },
}

impl TieBreak {
    pub fn name(&self) -> &'static str {
        match self {
            TieBreak::Earliest => "earliest",
            TieBreak::Latest => "latest",
            TieBreak::MostStable { .. } => "most_stable",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionPolicy {
    /// Relative slack below the best value that still counts as a tie.
    pub tie_tolerance: f64,
    pub tie_break: TieBreak,
}

impl Default for SelectionPolicy {
    fn default() -> Self {
        Self {
            tie_tolerance: DEFAULT_TIE_TOLERANCE,
            tie_break: TieBreak::Earliest,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Selection {
    pub epoch: u32,
    /// Position of `epoch` in the series.
    pub index: usize,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThresholdPoint {
    pub threshold: f64,
    pub sensitivity: f64,
    pub specificity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StabilityProfile {
    pub threshold_star: f64,
    pub sens_slope: f64,
    pub spec_slope: f64,
    pub window: f64,
}

/// Evaluates every FoM independently on each epoch's records, epochs ascending.
pub fn fom_series(dump: &ScoreTable, foms: &[FomSpec]) -> Result<FomSeries, EpochError> {
    if !dump.has_epochs() {
        return Err(EpochError::MissingEpochColumn);
    }
    let epochs = dump.epochs();
    let mut values: Vec<(FomSpec, Vec<f64>)> = foms
        .iter()
        .map(|f| (*f, Vec::with_capacity(epochs.len())))
        .collect();
    for &epoch in &epochs {
        let slice = dump.epoch_slice(epoch);
        let labels = slice.labels();
        if !(labels.contains(&0) && labels.contains(&1)) {
            return Err(EpochError::DegenerateEpoch(epoch));
        }
        let scores = slice.scores();
        for (fom, series) in &mut values {
            let v = fom
                .evaluate(&labels, &scores)
                .map_err(|source| EpochError::FomFailed {
                    epoch,
                    fom: fom.to_string(),
                    source,
                })?;
            series.push(v);
        }
    }
    Ok(FomSeries { epochs, values })
}

/// Picks the stopping epoch for `fom`. Candidates are the epochs within
/// `tie_tolerance * |best|` of the best value; the tie-break chooses among them.
pub fn select_epoch(
    series: &FomSeries,
    fom: &FomSpec,
    policy: &SelectionPolicy,
    dump: Option<&ScoreTable>,
) -> Result<Selection, EpochError> {
    if !(0.0..1.0).contains(&policy.tie_tolerance) {
        return Err(EpochError::BadTolerance(policy.tie_tolerance));
    }
    let values = series
        .get(fom)
        .ok_or_else(|| EpochError::FomNotInSeries(fom.to_string()))?;
    if values.is_empty() {
        return Err(EpochError::FomNotInSeries(fom.to_string()));
    }
    // Work in "higher is better" orientation.
    let sign = if fom.higher_is_better() { 1.0 } else { -1.0 };
    let best = values
        .iter()
        .map(|v| sign * v)
        .fold(f64::NEG_INFINITY, f64::max);
    let floor = best - policy.tie_tolerance * best.abs();
    let candidates: Vec<usize> = (0..values.len())
        .filter(|&i| sign * values[i] >= floor)
        .collect();

    let index = match policy.tie_break {
        TieBreak::Earliest => candidates[0],
        TieBreak::Latest => *candidates.last().expect("best value is a candidate"),
        TieBreak::MostStable {
            target_spec_pct,
            window,
        } => {
            let dump = dump.ok_or(EpochError::MissingDump)?;
            let pct = fom.target_spec().unwrap_or(target_spec_pct);
            let mut best_index = candidates[0];
            let mut best_slope = f64::INFINITY;
            for &i in &candidates {
                let slice = dump.epoch_slice(series.epochs[i]);
                let profile = stability_profile(&slice.labels(), &slice.scores(), pct, window)?;
                let slope = profile.sens_slope + profile.spec_slope;
                if slope < best_slope {
                    best_slope = slope;
                    best_index = i;
                }
            }
            best_index
        }
    };
    Ok(Selection {
        epoch: series.epochs[index],
        index,
        value: values[index],
    })
}

fn class_counts(labels: &[u8], scores: &[f64]) -> Result<(usize, usize), EpochError> {
    // Reuse the metrics input checks.
    let roc = metrics::roc_curve(labels, scores)?;
    debug_assert!(!roc.points.is_empty());
    let pos = labels.iter().filter(|&&l| l == 1).count();
    Ok((pos, labels.len() - pos))
}

fn sens_spec_at(
    labels: &[u8],
    scores: &[f64],
    t: f64,
    n_pos: usize,
    n_neg: usize,
) -> ThresholdPoint {
    let (mut tp, mut tn) = (0usize, 0usize);
    for (&l, &s) in labels.iter().zip(scores) {
        match (l, s >= t) {
            (1, true) => tp += 1,
            (0, false) => tn += 1,
            _ => {}
        }
    }
    ThresholdPoint {
        threshold: t,
        sensitivity: tp as f64 / n_pos as f64,
        specificity: tn as f64 / n_neg as f64,
    }
}

/// Sensitivity (`score >= t` among positives) and specificity (`score < t`
/// among negatives) at each threshold of an ascending grid.
pub fn threshold_curves(
    labels: &[u8],
    scores: &[f64],
    grid: &[f64],
) -> Result<Vec<ThresholdPoint>, EpochError> {
    if grid.is_empty() || grid.iter().any(|t| t.is_nan()) || grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(EpochError::BadGrid);
    }
    let (n_pos, n_neg) = class_counts(labels, scores)?;
    Ok(grid
        .iter()
        .map(|&t| sens_spec_at(labels, scores, t, n_pos, n_neg))
        .collect())
}

/// Central finite-difference slopes of the sensitivity and specificity
/// curves around the sensitivity-at-specificity operating point.
///
/// Every threshold in `(next lower score, t]` yields the same operating point
/// as the qualifying threshold `t`; `threshold_star` is the middle of that
/// interval so the window probes the curves symmetrically.
pub fn stability_profile(
    labels: &[u8],
    scores: &[f64],
    target_spec_pct: f64,
    window: f64,
) -> Result<StabilityProfile, EpochError> {
    if !(window > 0.0 && window.is_finite()) {
        return Err(EpochError::BadWindow(window));
    }
    let t = metrics::sens_at_spec(labels, scores, target_spec_pct)?.threshold;
    let (n_pos, n_neg) = class_counts(labels, scores)?;
    let next_lower = scores
        .iter()
        .copied()
        .filter(|&s| s < t)
        .fold(f64::NEG_INFINITY, f64::max);
    let star = if next_lower.is_finite() {
        0.5 * (t + next_lower)
    } else {
        t
    };
    let lo = sens_spec_at(labels, scores, star - window, n_pos, n_neg);
    let hi = sens_spec_at(labels, scores, star + window, n_pos, n_neg);
    Ok(StabilityProfile {
        threshold_star: star,
        sens_slope: (hi.sensitivity - lo.sensitivity).abs() / (2.0 * window),
        spec_slope: (hi.specificity - lo.specificity).abs() / (2.0 * window),
        window,
    })
}
