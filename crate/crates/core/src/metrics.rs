//! Figures of merit for binary score sets: ROC construction, AUC, sliver AUC,
//! sensitivity at a specificity floor, two-sided standard deviations, Fisher
//! distance and balanced cross-entropy.
//!
//! Labels are `0` (control) and `1` (positive); a higher score means "more
//! positive". A record is called positive at threshold `t` when `score >= t`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Clip floor applied inside logarithms of [`balanced_cross_entropy`].
pub const CE_EPSILON: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("both classes must be present (positives: {positives}, negatives: {negatives})")]
    DegenerateClasses { positives: usize, negatives: usize },
    #[error("labels and scores differ in length ({labels} vs {scores})")]
    LengthMismatch { labels: usize, scores: usize },
    #[error("label {0} is not 0 or 1")]
    InvalidLabel(u8),
    #[error("score at index {0} is not finite")]
    NonFiniteScore(usize),
    #[error("sliver target specificity must be an integer in 1..=99, got {0}")]
    BadSliverSpec(i64),
    #[error("target specificity percentage must be in (0, 100], got {0}")]
    BadSpecPct(f64),
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("combined spread is zero")]
    ZeroSpread,
    #[error("score at index {index} is outside [0, 1]: {score}")]
    ScoreOutOfRange { index: usize, score: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    /// Records with `score >= threshold` are called positive. The leading
    /// point carries `+inf`.
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoSidedStd {
    pub right: f64,
    pub left: f64,
    /// The centre the sides were measured from.
    pub middle: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistributionSummary {
    pub mean: f64,
    pub two_sided: TwoSidedStd,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensAtSpec {
    pub sensitivity: f64,
    /// Lowest qualifying threshold; `+inf` when only the all-negative rule qualifies.
    pub threshold: f64,
}

/// Class counts after checking labels, lengths and finiteness.
fn check_inputs(labels: &[u8], scores: &[f64]) -> Result<(usize, usize), MetricsError> {
    if labels.len() != scores.len() {
        return Err(MetricsError::LengthMismatch {
            labels: labels.len(),
            scores: scores.len(),
        });
    }
    let mut positives = 0;
    for &l in labels {
        match l {
            0 => {}
            1 => positives += 1,
            other => return Err(MetricsError::InvalidLabel(other)),
        }
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(MetricsError::NonFiniteScore(i));
    }
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(MetricsError::DegenerateClasses {
            positives,
            negatives,
        });
    }
    Ok((positives, negatives))
}

/// ROC with one operating point per distinct score, highest score first.
/// Tied scores cross the threshold together.
pub fn roc_curve(labels: &[u8], scores: &[f64]) -> Result<RocCurve, MetricsError> {
    let (n_pos, n_neg) = check_inputs(labels, scores)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = Vec::with_capacity(scores.len() + 1);
    points.push(RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: f64::INFINITY,
    });
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            if labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            fpr: fp as f64 / n_neg as f64,
            tpr: tp as f64 / n_pos as f64,
            threshold,
        });
    }
    Ok(RocCurve { points })
}

fn trapezoids(points: impl Iterator<Item = (f64, f64)>) -> f64 {
    let mut area = 0.0;
    let mut prev: Option<(f64, f64)> = None;
    for (f, t) in points {
        if let Some((pf, pt)) = prev {
            area += (f - pf) * 0.5 * (t + pt);
        }
        prev = Some((f, t));
    }
    area
}

/// Trapezoidal area under the curve.
pub fn auc(roc: &RocCurve) -> f64 {
    trapezoids(roc.points.iter().map(|p| (p.fpr, p.tpr)))
}

/// Normalized area over `fpr <= max_fpr`, extending the last retained point
/// horizontally to `max_fpr`. No range check on `max_fpr` beyond `> 0`.
pub(crate) fn sliver_auc_at_max_fpr(roc: &RocCurve, max_fpr: f64) -> f64 {
    debug_assert!(max_fpr > 0.0);
    let kept: Vec<(f64, f64)> = roc
        .points
        .iter()
        .filter(|p| p.fpr <= max_fpr)
        .map(|p| (p.fpr, p.tpr))
        .collect();
    // (0, 0) always survives the filter.
    let last_tpr = kept.last().map(|&(_, t)| t).unwrap_or(0.0);
    trapezoids(kept.into_iter().chain(std::iter::once((max_fpr, last_tpr)))) / max_fpr
}

/// Area under the ROC over specificities `>= target_spec %`, normalized by the
/// sliver width `(100 - target_spec) / 100`.
pub fn sliver_auc(labels: &[u8], scores: &[f64], target_spec: i64) -> Result<f64, MetricsError> {
    if !(1..=99).contains(&target_spec) {
        return Err(MetricsError::BadSliverSpec(target_spec));
    }
    let roc = roc_curve(labels, scores)?;
    let max_fpr = (100 - target_spec) as f64 / 100.0;
    Ok(sliver_auc_at_max_fpr(&roc, max_fpr))
}

/// Best sensitivity among thresholds whose specificity is at least
/// `target_spec_pct / 100`.
pub fn sens_at_spec(
    labels: &[u8],
    scores: &[f64],
    target_spec_pct: f64,
) -> Result<SensAtSpec, MetricsError> {
    if !(target_spec_pct > 0.0 && target_spec_pct <= 100.0) {
        return Err(MetricsError::BadSpecPct(target_spec_pct));
    }
    let roc = roc_curve(labels, scores)?;
    let n_neg = labels.iter().filter(|&&l| l == 0).count() as f64;
    // Sensitivity falls and specificity rises with the threshold, so the
    // qualifying thresholds form a prefix of the ROC; its last point wins.
    let mut best = SensAtSpec {
        sensitivity: 0.0,
        threshold: f64::INFINITY,
    };
    for p in &roc.points {
        let true_negatives = ((1.0 - p.fpr) * n_neg).round();
        if true_negatives * 100.0 >= target_spec_pct * n_neg {
            best = SensAtSpec {
                sensitivity: p.tpr,
                threshold: p.threshold,
            };
        } else {
            break;
        }
    }
    Ok(best)
}

/// Median with the even-length midpoint convention. Panics on empty input.
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of empty slice");
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Right- and left-hand spreads, each the population std of one side of the
/// centre mirrored onto the other. The centre itself counts on both sides.
/// A side with no samples (possible only with an explicit `middle`) has spread 0.
pub fn two_sided_std(values: &[f64], middle: Option<f64>) -> Result<TwoSidedStd, MetricsError> {
    if values.len() <= 1 {
        return Err(MetricsError::TooFewSamples(values.len()));
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(MetricsError::NonFiniteScore(i));
    }
    let m = middle.unwrap_or_else(|| median(values));
    // The mirrored sample has mean 0, so its std is the RMS of one side.
    let side_rms = |keep: fn(f64) -> bool| {
        let (sum_sq, n) = values
            .iter()
            .map(|v| v - m)
            .filter(|&d| keep(d))
            .fold((0.0, 0usize), |(s, n), d| (s + d * d, n + 1));
        if n == 0 {
            0.0
        } else {
            (sum_sq / n as f64).sqrt()
        }
    };
    Ok(TwoSidedStd {
        right: side_rms(|d| d >= 0.0),
        left: side_rms(|d| d <= 0.0),
        middle: m,
    })
}

pub fn summarize(values: &[f64]) -> Result<DistributionSummary, MetricsError> {
    let two_sided = two_sided_std(values, None)?;
    Ok(DistributionSummary {
        mean: mean(values),
        two_sided,
        n: values.len(),
    })
}

/// `|mean(a) - mean(b)| / (sigma_a + sigma_b)` where each sample contributes the
/// spread on the side facing the other: right-hand for the lower-mean sample,
/// left-hand for the higher. On equal means `a` is treated as the lower one.
pub fn fisher_distance(a: &[f64], b: &[f64]) -> Result<f64, MetricsError> {
    let sa = summarize(a)?;
    let sb = summarize(b)?;
    // Means taken relative to a shared reference keep the difference accurate
    // when both samples sit far from zero.
    let reference = sa.two_sided.middle;
    let shifted_mean = |v: &[f64]| mean(&v.iter().map(|x| x - reference).collect::<Vec<_>>());
    let gap = shifted_mean(b) - shifted_mean(a);
    let (lower, upper) = if gap >= 0.0 { (&sa, &sb) } else { (&sb, &sa) };
    let spread = lower.two_sided.right + upper.two_sided.left;
    if spread == 0.0 {
        return Err(MetricsError::ZeroSpread);
    }
    Ok(gap.abs() / spread)
}

/// Mean of the per-class mean log losses, with `ln` arguments clipped at [`CE_EPSILON`].
pub fn balanced_cross_entropy(labels: &[u8], scores: &[f64]) -> Result<f64, MetricsError> {
    let (n_pos, n_neg) = check_inputs(labels, scores)?;
    if let Some(index) = scores.iter().position(|s| !(0.0..=1.0).contains(s)) {
        return Err(MetricsError::ScoreOutOfRange {
            index,
            score: scores[index],
        });
    }
    let (mut pos_sum, mut neg_sum) = (0.0, 0.0);
    for (&l, &s) in labels.iter().zip(scores) {
        if l == 1 {
            pos_sum += s.max(CE_EPSILON).ln();
        } else {
            neg_sum += (1.0 - s).max(CE_EPSILON).ln();
        }
    }
    Ok(-0.5 * (pos_sum / n_pos as f64 + neg_sum / n_neg as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const L4: [u8; 4] = [1, 0, 1, 0];
    const S4: [f64; 4] = [0.9, 0.8, 0.7, 0.6];

    fn pts(roc: &RocCurve) -> Vec<(f64, f64)> {
        roc.points.iter().map(|p| (p.fpr, p.tpr)).collect()
    }

    /// Fraction of (positive, negative) pairs ranked correctly, ties 1/2.
    fn concordance(labels: &[u8], scores: &[f64]) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for (i, &li) in labels.iter().enumerate() {
            for (j, &lj) in labels.iter().enumerate() {
                if li == 1 && lj == 0 {
                    den += 1.0;
                    if scores[i] > scores[j] {
                        num += 1.0;
                    } else if scores[i] == scores[j] {
                        num += 0.5;
                    }
                }
            }
        }
        num / den
    }

    #[test]
    fn roc_four_points() {
        let roc = roc_curve(&L4, &S4).unwrap();
        assert_eq!(
            pts(&roc),
            vec![(0.0, 0.0), (0.0, 0.5), (0.5, 0.5), (0.5, 1.0), (1.0, 1.0)]
        );
        assert_eq!(roc.points[0].threshold, f64::INFINITY);
        assert_eq!(roc.points[4].threshold, 0.6);
    }

    #[test]
    fn roc_perfect_and_tied() {
        assert_eq!(
            pts(&roc_curve(&[1, 0], &[0.9, 0.1]).unwrap()),
            vec![(0.0, 0.0), (0.0, 1.0), (1.0, 1.0)]
        );
        assert_eq!(
            pts(&roc_curve(&[1, 0], &[0.5, 0.5]).unwrap()),
            vec![(0.0, 0.0), (1.0, 1.0)]
        );
    }

    #[test]
    fn roc_errors() {
        assert!(matches!(
            roc_curve(&[1, 1], &[0.1, 0.2]),
            Err(MetricsError::DegenerateClasses { .. })
        ));
        assert!(matches!(
            roc_curve(&[1, 0], &[0.1]),
            Err(MetricsError::LengthMismatch { .. })
        ));
        assert!(matches!(
            roc_curve(&[1, 2], &[0.1, 0.2]),
            Err(MetricsError::InvalidLabel(2))
        ));
        assert!(matches!(
            roc_curve(&[1, 0], &[0.1, f64::NAN]),
            Err(MetricsError::NonFiniteScore(1))
        ));
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&roc_curve(&L4, &S4).unwrap()), 0.75);
        assert_eq!(concordance(&L4, &S4), 0.75);
        assert_eq!(auc(&roc_curve(&[1, 0], &[0.9, 0.1]).unwrap()), 1.0);
        assert_eq!(auc(&roc_curve(&[1, 0, 0, 1], &[0.3; 4]).unwrap()), 0.5);
    }

    #[test]
    fn sliver_examples() {
        assert_eq!(sliver_auc(&L4, &S4, 50).unwrap(), 0.5);
        for spec in 1..=99 {
            assert_eq!(
                sliver_auc(&[1, 1, 0, 0], &[0.9, 0.8, 0.2, 0.1], spec).unwrap(),
                1.0,
                "spec {spec}"
            );
        }
        assert!(matches!(
            sliver_auc(&L4, &S4, 0),
            Err(MetricsError::BadSliverSpec(0))
        ));
        assert!(matches!(
            sliver_auc(&L4, &S4, 100),
            Err(MetricsError::BadSliverSpec(100))
        ));
        assert!(matches!(
            sliver_auc(&[0, 0], &[0.1, 0.2], 90),
            Err(MetricsError::DegenerateClasses { .. })
        ));
    }

    #[test]
    fn sliver_hand_trapezoid_at_75() {
        // Over fpr <= 0.25 only (0,0) and (0,0.5) survive; extension to
        // (0.25, 0.5) gives area 0.125 and a normalized value of 0.5.
        assert_eq!(sliver_auc(&L4, &S4, 75).unwrap(), 0.5);
    }

    #[test]
    fn sens_at_spec_examples() {
        let r = sens_at_spec(&L4, &S4, 75.0).unwrap();
        assert_eq!((r.sensitivity, r.threshold), (0.5, 0.9));
        let r = sens_at_spec(&[1, 0], &[0.9, 0.1], 90.0).unwrap();
        assert_eq!((r.sensitivity, r.threshold), (1.0, 0.9));
        let r = sens_at_spec(&[1, 0, 1, 0], &[0.5; 4], 90.0).unwrap();
        assert_eq!((r.sensitivity, r.threshold), (0.0, f64::INFINITY));
        assert!(matches!(
            sens_at_spec(&L4, &S4, 0.0),
            Err(MetricsError::BadSpecPct(_))
        ));
        assert!(matches!(
            sens_at_spec(&L4, &S4, 100.5),
            Err(MetricsError::BadSpecPct(_))
        ));
        // 100% specificity is attainable by a threshold above every negative.
        assert_eq!(sens_at_spec(&L4, &S4, 100.0).unwrap().sensitivity, 0.5);
    }

    #[test]
    fn two_sided_examples() {
        let t = two_sided_std(&[0.0, 1.0, 3.0], None).unwrap();
        assert!((t.right - 2f64.sqrt()).abs() < 1e-15);
        assert!((t.left - 0.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(t.middle, 1.0);

        let t = two_sided_std(&[-1.0, 0.0, 1.0], None).unwrap();
        assert_eq!(t.right, t.left);
        assert!((t.right - 0.5f64.sqrt()).abs() < 1e-15);

        let t = two_sided_std(&[5.0, 5.0, 5.0], None).unwrap();
        assert_eq!((t.right, t.left), (0.0, 0.0));

        assert!(matches!(
            two_sided_std(&[1.0], None),
            Err(MetricsError::TooFewSamples(1))
        ));
        assert!(matches!(
            two_sided_std(&[], None),
            Err(MetricsError::TooFewSamples(0))
        ));
    }

    /// Literal transcription of the mirrored-sample recipe: build the mirrored
    /// vectors and take their population standard deviation.
    fn mirrored_std_oracle(values: &[f64], middle: Option<f64>) -> (f64, f64) {
        let m = middle.unwrap_or_else(|| median(values));
        let x: Vec<f64> = values.iter().map(|v| v - m).collect();
        let pop_std = |v: &[f64]| {
            let mu = v.iter().sum::<f64>() / v.len() as f64;
            (v.iter().map(|a| (a - mu).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
        };
        let hi: Vec<f64> = x
            .iter()
            .copied()
            .filter(|&d| d >= 0.0)
            .flat_map(|d| [d, -d])
            .collect();
        let lo: Vec<f64> = x
            .iter()
            .copied()
            .filter(|&d| d <= 0.0)
            .flat_map(|d| [d, -d])
            .collect();
        (pop_std(&hi), pop_std(&lo))
    }

    #[test]
    fn two_sided_with_explicit_middle() {
        let t = two_sided_std(&[0.0, 1.0, 3.0], Some(0.0)).unwrap();
        let (r, l) = mirrored_std_oracle(&[0.0, 1.0, 3.0], Some(0.0));
        assert!((t.right - r).abs() < 1e-15);
        assert_eq!(t.left, l);
        assert_eq!(t.left, 0.0);
        // No samples at or below the middle.
        assert_eq!(two_sided_std(&[1.0, 2.0], Some(0.0)).unwrap().left, 0.0);
    }

    #[test]
    fn fisher_examples() {
        assert_eq!(fisher_distance(&[0.0, 2.0], &[4.0, 6.0]).unwrap(), 2.0);
        assert_eq!(fisher_distance(&[4.0, 6.0], &[0.0, 2.0]).unwrap(), 2.0);
        assert_eq!(
            fisher_distance(&[0.0, 1.0, 5.0], &[5.0, 0.0, 1.0]).unwrap(),
            0.0
        );
        assert!(matches!(
            fisher_distance(&[0.0, 0.0], &[1.0, 1.0]),
            Err(MetricsError::ZeroSpread)
        ));
        assert!(matches!(
            fisher_distance(&[0.0], &[1.0, 1.0]),
            Err(MetricsError::TooFewSamples(1))
        ));
    }

    #[test]
    fn fisher_uses_facing_sides() {
        // a = [0,1,3]: right sqrt2; b = [10,12,13]: median 12, left sqrt2.
        let d = fisher_distance(&[0.0, 1.0, 3.0], &[10.0, 12.0, 13.0]).unwrap();
        let expected = (35.0f64 / 3.0 - 4.0 / 3.0) / (2.0 * 2f64.sqrt());
        assert!((d - expected).abs() < 1e-12);
    }

    #[test]
    fn fisher_keeps_precision_far_from_zero() {
        // Shifting by 2^20 is exact on this grid; the mean gap must survive it.
        let a = [0.0, 0.25, 0.75, 0.125];
        let b = [0.5, 1.0, 0.875, 1.25];
        let shift = |v: &[f64]| v.iter().map(|x| x + 1048576.0).collect::<Vec<_>>();
        let near = fisher_distance(&a, &b).unwrap();
        let far = fisher_distance(&shift(&a), &shift(&b)).unwrap();
        assert_eq!(near, far);
    }

    #[test]
    fn bce_examples() {
        assert!((balanced_cross_entropy(&[0, 1], &[0.5, 0.5]).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert_eq!(balanced_cross_entropy(&[0, 1], &[0.0, 1.0]).unwrap(), 0.0);
        let expected = -0.5 * (0.9f64.ln() + (0.8f64.ln() + 0.6f64.ln()) / 2.0);
        let got = balanced_cross_entropy(&[0, 0, 1], &[0.2, 0.4, 0.9]).unwrap();
        assert!((got - expected).abs() < 1e-15);
        // Direct evaluation gives 0.2361726.
        assert!((got - 0.2361726).abs() < 1e-7);
        // Confidently wrong predictions hit the clip floor instead of infinity.
        let clipped = balanced_cross_entropy(&[0, 1], &[1.0, 0.0]).unwrap();
        assert!((clipped + CE_EPSILON.ln()).abs() < 1e-9);
        assert!(matches!(
            balanced_cross_entropy(&[0, 1], &[0.5, 1.5]),
            Err(MetricsError::ScoreOutOfRange { .. })
        ));
        assert!(matches!(
            balanced_cross_entropy(&[1, 1], &[0.5, 0.5]),
            Err(MetricsError::DegenerateClasses { .. })
        ));
    }

    fn arb_instance(max_n: usize) -> impl Strategy<Value = (Vec<u8>, Vec<f64>)> {
        (2..=max_n)
            .prop_flat_map(|n| {
                (
                    proptest::collection::vec(0u8..=1, n),
                    proptest::collection::vec(0u8..8, n),
                    proptest::collection::vec(-5.0f64..5.0, n),
                    any::<bool>(),
                )
            })
            .prop_filter("both classes", |(l, ..)| l.contains(&0) && l.contains(&1))
            .prop_map(|(labels, coarse, fine, tied)| {
                let scores = if tied {
                    coarse.iter().map(|&c| c as f64 / 4.0).collect()
                } else {
                    fine
                };
                (labels, scores)
            })
    }

    proptest! {
        #[test]
        fn auc_equals_concordance((labels, scores) in arb_instance(200)) {
            let a = auc(&roc_curve(&labels, &scores).unwrap());
            prop_assert!((a - concordance(&labels, &scores)).abs() <= 1e-12);
        }

        #[test]
        fn roc_is_well_formed((labels, scores) in arb_instance(60)) {
            let roc = roc_curve(&labels, &scores).unwrap();
            let p = &roc.points;
            prop_assert_eq!((p[0].fpr, p[0].tpr), (0.0, 0.0));
            prop_assert_eq!((p[p.len() - 1].fpr, p[p.len() - 1].tpr), (1.0, 1.0));
            for w in p.windows(2) {
                prop_assert!(w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr);
                prop_assert!(w[1].threshold < w[0].threshold);
            }
        }

        #[test]
        fn full_width_sliver_is_auc((labels, scores) in arb_instance(80)) {
            let roc = roc_curve(&labels, &scores).unwrap();
            prop_assert!((sliver_auc_at_max_fpr(&roc, 1.0) - auc(&roc)).abs() <= 1e-12);
        }

        #[test]
        fn auc_and_sliver_ignore_monotone_transforms((labels, scores) in arb_instance(80), spec in 1i64..=99) {
            let warped: Vec<f64> = scores.iter().map(|s| (0.7 * s).exp() * 3.0 + 1.0).collect();
            let a = auc(&roc_curve(&labels, &scores).unwrap());
            let b = auc(&roc_curve(&labels, &warped).unwrap());
            prop_assert!((a - b).abs() <= 1e-12);
            let a = sliver_auc(&labels, &scores, spec).unwrap();
            let b = sliver_auc(&labels, &warped, spec).unwrap();
            prop_assert!((a - b).abs() <= 1e-12);
        }

        #[test]
        fn sens_at_spec_dominates_admissible_points((labels, scores) in arb_instance(80), spec in 1i64..=99) {
            let max_fpr = (100 - spec) as f64 / 100.0;
            let best = sens_at_spec(&labels, &scores, spec as f64).unwrap();
            for p in roc_curve(&labels, &scores).unwrap().points {
                if p.fpr <= max_fpr {
                    prop_assert!(best.sensitivity >= p.tpr);
                }
            }
        }

        #[test]
        fn two_sided_shift_and_scale(values in proptest::collection::vec(-100.0f64..100.0, 2..40), shift in -50.0f64..50.0, c in -4.0f64..4.0) {
            let base = two_sided_std(&values, None).unwrap();
            let shifted: Vec<f64> = values.iter().map(|v| v + shift).collect();
            let s = two_sided_std(&shifted, None).unwrap();
            prop_assert!((s.right - base.right).abs() <= 1e-9 * (1.0 + base.right));
            prop_assert!((s.left - base.left).abs() <= 1e-9 * (1.0 + base.left));
            let scaled: Vec<f64> = values.iter().map(|v| v * c).collect();
            let s = two_sided_std(&scaled, None).unwrap();
            // Negative factors swap the sides.
            let (r, l) = if c >= 0.0 { (base.right, base.left) } else { (base.left, base.right) };
            prop_assert!((s.right - c.abs() * r).abs() <= 1e-9 * (1.0 + c.abs() * r));
            prop_assert!((s.left - c.abs() * l).abs() <= 1e-9 * (1.0 + c.abs() * l));
        }

        #[test]
        fn two_sided_matches_mirrored_oracle(values in proptest::collection::vec(-10.0f64..10.0, 2..40)) {
            let t = two_sided_std(&values, None).unwrap();
            let (r, l) = mirrored_std_oracle(&values, None);
            prop_assert!((t.right - r).abs() <= 1e-12);
            prop_assert!((t.left - l).abs() <= 1e-12);
        }

        #[test]
        fn bce_ignores_class_duplication((labels, scores) in arb_instance(40), copies in 2usize..4) {
            let unit: Vec<f64> = scores.iter().map(|s| 1.0 / (1.0 + (-s).exp())).collect();
            let base = balanced_cross_entropy(&labels, &unit).unwrap();
            let (mut l2, mut s2) = (labels.clone(), unit.clone());
            for _ in 1..copies {
                for (&l, &s) in labels.iter().zip(&unit) {
                    if l == 1 {
                        l2.push(l);
                        s2.push(s);
                    }
                }
            }
            let dup = balanced_cross_entropy(&l2, &s2).unwrap();
            prop_assert!((dup - base).abs() <= 1e-12);
        }
    }
}
