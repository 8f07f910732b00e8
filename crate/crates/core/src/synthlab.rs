//! Seeded synthetic generators.
//!
//! Both generators are engineered to show a specific phenomenon; they are
//! structural replications, not models of any real dataset.
//!
//! * Experiment 1: seven objects per subject, with the class signal carried
//!   by the last few positions and a label-independent drift along the
//!   position axis. The scorer's `position_gain` undoes the drift (which helps
//!   object-level AUC only up to a point) while lifting the signal positions
//!   into the top ranks (which keeps helping subject-level AUC under
//!   `nth_largest` aggregation); `smoothing` mixes neighbouring objects, which
//!   mostly matters at object level. The two levels therefore prefer
//!   different settings and their AUCs are nearly uncorrelated across a
//!   random search.
//! * Experiment 2: a per-epoch score dump in which the negative upper tail
//!   compresses and the classes separate as training proceeds, a fraction of
//!   low-covariate positives drifts down, and scores become overconfident
//!   after a middle epoch. Balanced cross-entropy peaks early while
//!   high-specificity FoMs keep improving.
//!
//! Generator constants live in the default configs. Changing them changes
//! every seeded output.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hypersearch::{AdapterError, FoldSplit, ModelAdapter, Params, SearchSpace};
use crate::rng::SeededRng;
use crate::scoreset::{Level, ScoreRecord, ScoreTable};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("bad config: {0}")]
    BadConfig(String),
    #[error("bad parameter {name}: {reason}")]
    BadParam { name: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Exp1Config {
    pub n_subjects_per_class: usize,
    pub objects_per_subject: usize,
    pub noise_scale: f64,
    /// Label-independent drift from first to last object position.
    pub position_effect: f64,
    pub outlier_rate: f64,
    pub folds: usize,
    /// Shift of positive subjects' objects at signal positions.
    pub signal_strength: f64,
    /// Number of trailing positions that carry the class signal.
    pub signal_positions: usize,
    /// Standard deviation of the per-subject random effect.
    pub subject_spread: f64,
    /// Shift added to outlier objects.
    pub outlier_magnitude: f64,
    /// Position correction applied at `position_gain = 1`, first to last object.
    pub gain_range: f64,
    /// Spread of the per-fold monotone calibration (0 = identical folds).
    pub fold_distortion: f64,
}

impl Default for Exp1Config {
    fn default() -> Self {
        Exp1Config {
            n_subjects_per_class: 60,
            objects_per_subject: 7,
            noise_scale: 1.0,
            position_effect: -2.5,
            outlier_rate: 0.1,
            folds: 5,
            signal_strength: 1.2,
            signal_positions: 3,
            subject_spread: 0.5,
            outlier_magnitude: 3.0,
            gain_range: 3.5,
            fold_distortion: 0.5,
        }
    }
}

impl Exp1Config {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::BadConfig(m.to_string()));
        if self.n_subjects_per_class == 0 {
            return bad("n_subjects_per_class must be positive");
        }
        if self.objects_per_subject == 0 {
            return bad("objects_per_subject must be at least 1");
        }
        if self.folds < 2 || self.folds > self.n_subjects_per_class {
            return bad("folds must be in [2, n_subjects_per_class]");
        }
        if !(self.noise_scale > 0.0 && self.noise_scale.is_finite()) {
            return bad("noise_scale must be positive");
        }
        if !(0.0..1.0).contains(&self.outlier_rate) {
            return bad("outlier_rate must be in [0, 1)");
        }
        if self.signal_positions > self.objects_per_subject {
            return bad("signal_positions exceeds objects_per_subject");
        }
        let reals = [
            self.position_effect,
            self.signal_strength,
            self.subject_spread,
            self.outlier_magnitude,
            self.gain_range,
            self.fold_distortion,
        ];
        if reals.iter().any(|x| !x.is_finite())
            || self.subject_spread < 0.0
            || self.fold_distortion < 0.0
        {
            return bad("constants must be finite; spreads non-negative");
        }
        Ok(())
    }

    /// Search space over the scorer's knobs. `outlier_clip` is left out: it
    /// helps both levels alike and so couples their optima.
    pub fn default_space() -> SearchSpace {
        SearchSpace::from_json(
            r#"{"smoothing":{"type":"uniform","lo":0.0,"hi":1.0},
                "position_gain":{"type":"uniform","lo":0.0,"hi":1.0}}"#,
        )
        .expect("built-in space is valid")
    }
}

/// Scorer knobs for experiment 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Exp1Params {
    /// Weight in [0, 1] of the three-object moving average.
    pub smoothing: f64,
    /// Fraction in [0, 1] of `gain_range` used to tilt scores by position.
    pub position_gain: f64,
    /// Objects more than this far above their subject's median are replaced
    /// by the median; infinite disables clipping.
    pub outlier_clip: f64,
}

impl Exp1Params {
    /// Reads the knobs from a parameter map; `outlier_clip` is optional.
    pub fn from_params(params: &Params) -> Result<Self, SynthError> {
        let get = |name: &str, required: bool| -> Result<Option<f64>, SynthError> {
            match params.get(name) {
                Some(v) => v.as_f64().map(Some).ok_or_else(|| SynthError::BadParam {
                    name: name.to_string(),
                    reason: format!("expected a number, got {v}"),
                }),
                None if required => Err(SynthError::BadParam {
                    name: name.to_string(),
                    reason: "missing".into(),
                }),
                None => Ok(None),
            }
        };
        let p = Exp1Params {
            smoothing: get("smoothing", true)?.expect("required"),
            position_gain: get("position_gain", true)?.expect("required"),
            outlier_clip: get("outlier_clip", false)?.unwrap_or(f64::INFINITY),
        };
        for (name, v) in [
            ("smoothing", p.smoothing),
            ("position_gain", p.position_gain),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(SynthError::BadParam {
                    name: name.into(),
                    reason: format!("{v} outside [0, 1]"),
                });
            }
        }
        if p.outlier_clip.is_nan() || p.outlier_clip < 0.0 {
            return Err(SynthError::BadParam {
                name: "outlier_clip".into(),
                reason: "must be non-negative".into(),
            });
        }
        Ok(p)
    }
}

struct Exp1Subject {
    label: u8,
    fold: u32,
    raw: Vec<f64>,
}

fn exp1_subjects(config: &Exp1Config, seed: u64) -> Vec<Exp1Subject> {
    let n = config.n_subjects_per_class;
    let k = config.objects_per_subject;
    let mut folds = vec![0u32; 2 * n];
    let mut assign = SeededRng::stream(seed, "exp1-folds", 0);
    for class in 0..2 {
        let mut members: Vec<usize> = (class * n..(class + 1) * n).collect();
        assign.shuffle(&mut members);
        for (slot, subject) in members.into_iter().enumerate() {
            folds[subject] = (slot % config.folds) as u32;
        }
    }
    (0..2 * n)
        .map(|i| {
            let label = u8::from(i >= n);
            let mut rng = SeededRng::stream(seed, "exp1-subject", i as u64);
            let effect = config.subject_spread * rng.normal();
            let raw = (0..k)
                .map(|pos| {
                    let signal = if label == 1 && pos + config.signal_positions >= k {
                        config.signal_strength
                    } else {
                        0.0
                    };
                    let noise = config.noise_scale * rng.normal();
                    let outlier = if rng.bernoulli(config.outlier_rate) {
                        config.outlier_magnitude
                    } else {
                        0.0
                    };
                    signal
                        + effect
                        + config.position_effect * centred_position(pos, k)
                        + noise
                        + outlier
                })
                .collect();
            Exp1Subject {
                label,
                fold: folds[i],
                raw,
            }
        })
        .collect()
}

/// Position mapped to [-0.5, 0.5]; 0 for a single object.
fn centred_position(pos: usize, k: usize) -> f64 {
    if k == 1 {
        0.0
    } else {
        pos as f64 / (k - 1) as f64 - 0.5
    }
}

fn exp1_score(raw: &[f64], params: &Exp1Params, gain_range: f64) -> Vec<f64> {
    let k = raw.len();
    let mut sorted = raw.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = if k % 2 == 1 {
        sorted[k / 2]
    } else {
        0.5 * (sorted[k / 2 - 1] + sorted[k / 2])
    };
    let clipped: Vec<f64> = raw
        .iter()
        .map(|&x| {
            if x - median > params.outlier_clip {
                median
            } else {
                x
            }
        })
        .collect();
    (0..k)
        .map(|pos| {
            let left = clipped[pos.saturating_sub(1)];
            let right = clipped[(pos + 1).min(k - 1)];
            let smooth = (1.0 - params.smoothing) * clipped[pos]
                + params.smoothing * (left + clipped[pos] + right) / 3.0;
            smooth + params.position_gain * gain_range * centred_position(pos, k)
        })
        .collect()
}

/// Fold `k`'s model calibration: a monotone squashing with its own gain and offset.
fn fold_calibration(config: &Exp1Config, seed: u64, fold: u32) -> impl Fn(f64) -> f64 {
    let mut rng = SeededRng::stream(seed, "exp1-calibration", u64::from(fold));
    let gain = (config.fold_distortion * rng.uniform_in(-1.0, 1.0)).exp();
    let offset = config.fold_distortion * rng.uniform_in(-1.0, 1.0);
    move |x| 1.0 / (1.0 + (-(0.5 * gain * x + offset)).exp())
}

/// Per-fold object-level train/validation tables for one parameter setting.
/// Fold `k`'s model scores every subject; subjects assigned to `k` form its
/// validation table and the rest its training table.
pub fn gen_experiment1(
    config: &Exp1Config,
    params: &Params,
    seed: u64,
) -> Result<Vec<FoldSplit>, SynthError> {
    config.validate()?;
    let knobs = Exp1Params::from_params(params)?;
    let subjects = exp1_subjects(config, seed);
    let scored: Vec<Vec<f64>> = subjects
        .iter()
        .map(|s| exp1_score(&s.raw, &knobs, config.gain_range))
        .collect();
    let width = (2 * config.n_subjects_per_class).to_string().len();
    Ok((0..config.folds as u32)
        .map(|fold| {
            let calibrate = fold_calibration(config, seed, fold);
            let (mut train, mut validation) = (Vec::new(), Vec::new());
            for (i, (subject, scores)) in subjects.iter().zip(&scored).enumerate() {
                let dest = if subject.fold == fold {
                    &mut validation
                } else {
                    &mut train
                };
                for (pos, &x) in scores.iter().enumerate() {
                    let mut r =
                        ScoreRecord::new(format!("S{i:0width$}"), subject.label, calibrate(x))
                            .with_object(pos.to_string());
                    if subject.fold == fold {
                        r = r.with_fold(fold);
                    }
                    dest.push(r);
                }
            }
            FoldSplit {
                fold,
                train: ScoreTable::new(train, Level::Object),
                validation: ScoreTable::new(validation, Level::Object),
            }
        })
        .collect())
}

/// Validation tables of all folds stacked into one object-level table.
pub fn pooled_validation(splits: &[FoldSplit]) -> ScoreTable {
    let records = splits
        .iter()
        .flat_map(|s| s.validation.records.iter().cloned())
        .collect();
    ScoreTable::new(records, Level::Object)
}

/// Experiment 1 behind the search interface. The dataset is fixed by the
/// adapter's own seed, so every trial scores the same subjects; the per-trial
/// seed is unused because the scorer is deterministic.
#[derive(Debug, Clone)]
pub struct Exp1Adapter {
    pub config: Exp1Config,
    pub seed: u64,
}

impl ModelAdapter for Exp1Adapter {
    fn fold_splits(
        &self,
        params: &Params,
        n_folds: usize,
        _seed: u64,
    ) -> Result<Vec<FoldSplit>, AdapterError> {
        let config = Exp1Config {
            folds: n_folds,
            ..self.config.clone()
        };
        gen_experiment1(&config, params, self.seed).map_err(|e| AdapterError(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Exp2Config {
    pub n_epochs: usize,
    pub n_per_class: usize,
    /// Rate at which the negative upper tail compresses and the classes separate.
    pub tail_compression_rate: f64,
    /// Fraction of positives (lowest covariate first) that drift toward 0.
    pub hard_positive_fraction: f64,
    /// Logit sharpening per unit of training progress past `overconfidence_onset`.
    pub overconfidence_rate: f64,
    pub covariate_name: String,
    pub negative_mean: f64,
    pub positive_mean: f64,
    /// Logit spread of the per-subject latent.
    pub spread: f64,
    /// Mean shift per unit of compression for both classes.
    pub separation_rate: f64,
    /// Starting logit of hard positives relative to `negative_mean`.
    pub hard_offset: f64,
    /// Downward drift of hard positives per unit of compression.
    pub hard_drift: f64,
    /// Per-epoch logit noise.
    pub epoch_jitter: f64,
    /// Training progress in [0, 1] after which overconfidence grows.
    pub overconfidence_onset: f64,
    pub covariate_min: f64,
    pub covariate_max: f64,
}

impl Default for Exp2Config {
    fn default() -> Self {
        Exp2Config {
            n_epochs: 40,
            n_per_class: 200,
            tail_compression_rate: 1.0,
            hard_positive_fraction: 0.2,
            overconfidence_rate: 3.0,
            covariate_name: "cov_ga_days".to_string(),
            negative_mean: -1.5,
            positive_mean: 1.0,
            spread: 1.2,
            separation_rate: 0.3,
            hard_offset: 0.5,
            hard_drift: 0.7,
            epoch_jitter: 0.02,
            overconfidence_onset: 0.5,
            covariate_min: 100.0,
            covariate_max: 280.0,
        }
    }
}

impl Exp2Config {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::BadConfig(m.to_string()));
        if self.n_epochs < 2 {
            return bad("n_epochs must be at least 2");
        }
        if self.n_per_class == 0 {
            return bad("n_per_class must be positive");
        }
        if !(self.tail_compression_rate >= 0.0 && self.tail_compression_rate.is_finite()) {
            return bad("tail_compression_rate must be non-negative");
        }
        if !(0.0..1.0).contains(&self.hard_positive_fraction) {
            return bad("hard_positive_fraction must be in [0, 1)");
        }
        if !(self.overconfidence_rate >= 0.0 && self.overconfidence_rate.is_finite()) {
            return bad("overconfidence_rate must be non-negative");
        }
        if !self
            .covariate_name
            .starts_with(crate::scoreset::COVARIATE_PREFIX)
        {
            return bad("covariate_name must start with cov_");
        }
        let reals = [
            self.negative_mean,
            self.positive_mean,
            self.spread,
            self.separation_rate,
            self.hard_offset,
            self.hard_drift,
            self.epoch_jitter,
            self.overconfidence_onset,
            self.covariate_min,
            self.covariate_max,
        ];
        if reals.iter().any(|x| !x.is_finite()) || self.spread <= 0.0 || self.epoch_jitter < 0.0 {
            return bad("constants must be finite; spread positive, jitter non-negative");
        }
        if !(0.0..=1.0).contains(&self.overconfidence_onset)
            || self.covariate_min >= self.covariate_max
        {
            return bad("overconfidence_onset must be in [0, 1] and covariate_min < covariate_max");
        }
        Ok(())
    }
}

/// Subject-level dump with one row per subject per epoch, ordered by epoch
/// then subject. Scores are probabilities in (0, 1).
pub fn gen_experiment2(config: &Exp2Config, seed: u64) -> Result<ScoreTable, SynthError> {
    config.validate()?;
    let n = config.n_per_class;
    let mut latent = Vec::with_capacity(2 * n);
    let mut covariate = Vec::with_capacity(2 * n);
    for i in 0..2 * n {
        let mut rng = SeededRng::stream(seed, "exp2-subject", i as u64);
        latent.push(rng.normal());
        covariate.push(rng.uniform_in(config.covariate_min, config.covariate_max));
    }
    // Hard positives: the lowest-covariate fraction of positives.
    let mut positives: Vec<usize> = (n..2 * n).collect();
    positives.sort_by(|&a, &b| covariate[a].total_cmp(&covariate[b]).then(a.cmp(&b)));
    let n_hard = (config.hard_positive_fraction * n as f64).floor() as usize;
    let mut hard = vec![false; 2 * n];
    for &i in &positives[..n_hard] {
        hard[i] = true;
    }

    let width = (2 * n).to_string().len();
    let mut records = Vec::with_capacity(2 * n * config.n_epochs);
    for epoch in 0..config.n_epochs {
        let progress = epoch as f64 / (config.n_epochs - 1) as f64;
        let g = config.tail_compression_rate * progress;
        let sharpness =
            1.0 + config.overconfidence_rate * (progress - config.overconfidence_onset).max(0.0);
        let mut rng = SeededRng::stream(seed, "exp2-epoch", epoch as u64);
        for i in 0..2 * n {
            let label = u8::from(i >= n);
            let u = latent[i];
            let (mean, scale) = if hard[i] {
                (
                    config.negative_mean + config.hard_offset - config.hard_drift * g,
                    config.spread,
                )
            } else if label == 1 {
                (
                    config.positive_mean + config.separation_rate * g,
                    config.spread,
                )
            } else if u > 0.0 {
                (
                    config.negative_mean - config.separation_rate * g,
                    config.spread / (1.0 + g),
                )
            } else {
                (
                    config.negative_mean - config.separation_rate * g,
                    config.spread,
                )
            };
            let z = mean + scale * u + config.epoch_jitter * rng.normal();
            let score = 1.0 / (1.0 + (-sharpness * z).exp());
            records.push(
                ScoreRecord::new(format!("P{i:0width$}"), label, score)
                    .with_epoch(epoch as u32)
                    .with_covariate(config.covariate_name.clone(), covariate[i]),
            );
        }
    }
    Ok(ScoreTable::new(records, Level::Subject))
}

/// Config of either experiment as read from JSON.
pub fn exp1_config_from_json(text: &str) -> Result<Exp1Config, SynthError> {
    let config: Exp1Config =
        serde_json::from_str(text).map_err(|e| SynthError::BadConfig(e.to_string()))?;
    config.validate()?;
    Ok(config)
}

pub fn exp2_config_from_json(text: &str) -> Result<Exp2Config, SynthError> {
    let config: Exp2Config =
        serde_json::from_str(text).map_err(|e| SynthError::BadConfig(e.to_string()))?;
    config.validate()?;
    Ok(config)
}

/// Parameter map from `(name, value)` pairs.
pub fn params_of(pairs: &[(&str, f64)]) -> Params {
    pairs
        .iter()
        .map(|(k, v)| (k.to_string(), serde_json::Value::from(*v)))
        .collect::<BTreeMap<_, _>>()
}
