//! Black-box hyperparameter search: random sampling and a small Tree of
//! Parzen Estimators, minimizing `1 - FoM` through a k-fold harness.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::aggregate::{self, AggregateError, AggregationRule};
use crate::foldalign::{self, AlignError, CanonicalScale};
use crate::fom::FomSpec;
use crate::metrics::{self, MetricsError};
use crate::rng::{derive_seed, SeededRng};
use crate::scoreset::{Level, ScoreRecord, ScoreTable};

/// Sampled hyperparameter values by name.
pub type Params = BTreeMap<String, Value>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ParamDomain {
    Uniform {
        lo: f64,
        hi: f64,
    },
    Loguniform {
        lo: f64,
        hi: f64,
    },
    /// Inclusive integer range.
    Int {
        lo: i64,
        hi: i64,
    },
    Choice {
        values: Vec<Value>,
    },
}

impl ParamDomain {
    fn check(&self) -> Result<(), String> {
        match self {
            ParamDomain::Uniform { lo, hi } if !(lo.is_finite() && hi.is_finite() && lo < hi) => {
                Err(format!("need finite lo < hi, got [{lo}, {hi}]"))
            }
            ParamDomain::Loguniform { lo, hi }
                if !(lo.is_finite() && hi.is_finite() && *lo > 0.0 && lo < hi) =>
            {
                Err(format!("need 0 < lo < hi, got [{lo}, {hi}]"))
            }
            ParamDomain::Int { lo, hi } if lo >= hi => {
                Err(format!("need lo < hi, got [{lo}, {hi}]"))
            }
            ParamDomain::Choice { values } if values.is_empty() => Err("no choices".into()),
            _ => Ok(()),
        }
    }

    /// Whether `value` lies in the domain.
    pub fn contains(&self, value: &Value) -> bool {
        match self {
            ParamDomain::Uniform { lo, hi } | ParamDomain::Loguniform { lo, hi } => {
                value.as_f64().is_some_and(|x| *lo <= x && x <= *hi)
            }
            ParamDomain::Int { lo, hi } => value.as_i64().is_some_and(|x| *lo <= x && x <= *hi),
            ParamDomain::Choice { values } => values.contains(value),
        }
    }

    /// Bounds of the continuous coordinate the density models work in.
    fn internal_bounds(&self) -> Option<(f64, f64)> {
        match *self {
            ParamDomain::Uniform { lo, hi } => Some((lo, hi)),
            ParamDomain::Loguniform { lo, hi } => Some((lo.ln(), hi.ln())),
            ParamDomain::Int { lo, hi } => Some((lo as f64 - 0.5, hi as f64 + 0.5)),
            ParamDomain::Choice { .. } => None,
        }
    }

    fn to_internal(&self, value: &Value) -> Option<f64> {
        match self {
            ParamDomain::Uniform { .. } => value.as_f64(),
            ParamDomain::Loguniform { .. } => value.as_f64().filter(|x| *x > 0.0).map(f64::ln),
            ParamDomain::Int { .. } => value.as_i64().map(|x| x as f64),
            ParamDomain::Choice { .. } => None,
        }
    }

    fn value_at(&self, x: f64) -> Value {
        match *self {
            ParamDomain::Uniform { lo, hi } => Value::from(x.clamp(lo, hi)),
            ParamDomain::Loguniform { lo, hi } => Value::from(x.exp().clamp(lo, hi)),
            ParamDomain::Int { lo, hi } => Value::from((x.round() as i64).clamp(lo, hi)),
            ParamDomain::Choice { .. } => {
                unreachable!("categorical domains have no internal coordinate")
            }
        }
    }

    fn sample_random(&self, rng: &mut SeededRng) -> Value {
        match self {
            ParamDomain::Uniform { lo, hi } => Value::from(rng.uniform_in(*lo, *hi)),
            ParamDomain::Loguniform { lo, hi } => {
                Value::from(rng.uniform_in(lo.ln(), hi.ln()).exp().clamp(*lo, *hi))
            }
            ParamDomain::Int { lo, hi } => Value::from(lo + rng.below((hi - lo) as u64 + 1) as i64),
            ParamDomain::Choice { values } => {
                values[rng.below(values.len() as u64) as usize].clone()
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SearchSpace {
    pub params: BTreeMap<String, ParamDomain>,
}

impl SearchSpace {
    pub fn from_json(text: &str) -> Result<Self, SearchError> {
        let space: SearchSpace =
            serde_json::from_str(text).map_err(|e| SearchError::BadSpace(e.to_string()))?;
        space.validate()?;
        Ok(space)
    }

    pub fn validate(&self) -> Result<(), SearchError> {
        if self.params.is_empty() {
            return Err(SearchError::EmptySpace);
        }
        for (name, domain) in &self.params {
            domain
                .check()
                .map_err(|reason| SearchError::BadSpace(format!("parameter {name}: {reason}")))?;
        }
        Ok(())
    }

    /// Whether every domain has a value in `params` and every value conforms.
    pub fn conforms(&self, params: &Params) -> bool {
        params.len() == self.params.len()
            && self
                .params
                .iter()
                .all(|(name, d)| params.get(name).is_some_and(|v| d.contains(v)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Random,
    Tpe,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Random => "random",
            Strategy::Tpe => "tpe",
        })
    }
}

impl FromStr for Strategy {
    type Err = SearchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "random" => Ok(Strategy::Random),
            "tpe" => Ok(Strategy::Tpe),
            _ => Err(SearchError::BadStrategy(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TpeSettings {
    /// Fraction of trials (by loss) forming the "good" density.
    pub gamma: f64,
    /// Completed trials needed before the model is used.
    pub n_startup: usize,
    pub n_candidates: usize,
    /// Lower bound on kernel bandwidth, as a fraction of the domain width.
    pub bandwidth_floor: f64,
}

impl Default for TpeSettings {
    fn default() -> Self {
        TpeSettings {
            gamma: 0.25,
            n_startup: 10,
            n_candidates: 24,
            bandwidth_floor: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub index: usize,
    pub params: Params,
    pub loss: f64,
    pub aux_foms: BTreeMap<String, f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialLedger {
    pub space: SearchSpace,
    pub strategy: Strategy,
    pub objective_descr: String,
    pub trials: Vec<Trial>,
}

#[derive(Serialize, Deserialize)]
struct LedgerHeader {
    space: SearchSpace,
    strategy: Strategy,
    objective: String,
}

impl TrialLedger {
    pub fn new(space: SearchSpace, strategy: Strategy, objective_descr: impl Into<String>) -> Self {
        TrialLedger {
            space,
            strategy,
            objective_descr: objective_descr.into(),
            trials: Vec::new(),
        }
    }

    /// Lowest-loss trial; ties go to the lowest index.
    pub fn best(&self) -> Option<&Trial> {
        self.trials
            .iter()
            .reduce(|best, t| if t.loss < best.loss { t } else { best })
    }

    /// Header line with space, strategy and objective, then one trial per line.
    pub fn to_jsonl(&self) -> String {
        let header = LedgerHeader {
            space: self.space.clone(),
            strategy: self.strategy,
            objective: self.objective_descr.clone(),
        };
        let mut out = serde_json::to_string(&header).expect("ledger header serializes");
        out.push('\n');
        for t in &self.trials {
            out.push_str(&serde_json::to_string(t).expect("trial serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, SearchError> {
        let bad = |line: usize, e: serde_json::Error| SearchError::BadLedger {
            line,
            reason: e.to_string(),
        };
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let (_, first) = lines.next().ok_or(SearchError::BadLedger {
            line: 1,
            reason: "empty ledger".into(),
        })?;
        let header: LedgerHeader = serde_json::from_str(first).map_err(|e| bad(1, e))?;
        let mut ledger = TrialLedger::new(header.space, header.strategy, header.objective);
        for (i, line) in lines {
            let trial: Trial = serde_json::from_str(line).map_err(|e| bad(i + 1, e))?;
            if trial.index != ledger.trials.len() {
                return Err(SearchError::BadLedger {
                    line: i + 1,
                    reason: format!("trial index {} out of sequence", trial.index),
                });
            }
            ledger.trials.push(trial);
        }
        Ok(ledger)
    }
}

/// What a search optimizes: a FoM at object or subject level over k folds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveSpec {
    pub level: Level,
    pub fom: FomSpec,
    /// Used when `level` is subject.
    pub aggregation: AggregationRule,
    pub folds: usize,
}

impl fmt::Display for ObjectiveSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let level = match self.level {
            Level::Object => "object",
            Level::Subject => "subject",
        };
        write!(f, "level={level} fom={} folds={}", self.fom, self.folds)?;
        if self.level == Level::Subject {
            write!(f, " aggregation={}", self.aggregation)?;
        }
        Ok(())
    }
}

/// Object-level scores for one cross-validation fold.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldSplit {
    pub fold: u32,
    pub train: ScoreTable,
    pub validation: ScoreTable,
}

/// A model under search: given hyperparameters, produce per-fold object scores.
pub trait ModelAdapter: Sync {
    fn fold_splits(
        &self,
        params: &Params,
        n_folds: usize,
        seed: u64,
    ) -> Result<Vec<FoldSplit>, AdapterError>;
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{0}")]
pub struct AdapterError(pub String);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SearchError {
    #[error("search space has no parameters")]
    EmptySpace,
    #[error("bad search space: {0}")]
    BadSpace(String),
    #[error("unknown strategy {0:?}; expected random or tpe")]
    BadStrategy(String),
    #[error("budget must be at least 1")]
    BadBudget,
    #[error("need at least 2 folds, got {0}")]
    BadFolds(usize),
    #[error("model adapter failed: {0}")]
    Adapter(#[from] AdapterError),
    #[error("fold {fold}: {source}")]
    Fold { fold: u32, source: MetricsError },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Aggregate(#[from] AggregateError),
    #[error(transparent)]
    Align(#[from] AlignError),
    #[error("objective produced a non-finite loss")]
    NonFiniteLoss,
    #[error("trial {index} failed: {source}")]
    TrialFailed {
        index: usize,
        source: Box<SearchError>,
        /// Trials completed before the failure.
        partial: Box<TrialLedger>,
    },
    #[error("ledger line {line}: {reason}")]
    BadLedger { line: usize, reason: String },
}

/// Draws one parameter set. With [`Strategy::Tpe`] the completed `trials`
/// steer sampling once there are at least `settings.n_startup` of them.
pub fn sample_params(
    space: &SearchSpace,
    trials: &[Trial],
    strategy: Strategy,
    settings: &TpeSettings,
    rng_seed: u64,
) -> Result<Params, SearchError> {
    space.validate()?;
    let mut rng = SeededRng::new(rng_seed);
    if strategy == Strategy::Random || trials.len() < settings.n_startup.max(1) {
        return Ok(space
            .params
            .iter()
            .map(|(n, d)| (n.clone(), d.sample_random(&mut rng)))
            .collect());
    }

    let mut ranked: Vec<&Trial> = trials.iter().collect();
    ranked.sort_by(|a, b| a.loss.total_cmp(&b.loss).then(a.index.cmp(&b.index)));
    let n_good = ((settings.gamma * ranked.len() as f64).ceil() as usize).clamp(1, ranked.len());
    let (good, bad) = ranked.split_at(n_good);

    let models: Vec<(&String, ParamModel)> = space
        .params
        .iter()
        .map(|(name, domain)| (name, ParamModel::fit(name, domain, good, bad, settings)))
        .collect();

    let mut best: Option<(f64, Params)> = None;
    for _ in 0..settings.n_candidates.max(1) {
        let mut params = Params::new();
        let mut score = 0.0;
        for (name, model) in &models {
            let (value, ratio) = model.draw(&mut rng);
            score += ratio;
            params.insert((*name).clone(), value);
        }
        if best.as_ref().is_none_or(|(s, _)| score > *s) {
            best = Some((score, params));
        }
    }
    Ok(best.expect("at least one candidate").1)
}

/// Per-parameter good/bad densities.
enum ParamModel<'a> {
    Continuous {
        domain: &'a ParamDomain,
        bounds: (f64, f64),
        good: Kde,
        bad: Kde,
    },
    Categorical {
        values: &'a [Value],
        good: Vec<f64>,
        bad: Vec<f64>,
    },
}

impl<'a> ParamModel<'a> {
    fn fit(
        name: &str,
        domain: &'a ParamDomain,
        good: &[&Trial],
        bad: &[&Trial],
        settings: &TpeSettings,
    ) -> Self {
        fn observed<'t>(set: &[&'t Trial], name: &str) -> Vec<&'t Value> {
            set.iter().filter_map(|t| t.params.get(name)).collect()
        }
        match domain {
            ParamDomain::Choice { values } => {
                let freq = |set: &[&Trial]| {
                    let obs = observed(set, name);
                    let k = values.len() as f64;
                    values
                        .iter()
                        .map(|v| {
                            (obs.iter().filter(|o| **o == v).count() as f64 + 1.0)
                                / (obs.len() as f64 + k)
                        })
                        .collect()
                };
                ParamModel::Categorical {
                    values,
                    good: freq(good),
                    bad: freq(bad),
                }
            }
            _ => {
                let bounds = domain.internal_bounds().expect("continuous domain");
                let floor = settings.bandwidth_floor * (bounds.1 - bounds.0);
                let kde = |set: &[&Trial]| {
                    let xs: Vec<f64> = observed(set, name)
                        .into_iter()
                        .filter_map(|v| domain.to_internal(v))
                        .collect();
                    Kde::fit(xs, bounds, floor)
                };
                ParamModel::Continuous {
                    domain,
                    bounds,
                    good: kde(good),
                    bad: kde(bad),
                }
            }
        }
    }

    /// Draws from the good density; returns the value and its log density ratio.
    fn draw(&self, rng: &mut SeededRng) -> (Value, f64) {
        match self {
            ParamModel::Continuous {
                domain,
                bounds,
                good,
                bad,
            } => {
                let x = good.sample(rng, *bounds);
                let value = domain.value_at(x);
                let x = domain.to_internal(&value).expect("own value");
                (value, good.log_density(x) - bad.log_density(x))
            }
            ParamModel::Categorical { values, good, bad } => {
                let u = rng.uniform();
                let mut acc = 0.0;
                let mut j = values.len() - 1;
                for (i, w) in good.iter().enumerate() {
                    acc += w;
                    if u < acc {
                        j = i;
                        break;
                    }
                }
                (values[j].clone(), good[j].ln() - bad[j].ln())
            }
        }
    }
}

/// Gaussian kernel density with Scott's bandwidth, mixed with a uniform prior
/// over the domain that weighs as much as one observation.
struct Kde {
    points: Vec<f64>,
    bandwidth: f64,
    width: f64,
}

impl Kde {
    fn fit(points: Vec<f64>, bounds: (f64, f64), floor: f64) -> Self {
        let width = bounds.1 - bounds.0;
        let n = points.len() as f64;
        let bandwidth = if points.len() < 2 {
            width
        } else {
            let mean = points.iter().sum::<f64>() / n;
            let sd = (points.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
            sd * n.powf(-0.2)
        };
        Kde {
            points,
            bandwidth: bandwidth.max(floor),
            width,
        }
    }

    fn log_density(&self, x: f64) -> f64 {
        let h = self.bandwidth;
        let kernel = 1.0 / ((2.0 * std::f64::consts::PI).sqrt() * h);
        let sum: f64 = self
            .points
            .iter()
            .map(|p| kernel * (-0.5 * ((x - p) / h).powi(2)).exp())
            .sum();
        ((sum + 1.0 / self.width) / (self.points.len() as f64 + 1.0)).ln()
    }

    fn sample(&self, rng: &mut SeededRng, (lo, hi): (f64, f64)) -> f64 {
        let pick = rng.below(self.points.len() as u64 + 1) as usize;
        let Some(&centre) = self.points.get(pick) else {
            return rng.uniform_in(lo, hi);
        };
        for _ in 0..16 {
            let x = centre + self.bandwidth * rng.normal();
            if (lo..=hi).contains(&x) {
                return x;
            }
        }
        centre.clamp(lo, hi)
    }
}

/// Loss and auxiliary FoMs of one parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub aux_foms: BTreeMap<String, f64>,
}

pub const OBJECT_AUC: &str = "object_auc";
pub const SUBJECT_AUC: &str = "subject_auc";

/// Runs the adapter over all folds, pools validation scores at both levels
/// after fold alignment and scores the driving FoM. The loss is `1 - FoM`
/// (or the FoM itself when lower is better).
pub fn cv_objective(
    adapter: &dyn ModelAdapter,
    spec: &ObjectiveSpec,
    params: &Params,
    seed: u64,
) -> Result<Evaluation, SearchError> {
    if spec.folds < 2 {
        return Err(SearchError::BadFolds(spec.folds));
    }
    let splits = adapter.fold_splits(params, spec.folds, seed)?;
    let mut objects = Vec::new();
    let mut subjects = Vec::new();
    for split in &splits {
        let validation = with_fold(&split.validation, split.fold);
        let (labels, scores) = (validation.labels(), validation.scores());
        metrics::roc_curve(&labels, &scores).map_err(|source| SearchError::Fold {
            fold: split.fold,
            source,
        })?;
        subjects.extend(aggregate::aggregate_subjects(&validation, spec.aggregation)?.records);
        objects.extend(validation.records);
    }
    let objects = pool_aligned(ScoreTable::new(objects, Level::Object))?;
    let subjects = pool_aligned(ScoreTable::new(subjects, Level::Subject))?;

    let auc =
        |t: &ScoreTable| metrics::roc_curve(&t.labels(), &t.scores()).map(|roc| metrics::auc(&roc));
    let mut aux_foms = BTreeMap::new();
    aux_foms.insert(OBJECT_AUC.to_string(), auc(&objects)?);
    aux_foms.insert(SUBJECT_AUC.to_string(), auc(&subjects)?);

    let (driving, prefix) = match spec.level {
        Level::Object => (&objects, "object"),
        Level::Subject => (&subjects, "subject"),
    };
    let value = spec.fom.evaluate(&driving.labels(), &driving.scores())?;
    aux_foms.insert(format!("{prefix}_{}", spec.fom), value);
    let loss = if spec.fom.higher_is_better() {
        1.0 - value
    } else {
        value
    };
    if !loss.is_finite() {
        return Err(SearchError::NonFiniteLoss);
    }
    Ok(Evaluation { loss, aux_foms })
}

fn with_fold(table: &ScoreTable, fold: u32) -> ScoreTable {
    let records = table
        .records
        .iter()
        .map(|r| ScoreRecord {
            fold: Some(fold),
            ..r.clone()
        })
        .collect();
    ScoreTable::new(records, table.level)
}

/// Aligns folds onto the default canonical scale. Folds whose controls carry
/// no spread (e.g. a constant scorer) cannot be aligned; the table is then
/// pooled as is.
fn pool_aligned(table: ScoreTable) -> Result<ScoreTable, SearchError> {
    match foldalign::fit_alignment(&table, CanonicalScale::default()) {
        Ok(model) => Ok(foldalign::apply_alignment(&table, &model)?),
        Err(AlignError::ZeroSpread { .. } | AlignError::TooFewControls { .. }) => Ok(table),
        Err(e) => Err(e.into()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchOptions {
    pub budget: usize,
    pub strategy: Strategy,
    pub seed: u64,
    /// Trials evaluated concurrently. Random search gives identical ledgers
    /// for any value; TPE conditions each batch of `jobs` trials on the
    /// trials completed before it, so its ledger depends on `jobs`.
    pub jobs: usize,
    pub tpe: TpeSettings,
}

impl SearchOptions {
    pub fn new(budget: usize, strategy: Strategy, seed: u64) -> Self {
        SearchOptions {
            budget,
            strategy,
            seed,
            jobs: 1,
            tpe: TpeSettings::default(),
        }
    }
}

/// Seed of trial `index` under search seed `seed`.
pub fn trial_seed(seed: u64, index: usize) -> u64 {
    derive_seed(seed, "trial", index as u64)
}

/// Runs `budget` trials. Trial `i` samples with and hands the adapter a seed
/// derived from `(seed, i)`. On failure the error carries the trials that
/// completed before the failing one.
pub fn run_search(
    adapter: &dyn ModelAdapter,
    spec: &ObjectiveSpec,
    space: &SearchSpace,
    options: &SearchOptions,
) -> Result<TrialLedger, SearchError> {
    space.validate()?;
    if options.budget == 0 {
        return Err(SearchError::BadBudget);
    }
    if spec.folds < 2 {
        return Err(SearchError::BadFolds(spec.folds));
    }
    let mut ledger = TrialLedger::new(space.clone(), options.strategy, spec.to_string());
    let jobs = options.jobs.max(1);
    let mut next = 0;
    while next < options.budget {
        let batch: Vec<(usize, u64, Params)> = (next..(next + jobs).min(options.budget))
            .map(|index| {
                let seed = trial_seed(options.seed, index);
                let sample_seed = derive_seed(seed, "sample", 0);
                sample_params(
                    space,
                    &ledger.trials,
                    options.strategy,
                    &options.tpe,
                    sample_seed,
                )
                .map(|p| (index, seed, p))
            })
            .collect::<Result<_, _>>()?;
        next += batch.len();

        let results: Vec<Result<Evaluation, SearchError>> = if batch.len() == 1 {
            vec![cv_objective(adapter, spec, &batch[0].2, batch[0].1)]
        } else {
            std::thread::scope(|scope| {
                let handles: Vec<_> = batch
                    .iter()
                    .map(|(_, seed, params)| {
                        scope.spawn(move || cv_objective(adapter, spec, params, *seed))
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("trial thread panicked"))
                    .collect()
            })
        };

        for ((index, seed, params), result) in batch.into_iter().zip(results) {
            match result {
                Ok(eval) => ledger.trials.push(Trial {
                    index,
                    params,
                    loss: eval.loss,
                    aux_foms: eval.aux_foms,
                    seed,
                }),
                Err(source) => {
                    return Err(SearchError::TrialFailed {
                        index,
                        source: Box::new(source),
                        partial: Box::new(ledger),
                    })
                }
            }
        }
    }
    Ok(ledger)
}

/// One row of the loss-sorted trial table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedTrial {
    /// 1 for the best trial.
    pub rank: usize,
    pub index: usize,
    pub loss: f64,
    pub object_auc: Option<f64>,
    pub subject_auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LedgerAnalysis {
    /// Best trial first; ties by index.
    pub sorted: Vec<RankedTrial>,
    /// (object AUC, subject AUC) per trial that carries both, in index order.
    pub scatter: Vec<(f64, f64)>,
    /// Spearman correlation of the scatter pairs; `None` when undefined.
    pub spearman: Option<f64>,
}

pub fn ledger_analysis(ledger: &TrialLedger) -> LedgerAnalysis {
    let mut order: Vec<&Trial> = ledger.trials.iter().collect();
    order.sort_by(|a, b| a.loss.total_cmp(&b.loss).then(a.index.cmp(&b.index)));
    let sorted = order
        .iter()
        .enumerate()
        .map(|(i, t)| RankedTrial {
            rank: i + 1,
            index: t.index,
            loss: t.loss,
            object_auc: t.aux_foms.get(OBJECT_AUC).copied(),
            subject_auc: t.aux_foms.get(SUBJECT_AUC).copied(),
        })
        .collect();
    let scatter: Vec<(f64, f64)> = ledger
        .trials
        .iter()
        .filter_map(|t| Some((*t.aux_foms.get(OBJECT_AUC)?, *t.aux_foms.get(SUBJECT_AUC)?)))
        .collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = scatter.iter().copied().unzip();
    LedgerAnalysis {
        sorted,
        scatter,
        spearman: spearman(&xs, &ys),
    }
}

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation (Pearson on average ranks). `None` for fewer
/// than two pairs, mismatched lengths, or a constant side.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let (rx, ry) = (average_ranks(xs), average_ranks(ys));
    let n = xs.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{any, prop, prop_assert, prop_assert_eq, prop_assume, proptest};

    fn unit_space() -> SearchSpace {
        SearchSpace::from_json(r#"{"x":{"type":"uniform","lo":0.0,"hi":1.0}}"#).unwrap()
    }

    fn mixed_space() -> SearchSpace {
        SearchSpace::from_json(
            r#"{"a":{"type":"uniform","lo":-2.0,"hi":3.0},
                "b":{"type":"loguniform","lo":0.001,"hi":10.0},
                "c":{"type":"int","lo":1,"hi":7},
                "d":{"type":"choice","values":["rbf","linear",3]}}"#,
        )
        .unwrap()
    }

    #[test]
    fn space_json_and_validation() {
        let space = mixed_space();
        assert_eq!(space.params["c"], ParamDomain::Int { lo: 1, hi: 7 });
        let back: SearchSpace =
            serde_json::from_str(&serde_json::to_string(&space).unwrap()).unwrap();
        assert_eq!(back, space);
        for bad in [
            r#"{}"#,
            r#"{"x":{"type":"uniform","lo":1.0,"hi":1.0}}"#,
            r#"{"x":{"type":"loguniform","lo":0.0,"hi":1.0}}"#,
            r#"{"x":{"type":"int","lo":3,"hi":2}}"#,
            r#"{"x":{"type":"choice","values":[]}}"#,
            r#"{"x":{"type":"normal","lo":0.0,"hi":1.0}}"#,
        ] {
            assert!(SearchSpace::from_json(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn random_sampling_is_contained_and_reproducible() {
        let space = mixed_space();
        let settings = TpeSettings::default();
        for seed in 0..10_000 {
            let p = sample_params(&space, &[], Strategy::Random, &settings, seed).unwrap();
            assert!(space.conforms(&p), "{p:?}");
        }
        let once = sample_params(&unit_space(), &[], Strategy::Random, &settings, 42).unwrap();
        let twice = sample_params(&unit_space(), &[], Strategy::Random, &settings, 42).unwrap();
        assert_eq!(once, twice);
        let x = once["x"].as_f64().unwrap();
        assert!((0.0..1.0).contains(&x));

        let single = SearchSpace::from_json(r#"{"k":{"type":"choice","values":["a"]}}"#).unwrap();
        for seed in 0..50 {
            let p = sample_params(&single, &[], Strategy::Tpe, &settings, seed).unwrap();
            assert_eq!(p["k"], Value::from("a"));
        }
    }

    #[test]
    fn tpe_without_history_is_random() {
        let space = mixed_space();
        let settings = TpeSettings::default();
        for seed in 0..100 {
            assert_eq!(
                sample_params(&space, &[], Strategy::Tpe, &settings, seed).unwrap(),
                sample_params(&space, &[], Strategy::Random, &settings, seed).unwrap()
            );
        }
    }

    fn quadratic_trials(space: &SearchSpace, n: usize) -> Vec<Trial> {
        let settings = TpeSettings::default();
        (0..n)
            .map(|i| {
                let params = sample_params(
                    space,
                    &[],
                    Strategy::Random,
                    &settings,
                    derive_seed(1, "t", i as u64),
                )
                .unwrap();
                let x = params["x"].as_f64().unwrap();
                Trial {
                    index: i,
                    params,
                    loss: (x - 0.3).powi(2),
                    aux_foms: BTreeMap::new(),
                    seed: 0,
                }
            })
            .collect()
    }

    #[test]
    fn tpe_concentrates_near_the_optimum() {
        let space = unit_space();
        let trials = quadratic_trials(&space, 50);
        let settings = TpeSettings::default();
        let inside = |strategy| {
            (0..50)
                .filter(|&i| {
                    let p =
                        sample_params(&space, &trials, strategy, &settings, derive_seed(2, "s", i))
                            .unwrap();
                    (0.1..=0.5).contains(&p["x"].as_f64().unwrap())
                })
                .count()
        };
        let (tpe, random) = (inside(Strategy::Tpe), inside(Strategy::Random));
        assert!(tpe >= 30, "tpe {tpe}/50 random {random}/50");
        assert!(tpe > random);
    }

    #[test]
    fn tpe_samples_conform_for_every_domain_kind() {
        let space = mixed_space();
        let settings = TpeSettings::default();
        let mut trials = Vec::new();
        for i in 0..30 {
            let params = sample_params(&space, &trials, Strategy::Tpe, &settings, i).unwrap();
            assert!(space.conforms(&params), "{params:?}");
            let loss =
                params["a"].as_f64().unwrap().abs() + if params["d"] == "rbf" { 0.0 } else { 1.0 };
            trials.push(Trial {
                index: i as usize,
                params,
                loss,
                aux_foms: BTreeMap::new(),
                seed: i,
            });
        }
        let late: Vec<_> = (100..140)
            .map(|s| sample_params(&space, &trials, Strategy::Tpe, &settings, s).unwrap())
            .collect();
        let rbf = late.iter().filter(|p| p["d"] == "rbf").count();
        assert!(rbf > late.len() / 2, "{rbf}");
    }

    #[test]
    fn spearman_examples() {
        let xs = [0.1, 0.5, 0.3, 0.9];
        assert_eq!(spearman(&xs, &xs), Some(1.0));
        let rev: Vec<f64> = xs.iter().map(|x| -x).collect();
        assert_eq!(spearman(&xs, &rev), Some(-1.0));
        assert_eq!(spearman(&[1.0, 1.0], &[0.0, 1.0]), None);
        assert_eq!(
            average_ranks(&[2.0, 1.0, 2.0, 3.0]),
            vec![2.5, 1.0, 2.5, 4.0]
        );
    }

    /// Textbook formula 1 - 6 sum d^2 / (n (n^2 - 1)), valid without ties.
    fn spearman_no_ties_oracle(xs: &[f64], ys: &[f64]) -> f64 {
        let rank = |v: &[f64]| {
            let mut r = vec![0.0; v.len()];
            for i in 0..v.len() {
                r[i] = 1.0 + v.iter().filter(|&&o| o < v[i]).count() as f64;
            }
            r
        };
        let (rx, ry) = (rank(xs), rank(ys));
        let n = xs.len() as f64;
        let d2: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - b).powi(2)).sum();
        1.0 - 6.0 * d2 / (n * (n * n - 1.0))
    }

    proptest! {
        #[test]
        fn spearman_matches_textbook_formula(pairs in prop::collection::hash_map(0u32..10_000, 0u32..10_000, 3..40)) {
            let mut ys_seen = std::collections::HashSet::new();
            let pairs: Vec<(f64, f64)> = pairs
                .into_iter()
                .filter(|(_, y)| ys_seen.insert(*y))
                .map(|(x, y)| (x as f64, y as f64))
                .collect();
            prop_assume!(pairs.len() >= 3);
            let (xs, ys): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let got = spearman(&xs, &ys).unwrap();
            prop_assert!((got - spearman_no_ties_oracle(&xs, &ys)).abs() < 1e-9);
        }

        #[test]
        fn spearman_is_bounded_and_symmetric(xs in prop::collection::vec(0u8..5, 2..30), seed in any::<u64>()) {
            let xs: Vec<f64> = xs.into_iter().map(f64::from).collect();
            let mut rng = SeededRng::new(seed);
            let ys: Vec<f64> = xs.iter().map(|_| rng.below(4) as f64).collect();
            if let Some(r) = spearman(&xs, &ys) {
                prop_assert!((-1.0..=1.0).contains(&r));
                prop_assert_eq!(Some(r), spearman(&ys, &xs));
            }
        }
    }

    /// Validation scores from fixed per-subject values; each subject has 3 objects.
    struct FixedAdapter {
        scores: fn(label: u8, subject: usize, object: usize) -> f64,
    }

    impl ModelAdapter for FixedAdapter {
        fn fold_splits(
            &self,
            _params: &Params,
            n_folds: usize,
            _seed: u64,
        ) -> Result<Vec<FoldSplit>, AdapterError> {
            let table = |fold: usize, train: bool| {
                let mut records = Vec::new();
                for subject in 0..12 {
                    if (subject % n_folds == fold) == train {
                        continue;
                    }
                    let label = (subject % 2) as u8;
                    for object in 0..3 {
                        records.push(
                            ScoreRecord::new(
                                format!("s{subject}"),
                                label,
                                (self.scores)(label, subject, object),
                            )
                            .with_object(object.to_string()),
                        );
                    }
                }
                ScoreTable::new(records, Level::Object)
            };
            Ok((0..n_folds)
                .map(|k| FoldSplit {
                    fold: k as u32,
                    train: table(k, true),
                    validation: table(k, false),
                })
                .collect())
        }
    }

    fn spec(level: Level) -> ObjectiveSpec {
        ObjectiveSpec {
            level,
            fom: FomSpec::Auc,
            aggregation: AggregationRule::NthLargest(2),
            folds: 3,
        }
    }

    #[test]
    fn objective_limits() {
        let perfect = FixedAdapter {
            scores: |l, s, o| l as f64 + 0.01 * (s * 3 + o) as f64,
        };
        let constant = FixedAdapter {
            scores: |_, _, _| 0.5,
        };
        let params = Params::new();
        for level in [Level::Object, Level::Subject] {
            let e = cv_objective(&perfect, &spec(level), &params, 0).unwrap();
            assert_eq!(e.loss, 0.0);
            assert_eq!(
                (e.aux_foms[OBJECT_AUC], e.aux_foms[SUBJECT_AUC]),
                (1.0, 1.0)
            );
            let e = cv_objective(&constant, &spec(level), &params, 0).unwrap();
            assert_eq!(e.loss, 0.5);
        }
        let bce = ObjectiveSpec {
            fom: FomSpec::Bce,
            ..spec(Level::Object)
        };
        let e = cv_objective(&constant, &bce, &params, 0).unwrap();
        assert!((e.loss - 2f64.ln()).abs() < 1e-12);
        assert!(matches!(
            cv_objective(
                &constant,
                &ObjectiveSpec {
                    folds: 1,
                    ..spec(Level::Object)
                },
                &params,
                0
            ),
            Err(SearchError::BadFolds(1))
        ));
    }

    struct QuadraticAdapter;

    impl ModelAdapter for QuadraticAdapter {
        /// Positives lift by an amount that peaks at x = 0.3.
        fn fold_splits(
            &self,
            params: &Params,
            n_folds: usize,
            seed: u64,
        ) -> Result<Vec<FoldSplit>, AdapterError> {
            let x = params["x"]
                .as_f64()
                .ok_or_else(|| AdapterError("x missing".into()))?;
            if x > 0.99 {
                return Err(AdapterError("diverged".into()));
            }
            let lift = 1.0 - (x - 0.3).abs();
            let mut rng = SeededRng::new(seed);
            Ok((0..n_folds as u32)
                .map(|fold| {
                    let records = (0..40)
                        .map(|i| {
                            let label = (i / 2 % 2) as u8;
                            ScoreRecord::new(
                                format!("f{fold}s{}", i / 2),
                                label,
                                rng.normal() + lift * label as f64,
                            )
                            .with_object((i % 2).to_string())
                        })
                        .collect();
                    let validation = ScoreTable::new(records, Level::Object);
                    FoldSplit {
                        fold,
                        train: validation.clone(),
                        validation,
                    }
                })
                .collect())
        }
    }

    #[test]
    fn search_is_reproducible_and_parallel_safe() {
        let space =
            SearchSpace::from_json(r#"{"x":{"type":"uniform","lo":0.0,"hi":0.98}}"#).unwrap();
        let spec = spec(Level::Object);
        for strategy in [Strategy::Random, Strategy::Tpe] {
            let options = SearchOptions::new(25, strategy, 9);
            let a = run_search(&QuadraticAdapter, &spec, &space, &options).unwrap();
            let b = run_search(&QuadraticAdapter, &spec, &space, &options).unwrap();
            assert_eq!(a.to_jsonl(), b.to_jsonl());
            assert_eq!(a.trials.len(), 25);
            assert!(a
                .trials
                .iter()
                .enumerate()
                .all(|(i, t)| t.index == i && space.conforms(&t.params)));
            assert_eq!(TrialLedger::from_jsonl(&a.to_jsonl()).unwrap(), a);

            let par = run_search(
                &QuadraticAdapter,
                &spec,
                &space,
                &SearchOptions { jobs: 4, ..options },
            )
            .unwrap();
            if strategy == Strategy::Random {
                assert_eq!(par.to_jsonl(), a.to_jsonl());
            }
            let again = run_search(
                &QuadraticAdapter,
                &spec,
                &space,
                &SearchOptions { jobs: 4, ..options },
            )
            .unwrap();
            assert_eq!(par, again);
        }
        let one = run_search(
            &QuadraticAdapter,
            &spec,
            &space,
            &SearchOptions::new(1, Strategy::Random, 3),
        )
        .unwrap();
        assert_eq!(one.trials.len(), 1);
        assert!(matches!(
            run_search(
                &QuadraticAdapter,
                &spec,
                &space,
                &SearchOptions::new(0, Strategy::Random, 3)
            ),
            Err(SearchError::BadBudget)
        ));
    }

    #[test]
    fn min_loss_is_monotone_in_budget() {
        let space =
            SearchSpace::from_json(r#"{"x":{"type":"uniform","lo":0.0,"hi":0.98}}"#).unwrap();
        let full = run_search(
            &QuadraticAdapter,
            &spec(Level::Object),
            &space,
            &SearchOptions::new(30, Strategy::Tpe, 5),
        )
        .unwrap();
        let mut best = f64::INFINITY;
        for budget in [1, 5, 10, 20, 30] {
            let ledger = run_search(
                &QuadraticAdapter,
                &spec(Level::Object),
                &space,
                &SearchOptions::new(budget, Strategy::Tpe, 5),
            )
            .unwrap();
            assert_eq!(ledger.trials[..], full.trials[..budget]);
            let min = ledger.best().unwrap().loss;
            assert!(min <= best);
            best = min;
        }
    }

    #[test]
    fn adapter_failure_keeps_partial_ledger() {
        let space =
            SearchSpace::from_json(r#"{"x":{"type":"uniform","lo":0.0,"hi":1.0}}"#).unwrap();
        let options = SearchOptions::new(500, Strategy::Random, 1);
        let err =
            run_search(&QuadraticAdapter, &spec(Level::Object), &space, &options).unwrap_err();
        let SearchError::TrialFailed {
            index,
            partial,
            source,
        } = err
        else {
            panic!("{err}")
        };
        assert_eq!(partial.trials.len(), index);
        assert!(matches!(*source, SearchError::Adapter(_)));
    }

    #[test]
    fn best_and_analysis() {
        let trial = |index, loss, o: f64, s: f64| Trial {
            index,
            params: Params::new(),
            loss,
            aux_foms: [(OBJECT_AUC.to_string(), o), (SUBJECT_AUC.to_string(), s)].into(),
            seed: 0,
        };
        let mut ledger = TrialLedger::new(unit_space(), Strategy::Random, "test");
        ledger.trials = vec![
            trial(0, 0.3, 0.7, 0.6),
            trial(1, 0.2, 0.8, 0.5),
            trial(2, 0.2, 0.6, 0.7),
        ];
        assert_eq!(ledger.best().unwrap().index, 1);
        let analysis = ledger_analysis(&ledger);
        assert_eq!(
            analysis.sorted.iter().map(|r| r.index).collect::<Vec<_>>(),
            vec![1, 2, 0]
        );
        assert_eq!(analysis.scatter, vec![(0.7, 0.6), (0.8, 0.5), (0.6, 0.7)]);
        assert_eq!(analysis.spearman, Some(-1.0));
        ledger.trials = vec![trial(0, 0.3, 0.7, 0.7), trial(1, 0.2, 0.8, 0.8)];
        assert_eq!(ledger_analysis(&ledger).spearman, Some(1.0));
    }
}
