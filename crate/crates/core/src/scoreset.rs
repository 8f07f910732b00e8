//! Score tables: the record model shared by every other module, plus CSV and
//! JSONL ingestion and validation.
//!
//! The canonical CSV header is
//! `subject_id,object_id,fold,epoch,label,score[,cov_*...]`. Only
//! `subject_id`, `label` and `score` are mandatory on input; an empty cell
//! means the optional field is absent. Columns prefixed `cov_` become
//! covariates and any other unknown column is rejected.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use thiserror::Error;

/// Name of every fixed column, in canonical order.
pub const FIXED_COLUMNS: [&str; 6] = ["subject_id", "object_id", "fold", "epoch", "label", "score"];
pub const COVARIATE_PREFIX: &str = "cov_";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Level {
    Object,
    Subject,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Jsonl,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRecord {
    pub subject_id: String,
    pub object_id: Option<String>,
    pub fold: Option<u32>,
    pub epoch: Option<u32>,
    /// 0 = control, 1 = positive.
    pub label: u8,
    pub score: f64,
    /// Keys keep their `cov_` prefix.
    pub covariates: BTreeMap<String, f64>,
}

impl ScoreRecord {
    pub fn new(subject_id: impl Into<String>, label: u8, score: f64) -> Self {
        Self {
            subject_id: subject_id.into(),
            object_id: None,
            fold: None,
            epoch: None,
            label,
            score,
            covariates: BTreeMap::new(),
        }
    }

    pub fn with_object(mut self, object_id: impl Into<String>) -> Self {
        self.object_id = Some(object_id.into());
        self
    }

    pub fn with_fold(mut self, fold: u32) -> Self {
        self.fold = Some(fold);
        self
    }

    pub fn with_epoch(mut self, epoch: u32) -> Self {
        self.epoch = Some(epoch);
        self
    }

    pub fn with_covariate(mut self, name: impl Into<String>, value: f64) -> Self {
        self.covariates.insert(name.into(), value);
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    pub records: Vec<ScoreRecord>,
    pub level: Level,
}

impl ScoreTable {
    pub fn new(records: Vec<ScoreRecord>, level: Level) -> Self {
        Self { records, level }
    }

    /// Builds a table and infers its level: object level iff any record has an object id.
    pub fn from_records(records: Vec<ScoreRecord>) -> Self {
        let level = if records.iter().any(|r| r.object_id.is_some()) {
            Level::Object
        } else {
            Level::Subject
        };
        Self { records, level }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn labels(&self) -> Vec<u8> {
        self.records.iter().map(|r| r.label).collect()
    }

    pub fn scores(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.score).collect()
    }

    pub fn has_folds(&self) -> bool {
        !self.records.is_empty() && self.records.iter().all(|r| r.fold.is_some())
    }

    pub fn has_epochs(&self) -> bool {
        !self.records.is_empty() && self.records.iter().all(|r| r.epoch.is_some())
    }

    /// Distinct folds, ascending.
    pub fn folds(&self) -> Vec<u32> {
        let set: BTreeSet<u32> = self.records.iter().filter_map(|r| r.fold).collect();
        set.into_iter().collect()
    }

    /// Distinct epochs, ascending.
    pub fn epochs(&self) -> Vec<u32> {
        let set: BTreeSet<u32> = self.records.iter().filter_map(|r| r.epoch).collect();
        set.into_iter().collect()
    }

    /// Union of covariate names over all records, sorted.
    pub fn covariate_names(&self) -> Vec<String> {
        let set: BTreeSet<&String> = self
            .records
            .iter()
            .flat_map(|r| r.covariates.keys())
            .collect();
        set.into_iter().cloned().collect()
    }

    pub fn subject_count(&self) -> usize {
        self.records
            .iter()
            .map(|r| r.subject_id.as_str())
            .collect::<BTreeSet<_>>()
            .len()
    }

    /// Records of one epoch, keeping order and level.
    pub fn epoch_slice(&self, epoch: u32) -> ScoreTable {
        self.filtered(|r| r.epoch == Some(epoch))
    }

    pub fn fold_slice(&self, fold: u32) -> ScoreTable {
        self.filtered(|r| r.fold == Some(fold))
    }

    pub fn filtered(&self, keep: impl Fn(&ScoreRecord) -> bool) -> ScoreTable {
        ScoreTable {
            records: self.records.iter().filter(|r| keep(r)).cloned().collect(),
            level: self.level,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ViolationKind {
    BadLabel(u8),
    NonFiniteScore,
    NonFiniteCovariate(String),
    InconsistentSubjectLabel {
        subject_id: String,
        first_row: usize,
    },
    MissingObjectId,
    DuplicateKey {
        first_row: usize,
    },
    PartialFold,
    PartialEpoch,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub row: usize,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            ViolationKind::BadLabel(v) => {
                write!(f, "BadLabel@{}: label {v} is not 0 or 1", self.row)
            }
            ViolationKind::NonFiniteScore => write!(f, "NonFiniteScore@{}", self.row),
            ViolationKind::NonFiniteCovariate(name) => {
                write!(f, "NonFiniteCovariate@{}: {name}", self.row)
            }
            ViolationKind::InconsistentSubjectLabel {
                subject_id,
                first_row,
            } => write!(
                f,
                "InconsistentSubjectLabel@{}: subject {subject_id} disagrees with row {first_row}",
                self.row
            ),
            ViolationKind::MissingObjectId => write!(f, "MissingObjectId@{}", self.row),
            ViolationKind::DuplicateKey { first_row } => {
                write!(f, "DuplicateKey@{}: same key as row {first_row}", self.row)
            }
            ViolationKind::PartialFold => {
                write!(
                    f,
                    "PartialFold@{}: fold missing while other rows have one",
                    self.row
                )
            }
            ViolationKind::PartialEpoch => {
                write!(
                    f,
                    "PartialEpoch@{}: epoch missing while other rows have one",
                    self.row
                )
            }
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScoresetError {
    #[error("malformed input{}: {reason}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    MalformedInput { line: Option<usize>, reason: String },
    #[error("bad label at row {row}: {value:?} is not 0 or 1")]
    BadLabel { row: usize, value: String },
    #[error("non-finite score at row {row}")]
    NonFiniteScore { row: usize },
    #[error("subject {subject_id} has inconsistent labels (rows {first_row} and {row})")]
    InconsistentSubjectLabel {
        subject_id: String,
        first_row: usize,
        row: usize,
    },
    #[error("invalid table: {0}")]
    Invalid(Violation),
}

impl From<Violation> for ScoresetError {
    fn from(v: Violation) -> Self {
        match v.kind {
            ViolationKind::BadLabel(value) => ScoresetError::BadLabel {
                row: v.row,
                value: value.to_string(),
            },
            ViolationKind::NonFiniteScore => ScoresetError::NonFiniteScore { row: v.row },
            ViolationKind::InconsistentSubjectLabel {
                subject_id,
                first_row,
            } => ScoresetError::InconsistentSubjectLabel {
                subject_id,
                first_row,
                row: v.row,
            },
            _ => ScoresetError::Invalid(v),
        }
    }
}

/// Lists every invariant violation, in row order. Empty means valid.
pub fn validate(table: &ScoreTable) -> Vec<Violation> {
    let mut out = Vec::new();
    let any_fold = table.records.iter().any(|r| r.fold.is_some());
    let any_epoch = table.records.iter().any(|r| r.epoch.is_some());
    let mut subject_labels: HashMap<&str, (u8, usize)> = HashMap::new();
    // (subject, object, fold, epoch) -> first row.
    type Key<'a> = (&'a str, Option<&'a str>, Option<u32>, Option<u32>);
    let mut keys: HashMap<Key, usize> = HashMap::new();

    for (row, r) in table.records.iter().enumerate() {
        let mut push = |kind| out.push(Violation { row, kind });
        if r.label > 1 {
            push(ViolationKind::BadLabel(r.label));
        }
        if !r.score.is_finite() {
            push(ViolationKind::NonFiniteScore);
        }
        for (name, value) in &r.covariates {
            if !value.is_finite() {
                push(ViolationKind::NonFiniteCovariate(name.clone()));
            }
        }
        match subject_labels.get(r.subject_id.as_str()) {
            Some(&(label, first_row)) if label != r.label => {
                push(ViolationKind::InconsistentSubjectLabel {
                    subject_id: r.subject_id.clone(),
                    first_row,
                })
            }
            Some(_) => {}
            None => {
                subject_labels.insert(&r.subject_id, (r.label, row));
            }
        }
        if table.level == Level::Object && r.object_id.is_none() {
            push(ViolationKind::MissingObjectId);
        }
        if any_fold && r.fold.is_none() {
            push(ViolationKind::PartialFold);
        }
        if any_epoch && r.epoch.is_none() {
            push(ViolationKind::PartialEpoch);
        }
        let key = (
            r.subject_id.as_str(),
            r.object_id.as_deref(),
            r.fold,
            r.epoch,
        );
        match keys.get(&key) {
            Some(&first_row) => push(ViolationKind::DuplicateKey { first_row }),
            None => {
                keys.insert(key, row);
            }
        }
    }
    out
}

/// Parses and validates a score table. Row order is preserved.
pub fn parse_score_table(bytes: &[u8], format: Format) -> Result<ScoreTable, ScoresetError> {
    let text = std::str::from_utf8(bytes).map_err(|e| ScoresetError::MalformedInput {
        line: None,
        reason: format!("input is not UTF-8: {e}"),
    })?;
    let records = match format {
        Format::Csv => parse_csv(text)?,
        Format::Jsonl => parse_jsonl(text)?,
    };
    let table = ScoreTable::from_records(records);
    if let Some(v) = validate(&table).into_iter().next() {
        return Err(v.into());
    }
    Ok(table)
}

#[derive(Clone, Copy)]
enum Column {
    Subject,
    Object,
    Fold,
    Epoch,
    Label,
    Score,
    Covariate(usize),
}

fn malformed(line: usize, reason: impl Into<String>) -> ScoresetError {
    ScoresetError::MalformedInput {
        line: Some(line),
        reason: reason.into(),
    }
}

fn parse_csv(text: &str) -> Result<Vec<ScoreRecord>, ScoresetError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| malformed(1, format!("unreadable header: {e}")))?
        .clone();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(malformed(1, "missing header row"));
    }

    let mut columns = Vec::with_capacity(header.len());
    let mut cov_names = Vec::new();
    let mut seen = BTreeSet::new();
    for name in header.iter() {
        if !seen.insert(name) {
            return Err(malformed(1, format!("duplicate column {name:?}")));
        }
        let col = match name {
            "subject_id" => Column::Subject,
            "object_id" => Column::Object,
            "fold" => Column::Fold,
            "epoch" => Column::Epoch,
            "label" => Column::Label,
            "score" => Column::Score,
            other
                if other.starts_with(COVARIATE_PREFIX) && other.len() > COVARIATE_PREFIX.len() =>
            {
                cov_names.push(other.to_string());
                Column::Covariate(cov_names.len() - 1)
            }
            other => return Err(malformed(1, format!("unknown column {other:?}"))),
        };
        columns.push(col);
    }
    for required in ["subject_id", "label", "score"] {
        if !seen.contains(required) {
            return Err(malformed(
                1,
                format!("missing required column {required:?}"),
            ));
        }
    }

    let mut records = Vec::new();
    for (row, result) in reader.records().enumerate() {
        let line = row + 2;
        let fields = result.map_err(|e| malformed(line, e.to_string()))?;
        let mut rec = ScoreRecord::new("", 0, 0.0);
        for (col, cell) in columns.iter().zip(fields.iter()) {
            match *col {
                Column::Subject => {
                    if cell.is_empty() {
                        return Err(malformed(line, "empty subject_id"));
                    }
                    rec.subject_id = cell.to_string();
                }
                Column::Object => rec.object_id = (!cell.is_empty()).then(|| cell.to_string()),
                Column::Fold => rec.fold = parse_index(cell, "fold", line)?,
                Column::Epoch => rec.epoch = parse_index(cell, "epoch", line)?,
                Column::Label => rec.label = parse_label(cell, row)?,
                Column::Score => rec.score = parse_score(cell, row, line)?,
                Column::Covariate(i) => {
                    if !cell.is_empty() {
                        let v = parse_real(cell).ok_or_else(|| {
                            malformed(
                                line,
                                format!("covariate {} is not a number: {cell:?}", cov_names[i]),
                            )
                        })?;
                        if !v.is_finite() {
                            return Err(malformed(
                                line,
                                format!("covariate {} is not finite", cov_names[i]),
                            ));
                        }
                        rec.covariates.insert(cov_names[i].clone(), v);
                    }
                }
            }
        }
        records.push(rec);
    }
    Ok(records)
}

fn parse_index(cell: &str, what: &str, line: usize) -> Result<Option<u32>, ScoresetError> {
    if cell.is_empty() {
        return Ok(None);
    }
    cell.parse::<u32>().map(Some).map_err(|_| {
        malformed(
            line,
            format!("{what} must be a non-negative integer, got {cell:?}"),
        )
    })
}

fn parse_label(cell: &str, row: usize) -> Result<u8, ScoresetError> {
    match cell {
        "0" => Ok(0),
        "1" => Ok(1),
        other => Err(ScoresetError::BadLabel {
            row,
            value: other.to_string(),
        }),
    }
}

/// Decimal point only; scientific notation allowed.
fn parse_real(cell: &str) -> Option<f64> {
    if cell.contains(',') || cell.trim() != cell {
        return None;
    }
    cell.parse::<f64>().ok()
}

fn parse_score(cell: &str, row: usize, line: usize) -> Result<f64, ScoresetError> {
    let v = parse_real(cell)
        .ok_or_else(|| malformed(line, format!("score is not a number: {cell:?}")))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(ScoresetError::NonFiniteScore { row })
    }
}

fn parse_jsonl(text: &str) -> Result<Vec<ScoreRecord>, ScoresetError> {
    use serde_json::Value;

    let mut records = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let row = records.len();
        let value: Value = serde_json::from_str(raw).map_err(|e| malformed(line, e.to_string()))?;
        let Value::Object(map) = value else {
            return Err(malformed(line, "expected a JSON object"));
        };
        let mut rec = ScoreRecord::new("", 0, 0.0);
        let (mut has_subject, mut has_label, mut has_score) = (false, false, false);
        for (key, v) in map {
            match key.as_str() {
                "subject_id" => {
                    rec.subject_id = v
                        .as_str()
                        .filter(|s| !s.is_empty())
                        .ok_or_else(|| malformed(line, "subject_id must be a non-empty string"))?
                        .to_string();
                    has_subject = true;
                }
                "object_id" => {
                    rec.object_id = match v {
                        Value::Null => None,
                        Value::String(s) if s.is_empty() => None,
                        Value::String(s) => Some(s),
                        _ => return Err(malformed(line, "object_id must be a string or null")),
                    }
                }
                "fold" | "epoch" => {
                    let idx = match &v {
                        Value::Null => None,
                        other => Some(
                            other
                                .as_u64()
                                .and_then(|n| u32::try_from(n).ok())
                                .ok_or_else(|| {
                                    malformed(line, format!("{key} must be a non-negative integer"))
                                })?,
                        ),
                    };
                    if key == "fold" {
                        rec.fold = idx;
                    } else {
                        rec.epoch = idx;
                    }
                }
                "label" => {
                    rec.label = match v.as_u64() {
                        Some(0) => 0,
                        Some(1) => 1,
                        _ => {
                            return Err(ScoresetError::BadLabel {
                                row,
                                value: v.to_string(),
                            })
                        }
                    };
                    has_label = true;
                }
                "score" => {
                    rec.score = v
                        .as_f64()
                        .ok_or_else(|| malformed(line, "score must be a number"))?;
                    has_score = true;
                }
                cov if cov.starts_with(COVARIATE_PREFIX) && cov.len() > COVARIATE_PREFIX.len() => {
                    match v {
                        Value::Null => {}
                        other => {
                            let x = other.as_f64().ok_or_else(|| {
                                malformed(line, format!("covariate {cov} must be a number"))
                            })?;
                            rec.covariates.insert(cov.to_string(), x);
                        }
                    }
                }
                other => return Err(malformed(line, format!("unknown field {other:?}"))),
            }
        }
        if !(has_subject && has_label && has_score) {
            return Err(malformed(line, "subject_id, label and score are required"));
        }
        records.push(rec);
    }
    Ok(records)
}

/// Shortest round-trip decimal form; exponent notation only at extreme magnitudes.
pub fn format_real(x: f64) -> String {
    let a = x.abs();
    if a != 0.0 && !(1e-6..1e16).contains(&a) {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

fn opt_index(v: Option<u32>) -> String {
    v.map(|n| n.to_string()).unwrap_or_default()
}

/// Canonical CSV: full header, LF line endings, covariate columns sorted.
pub fn to_csv(table: &ScoreTable) -> String {
    let covs = table.covariate_names();
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let header: Vec<&str> = FIXED_COLUMNS
        .iter()
        .copied()
        .chain(covs.iter().map(String::as_str))
        .collect();
    writer.write_record(&header).expect("in-memory write");
    for r in &table.records {
        let mut row = vec![
            r.subject_id.clone(),
            r.object_id.clone().unwrap_or_default(),
            opt_index(r.fold),
            opt_index(r.epoch),
            r.label.to_string(),
            format_real(r.score),
        ];
        row.extend(covs.iter().map(|c| {
            r.covariates
                .get(c)
                .map(|v| format_real(*v))
                .unwrap_or_default()
        }));
        writer.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(writer.into_inner().expect("in-memory flush")).expect("csv output is UTF-8")
}

/// One JSON object per record, fixed fields first then covariates.
pub fn to_jsonl(table: &ScoreTable) -> String {
    use serde_json::{json, to_string};

    let mut out = String::new();
    for r in &table.records {
        let mut parts = vec![
            format!("\"subject_id\":{}", to_string(&r.subject_id).unwrap()),
            format!("\"object_id\":{}", to_string(&r.object_id).unwrap()),
            format!("\"fold\":{}", json!(r.fold)),
            format!("\"epoch\":{}", json!(r.epoch)),
            format!("\"label\":{}", r.label),
            format!("\"score\":{}", json!(r.score)),
        ];
        for (name, value) in &r.covariates {
            parts.push(format!("{}:{}", to_string(name).unwrap(), json!(value)));
        }
        out.push('{');
        out.push_str(&parts.join(","));
        out.push_str("}\n");
    }
    out
}
