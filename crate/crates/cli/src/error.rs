//! Exit-code classification. Errors are carried as `anyhow::Error`; the ones
//! that should not exit with the internal-failure code are wrapped in
//! [`Classified`] somewhere in their chain.

use std::fmt;
use std::process::ExitCode;

use fomkit::aggregate::AggregateError;
use fomkit::epochselect::EpochError;
use fomkit::foldalign::AlignError;
use fomkit::hypersearch::SearchError;
use fomkit::metrics::MetricsError;
use fomkit::report::ReportError;
use fomkit::scoreset::ScoresetError;
use fomkit::synthlab::SynthError;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    /// Unreadable or invalid input files and flags.
    Input,
    /// Inputs are well formed but violate a precondition of the computation.
    Domain,
    Internal,
}

impl Kind {
    pub fn code(self) -> u8 {
        match self {
            Kind::Input => 2,
            Kind::Domain => 3,
            Kind::Internal => 4,
        }
    }
}

#[derive(Debug)]
pub struct Classified {
    pub kind: Kind,
    pub source: anyhow::Error,
}

impl fmt::Display for Classified {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // The wrapped error is reported as the next link of the chain.
        write!(f, "{:?} error", self.kind)
    }
}

impl std::error::Error for Classified {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(self.source.as_ref())
    }
}

pub fn input(e: impl Into<anyhow::Error>) -> anyhow::Error {
    anyhow::Error::new(Classified {
        kind: Kind::Input,
        source: e.into(),
    })
}

pub fn domain(e: impl Into<anyhow::Error>) -> anyhow::Error {
    anyhow::Error::new(Classified {
        kind: Kind::Domain,
        source: e.into(),
    })
}

pub fn scoreset(e: ScoresetError) -> anyhow::Error {
    input(e)
}

pub fn metrics(e: MetricsError) -> anyhow::Error {
    domain(e)
}

pub fn align(e: AlignError) -> anyhow::Error {
    match e {
        AlignError::BadCanonical(_) => input(e),
        _ => domain(e),
    }
}

pub fn aggregate(e: AggregateError) -> anyhow::Error {
    match e {
        AggregateError::BadRule(_) | AggregateError::NotObjectLevel => input(e),
        _ => domain(e),
    }
}

pub fn epochs(e: EpochError) -> anyhow::Error {
    match e {
        EpochError::MissingEpochColumn
        | EpochError::BadGrid
        | EpochError::BadWindow(_)
        | EpochError::BadTolerance(_) => input(e),
        _ => domain(e),
    }
}

pub fn report(e: ReportError) -> anyhow::Error {
    match e {
        ReportError::Epoch(inner) => epochs(inner),
        ReportError::UnknownCovariate(_) | ReportError::UnknownEpoch(_) | ReportError::NoFoms => {
            input(e)
        }
    }
}

pub fn search(e: SearchError) -> anyhow::Error {
    match e {
        SearchError::EmptySpace
        | SearchError::BadSpace(_)
        | SearchError::BadStrategy(_)
        | SearchError::BadBudget
        | SearchError::BadFolds(_)
        | SearchError::BadLedger { .. } => input(e),
        _ => domain(e),
    }
}

pub fn synth(e: SynthError) -> anyhow::Error {
    input(e)
}

#[derive(Serialize)]
struct JsonError<'a> {
    kind: Kind,
    code: u8,
    message: String,
    causes: Vec<String>,
    /// Debug form of the innermost error, e.g. `BadSliverSpec(0)`.
    detail: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    row: Option<&'a usize>,
}

/// Prints the error to stderr and returns the matching exit code.
pub fn report_failure(err: &anyhow::Error, json: bool) -> ExitCode {
    let kind = err
        .chain()
        .find_map(|e| e.downcast_ref::<Classified>())
        .map_or(Kind::Internal, |c| c.kind);
    let causes: Vec<String> = err
        .chain()
        .filter(|e| e.downcast_ref::<Classified>().is_none())
        .map(|e| e.to_string())
        .collect();
    if json {
        let row = err
            .chain()
            .find_map(|e| match e.downcast_ref::<ScoresetError>() {
                Some(ScoresetError::Invalid(v)) => Some(&v.row),
                Some(
                    ScoresetError::BadLabel { row, .. }
                    | ScoresetError::NonFiniteScore { row }
                    | ScoresetError::InconsistentSubjectLabel { row, .. },
                ) => Some(row),
                _ => None,
            });
        let detail = format!("{:?}", err.root_cause());
        let body = JsonError {
            kind,
            code: kind.code(),
            message: causes.join(": "),
            causes,
            detail,
            row,
        };
        eprintln!("{}", serde_json::json!({ "error": body }));
    } else {
        eprintln!("error: {}", causes.join(": "));
    }
    ExitCode::from(kind.code())
}
