//! Assessment report for an epoch dump: FoM time series, the selected
//! stopping epochs, and per-epoch histograms, sensitivity/specificity curves
//! and score-vs-covariate scatter data, each as CSV plus an SVG plot.
//!
//! Layout (paths relative to the output directory):
//!
//! ```text
//! report/fom_series.csv|svg
//! report/selection.json
//! report/epoch_<k>/histogram.csv|svg
//! report/epoch_<k>/sens_spec.csv|svg
//! report/epoch_<k>/score_vs_<cov>.csv|svg
//! ```

use std::fs;
use std::io;
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::epochselect::{self, EpochError, FomSeries, Selection, SelectionPolicy};
use crate::fom::FomSpec;
use crate::scoreset::{format_real, ScoreTable, COVARIATE_PREFIX};
use crate::svg::{self, Mark, Plot, Series};

pub const HISTOGRAM_BINS: usize = 20;
/// Number of thresholds in each sensitivity/specificity table.
pub const THRESHOLD_STEPS: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReportError {
    #[error("unknown covariate {0:?}")]
    UnknownCovariate(String),
    #[error("epoch {0} is not in the dump")]
    UnknownEpoch(u32),
    #[error("no figures of merit requested")]
    NoFoms,
    #[error(transparent)]
    Epoch(#[from] EpochError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportOptions {
    pub foms: Vec<FomSpec>,
    pub policy: SelectionPolicy,
    /// Covariate column for the score scatter, with or without the `cov_` prefix.
    pub covariate: Option<String>,
    /// Epochs that get per-epoch tables; all epochs when `None`.
    pub epochs: Option<Vec<u32>>,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions {
            foms: vec![FomSpec::Auc],
            policy: SelectionPolicy::default(),
            covariate: None,
            epochs: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportFile {
    /// Relative path using `/` separators.
    pub path: String,
    pub contents: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportBundle {
    pub series: FomSeries,
    pub selections: Vec<(FomSpec, Selection)>,
    pub files: Vec<ReportFile>,
}

impl ReportBundle {
    pub fn file(&self, path: &str) -> Option<&str> {
        self.files
            .iter()
            .find(|f| f.path == path)
            .map(|f| f.contents.as_str())
    }

    /// Writes every file under `dir`, creating directories as needed.
    pub fn write_to(&self, dir: &Path) -> io::Result<()> {
        for f in &self.files {
            let path = dir.join(&f.path);
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent)?;
            }
            fs::write(path, &f.contents)?;
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct SelectionEntry {
    fom: String,
    policy: PolicyEntry,
    epoch: u32,
    value: f64,
}

#[derive(Serialize)]
struct PolicyEntry {
    tie_break: &'static str,
    tie_tolerance: f64,
}

pub fn assessment_report(
    dump: &ScoreTable,
    options: &ReportOptions,
) -> Result<ReportBundle, ReportError> {
    if options.foms.is_empty() {
        return Err(ReportError::NoFoms);
    }
    let covariate = match &options.covariate {
        None => None,
        Some(name) => {
            let full = if name.starts_with(COVARIATE_PREFIX) {
                name.clone()
            } else {
                format!("{COVARIATE_PREFIX}{name}")
            };
            if !dump.covariate_names().contains(&full) {
                return Err(ReportError::UnknownCovariate(name.clone()));
            }
            Some(full)
        }
    };
    let series = epochselect::fom_series(dump, &options.foms)?;
    let epochs = match &options.epochs {
        None => series.epochs.clone(),
        Some(list) => {
            if let Some(e) = list.iter().find(|e| !series.epochs.contains(e)) {
                return Err(ReportError::UnknownEpoch(*e));
            }
            let mut list = list.clone();
            list.sort_unstable();
            list.dedup();
            list
        }
    };

    let mut selections = Vec::with_capacity(options.foms.len());
    for fom in &options.foms {
        selections.push((
            *fom,
            epochselect::select_epoch(&series, fom, &options.policy, Some(dump))?,
        ));
    }

    let mut files = vec![
        ReportFile {
            path: "report/fom_series.csv".into(),
            contents: series_csv(&series),
        },
        ReportFile {
            path: "report/fom_series.svg".into(),
            contents: series_svg(&series, &selections),
        },
        ReportFile {
            path: "report/selection.json".into(),
            contents: selection_json(&selections, &options.policy),
        },
    ];
    for epoch in epochs {
        let slice = dump.epoch_slice(epoch);
        let dir = format!("report/epoch_{epoch}");
        let (csv, plot) = histogram(&slice, epoch);
        files.push(ReportFile {
            path: format!("{dir}/histogram.csv"),
            contents: csv,
        });
        files.push(ReportFile {
            path: format!("{dir}/histogram.svg"),
            contents: plot,
        });
        let (csv, plot) = sens_spec(&slice, epoch)?;
        files.push(ReportFile {
            path: format!("{dir}/sens_spec.csv"),
            contents: csv,
        });
        files.push(ReportFile {
            path: format!("{dir}/sens_spec.svg"),
            contents: plot,
        });
        if let Some(cov) = &covariate {
            let (csv, plot) = score_vs_covariate(&slice, epoch, cov);
            files.push(ReportFile {
                path: format!("{dir}/score_vs_{cov}.csv"),
                contents: csv,
            });
            files.push(ReportFile {
                path: format!("{dir}/score_vs_{cov}.svg"),
                contents: plot,
            });
        }
    }
    Ok(ReportBundle {
        series,
        selections,
        files,
    })
}

fn series_csv(series: &FomSeries) -> String {
    let mut out = String::from("epoch");
    for (fom, _) in &series.values {
        out.push(',');
        out.push_str(&fom.to_string());
    }
    out.push('\n');
    for (i, epoch) in series.epochs.iter().enumerate() {
        out.push_str(&epoch.to_string());
        for (_, values) in &series.values {
            out.push(',');
            out.push_str(&format_real(values[i]));
        }
        out.push('\n');
    }
    out
}

fn series_svg(series: &FomSeries, selections: &[(FomSpec, Selection)]) -> String {
    let plots: Vec<Plot> = series
        .values
        .iter()
        .zip(selections)
        .enumerate()
        .map(|(i, ((fom, values), (_, selection)))| {
            let points = series
                .epochs
                .iter()
                .map(|&e| f64::from(e))
                .zip(values.iter().copied())
                .collect();
            let mut plot = Plot::new(fom.to_string(), "epoch", "value").with(Series::new(
                fom.to_string(),
                svg::PALETTE[i % svg::PALETTE.len()],
                Mark::Line,
                points,
            ));
            plot.highlights
                .push((f64::from(selection.epoch), selection.value));
            plot
        })
        .collect();
    svg::stack(&plots)
}

fn selection_json(selections: &[(FomSpec, Selection)], policy: &SelectionPolicy) -> String {
    let entries: Vec<SelectionEntry> = selections
        .iter()
        .map(|(fom, s)| SelectionEntry {
            fom: fom.to_string(),
            policy: PolicyEntry {
                tie_break: policy.tie_break.name(),
                tie_tolerance: policy.tie_tolerance,
            },
            epoch: s.epoch,
            value: s.value,
        })
        .collect();
    let mut out = serde_json::to_string_pretty(&entries).expect("selections serialize");
    out.push('\n');
    out
}

/// Bin index over [0, 1]; out-of-range scores land in the end bins.
pub fn histogram_bin(score: f64) -> usize {
    ((score * HISTOGRAM_BINS as f64).floor().max(0.0) as usize).min(HISTOGRAM_BINS - 1)
}

fn histogram(slice: &ScoreTable, epoch: u32) -> (String, String) {
    let mut counts = [[0usize; HISTOGRAM_BINS]; 2];
    for r in &slice.records {
        counts[usize::from(r.label)][histogram_bin(r.score)] += 1;
    }
    let width = 1.0 / HISTOGRAM_BINS as f64;
    let mut csv = String::from("bin_lo,bin_hi,negatives,positives\n");
    for (b, (neg, pos)) in counts[0].iter().zip(&counts[1]).enumerate() {
        let (lo, hi) = (b as f64 * width, (b + 1) as f64 * width);
        csv.push_str(&format!(
            "{},{},{},{}\n",
            format_real(lo),
            format_real(hi),
            neg,
            pos
        ));
    }
    let bars = |label: usize| {
        (0..HISTOGRAM_BINS)
            .map(|b| ((b as f64 + 0.5) * width, counts[label][b] as f64))
            .collect::<Vec<_>>()
    };
    let mut plot = Plot::new(format!("Score histogram, epoch {epoch}"), "score", "count")
        .with(Series::new(
            "negatives",
            svg::GREEN,
            Mark::Bars(width),
            bars(0),
        ))
        .with(Series::new(
            "positives",
            svg::RED,
            Mark::Bars(width),
            bars(1),
        ));
    plot.x_range = Some((0.0, 1.0));
    (csv, plot.to_svg())
}

fn sens_spec(slice: &ScoreTable, epoch: u32) -> Result<(String, String), EpochError> {
    let scores = slice.scores();
    let lo = scores.iter().copied().fold(0.0, f64::min);
    let hi = scores.iter().copied().fold(1.0, f64::max);
    let grid: Vec<f64> = (0..=THRESHOLD_STEPS)
        .map(|i| lo + (hi - lo) * i as f64 / THRESHOLD_STEPS as f64)
        .collect();
    let curves = epochselect::threshold_curves(&slice.labels(), &scores, &grid)?;
    let mut csv = String::from("threshold,sensitivity,specificity\n");
    for p in &curves {
        csv.push_str(&format!(
            "{},{},{}\n",
            format_real(p.threshold),
            format_real(p.sensitivity),
            format_real(p.specificity)
        ));
    }
    let plot = Plot::new(
        format!("Sensitivity and specificity, epoch {epoch}"),
        "threshold",
        "rate",
    )
    .with(Series::new(
        "sensitivity",
        svg::RED,
        Mark::Line,
        curves
            .iter()
            .map(|p| (p.threshold, p.sensitivity))
            .collect(),
    ))
    .with(Series::new(
        "specificity",
        svg::GREEN,
        Mark::Line,
        curves
            .iter()
            .map(|p| (p.threshold, p.specificity))
            .collect(),
    ));
    Ok((csv, plot.to_svg()))
}

fn score_vs_covariate(slice: &ScoreTable, epoch: u32, cov: &str) -> (String, String) {
    let mut csv = String::from("epoch,subject_id,label,cov,score\n");
    let mut points = [Vec::new(), Vec::new()];
    for r in &slice.records {
        // Rows without the covariate are left out of the scatter.
        let Some(&value) = r.covariates.get(cov) else {
            continue;
        };
        csv.push_str(&format!(
            "{epoch},{},{},{},{}\n",
            csv_field(&r.subject_id),
            r.label,
            format_real(value),
            format_real(r.score)
        ));
        points[usize::from(r.label)].push((value, r.score));
    }
    let [neg, pos] = points;
    let plot = Plot::new(format!("Score vs {cov}, epoch {epoch}"), cov, "score")
        .with(Series::new("negatives", svg::GREEN, Mark::Points, neg))
        .with(Series::new("positives", svg::RED, Mark::Points, pos));
    (csv, plot.to_svg())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::epochselect::TieBreak;
    use crate::scoreset::ScoreRecord;
    use crate::svg::assert_well_formed;

    fn two_epoch_dump(with_cov: bool) -> ScoreTable {
        let rows = [(0u32, [0.5, 0.5, 0.5, 0.5]), (1, [0.1, 0.3, 0.7, 1.0])];
        let mut records = Vec::new();
        for (epoch, scores) in rows {
            for (i, s) in scores.iter().enumerate() {
                let mut r =
                    ScoreRecord::new(format!("s{i}"), u8::from(i >= 2), *s).with_epoch(epoch);
                if with_cov {
                    r = r.with_covariate("cov_ga_days", 100.0 + 10.0 * i as f64);
                }
                records.push(r);
            }
        }
        ScoreTable::from_records(records)
    }

    #[test]
    fn layout_and_contents() {
        let options = ReportOptions {
            foms: vec![FomSpec::Auc, FomSpec::NegValCe],
            covariate: Some("cov_ga_days".into()),
            ..ReportOptions::default()
        };
        let bundle = assessment_report(&two_epoch_dump(true), &options).unwrap();
        let paths: Vec<&str> = bundle.files.iter().map(|f| f.path.as_str()).collect();
        for epoch in [0, 1] {
            for name in ["histogram", "sens_spec", "score_vs_cov_ga_days"] {
                for ext in ["csv", "svg"] {
                    assert!(paths.contains(&format!("report/epoch_{epoch}/{name}.{ext}").as_str()));
                }
            }
        }
        assert_eq!(
            paths
                .iter()
                .filter(|p| p.ends_with("histogram.csv"))
                .count(),
            2
        );
        assert_eq!(
            bundle
                .file("report/epoch_0/histogram.csv")
                .unwrap()
                .lines()
                .count(),
            21
        );
        let edges = |e: u32| -> Vec<String> {
            bundle
                .file(&format!("report/epoch_{e}/histogram.csv"))
                .unwrap()
                .lines()
                .map(|l| l.split(',').take(2).collect::<Vec<_>>().join(","))
                .collect()
        };
        assert_eq!(edges(0), edges(1));
        // A score of exactly 1 falls into the last bin.
        assert!(bundle
            .file("report/epoch_1/histogram.csv")
            .unwrap()
            .lines()
            .last()
            .unwrap()
            .ends_with(",0,1"));

        let scatter = bundle
            .file("report/epoch_1/score_vs_cov_ga_days.csv")
            .unwrap();
        assert_eq!(
            scatter.lines().next().unwrap(),
            "epoch,subject_id,label,cov,score"
        );
        assert_eq!(scatter.lines().nth(4).unwrap(), "1,s3,1,130,1");

        let series: Vec<&str> = bundle
            .file("report/fom_series.csv")
            .unwrap()
            .lines()
            .collect();
        assert_eq!(
            series[..2],
            ["epoch,auc,neg_val_ce", "0,0.5,-0.6931471805599453"]
        );
        assert!(series[2].starts_with("1,1,-0.") && series.len() == 3);
        let selection: serde_json::Value =
            serde_json::from_str(bundle.file("report/selection.json").unwrap()).unwrap();
        assert_eq!(selection[0]["fom"], "auc");
        assert_eq!(selection[0]["epoch"], 1);
        assert_eq!(selection[0]["policy"]["tie_break"], "earliest");
        for f in bundle.files.iter().filter(|f| f.path.ends_with(".svg")) {
            assert_well_formed(&f.contents);
        }
        assert_eq!(
            bundle,
            assessment_report(&two_epoch_dump(true), &options).unwrap()
        );
    }

    #[test]
    fn covariate_errors_and_prefix() {
        let options = ReportOptions {
            covariate: Some("cov_ga_days".into()),
            ..ReportOptions::default()
        };
        assert_eq!(
            assessment_report(&two_epoch_dump(false), &options),
            Err(ReportError::UnknownCovariate("cov_ga_days".into()))
        );
        let short = ReportOptions {
            covariate: Some("ga_days".into()),
            ..ReportOptions::default()
        };
        let bundle = assessment_report(&two_epoch_dump(true), &short).unwrap();
        assert!(bundle
            .file("report/epoch_0/score_vs_cov_ga_days.csv")
            .is_some());
    }

    #[test]
    fn epoch_subset_and_policy() {
        let options = ReportOptions {
            epochs: Some(vec![1]),
            policy: SelectionPolicy {
                tie_tolerance: 0.0,
                tie_break: TieBreak::MostStable {
                    target_spec_pct: 50.0,
                    window: 0.05,
                },
            },
            ..ReportOptions::default()
        };
        let bundle = assessment_report(&two_epoch_dump(false), &options).unwrap();
        assert!(bundle.file("report/epoch_0/histogram.csv").is_none());
        assert!(bundle.file("report/epoch_1/histogram.csv").is_some());
        assert!(bundle
            .file("report/selection.json")
            .unwrap()
            .contains("most_stable"));
        let missing = ReportOptions {
            epochs: Some(vec![7]),
            ..ReportOptions::default()
        };
        assert_eq!(
            assessment_report(&two_epoch_dump(false), &missing),
            Err(ReportError::UnknownEpoch(7))
        );
    }

    #[test]
    fn bins() {
        assert_eq!(histogram_bin(-0.3), 0);
        assert_eq!(histogram_bin(0.0), 0);
        assert_eq!(histogram_bin(0.05), 1);
        assert_eq!(histogram_bin(0.999), 19);
        assert_eq!(histogram_bin(1.0), 19);
        assert_eq!(histogram_bin(7.0), 19);
    }
}
