use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use fomkit::scoreset::{self, Format, ScoreTable};

use crate::error;
use crate::InputArgs;
use crate::InputFormat;

/// Six significant digits with trailing zeros kept, like C's `%#.6g`.
pub fn sig6(x: f64) -> String {
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    if x == 0.0 {
        return "0.00000".into();
    }
    // Exponent after rounding to six digits decides the notation.
    let sci = format!("{x:.5e}");
    let exp: i32 = sci
        .split_once('e')
        .and_then(|(_, e)| e.parse().ok())
        .expect("rust exponent format");
    if !(-4..6).contains(&exp) {
        let (mantissa, _) = sci.split_once('e').expect("rust exponent format");
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (5 - exp) as usize;
        let fixed = format!("{x:.decimals$}");
        // The alternate form always shows the decimal point.
        if decimals == 0 {
            fixed + "."
        } else {
            fixed
        }
    }
}

/// Where a single-file command writes: `-o` naming a file (it has an
/// extension) is used as is; otherwise it is a directory holding `default_name`.
pub fn file_target(out: Option<&Path>, default_name: &str) -> PathBuf {
    match out {
        Some(p) if p.extension().is_some() => p.to_path_buf(),
        Some(dir) => dir.join(default_name),
        None => PathBuf::from(default_name),
    }
}

pub fn dir_target(out: Option<&Path>) -> PathBuf {
    out.map_or_else(|| PathBuf::from("."), Path::to_path_buf)
}

/// `aligned.csv` → `aligned.<suffix>`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

pub fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

pub fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(error::input)
}

pub fn read_text(path: &Path) -> Result<String> {
    let bytes = read(path)?;
    String::from_utf8(bytes)
        .map_err(|e| error::input(anyhow::anyhow!("{}: not UTF-8: {e}", path.display())))
}

fn is_jsonl(path: &Path) -> bool {
    path.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("jsonl"))
}

/// The parsed table and the raw bytes it came from.
pub fn read_table(args: &InputArgs) -> Result<(ScoreTable, Vec<u8>)> {
    let format = match args.format {
        Some(InputFormat::Csv) => Format::Csv,
        Some(InputFormat::Jsonl) => Format::Jsonl,
        None if is_jsonl(&args.input) => Format::Jsonl,
        None => Format::Csv,
    };
    let bytes = read(&args.input)?;
    let table = scoreset::parse_score_table(&bytes, format)
        .map_err(error::scoreset)
        .with_context(|| format!("parsing {}", args.input.display()))?;
    Ok((table, bytes))
}

pub fn format_name(args: &InputArgs) -> &'static str {
    match args.format {
        Some(InputFormat::Csv) => "csv",
        Some(InputFormat::Jsonl) => "jsonl",
        None => "auto",
    }
}

/// Serializes in the format implied by the output name.
pub fn render_table(path: &Path, table: &ScoreTable) -> String {
    if is_jsonl(path) {
        scoreset::to_jsonl(table)
    } else {
        scoreset::to_csv(table)
    }
}
