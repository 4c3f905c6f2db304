//! Point-set CSV files.
//!
//! The header is `w,x1,...,xd`; each following row is one point with its
//! weight first. Blank lines are skipped, CRLF line endings are accepted.

use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};

use rrho::WeightedPointSet;
use thiserror::Error;

/// Weight sums within this distance of 1 are accepted silently.
pub const SILENT_SUM_TOL: f64 = 1e-6;
/// Weight sums within this distance of 1 are renormalized with a warning.
pub const RENORMALIZE_TOL: f64 = 1e-2;

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: u64, message: String },
    #[error("{path}:{line}: expected {expected} columns, found {found}")]
    DimensionMismatch { path: PathBuf, line: u64, expected: usize, found: usize },
    #[error("{path}: weights sum to {sum}, more than {RENORMALIZE_TOL} away from 1")]
    WeightSum { path: PathBuf, sum: f64 },
    #[error("{path}: {source}")]
    Invalid {
        path: PathBuf,
        #[source]
        source: rrho::Error,
    },
}

/// A loaded point set plus any warnings raised while reading it.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub set: WeightedPointSet,
    pub warnings: Vec<String>,
}

pub fn load_point_set(path: impl AsRef<Path>) -> Result<Loaded, LoadError> {
    let path = path.as_ref();
    let mut text = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|source| LoadError::Io { path: path.to_path_buf(), source })?;
    parse_point_set(&text, path)
}

/// Parses CSV text; `path` is only used in messages.
pub fn parse_point_set(text: &str, path: &Path) -> Result<Loaded, LoadError> {
    let parse_err = |line: u64, message: String| LoadError::Parse { path: path.to_path_buf(), line, message };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let header = reader.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    let cols = header.len();
    if cols < 2 || &header[0] != "w" {
        return Err(parse_err(1, "header must be `w,x1,...,xd`".into()));
    }
    for (k, name) in header.iter().enumerate().skip(1) {
        if name != format!("x{k}") {
            return Err(parse_err(1, format!("unexpected column `{name}`, wanted `x{k}`")));
        }
    }

    let mut points = Vec::new();
    let mut weights = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if record.len() != cols {
            return Err(LoadError::DimensionMismatch { path: path.to_path_buf(), line, expected: cols, found: record.len() });
        }
        let mut values = Vec::with_capacity(cols);
        for field in record.iter() {
            let v: f64 = field.parse().map_err(|_| parse_err(line, format!("not a number: `{field}`")))?;
            if !v.is_finite() {
                return Err(parse_err(line, format!("not finite: `{field}`")));
            }
            values.push(v);
        }
        if !(values[0] > 0.0) {
            return Err(parse_err(line, format!("weight must be positive, got {}", values[0])));
        }
        weights.push(values[0]);
        points.push(values[1..].to_vec());
    }
    if points.is_empty() {
        return Err(parse_err(1, "no points".into()));
    }

    let sum: f64 = weights.iter().sum();
    let mut warnings = Vec::new();
    let off = (sum - 1.0).abs();
    if off > RENORMALIZE_TOL {
        return Err(LoadError::WeightSum { path: path.to_path_buf(), sum });
    }
    if off > SILENT_SUM_TOL {
        warnings.push(format!("{}: weights sum to {sum}; renormalized", path.display()));
    }
    let set = WeightedPointSet::new(points, weights).map_err(|source| LoadError::Invalid { path: path.to_path_buf(), source })?;
    Ok(Loaded { set, warnings })
}

/// Writes a point set in the same CSV layout.
pub fn write_point_set(set: &WeightedPointSet, path: impl AsRef<Path>) -> std::io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["w".to_string()];
    header.extend((1..=set.dim()).map(|k| format!("x{k}")));
    w.write_record(&header)?;
    for i in 0..set.len() {
        let mut row = vec![format!("{:?}", set.mass(i))];
        row.extend(set.point(i).iter().map(|v| format!("{v:?}")));
        w.write_record(&row)?;
    }
    w.flush()
}
