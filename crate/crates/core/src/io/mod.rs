//! File formats.
//!
//! Inputs are CSV (events, trials, tonic samples, group labels); fit archives
//! and run configs are JSON and TOML. Every CSV the toolkit writes starts with
//! a provenance comment
//!
//! ```text
//! # scrpp <version> config=<compact json>
//! ```
//!
//! followed by a header row. Floats are written in the shortest form that
//! parses back to the same `f64`. All readers skip `#` lines.

mod archive;
mod inputs;
mod tables;

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

pub use archive::{sha256_file, FitArchive, PathsConfig, RunConfig};
pub use inputs::{
    load_subjects, parse_events_csv, parse_labels_csv, parse_tonic_csv, parse_trials_csv, write_events_csv,
    write_labels_csv, write_tonic_csv, write_trials_csv, EventRows, InputPaths, TrialRows, NOMINAL_TRIALS,
};
pub use tables::{
    eval_rows, fold_rows, gof_rows, intensity_rows, truth_rows, EvalRow, FoldRow, GofRow, IntensityRow, TruthRow,
};

/// Parsed provenance comment of an output file.
#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub version: String,
    pub config: serde_json::Value,
}

const TAG: &str = "# scrpp ";

pub fn provenance_line(config: &serde_json::Value) -> String {
    format!("{TAG}{} config={}\n", crate::VERSION, config)
}

pub fn parse_provenance(line: &str) -> Option<Provenance> {
    let rest = line.trim_end().strip_prefix(TAG)?;
    let (version, json) = rest.split_once(" config=")?;
    Some(Provenance {
        version: version.to_string(),
        config: serde_json::from_str(json).ok()?,
    })
}

/// Provenance line, header and one row per record.
pub fn render_table<T: Serialize>(config: &serde_json::Value, rows: &[T]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::InvalidInput(format!("csv serialization: {e}")))?;
    }
    let body = w.into_inner().map_err(|e| Error::InvalidInput(format!("csv serialization: {e}")))?;
    let mut out = provenance_line(config);
    out.push_str(&String::from_utf8(body).expect("csv output is UTF-8"));
    Ok(out)
}

pub fn write_table<T: Serialize>(path: &Path, config: &serde_json::Value, rows: &[T]) -> Result<()> {
    let text = render_table(config, rows)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_table<T: DeserializeOwned>(path: &Path) -> Result<(Option<Provenance>, Vec<T>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let prov = text.lines().next().and_then(parse_provenance);
    let mut r = csv_reader(text.as_bytes());
    let mut rows = Vec::new();
    for rec in r.deserialize() {
        let rec: std::result::Result<T, csv::Error> = rec;
        rows.push(rec.map_err(|e| csv_error(path, e))?);
    }
    Ok((prov, rows))
}

pub(crate) fn csv_reader<R: std::io::Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(r)
}

pub(crate) fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: e.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ml::AblationRow;

    #[test]
    fn provenance_round_trip() {
        let cfg = serde_json::json!({"dt": 1.0, "seed": 7});
        let line = provenance_line(&cfg);
        let p = parse_provenance(&line).unwrap();
        assert_eq!(p.version, crate::VERSION);
        assert_eq!(p.config, cfg);
        assert!(parse_provenance("subject_id,onset_s").is_none());
    }

    #[test]
    fn table_round_trip_preserves_floats() {
        let rows = vec![AblationRow {
            feature: "w_neg".into(),
            auroc_full: 0.1 + 0.2,
            auroc_without: 1.0 / 3.0,
            delta: -1e-300,
            delta_sd: f64::NAN,
            p_value: 0.049999999999999996,
            significant: true,
        }];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.csv");
        write_table(&path, &serde_json::json!({}), &rows).unwrap();
        let (prov, back): (_, Vec<AblationRow>) = read_table(&path).unwrap();
        assert!(prov.is_some());
        assert_eq!(back[0].auroc_full.to_bits(), rows[0].auroc_full.to_bits());
        assert_eq!(back[0].auroc_without.to_bits(), rows[0].auroc_without.to_bits());
        assert_eq!(back[0].delta.to_bits(), rows[0].delta.to_bits());
        assert!(back[0].delta_sd.is_nan());
        assert_eq!(back[0].p_value, rows[0].p_value);
    }
}
