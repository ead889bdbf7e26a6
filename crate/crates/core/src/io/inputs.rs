//! Input tables: event onsets, trials, tonic samples and group labels.
//!
//! ```text
//! events: subject_id,onset_s[,amplitude,rise_time_s]
//! trials: subject_id,trial_idx,stim_onset_s,response_time_s,valence,rt_s,correct[,session_end_s]
//! tonic:  subject_id,time_s,conductance
//! labels: subject_id,group
//! ```
//!
//! `valence` is `pos_neutral` or `negative`; `correct` is `0`/`1`; a miss has
//! empty `response_time_s` and `rt_s`.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use super::{csv_error, csv_reader, provenance_line};
use crate::error::{Error, Result};
use crate::model::{EventTrain, RawTrial, SubjectRecord, SummaryAnnotations};

/// Trial count of the nominal protocol; other counts only warn.
pub const NOMINAL_TRIALS: usize = 480;

struct Table {
    path: PathBuf,
    headers: Vec<String>,
    rows: Vec<(u64, csv::StringRecord)>,
}

impl Table {
    fn read(path: &Path, required: &[&str], optional: &[&str]) -> Result<Self> {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = csv_reader(file);
        let headers: Vec<String> = r
            .headers()
            .map_err(|e| csv_error(path, e))?
            .iter()
            .map(String::from)
            .collect();
        for req in required {
            if !headers.iter().any(|h| h == req) {
                return Err(Error::Parse {
                    path: path.into(),
                    line: 1,
                    msg: format!("missing required column '{req}' (header: {})", headers.join(",")),
                });
            }
        }
        for h in &headers {
            if !required.contains(&h.as_str()) && !optional.contains(&h.as_str()) {
                log::warn!("{}: ignoring unknown column '{h}'", path.display());
            }
        }
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| csv_error(path, e))?;
            let line = rec.position().map_or(0, |p| p.line());
            rows.push((line, rec));
        }
        Ok(Self {
            path: path.into(),
            headers,
            rows,
        })
    }

    fn col(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }

    fn err(&self, line: u64, msg: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.clone(),
            line,
            msg: msg.into(),
        }
    }

    fn text<'a>(&self, rec: &'a csv::StringRecord, line: u64, col: usize) -> Result<&'a str> {
        rec.get(col).ok_or_else(|| self.err(line, format!("missing field '{}'", self.headers[col])))
    }

    fn float(&self, rec: &csv::StringRecord, line: u64, col: usize) -> Result<f64> {
        let s = self.text(rec, line, col)?;
        match s.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(self.err(line, format!("'{}' is not a finite number: '{s}'", self.headers[col]))),
        }
    }

    fn opt_float(&self, rec: &csv::StringRecord, line: u64, col: usize) -> Result<Option<f64>> {
        if self.text(rec, line, col)?.is_empty() {
            Ok(None)
        } else {
            self.float(rec, line, col).map(Some)
        }
    }
}

/// Onsets of one subject in file order, with their source lines.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventRows {
    pub onsets: Vec<f64>,
    pub lines: Vec<u64>,
    pub amplitudes: Option<Vec<f64>>,
    pub rise_times_s: Option<Vec<f64>>,
}

pub fn parse_events_csv(path: &Path) -> Result<BTreeMap<String, EventRows>> {
    let t = Table::read(path, &["subject_id", "onset_s"], &["amplitude", "rise_time_s"])?;
    let sid = t.col("subject_id").unwrap();
    let on = t.col("onset_s").unwrap();
    let (amp, rise) = match (t.col("amplitude"), t.col("rise_time_s")) {
        (Some(a), Some(r)) => (Some(a), Some(r)),
        (None, None) => (None, None),
        _ => {
            log::warn!(
                "{}: amplitude and rise_time_s must both be present; ignoring the one given",
                path.display()
            );
            (None, None)
        }
    };
    let mut out: BTreeMap<String, EventRows> = BTreeMap::new();
    for (line, rec) in &t.rows {
        let id = t.text(rec, *line, sid)?;
        if id.is_empty() {
            return Err(t.err(*line, "empty subject_id"));
        }
        let onset = t.float(rec, *line, on)?;
        if onset < 0.0 {
            return Err(t.err(*line, format!("negative onset {onset}")));
        }
        let e = out.entry(id.to_string()).or_insert_with(|| EventRows {
            amplitudes: amp.map(|_| Vec::new()),
            rise_times_s: rise.map(|_| Vec::new()),
            ..Default::default()
        });
        if let Some(&prev) = e.onsets.last() {
            if onset < prev {
                return Err(t.err(
                    *line,
                    format!("onsets of subject {id} are not sorted ({onset} after {prev})"),
                ));
            }
        }
        e.onsets.push(onset);
        e.lines.push(*line);
        if let (Some(a), Some(r)) = (amp, rise) {
            e.amplitudes.as_mut().unwrap().push(t.float(rec, *line, a)?);
            e.rise_times_s.as_mut().unwrap().push(t.float(rec, *line, r)?);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrialRows {
    pub trials: Vec<RawTrial>,
    pub session_end_s: Option<f64>,
}

fn parse_bool(s: &str) -> Option<bool> {
    match s {
        "1" | "true" | "TRUE" | "True" => Some(true),
        "0" | "false" | "FALSE" | "False" => Some(false),
        _ => None,
    }
}

pub fn parse_trials_csv(path: &Path) -> Result<BTreeMap<String, TrialRows>> {
    let required = [
        "subject_id",
        "trial_idx",
        "stim_onset_s",
        "response_time_s",
        "valence",
        "rt_s",
        "correct",
    ];
    let t = Table::read(path, &required, &["session_end_s"])?;
    let c: Vec<usize> = required.iter().map(|n| t.col(n).unwrap()).collect();
    let end_col = t.col("session_end_s");
    let mut out: BTreeMap<String, TrialRows> = BTreeMap::new();
    let mut seen: BTreeSet<(String, u32)> = BTreeSet::new();
    for (line, rec) in &t.rows {
        let line = *line;
        let id = t.text(rec, line, c[0])?;
        if id.is_empty() {
            return Err(t.err(line, "empty subject_id"));
        }
        let idx_s = t.text(rec, line, c[1])?;
        let trial_idx: u32 = idx_s
            .parse()
            .map_err(|_| t.err(line, format!("trial_idx must be a non-negative integer, got '{idx_s}'")))?;
        if !seen.insert((id.to_string(), trial_idx)) {
            return Err(t.err(line, format!("duplicate trial {trial_idx} for subject {id}")));
        }
        let valence = t.text(rec, line, c[4])?;
        let negative = match valence {
            "negative" => true,
            "pos_neutral" => false,
            other => {
                return Err(t.err(
                    line,
                    format!("unknown valence '{other}' (expected pos_neutral or negative)"),
                ))
            }
        };
        let correct_s = t.text(rec, line, c[6])?;
        let correct =
            parse_bool(correct_s).ok_or_else(|| t.err(line, format!("correct must be 0 or 1, got '{correct_s}'")))?;
        let trial = RawTrial {
            trial_idx,
            stim_onset_s: t.float(rec, line, c[2])?,
            response_time_s: t.opt_float(rec, line, c[3])?,
            rt_s: t.opt_float(rec, line, c[5])?,
            negative,
            correct,
        };
        if trial.response_time_s.is_some() != trial.rt_s.is_some() {
            return Err(t.err(line, "response_time_s and rt_s must be both present or both empty"));
        }
        let entry = out.entry(id.to_string()).or_default();
        if let Some(col) = end_col {
            if let Some(end) = t.opt_float(rec, line, col)? {
                match entry.session_end_s {
                    Some(prev) if prev != end => {
                        return Err(t.err(line, format!("subject {id}: conflicting session_end_s {end} vs {prev}")))
                    }
                    _ => entry.session_end_s = Some(end),
                }
            }
        }
        entry.trials.push(trial);
    }
    for (id, rows) in &out {
        if rows.trials.len() != NOMINAL_TRIALS {
            log::warn!(
                "{}: subject {id} has {} trials (nominal {NOMINAL_TRIALS})",
                path.display(),
                rows.trials.len()
            );
        }
    }
    Ok(out)
}

pub fn parse_tonic_csv(path: &Path) -> Result<BTreeMap<String, Vec<(f64, f64)>>> {
    let t = Table::read(path, &["subject_id", "time_s", "conductance"], &[])?;
    let (sid, ts, cv) = (
        t.col("subject_id").unwrap(),
        t.col("time_s").unwrap(),
        t.col("conductance").unwrap(),
    );
    let mut out: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for (line, rec) in &t.rows {
        let id = t.text(rec, *line, sid)?;
        let time = t.float(rec, *line, ts)?;
        let v = t.float(rec, *line, cv)?;
        let e = out.entry(id.to_string()).or_default();
        if e.last().is_some_and(|p| time < p.0) {
            return Err(t.err(*line, format!("tonic samples of subject {id} are not time-ordered")));
        }
        e.push((time, v));
    }
    Ok(out)
}

pub fn parse_labels_csv(path: &Path) -> Result<BTreeMap<String, String>> {
    let t = Table::read(path, &["subject_id", "group"], &[])?;
    let (sid, g) = (t.col("subject_id").unwrap(), t.col("group").unwrap());
    let mut out = BTreeMap::new();
    for (line, rec) in &t.rows {
        let id = t.text(rec, *line, sid)?;
        let group = t.text(rec, *line, g)?;
        if group.is_empty() {
            return Err(t.err(*line, format!("empty group for subject {id}")));
        }
        if out.insert(id.to_string(), group.to_string()).is_some() {
            return Err(t.err(*line, format!("duplicate label for subject {id}")));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct InputPaths {
    pub events: PathBuf,
    pub trials: PathBuf,
    pub tonic: Option<PathBuf>,
}

/// Joins the input tables into subject records ordered by subject id.
///
/// The session length is `duration` when given, else the subject's
/// `session_end_s`. Subjects listed in the trials file without events get an
/// empty train. Annotations are attached only when the events file carries
/// amplitude and rise-time columns and a tonic file is given.
pub fn load_subjects(paths: &InputPaths, duration: Option<f64>, allow: Option<&[String]>) -> Result<Vec<SubjectRecord>> {
    let events = parse_events_csv(&paths.events)?;
    let trials = parse_trials_csv(&paths.trials)?;
    let tonic = paths.tonic.as_deref().map(parse_tonic_csv).transpose()?;
    if let Some(d) = duration {
        if !(d > 0.0 && d.is_finite()) {
            return Err(Error::InvalidInput(format!("duration must be > 0, got {d}")));
        }
    }
    if let Some(id) = events.keys().find(|k| !trials.contains_key(*k)) {
        return Err(Error::InvalidInput(format!(
            "subject {id} appears in {} but not in {}",
            paths.events.display(),
            paths.trials.display()
        )));
    }
    if let Some(list) = allow {
        if let Some(id) = list.iter().find(|id| !trials.contains_key(*id)) {
            return Err(Error::InvalidInput(format!("--subjects lists unknown subject {id}")));
        }
    }
    let mut out = Vec::new();
    for (id, tr) in trials {
        if allow.is_some_and(|l| !l.contains(&id)) {
            continue;
        }
        let t_end = duration.or(tr.session_end_s).ok_or_else(|| {
            Error::InvalidInput(format!(
                "subject {id}: session length unknown; pass --duration or add a session_end_s column to {}",
                paths.trials.display()
            ))
        })?;
        let ev = events.get(&id).cloned().unwrap_or_default();
        if let Some(k) = ev.onsets.iter().position(|&o| o > t_end) {
            return Err(Error::Parse {
                path: paths.events.clone(),
                line: ev.lines[k],
                msg: format!("subject {id}: onset {} beyond session end {t_end}", ev.onsets[k]),
            });
        }
        let annotations = match (&tonic, &ev.amplitudes, &ev.rise_times_s) {
            (Some(tonic), Some(a), Some(r)) => Some(SummaryAnnotations {
                tonic_samples: tonic.get(&id).cloned().unwrap_or_default(),
                scr_amplitudes: a.clone(),
                scr_rise_times_s: r.clone(),
            }),
            _ => None,
        };
        let train = EventTrain::new(ev.onsets, t_end)?;
        out.push(SubjectRecord::new(id, train, tr.trials, annotations)?);
    }
    Ok(out)
}

fn finish(path: &Path, w: csv::Writer<Vec<u8>>, config: &serde_json::Value) -> Result<()> {
    let body = w.into_inner().map_err(|e| Error::InvalidInput(format!("csv: {e}")))?;
    let mut text = provenance_line(config).into_bytes();
    text.extend(body);
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new())
}

fn csv_write(r: std::result::Result<(), csv::Error>) -> Result<()> {
    r.map_err(|e| Error::InvalidInput(format!("csv: {e}")))
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// Amplitude and rise-time columns are written when every subject has them.
pub fn write_events_csv(path: &Path, records: &[SubjectRecord], config: &serde_json::Value) -> Result<()> {
    let annotated = !records.is_empty()
        && records.iter().all(|r| {
            r.annotations.as_ref().is_some_and(|a| {
                a.scr_amplitudes.len() == r.events.len() && a.scr_rise_times_s.len() == r.events.len()
            })
        });
    let mut w = writer();
    if annotated {
        csv_write(w.write_record(["subject_id", "onset_s", "amplitude", "rise_time_s"]))?;
    } else {
        csv_write(w.write_record(["subject_id", "onset_s"]))?;
    }
    for r in records {
        for (k, t) in r.events.onsets().iter().enumerate() {
            if annotated {
                let a = r.annotations.as_ref().unwrap();
                csv_write(w.write_record([
                    r.subject_id.clone(),
                    t.to_string(),
                    a.scr_amplitudes[k].to_string(),
                    a.scr_rise_times_s[k].to_string(),
                ]))?;
            } else {
                csv_write(w.write_record([r.subject_id.clone(), t.to_string()]))?;
            }
        }
    }
    finish(path, w, config)
}

/// Includes `session_end_s` so the file alone fixes each session length.
pub fn write_trials_csv(path: &Path, records: &[SubjectRecord], config: &serde_json::Value) -> Result<()> {
    let mut w = writer();
    csv_write(w.write_record([
        "subject_id",
        "trial_idx",
        "stim_onset_s",
        "response_time_s",
        "valence",
        "rt_s",
        "correct",
        "session_end_s",
    ]))?;
    for r in records {
        for t in &r.raw_trials {
            csv_write(w.write_record([
                r.subject_id.clone(),
                t.trial_idx.to_string(),
                t.stim_onset_s.to_string(),
                opt(t.response_time_s),
                if t.negative { "negative" } else { "pos_neutral" }.to_string(),
                opt(t.rt_s),
                u8::from(t.correct).to_string(),
                r.events.duration().to_string(),
            ]))?;
        }
    }
    finish(path, w, config)
}

pub fn write_tonic_csv(path: &Path, records: &[SubjectRecord], config: &serde_json::Value) -> Result<()> {
    let mut w = writer();
    csv_write(w.write_record(["subject_id", "time_s", "conductance"]))?;
    for r in records {
        if let Some(a) = &r.annotations {
            for (t, v) in &a.tonic_samples {
                csv_write(w.write_record([r.subject_id.clone(), t.to_string(), v.to_string()]))?;
            }
        }
    }
    finish(path, w, config)
}

pub fn write_labels_csv(path: &Path, labels: &[(String, String)], config: &serde_json::Value) -> Result<()> {
    let mut w = writer();
    csv_write(w.write_record(["subject_id", "group"]))?;
    for (id, g) in labels {
        csv_write(w.write_record([id, g]))?;
    }
    finish(path, w, config)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    const TRIALS: &str = "subject_id,trial_idx,stim_onset_s,response_time_s,valence,rt_s,correct,session_end_s
s1,0,1,1.5,negative,0.5,1,20
s1,1,5,5.7,pos_neutral,0.7,0,20
s1,2,9,,pos_neutral,,0,20
";

    #[test]
    fn two_row_events_file() {
        let d = tempfile::tempdir().unwrap();
        let e = write(d.path(), "e.csv", "subject_id,onset_s\ns1,2.5\ns1,7\n");
        let m = parse_events_csv(&e).unwrap();
        assert_eq!(m["s1"].onsets, vec![2.5, 7.0]);
        assert_eq!(m["s1"].lines, vec![2, 3]);
    }

    #[test]
    fn unsorted_onsets_name_the_line() {
        let d = tempfile::tempdir().unwrap();
        let e = write(d.path(), "e.csv", "subject_id,onset_s\ns1,5\ns2,1\ns1,4\n");
        match parse_events_csv(&e) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn miss_row_and_session_end() {
        let d = tempfile::tempdir().unwrap();
        let t = write(d.path(), "t.csv", TRIALS);
        let m = parse_trials_csv(&t).unwrap();
        let s = &m["s1"];
        assert_eq!(s.session_end_s, Some(20.0));
        assert_eq!(s.trials[2].response_time_s, None);
        assert!(s.trials[0].negative && !s.trials[1].negative);
    }

    #[test]
    fn bad_valence_and_duplicates() {
        let d = tempfile::tempdir().unwrap();
        let bad = TRIALS.replace("negative,0.5", "sad,0.5");
        let t = write(d.path(), "t.csv", &bad);
        assert!(matches!(parse_trials_csv(&t), Err(Error::Parse { line: 2, .. })));
        let dup = TRIALS.replace("s1,1,5", "s1,0,5");
        let t = write(d.path(), "t2.csv", &dup);
        assert!(matches!(parse_trials_csv(&t), Err(Error::Parse { line: 3, .. })));
    }

    #[test]
    fn onset_beyond_session_is_rejected() {
        let d = tempfile::tempdir().unwrap();
        let t = write(d.path(), "t.csv", TRIALS);
        let e = write(d.path(), "e.csv", "subject_id,onset_s\ns1,2\ns1,25\n");
        let paths = InputPaths {
            events: e,
            trials: t,
            tonic: None,
        };
        assert!(matches!(load_subjects(&paths, None, None), Err(Error::Parse { line: 3, .. })));
        let recs = load_subjects(&paths, Some(30.0), None).unwrap();
        assert_eq!(recs[0].events.len(), 2);
        assert_eq!(recs[0].trials[2].response_time_s, None);
        assert!(recs[0].trials[2].error);
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(
            parse_events_csv(Path::new("/nonexistent/e.csv")),
            Err(Error::Io { .. })
        ));
    }
}
