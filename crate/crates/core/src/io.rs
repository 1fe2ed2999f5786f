//! File formats: the dataset CSV/JSON schema, JSON documents, and small
//! CSV tables for fits, recovery runs and analysis series.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::aggregation::{Decision, Response};
use crate::scenario::MEMBERS;
use crate::simulate::{Dataset, TrialRecord};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Json(#[from] serde_json::Error),
    #[error("schema violation: {0}")]
    Schema(String),
}

pub const DATASET_COLUMNS: [&str; 9] = [
    "group_id",
    "trial",
    "scenario_id",
    "member",
    "decision",
    "confidence",
    "ideal_decision",
    "ideal_confidence",
    "truth",
];

const MEMBER_LABELS: [&str; MEMBERS] = ["A", "B", "C"];
const GROUP_LABEL: &str = "G";

pub fn read_file(path: &Path) -> Result<Vec<u8>, IoError> {
    fs::read(path).map_err(|source| IoError::Io { path: path.display().to_string(), source })
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|source| IoError::Io { path: dir.display().to_string(), source })?;
    }
    fs::write(path, bytes).map_err(|source| IoError::Io { path: path.display().to_string(), source })
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn to_json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>, IoError> {
    let mut out = serde_json::to_vec_pretty(value)?;
    out.push(b'\n');
    Ok(out)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    write_file(path, &to_json_bytes(value)?)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    Ok(serde_json::from_slice(&read_file(path)?)?)
}

/// Probability with six fractional digits.
pub fn fmt_prob(p: f64) -> String {
    format!("{p:.6}")
}

fn fmt_decision(d: Decision) -> &'static str {
    match d {
        Decision::Positive => "+1",
        Decision::Negative => "-1",
    }
}

fn parse_decision(s: &str) -> Result<Decision, IoError> {
    match s.trim() {
        "+1" | "1" => Ok(Decision::Positive),
        "-1" => Ok(Decision::Negative),
        other => Err(IoError::Schema(format!("decision must be +1 or -1, got '{other}'"))),
    }
}

/// One row of the dataset file: a member or group response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRow {
    pub group_id: u32,
    pub trial: u32,
    pub scenario_id: String,
    pub member: String,
    pub decision: String,
    pub confidence: String,
    pub ideal_decision: String,
    pub ideal_confidence: String,
    pub truth: String,
}

fn row(t: &TrialRecord, member: &str, r: &Response, ideal: &Response) -> DatasetRow {
    DatasetRow {
        group_id: t.group_id,
        trial: t.trial,
        scenario_id: t.scenario_id.clone(),
        member: member.to_string(),
        decision: fmt_decision(r.decision).into(),
        confidence: fmt_prob(r.p()),
        ideal_decision: fmt_decision(ideal.decision).into(),
        ideal_confidence: fmt_prob(ideal.p()),
        truth: fmt_decision(t.truth).into(),
    }
}

/// Four rows per trial (members A, B, C, then the group G), in trial order.
pub fn dataset_rows(dataset: &Dataset) -> Vec<DatasetRow> {
    let mut rows = Vec::with_capacity(dataset.trials.len() * (MEMBERS + 1));
    for t in &dataset.trials {
        for (m, label) in MEMBER_LABELS.iter().enumerate() {
            rows.push(row(t, label, &t.members[m], &t.ideal_members[m]));
        }
        rows.push(row(t, GROUP_LABEL, &t.group, &t.ideal_group));
    }
    rows
}

fn parse_response(decision: &str, confidence: &str) -> Result<Response, IoError> {
    let d = parse_decision(decision)?;
    let p: f64 = confidence.trim().parse().map_err(|_| IoError::Schema(format!("bad confidence '{confidence}'")))?;
    Response::new(d, p).map_err(|_| IoError::Schema(format!("confidence {p} outside [0.5, 1]")))
}

/// Rebuilds trials from rows, checking that every trial has exactly one row
/// per member and one group row with consistent scenario and truth.
pub fn dataset_from_rows(rows: &[DatasetRow]) -> Result<Dataset, IoError> {
    let mut order: Vec<(u32, u32)> = Vec::new();
    let mut by_trial: BTreeMap<(u32, u32), Vec<&DatasetRow>> = BTreeMap::new();
    for r in rows {
        let key = (r.group_id, r.trial);
        let entry = by_trial.entry(key).or_default();
        if entry.is_empty() {
            order.push(key);
        }
        entry.push(r);
    }
    let mut trials = Vec::with_capacity(order.len());
    for key in order {
        let rs = &by_trial[&key];
        let ctx = |msg: String| IoError::Schema(format!("group {} trial {}: {msg}", key.0, key.1));
        let first = rs[0];
        for r in rs {
            if r.scenario_id != first.scenario_id || r.truth.trim() != first.truth.trim() {
                return Err(ctx("rows disagree on scenario or truth".into()));
            }
        }
        let find = |label: &str| -> Result<(Response, Response), IoError> {
            let hits: Vec<&&DatasetRow> = rs.iter().filter(|r| r.member == label).collect();
            if hits.len() != 1 {
                return Err(ctx(format!("expected one row for member {label}, found {}", hits.len())));
            }
            let r = hits[0];
            Ok((parse_response(&r.decision, &r.confidence)?, parse_response(&r.ideal_decision, &r.ideal_confidence)?))
        };
        if rs.len() != MEMBERS + 1 {
            return Err(ctx(format!("expected {} rows, found {}", MEMBERS + 1, rs.len())));
        }
        let mut members = Vec::with_capacity(MEMBERS);
        let mut ideals = Vec::with_capacity(MEMBERS);
        for label in MEMBER_LABELS {
            let (r, i) = find(label)?;
            members.push(r);
            ideals.push(i);
        }
        let (group, ideal_group) = find(GROUP_LABEL)?;
        trials.push(TrialRecord {
            group_id: key.0,
            trial: key.1,
            scenario_id: first.scenario_id.clone(),
            truth: parse_decision(&first.truth)?,
            ideal_members: [ideals[0], ideals[1], ideals[2]],
            ideal_group,
            members: [members[0], members[1], members[2]],
            group,
        });
    }
    Ok(Dataset::new(trials))
}

pub fn dataset_to_csv(dataset: &Dataset) -> Result<Vec<u8>, IoError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in dataset_rows(dataset) {
        w.serialize(r)?;
    }
    if dataset.is_empty() {
        w.write_record(DATASET_COLUMNS)?;
    }
    w.into_inner().map_err(|e| IoError::Schema(e.to_string()))
}

pub fn dataset_from_csv(bytes: &[u8]) -> Result<Dataset, IoError> {
    let mut r = csv::Reader::from_reader(bytes);
    let headers = r.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != DATASET_COLUMNS {
        return Err(IoError::Schema(format!(
            "expected columns {}, found {}",
            DATASET_COLUMNS.join(","),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let rows = r.deserialize().collect::<Result<Vec<DatasetRow>, _>>()?;
    dataset_from_rows(&rows)
}

pub fn dataset_to_json(dataset: &Dataset) -> Result<Vec<u8>, IoError> {
    to_json_bytes(&dataset_rows(dataset))
}

pub fn dataset_from_json(bytes: &[u8]) -> Result<Dataset, IoError> {
    let rows: Vec<DatasetRow> = serde_json::from_slice(bytes)?;
    dataset_from_rows(&rows)
}

/// Reads a dataset, choosing the format by extension (`.json`, else CSV).
pub fn read_dataset(path: &Path) -> Result<Dataset, IoError> {
    let bytes = read_file(path)?;
    if path.extension().is_some_and(|e| e == "json") {
        dataset_from_json(&bytes)
    } else {
        dataset_from_csv(&bytes)
    }
}

/// Serializes records with a header row into CSV bytes.
pub fn table_to_csv<T: Serialize>(rows: &[T], header: &[&str]) -> Result<Vec<u8>, IoError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if rows.is_empty() {
        w.write_record(header)?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| IoError::Schema(e.to_string()))
}

/// Float for CSV output: six fractional digits, or `inf`, `-inf`, `nan`.
pub fn fmt_float(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{x:.6}")
    }
}
