//! File formats: prediction records (JSONL or CSV), NC-flag files,
//! partition files, and soft-label files.
//!
//! The JSONL record format is one object per line:
//! `{"id": "...", "label": 3, "prediction": [...], "prediction2": [...]}`
//! with a **1-based** label and `prediction2` optional (used only by
//! two-view decision rules). The CSV alternative has the header
//! `id,label,p1,...,pk` and no second view. Internally labels are 0-based;
//! the shift happens here and only here.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use genkl::{
    DoubleHotLabel, PartitionReport, PredictionRecord, RecordDecision, SoftLabel, StochasticVector,
};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// One prediction record as serialized (1-based label).
#[derive(Debug, Serialize, Deserialize)]
pub struct RecordLine {
    pub id: String,
    pub label: usize,
    pub prediction: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prediction2: Option<Vec<f64>>,
}

/// One partitioned record: the input record plus its decision.
#[derive(Debug, Serialize, Deserialize)]
pub struct PartitionLine {
    #[serde(flatten)]
    pub record: RecordLine,
    pub is_nc: bool,
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness_index: Option<usize>,
}

/// One NC flag, aligned to records by id.
#[derive(Debug, Serialize, Deserialize)]
pub struct FlagLine {
    pub id: String,
    pub nc: bool,
}

/// One soft label: uniform (`k` classes), or a double-hot support/weight
/// pair (1-based support indices; a single entry when the two supports
/// coincide).
#[derive(Debug, Serialize, Deserialize)]
pub struct SoftLabelLine {
    pub id: String,
    pub variant: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub support: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::input(path, None, e))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::input(path, None, e))
}

fn record_from_line(line: RecordLine, path: &Path, number: usize) -> Result<PredictionRecord, CliError> {
    let k = line.prediction.len();
    if line.label == 0 || line.label > k {
        return Err(CliError::input(
            path,
            Some(number),
            format!("label {} out of range 1..={k}", line.label),
        ));
    }
    let prediction = StochasticVector::new(line.prediction)
        .map_err(|e| CliError::input(path, Some(number), e))?;
    let second = line
        .prediction2
        .map(StochasticVector::new)
        .transpose()
        .map_err(|e| CliError::input(path, Some(number), e))?;
    PredictionRecord::new(line.id, line.label - 1, prediction, second)
        .map_err(|e| CliError::input(path, Some(number), e))
}

fn read_records_jsonl(path: &Path) -> Result<Vec<PredictionRecord>, CliError> {
    let mut records = Vec::new();
    for (index, line) in open(path)?.lines().enumerate() {
        let number = index + 1;
        let line = line.map_err(|e| CliError::input(path, Some(number), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: RecordLine = serde_json::from_str(&line)
            .map_err(|e| CliError::input(path, Some(number), e))?;
        records.push(record_from_line(parsed, path, number)?);
    }
    Ok(records)
}

fn read_records_csv(path: &Path) -> Result<Vec<PredictionRecord>, CliError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| CliError::input(path, None, e))?;
    {
        let headers = reader
            .headers()
            .map_err(|e| CliError::input(path, Some(1), e))?;
        let mut fields = headers.iter();
        if fields.next() != Some("id") || fields.next() != Some("label") {
            return Err(CliError::input(
                path,
                Some(1),
                "header must be id,label,p1,...,pk",
            ));
        }
        for (i, field) in fields.enumerate() {
            if field != format!("p{}", i + 1) {
                return Err(CliError::input(
                    path,
                    Some(1),
                    format!("header column {} is {field:?}, expected \"p{}\"", i + 3, i + 1),
                ));
            }
        }
    }
    let mut records = Vec::new();
    for row in reader.into_records() {
        let row = row.map_err(|e| CliError::input(path, None, e))?;
        let number = row
            .position()
            .map(|p| p.line() as usize)
            .unwrap_or(records.len() + 2);
        let mut fields = row.iter();
        let id = fields
            .next()
            .ok_or_else(|| CliError::input(path, Some(number), "missing id"))?
            .to_string();
        let label: usize = fields
            .next()
            .ok_or_else(|| CliError::input(path, Some(number), "missing label"))?
            .parse()
            .map_err(|e| CliError::input(path, Some(number), format!("bad label: {e}")))?;
        let prediction = fields
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|e| CliError::input(path, Some(number), format!("bad probability {f:?}: {e}")))
            })
            .collect::<Result<Vec<f64>, CliError>>()?;
        records.push(record_from_line(
            RecordLine {
                id,
                label,
                prediction,
                prediction2: None,
            },
            path,
            number,
        )?);
    }
    Ok(records)
}

/// Reads prediction records, dispatching on the extension: `.csv` is CSV,
/// everything else JSONL.
pub fn read_records(path: &Path) -> Result<Vec<PredictionRecord>, CliError> {
    if path.extension().is_some_and(|e| e == "csv") {
        read_records_csv(path)
    } else {
        read_records_jsonl(path)
    }
}

fn record_to_line(record: &PredictionRecord) -> RecordLine {
    RecordLine {
        id: record.id().to_string(),
        label: record.label() + 1,
        prediction: record.prediction().entries().to_vec(),
        prediction2: record.second_view().map(|v| v.entries().to_vec()),
    }
}

/// Writes the NC and non-NC partition files (input order within each).
pub fn write_partition(
    records: &[PredictionRecord],
    report: &PartitionReport,
    nc_path: &Path,
    non_nc_path: &Path,
) -> Result<(), CliError> {
    let mut nc = create(nc_path)?;
    let mut non_nc = create(non_nc_path)?;
    for (record, decision) in records.iter().zip(&report.decisions) {
        let line = PartitionLine {
            record: record_to_line(record),
            is_nc: decision.is_nc,
            score: decision.score,
            witness_index: decision.witness_index,
        };
        let out = if decision.is_nc { &mut nc } else { &mut non_nc };
        serde_json::to_writer(&mut *out, &line)
            .map_err(|e| CliError::input(nc_path, None, e))?;
        writeln!(out).map_err(|e| CliError::input(nc_path, None, e))?;
    }
    nc.flush().map_err(|e| CliError::input(nc_path, None, e))?;
    non_nc
        .flush()
        .map_err(|e| CliError::input(non_nc_path, None, e))
}

/// Reads one partition file back into records and their decisions.
pub fn read_partition(
    path: &Path,
) -> Result<(Vec<PredictionRecord>, Vec<RecordDecision>), CliError> {
    let mut records = Vec::new();
    let mut decisions = Vec::new();
    for (index, line) in open(path)?.lines().enumerate() {
        let number = index + 1;
        let line = line.map_err(|e| CliError::input(path, Some(number), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: PartitionLine = serde_json::from_str(&line)
            .map_err(|e| CliError::input(path, Some(number), e))?;
        decisions.push(RecordDecision {
            id: parsed.record.id.clone(),
            is_nc: parsed.is_nc,
            score: parsed.score,
            witness_index: parsed.witness_index,
        });
        records.push(record_from_line(parsed.record, path, number)?);
    }
    Ok((records, decisions))
}

/// Reads an NC-flag file (`{"id": ..., "nc": ...}` per line).
pub fn read_flags(path: &Path) -> Result<Vec<FlagLine>, CliError> {
    let mut flags = Vec::new();
    for (index, line) in open(path)?.lines().enumerate() {
        let number = index + 1;
        let line = line.map_err(|e| CliError::input(path, Some(number), e))?;
        if line.trim().is_empty() {
            continue;
        }
        flags.push(
            serde_json::from_str(&line).map_err(|e| CliError::input(path, Some(number), e))?,
        );
    }
    Ok(flags)
}

fn double_hot_line(id: &str, label: &DoubleHotLabel, variant: &str, normalize: bool) -> SoftLabelLine {
    let (support, weights) = if label.given_index() == label.argmax_index() {
        (vec![label.given_index() + 1], vec![label.mass()])
    } else {
        (
            vec![label.given_index() + 1, label.argmax_index() + 1],
            vec![label.given_weight(), label.argmax_weight()],
        )
    };
    let weights = if normalize {
        let mass = label.mass();
        weights.into_iter().map(|w| w / mass).collect()
    } else {
        weights
    };
    SoftLabelLine {
        id: id.to_string(),
        variant: variant.to_string(),
        k: None,
        support: Some(support),
        weights: Some(weights),
    }
}

/// Writes soft labels, one line per record in input order.
pub fn write_soft_labels(
    labels: &[(String, SoftLabel)],
    path: &Path,
) -> Result<(), CliError> {
    let mut out = create(path)?;
    for (id, label) in labels {
        let line = match label {
            SoftLabel::Uniform { k } => SoftLabelLine {
                id: id.clone(),
                variant: "uniform".to_string(),
                k: Some(*k),
                support: None,
                weights: None,
            },
            SoftLabel::DoubleHot(d) => double_hot_line(id, d, "double_hot", false),
            SoftLabel::NormalizedDoubleHot(v) => {
                // Recover the support/weight view of the normalized vector.
                let entries = v.entries();
                let support: Vec<usize> = (0..v.len()).filter(|&j| entries[j] > 0.0).collect();
                SoftLabelLine {
                    id: id.clone(),
                    variant: "normalized_double_hot".to_string(),
                    k: None,
                    weights: Some(support.iter().map(|&j| entries[j]).collect()),
                    support: Some(support.into_iter().map(|j| j + 1).collect()),
                }
            }
        };
        serde_json::to_writer(&mut out, &line).map_err(|e| CliError::input(path, None, e))?;
        writeln!(out).map_err(|e| CliError::input(path, None, e))?;
    }
    out.flush().map_err(|e| CliError::input(path, None, e))
}

/// Writes a value as pretty JSON (the format used for configs, summaries,
/// and reports — keys in declaration order, floats shortest-roundtrip).
pub fn write_json(value: &impl Serialize, path: &Path) -> Result<(), CliError> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value)
        .map_err(|e| CliError::input(path, None, e))?;
    writeln!(out).map_err(|e| CliError::input(path, None, e))?;
    out.flush().map_err(|e| CliError::input(path, None, e))
}

/// Reads a JSON config file.
pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let file = File::open(path).map_err(|e| CliError::input(path, None, e))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| CliError::config(format!(
        "{}: {e}",
        path.display()
    )))
}
