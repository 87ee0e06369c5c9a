//! Line-delimited JSON shot-record files.
//!
//! The first line is a header carrying the full config, its digest and the
//! readout reference levels; every following line is one shot. Both carry
//! `schema_version`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qubit::{Projection, ReadoutReference, ShotRecord};

use super::config::ScenarioConfig;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordHeader {
    pub schema_version: u32,
    pub config_digest: String,
    pub config: ScenarioConfig,
    pub reference: ReadoutReference,
    pub n_records: u64,
}

impl RecordHeader {
    pub fn new(config: &ScenarioConfig, reference: ReadoutReference, n_records: u64) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            config_digest: config.digest(),
            config: config.clone(),
            reference,
            n_records,
        }
    }
}

/// On-disk layout of one shot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RecordLine {
    schema_version: u32,
    shot_index: u64,
    tau_us: f64,
    #[serde(rename = "nominal_amplitude_mA")]
    nominal_amplitude_ma: f64,
    nominal_duration_us: f64,
    #[serde(rename = "measured_area_mA_us")]
    measured_area_ma_us: f64,
    projection: Projection,
    photons: u64,
    drift_state: f64,
}

impl From<&ShotRecord> for RecordLine {
    fn from(r: &ShotRecord) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            shot_index: r.shot_index,
            tau_us: r.tau_us,
            nominal_amplitude_ma: r.nominal_amplitude_ma,
            nominal_duration_us: r.nominal_duration_us,
            measured_area_ma_us: r.measured_area_ma_us,
            projection: r.projection,
            photons: r.photons,
            drift_state: r.drift_state,
        }
    }
}

impl From<RecordLine> for ShotRecord {
    fn from(l: RecordLine) -> Self {
        Self {
            shot_index: l.shot_index,
            tau_us: l.tau_us,
            nominal_amplitude_ma: l.nominal_amplitude_ma,
            nominal_duration_us: l.nominal_duration_us,
            measured_area_ma_us: l.measured_area_ma_us,
            projection: l.projection,
            photons: l.photons,
            drift_state: l.drift_state,
        }
    }
}

/// Serializes one shot exactly as it appears in a record file.
pub fn record_line(record: &ShotRecord) -> String {
    serde_json::to_string(&RecordLine::from(record)).expect("record serializes")
}

pub fn write_records(path: &Path, header: &RecordHeader, records: &[ShotRecord]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    serde_json::to_writer(&mut w, header).map_err(|e| Error::Json {
        path: path.into(),
        source: e,
    })?;
    w.write_all(b"\n").map_err(io)?;
    for r in records {
        w.write_all(record_line(r).as_bytes()).map_err(io)?;
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)
}

fn malformed(path: &Path, line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Records {
        path: path.into(),
        message: format!("line {line}: {msg}"),
    }
}

/// Version check before full parsing, so an old file yields a migration
/// error rather than a field error.
fn check_version(path: &Path, line_no: usize, text: &str) -> Result<()> {
    #[derive(Deserialize)]
    struct Versioned {
        schema_version: Option<u32>,
    }
    let v: Versioned = serde_json::from_str(text).map_err(|e| malformed(path, line_no, e))?;
    match v.schema_version {
        Some(SCHEMA_VERSION) => Ok(()),
        Some(found) => Err(Error::Schema {
            found,
            expected: SCHEMA_VERSION,
        }),
        None => Err(malformed(path, line_no, "missing schema_version")),
    }
}

pub fn read_records(path: &Path) -> Result<(RecordHeader, Vec<ShotRecord>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let first = lines
        .next()
        .ok_or_else(|| malformed(path, 1, "empty file"))?
        .map_err(|e| Error::io(path, e))?;
    check_version(path, 1, &first)?;
    let header: RecordHeader = serde_json::from_str(&first).map_err(|e| malformed(path, 1, format!("bad header: {e}")))?;
    if header.config.digest() != header.config_digest {
        return Err(malformed(path, 1, "config digest does not match the embedded config"));
    }
    let mut records = Vec::with_capacity(header.n_records as usize);
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        check_version(path, line_no, &line)?;
        let rec: RecordLine = serde_json::from_str(&line).map_err(|e| malformed(path, line_no, e))?;
        records.push(rec.into());
    }
    if records.len() as u64 != header.n_records {
        return Err(malformed(
            path,
            records.len() + 1,
            format!("header announces {} records, found {}", header.n_records, records.len()),
        ));
    }
    Ok((header, records))
}
