//! Running scenarios, replaying record files, and writing outputs.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::analysis::CurvePoint;
use crate::calibration::CalibrationResult;
use crate::error::{Error, Result};

use super::config::{AnalysisConfig, Scenario, ScenarioConfig};
use super::records::{read_records, write_records, RecordHeader};
use super::report::{analyze, floor_report, Report, ScenarioResults};
use super::simulate::{simulate, RunOptions};

pub const RECORDS_FILE: &str = "shots.jsonl";
pub const REPORT_FILE: &str = "report.json";
pub const CALIBRATION_FILE: &str = "calibration.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const CURVES_DIR: &str = "curves";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub scenario: Scenario,
    pub config_digest: String,
    pub code_version: String,
    pub started_unix_s: u64,
    pub finished_unix_s: u64,
    pub n_records: u64,
    pub outputs: Vec<PathBuf>,
    pub summary: BTreeMap<String, f64>,
}

/// Overrides applied on top of the analysis options stored in a record file.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ReplayOptions {
    pub delta0: Option<f64>,
    pub postselect_half_width_rad: Option<f64>,
    pub phase_bins: Option<usize>,
    pub area_bin_width_ma_us: Option<f64>,
}

impl ReplayOptions {
    pub fn apply(&self, base: &AnalysisConfig) -> AnalysisConfig {
        AnalysisConfig {
            area_bin_width_ma_us: self.area_bin_width_ma_us.unwrap_or(base.area_bin_width_ma_us),
            correction_delta0: self.delta0.or(base.correction_delta0),
            postselect_half_width_rad: self.postselect_half_width_rad.unwrap_or(base.postselect_half_width_rad),
            phase_bins: self.phase_bins.unwrap_or(base.phase_bins),
            calibration_tau_us: base.calibration_tau_us,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub scenario: Scenario,
    pub config_digest: String,
    pub calibration: CalibrationResult,
    pub delta0_truth: f64,
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Json {
        path: path.into(),
        source: e,
    })?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn curve_csv(points: &[CurvePoint]) -> String {
    let mut s = String::from("abscissa,signal,stderr,n_shots\n");
    for p in points {
        s.push_str(&format!("{},{},{},{}\n", p.abscissa, p.signal, p.stderr, p.n_shots));
    }
    s
}

fn calibration_of(report: &Report) -> Option<CalibrationReport> {
    let (calibration, delta0_truth) = match report.results() {
        ScenarioResults::Calibrate(r) => (r.calibration.clone(), r.delta0_truth),
        ScenarioResults::SelfLearn(r) => (r.calibration.clone(), r.delta0_truth),
        _ => return None,
    };
    Some(CalibrationReport {
        scenario: report.summary.scenario,
        config_digest: report.summary.config_digest.clone(),
        calibration,
        delta0_truth,
    })
}

/// Writes `report.json`, one CSV per curve and, for calibrating scenarios,
/// `calibration.json`. Returns the written paths.
pub fn write_report(dir: &Path, report: &Report) -> Result<Vec<PathBuf>> {
    create_dir(dir)?;
    let mut out = Vec::new();
    let path = dir.join(REPORT_FILE);
    write_json(&path, &report.summary)?;
    out.push(path);
    if let Some(cal) = calibration_of(report) {
        let path = dir.join(CALIBRATION_FILE);
        write_json(&path, &cal)?;
        out.push(path);
    }
    let curves = dir.join(CURVES_DIR);
    create_dir(&curves)?;
    for (name, points) in &report.curves {
        let path = curves.join(format!("{name}.csv"));
        fs::write(&path, curve_csv(points)).map_err(|e| Error::io(&path, e))?;
        out.push(path);
    }
    Ok(out)
}

fn finish(
    dir: &Path,
    report: &Report,
    mut outputs: Vec<PathBuf>,
    started: u64,
) -> Result<RunManifest> {
    outputs.extend(write_report(dir, report)?);
    let manifest = RunManifest {
        scenario: report.summary.scenario,
        config_digest: report.summary.config_digest.clone(),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        started_unix_s: started,
        finished_unix_s: unix_now(),
        n_records: report.summary.n_records,
        outputs,
        summary: report.headline(),
    };
    write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

/// Simulates, persists the records, analyzes, and writes all outputs into
/// `out_dir`. If the analysis fails the record file is still left behind.
pub fn run_scenario(cfg: &ScenarioConfig, out_dir: &Path, opts: &RunOptions) -> Result<RunManifest> {
    cfg.validate()?;
    let started = unix_now();
    create_dir(out_dir)?;
    if cfg.scenario == Scenario::Floor {
        return finish(out_dir, &floor_report(cfg)?, Vec::new(), started);
    }
    let run = simulate(cfg, opts)?;
    let records_path = out_dir.join(RECORDS_FILE);
    let header = RecordHeader::new(cfg, run.reference, run.records.len() as u64);
    write_records(&records_path, &header, &run.records)?;
    let report = analyze(cfg, &cfg.analysis, &run.reference, &run.records)?;
    finish(out_dir, &report, vec![records_path], started)
}

/// Re-analyzes a record file without simulating anything.
pub fn replay(records_path: &Path, opts: &ReplayOptions) -> Result<Report> {
    let (header, records) = read_records(records_path)?;
    let analysis = opts.apply(&header.config.analysis);
    analyze(&header.config, &analysis, &header.reference, &records)
}

/// [`replay`] plus the same outputs a run writes, minus the record file.
pub fn replay_to(records_path: &Path, out_dir: &Path, opts: &ReplayOptions) -> Result<RunManifest> {
    let started = unix_now();
    let report = replay(records_path, opts)?;
    finish(out_dir, &report, Vec::new(), started)
}
