//! Scenario orchestration: configuration, reproducible shot generation,
//! record persistence, analysis reports and replay.
//!
//! A run writes into one directory:
//!
//! - `shots.jsonl`: header line, then one line per shot
//! - `report.json`: fit results, tagged with the config digest
//! - `calibration.json`: for CALIBRATE and SELF_LEARN
//! - `curves/*.csv`: `abscissa,signal,stderr,n_shots`
//! - `manifest.json`: digest, code version, timestamps, outputs, headline numbers

pub mod config;
pub mod presets;
pub mod records;
pub mod report;
pub mod run;
pub mod simulate;

pub use config::{AnalysisConfig, DurationSweep, FloorGrid, Scenario, ScenarioConfig, Sweep};
pub use presets::{preset, scenario_preset, FULL_SHOT_FACTOR, PRESET_NAMES};
pub use records::{read_records, record_line, write_records, RecordHeader, SCHEMA_VERSION};
pub use report::{analyze, floor_report, Report, ScenarioResults, Summary};
pub use run::{replay, replay_to, run_scenario, write_report, ReplayOptions, RunManifest};
pub use simulate::{simulate, sweep_points, RunOptions, SimulatedRun, SweepPoint};
