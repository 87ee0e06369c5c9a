use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_8;
use std::fs;
use std::path::Path;

use ffd_core::calibration::{self_learning_calibrate, SelfLearnOptions};
use ffd_core::feedforward::{correct_phase, setpoint_phase, uncorrected_quadratures};
use ffd_core::harness::*;
use ffd_core::Error;

fn small(name: &str, shots: u64) -> ScenarioConfig {
    let mut cfg = preset(name).unwrap();
    cfg.shots_per_point = shots;
    cfg.reference_shots = 20_000;
    cfg
}

fn read(path: &Path) -> String {
    fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn curve_files(dir: &Path) -> BTreeMap<String, String> {
    fs::read_dir(dir.join("curves"))
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), read(&p))
        })
        .collect()
}

#[test]
fn run_writes_every_output_tagged_with_digest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small("calibrate", 300);
    let m = run_scenario(&cfg, dir.path(), &RunOptions::default()).unwrap();
    assert_eq!(m.config_digest, cfg.digest());
    assert_eq!(m.code_version, env!("CARGO_PKG_VERSION"));
    assert!(m.finished_unix_s >= m.started_unix_s);
    assert_eq!(m.n_records, 51 * 300);
    for p in &m.outputs {
        assert!(p.exists(), "{}", p.display());
    }
    for f in ["shots.jsonl", "report.json", "calibration.json", "manifest.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let report: serde_json::Value = serde_json::from_str(&read(&dir.path().join("report.json"))).unwrap();
    assert_eq!(report["config_digest"], cfg.digest());
    let cal: serde_json::Value = serde_json::from_str(&read(&dir.path().join("calibration.json"))).unwrap();
    assert_eq!(cal["config_digest"], cfg.digest());
    assert!(cal["calibration"]["delta0"].as_f64().unwrap() > 0.0);
    for (name, text) in curve_files(dir.path()) {
        assert!(text.starts_with("abscissa,signal,stderr,n_shots\n"), "{name}");
    }
    assert!(m.summary.contains_key("delta0"));
}

#[test]
fn record_file_is_self_describing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small("self-learn", 40);
    // A fit may fail at this shot count; the records are written first.
    let _ = run_scenario(&cfg, dir.path(), &RunOptions::default());
    let path = dir.path().join("shots.jsonl");
    let (header, records) = read_records(&path).unwrap();
    assert_eq!(header.config, cfg);
    assert_eq!(header.config_digest, cfg.digest());
    assert_eq!(header.schema_version, SCHEMA_VERSION);
    assert_eq!(records.len(), 30 * 40);
    let text = read(&path);
    let mut lines = text.lines().skip(1);
    let first: serde_json::Value = serde_json::from_str(lines.next().unwrap()).unwrap();
    for key in [
        "schema_version",
        "shot_index",
        "tau_us",
        "nominal_amplitude_mA",
        "nominal_duration_us",
        "measured_area_mA_us",
        "projection",
        "photons",
        "drift_state",
    ] {
        assert!(first.get(key).is_some(), "missing {key}");
    }
    assert_eq!(first.as_object().unwrap().len(), 9);
    // Canonical order: shot indices are consecutive.
    assert!(records.iter().enumerate().all(|(i, r)| r.shot_index == i as u64));
    assert!(records.iter().all(|r| r.nominal_duration_us <= r.tau_us));
}

#[test]
fn replay_reproduces_reports_bit_identically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small("quadrant", 2_000);
    run_scenario(&cfg, dir.path(), &RunOptions::default()).unwrap();
    let again = dir.path().join("replay");
    replay_to(&dir.path().join("shots.jsonl"), &again, &ReplayOptions::default()).unwrap();
    assert_eq!(read(&dir.path().join("report.json")), read(&again.join("report.json")));
    assert_eq!(curve_files(dir.path()), curve_files(&again));
}

#[test]
fn boundary_option_changes_only_postselected_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small("quadrant", 2_000);
    run_scenario(&cfg, dir.path(), &RunOptions::default()).unwrap();
    let records = dir.path().join("shots.jsonl");
    let base = replay(&records, &ReplayOptions::default()).unwrap();
    let narrow = replay(
        &records,
        &ReplayOptions {
            postselect_half_width_rad: Some(FRAC_PI_8),
            ..Default::default()
        },
    )
    .unwrap();
    let (ScenarioResults::Quadrant(a), ScenarioResults::Quadrant(b)) = (base.results(), narrow.results()) else {
        panic!("not a quadrant report");
    };
    assert_eq!(a.pulse_free, b.pulse_free);
    assert_eq!(a.uncorrected, b.uncorrected);
    assert_eq!(a.oracle, b.oracle);
    assert_ne!(a.postselected, b.postselected);
    assert_ne!(a.postselected_x, b.postselected_x);
    assert!(b.mean_kept_fraction < a.mean_kept_fraction);
    for name in ["pulse_free", "uncorrected", "oracle"] {
        assert_eq!(base.curves[name], narrow.curves[name], "{name}");
    }
    for name in ["postselected", "postselected_x", "postselected_y"] {
        assert_ne!(base.curves[name], narrow.curves[name], "{name}");
    }
}

#[test]
fn learned_delta0_matches_precalibrated_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small("quadrant", 4_000);
    run_scenario(&cfg, dir.path(), &RunOptions::default()).unwrap();
    let path = dir.path().join("shots.jsonl");
    let (header, records) = read_records(&path).unwrap();
    let pulsed: Vec<_> = records.into_iter().filter(|r| r.nominal_amplitude_ma != 0.0).collect();
    let learned = self_learning_calibrate(
        &pulsed,
        &header.reference,
        &SelfLearnOptions {
            area_bin_width_ma_us: 0.035,
        },
    )
    .unwrap();
    let d = learned.calibration.delta0;
    assert!((d / 9.48 - 1.0).abs() < 0.01, "learned Δ₀ = {d}");
    let pre = replay(&path, &ReplayOptions::default()).unwrap();
    let post = replay(
        &path,
        &ReplayOptions {
            delta0: Some(d),
            ..Default::default()
        },
    )
    .unwrap();
    let (ScenarioResults::Quadrant(a), ScenarioResults::Quadrant(b)) = (pre.results(), post.results()) else {
        panic!("not a quadrant report");
    };
    let (ta, tb) = (a.postselected.t2_us.unwrap(), b.postselected.t2_us.unwrap());
    let se = a.postselected.t2_stderr.unwrap().hypot(b.postselected.t2_stderr.unwrap());
    assert!((ta - tb).abs() <= se, "{ta} vs {tb} ± {se}");
    assert_eq!(b.delta0_used, d);
}

#[test]
fn schema_mismatch_is_a_migration_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small("calibrate", 50);
    run_scenario(&cfg, dir.path(), &RunOptions::default()).unwrap();
    let path = dir.path().join("shots.jsonl");
    let text = read(&path);

    let old_header = text.replacen("\"schema_version\":1", "\"schema_version\":0", 1);
    let p1 = dir.path().join("old_header.jsonl");
    fs::write(&p1, old_header).unwrap();
    let err = replay(&p1, &ReplayOptions::default()).unwrap_err();
    assert!(matches!(err, Error::Schema { found: 0, expected: 1 }), "{err}");
    assert_eq!(err.exit_code(), 4);
    assert!(err.to_string().contains("migrate"));

    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    lines[5] = lines[5].replace("\"schema_version\":1", "\"schema_version\":2");
    let p2 = dir.path().join("old_line.jsonl");
    fs::write(&p2, lines.join("\n")).unwrap();
    assert!(matches!(
        replay(&p2, &ReplayOptions::default()),
        Err(Error::Schema { found: 2, .. })
    ));

    let p3 = dir.path().join("truncated.jsonl");
    fs::write(&p3, &text[..text.len() / 2]).unwrap();
    assert!(matches!(replay(&p3, &ReplayOptions::default()), Err(Error::Records { .. })));
}

#[test]
fn records_are_bit_identical_across_workers_and_runs() {
    let cfg = small("benchmark", 30);
    let runs: Vec<tempfile::TempDir> = [Some(1), Some(4), Some(1)]
        .into_iter()
        .map(|w| {
            let dir = tempfile::tempdir().unwrap();
            run_scenario(&cfg, dir.path(), &RunOptions { workers: w }).unwrap();
            dir
        })
        .collect();
    let shots: Vec<Vec<u8>> = runs.iter().map(|d| fs::read(d.path().join("shots.jsonl")).unwrap()).collect();
    assert_eq!(shots[0], shots[1]);
    assert_eq!(shots[0], shots[2]);
    let reports: Vec<String> = runs.iter().map(|d| read(&d.path().join("report.json"))).collect();
    assert_eq!(reports[0], reports[1]);
}

#[test]
fn different_seeds_give_different_records() {
    let mut cfg = small("calibrate", 20);
    let a = simulate(&cfg, &RunOptions::default()).unwrap();
    cfg.master_seed += 1;
    let b = simulate(&cfg, &RunOptions::default()).unwrap();
    assert_ne!(a.records, b.records);
}

#[test]
fn drift_is_a_continuing_walk_recorded_per_shot() {
    let cfg = small("benchmark", 20);
    let run = simulate(&cfg, &RunOptions::default()).unwrap();
    assert_eq!(run.records[0].drift_state, 0.0);
    let steps: Vec<f64> = run
        .records
        .windows(2)
        .map(|w| w[1].drift_state - w[0].drift_state)
        .collect();
    let rms = (steps.iter().map(|s| s * s).sum::<f64>() / steps.len() as f64).sqrt();
    assert!((rms / cfg.noise.amplitude_drift_sigma - 1.0).abs() < 0.1, "step rms {rms}");
}

#[test]
fn correction_is_identity_without_noise() {
    let cfg = small("benchmark-quiet", 40);
    let run = simulate(&cfg, &RunOptions::default()).unwrap();
    let d = cfg.qubit.delta0;
    let plain = uncorrected_quadratures(&run.records, &run.reference).unwrap();
    let fixed = correct_phase(&run.records, d, setpoint_phase(d), &run.reference, &Default::default()).unwrap();
    assert_eq!(plain.len(), fixed.len());
    for (p, c) in plain.iter().zip(&fixed) {
        assert!((p.magnitude - c.magnitude).abs() < 1e-12);
        assert!((p.x - c.x).abs() < 1e-12 && (p.y - c.y).abs() < 1e-12);
        assert_eq!(p.n_shots, c.n_shots);
    }
}

#[test]
fn config_errors_name_every_field() {
    let mut cfg = preset("quadrant").unwrap();
    cfg.shots_per_point = 0;
    cfg.qubit.t2_us = -1.0;
    cfg.sweep.tau_us.clear();
    cfg.sweep.durations = DurationSweep::Fixed { values_us: vec![0.1] };
    cfg.adc.bits = 40;
    let Err(Error::Config(fields)) = cfg.validate() else {
        panic!("expected a config error");
    };
    let paths: Vec<&str> = fields.iter().map(|f| f.path.as_str()).collect();
    for p in ["shots_per_point", "qubit.t2_us", "sweep.tau_us", "sweep.durations", "adc.bits"] {
        assert!(paths.contains(&p), "{p} not in {paths:?}");
    }
    let err = run_scenario(&cfg, Path::new("/nonexistent/never"), &RunOptions::default()).unwrap_err();
    assert_eq!(err.exit_code(), 2);

    let mut long = preset("calibrate").unwrap();
    long.sweep.durations = DurationSweep::Fixed { values_us: vec![0.1, 0.7] };
    let Err(Error::Config(fields)) = long.validate() else {
        panic!("expected a config error");
    };
    assert_eq!(fields[0].path, "sweep.durations.values_us[1]");
}

#[test]
fn unwritable_output_reports_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let err = run_scenario(&small("floor", 1), &blocker.join("out"), &RunOptions::default()).unwrap_err();
    assert_eq!(err.exit_code(), 4);
    assert!(err.to_string().contains("file"), "{err}");
}

#[test]
fn floor_runs_without_records() {
    let dir = tempfile::tempdir().unwrap();
    let m = run_scenario(&preset("floor").unwrap(), dir.path(), &RunOptions::default()).unwrap();
    assert_eq!(m.n_records, 0);
    assert!(!dir.path().join("shots.jsonl").exists());
    let files = curve_files(dir.path());
    assert_eq!(files.len(), 5);
    let csv = &files["floor_14bit.csv"];
    assert_eq!(csv.lines().count(), 6);
}
