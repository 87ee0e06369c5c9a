//! Built-in scenario configurations.
//!
//! Shot counts are desk-scale (a few thousand to 10⁴ per point); `--full`
//! raises them tenfold. Readout uses 50 bright photons per shot with 30%
//! contrast, i.e. one shot stands for many aggregated repeats.

use std::f64::consts::FRAC_PI_4;

use crate::digitizer::AdcConfig;
use crate::error::{Error, Result};
use crate::qubit::QubitParams;
use crate::signal::NoiseConfig;

use super::config::{AnalysisConfig, DurationSweep, FloorGrid, Scenario, ScenarioConfig, Sweep};

/// Tenfold shot count used by `--full`.
pub const FULL_SHOT_FACTOR: u64 = 10;

pub const PRESET_NAMES: [&str; 6] = ["calibrate", "quadrant", "self-learn", "benchmark", "benchmark-quiet", "floor"];

/// 3.50 ± 0.02 mA source.
const SOURCE_JITTER: f64 = 0.02 / 3.5;

fn readout(delta0: f64, t2_us: f64, base_contrast: f64) -> QubitParams {
    QubitParams {
        delta0,
        t2_us,
        stretch_p: 1.0,
        readout_contrast: 0.3,
        photons_bright: 50.0,
        base_contrast,
    }
}

fn grid(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    (0..=n)
        .map(|i| ((start + i as f64 * step) * 1e9).round() / 1e9)
        .collect()
}

fn jitter_only(rel_sigma: f64) -> NoiseConfig {
    NoiseConfig {
        amplitude_rel_sigma: rel_sigma,
        ..NoiseConfig::quiet()
    }
}

/// τ = 500 ns fixed, 3.5 mA pulse swept from 0 to τ in 10 ns steps.
fn calibrate() -> ScenarioConfig {
    ScenarioConfig {
        scenario: Scenario::Calibrate,
        qubit: QubitParams {
            photons_bright: 50.0,
            ..QubitParams::default()
        },
        adc: AdcConfig::default(),
        noise: jitter_only(SOURCE_JITTER),
        sweep: Sweep {
            tau_us: vec![0.5],
            durations: DurationSweep::Fixed {
                values_us: grid(0.0, 0.5, 0.01),
            },
            amplitudes_ma: vec![3.5],
            include_pulse_free: false,
        },
        static_detuning_rad_per_us: 0.0,
        shots_per_point: 10_000,
        reference_shots: 100_000,
        master_seed: 2,
        analysis: AnalysisConfig {
            area_bin_width_ma_us: 0.025,
            ..AnalysisConfig::default()
        },
        floor: None,
    }
}

/// τ swept, each shot a 3.5 mA pulse of random duration in `[0, τ]`; a
/// pulse-free series gives the intrinsic echo decay (T₂ = 389 ns on τ).
fn quadrant() -> ScenarioConfig {
    let mut tau = grid(0.01, 0.2, 0.01);
    tau.extend(grid(0.25, 1.5, 0.05));
    ScenarioConfig {
        scenario: Scenario::Quadrant,
        qubit: readout(9.48, 0.778, 0.4),
        adc: AdcConfig::default(),
        noise: jitter_only(SOURCE_JITTER),
        sweep: Sweep {
            tau_us: tau,
            durations: DurationSweep::Random,
            amplitudes_ma: vec![3.5],
            include_pulse_free: true,
        },
        static_detuning_rad_per_us: 0.0,
        shots_per_point: 10_000,
        reference_shots: 100_000,
        master_seed: 3,
        analysis: AnalysisConfig {
            postselect_half_width_rad: FRAC_PI_4,
            ..AnalysisConfig::default()
        },
        floor: None,
    }
}

/// A second qubit with its own Δ₀, random durations at every τ, Δ₀ and the
/// envelope learned from the records alone.
fn self_learn() -> ScenarioConfig {
    ScenarioConfig {
        scenario: Scenario::SelfLearn,
        qubit: readout(6.0, 1.4, QubitParams::contrast_for(0.2, 0.5, 1.4, 1.0)),
        adc: AdcConfig::default(),
        noise: jitter_only(SOURCE_JITTER),
        sweep: Sweep {
            tau_us: grid(0.05, 1.5, 0.05),
            durations: DurationSweep::Random,
            amplitudes_ma: vec![3.5],
            include_pulse_free: false,
        },
        static_detuning_rad_per_us: 0.0,
        shots_per_point: 10_000,
        reference_shots: 100_000,
        master_seed: 4,
        analysis: AnalysisConfig {
            area_bin_width_ma_us: 0.05,
            calibration_tau_us: Some(0.5),
            ..AnalysisConfig::default()
        },
        floor: None,
    }
}

/// Durations log-spaced from 5 ns to 30 µs, snapped to the 2 ns sample grid.
fn benchmark_durations() -> Vec<f64> {
    let (lo, hi, n) = (0.005f64, 30.0f64, 40);
    let mut out: Vec<f64> = (0..n)
        .map(|i| {
            let v = lo * (hi / lo).powf(i as f64 / (n - 1) as f64);
            (v * 500.0).round() / 500.0
        })
        .collect();
    out.dedup();
    out
}

/// τ = 32 µs, 40 mA nominal, 2% jitter, slow drift and source baseline
/// noise; the probe noise limits how well the record tracks the current.
fn benchmark() -> ScenarioConfig {
    ScenarioConfig {
        scenario: Scenario::Benchmark,
        // 10 MHz oscillation at 40 mA.
        qubit: readout(
            std::f64::consts::TAU * 10.0 / 40.0,
            100.0,
            QubitParams::contrast_for(0.2, 32.0, 100.0, 1.0),
        ),
        adc: AdcConfig {
            probe_noise_ma_rms: 4.8,
            ..AdcConfig::default()
        },
        noise: NoiseConfig {
            amplitude_rel_sigma: 0.02,
            amplitude_drift_sigma: 1e-5,
            baseline_sigma_ma: 1.0,
            rng_seed: 0,
        },
        sweep: Sweep {
            tau_us: vec![32.0],
            durations: DurationSweep::Fixed {
                values_us: benchmark_durations(),
            },
            amplitudes_ma: vec![40.0],
            include_pulse_free: false,
        },
        static_detuning_rad_per_us: 0.0,
        shots_per_point: 4_000,
        reference_shots: 100_000,
        master_seed: 5,
        analysis: AnalysisConfig::default(),
        floor: None,
    }
}

/// BENCHMARK with every noise source switched off.
fn benchmark_quiet() -> ScenarioConfig {
    let mut cfg = benchmark();
    cfg.noise = NoiseConfig::quiet();
    cfg.adc.probe_noise_ma_rms = 0.0;
    cfg
}

fn floor() -> ScenarioConfig {
    ScenarioConfig {
        scenario: Scenario::Floor,
        qubit: QubitParams::default(),
        adc: AdcConfig::default(),
        noise: NoiseConfig::quiet(),
        sweep: Sweep {
            tau_us: vec![],
            durations: DurationSweep::Random,
            amplitudes_ma: vec![],
            include_pulse_free: false,
        },
        static_detuning_rad_per_us: 0.0,
        shots_per_point: 1,
        reference_shots: 0,
        master_seed: 0,
        analysis: AnalysisConfig::default(),
        floor: Some(FloorGrid {
            bits: vec![8, 10, 12, 14, 16],
            samples_per_pi: vec![5, 10, 25, 50, 100],
            amplitude_ma: 3.5,
        }),
    }
}

pub fn preset(name: &str) -> Result<ScenarioConfig> {
    let norm = name.trim().to_ascii_lowercase().replace('_', "-");
    Ok(match norm.as_str() {
        "calibrate" => calibrate(),
        "quadrant" => quadrant(),
        "self-learn" => self_learn(),
        "benchmark" => benchmark(),
        "benchmark-quiet" => benchmark_quiet(),
        "floor" => floor(),
        _ => {
            return Err(Error::invalid(format!(
                "unknown preset {name:?}; known: {}",
                PRESET_NAMES.join(", ")
            )))
        }
    })
}

/// The preset named after a scenario.
pub fn scenario_preset(scenario: Scenario) -> ScenarioConfig {
    preset(scenario.cli_name()).expect("every scenario has a preset")
}
