//! Scenario configuration, validation and digest.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::digitizer::AdcConfig;
use crate::error::{Error, FieldError, Result};
use crate::qubit::QubitParams;
use crate::signal::NoiseConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Scenario {
    /// Fixed τ, swept pulse duration: sine fit of signal vs measured area.
    Calibrate,
    /// Swept τ with random pulse durations: quadrant post-selection.
    Quadrant,
    /// Swept τ and duration: Δ₀ and the echo envelope from the same records.
    SelfLearn,
    /// Fixed long τ, swept duration of a large pulse: continuous phase correction.
    Benchmark,
    /// ADC quantization floor table, no simulation.
    Floor,
}

impl Scenario {
    pub const ALL: [Scenario; 5] = [
        Scenario::Calibrate,
        Scenario::Quadrant,
        Scenario::SelfLearn,
        Scenario::Benchmark,
        Scenario::Floor,
    ];

    /// Name used on the command line.
    pub fn cli_name(self) -> &'static str {
        match self {
            Scenario::Calibrate => "calibrate",
            Scenario::Quadrant => "quadrant",
            Scenario::SelfLearn => "self-learn",
            Scenario::Benchmark => "benchmark",
            Scenario::Floor => "floor",
        }
    }

    /// Scenario id mixed into every random stream of a run.
    pub fn id(self) -> u64 {
        match self {
            Scenario::Calibrate => 1,
            Scenario::Quadrant => 2,
            Scenario::SelfLearn => 3,
            Scenario::Benchmark => 4,
            Scenario::Floor => 5,
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.cli_name())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.cli_name() == norm)
            .ok_or_else(|| Error::invalid(format!("unknown scenario {s:?}")))
    }
}

/// Pulse durations of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DurationSweep {
    /// Every τ is combined with every listed duration.
    Fixed { values_us: Vec<f64> },
    /// Each shot draws its duration uniformly from `[0, τ]`.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub tau_us: Vec<f64>,
    pub durations: DurationSweep,
    #[serde(rename = "amplitudes_mA")]
    pub amplitudes_ma: Vec<f64>,
    /// Adds a pulse-free series (amplitude 0, same durations) for reference.
    pub include_pulse_free: bool,
}

/// Analysis knobs stored with the run; replay may override them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    #[serde(rename = "area_bin_width_mA_us")]
    pub area_bin_width_ma_us: f64,
    /// Δ₀ used to turn measured areas into phases. `None` uses `qubit.delta0`,
    /// i.e. a perfect prior calibration.
    pub correction_delta0: Option<f64>,
    pub postselect_half_width_rad: f64,
    pub phase_bins: usize,
    /// τ row fitted on its own for the SELF_LEARN comparison.
    pub calibration_tau_us: Option<f64>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            area_bin_width_ma_us: 0.035,
            correction_delta0: None,
            postselect_half_width_rad: std::f64::consts::FRAC_PI_4,
            phase_bins: 32,
            calibration_tau_us: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FloorGrid {
    pub bits: Vec<u32>,
    pub samples_per_pi: Vec<u32>,
    #[serde(rename = "amplitude_mA")]
    pub amplitude_ma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub qubit: QubitParams,
    pub adc: AdcConfig,
    pub noise: NoiseConfig,
    pub sweep: Sweep,
    pub static_detuning_rad_per_us: f64,
    pub shots_per_point: u64,
    /// Bright and dark reference readouts, each.
    pub reference_shots: u64,
    pub master_seed: u64,
    pub analysis: AnalysisConfig,
    pub floor: Option<FloorGrid>,
}

fn positive(errs: &mut Vec<FieldError>, path: &str, v: f64) {
    if !(v > 0.0 && v.is_finite()) {
        errs.push(FieldError::new(path, format!("must be finite and > 0, got {v}")));
    }
}

fn non_negative(errs: &mut Vec<FieldError>, path: &str, v: f64) {
    if !(v >= 0.0 && v.is_finite()) {
        errs.push(FieldError::new(path, format!("must be finite and >= 0, got {v}")));
    }
}

impl ScenarioConfig {
    /// Every problem found, each addressed by its field path.
    pub fn validation_errors(&self) -> Vec<FieldError> {
        let mut e = Vec::new();
        let q = &self.qubit;
        positive(&mut e, "qubit.delta0", q.delta0);
        positive(&mut e, "qubit.t2_us", q.t2_us);
        if !(q.stretch_p >= 1.0 && q.stretch_p.is_finite()) {
            e.push(FieldError::new("qubit.stretch_p", format!("must be >= 1, got {}", q.stretch_p)));
        }
        if !(0.0..=1.0).contains(&q.readout_contrast) {
            e.push(FieldError::new("qubit.readout_contrast", "must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&q.base_contrast) {
            e.push(FieldError::new("qubit.base_contrast", "must lie in [0, 1]"));
        }
        positive(&mut e, "qubit.photons_bright", q.photons_bright);

        positive(&mut e, "adc.sample_rate_MSps", self.adc.sample_rate_msps);
        positive(&mut e, "adc.full_scale_mA", self.adc.full_scale_ma);
        non_negative(&mut e, "adc.probe_noise_mA_rms", self.adc.probe_noise_ma_rms);
        if !(1..=31).contains(&self.adc.bits) {
            e.push(FieldError::new("adc.bits", format!("must lie in 1..=31, got {}", self.adc.bits)));
        }

        non_negative(&mut e, "noise.amplitude_rel_sigma", self.noise.amplitude_rel_sigma);
        non_negative(&mut e, "noise.amplitude_drift_sigma", self.noise.amplitude_drift_sigma);
        non_negative(&mut e, "noise.baseline_sigma_mA", self.noise.baseline_sigma_ma);

        if !self.static_detuning_rad_per_us.is_finite() {
            e.push(FieldError::new("static_detuning_rad_per_us", "must be finite"));
        }
        if self.shots_per_point < 1 {
            e.push(FieldError::new("shots_per_point", "must be >= 1"));
        }

        let a = &self.analysis;
        positive(&mut e, "analysis.area_bin_width_mA_us", a.area_bin_width_ma_us);
        positive(&mut e, "analysis.postselect_half_width_rad", a.postselect_half_width_rad);
        if let Some(d) = a.correction_delta0 {
            positive(&mut e, "analysis.correction_delta0", d);
        }
        if a.phase_bins < 1 {
            e.push(FieldError::new("analysis.phase_bins", "must be >= 1"));
        }

        if self.scenario == Scenario::Floor {
            self.floor_errors(&mut e);
        } else {
            self.sweep_errors(&mut e);
        }
        e
    }

    fn floor_errors(&self, e: &mut Vec<FieldError>) {
        let Some(f) = &self.floor else {
            e.push(FieldError::new("floor", "FLOOR scenario requires a floor grid"));
            return;
        };
        if f.bits.is_empty() {
            e.push(FieldError::new("floor.bits", "must not be empty"));
        }
        for (i, b) in f.bits.iter().enumerate() {
            if !(1..=31).contains(b) {
                e.push(FieldError::new(format!("floor.bits[{i}]"), format!("must lie in 1..=31, got {b}")));
            }
        }
        if f.samples_per_pi.is_empty() {
            e.push(FieldError::new("floor.samples_per_pi", "must not be empty"));
        }
        for (i, n) in f.samples_per_pi.iter().enumerate() {
            if *n < 1 {
                e.push(FieldError::new(format!("floor.samples_per_pi[{i}]"), "must be >= 1"));
            }
        }
        if !(f.amplitude_ma.is_finite() && f.amplitude_ma.abs() <= self.adc.full_scale_ma) {
            e.push(FieldError::new("floor.amplitude_mA", "must lie within the ADC full scale"));
        }
    }

    fn sweep_errors(&self, e: &mut Vec<FieldError>) {
        let s = &self.sweep;
        if self.reference_shots < 1 {
            e.push(FieldError::new("reference_shots", "must be >= 1"));
        }
        if s.tau_us.is_empty() {
            e.push(FieldError::new("sweep.tau_us", "must not be empty"));
        }
        for (i, &t) in s.tau_us.iter().enumerate() {
            non_negative(e, &format!("sweep.tau_us[{i}]"), t);
        }
        if s.amplitudes_ma.is_empty() {
            e.push(FieldError::new("sweep.amplitudes_mA", "must not be empty"));
        }
        for (i, &amp) in s.amplitudes_ma.iter().enumerate() {
            if !(amp.is_finite() && amp.abs() <= self.adc.full_scale_ma) {
                e.push(FieldError::new(
                    format!("sweep.amplitudes_mA[{i}]"),
                    format!("{amp} mA is outside the ADC full scale ±{} mA", self.adc.full_scale_ma),
                ));
            }
        }
        let tau_min = s.tau_us.iter().copied().fold(f64::INFINITY, f64::min);
        if let DurationSweep::Fixed { values_us } = &s.durations {
            if values_us.is_empty() {
                e.push(FieldError::new("sweep.durations.values_us", "must not be empty"));
            }
            for (i, &d) in values_us.iter().enumerate() {
                let path = format!("sweep.durations.values_us[{i}]");
                non_negative(e, &path, d);
                if d > tau_min * (1.0 + 1e-12) {
                    e.push(FieldError::new(path, format!("{d} µs exceeds the shortest τ = {tau_min} µs")));
                }
            }
        }

        let random = matches!(s.durations, DurationSweep::Random);
        match self.scenario {
            Scenario::Quadrant => {
                if !random {
                    e.push(FieldError::new("sweep.durations", "QUADRANT requires random durations"));
                }
                if !s.include_pulse_free {
                    e.push(FieldError::new(
                        "sweep.include_pulse_free",
                        "QUADRANT requires the pulse-free reference series",
                    ));
                }
            }
            Scenario::Calibrate | Scenario::Benchmark => {
                if random {
                    e.push(FieldError::new(
                        "sweep.durations",
                        format!("{} requires a fixed duration grid", self.scenario),
                    ));
                }
                if s.amplitudes_ma.iter().all(|&a| a == 0.0) {
                    e.push(FieldError::new("sweep.amplitudes_mA", "needs a non-zero amplitude"));
                }
            }
            Scenario::SelfLearn => {
                if let Some(t) = self.analysis.calibration_tau_us {
                    if !s.tau_us.contains(&t) {
                        e.push(FieldError::new(
                            "analysis.calibration_tau_us",
                            format!("{t} µs is not on the τ grid"),
                        ));
                    }
                }
            }
            Scenario::Floor => {}
        }
    }

    pub fn validate(&self) -> Result<()> {
        let errs = self.validation_errors();
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }

    /// Canonical serialization; the digest is taken over exactly these bytes.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// Hex SHA-256 of the canonical serialization.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }

    pub fn from_json(text: &str, origin: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(vec![FieldError::new(origin, e.to_string())]))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, &path.display().to_string())
    }
}
