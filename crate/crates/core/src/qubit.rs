//! Two-level system through a Hahn echo with current-induced detuning.
//!
//! Control pulses are ideal and instantaneous. The current pulse sits in the
//! second free-evolution window, where its phase enters with a `+` sign;
//! static detuning accumulates equally in both windows and is refocused.

use std::f64::consts::FRAC_PI_2;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::digitizer::{digitize, measured_area, AdcConfig};
use crate::error::{Error, Result};
use crate::signal::{true_area, Waveform};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QubitParams {
    /// Coupling constant Δ₀ in rad/(mA·µs).
    pub delta0: f64,
    /// Echo decay constant, defined on the total free evolution time 2τ.
    pub t2_us: f64,
    pub stretch_p: f64,
    /// Fractional fluorescence drop of the dark state.
    pub readout_contrast: f64,
    /// Mean photon count of a bright-state readout.
    pub photons_bright: f64,
    /// Oscillation contrast in the limit 2τ → 0.
    pub base_contrast: f64,
}

impl Default for QubitParams {
    fn default() -> Self {
        Self {
            delta0: 9.48,
            t2_us: 1.4,
            stretch_p: 1.0,
            readout_contrast: 0.3,
            photons_bright: 0.05,
            base_contrast: Self::contrast_for(0.2, 0.5, 1.4, 1.0),
        }
    }
}

impl QubitParams {
    /// Base contrast that leaves `contrast` at free-evolution half-time `tau_us`.
    pub fn contrast_for(contrast: f64, tau_us: f64, t2_us: f64, stretch_p: f64) -> f64 {
        contrast * (2.0 * tau_us / t2_us).powf(stretch_p).exp()
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.delta0 > 0.0
            && self.delta0.is_finite()
            && self.t2_us > 0.0
            && self.t2_us.is_finite()
            && self.stretch_p >= 1.0
            && self.stretch_p.is_finite()
            && (0.0..=1.0).contains(&self.readout_contrast)
            && (0.0..=1.0).contains(&self.base_contrast)
            && self.photons_bright > 0.0
            && self.photons_bright.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid qubit parameters: {self:?}")))
        }
    }
}

/// Phase of the final π/2 pulse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Projection {
    X,
    Y,
}

impl Projection {
    pub fn phase(self) -> f64 {
        match self {
            Projection::X => 0.0,
            Projection::Y => FRAC_PI_2,
        }
    }

    /// Alternation used by all scenarios: even shots X, odd shots Y.
    pub fn alternating(shot_index: u64) -> Self {
        if shot_index.is_multiple_of(2) {
            Projection::X
        } else {
            Projection::Y
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Projection::X => "X",
            Projection::Y => "Y",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseSpec {
    #[serde(rename = "amplitude_mA")]
    pub amplitude_ma: f64,
    pub duration_us: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SequenceParams {
    pub tau_us: f64,
    pub pulse: PulseSpec,
    pub projection: Projection,
    pub static_detuning_rad_per_us: f64,
}

impl SequenceParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau_us >= 0.0 && self.tau_us.is_finite()) {
            return Err(Error::invalid(format!("tau must be >= 0, got {}", self.tau_us)));
        }
        if !(self.pulse.duration_us >= 0.0) {
            return Err(Error::invalid("pulse duration must be >= 0"));
        }
        if self.pulse.duration_us > self.tau_us * (1.0 + 1e-12) {
            return Err(Error::invalid(format!(
                "pulse duration {} µs exceeds the free-evolution window τ = {} µs",
                self.pulse.duration_us, self.tau_us
            )));
        }
        if !self.static_detuning_rad_per_us.is_finite() {
            return Err(Error::invalid("static detuning must be finite"));
        }
        Ok(())
    }
}

/// One repetition as stored in a shot-record file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotRecord {
    pub shot_index: u64,
    pub tau_us: f64,
    #[serde(rename = "nominal_amplitude_mA")]
    pub nominal_amplitude_ma: f64,
    pub nominal_duration_us: f64,
    #[serde(rename = "measured_area_mA_us")]
    pub measured_area_ma_us: f64,
    pub projection: Projection,
    pub photons: u64,
    pub drift_state: f64,
}

/// Result of simulating one echo, before it is stamped with bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct EchoOutcome {
    pub phase: f64,
    pub bright_probability: f64,
    pub photons: u64,
    pub measured_area: f64,
    pub saturated: bool,
}

impl EchoOutcome {
    pub fn into_record(self, seq: &SequenceParams, shot_index: u64, drift_state: f64) -> ShotRecord {
        ShotRecord {
            shot_index,
            tau_us: seq.tau_us,
            nominal_amplitude_ma: seq.pulse.amplitude_ma,
            nominal_duration_us: seq.pulse.duration_us,
            measured_area_ma_us: self.measured_area,
            projection: seq.projection,
            photons: self.photons,
            drift_state,
        }
    }
}

/// `Δ₀ · ∫I dt`.
pub fn accumulate_phase(wave: &Waveform, delta0: f64) -> f64 {
    delta0 * true_area(wave)
}

/// `base_contrast · exp(−(2τ/T₂)^p)`.
pub fn coherence_envelope(tau_us: f64, params: &QubitParams) -> f64 {
    params.base_contrast * (-(2.0 * tau_us / params.t2_us).powf(params.stretch_p)).exp()
}

/// Net phase at the end of the echo.
pub fn echo_phase(seq: &SequenceParams, wave: &Waveform, delta0: f64) -> f64 {
    let first = seq.static_detuning_rad_per_us * seq.tau_us;
    let second = seq.static_detuning_rad_per_us * seq.tau_us + accumulate_phase(wave, delta0);
    second - first
}

/// Probability of the bright outcome after the projection pulse.
pub fn bright_probability(phase: f64, tau_us: f64, projection: Projection, params: &QubitParams) -> f64 {
    0.5 * (1.0 + coherence_envelope(tau_us, params) * (phase - projection.phase()).cos())
}

pub fn mean_photons(bright_probability: f64, params: &QubitParams) -> f64 {
    params.photons_bright * (1.0 - params.readout_contrast * (1.0 - bright_probability))
}

pub fn draw_photons<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    let p = Poisson::new(mean).expect("positive Poisson mean");
    p.sample(rng) as u64
}

/// Simulates one echo: phase from the true current, readout from Poisson
/// photon statistics, and the recorded area from the digitized current.
pub fn run_hahn_echo<R1, R2>(
    seq: &SequenceParams,
    perturbed_wave: &Waveform,
    params: &QubitParams,
    adc: &AdcConfig,
    readout_rng: &mut R1,
    adc_rng: &mut R2,
) -> Result<EchoOutcome>
where
    R1: Rng + ?Sized,
    R2: Rng + ?Sized,
{
    seq.validate()?;
    if perturbed_wave.duration() > seq.tau_us + perturbed_wave.dt() * 0.5 + 1e-12 {
        return Err(Error::invalid(format!(
            "current pulse of {} µs does not fit the second window of {} µs",
            perturbed_wave.duration(),
            seq.tau_us
        )));
    }
    let phase = echo_phase(seq, perturbed_wave, params.delta0);
    let p = bright_probability(phase, seq.tau_us, seq.projection, params);
    let photons = draw_photons(mean_photons(p, params), readout_rng);
    let trace = digitize(perturbed_wave, adc, adc_rng)?;
    Ok(EchoOutcome {
        phase,
        bright_probability: p,
        photons,
        measured_area: measured_area(&trace),
        saturated: trace.is_saturated(),
    })
}

/// Bright and dark photon levels used to normalize counts to a signal in [−1, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReadoutReference {
    pub bright_mean: f64,
    pub dark_mean: f64,
    pub bright_shots: u64,
    pub dark_shots: u64,
}

impl ReadoutReference {
    pub fn from_params(params: &QubitParams) -> Self {
        Self {
            bright_mean: mean_photons(1.0, params),
            dark_mean: mean_photons(0.0, params),
            bright_shots: 0,
            dark_shots: 0,
        }
    }

    /// Builds the levels from dedicated bright/dark reference readouts.
    pub fn from_counts(bright: &[u64], dark: &[u64]) -> Result<Self> {
        if bright.is_empty() || dark.is_empty() {
            return Err(Error::EmptyGroup("reference shots".into()));
        }
        let mean = |c: &[u64]| c.iter().sum::<u64>() as f64 / c.len() as f64;
        let r = Self {
            bright_mean: mean(bright),
            dark_mean: mean(dark),
            bright_shots: bright.len() as u64,
            dark_shots: dark.len() as u64,
        };
        if r.span() <= 0.0 {
            return Err(Error::invalid("bright reference is not brighter than dark reference"));
        }
        Ok(r)
    }

    pub fn span(&self) -> f64 {
        self.bright_mean - self.dark_mean
    }

    pub fn normalize(&self, photons: f64) -> f64 {
        2.0 * (photons - self.dark_mean) / self.span() - 1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalEstimate {
    pub value: f64,
    pub stderr: f64,
    pub n_shots: u64,
}

/// Accumulates optionally sign-folded photon counts. All sums are integers,
/// so the result does not depend on accumulation order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SignalAccumulator {
    n: u64,
    signed_n: i64,
    signed_counts: i64,
    counts: u64,
}

impl SignalAccumulator {
    pub fn add(&mut self, photons: u64, sign: i8) {
        let s = sign as i64;
        self.n += 1;
        self.signed_n += s;
        self.signed_counts += s * photons as i64;
        self.counts += photons;
    }

    pub fn merge(&mut self, other: &SignalAccumulator) {
        self.n += other.n;
        self.signed_n += other.signed_n;
        self.signed_counts += other.signed_counts;
        self.counts += other.counts;
    }

    pub fn len(&self) -> u64 {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Mean of `sign · normalize(photons)`, with a Poisson standard error.
    pub fn estimate(&self, reference: &ReadoutReference) -> Option<SignalEstimate> {
        if self.n == 0 {
            return None;
        }
        let n = self.n as f64;
        let scale = 2.0 / reference.span();
        let offset = 2.0 * reference.dark_mean / reference.span() + 1.0;
        let value = (scale * self.signed_counts as f64 - offset * self.signed_n as f64) / n;
        let stderr = scale * (self.counts as f64).sqrt() / n;
        Some(SignalEstimate {
            value,
            stderr,
            n_shots: self.n,
        })
    }
}

/// Normalized signal of a group of records.
pub fn signal_estimate<'a, I>(records: I, reference: &ReadoutReference) -> Result<SignalEstimate>
where
    I: IntoIterator<Item = &'a ShotRecord>,
{
    let mut acc = SignalAccumulator::default();
    for r in records {
        acc.add(r.photons, 1);
    }
    acc.estimate(reference)
        .ok_or_else(|| Error::EmptyGroup("signal estimate over zero records".into()))
}
