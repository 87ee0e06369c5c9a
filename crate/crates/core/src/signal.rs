//! Current-pulse waveforms and the classical noise that perturbs them.
//!
//! Currents are in mA, times in µs, sample rates in MS/s (samples per µs).

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A uniformly sampled current trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waveform {
    samples: Vec<f64>,
    dt: f64,
    t0: f64,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, dt: f64, t0: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::invalid(format!("waveform dt must be positive, got {dt}")));
        }
        if !t0.is_finite() {
            return Err(Error::invalid("waveform t0 must be finite"));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::invalid(format!("waveform sample {i} is not finite")));
        }
        Ok(Self { samples, dt, t0 })
    }

    pub fn zeros(len: usize, dt: f64) -> Result<Self> {
        Self::new(vec![0.0; len], dt, 0.0)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 * self.dt
    }

    /// Moves the pulse inside the free-evolution window. Only cosmetic for
    /// phase accumulation, which depends on the area alone.
    pub fn with_offset(mut self, t0: f64) -> Self {
        self.t0 = t0;
        self
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            samples: self.samples.iter().map(|s| s * factor).collect(),
            dt: self.dt,
            t0: self.t0,
        }
    }

    /// Appends `other` after `self`; both must share the sample period.
    pub fn concat(&self, other: &Waveform) -> Result<Self> {
        if (self.dt - other.dt).abs() > 1e-12 * self.dt {
            return Err(Error::invalid("cannot concatenate waveforms with different dt"));
        }
        let mut samples = self.samples.clone();
        samples.extend_from_slice(&other.samples);
        Ok(Self {
            samples,
            dt: self.dt,
            t0: self.t0,
        })
    }
}

/// Shot-to-shot jitter, slow drift and white baseline noise of the current source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// Relative std of the per-shot amplitude factor.
    pub amplitude_rel_sigma: f64,
    /// Random-walk step of the multiplicative drift, per shot.
    pub amplitude_drift_sigma: f64,
    /// Additive white noise per sample.
    #[serde(rename = "baseline_sigma_mA")]
    pub baseline_sigma_ma: f64,
    /// Mixed into the key of the perturbation streams.
    pub rng_seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self::quiet()
    }
}

impl NoiseConfig {
    pub fn quiet() -> Self {
        Self {
            amplitude_rel_sigma: 0.0,
            amplitude_drift_sigma: 0.0,
            baseline_sigma_ma: 0.0,
            rng_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("amplitude_rel_sigma", self.amplitude_rel_sigma),
            ("amplitude_drift_sigma", self.amplitude_drift_sigma),
            ("baseline_sigma_mA", self.baseline_sigma_ma),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }

    pub fn is_quiet(&self) -> bool {
        self.amplitude_rel_sigma == 0.0
            && self.amplitude_drift_sigma == 0.0
            && self.baseline_sigma_ma == 0.0
    }
}

/// Rectangular pulse with `round(duration · rate)` samples.
pub fn make_pulse(amplitude_ma: f64, duration_us: f64, sample_rate_msps: f64) -> Result<Waveform> {
    if !amplitude_ma.is_finite() {
        return Err(Error::invalid("pulse amplitude must be finite"));
    }
    if !(duration_us >= 0.0 && duration_us.is_finite()) {
        return Err(Error::invalid(format!("pulse duration must be >= 0, got {duration_us}")));
    }
    if !(sample_rate_msps > 0.0 && sample_rate_msps.is_finite()) {
        return Err(Error::invalid(format!(
            "sample rate must be positive, got {sample_rate_msps}"
        )));
    }
    let n = (duration_us * sample_rate_msps).round() as usize;
    Waveform::new(vec![amplitude_ma; n], 1.0 / sample_rate_msps, 0.0)
}

/// Advances the drift random walk by one step using the first normal draw of
/// `rng`. [`perturb`] consumes its stream in the same order, so the drift
/// sequence of a run can be precomputed without generating any waveform.
pub fn drift_step<R: Rng + ?Sized>(drift_state: f64, cfg: &NoiseConfig, rng: &mut R) -> f64 {
    let g: f64 = StandardNormal.sample(rng);
    drift_state + cfg.amplitude_drift_sigma * g
}

/// Applies one shot of source noise to a nominal waveform.
///
/// The drift value passed in scales this shot; the advanced drift is returned
/// for the next shot.
pub fn perturb<R: Rng + ?Sized>(
    wave: &Waveform,
    cfg: &NoiseConfig,
    drift_state: f64,
    rng: &mut R,
) -> Result<(Waveform, f64)> {
    cfg.validate()?;
    let next_drift = drift_step(drift_state, cfg, rng);
    let g: f64 = StandardNormal.sample(rng);
    let gain = 1.0 + drift_state + g * cfg.amplitude_rel_sigma;

    let mut samples: Vec<f64> = if gain == 1.0 {
        wave.samples.clone()
    } else {
        wave.samples.iter().map(|s| s * gain).collect()
    };
    if cfg.baseline_sigma_ma > 0.0 {
        for s in &mut samples {
            let n: f64 = StandardNormal.sample(rng);
            *s += cfg.baseline_sigma_ma * n;
        }
    }
    Ok((
        Waveform {
            samples,
            dt: wave.dt,
            t0: wave.t0,
        },
        next_drift,
    ))
}

/// Uniform pulse duration on `[0, tau]`.
pub fn random_duration<R: Rng + ?Sized>(tau_us: f64, rng: &mut R) -> Result<f64> {
    if !(tau_us >= 0.0 && tau_us.is_finite()) {
        return Err(Error::invalid(format!("tau must be >= 0, got {tau_us}")));
    }
    let u: f64 = rng.random();
    Ok(u * tau_us)
}

/// Rectangular-rule integral in mA·µs.
pub fn true_area(wave: &Waveform) -> f64 {
    wave.samples.iter().sum::<f64>() * wave.dt
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{shot_stream, Purpose};
    use proptest::prelude::*;

    #[test]
    fn pulse_at_digitizer_rate() {
        let w = make_pulse(3.5, 1.0, 500.0).unwrap();
        assert_eq!(w.len(), 500);
        assert!(w.samples().iter().all(|&s| s == 3.5));
        assert!((true_area(&w) - 3.5).abs() < 1e-12);
    }

    #[test]
    fn zero_duration_is_empty() {
        let w = make_pulse(12.0, 0.0, 500.0).unwrap();
        assert!(w.is_empty());
        assert_eq!(true_area(&w), 0.0);
    }

    #[test]
    fn five_nanosecond_pulse_rounds_to_nearest_sample() {
        // 0.005 µs · 500 MS/s = 2.5 samples, rounded half away from zero.
        let w = make_pulse(40.0, 0.005, 500.0).unwrap();
        assert_eq!(w.len(), (0.005f64 * 500.0).round() as usize);
        assert!(w.len() == 2 || w.len() == 3);
        let area = true_area(&w);
        assert!((area - 40.0 * w.len() as f64 * 0.002).abs() < 1e-12);
        assert!((area - 0.2).abs() <= 0.04 + 1e-12);
    }

    #[test]
    fn invalid_pulse_arguments() {
        assert!(make_pulse(1.0, -0.1, 500.0).is_err());
        assert!(make_pulse(1.0, 0.1, 0.0).is_err());
        assert!(make_pulse(f64::NAN, 0.1, 500.0).is_err());
        assert!(Waveform::new(vec![f64::INFINITY], 0.002, 0.0).is_err());
        assert!(Waveform::new(vec![], 0.0, 0.0).is_err());
    }

    #[test]
    fn quiet_noise_is_identity() {
        let w = make_pulse(3.5, 0.3, 500.0).unwrap();
        let mut rng = shot_stream(1, 0, Purpose::Perturb, 0);
        let (p, drift) = perturb(&w, &NoiseConfig::quiet(), 0.0, &mut rng).unwrap();
        assert_eq!(p, w);
        assert_eq!(drift, 0.0);
    }

    #[test]
    fn amplitude_jitter_matches_configured_sigma() {
        let cfg = NoiseConfig {
            amplitude_rel_sigma: 0.02,
            ..NoiseConfig::quiet()
        };
        let w = make_pulse(3.5, 0.1, 500.0).unwrap();
        let n = 100_000u64;
        let areas: Vec<f64> = (0..n)
            .map(|i| {
                let mut rng = shot_stream(3, 0, Purpose::Perturb, i);
                true_area(&perturb(&w, &cfg, 0.0, &mut rng).unwrap().0)
            })
            .collect();
        let mean = areas.iter().sum::<f64>() / n as f64;
        let var = areas.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let rel = var.sqrt() / mean;
        assert!((rel / 0.02 - 1.0).abs() < 0.05, "relative std {rel}");
    }

    #[test]
    fn baseline_noise_per_sample_std() {
        let cfg = NoiseConfig {
            baseline_sigma_ma: 1.0,
            ..NoiseConfig::quiet()
        };
        let w = Waveform::zeros(1000, 0.002).unwrap();
        let mut all = Vec::new();
        for i in 0..100 {
            let mut rng = shot_stream(4, 0, Purpose::Perturb, i);
            all.extend_from_slice(perturb(&w, &cfg, 0.0, &mut rng).unwrap().0.samples());
        }
        let n = all.len() as f64;
        let mean = all.iter().sum::<f64>() / n;
        let sd = (all.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((sd - 1.0).abs() < 0.01, "std {sd}");
    }

    #[test]
    fn drift_advances_as_random_walk() {
        let cfg = NoiseConfig {
            amplitude_drift_sigma: 0.01,
            ..NoiseConfig::quiet()
        };
        let w = make_pulse(1.0, 0.01, 500.0).unwrap();
        let mut rng = shot_stream(5, 0, Purpose::Perturb, 0);
        let (p, next) = perturb(&w, &cfg, 0.1, &mut rng).unwrap();
        // This shot is scaled by the incoming drift.
        assert!(p.samples().iter().all(|&s| (s - 1.1).abs() < 1e-12));
        let mut again = shot_stream(5, 0, Purpose::Perturb, 0);
        assert_eq!(next, drift_step(0.1, &cfg, &mut again));
        assert_ne!(next, 0.1);
    }

    #[test]
    fn random_duration_moments_and_support() {
        assert_eq!(random_duration(0.0, &mut shot_stream(1, 0, Purpose::Duration, 0)).unwrap(), 0.0);
        assert!(random_duration(-1.0, &mut shot_stream(1, 0, Purpose::Duration, 0)).is_err());
        let tau = 0.5;
        let n = 100_000u64;
        let mut draws: Vec<f64> = (0..n)
            .map(|i| random_duration(tau, &mut shot_stream(6, 0, Purpose::Duration, i)).unwrap())
            .collect();
        assert!(draws.iter().all(|&d| (0.0..=tau).contains(&d)));
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((mean - 0.25).abs() < 0.003);
        assert!((var / (tau * tau / 12.0) - 1.0).abs() < 0.02);
        // Kolmogorov-Smirnov distance against the uniform CDF.
        draws.sort_by(f64::total_cmp);
        let ks = draws
            .iter()
            .enumerate()
            .map(|(i, &d)| {
                let f = d / tau;
                (f - i as f64 / n as f64).abs().max(((i + 1) as f64 / n as f64 - f).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks < 0.01, "KS statistic {ks}");
    }

    #[test]
    fn perturb_is_deterministic() {
        let cfg = NoiseConfig {
            amplitude_rel_sigma: 0.02,
            amplitude_drift_sigma: 0.001,
            baseline_sigma_ma: 0.3,
            rng_seed: 9,
        };
        let w = make_pulse(3.5, 0.2, 500.0).unwrap();
        let a = perturb(&w, &cfg, 0.0, &mut shot_stream(1, 2, Purpose::Perturb, 3)).unwrap();
        let b = perturb(&w, &cfg, 0.0, &mut shot_stream(1, 2, Purpose::Perturb, 3)).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn area_is_linear(samples in prop::collection::vec(-50.0f64..50.0, 0..200), alpha in -10.0f64..10.0) {
            let w = Waveform::new(samples, 0.002, 0.0).unwrap();
            let lhs = true_area(&w.scaled(alpha));
            let rhs = alpha * true_area(&w);
            prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + rhs.abs()));
        }

        #[test]
        fn area_is_additive(a in -40.0f64..40.0, da in 0.0f64..2.0, b in -40.0f64..40.0, db in 0.0f64..2.0) {
            let p = make_pulse(a, da, 500.0).unwrap();
            let q = make_pulse(b, db, 500.0).unwrap();
            let joined = p.concat(&q).unwrap();
            let sum = true_area(&p) + true_area(&q);
            prop_assert!((true_area(&joined) - sum).abs() <= 1e-9 * (1.0 + sum.abs()));
        }
    }
}
