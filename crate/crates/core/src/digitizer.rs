//! Shunt, probe and ADC model producing the recorded current trace.
//!
//! The 50 Ω shunt and differential probe are folded into an input-referred
//! current range: the ADC sees `±full_scale_mA` and quantizes it with a
//! mid-tread, round-to-nearest quantizer that saturates at the extreme codes.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::Waveform;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdcConfig {
    #[serde(rename = "sample_rate_MSps")]
    pub sample_rate_msps: f64,
    pub bits: u32,
    /// Symmetric input range, input-referred through the shunt.
    #[serde(rename = "full_scale_mA")]
    pub full_scale_ma: f64,
    #[serde(rename = "probe_noise_mA_rms")]
    pub probe_noise_ma_rms: f64,
}

impl Default for AdcConfig {
    /// 500 MS/s, 14 bits, ±128 mA, no probe noise.
    fn default() -> Self {
        Self {
            sample_rate_msps: 500.0,
            bits: 14,
            full_scale_ma: 128.0,
            probe_noise_ma_rms: 0.0,
        }
    }
}

impl AdcConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1..=31).contains(&self.bits) {
            return Err(Error::invalid(format!("ADC bits must be in 1..=31, got {}", self.bits)));
        }
        if !(self.full_scale_ma > 0.0 && self.full_scale_ma.is_finite()) {
            return Err(Error::invalid("ADC full scale must be positive"));
        }
        if !(self.sample_rate_msps > 0.0 && self.sample_rate_msps.is_finite()) {
            return Err(Error::invalid("ADC sample rate must be positive"));
        }
        if !(self.probe_noise_ma_rms >= 0.0 && self.probe_noise_ma_rms.is_finite()) {
            return Err(Error::invalid("probe noise must be >= 0"));
        }
        Ok(())
    }

    /// Code step in mA: `2 · full_scale / 2^bits`.
    pub fn lsb_ma(&self) -> f64 {
        2.0 * self.full_scale_ma / (1u64 << self.bits) as f64
    }

    pub fn dt_us(&self) -> f64 {
        1.0 / self.sample_rate_msps
    }

    pub fn code_range(&self) -> (i32, i32) {
        let half = 1i64 << (self.bits - 1);
        (-half as i32, (half - 1) as i32)
    }
}

/// ADC record of one shot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DigitizedTrace {
    pub codes: Vec<i32>,
    pub dt: f64,
    #[serde(rename = "lsb_mA")]
    pub lsb_ma: f64,
    /// Number of samples clamped at an extreme code.
    pub saturated: usize,
}

impl DigitizedTrace {
    pub fn is_saturated(&self) -> bool {
        self.saturated > 0
    }

    pub fn currents(&self) -> impl Iterator<Item = f64> + '_ {
        self.codes.iter().map(move |&c| c as f64 * self.lsb_ma)
    }
}

pub fn digitize<R: Rng + ?Sized>(wave: &Waveform, cfg: &AdcConfig, rng: &mut R) -> Result<DigitizedTrace> {
    cfg.validate()?;
    if (wave.dt() * cfg.sample_rate_msps - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "waveform dt {} µs does not match ADC rate {} MS/s",
            wave.dt(),
            cfg.sample_rate_msps
        )));
    }
    let lsb = cfg.lsb_ma();
    let (lo, hi) = cfg.code_range();
    let mut saturated = 0;
    let codes = wave
        .samples()
        .iter()
        .map(|&i| {
            let mut x = i;
            if cfg.probe_noise_ma_rms > 0.0 {
                let g: f64 = StandardNormal.sample(rng);
                x += cfg.probe_noise_ma_rms * g;
            }
            let x = x.clamp(-cfg.full_scale_ma, cfg.full_scale_ma);
            let code = (x / lsb).round();
            if code > hi as f64 || code < lo as f64 {
                saturated += 1;
            }
            code.clamp(lo as f64, hi as f64) as i32
        })
        .collect();
    Ok(DigitizedTrace {
        codes,
        dt: wave.dt(),
        lsb_ma: lsb,
        saturated,
    })
}

/// Integrated current of the record, `Σ codes · lsb · dt`.
pub fn measured_area(trace: &DigitizedTrace) -> f64 {
    trace.codes.iter().map(|&c| c as i64).sum::<i64>() as f64 * trace.lsb_ma * trace.dt
}

fn floor_from_area_sigma(area_sigma: f64, delta0: f64) -> f64 {
    let phase_sigma = delta0 * area_sigma;
    phase_sigma * phase_sigma / 4.0
}

fn check_floor_args(cfg: &AdcConfig, samples_per_pi: u32, delta0: f64, amplitude_ma: f64) -> Result<()> {
    cfg.validate()?;
    if samples_per_pi < 1 {
        return Err(Error::invalid("samples_per_pi must be >= 1"));
    }
    if !(delta0 > 0.0 && delta0.is_finite()) {
        return Err(Error::invalid("delta0 must be positive"));
    }
    if !amplitude_ma.is_finite() || amplitude_ma.abs() > cfg.full_scale_ma {
        return Err(Error::invalid(format!(
            "amplitude {amplitude_ma} mA is outside the ADC range ±{} mA",
            cfg.full_scale_ma
        )));
    }
    Ok(())
}

/// Infidelity per π phase gate left by ADC quantization alone.
///
/// Without dither a flat-topped pulse lands on the same code in every sample,
/// so the rounding error is common to all `samples_per_pi` samples and the
/// area error grows linearly: `σ_A = n · lsb · dt / √12`, the rms taken over
/// the unknown position of the amplitude inside one step. The phase error is
/// `σ_φ = Δ₀ · σ_A` and the infidelity is the small-angle average of
/// `sin²(δφ/2)`, i.e. `σ_φ² / 4`.
pub fn quantization_floor(cfg: &AdcConfig, samples_per_pi: u32, delta0: f64, amplitude_ma: f64) -> Result<f64> {
    check_floor_args(cfg, samples_per_pi, delta0, amplitude_ma)?;
    let n = samples_per_pi as f64;
    let area_sigma = n * cfg.lsb_ma() * cfg.dt_us() / 12f64.sqrt();
    Ok(floor_from_area_sigma(area_sigma, delta0))
}

/// Same floor when noise at the ADC input dithers the quantizer, making the
/// per-sample errors independent: `σ_A = lsb · dt · √(n / 12)`.
pub fn quantization_floor_dithered(
    cfg: &AdcConfig,
    samples_per_pi: u32,
    delta0: f64,
    amplitude_ma: f64,
) -> Result<f64> {
    check_floor_args(cfg, samples_per_pi, delta0, amplitude_ma)?;
    let n = samples_per_pi as f64;
    let area_sigma = cfg.lsb_ma() * cfg.dt_us() * (n / 12.0).sqrt();
    Ok(floor_from_area_sigma(area_sigma, delta0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{shot_stream, Purpose};
    use crate::signal::{make_pulse, perturb, true_area, NoiseConfig};
    use proptest::prelude::*;

    fn no_rng() -> rand_chacha::ChaCha8Rng {
        shot_stream(0, 0, Purpose::Digitize, 0)
    }

    #[test]
    fn zero_wave_gives_zero_codes() {
        let w = Waveform::zeros(100, 0.002).unwrap();
        let t = digitize(&w, &AdcConfig::default(), &mut no_rng()).unwrap();
        assert!(t.codes.iter().all(|&c| c == 0));
        assert_eq!(measured_area(&t), 0.0);
    }

    #[test]
    fn constant_current_code() {
        let cfg = AdcConfig::default();
        assert_eq!(cfg.lsb_ma(), 256.0 / 16384.0);
        let w = make_pulse(3.5, 1.0, 500.0).unwrap();
        let t = digitize(&w, &cfg, &mut no_rng()).unwrap();
        assert!(t.codes.iter().all(|&c| c == 224));
        for i in t.currents() {
            assert!((i - 3.5).abs() < cfg.lsb_ma() / 2.0);
        }
        let err = (measured_area(&t) - 3.5).abs();
        assert!(err <= cfg.lsb_ma() * 1.0 / 2.0);
    }

    #[test]
    fn saturation_is_flagged() {
        let cfg = AdcConfig::default();
        let w = make_pulse(500.0, 0.01, 500.0).unwrap();
        let t = digitize(&w, &cfg, &mut no_rng()).unwrap();
        assert!(t.is_saturated());
        assert_eq!(t.saturated, 5);
        assert!(t.codes.iter().all(|&c| c == cfg.code_range().1));
        let t = digitize(&w.scaled(-1.0), &cfg, &mut no_rng()).unwrap();
        assert!(t.codes.iter().all(|&c| c == cfg.code_range().0));
        // +full scale itself maps one past the top code.
        let t = digitize(&make_pulse(128.0, 0.002, 500.0).unwrap(), &cfg, &mut no_rng()).unwrap();
        assert!(t.is_saturated());
    }

    #[test]
    fn rate_mismatch_is_rejected() {
        let w = make_pulse(1.0, 0.1, 250.0).unwrap();
        assert!(matches!(
            digitize(&w, &AdcConfig::default(), &mut no_rng()),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn area_error_statistics_with_dithering_noise() {
        // Baseline noise of a few LSB dithers the quantizer, so the per-sample
        // errors are independent and the area error has std √n · lsb · dt / √12.
        let cfg = AdcConfig::default();
        let noise = NoiseConfig {
            baseline_sigma_ma: 0.2,
            ..NoiseConfig::quiet()
        };
        let nominal = make_pulse(3.5, 0.2, 500.0).unwrap();
        let n = nominal.len() as f64;
        let shots = 100_000u64;
        let diffs: Vec<f64> = (0..shots)
            .map(|i| {
                let (w, _) = perturb(&nominal, &noise, 0.0, &mut shot_stream(2, 0, Purpose::Perturb, i)).unwrap();
                let t = digitize(&w, &cfg, &mut shot_stream(2, 0, Purpose::Digitize, i)).unwrap();
                measured_area(&t) - true_area(&w)
            })
            .collect();
        let mean = diffs.iter().sum::<f64>() / shots as f64;
        let sd = (diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (shots - 1) as f64).sqrt();
        let expected = n.sqrt() * cfg.lsb_ma() * cfg.dt_us() / 12f64.sqrt();
        assert!(mean.abs() < 4.0 * expected / (shots as f64).sqrt());
        assert!((sd / expected - 1.0).abs() < 0.02, "sd {sd} vs {expected}");
    }

    #[test]
    fn probe_noise_adds_in_quadrature() {
        let cfg = AdcConfig {
            probe_noise_ma_rms: 0.5,
            ..AdcConfig::default()
        };
        let w = make_pulse(10.0, 0.1, 500.0).unwrap();
        let n = w.len() as f64;
        let shots = 20_000u64;
        let d: Vec<f64> = (0..shots)
            .map(|i| measured_area(&digitize(&w, &cfg, &mut shot_stream(1, 1, Purpose::Digitize, i)).unwrap()) - true_area(&w))
            .collect();
        let mean = d.iter().sum::<f64>() / shots as f64;
        let sd = (d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (shots - 1) as f64).sqrt();
        let expected = (n * (0.25 + cfg.lsb_ma().powi(2) / 12.0)).sqrt() * cfg.dt_us();
        assert!((sd / expected - 1.0).abs() < 0.03);
    }

    #[test]
    fn floor_default_chain() {
        let f = quantization_floor(&AdcConfig::default(), 25, 9.48, 3.5).unwrap();
        // 25 · 0.015625 mA · 0.002 µs / √12 · 9.48 rad/(mA·µs), squared, over 4.
        let sigma_a: f64 = 25.0 * 0.015625 * 0.002 / 12f64.sqrt();
        let expected = (9.48 * sigma_a).powi(2) / 4.0;
        assert!((f - expected).abs() < 1e-18);
        assert!((1e-6..=1e-4).contains(&f), "floor {f}");
        let dithered = quantization_floor_dithered(&AdcConfig::default(), 25, 9.48, 3.5).unwrap();
        assert!((f / dithered - 25.0).abs() < 1e-9);
    }

    #[test]
    fn floor_scales_with_lsb_squared() {
        let a = AdcConfig::default();
        let b = AdcConfig { full_scale_ma: 256.0, ..a.clone() };
        let c = AdcConfig { bits: 13, ..a.clone() };
        let fa = quantization_floor(&a, 25, 9.48, 3.5).unwrap();
        assert!((quantization_floor(&b, 25, 9.48, 3.5).unwrap() / fa - 4.0).abs() < 1e-12);
        assert!((quantization_floor(&c, 25, 9.48, 3.5).unwrap() / fa - 4.0).abs() < 1e-12);
    }

    #[test]
    fn floor_vanishes_with_resolution_and_rejects_bad_input() {
        let mut prev = f64::INFINITY;
        for bits in 1..=31 {
            let cfg = AdcConfig { bits, ..AdcConfig::default() };
            let f = quantization_floor(&cfg, 25, 9.48, 3.5).unwrap();
            assert!(f < prev);
            prev = f;
        }
        assert!(prev < 1e-15);
        assert!(quantization_floor(&AdcConfig::default(), 0, 9.48, 3.5).is_err());
        assert!(quantization_floor(&AdcConfig::default(), 25, 9.48, 200.0).is_err());
    }

    proptest! {
        #[test]
        fn floor_monotone(spp in 1u32..200, d0 in 0.1f64..50.0) {
            let cfg = AdcConfig::default();
            let f = quantization_floor(&cfg, spp, d0, 3.5).unwrap();
            prop_assert!(quantization_floor(&cfg, spp + 1, d0, 3.5).unwrap() > f);
            prop_assert!(quantization_floor(&cfg, spp, d0 * 1.1, 3.5).unwrap() > f);
        }

        #[test]
        fn quantization_is_idempotent(codes in prop::collection::vec(-8192i32..8191, 0..100)) {
            let cfg = AdcConfig::default();
            let w = Waveform::new(codes.iter().map(|&c| c as f64 * cfg.lsb_ma()).collect(), cfg.dt_us(), 0.0).unwrap();
            let t = digitize(&w, &cfg, &mut no_rng()).unwrap();
            prop_assert_eq!(&t.codes, &codes);
            let again = Waveform::new(t.currents().collect(), cfg.dt_us(), 0.0).unwrap();
            prop_assert_eq!(digitize(&again, &cfg, &mut no_rng()).unwrap().codes, codes);
        }

        #[test]
        fn area_error_bound(samples in prop::collection::vec(-127.0f64..127.0, 0..300)) {
            let cfg = AdcConfig::default();
            let w = Waveform::new(samples, cfg.dt_us(), 0.0).unwrap();
            let t = digitize(&w, &cfg, &mut no_rng()).unwrap();
            prop_assert!(!t.is_saturated());
            let bound = w.len() as f64 * cfg.lsb_ma() / 2.0 * cfg.dt_us();
            prop_assert!((measured_area(&t) - true_area(&w)).abs() <= bound * (1.0 + 1e-9) + 1e-15);
        }
    }
}
