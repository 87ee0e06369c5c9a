//! Coupling-constant calibration from binned oscillations.
//!
//! Two routes: a pre-calibration sweep at fixed τ fitted with
//! [`fit_oscillation`], and a self-learning pass over a full (τ, area) data
//! set that extracts Δ₀ and the echo envelope from the same shots.

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feedforward::{bin_by_area, AreaBin, Key};
use crate::fit::{levenberg_marquardt, linear_least_squares, LmOptions};
use crate::qubit::{ReadoutReference, ShotRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub delta0: f64,
    pub delta0_stderr: f64,
    pub contrast: f64,
    pub contrast_stderr: f64,
    pub phase_offset_rad: f64,
    pub phase_offset_stderr: f64,
    pub baseline: f64,
    pub baseline_stderr: f64,
    pub reduced_chi2: f64,
    pub n_points: usize,
}

/// False-alarm probability of the spectral peak test.
const SPECTRAL_FALSE_ALARM: f64 = 1e-4;

fn wrap_phase(phi: f64) -> f64 {
    let w = (phi + PI).rem_euclid(TAU) - PI;
    if w == -PI {
        PI
    } else {
        w
    }
}

struct Spectrum {
    omega: f64,
    contrast: f64,
    phase: f64,
    peak_ratio: f64,
}

fn spectral_guess(bins: &[AreaBin]) -> Result<Spectrum> {
    let w: Vec<f64> = bins.iter().map(|b| 1.0 / (b.stderr * b.stderr)).collect();
    let w_sum: f64 = w.iter().sum();
    let mean = bins.iter().zip(&w).map(|(b, wi)| wi * b.signal).sum::<f64>() / w_sum;

    let mut areas: Vec<f64> = bins.iter().map(|b| b.area_ma_us).collect();
    areas.sort_by(f64::total_cmp);
    areas.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    let span = areas.last().unwrap() - areas.first().unwrap();
    if !(span > 0.0) || areas.len() < 2 {
        return Err(Error::Fit("binned areas do not span a range".into()));
    }
    let mut gaps: Vec<f64> = areas.windows(2).map(|p| p[1] - p[0]).collect();
    gaps.sort_by(f64::total_cmp);
    let spacing = gaps[gaps.len() / 2];

    let lo = PI / span;
    let hi = PI / spacing;
    let step = TAU / (span * 10.0);
    let n = (((hi - lo) / step).ceil() as usize).max(1);
    let mut best = (0.0, 0.0, 0.0, 0.0);
    for k in 0..=n {
        let omega = lo + k as f64 * step;
        let (mut re, mut im) = (0.0, 0.0);
        for (b, wi) in bins.iter().zip(&w) {
            let arg = omega * b.area_ma_us - b.projection.phase();
            let d = wi * (b.signal - mean);
            re += d * arg.cos();
            im -= d * arg.sin();
        }
        let power = re * re + im * im;
        if power > best.0 {
            best = (power, omega, re, im);
        }
    }
    // Pure noise gives power ~ Exp(mean = Σw) at each frequency; demand a
    // peak that M independent frequencies reach only with small probability.
    let threshold = (bins.len() as f64 / SPECTRAL_FALSE_ALARM).ln();
    let peak_ratio = best.0 / w_sum;
    if !(peak_ratio >= threshold) {
        return Err(Error::Fit(format!(
            "no spectral peak above the noise floor (peak power {peak_ratio:.2} × noise, need {threshold:.2})"
        )));
    }
    Ok(Spectrum {
        omega: best.1,
        contrast: 2.0 * best.0.sqrt() / w_sum,
        phase: best.3.atan2(best.2),
        peak_ratio,
    })
}

/// Weighted fit of `baseline + contrast · cos(Δ₀·A + ψ − φ_proj)`.
///
/// The frequency starts at the peak of a discrete spectrum of the bins and is
/// then refined together with the other parameters.
pub fn fit_oscillation(bins: &[AreaBin]) -> Result<CalibrationResult> {
    if bins.len() < 8 {
        return Err(Error::Fit(format!("oscillation fit needs >= 8 bins, got {}", bins.len())));
    }
    if let Some(b) = bins.iter().find(|b| !(b.stderr > 0.0) || !b.signal.is_finite()) {
        return Err(Error::Fit(format!("bin {} has no usable error estimate", b.bin_index)));
    }
    let guess = spectral_guess(bins)?;
    let mean = bins.iter().map(|b| b.signal).sum::<f64>() / bins.len() as f64;

    let xs: Vec<f64> = (0..bins.len()).map(|i| i as f64).collect();
    let ys: Vec<f64> = bins.iter().map(|b| b.signal).collect();
    let sig: Vec<f64> = bins.iter().map(|b| b.stderr).collect();
    let model = |i: f64, p: &[f64]| {
        let b = &bins[i as usize];
        p[0] + p[1] * (p[2] * b.area_ma_us + p[3] - b.projection.phase()).cos()
    };
    let out = levenberg_marquardt(
        model,
        &xs,
        &ys,
        &sig,
        &[mean, guess.contrast, guess.omega, guess.phase],
        &LmOptions::default(),
    )?;
    let se = out.stderr();
    let mut p = out.params.clone();
    if p[1] < 0.0 {
        p[1] = -p[1];
        p[3] += PI;
    }
    if !(p[2] > 0.0) {
        return Err(Error::Fit(format!("fitted frequency {} is not positive", p[2])));
    }
    let (lo, hi) = bins
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), b| (lo.min(b.area_ma_us), hi.max(b.area_ma_us)));
    if p[2] * (hi - lo) < TAU {
        return Err(Error::Fit(format!(
            "bins cover {:.2} oscillation periods, need at least one (spectral peak ratio {:.1})",
            p[2] * (hi - lo) / TAU,
            guess.peak_ratio
        )));
    }
    Ok(CalibrationResult {
        delta0: p[2],
        delta0_stderr: se[2],
        contrast: p[1],
        contrast_stderr: se[1],
        phase_offset_rad: wrap_phase(p[3]),
        phase_offset_stderr: se[3],
        baseline: p[0],
        baseline_stderr: se[0],
        reduced_chi2: out.reduced_chi2(),
        n_points: bins.len(),
    })
}

/// Oscillation amplitude of one τ row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopePoint {
    pub tau_us: f64,
    pub amplitude: f64,
    pub stderr: f64,
    /// The row's area range covers less than a quarter period; its baseline
    /// was taken from the global fit.
    pub low_confidence: bool,
    #[serde(rename = "area_span_mA_us")]
    pub area_span_ma_us: f64,
    pub n_shots: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelfLearnOptions {
    #[serde(rename = "area_bin_width_mA_us")]
    pub area_bin_width_ma_us: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfLearnResult {
    pub calibration: CalibrationResult,
    pub envelope: Vec<EnvelopePoint>,
}

/// Per-row amplitude with Δ₀ fixed: `s = b + α·cos x − β·sin x` with
/// `x = Δ₀·A − φ_proj`, so `a = |α + iβ|` and `ψ = arg(α + iβ)`.
fn fit_row(tau: f64, bins: &[AreaBin], global: &CalibrationResult) -> Result<EnvelopePoint> {
    let (lo, hi) = bins
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), b| (lo.min(b.area_ma_us), hi.max(b.area_ma_us)));
    let span = (hi - lo).max(0.0);
    let quarter_period = TAU / global.delta0 / 4.0;
    let low_confidence = span < quarter_period || bins.len() < 4;
    let n_shots = bins.iter().map(|b| b.n_shots).sum();
    let sig: Vec<f64> = bins.iter().map(|b| b.stderr).collect();
    let xs: Vec<f64> = bins
        .iter()
        .map(|b| global.delta0 * b.area_ma_us - b.projection.phase())
        .collect();
    let (alpha_idx, out) = if low_confidence {
        let design: Vec<Vec<f64>> = xs.iter().map(|x| vec![x.cos(), -x.sin()]).collect();
        let ys: Vec<f64> = bins.iter().map(|b| b.signal - global.baseline).collect();
        (0, linear_least_squares(&design, &ys, &sig)?)
    } else {
        let design: Vec<Vec<f64>> = xs.iter().map(|x| vec![1.0, x.cos(), -x.sin()]).collect();
        let ys: Vec<f64> = bins.iter().map(|b| b.signal).collect();
        (1, linear_least_squares(&design, &ys, &sig)?)
    };
    let alpha = out.params[alpha_idx];
    let beta = out.params[alpha_idx + 1];
    let inflate = out.reduced_chi2().max(1.0);
    let va = out.covariance[(alpha_idx, alpha_idx)] * inflate;
    let vb = out.covariance[(alpha_idx + 1, alpha_idx + 1)] * inflate;
    let cab = out.covariance[(alpha_idx, alpha_idx + 1)] * inflate;
    let amplitude = alpha.hypot(beta);
    let var = if amplitude > 0.0 {
        (alpha * alpha * va + beta * beta * vb + 2.0 * alpha * beta * cab) / (amplitude * amplitude)
    } else {
        0.5 * (va + vb)
    };
    Ok(EnvelopePoint {
        tau_us: tau,
        amplitude,
        stderr: var.max(0.0).sqrt(),
        low_confidence,
        area_span_ma_us: span,
        n_shots,
    })
}

/// Learns Δ₀ from the projection of all shots onto the measured-area axis,
/// then fits every τ row with that Δ₀ to get the echo envelope.
pub fn self_learning_calibrate(
    records: &[ShotRecord],
    reference: &ReadoutReference,
    opts: &SelfLearnOptions,
) -> Result<SelfLearnResult> {
    let bins = bin_by_area(records, opts.area_bin_width_ma_us, reference)?;
    let calibration = fit_oscillation(&bins)?;

    let mut rows: BTreeMap<Key, Vec<ShotRecord>> = BTreeMap::new();
    for r in records {
        rows.entry(Key(r.tau_us)).or_default().push(r.clone());
    }
    let envelope = rows
        .into_iter()
        .map(|(tau, row)| {
            let row_bins = bin_by_area(&row, opts.area_bin_width_ma_us, reference)?;
            fit_row(tau.0, &row_bins, &calibration)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SelfLearnResult { calibration, envelope })
}
