//! Decay fits, gate metrics and closed-form oracles.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{levenberg_marquardt, LmOptions};

/// One point of a plotted curve; also the CSV row layout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub abscissa: f64,
    pub signal: f64,
    pub stderr: f64,
    pub n_shots: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayOptions {
    /// Stretch exponent held fixed; `None` fits it.
    pub fix_p: Option<f64>,
    /// Baseline held fixed; `None` fits it.
    pub fix_baseline: Option<f64>,
}

impl Default for DecayOptions {
    fn default() -> Self {
        Self {
            fix_p: Some(1.0),
            fix_baseline: None,
        }
    }
}

/// Fit of `baseline + amplitude · exp(−(t/T₂)^p)`.
///
/// `t2_us` is `None` when the data do not decay within the sampled span
/// (best-fit T₂ beyond 100× the span).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub t2_us: Option<f64>,
    pub t2_stderr: Option<f64>,
    pub amplitude: f64,
    pub amplitude_stderr: f64,
    pub stretch_p: f64,
    pub stretch_p_stderr: Option<f64>,
    pub baseline: f64,
    pub baseline_stderr: Option<f64>,
    pub residual_rms: f64,
    pub reduced_chi2: f64,
    pub n_points: usize,
}

impl DecayFit {
    pub fn is_constrained(&self) -> bool {
        self.t2_us.is_some()
    }

    pub fn model(&self, t: f64) -> Option<f64> {
        self.t2_us
            .map(|t2| self.baseline + self.amplitude * (-(t / t2).powf(self.stretch_p)).exp())
    }
}

pub fn fit_decay(points: &[CurvePoint], opts: &DecayOptions) -> Result<DecayFit> {
    let pts: Vec<&CurvePoint> = points
        .iter()
        .filter(|p| p.signal.is_finite() && p.stderr > 0.0 && p.stderr.is_finite())
        .collect();
    if pts.len() < 5 {
        return Err(Error::Fit(format!("decay fit needs >= 5 points, got {}", pts.len())));
    }
    let xs: Vec<f64> = pts.iter().map(|p| p.abscissa).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.signal).collect();
    let sig: Vec<f64> = pts.iter().map(|p| p.stderr).collect();
    let t_min = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let t_max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = t_max - t_min;
    if !(span > 0.0) {
        return Err(Error::Fit("decay data span zero time".into()));
    }

    // Starting point: baseline from the tail, amplitude from the head, T₂
    // from the first 1/e crossing.
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let tail = (order.len() / 5).max(1);
    let b0 = opts.fix_baseline.unwrap_or_else(|| {
        order[order.len() - tail..].iter().map(|&i| ys[i]).sum::<f64>() / tail as f64
    });
    let a0 = ys[order[0]] - b0;
    let t0 = order
        .iter()
        .find(|&&i| (ys[i] - b0) * a0.signum() <= a0.abs() / std::f64::consts::E)
        .map(|&i| xs[i].max(span / 50.0))
        .unwrap_or(span);
    let t0 = if t0 > 0.0 { t0 } else { span / 2.0 };

    // Parameters: [amplitude, ln T₂, (baseline), (ln p)].
    let fit_b = opts.fix_baseline.is_none();
    let fit_p = opts.fix_p.is_none();
    let b_idx = 2;
    let p_idx = if fit_b { 3 } else { 2 };
    let fixed_b = opts.fix_baseline.unwrap_or(0.0);
    let fixed_p = opts.fix_p.unwrap_or(1.0);
    if !(fixed_p > 0.0) {
        return Err(Error::invalid("fixed stretch exponent must be positive"));
    }
    let model = |t: f64, q: &[f64]| {
        let b = if fit_b { q[b_idx] } else { fixed_b };
        let p = if fit_p { q[p_idx].exp() } else { fixed_p };
        let ln_t2 = q[1].min(700.0);
        b + q[0] * (-(t / ln_t2.exp()).powf(p)).exp()
    };
    let mut q0 = vec![a0, t0.ln()];
    if fit_b {
        q0.push(b0);
    }
    if fit_p {
        q0.push(0.0);
    }
    let out = levenberg_marquardt(model, &xs, &ys, &sig, &q0, &LmOptions::default())?;
    let se = out.stderr();
    let q = &out.params;
    let t2 = q[1].min(700.0).exp();
    let residual_rms = (xs
        .iter()
        .zip(&ys)
        .map(|(&x, &y)| (model(x, q) - y).powi(2))
        .sum::<f64>()
        / xs.len() as f64)
        .sqrt();
    let constrained = t2.is_finite() && t2 <= 100.0 * span && q[0] != 0.0;
    let p = if fit_p { q[p_idx].exp() } else { fixed_p };
    Ok(DecayFit {
        t2_us: constrained.then_some(t2),
        t2_stderr: constrained.then_some(t2 * se[1]),
        amplitude: q[0],
        amplitude_stderr: se[0],
        stretch_p: p,
        stretch_p_stderr: fit_p.then(|| p * se[p_idx]),
        baseline: if fit_b { q[b_idx] } else { fixed_b },
        baseline_stderr: fit_b.then(|| se[b_idx]),
        residual_rms,
        reduced_chi2: out.reduced_chi2(),
        n_points: xs.len(),
    })
}

/// `sin θ / θ` with `θ = Δ₀ · I₀ · τ`: the mean of `cos φ` for a phase
/// uniform on `[0, θ]`, i.e. a pulse of random duration in `[0, τ]`.
pub fn sinc_envelope_oracle(tau_us: f64, delta0: f64, amplitude_ma: f64) -> f64 {
    sinc(delta0 * amplitude_ma * tau_us)
}

pub fn sinc(theta: f64) -> f64 {
    if theta.abs() < 1e-4 {
        1.0 - theta * theta / 6.0
    } else {
        theta.sin() / theta
    }
}

/// Mean of `sin φ` for `φ` uniform on `[0, θ]`: `(1 − cos θ) / θ`.
pub fn cosinc(theta: f64) -> f64 {
    if theta.abs() < 1e-4 {
        theta / 2.0
    } else {
        (1.0 - theta.cos()) / theta
    }
}

/// Smallest `θ > 0` with `sin θ / θ = level`, for `level ∈ (0, 1)`.
pub fn sinc_crossing(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid("sinc crossing level must be in (0, 1)"));
    }
    // sinc decreases monotonically from 1 to 0 on (0, π).
    let (mut lo, mut hi) = (0.0, std::f64::consts::PI);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if sinc(mid) > level {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// τ at which the uniform-duration pulse ensemble reaches 1/e coherence.
pub fn sinc_decay_time(delta0: f64, amplitude_ma: f64) -> Result<f64> {
    Ok(sinc_crossing((-1.0f64).exp())? / (delta0 * amplitude_ma))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateMetrics {
    pub oscillations_to_1e: f64,
    pub infidelity_per_pi: f64,
    pub oscillation_freq_rad_per_us: f64,
}

/// One full oscillation is two π phase gates; decaying to 1/e over `N_π`
/// gates assigns `1/N_π` error per gate.
pub fn gate_metrics(fit: &DecayFit, osc_freq_rad_per_us: f64) -> Result<GateMetrics> {
    let t2 = fit
        .t2_us
        .ok_or_else(|| Error::Fit("gate metrics need a constrained decay fit".into()))?;
    if !(osc_freq_rad_per_us > 0.0) {
        return Err(Error::invalid("oscillation frequency must be positive"));
    }
    Ok(gate_metrics_from_t2(t2, osc_freq_rad_per_us))
}

pub fn gate_metrics_from_t2(t2_us: f64, osc_freq_rad_per_us: f64) -> GateMetrics {
    let n = t2_us * osc_freq_rad_per_us / std::f64::consts::TAU;
    GateMetrics {
        oscillations_to_1e: n,
        infidelity_per_pi: 1.0 / (2.0 * n),
        oscillation_freq_rad_per_us: osc_freq_rad_per_us,
    }
}

impl GateMetrics {
    pub fn t2_us(&self) -> f64 {
        self.oscillations_to_1e * std::f64::consts::TAU / self.oscillation_freq_rad_per_us
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ratio {
    pub value: f64,
    pub stderr: f64,
}

/// `T₂(corrected) / T₂(uncorrected)` with first-order error propagation.
pub fn improvement(uncorrected: &DecayFit, corrected: &DecayFit) -> Result<Ratio> {
    let (Some(tu), Some(tc)) = (uncorrected.t2_us, corrected.t2_us) else {
        return Err(Error::Fit("improvement needs two constrained decay fits".into()));
    };
    let su = uncorrected.t2_stderr.unwrap_or(0.0);
    let sc = corrected.t2_stderr.unwrap_or(0.0);
    let value = tc / tu;
    Ok(Ratio {
        value,
        stderr: value * ((sc / tc).powi(2) + (su / tu).powi(2)).sqrt(),
    })
}
