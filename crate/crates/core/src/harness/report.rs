//! Per-scenario analysis of shot records into fit reports and curves.
//!
//! Both a fresh run and a replay go through [`analyze`], so a replay of
//! unchanged records with unchanged options reproduces the report exactly.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::analysis::{
    fit_decay, gate_metrics, improvement, sinc, sinc_decay_time, CurvePoint, DecayFit, DecayOptions, GateMetrics,
    Ratio,
};
use crate::calibration::{
    fit_oscillation, self_learning_calibrate, CalibrationResult, EnvelopePoint, SelfLearnOptions,
};
use crate::digitizer::{quantization_floor, quantization_floor_dithered, AdcConfig};
use crate::error::{Error, Result};
use crate::feedforward::{
    bin_by_area, correct_phase, postselect, postselect_pooled, setpoint_phase, uncorrected, uncorrected_quadratures,
    AreaBin, CorrectedPoint, PhaseCorrectionOptions, PostselectOptions,
};
use crate::qubit::{coherence_envelope, Projection, ReadoutReference, ShotRecord};

use super::config::{AnalysisConfig, Scenario, ScenarioConfig};
use super::records::SCHEMA_VERSION;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrateResults {
    pub calibration: CalibrationResult,
    pub delta0_truth: f64,
    pub delta0_relative_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleComparison {
    /// τ at which `sin θ / θ` first falls to 1/e.
    pub t2_oracle_us: f64,
    pub n_points: usize,
    pub n_within_3se: usize,
    pub max_abs_z: f64,
    pub worst_tau_us: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadrantResults {
    pub delta0_used: f64,
    pub pulse_free: DecayFit,
    pub uncorrected: DecayFit,
    pub postselected_x: DecayFit,
    pub postselected_y: DecayFit,
    /// Kept X and Y shots pooled per τ.
    pub postselected: DecayFit,
    pub oracle: OracleComparison,
    /// Pooled post-selected T₂ over uncorrected T₂.
    pub improvement: Ratio,
    /// Pooled post-selected T₂ over pulse-free T₂.
    pub recovery: Ratio,
    pub mean_kept_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreCalibration {
    pub tau_us: f64,
    pub calibration: CalibrationResult,
    pub delta0_difference: f64,
    pub combined_stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfLearnResults {
    pub calibration: CalibrationResult,
    pub delta0_truth: f64,
    pub pre_calibration: Option<PreCalibration>,
    pub envelope: Vec<EnvelopePoint>,
    /// Fit of the envelope against the total free evolution 2τ.
    pub envelope_fit: DecayFit,
    pub t2_truth_us: f64,
    pub t2_relative_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkResults {
    pub delta0_used: f64,
    pub uncorrected: DecayFit,
    pub corrected: DecayFit,
    /// `None` when either curve does not decay within the sweep, e.g. with
    /// every noise source off.
    pub improvement: Option<Ratio>,
    pub uncorrected_metrics: Option<GateMetrics>,
    pub corrected_metrics: Option<GateMetrics>,
    pub mean_kept_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FloorRow {
    pub bits: u32,
    pub samples_per_pi: u32,
    #[serde(rename = "lsb_mA")]
    pub lsb_ma: f64,
    pub infidelity: f64,
    pub infidelity_dithered: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FloorResults {
    pub delta0: f64,
    #[serde(rename = "amplitude_mA")]
    pub amplitude_ma: f64,
    pub rows: Vec<FloorRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioResults {
    Calibrate(CalibrateResults),
    Quadrant(QuadrantResults),
    SelfLearn(SelfLearnResults),
    Benchmark(BenchmarkResults),
    Floor(FloorResults),
}

/// Contents of `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub scenario: Scenario,
    pub config_digest: String,
    pub schema_version: u32,
    pub analysis: AnalysisConfig,
    pub reference: Option<ReadoutReference>,
    pub n_records: u64,
    pub results: ScenarioResults,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub summary: Summary,
    /// Plot-ready curves keyed by file stem.
    pub curves: BTreeMap<String, Vec<CurvePoint>>,
}

impl Report {
    /// A handful of scalar results for the run manifest and the CLI.
    pub fn headline(&self) -> BTreeMap<String, f64> {
        let mut m = BTreeMap::new();
        fn t2(m: &mut BTreeMap<String, f64>, name: &str, fit: &DecayFit) {
            if let Some(t) = fit.t2_us {
                m.insert(format!("{name}_t2_us"), t);
            }
        }
        match &self.summary.results {
            ScenarioResults::Calibrate(r) => {
                m.insert("delta0".into(), r.calibration.delta0);
                m.insert("delta0_stderr".into(), r.calibration.delta0_stderr);
                m.insert("delta0_relative_error".into(), r.delta0_relative_error);
                m.insert("contrast".into(), r.calibration.contrast);
            }
            ScenarioResults::Quadrant(r) => {
                t2(&mut m, "pulse_free", &r.pulse_free);
                t2(&mut m, "uncorrected", &r.uncorrected);
                t2(&mut m, "postselected", &r.postselected);
                m.insert("improvement".into(), r.improvement.value);
                m.insert("recovery".into(), r.recovery.value);
                m.insert("oracle_t2_us".into(), r.oracle.t2_oracle_us);
                m.insert("oracle_max_abs_z".into(), r.oracle.max_abs_z);
            }
            ScenarioResults::SelfLearn(r) => {
                m.insert("delta0".into(), r.calibration.delta0);
                m.insert("delta0_stderr".into(), r.calibration.delta0_stderr);
                if let Some(p) = &r.pre_calibration {
                    m.insert("pre_calibration_delta0".into(), p.calibration.delta0);
                }
                t2(&mut m, "envelope", &r.envelope_fit);
            }
            ScenarioResults::Benchmark(r) => {
                t2(&mut m, "uncorrected", &r.uncorrected);
                t2(&mut m, "corrected", &r.corrected);
                if let Some(i) = r.improvement {
                    m.insert("improvement".into(), i.value);
                }
                if let Some(g) = r.corrected_metrics {
                    m.insert("corrected_oscillations_to_1e".into(), g.oscillations_to_1e);
                }
            }
            ScenarioResults::Floor(r) => {
                for row in &r.rows {
                    m.insert(format!("floor_{}bit_{}spp", row.bits, row.samples_per_pi), row.infidelity);
                }
            }
        }
        m
    }

    pub fn results(&self) -> &ScenarioResults {
        &self.summary.results
    }
}

/// Δ₀ used to convert measured areas into phases.
pub fn correction_delta0(cfg: &ScenarioConfig, analysis: &AnalysisConfig) -> f64 {
    analysis.correction_delta0.unwrap_or(cfg.qubit.delta0)
}

fn pulse_amplitude(cfg: &ScenarioConfig) -> Result<f64> {
    cfg.sweep
        .amplitudes_ma
        .iter()
        .copied()
        .find(|&a| a != 0.0)
        .ok_or_else(|| Error::invalid("scenario needs a non-zero pulse amplitude"))
}

fn tau_curve(points: &[CorrectedPoint]) -> Vec<CurvePoint> {
    points.iter().filter_map(|p| p.to_curve(p.tau_us)).collect()
}

fn bins_curve(bins: &[AreaBin], projection: Projection) -> Vec<CurvePoint> {
    bins.iter()
        .filter(|b| b.projection == projection)
        .map(|b| CurvePoint {
            abscissa: b.area_ma_us,
            signal: b.signal,
            stderr: b.stderr,
            n_shots: b.n_shots,
        })
        .collect()
}

fn insert_bins(curves: &mut BTreeMap<String, Vec<CurvePoint>>, prefix: &str, bins: &[AreaBin]) {
    for p in [Projection::X, Projection::Y] {
        let c = bins_curve(bins, p);
        if !c.is_empty() {
            curves.insert(format!("{prefix}_{}", p.label()), c);
        }
    }
}

fn mean_kept(points: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = points.fold((0.0, 0usize), |(s, n), k| (s + k, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn pure_decay(curve: &[CurvePoint], name: &str, opts: DecayOptions) -> Result<DecayFit> {
    fit_decay(curve, &opts).map_err(|e| match e {
        Error::Fit(m) => Error::Fit(format!("{name}: {m}")),
        other => other,
    })
}

fn analyze_calibrate(
    cfg: &ScenarioConfig,
    a: &AnalysisConfig,
    reference: &ReadoutReference,
    records: &[ShotRecord],
    curves: &mut BTreeMap<String, Vec<CurvePoint>>,
) -> Result<ScenarioResults> {
    let bins = bin_by_area(records, a.area_bin_width_ma_us, reference)?;
    let calibration = fit_oscillation(&bins)?;
    insert_bins(curves, "area_bins", &bins);
    Ok(ScenarioResults::Calibrate(CalibrateResults {
        delta0_truth: cfg.qubit.delta0,
        delta0_relative_error: calibration.delta0 / cfg.qubit.delta0 - 1.0,
        calibration,
    }))
}

fn analyze_quadrant(
    cfg: &ScenarioConfig,
    a: &AnalysisConfig,
    reference: &ReadoutReference,
    records: &[ShotRecord],
    curves: &mut BTreeMap<String, Vec<CurvePoint>>,
) -> Result<ScenarioResults> {
    let amplitude = pulse_amplitude(cfg)?;
    let delta0 = correction_delta0(cfg, a);
    let (free, pulsed): (Vec<ShotRecord>, Vec<ShotRecord>) =
        records.iter().cloned().partition(|r| r.nominal_amplitude_ma == 0.0);
    if free.is_empty() || pulsed.is_empty() {
        return Err(Error::EmptyGroup("QUADRANT needs pulsed and pulse-free records".into()));
    }
    let opts = PostselectOptions {
        half_width_rad: a.postselect_half_width_rad,
    };
    let by_axis = postselect(&pulsed, delta0, reference, &opts)?;
    let axis = |p: Projection| -> Vec<CorrectedPoint> {
        by_axis.iter().filter(|c| c.projection == Some(p)).copied().collect()
    };
    let pooled = postselect_pooled(&pulsed, delta0, reference, &opts)?;

    let free_curve = tau_curve(&uncorrected(&free, Projection::X, reference));
    let unc_curve = tau_curve(&uncorrected(&pulsed, Projection::X, reference));
    let x_curve = tau_curve(&axis(Projection::X));
    let y_curve = tau_curve(&axis(Projection::Y));
    let pooled_curve = tau_curve(&pooled);

    let exp_on_zero = DecayOptions {
        fix_p: Some(1.0),
        fix_baseline: Some(0.0),
    };
    // The sinc-shaped loss is not exponential; the stretch exponent is left
    // free so the fitted 1/e time follows the curve.
    let stretched_on_zero = DecayOptions {
        fix_p: None,
        fix_baseline: Some(0.0),
    };
    let pulse_free = pure_decay(&free_curve, "pulse-free", exp_on_zero)?;
    let unc = pure_decay(&unc_curve, "uncorrected", stretched_on_zero)?;
    let postselected_x = pure_decay(&x_curve, "x-postselected", exp_on_zero)?;
    let postselected_y = pure_decay(&y_curve, "y-postselected", exp_on_zero)?;
    let postselected = pure_decay(&pooled_curve, "postselected", exp_on_zero)?;

    let truth = cfg.qubit.delta0;
    let oracle_curve: Vec<CurvePoint> = unc_curve
        .iter()
        .map(|p| CurvePoint {
            abscissa: p.abscissa,
            signal: coherence_envelope(p.abscissa, &cfg.qubit) * sinc(truth * amplitude * p.abscissa),
            stderr: 0.0,
            n_shots: 0,
        })
        .collect();
    let (mut max_z, mut worst, mut within) = (0.0f64, f64::NAN, 0usize);
    for (m, o) in unc_curve.iter().zip(&oracle_curve) {
        let z = ((m.signal - o.signal) / m.stderr).abs();
        if z <= 3.0 {
            within += 1;
        }
        if worst.is_nan() || z > max_z {
            max_z = z;
            worst = m.abscissa;
        }
    }
    let oracle = OracleComparison {
        t2_oracle_us: sinc_decay_time(truth, amplitude)?,
        n_points: unc_curve.len(),
        n_within_3se: within,
        max_abs_z: max_z,
        worst_tau_us: worst,
    };

    let results = QuadrantResults {
        delta0_used: delta0,
        improvement: improvement(&unc, &postselected)?,
        recovery: improvement(&pulse_free, &postselected)?,
        mean_kept_fraction: mean_kept(pooled.iter().map(|p| p.kept_fraction)),
        pulse_free,
        uncorrected: unc,
        postselected_x,
        postselected_y,
        postselected,
        oracle,
    };
    curves.insert("pulse_free".into(), free_curve);
    curves.insert("uncorrected".into(), unc_curve);
    curves.insert("oracle".into(), oracle_curve);
    curves.insert("postselected_x".into(), x_curve);
    curves.insert("postselected_y".into(), y_curve);
    curves.insert("postselected".into(), pooled_curve);
    Ok(ScenarioResults::Quadrant(results))
}

fn analyze_self_learn(
    cfg: &ScenarioConfig,
    a: &AnalysisConfig,
    reference: &ReadoutReference,
    records: &[ShotRecord],
    curves: &mut BTreeMap<String, Vec<CurvePoint>>,
) -> Result<ScenarioResults> {
    let pulsed: Vec<ShotRecord> = records.iter().filter(|r| r.nominal_amplitude_ma != 0.0).cloned().collect();
    let opts = SelfLearnOptions {
        area_bin_width_ma_us: a.area_bin_width_ma_us,
    };
    let learned = self_learning_calibrate(&pulsed, reference, &opts)?;
    let global = learned.calibration.clone();

    let pre_calibration = match a.calibration_tau_us {
        None => None,
        Some(tau) => {
            let row: Vec<ShotRecord> = pulsed.iter().filter(|r| r.tau_us == tau).cloned().collect();
            if row.is_empty() {
                return Err(Error::EmptyGroup(format!("no records at calibration τ = {tau} µs")));
            }
            let calibration = fit_oscillation(&bin_by_area(&row, a.area_bin_width_ma_us, reference)?)?;
            Some(PreCalibration {
                tau_us: tau,
                delta0_difference: global.delta0 - calibration.delta0,
                combined_stderr: global.delta0_stderr.hypot(calibration.delta0_stderr),
                calibration,
            })
        }
    };

    let envelope_curve: Vec<CurvePoint> = learned
        .envelope
        .iter()
        .map(|e| CurvePoint {
            abscissa: 2.0 * e.tau_us,
            signal: e.amplitude,
            stderr: e.stderr,
            n_shots: e.n_shots,
        })
        .collect();
    let envelope_fit = pure_decay(
        &envelope_curve,
        "envelope",
        DecayOptions {
            fix_p: Some(1.0),
            fix_baseline: Some(0.0),
        },
    )?;
    insert_bins(curves, "area_bins", &bin_by_area(&pulsed, a.area_bin_width_ma_us, reference)?);
    curves.insert("envelope".into(), envelope_curve);
    Ok(ScenarioResults::SelfLearn(SelfLearnResults {
        delta0_truth: cfg.qubit.delta0,
        t2_truth_us: cfg.qubit.t2_us,
        t2_relative_error: envelope_fit.t2_us.map(|t| t / cfg.qubit.t2_us - 1.0),
        calibration: global,
        pre_calibration,
        envelope: learned.envelope,
        envelope_fit,
    }))
}

fn analyze_benchmark(
    cfg: &ScenarioConfig,
    a: &AnalysisConfig,
    reference: &ReadoutReference,
    records: &[ShotRecord],
    curves: &mut BTreeMap<String, Vec<CurvePoint>>,
) -> Result<ScenarioResults> {
    let amplitude = pulse_amplitude(cfg)?;
    let delta0 = correction_delta0(cfg, a);
    let plain = uncorrected_quadratures(records, reference)?;
    let corrected = correct_phase(
        records,
        delta0,
        setpoint_phase(delta0),
        reference,
        &PhaseCorrectionOptions {
            phase_bins: a.phase_bins,
        },
    )?;
    let plain_mag: Vec<CurvePoint> = plain.iter().map(|q| q.magnitude_curve()).collect();
    let corr_mag: Vec<CurvePoint> = corrected.iter().map(|q| q.magnitude_curve()).collect();
    let opts = DecayOptions {
        fix_p: Some(1.0),
        fix_baseline: None,
    };
    let unc = pure_decay(&plain_mag, "uncorrected magnitude", opts)?;
    let cor = pure_decay(&corr_mag, "corrected magnitude", opts)?;
    let freq = cfg.qubit.delta0 * amplitude.abs();
    curves.insert("uncorrected_x".into(), plain.iter().map(|q| q.oscillation_curve()).collect());
    curves.insert("corrected_x".into(), corrected.iter().map(|q| q.oscillation_curve()).collect());
    curves.insert("uncorrected_magnitude".into(), plain_mag);
    curves.insert("corrected_magnitude".into(), corr_mag);
    Ok(ScenarioResults::Benchmark(BenchmarkResults {
        delta0_used: delta0,
        improvement: improvement(&unc, &cor).ok(),
        uncorrected_metrics: gate_metrics(&unc, freq).ok(),
        corrected_metrics: gate_metrics(&cor, freq).ok(),
        mean_kept_fraction: mean_kept(corrected.iter().map(|q| q.kept_fraction)),
        uncorrected: unc,
        corrected: cor,
    }))
}

/// Runs the scenario's correction and analysis on stored records.
pub fn analyze(
    cfg: &ScenarioConfig,
    analysis: &AnalysisConfig,
    reference: &ReadoutReference,
    records: &[ShotRecord],
) -> Result<Report> {
    let mut curves = BTreeMap::new();
    let results = match cfg.scenario {
        Scenario::Calibrate => analyze_calibrate(cfg, analysis, reference, records, &mut curves)?,
        Scenario::Quadrant => analyze_quadrant(cfg, analysis, reference, records, &mut curves)?,
        Scenario::SelfLearn => analyze_self_learn(cfg, analysis, reference, records, &mut curves)?,
        Scenario::Benchmark => analyze_benchmark(cfg, analysis, reference, records, &mut curves)?,
        Scenario::Floor => return floor_report(cfg),
    };
    Ok(Report {
        summary: Summary {
            scenario: cfg.scenario,
            config_digest: cfg.digest(),
            schema_version: SCHEMA_VERSION,
            analysis: analysis.clone(),
            reference: Some(*reference),
            n_records: records.len() as u64,
            results,
        },
        curves,
    })
}

/// Quantization floor over the configured `(bits, samples_per_pi)` grid.
pub fn floor_report(cfg: &ScenarioConfig) -> Result<Report> {
    cfg.validate()?;
    let grid = cfg
        .floor
        .as_ref()
        .ok_or_else(|| Error::Config(vec![crate::FieldError::new("floor", "missing floor grid")]))?;
    let mut rows = Vec::new();
    let mut curves = BTreeMap::new();
    for &bits in &grid.bits {
        let adc = AdcConfig { bits, ..cfg.adc.clone() };
        let mut curve = Vec::new();
        for &n in &grid.samples_per_pi {
            let infidelity = quantization_floor(&adc, n, cfg.qubit.delta0, grid.amplitude_ma)?;
            rows.push(FloorRow {
                bits,
                samples_per_pi: n,
                lsb_ma: adc.lsb_ma(),
                infidelity,
                infidelity_dithered: quantization_floor_dithered(&adc, n, cfg.qubit.delta0, grid.amplitude_ma)?,
            });
            curve.push(CurvePoint {
                abscissa: n as f64,
                signal: infidelity,
                stderr: 0.0,
                n_shots: 0,
            });
        }
        curves.insert(format!("floor_{bits}bit"), curve);
    }
    Ok(Report {
        summary: Summary {
            scenario: cfg.scenario,
            config_digest: cfg.digest(),
            schema_version: SCHEMA_VERSION,
            analysis: cfg.analysis.clone(),
            reference: None,
            n_records: 0,
            results: ScenarioResults::Floor(FloorResults {
                delta0: cfg.qubit.delta0,
                amplitude_ma: grid.amplitude_ma,
                rows,
            }),
        },
        curves,
    })
}
