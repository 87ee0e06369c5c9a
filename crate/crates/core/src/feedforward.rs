//! Feedforward correction by post-selection, area re-binning and
//! continuous phase rotation.
//!
//! Every scheme only looks at stored shot records: the recorded pulse area is
//! turned into a phase estimate with a calibrated Δ₀ and the readout is
//! conditioned on it after the fact.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI, TAU};

use serde::{Deserialize, Serialize};

use crate::analysis::CurvePoint;
use crate::error::{Error, Result};
use crate::qubit::{Projection, ReadoutReference, ShotRecord, SignalAccumulator};

/// Totally ordered `f64` for grouping keys.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Key(pub f64);

impl Eq for Key {}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// 90° sector of the equatorial plane, centered on a cardinal phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Quadrant {
    XPlus,
    YPlus,
    XMinus,
    YMinus,
}

impl Quadrant {
    pub const ALL: [Quadrant; 4] = [Quadrant::XPlus, Quadrant::YPlus, Quadrant::XMinus, Quadrant::YMinus];

    pub fn center(self) -> f64 {
        match self {
            Quadrant::XPlus => 0.0,
            Quadrant::YPlus => FRAC_PI_2,
            Quadrant::XMinus => PI,
            Quadrant::YMinus => 3.0 * FRAC_PI_2,
        }
    }
}

/// Quadrant `[c − π/4, c + π/4)` containing the phase; a boundary belongs to
/// the counterclockwise-following quadrant.
pub fn quadrant_of(phase_rad: f64) -> Quadrant {
    let reduced = phase_rad.rem_euclid(TAU);
    let sector = ((reduced + FRAC_PI_4) / FRAC_PI_2).floor() as i64;
    match sector.rem_euclid(4) {
        0 => Quadrant::XPlus,
        1 => Quadrant::YPlus,
        2 => Quadrant::XMinus,
        _ => Quadrant::YMinus,
    }
}

/// Projection axis and sign that maximize the readout contrast of a state in `q`.
pub fn required_projection(q: Quadrant) -> (Projection, i8) {
    match q {
        Quadrant::XPlus => (Projection::X, 1),
        Quadrant::YPlus => (Projection::Y, 1),
        Quadrant::XMinus => (Projection::X, -1),
        Quadrant::YMinus => (Projection::Y, -1),
    }
}

/// Signed distance of `phase` to `center`, wrapped to `[−π, π)`.
fn wrapped_offset(phase: f64, center: f64) -> f64 {
    (phase - center + PI).rem_euclid(TAU) - PI
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PostselectOptions {
    /// Keep only shots whose phase estimate lies within this distance of the
    /// quadrant center. `π/4` keeps the whole quadrant.
    pub half_width_rad: f64,
}

impl Default for PostselectOptions {
    fn default() -> Self {
        Self {
            half_width_rad: FRAC_PI_4,
        }
    }
}

/// One point of a corrected curve. `signal` and `stderr` are `None` when no
/// shot survived the selection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrectedPoint {
    pub tau_us: f64,
    pub duration_us: Option<f64>,
    pub projection: Option<Projection>,
    pub signal: Option<f64>,
    pub stderr: Option<f64>,
    pub kept_fraction: f64,
    pub n_shots: u64,
}

impl CorrectedPoint {
    pub fn to_curve(&self, abscissa: f64) -> Option<CurvePoint> {
        Some(CurvePoint {
            abscissa,
            signal: self.signal?,
            stderr: self.stderr?,
            n_shots: self.n_shots,
        })
    }
}

/// Which shot to keep, and with which sign, given a phase estimate.
pub fn selection(phase_estimate: f64, projection: Projection, opts: &PostselectOptions) -> Option<i8> {
    let q = quadrant_of(phase_estimate);
    let (axis, sign) = required_projection(q);
    if axis != projection {
        return None;
    }
    (wrapped_offset(phase_estimate, q.center()).abs() <= opts.half_width_rad).then_some(sign)
}

fn check_postselect_args(delta0: f64, opts: &PostselectOptions) -> Result<()> {
    if !(delta0 > 0.0 && delta0.is_finite()) {
        return Err(Error::invalid("delta0 must be positive"));
    }
    if !(opts.half_width_rad > 0.0) {
        return Err(Error::invalid("post-selection half width must be positive"));
    }
    Ok(())
}

/// Groups post-selected shots by `(τ, axis)`; `axis` is `None` when both
/// projections are pooled.
fn postselect_by<F>(
    records: &[ShotRecord],
    delta0: f64,
    reference: &ReadoutReference,
    opts: &PostselectOptions,
    axis: F,
) -> Result<Vec<CorrectedPoint>>
where
    F: Fn(Projection) -> Option<Projection>,
{
    check_postselect_args(delta0, opts)?;
    let mut groups: BTreeMap<(Key, Option<Projection>), (SignalAccumulator, u64)> = BTreeMap::new();
    for r in records {
        let entry = groups.entry((Key(r.tau_us), axis(r.projection))).or_default();
        entry.1 += 1;
        if let Some(sign) = selection(delta0 * r.measured_area_ma_us, r.projection, opts) {
            entry.0.add(r.photons, sign);
        }
    }
    Ok(groups
        .into_iter()
        .map(|((tau, projection), (acc, total))| {
            let est = acc.estimate(reference);
            CorrectedPoint {
                tau_us: tau.0,
                duration_us: None,
                projection,
                signal: est.map(|e| e.value),
                stderr: est.map(|e| e.stderr),
                kept_fraction: acc.len() as f64 / total as f64,
                n_shots: acc.len(),
            }
        })
        .collect())
}

/// Quadrant post-selection: per τ and projection axis, keep the shots whose
/// estimated phase asks for that axis and fold the negative quadrants.
pub fn postselect(
    records: &[ShotRecord],
    delta0: f64,
    reference: &ReadoutReference,
    opts: &PostselectOptions,
) -> Result<Vec<CorrectedPoint>> {
    postselect_by(records, delta0, reference, opts, Some)
}

/// Post-selection with the kept X and Y shots of each τ pooled into one
/// point; every shot whose axis matches its quadrant contributes.
pub fn postselect_pooled(
    records: &[ShotRecord],
    delta0: f64,
    reference: &ReadoutReference,
    opts: &PostselectOptions,
) -> Result<Vec<CorrectedPoint>> {
    postselect_by(records, delta0, reference, opts, |_| None)
}

/// Plain per-τ signal of one projection axis, without any selection.
pub fn uncorrected(records: &[ShotRecord], projection: Projection, reference: &ReadoutReference) -> Vec<CorrectedPoint> {
    let mut groups: BTreeMap<Key, SignalAccumulator> = BTreeMap::new();
    for r in records.iter().filter(|r| r.projection == projection) {
        groups.entry(Key(r.tau_us)).or_default().add(r.photons, 1);
    }
    groups
        .into_iter()
        .map(|(tau, acc)| {
            let est = acc.estimate(reference).expect("non-empty group");
            CorrectedPoint {
                tau_us: tau.0,
                duration_us: None,
                projection: Some(projection),
                signal: Some(est.value),
                stderr: Some(est.stderr),
                kept_fraction: 1.0,
                n_shots: est.n_shots,
            }
        })
        .collect()
}

/// Signal of the shots falling into one measured-area bin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AreaBin {
    pub bin_index: i64,
    /// Mean measured area of the member shots.
    #[serde(rename = "area_mA_us")]
    pub area_ma_us: f64,
    pub projection: Projection,
    pub signal: f64,
    pub stderr: f64,
    pub n_shots: u64,
}

/// Bins records by `floor(measured_area / width)`, separately per projection.
pub fn bin_by_area(records: &[ShotRecord], bin_width_ma_us: f64, reference: &ReadoutReference) -> Result<Vec<AreaBin>> {
    if !(bin_width_ma_us > 0.0 && bin_width_ma_us.is_finite()) {
        return Err(Error::invalid(format!("area bin width must be positive, got {bin_width_ma_us}")));
    }
    let mut groups: BTreeMap<(Projection, i64), (SignalAccumulator, f64)> = BTreeMap::new();
    for r in records {
        let idx = (r.measured_area_ma_us / bin_width_ma_us).floor() as i64;
        let e = groups.entry((r.projection, idx)).or_default();
        e.0.add(r.photons, 1);
        e.1 += r.measured_area_ma_us;
    }
    Ok(groups
        .into_iter()
        .map(|((projection, bin_index), (acc, area_sum))| {
            let est = acc.estimate(reference).expect("non-empty bin");
            AreaBin {
                bin_index,
                area_ma_us: area_sum / acc.len() as f64,
                projection,
                signal: est.value,
                stderr: est.stderr,
                n_shots: acc.len(),
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseCorrectionOptions {
    /// Sub-groups per 2π of phase error; shots within one sub-group are
    /// treated as sharing the same error.
    pub phase_bins: usize,
}

impl Default for PhaseCorrectionOptions {
    fn default() -> Self {
        Self { phase_bins: 32 }
    }
}

/// Two-quadrature estimate of the coherence for one condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraturePoint {
    pub tau_us: f64,
    pub duration_us: f64,
    #[serde(rename = "amplitude_mA")]
    pub amplitude_ma: f64,
    /// Real part: the oscillation read at the nominal phase.
    pub x: f64,
    pub y: f64,
    pub x_stderr: f64,
    pub y_stderr: f64,
    /// `|x + iy|`.
    pub magnitude: f64,
    pub magnitude_stderr: f64,
    pub kept_fraction: f64,
    pub n_shots: u64,
}

impl QuadraturePoint {
    pub fn magnitude_curve(&self) -> CurvePoint {
        CurvePoint {
            abscissa: self.duration_us,
            signal: self.magnitude,
            stderr: self.magnitude_stderr,
            n_shots: self.n_shots,
        }
    }

    pub fn oscillation_curve(&self) -> CurvePoint {
        CurvePoint {
            abscissa: self.duration_us,
            signal: self.x,
            stderr: self.x_stderr,
            n_shots: self.n_shots,
        }
    }

    pub fn to_corrected(&self) -> CorrectedPoint {
        CorrectedPoint {
            tau_us: self.tau_us,
            duration_us: Some(self.duration_us),
            projection: None,
            signal: Some(self.magnitude),
            stderr: Some(self.magnitude_stderr),
            kept_fraction: self.kept_fraction,
            n_shots: self.n_shots,
        }
    }
}

type ConditionKey = (Key, Key, Key);

fn condition_key(r: &ShotRecord) -> ConditionKey {
    (Key(r.tau_us), Key(r.nominal_duration_us), Key(r.nominal_amplitude_ma))
}

#[derive(Default)]
struct PhaseBin {
    x: SignalAccumulator,
    y: SignalAccumulator,
    error_sum: f64,
    n: u64,
}

fn combine(key: ConditionKey, bins: &BTreeMap<i64, PhaseBin>, total: u64, reference: &ReadoutReference) -> QuadraturePoint {
    let (mut re, mut im, mut w_sum) = (0.0, 0.0, 0.0);
    let (mut var_re, mut var_im, mut cov) = (0.0, 0.0, 0.0);
    let mut kept = 0;
    for bin in bins.values() {
        let (Some(sx), Some(sy)) = (bin.x.estimate(reference), bin.y.estimate(reference)) else {
            continue;
        };
        let delta = bin.error_sum / bin.n as f64;
        let (s, c) = delta.sin_cos();
        let w = bin.n as f64;
        let vx = sx.stderr * sx.stderr;
        let vy = sy.stderr * sy.stderr;
        re += w * (c * sx.value + s * sy.value);
        im += w * (-s * sx.value + c * sy.value);
        var_re += w * w * (c * c * vx + s * s * vy);
        var_im += w * w * (s * s * vx + c * c * vy);
        cov += w * w * s * c * (vy - vx);
        w_sum += w;
        kept += bin.n;
    }
    let (x, y, vre, vim, cv) = if w_sum > 0.0 {
        let w2 = w_sum * w_sum;
        (re / w_sum, im / w_sum, var_re / w2, var_im / w2, cov / w2)
    } else {
        (f64::NAN, f64::NAN, f64::NAN, f64::NAN, f64::NAN)
    };
    let magnitude = x.hypot(y);
    let magnitude_var = if magnitude > 0.0 {
        (x * x * vre + y * y * vim + 2.0 * x * y * cv) / (magnitude * magnitude)
    } else {
        0.5 * (vre + vim)
    };
    QuadraturePoint {
        tau_us: key.0 .0,
        duration_us: key.1 .0,
        amplitude_ma: key.2 .0,
        x,
        y,
        x_stderr: vre.sqrt(),
        y_stderr: vim.sqrt(),
        magnitude,
        magnitude_stderr: magnitude_var.max(0.0).sqrt(),
        kept_fraction: kept as f64 / total as f64,
        n_shots: kept,
    }
}

fn quadratures<F>(records: &[ShotRecord], phase_error: F, phase_bins: usize, reference: &ReadoutReference) -> Result<Vec<QuadraturePoint>>
where
    F: Fn(&ShotRecord) -> f64,
{
    if phase_bins == 0 {
        return Err(Error::invalid("phase_bins must be >= 1"));
    }
    let width = TAU / phase_bins as f64;
    let mut conditions: BTreeMap<ConditionKey, (BTreeMap<i64, PhaseBin>, u64)> = BTreeMap::new();
    for r in records {
        let err = phase_error(r).rem_euclid(TAU);
        let idx = ((err / width).floor() as i64).min(phase_bins as i64 - 1);
        let (bins, total) = conditions.entry(condition_key(r)).or_default();
        *total += 1;
        let bin = bins.entry(idx).or_default();
        match r.projection {
            Projection::X => bin.x.add(r.photons, 1),
            Projection::Y => bin.y.add(r.photons, 1),
        }
        bin.error_sum += err;
        bin.n += 1;
    }
    conditions
        .into_iter()
        .map(|(key, (bins, total))| {
            let has_x = bins.values().any(|b| !b.x.is_empty());
            let has_y = bins.values().any(|b| !b.y.is_empty());
            if !(has_x && has_y) {
                return Err(Error::MissingQuadrature(format!(
                    "tau_us={} nominal_duration_us={} nominal_amplitude_mA={} (has X: {has_x}, has Y: {has_y})",
                    key.0 .0, key.1 .0, key.2 .0
                )));
            }
            Ok(combine(key, &bins, total, reference))
        })
        .collect()
}

/// Continuous phase correction. Shots of one condition are sub-grouped by
/// their measured phase error `Δ₀·A − nominal_phase`; each sub-group's
/// coherence `⟨s_X⟩ + i⟨s_Y⟩` is rotated back by its error before averaging.
pub fn correct_phase<F>(
    records: &[ShotRecord],
    delta0: f64,
    nominal_phase: F,
    reference: &ReadoutReference,
    opts: &PhaseCorrectionOptions,
) -> Result<Vec<QuadraturePoint>>
where
    F: Fn(&ShotRecord) -> f64,
{
    if !(delta0 > 0.0 && delta0.is_finite()) {
        return Err(Error::invalid("delta0 must be positive"));
    }
    quadratures(
        records,
        |r| delta0 * r.measured_area_ma_us - nominal_phase(r),
        opts.phase_bins,
        reference,
    )
}

/// Nominal setpoint phase `Δ₀ · I₀ · T_I`.
pub fn setpoint_phase(delta0: f64) -> impl Fn(&ShotRecord) -> f64 {
    move |r| delta0 * r.nominal_amplitude_ma * r.nominal_duration_us
}

/// Two-quadrature average without any correction.
pub fn uncorrected_quadratures(records: &[ShotRecord], reference: &ReadoutReference) -> Result<Vec<QuadraturePoint>> {
    quadratures(records, |_| 0.0, 1, reference)
}
