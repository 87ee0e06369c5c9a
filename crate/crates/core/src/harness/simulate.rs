//! Shot generation: signal → digitizer → qubit, in canonical order.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::qubit::{
    draw_photons, mean_photons, run_hahn_echo, Projection, PulseSpec, ReadoutReference, SequenceParams, ShotRecord,
};
use crate::rng::{shot_stream, Purpose};
use crate::signal::{drift_step, make_pulse, perturb, random_duration};

use super::config::{DurationSweep, ScenarioConfig};

/// Execution knobs that do not change results and are not part of the digest.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Worker threads; `None` uses rayon's default.
    pub workers: Option<usize>,
}

/// One sweep point; `duration_us` is `None` for random durations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub tau_us: f64,
    pub amplitude_ma: f64,
    pub duration_us: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedRun {
    pub reference: ReadoutReference,
    pub records: Vec<ShotRecord>,
}

/// Points in canonical order: amplitude series (pulse-free last), then τ,
/// then duration.
pub fn sweep_points(cfg: &ScenarioConfig) -> Vec<SweepPoint> {
    let s = &cfg.sweep;
    let mut amps = s.amplitudes_ma.clone();
    if s.include_pulse_free {
        amps.push(0.0);
    }
    let mut out = Vec::new();
    for &amplitude_ma in &amps {
        for &tau_us in &s.tau_us {
            match &s.durations {
                DurationSweep::Random => out.push(SweepPoint {
                    tau_us,
                    amplitude_ma,
                    duration_us: None,
                }),
                DurationSweep::Fixed { values_us } => {
                    out.extend(values_us.iter().map(|&d| SweepPoint {
                        tau_us,
                        amplitude_ma,
                        duration_us: Some(d),
                    }));
                }
            }
        }
    }
    out
}

fn perturb_seed(cfg: &ScenarioConfig) -> u64 {
    cfg.master_seed ^ cfg.noise.rng_seed.rotate_left(32)
}

/// Drift value seen by every shot. The walk is sequential, but each step only
/// reads the first draw of that shot's own perturbation stream.
fn drift_sequence(cfg: &ScenarioConfig, total: u64) -> Vec<f64> {
    let mut drift = vec![0.0; total as usize];
    if cfg.noise.amplitude_drift_sigma == 0.0 {
        return drift;
    }
    let seed = perturb_seed(cfg);
    let id = cfg.scenario.id();
    let mut state = 0.0;
    for (i, d) in drift.iter_mut().enumerate() {
        *d = state;
        state = drift_step(state, &cfg.noise, &mut shot_stream(seed, id, Purpose::Perturb, i as u64));
    }
    drift
}

fn simulate_shot(cfg: &ScenarioConfig, point: &SweepPoint, shot_index: u64, drift: f64) -> Result<ShotRecord> {
    let id = cfg.scenario.id();
    let seed = cfg.master_seed;
    let duration = match point.duration_us {
        Some(d) => d,
        None => random_duration(point.tau_us, &mut shot_stream(seed, id, Purpose::Duration, shot_index))?,
    };
    let nominal = make_pulse(point.amplitude_ma, duration, cfg.adc.sample_rate_msps)?;
    let mut perturb_rng = shot_stream(perturb_seed(cfg), id, Purpose::Perturb, shot_index);
    let (wave, _) = perturb(&nominal, &cfg.noise, drift, &mut perturb_rng)?;
    let seq = SequenceParams {
        tau_us: point.tau_us,
        pulse: PulseSpec {
            amplitude_ma: point.amplitude_ma,
            duration_us: duration,
        },
        projection: Projection::alternating(shot_index),
        static_detuning_rad_per_us: cfg.static_detuning_rad_per_us,
    };
    let outcome = run_hahn_echo(
        &seq,
        &wave,
        &cfg.qubit,
        &cfg.adc,
        &mut shot_stream(seed, id, Purpose::Readout, shot_index),
        &mut shot_stream(seed, id, Purpose::Digitize, shot_index),
    )?;
    Ok(outcome.into_record(&seq, shot_index, drift))
}

/// Bright and dark levels from dedicated reference readouts.
pub fn reference_levels(cfg: &ScenarioConfig) -> Result<ReadoutReference> {
    let n = cfg.reference_shots;
    let id = cfg.scenario.id();
    let draw = |p: f64, offset: u64| -> Vec<u64> {
        let mean = mean_photons(p, &cfg.qubit);
        (0..n)
            .map(|i| draw_photons(mean, &mut shot_stream(cfg.master_seed, id, Purpose::Reference, offset + i)))
            .collect()
    };
    ReadoutReference::from_counts(&draw(1.0, 0), &draw(0.0, n))
}

fn with_workers<T: Send>(opts: &RunOptions, job: impl FnOnce() -> T + Send) -> Result<T> {
    match opts.workers {
        None => Ok(job()),
        Some(0) => Err(Error::invalid("worker count must be >= 1")),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::invalid(format!("cannot start {n} workers: {e}")))?;
            Ok(pool.install(job))
        }
    }
}

/// Simulates every shot of the sweep. Records come back ordered by shot
/// index, which runs over points first and shots within a point second.
pub fn simulate(cfg: &ScenarioConfig, opts: &RunOptions) -> Result<SimulatedRun> {
    cfg.validate()?;
    let points = sweep_points(cfg);
    let per_point = cfg.shots_per_point;
    let total = points.len() as u64 * per_point;
    let drift = drift_sequence(cfg, total);
    let reference = reference_levels(cfg)?;
    let records = with_workers(opts, || {
        (0..total)
            .into_par_iter()
            .map(|i| simulate_shot(cfg, &points[(i / per_point) as usize], i, drift[i as usize]))
            .collect::<Result<Vec<_>>>()
    })??;
    Ok(SimulatedRun { reference, records })
}
