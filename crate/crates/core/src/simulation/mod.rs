//! Monte Carlo engine: full sample transmissions, parallel batches with
//! per-sample RNG streams, empirical MMSE and rate, saturation statistics.
//!
//! Every sample owns the stream `(seed, stream_offset + index)`. Per-sample
//! results are gathered in index order and reduced sequentially, so a batch
//! is bit-identical whatever the number of worker threads.

mod corruption;
mod presets;

pub use corruption::{forced_corruption_experiment, forced_corruption_pair, ks_two_sample, AppendixCase, CorruptionPair, CorruptionStats, KsTest};
pub use presets::{
    appendix_cases, efficiency_point, find_preset, gain_rows, preset_catalog, threshold_mode_params, EfficiencyPoint, ExperimentPreset, GainRow, Output,
    Sweep, SweepPoint, SweepVariable, APPENDIX_NOISE, FIG4_NOISE_SWEEP,
};

use rayon::prelude::*;

use crate::error::Result;
use crate::gaussian::RngStream;
use crate::overmod::rejection_mode_update;
use crate::system::{
    compute_controls, forward_channel, modulate, receiver_update, saturates, transmitter_input, Controls, CycleTrace, DerivedParams,
    EstimatorState, SystemParams,
};
use crate::theory;

/// Multiple of the theoretical RMS error beyond which a final estimate is
/// counted as abnormal.
pub const ABNORMAL_CUTOFF: f64 = 5.0;

/// Default Monte Carlo sample count.
pub const DEFAULT_SAMPLES: usize = 5000;

/// Default base seed of all Monte Carlo runs.
pub const DEFAULT_SEED: u64 = 0x00AF_C5EE;

/// Transmission strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Optimal controls each cycle; saturated cycles are processed as if linear.
    Optimal,
    /// Non-adaptive baseline: depth fitted once to the prior, offset at `x0`.
    FixedDepth,
    /// Optimal controls; cycles flagged as saturated are discarded.
    Rejection,
}

impl Mode {
    pub fn label(self) -> &'static str {
        match self {
            Mode::Optimal => "optimal",
            Mode::FixedDepth => "fixed-depth",
            Mode::Rejection => "rejection",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "optimal" => Ok(Mode::Optimal),
            "fixed-depth" | "fixed" => Ok(Mode::FixedDepth),
            "rejection" => Ok(Mode::Rejection),
            other => Err(format!("unknown mode `{other}` (expected optimal, fixed-depth or rejection)")),
        }
    }
}

/// Draw the sample value `x ~ N(x0, sigma0^2)` from `stream`.
pub fn draw_sample(p: &SystemParams, stream: &mut RngStream) -> Result<f64> {
    stream.gaussian(p.x0, p.sigma0_sq)
}

/// Transmit one sample over `p.n_cycles` cycles.
pub fn run_sample(x: f64, p: &SystemParams, dp: &DerivedParams, stream: &mut RngStream, mode: Mode) -> Result<Vec<CycleTrace>> {
    run_sample_forced(x, p, dp, stream, mode, None)
}

/// As [`run_sample`], with the emitted level pinned to the `+1` rail at
/// cycle `force` whatever the modulator input.
pub fn run_sample_forced(
    x: f64,
    p: &SystemParams,
    dp: &DerivedParams,
    stream: &mut RngStream,
    mode: Mode,
    force: Option<usize>,
) -> Result<Vec<CycleTrace>> {
    let fixed = match mode {
        Mode::FixedDepth => Some(Controls {
            depth: theory::baseline_depth(p, dp)?,
            offset: p.x0,
        }),
        _ => None,
    };
    let mut state = EstimatorState::initial(p);
    let mut traces = Vec::with_capacity(p.n_cycles);
    for k in 1..=p.n_cycles {
        if fixed.is_none() && state.mse + p.sigma_v_sq <= 0.0 {
            // The estimate is already exact; nothing left to transmit.
            traces.push(CycleTrace {
                k,
                depth: state.depth,
                offset: state.offset,
                input: 0.0,
                saturated: false,
                observation: 0.0,
                gain: 0.0,
                x_hat: state.x_hat,
                mse: state.mse,
                sq_error: (x - state.x_hat).powi(2),
            });
            continue;
        }
        let controls = match fixed {
            Some(c) => c,
            None => compute_controls(state.x_hat, state.mse, p, dp)?,
        };
        state = state.with_controls(controls);
        let x_k = transmitter_input(x, stream, p.sigma_v_sq)?;
        let input = x_k - controls.offset;
        let forced = force == Some(k);
        let saturated = forced || saturates(input, controls.depth);
        let level = if forced { 1.0 } else { modulate(x_k, controls.depth, controls.offset) };
        let y = forward_channel(level, dp.a, stream, dp.sigma_xi_sq)?;
        state = match mode {
            Mode::Rejection => rejection_mode_update(state, y, saturated, dp, p)?,
            _ => receiver_update(state, y, dp, p)?,
        };
        traces.push(CycleTrace {
            k,
            depth: controls.depth,
            offset: controls.offset,
            input,
            saturated,
            observation: y,
            gain: state.gain,
            x_hat: state.x_hat,
            mse: state.mse,
            sq_error: (x - state.x_hat).powi(2),
        });
    }
    Ok(traces)
}

/// Theoretical MSE per cycle (`[k - 1]` for cycle `k`) of a clean run.
pub fn reference_mse(p: &SystemParams, dp: &DerivedParams, mode: Mode) -> Result<Vec<f64>> {
    match mode {
        Mode::FixedDepth => {
            let m1 = theory::baseline_depth(p, dp)?;
            let mut out = Vec::with_capacity(p.n_cycles);
            let mut pk = p.sigma0_sq;
            for _ in 0..p.n_cycles {
                pk = theory::mse_step(pk, dp.a, m1, p.sigma_v_sq, dp.sigma_xi_sq)?;
                out.push(pk);
            }
            Ok(out)
        }
        Mode::Optimal | Mode::Rejection => Ok(theory::mse_curve(p, dp, p.n_cycles).values[1..].to_vec()),
    }
}

/// How a batch is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchSpec {
    pub mode: Mode,
    pub samples: usize,
    pub seed: u64,
    /// Stream id of sample 0; sample `i` uses `stream_offset + i`.
    pub stream_offset: u64,
}

impl BatchSpec {
    pub fn new(mode: Mode, samples: usize, seed: u64) -> Self {
        Self {
            mode,
            samples,
            seed,
            stream_offset: 0,
        }
    }

    pub fn with_stream_offset(mut self, offset: u64) -> Self {
        self.stream_offset = offset;
        self
    }
}

/// Aggregated statistics of a batch. Per-cycle vectors are indexed by
/// `n - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchResult {
    pub samples: usize,
    pub seed: u64,
    pub mode: Mode,
    /// Clean-run theoretical MSE.
    pub p_theory: Vec<f64>,
    /// Empirical MMSE `mean[(x - x_hat_n)^2]`.
    pub p_hat: Vec<f64>,
    /// Standard error of `p_hat` from the sample spread of squared errors.
    pub p_hat_stderr: Vec<f64>,
    /// Empirical output rate `(f0/n) log2(sigma0^2 / p_hat)`.
    pub rate_hat: Vec<f64>,
    /// Saturated cycles per cycle index.
    pub saturations: Vec<u64>,
    /// First saturation of a sample per cycle index.
    pub first_saturations: Vec<u64>,
    /// Samples whose earlier cycles were all linear, per cycle index.
    pub at_risk: Vec<u64>,
    /// Samples with at least one saturated cycle.
    pub saturated_samples: u64,
    /// Final estimates beyond `ABNORMAL_CUTOFF` theoretical RMS errors.
    pub abnormal: u64,
}

impl BatchResult {
    pub fn cycles(&self) -> usize {
        self.p_hat.len()
    }

    /// Per-cycle frequency of first saturations among samples still in
    /// linear mode.
    pub fn saturation_frequency(&self) -> f64 {
        let first: u64 = self.first_saturations.iter().sum();
        let risk: u64 = self.at_risk.iter().sum();
        first as f64 / risk as f64
    }

    /// Total number of simulated cycles that were still at risk.
    pub fn cycles_at_risk(&self) -> u64 {
        self.at_risk.iter().sum()
    }
}

struct SampleOutcome {
    sq_errors: Vec<f64>,
    saturated: Vec<bool>,
}

fn simulate_one(p: &SystemParams, dp: &DerivedParams, spec: &BatchSpec, index: usize) -> Result<SampleOutcome> {
    let mut stream = RngStream::new(spec.seed, spec.stream_offset + index as u64);
    let x = draw_sample(p, &mut stream)?;
    let traces = run_sample(x, p, dp, &mut stream, spec.mode)?;
    Ok(SampleOutcome {
        sq_errors: traces.iter().map(|t| t.sq_error).collect(),
        saturated: traces.iter().map(|t| t.saturated).collect(),
    })
}

/// Simulate `spec.samples` independent samples in parallel.
pub fn run_batch(p: &SystemParams, dp: &DerivedParams, spec: &BatchSpec) -> Result<BatchResult> {
    p.validate()?;
    let p_theory = reference_mse(p, dp, spec.mode)?;
    let outcomes: Vec<SampleOutcome> = (0..spec.samples)
        .into_par_iter()
        .map(|i| simulate_one(p, dp, spec, i))
        .collect::<Result<_>>()?;

    let n = p.n_cycles;
    let mut sum = vec![0.0; n];
    let mut sum_sq = vec![0.0; n];
    let mut saturations = vec![0u64; n];
    let mut first_saturations = vec![0u64; n];
    let mut at_risk = vec![0u64; n];
    let mut saturated_samples = 0;
    let mut abnormal = 0;
    for o in &outcomes {
        for (k, &e) in o.sq_errors.iter().enumerate() {
            sum[k] += e;
            sum_sq[k] += e * e;
        }
        let mut clean = true;
        for (k, &s) in o.saturated.iter().enumerate() {
            if clean {
                at_risk[k] += 1;
                if s {
                    first_saturations[k] += 1;
                    clean = false;
                }
            }
            saturations[k] += s as u64;
        }
        saturated_samples += (!clean) as u64;
        if o.sq_errors[n - 1] > ABNORMAL_CUTOFF * ABNORMAL_CUTOFF * p_theory[n - 1] {
            abnormal += 1;
        }
    }

    let m = spec.samples as f64;
    let p_hat: Vec<f64> = sum.iter().map(|s| s / m).collect();
    let p_hat_stderr = sum_sq
        .iter()
        .zip(&p_hat)
        .map(|(s2, mean)| {
            if spec.samples < 2 {
                return 0.0;
            }
            let var = (s2 - m * mean * mean).max(0.0) / (m - 1.0);
            (var / m).sqrt()
        })
        .collect();
    let rate_hat = p_hat
        .iter()
        .enumerate()
        .map(|(k, &ph)| theory::rate_from_mse(p.f0, k + 1, p.sigma0_sq, ph))
        .collect();

    Ok(BatchResult {
        samples: spec.samples,
        seed: spec.seed,
        mode: spec.mode,
        p_theory,
        p_hat,
        p_hat_stderr,
        rate_hat,
        saturations,
        first_saturations,
        at_risk,
        saturated_samples,
        abnormal,
    })
}

/// Monte Carlo batches for every distinct point of a preset. Point `i`
/// draws its samples from streams `i << 32 ..`.
pub fn run_preset(preset: &ExperimentPreset, samples: usize, seed: u64) -> Result<Vec<(SweepPoint, BatchResult)>> {
    let mut points = preset.points()?;
    if preset.sweep.variable == SweepVariable::KForce {
        // the clean run does not depend on the forced cycle
        points.truncate(1);
    }
    points
        .into_iter()
        .enumerate()
        .map(|(i, pt)| {
            let spec = BatchSpec::new(preset.mode, samples, seed).with_stream_offset((i as u64) << 32);
            let batch = run_batch(&pt.params, &pt.derived, &spec)?;
            Ok((pt, batch))
        })
        .collect()
}

/// Empirical MMSE of a set of `(x, x_hat)` pairs.
pub fn empirical_mse(pairs: &[(f64, f64)]) -> f64 {
    pairs.iter().map(|(x, e)| (x - e).powi(2)).sum::<f64>() / pairs.len() as f64
}
