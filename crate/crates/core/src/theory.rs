//! Closed-form performance of the optimal system: MMSE recursions and their
//! regimes, the threshold cycle count, the fixed-depth baseline, information
//! rates, energy per bit, the power-bandwidth boundary, the bit-rate gain and
//! the distance limit set by the cycle deadline.
//!
//! Information quantities are in bits (base-2 logarithms) throughout.

use crate::error::{degenerate, domain, Result};
use crate::system::{optimal_depth, DerivedParams, SystemParams};

/// Propagation speed used by the distance limit, m/s.
pub const SPEED_OF_LIGHT: f64 = 3e8;

/// Upper bound on the cycles scanned when locating the exact threshold.
const MAX_CROSSING_SEARCH: usize = 1_000_000;

/// One step of the MMSE recursion under the MMSE-optimal gain for an
/// arbitrary modulation depth `m`.
pub fn mse_step(p_prev: f64, a: f64, m: f64, sigma_v_sq: f64, sigma_xi_sq: f64) -> Result<f64> {
    let am2 = a * a * m * m;
    let den = sigma_xi_sq + am2 * (sigma_v_sq + p_prev);
    if den <= 0.0 || !den.is_finite() {
        return Err(degenerate(format!("MSE recursion denominator is {den}")));
    }
    Ok((sigma_xi_sq + am2 * sigma_v_sq) * p_prev / den)
}

/// One step of the MMSE recursion with the optimal depth substituted.
///
/// Returns 0 once `sigma_v_sq + p_prev` vanishes (the sample is known).
pub fn mse_closed_step(p_prev: f64, q_sq: f64, sigma_v_sq: f64) -> f64 {
    let spread = sigma_v_sq + p_prev;
    if spread <= 0.0 {
        return 0.0;
    }
    (1.0 + q_sq * sigma_v_sq / spread) * p_prev / (1.0 + q_sq)
}

/// Operating regime of a cycle relative to the threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// `P_{k-1} > sigma_v^2`: exponential decay, output rate at capacity.
    PreThreshold,
    /// `P_{k-1} <= sigma_v^2`: hyperbolic decay.
    PostThreshold,
}

impl Regime {
    pub fn label(self) -> &'static str {
        match self {
            Regime::PreThreshold => "pre",
            Regime::PostThreshold => "post",
        }
    }
}

/// Theoretical MMSE for cycles `0..=n`.
#[derive(Debug, Clone, PartialEq)]
pub struct MseCurve {
    /// `values[k] = P_k`, `values[0] = sigma0^2`.
    pub values: Vec<f64>,
    /// First `k >= 1` with `P_k <= sigma_v^2` inside the horizon.
    pub n_star: Option<usize>,
    /// `regimes[k - 1]` labels cycle `k`.
    pub regimes: Vec<Regime>,
}

impl MseCurve {
    pub fn at(&self, k: usize) -> f64 {
        self.values[k]
    }

    /// Cycle of largest slowdown of the decay on a log scale.
    pub fn knee(&self) -> Option<usize> {
        if self.values.iter().any(|&v| !(v > 0.0)) {
            return None;
        }
        let log_p: Vec<f64> = self.values.iter().map(|v| v.ln()).collect();
        knee_index(&log_p)
    }

    pub fn horizon(&self) -> usize {
        self.values.len() - 1
    }
}

pub fn mse_curve(p: &SystemParams, dp: &DerivedParams, n: usize) -> MseCurve {
    mse_curve_from(p.sigma0_sq, p.sigma_v_sq, dp.q_sq, n)
}

pub fn mse_curve_from(sigma0_sq: f64, sigma_v_sq: f64, q_sq: f64, n: usize) -> MseCurve {
    let mut values = Vec::with_capacity(n + 1);
    let mut regimes = Vec::with_capacity(n);
    let mut n_star = None;
    values.push(sigma0_sq);
    let mut prev = sigma0_sq;
    for k in 1..=n {
        regimes.push(if prev > sigma_v_sq {
            Regime::PreThreshold
        } else {
            Regime::PostThreshold
        });
        let next = mse_closed_step(prev, q_sq, sigma_v_sq);
        if n_star.is_none() && next <= sigma_v_sq {
            n_star = Some(k);
        }
        values.push(next);
        prev = next;
    }
    MseCurve {
        values,
        n_star,
        regimes,
    }
}

/// Pre-threshold approximation `sigma0^2 (1 + Q^2)^-k`.
pub fn exponential_mse(sigma0_sq: f64, q_sq: f64, k: usize) -> f64 {
    sigma0_sq * (1.0 + q_sq).powi(-(k as i32))
}

/// Post-threshold approximation `sigma_v^2 / (k - n* + 1)`.
pub fn hyperbolic_mse(sigma_v_sq: f64, k: usize, n_star: usize) -> f64 {
    sigma_v_sq / (k as f64 - n_star as f64 + 1.0)
}

/// Threshold cycle count, as the analytic assessment and as the exact
/// crossing of the iterated recursion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdCycles {
    /// `log2(sigma0^2/sigma_v^2) / log2(1 + Q^2)`; `INFINITY` when the
    /// threshold is never reached.
    pub analytic: f64,
    /// First `k >= 1` with `P_k <= sigma_v^2`. Authoritative for simulation.
    pub crossing: Option<usize>,
    /// Cycle of largest slowdown of the decay on a log scale: the `k`
    /// maximising `ln P_{k+1} - 2 ln P_k + ln P_{k-1}`.
    pub knee: Option<usize>,
}

pub fn threshold_cycles(p: &SystemParams, dp: &DerivedParams) -> ThresholdCycles {
    threshold_cycles_from(p.sigma0_sq, p.sigma_v_sq, dp.q_sq)
}

pub fn threshold_cycles_from(sigma0_sq: f64, sigma_v_sq: f64, q_sq: f64) -> ThresholdCycles {
    if sigma_v_sq >= sigma0_sq {
        return ThresholdCycles {
            analytic: 1.0,
            crossing: Some(1),
            knee: Some(1),
        };
    }
    if sigma_v_sq <= 0.0 || q_sq <= 0.0 {
        return ThresholdCycles {
            analytic: f64::INFINITY,
            crossing: None,
            knee: None,
        };
    }
    let analytic = (sigma0_sq / sigma_v_sq).log2() / q_sq.ln_1p() * std::f64::consts::LN_2;
    let mut log_p = vec![sigma0_sq.ln()];
    let mut prev = sigma0_sq;
    let mut crossing = None;
    for k in 1..=MAX_CROSSING_SEARCH {
        prev = mse_closed_step(prev, q_sq, sigma_v_sq);
        log_p.push(prev.ln());
        if crossing.is_none() && prev <= sigma_v_sq {
            crossing = Some(k);
        }
        // the slowdown is over a couple of cycles past the crossing
        if crossing.is_some_and(|c| k >= c + 3) {
            break;
        }
    }
    let knee = crossing.and_then(|_| knee_index(&log_p));
    ThresholdCycles { analytic, crossing, knee }
}

fn knee_index(log_p: &[f64]) -> Option<usize> {
    (1..log_p.len().saturating_sub(1))
        .map(|k| (k, log_p[k + 1] - 2.0 * log_p[k] + log_p[k - 1]))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(k, _)| k)
}

/// MMSE when transmission stops at `n <= n*`: `sigma_v^2 (1+Q^2)^(n* - n)`.
pub fn early_termination_mse(n: usize, n_star: usize, q_sq: f64, sigma_v_sq: f64) -> Result<f64> {
    if n == 0 || n > n_star {
        return Err(domain(format!(
            "early termination needs 1 <= n <= n* (n = {n}, n* = {n_star})"
        )));
    }
    Ok(sigma_v_sq * (1.0 + q_sq).powi((n_star - n) as i32))
}

/// Depth of the non-adaptive baseline, fitted once to the prior.
pub fn baseline_depth(p: &SystemParams, dp: &DerivedParams) -> Result<f64> {
    optimal_depth(dp.alpha, p.sigma_v_sq, p.sigma0_sq)
}

/// Channel noise variance seen by the baseline: the directly given
/// `sigma_xi_sq` when present, otherwise `n_xi * f` (no spectrum extension).
pub fn baseline_noise_var(p: &SystemParams) -> f64 {
    p.sigma_xi_sq.unwrap_or(p.n_xi * p.f)
}

/// Per-observation SNR of the baseline with the internal noise counted in
/// the effective noise: `A^2 M1^2 sigma0^2 / (sigma_cs^2 + A^2 M1^2 sigma_v^2)`.
pub fn baseline_snr(p: &SystemParams, dp: &DerivedParams) -> Result<f64> {
    let m1 = baseline_depth(p, dp)?;
    let am2 = dp.a * dp.a * m1 * m1;
    Ok(am2 * p.sigma0_sq / (baseline_noise_var(p) + am2 * p.sigma_v_sq))
}

/// Baseline SNR in the form used by the bit-rate gain: `W / (n_xi f)`.
pub fn gain_reference_snr(p: &SystemParams, dp: &DerivedParams) -> f64 {
    dp.w_sign / (p.n_xi * p.f)
}

/// MMSE of the fixed-depth baseline (`B_k = x0`, `M_k = M_1`) after `n`
/// observations: `sigma0^2 / (1 + n Q_cs^2)`.
pub fn baseline_cs_mse(n: usize, p: &SystemParams, dp: &DerivedParams) -> Result<f64> {
    Ok(p.sigma0_sq / (1.0 + n as f64 * baseline_snr(p, dp)?))
}

/// Information per channel use, `1/2 log2(1 + Q^2)` bits.
pub fn info_per_cycle(q_sq: f64) -> f64 {
    0.5 * q_sq.ln_1p() / std::f64::consts::LN_2
}

/// Differential entropies (bits) of the observation given the modulator
/// input and of the observation alone; their difference is `info_per_cycle`.
pub fn observation_entropies(sigma_xi_sq: f64, q_sq: f64) -> (f64, f64) {
    let two_pi = 2.0 * std::f64::consts::PI;
    let conditional = 0.5 * (two_pi * sigma_xi_sq).log2();
    let marginal = 0.5 * (two_pi * sigma_xi_sq * (1.0 + q_sq)).log2();
    (conditional, marginal)
}

/// Forward-channel capacity `f0 log2(1 + Q^2)`, bit/s.
pub fn channel_capacity(f0: f64, q_sq: f64) -> f64 {
    2.0 * f0 * info_per_cycle(q_sq)
}

/// Information carried by the final estimate, `1/2 log2(sigma0^2 / P_n)`.
pub fn info_per_sample(sigma0_sq: f64, p_n: f64) -> Result<f64> {
    if !(p_n > 0.0 && p_n <= sigma0_sq) {
        return Err(domain(format!(
            "MMSE must lie in (0, sigma0^2 = {sigma0_sq}], got {p_n}"
        )));
    }
    Ok(0.5 * (sigma0_sq / p_n).log2())
}

/// Output bit-rate `(f0/n) log2(sigma0^2 / P_n)`.
pub fn rate_from_mse(f0: f64, n: usize, sigma0_sq: f64, p_n: f64) -> f64 {
    f0 / n as f64 * (sigma0_sq / p_n).log2()
}

/// Post-threshold rate `(f0/n) [log2(snr_in) + log2(n - n* + 1)]`. The
/// threshold may be the integer crossing or the real-valued assessment.
pub fn rate_post_threshold(f0: f64, n: usize, n_star: f64, snr_in: f64) -> f64 {
    f0 / n as f64 * (snr_in.log2() + (n as f64 - n_star + 1.0).log2())
}

/// Rate when the threshold collapses to the first cycle.
pub fn rate_single_cycle_threshold(f0: f64, n: usize, q_sq: f64) -> f64 {
    f0 / n as f64 * ((1.0 + q_sq).log2() + (n as f64).log2())
}

/// MMSE when the modulator noise dominates the source (`sigma_v^2 >> sigma0^2`).
pub fn mse_noise_dominated(n: usize, sigma0_sq: f64, sigma_v_sq: f64) -> f64 {
    sigma0_sq / (1.0 + n as f64 * sigma0_sq / sigma_v_sq)
}

/// Rate when the modulator noise dominates the source.
pub fn rate_noise_dominated(f0: f64, n: usize, sigma0_sq: f64, sigma_v_sq: f64) -> f64 {
    f0 / n as f64 * (1.0 + n as f64 * sigma0_sq / sigma_v_sq).log2()
}

/// One row of the output-rate curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateRow {
    pub n: usize,
    /// Theoretical MMSE after `n` cycles.
    pub mse: f64,
    /// Bits per sample.
    pub info_bits: f64,
    /// Output bit-rate, bit/s.
    pub rate: f64,
    /// Piecewise (capacity / post-threshold) form of the same rate.
    pub rate_piecewise: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateCurve {
    pub rows: Vec<RateRow>,
    pub n_star: Option<usize>,
}

fn rate_row(n: usize, mse: f64, p: &SystemParams, dp: &DerivedParams) -> RateRow {
    let n_star = dp.threshold.crossing;
    let rate_piecewise = match n_star {
        Some(ns) if n > ns => rate_post_threshold(p.f0, n, ns as f64, p.sigma0_sq / p.sigma_v_sq),
        _ => dp.capacity,
    };
    RateRow {
        n,
        mse,
        info_bits: 0.5 * (p.sigma0_sq / mse).log2(),
        rate: rate_from_mse(p.f0, n, p.sigma0_sq, mse),
        rate_piecewise,
    }
}

/// Output bit-rate after `n >= 1` cycles.
pub fn output_rate(n: usize, p: &SystemParams, dp: &DerivedParams) -> Result<RateRow> {
    if n == 0 {
        return Err(domain("output rate needs n >= 1"));
    }
    let curve = mse_curve(p, dp, n);
    Ok(rate_row(n, curve.at(n), p, dp))
}

/// Output bit-rate for `n = 1..=n_max`.
pub fn rate_curve(p: &SystemParams, dp: &DerivedParams, n_max: usize) -> RateCurve {
    let curve = mse_curve(p, dp, n_max);
    RateCurve {
        rows: (1..=n_max).map(|n| rate_row(n, curve.at(n), p, dp)).collect(),
        n_star: dp.threshold.crossing,
    }
}

/// Received energy per delivered bit after `n` cycles,
/// `W n / (f0 log2(sigma0^2 / P_n))`, with `P_n` from the exact recursion.
pub fn energy_per_bit(n: usize, p: &SystemParams, dp: &DerivedParams) -> Result<f64> {
    let row = output_rate(n, p, dp)?;
    Ok(dp.w_sign / row.rate)
}

/// Piecewise energy per bit: `W / (f0 log2(1+Q^2))` up to `n*`, then the
/// post-threshold growth law.
pub fn energy_per_bit_piecewise(n: usize, n_star: usize, p: &SystemParams, dp: &DerivedParams) -> f64 {
    if n <= n_star {
        dp.w_sign / (p.f0 * (1.0 + dp.q_sq).log2())
    } else {
        dp.w_sign / rate_post_threshold(p.f0, n, n_star as f64, p.sigma0_sq / p.sigma_v_sq)
    }
}

/// Minimum `E_bit / N` at spectral efficiency `c_over_f0`:
/// `(2^x - 1) / x`, tending to `ln 2` as `x -> 0`.
pub fn shannon_boundary(c_over_f0: f64) -> f64 {
    let x = c_over_f0;
    if x.abs() < 0.5 {
        (x * std::f64::consts::LN_2).exp_m1() / x
    } else {
        (x.exp2() - 1.0) / x
    }
}

/// Bit-rate gain of the threshold system over the non-adaptive one, in the
/// closed form `n* log2(1 + n* Q_cs^2) / log2(1 + Q_cs^2)`.
pub fn bitrate_gain(n_star: usize, q_cs_sq: f64) -> f64 {
    let k = n_star as f64;
    k * (k * q_cs_sq).ln_1p() / q_cs_sq.ln_1p()
}

/// Independent route to the gain: ratio of the exact output rate after
/// `n_cycles` to the baseline output rate after the same number of cycles.
pub fn bitrate_gain_oracle(p: &SystemParams, dp: &DerivedParams) -> Result<f64> {
    let n = p.n_cycles;
    let adaptive = output_rate(n, p, dp)?.rate;
    let baseline = rate_from_mse(p.f0, n, p.sigma0_sq, baseline_cs_mse(n, p, dp)?);
    Ok(adaptive / baseline)
}

/// Input/output SNR bookkeeping of a threshold-mode system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutputSnr {
    /// `sigma0^2 / sigma_v^2`.
    pub snr_in: f64,
    /// `sigma0^2 / sigma_out^2`.
    pub snr_out: f64,
    /// `sigma0^2 (1 + Q^2)^(-f0/f)`.
    pub sigma_out_sq: f64,
    /// `f log2(sigma0^2 / sigma_v^2)`, to be compared with the capacity.
    pub rate_from_snr: f64,
    pub capacity: f64,
}

pub fn output_snr_identities(p: &SystemParams, dp: &DerivedParams) -> Result<OutputSnr> {
    if !(p.sigma_v_sq > 0.0) {
        return Err(domain("output SNR identities need sigma_v^2 > 0"));
    }
    let extension = p.f0 / p.f;
    let sigma_out_sq = p.sigma0_sq * (1.0 + dp.q_sq).powf(-extension);
    let snr_in = p.sigma0_sq / p.sigma_v_sq;
    Ok(OutputSnr {
        snr_in,
        snr_out: p.sigma0_sq / sigma_out_sq,
        sigma_out_sq,
        rate_from_snr: p.f * snr_in.log2(),
        capacity: dp.capacity,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaxDistance {
    /// Largest distance meeting the cycle deadline; 0 when infeasible.
    pub r_max: f64,
    pub feasible: bool,
}

/// Distance limit from `1/(2 f0) > delta_t_proc + 2 r / c`.
pub fn max_distance(f0: f64, delta_t_proc: f64) -> MaxDistance {
    let r = 0.5 * SPEED_OF_LIGHT * (1.0 / (2.0 * f0) - delta_t_proc);
    if r > 0.0 {
        MaxDistance {
            r_max: r,
            feasible: true,
        }
    } else {
        MaxDistance {
            r_max: 0.0,
            feasible: false,
        }
    }
}
