//! The physical system: parameter records, the saturating adaptive PAM
//! modulator, the AWGN forward channel and the base-station estimator with
//! its control law.
//!
//! Everything is simulated at baseband. The DSB-SC power factor is assumed
//! to be folded into `gamma`, and feedback-channel errors are carried as a
//! component of `sigma_v_sq` (`sigma_v_sq = sigma_internal^2 + sigma_feedback^2`),
//! so the transmitter sees the controls exactly as computed.

use crate::error::{degenerate, Error, Result};
use crate::gaussian::{normal_mass, saturation_factor, RngStream};
use crate::theory::{self, ThresholdCycles};

/// Constants of one system configuration. SI units throughout.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemParams {
    /// Source mean.
    pub x0: f64,
    /// Source variance.
    pub sigma0_sq: f64,
    /// Internal plus feedback noise variance at the modulator input.
    pub sigma_v_sq: f64,
    /// Carrier amplitude.
    pub a0: f64,
    /// Forward-channel gain.
    pub gamma: f64,
    /// Transmitter to base-station distance, meters.
    pub r: f64,
    /// One-sided noise density of the forward channel, W/Hz.
    pub n_xi: f64,
    /// Channel half-bandwidth, Hz.
    pub f0: f64,
    /// Source half-baseband, Hz.
    pub f: f64,
    /// Permissible per-cycle over-modulation probability.
    pub mu: f64,
    /// Cycles per sample.
    pub n_cycles: usize,
    /// Forward-channel noise variance given directly. When `None` it is
    /// derived as `f0 * n_xi`.
    pub sigma_xi_sq: Option<f64>,
    /// Processing latency per cycle, seconds. Only used by the distance check.
    pub delta_t_proc: f64,
}

impl Default for SystemParams {
    fn default() -> Self {
        Self {
            x0: 0.0,
            sigma0_sq: 1.0,
            sigma_v_sq: 0.0,
            a0: 1.0,
            gamma: 1.0,
            r: 1.0,
            n_xi: 1.0,
            f0: 1.0,
            f: 1.0,
            mu: crate::gaussian::two_sided_tail(4.0),
            n_cycles: 1,
            sigma_xi_sq: None,
            delta_t_proc: 0.0,
        }
    }
}

fn invalid(field: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParam {
        field,
        reason: reason.into(),
    }
}

impl SystemParams {
    /// Set `n_cycles = round(f0 / f)`, the spectrum-extension factor.
    pub fn with_bandwidth_cycles(mut self) -> Self {
        self.n_cycles = (self.f0 / self.f).round().max(1.0) as usize;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |field: &'static str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(invalid(field, format!("must be finite and > 0, got {v}")))
            }
        };
        if !self.x0.is_finite() {
            return Err(invalid("x0", "must be finite"));
        }
        positive("sigma0_sq", self.sigma0_sq)?;
        if !(self.sigma_v_sq >= 0.0 && self.sigma_v_sq.is_finite()) {
            return Err(invalid("sigma_v_sq", "must be finite and >= 0"));
        }
        positive("a0", self.a0)?;
        positive("gamma", self.gamma)?;
        positive("r", self.r)?;
        positive("n_xi", self.n_xi)?;
        positive("f0", self.f0)?;
        positive("f", self.f)?;
        if self.f0 < self.f {
            return Err(invalid("f0", "channel bandwidth must not be below the source band"));
        }
        if !(self.mu > 0.0 && self.mu < 1.0) {
            return Err(invalid("mu", format!("must lie in (0, 1), got {}", self.mu)));
        }
        if self.n_cycles == 0 {
            return Err(invalid("n_cycles", "must be >= 1"));
        }
        if let Some(s) = self.sigma_xi_sq {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(invalid("sigma_xi_sq", "must be finite and >= 0"));
            }
        }
        if !(self.delta_t_proc >= 0.0 && self.delta_t_proc.is_finite()) {
            return Err(invalid("delta_t_proc", "must be finite and >= 0"));
        }
        Ok(())
    }

    /// Received amplitude `A = a0 * gamma / r`.
    pub fn received_amplitude(&self) -> f64 {
        self.a0 * self.gamma / self.r
    }

    /// Forward-channel noise variance per cycle.
    pub fn channel_noise_var(&self) -> f64 {
        self.sigma_xi_sq.unwrap_or(self.f0 * self.n_xi)
    }

    /// Maximum distance allowed by the cycle deadline, and whether `r` fits.
    pub fn deadline_check(&self) -> DeadlineCheck {
        let limit = theory::max_distance(self.f0, self.delta_t_proc);
        DeadlineCheck {
            r_max: limit.r_max,
            feasible: limit.feasible && self.r <= limit.r_max,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeadlineCheck {
    pub r_max: f64,
    pub feasible: bool,
}

/// Quantities computed once per configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivedParams {
    /// Received amplitude `A`.
    pub a: f64,
    /// Saturation factor.
    pub alpha: f64,
    /// Received signal power `(A/alpha)^2`.
    pub w_sign: f64,
    /// Channel noise variance per cycle.
    pub sigma_xi_sq: f64,
    /// Per-cycle SNR `w_sign / sigma_xi_sq`.
    pub q_sq: f64,
    /// Forward-channel capacity, bit/s.
    pub capacity: f64,
    pub threshold: ThresholdCycles,
}

impl DerivedParams {
    /// Exact threshold cycle (first `k` with `P_k <= sigma_v_sq`).
    pub fn n_star(&self) -> Option<usize> {
        self.threshold.crossing
    }
}

pub fn derive_params(p: &SystemParams) -> Result<DerivedParams> {
    let a = p.received_amplitude();
    let alpha = saturation_factor(p.mu)?;
    let sigma_xi_sq = p.channel_noise_var();
    let w_sign = (a / alpha).powi(2);
    let q_sq = w_sign / sigma_xi_sq;
    let threshold = theory::threshold_cycles_from(p.sigma0_sq, p.sigma_v_sq, q_sq);
    Ok(DerivedParams {
        a,
        alpha,
        w_sign,
        sigma_xi_sq,
        q_sq,
        capacity: theory::channel_capacity(p.f0, q_sq),
        threshold,
    })
}

/// Whether the modulator saturates for input difference `e` at depth `m`.
pub fn saturates(e: f64, m: f64) -> bool {
    m * e.abs() > 1.0
}

/// Static transfer function of the adaptive modulator: linear with slope
/// `m` inside `|x_k - b| <= 1/m`, clipped to `sign(x_k - b)` outside.
pub fn modulate(x_k: f64, m: f64, b: f64) -> f64 {
    let e = x_k - b;
    if saturates(e, m) {
        e.signum()
    } else {
        m * e
    }
}

/// Observation delivered to the receiver: `A * level + zeta`.
pub fn forward_channel(level: f64, a: f64, stream: &mut RngStream, sigma_xi_sq: f64) -> Result<f64> {
    stream.gaussian(a * level, sigma_xi_sq)
}

/// Modulator input `x + v_k`; `v_k` also carries the folded feedback error.
pub fn transmitter_input(x: f64, stream: &mut RngStream, sigma_v_sq: f64) -> Result<f64> {
    stream.gaussian(x, sigma_v_sq)
}

/// MMSE-optimal receiver gain for one cycle.
pub fn optimal_gain(a: f64, m: f64, p_prev: f64, sigma_v_sq: f64, sigma_xi_sq: f64) -> Result<f64> {
    let den = sigma_xi_sq + a * a * m * m * (sigma_v_sq + p_prev);
    if den <= 0.0 || !den.is_finite() {
        return Err(degenerate(format!(
            "gain denominator is {den} (A={a}, M={m}, P={p_prev}, sigma_v^2={sigma_v_sq}, sigma_xi^2={sigma_xi_sq})"
        )));
    }
    Ok(a * m * p_prev / den)
}

/// Modulator controls for one cycle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Controls {
    /// Modulation depth `M_k`.
    pub depth: f64,
    /// Offset `B_k`.
    pub offset: f64,
}

/// Optimal controls: centre the window on the previous estimate and widen it
/// to `alpha` predictive standard deviations.
pub fn compute_controls(x_hat_prev: f64, p_prev: f64, p: &SystemParams, dp: &DerivedParams) -> Result<Controls> {
    Ok(Controls {
        depth: optimal_depth(dp.alpha, p.sigma_v_sq, p_prev)?,
        offset: x_hat_prev,
    })
}

pub fn optimal_depth(alpha: f64, sigma_v_sq: f64, p_prev: f64) -> Result<f64> {
    let spread = sigma_v_sq + p_prev;
    if !(spread > 0.0) {
        return Err(degenerate(format!(
            "predictive variance sigma_v^2 + P = {spread} gives infinite modulation depth"
        )));
    }
    Ok(1.0 / (alpha * spread.sqrt()))
}

/// Probability that the modulator stays linear: mass of the predictive law
/// `N(x_hat_prev, sigma_v_sq + p_prev)` on `[b - 1/m, b + 1/m]`.
pub fn fitting_mass(m: f64, b: f64, x_hat_prev: f64, p_prev: f64, sigma_v_sq: f64) -> f64 {
    let half = 1.0 / m;
    normal_mass(b - half, b + half, x_hat_prev, sigma_v_sq + p_prev)
}

/// Absolute slack accepted on the fitting inequality to absorb rounding at
/// the optimum, where the mass equals `1 - mu` analytically.
const FITTING_SLACK: f64 = 1e-12;

/// Statistical fitting condition: linear-mode probability `>= 1 - mu`.
pub fn verify_fitting(m: f64, b: f64, x_hat_prev: f64, p_prev: f64, sigma_v_sq: f64, mu: f64) -> bool {
    fitting_mass(m, b, x_hat_prev, p_prev, sigma_v_sq) >= 1.0 - mu - FITTING_SLACK
}

/// Receiver-side state after cycle `k`, with the controls for cycle `k + 1`
/// once they have been set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorState {
    pub k: usize,
    pub x_hat: f64,
    /// MMSE `P_k` carried by the recursion.
    pub mse: f64,
    /// Gain used in the last update.
    pub gain: f64,
    pub depth: f64,
    pub offset: f64,
}

impl EstimatorState {
    /// State before the first cycle: `x_hat = x0`, `P = sigma0_sq`.
    pub fn initial(p: &SystemParams) -> Self {
        Self {
            k: 0,
            x_hat: p.x0,
            mse: p.sigma0_sq,
            gain: 0.0,
            depth: 0.0,
            offset: p.x0,
        }
    }

    pub fn with_controls(mut self, c: Controls) -> Self {
        self.depth = c.depth;
        self.offset = c.offset;
        self
    }
}

/// Kalman-type update with the controls already stored in `state`.
///
/// The innovation is `y - A M (x_hat - B)`; with optimal controls `B = x_hat`
/// and it reduces to the raw observation.
pub fn receiver_update(state: EstimatorState, y_tilde: f64, dp: &DerivedParams, p: &SystemParams) -> Result<EstimatorState> {
    let (a, m) = (dp.a, state.depth);
    let gain = optimal_gain(a, m, state.mse, p.sigma_v_sq, dp.sigma_xi_sq)?;
    let predicted = a * m * (state.x_hat - state.offset);
    let mse = theory::mse_step(state.mse, a, m, p.sigma_v_sq, dp.sigma_xi_sq)?;
    Ok(EstimatorState {
        k: state.k + 1,
        x_hat: state.x_hat + gain * (y_tilde - predicted),
        mse,
        gain,
        ..state
    })
}

/// Per-cycle record of one sample transmission.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleTrace {
    pub k: usize,
    pub depth: f64,
    pub offset: f64,
    /// Modulator input `x_k - B_k`.
    pub input: f64,
    pub saturated: bool,
    pub observation: f64,
    pub gain: f64,
    pub x_hat: f64,
    /// MMSE carried by the receiver recursion after this cycle.
    pub mse: f64,
    pub sq_error: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::two_sided_tail;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn unit_params() -> SystemParams {
        SystemParams {
            mu: two_sided_tail(1.0),
            sigma_xi_sq: Some(1.0),
            ..SystemParams::default()
        }
    }

    #[test]
    fn derive_fig5_point() {
        let p = SystemParams {
            a0: 5e-3,
            mu: two_sided_tail(4.0),
            n_xi: 1e-10,
            f0: 2500.0,
            f: 2500.0,
            sigma0_sq: 0.0625,
            ..SystemParams::default()
        };
        let dp = derive_params(&p).unwrap();
        assert_relative_eq!(dp.w_sign, 1.5625e-6, max_relative = 1e-12);
        assert_relative_eq!(dp.q_sq, 6.25, max_relative = 1e-12);
        assert_relative_eq!(dp.sigma_xi_sq, 2.5e-7, max_relative = 1e-15);
        assert_abs_diff_eq!(dp.capacity, 7144.952, epsilon = 1e-3);
    }

    #[test]
    fn derive_unit_case() {
        let dp = derive_params(&unit_params()).unwrap();
        assert_relative_eq!(dp.q_sq, 1.0, max_relative = 1e-12);
        assert_eq!(dp.q_sq, dp.w_sign / dp.sigma_xi_sq);
        assert_eq!(dp.w_sign, (dp.a / dp.alpha).powi(2));
    }

    #[test]
    fn derive_fig4_point() {
        let p = SystemParams {
            a0: 1.25,
            sigma_xi_sq: Some(0.01),
            ..SystemParams::default()
        };
        let dp = derive_params(&p).unwrap();
        assert_relative_eq!(dp.q_sq, (1.25f64 / 4.0).powi(2) / 0.01, max_relative = 1e-12);
        assert_abs_diff_eq!(dp.q_sq, 9.765625, epsilon = 1e-9);
    }

    #[test]
    fn derive_propagates_domain_error() {
        let p = SystemParams {
            mu: 1.0,
            ..SystemParams::default()
        };
        assert!(matches!(derive_params(&p), Err(Error::Domain(_))));
    }

    #[test]
    fn validation_catches_bad_fields() {
        let bad = [
            SystemParams { sigma0_sq: 0.0, ..SystemParams::default() },
            SystemParams { sigma_v_sq: -1.0, ..SystemParams::default() },
            SystemParams { f0: 1.0, f: 2.0, ..SystemParams::default() },
            SystemParams { n_cycles: 0, ..SystemParams::default() },
            SystemParams { mu: 0.0, ..SystemParams::default() },
        ];
        for p in &bad {
            assert!(p.validate().is_err(), "{p:?}");
        }
        assert!(SystemParams::default().validate().is_ok());
    }

    #[test]
    fn bandwidth_cycles() {
        let p = SystemParams { f0: 12_500.0, f: 2_500.0, ..SystemParams::default() }.with_bandwidth_cycles();
        assert_eq!(p.n_cycles, 5);
    }

    #[test]
    fn modulator_branches() {
        assert_eq!(modulate(0.5, 1.0, 0.0), 0.5);
        assert_eq!(modulate(0.75, 2.0, 0.0), 1.0);
        assert_eq!(modulate(-0.75, 2.0, 0.0), -1.0);
        assert_eq!(modulate(3.0, 7.0, 3.0), 0.0);
        // continuity at the knee
        assert_eq!(modulate(0.5, 2.0, 0.0), 1.0);
        assert_eq!(modulate(-0.5, 2.0, 0.0), -1.0);
        assert!(!saturates(0.5, 2.0));
    }

    #[test]
    fn noiseless_channel_is_scaling() {
        let mut s = RngStream::new(0, 0);
        assert_eq!(forward_channel(1.0, 2.0, &mut s, 0.0).unwrap(), 2.0);
        assert_eq!(forward_channel(-1.0, 2.0, &mut s, 0.0).unwrap(), -2.0);
        assert_eq!(transmitter_input(1.5, &mut s, 0.0).unwrap(), 1.5);
    }

    #[test]
    fn channel_noise_is_centred() {
        let mut s = RngStream::new(5, 1);
        let n = 100_000;
        let var = 0.04;
        let mean = (0..n).map(|_| forward_channel(0.0, 2.0, &mut s, var).unwrap()).sum::<f64>() / n as f64;
        assert!(mean.abs() <= 3.0 * var.sqrt() / (n as f64).sqrt());
    }

    #[test]
    fn transmitter_input_moments() {
        let mut s = RngStream::new(8, 2);
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| transmitter_input(1.0, &mut s, 4.0).unwrap()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((mean - 1.0).abs() < 0.02, "{mean}");
        assert!((var - 4.0).abs() < 0.15, "{var}");
    }

    #[test]
    fn gain_examples() {
        assert_eq!(optimal_gain(1.0, 1.0, 1.0, 0.0, 1.0).unwrap(), 0.5);
        assert_eq!(optimal_gain(1.0, 1.0, 0.0, 0.0, 1.0).unwrap(), 0.0);
        assert_eq!(optimal_gain(2.0, 1.0, 1.0, 0.0, 4.0).unwrap(), 0.25);
        assert!(matches!(optimal_gain(1.0, 1.0, 0.0, 0.0, 0.0), Err(Error::Degenerate(_))));
        // fully noiseless limit is 1/(A M)
        assert_relative_eq!(optimal_gain(2.0, 0.5, 3.0, 0.0, 0.0).unwrap(), 1.0, max_relative = 1e-15);
    }

    #[test]
    fn gain_identity_holds() {
        let (a, m, sv, sx) = (1.3, 0.7, 0.2, 0.5);
        let mut p_prev = 2.0;
        for _ in 0..20 {
            let l = optimal_gain(a, m, p_prev, sv, sx).unwrap();
            let p = theory::mse_step(p_prev, a, m, sv, sx).unwrap();
            let rhs = (1.0 - p / p_prev) / (a * m);
            assert!((l - rhs).abs() <= 1e-12 * l.abs().max(1e-300));
            p_prev = p;
        }
    }

    #[test]
    fn controls_examples() {
        let p = SystemParams { sigma_v_sq: 0.0, ..SystemParams::default() };
        let dp = DerivedParams { alpha: 4.0, ..derive_params(&p).unwrap() };
        let c = compute_controls(0.3, 0.0625, &p, &dp).unwrap();
        assert_relative_eq!(c.depth, 1.0, max_relative = 1e-15);
        assert_eq!(c.offset, 0.3);
        assert!(matches!(compute_controls(0.0, 0.0, &p, &dp), Err(Error::Degenerate(_))));

        let p = SystemParams { sigma_v_sq: 0.3, sigma0_sq: 2.0, ..SystemParams::default() };
        let dp = derive_params(&p).unwrap();
        let c = compute_controls(p.x0, p.sigma0_sq, &p, &dp).unwrap();
        assert_relative_eq!(c.depth, 1.0 / (dp.alpha * (0.3f64 + 2.0).sqrt()), max_relative = 1e-15);
    }

    #[test]
    fn fitting_condition() {
        let mu = 1e-3;
        let p = SystemParams { mu, sigma_v_sq: 0.1, ..SystemParams::default() };
        let dp = derive_params(&p).unwrap();
        let (x_hat, p_prev) = (0.4, 0.7);
        let c = compute_controls(x_hat, p_prev, &p, &dp).unwrap();
        let mass = fitting_mass(c.depth, c.offset, x_hat, p_prev, p.sigma_v_sq);
        assert_abs_diff_eq!(mass, 1.0 - mu, epsilon = 1e-9);
        assert!(verify_fitting(c.depth, c.offset, x_hat, p_prev, p.sigma_v_sq, mu));
        assert!(!verify_fitting(2.0 * c.depth, c.offset, x_hat, p_prev, p.sigma_v_sq, mu));
        let shift = 3.0 * (p.sigma_v_sq + p_prev).sqrt();
        assert!(!verify_fitting(c.depth, c.offset + shift, x_hat, p_prev, p.sigma_v_sq, mu));
    }

    #[test]
    fn receiver_update_examples() {
        let p = unit_params();
        let dp = derive_params(&p).unwrap();
        // pick A M so that L = 0.5 with P = 1, sigma_xi^2 = 1, sigma_v^2 = 0
        let m = 1.0 / dp.a;
        let state = EstimatorState::initial(&p).with_controls(Controls { depth: m, offset: 0.0 });
        let next = receiver_update(state, 1.0, &dp, &p).unwrap();
        assert_abs_diff_eq!(next.gain, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(next.x_hat, 0.5, epsilon = 1e-15);
        assert_eq!(next.k, 1);
        let still = receiver_update(state, 0.0, &dp, &p).unwrap();
        assert_eq!(still.x_hat, state.x_hat);
    }

    #[test]
    fn noiseless_cycle_recovers_sample() {
        let p = SystemParams {
            x0: 0.2,
            sigma0_sq: 1.5,
            sigma_xi_sq: Some(0.0),
            ..SystemParams::default()
        };
        let dp = derive_params(&p).unwrap();
        let x = 0.9;
        let state = EstimatorState::initial(&p);
        let c = compute_controls(state.x_hat, state.mse, &p, &dp).unwrap();
        let state = state.with_controls(c);
        let y = dp.a * modulate(x, c.depth, c.offset);
        let next = receiver_update(state, y, &dp, &p).unwrap();
        assert_relative_eq!(next.x_hat, x, max_relative = 1e-15);
        assert_eq!(next.mse, 0.0);
    }

    #[test]
    fn power_invariant_with_optimal_depth() {
        let p = SystemParams {
            a0: 1.25,
            sigma0_sq: 1.5625,
            sigma_v_sq: 1.5625e-8,
            sigma_xi_sq: Some(0.01),
            ..SystemParams::default()
        };
        let dp = derive_params(&p).unwrap();
        let mut pk = p.sigma0_sq;
        for _ in 0..30 {
            let m = optimal_depth(dp.alpha, p.sigma_v_sq, pk).unwrap();
            let w = dp.a * dp.a * m * m * (p.sigma_v_sq + pk);
            assert_relative_eq!(w, dp.w_sign, max_relative = 1e-12);
            pk = theory::mse_closed_step(pk, dp.q_sq, p.sigma_v_sq);
        }
    }

    #[test]
    fn deadline() {
        let p = SystemParams { f0: 1e6, f: 1e3, r: 50.0, ..SystemParams::default() };
        let d = p.deadline_check();
        assert_abs_diff_eq!(d.r_max, 75.0, epsilon = 1e-9);
        assert!(d.feasible);
        let p = SystemParams { r: 100.0, ..p };
        assert!(!p.deadline_check().feasible);
    }
}
