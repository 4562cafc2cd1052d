//! What happens after an over-modulation event: the corrupted estimate and
//! MSE produced by an unaware receiver, the probability that the next cycle
//! is linear again, and the rejecting receiver.

use crate::error::{domain, Result};
use crate::gaussian::{normal_mass, phi};
use crate::system::{optimal_depth, receiver_update, DerivedParams, EstimatorState, SystemParams};

/// Estimate after a saturated cycle processed as if it were linear:
/// `x_hat_prev + gain * (sign * a + zeta)`.
pub fn corrupted_update(x_hat_prev: f64, gain: f64, a: f64, zeta: f64, sign: f64) -> f64 {
    x_hat_prev + gain * (sign * a + zeta)
}

/// Actual MSE of the corrupted estimate, `p_prev + gain^2 sigma_xi^2`.
pub fn corrupted_mse(p_prev: f64, gain: f64, sigma_xi_sq: f64) -> f64 {
    p_prev + gain * gain * sigma_xi_sq
}

/// One over-modulation event as seen by a receiver that does not detect it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorruptionEvent {
    /// Cycle of the saturation.
    pub k: usize,
    pub x_hat_before: f64,
    pub x_hat_corrupted: f64,
    pub p_before: f64,
    pub p_after: f64,
    /// Rail that was hit, `+1` or `-1`.
    pub sign: f64,
}

impl CorruptionEvent {
    #[allow(clippy::too_many_arguments)]
    pub fn new(k: usize, x_hat_before: f64, p_before: f64, gain: f64, a: f64, zeta: f64, sign: f64, sigma_xi_sq: f64) -> Self {
        Self {
            k,
            x_hat_before,
            x_hat_corrupted: corrupted_update(x_hat_before, gain, a, zeta, sign),
            p_before,
            p_after: corrupted_mse(p_before, gain, sigma_xi_sq),
            sign,
        }
    }

    /// Offset of the corrupted estimate from the last clean one.
    pub fn displacement(&self) -> f64 {
        self.x_hat_corrupted - self.x_hat_before
    }
}

/// Which MSE sets the depth of the cycle after a corruption.
///
/// The predictive law of the next input is always the pre-corruption one,
/// `N(x_hat_before, sigma_v^2 + p_before)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DepthSource {
    /// The inflated MSE of the corrupted estimate.
    #[default]
    Corrupted,
    /// The nominal MSE the unaware receiver keeps carrying, which is what
    /// the simulator uses.
    Nominal,
}

/// Probability that the input of the next cycle falls inside the window
/// centred on the corrupted estimate: `Phi(beta1) - Phi(beta2)` with
/// `beta = [m (x_tilde - x_hat_prev) +- 1] / (m sqrt(sigma_v^2 + p_prev))`.
pub fn recovery_probability_exact(x_tilde: f64, x_hat_prev: f64, m_next: f64, sigma_v_sq: f64, p_prev: f64) -> Result<f64> {
    if !(m_next > 0.0) {
        return Err(domain(format!("modulation depth must be > 0, got {m_next}")));
    }
    let spread = sigma_v_sq + p_prev;
    if !(spread > 0.0) {
        return Err(domain(format!("predictive variance must be > 0, got {spread}")));
    }
    let half = 1.0 / m_next;
    Ok(normal_mass(x_tilde - half, x_tilde + half, x_hat_prev, spread))
}

/// Restoration probability after `event`, with the next depth chosen by
/// `source`. `p_nominal` is the MSE the receiver carries after the event.
pub fn restoration_probability(
    event: &CorruptionEvent,
    p_nominal: f64,
    alpha: f64,
    sigma_v_sq: f64,
    source: DepthSource,
) -> Result<f64> {
    let p_next = match source {
        DepthSource::Corrupted => event.p_after,
        DepthSource::Nominal => p_nominal,
    };
    let m_next = optimal_depth(alpha, sigma_v_sq, p_next)?;
    recovery_probability_exact(event.x_hat_corrupted, event.x_hat_before, m_next, sigma_v_sq, event.p_before)
}

/// Pre-threshold restoration probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrethresholdRecovery {
    /// Leading term `alpha / Q * sqrt(2/pi) * exp(-alpha^2/2)`.
    pub asymptotic: f64,
    /// `Phi[alpha + alpha(z + 1/Q)] - Phi[alpha + alpha(z - 1/Q)]` at `z = zeta/A`.
    pub two_phi: f64,
}

pub fn recovery_probability_prethreshold(alpha: f64, q_sq: f64, zeta_over_a: f64) -> Result<PrethresholdRecovery> {
    if !(q_sq > 1.0) {
        return Err(domain(format!("pre-threshold form needs Q^2 > 1, got {q_sq}")));
    }
    if !(alpha > 0.0) {
        return Err(domain(format!("saturation factor must be > 0, got {alpha}")));
    }
    let inv_q = 1.0 / q_sq.sqrt();
    let asymptotic = alpha * inv_q * (2.0 / std::f64::consts::PI).sqrt() * (-0.5 * alpha * alpha).exp();
    let z = zeta_over_a;
    let hi = alpha + alpha * (z + inv_q);
    let lo = alpha + alpha * (z - inv_q);
    // Same difference through the upper tails, which keeps precision when
    // both arguments sit far above zero.
    let two_phi = if lo > 0.0 {
        normal_mass(lo, hi, 0.0, 1.0)
    } else {
        phi(hi) - phi(lo)
    };
    Ok(PrethresholdRecovery { asymptotic, two_phi })
}

/// Post-threshold restoration probability
/// `Phi(alpha + s) + Phi(alpha - s)` with `s = alpha (1 + zeta/A) / (k - n* + 1)`.
pub fn recovery_probability_postthreshold(alpha: f64, k_minus_nstar: usize, zeta_over_a: f64) -> Result<f64> {
    if k_minus_nstar == 0 {
        return Err(domain("post-threshold form needs k - n* >= 1"));
    }
    let shift = alpha * (1.0 + zeta_over_a) / (k_minus_nstar as f64 + 1.0);
    Ok(phi(alpha + shift) + phi(alpha - shift))
}

/// Receiver that discards cycles flagged as saturated and otherwise runs
/// the normal update.
pub fn rejection_mode_update(
    state: EstimatorState,
    y_tilde: f64,
    detected: bool,
    dp: &DerivedParams,
    p: &SystemParams,
) -> Result<EstimatorState> {
    if detected {
        Ok(state)
    } else {
        receiver_update(state, y_tilde, dp, p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::{two_sided_tail, RngStream};
    use crate::system::{compute_controls, derive_params, optimal_gain, Controls};
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    #[test]
    fn corrupted_update_examples() {
        assert_eq!(corrupted_update(0.3, 0.0, 2.0, 0.1, 1.0), 0.3);
        assert_eq!(corrupted_update(0.0, 0.5, 2.0, 0.0, 1.0), 1.0);
        assert_eq!(corrupted_update(0.0, 0.5, 2.0, 0.0, -1.0), -1.0);
    }

    #[test]
    fn corrupted_update_bias() {
        let mut s = RngStream::new(3, 0);
        let (gain, a, var) = (0.4, 1.5, 0.25);
        let n = 200_000;
        let mean = (0..n)
            .map(|_| corrupted_update(0.0, gain, a, s.gaussian(0.0, var).unwrap(), 1.0))
            .sum::<f64>()
            / n as f64;
        let se = gain * var.sqrt() / (n as f64).sqrt();
        assert!((mean - gain * a).abs() < 4.0 * se);
    }

    #[test]
    fn corrupted_mse_examples() {
        assert_eq!(corrupted_mse(0.7, 0.0, 3.0), 0.7);
        assert_eq!(corrupted_mse(1.0, 0.5, 1.0), 1.25);
        let e = CorruptionEvent::new(3, 0.1, 0.2, 0.6, 1.0, -0.05, -1.0, 0.3);
        assert!(e.p_after >= e.p_before);
        assert_relative_eq!(e.displacement(), 0.6 * (-1.0 - 0.05), max_relative = 1e-14);
    }

    #[test]
    fn exact_recovery_at_zero_displacement() {
        for &mu in &[1e-2, 1e-3, two_sided_tail(4.0)] {
            let p = SystemParams { mu, sigma_v_sq: 0.05, ..SystemParams::default() };
            let dp = derive_params(&p).unwrap();
            let m = optimal_depth(dp.alpha, p.sigma_v_sq, 0.4).unwrap();
            let pr = recovery_probability_exact(0.2, 0.2, m, p.sigma_v_sq, 0.4).unwrap();
            assert_abs_diff_eq!(pr, 1.0 - mu, epsilon = 1e-9);
        }
    }

    #[test]
    fn exact_recovery_far_displacement() {
        let pr = recovery_probability_exact(1e3, 0.0, 1.0, 0.0, 1.0).unwrap();
        assert!(pr < 1e-300);
        assert!(recovery_probability_exact(0.0, 0.0, 0.0, 0.0, 1.0).is_err());
        assert!(recovery_probability_exact(0.0, 0.0, 1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn exact_recovery_matches_sampling() {
        let mut s = RngStream::new(17, 0);
        for case in 0..3 {
            let x_hat_prev = 0.3 * case as f64;
            let spread = 0.5 + case as f64;
            let m = 1.0 / (1.5 * spread.sqrt());
            let x_tilde = x_hat_prev + 0.8 * spread.sqrt();
            let pr = recovery_probability_exact(x_tilde, x_hat_prev, m, 0.2, spread - 0.2).unwrap();
            let n = 200_000;
            let hits = (0..n)
                .filter(|_| {
                    let x = s.gaussian(x_hat_prev, spread).unwrap();
                    m * (x - x_tilde).abs() <= 1.0
                })
                .count();
            let freq = hits as f64 / n as f64;
            let sigma = (pr * (1.0 - pr) / n as f64).sqrt();
            assert!((freq - pr).abs() <= 3.0 * sigma, "case {case}: {freq} vs {pr}");
        }
    }

    #[test]
    fn prethreshold_values() {
        let r = recovery_probability_prethreshold(4.0, 100.0, 0.0).unwrap();
        assert_abs_diff_eq!(r.asymptotic, 1.0707e-4, epsilon = 1e-7);
        for &alpha in &[2.0, 3.0, 4.0, 6.0] {
            for &q in &[3.0f64, 10.0, 30.0] {
                let r = recovery_probability_prethreshold(alpha, q * q, 0.0).unwrap();
                assert!(r.asymptotic < 0.2, "alpha={alpha} q={q}");
            }
        }
        let r = recovery_probability_prethreshold(3.0, 100.0, 0.0).unwrap();
        let ratio = r.two_phi / r.asymptotic;
        assert!((0.5..=2.0).contains(&ratio), "ratio {ratio}");
        assert!(recovery_probability_prethreshold(4.0, 1.0, 0.0).is_err());
        assert!(recovery_probability_prethreshold(0.0, 4.0, 0.0).is_err());
    }

    #[test]
    fn prethreshold_matches_exact_in_the_limit() {
        // Large Q, negligible sigma_v: the exact form collapses onto the
        // two-Phi expression with Q^2/(1+Q^2) -> 1.
        let q_sq: f64 = 1e6;
        let alpha = 3.0;
        let p_prev: f64 = 1.0;
        let m_k = 1.0 / (alpha * p_prev.sqrt());
        let p_k = p_prev / (1.0 + q_sq);
        let a = 1.0;
        let sigma_xi_sq = (a / alpha).powi(2) / q_sq;
        let gain = optimal_gain(a, m_k, p_prev, 0.0, sigma_xi_sq).unwrap();
        let event = CorruptionEvent::new(1, 0.0, p_prev, gain, a, 0.0, 1.0, sigma_xi_sq);
        let exact = restoration_probability(&event, p_k, alpha, 0.0, DepthSource::Nominal).unwrap();
        let two_phi = recovery_probability_prethreshold(alpha, q_sq, 0.0).unwrap().two_phi;
        assert_relative_eq!(exact, two_phi, max_relative = 1e-2);
    }

    #[test]
    fn depth_sources_differ() {
        let p = SystemParams { sigma_v_sq: 1e-6, sigma_xi_sq: Some(0.01), ..SystemParams::default() };
        let dp = derive_params(&p).unwrap();
        let c = compute_controls(0.0, 1.0, &p, &dp).unwrap();
        let gain = optimal_gain(dp.a, c.depth, 1.0, p.sigma_v_sq, dp.sigma_xi_sq).unwrap();
        let e = CorruptionEvent::new(1, 0.0, 1.0, gain, dp.a, 0.0, 1.0, dp.sigma_xi_sq);
        let p_nom = crate::theory::mse_closed_step(1.0, dp.q_sq, p.sigma_v_sq);
        let a = restoration_probability(&e, p_nom, dp.alpha, p.sigma_v_sq, DepthSource::Nominal).unwrap();
        let b = restoration_probability(&e, p_nom, dp.alpha, p.sigma_v_sq, DepthSource::Corrupted).unwrap();
        // a wider window (corrupted MSE) can only help
        assert!(b > a);
    }

    #[test]
    fn postthreshold_values() {
        let mu = two_sided_tail(4.0);
        let far = recovery_probability_postthreshold(4.0, 1_000_000_000, 0.0).unwrap();
        assert_abs_diff_eq!(far, 1.0 - mu, epsilon = 1e-12);
        let ten = recovery_probability_postthreshold(4.0, 10, 0.0).unwrap();
        assert!((ten - (1.0 - mu)).abs() < 1e-3);
        let mut prev = 0.0;
        for k in 1..60 {
            let v = recovery_probability_postthreshold(4.0, k, 0.0).unwrap();
            assert!(v > prev);
            prev = v;
        }
        assert!(recovery_probability_postthreshold(4.0, 0, 0.0).is_err());
    }

    #[test]
    fn rejection_update() {
        let p = SystemParams { sigma_xi_sq: Some(0.1), ..SystemParams::default() };
        let dp = derive_params(&p).unwrap();
        let c = compute_controls(p.x0, p.sigma0_sq, &p, &dp).unwrap();
        let state = EstimatorState::initial(&p).with_controls(Controls { ..c });
        assert_eq!(rejection_mode_update(state, 0.7, true, &dp, &p).unwrap(), state);
        assert_eq!(
            rejection_mode_update(state, 0.7, false, &dp, &p).unwrap(),
            receiver_update(state, 0.7, &dp, &p).unwrap()
        );
    }
}
