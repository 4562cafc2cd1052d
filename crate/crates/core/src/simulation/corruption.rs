//! Forced over-modulation experiments.

use rayon::prelude::*;

use crate::error::{domain, Result};
use crate::gaussian::RngStream;
use crate::system::{DerivedParams, SystemParams};
pub use crate::theory::Regime;

use super::{draw_sample, run_sample_forced, Mode, ABNORMAL_CUTOFF};

/// One forced-corruption scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct AppendixCase {
    pub k_force: usize,
    pub regime: Regime,
    pub params: SystemParams,
}

/// Outcome of forcing a saturation at `k_force` in every trial.
#[derive(Debug, Clone, PartialEq)]
pub struct CorruptionStats {
    pub mode: Mode,
    pub k_force: usize,
    pub trials: usize,
    /// Trials whose cycles before `k_force` were all linear.
    pub clean_history: usize,
    /// Clean-history trials whose cycle `k_force + 1` was linear.
    pub restored: usize,
    /// Final squared errors, one per trial in trial order.
    pub final_sq_errors: Vec<f64>,
    /// Final signed errors `x - x_hat_n`, one per trial in trial order.
    pub final_errors: Vec<f64>,
    /// MSE the receiver believes it has reached at the end of the run.
    pub receiver_mse: f64,
    /// Final errors beyond `ABNORMAL_CUTOFF` receiver RMS errors.
    pub abnormal: usize,
}

impl CorruptionStats {
    pub fn restoration_frequency(&self) -> f64 {
        self.restored as f64 / self.clean_history as f64
    }

    pub fn abnormal_rate(&self) -> f64 {
        self.abnormal as f64 / self.trials as f64
    }

    pub fn mean_final_sq_error(&self) -> f64 {
        self.final_sq_errors.iter().sum::<f64>() / self.trials as f64
    }
}

struct TrialOutcome {
    clean_history: bool,
    restored: bool,
    final_error: f64,
    receiver_mse: f64,
}

/// Force the `+1` rail at cycle `k_force` in `trials` independent samples.
///
/// `Mode::Optimal` runs the unaware receiver; `Mode::Rejection` discards
/// every saturated cycle, the forced one included. Restoration needs a cycle
/// after the forced one, so `k_force < n_cycles`.
pub fn forced_corruption_experiment(
    p: &SystemParams,
    dp: &DerivedParams,
    k_force: usize,
    mode: Mode,
    trials: usize,
    seed: u64,
) -> Result<CorruptionStats> {
    p.validate()?;
    if k_force == 0 || k_force >= p.n_cycles {
        return Err(domain(format!(
            "forced cycle must satisfy 1 <= k < n_cycles = {}, got {k_force}",
            p.n_cycles
        )));
    }
    if mode == Mode::FixedDepth {
        return Err(domain("forced corruption is defined for the adaptive receivers only"));
    }
    let outcomes: Vec<TrialOutcome> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut stream = RngStream::new(seed, i as u64);
            let x = draw_sample(p, &mut stream)?;
            let traces = run_sample_forced(x, p, dp, &mut stream, mode, Some(k_force))?;
            let clean_history = traces[..k_force - 1].iter().all(|t| !t.saturated);
            let last = traces[traces.len() - 1];
            Ok(TrialOutcome {
                clean_history,
                restored: clean_history && !traces[k_force].saturated,
                final_error: x - last.x_hat,
                receiver_mse: last.mse,
            })
        })
        .collect::<Result<_>>()?;

    let receiver_mse = outcomes.first().map_or(0.0, |o| o.receiver_mse);
    let mut stats = CorruptionStats {
        mode,
        k_force,
        trials,
        clean_history: 0,
        restored: 0,
        final_sq_errors: Vec::with_capacity(trials),
        final_errors: Vec::with_capacity(trials),
        receiver_mse,
        abnormal: 0,
    };
    for o in &outcomes {
        stats.clean_history += o.clean_history as usize;
        stats.restored += o.restored as usize;
        let sq = o.final_error * o.final_error;
        stats.final_sq_errors.push(sq);
        stats.final_errors.push(o.final_error);
        if sq > ABNORMAL_CUTOFF * ABNORMAL_CUTOFF * o.receiver_mse {
            stats.abnormal += 1;
        }
    }
    Ok(stats)
}

/// Naive and rejecting receivers run on the same trials.
#[derive(Debug, Clone, PartialEq)]
pub struct CorruptionPair {
    pub naive: CorruptionStats,
    pub rejection: CorruptionStats,
}

pub fn forced_corruption_pair(p: &SystemParams, dp: &DerivedParams, k_force: usize, trials: usize, seed: u64) -> Result<CorruptionPair> {
    Ok(CorruptionPair {
        naive: forced_corruption_experiment(p, dp, k_force, Mode::Optimal, trials, seed)?,
        rejection: forced_corruption_experiment(p, dp, k_force, Mode::Rejection, trials, seed)?,
    })
}

/// Two-sample Kolmogorov-Smirnov test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsTest {
    pub statistic: f64,
    /// Asymptotic critical value at the 5% level.
    pub critical_5pct: f64,
}

impl KsTest {
    pub fn rejects(&self) -> bool {
        self.statistic > self.critical_5pct
    }
}

pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsTest {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    KsTest {
        statistic: d,
        critical_5pct: 1.358 * ((n + m) / (n * m)).sqrt(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ks_identical_and_shifted() {
        let a: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        assert_eq!(ks_two_sample(&a, &a).statistic, 0.0);
        let b: Vec<f64> = (0..1000).map(|i| i as f64 + 500.0).collect();
        let t = ks_two_sample(&a, &b);
        assert!((t.statistic - 0.5).abs() < 1e-12);
        assert!(t.rejects());
    }

    #[test]
    fn ks_same_law_not_rejected() {
        let mut s = RngStream::new(12, 0);
        let mut t = RngStream::new(12, 1);
        let a: Vec<f64> = (0..5000).map(|_| s.standard_normal()).collect();
        let b: Vec<f64> = (0..5000).map(|_| t.standard_normal()).collect();
        assert!(!ks_two_sample(&a, &b).rejects());
    }

    #[test]
    fn bad_force_cycle() {
        let p = SystemParams { n_cycles: 4, sigma_xi_sq: Some(0.1), ..SystemParams::default() };
        let dp = crate::system::derive_params(&p).unwrap();
        assert!(forced_corruption_experiment(&p, &dp, 0, Mode::Optimal, 10, 0).is_err());
        assert!(forced_corruption_experiment(&p, &dp, 4, Mode::Optimal, 10, 0).is_err());
        assert!(forced_corruption_experiment(&p, &dp, 2, Mode::FixedDepth, 10, 0).is_err());
    }
}
