//! Named experiment set-ups and the derived tables built on them.

use crate::error::{domain, Error, Result};
use crate::gaussian::two_sided_tail;
use crate::system::{derive_params, DerivedParams, SystemParams};
use crate::theory;

use super::{BatchResult, Mode};

/// Parameter varied across the points of a preset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepVariable {
    /// Single point at the base parameters.
    None,
    /// Forward-channel noise variance.
    SigmaXiSq,
    /// Threshold-mode operation with `n*` cycles: `f0 = n* f`,
    /// `n_cycles = n*` and `sigma_v^2 = sigma0^2 (1 + Q^2)^-n*`.
    NStar,
    /// Cycle at which a saturation is forced.
    KForce,
}

impl SweepVariable {
    pub fn label(self) -> &'static str {
        match self {
            SweepVariable::None => "none",
            SweepVariable::SigmaXiSq => "sigma_xi_sq",
            SweepVariable::NStar => "n_star",
            SweepVariable::KForce => "k_force",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
}

impl Sweep {
    pub fn none() -> Self {
        Self {
            variable: SweepVariable::None,
            values: vec![0.0],
        }
    }
}

/// Tables a preset asks for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Output {
    Mse,
    Rate,
    Efficiency,
    BitrateGain,
    Appendix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPreset {
    pub name: String,
    pub description: String,
    pub base: SystemParams,
    pub mode: Mode,
    pub sweep: Sweep,
    pub outputs: Vec<Output>,
}

/// One point of a sweep with its parameters resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub value: f64,
    pub params: SystemParams,
    pub derived: DerivedParams,
}

impl ExperimentPreset {
    pub fn validate(&self) -> Result<()> {
        if self.sweep.values.is_empty() {
            return Err(domain(format!("preset `{}` has an empty sweep", self.name)));
        }
        if let Some(v) = self.sweep.values.iter().find(|v| !v.is_finite()) {
            return Err(domain(format!("preset `{}` has a non-finite sweep value {v}", self.name)));
        }
        self.base.validate()
    }

    pub fn points(&self) -> Result<Vec<SweepPoint>> {
        self.validate()?;
        self.sweep.values.iter().map(|&v| self.point(v)).collect()
    }

    fn point(&self, value: f64) -> Result<SweepPoint> {
        let params = match self.sweep.variable {
            SweepVariable::None | SweepVariable::KForce => self.base.clone(),
            SweepVariable::SigmaXiSq => SystemParams {
                sigma_xi_sq: Some(value),
                ..self.base.clone()
            },
            SweepVariable::NStar => threshold_mode_params(&self.base, value)?,
        };
        params.validate()?;
        let derived = derive_params(&params)?;
        Ok(SweepPoint { value, params, derived })
    }
}

/// Configure `base` for threshold-mode operation with `n_star` cycles.
pub fn threshold_mode_params(base: &SystemParams, n_star: f64) -> Result<SystemParams> {
    if !(n_star >= 1.0 && n_star.fract() == 0.0) {
        return Err(Error::InvalidParam {
            field: "n_star",
            reason: format!("must be a positive integer, got {n_star}"),
        });
    }
    let cycles = n_star as usize;
    let mut p = SystemParams {
        f0: n_star * base.f,
        n_cycles: cycles,
        sigma_xi_sq: None,
        ..base.clone()
    };
    let dp = derive_params(&p)?;
    p.sigma_v_sq = p.sigma0_sq * (1.0 + dp.q_sq).powi(-(cycles as i32));
    Ok(p)
}

fn fig4_base() -> SystemParams {
    SystemParams {
        x0: 0.0,
        sigma0_sq: 1.5625,
        sigma_v_sq: 1e-8 * 1.5625,
        a0: 1.25,
        gamma: 1.0,
        r: 1.0,
        n_xi: 1.0,
        f0: 1.0,
        f: 1.0,
        mu: two_sided_tail(4.0),
        n_cycles: 40,
        sigma_xi_sq: Some(0.01),
        delta_t_proc: 0.0,
    }
}

fn fig5_base() -> SystemParams {
    SystemParams {
        x0: 0.0,
        sigma0_sq: 62.5e-3,
        sigma_v_sq: 0.0,
        a0: 5e-3,
        gamma: 1.0,
        r: 1.0,
        n_xi: 1e-10,
        f0: 2.5e3,
        f: 2.5e3,
        mu: two_sided_tail(4.0),
        n_cycles: 1,
        sigma_xi_sq: None,
        delta_t_proc: 0.0,
    }
}

/// Forward-channel noise levels swept by the MSE and rate figures.
pub const FIG4_NOISE_SWEEP: [f64; 4] = [0.03, 0.01, 0.003, 0.001];

/// Forward-channel noise level used by the over-modulation experiments.
pub const APPENDIX_NOISE: f64 = 0.001;

pub fn preset_catalog() -> Vec<ExperimentPreset> {
    let noise = Sweep {
        variable: SweepVariable::SigmaXiSq,
        values: FIG4_NOISE_SWEEP.to_vec(),
    };
    let appendix_base = SystemParams {
        sigma_xi_sq: Some(APPENDIX_NOISE),
        n_cycles: 20,
        ..fig4_base()
    };
    let appendix_k = appendix_cases(&appendix_base)
        .map(|cases| cases.iter().filter(|c| c.params.mu == appendix_base.mu).map(|c| c.k_force as f64).collect())
        .unwrap_or_default();
    vec![
        ExperimentPreset {
            name: "fig4a".into(),
            description: "MSE of the non-adaptive baseline (fixed depth, offset x0)".into(),
            base: fig4_base(),
            mode: Mode::FixedDepth,
            sweep: noise.clone(),
            outputs: vec![Output::Mse],
        },
        ExperimentPreset {
            name: "fig4b".into(),
            description: "MSE of the optimal adaptive system".into(),
            base: fig4_base(),
            mode: Mode::Optimal,
            sweep: noise.clone(),
            outputs: vec![Output::Mse],
        },
        ExperimentPreset {
            name: "fig3".into(),
            description: "Output bit-rate versus cycles per sample".into(),
            base: fig4_base(),
            mode: Mode::Optimal,
            sweep: noise,
            outputs: vec![Output::Rate],
        },
        ExperimentPreset {
            name: "fig5".into(),
            description: "Threshold-mode efficiency against the power-bandwidth boundary".into(),
            base: fig5_base(),
            mode: Mode::Optimal,
            sweep: Sweep {
                variable: SweepVariable::NStar,
                values: (2..=10).map(f64::from).collect(),
            },
            outputs: vec![Output::Efficiency],
        },
        ExperimentPreset {
            name: "table1".into(),
            description: "Bit-rate gain over the non-adaptive system".into(),
            base: fig5_base(),
            mode: Mode::Optimal,
            sweep: Sweep {
                variable: SweepVariable::NStar,
                values: (1..=5).map(f64::from).collect(),
            },
            outputs: vec![Output::BitrateGain],
        },
        ExperimentPreset {
            name: "appendixA".into(),
            description: "Forced over-modulation before and after the threshold".into(),
            base: appendix_base,
            mode: Mode::Optimal,
            sweep: Sweep {
                variable: SweepVariable::KForce,
                values: appendix_k,
            },
            outputs: vec![Output::Appendix],
        },
    ]
}

pub fn find_preset(name: &str) -> Option<ExperimentPreset> {
    preset_catalog().into_iter().find(|p| p.name.eq_ignore_ascii_case(name))
}

/// Forced-corruption scenarios: one pre-threshold cycle and one cycle ten
/// past the threshold at the base saturation factor, plus the same
/// post-threshold case at `alpha = 2.5`.
pub fn appendix_cases(base: &SystemParams) -> Result<Vec<super::AppendixCase>> {
    use crate::theory::Regime;
    let mut cases = Vec::new();
    let alt = SystemParams {
        mu: two_sided_tail(2.5),
        ..base.clone()
    };
    for (params, with_pre) in [(base.clone(), true), (alt, false)] {
        let dp = derive_params(&params)?;
        let n_star = dp
            .n_star()
            .ok_or_else(|| domain("forced-corruption cases need a finite threshold"))?;
        let mut params = params;
        params.n_cycles = params.n_cycles.max(n_star + 15);
        if with_pre {
            if n_star < 3 {
                return Err(domain(format!("threshold at cycle {n_star} leaves no pre-threshold cycle to corrupt")));
            }
            cases.push(super::AppendixCase {
                k_force: 2,
                regime: Regime::PreThreshold,
                params: params.clone(),
            });
        }
        cases.push(super::AppendixCase {
            k_force: n_star + 10,
            regime: Regime::PostThreshold,
            params,
        });
    }
    Ok(cases)
}

/// One row of the bit-rate gain table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainRow {
    pub n_star: usize,
    /// Baseline per-observation SNR `W / (n_xi f)`.
    pub q_cs_sq: f64,
    pub rho_formula: f64,
    /// Ratio of exact threshold-mode and baseline output rates.
    pub rho_oracle: f64,
}

pub fn gain_rows(preset: &ExperimentPreset) -> Result<Vec<GainRow>> {
    preset
        .points()?
        .into_iter()
        .map(|pt| {
            let n_star = pt.params.n_cycles;
            let q_cs_sq = theory::gain_reference_snr(&pt.params, &pt.derived);
            Ok(GainRow {
                n_star,
                q_cs_sq,
                rho_formula: theory::bitrate_gain(n_star, q_cs_sq),
                rho_oracle: theory::bitrate_gain_oracle(&pt.params, &pt.derived)?,
            })
        })
        .collect()
}

/// Threshold-mode efficiency, theoretical and empirical.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EfficiencyPoint {
    pub n_star: usize,
    /// `R_n / f0` from the theoretical MSE.
    pub spectral_eff_theory: f64,
    /// `E_bit / N` from the theoretical MSE.
    pub energy_ratio_theory: f64,
    /// `R_hat / f0` from the empirical MSE.
    pub spectral_eff: f64,
    /// `E_bit / N` from the empirical MSE.
    pub energy_ratio: f64,
    pub energy_ratio_stderr: f64,
    /// Boundary value of `E_bit / N` at the empirical spectral efficiency.
    pub boundary: f64,
}

impl EfficiencyPoint {
    /// Distance of the point to the right of the boundary, in standard errors.
    pub fn margin_in_stderr(&self) -> f64 {
        (self.energy_ratio - self.boundary) / self.energy_ratio_stderr
    }
}

pub fn efficiency_point(pt: &SweepPoint, batch: &BatchResult) -> EfficiencyPoint {
    let p = &pt.params;
    let dp = &pt.derived;
    let n = p.n_cycles;
    let noise_density = dp.sigma_xi_sq / p.f0;
    let p_theory = batch.p_theory[n - 1];
    let r_theory = theory::rate_from_mse(p.f0, n, p.sigma0_sq, p_theory);
    let r_hat = batch.rate_hat[n - 1];
    let energy_ratio = dp.w_sign / (noise_density * r_hat);
    // delta method: dR = f0 / (n ln 2) * dP / P
    let rate_se = p.f0 / (n as f64 * std::f64::consts::LN_2) * batch.p_hat_stderr[n - 1] / batch.p_hat[n - 1];
    EfficiencyPoint {
        n_star: n,
        spectral_eff_theory: r_theory / p.f0,
        energy_ratio_theory: dp.w_sign / (noise_density * r_theory),
        spectral_eff: r_hat / p.f0,
        energy_ratio,
        energy_ratio_stderr: energy_ratio * rate_se / r_hat,
        boundary: theory::shannon_boundary(r_hat / p.f0),
    }
}
