use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use afcs::overmod::{recovery_probability_postthreshold, recovery_probability_prethreshold};
use afcs::simulation::{
    appendix_cases, efficiency_point, find_preset, forced_corruption_pair, gain_rows, preset_catalog, run_preset, AppendixCase,
    BatchResult, ExperimentPreset, Mode, Output, Sweep, SweepPoint, SweepVariable,
};
use afcs::system::compute_controls;
use afcs::theory::{self, Regime};
use afcs::SystemParams;

use crate::config::Config;
use crate::error::CliError;
use crate::row;
use crate::svg::{Chart, Series, Stroke};
use crate::table::Table;

/// Trials per forced-corruption case unless `--samples` says otherwise.
pub const APPENDIX_TRIALS: usize = 200_000;

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub seed: u64,
    pub samples: Option<usize>,
    pub out: PathBuf,
    pub csv: bool,
    pub svg: bool,
}

fn custom_preset() -> ExperimentPreset {
    ExperimentPreset {
        name: "custom".into(),
        description: "Parameters taken from the configuration file".into(),
        base: SystemParams::default(),
        mode: Mode::Optimal,
        sweep: Sweep::none(),
        outputs: vec![Output::Mse, Output::Rate],
    }
}

/// Resolve a preset name (or `custom`) and apply the configuration on top.
pub fn load_preset(name: &str, config: Option<&Config>) -> Result<ExperimentPreset, CliError> {
    let preset = if name.eq_ignore_ascii_case("custom") {
        custom_preset()
    } else {
        find_preset(name).ok_or_else(|| CliError::Usage(format!("unknown preset `{name}` (try `afcs list-presets`)")))?
    };
    Ok(match config {
        Some(c) => c.apply(preset)?,
        None => preset,
    })
}

pub fn list_presets() -> String {
    let mut out = String::new();
    for p in preset_catalog() {
        let sweep = match p.sweep.variable {
            SweepVariable::None => "single point".to_string(),
            v => format!(
                "{} = {}",
                v.label(),
                p.sweep.values.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(", ")
            ),
        };
        let _ = writeln!(out, "{:<10} {:<12} {:<40} {}", p.name, p.mode.label(), sweep, p.description);
    }
    let _ = writeln!(out, "{:<10} {:<12} {:<40} Any parameter set", "custom", "optimal", "from --config");
    out
}

/// Design summary of every point of `preset`, plus a warning for each point
/// that cannot meet its cycle deadline.
pub fn design(preset: &ExperimentPreset) -> Result<(String, Vec<String>), CliError> {
    let mut out = String::new();
    let mut warnings = Vec::new();
    for pt in preset.points()? {
        let (sheet, warn) = design_sheet(preset, &pt)?;
        out.push_str(&sheet);
        out.push('\n');
        warnings.extend(warn);
    }
    Ok((out, warnings))
}

fn design_sheet(preset: &ExperimentPreset, pt: &SweepPoint) -> Result<(String, Option<String>), CliError> {
    let p = &pt.params;
    let dp = &pt.derived;
    let t = dp.threshold;
    let mut s = String::new();
    match preset.sweep.variable {
        SweepVariable::None | SweepVariable::KForce => {
            let _ = writeln!(s, "== {}", preset.name);
        }
        v => {
            let _ = writeln!(s, "== {} ({} = {})", preset.name, v.label(), pt.value);
        }
    }
    let line = |s: &mut String, k: &str, v: String| {
        let _ = writeln!(s, "  {k:<30}{v}");
    };
    let opt = |v: Option<usize>| v.map_or("none".to_string(), |x| x.to_string());
    line(&mut s, "saturation factor alpha", format!("{:.6}", dp.alpha));
    line(&mut s, "overmodulation prob mu", format!("{:.6e}", p.mu));
    line(&mut s, "received amplitude A", format!("{:.6e} V", dp.a));
    line(&mut s, "signal power W", format!("{:.6e} W", dp.w_sign));
    line(&mut s, "channel noise sigma_xi^2", format!("{:.6e} W", dp.sigma_xi_sq));
    line(&mut s, "per-cycle SNR Q^2", format!("{:.6}", dp.q_sq));
    line(&mut s, "capacity C", format!("{:.6} bit/s", dp.capacity));
    line(&mut s, "cycles per sample n", p.n_cycles.to_string());
    line(&mut s, "threshold n* (assessed)", format!("{:.4}", t.analytic));
    line(&mut s, "threshold n* (crossing)", opt(t.crossing));
    line(&mut s, "threshold n* (knee)", opt(t.knee));

    let horizon = t.crossing.unwrap_or(p.n_cycles).clamp(1, 200);
    let curve = theory::mse_curve(p, dp, horizon);
    let _ = writeln!(s, "  depth schedule:");
    let _ = writeln!(s, "    {:>4}  {:>22}  {:>22}  {:>22}", "k", "P_(k-1)", "M_k", "window 1/M_k");
    for k in 1..=horizon {
        let c = compute_controls(p.x0, curve.at(k - 1), p, dp)?;
        let _ = writeln!(s, "    {k:>4}  {:>22.15e}  {:>22.15e}  {:>22.15e}", curve.at(k - 1), c.depth, 1.0 / c.depth);
    }

    match theory::output_snr_identities(p, dp) {
        Ok(snr) => line(&mut s, "output variance sigma_out^2", format!("{:.6e}", snr.sigma_out_sq)),
        Err(_) => line(&mut s, "output variance sigma_out^2", "n/a (sigma_v^2 = 0)".into()),
    }
    let e_bit = theory::energy_per_bit(p.n_cycles, p, dp)?;
    line(&mut s, "energy per bit E_bit", format!("{e_bit:.6e} J"));
    line(&mut s, "E_bit / N", format!("{:.6}", e_bit / (dp.sigma_xi_sq / p.f0)));
    let deadline = p.deadline_check();
    let warn = if deadline.feasible {
        line(&mut s, "max distance r_max", format!("{:.6e} m (r = {} m fits)", deadline.r_max, p.r));
        None
    } else {
        line(&mut s, "max distance r_max", format!("{:.6e} m INFEASIBLE", deadline.r_max));
        Some(format!(
            "{}: cycle deadline cannot be met (r = {} m, r_max = {:.6e} m, delta_t_proc = {} s)",
            preset.name, p.r, deadline.r_max, p.delta_t_proc
        ))
    };
    Ok((s, warn))
}

fn sweep_column(preset: &ExperimentPreset) -> &'static str {
    match preset.sweep.variable {
        SweepVariable::None => "sigma_xi_sq",
        v => v.label(),
    }
}

fn sweep_value(preset: &ExperimentPreset, pt: &SweepPoint) -> f64 {
    match preset.sweep.variable {
        SweepVariable::None => pt.derived.sigma_xi_sq,
        _ => pt.value,
    }
}

struct Artifacts {
    theory: Table,
    empirical: Table,
    chart: Option<Chart>,
}

fn mse_artifacts(preset: &ExperimentPreset, batches: &[(SweepPoint, BatchResult)]) -> Artifacts {
    let col = sweep_column(preset);
    let mut theory_t = Table::new(&[col, "k", "P_theory", "regime"]);
    let mut emp = Table::new(&[col, "k", "P_theory", "P_empirical", "P_stderr"]);
    let mut chart = Chart::new(format!("{}: MSE per cycle", preset.name), "cycle k", "MSE", true);
    for (i, (pt, b)) in batches.iter().enumerate() {
        let v = sweep_value(preset, pt);
        let curve = theory::mse_curve(&pt.params, &pt.derived, pt.params.n_cycles);
        for k in 1..=b.cycles() {
            let regime = match preset.mode {
                Mode::FixedDepth => "fixed-depth",
                _ => curve.regimes[k - 1].label(),
            };
            theory_t.push(row![v, k, b.p_theory[k - 1], regime]);
            emp.push(row![v, k, b.p_theory[k - 1], b.p_hat[k - 1], b.p_hat_stderr[k - 1]]);
        }
        let ks = 1..=b.cycles();
        chart.series.push(Series {
            label: format!("{col}={v} theory"),
            points: ks.clone().map(|k| (k as f64, b.p_theory[k - 1])).collect(),
            stroke: Stroke::Solid,
            colour: i,
        });
        chart.series.push(Series {
            label: format!("{col}={v} empirical"),
            points: ks.map(|k| (k as f64, b.p_hat[k - 1])).collect(),
            stroke: Stroke::Dashed,
            colour: i,
        });
        if preset.mode != Mode::FixedDepth {
            if let Some(ns) = pt.derived.n_star().filter(|&n| n <= b.cycles()) {
                chart.markers.push((ns as f64, b.p_theory[ns - 1], i));
            }
        }
    }
    Artifacts {
        theory: theory_t,
        empirical: emp,
        chart: Some(chart),
    }
}

fn rate_artifacts(preset: &ExperimentPreset, batches: &[(SweepPoint, BatchResult)]) -> Artifacts {
    let col = sweep_column(preset);
    let mut theory_t = Table::new(&[
        col,
        "n",
        "P_theory",
        "rate",
        "rate_over_f0",
        "rate_piecewise",
        "capacity",
        "n_star_assessed",
        "regime",
    ]);
    let mut emp = Table::new(&[col, "n", "rate_theory", "rate_empirical", "rate_empirical_over_f0", "P_empirical", "P_stderr"]);
    let mut chart = Chart::new(format!("{}: output bit-rate", preset.name), "cycles per sample n", "R_n / F0", false);
    for (i, (pt, b)) in batches.iter().enumerate() {
        let p = &pt.params;
        let dp = &pt.derived;
        let v = sweep_value(preset, pt);
        let n_star = dp.threshold.analytic;
        let curve = theory::mse_curve(p, dp, p.n_cycles);
        let mut theory_pts = Vec::new();
        for n in 1..=b.cycles() {
            let pn = b.p_theory[n - 1];
            let rate = theory::rate_from_mse(p.f0, n, p.sigma0_sq, pn);
            let piecewise = if n_star.is_finite() && n as f64 > n_star {
                theory::rate_post_threshold(p.f0, n, n_star, p.sigma0_sq / p.sigma_v_sq)
            } else {
                dp.capacity
            };
            let regime = match preset.mode {
                Mode::FixedDepth => "fixed-depth",
                _ => curve.regimes[n - 1].label(),
            };
            theory_t.push(row![v, n, pn, rate, rate / p.f0, piecewise, dp.capacity, n_star, regime]);
            emp.push(row![v, n, rate, b.rate_hat[n - 1], b.rate_hat[n - 1] / p.f0, b.p_hat[n - 1], b.p_hat_stderr[n - 1]]);
            theory_pts.push((n as f64, rate / p.f0));
        }
        chart.series.push(Series {
            label: format!("{col}={v} theory"),
            points: theory_pts,
            stroke: Stroke::Solid,
            colour: i,
        });
        chart.series.push(Series {
            label: format!("{col}={v} empirical"),
            points: (1..=b.cycles()).map(|n| (n as f64, b.rate_hat[n - 1] / p.f0)).collect(),
            stroke: Stroke::Dashed,
            colour: i,
        });
        if n_star.is_finite() && n_star <= b.cycles() as f64 {
            chart.markers.push((n_star, dp.capacity / p.f0, i));
        }
    }
    Artifacts {
        theory: theory_t,
        empirical: emp,
        chart: Some(chart),
    }
}

fn efficiency_artifacts(preset: &ExperimentPreset, batches: &[(SweepPoint, BatchResult)]) -> Artifacts {
    let mut theory_t = Table::new(&["n_star", "q_sq", "spectral_eff", "energy_ratio", "boundary"]);
    let mut emp = Table::new(&["n_star", "spectral_eff", "energy_ratio", "energy_ratio_stderr", "boundary", "margin_stderr"]);
    let mut chart = Chart::new(
        format!("{}: energy per bit against spectral efficiency", preset.name),
        "R / F0 (bit/s/Hz)",
        "E_bit / N",
        true,
    );
    let mut th = Vec::new();
    let mut em = Vec::new();
    for (pt, b) in batches {
        let e = efficiency_point(pt, b);
        theory_t.push(row![
            e.n_star,
            pt.derived.q_sq,
            e.spectral_eff_theory,
            e.energy_ratio_theory,
            theory::shannon_boundary(e.spectral_eff_theory)
        ]);
        emp.push(row![e.n_star, e.spectral_eff, e.energy_ratio, e.energy_ratio_stderr, e.boundary, e.margin_in_stderr()]);
        th.push((e.spectral_eff_theory, e.energy_ratio_theory));
        em.push((e.spectral_eff, e.energy_ratio));
    }
    let x_max = th.iter().chain(&em).map(|p| p.0).fold(0.0, f64::max).max(0.5) * 1.1;
    chart.series.push(Series {
        label: "boundary".into(),
        points: (1..=100).map(|i| x_max * i as f64 / 100.0).map(|x| (x, theory::shannon_boundary(x))).collect(),
        stroke: Stroke::Solid,
        colour: 1,
    });
    chart.series.push(Series {
        label: "threshold mode theory".into(),
        points: th.clone(),
        stroke: Stroke::Solid,
        colour: 0,
    });
    chart.series.push(Series {
        label: "threshold mode empirical".into(),
        points: em,
        stroke: Stroke::Dashed,
        colour: 0,
    });
    chart.markers.extend(th.iter().map(|&(x, y)| (x, y, 0)));
    Artifacts {
        theory: theory_t,
        empirical: emp,
        chart: Some(chart),
    }
}

fn gain_artifacts(preset: &ExperimentPreset, batches: &[(SweepPoint, BatchResult)]) -> Result<Artifacts, CliError> {
    let rows = gain_rows(preset)?;
    let mut theory_t = Table::new(&["n_star", "rho_formula", "rho_oracle", "q_cs_sq"]);
    let mut emp = Table::new(&["n_star", "rate_empirical", "rate_baseline", "rho_empirical"]);
    let mut chart = Chart::new(format!("{}: bit-rate gain", preset.name), "threshold cycles n*", "gain", false);
    for r in &rows {
        theory_t.push(row![r.n_star, r.rho_formula, r.rho_oracle, r.q_cs_sq]);
    }
    let mut emp_pts = Vec::new();
    for (pt, b) in batches {
        let p = &pt.params;
        let n = p.n_cycles;
        let baseline = theory::rate_from_mse(p.f0, n, p.sigma0_sq, theory::baseline_cs_mse(n, p, &pt.derived)?);
        let r_hat = b.rate_hat[n - 1];
        emp.push(row![n, r_hat, baseline, r_hat / baseline]);
        emp_pts.push((n as f64, r_hat / baseline));
    }
    chart.series.push(Series {
        label: "formula".into(),
        points: rows.iter().map(|r| (r.n_star as f64, r.rho_formula)).collect(),
        stroke: Stroke::Solid,
        colour: 0,
    });
    chart.series.push(Series {
        label: "exact-rate ratio".into(),
        points: rows.iter().map(|r| (r.n_star as f64, r.rho_oracle)).collect(),
        stroke: Stroke::Solid,
        colour: 1,
    });
    chart.series.push(Series {
        label: "empirical".into(),
        points: emp_pts,
        stroke: Stroke::Dashed,
        colour: 1,
    });
    Ok(Artifacts {
        theory: theory_t,
        empirical: emp,
        chart: Some(chart),
    })
}

fn file_stem(preset: &ExperimentPreset, output: Output) -> String {
    if preset.outputs.len() == 1 {
        preset.name.clone()
    } else {
        let kind = match output {
            Output::Mse => "mse",
            Output::Rate => "rate",
            Output::Efficiency => "efficiency",
            Output::BitrateGain => "gain",
            Output::Appendix => "appendix",
        };
        format!("{}_{kind}", preset.name)
    }
}

fn write_artifacts(stem: &str, a: &Artifacts, opts: &RunOptions) -> Result<Vec<PathBuf>, CliError> {
    let mut written = Vec::new();
    if opts.csv {
        for (suffix, t) in [("theory", &a.theory), ("empirical", &a.empirical)] {
            let path = opts.out.join(format!("{stem}_{suffix}.csv"));
            t.write(&path)?;
            written.push(path);
        }
    }
    if opts.svg {
        if let Some(c) = &a.chart {
            let path = opts.out.join(format!("{stem}.svg"));
            std::fs::write(&path, c.render())?;
            written.push(path);
        }
    }
    Ok(written)
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

/// Run every output of `preset`, returning the files written.
pub fn run(preset: &ExperimentPreset, opts: &RunOptions) -> Result<Vec<PathBuf>, CliError> {
    ensure_dir(&opts.out)?;
    let mut written = Vec::new();
    let needs_batches = preset.outputs.iter().any(|o| *o != Output::Appendix);
    let batches = if needs_batches {
        run_preset(preset, opts.samples.unwrap_or(afcs::simulation::DEFAULT_SAMPLES), opts.seed)?
    } else {
        Vec::new()
    };
    for &output in &preset.outputs {
        let stem = file_stem(preset, output);
        let artifacts = match output {
            Output::Mse => mse_artifacts(preset, &batches),
            Output::Rate => rate_artifacts(preset, &batches),
            Output::Efficiency => efficiency_artifacts(preset, &batches),
            Output::BitrateGain => gain_artifacts(preset, &batches)?,
            Output::Appendix => {
                written.extend(appendix(preset, opts, &stem)?);
                continue;
            }
        };
        written.extend(write_artifacts(&stem, &artifacts, opts)?);
    }
    Ok(written)
}

/// Forced-corruption cases for `preset`: the standard trio, or one case per
/// `k_force` value when the sweep was overridden.
fn corruption_cases(preset: &ExperimentPreset) -> Result<Vec<AppendixCase>, CliError> {
    let standard = appendix_cases(&preset.base)?;
    let defaults: Vec<f64> = standard
        .iter()
        .filter(|c| c.params.mu == preset.base.mu)
        .map(|c| c.k_force as f64)
        .collect();
    if preset.sweep.variable != SweepVariable::KForce || preset.sweep.values == defaults {
        return Ok(standard);
    }
    let dp = afcs::derive_params(&preset.base)?;
    let n_star = dp
        .n_star()
        .ok_or_else(|| CliError::Numerical(afcs::Error::Domain("forced-corruption cases need a finite threshold".into())))?;
    preset
        .sweep
        .values
        .iter()
        .map(|&k| {
            if !(k >= 1.0 && k.fract() == 0.0) {
                return Err(CliError::Usage(format!("k_force must be a positive integer, got {k}")));
            }
            let k_force = k as usize;
            let mut params = preset.base.clone();
            params.n_cycles = params.n_cycles.max(k_force + 1);
            Ok(AppendixCase {
                k_force,
                regime: if k_force <= n_star {
                    Regime::PreThreshold
                } else {
                    Regime::PostThreshold
                },
                params,
            })
        })
        .collect()
}

pub fn appendix(preset: &ExperimentPreset, opts: &RunOptions, stem: &str) -> Result<Vec<PathBuf>, CliError> {
    ensure_dir(&opts.out)?;
    let trials = opts.samples.unwrap_or(APPENDIX_TRIALS);
    let mut table = Table::new(&[
        "k_force",
        "regime",
        "alpha",
        "n_star",
        "p_restore_theory",
        "p_restore_empirical",
        "abnormal_rate_naive",
        "abnormal_rate_reject",
        "mean_sq_error_naive",
        "receiver_mse",
        "trials",
    ]);
    for case in corruption_cases(preset)? {
        let dp = afcs::derive_params(&case.params)?;
        let n_star = dp.n_star().unwrap_or(usize::MAX);
        let theory_p = match case.regime {
            Regime::PreThreshold => recovery_probability_prethreshold(dp.alpha, dp.q_sq, 0.0)?.asymptotic,
            Regime::PostThreshold => recovery_probability_postthreshold(dp.alpha, case.k_force.saturating_sub(n_star), 0.0)?,
        };
        let pair = forced_corruption_pair(&case.params, &dp, case.k_force, trials, opts.seed)?;
        table.push(row![
            case.k_force,
            case.regime.label(),
            dp.alpha,
            n_star,
            theory_p,
            pair.naive.restoration_frequency(),
            pair.naive.abnormal_rate(),
            pair.rejection.abnormal_rate(),
            pair.naive.mean_final_sq_error(),
            pair.naive.receiver_mse,
            trials,
        ]);
    }
    let mut written = Vec::new();
    if opts.csv {
        let path = opts.out.join(format!("{stem}.csv"));
        table.write(&path)?;
        written.push(path);
    }
    Ok(written)
}
