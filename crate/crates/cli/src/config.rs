//! Line-oriented `key = value` configuration files.
//!
//! ```text
//! # threshold-mode sweep with a slower source
//! a0     = 5 mV
//! n_xi   = 1e-10 W/Hz
//! f      = 2.5 kHz
//! n_star = 2, 3, 4
//! alpha  = 4
//! ```
//!
//! Keys are the `SystemParams` field names plus `alpha` (sets `mu`), `mode`,
//! `name` and the sweep keys `n_star` and `k_force`. A comma list turns a key
//! into the sweep variable; at most one key may be a list.

use std::fmt;
use std::path::Path;

use afcs::gaussian::two_sided_tail;
use afcs::simulation::{ExperimentPreset, Mode, Sweep, SweepVariable};

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub file: Option<String>,
    /// 1-based line, 0 when the error is not tied to a line.
    pub line: usize,
    pub message: String,
}

impl ConfigError {
    pub fn new(message: impl Into<String>) -> Self {
        Self {
            file: None,
            line: 0,
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.file, self.line) {
            (Some(file), 0) => write!(f, "{file}: {}", self.message),
            (Some(file), line) => write!(f, "{file}:{line}: {}", self.message),
            (None, 0) => write!(f, "{}", self.message),
            (None, line) => write!(f, "line {line}: {}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

fn err(line: usize, message: impl Into<String>) -> ConfigError {
    ConfigError {
        file: None,
        line,
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Dimension {
    Scalar,
    Voltage,
    Power,
    NoiseDensity,
    Frequency,
    Time,
    Length,
}

impl Dimension {
    fn units(self) -> &'static [(&'static str, f64)] {
        match self {
            Dimension::Scalar => &[],
            Dimension::Voltage => &[("uV", 1e-6), ("mV", 1e-3), ("V", 1.0)],
            Dimension::Power => &[("uW", 1e-6), ("mW", 1e-3), ("W", 1.0)],
            Dimension::NoiseDensity => &[("W/Hz", 1.0), ("mW/Hz", 1e-3)],
            Dimension::Frequency => &[("Hz", 1.0), ("kHz", 1e3), ("MHz", 1e6), ("GHz", 1e9)],
            Dimension::Time => &[("ns", 1e-9), ("us", 1e-6), ("ms", 1e-3), ("s", 1.0)],
            Dimension::Length => &[("mm", 1e-3), ("m", 1.0), ("km", 1e3)],
        }
    }
}

/// Numeric keys and their physical dimension.
const NUMERIC_KEYS: &[(&str, Dimension)] = &[
    ("x0", Dimension::Voltage),
    ("sigma0_sq", Dimension::Power),
    ("sigma_v_sq", Dimension::Power),
    ("sigma_xi_sq", Dimension::Power),
    ("a0", Dimension::Voltage),
    ("gamma", Dimension::Scalar),
    ("r", Dimension::Length),
    ("n_xi", Dimension::NoiseDensity),
    ("f0", Dimension::Frequency),
    ("f", Dimension::Frequency),
    ("mu", Dimension::Scalar),
    ("alpha", Dimension::Scalar),
    ("n_cycles", Dimension::Scalar),
    ("delta_t_proc", Dimension::Time),
    ("n_star", Dimension::Scalar),
    ("k_force", Dimension::Scalar),
];

const LIST_KEYS: &[&str] = &["sigma_xi_sq", "n_star", "k_force"];

/// Parse one number with an optional unit suffix into SI.
fn parse_quantity(text: &str, dim: Dimension) -> Result<f64, String> {
    let text = text.trim();
    if let Ok(v) = text.parse::<f64>() {
        return Ok(v);
    }
    let mut units: Vec<&(&str, f64)> = dim.units().iter().collect();
    units.sort_by_key(|(u, _)| std::cmp::Reverse(u.len()));
    for (unit, scale) in units {
        if let Some(num) = text.strip_suffix(unit) {
            let num = num.trim_end();
            if let Ok(v) = num.parse::<f64>() {
                return Ok(v * scale);
            }
        }
    }
    let allowed: Vec<&str> = dim.units().iter().map(|(u, _)| *u).collect();
    if allowed.is_empty() {
        Err(format!("`{text}` is not a number"))
    } else {
        Err(format!("`{text}` is not a number with a unit in {{{}}}", allowed.join(", ")))
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Value {
    Numbers(Vec<f64>),
    Text(String),
}

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    line: usize,
    key: String,
    value: Value,
}

/// Parsed configuration, applied on top of a base preset.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Config {
    file: Option<String>,
    entries: Vec<Entry>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries: Vec<Entry> = Vec::new();
        let mut list_key: Option<(String, usize)> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| err(line, format!("expected `key = value`, found `{content}`")))?;
            let key = key.trim();
            let value = value.trim();
            if value.is_empty() {
                return Err(err(line, format!("missing value for `{key}`")));
            }
            if let Some(prev) = entries.iter().find(|e| e.key == key) {
                return Err(err(line, format!("`{key}` already set on line {}", prev.line)));
            }
            let value = match key {
                "mode" | "name" => Value::Text(value.to_string()),
                _ => {
                    let dim = NUMERIC_KEYS
                        .iter()
                        .find(|(k, _)| *k == key)
                        .map(|(_, d)| *d)
                        .ok_or_else(|| err(line, format!("unknown key `{key}`")))?;
                    let nums = value
                        .split(',')
                        .map(|t| parse_quantity(t, dim))
                        .collect::<Result<Vec<f64>, String>>()
                        .map_err(|m| err(line, format!("{key}: {m}")))?;
                    if let Some(bad) = nums.iter().find(|v| !v.is_finite()) {
                        return Err(err(line, format!("{key}: value {bad} is not finite")));
                    }
                    if nums.len() > 1 {
                        if !LIST_KEYS.contains(&key) {
                            return Err(err(line, format!("`{key}` cannot be swept; lists are accepted for {}", LIST_KEYS.join(", "))));
                        }
                        if let Some((other, l)) = &list_key {
                            return Err(err(line, format!("only one sweep per file (`{other}` on line {l} is already a list)")));
                        }
                        list_key = Some((key.to_string(), line));
                    }
                    Value::Numbers(nums)
                }
            };
            entries.push(Entry {
                line,
                key: key.to_string(),
                value,
            });
        }
        Ok(Self { file: None, entries })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let file = Some(path.display().to_string());
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            file: file.clone(),
            ..err(0, format!("cannot read: {e}"))
        })?;
        let mut cfg = Self::parse(&text).map_err(|e| ConfigError { file: file.clone(), ..e })?;
        cfg.file = file;
        Ok(cfg)
    }

    /// Override `preset` with the entries of this file.
    pub fn apply(&self, preset: ExperimentPreset) -> Result<ExperimentPreset, ConfigError> {
        self.apply_entries(preset).map_err(|e| ConfigError { file: self.file.clone(), ..e })
    }

    fn apply_entries(&self, mut preset: ExperimentPreset) -> Result<ExperimentPreset, ConfigError> {
        for e in &self.entries {
            let line = e.line;
            match (&e.key[..], &e.value) {
                ("name", Value::Text(t)) => preset.name = t.clone(),
                ("mode", Value::Text(t)) => preset.mode = t.parse::<Mode>().map_err(|m| err(line, m))?,
                (key, Value::Numbers(v)) => {
                    let single = v[0];
                    let p = &mut preset.base;
                    let as_count = |field: &str| -> Result<usize, ConfigError> {
                        if single >= 1.0 && single.fract() == 0.0 {
                            Ok(single as usize)
                        } else {
                            Err(err(line, format!("{field} must be a positive integer, got {single}")))
                        }
                    };
                    match key {
                        "x0" => p.x0 = single,
                        "sigma0_sq" => p.sigma0_sq = single,
                        "sigma_v_sq" => p.sigma_v_sq = single,
                        "a0" => p.a0 = single,
                        "gamma" => p.gamma = single,
                        "r" => p.r = single,
                        "n_xi" => p.n_xi = single,
                        "f0" => p.f0 = single,
                        "f" => p.f = single,
                        "mu" => p.mu = single,
                        "alpha" => {
                            if !(single > 0.0) {
                                return Err(err(line, format!("alpha must be > 0, got {single}")));
                            }
                            p.mu = two_sided_tail(single);
                        }
                        "n_cycles" => p.n_cycles = as_count("n_cycles")?,
                        "delta_t_proc" => p.delta_t_proc = single,
                        "sigma_xi_sq" => {
                            if v.len() > 1 {
                                preset.sweep = Sweep {
                                    variable: SweepVariable::SigmaXiSq,
                                    values: v.clone(),
                                };
                            } else {
                                p.sigma_xi_sq = Some(single);
                                if preset.sweep.variable == SweepVariable::SigmaXiSq {
                                    preset.sweep = Sweep::none();
                                }
                            }
                        }
                        "n_star" => {
                            preset.sweep = Sweep {
                                variable: SweepVariable::NStar,
                                values: v.clone(),
                            }
                        }
                        "k_force" => {
                            preset.sweep = Sweep {
                                variable: SweepVariable::KForce,
                                values: v.clone(),
                            }
                        }
                        other => return Err(err(line, format!("unknown key `{other}`"))),
                    }
                }
                (key, _) => return Err(err(line, format!("`{key}` expects a number"))),
            }
        }
        preset.base.validate().map_err(|e| {
            let field = match &e {
                afcs::Error::InvalidParam { field, .. } => Some(*field),
                _ => None,
            };
            let line = field
                .and_then(|f| self.entries.iter().find(|en| en.key == f || (f == "mu" && en.key == "alpha")))
                .map_or(0, |en| en.line);
            err(line, e.to_string())
        })?;
        Ok(preset)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use afcs::simulation::find_preset;

    #[test]
    fn quantities_with_units() {
        assert_eq!(parse_quantity("5 mV", Dimension::Voltage).unwrap(), 5e-3);
        assert_eq!(parse_quantity("5mV", Dimension::Voltage).unwrap(), 5e-3);
        assert_eq!(parse_quantity("2.5 kHz", Dimension::Frequency).unwrap(), 2500.0);
        assert_eq!(parse_quantity("62.5 mW", Dimension::Power).unwrap(), 62.5e-3);
        assert_eq!(parse_quantity("1e-10 W/Hz", Dimension::NoiseDensity).unwrap(), 1e-10);
        assert_eq!(parse_quantity("1e-3", Dimension::Power).unwrap(), 1e-3);
        assert_eq!(parse_quantity("3 us", Dimension::Time).unwrap(), 3e-6);
        assert!(parse_quantity("5 kHz", Dimension::Voltage).is_err());
        assert!(parse_quantity("abc", Dimension::Scalar).is_err());
    }

    #[test]
    fn parse_and_apply() {
        let cfg = Config::parse("# comment\n a0 = 2 V  # trailing\nalpha = 4\nsigma_xi_sq = 0.1, 0.01\nmode = fixed-depth\n").unwrap();
        let p = cfg.apply(find_preset("fig4b").unwrap()).unwrap();
        assert_eq!(p.base.a0, 2.0);
        assert_eq!(p.mode, Mode::FixedDepth);
        assert_eq!(p.sweep.values, vec![0.1, 0.01]);
        assert!((p.base.mu - two_sided_tail(4.0)).abs() < 1e-20);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = Config::parse("a0 = 1\n\nbogus = 3\n").unwrap_err();
        assert_eq!(e.line, 3);
        let e = Config::parse("a0 = 1\nf = 5 mV\n").unwrap_err();
        assert_eq!(e.line, 2);
        let e = Config::parse("a0 = 1, 2\n").unwrap_err();
        assert_eq!(e.line, 1);
        let e = Config::parse("sigma_xi_sq = 1, 2\nn_star = 1, 2\n").unwrap_err();
        assert_eq!(e.line, 2);
        let e = Config::parse("a0 1\n").unwrap_err();
        assert_eq!(e.line, 1);
        let e = Config::parse("a0 = 1\na0 = 2\n").unwrap_err();
        assert_eq!(e.line, 2);
        let e = Config::parse("mu = 0.5\nsigma0_sq = -1\n").unwrap().apply(find_preset("fig4b").unwrap()).unwrap_err();
        assert_eq!(e.line, 2);
        let e = Config::parse("mode = sideways\n").unwrap().apply(find_preset("fig4b").unwrap()).unwrap_err();
        assert_eq!(e.line, 1);
    }
}
