//! Flat `key = value` experiment configuration: `#` comments, dotted keys
//! for constant overrides, unknown keys rejected with line numbers.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use thiserror::Error;

use crate::units::codata;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { key: String, line: usize },
    #[error("line {line}: malformed line (expected `key = value`)")]
    Malformed { line: usize },
    #[error("line {line}: invalid value for `{key}`: {msg}")]
    BadValue { key: String, line: usize, msg: String },
    #[error("missing required key `{0}`")]
    MissingKey(&'static str),
    #[error("`{key}` out of range: {msg}")]
    OutOfRange { key: String, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum ExperimentName {
    KernelsDump,
    FreeParticle,
    HarmonicDamping,
    ClassicalRunaway,
    VemCancel,
    CoherenceLength,
    FalseDecoherence,
    CollisionalContrast,
}

impl ExperimentName {
    pub const ALL: [ExperimentName; 8] = [
        ExperimentName::KernelsDump,
        ExperimentName::FreeParticle,
        ExperimentName::HarmonicDamping,
        ExperimentName::ClassicalRunaway,
        ExperimentName::VemCancel,
        ExperimentName::CoherenceLength,
        ExperimentName::FalseDecoherence,
        ExperimentName::CollisionalContrast,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentName::KernelsDump => "kernels-dump",
            ExperimentName::FreeParticle => "free-particle",
            ExperimentName::HarmonicDamping => "harmonic-damping",
            ExperimentName::ClassicalRunaway => "classical-runaway",
            ExperimentName::VemCancel => "vem-cancel",
            ExperimentName::CoherenceLength => "coherence-length",
            ExperimentName::FalseDecoherence => "false-decoherence",
            ExperimentName::CollisionalContrast => "collisional-contrast",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|e| e.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum UnitSystemChoice {
    Natural,
    Si,
}

/// Constant table; in natural units only `alpha` matters, in SI the CODATA
/// values may be overridden via `constants.*` keys.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct Constants {
    pub hbar: f64,
    pub c: f64,
    pub eps0: f64,
    pub e_charge: f64,
    pub alpha: f64,
}

impl Default for Constants {
    fn default() -> Self {
        Self {
            hbar: codata::HBAR,
            c: codata::C,
            eps0: codata::EPS0,
            e_charge: codata::E_CHARGE,
            alpha: 0.0072973525693,
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentName,
    pub unit_system: UnitSystemChoice,
    pub constants: Constants,
    pub mass: f64,
    pub omega_max: f64,
    pub omega0: f64,
    pub dim: usize,
    pub n_points: usize,
    pub x_min: f64,
    pub x_max: f64,
    /// 0 means "derive from the stability rule at dispatch".
    pub dt: f64,
    /// 0 means "experiment default".
    pub t_end: f64,
    pub x0: f64,
    pub p0: f64,
    pub sigma: f64,
    pub ramp_duration: f64,
    pub lambda: f64,
    pub delta_x: f64,
    pub tmin: f64,
    pub tmax: f64,
    pub points: usize,
    pub output_dir: String,
}

impl ExperimentConfig {
    pub fn defaults(experiment: ExperimentName) -> Self {
        Self {
            experiment,
            unit_system: UnitSystemChoice::Natural,
            constants: Constants::default(),
            mass: 1.0,
            omega_max: 1.0,
            omega0: 1.0,
            dim: 32,
            n_points: 64,
            x_min: -6.0,
            x_max: 6.0,
            dt: 0.0,
            t_end: 0.0,
            x0: 0.0,
            p0: 0.0,
            sigma: 1.0,
            ramp_duration: 0.0,
            lambda: 1.0,
            delta_x: 1.0,
            tmin: 0.0,
            tmax: 0.0,
            points: 200,
            output_dir: String::new(),
        }
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut kv: BTreeMap<String, (String, usize)> = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let stripped = match raw.find('#') {
                Some(p) => &raw[..p],
                None => raw,
            };
            let stripped = stripped.trim();
            if stripped.is_empty() {
                continue;
            }
            let (k, v) = stripped.split_once('=').ok_or(ConfigError::Malformed { line })?;
            let key = k.trim().to_string();
            let val = v.trim().trim_matches('"').to_string();
            if key.is_empty() || val.is_empty() {
                return Err(ConfigError::Malformed { line });
            }
            kv.insert(key, (val, line));
        }
        let (exp_val, exp_line) = kv
            .remove("experiment")
            .ok_or(ConfigError::MissingKey("experiment"))?;
        let experiment = ExperimentName::parse(&exp_val).ok_or_else(|| ConfigError::BadValue {
            key: "experiment".into(),
            line: exp_line,
            msg: format!("unknown experiment `{exp_val}`"),
        })?;
        let mut cfg = Self::defaults(experiment);

        let parse_f64 = |key: &str, val: &str, line: usize| -> Result<f64, ConfigError> {
            val.parse::<f64>().map_err(|e| ConfigError::BadValue {
                key: key.into(),
                line,
                msg: e.to_string(),
            })
        };
        let parse_usize = |key: &str, val: &str, line: usize| -> Result<usize, ConfigError> {
            val.parse::<usize>().map_err(|e| ConfigError::BadValue {
                key: key.into(),
                line,
                msg: e.to_string(),
            })
        };
        for (key, (val, line)) in kv {
            match key.as_str() {
                "unit_system" => {
                    cfg.unit_system = match val.as_str() {
                        "natural" => UnitSystemChoice::Natural,
                        "si" => UnitSystemChoice::Si,
                        other => {
                            return Err(ConfigError::BadValue {
                                key,
                                line,
                                msg: format!("expected `natural` or `si`, got `{other}`"),
                            })
                        }
                    }
                }
                "constants.hbar" => cfg.constants.hbar = parse_f64(&key, &val, line)?,
                "constants.c" => cfg.constants.c = parse_f64(&key, &val, line)?,
                "constants.eps0" => cfg.constants.eps0 = parse_f64(&key, &val, line)?,
                "constants.e_charge" => cfg.constants.e_charge = parse_f64(&key, &val, line)?,
                "constants.alpha" => cfg.constants.alpha = parse_f64(&key, &val, line)?,
                "mass" => cfg.mass = parse_f64(&key, &val, line)?,
                "omega_max" => cfg.omega_max = parse_f64(&key, &val, line)?,
                "omega0" => cfg.omega0 = parse_f64(&key, &val, line)?,
                "dim" => cfg.dim = parse_usize(&key, &val, line)?,
                "n_points" => cfg.n_points = parse_usize(&key, &val, line)?,
                "x_min" => cfg.x_min = parse_f64(&key, &val, line)?,
                "x_max" => cfg.x_max = parse_f64(&key, &val, line)?,
                "dt" => cfg.dt = parse_f64(&key, &val, line)?,
                "t_end" => cfg.t_end = parse_f64(&key, &val, line)?,
                "x0" => cfg.x0 = parse_f64(&key, &val, line)?,
                "p0" => cfg.p0 = parse_f64(&key, &val, line)?,
                "sigma" => cfg.sigma = parse_f64(&key, &val, line)?,
                "ramp_duration" => cfg.ramp_duration = parse_f64(&key, &val, line)?,
                "lambda" => cfg.lambda = parse_f64(&key, &val, line)?,
                "delta_x" => cfg.delta_x = parse_f64(&key, &val, line)?,
                "tmin" => cfg.tmin = parse_f64(&key, &val, line)?,
                "tmax" => cfg.tmax = parse_f64(&key, &val, line)?,
                "points" => cfg.points = parse_usize(&key, &val, line)?,
                "output_dir" => cfg.output_dir = val,
                _ => return Err(ConfigError::UnknownKey { key, line }),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive: [(&str, f64); 5] = [
            ("omega_max", self.omega_max),
            ("omega0", self.omega0),
            ("mass", self.mass),
            ("sigma", self.sigma),
            ("constants.alpha", self.constants.alpha),
        ];
        for (key, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(ConfigError::OutOfRange {
                    key: key.into(),
                    msg: format!("must be positive and finite, got {v}"),
                });
            }
        }
        for (key, v) in [("dt", self.dt), ("t_end", self.t_end), ("ramp_duration", self.ramp_duration)]
        {
            if v < 0.0 || !v.is_finite() {
                return Err(ConfigError::OutOfRange {
                    key: key.into(),
                    msg: format!("must be nonnegative, got {v}"),
                });
            }
        }
        if self.x_min >= self.x_max {
            return Err(ConfigError::OutOfRange {
                key: "x_min".into(),
                msg: format!("x_min {} must be below x_max {}", self.x_min, self.x_max),
            });
        }
        if self.points < 2 {
            return Err(ConfigError::OutOfRange {
                key: "points".into(),
                msg: format!("need at least 2, got {}", self.points),
            });
        }
        Ok(())
    }

    /// Canonical text form; parsing it back reproduces the config exactly.
    pub fn emit(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "experiment = \"{}\"", self.experiment.as_str());
        let _ = writeln!(
            s,
            "unit_system = \"{}\"",
            match self.unit_system {
                UnitSystemChoice::Natural => "natural",
                UnitSystemChoice::Si => "si",
            }
        );
        let d = Constants::default();
        let mut num = |k: &str, v: f64, dflt: f64| {
            if v != dflt {
                let _ = writeln!(s, "{k} = {v:.17e}");
            }
        };
        num("constants.hbar", self.constants.hbar, d.hbar);
        num("constants.c", self.constants.c, d.c);
        num("constants.eps0", self.constants.eps0, d.eps0);
        num("constants.e_charge", self.constants.e_charge, d.e_charge);
        num("constants.alpha", self.constants.alpha, d.alpha);
        let base = Self::defaults(self.experiment);
        num("mass", self.mass, base.mass);
        num("omega_max", self.omega_max, base.omega_max);
        num("omega0", self.omega0, base.omega0);
        num("x_min", self.x_min, base.x_min);
        num("x_max", self.x_max, base.x_max);
        num("dt", self.dt, base.dt);
        num("t_end", self.t_end, base.t_end);
        num("x0", self.x0, base.x0);
        num("p0", self.p0, base.p0);
        num("sigma", self.sigma, base.sigma);
        num("ramp_duration", self.ramp_duration, base.ramp_duration);
        num("lambda", self.lambda, base.lambda);
        num("delta_x", self.delta_x, base.delta_x);
        num("tmin", self.tmin, base.tmin);
        num("tmax", self.tmax, base.tmax);
        if self.dim != base.dim {
            let _ = writeln!(s, "dim = {}", self.dim);
        }
        if self.n_points != base.n_points {
            let _ = writeln!(s, "n_points = {}", self.n_points);
        }
        if self.points != base.points {
            let _ = writeln!(s, "points = {}", self.points);
        }
        if !self.output_dir.is_empty() {
            let _ = writeln!(s, "output_dir = \"{}\"", self.output_dir);
        }
        s
    }
}
