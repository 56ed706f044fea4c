//! Physical constants, unit systems and derived quantities.
//!
//! Internally the simulator works in natural units (hbar = c = eps0 = 1)
//! with times measured in 1/omega_max; SI constants appear only at the I/O
//! boundary. The kernel formulas span roughly sixteen decades in SI and
//! would underflow otherwise.

use thiserror::Error;

/// CODATA 2018 recommended values (SI).
pub mod codata {
    /// Reduced Planck constant (J s).
    pub const HBAR: f64 = 1.054_571_817e-34;
    /// Speed of light in vacuum (m/s).
    pub const C: f64 = 299_792_458.0;
    /// Vacuum permittivity (F/m).
    pub const EPS0: f64 = 8.854_187_8128e-12;
    /// Elementary charge (C).
    pub const E_CHARGE: f64 = 1.602_176_634e-19;
    /// Electron mass (kg).
    pub const ELECTRON_MASS: f64 = 9.109_383_7015e-31;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum UnitSystem {
    Si,
    /// hbar = c = eps0 = 1.
    Natural,
}

#[derive(Debug, Error)]
pub enum UnitsError {
    #[error("constant `{0}` must be strictly positive")]
    NonPositiveConstant(&'static str),
    #[error("natural-unit context requires hbar = c = eps0 = 1 (got {0} = {1})")]
    NotNatural(&'static str, f64),
    #[error("unknown dimension tag `{0}`")]
    UnknownDimension(String),
}

/// Physical constants plus the particle's bare mass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalContext {
    pub hbar: f64,
    pub c: f64,
    pub eps0: f64,
    pub e_charge: f64,
    pub mass_bare: f64,
    pub unit_system: UnitSystem,
}

impl PhysicalContext {
    /// SI context for an electron, CODATA 2018 constants.
    pub fn si_electron() -> Self {
        Self {
            hbar: codata::HBAR,
            c: codata::C,
            eps0: codata::EPS0,
            e_charge: codata::E_CHARGE,
            mass_bare: codata::ELECTRON_MASS,
            unit_system: UnitSystem::Si,
        }
    }

    /// Natural-unit context with a chosen fine-structure constant, so that
    /// e^2 = 4 pi alpha.
    pub fn natural(alpha: f64, mass_bare: f64) -> Self {
        Self {
            hbar: 1.0,
            c: 1.0,
            eps0: 1.0,
            e_charge: (4.0 * std::f64::consts::PI * alpha).sqrt(),
            mass_bare,
            unit_system: UnitSystem::Natural,
        }
    }

    pub fn validate(&self) -> Result<(), UnitsError> {
        for (name, v) in [
            ("hbar", self.hbar),
            ("c", self.c),
            ("eps0", self.eps0),
            ("e_charge", self.e_charge),
            ("mass_bare", self.mass_bare),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(UnitsError::NonPositiveConstant(name));
            }
        }
        if self.unit_system == UnitSystem::Natural {
            for (name, v) in [("hbar", self.hbar), ("c", self.c), ("eps0", self.eps0)] {
                if v != 1.0 {
                    return Err(UnitsError::NotNatural(name, v));
                }
            }
        }
        Ok(())
    }

    /// Fine-structure constant alpha = e^2 / (4 pi eps0 hbar c).
    pub fn fine_structure(&self) -> f64 {
        self.e_charge * self.e_charge
            / (4.0 * std::f64::consts::PI * self.eps0 * self.hbar * self.c)
    }

    /// m_R = m + 4 alpha hbar omega_max / (3 pi c^2).
    pub fn renormalized_mass(&self, cut: &CutoffConfig) -> f64 {
        self.mass_bare + self.mass_shift(cut)
    }

    /// The cutoff-dependent mass shift m_R - m.
    pub fn mass_shift(&self, cut: &CutoffConfig) -> f64 {
        4.0 * self.fine_structure() * self.hbar * cut.omega_max
            / (3.0 * std::f64::consts::PI * self.c * self.c)
    }

    /// Runaway timescale t0 = 2 alpha hbar / (3 m_R c^2), the coefficient of
    /// the third-derivative self-force divided by the renormalized mass.
    pub fn runaway_time(&self, cut: &CutoffConfig) -> f64 {
        2.0 * self.fine_structure() * self.hbar
            / (3.0 * self.renormalized_mass(cut) * self.c * self.c)
    }
}

/// UV cutoff and the derived smoothing scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutoffConfig {
    pub omega_max: f64,
    /// Smoothing time epsilon = 1/omega_max.
    pub epsilon: f64,
    /// k_max = omega_max / c.
    pub k_max: f64,
}

impl CutoffConfig {
    pub fn new(omega_max: f64, ctx: &PhysicalContext) -> Result<Self, UnitsError> {
        if !(omega_max > 0.0) || !omega_max.is_finite() {
            return Err(UnitsError::NonPositiveConstant("omega_max"));
        }
        Ok(Self {
            omega_max,
            epsilon: 1.0 / omega_max,
            k_max: omega_max / ctx.c,
        })
    }
}

/// Dimension tag for nondimensionalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dimension {
    Time,
    Length,
    Energy,
    AngularFrequency,
    Momentum,
    Mass,
    Velocity,
    Dimensionless,
}

impl Dimension {
    pub fn parse(tag: &str) -> Result<Self, UnitsError> {
        Ok(match tag {
            "time" => Self::Time,
            "length" => Self::Length,
            "energy" => Self::Energy,
            "angular_frequency" | "frequency" => Self::AngularFrequency,
            "momentum" => Self::Momentum,
            "mass" => Self::Mass,
            "velocity" => Self::Velocity,
            "dimensionless" => Self::Dimensionless,
            other => return Err(UnitsError::UnknownDimension(other.to_string())),
        })
    }

    /// Factor that multiplies a dimensional quantity to make it dimensionless.
    fn scale(self, ctx: &PhysicalContext, cut: &CutoffConfig) -> f64 {
        match self {
            Self::Time => cut.omega_max,
            Self::Length => cut.k_max,
            Self::Energy => 1.0 / (ctx.hbar * cut.omega_max),
            Self::AngularFrequency => cut.epsilon,
            Self::Momentum => 1.0 / (ctx.hbar * cut.k_max),
            Self::Mass => ctx.c * ctx.c / (ctx.hbar * cut.omega_max),
            Self::Velocity => 1.0 / ctx.c,
            Self::Dimensionless => 1.0,
        }
    }
}

/// Scale times by omega_max, lengths by k_max, energies by 1/(hbar omega_max).
pub fn nondimensionalize(value: f64, dim: Dimension, ctx: &PhysicalContext, cut: &CutoffConfig) -> f64 {
    value * dim.scale(ctx, cut)
}

/// Inverse of [`nondimensionalize`].
pub fn dimensionalize(value: f64, dim: Dimension, ctx: &PhysicalContext, cut: &CutoffConfig) -> f64 {
    value / dim.scale(ctx, cut)
}
