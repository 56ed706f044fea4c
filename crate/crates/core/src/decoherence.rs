//! Coherence length, decoherence factor, and the switched-coupling (false
//! decoherence) noise moments.
//!
//! With a time-dependent coupling f(t) the first noise moment transforms as
//! N1~(t1) = f(t1) [ f(0) N1(t1) + f'(0) N2(t1) + ∫0..t1 N2(tau) f''(t1 - tau) dtau ],
//! and N2~(T) = ∫0..T N1~. Smooth (raised-cosine) ramps use this reduction
//! literally; linear ramps carry distributional f'' handled as f'-jump
//! corrections at the kink times, with the f'(0) convention taken left-sided
//! (the coupling is constant before t = 0).

use thiserror::Error;

use crate::kernels::{KernelError, KernelFamily};
use crate::propagator::{DensityMatrix, PropagatorError};
use crate::quad::{self, QuadError};

#[derive(Debug, Error)]
pub enum DecoherenceError {
    #[error("coherence length needs t > 0 (got {0})")]
    NonPositiveTime(f64),
    #[error("switched moments need T >= 100 eps (T = {t}, eps = {eps})")]
    DurationTooShort { t: f64, eps: f64 },
    #[error("ramp duration {ramp} must fit in total duration {total}")]
    RampTooLong { ramp: f64, total: f64 },
    #[error("custom profile needs at least 4 samples with matching f'' samples")]
    ProfileTooShort,
    #[error("profile value {0} outside [0, 1]")]
    ProfileOutOfRange(f64),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Quadrature(#[from] QuadError),
    #[error(transparent)]
    Propagator(#[from] Box<PropagatorError>),
}

/// Coupling profile f(t) on [0, T]. The ramp kinds go a -> b over
/// [0, ramp], hold b, then b -> c over [T - ramp, T], so the endpoint pair
/// (f(0), f(T)) = (a, c) is free.
#[derive(Debug, Clone)]
pub enum SwitchingProfile {
    Constant { value: f64, total: f64 },
    LinearRamp { a: f64, b: f64, c: f64, ramp: f64, total: f64 },
    /// Same shape with C^1 raised-cosine ramps (f'' bounded).
    RaisedCosineRamp { a: f64, b: f64, c: f64, ramp: f64, total: f64 },
    /// Uniform samples of (f, f'') on [0, total], linearly interpolated.
    Custom { f: Vec<f64>, f_dd: Vec<f64>, total: f64 },
}

impl SwitchingProfile {
    pub fn total(&self) -> f64 {
        match self {
            SwitchingProfile::Constant { total, .. }
            | SwitchingProfile::LinearRamp { total, .. }
            | SwitchingProfile::RaisedCosineRamp { total, .. }
            | SwitchingProfile::Custom { total, .. } => *total,
        }
    }

    pub fn validate(&self) -> Result<(), DecoherenceError> {
        let check = |v: f64| {
            if !(-1e-12..=1.0 + 1e-12).contains(&v) {
                Err(DecoherenceError::ProfileOutOfRange(v))
            } else {
                Ok(())
            }
        };
        match self {
            SwitchingProfile::Constant { value, .. } => check(*value),
            SwitchingProfile::LinearRamp { a, b, c, ramp, total }
            | SwitchingProfile::RaisedCosineRamp { a, b, c, ramp, total } => {
                check(*a)?;
                check(*b)?;
                check(*c)?;
                if 2.0 * ramp > *total {
                    return Err(DecoherenceError::RampTooLong { ramp: *ramp, total: *total });
                }
                Ok(())
            }
            SwitchingProfile::Custom { f, f_dd, .. } => {
                if f.len() < 4 || f_dd.len() != f.len() {
                    return Err(DecoherenceError::ProfileTooShort);
                }
                for &v in f {
                    check(v)?;
                }
                Ok(())
            }
        }
    }

    fn ramp_params(&self) -> Option<(f64, f64, f64, f64, f64)> {
        match self {
            SwitchingProfile::LinearRamp { a, b, c, ramp, total }
            | SwitchingProfile::RaisedCosineRamp { a, b, c, ramp, total } => {
                Some((*a, *b, *c, *ramp, *total))
            }
            _ => None,
        }
    }

    /// Interior times where f, f' or f'' is non-smooth.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self.ramp_params() {
            Some((_, _, _, r, total)) => vec![r, total - r],
            None => Vec::new(),
        }
    }

    pub fn f(&self, t: f64) -> f64 {
        match self {
            SwitchingProfile::Constant { value, .. } => *value,
            SwitchingProfile::LinearRamp { .. } => {
                let (a, b, c, r, total) = self.ramp_params().unwrap();
                if t < r {
                    a + (b - a) * t / r
                } else if t > total - r {
                    c + (b - c) * (total - t) / r
                } else {
                    b
                }
            }
            SwitchingProfile::RaisedCosineRamp { .. } => {
                let (a, b, c, r, total) = self.ramp_params().unwrap();
                let s = |u: f64| 0.5 * (1.0 - (std::f64::consts::PI * u).cos());
                if t < r {
                    a + (b - a) * s(t / r)
                } else if t > total - r {
                    c + (b - c) * s((total - t) / r)
                } else {
                    b
                }
            }
            SwitchingProfile::Custom { f, total, .. } => {
                let n = f.len();
                let u = (t / total * (n - 1) as f64).clamp(0.0, (n - 1) as f64);
                let j = (u.floor() as usize).min(n - 2);
                let w = u - j as f64;
                f[j] * (1.0 - w) + f[j + 1] * w
            }
        }
    }

    pub fn f_dot(&self, t: f64) -> f64 {
        match self {
            SwitchingProfile::Constant { .. } => 0.0,
            SwitchingProfile::LinearRamp { .. } => {
                let (a, b, c, r, total) = self.ramp_params().unwrap();
                if t < r {
                    (b - a) / r
                } else if t > total - r {
                    -(b - c) / r
                } else {
                    0.0
                }
            }
            SwitchingProfile::RaisedCosineRamp { .. } => {
                let (a, b, c, r, total) = self.ramp_params().unwrap();
                let pi = std::f64::consts::PI;
                if t < r {
                    (b - a) * 0.5 * pi / r * (pi * t / r).sin()
                } else if t > total - r {
                    -(b - c) * 0.5 * pi / r * (pi * (total - t) / r).sin()
                } else {
                    0.0
                }
            }
            SwitchingProfile::Custom { f, total, .. } => {
                let n = f.len();
                let dt = total / (n - 1) as f64;
                let j = ((t / dt).floor() as usize).min(n - 2);
                (f[j + 1] - f[j]) / dt
            }
        }
    }

    pub fn f_ddot(&self, t: f64) -> f64 {
        match self {
            SwitchingProfile::Constant { .. } | SwitchingProfile::LinearRamp { .. } => 0.0,
            SwitchingProfile::RaisedCosineRamp { .. } => {
                let (a, b, c, r, total) = self.ramp_params().unwrap();
                let pi = std::f64::consts::PI;
                if t < r {
                    (b - a) * 0.5 * pi * pi / (r * r) * (pi * t / r).cos()
                } else if t > total - r {
                    (b - c) * 0.5 * pi * pi / (r * r) * (pi * (total - t) / r).cos()
                } else {
                    0.0
                }
            }
            SwitchingProfile::Custom { f_dd, total, .. } => {
                let n = f_dd.len();
                let u = (t / total * (n - 1) as f64).clamp(0.0, (n - 1) as f64);
                let j = (u.floor() as usize).min(n - 2);
                let w = u - j as f64;
                f_dd[j] * (1.0 - w) + f_dd[j + 1] * w
            }
        }
    }

    /// Kink times and f' jumps for profiles with distributional f''.
    fn derivative_jumps(&self) -> Vec<(f64, f64)> {
        match self {
            SwitchingProfile::LinearRamp { a, b, c, ramp, total } => {
                let s1 = (b - a) / ramp;
                let s2 = (c - b) / ramp;
                vec![(0.0, s1), (*ramp, -s1), (total - ramp, s2), (*total, -s2)]
            }
            _ => Vec::new(),
        }
    }

    fn f_ddot_scale(&self) -> f64 {
        let total = self.total();
        (0..=64)
            .map(|i| self.f_ddot(total * i as f64 / 64.0).abs())
            .fold(0.0, f64::max)
    }
}

/// Coherence length l_x(t) = sqrt(hbar / N2(t)), the closed form
/// sqrt( (3 pi c^2 / 2 alpha omega_max^2) (t^2+eps^2)^2 / (t^4 + 3 t^2 eps^2) ).
pub fn coherence_length(t: f64, kern: &KernelFamily) -> Result<f64, DecoherenceError> {
    if t <= 0.0 {
        return Err(DecoherenceError::NonPositiveTime(t));
    }
    Ok((kern.ctx.hbar / kern.n2(t)?).sqrt())
}

/// exp(-dx^2 N2(t) / hbar).
pub fn decoherence_factor(dx: f64, t: f64, kern: &KernelFamily) -> Result<f64, DecoherenceError> {
    let n2 = if t == 0.0 { 0.0 } else { kern.n2(t)? };
    Ok((-dx * dx * n2 / kern.ctx.hbar).exp())
}

/// N1~(t1) through the integration-by-parts reduction.
/// Adaptive integration split at the listed interior points, so profile
/// kinks and curvature jumps land on panel boundaries.
fn piecewise_adaptive<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    cuts: &[f64],
    rel_tol: f64,
    abs_tol: f64,
) -> Result<f64, quad::QuadError> {
    let mut edges = vec![a];
    let mut sorted: Vec<f64> = cuts.iter().copied().filter(|&c| c > a && c < b).collect();
    sorted.sort_by(|x, y| x.partial_cmp(y).unwrap());
    for c in sorted {
        if c - edges.last().unwrap() > 1e-12 * (b - a) {
            edges.push(c);
        }
    }
    edges.push(b);
    let mut acc = 0.0;
    for w in edges.windows(2) {
        acc += quad::adaptive(f, w[0], w[1], rel_tol, abs_tol)?;
    }
    Ok(acc)
}

pub fn switched_n1(
    profile: &SwitchingProfile,
    t1: f64,
    kern: &KernelFamily,
) -> Result<f64, DecoherenceError> {
    let n1 = kern.n1(t1)?;
    let n2t = kern.n2(t1)?;
    let jumps = profile.derivative_jumps();
    // For kinked profiles f'(0-) = 0; the kink at zero is in the jump list.
    let fd0 = if jumps.is_empty() { profile.f_dot(0.0) } else { 0.0 };
    let mut inner = profile.f(0.0) * n1 + fd0 * n2t;
    for &(tj, dfd) in &jumps {
        if tj <= t1 {
            inner += dfd * kern.n2(t1 - tj)?;
        }
    }
    let fdd_scale = profile.f_ddot_scale();
    if fdd_scale > 0.0 {
        let mut cuts: Vec<f64> = profile.breakpoints().iter().map(|b| t1 - b).collect();
        cuts.push(t1); // f'' jumps at the profile start
        inner += piecewise_adaptive(
            &|tau: f64| kern.n2(tau).unwrap() * profile.f_ddot(t1 - tau),
            0.0,
            t1,
            &cuts,
            1e-10,
            1e-13 * kern.n2_plateau() * fdd_scale * t1.max(1.0),
        )?;
    }
    Ok(profile.f(t1) * inner)
}

/// N2~(T) = ∫0..T N1~(t1) dt1.
pub fn switched_n2(
    profile: &SwitchingProfile,
    kern: &KernelFamily,
) -> Result<f64, DecoherenceError> {
    profile.validate()?;
    let total = profile.total();
    let eps = kern.epsilon();
    if total < 100.0 * eps {
        return Err(DecoherenceError::DurationTooShort { t: total, eps });
    }
    switched_n1(profile, total, kern)?; // surface kernel errors before the closure
    let v = piecewise_adaptive(
        &|t1: f64| switched_n1(profile, t1, kern).unwrap(),
        0.0,
        total,
        &profile.breakpoints(),
        1e-9,
        1e-11 * kern.n2_plateau() * total.max(1.0),
    )?;
    Ok(v)
}

/// Sudden-switching limit (N2 plateau / 2)(f(0)^2 + f(T)^2).
pub fn false_dec_limit(profile: &SwitchingProfile, kern: &KernelFamily) -> f64 {
    let f0 = profile.f(0.0);
    let ft = profile.f(profile.total());
    kern.n2_plateau() / 2.0 * (f0 * f0 + ft * ft)
}

/// Collisional-decoherence exponent Lambda dx^2 ∫0..t f(t') dt'; grows
/// irreversibly even when f returns to zero.
pub fn collisional_exponent(
    lambda: f64,
    dx: f64,
    profile: &SwitchingProfile,
    t: f64,
) -> Result<f64, DecoherenceError> {
    if lambda == 0.0 {
        return Ok(0.0);
    }
    let integral = quad::adaptive(&|u: f64| profile.f(u), 0.0, t, 1e-10, 1e-13 * t.max(1.0))?;
    Ok(lambda * dx * dx * integral)
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct DecoherenceReport {
    pub n2_unswitched: f64,
    pub n2_switched: f64,
    pub restoration_ratio: f64,
    pub coherence_length_final: f64,
}

pub fn report(
    profile: &SwitchingProfile,
    kern: &KernelFamily,
) -> Result<DecoherenceReport, DecoherenceError> {
    let total = profile.total();
    let n2_u = kern.n2(total)?;
    let n2_s = switched_n2(profile, kern)?;
    Ok(DecoherenceReport {
        n2_unswitched: n2_u,
        n2_switched: n2_s,
        restoration_ratio: n2_s / n2_u,
        coherence_length_final: (kern.ctx.hbar / n2_s.max(1e-300)).sqrt(),
    })
}

/// Multiplies a grid-basis density matrix elementwise by
/// exp(-(x'-x)^2 N2(t)/hbar). Diagonal untouched; trace and Hermiticity
/// preserved exactly.
pub fn apply_decoherence(
    rho: &DensityMatrix,
    t: f64,
    kern: &KernelFamily,
) -> Result<DensityMatrix, DecoherenceError> {
    let xs = rho.basis.grid_points().ok_or_else(|| {
        DecoherenceError::Propagator(Box::new(PropagatorError::InvalidState(
            "apply_decoherence needs a position-grid basis".into(),
        )))
    })?;
    let n2 = if t == 0.0 { 0.0 } else { kern.n2(t)? };
    let mut out = rho.clone();
    let n = xs.len();
    for i in 0..n {
        for j in 0..n {
            let d = xs[i] - xs[j];
            out.elements[[i, j]] *= (-d * d * n2 / kern.ctx.hbar).exp();
        }
    }
    Ok(out)
}
