//! Second-order master-equation propagation in a truncated basis.
//!
//! The memory integrals are converted to time-local coefficients using the
//! zeroth-order Heisenberg coefficients x_Hs(-tau) = c_x(tau) X + c_p(tau) P.
//! For the free particle and the harmonic oscillator the coefficients reduce
//! to closed forms in N1, N2 and the smoothed delta plus small smooth
//! remainder integrals; those remainders are accumulated incrementally on the
//! propagation grid so each RK4 substep refresh is O(1).

use ndarray::Array2;
use num_complex::Complex64;
use thiserror::Error;

use crate::kernels::{KernelError, KernelFamily};
use crate::linalg::{self, CMat};
use crate::quad;

const MIN_OSC_DIM: usize = 16;
const MIN_POINTS_PER_SIGMA: f64 = 8.0;

#[derive(Debug, Error)]
pub enum PropagatorError {
    #[error("oscillator basis needs dim >= {MIN_OSC_DIM} (got {0})")]
    DimensionTooSmall(usize),
    #[error("position grid needs at least 8 points (got {0})")]
    GridTooSmall(usize),
    #[error("grid bounds must satisfy x_min < x_max")]
    BadGridBounds,
    #[error("wavepacket sigma {sigma} under-resolved: need >= {MIN_POINTS_PER_SIGMA} points per sigma, grid spacing is {dx}")]
    UnderResolved { sigma: f64, dx: f64 },
    #[error("custom potential requires a position-grid basis")]
    CustomNeedsGrid,
    #[error("custom potential samples ({got}) must match grid size ({want})")]
    CustomSampleMismatch { got: usize, want: usize },
    #[error("basis mismatch between state and operators ({0} vs {1})")]
    BasisMismatch(usize, usize),
    #[error("density matrix invariant violated: {0}")]
    InvalidState(String),
    #[error("invariant breach at step {step} (t = {t}): {what} = {value:e}")]
    InvariantBreach { step: usize, t: f64, what: &'static str, value: f64 },
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

#[derive(Debug, Clone, PartialEq)]
pub enum PotentialKind {
    Free,
    Harmonic { omega0: f64 },
    /// V0 sampled on the position grid of the basis.
    Custom { v0: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Basis {
    OscillatorNumber { dim: usize, omega_basis: f64 },
    PositionGrid { n_points: usize, x_min: f64, x_max: f64 },
}

impl Basis {
    pub fn dim(&self) -> usize {
        match self {
            Basis::OscillatorNumber { dim, .. } => *dim,
            Basis::PositionGrid { n_points, .. } => *n_points,
        }
    }

    pub fn grid_points(&self) -> Option<Vec<f64>> {
        match self {
            Basis::OscillatorNumber { .. } => None,
            Basis::PositionGrid { n_points, x_min, x_max } => {
                let n = *n_points;
                let dx = (x_max - x_min) / (n as f64 - 1.0);
                Some((0..n).map(|j| x_min + dx * j as f64).collect())
            }
        }
    }

    pub fn dx(&self) -> Option<f64> {
        match self {
            Basis::OscillatorNumber { .. } => None,
            Basis::PositionGrid { n_points, x_min, x_max } => {
                Some((x_max - x_min) / (*n_points as f64 - 1.0))
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct SystemSpec {
    pub kind: PotentialKind,
    pub mass: f64,
    pub basis: Basis,
}

impl SystemSpec {
    pub fn validate(&self) -> Result<(), PropagatorError> {
        match &self.basis {
            Basis::OscillatorNumber { dim, .. } if *dim < MIN_OSC_DIM => {
                return Err(PropagatorError::DimensionTooSmall(*dim));
            }
            Basis::PositionGrid { n_points, .. } if *n_points < 8 => {
                return Err(PropagatorError::GridTooSmall(*n_points));
            }
            Basis::PositionGrid { x_min, x_max, .. } if x_min >= x_max => {
                return Err(PropagatorError::BadGridBounds);
            }
            _ => {}
        }
        if let PotentialKind::Custom { v0 } = &self.kind {
            match &self.basis {
                Basis::PositionGrid { n_points, .. } => {
                    if v0.len() != *n_points {
                        return Err(PropagatorError::CustomSampleMismatch {
                            got: v0.len(),
                            want: *n_points,
                        });
                    }
                }
                _ => return Err(PropagatorError::CustomNeedsGrid),
            }
        }
        Ok(())
    }

    /// Effective small-oscillation stiffness V0'' used for the zeroth-order
    /// Heisenberg coefficients of a custom potential (second difference at
    /// the sampled minimum).
    pub fn effective_stiffness(&self) -> f64 {
        match &self.kind {
            PotentialKind::Free => 0.0,
            PotentialKind::Harmonic { omega0 } => self.mass * omega0 * omega0,
            PotentialKind::Custom { v0 } => {
                let dx = self.basis.dx().unwrap_or(1.0);
                let mut jmin = 1;
                for j in 1..v0.len() - 1 {
                    if v0[j] < v0[jmin] {
                        jmin = j;
                    }
                }
                ((v0[jmin + 1] - 2.0 * v0[jmin] + v0[jmin - 1]) / (dx * dx)).max(0.0)
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct DensityMatrix {
    pub elements: CMat,
    pub basis: Basis,
}

impl DensityMatrix {
    pub fn validate(&self) -> Result<(), PropagatorError> {
        let n = self.elements.nrows();
        if n != self.elements.ncols() || n != self.basis.dim() {
            return Err(PropagatorError::InvalidState(format!(
                "shape {}x{} does not match basis dim {}",
                n,
                self.elements.ncols(),
                self.basis.dim()
            )));
        }
        let herm = linalg::hermiticity_error(&self.elements);
        if herm > 1e-12 {
            return Err(PropagatorError::InvalidState(format!(
                "hermiticity deviation {herm:e} > 1e-12"
            )));
        }
        let tr = linalg::trace(&self.elements);
        if (tr.re - 1.0).abs() > 1e-10 || tr.im.abs() > 1e-10 {
            return Err(PropagatorError::InvalidState(format!("trace {tr} != 1")));
        }
        for i in 0..n {
            let d = self.elements[[i, i]];
            if d.re < -1e-10 {
                return Err(PropagatorError::InvalidState(format!(
                    "negative diagonal entry {d} at {i}"
                )));
            }
        }
        Ok(())
    }

    fn from_psi(psi: &[Complex64], basis: Basis) -> Self {
        let n = psi.len();
        let norm2: f64 = psi.iter().map(|c| c.norm_sqr()).sum();
        let mut rho = Array2::<Complex64>::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                rho[[i, j]] = psi[i] * psi[j].conj() / norm2;
            }
        }
        Self { elements: rho, basis }
    }

    /// Coherent state |alpha> in the oscillator number basis.
    pub fn coherent_state(basis: Basis, alpha: Complex64) -> Result<Self, PropagatorError> {
        let dim = match basis {
            Basis::OscillatorNumber { dim, .. } => dim,
            _ => {
                return Err(PropagatorError::InvalidState(
                    "coherent state needs an oscillator basis".into(),
                ))
            }
        };
        if dim < MIN_OSC_DIM {
            return Err(PropagatorError::DimensionTooSmall(dim));
        }
        let mut psi = vec![Complex64::new(0.0, 0.0); dim];
        let mut c = Complex64::new((-alpha.norm_sqr() / 2.0).exp(), 0.0);
        psi[0] = c;
        for n in 1..dim {
            c = c * alpha / (n as f64).sqrt();
            psi[n] = c;
        }
        Ok(Self::from_psi(&psi, basis))
    }

    /// Displacement parameter for given phase-space means.
    pub fn coherent_alpha(x0: f64, p0: f64, mass: f64, omega: f64, hbar: f64) -> Complex64 {
        Complex64::new(
            (mass * omega / (2.0 * hbar)).sqrt() * x0,
            p0 / (2.0 * mass * omega * hbar).sqrt(),
        )
    }

    /// Gaussian wavepacket exp(-(x-x0)^2/4 sigma^2 + i p0 x / hbar) on a grid.
    pub fn gaussian_wavepacket(
        basis: Basis,
        x0: f64,
        p0: f64,
        sigma: f64,
        hbar: f64,
    ) -> Result<Self, PropagatorError> {
        let xs = basis
            .grid_points()
            .ok_or_else(|| PropagatorError::InvalidState("wavepacket needs a grid basis".into()))?;
        let dx = basis.dx().unwrap();
        if sigma < MIN_POINTS_PER_SIGMA * dx {
            return Err(PropagatorError::UnderResolved { sigma, dx });
        }
        let psi: Vec<Complex64> = xs
            .iter()
            .map(|&x| {
                let d = x - x0;
                Complex64::from_polar((-d * d / (4.0 * sigma * sigma)).exp(), p0 * x / hbar)
            })
            .collect();
        Ok(Self::from_psi(&psi, basis))
    }

    /// Symmetric two-Gaussian superposition centered at +-x_sep/2.
    pub fn cat_state(
        basis: Basis,
        x_sep: f64,
        sigma: f64,
        hbar: f64,
    ) -> Result<Self, PropagatorError> {
        let xs = basis
            .grid_points()
            .ok_or_else(|| PropagatorError::InvalidState("cat state needs a grid basis".into()))?;
        let dx = basis.dx().unwrap();
        if sigma < MIN_POINTS_PER_SIGMA * dx {
            return Err(PropagatorError::UnderResolved { sigma, dx });
        }
        let _ = hbar;
        let half = x_sep / 2.0;
        let psi: Vec<Complex64> = xs
            .iter()
            .map(|&x| {
                let a = (-(x - half) * (x - half) / (4.0 * sigma * sigma)).exp();
                let b = (-(x + half) * (x + half) / (4.0 * sigma * sigma)).exp();
                Complex64::new(a + b, 0.0)
            })
            .collect();
        Ok(Self::from_psi(&psi, basis))
    }
}

#[derive(Debug, Clone)]
pub struct Operators {
    pub x: CMat,
    pub p: CMat,
    pub h: CMat,
    pub basis: Basis,
    pub vem_coefficient: f64,
}

impl Operators {
    /// Builds X, P and H_s = P^2/2m + V0 + V_EM. Set `include_vem` to false
    /// to drop the cutoff-induced potential (diagnostics only; the full
    /// equation needs it to cancel the cD_x plateau).
    pub fn build(
        spec: &SystemSpec,
        kern: &KernelFamily,
        include_vem: bool,
    ) -> Result<Self, PropagatorError> {
        spec.validate()?;
        let hbar = kern.ctx.hbar;
        let m = spec.mass;
        let vem = if include_vem { kern.vem_coefficient() } else { 0.0 };
        let (x, p, mut h) = match &spec.basis {
            Basis::OscillatorNumber { dim, omega_basis } => {
                let n = *dim;
                let om = *omega_basis;
                let mut x = Array2::<Complex64>::zeros((n, n));
                let mut p = Array2::<Complex64>::zeros((n, n));
                let lx = (hbar / (2.0 * m * om)).sqrt();
                let lp = (m * hbar * om / 2.0).sqrt();
                for k in 1..n {
                    let r = (k as f64).sqrt();
                    x[[k - 1, k]] = Complex64::new(lx * r, 0.0);
                    x[[k, k - 1]] = Complex64::new(lx * r, 0.0);
                    p[[k - 1, k]] = Complex64::new(0.0, -lp * r);
                    p[[k, k - 1]] = Complex64::new(0.0, lp * r);
                }
                let mut h = p.dot(&p).mapv(|v| v / Complex64::new(2.0 * m, 0.0));
                match &spec.kind {
                    PotentialKind::Free => {}
                    PotentialKind::Harmonic { omega0 } => {
                        let k0 = 0.5 * m * omega0 * omega0;
                        h = h + x.dot(&x).mapv(|v| v * k0);
                    }
                    PotentialKind::Custom { .. } => unreachable!("validated above"),
                }
                (x, p, h)
            }
            Basis::PositionGrid { n_points, .. } => {
                let n = *n_points;
                let xs = spec.basis.grid_points().unwrap();
                let dx = spec.basis.dx().unwrap();
                let mut x = Array2::<Complex64>::zeros((n, n));
                let mut p = Array2::<Complex64>::zeros((n, n));
                let mut h = Array2::<Complex64>::zeros((n, n));
                let t0 = hbar * hbar / (2.0 * m * dx * dx);
                for j in 0..n {
                    x[[j, j]] = Complex64::new(xs[j], 0.0);
                    h[[j, j]] = Complex64::new(2.0 * t0, 0.0);
                    if j + 1 < n {
                        h[[j, j + 1]] = Complex64::new(-t0, 0.0);
                        h[[j + 1, j]] = Complex64::new(-t0, 0.0);
                        p[[j, j + 1]] = Complex64::new(0.0, -hbar / (2.0 * dx));
                        p[[j + 1, j]] = Complex64::new(0.0, hbar / (2.0 * dx));
                    }
                }
                match &spec.kind {
                    PotentialKind::Free => {}
                    PotentialKind::Harmonic { omega0 } => {
                        let k0 = 0.5 * m * omega0 * omega0;
                        for j in 0..n {
                            h[[j, j]] += Complex64::new(k0 * xs[j] * xs[j], 0.0);
                        }
                    }
                    PotentialKind::Custom { v0 } => {
                        for j in 0..n {
                            h[[j, j]] += Complex64::new(v0[j], 0.0);
                        }
                    }
                }
                (x, p, h)
            }
        };
        if vem != 0.0 {
            h = h + x.dot(&x).mapv(|v| v * vem);
        }
        Ok(Self { x, p, h, basis: spec.basis.clone(), vem_coefficient: vem })
    }
}

/// x_Hs(-tau) = c_x X + c_p P.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeisenbergCoeffs {
    pub c_x: f64,
    pub c_p: f64,
}

/// Zeroth-order Heisenberg coefficients at delay tau. Closed form for free
/// and harmonic; custom potentials use the small-oscillation stiffness at the
/// sampled minimum.
pub fn heisenberg_x_coeffs(spec: &SystemSpec, tau: f64) -> HeisenbergCoeffs {
    let m = spec.mass;
    let k = spec.effective_stiffness();
    if k <= 0.0 {
        HeisenbergCoeffs { c_x: 1.0, c_p: -tau / m }
    } else {
        let w = (k / m).sqrt();
        HeisenbergCoeffs { c_x: (w * tau).cos(), c_p: -(w * tau).sin() / (m * w) }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MeqCoefficients {
    pub cn_x: f64,
    pub cn_p: f64,
    pub cd_x: f64,
    pub cd_p: f64,
}

// Exact free-particle coefficients: c_x = 1, c_p = -tau/m, all four integrals
// reduce to N1, N2 and smoothed-delta boundary values.
fn free_coeffs(kern: &KernelFamily, m: f64, t: f64) -> Result<MeqCoefficients, KernelError> {
    let p3 = kern.p3();
    Ok(MeqCoefficients {
        cn_x: kern.n1(t)?,
        cn_p: (kern.n2(t)? - t * kern.n1(t)?) / m,
        cd_x: p3 * (kern.smoothed_delta_d2(t) - kern.smoothed_delta_d2(0.0)),
        cd_p: -p3 * (t * kern.smoothed_delta_d2(t) - kern.smoothed_delta_d1(t)) / m,
    })
}

// Harmonic coefficients given the cumulative smooth remainders
//   rx(t) = ∫0..t N2 (-w^2 cos w tau) dtau,   rp(t) = ∫0..t N2 (w sin(w tau)/m),
//   sx(t) = ∫0..t delta_eps w^3 sin(w tau),   sp(t) = ∫0..t delta_eps (w^2/m) cos(w tau).
// Everything else is boundary data from integration by parts.
fn harmonic_coeffs(
    kern: &KernelFamily,
    m: f64,
    w: f64,
    t: f64,
    rx: f64,
    rp: f64,
    sx: f64,
    sp: f64,
) -> Result<MeqCoefficients, KernelError> {
    let p3 = kern.p3();
    let (s, c) = (w * t).sin_cos();
    let n1 = kern.n1(t)?;
    let n2 = kern.n2(t)?;
    let d0 = kern.smoothed_delta(t);
    let d1 = kern.smoothed_delta_d1(t);
    let d2 = kern.smoothed_delta_d2(t);
    let d0_0 = kern.smoothed_delta(0.0);
    let d2_0 = kern.smoothed_delta_d2(0.0);
    let cp = -s / (m * w);
    let cp1 = -c / m;
    let cp2 = w * s / m;
    Ok(MeqCoefficients {
        cn_x: n1 * c + n2 * w * s + rx,
        cn_p: n1 * cp - n2 * cp1 + rp,
        cd_x: p3 * (d2 * c - d2_0 + d1 * w * s - d0 * w * w * c + d0_0 * w * w - sx),
        cd_p: p3 * (d2 * cp - d1 * cp1 + d0 * cp2 - sp),
    })
}

fn harmonic_remainders(
    kern: &KernelFamily,
    m: f64,
    w: f64,
    t: f64,
) -> Result<(f64, f64, f64, f64), PropagatorError> {
    let scale_n = kern.n2_plateau().max(1e-300);
    let rx = quad::adaptive(
        &|tau: f64| kern.n2(tau).unwrap() * (-w * w * (w * tau).cos()),
        0.0,
        t,
        1e-12,
        1e-14 * scale_n * w * w * t.max(1.0),
    )
    .map_err(KernelError::from)?;
    let rp = quad::adaptive(
        &|tau: f64| kern.n2(tau).unwrap() * w * (w * tau).sin() / m,
        0.0,
        t,
        1e-12,
        1e-14 * scale_n * w / m * t.max(1.0),
    )
    .map_err(KernelError::from)?;
    let eps = kern.epsilon();
    let scale_d = 1.0 / eps;
    let sx = quad::peaked(
        &|tau: f64| kern.smoothed_delta(tau) * w.powi(3) * (w * tau).sin(),
        0.0,
        t,
        eps,
        1e-12,
        1e-14 * scale_d * w.powi(3) * eps,
    )
    .map_err(KernelError::from)?;
    let sp = quad::peaked(
        &|tau: f64| kern.smoothed_delta(tau) * w * w / m * (w * tau).cos(),
        0.0,
        t,
        eps,
        1e-12,
        1e-14 * scale_d * w * w / m,
    )
    .map_err(KernelError::from)?;
    Ok((rx, rp, sx, sp))
}

/// Master-equation coefficients at a single time. For repeated evaluation on
/// a propagation grid use [`CoefficientTable`], which amortizes the
/// remainder quadratures.
pub fn meq_coefficients(
    spec: &SystemSpec,
    t: f64,
    kern: &KernelFamily,
) -> Result<MeqCoefficients, PropagatorError> {
    let m = spec.mass;
    let k = spec.effective_stiffness();
    if t == 0.0 {
        return Ok(MeqCoefficients::default());
    }
    if k <= 0.0 {
        Ok(free_coeffs(kern, m, t)?)
    } else {
        let w = (k / m).sqrt();
        let (rx, rp, sx, sp) = harmonic_remainders(kern, m, w, t)?;
        Ok(harmonic_coeffs(kern, m, w, t, rx, rp, sx, sp)?)
    }
}

/// Coefficients precomputed at every half step of a fixed-dt run, so the RK4
/// substep refresh is a table lookup. Cumulative remainder integrals advance
/// one Gauss panel per half step.
pub struct CoefficientTable {
    values: Vec<MeqCoefficients>,
    half_dt: f64,
}

impl CoefficientTable {
    pub fn build(
        spec: &SystemSpec,
        dt: f64,
        n_steps: usize,
        kern: &KernelFamily,
    ) -> Result<Self, PropagatorError> {
        let m = spec.mass;
        let k = spec.effective_stiffness();
        let half_dt = dt / 2.0;
        let n_half = 2 * n_steps;
        let mut values = Vec::with_capacity(n_half + 1);
        if k <= 0.0 {
            for j in 0..=n_half {
                let t = half_dt * j as f64;
                values.push(if t == 0.0 {
                    MeqCoefficients::default()
                } else {
                    free_coeffs(kern, m, t)?
                });
            }
        } else {
            let w = (k / m).sqrt();
            let eps = kern.epsilon();
            let (mut rx, mut rp, mut sx, mut sp) = (0.0, 0.0, 0.0, 0.0);
            values.push(MeqCoefficients::default());
            for j in 1..=n_half {
                let a = half_dt * (j - 1) as f64;
                let b = half_dt * j as f64;
                // The delta-kernel integrands are peaked on the eps scale;
                // subdivide early panels so the peak is always resolved.
                let sub = if a < 10.0 * eps {
                    ((half_dt / eps).ceil() as usize * 4).clamp(4, 400)
                } else {
                    1
                };
                let h = (b - a) / sub as f64;
                for q in 0..sub {
                    let (lo, hi) = (a + h * q as f64, a + h * (q + 1) as f64);
                    rx += quad::gauss10(&|tau| kern.n2(tau).unwrap() * (-w * w * (w * tau).cos()), lo, hi);
                    rp += quad::gauss10(&|tau| kern.n2(tau).unwrap() * w * (w * tau).sin() / m, lo, hi);
                    sx += quad::gauss10(&|tau| kern.smoothed_delta(tau) * w.powi(3) * (w * tau).sin(), lo, hi);
                    sp += quad::gauss10(&|tau| kern.smoothed_delta(tau) * w * w / m * (w * tau).cos(), lo, hi);
                }
                values.push(harmonic_coeffs(kern, m, w, b, rx, rp, sx, sp)?);
            }
        }
        Ok(Self { values, half_dt })
    }

    /// Coefficients at t = j * dt/2.
    pub fn at_half_step(&self, j: usize) -> MeqCoefficients {
        self.values[j.min(self.values.len() - 1)]
    }

    pub fn half_dt(&self) -> f64 {
        self.half_dt
    }

    pub fn last(&self) -> MeqCoefficients {
        *self.values.last().unwrap()
    }
}

/// Right-hand side of the master equation:
/// -(i/h)[H,rho] - (1/h)[X, cN_x [X,rho] + cN_p [P,rho]]
/// + (i/2h)[X, cD_x {X,rho} + cD_p {P,rho}].
pub fn meq_rhs(
    rho: &CMat,
    ops: &Operators,
    coeffs: &MeqCoefficients,
    hbar: f64,
) -> Result<CMat, PropagatorError> {
    if rho.nrows() != ops.x.nrows() {
        return Err(PropagatorError::BasisMismatch(rho.nrows(), ops.x.nrows()));
    }
    let i = Complex64::i();
    let mut rhs = linalg::commutator(&ops.h, rho).mapv(|v| v * (-i / hbar));
    if coeffs.cn_x != 0.0 || coeffs.cn_p != 0.0 {
        let inner = linalg::commutator(&ops.x, rho).mapv(|v| v * coeffs.cn_x)
            + linalg::commutator(&ops.p, rho).mapv(|v| v * coeffs.cn_p);
        rhs = rhs - linalg::commutator(&ops.x, &inner).mapv(|v| v / hbar);
    }
    if coeffs.cd_x != 0.0 || coeffs.cd_p != 0.0 {
        let inner = linalg::anticommutator(&ops.x, rho).mapv(|v| v * coeffs.cd_x)
            + linalg::anticommutator(&ops.p, rho).mapv(|v| v * coeffs.cd_p);
        rhs = rhs + linalg::commutator(&ops.x, &inner).mapv(|v| v * (i / (2.0 * hbar)));
    }
    Ok(rhs)
}

#[derive(Debug, Clone, Copy)]
pub struct ObservableRecord {
    pub x_mean: f64,
    pub p_mean: f64,
    pub x_var: f64,
    pub p_var: f64,
    pub purity: f64,
}

pub fn expectation(rho: &CMat, op: &CMat) -> f64 {
    linalg::trace(&rho.dot(op)).re
}

pub fn observables(rho: &CMat, ops: &Operators) -> ObservableRecord {
    let x = expectation(rho, &ops.x);
    let p = expectation(rho, &ops.p);
    let x2 = expectation(rho, &ops.x.dot(&ops.x));
    let p2 = expectation(rho, &ops.p.dot(&ops.p));
    let purity: f64 = rho.iter().map(|v| v.norm_sqr()).sum();
    ObservableRecord { x_mean: x, p_mean: p, x_var: x2 - x * x, p_var: p2 - p * p, purity }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub x_mean: Vec<f64>,
    pub p_mean: Vec<f64>,
    pub x_var: Vec<f64>,
    pub p_var: Vec<f64>,
    pub purity: Vec<f64>,
    pub trace_err: Vec<f64>,
    pub herm_err: Vec<f64>,
    pub min_eig: Vec<f64>,
    pub final_state: DensityMatrix,
}

#[derive(Debug, Clone, Copy)]
pub struct PropagateOptions {
    /// Particle-field coupling; false zeroes all four memory coefficients.
    pub coupling_on: bool,
    /// Include V_EM in H_s.
    pub include_vem: bool,
    /// Freeze coefficients at their final-time (plateau) values.
    pub markov: bool,
    /// Keep only the cN_x noise term of the memory contributions.
    pub decoherence_only: bool,
    /// Record observables every this many steps.
    pub record_every: usize,
    /// Compute the smallest eigenvalue at record times.
    pub track_min_eig: bool,
}

impl Default for PropagateOptions {
    fn default() -> Self {
        Self {
            coupling_on: true,
            include_vem: true,
            markov: false,
            decoherence_only: false,
            record_every: 1,
            track_min_eig: true,
        }
    }
}

const STEP_TRACE_TOL: f64 = 1e-10;
const RUN_TRACE_TOL: f64 = 1e-9;
const RUN_HERM_TOL: f64 = 1e-9;

/// Fixed-step RK4 over the master equation, coefficients refreshed at every
/// substep. Aborts if trace or Hermiticity invariants break.
pub fn propagate(
    rho0: &DensityMatrix,
    spec: &SystemSpec,
    dt: f64,
    n_steps: usize,
    kern: &KernelFamily,
    opts: &PropagateOptions,
) -> Result<Trajectory, PropagatorError> {
    rho0.validate()?;
    spec.validate()?;
    if rho0.basis != spec.basis {
        return Err(PropagatorError::BasisMismatch(rho0.basis.dim(), spec.basis.dim()));
    }
    // V_EM is induced by the coupling, so it disappears with it.
    let ops = Operators::build(spec, kern, opts.include_vem && opts.coupling_on)?;
    let hbar = kern.ctx.hbar;
    let table = if opts.coupling_on {
        Some(CoefficientTable::build(spec, dt, n_steps, kern)?)
    } else {
        None
    };
    let coeffs_at = |j_half: usize| -> MeqCoefficients {
        match &table {
            None => MeqCoefficients::default(),
            Some(t) => {
                let mut c = if opts.markov { t.last() } else { t.at_half_step(j_half) };
                if opts.decoherence_only {
                    c.cn_p = 0.0;
                    c.cd_x = 0.0;
                    c.cd_p = 0.0;
                }
                c
            }
        }
    };

    let record_every = opts.record_every.max(1);
    let mut rho = rho0.elements.clone();
    let mut traj = Trajectory {
        times: Vec::new(),
        x_mean: Vec::new(),
        p_mean: Vec::new(),
        x_var: Vec::new(),
        p_var: Vec::new(),
        purity: Vec::new(),
        trace_err: Vec::new(),
        herm_err: Vec::new(),
        min_eig: Vec::new(),
        final_state: rho0.clone(),
    };
    let record = |rho: &CMat, t: f64, traj: &mut Trajectory| {
        let obs = observables(rho, &ops);
        traj.times.push(t);
        traj.x_mean.push(obs.x_mean);
        traj.p_mean.push(obs.p_mean);
        traj.x_var.push(obs.x_var);
        traj.p_var.push(obs.p_var);
        traj.purity.push(obs.purity);
        traj.trace_err.push((linalg::trace(rho).re - 1.0).abs());
        traj.herm_err.push(linalg::hermiticity_error(rho));
        traj.min_eig.push(if opts.track_min_eig {
            linalg::hermitian_min_eigenvalue(rho)
        } else {
            f64::NAN
        });
    };
    record(&rho, 0.0, &mut traj);

    let mut prev_trace = linalg::trace(&rho).re;
    for step in 0..n_steps {
        let t = dt * step as f64;
        let c0 = coeffs_at(2 * step);
        let c1 = coeffs_at(2 * step + 1);
        let c2 = coeffs_at(2 * step + 2);
        let k1 = meq_rhs(&rho, &ops, &c0, hbar)?;
        let r2 = &rho + &k1.mapv(|v| v * (dt / 2.0));
        let k2 = meq_rhs(&r2, &ops, &c1, hbar)?;
        let r3 = &rho + &k2.mapv(|v| v * (dt / 2.0));
        let k3 = meq_rhs(&r3, &ops, &c1, hbar)?;
        let r4 = &rho + &k3.mapv(|v| v * dt);
        let k4 = meq_rhs(&r4, &ops, &c2, hbar)?;
        rho = rho + (k1 + k2.mapv(|v| v * 2.0) + k3.mapv(|v| v * 2.0) + k4).mapv(|v| v * (dt / 6.0));

        let tr = linalg::trace(&rho).re;
        let step_drift = (tr - prev_trace).abs();
        prev_trace = tr;
        if step_drift > STEP_TRACE_TOL || (tr - 1.0).abs() > RUN_TRACE_TOL {
            return Err(PropagatorError::InvariantBreach {
                step,
                t: t + dt,
                what: "trace drift",
                value: (tr - 1.0).abs().max(step_drift),
            });
        }
        if (step + 1) % record_every == 0 || step + 1 == n_steps {
            let herm = linalg::hermiticity_error(&rho);
            if herm > RUN_HERM_TOL {
                return Err(PropagatorError::InvariantBreach {
                    step,
                    t: t + dt,
                    what: "hermiticity residual",
                    value: herm,
                });
            }
            if (step + 1) % record_every == 0 && step + 1 != n_steps {
                record(&rho, t + dt, &mut traj);
            }
        }
        if step + 1 == n_steps {
            record(&rho, t + dt, &mut traj);
        }
    }
    traj.final_state = DensityMatrix { elements: rho, basis: spec.basis.clone() };
    Ok(traj)
}
