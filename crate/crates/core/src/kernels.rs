//! Closed-form vacuum kernels with the exponential UV cutoff.
//!
//! All quantities are built from the regularized conjugate-field correlator
//! hbar / (pi^2 eps0 c^3 (tau - i eps)^4) with eps = 1/omega_max: the noise
//! kernel (its real part), the causal dissipation kernel (its imaginary
//! part), the antiderivative moments N1 and N2, the smoothed Dirac delta,
//! and the three-term boundary identity for integrals of the dissipation
//! kernel against a smooth function.

use num_complex::Complex64;
use std::f64::consts::PI;
use thiserror::Error;

use crate::quad::{self, QuadError};
use crate::units::{CutoffConfig, PhysicalContext};

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("kernel moment requires a nonnegative time argument (got {0})")]
    NegativeTime(f64),
    #[error("brute-force integral requires t >= 20 eps (got t = {t}, eps = {eps})")]
    SpanTooShort { t: f64, eps: f64 },
    #[error(transparent)]
    Quadrature(#[from] QuadError),
}

/// Boundary data f(0), f''(0), f'''(0) entering the dissipation-integral
/// identity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivativeStencil {
    pub f0: f64,
    pub f2: f64,
    pub f3: f64,
}

impl DerivativeStencil {
    pub fn new(f0: f64, f2: f64, f3: f64) -> Self {
        Self { f0, f2, f3 }
    }
}

/// Immutable kernel evaluator for one (context, cutoff) pair; prefactors are
/// computed once since the propagator evaluates kernels in a hot loop.
#[derive(Debug, Clone)]
pub struct KernelFamily {
    pub ctx: PhysicalContext,
    pub cut: CutoffConfig,
    /// e^2 / (pi^2 eps0 c^3), the noise-kernel prefactor.
    pub prefactor_noise: f64,
    /// 4 alpha hbar / (3 pi c^2), the N1 prefactor.
    pub prefactor_n1: f64,
    /// e^2 / (3 pi eps0 c^3), multiplying the third delta derivative in the
    /// dissipation kernel.
    prefactor_delta3: f64,
    alpha: f64,
}

impl KernelFamily {
    pub fn new(ctx: PhysicalContext, cut: CutoffConfig) -> Self {
        let e2 = ctx.e_charge * ctx.e_charge;
        let c2 = ctx.c * ctx.c;
        let c3 = c2 * ctx.c;
        let alpha = ctx.fine_structure();
        Self {
            prefactor_noise: e2 / (PI * PI * ctx.eps0 * c3),
            prefactor_n1: 4.0 * alpha * ctx.hbar / (3.0 * PI * c2),
            prefactor_delta3: e2 / (3.0 * PI * ctx.eps0 * c3),
            alpha,
            ctx,
            cut,
        }
    }

    pub fn epsilon(&self) -> f64 {
        self.cut.epsilon
    }

    /// e^2 / (3 pi eps0 c^3) = 4 alpha hbar / (3 c^2), the dissipation-kernel
    /// prefactor.
    pub fn p3(&self) -> f64 {
        self.prefactor_delta3
    }

    /// Coefficient of x^2 in the cutoff-induced potential V_EM,
    /// e^2 omega_max^3 / (3 pi^2 eps0 c^3).
    pub fn vem_coefficient(&self) -> f64 {
        let w = self.cut.omega_max;
        self.prefactor_delta3 * w * w * w / PI
    }

    /// Smoothed delta: eps / (pi (tau^2 + eps^2)).
    pub fn smoothed_delta(&self, tau: f64) -> f64 {
        let e = self.cut.epsilon;
        e / (PI * (tau * tau + e * e))
    }

    /// First derivative of the smoothed delta.
    pub fn smoothed_delta_d1(&self, tau: f64) -> f64 {
        let e = self.cut.epsilon;
        let s = tau * tau + e * e;
        -2.0 * e * tau / (PI * s * s)
    }

    /// Second derivative of the smoothed delta.
    pub fn smoothed_delta_d2(&self, tau: f64) -> f64 {
        let e = self.cut.epsilon;
        let s = tau * tau + e * e;
        e * (6.0 * tau * tau - 2.0 * e * e) / (PI * s * s * s)
    }

    /// Third derivative of the smoothed delta.
    pub fn smoothed_delta_d3(&self, tau: f64) -> f64 {
        let e = self.cut.epsilon;
        let s = tau * tau + e * e;
        24.0 * e * tau * (e * e - tau * tau) / (PI * s * s * s * s)
    }

    /// Regularized vacuum correlator hbar / (pi^2 eps0 c^3 (tau - i eps)^4).
    pub fn vacuum_correlator(&self, tau: f64) -> Complex64 {
        let z = Complex64::new(tau, -self.cut.epsilon);
        let z2 = z * z;
        let scale = self.prefactor_noise * self.ctx.hbar / (self.ctx.e_charge * self.ctx.e_charge);
        Complex64::new(scale, 0.0) / (z2 * z2)
    }

    /// Noise kernel N(tau) = e^2/(pi^2 eps0 c^3) (eps^4 - 6 eps^2 tau^2 + tau^4)
    /// / (eps^2 + tau^2)^4. Even in tau.
    pub fn noise_kernel(&self, tau: f64) -> f64 {
        let e = self.cut.epsilon;
        let t2 = tau * tau;
        let e2 = e * e;
        let s = e2 + t2;
        let s2 = s * s;
        self.prefactor_noise * (e2 * e2 - 6.0 * e2 * t2 + t2 * t2) / (s2 * s2)
    }

    /// Dissipation kernel D(tau) = 8 e^2/(pi^2 eps0 c^3) eps tau (eps^2 - tau^2)
    /// / (eps^2 + tau^2)^4 for tau > 0, zero otherwise.
    pub fn dissipation_kernel(&self, tau: f64) -> f64 {
        if tau <= 0.0 {
            return 0.0;
        }
        let e = self.cut.epsilon;
        let t2 = tau * tau;
        let e2 = e * e;
        let s = e2 + t2;
        let s2 = s * s;
        8.0 * self.prefactor_noise * e * tau * (e2 - t2) / (s2 * s2)
    }

    /// The equivalent delta-derivative form e^2/(3 pi eps0 c^3) theta(tau)
    /// delta_eps'''(tau).
    pub fn dissipation_kernel_delta_form(&self, tau: f64) -> f64 {
        if tau <= 0.0 {
            return 0.0;
        }
        self.prefactor_delta3 * self.smoothed_delta_d3(tau)
    }

    /// N1(tau) = integral of N from 0 to tau,
    /// -(4 alpha hbar / 3 pi c^2) (tau^3 - 3 tau eps^2) / (tau^2 + eps^2)^3.
    pub fn n1(&self, tau: f64) -> Result<f64, KernelError> {
        if tau < 0.0 {
            return Err(KernelError::NegativeTime(tau));
        }
        let e2 = self.cut.epsilon * self.cut.epsilon;
        let t2 = tau * tau;
        let s = t2 + e2;
        Ok(-self.prefactor_n1 * tau * (t2 - 3.0 * e2) / (s * s * s))
    }

    /// N2(t) = integral of N1 from 0 to t,
    /// (2 alpha hbar omega_max^2 / 3 pi c^2) (t^4 + 3 t^2 eps^2) / (t^2 + eps^2)^2.
    pub fn n2(&self, t: f64) -> Result<f64, KernelError> {
        if t < 0.0 {
            return Err(KernelError::NegativeTime(t));
        }
        let e2 = self.cut.epsilon * self.cut.epsilon;
        let t2 = t * t;
        let s = t2 + e2;
        Ok(self.n2_plateau() * t2 * (t2 + 3.0 * e2) / (s * s))
    }

    /// Large-time plateau of N2: 2 alpha hbar omega_max^2 / (3 pi c^2).
    pub fn n2_plateau(&self) -> f64 {
        let w = self.cut.omega_max;
        2.0 * self.alpha * self.ctx.hbar * w * w / (3.0 * PI * self.ctx.c * self.ctx.c)
    }

    /// Three-term identity for integrals of D against a smooth function with
    /// the given boundary data, valid for spans t >> eps:
    /// -(2 alpha hbar/3c^2) f'''(0) - (4 alpha hbar omega_max/3 pi c^2) f''(0)
    /// + (2 e^2 omega_max^3/3 pi^2 eps0 c^3) f(0).
    pub fn dissipation_weighted_integral(&self, stencil: DerivativeStencil) -> f64 {
        let c2 = self.ctx.c * self.ctx.c;
        let hbar = self.ctx.hbar;
        let w = self.cut.omega_max;
        -(2.0 * self.alpha * hbar / (3.0 * c2)) * stencil.f3
            - (4.0 * self.alpha * hbar * w / (3.0 * PI * c2)) * stencil.f2
            + 2.0 * self.vem_coefficient() * stencil.f0
    }

    /// Adaptive quadrature of the integral of D(tau) f(tau) over [0, t],
    /// resolving the eps-scale peak. Validation route for
    /// [`Self::dissipation_weighted_integral`].
    pub fn dissipation_weighted_integral_bruteforce<F: Fn(f64) -> f64>(
        &self,
        f: F,
        t: f64,
    ) -> Result<f64, KernelError> {
        let eps = self.cut.epsilon;
        if t < 20.0 * eps {
            return Err(KernelError::SpanTooShort { t, eps });
        }
        // Scale for the absolute-tolerance floor: |D| peaks at O(pref/eps^3).
        let scale = self.prefactor_noise / (eps * eps * eps) * f(0.0).abs().max(1.0);
        let g = |tau: f64| self.dissipation_kernel(tau) * f(tau);
        let near = quad::peaked(&g, 0.0, (40.0 * eps).min(t), eps, 1e-13, 1e-15 * scale * eps)?;
        let far = if t > 40.0 * eps {
            quad::peaked(&g, 40.0 * eps, t, eps, 1e-13, 1e-15 * scale * eps)?
        } else {
            0.0
        };
        Ok(near + far)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn family() -> KernelFamily {
        let ctx = PhysicalContext::natural(0.0072973525693, 1.0);
        let cut = CutoffConfig::new(1.0, &ctx).unwrap();
        KernelFamily::new(ctx, cut)
    }

    #[test]
    fn prefactor_consistency() {
        // e^2/(pi^2 eps0 c^3) must equal 4 alpha hbar / (pi c^2).
        let k = family();
        let alt = 4.0 * k.ctx.fine_structure() * k.ctx.hbar / (PI * k.ctx.c * k.ctx.c);
        assert!((k.prefactor_noise - alt).abs() / alt < 1e-14);
        assert!(k.prefactor_noise > 0.0 && k.prefactor_n1 > 0.0);
    }

    #[test]
    fn smoothed_delta_values() {
        let k = family();
        let eps = k.epsilon();
        assert!((k.smoothed_delta(0.0) - 1.0 / (PI * eps)).abs() < 1e-14);
        let w3 = k.cut.omega_max.powi(3);
        assert!((k.smoothed_delta_d2(0.0) + 2.0 * w3 / PI).abs() / (w3 / PI) < 1e-14);
        // Even and positive.
        assert_eq!(k.smoothed_delta(0.7), k.smoothed_delta(-0.7));
        assert!(k.smoothed_delta(3.0) > 0.0);
    }

    #[test]
    fn smoothed_delta_derivatives_match_finite_differences() {
        let k = family();
        let h = 1e-5;
        for &tau in &[0.3, 1.0, 2.5] {
            let d1 = (k.smoothed_delta(tau + h) - k.smoothed_delta(tau - h)) / (2.0 * h);
            assert!((d1 - k.smoothed_delta_d1(tau)).abs() / d1.abs() < 1e-8);
            let d2 = (k.smoothed_delta_d1(tau + h) - k.smoothed_delta_d1(tau - h)) / (2.0 * h);
            assert!((d2 - k.smoothed_delta_d2(tau)).abs() / d2.abs().max(1e-6) < 1e-7);
            // Floor at the natural O(1/(pi eps^3)) scale: tau = eps is an
            // exact zero of the third derivative.
            let d3 = (k.smoothed_delta_d2(tau + h) - k.smoothed_delta_d2(tau - h)) / (2.0 * h);
            assert!((d3 - k.smoothed_delta_d3(tau)).abs() / d3.abs().max(1.0) < 1e-7);
        }
    }

    #[test]
    fn correlator_special_points() {
        let k = family();
        let eps = k.epsilon();
        let scale = k.ctx.hbar / (PI * PI * k.ctx.eps0 * k.ctx.c.powi(3));
        let c0 = k.vacuum_correlator(0.0);
        assert!((c0.re - scale / eps.powi(4)).abs() / c0.re < 1e-14);
        assert!(c0.im.abs() / c0.re < 1e-14);
        // (1 - i)^4 = -4, so the correlator at tau = eps is real and negative.
        let ce = k.vacuum_correlator(eps);
        assert!((ce.re + scale / (4.0 * eps.powi(4))).abs() / ce.re.abs() < 1e-12);
        assert!(ce.im.abs() / ce.re.abs() < 1e-12);
    }

    #[test]
    fn correlator_conjugate_symmetry() {
        let k = family();
        for i in 0..1000 {
            let tau = -5.0 + 10.0 * (i as f64) / 999.0;
            let a = k.vacuum_correlator(-tau);
            let b = k.vacuum_correlator(tau).conj();
            assert!((a - b).norm() <= 1e-15 * b.norm());
        }
    }

    #[test]
    fn noise_kernel_values_and_parity() {
        let k = family();
        let eps = k.epsilon();
        let n0 = k.noise_kernel(0.0);
        assert!((n0 - k.prefactor_noise / eps.powi(4)).abs() / n0 < 1e-14);
        // Zero crossings at (sqrt(2) -+ 1) eps.
        let r1 = (2.0f64.sqrt() - 1.0) * eps;
        let r2 = (2.0f64.sqrt() + 1.0) * eps;
        assert!(k.noise_kernel(r1).abs() < 1e-10 * n0);
        assert!(k.noise_kernel(r2).abs() < 1e-10 * n0);
        for i in 0..1000 {
            let tau = -8.0 + 16.0 * (i as f64) / 999.0;
            assert_eq!(k.noise_kernel(tau), k.noise_kernel(-tau));
        }
        // N = (e^2/hbar) Re[correlator].
        let e2 = k.ctx.e_charge * k.ctx.e_charge;
        for &tau in &[0.05, 1.0, 10.0 * eps] {
            let via_corr = e2 / k.ctx.hbar * k.vacuum_correlator(tau).re;
            assert!((k.noise_kernel(tau) - via_corr).abs() <= 1e-12 * via_corr.abs());
        }
    }

    #[test]
    fn dissipation_kernel_forms_agree() {
        let k = family();
        let eps = k.epsilon();
        assert_eq!(k.dissipation_kernel(0.0), 0.0);
        assert_eq!(k.dissipation_kernel(-1.0), 0.0);
        assert!(k.dissipation_kernel(2.0 * eps) < 0.0);
        let mut tau = eps / 10.0;
        while tau < 100.0 * eps {
            let a = k.dissipation_kernel(tau);
            let b = k.dissipation_kernel_delta_form(tau);
            assert!((a - b).abs() <= 1e-12 * a.abs());
            tau *= 1.17;
        }
        // D = -(2 e^2/hbar) Im[correlator] for tau > 0.
        let e2 = k.ctx.e_charge * k.ctx.e_charge;
        for &tau in &[0.3 * eps, 2.0 * eps, 30.0 * eps] {
            let via_corr = -2.0 * e2 / k.ctx.hbar * k.vacuum_correlator(tau).im;
            assert!((k.dissipation_kernel(tau) - via_corr).abs() <= 1e-10 * via_corr.abs());
        }
    }

    #[test]
    fn n1_roots_and_errors() {
        let k = family();
        let eps = k.epsilon();
        assert_eq!(k.n1(0.0).unwrap(), 0.0);
        let root = 3.0f64.sqrt() * eps;
        assert!(k.n1(root).unwrap().abs() < 1e-14 * k.prefactor_n1 / eps.powi(2));
        assert!(k.n1(-0.1).is_err());
    }

    #[test]
    fn n2_overshoot_and_plateau() {
        let k = family();
        let eps = k.epsilon();
        assert_eq!(k.n2(0.0).unwrap(), 0.0);
        assert!(k.n2(-0.1).is_err());
        let plateau = k.n2_plateau();
        assert!((k.n2(1e6 * eps).unwrap() - plateau).abs() / plateau < 1e-10);
        // N2 rises to a 9/8 overshoot at t = sqrt(3) eps (where N1 = N2'
        // changes sign), then relaxes to the plateau from above.
        let t_peak = 3.0f64.sqrt() * eps;
        assert!((k.n2(t_peak).unwrap() - 1.125 * plateau).abs() / plateau < 1e-14);
        let mut prev = 0.0;
        for i in 1..=100 {
            let t = t_peak * i as f64 / 100.0;
            let v = k.n2(t).unwrap();
            assert!(v >= prev - 1e-18);
            prev = v;
        }
        for i in 1..=100 {
            let t = t_peak + (100.0 * eps - t_peak) * i as f64 / 100.0;
            let v = k.n2(t).unwrap();
            assert!(v <= prev + 1e-18);
            assert!(v >= plateau - 1e-18);
            prev = v;
        }
    }

    #[test]
    fn identity_stencil_examples() {
        let k = family();
        // f = 1: only the f(0) term survives; it is twice the V_EM
        // coefficient because the potential cancels half the plateau.
        let v = k.dissipation_weighted_integral(DerivativeStencil::new(1.0, 0.0, 0.0));
        assert!((v - 2.0 * k.vem_coefficient()).abs() / v < 1e-14);
        // f = cos(w0 tau).
        let w0 = 1e-3 * k.cut.omega_max;
        let v = k.dissipation_weighted_integral(DerivativeStencil::new(1.0, -w0 * w0, 0.0));
        let c2 = k.ctx.c * k.ctx.c;
        let expected = 4.0 * k.ctx.fine_structure() * k.ctx.hbar * k.cut.omega_max
            / (3.0 * PI * c2)
            * w0
            * w0
            + 2.0 * k.vem_coefficient();
        assert!((v - expected).abs() / expected < 1e-14);
        // f = sin(w0 tau)/(m w0).
        let m = 1.0;
        let v = k.dissipation_weighted_integral(DerivativeStencil::new(0.0, 0.0, -w0 * w0 / m));
        let expected = 2.0 * k.ctx.fine_structure() * k.ctx.hbar / (3.0 * c2) * w0 * w0 / m;
        assert!((v - expected).abs() / expected < 1e-14);
    }

    #[test]
    fn bruteforce_requires_span() {
        let k = family();
        assert!(matches!(
            k.dissipation_weighted_integral_bruteforce(|_| 1.0, 1.0),
            Err(KernelError::SpanTooShort { .. })
        ));
    }

    #[test]
    fn bruteforce_matches_identity_for_constant() {
        let k = family();
        let eps = k.epsilon();
        let brute = k
            .dissipation_weighted_integral_bruteforce(|_| 1.0, 100.0 * eps)
            .unwrap();
        let identity = k.dissipation_weighted_integral(DerivativeStencil::new(1.0, 0.0, 0.0));
        assert!((brute - identity).abs() / identity.abs() < 1e-4);
    }

    #[test]
    fn bruteforce_cubic() {
        // f = tau^3 has stencil (0, 0, 6): the identity value is
        // -(2 alpha hbar/3c^2) * 6; upper-boundary corrections decay like
        // eps/t, hence the long span.
        let k = family();
        let eps = k.epsilon();
        let brute = k
            .dissipation_weighted_integral_bruteforce(|tau| tau * tau * tau, 1e4 * eps)
            .unwrap();
        let identity = k.dissipation_weighted_integral(DerivativeStencil::new(0.0, 0.0, 6.0));
        assert!((brute - identity).abs() / identity.abs() < 1e-3);
    }
}
