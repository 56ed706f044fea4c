//! Shared oracles for integration tests: the frequency-integral (mode-sum)
//! form of the vacuum kernels, evaluated without using the closed forms
//! under test.

#![allow(dead_code)]

use vqs::kernels::KernelFamily;
use vqs::quad;

/// I_cos = integral of w^3 e^{-eps w} cos(w tau) over [0, inf).
/// I_sin likewise with sin.
///
/// Direct panel summation loses (tau/eps)^4 digits to cancellation, so for
/// tau > 30 eps the integral is rewritten by four integrations by parts:
///   I_cos = 6/tau^4 + (1/tau^4) * integral g4(w) cos(w tau),
///   I_sin =           (1/tau^4) * integral g4(w) sin(w tau),
/// with g4 = d^4/dw^4 [w^3 e^{-eps w}] = e^{-eps w}(-24 eps + 36 eps^2 w
/// - 12 eps^3 w^2 + eps^4 w^3); the boundary terms vanish except g'''(0)=6.
pub fn mode_sum(tau: f64, eps: f64) -> (f64, f64) {
    let upper = 60.0 / eps;
    if tau <= 30.0 * eps {
        let g = |w: f64| w * w * w * (-eps * w).exp();
        (
            panel_sum(&|w| g(w) * (w * tau).cos(), upper, tau, eps),
            panel_sum(&|w| g(w) * (w * tau).sin(), upper, tau, eps),
        )
    } else {
        let g4 = |w: f64| {
            (-eps * w).exp()
                * (-24.0 * eps + 36.0 * eps * eps * w - 12.0 * eps.powi(3) * w * w
                    + eps.powi(4) * w * w * w)
        };
        let t4 = tau.powi(4);
        (
            (6.0 + panel_sum(&|w| g4(w) * (w * tau).cos(), upper, tau, eps)) / t4,
            panel_sum(&|w| g4(w) * (w * tau).sin(), upper, tau, eps) / t4,
        )
    }
}

/// Gauss panels sized to both the oscillation period and the decay scale.
fn panel_sum<F: Fn(f64) -> f64>(f: &F, upper: f64, tau: f64, eps: f64) -> f64 {
    let h = (std::f64::consts::PI / (2.0 * tau.max(1e-300))).min(0.2 / eps);
    let n = (upper / h).ceil() as usize;
    let mut acc = 0.0;
    for i in 0..n {
        let a = upper * i as f64 / n as f64;
        let b = upper * (i + 1) as f64 / n as f64;
        acc += quad::gauss10(f, a, b);
    }
    acc
}

/// Noise kernel through the mode sum: N = (e^2 / 6 pi^2 eps0 c^3) I_cos.
pub fn noise_oracle(kern: &KernelFamily, tau: f64) -> f64 {
    let pref = kern.ctx.e_charge * kern.ctx.e_charge
        / (6.0 * std::f64::consts::PI.powi(2) * kern.ctx.eps0 * kern.ctx.c.powi(3));
    pref * mode_sum(tau, kern.epsilon()).0
}

/// Dissipation kernel through the mode sum: D = (e^2 / 3 pi^2 eps0 c^3) I_sin.
pub fn dissipation_oracle(kern: &KernelFamily, tau: f64) -> f64 {
    let pref = kern.ctx.e_charge * kern.ctx.e_charge
        / (3.0 * std::f64::consts::PI.powi(2) * kern.ctx.eps0 * kern.ctx.c.powi(3));
    pref * mode_sum(tau, kern.epsilon()).1
}

/// 100 log-spaced points over [eps/10, 1000 eps].
pub fn tau_grid(eps: f64) -> Vec<f64> {
    (0..100)
        .map(|i| 0.1 * eps * 1e4f64.powf(i as f64 / 99.0))
        .collect()
}
