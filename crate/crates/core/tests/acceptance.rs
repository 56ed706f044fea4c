//! Acceptance gate: one test per criterion, each printing a single
//! `criterion NN <slug>: PASS|FAIL` line before asserting.

mod common;

use vqs::config::{ExperimentConfig, ExperimentName};
use vqs::kernels::{DerivativeStencil, KernelFamily};
use vqs::propagator::{
    propagate, Basis, DensityMatrix, PotentialKind, PropagateOptions, SystemSpec,
};
use vqs::quad;
use vqs::units::{CutoffConfig, PhysicalContext};

const ALPHA_CODATA: f64 = 0.0072973525693;

fn family(alpha: f64, omega_max: f64) -> KernelFamily {
    let ctx = PhysicalContext::natural(alpha, 1.0);
    let cut = CutoffConfig::new(omega_max, &ctx).unwrap();
    KernelFamily::new(ctx, cut)
}

fn report(num: u32, slug: &str, pass: bool, detail: &str) {
    println!("criterion {num:02} {slug}: {} {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {num:02} {slug} failed: {detail}");
}

/// Runs a built-in experiment preset into a scratch directory and reports
/// its summary verdict as the criterion verdict.
fn delegate(num: u32, slug: &str, name: ExperimentName) {
    let mut cfg = ExperimentConfig::defaults(name);
    let dir = std::env::temp_dir().join(format!("vqs-acc-{}-{}", name.as_str(), std::process::id()));
    cfg.output_dir = dir.to_string_lossy().into_owned();
    let summary = vqs::experiment::run(&cfg)
        .unwrap_or_else(|e| panic!("criterion {num:02} {slug}: experiment error {e}"));
    let _ = std::fs::remove_dir_all(&dir);
    report(num, slug, summary.passed(), &summary.metrics.to_string());
}

#[test]
fn acceptance_01_coherence_length_plateau() {
    delegate(1, "coherence-length-plateau", ExperimentName::CoherenceLength);
}

#[test]
fn acceptance_02_free_particle_no_runaway() {
    delegate(2, "free-particle-no-runaway", ExperimentName::FreeParticle);
}

#[test]
fn acceptance_03_classical_runaway_rate() {
    delegate(3, "classical-runaway-rate", ExperimentName::ClassicalRunaway);
}

#[test]
fn acceptance_04_vem_cancellation() {
    delegate(4, "vem-cancellation", ExperimentName::VemCancel);
}

/// Brute-force dissipation-weighted integrals vs the three-term identity for
/// all five stencil members, at t = 100 eps with omega0 eps = 1e-3, plus
/// monotone error decrease across eps in {1e-2, 1e-3, 1e-4}/omega0.
#[test]
fn acceptance_05_appendix_identity() {
    let w0 = 1.0;
    let m = 1.0;
    let eps_targets = [1e-2, 1e-3, 1e-4];
    let mut errs: Vec<Vec<f64>> = Vec::new();
    for &eps_t in &eps_targets {
        let k = family(ALPHA_CODATA, w0 / eps_t);
        let t = 100.0 * k.epsilon();
        let cases: Vec<(Box<dyn Fn(f64) -> f64>, DerivativeStencil)> = vec![
            (Box::new(|_| 1.0), DerivativeStencil::new(1.0, 0.0, 0.0)),
            (Box::new(move |tau: f64| (w0 * tau).cos()), DerivativeStencil::new(1.0, -w0 * w0, 0.0)),
            (
                Box::new(move |tau: f64| (w0 * tau).sin() / (m * w0)),
                DerivativeStencil::new(0.0, 0.0, -w0 * w0 / m),
            ),
            (Box::new(|tau: f64| tau * tau), DerivativeStencil::new(0.0, 2.0, 0.0)),
            (Box::new(|tau: f64| tau * tau * tau), DerivativeStencil::new(0.0, 0.0, 6.0)),
        ];
        let mut row = Vec::new();
        for (f, stencil) in cases {
            let identity = k.dissipation_weighted_integral(stencil);
            let brute = k.dissipation_weighted_integral_bruteforce(&*f, t).unwrap();
            row.push((brute - identity).abs() / identity.abs());
        }
        errs.push(row);
    }
    let members = ["1", "cos", "sin/(m w0)", "tau^2", "tau^3"];
    let within = errs[1].iter().all(|&e| e < 1e-3);
    let decreasing =
        (0..members.len()).all(|j| errs[0][j] > errs[1][j] && errs[1][j] > errs[2][j]);
    let detail = format!(
        "{{\"rel_err_at_w0eps_1e-3\": {:?}, \"members\": {:?}, \"within_1e-3\": {within}, \"decreasing\": {decreasing}}}",
        errs[1], members
    );
    report(5, "appendix-identity", within && decreasing, &detail);
}

/// Closed-form kernels vs the frequency-integral oracle on 100 log-spaced
/// lags; relative error floored by the kernel envelope near N's zeros.
#[test]
fn acceptance_06_kernel_mode_sum_oracle() {
    let k = family(ALPHA_CODATA, 2.0);
    let eps = k.epsilon();
    let mut worst = 0.0f64;
    for &tau in &common::tau_grid(eps) {
        let envelope = k.prefactor_noise / (tau * tau + eps * eps).powi(2);
        let n_oracle = common::noise_oracle(&k, tau);
        let d_oracle = common::dissipation_oracle(&k, tau);
        let en = (k.noise_kernel(tau) - n_oracle).abs() / n_oracle.abs().max(1e-3 * envelope);
        let ed =
            (k.dissipation_kernel(tau) - d_oracle).abs() / d_oracle.abs().max(1e-3 * envelope);
        worst = worst.max(en).max(ed);
    }
    report(6, "kernel-mode-sum-oracle", worst < 1e-8, &format!("{{\"max_rel_err\": {worst:e}}}"));
}

/// N1 against quadrature of N, and N2 against quadrature of N1, on 100
/// log-spaced points each.
#[test]
fn acceptance_07_n1_n2_quadrature() {
    let k = family(ALPHA_CODATA, 1.0);
    let eps = k.epsilon();
    let n1_scale = k.prefactor_n1 / (eps * eps);
    let mut worst = 0.0f64;
    for &t in &common::tau_grid(eps) {
        let o1 = quad::peaked(&|u: f64| k.noise_kernel(u), 0.0, t, eps, 1e-13, 1e-16).unwrap();
        let n1 = k.n1(t).unwrap();
        worst = worst.max((n1 - o1).abs() / n1.abs().max(1e-6 * n1_scale));
        let o2 = quad::peaked(
            &|u: f64| k.n1(u).unwrap(),
            0.0,
            t,
            eps,
            1e-13,
            1e-16 * k.n2_plateau(),
        )
        .unwrap();
        let n2 = k.n2(t).unwrap();
        worst = worst.max((n2 - o2).abs() / n2.abs().max(1e-6 * k.n2_plateau()));
    }
    report(7, "n1-n2-quadrature", worst < 1e-9, &format!("{{\"max_rel_err\": {worst:e}}}"));
}

#[test]
fn acceptance_08_harmonic_damping() {
    delegate(8, "harmonic-damping", ExperimentName::HarmonicDamping);
}

#[test]
fn acceptance_09_false_decoherence() {
    delegate(9, "false-decoherence", ExperimentName::FalseDecoherence);
}

#[test]
fn acceptance_10_collisional_contrast() {
    delegate(10, "collisional-contrast", ExperimentName::CollisionalContrast);
}

/// Dedicated coupled runs (damped harmonic and free) with eigenvalue
/// tracking on: trace drift and Hermiticity residual bounded, smallest
/// eigenvalue recorded at every sample.
#[test]
fn acceptance_11_structural_invariants() {
    let mut max_trace = 0.0f64;
    let mut max_herm = 0.0f64;
    let mut min_eig = f64::INFINITY;
    let mut samples = 0usize;
    let opts = PropagateOptions { track_min_eig: true, ..Default::default() };

    let kern = family(0.0075, 5.0);
    let mass = 2.0;
    let w_h = (1.0 + 2.0 * kern.vem_coefficient() / mass).sqrt();
    let spec = SystemSpec {
        kind: PotentialKind::Harmonic { omega0: 1.0 },
        mass,
        basis: Basis::OscillatorNumber { dim: 16, omega_basis: w_h },
    };
    let rho0 = DensityMatrix::coherent_state(spec.basis.clone(), 3.0f64.sqrt().into()).unwrap();
    let traj = propagate(&rho0, &spec, 0.05, 400, &kern, &opts).unwrap();
    for t in [&traj] {
        max_trace = t.trace_err.iter().fold(max_trace, |a, &b| a.max(b));
        max_herm = t.herm_err.iter().fold(max_herm, |a, &b| a.max(b));
        min_eig = t.min_eig.iter().fold(min_eig, |a, &b| a.min(b));
        samples += t.min_eig.len();
    }

    let kern = family(ALPHA_CODATA, 1.0);
    let mass = 1e8;
    let omega_basis = (2.0 * kern.vem_coefficient() / mass).sqrt();
    let spec = SystemSpec {
        kind: PotentialKind::Free,
        mass,
        basis: Basis::OscillatorNumber { dim: 16, omega_basis },
    };
    let alpha_c = DensityMatrix::coherent_alpha(0.0, 5.0, mass, omega_basis, kern.ctx.hbar);
    let rho0 = DensityMatrix::coherent_state(spec.basis.clone(), alpha_c).unwrap();
    let traj = propagate(&rho0, &spec, 2.0 * kern.epsilon(), 500, &kern, &opts).unwrap();
    max_trace = traj.trace_err.iter().fold(max_trace, |a, &b| a.max(b));
    max_herm = traj.herm_err.iter().fold(max_herm, |a, &b| a.max(b));
    min_eig = traj.min_eig.iter().fold(min_eig, |a, &b| a.min(b));
    samples += traj.min_eig.len();

    let logged = samples > 0 && min_eig.is_finite();
    let pass = max_trace <= 1e-9 && max_herm <= 1e-9 && logged;
    let detail = format!(
        "{{\"max_trace_drift\": {max_trace:e}, \"max_herm_residual\": {max_herm:e}, \"min_eigenvalue\": {min_eig:e}, \"samples\": {samples}}}"
    );
    report(11, "structural-invariants", pass, &detail);
}
