use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use vqs::config::ExperimentConfig;
use vqs::decoherence::{self, SwitchingProfile};
use vqs::eom::{self, ClassicalState};
use vqs::experiment::{self, ExperimentError, EVOLVE_HEADER};
use vqs::kernels::KernelFamily;
use vqs::propagator::{self, Basis, DensityMatrix, PotentialKind, PropagateOptions, SystemSpec};
use vqs::units::{CutoffConfig, PhysicalContext};

#[derive(Parser)]
#[command(name = "vqs", version, about = "vacuum-fluctuation quantum dynamics simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Kernel-family tables
    Kernels {
        #[command(subcommand)]
        sub: KernelsCmd,
    },
    /// Propagate a density matrix and print observables as CSV
    Evolve(EvolveArgs),
    /// Equations of motion for mean values
    Eom {
        #[command(subcommand)]
        sub: EomCmd,
    },
    /// Coherence-length and switched-coupling diagnostics
    Decoherence {
        #[command(subcommand)]
        sub: DecoherenceCmd,
    },
    /// Run a named experiment from a config file, or all of them
    Run(RunArgs),
}

#[derive(Args)]
struct PhysicsArgs {
    /// Fine-structure constant (natural units)
    #[arg(long, default_value_t = 0.0072973525693)]
    alpha: f64,
    /// UV cutoff frequency
    #[arg(long, default_value_t = 1.0)]
    omega_max: f64,
    /// Bare mass
    #[arg(long, default_value_t = 1.0)]
    mass: f64,
}

impl PhysicsArgs {
    fn build(&self) -> Result<(PhysicalContext, CutoffConfig, KernelFamily), ExperimentError> {
        let ctx = PhysicalContext::natural(self.alpha, self.mass);
        ctx.validate().map_err(ExperimentError::Units)?;
        let cut = CutoffConfig::new(self.omega_max, &ctx).map_err(ExperimentError::Units)?;
        let kern = KernelFamily::new(ctx.clone(), cut);
        Ok((ctx, cut, kern))
    }
}

#[derive(Subcommand)]
enum KernelsCmd {
    /// Print tau,noise,dissipation,n1,n2 on a log-spaced grid
    Dump {
        #[command(flatten)]
        phys: PhysicsArgs,
        /// Smallest tau (default epsilon/10)
        #[arg(long, default_value_t = 0.0)]
        tmin: f64,
        /// Largest tau (default 1000 epsilon)
        #[arg(long, default_value_t = 0.0)]
        tmax: f64,
        #[arg(long, default_value_t = 200)]
        points: usize,
    },
}

#[derive(Args)]
struct EvolveArgs {
    #[command(flatten)]
    phys: PhysicsArgs,
    /// Oscillator frequency; 0 selects a free particle
    #[arg(long, default_value_t = 0.0)]
    omega0: f64,
    /// Oscillator-number basis dimension
    #[arg(long, default_value_t = 32)]
    dim: usize,
    #[arg(long, default_value_t = 0.0)]
    x0: f64,
    #[arg(long, default_value_t = 0.0)]
    p0: f64,
    /// Time step (default epsilon/2)
    #[arg(long, default_value_t = 0.0)]
    dt: f64,
    /// Final time (default 100 epsilon)
    #[arg(long, default_value_t = 0.0)]
    t_end: f64,
    #[arg(long, default_value_t = 1)]
    record_every: usize,
    /// Freeze master-equation coefficients at their plateau values
    #[arg(long)]
    markov: bool,
    /// Keep only the noise (decoherence) term of the influence
    #[arg(long)]
    decoherence_only: bool,
    /// Drop the induced potential V_EM from the Hamiltonian
    #[arg(long)]
    no_vem: bool,
    /// Turn the system-field coupling off entirely
    #[arg(long)]
    coupling_off: bool,
}

#[derive(Subcommand)]
enum EomCmd {
    /// Abraham-Lorentz dynamics with runaway diagnostics (CSV t,x,v,a)
    Classical {
        #[command(flatten)]
        phys: PhysicsArgs,
        #[arg(long, default_value_t = 0.0)]
        omega0: f64,
        #[arg(long, default_value_t = 0.0)]
        x0: f64,
        #[arg(long, default_value_t = 0.0)]
        v0: f64,
        #[arg(long, default_value_t = 0.0)]
        a0: f64,
        /// Final time in units of the runaway time t0
        #[arg(long, default_value_t = 5.0)]
        t_end_t0: f64,
        /// Step in units of t0
        #[arg(long, default_value_t = 0.02)]
        dt_t0: f64,
    },
    /// Runaway-free quantum mean-value dynamics (CSV t,x_mean,p_mean)
    Quantum {
        #[command(flatten)]
        phys: PhysicsArgs,
        #[arg(long, default_value_t = 0.0)]
        omega0: f64,
        #[arg(long, default_value_t = 0.0)]
        x0: f64,
        #[arg(long, default_value_t = 0.0)]
        p0: f64,
        #[arg(long, default_value_t = 10.0)]
        t_end: f64,
        #[arg(long, default_value_t = 0.01)]
        dt: f64,
    },
}

#[derive(Subcommand)]
enum DecoherenceCmd {
    /// Vacuum coherence length l_x(t) (CSV t,l_x)
    Length {
        #[command(flatten)]
        phys: PhysicsArgs,
        #[arg(long, default_value_t = 0.0)]
        tmin: f64,
        #[arg(long, default_value_t = 0.0)]
        tmax: f64,
        #[arg(long, default_value_t = 100)]
        points: usize,
    },
    /// Suppression factor for a superposition of separation dx at time t
    Factor {
        #[command(flatten)]
        phys: PhysicsArgs,
        #[arg(long)]
        dx: f64,
        #[arg(long)]
        t: f64,
    },
    /// Switched-coupling N2 vs ramp duration (false-decoherence scan)
    Switch {
        #[command(flatten)]
        phys: PhysicsArgs,
        /// Ramp durations in units of epsilon
        #[arg(long, value_delimiter = ',', default_values_t = vec![1e2, 3e2, 1e3])]
        ramps: Vec<f64>,
        /// Hold duration in units of epsilon
        #[arg(long, default_value_t = 2e3)]
        hold: f64,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Path to a key = value config file
    config: Option<PathBuf>,
    /// Run every named experiment with its defaults
    #[arg(long)]
    all: bool,
    /// Output root (overrides VQS_OUTPUT_DIR)
    #[arg(long, default_value = "")]
    output: String,
}

fn print_row(vals: &[f64]) {
    let cells: Vec<String> = vals.iter().map(|v| format!("{v:.16e}")).collect();
    println!("{}", cells.join(","));
}

const EXIT_BREACH: u8 = 2;
const EXIT_CONFIG: u8 = 3;

fn classify(err: &ExperimentError) -> u8 {
    match err {
        ExperimentError::Config(_) | ExperimentError::Units(_) | ExperimentError::Io(_) => {
            EXIT_CONFIG
        }
        ExperimentError::Propagator(propagator::PropagatorError::InvariantBreach { .. }) => {
            EXIT_BREACH
        }
        ExperimentError::Propagator(_) => EXIT_CONFIG,
        ExperimentError::Eom(eom::EomError::StepTooLarge { .. })
        | ExperimentError::Eom(eom::EomError::NonPositiveStep(_)) => EXIT_CONFIG,
        _ => EXIT_BREACH,
    }
}

fn dispatch(cli: Cli) -> Result<u8, ExperimentError> {
    match cli.command {
        Command::Kernels { sub: KernelsCmd::Dump { phys, tmin, tmax, points } } => {
            let (_, cut, kern) = phys.build()?;
            let lo = if tmin > 0.0 { tmin } else { cut.epsilon / 10.0 };
            let hi = if tmax > 0.0 { tmax } else { 1e3 * cut.epsilon };
            println!("tau,noise,dissipation,n1,n2");
            for i in 0..points.max(2) {
                let tau = lo * (hi / lo).powf(i as f64 / (points.max(2) - 1) as f64);
                print_row(&[
                    tau,
                    kern.noise_kernel(tau),
                    kern.dissipation_kernel(tau),
                    kern.n1(tau)?,
                    kern.n2(tau)?,
                ]);
            }
            Ok(0)
        }
        Command::Evolve(a) => {
            let (ctx, cut, kern) = a.phys.build()?;
            let kind = if a.omega0 > 0.0 {
                PotentialKind::Harmonic { omega0: a.omega0 }
            } else {
                PotentialKind::Free
            };
            let om_basis = if a.omega0 > 0.0 {
                a.omega0
            } else {
                (2.0 * kern.vem_coefficient() / a.phys.mass).sqrt()
            };
            let spec = SystemSpec {
                kind,
                mass: a.phys.mass,
                basis: Basis::OscillatorNumber { dim: a.dim, omega_basis: om_basis },
            };
            let alpha0 = DensityMatrix::coherent_alpha(a.x0, a.p0, a.phys.mass, om_basis, ctx.hbar);
            let rho0 = DensityMatrix::coherent_state(spec.basis.clone(), alpha0)?;
            let dt = if a.dt > 0.0 { a.dt } else { cut.epsilon / 2.0 };
            let t_end = if a.t_end > 0.0 { a.t_end } else { 100.0 * cut.epsilon };
            let n_steps = (t_end / dt).round().max(1.0) as usize;
            let opts = PropagateOptions {
                coupling_on: !a.coupling_off,
                include_vem: !a.no_vem,
                markov: a.markov,
                decoherence_only: a.decoherence_only,
                record_every: a.record_every,
                track_min_eig: true,
            };
            let traj = propagator::propagate(&rho0, &spec, dt, n_steps, &kern, &opts)?;
            println!("{EVOLVE_HEADER}");
            for i in 0..traj.times.len() {
                print_row(&[
                    traj.times[i],
                    traj.x_mean[i],
                    traj.p_mean[i],
                    traj.x_var[i],
                    traj.p_var[i],
                    traj.purity[i],
                    traj.trace_err[i],
                    traj.herm_err[i],
                    traj.min_eig[i],
                ]);
            }
            Ok(0)
        }
        Command::Eom { sub } => match sub {
            EomCmd::Classical { phys, omega0, x0, v0, a0, t_end_t0, dt_t0 } => {
                let (ctx, cut, _) = phys.build()?;
                let t0 = ctx.runaway_time(&cut);
                let m_r = ctx.renormalized_mass(&cut);
                let w2 = omega0 * omega0;
                let s0 = ClassicalState { x: x0, v: v0, a: a0 };
                let r = eom::integrate_classical_al(
                    move |x, _| -m_r * w2 * x,
                    s0,
                    t_end_t0 * t0,
                    dt_t0 * t0,
                    &ctx,
                    &cut,
                )?;
                println!("t,x,v,a");
                for i in 0..r.times.len() {
                    print_row(&[r.times[i], r.x[i], r.p[i] / m_r, r.a[i]]);
                }
                eprintln!(
                    "{}",
                    serde_json::json!({
                        "runaway": r.runaway,
                        "fitted_rate": r.fitted_rate,
                        "expected_rate": 1.0 / t0,
                        "t0": t0,
                    })
                );
                Ok(0)
            }
            EomCmd::Quantum { phys, omega0, x0, p0, t_end, dt } => {
                let (ctx, cut, _) = phys.build()?;
                let kind = if omega0 > 0.0 {
                    PotentialKind::Harmonic { omega0 }
                } else {
                    PotentialKind::Free
                };
                let spec = SystemSpec {
                    kind,
                    mass: phys.mass,
                    basis: Basis::OscillatorNumber { dim: 16, omega_basis: omega0.max(1.0) },
                };
                let r = eom::integrate_quantum_eom(&spec, x0, p0, t_end, dt, &ctx, &cut)?;
                println!("t,x_mean,p_mean");
                for i in 0..r.times.len() {
                    print_row(&[r.times[i], r.x[i], r.p[i]]);
                }
                eprintln!("{}", serde_json::json!({ "runaway": r.runaway }));
                Ok(0)
            }
        },
        Command::Decoherence { sub } => match sub {
            DecoherenceCmd::Length { phys, tmin, tmax, points } => {
                let (_, cut, kern) = phys.build()?;
                let lo = if tmin > 0.0 { tmin } else { cut.epsilon / 10.0 };
                let hi = if tmax > 0.0 { tmax } else { 1e4 * cut.epsilon };
                println!("t,l_x");
                for i in 0..points.max(2) {
                    let t = lo * (hi / lo).powf(i as f64 / (points.max(2) - 1) as f64);
                    print_row(&[t, decoherence::coherence_length(t, &kern)?]);
                }
                Ok(0)
            }
            DecoherenceCmd::Factor { phys, dx, t } => {
                let (_, _, kern) = phys.build()?;
                println!("dx,t,factor");
                print_row(&[dx, t, decoherence::decoherence_factor(dx, t, &kern)?]);
                Ok(0)
            }
            DecoherenceCmd::Switch { phys, ramps, hold } => {
                let (_, cut, kern) = phys.build()?;
                let eps = cut.epsilon;
                println!("ramp_duration,epsilon,n2_switched,n2_unswitched,ratio,analytic_limit");
                for ramp_eps in ramps {
                    let ramp = ramp_eps * eps;
                    let total = hold * eps + 2.0 * ramp;
                    let p =
                        SwitchingProfile::RaisedCosineRamp { a: 0.0, b: 1.0, c: 0.0, ramp, total };
                    let n2s = decoherence::switched_n2(&p, &kern)?;
                    let n2u = kern.n2(total)?;
                    print_row(&[
                        ramp,
                        eps,
                        n2s,
                        n2u,
                        n2s / n2u,
                        decoherence::false_dec_limit(&p, &kern),
                    ]);
                }
                Ok(0)
            }
        },
        Command::Run(a) => {
            if a.all {
                let summaries = experiment::run_all(&a.output)?;
                let mut all_pass = true;
                for s in &summaries {
                    all_pass &= s.passed();
                    println!("{}: {}", s.experiment, s.status);
                }
                return Ok(if all_pass { 0 } else { EXIT_BREACH });
            }
            let Some(path) = a.config else {
                eprintln!("error: provide a config file or --all");
                return Ok(EXIT_CONFIG);
            };
            let text = std::fs::read_to_string(&path)?;
            let mut cfg = ExperimentConfig::parse(&text)?;
            if !a.output.is_empty() {
                cfg.output_dir = a.output.clone();
            }
            let summary = experiment::run(&cfg)?;
            println!("{}: {}", summary.experiment, summary.status);
            println!("{}", serde_json::to_string_pretty(&summary.metrics).expect("json"));
            Ok(if summary.passed() { 0 } else { EXIT_BREACH })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap handles --help/--version with success; real parse errors
            // fall under the config-error exit code.
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_CONFIG) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(classify(&err))
        }
    }
}
