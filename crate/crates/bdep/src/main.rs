//! Command-line front end: transport tables, gradient checks, PDE solves,
//! stochastic simulation, the exact layer, and the full experiments. Every
//! output CSV comes with a manifest sufficient to regenerate it
//! bit-identically.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use bdep::config::{self, Config};
use bdep::error::Error;
use bdep::experiments::{
    correction_experiment, entropy_experiment, hydro_limit_experiment, CorrectionConfig,
    EntropyConfig, HydroConfig,
};
use bdep::kmc::{run_ensemble, InitialCondition, Observable};
use bdep::master;
use bdep::measures::{
    diffusivity, diffusivity_via_covariance, mobility, ProductMeasure, Transport,
};
use bdep::model::{RateModel, TimeFn};
use bdep::pde::{
    apriori_diagnostics, quasi_static_gap, quasi_static_profiles, solve_correction_uniform,
    solve_parabolic, solve_stationary, GridProfile,
};

#[derive(Parser)]
#[command(
    name = "bdep",
    about = "Boundary-driven weakly asymmetric exclusion processes: \
             simulation and numerical analysis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the base seed from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (env: BDEP_OUT).
    #[arg(long, default_value = "out", global = true)]
    out: PathBuf,
    /// Output format (only `csv` is supported).
    #[arg(long, default_value = "csv", global = true)]
    format: String,
}

#[derive(Subcommand)]
enum Command {
    /// Transport coefficients over a density grid, with the covariance
    /// cross-check and the Einstein-relation residual.
    Transport {
        #[command(flatten)]
        common: Common,
        /// Model preset (`ssep` or `two-body`) if no config is given.
        #[arg(long)]
        model: Option<String>,
    },
    /// Verifies the gradient decomposition of the model.
    CheckGradient {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: Option<String>,
    },
    /// Macroscopic solvers.
    Pde {
        #[command(subcommand)]
        cmd: PdeCommand,
    },
    /// Stochastic ensemble simulation.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Exact finite-state layer.
    Exact {
        #[command(subcommand)]
        cmd: ExactCommand,
    },
    /// Full micro-vs-macro experiments.
    Experiment {
        #[command(subcommand)]
        cmd: ExperimentCommand,
    },
}

#[derive(Subcommand)]
enum PdeCommand {
    /// Time-dependent solve; reports profiles at the experiment checkpoints.
    Run {
        #[command(flatten)]
        common: Common,
    },
    /// Stationary profile for the drive frozen at t = 0.
    Stationary {
        #[command(flatten)]
        common: Common,
    },
    /// Quasi-static correction profile for a constant diffusivity.
    Correction {
        #[command(flatten)]
        common: Common,
        /// Constant diffusivity D0.
        #[arg(long = "D-const", alias = "d-const", default_value_t = 1.0)]
        d_const: f64,
        /// Drive speed α'(t).
        #[arg(long, default_value_t = 0.1)]
        alpha_prime: f64,
        /// Instantaneous flat density α.
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
        /// Grid resolution.
        #[arg(long, default_value_t = 256)]
        m: usize,
    },
    /// Gap between the rescaled slow solution and the correction, per ν.
    Quasistatic {
        #[command(flatten)]
        common: Common,
    },
    /// Sup-norm shape diagnostics across the ν family.
    Diagnostics {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Subcommand)]
enum ExactCommand {
    /// Kolmogorov forward equation; reports site marginals.
    Evolve {
        #[command(flatten)]
        common: Common,
    },
    /// Stationary distribution at t = 0; reports site marginals.
    Stationary {
        #[command(flatten)]
        common: Common,
    },
    /// Exact relative-entropy trajectory against the local equilibrium.
    Entropy {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Subcommand)]
enum ExperimentCommand {
    /// Block densities at diffusive speed against the hydrodynamic PDE.
    Hydro {
        #[command(flatten)]
        common: Common,
    },
    /// Super-diffusive correction comparison.
    Correction {
        #[command(flatten)]
        common: Common,
    },
    /// Exact normalized-entropy trend.
    Entropy {
        #[command(flatten)]
        common: Common,
    },
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("BDEP_THREADS") {
        if let Ok(k) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(k).build_global();
        }
    }
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::Validation(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

struct Ctx {
    config: Config,
    config_text: String,
    out: PathBuf,
    seed: Option<u64>,
}

impl Ctx {
    fn new(common: &Common) -> Result<Self, Error> {
        if common.format != "csv" {
            return Err(Error::Validation(format!(
                "unsupported output format {:?} (only csv)",
                common.format
            )));
        }
        let (config, config_text) = match &common.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)?;
                (Config::parse(&text)?, text)
            }
            None => (Config::default(), String::new()),
        };
        let out = std::env::var("BDEP_OUT")
            .map(PathBuf::from)
            .unwrap_or_else(|_| common.out.clone());
        Ok(Ctx {
            config,
            config_text,
            out,
            seed: common.seed,
        })
    }

    fn model(&self, flag: &Option<String>) -> Result<RateModel, Error> {
        match flag {
            Some(name) => RateModel::preset(name),
            None => self.config.model.build(),
        }
    }

    fn base_seed(&self) -> u64 {
        self.seed.unwrap_or(self.config.experiment.base_seed)
    }

    fn emit(
        &self,
        name: &str,
        header: &[&str],
        rows: &[Vec<f64>],
        notes: &[(&str, String)],
    ) -> Result<(), Error> {
        let csv = self.out.join(format!("{name}.csv"));
        config::write_csv(&csv, header, rows)?;
        config::write_manifest(&self.out, name, &self.config_text, self.base_seed(), notes)?;
        println!("wrote {}", csv.display());
        Ok(())
    }

    fn initial_profile(&self) -> Option<&TimeFn> {
        self.config.initial.as_ref()
    }

    fn checkpoints(&self) -> Result<&[f64], Error> {
        let cps = &self.config.experiment.checkpoints;
        if cps.is_empty() {
            return Err(Error::Validation(
                "set [experiment] checkpoints in the config".into(),
            ));
        }
        Ok(cps)
    }
}

fn dispatch(command: Command) -> Result<(), Error> {
    match command {
        Command::Transport { common, model } => {
            let ctx = Ctx::new(&common)?;
            let model = ctx.model(&model)?;
            let mut rows = Vec::new();
            println!("theta,D,chi,D_cov,einstein_residual");
            for k in 1..20 {
                let theta = k as f64 * 0.05;
                let d = diffusivity(&model, theta);
                let chi = mobility(&model, theta);
                let d_cov = diffusivity_via_covariance(&model, theta);
                let einstein = (d - chi / (theta * (1.0 - theta))).abs();
                println!("{theta:.2},{d:.12},{chi:.12},{d_cov:.12},{einstein:.3e}");
                rows.push(vec![theta, d, chi, d_cov, einstein]);
            }
            ctx.emit(
                "transport",
                &["theta", "D", "chi", "D_cov", "einstein_residual"],
                &rows,
                &[("model", model.name().to_string())],
            )
        }
        Command::CheckGradient { common, model } => {
            let ctx = Ctx::new(&common)?;
            let model = ctx.model(&model)?;
            let residual = model.gradient_residual();
            if model.verify_gradient() {
                println!("OK (residual {residual:.3e})");
                Ok(())
            } else {
                Err(Error::Validation(format!(
                    "gradient decomposition of '{}' fails: residual {residual:.3e}",
                    model.name()
                )))
            }
        }
        Command::Pde { cmd } => pde_dispatch(cmd),
        Command::Simulate { common } => {
            let ctx = Ctx::new(&common)?;
            let model = ctx.config.model.build()?;
            let drive = ctx.config.drive()?;
            let lattice = ctx.config.lattice()?;
            let n = lattice.n;
            let theta_time = lattice
                .theta_time
                .unwrap_or_else(|| (n * n) as f64 * drive.ell);
            let checkpoints = ctx.checkpoints()?.to_vec();
            let replicas = ctx.config.experiment.replicas.max(1);
            let gamma = ctx.initial_profile().cloned();
            let mu = ProductMeasure::from_profile(n, |x| match &gamma {
                Some(f) => f.eval(x),
                None => 0.5 * (drive.alpha0(0.0) + drive.alpha1(0.0)),
            })?;
            let k = ctx.config.experiment.k_block.unwrap_or(0);
            let ens = run_ensemble(
                &model,
                &drive,
                n,
                theta_time,
                &InitialCondition::Product(mu),
                &checkpoints,
                &[Observable::BlockDensity { k }],
                replicas,
                ctx.base_seed(),
            )?;
            let mut rows = Vec::new();
            for (cp, &t) in checkpoints.iter().enumerate() {
                for j in 1..n {
                    rows.push(vec![
                        t,
                        j as f64,
                        ens.mean[cp][j - 1],
                        ens.stderr[cp][j - 1],
                        replicas as f64,
                    ]);
                }
            }
            ctx.emit(
                "ensemble",
                &["t", "j", "mean", "stderr", "n"],
                &rows,
                &[
                    ("model", model.name().to_string()),
                    ("theta_time", format!("{theta_time}")),
                    ("events", format!("{}", ens.total_events)),
                ],
            )
        }
        Command::Exact { cmd } => exact_dispatch(cmd),
        Command::Experiment { cmd } => experiment_dispatch(cmd),
    }
}

fn occupation_marginals(p: &[f64], n: usize) -> Vec<f64> {
    let mut marg = vec![0.0; n - 1];
    for (key, &w) in p.iter().enumerate() {
        for (j, m) in marg.iter_mut().enumerate() {
            if (key >> j) & 1 == 1 {
                *m += w;
            }
        }
    }
    marg
}

fn exact_dispatch(cmd: ExactCommand) -> Result<(), Error> {
    match cmd {
        ExactCommand::Evolve { common } => {
            let ctx = Ctx::new(&common)?;
            let model = ctx.config.model.build()?;
            let drive = ctx.config.drive()?;
            let lattice = ctx.config.lattice()?;
            let n = lattice.n;
            let theta_time = lattice
                .theta_time
                .unwrap_or_else(|| (n * n) as f64 * drive.ell);
            let times = ctx.checkpoints()?.to_vec();
            let gamma = ctx.initial_profile().cloned();
            let mu = ProductMeasure::from_profile(n, |x| match &gamma {
                Some(f) => f.eval(x),
                None => 0.5 * (drive.alpha0(0.0) + drive.alpha1(0.0)),
            })?;
            let p0 = mu.as_vector()?;
            let traj = master::evolve_forward(&p0, &model, &drive, theta_time, n, &times)?;
            let mut rows = Vec::new();
            for (t, p) in &traj {
                for (j, m) in occupation_marginals(p, n).iter().enumerate() {
                    rows.push(vec![*t, (j + 1) as f64, *m, 0.0, 1.0]);
                }
            }
            ctx.emit(
                "exact-evolve",
                &["t", "j", "mean", "stderr", "n"],
                &rows,
                &[("theta_time", format!("{theta_time}"))],
            )
        }
        ExactCommand::Stationary { common } => {
            let ctx = Ctx::new(&common)?;
            let model = ctx.config.model.build()?;
            let drive = ctx.config.drive()?;
            let n = ctx.config.lattice()?.n;
            let pi = master::stationary_state(&model, &drive, 0.0, n)?;
            let rows: Vec<Vec<f64>> = occupation_marginals(&pi, n)
                .iter()
                .enumerate()
                .map(|(j, m)| vec![0.0, (j + 1) as f64 / n as f64, *m])
                .collect();
            ctx.emit("exact-stationary", &["t", "x", "value"], &rows, &[])
        }
        ExactCommand::Entropy { common } => {
            let ctx = Ctx::new(&common)?;
            let (config, model, alpha, gamma) = entropy_inputs(&ctx)?;
            let report = entropy_experiment(&model, &alpha, gamma, &config)?;
            let rows: Vec<Vec<f64>> = report
                .rows
                .iter()
                .map(|r| vec![r.t, r.h, r.h_normalized])
                .collect();
            ctx.emit(
                "entropy",
                &["t", "H", "H_norm"],
                &rows,
                &[("theta_time", format!("{}", config.theta_time))],
            )
        }
    }
}

/// Shared setup of the exact-entropy runs: the drive must hold both
/// reservoirs at the same density, and the initial profile is read as
/// `α(0) + ε γ(x)`.
fn entropy_inputs(
    ctx: &Ctx,
) -> Result<(EntropyConfig, RateModel, TimeFn, impl Fn(f64) -> f64), Error> {
    let model = ctx.config.model.build()?;
    let drive = ctx.config.drive()?;
    if drive.alpha_left != drive.alpha_right {
        return Err(Error::Validation(
            "the entropy runs need equal boundary densities".into(),
        ));
    }
    let lattice = ctx.config.lattice()?;
    let n = lattice.n;
    let epsilon = ctx
        .config
        .experiment
        .epsilon
        .unwrap_or(drive.epsilon);
    let theta_time = lattice
        .theta_time
        .unwrap_or_else(|| (n * n) as f64 / epsilon);
    let config = EntropyConfig {
        n,
        epsilon,
        theta_time,
        times: ctx.checkpoints()?.to_vec(),
        m_grid: ctx.config.solver.m,
    };
    let alpha = drive.alpha_left;
    let a0 = alpha.eval(0.0);
    let initial = ctx.initial_profile().cloned();
    let gamma = move |x: f64| match &initial {
        Some(f) => (f.eval(x) - a0) / epsilon,
        None => 0.0,
    };
    Ok((config, model, alpha, gamma))
}

fn profiles_to_rows(profiles: &[GridProfile]) -> Vec<Vec<f64>> {
    let mut rows = Vec::new();
    for p in profiles {
        for (i, &v) in p.values.iter().enumerate() {
            rows.push(vec![p.t, i as f64 / p.m() as f64, v]);
        }
    }
    rows
}

fn pde_dispatch(cmd: PdeCommand) -> Result<(), Error> {
    match cmd {
        PdeCommand::Run { common } => {
            let ctx = Ctx::new(&common)?;
            let model = ctx.config.model.build()?;
            let transport = Transport::from_model(&model);
            let drive = ctx.config.drive()?;
            let initial = ctx.initial_profile().cloned().ok_or_else(|| {
                Error::Validation("pde run needs an [initial] profile".into())
            })?;
            let params = ctx.config.solver.params(drive.ell);
            let rho0 = GridProfile::from_fn(params.m, 0.0, |x| initial.eval(x));
            let times = ctx.checkpoints()?.to_vec();
            let sol = solve_parabolic(&transport, &drive, &rho0, &times, &params)?;
            ctx.emit(
                "pde-run",
                &["t", "x", "value"],
                &profiles_to_rows(&sol.profiles),
                &[
                    ("mass_residual", format!("{:.3e}", sol.mass_residual)),
                    ("steps", format!("{}", sol.steps)),
                ],
            )
        }
        PdeCommand::Stationary { common } => {
            let ctx = Ctx::new(&common)?;
            let model = ctx.config.model.build()?;
            let transport = Transport::from_model(&model);
            let drive = ctx.config.drive()?;
            let m = ctx.config.solver.m;
            let rho = solve_stationary(
                &transport,
                drive.alpha0(0.0),
                drive.alpha1(0.0),
                |x| drive.field.eval(0.0, x),
                m,
            )?;
            ctx.emit(
                "pde-stationary",
                &["t", "x", "value"],
                &profiles_to_rows(std::slice::from_ref(&rho)),
                &[],
            )
        }
        PdeCommand::Correction {
            common,
            d_const,
            alpha_prime,
            alpha,
            m,
        } => {
            let ctx = Ctx::new(&common)?;
            let transport = Transport::constant_d(d_const);
            let v = solve_correction_uniform(&transport, alpha, alpha_prime, m, 0.0)?;
            println!("v(0.5) = {:.12}", v.eval(0.5));
            ctx.emit(
                "pde-correction",
                &["t", "x", "value"],
                &profiles_to_rows(std::slice::from_ref(&v)),
                &[("D", format!("{d_const}")), ("alpha_prime", format!("{alpha_prime}"))],
            )
        }
        PdeCommand::Quasistatic { common } => {
            let ctx = Ctx::new(&common)?;
            let (transport, alpha, v0, nus, times, m) = quasi_inputs(&ctx)?;
            let rows = quasi_static_gap(&transport, &alpha, |x| v0.eval(x), &nus, &times, m)?;
            let table: Vec<Vec<f64>> = rows.iter().map(|r| vec![r.nu, r.t, r.gap]).collect();
            ctx.emit("quasistatic", &["nu", "t", "gap_l2"], &table, &[])
        }
        PdeCommand::Diagnostics { common } => {
            let ctx = Ctx::new(&common)?;
            let (transport, alpha, v0, nus, times, m) = quasi_inputs(&ctx)?;
            let mut family = Vec::new();
            for &nu in &nus {
                let sol = quasi_static_profiles(&transport, &alpha, |x| v0.eval(x), nu, &times, m)?;
                family.push((nu, 1.0 / nu, sol.profiles));
            }
            let report = apriori_diagnostics(&transport, &alpha, &family, |_| 0.0);
            let mut rows = Vec::new();
            for f in &report.families {
                for r in &f.rows {
                    rows.push(vec![
                        f.nu,
                        r.t,
                        r.sup_deviation,
                        r.sup_dx,
                        r.sup_dxx,
                        r.sup_f,
                        r.sup_dx_f,
                    ]);
                }
            }
            println!(
                "plateau slope {:.3}; dxx envelope B = {:.3}; delta = {:.4}; sup|F|*ell = {:.3}",
                report.plateau_slope, report.dxx_envelope, report.delta, report.sup_f_times_ell
            );
            ctx.emit(
                "diagnostics",
                &["nu", "t", "sup_dev", "sup_dx", "sup_dxx", "sup_F", "sup_dxF"],
                &rows,
                &[
                    ("plateau_slope", format!("{:.6}", report.plateau_slope)),
                    ("dxx_envelope", format!("{:.6}", report.dxx_envelope)),
                ],
            )
        }
    }
}

/// Shared setup of the quasi-static commands: constant-α drive path, initial
/// correction `v₀` from the config's initial profile (default `x(1-x)`),
/// the ν list, and report times.
type QuasiInputs = (Transport, TimeFn, TimeFn, Vec<f64>, Vec<f64>, usize);

fn quasi_inputs(ctx: &Ctx) -> Result<QuasiInputs, Error> {
    let model = ctx.config.model.build()?;
    let transport = Transport::from_model(&model);
    let drive = ctx.config.drive()?;
    if drive.alpha_left != drive.alpha_right {
        return Err(Error::Validation(
            "quasi-static runs need equal boundary densities".into(),
        ));
    }
    let v0 = ctx.initial_profile().cloned().unwrap_or(TimeFn::Sine {
        base: 0.0,
        amp: 0.0,
        omega: 0.0,
        phase: 0.0,
    });
    let nus = if ctx.config.experiment.nus.is_empty() {
        vec![10.0, 100.0, 1000.0]
    } else {
        ctx.config.experiment.nus.clone()
    };
    let times = ctx.checkpoints()?.to_vec();
    Ok((
        transport,
        drive.alpha_left,
        v0,
        nus,
        times,
        ctx.config.solver.m,
    ))
}

fn experiment_dispatch(cmd: ExperimentCommand) -> Result<(), Error> {
    match cmd {
        ExperimentCommand::Hydro { common } => {
            let ctx = Ctx::new(&common)?;
            let model = ctx.config.model.build()?;
            let drive = ctx.config.drive()?;
            let ns = if ctx.config.experiment.ns.is_empty() {
                vec![ctx.config.lattice()?.n]
            } else {
                ctx.config.experiment.ns.clone()
            };
            let config = HydroConfig {
                ns,
                checkpoints: ctx.checkpoints()?.to_vec(),
                replicas: ctx.config.experiment.replicas.max(1),
                k_block: ctx.config.experiment.k_block,
                m_grid: ctx.config.solver.m,
                base_seed: ctx.base_seed(),
            };
            let initial = ctx.initial_profile().cloned();
            let a0 = drive.alpha0(0.0);
            let a1 = drive.alpha1(0.0);
            let gamma = move |x: f64| match &initial {
                Some(f) => f.eval(x),
                None => a0 + (a1 - a0) * x,
            };
            let report = hydro_limit_experiment(&model, &drive, gamma, &config)?;
            let rows: Vec<Vec<f64>> = report
                .rows
                .iter()
                .map(|r| vec![r.n as f64, r.t, r.l1_error, r.mc_band])
                .collect();
            ctx.emit(
                "hydro",
                &["N", "t", "l1_error", "mc_band"],
                &rows,
                &[("events", format!("{}", report.total_events))],
            )
        }
        ExperimentCommand::Correction { common } => {
            let ctx = Ctx::new(&common)?;
            let model = ctx.config.model.build()?;
            let drive = ctx.config.drive()?;
            if drive.alpha_left != drive.alpha_right {
                return Err(Error::Validation(
                    "the correction experiment needs equal boundary densities".into(),
                ));
            }
            let config = CorrectionConfig {
                n: ctx.config.lattice()?.n,
                epsilon: ctx.config.experiment.epsilon,
                k_block: ctx.config.experiment.k_block,
                checkpoints: ctx.checkpoints()?.to_vec(),
                replicas: ctx.config.experiment.replicas.max(1),
                base_seed: ctx.base_seed(),
                m_grid: ctx.config.solver.m,
                c_fit: ctx.config.experiment.c_fit,
            };
            let initial = ctx.initial_profile().cloned();
            let gamma = move |x: f64| match &initial {
                Some(f) => f.eval(x),
                None => x * (1.0 - x),
            };
            let report = correction_experiment(&model, &drive.alpha_left, gamma, &config)?;
            let rows: Vec<Vec<f64>> = report
                .points
                .iter()
                .map(|p| vec![p.t, p.x, p.u_emp, p.u_stderr, p.v_theory])
                .collect();
            for s in &report.summaries {
                println!(
                    "t = {:.3}: L1 = {:.4e}, sup = {:.4e}, band = {:.4e}",
                    s.t, s.l1_distance, s.sup_distance, s.band
                );
            }
            ctx.emit(
                "correction",
                &["t", "x", "u_emp", "u_stderr", "v_theory"],
                &rows,
                &[
                    ("epsilon", format!("{}", report.epsilon)),
                    ("k_block", format!("{}", report.k_block)),
                    ("theta_time", format!("{}", report.theta_time)),
                    ("events", format!("{}", report.total_events)),
                ],
            )
        }
        ExperimentCommand::Entropy { common } => {
            let ctx = Ctx::new(&common)?;
            let (config, model, alpha, gamma) = entropy_inputs(&ctx)?;
            let report = entropy_experiment(&model, &alpha, gamma, &config)?;
            let rows: Vec<Vec<f64>> = report
                .rows
                .iter()
                .map(|r| vec![r.t, r.h, r.h_normalized])
                .collect();
            for r in &report.rows {
                println!("t = {:.3}: H = {:.6e}, H/(N eps^2) = {:.6e}", r.t, r.h, r.h_normalized);
            }
            ctx.emit("entropy", &["t", "H", "H_norm"], &rows, &[])
        }
    }
}
