//! Command-line front end.
//!
//! | command | effect |
//! |---|---|
//! | `run <config>` | integrate, write `diagnostics.csv` and VTK snapshots to the output directory |
//! | `sweep-eps <config> <eps...>` | ε study, table in `sweep_eps.csv` |
//! | `sweep-gamma <config> <gamma...>` | γ study, table in `sweep_gamma.csv` |
//! | `verify <config>` | property suite, one line per check |
//! | `mesh-gen <spec> -o <path>` | write a built-in rectangle mesh to a file |
//!
//! Exit status: 0 on success, 1 when a verify check fails or output cannot be
//! written, 2 on a configuration or usage error (nothing is written), 3 when
//! the solver fails (the CSV rows of completed steps are kept).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::{Config, ConfigError};
use crate::diagnostics::{epsilon_sweep, gamma_sweep, simulate, DiagnosticsError};
use crate::mesh::RectSpec;
use crate::output::{write_table, write_vtk, DiagnosticsWriter, OutputError};
use crate::timestep::StepError;
use crate::verify::{verify, Outcome};

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILED: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_SOLVER: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "crackdyn", version, about = "Elastodynamics of cracked bodies with dynamic contact and Tresca friction")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate a configuration and write diagnostics and field snapshots.
    Run { config: PathBuf },
    /// Repeat a run for several penalty parameters ε (at least three, decreasing).
    SweepEps {
        config: PathBuf,
        #[arg(required = true, num_args = 1.., allow_negative_numbers = true)]
        eps: Vec<f64>,
    },
    /// Repeat a run for several contact weights γ.
    SweepGamma {
        config: PathBuf,
        #[arg(required = true, num_args = 1.., allow_negative_numbers = true)]
        gamma: Vec<f64>,
    },
    /// Run the property suite on a configuration.
    Verify { config: PathBuf },
    /// Write the mesh `rect(width, height, nx, ny[, a, b])` to a file.
    MeshGen {
        spec: String,
        #[arg(short = 'o', long = "output")]
        output: PathBuf,
    },
}

/// A failed command with its exit status.
struct Failure(u8, String);

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Failure {
        Failure(EXIT_CONFIG, format!("configuration error: {e}"))
    }
}

impl From<OutputError> for Failure {
    fn from(e: OutputError) -> Failure {
        Failure(EXIT_FAILED, format!("output error: {e}"))
    }
}

impl From<DiagnosticsError> for Failure {
    fn from(e: DiagnosticsError) -> Failure {
        match e {
            DiagnosticsError::Run { .. } | DiagnosticsError::Step(_) => Failure(EXIT_SOLVER, format!("solver failure: {e}")),
            DiagnosticsError::Config(c) => c.into(),
            other => Failure(EXIT_CONFIG, format!("error: {other}")),
        }
    }
}

fn output_dir(config: &Config) -> Result<&Path, Failure> {
    let dir = config.output.dir.as_path();
    std::fs::create_dir_all(dir)
        .map_err(|e| Failure(EXIT_FAILED, format!("cannot create output directory {}: {e}", dir.display())))?;
    Ok(dir)
}

fn cmd_run(path: &Path) -> Result<(), Failure> {
    let config = Config::load(path)?;
    let problem = config.setup()?;
    let dir = output_dir(&config)?;
    let mut csv = DiagnosticsWriter::create(dir.join("diagnostics.csv"))?;
    let every = config.output.every;
    let n_steps = problem.time.n_steps();
    let mut step = 0usize;
    let outcome = simulate(&problem, |state, record| {
        let abort = |e: OutputError| StepError::Observer(e.to_string());
        csv.write(record).map_err(abort)?;
        if every > 0 && (step % every == 0 || step == n_steps) {
            write_vtk(dir.join(format!("field_{step:06}.vtk")), &problem.model.mesh, state).map_err(abort)?;
        }
        step += 1;
        Ok(())
    });
    match outcome {
        Ok(summary) => {
            log::info!(
                "completed {} steps, {} Newton iterations, max halvings {}",
                n_steps,
                summary.newton_iters,
                summary.max_halvings
            );
            Ok(())
        }
        Err(f) => match f.error {
            StepError::Observer(m) => Err(Failure(EXIT_FAILED, format!("output error: {m}"))),
            _ => Err(Failure(EXIT_SOLVER, format!("solver failure: {f}"))),
        },
    }
}

fn cmd_sweep_eps(path: &Path, eps: &[f64]) -> Result<(), Failure> {
    let config = Config::load(path)?;
    let sweep = epsilon_sweep(&config, eps)?;
    let dir = output_dir(&config)?;
    write_table(dir.join("sweep_eps.csv"), &sweep.rows)?;
    println!("{:>10} {:>14} {:>14} {:>14} {:>14}", "epsilon", "∫pen³dt", "sup pen", "max‖a‖_H", "dist finest");
    for r in &sweep.rows {
        println!(
            "{:>10.3e} {:>14.6e} {:>14.6e} {:>14.6e} {:>14.6e}",
            r.epsilon, r.penetration_cubed, r.sup_penetration, r.max_accel_h, r.distance_to_finest
        );
    }
    match sweep.order {
        Some(p) => println!("fitted order p in ∫pen³dt ~ ε^p: {p:.4}"),
        None => println!("no penetration: order undefined"),
    }
    Ok(())
}

fn cmd_sweep_gamma(path: &Path, gammas: &[f64]) -> Result<(), Failure> {
    let config = Config::load(path)?;
    let rows = gamma_sweep(&config, gammas)?;
    let dir = output_dir(&config)?;
    write_table(dir.join("sweep_gamma.csv"), &rows)?;
    println!("{:>8} {:>14} {:>14} {:>14} {:>14}", "gamma", "∫pen³dt", "sup pen", "max rise/E0", "final E");
    for r in &rows {
        println!(
            "{:>8} {:>14.6e} {:>14.6e} {:>14.6e} {:>14.6e}",
            r.gamma, r.penetration_cubed, r.sup_penetration, r.max_energy_rise, r.final_energy
        );
    }
    Ok(())
}

fn cmd_verify(path: &Path) -> Result<(), Failure> {
    let config = Config::load(path)?;
    let checks = verify(&config)?;
    for c in &checks {
        println!("{} {}: {}", c.outcome, c.name, c.detail);
    }
    let failed = checks.iter().filter(|c| c.outcome == Outcome::Fail).count();
    if failed > 0 {
        return Err(Failure(EXIT_FAILED, format!("{failed} of {} checks failed", checks.len())));
    }
    Ok(())
}

fn cmd_mesh_gen(spec: &str, output: &Path) -> Result<(), Failure> {
    let mesh = RectSpec::parse(spec)
        .and_then(|s| s.build())
        .map_err(|e| Failure(EXIT_CONFIG, format!("mesh error: {e}")))?;
    mesh.save(output).map_err(|e| Failure(EXIT_FAILED, format!("cannot write {}: {e}", output.display())))
}

/// Runs a parsed command line and returns the process exit status.
pub fn execute(cli: Cli) -> ExitCode {
    let result = match &cli.command {
        Command::Run { config } => cmd_run(config),
        Command::SweepEps { config, eps } => cmd_sweep_eps(config, eps),
        Command::SweepGamma { config, gamma } => cmd_sweep_gamma(config, gamma),
        Command::Verify { config } => cmd_verify(config),
        Command::MeshGen { spec, output } => cmd_mesh_gen(spec, output),
    };
    match result {
        Ok(()) => ExitCode::from(EXIT_OK),
        Err(Failure(code, message)) => {
            eprintln!("crackdyn: {message}");
            ExitCode::from(code)
        }
    }
}

/// Parses `std::env::args` and runs. Usage errors exit with status 2.
pub fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::try_parse() {
        Ok(cli) => execute(cli),
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            ExitCode::from(code)
        }
    }
}
