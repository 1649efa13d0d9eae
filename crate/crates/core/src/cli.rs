//! Command-line front end.
//!
//! Exit codes: 0 success, 1 invalid input or usage, 2 numeric failure.
//! Summary commands end with a `key=value` line for scripting.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::config::load_scenario;
use crate::equilibrium::{check_viability, solve, SolverOptions, DEFAULT_MAX_ITERATIONS, DEFAULT_TOLERANCE};
use crate::error::Error;
use crate::experiments::{
    mixing_gain_sweep, nonviable_rescue_sweep, q_grid, write_fig2_csv, write_fig3_csv,
    StochasticSettings, SweepMode, DEFAULT_Q_MAX, DEFAULT_Q_STEPS, DEFAULT_ROUNDS,
    DEFAULT_WARMUP, KAPPA,
};
use crate::format::sig6;
use crate::sim::{estimate_equilibrium, run, SimConfig, BATCHES};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_NUMERIC: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "clubsim", version, about = "Information-sharing club formation model")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Deterministic,
    Stochastic,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve for the equilibrium club size from full membership.
    Solve {
        config: PathBuf,
        #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
        tol: f64,
        #[arg(long, default_value_t = DEFAULT_MAX_ITERATIONS)]
        max_iter: usize,
    },
    /// Evaluate the sufficient and necessary viability conditions.
    Viability { config: PathBuf },
    /// Simulate join/leave rounds and estimate the equilibrium size.
    Simulate {
        config: PathBuf,
        #[arg(long, default_value_t = DEFAULT_ROUNDS)]
        rounds: usize,
        #[arg(long, default_value_t = DEFAULT_WARMUP)]
        warmup: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Trace CSV destination.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Gain in club size from mixing two viable clubs, swept over overlap q.
    Fig2 {
        #[arg(long, default_value_t = DEFAULT_Q_MAX)]
        q_max: f64,
        #[arg(long, default_value_t = DEFAULT_Q_STEPS)]
        steps: usize,
        #[arg(long, value_enum, default_value_t = Mode::Deterministic)]
        mode: Mode,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        n1: u64,
        #[arg(long, default_value_t = 100)]
        n2: u64,
        #[arg(long, default_value_t = KAPPA)]
        kappa: f64,
        #[arg(long, default_value_t = DEFAULT_ROUNDS)]
        rounds: usize,
        #[arg(long, default_value_t = DEFAULT_WARMUP)]
        warmup: usize,
        /// CSV destination (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Participation of a non-viable population mixed into a larger one.
    Fig3 {
        /// Comma-separated type-2 population sizes.
        #[arg(long = "n2", value_delimiter = ',', default_values_t = [40u64, 50, 60])]
        n2_list: Vec<u64>,
        #[arg(long, default_value_t = DEFAULT_Q_MAX)]
        q_max: f64,
        #[arg(long, default_value_t = DEFAULT_Q_STEPS)]
        steps: usize,
        #[arg(long, value_enum, default_value_t = Mode::Deterministic)]
        mode: Mode,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 200)]
        total: u64,
        #[arg(long, default_value_t = KAPPA)]
        kappa: f64,
        #[arg(long, default_value_t = DEFAULT_ROUNDS)]
        rounds: usize,
        #[arg(long, default_value_t = DEFAULT_WARMUP)]
        warmup: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Failure carrying its exit code.
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_INPUT,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Self {
            code: if e.is_numeric() { EXIT_NUMERIC } else { EXIT_INPUT },
            message: e.to_string(),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::input(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

/// Parses `args` (including the program name) and runs the command.
pub fn run_cli<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let rendered = e.render().to_string();
            let _ = if e.use_stderr() {
                write!(stderr, "{rendered}")
            } else {
                write!(stdout, "{rendered}")
            };
            return code;
        }
    };
    match dispatch(cli.command, stdout, stderr) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(stderr, "error: {}", f.message);
            f.code
        }
    }
}

fn dispatch(command: Command, out: &mut dyn Write, err: &mut dyn Write) -> Outcome {
    match command {
        Command::Solve {
            config,
            tol,
            max_iter,
        } => cmd_solve(&config, tol, max_iter, out),
        Command::Viability { config } => cmd_viability(&config, out),
        Command::Simulate {
            config,
            rounds,
            warmup,
            seed,
            out: path,
        } => cmd_simulate(&config, rounds, warmup, seed, path.as_deref(), out),
        Command::Fig2 {
            q_max,
            steps,
            mode,
            seed,
            n1,
            n2,
            kappa,
            rounds,
            warmup,
            out: path,
        } => {
            let mode = sweep_mode(mode, rounds, warmup, seed)?;
            let sweep = mixing_gain_sweep(&q_grid(q_max, steps), n1, n2, kappa, mode)?;
            warn(err, &sweep.warnings);
            emit(path.as_deref(), out, |w| write_fig2_csv(&sweep.rows, w))
        }
        Command::Fig3 {
            n2_list,
            q_max,
            steps,
            mode,
            seed,
            total,
            kappa,
            rounds,
            warmup,
            out: path,
        } => {
            let mode = sweep_mode(mode, rounds, warmup, seed)?;
            let sweep = nonviable_rescue_sweep(&q_grid(q_max, steps), &n2_list, total, kappa, mode)?;
            warn(err, &sweep.warnings);
            emit(path.as_deref(), out, |w| write_fig3_csv(&sweep.rows, w))
        }
    }
}

fn load(path: &Path) -> Result<crate::model::Scenario, Failure> {
    load_scenario(path).map_err(|e| Failure::input(format!("invalid config: {e}")))
}

fn check_run_length(rounds: usize, warmup: usize) -> Outcome {
    if rounds < warmup + BATCHES {
        return Err(Failure::input(format!(
            "rounds ({rounds}) must be at least warmup + {BATCHES} ({})",
            warmup + BATCHES
        )));
    }
    Ok(())
}

fn sweep_mode(mode: Mode, rounds: usize, warmup: usize, seed: u64) -> Result<SweepMode, Failure> {
    Ok(match mode {
        Mode::Deterministic => SweepMode::deterministic(),
        Mode::Stochastic => {
            check_run_length(rounds, warmup)?;
            SweepMode::Stochastic(StochasticSettings {
                rounds,
                warmup,
                master_seed: seed,
            })
        }
    })
}

fn warn(err: &mut dyn Write, warnings: &[String]) {
    for w in warnings {
        let _ = writeln!(err, "warning: {w}");
    }
}

fn emit(
    path: Option<&Path>,
    out: &mut dyn Write,
    write: impl FnOnce(&mut dyn Write) -> io::Result<()>,
) -> Outcome {
    match path {
        Some(p) => {
            let mut file = BufWriter::new(File::create(p)?);
            write(&mut file)?;
            file.flush()?;
            writeln!(out, "wrote {}", p.display())?;
        }
        None => write(out)?,
    }
    Ok(())
}

fn cmd_solve(config: &Path, tol: f64, max_iter: usize, out: &mut dyn Write) -> Outcome {
    let scenario = load(config)?;
    let options = SolverOptions {
        tolerance: tol,
        max_iterations: max_iter,
        ..SolverOptions::default()
    };
    let solution = match solve(&scenario, options) {
        Ok(s) => s,
        Err(Error::NonConvergence {
            state,
            residual,
            iterations,
        }) => {
            writeln!(out, "converged=false")?;
            writeln!(out, "iterations={iterations}")?;
            writeln!(out, "residual={residual:e}")?;
            writeln!(out, "n_total={}", sig6(state.total()))?;
            return Err(Failure {
                code: EXIT_NUMERIC,
                message: format!("no convergence after {iterations} iterations"),
            });
        }
        Err(e) => return Err(e.into()),
    };
    for (c, n) in solution.state.counts().iter().enumerate() {
        writeln!(out, "class_{c}={}", sig6(*n))?;
    }
    writeln!(out, "residual={:e}", solution.residual)?;
    writeln!(out, "iterations={}", solution.iterations)?;
    writeln!(out, "stable={}", solution.stable)?;
    writeln!(out, "n_total={}", sig6(solution.total()))?;
    Ok(())
}

fn cmd_viability(config: &Path, out: &mut dyn Write) -> Outcome {
    let scenario = load(config)?;
    let v = check_viability(&scenario);
    writeln!(out, "contributing_population={}", v.contributing_population)?;
    writeln!(out, "sufficient_lhs={}", sig6(v.sufficient_lhs))?;
    writeln!(out, "sufficient_rhs={}", sig6(v.sufficient_rhs))?;
    writeln!(out, "necessary_value={}", sig6(v.necessary_value))?;
    writeln!(out, "empty_club_growth_rate={}", sig6(v.empty_club_growth_rate))?;
    writeln!(out, "sufficient={}", v.sufficient_holds)?;
    writeln!(out, "necessary={}", v.necessary_holds)?;
    Ok(())
}

fn cmd_simulate(
    config: &Path,
    rounds: usize,
    warmup: usize,
    seed: u64,
    path: Option<&Path>,
    out: &mut dyn Write,
) -> Outcome {
    check_run_length(rounds, warmup)?;
    let scenario = load(config)?;
    let trace = run(&scenario, &SimConfig::from_full(&scenario, rounds, warmup, seed))?;
    if let Some(p) = path {
        let mut file = BufWriter::new(File::create(p)?);
        trace.write_csv(&mut file)?;
        file.flush()?;
    }
    let estimate = estimate_equilibrium(&trace, warmup)?;
    for (c, (m, se)) in estimate.mean.iter().zip(&estimate.stderr).enumerate() {
        writeln!(out, "class_{c}={} +- {}", sig6(*m), sig6(*se))?;
    }
    writeln!(out, "samples={}", estimate.samples)?;
    writeln!(out, "stderr={}", sig6(estimate.total_stderr))?;
    writeln!(out, "n_total={}", sig6(estimate.total_mean))?;
    Ok(())
}
