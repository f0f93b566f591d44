//! Command-line front end. [`run`] returns the process exit status:
//! 0 on success, 1 for invalid input or usage, 2 when the numerics fail
//! (overlapping surfaces, non-finite values, a failed gradient check).

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand};

use crate::autodiff::grad_check;
use crate::error::Error;
use crate::io::checkpoint::{read_checkpoint, write_checkpoint, CheckpointData};
use crate::io::export::{
    contours_to_csv, default_contour_radii, default_out_dir, default_theta_star_targets,
    export_metrics, poincare_section, theta_star_contours, RunRecord, DEFAULT_THETA_SAMPLES,
};
use crate::io::{parse_case, Case};
use crate::netfield::init_params;
use crate::solver::{compute_metrics, solve_with, GridConfig, LossContext, Termination};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_DIVERGED: i32 = 2;

#[derive(Parser, Debug)]
#[command(
    name = "mhd-pinn",
    version,
    about = "Fixed-boundary ideal-MHD equilibria with neural mode profiles"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve a case file (or the built-in `dshape`) and export diagnostics.
    Solve(SolveArgs),
    /// Recompute the force residual of a checkpoint, optionally on a finer grid.
    Eval(EvalArgs),
    /// Export Poincaré cross sections and straight-field-line angle contours.
    Poincare(PoincareArgs),
    /// Compare the analytic loss gradient with finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Args, Debug)]
struct SolveArgs {
    case: PathBuf,
    /// Output directory [default: $MHD_PINN_OUT or ./mhd-pinn-out]
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    width: Option<usize>,
    /// Number of radial collocation surfaces.
    #[arg(long)]
    surfaces: Option<usize>,
    /// Stop once the volume-averaged normalized force residual reaches this value.
    #[arg(long)]
    target_fvol: Option<f64>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
    /// Write `checkpoint.bin` every this many iterations (0: final only).
    #[arg(long)]
    checkpoint_every: Option<usize>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    checkpoint: PathBuf,
    #[arg(long)]
    surfaces: Option<usize>,
    #[arg(long)]
    n_theta: Option<usize>,
    #[arg(long)]
    n_zeta: Option<usize>,
    /// Also write the full export set into this directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PoincareArgs {
    checkpoint: PathBuf,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    zeta: f64,
    /// Number of equally spaced surfaces up to and including the boundary.
    #[arg(long, default_value_t = 10)]
    surfaces: usize,
    #[arg(long, default_value_t = DEFAULT_THETA_SAMPLES)]
    n_theta: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GradcheckArgs {
    case: PathBuf,
    #[arg(long, default_value_t = 2)]
    width: usize,
    #[arg(long, default_value_t = 8)]
    surfaces: usize,
    /// Poloidal mode count M used for the check.
    #[arg(long, default_value_t = 5)]
    modes: u32,
    #[arg(long, default_value_t = 50)]
    samples: usize,
    /// Initial finite-difference step, refined by extrapolation.
    #[arg(long, default_value_t = 1e-2)]
    step: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
}

fn status_for(e: &Error) -> i32 {
    if e.is_numerical() {
        EXIT_DIVERGED
    } else {
        EXIT_INVALID
    }
}

fn fail(e: Error) -> i32 {
    eprintln!("error: {e}");
    status_for(&e)
}

/// Lists the long flags a subcommand accepts, for unknown-flag messages.
fn valid_flags(sub: Option<&str>) -> String {
    let cmd = Cli::command();
    let target = sub.and_then(|s| cmd.find_subcommand(s)).unwrap_or(&cmd);
    let mut flags: Vec<String> = target
        .get_arguments()
        .filter_map(|a| a.get_long().map(|l| format!("--{l}")))
        .collect();
    flags.push("--help".into());
    flags.dedup();
    flags.join(", ")
}

/// Parses `args` (including the program name) and runs the subcommand.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = e.print();
                    EXIT_OK
                }
                ErrorKind::UnknownArgument => {
                    let _ = e.print();
                    let sub = args.get(1).and_then(|s| s.to_str());
                    eprintln!("valid flags: {}", valid_flags(sub));
                    EXIT_INVALID
                }
                _ => {
                    let _ = e.print();
                    EXIT_INVALID
                }
            };
        }
    };
    match cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Poincare(a) => cmd_poincare(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
    }
}

fn cmd_solve(a: SolveArgs) -> i32 {
    let mut case = match parse_case(&a.case) {
        Ok(c) => c,
        Err(e) => return fail(e),
    };
    let cfg = &mut case.solver;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(w) = a.width {
        cfg.width = w;
    }
    if let Some(n) = a.surfaces {
        cfg.grid.n_rho = n;
    }
    if let Some(t) = a.target_fvol {
        cfg.stop.target_fvol = Some(t);
    }
    if let Some(c) = a.checkpoint_every {
        cfg.checkpoint_every = c;
    }
    if let Err(e) = cfg.validate() {
        return fail(e);
    }
    let out = a.out.unwrap_or_else(default_out_dir);
    match a.threads {
        Some(0) => {
            eprintln!("error: --threads must be >= 1");
            EXIT_INVALID
        }
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| solve_case(&case, &out)),
            Err(e) => {
                eprintln!("error: cannot start thread pool: {e}");
                EXIT_INVALID
            }
        },
        None => solve_case(&case, &out),
    }
}

/// Solves `case` and writes checkpoints and exports into `out`.
pub fn solve_case(case: &Case, out: &Path) -> i32 {
    if let Err(e) = std::fs::create_dir_all(out) {
        eprintln!("error: {}: {e}", out.display());
        return EXIT_INVALID;
    }
    let ckpt_path = out.join("checkpoint.bin");
    let mut observer = |cp: &crate::solver::Checkpoint| {
        write_checkpoint(
            &ckpt_path,
            &CheckpointData {
                case: case.clone(),
                iteration: cp.iteration as u64,
                stage: cp.stage,
                loss: cp.loss,
                params: cp.params.clone(),
            },
        )
    };
    let sol = match solve_with(&case.input, &case.solver, &mut observer) {
        Ok(s) => s,
        Err(e) => return fail(e),
    };
    let grid = match case.solver.metrics_grid(&case.input) {
        Ok(g) => g,
        Err(e) => return fail(e),
    };
    let run = RunRecord {
        history: &sol.history,
        termination: Some(sol.termination),
        iterations: Some(sol.iterations),
        error: sol.error.clone(),
    };
    let summary = match export_metrics(out, &sol.params, &case.input, &grid, &run) {
        Ok(s) => s,
        Err(e) => return fail(e),
    };
    println!("termination: {}", sol.termination);
    println!("iterations: {}", sol.iterations);
    println!("F_vol_norm: {:e}", sol.f_vol_norm);
    println!("output: {}", out.display());
    for e in &summary.errors {
        eprintln!("warning: {e}");
    }
    if sol.termination == Termination::Diverged || !sol.f_vol_norm.is_finite() {
        EXIT_DIVERGED
    } else {
        EXIT_OK
    }
}

fn cmd_eval(a: EvalArgs) -> i32 {
    let data = match read_checkpoint(&a.checkpoint) {
        Ok(d) => d,
        Err(e) => return fail(e),
    };
    let (input, cfg) = (&data.case.input, &data.case.solver);
    let base = cfg.eval_grid.clone().unwrap_or_else(|| cfg.grid.clone());
    let grid_cfg = GridConfig {
        n_rho: a.surfaces.unwrap_or(base.n_rho),
        n_theta: a.n_theta.or(base.n_theta),
        n_zeta: a.n_zeta.or(base.n_zeta),
    };
    let grid = match grid_cfg.build(input) {
        Ok(g) => g,
        Err(e) => return fail(e),
    };
    let metrics = match compute_metrics(&data.params, input, &grid) {
        Ok(m) => m,
        Err(e) => return fail(e),
    };
    println!("iteration: {}", data.iteration);
    println!(
        "grid: {} x {} x {}",
        grid.rho.len(),
        grid.angular.theta.len(),
        grid.angular.zeta.len()
    );
    println!("volume: {:e}", metrics.volume);
    println!("F_vol_norm: {:e}", metrics.f_vol_norm);
    if let Some(out) = a.out {
        let run = RunRecord {
            history: &[],
            termination: None,
            iterations: Some(data.iteration as usize),
            error: None,
        };
        if let Err(e) = export_metrics(&out, &data.params, input, &grid, &run) {
            return fail(e);
        }
        println!("output: {}", out.display());
    }
    EXIT_OK
}

fn cmd_poincare(a: PoincareArgs) -> i32 {
    let data = match read_checkpoint(&a.checkpoint) {
        Ok(d) => d,
        Err(e) => return fail(e),
    };
    let input = &data.case.input;
    let surfaces: Vec<f64> = (1..=a.surfaces)
        .map(|k| k as f64 / a.surfaces as f64)
        .collect();
    let section = match poincare_section(&data.params, input, a.zeta, &surfaces, a.n_theta) {
        Ok(s) => s,
        Err(e) => return fail(e),
    };
    let contours = match theta_star_contours(
        &data.params,
        input,
        &default_theta_star_targets(),
        a.zeta,
        &default_contour_radii(),
    ) {
        Ok(c) => c,
        Err(e) => return fail(e),
    };
    let out = a.out.unwrap_or_else(default_out_dir);
    let write = |name: &str, text: String| {
        let path = out.join(name);
        std::fs::create_dir_all(&out)
            .and_then(|_| std::fs::write(&path, text))
            .map_err(|e| Error::Io { path, source: e })
    };
    if let Err(e) = write("poincare.csv", section.to_csv())
        .and_then(|_| write("theta_star.csv", contours_to_csv(&contours)))
    {
        return fail(e);
    }
    let nested = section.is_nested();
    println!("zeta: {}", a.zeta);
    println!("surfaces nested: {nested}");
    println!("output: {}", out.display());
    if nested {
        EXIT_OK
    } else {
        eprintln!("error: exported cross sections intersect");
        EXIT_DIVERGED
    }
}

fn cmd_gradcheck(a: GradcheckArgs) -> i32 {
    let case = match parse_case(&a.case) {
        Ok(c) => c,
        Err(e) => return fail(e),
    };
    if !(a.step > 0.0) || a.samples == 0 || a.width == 0 {
        eprintln!("error: --step, --samples and --width must be positive");
        return EXIT_INVALID;
    }
    let mut input = case.input;
    input.m_count = a.modes;
    let run = || -> crate::Result<(usize, f64)> {
        let grid = GridConfig {
            n_rho: a.surfaces,
            n_theta: None,
            n_zeta: None,
        }
        .build(&input)?;
        let objective = LossContext::new(&input, a.width, grid)?;
        let params = init_params(&input, a.width, a.seed)?;
        let err = grad_check(&objective, &params.values, a.step, a.samples, a.seed)?;
        Ok((params.values.len(), err))
    };
    match run() {
        Ok((n, err)) => {
            println!("parameters: {n}");
            println!("entries checked: {}", a.samples.min(n));
            println!("max relative error: {err:e}");
            if err <= a.tol {
                EXIT_OK
            } else {
                eprintln!("error: gradient check failed (tolerance {:e})", a.tol);
                EXIT_DIVERGED
            }
        }
        Err(e) => fail(e),
    }
}
