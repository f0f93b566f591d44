//! Parses a small three-dimensional case file, checks the gradient and runs
//! a short solve with a checkpoint that is then reloaded.

use mhd_pinn::autodiff::grad_check;
use mhd_pinn::io::checkpoint::{decode, encode, CheckpointData};
use mhd_pinn::io::parse_case_str;
use mhd_pinn::netfield::init_params;
use mhd_pinn::solver::{compute_metrics, solve, LossContext, Stage};

const CASE: &str = "\
# rotating ellipse, five field periods
[global]
psi_b = 0.5
n_fp = 5
M = 4
N = 2

[boundary]
# m n R_b Z_b
0 0 10.0 0.0
1 0 1.0 1.0
1 1 0.2 -0.2
0 1 0.1 -0.1

[profiles]
pressure = 500 -500
iota = 0.4 0.1

[solver]
width = 4
n_rho = 8
adamw_max_iter = 100
bfgs_max_iter = 40
";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let case = parse_case_str(CASE, "ellipse")?;
    println!("{} modes per coordinate", case.input.mode_count());

    let grid = case.solver.training_grid(&case.input)?;
    println!(
        "collocation grid {} x {} x {}",
        grid.rho.len(),
        grid.angular.theta.len(),
        grid.angular.zeta.len()
    );
    let loss = LossContext::new(&case.input, case.solver.width, grid.clone())?;
    let p0 = init_params(&case.input, case.solver.width, case.solver.seed)?;
    println!(
        "gradient check: {:.2e}",
        grad_check(&loss, &p0.values, 1e-2, 20, 1)?
    );

    let sol = solve(&case.input, &case.solver)?;
    println!(
        "{} after {} iterations, F_vol_norm {:.3e}",
        sol.termination, sol.iterations, sol.f_vol_norm
    );

    let bytes = encode(&CheckpointData {
        case: case.clone(),
        iteration: sol.iterations as u64,
        stage: Stage::Bfgs,
        loss: sol.history.last().map_or(f64::NAN, |h| h.loss),
        params: sol.params.clone(),
    });
    let back = decode(&bytes)?;
    let again = compute_metrics(&back.params, &back.case.input, &grid)?;
    println!(
        "checkpoint of {} bytes reloads to F_vol_norm {:.3e}",
        bytes.len(),
        again.f_vol_norm
    );
    Ok(())
}
