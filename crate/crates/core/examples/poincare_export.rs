//! Trains a D-shape equilibrium briefly, then exports the cross sections at
//! two toroidal angles and the curves of constant straight-field-line angle.

use std::f64::consts::PI;

use mhd_pinn::io::export::{
    contours_to_csv, default_contour_radii, default_surfaces, default_theta_star_targets,
    poincare_section, theta_star_contours,
};
use mhd_pinn::netfield::EquilibriumInput;
use mhd_pinn::solver::{solve, SolverConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let input = EquilibriumInput::dshape(7);
    let mut cfg = SolverConfig::default();
    cfg.width = 6;
    cfg.grid.n_rho = 20;
    cfg.adamw.max_iter = 300;
    cfg.bfgs.max_iter = 200;
    let sol = solve(&input, &cfg)?;
    println!(
        "F_vol_norm after {} iterations: {:.3e}",
        sol.iterations, sol.f_vol_norm
    );

    let out = std::path::Path::new("poincare-out");
    std::fs::create_dir_all(out)?;
    for (name, zeta) in [("zeta0", 0.0), ("zeta_half", PI)] {
        let section = poincare_section(&sol.params, &input, zeta, &default_surfaces(), 256)?;
        println!("zeta = {zeta:.3}: nested = {}", section.is_nested());
        std::fs::write(out.join(format!("poincare_{name}.csv")), section.to_csv())?;
    }

    let contours = theta_star_contours(
        &sol.params,
        &input,
        &default_theta_star_targets(),
        0.0,
        &default_contour_radii(),
    )?;
    let worst = contours
        .iter()
        .map(|p| p.residual.abs())
        .fold(0.0, f64::max);
    println!(
        "{} theta* contour points, max |theta + lambda - theta*| = {worst:.1e}",
        contours.len()
    );
    for p in contours.iter().filter(|p| p.rho == 1.0) {
        println!(
            "  theta* = {:.4}: boundary point (R, Z) = ({:.4}, {:.4}) at theta = {:.4}",
            p.target, p.r, p.z, p.theta
        );
    }
    std::fs::write(out.join("theta_star.csv"), contours_to_csv(&contours))?;
    Ok(())
}
