//! Checks the reverse-mode gradient of the training loss against
//! extrapolated central differences on a small D-shape network.

use mhd_pinn::autodiff::{grad_check, Objective};
use mhd_pinn::netfield::{init_params, EquilibriumInput};
use mhd_pinn::solver::{GridConfig, LossContext};

fn main() -> mhd_pinn::Result<()> {
    let input = EquilibriumInput::dshape(5);
    let grid = GridConfig {
        n_rho: 8,
        ..Default::default()
    }
    .build(&input)?;
    let loss = LossContext::new(&input, 2, grid)?;
    let params = init_params(&input, 2, 0)?;

    let (value, grad) = loss.value_and_gradient(&params.values)?;
    let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    println!(
        "loss {value:.6e}, |grad| {gnorm:.3e}, {} parameters",
        loss.dim()
    );

    for step in [1e-1, 3e-2, 1e-2] {
        let err = grad_check(&loss, &params.values, step, 50, 0)?;
        println!("initial step {step:.0e}: max relative error {err:.2e}");
    }
    Ok(())
}
