//! Geometry of a concentric circular torus: Jacobian, metric, volume and the
//! vacuum-like field of an untrained parametrization.

use std::f64::consts::PI;

use mhd_pinn::mhdkernel::{CollocationGrid, FieldState};
use mhd_pinn::netfield::{BoundaryMode, EquilibriumInput, NetLayout, NetParams, Polynomial};
use mhd_pinn::spectral::AngularGrid;

fn main() -> mhd_pinn::Result<()> {
    let (r0, a) = (3.0, 1.0);
    let input = EquilibriumInput {
        m_count: 2,
        n_max: 0,
        nfp: 1,
        boundary: vec![
            BoundaryMode {
                m: 0,
                n: 0,
                r: r0,
                z: 0.0,
            },
            BoundaryMode {
                m: 1,
                n: 0,
                r: a,
                z: a,
            },
        ],
        axis: None,
        pressure: Polynomial::new(vec![0.0]),
        iota: Polynomial::new(vec![0.5]),
        toroidal_flux: 1.0,
    };
    // Zero network outputs leave R = R0 + rho a cos(theta), Z = rho a sin(theta).
    let params = NetParams::zeros(NetLayout {
        width: 2,
        modes: input.mode_count(),
    });
    let grid = CollocationGrid::midpoints(64, AngularGrid::uniform(32, 1, 1)?)?;
    let state = FieldState::evaluate(&params, &input, &grid)?;

    let n = &state.surface(31)[4];
    println!("node rho={:.4} theta={:.4}", n.rho, n.theta);
    println!(
        "  sqrt_g   = {:.10} (expected {:.10})",
        n.sqrt_g,
        -a * a * n.r / 2.0
    );
    println!(
        "  g_thth   = {:.10} (expected {:.10})",
        n.g_lower[1][1],
        (n.rho * a).powi(2)
    );
    println!(
        "  g_zz     = {:.10} (expected {:.10})",
        n.g_lower[2][2],
        n.r * n.r
    );
    println!("  B^th/B^z = {:.10} (iota 0.5)", n.b_sup[0] / n.b_sup[1]);
    println!("  |B|      = {:.6} T", n.b_mag);

    let exact = 2.0 * PI * PI * r0 * a * a;
    println!(
        "volume {:.8} vs 2 pi^2 R0 a^2 = {:.8}",
        state.volume(),
        exact
    );
    let f = state.f_norm_self()?;
    println!("F_vol_norm of the untrained state: {:.3e}", f.volume);
    Ok(())
}
