//! Stellarator-symmetric Fourier series: mode sets, synthesis with analytic
//! angular derivatives and the spectral width diagnostic.

use mhd_pinn::spectral::{
    spectral_width, synthesize, AngularGrid, ModeSet, Parity, SurfaceCoefficients,
};

fn main() -> mhd_pinn::Result<()> {
    // Five field periods, M = 3 poloidal and N = 1 toroidal harmonics.
    let cos = ModeSet::new(3, 1, 5, Parity::Cosine)?;
    let sin = cos.with_parity(Parity::Sine);
    println!("{} modes: {:?}", cos.len(), cos.entries());

    let mut r = SurfaceCoefficients::zeros(cos);
    let mut z = SurfaceCoefficients::zeros(sin);
    r.set(0, 0, 10.0)?;
    r.set(1, 0, 1.0)?;
    r.set(1, 1, 0.15)?;
    r.set(0, 1, 0.3)?;
    z.set(1, 0, 1.2)?;
    z.set(1, 1, 0.15)?;
    z.set(0, 1, -0.3)?;

    let grid = AngularGrid::uniform(12, 4, 5)?;
    let rs = synthesize(&r, &grid)?;
    let zs = synthesize(&z, &grid)?;
    println!(
        "{:>8} {:>8} {:>10} {:>10} {:>10}",
        "theta", "zeta", "R", "Z", "dR/dtheta"
    );
    for k in [0, 1] {
        for i in (0..12).step_by(3) {
            let idx = grid.index(i, k);
            let (t, zeta) = grid.node(idx);
            println!(
                "{t:8.4} {zeta:8.4} {:10.5} {:10.5} {:10.5}",
                rs.value[idx], zs.value[idx], rs.d_theta[idx]
            );
        }
    }
    println!("spectral width M_sp = {:.5}", spectral_width(&r, &z)?);
    Ok(())
}
