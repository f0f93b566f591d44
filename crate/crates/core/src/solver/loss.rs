use rayon::prelude::*;

use crate::autodiff::{pairwise_sum, pairwise_sum_vectors, tape, Objective, Real, Var};
use crate::error::{Error, Result};
use crate::mhdkernel::{
    force, geometry, magnetic_field, synthesize_surface, CollocationGrid, SurfaceProfile,
};
use crate::netfield::{EquilibriumInput, ProfileBasis};
use crate::spectral::BasisTable;

/// The training loss: the mean of `|F|` over all collocation nodes.
///
/// Surfaces are evaluated in parallel, each on its own thread-local tape, and
/// their contributions are combined by a pairwise reduction in surface order,
/// so results do not depend on the number of worker threads.
pub struct LossContext {
    basis: ProfileBasis,
    table: BasisTable,
    grid: CollocationGrid,
    surfaces: Vec<SurfaceProfile>,
}

struct SurfaceResult {
    sum: f64,
    grad: Vec<f64>,
    sqrt_g: Vec<f64>,
}

impl LossContext {
    pub fn new(input: &EquilibriumInput, width: usize, grid: CollocationGrid) -> Result<Self> {
        input.validate()?;
        if grid.angular.nfp != input.nfp {
            return Err(Error::InvalidInput(
                "grid and input disagree on n_fp".into(),
            ));
        }
        let basis = ProfileBasis::new(input, width)?;
        let table = BasisTable::new(&basis.cos_modes, &grid.angular);
        let surfaces = grid
            .rho
            .iter()
            .map(|&r| SurfaceProfile::from_input(input, r))
            .collect();
        Ok(LossContext {
            basis,
            table,
            grid,
            surfaces,
        })
    }

    pub fn grid(&self) -> &CollocationGrid {
        &self.grid
    }

    pub fn basis(&self) -> &ProfileBasis {
        &self.basis
    }

    /// Sum of `|F|` over the nodes of one surface plus the node Jacobians.
    fn surface_terms<T: Real>(&self, params: &[T], j: usize) -> (T, Vec<f64>) {
        let prof = &self.surfaces[j];
        let jets = self.basis.compose(params, prof.rho);
        let nodes = synthesize_surface(&self.table, &jets);
        let mut terms = Vec::with_capacity(nodes.len());
        let mut sqrt_g = Vec::with_capacity(nodes.len());
        for [r, z, l] in &nodes {
            let geo = geometry(prof.rho, r, z, l);
            let field = magnetic_field(&geo, prof);
            sqrt_g.push(geo.sqrt_g.value.value());
            terms.push(force(&geo, &field, prof).norm());
        }
        let ones = vec![1.0; terms.len()];
        (T::weighted_sum(&terms, &ones), sqrt_g)
    }

    fn check(&self, results: &[(f64, Vec<f64>)]) -> Result<()> {
        let sign = results[0].1[0].signum();
        for (j, (sum, sqrt_g)) in results.iter().enumerate() {
            for (i, &g) in sqrt_g.iter().enumerate() {
                let (theta, zeta) = self.grid.angular.node(i);
                let rho = self.grid.rho[j];
                if !g.is_finite() {
                    return Err(Error::NonFinite { rho, theta, zeta });
                }
                if g == 0.0 || g.signum() != sign {
                    return Err(Error::JacobianSign {
                        rho,
                        theta,
                        zeta,
                        sqrt_g: g,
                    });
                }
            }
            if !sum.is_finite() {
                let rho = self.grid.rho[j];
                return Err(Error::NonFinite {
                    rho,
                    theta: f64::NAN,
                    zeta: f64::NAN,
                });
            }
        }
        Ok(())
    }

    fn check_dim(&self, x: &[f64]) {
        assert_eq!(
            x.len(),
            self.basis.layout.total(),
            "parameter vector length"
        );
    }
}

impl Objective for LossContext {
    fn dim(&self) -> usize {
        self.basis.layout.total()
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x);
        let results: Vec<(f64, Vec<f64>)> = (0..self.surfaces.len())
            .into_par_iter()
            .map(|j| self.surface_terms(x, j))
            .collect();
        self.check(&results)?;
        let sums: Vec<f64> = results.iter().map(|r| r.0).collect();
        Ok(pairwise_sum(&sums) / self.grid.len() as f64)
    }

    fn value_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.check_dim(x);
        let results: Vec<SurfaceResult> = (0..self.surfaces.len())
            .into_par_iter()
            .map(|j| {
                let mut sqrt_g = Vec::new();
                let (sum, grad) = tape::gradient(x, |vars: &[Var]| {
                    let (s, g) = self.surface_terms(vars, j);
                    sqrt_g = g;
                    s
                });
                SurfaceResult { sum, grad, sqrt_g }
            })
            .collect();
        let summary: Vec<(f64, Vec<f64>)> =
            results.iter().map(|r| (r.sum, r.sqrt_g.clone())).collect();
        self.check(&summary)?;
        let n = self.grid.len() as f64;
        let sums: Vec<f64> = results.iter().map(|r| r.sum).collect();
        let grads: Vec<Vec<f64>> = results.into_iter().map(|r| r.grad).collect();
        let mut grad = pairwise_sum_vectors(&grads);
        for g in &mut grad {
            *g /= n;
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite {
                rho: f64::NAN,
                theta: f64::NAN,
                zeta: f64::NAN,
            });
        }
        Ok((pairwise_sum(&sums) / n, grad))
    }
}
