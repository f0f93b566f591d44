//! Pointwise geometry, magnetic field, current and force residual.
//!
//! Coordinates are `(s, theta, zeta)` with `s = rho^2`. Every node quantity is
//! assembled from the Fourier-synthesized `R`, `Z`, `lambda` and their partial
//! derivatives up to second order; radial derivatives come from the profile
//! jets and are converted with `d/ds = d/drho / (2 rho)`. Quantities whose
//! derivatives feed the curl are carried as [`Dual3`] numbers in
//! `(rho, theta, zeta)`.
//!
//! The kernel functions are generic over [`Real`] so the same code runs in
//! plain `f64` and on the reverse-mode tape.

use rayon::prelude::*;

use crate::autodiff::{pairwise_sum, Dual3, Real};
use crate::error::{Error, Result};
use crate::netfield::{EquilibriumInput, NetParams, Polynomial, ProfileBasis, MU0};
use crate::spectral::{AngularGrid, BasisTable, NodeSeries, Parity};

type V3<T> = [T; 3];

fn cross<T: Real>(a: &V3<T>, b: &V3<T>) -> V3<T> {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn dot<T: Real>(a: &V3<T>, b: &V3<T>) -> T {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Flux-function data of one surface: `d psi/ds`, `iota`, `d iota/ds` and
/// `dp/ds`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurfaceProfile {
    pub rho: f64,
    pub psi_s: f64,
    pub iota: f64,
    pub iota_s: f64,
    pub pressure_s: f64,
}

impl SurfaceProfile {
    pub fn new(rho: f64, psi_s: f64, iota: &Polynomial, pressure: &Polynomial) -> Self {
        let s = rho * rho;
        SurfaceProfile {
            rho,
            psi_s,
            iota: iota.eval(s),
            iota_s: iota.derivative().eval(s),
            pressure_s: pressure.derivative().eval(s),
        }
    }

    pub fn from_input(input: &EquilibriumInput, rho: f64) -> Self {
        Self::new(rho, input.dpsi_ds(), &input.iota, &input.pressure)
    }
}

/// Geometric quantities at one node.
#[derive(Clone, Copy, Debug)]
pub struct Geometry<T> {
    pub rho: f64,
    pub r: Dual3<T>,
    pub z: T,
    /// `(R_s, R_theta, R_zeta)` with their gradients.
    pub r_d: [Dual3<T>; 3],
    pub z_d: [Dual3<T>; 3],
    /// `lambda_theta`, `lambda_zeta`.
    pub lambda_d: [Dual3<T>; 2],
    pub sqrt_g: Dual3<T>,
    /// Lower metric `g_ij` in `(s, theta, zeta)`.
    pub g_lower: [[Dual3<T>; 3]; 3],
    /// Upper metric `g^ij`.
    pub g_upper: [[T; 3]; 3],
    pub e_sub: [V3<T>; 3],
    pub e_sup: [V3<T>; 3],
}

impl<T: Real> Geometry<T> {
    /// Converts a `rho` gradient into `(d/ds, d/dtheta, d/dzeta)`.
    pub fn flux_gradient(&self, q: &Dual3<T>) -> V3<T> {
        [q.grad[0] * (0.5 / self.rho), q.grad[1], q.grad[2]]
    }

    /// `|grad q|^2 = d_i q g^ij d_j q`.
    pub fn gradient_norm_sq(&self, q: &Dual3<T>) -> T {
        let d = self.flux_gradient(q);
        let mut acc = T::zero();
        for i in 0..3 {
            for j in 0..3 {
                acc = acc + d[i] * self.g_upper[i][j] * d[j];
            }
        }
        acc
    }
}

/// Builds the geometry at one node from synthesized `R`, `Z`, `lambda`.
pub fn geometry<T: Real>(
    rho: f64,
    r: &NodeSeries<T>,
    z: &NodeSeries<T>,
    lambda: &NodeSeries<T>,
) -> Geometry<T> {
    let inv = Dual3::new(
        T::constant(0.5 / rho),
        T::constant(-0.5 / (rho * rho)),
        T::zero(),
        T::zero(),
    );
    let partials = |x: &NodeSeries<T>| {
        let x_rho = Dual3::new(x.d_rho, x.d_rho2, x.d_rho_theta, x.d_rho_zeta);
        let x_t = Dual3::new(x.d_theta, x.d_rho_theta, x.d_theta2, x.d_theta_zeta);
        let x_z = Dual3::new(x.d_zeta, x.d_rho_zeta, x.d_theta_zeta, x.d_zeta2);
        [x_rho * inv, x_t, x_z]
    };
    let r_d = partials(r);
    let z_d = partials(z);
    let l = partials(lambda);
    let rv = Dual3::new(r.value, r.d_rho, r.d_theta, r.d_zeta);

    let sqrt_g = rv * (r_d[1] * z_d[0] - r_d[0] * z_d[1]);

    let mut g_lower = [[Dual3::constant(T::zero()); 3]; 3];
    for i in 0..3 {
        for j in i..3 {
            let mut g = r_d[i] * r_d[j] + z_d[i] * z_d[j];
            if i == 2 && j == 2 {
                g = g + rv * rv;
            }
            g_lower[i][j] = g;
            g_lower[j][i] = g;
        }
    }

    let e_sub = [
        [r_d[0].value, T::zero(), z_d[0].value],
        [r_d[1].value, T::zero(), z_d[1].value],
        [r_d[2].value, rv.value, z_d[2].value],
    ];
    let inv_g = sqrt_g.value.recip();
    let scale = |v: V3<T>| v.map(|c| c * inv_g);
    let e_sup = [
        scale(cross(&e_sub[1], &e_sub[2])),
        scale(cross(&e_sub[2], &e_sub[0])),
        scale(cross(&e_sub[0], &e_sub[1])),
    ];
    let mut g_upper = [[T::zero(); 3]; 3];
    for i in 0..3 {
        for j in i..3 {
            let g = dot(&e_sup[i], &e_sup[j]);
            g_upper[i][j] = g;
            g_upper[j][i] = g;
        }
    }

    Geometry {
        rho,
        r: rv,
        z: z.value,
        r_d,
        z_d,
        lambda_d: [l[1], l[2]],
        sqrt_g,
        g_lower,
        g_upper,
        e_sub,
        e_sup,
    }
}

/// Magnetic field at one node: `B^s = 0`, contravariant `B^theta`, `B^zeta`
/// and covariant `B_i`, all with gradients.
#[derive(Clone, Copy, Debug)]
pub struct MagneticField<T> {
    pub b_sup: [Dual3<T>; 2],
    pub b_sub: [Dual3<T>; 3],
    /// `|B|^2`.
    pub b_sq: Dual3<T>,
}

pub fn magnetic_field<T: Real>(geo: &Geometry<T>, prof: &SurfaceProfile) -> MagneticField<T> {
    let iota = Dual3::new(
        T::constant(prof.iota),
        T::constant(prof.iota_s * 2.0 * geo.rho),
        T::zero(),
        T::zero(),
    );
    let factor = geo.sqrt_g.recip().scale(prof.psi_s);
    let b_theta = factor * (iota - geo.lambda_d[1]);
    let b_zeta = factor * (geo.lambda_d[0] + 1.0);
    let b_sub = [0, 1, 2].map(|i| b_theta * geo.g_lower[i][1] + b_zeta * geo.g_lower[i][2]);
    let b_sq = b_theta * b_sub[1] + b_zeta * b_sub[2];
    MagneticField {
        b_sup: [b_theta, b_zeta],
        b_sub,
        b_sq,
    }
}

/// `mu0 J^i = (d_j B_k - d_k B_j) / sqrt_g` for cyclic `(i, j, k)`.
pub fn curl_b<T: Real>(geo: &Geometry<T>, field: &MagneticField<T>) -> V3<T> {
    let d = field.b_sub.map(|b| geo.flux_gradient(&b));
    // d[k][j] = d_j B_k
    let inv = geo.sqrt_g.value.recip();
    [
        (d[2][1] - d[1][2]) * inv,
        (d[0][2] - d[2][0]) * inv,
        (d[1][0] - d[0][1]) * inv,
    ]
}

/// Contravariant current density `J^i` in A/m^2 per coordinate unit.
pub fn current<T: Real>(geo: &Geometry<T>, field: &MagneticField<T>) -> V3<T> {
    curl_b(geo, field).map(|c| c * (1.0 / MU0))
}

/// Force residual `F = (curl B) x B - mu0 grad p = F_s e^s + F_h e^h`.
#[derive(Clone, Copy, Debug)]
pub struct Force<T> {
    pub f_s: T,
    pub f_h: T,
    /// `|F|^2`.
    pub norm_sq: T,
}

impl<T: Real> Force<T> {
    pub fn norm(&self) -> T {
        self.norm_sq.sqrt()
    }
}

pub fn force<T: Real>(
    geo: &Geometry<T>,
    field: &MagneticField<T>,
    prof: &SurfaceProfile,
) -> Force<T> {
    let c = curl_b(geo, field);
    let sg = geo.sqrt_g.value;
    let (bt, bz) = (field.b_sup[0].value, field.b_sup[1].value);
    let f_s = sg * (c[1] * bz - c[2] * bt) - MU0 * prof.pressure_s;
    let f_h = -c[0];
    let gu = &geo.g_upper;
    let es_eh = sg * (bz * gu[0][1] - bt * gu[0][2]);
    let eh_eh = sg * sg * (bz * bz * gu[1][1] - bt * bz * gu[1][2] * 2.0 + bt * bt * gu[2][2]);
    let norm_sq = f_s * f_s * gu[0][0] + f_s * f_h * es_eh * 2.0 + f_h * f_h * eh_eh;
    Force { f_s, f_h, norm_sq }
}

/// `|grad |B|^2| / (2 mu0)`, the magnetic pressure gradient magnitude.
pub fn grad_b2_magnitude<T: Real>(geo: &Geometry<T>, field: &MagneticField<T>) -> T {
    geo.gradient_norm_sq(&field.b_sq).sqrt() * (0.5 / MU0)
}

/// All per-node outputs of the kernel for one node, as plain numbers.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NodeState {
    pub rho: f64,
    pub theta: f64,
    pub zeta: f64,
    pub r: f64,
    pub z: f64,
    /// Covariant basis `e_s, e_theta, e_zeta` in `(R, phi, Z)` components.
    pub e_sub: [[f64; 3]; 3],
    pub e_sup: [[f64; 3]; 3],
    pub sqrt_g: f64,
    pub g_lower: [[f64; 3]; 3],
    pub g_upper: [[f64; 3]; 3],
    /// `B^theta`, `B^zeta`.
    pub b_sup: [f64; 2],
    /// `B_s`, `B_theta`, `B_zeta`.
    pub b_sub: [f64; 3],
    pub b_mag: f64,
    /// `J^s`, `J^theta`, `J^zeta`.
    pub j_sup: [f64; 3],
    pub f_s: f64,
    pub f_h: f64,
    /// `|F|` with `F = mu0 (J x B - grad p)`.
    pub f_mag: f64,
    /// `|grad |B|^2| / (2 mu0)`.
    pub grad_b2: f64,
}

/// Runs the full kernel at one node in plain arithmetic.
pub fn evaluate_node(
    prof: &SurfaceProfile,
    (theta, zeta): (f64, f64),
    r: &NodeSeries<f64>,
    z: &NodeSeries<f64>,
    lambda: &NodeSeries<f64>,
) -> NodeState {
    let geo = geometry(prof.rho, r, z, lambda);
    let field = magnetic_field(&geo, prof);
    let f = force(&geo, &field, prof);
    NodeState {
        rho: prof.rho,
        theta,
        zeta,
        r: r.value,
        z: z.value,
        e_sub: geo.e_sub,
        e_sup: geo.e_sup,
        sqrt_g: geo.sqrt_g.value,
        g_lower: geo.g_lower.map(|row| row.map(|g| g.value)),
        g_upper: geo.g_upper,
        b_sup: field.b_sup.map(|b| b.value),
        b_sub: field.b_sub.map(|b| b.value),
        b_mag: field.b_sq.value.max(0.0).sqrt(),
        j_sup: current(&geo, &field),
        f_s: f.f_s,
        f_h: f.f_h,
        f_mag: f.norm_sq.max(0.0).sqrt(),
        grad_b2: grad_b2_magnitude(&geo, &field),
    }
}

/// Radial nodes strictly inside `(0, 1)` times a uniform angular grid.
#[derive(Clone, Debug, PartialEq)]
pub struct CollocationGrid {
    pub rho: Vec<f64>,
    pub angular: AngularGrid,
}

impl CollocationGrid {
    pub fn new(rho: Vec<f64>, angular: AngularGrid) -> Result<Self> {
        if rho.is_empty() {
            return Err(Error::EmptyGrid(
                "collocation grid needs at least one surface",
            ));
        }
        if let Some(&bad) = rho.iter().find(|&&r| !(r > 0.0 && r < 1.0)) {
            return Err(Error::RadialDomain { rho: bad });
        }
        if rho.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput(
                "rho nodes must be strictly increasing".into(),
            ));
        }
        if angular.is_empty() {
            return Err(Error::EmptyGrid("angular grid has no nodes"));
        }
        Ok(CollocationGrid { rho, angular })
    }

    /// `rho_j = (j + 1/2) / n_rho`.
    pub fn midpoints(n_rho: usize, angular: AngularGrid) -> Result<Self> {
        let rho = (0..n_rho)
            .map(|j| (j as f64 + 0.5) / n_rho as f64)
            .collect();
        Self::new(rho, angular)
    }

    pub fn len(&self) -> usize {
        self.rho.len() * self.angular.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Radial cell widths: the distance between midpoints of neighbouring
    /// nodes, with the first and last cells closed at 0 and 1.
    pub fn rho_widths(&self) -> Vec<f64> {
        let n = self.rho.len();
        (0..n)
            .map(|j| {
                let lo = if j == 0 {
                    0.0
                } else {
                    0.5 * (self.rho[j - 1] + self.rho[j])
                };
                let hi = if j + 1 == n {
                    1.0
                } else {
                    0.5 * (self.rho[j] + self.rho[j + 1])
                };
                hi - lo
            })
            .collect()
    }
}

/// Per-node results of the kernel over a whole collocation grid, surface-major.
#[derive(Clone, Debug)]
pub struct FieldState {
    pub grid: CollocationGrid,
    pub nodes: Vec<NodeState>,
    /// Integration weight of each node: `|sqrt_g| 2 rho drho dtheta dzeta`.
    pub weights: Vec<f64>,
}

/// Synthesizes `R`, `Z`, `lambda` at every node of one surface from profile
/// jets.
pub(crate) fn synthesize_surface<T: Real>(
    table: &BasisTable,
    jets: &[Vec<crate::autodiff::Jet2<T>>; 3],
) -> Vec<[NodeSeries<T>; 3]> {
    let split = |j: &Vec<crate::autodiff::Jet2<T>>| {
        (
            j.iter().map(|x| x.value).collect::<Vec<_>>(),
            j.iter().map(|x| x.d1).collect::<Vec<_>>(),
            j.iter().map(|x| x.d2).collect::<Vec<_>>(),
        )
    };
    let parts = [split(&jets[0]), split(&jets[1]), split(&jets[2])];
    let parity = [Parity::Cosine, Parity::Sine, Parity::Sine];
    (0..table.n_nodes())
        .map(|node| {
            // order R, Z, lambda for the kernel
            let s = |c: usize| {
                let (v, d1, d2) = &parts[c];
                table.synthesize_node(node, parity[c], v, Some((d1.as_slice(), d2.as_slice())))
            };
            [s(0), s(2), s(1)]
        })
        .collect()
}

/// Checks that `sqrt_g` is non-zero and of one sign over all nodes.
pub fn check_jacobian(nodes: &[NodeState]) -> Result<()> {
    let Some(first) = nodes.first() else {
        return Ok(());
    };
    let sign = first.sqrt_g.signum();
    for n in nodes {
        if !n.sqrt_g.is_finite() {
            return Err(Error::NonFinite {
                rho: n.rho,
                theta: n.theta,
                zeta: n.zeta,
            });
        }
        if n.sqrt_g == 0.0 || n.sqrt_g.signum() != sign {
            return Err(Error::JacobianSign {
                rho: n.rho,
                theta: n.theta,
                zeta: n.zeta,
                sqrt_g: n.sqrt_g,
            });
        }
    }
    Ok(())
}

impl FieldState {
    /// Evaluates the composed parametrization and the full kernel at every
    /// collocation node.
    pub fn evaluate(
        params: &NetParams,
        input: &EquilibriumInput,
        grid: &CollocationGrid,
    ) -> Result<Self> {
        let basis = ProfileBasis::new(input, params.layout.width)?;
        if basis.layout != params.layout {
            return Err(Error::InvalidInput(
                "parameter layout does not match the input".into(),
            ));
        }
        if grid.angular.nfp != input.nfp {
            return Err(Error::InvalidInput(
                "grid and input disagree on n_fp".into(),
            ));
        }
        let table = BasisTable::new(&basis.cos_modes, &grid.angular);
        let per_surface: Vec<Vec<NodeState>> = grid
            .rho
            .par_iter()
            .map(|&rho| {
                let prof = SurfaceProfile::from_input(input, rho);
                let jets = basis.compose(&params.values, rho);
                synthesize_surface(&table, &jets)
                    .iter()
                    .enumerate()
                    .map(|(i, [r, z, l])| evaluate_node(&prof, grid.angular.node(i), r, z, l))
                    .collect()
            })
            .collect();
        Self::from_nodes(grid.clone(), per_surface.concat())
    }

    /// Wraps precomputed node states (surface-major order), validating the
    /// Jacobian.
    pub fn from_nodes(grid: CollocationGrid, nodes: Vec<NodeState>) -> Result<Self> {
        if nodes.len() != grid.len() {
            return Err(Error::InvalidInput(format!(
                "expected {} nodes, got {}",
                grid.len(),
                nodes.len()
            )));
        }
        check_jacobian(&nodes)?;
        for n in &nodes {
            if !(n.f_mag.is_finite() && n.b_mag.is_finite() && n.grad_b2.is_finite()) {
                return Err(Error::NonFinite {
                    rho: n.rho,
                    theta: n.theta,
                    zeta: n.zeta,
                });
            }
        }
        let widths = grid.rho_widths();
        let per = grid.angular.len();
        let w_ang = grid.angular.node_weight();
        let weights = nodes
            .iter()
            .enumerate()
            .map(|(i, n)| n.sqrt_g.abs() * 2.0 * n.rho * widths[i / per] * w_ang)
            .collect();
        Ok(FieldState {
            grid,
            nodes,
            weights,
        })
    }

    pub fn surface(&self, j: usize) -> &[NodeState] {
        let per = self.grid.angular.len();
        &self.nodes[j * per..(j + 1) * per]
    }

    /// Plasma volume `int |sqrt_g| ds dtheta dzeta`.
    pub fn volume(&self) -> f64 {
        pairwise_sum(&self.weights)
    }

    /// `<q> = int q |sqrt_g| / int |sqrt_g|` over the volume.
    pub fn volume_average(&self, q: &[f64]) -> f64 {
        assert_eq!(q.len(), self.nodes.len(), "one value per node");
        let num: Vec<f64> = q.iter().zip(&self.weights).map(|(a, w)| a * w).collect();
        pairwise_sum(&num) / self.volume()
    }

    /// Flux-surface average of `q` (one value per node of surface `j`).
    pub fn surface_average(&self, q: &[f64], j: usize) -> f64 {
        let nodes = self.surface(j);
        assert_eq!(q.len(), nodes.len(), "one value per surface node");
        let w: Vec<f64> = nodes.iter().map(|n| n.sqrt_g.abs()).collect();
        let num: Vec<f64> = q.iter().zip(&w).map(|(a, b)| a * b).collect();
        pairwise_sum(&num) / pairwise_sum(&w)
    }

    /// `<|grad |B|^2| / (2 mu0)>` over the volume.
    pub fn pressure_gradient_normalizer(&self) -> f64 {
        let q: Vec<f64> = self.nodes.iter().map(|n| n.grad_b2).collect();
        self.volume_average(&q)
    }

    /// Normalized force residual per node and its volume average.
    pub fn f_norm(&self, normalizer: f64) -> Result<FNorm> {
        let field_free = normalizer == 0.0 && self.nodes.iter().all(|n| n.f_mag == 0.0);
        if !field_free && (!(normalizer > 0.0) || !normalizer.is_finite()) {
            return Err(Error::ZeroNormalizer);
        }
        // |F| carries a factor mu0 relative to J x B - grad p. A vacuum
        // state with no field and no pressure has zero residual.
        let per_node: Vec<f64> = if field_free {
            vec![0.0; self.nodes.len()]
        } else {
            self.nodes
                .iter()
                .map(|n| n.f_mag / (MU0 * normalizer))
                .collect()
        };
        let volume = self.volume_average(&per_node);
        let per = self.grid.angular.len();
        let profile = (0..self.grid.rho.len())
            .map(|j| self.surface_average(&per_node[j * per..(j + 1) * per], j))
            .collect();
        Ok(FNorm {
            per_node,
            volume,
            profile,
        })
    }

    /// [`Self::f_norm`] normalized by this state's own magnetic pressure
    /// gradient.
    pub fn f_norm_self(&self) -> Result<FNorm> {
        self.f_norm(self.pressure_gradient_normalizer())
    }
}

/// Normalized force residual.
#[derive(Clone, Debug, PartialEq)]
pub struct FNorm {
    pub per_node: Vec<f64>,
    /// `F_vol_norm`.
    pub volume: f64,
    /// Flux-surface averages, one per radial node.
    pub profile: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{ModeSet, SurfaceCoefficients};
    use std::f64::consts::PI;

    /// Node series of the circular torus `R = 3 + rho cos t`, `Z = rho sin t`.
    fn circle(rho: f64, theta: f64) -> [NodeSeries<f64>; 3] {
        let (s, c) = theta.sin_cos();
        let zero = NodeSeries {
            value: 0.0,
            d_theta: 0.0,
            d_zeta: 0.0,
            d_theta2: 0.0,
            d_theta_zeta: 0.0,
            d_zeta2: 0.0,
            d_rho: 0.0,
            d_rho_theta: 0.0,
            d_rho_zeta: 0.0,
            d_rho2: 0.0,
        };
        let r = NodeSeries {
            value: 3.0 + rho * c,
            d_theta: -rho * s,
            d_theta2: -rho * c,
            d_rho: c,
            d_rho_theta: -s,
            ..zero
        };
        let z = NodeSeries {
            value: rho * s,
            d_theta: rho * c,
            d_theta2: -rho * s,
            d_rho: s,
            d_rho_theta: c,
            ..zero
        };
        [r, z, zero]
    }

    fn profile(rho: f64, psi_s: f64, iota: f64, p_s: f64) -> SurfaceProfile {
        SurfaceProfile {
            rho,
            psi_s,
            iota,
            iota_s: 0.0,
            pressure_s: p_s,
        }
    }

    #[test]
    fn circular_torus_geometry() {
        let [r, z, l] = circle(0.5, 0.0);
        let n = evaluate_node(&profile(0.5, 1.0, 1.0, 0.0), (0.0, 0.0), &r, &z, &l);
        assert!((n.sqrt_g + 1.75).abs() < 1e-14);
        assert!((n.g_lower[1][1] - 0.25).abs() < 1e-14);
        assert!((n.g_lower[2][2] - 12.25).abs() < 1e-14);
        assert!((n.b_sup[0] + 1.0 / 1.75).abs() < 1e-14);
        assert!((n.b_sup[1] + 1.0 / 1.75).abs() < 1e-14);
    }

    #[test]
    fn metric_inverse_and_reciprocal_jacobian() {
        for (rho, theta) in [(0.3, 0.4), (0.8, 2.0), (0.5, 5.0)] {
            let [r, z, l] = circle(rho, theta);
            let n = evaluate_node(&profile(rho, 1.0, 0.7, 0.0), (theta, 0.0), &r, &z, &l);
            for i in 0..3 {
                for k in 0..3 {
                    let p: f64 = (0..3).map(|j| n.g_upper[i][j] * n.g_lower[j][k]).sum();
                    let expect = if i == k { 1.0 } else { 0.0 };
                    assert!((p - expect).abs() < 1e-10, "{i}{k}: {p}");
                }
            }
            let triple = dot(&n.e_sup[0], &cross(&n.e_sup[1], &n.e_sup[2]));
            assert!((n.sqrt_g * triple - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_flux_gives_zero_field_and_pure_pressure_force() {
        let [r, z, l] = circle(0.6, 1.1);
        let n = evaluate_node(&profile(0.6, 0.0, 1.0, -1600.0), (1.1, 0.0), &r, &z, &l);
        assert_eq!(n.b_sup, [0.0, 0.0]);
        assert_eq!(n.j_sup, [0.0, 0.0, 0.0]);
        let expect = MU0 * 1600.0 * n.g_upper[0][0].sqrt();
        assert!((n.f_mag - expect).abs() <= 1e-14 * expect);
        let n0 = evaluate_node(&profile(0.6, 0.0, 1.0, 0.0), (1.1, 0.0), &r, &z, &l);
        assert_eq!(n0.f_mag, 0.0);
    }

    #[test]
    fn field_ratio_is_iota_without_lambda() {
        let [r, z, l] = circle(0.4, 0.3);
        let n = evaluate_node(&profile(0.4, 0.2, 0.37, 0.0), (0.3, 0.0), &r, &z, &l);
        assert!((n.b_sup[0] / n.b_sup[1] - 0.37).abs() < 1e-15);
    }

    #[test]
    fn grid_validation_and_widths() {
        let ang = AngularGrid::uniform(4, 1, 1).unwrap();
        assert!(CollocationGrid::new(vec![0.0, 0.5], ang.clone()).is_err());
        assert!(CollocationGrid::new(vec![0.5, 0.4], ang.clone()).is_err());
        assert!(CollocationGrid::new(vec![], ang.clone()).is_err());
        let g = CollocationGrid::midpoints(4, ang).unwrap();
        assert_eq!(g.rho, vec![0.125, 0.375, 0.625, 0.875]);
        for w in g.rho_widths() {
            assert!((w - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn torus_volume_from_synthesized_fields() {
        let m = ModeSet::new(2, 0, 1, Parity::Cosine).unwrap();
        let grid = CollocationGrid::midpoints(64, AngularGrid::uniform(8, 1, 1).unwrap()).unwrap();
        let mut nodes = Vec::new();
        for &rho in &grid.rho {
            let mut rc = SurfaceCoefficients::zeros(m.clone()).with_radial();
            rc.values = vec![3.0, rho];
            rc.d_rho = Some(vec![0.0, 1.0]);
            let mut zc = SurfaceCoefficients::zeros(m.with_parity(Parity::Sine)).with_radial();
            zc.values = vec![0.0, rho];
            zc.d_rho = Some(vec![0.0, 1.0]);
            let lc = SurfaceCoefficients::zeros(m.with_parity(Parity::Sine)).with_radial();
            let table = BasisTable::new(&m, &grid.angular);
            for node in 0..grid.angular.len() {
                let syn = |c: &SurfaceCoefficients| {
                    table.synthesize_node(
                        node,
                        c.mode_set.parity(),
                        &c.values,
                        Some((c.d_rho.as_deref().unwrap(), c.d_rho2.as_deref().unwrap())),
                    )
                };
                let prof = profile(rho, 1.0, 1.0, 0.0);
                nodes.push(evaluate_node(
                    &prof,
                    grid.angular.node(node),
                    &syn(&rc),
                    &syn(&zc),
                    &syn(&lc),
                ));
            }
        }
        let state = FieldState::from_nodes(grid, nodes).unwrap();
        for n in &state.nodes {
            assert!((n.sqrt_g + n.r / 2.0).abs() <= 1e-10 * n.r);
        }
        let v = state.volume();
        assert!((v - 6.0 * PI * PI).abs() < 1e-3 * v);
        let ones = vec![1.0; state.nodes.len()];
        assert!((state.volume_average(&ones) - 1.0).abs() < 1e-12);
        assert!((state.surface_average(&ones[..8], 3) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sign_flip_is_reported() {
        let [r, z, l] = circle(0.5, 0.0);
        let a = evaluate_node(&profile(0.5, 1.0, 1.0, 0.0), (0.0, 0.0), &r, &z, &l);
        let mut b = a;
        b.sqrt_g = -b.sqrt_g;
        assert!(matches!(
            check_jacobian(&[a, b]),
            Err(Error::JacobianSign { .. })
        ));
        assert!(check_jacobian(&[a, a]).is_ok());
    }
}
