//! Neural-network parametrization of the Fourier mode radial profiles.
//!
//! Each coordinate `X` in `{R, lambda, Z}` owns a two-hidden-layer tanh MLP
//! mapping `f(rho) = 2 rho^2 - 1` to one output per mode. The outputs are
//! composed with the boundary harmonics, the distance factor `1 - rho^2` and
//! the axis factor `rho^m`:
//!
//! ```text
//! R_mn(rho)      = rho^m [R_b,mn + (1 - rho^2) NN_R,mn(f(rho))]
//! Z_mn(rho)      = rho^m [Z_b,mn + (1 - rho^2) NN_Z,mn(f(rho))]
//! lambda_mn(rho) = rho^m  NN_lambda,mn(f(rho))
//! ```
//!
//! so `R` and `Z` match the boundary exactly at `rho = 1` and every mode
//! vanishes like `rho^m` at the axis.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{jet_lift, Jet2, Real};
use crate::error::{Error, Result};
use crate::polygon;
use crate::spectral::{ModeSet, Parity, SurfaceCoefficients};

/// Vacuum permeability in H/m.
pub const MU0: f64 = 4.0e-7 * PI;

/// Standard deviation of the initial weight distribution.
pub const INIT_WEIGHT_STD: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Coordinate {
    R,
    Lambda,
    Z,
}

impl Coordinate {
    pub const ALL: [Coordinate; 3] = [Coordinate::R, Coordinate::Lambda, Coordinate::Z];

    pub fn index(self) -> usize {
        match self {
            Coordinate::R => 0,
            Coordinate::Lambda => 1,
            Coordinate::Z => 2,
        }
    }

    pub fn parity(self) -> Parity {
        match self {
            Coordinate::R => Parity::Cosine,
            Coordinate::Lambda | Coordinate::Z => Parity::Sine,
        }
    }
}

/// Polynomial in the normalized flux `s = rho^2`, coefficients in ascending
/// order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Polynomial {
    pub coeffs: Vec<f64>,
}

impl Polynomial {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Polynomial { coeffs }
    }

    pub fn eval(&self, s: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * s + c)
    }

    pub fn derivative(&self) -> Polynomial {
        Polynomial {
            coeffs: self
                .coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(i, c)| i as f64 * c)
                .collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryMode {
    pub m: u32,
    pub n: i32,
    pub r: f64,
    pub z: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxisMode {
    pub n: u32,
    pub r: f64,
    pub z: f64,
}

/// Everything that defines a fixed-boundary equilibrium problem.
#[derive(Clone, Debug, PartialEq)]
pub struct EquilibriumInput {
    /// Number of poloidal modes `M` (m = 0..M-1).
    pub m_count: u32,
    /// Maximum toroidal mode `N`.
    pub n_max: u32,
    pub nfp: u32,
    pub boundary: Vec<BoundaryMode>,
    pub axis: Option<Vec<AxisMode>>,
    /// Pressure in Pa as a polynomial in s.
    pub pressure: Polynomial,
    /// Rotational transform as a polynomial in s.
    pub iota: Polynomial,
    /// Total toroidal flux through the boundary, Wb.
    pub toroidal_flux: f64,
}

impl EquilibriumInput {
    /// The axisymmetric D-shaped tokamak case: `R_b = 3.51 - cos(t) + 0.106 cos(2t)`,
    /// `Z_b = 1.47 sin(t) + 0.16 sin(2t)`, `p = 1600 (1 - s)^2`, `iota = 1 - 0.67 s`,
    /// 1 Wb toroidal flux.
    pub fn dshape(m_count: u32) -> Self {
        EquilibriumInput {
            m_count,
            n_max: 0,
            nfp: 1,
            boundary: vec![
                BoundaryMode {
                    m: 0,
                    n: 0,
                    r: 3.51,
                    z: 0.0,
                },
                BoundaryMode {
                    m: 1,
                    n: 0,
                    r: -1.0,
                    z: 1.47,
                },
                BoundaryMode {
                    m: 2,
                    n: 0,
                    r: 0.106,
                    z: 0.16,
                },
            ],
            axis: None,
            pressure: Polynomial::new(vec![1600.0, -3200.0, 1600.0]),
            iota: Polynomial::new(vec![1.0, -0.67]),
            toroidal_flux: 1.0,
        }
    }

    pub fn mode_set(&self, parity: Parity) -> Result<ModeSet> {
        ModeSet::new(self.m_count, self.n_max, self.nfp, parity)
    }

    pub fn mode_count(&self) -> usize {
        ModeSet::expected_len(self.m_count, self.n_max)
    }

    /// `d psi / d s` with `psi` the toroidal flux over 2 pi.
    pub fn dpsi_ds(&self) -> f64 {
        self.toroidal_flux / (2.0 * PI)
    }

    pub fn boundary_r(&self) -> Result<SurfaceCoefficients> {
        let mut c = SurfaceCoefficients::zeros(self.mode_set(Parity::Cosine)?);
        for b in &self.boundary {
            c.set(b.m, b.n, b.r)?;
        }
        Ok(c)
    }

    pub fn boundary_z(&self) -> Result<SurfaceCoefficients> {
        let mut c = SurfaceCoefficients::zeros(self.mode_set(Parity::Sine)?);
        for b in &self.boundary {
            if (b.m, b.n) != (0, 0) {
                c.set(b.m, b.n, b.z)?;
            }
        }
        Ok(c)
    }

    /// Axis guess `(R_a0n, Z_a0n)` for `n = 0..=N`; falls back to the
    /// boundary `m = 0` harmonics when no axis is given.
    pub fn axis_guess(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = self.n_max as usize + 1;
        let (mut r, mut z) = (vec![0.0; n], vec![0.0; n]);
        match &self.axis {
            Some(rows) => {
                for a in rows {
                    r[a.n as usize] = a.r;
                    z[a.n as usize] = a.z;
                }
            }
            None => {
                let has_m0 = self.boundary.iter().any(|b| b.m == 0 && b.r != 0.0);
                if !has_m0 {
                    return Err(Error::InvalidInput(
                        "no axis guess given and the boundary has no m=0 harmonics".into(),
                    ));
                }
                for b in self.boundary.iter().filter(|b| b.m == 0) {
                    r[b.n as usize] = b.r;
                    z[b.n as usize] = b.z;
                }
            }
        }
        z[0] = 0.0;
        Ok((r, z))
    }

    pub fn validate(&self) -> Result<()> {
        if self.m_count == 0 || self.nfp == 0 {
            return Err(Error::InvalidInput("M and n_fp must be >= 1".into()));
        }
        if !self.toroidal_flux.is_finite() || self.toroidal_flux == 0.0 {
            return Err(Error::InvalidInput(
                "toroidal flux must be finite and non-zero".into(),
            ));
        }
        let mut seen = std::collections::HashSet::new();
        for b in &self.boundary {
            if b.m >= self.m_count {
                return Err(Error::InvalidInput(format!(
                    "boundary mode m={} exceeds M-1={}",
                    b.m,
                    self.m_count - 1
                )));
            }
            if b.n.unsigned_abs() > self.n_max {
                return Err(Error::InvalidInput(format!(
                    "boundary mode n={} exceeds N={}",
                    b.n, self.n_max
                )));
            }
            if b.m == 0 && b.n < 0 {
                return Err(Error::InvalidInput(format!(
                    "boundary mode (0, {}) has negative n; use n >= 0 for m = 0",
                    b.n
                )));
            }
            if (b.m, b.n) == (0, 0) && b.z != 0.0 {
                return Err(Error::InvalidInput("Z_b(0,0) must be zero".into()));
            }
            if !(b.r.is_finite() && b.z.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "boundary mode ({}, {}) not finite",
                    b.m, b.n
                )));
            }
            if !seen.insert((b.m, b.n)) {
                return Err(Error::InvalidInput(format!(
                    "duplicate boundary mode ({}, {})",
                    b.m, b.n
                )));
            }
        }
        if let Some(axis) = &self.axis {
            for a in axis {
                if a.n > self.n_max {
                    return Err(Error::InvalidInput(format!(
                        "axis mode n={} exceeds N={}",
                        a.n, self.n_max
                    )));
                }
            }
        }
        if self
            .pressure
            .coeffs
            .iter()
            .chain(&self.iota.coeffs)
            .any(|c| !c.is_finite())
        {
            return Err(Error::InvalidInput(
                "profile coefficients must be finite".into(),
            ));
        }
        self.axis_guess()?;
        let n_pts = 4 * self.m_count as usize;
        let (r, z) = (self.boundary_r()?, self.boundary_z()?);
        let curve: Vec<(f64, f64)> = (0..n_pts)
            .map(|i| {
                let t = 2.0 * PI * i as f64 / n_pts as f64;
                (r.evaluate(t, 0.0), z.evaluate(t, 0.0))
            })
            .collect();
        if !polygon::is_simple_polygon(&curve) {
            return Err(Error::InvalidInput(
                "boundary cross section at zeta=0 is not a simple closed curve".into(),
            ));
        }
        Ok(())
    }
}

/// Shape of the three networks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetLayout {
    pub width: usize,
    pub modes: usize,
}

/// Parameter blocks of one network, in storage order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Block {
    W0,
    B0,
    W1,
    B1,
    W2,
    B2,
}

impl NetLayout {
    pub fn per_net(&self) -> usize {
        let (n, k) = (self.width, self.modes);
        n + n + n * n + n + k * n + k
    }

    pub fn total(&self) -> usize {
        3 * self.per_net()
    }

    /// Offset and length of `block` of coordinate `coord` in the flat vector.
    pub fn range(&self, coord: Coordinate, block: Block) -> std::ops::Range<usize> {
        let (n, k) = (self.width, self.modes);
        let base = coord.index() * self.per_net();
        let (off, len) = match block {
            Block::W0 => (0, n),
            Block::B0 => (n, n),
            Block::W1 => (2 * n, n * n),
            Block::B1 => (2 * n + n * n, n),
            Block::W2 => (3 * n + n * n, k * n),
            Block::B2 => (3 * n + n * n + k * n, k),
        };
        base + off..base + off + len
    }

    pub fn net_range(&self, coord: Coordinate) -> std::ops::Range<usize> {
        let base = coord.index() * self.per_net();
        base..base + self.per_net()
    }
}

/// Weights and biases of the R, lambda and Z networks in one flat vector
/// (R block, then lambda, then Z; each `W0, b0, W1, b1, W2, b2`, row-major).
#[derive(Clone, Debug, PartialEq)]
pub struct NetParams {
    pub layout: NetLayout,
    pub values: Vec<f64>,
}

impl NetParams {
    pub fn zeros(layout: NetLayout) -> Self {
        NetParams {
            layout,
            values: vec![0.0; layout.total()],
        }
    }

    pub fn from_values(layout: NetLayout, values: Vec<f64>) -> Result<Self> {
        if values.len() != layout.total() {
            return Err(Error::InvalidInput(format!(
                "expected {} parameters, got {}",
                layout.total(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("parameters must be finite".into()));
        }
        Ok(NetParams { layout, values })
    }

    pub fn block(&self, coord: Coordinate, block: Block) -> &[f64] {
        &self.values[self.layout.range(coord, block)]
    }

    pub fn block_mut(&mut self, coord: Coordinate, block: Block) -> &mut [f64] {
        let r = self.layout.range(coord, block);
        &mut self.values[r]
    }

    pub fn net(&self, coord: Coordinate) -> &[f64] {
        &self.values[self.layout.net_range(coord)]
    }
}

/// `f(rho) = 2 rho^2 - 1` with its first and second derivatives.
pub fn input_map(rho: f64) -> Jet2<f64> {
    Jet2::new(2.0 * rho * rho - 1.0, 4.0 * rho, 4.0)
}

/// Evaluates one network on an input jet. `net` is the flat block of one
/// coordinate.
pub(crate) fn mlp_forward_jet<T: Real>(
    net: &[T],
    layout: NetLayout,
    input: Jet2<f64>,
) -> Vec<Jet2<T>> {
    let (n, k) = (layout.width, layout.modes);
    let w0 = &net[0..n];
    let b0 = &net[n..2 * n];
    let w1 = &net[2 * n..2 * n + n * n];
    let b1 = &net[2 * n + n * n..3 * n + n * n];
    let w2 = &net[3 * n + n * n..3 * n + n * n + k * n];
    let b2 = &net[3 * n + n * n + k * n..];

    let mut h = [
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
    ];
    for i in 0..n {
        let z = Jet2::new(
            w0[i] * input.value + b0[i],
            w0[i] * input.d1,
            w0[i] * input.d2,
        )
        .tanh();
        h[0].push(z.value);
        h[1].push(z.d1);
        h[2].push(z.d2);
    }
    let mut g = [
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
    ];
    for i in 0..n {
        let row = &w1[i * n..(i + 1) * n];
        let z = Jet2::new(
            T::dot(row, &h[0]) + b1[i],
            T::dot(row, &h[1]),
            T::dot(row, &h[2]),
        )
        .tanh();
        g[0].push(z.value);
        g[1].push(z.d1);
        g[2].push(z.d2);
    }
    (0..k)
        .map(|j| {
            let row = &w2[j * n..(j + 1) * n];
            Jet2::new(
                T::dot(row, &g[0]) + b2[j],
                T::dot(row, &g[1]),
                T::dot(row, &g[2]),
            )
        })
        .collect()
}

/// `NN_X(f)` for every mode, with first and second derivatives in `f`.
pub fn mlp_forward(params: &NetParams, coord: Coordinate, f: f64) -> Vec<Jet2<f64>> {
    mlp_forward_jet(params.net(coord), params.layout, jet_lift(f))
}

/// Profiles of all modes of all three coordinates at one radius.
#[derive(Clone, Debug, PartialEq)]
pub struct ModeProfiles {
    pub rho: f64,
    pub r: SurfaceCoefficients,
    pub lambda: SurfaceCoefficients,
    pub z: SurfaceCoefficients,
}

impl ModeProfiles {
    pub fn coords(&self) -> [&SurfaceCoefficients; 3] {
        [&self.r, &self.lambda, &self.z]
    }
}

/// Immutable per-problem data needed to compose profiles.
#[derive(Clone, Debug)]
pub struct ProfileBasis {
    pub layout: NetLayout,
    pub cos_modes: ModeSet,
    pub sin_modes: ModeSet,
    pub boundary_r: Vec<f64>,
    pub boundary_z: Vec<f64>,
}

impl ProfileBasis {
    pub fn new(input: &EquilibriumInput, width: usize) -> Result<Self> {
        let cos_modes = input.mode_set(Parity::Cosine)?;
        let sin_modes = input.mode_set(Parity::Sine)?;
        let layout = NetLayout {
            width,
            modes: cos_modes.len(),
        };
        Ok(ProfileBasis {
            layout,
            boundary_r: input.boundary_r()?.values,
            boundary_z: input.boundary_z()?.values,
            cos_modes,
            sin_modes,
        })
    }

    /// Composed profile jets `[R, lambda, Z]` at `rho`. Valid on the closed
    /// interval; callers enforce the open interval where required.
    pub fn compose<T: Real>(&self, params: &[T], rho: f64) -> [Vec<Jet2<T>>; 3] {
        let f = input_map(rho);
        let r = jet_lift(rho);
        let dist = Jet2::new(1.0 - rho * rho, -2.0 * rho, -2.0);
        let max_m = self.cos_modes.m_count();
        let axis_factor: Vec<Jet2<f64>> = (0..max_m).map(|m| r.powi(m)).collect();
        let entries = self.cos_modes.entries();
        let per = self.layout.per_net();

        let mut out: [Vec<Jet2<T>>; 3] = Default::default();
        for coord in Coordinate::ALL {
            let net = &params[coord.index() * per..(coord.index() + 1) * per];
            let nn = mlp_forward_jet(net, self.layout, f);
            out[coord.index()] = nn
                .into_iter()
                .zip(entries)
                .enumerate()
                .map(|(idx, (y, &(m, n)))| {
                    let rho_m = axis_factor[m as usize];
                    match coord {
                        Coordinate::R => {
                            y.mul_f64(dist).add_f64(self.boundary_r[idx]).mul_f64(rho_m)
                        }
                        Coordinate::Z if (m, n) == (0, 0) => Jet2::constant(T::zero()),
                        Coordinate::Z => {
                            y.mul_f64(dist).add_f64(self.boundary_z[idx]).mul_f64(rho_m)
                        }
                        Coordinate::Lambda if (m, n) == (0, 0) => Jet2::constant(T::zero()),
                        Coordinate::Lambda => y.mul_f64(rho_m),
                    }
                })
                .collect();
        }
        out
    }

    /// Composed profiles as plain coefficient sets (closed interval `[0, 1]`).
    pub fn profiles_at(&self, params: &NetParams, rho: f64) -> ModeProfiles {
        let jets = self.compose(&params.values, rho);
        let to_coeffs = |jets: &[Jet2<f64>], modes: &ModeSet| SurfaceCoefficients {
            mode_set: modes.clone(),
            values: jets.iter().map(|j| j.value).collect(),
            d_rho: Some(jets.iter().map(|j| j.d1).collect()),
            d_rho2: Some(jets.iter().map(|j| j.d2).collect()),
        };
        ModeProfiles {
            rho,
            r: to_coeffs(&jets[0], &self.cos_modes),
            lambda: to_coeffs(&jets[1], &self.sin_modes),
            z: to_coeffs(&jets[2], &self.sin_modes),
        }
    }
}

/// Mode profiles and their first and second radial derivatives at an
/// interior radius.
pub fn mode_profiles(
    params: &NetParams,
    input: &EquilibriumInput,
    rho: f64,
) -> Result<ModeProfiles> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::RadialDomain { rho });
    }
    let basis = ProfileBasis::new(input, params.layout.width)?;
    if basis.layout != params.layout {
        return Err(Error::InvalidInput(format!(
            "network layout {:?} does not match the input's mode count {}",
            params.layout, basis.layout.modes
        )));
    }
    Ok(basis.profiles_at(params, rho))
}

/// Draws weights from `N(0, 0.01^2)` (one ChaCha stream per coordinate),
/// zeroes the hidden biases and sets the output biases so that at the axis
/// the `m = 0` modes of R and Z equal the axis guess and every other mode's
/// network output vanishes.
pub fn init_params(input: &EquilibriumInput, width: usize, seed: u64) -> Result<NetParams> {
    if width == 0 {
        return Err(Error::InvalidInput("network width must be >= 1".into()));
    }
    let basis = ProfileBasis::new(input, width)?;
    let layout = basis.layout;
    let mut params = NetParams::zeros(layout);
    let normal = Normal::new(0.0, INIT_WEIGHT_STD).expect("valid normal distribution");
    for coord in Coordinate::ALL {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(coord.index() as u64);
        for block in [Block::W0, Block::W1, Block::W2] {
            for w in params.block_mut(coord, block) {
                *w = normal.sample(&mut rng);
            }
        }
    }

    let (axis_r, axis_z) = input.axis_guess()?;
    let entries = basis.cos_modes.entries().to_vec();
    for coord in Coordinate::ALL {
        let raw = mlp_forward_jet(params.net(coord), layout, input_map(0.0));
        let b2 = params.block_mut(coord, Block::B2);
        for (idx, &(m, n)) in entries.iter().enumerate() {
            let composed_at_axis = match coord {
                Coordinate::R => basis.boundary_r[idx] + raw[idx].value,
                Coordinate::Z => basis.boundary_z[idx] + raw[idx].value,
                Coordinate::Lambda => raw[idx].value,
            };
            let target = match (coord, m) {
                (Coordinate::R, 0) => axis_r[n as usize],
                (Coordinate::Z, 0) => axis_z[n as usize],
                (Coordinate::Lambda, _) => 0.0,
                // network output zero at the axis
                (Coordinate::R, _) => basis.boundary_r[idx],
                (Coordinate::Z, _) => basis.boundary_z[idx],
            };
            b2[idx] += target - composed_at_axis;
        }
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn small_input() -> EquilibriumInput {
        let mut input = EquilibriumInput::dshape(4);
        input.n_max = 1;
        input.nfp = 3;
        input.boundary.push(BoundaryMode {
            m: 1,
            n: 1,
            r: 0.05,
            z: 0.04,
        });
        input.boundary.push(BoundaryMode {
            m: 0,
            n: 1,
            r: 0.1,
            z: -0.05,
        });
        input
    }

    fn random_params(layout: NetLayout, seed: u64, scale: f64) -> NetParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        NetParams {
            layout,
            values: (0..layout.total())
                .map(|_| rng.random_range(-scale..scale))
                .collect(),
        }
    }

    #[test]
    fn input_map_values() {
        assert!(input_map(0.5_f64.sqrt()).value.abs() < 1e-15);
        assert_eq!(input_map(0.0).value, -1.0);
        let j = input_map(0.5);
        assert_eq!((j.value, j.d1), (-0.5, 2.0));
    }

    #[test]
    fn polynomial_eval_and_derivative() {
        let p = Polynomial::new(vec![1600.0, -3200.0, 1600.0]);
        assert_eq!(p.eval(0.0), 1600.0);
        assert_eq!(p.eval(1.0), 0.0);
        assert_eq!(p.derivative().eval(0.5), -1600.0);
        assert!(Polynomial::default().derivative().coeffs.is_empty());
    }

    #[test]
    fn zero_network() {
        let layout = NetLayout { width: 3, modes: 4 };
        let p = NetParams::zeros(layout);
        for y in mlp_forward(&p, Coordinate::R, 0.3) {
            assert_eq!((y.value, y.d1, y.d2), (0.0, 0.0, 0.0));
        }
    }

    #[test]
    fn constant_network() {
        let layout = NetLayout { width: 3, modes: 2 };
        let mut p = NetParams::zeros(layout);
        p.block_mut(Coordinate::Z, Block::B2)
            .copy_from_slice(&[1.5, -2.0]);
        let out = mlp_forward(&p, Coordinate::Z, -0.7);
        assert_eq!(out[0], Jet2::new(1.5, 0.0, 0.0));
        assert_eq!(out[1], Jet2::new(-2.0, 0.0, 0.0));
    }

    #[test]
    fn unit_network_is_odd() {
        let layout = NetLayout { width: 1, modes: 1 };
        let mut p = NetParams::zeros(layout);
        for b in [Block::W0, Block::W1, Block::W2] {
            p.block_mut(Coordinate::R, b)[0] = 1.0;
        }
        let y = mlp_forward(&p, Coordinate::R, 0.0)[0];
        assert_eq!((y.value, y.d1, y.d2), (0.0, 1.0, 0.0));
    }

    #[test]
    fn layout_blocks_tile_the_vector() {
        let layout = NetLayout { width: 4, modes: 7 };
        assert_eq!(layout.total(), 3 * (4 + 4 + 16 + 4 + 28 + 7));
        let mut next = 0;
        for c in Coordinate::ALL {
            for b in [
                Block::W0,
                Block::B0,
                Block::W1,
                Block::B1,
                Block::W2,
                Block::B2,
            ] {
                let r = layout.range(c, b);
                assert_eq!(r.start, next);
                next = r.end;
            }
        }
        assert_eq!(next, layout.total());
    }

    #[test]
    fn init_is_deterministic_and_hits_axis_guess() {
        let mut input = EquilibriumInput::dshape(5);
        input.axis = Some(vec![AxisMode {
            n: 0,
            r: 3.0,
            z: 0.0,
        }]);
        let a = init_params(&input, 6, 11).unwrap();
        let b = init_params(&input, 6, 11).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, init_params(&input, 6, 12).unwrap());
        for b in [Block::B0, Block::B1] {
            assert!(a.block(Coordinate::R, b).iter().all(|&x| x == 0.0));
        }
        let basis = ProfileBasis::new(&input, 6).unwrap();
        let at_axis = basis.profiles_at(&a, 0.0);
        assert!((at_axis.r.values[0] - 3.0).abs() < 1e-14);
        let raw = mlp_forward(&a, Coordinate::Lambda, -1.0);
        assert!(raw.iter().all(|y| y.value.abs() < 1e-15));
        let raw_r = mlp_forward(&a, Coordinate::R, -1.0);
        assert!(raw_r[1..].iter().all(|y| y.value.abs() < 1e-15));
    }

    #[test]
    fn init_weights_have_expected_spread() {
        let input = EquilibriumInput::dshape(11);
        let p = init_params(&input, 64, 3).unwrap();
        let w = p.block(Coordinate::R, Block::W1);
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        let var = w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / w.len() as f64;
        assert!(mean.abs() < 1e-3);
        assert!((var.sqrt() - INIT_WEIGHT_STD).abs() < 1e-3);
    }

    #[test]
    fn init_with_missing_axis_and_no_m0_fails() {
        let mut input = EquilibriumInput::dshape(3);
        input.boundary.retain(|b| b.m != 0);
        assert!(init_params(&input, 2, 0).is_err());
    }

    #[test]
    fn zero_network_profiles_equal_boundary_for_m0() {
        let input = EquilibriumInput::dshape(3);
        let p = NetParams::zeros(NetLayout { width: 2, modes: 3 });
        for rho in [0.1, 0.5, 0.9] {
            let mp = mode_profiles(&p, &input, rho).unwrap();
            assert_eq!(mp.r.values[0], 3.51);
            assert_eq!(mp.r.d_rho.as_ref().unwrap()[0], 0.0);
        }
    }

    #[test]
    fn m2_mode_with_constant_output() {
        // R_2(rho) = rho^2 (1 - rho^2) c; derivative (2 rho - 4 rho^3) c
        let mut input = EquilibriumInput::dshape(3);
        input.boundary.retain(|b| b.m != 2);
        let mut p = NetParams::zeros(NetLayout { width: 2, modes: 3 });
        let c = 0.8;
        p.block_mut(Coordinate::R, Block::B2)[2] = c;
        let mp = mode_profiles(&p, &input, 0.5).unwrap();
        let rho: f64 = 0.5;
        assert!((mp.r.values[2] - rho * rho * (1.0 - rho * rho) * c).abs() < 1e-15);
        assert!((mp.r.d_rho.as_ref().unwrap()[2] - 0.5 * c).abs() < 1e-15);
        assert!((mp.r.d_rho2.as_ref().unwrap()[2] - (2.0 - 12.0 * rho * rho) * c).abs() < 1e-14);
    }

    #[test]
    fn radial_domain_enforced() {
        let input = EquilibriumInput::dshape(3);
        let p = init_params(&input, 2, 0).unwrap();
        for rho in [0.0, 1.0, -0.1, 1.2, f64::NAN] {
            assert!(matches!(
                mode_profiles(&p, &input, rho),
                Err(Error::RadialDomain { .. })
            ));
        }
    }

    #[test]
    fn validation_rejects_bad_inputs() {
        let mut a = EquilibriumInput::dshape(2);
        assert!(a.validate().is_err(), "m=2 boundary mode needs M >= 3");
        a.m_count = 3;
        a.validate().unwrap();
        a.toroidal_flux = 0.0;
        assert!(a.validate().is_err());

        let mut b = EquilibriumInput::dshape(3);
        b.boundary[1].z = -3.0;
        b.boundary[2].z = 2.0; // self-intersecting
        assert!(b.validate().is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn radial_derivatives_match_finite_differences(seed in 0u64..500) {
            let input = small_input();
            let basis = ProfileBasis::new(&input, 3).unwrap();
            let p = random_params(basis.layout, seed, 1.0);
            let h = 1e-6;
            for rho in [0.2, 0.5, 0.8] {
                let c = basis.profiles_at(&p, rho);
                let up = basis.profiles_at(&p, rho + h);
                let dn = basis.profiles_at(&p, rho - h);
                for (x, (xu, xd)) in c.coords().iter().zip(up.coords().iter().zip(dn.coords())) {
                    let d1 = x.d_rho.as_ref().unwrap();
                    let d2 = x.d_rho2.as_ref().unwrap();
                    for k in 0..x.values.len() {
                        let fd1 = (xu.values[k] - xd.values[k]) / (2.0 * h);
                        let fd2 = (xu.d_rho.as_ref().unwrap()[k] - xd.d_rho.as_ref().unwrap()[k]) / (2.0 * h);
                        prop_assert!((d1[k] - fd1).abs() <= 1e-6 * d1[k].abs().max(1.0));
                        prop_assert!((d2[k] - fd2).abs() <= 1e-6 * d2[k].abs().max(1.0));
                    }
                }
            }
        }

        #[test]
        fn boundary_is_reproduced(seed in 0u64..500) {
            let input = small_input();
            let basis = ProfileBasis::new(&input, 3).unwrap();
            let p = random_params(basis.layout, seed, 2.0);
            let mp = basis.profiles_at(&p, 1.0 - 1e-12);
            for k in 0..basis.layout.modes {
                prop_assert!((mp.r.values[k] - basis.boundary_r[k]).abs() <= 1e-9 * (1.0 + basis.boundary_r[k].abs()));
                prop_assert!((mp.z.values[k] - basis.boundary_z[k]).abs() <= 1e-9 * (1.0 + basis.boundary_z[k].abs()));
            }
        }

        #[test]
        fn sine_zero_zero_profile_vanishes(seed in 0u64..500, rho in 0.01f64..0.99) {
            let input = small_input();
            let basis = ProfileBasis::new(&input, 3).unwrap();
            let p = random_params(basis.layout, seed, 3.0);
            let mp = basis.profiles_at(&p, rho);
            for x in [&mp.lambda, &mp.z] {
                prop_assert_eq!(x.values[0], 0.0);
                prop_assert_eq!(x.d_rho.as_ref().unwrap()[0], 0.0);
                prop_assert_eq!(x.d_rho2.as_ref().unwrap()[0], 0.0);
            }
        }

        #[test]
        fn profiles_scale_like_rho_to_the_m(seed in 0u64..500) {
            let input = small_input();
            let basis = ProfileBasis::new(&input, 3).unwrap();
            let p = random_params(basis.layout, seed, 1.0);
            let max_nn = [0.0, -0.5, 0.5, 1.0]
                .iter()
                .flat_map(|&f| Coordinate::ALL.map(|c| mlp_forward(&p, c, f)))
                .flatten()
                .map(|y| y.value.abs())
                .fold(0.0, f64::max);
            let max_b = basis.boundary_r.iter().chain(&basis.boundary_z).map(|v| v.abs()).fold(0.0, f64::max);
            let bound = 10.0 * (max_b + max_nn);
            for rho in [1e-3, 1e-2, 0.1] {
                let mp = basis.profiles_at(&p, rho);
                for x in mp.coords() {
                    for (k, &(m, _)) in x.mode_set.entries().iter().enumerate() {
                        prop_assert!((x.values[k] / rho.powi(m as i32)).abs() < bound);
                    }
                }
            }
        }
    }
}
