//! Stellarator-symmetric double Fourier series in the poloidal angle `theta`
//! and the toroidal angle `zeta`.
//!
//! A coordinate `X` on one flux surface is `sum_mn X_mn b(m*theta - n*nfp*zeta)`
//! with `b = cos` for `R` and `b = sin` for `lambda` and `Z`.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::autodiff::Real;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Parity {
    Cosine,
    Sine,
}

/// Index set of stellarator-symmetric modes: `m = 0..M-1`, `n = -N..=N`,
/// without the redundant `m = 0, n < 0` entries.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModeSet {
    m_count: u32,
    n_max: u32,
    nfp: u32,
    parity: Parity,
    entries: Arc<[(u32, i32)]>,
}

pub fn build_mode_set(m_count: u32, n_max: u32, nfp: u32, parity: Parity) -> Result<ModeSet> {
    ModeSet::new(m_count, n_max, nfp, parity)
}

impl ModeSet {
    pub fn new(m_count: u32, n_max: u32, nfp: u32, parity: Parity) -> Result<Self> {
        if m_count == 0 {
            return Err(Error::InvalidModeSet(
                "poloidal mode count M must be >= 1".into(),
            ));
        }
        if nfp == 0 {
            return Err(Error::InvalidModeSet(
                "field period count must be >= 1".into(),
            ));
        }
        let n = n_max as i32;
        let entries: Vec<(u32, i32)> = (0..m_count)
            .flat_map(|m| {
                let lo = if m == 0 { 0 } else { -n };
                (lo..=n).map(move |nn| (m, nn))
            })
            .collect();
        debug_assert_eq!(entries.len(), Self::expected_len(m_count, n_max));
        Ok(ModeSet {
            m_count,
            n_max,
            nfp,
            parity,
            entries: entries.into(),
        })
    }

    /// `M(2N+1) - N`.
    pub fn expected_len(m_count: u32, n_max: u32) -> usize {
        (m_count * (2 * n_max + 1) - n_max) as usize
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(u32, i32)] {
        &self.entries
    }

    pub fn m_count(&self) -> u32 {
        self.m_count
    }

    pub fn n_max(&self) -> u32 {
        self.n_max
    }

    pub fn nfp(&self) -> u32 {
        self.nfp
    }

    pub fn parity(&self) -> Parity {
        self.parity
    }

    /// Same index set with the other parity.
    pub fn with_parity(&self, parity: Parity) -> ModeSet {
        ModeSet {
            parity,
            ..self.clone()
        }
    }

    pub fn index_of(&self, m: u32, n: i32) -> Option<usize> {
        if m >= self.m_count || n.unsigned_abs() > self.n_max || (m == 0 && n < 0) {
            return None;
        }
        let n_max = self.n_max as i32;
        let idx = if m == 0 {
            n
        } else {
            (n_max + 1) + (m as i32 - 1) * (2 * n_max + 1) + (n + n_max)
        };
        Some(idx as usize)
    }

    /// Whether the entry is pinned to zero (the sine `(0,0)` slot).
    pub fn is_fixed_zero(&self, idx: usize) -> bool {
        self.parity == Parity::Sine && self.entries[idx] == (0, 0)
    }

    fn same_shape(&self, other: &ModeSet) -> bool {
        self.m_count == other.m_count && self.n_max == other.n_max && self.nfp == other.nfp
    }
}

/// `m*theta - n*nfp*zeta`.
#[inline]
pub fn fourier_angle(m: u32, n: i32, nfp: u32, theta: f64, zeta: f64) -> f64 {
    m as f64 * theta - (n as f64) * (nfp as f64) * zeta
}

/// Mode coefficients of one coordinate on one flux surface.
#[derive(Clone, Debug, PartialEq)]
pub struct SurfaceCoefficients {
    pub mode_set: ModeSet,
    pub values: Vec<f64>,
    pub d_rho: Option<Vec<f64>>,
    pub d_rho2: Option<Vec<f64>>,
}

impl SurfaceCoefficients {
    pub fn zeros(mode_set: ModeSet) -> Self {
        let k = mode_set.len();
        SurfaceCoefficients {
            mode_set,
            values: vec![0.0; k],
            d_rho: None,
            d_rho2: None,
        }
    }

    pub fn with_radial(mut self) -> Self {
        let k = self.values.len();
        self.d_rho.get_or_insert_with(|| vec![0.0; k]);
        self.d_rho2.get_or_insert_with(|| vec![0.0; k]);
        self
    }

    pub fn from_values(mode_set: ModeSet, values: Vec<f64>) -> Result<Self> {
        let c = SurfaceCoefficients {
            mode_set,
            values,
            d_rho: None,
            d_rho2: None,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn set(&mut self, m: u32, n: i32, value: f64) -> Result<()> {
        let idx = self.mode_set.index_of(m, n).ok_or_else(|| {
            Error::InvalidModeSet(format!("mode (m={m}, n={n}) not in the mode set"))
        })?;
        if self.mode_set.is_fixed_zero(idx) && value != 0.0 {
            return Err(Error::InvalidModeSet(
                "sine (0,0) coefficient is fixed to zero".into(),
            ));
        }
        self.values[idx] = value;
        Ok(())
    }

    pub fn get(&self, m: u32, n: i32) -> f64 {
        self.mode_set
            .index_of(m, n)
            .map_or(0.0, |idx| self.values[idx])
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.mode_set.len();
        let lens_ok = self.values.len() == k
            && self.d_rho.as_ref().is_none_or(|d| d.len() == k)
            && self.d_rho2.as_ref().is_none_or(|d| d.len() == k);
        if !lens_ok {
            return Err(Error::ModeSetMismatch(format!(
                "coefficient arrays must have {k} entries"
            )));
        }
        if let Some(idx) = self.mode_set.index_of(0, 0) {
            if self.mode_set.is_fixed_zero(idx) && self.values[idx] != 0.0 {
                return Err(Error::InvalidModeSet(
                    "sine (0,0) coefficient is fixed to zero".into(),
                ));
            }
        }
        Ok(())
    }

    /// Value of the series at one point.
    pub fn evaluate(&self, theta: f64, zeta: f64) -> f64 {
        let nfp = self.mode_set.nfp;
        self.mode_set
            .entries()
            .iter()
            .zip(&self.values)
            .map(|(&(m, n), c)| {
                let a = fourier_angle(m, n, nfp, theta, zeta);
                c * match self.mode_set.parity {
                    Parity::Cosine => a.cos(),
                    Parity::Sine => a.sin(),
                }
            })
            .sum()
    }

    /// `d/dtheta` of the series at one point.
    pub fn evaluate_d_theta(&self, theta: f64, zeta: f64) -> f64 {
        let nfp = self.mode_set.nfp;
        self.mode_set
            .entries()
            .iter()
            .zip(&self.values)
            .map(|(&(m, n), c)| {
                let a = fourier_angle(m, n, nfp, theta, zeta);
                c * m as f64
                    * match self.mode_set.parity {
                        Parity::Cosine => -a.sin(),
                        Parity::Sine => a.cos(),
                    }
            })
            .sum()
    }
}

/// Uniform endpoint-exclusive angular grid over one field period:
/// `theta_i = 2*pi*i/n_theta`, `zeta_k = 2*pi*k/(nfp*n_zeta)`.
#[derive(Clone, Debug, PartialEq)]
pub struct AngularGrid {
    pub theta: Vec<f64>,
    pub zeta: Vec<f64>,
    pub nfp: u32,
}

impl AngularGrid {
    pub fn uniform(n_theta: usize, n_zeta: usize, nfp: u32) -> Result<Self> {
        if n_theta == 0 || n_zeta == 0 {
            return Err(Error::EmptyGrid(
                "angular grid needs at least one node per direction",
            ));
        }
        if nfp == 0 {
            return Err(Error::InvalidModeSet(
                "field period count must be >= 1".into(),
            ));
        }
        Ok(AngularGrid {
            theta: (0..n_theta)
                .map(|i| 2.0 * PI * i as f64 / n_theta as f64)
                .collect(),
            zeta: (0..n_zeta)
                .map(|k| 2.0 * PI * k as f64 / (nfp as f64 * n_zeta as f64))
                .collect(),
            nfp,
        })
    }

    /// Default density: `4M` poloidal and `max(1, 4N)` toroidal nodes.
    pub fn default_for(mode_set: &ModeSet) -> Self {
        let n_theta = 4 * mode_set.m_count as usize;
        let n_zeta = (4 * mode_set.n_max as usize).max(1);
        Self::uniform(n_theta, n_zeta, mode_set.nfp).expect("mode set is valid")
    }

    pub fn len(&self) -> usize {
        self.theta.len() * self.zeta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Node index for `(theta index, zeta index)`; theta-major.
    #[inline]
    pub fn index(&self, i_theta: usize, i_zeta: usize) -> usize {
        i_theta * self.zeta.len() + i_zeta
    }

    /// `(theta, zeta)` of node `idx`.
    #[inline]
    pub fn node(&self, idx: usize) -> (f64, f64) {
        let nz = self.zeta.len();
        (self.theta[idx / nz], self.zeta[idx % nz])
    }

    /// Quadrature weight of one node for an integral over the full torus
    /// (all field periods).
    pub fn node_weight(&self) -> f64 {
        let dtheta = 2.0 * PI / self.theta.len() as f64;
        let dzeta = 2.0 * PI / (self.nfp as f64 * self.zeta.len() as f64);
        dtheta * dzeta * self.nfp as f64
    }
}

/// A synthesized field and its analytic partial derivatives on a grid.
/// Radial entries are present when the coefficients carried radial derivatives.
#[derive(Clone, Debug, PartialEq)]
pub struct RealSpaceField {
    pub value: Vec<f64>,
    pub d_theta: Vec<f64>,
    pub d_zeta: Vec<f64>,
    pub d_theta2: Vec<f64>,
    pub d_theta_zeta: Vec<f64>,
    pub d_zeta2: Vec<f64>,
    pub radial: Option<RadialPartials>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RadialPartials {
    pub d_rho: Vec<f64>,
    pub d_rho_theta: Vec<f64>,
    pub d_rho_zeta: Vec<f64>,
    pub d_rho2: Vec<f64>,
}

/// Synthesizes `coeffs` on `grid` by direct summation.
pub fn synthesize(coeffs: &SurfaceCoefficients, grid: &AngularGrid) -> Result<RealSpaceField> {
    coeffs.validate()?;
    if grid.is_empty() {
        return Err(Error::EmptyGrid("synthesis grid has no nodes"));
    }
    let table = BasisTable::new(&coeffs.mode_set, grid);
    let parity = coeffs.mode_set.parity;
    let radial = match (&coeffs.d_rho, &coeffs.d_rho2) {
        (Some(d1), Some(d2)) => Some((d1.as_slice(), d2.as_slice())),
        _ => None,
    };
    let n = grid.len();
    let mut out = RealSpaceField {
        value: Vec::with_capacity(n),
        d_theta: Vec::with_capacity(n),
        d_zeta: Vec::with_capacity(n),
        d_theta2: Vec::with_capacity(n),
        d_theta_zeta: Vec::with_capacity(n),
        d_zeta2: Vec::with_capacity(n),
        radial: radial.map(|_| RadialPartials {
            d_rho: Vec::with_capacity(n),
            d_rho_theta: Vec::with_capacity(n),
            d_rho_zeta: Vec::with_capacity(n),
            d_rho2: Vec::with_capacity(n),
        }),
    };
    for node in 0..n {
        let s = table.synthesize_node(node, parity, &coeffs.values, radial);
        out.value.push(s.value);
        out.d_theta.push(s.d_theta);
        out.d_zeta.push(s.d_zeta);
        out.d_theta2.push(s.d_theta2);
        out.d_theta_zeta.push(s.d_theta_zeta);
        out.d_zeta2.push(s.d_zeta2);
        if let Some(r) = out.radial.as_mut() {
            r.d_rho.push(s.d_rho);
            r.d_rho_theta.push(s.d_rho_theta);
            r.d_rho_zeta.push(s.d_rho_zeta);
            r.d_rho2.push(s.d_rho2);
        }
    }
    Ok(out)
}

/// `sum_mn m^2 (R_mn^2 + Z_mn^2)`.
pub fn spectral_width(r: &SurfaceCoefficients, z: &SurfaceCoefficients) -> Result<f64> {
    if !r.mode_set.same_shape(&z.mode_set) || r.values.len() != z.values.len() {
        return Err(Error::ModeSetMismatch(
            "R and Z coefficients must share the mode index set".into(),
        ));
    }
    Ok(r.mode_set
        .entries()
        .iter()
        .zip(r.values.iter().zip(&z.values))
        .map(|(&(m, _), (a, b))| (m * m) as f64 * (a * a + b * b))
        .sum())
}

/// Series value and partials at one node, generic over the scalar type.
#[derive(Clone, Copy, Debug)]
pub struct NodeSeries<T> {
    pub value: T,
    pub d_theta: T,
    pub d_zeta: T,
    pub d_theta2: T,
    pub d_theta_zeta: T,
    pub d_zeta2: T,
    pub d_rho: T,
    pub d_rho_theta: T,
    pub d_rho_zeta: T,
    pub d_rho2: T,
}

const N_WEIGHTS: usize = 6;

/// Precomputed basis values and derivative weights for every (node, mode)
/// pair of a grid, for both parities.
#[derive(Clone, Debug)]
pub struct BasisTable {
    k: usize,
    n_nodes: usize,
    // [parity][node][weight kind][mode]
    weights: Vec<f64>,
}

impl BasisTable {
    pub fn new(mode_set: &ModeSet, grid: &AngularGrid) -> Self {
        let k = mode_set.len();
        let n_nodes = grid.len();
        let nfp = mode_set.nfp;
        let mut weights = vec![0.0; 2 * n_nodes * N_WEIGHTS * k];
        for node in 0..n_nodes {
            let (theta, zeta) = grid.node(node);
            for (j, &(m, n)) in mode_set.entries().iter().enumerate() {
                let a = fourier_angle(m, n, nfp, theta, zeta);
                let (s, c) = a.sin_cos();
                let km = m as f64;
                let kz = -(n as f64) * nfp as f64;
                // (b, b', b'') for cos and sin
                for (p, (b0, b1, b2)) in [(c, -s, -c), (s, c, -s)].into_iter().enumerate() {
                    let base = ((p * n_nodes + node) * N_WEIGHTS) * k;
                    let w = [
                        b0,
                        km * b1,
                        kz * b1,
                        km * km * b2,
                        km * kz * b2,
                        kz * kz * b2,
                    ];
                    for (q, wq) in w.into_iter().enumerate() {
                        weights[base + q * k + j] = wq;
                    }
                }
            }
        }
        BasisTable {
            k,
            n_nodes,
            weights,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    #[inline]
    fn weights(&self, parity: Parity, node: usize, kind: usize) -> &[f64] {
        let p = match parity {
            Parity::Cosine => 0,
            Parity::Sine => 1,
        };
        let base = ((p * self.n_nodes + node) * N_WEIGHTS + kind) * self.k;
        &self.weights[base..base + self.k]
    }

    /// Synthesizes the series at one node. `radial` supplies the first and
    /// second radial derivatives of the coefficients; without it the radial
    /// partials are zero.
    pub fn synthesize_node<T: Real>(
        &self,
        node: usize,
        parity: Parity,
        values: &[T],
        radial: Option<(&[T], &[T])>,
    ) -> NodeSeries<T> {
        let w = |kind| self.weights(parity, node, kind);
        let (d_rho, d_rho_theta, d_rho_zeta, d_rho2) = match radial {
            Some((d1, d2)) => (
                T::weighted_sum(d1, w(0)),
                T::weighted_sum(d1, w(1)),
                T::weighted_sum(d1, w(2)),
                T::weighted_sum(d2, w(0)),
            ),
            None => (T::zero(), T::zero(), T::zero(), T::zero()),
        };
        NodeSeries {
            value: T::weighted_sum(values, w(0)),
            d_theta: T::weighted_sum(values, w(1)),
            d_zeta: T::weighted_sum(values, w(2)),
            d_theta2: T::weighted_sum(values, w(3)),
            d_theta_zeta: T::weighted_sum(values, w(4)),
            d_zeta2: T::weighted_sum(values, w(5)),
            d_rho,
            d_rho_theta,
            d_rho_zeta,
            d_rho2,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mode_set_counts_and_order() {
        let a = build_mode_set(11, 0, 1, Parity::Cosine).unwrap();
        assert_eq!(a.len(), 11);
        assert_eq!(a.entries()[0], (0, 0));
        assert_eq!(a.entries()[10], (10, 0));

        let b = build_mode_set(2, 1, 5, Parity::Sine).unwrap();
        assert_eq!(b.entries(), &[(0, 0), (0, 1), (1, -1), (1, 0), (1, 1)]);
        assert!(b.is_fixed_zero(0));
        assert!(!b.is_fixed_zero(1));

        assert_eq!(
            build_mode_set(12, 12, 5, Parity::Cosine).unwrap().len(),
            288
        );
    }

    #[test]
    fn mode_set_rejects_degenerate() {
        assert!(build_mode_set(0, 1, 1, Parity::Cosine).is_err());
        assert!(build_mode_set(3, 1, 0, Parity::Cosine).is_err());
    }

    #[test]
    fn index_of_matches_entries() {
        let ms = build_mode_set(4, 3, 2, Parity::Sine).unwrap();
        for (i, &(m, n)) in ms.entries().iter().enumerate() {
            assert_eq!(ms.index_of(m, n), Some(i));
        }
        assert_eq!(ms.index_of(0, -1), None);
        assert_eq!(ms.index_of(4, 0), None);
        assert_eq!(ms.index_of(1, 4), None);
    }

    #[test]
    fn fourier_angle_cases() {
        assert!((fourier_angle(2, 1, 5, PI / 2.0, 0.0) - PI).abs() < 1e-15);
        assert_eq!(fourier_angle(0, 0, 3, 1.3, 0.7), 0.0);
        assert!((fourier_angle(1, 1, 5, 0.0, 2.0 * PI / 5.0) + 2.0 * PI).abs() < 1e-15);
    }

    fn single_point_grid(theta: f64) -> AngularGrid {
        AngularGrid {
            theta: vec![theta],
            zeta: vec![0.0],
            nfp: 1,
        }
    }

    #[test]
    fn single_cosine_mode() {
        let ms = build_mode_set(2, 0, 1, Parity::Cosine).unwrap();
        let mut c = SurfaceCoefficients::zeros(ms);
        c.set(1, 0, 2.0).unwrap();
        let f = synthesize(&c, &single_point_grid(0.0)).unwrap();
        assert_eq!(f.value[0], 2.0);
        assert_eq!(f.d_theta[0], 0.0);
        assert!(f.radial.is_none());
    }

    #[test]
    fn single_sine_mode() {
        let ms = build_mode_set(2, 0, 1, Parity::Sine).unwrap();
        let mut c = SurfaceCoefficients::zeros(ms);
        c.set(1, 0, 1.0).unwrap();
        let f = synthesize(&c, &single_point_grid(PI / 2.0)).unwrap();
        assert!((f.value[0] - 1.0).abs() < 1e-15);
        assert!(f.d_theta[0].abs() < 1e-15);
        assert!((f.d_theta2[0] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_coefficients_give_zero_field() {
        let ms = build_mode_set(3, 2, 3, Parity::Sine).unwrap();
        let c = SurfaceCoefficients::zeros(ms).with_radial();
        let f = synthesize(&c, &AngularGrid::uniform(7, 5, 3).unwrap()).unwrap();
        let r = f.radial.as_ref().unwrap();
        for v in [
            &f.value,
            &f.d_theta,
            &f.d_zeta,
            &f.d_theta2,
            &f.d_theta_zeta,
            &f.d_zeta2,
            &r.d_rho,
            &r.d_rho2,
        ] {
            assert!(v.iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn empty_grid_rejected() {
        assert!(AngularGrid::uniform(0, 1, 1).is_err());
        let ms = build_mode_set(2, 0, 1, Parity::Cosine).unwrap();
        let grid = AngularGrid {
            theta: vec![],
            zeta: vec![0.0],
            nfp: 1,
        };
        assert!(synthesize(&SurfaceCoefficients::zeros(ms), &grid).is_err());
    }

    #[test]
    fn sine_zero_zero_pinned() {
        let ms = build_mode_set(2, 1, 1, Parity::Sine).unwrap();
        let mut c = SurfaceCoefficients::zeros(ms);
        assert!(c.set(0, 0, 1.0).is_err());
        c.values[0] = 0.5;
        assert!(c.validate().is_err());
    }

    #[test]
    fn spectral_width_cases() {
        let ms = build_mode_set(3, 0, 1, Parity::Cosine).unwrap();
        let mut r = SurfaceCoefficients::zeros(ms.clone());
        let mut z = SurfaceCoefficients::zeros(ms.with_parity(Parity::Sine));
        r.set(1, 0, 2.0).unwrap();
        assert_eq!(spectral_width(&r, &z).unwrap(), 4.0);

        let mut r0 = SurfaceCoefficients::zeros(ms.clone());
        r0.set(0, 0, 17.0).unwrap();
        assert_eq!(
            spectral_width(
                &r0,
                &SurfaceCoefficients::zeros(ms.with_parity(Parity::Sine))
            )
            .unwrap(),
            0.0
        );

        let mut r2 = SurfaceCoefficients::zeros(ms.clone());
        r2.set(2, 0, 1.0).unwrap();
        z.set(2, 0, 1.0).unwrap();
        assert_eq!(spectral_width(&r2, &z).unwrap(), 8.0);

        let other = SurfaceCoefficients::zeros(build_mode_set(4, 0, 1, Parity::Sine).unwrap());
        assert!(spectral_width(&r2, &other).is_err());
    }

    fn random_coeffs(ms: &ModeSet, rng: &mut ChaCha8Rng) -> SurfaceCoefficients {
        let mut c = SurfaceCoefficients::zeros(ms.clone()).with_radial();
        for i in 0..ms.len() {
            if ms.is_fixed_zero(i) {
                continue;
            }
            c.values[i] = rng.random_range(-1.0..1.0);
            c.d_rho.as_mut().unwrap()[i] = rng.random_range(-1.0..1.0);
            c.d_rho2.as_mut().unwrap()[i] = rng.random_range(-1.0..1.0);
        }
        c
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn synthesis_is_linear(seed in 0u64..1000, a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let ms = build_mode_set(4, 2, 3, Parity::Cosine).unwrap();
            let grid = AngularGrid::uniform(9, 7, 3).unwrap();
            let c1 = random_coeffs(&ms, &mut rng);
            let c2 = random_coeffs(&ms, &mut rng);
            let mut c = c1.clone();
            for i in 0..ms.len() {
                c.values[i] = a * c1.values[i] + b * c2.values[i];
            }
            let (f, f1, f2) = (synthesize(&c, &grid).unwrap(), synthesize(&c1, &grid).unwrap(), synthesize(&c2, &grid).unwrap());
            for i in 0..grid.len() {
                let expect = a * f1.value[i] + b * f2.value[i];
                let scale = a.abs() * f1.value[i].abs() + b.abs() * f2.value[i].abs() + 1e-300;
                prop_assert!((f.value[i] - expect).abs() <= 1e-13 * scale.max(1.0));
                let expect_t = a * f1.d_theta[i] + b * f2.d_theta[i];
                prop_assert!((f.d_theta[i] - expect_t).abs() <= 1e-13 * (1.0 + expect_t.abs()) * 10.0);
            }
        }

        #[test]
        fn angular_derivatives_match_finite_differences(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let parity = if seed % 2 == 0 { Parity::Cosine } else { Parity::Sine };
            let ms = build_mode_set(4, 2, 2, parity).unwrap();
            let c = random_coeffs(&ms, &mut rng);
            let theta = rng.random_range(0.0..2.0 * PI);
            let zeta = rng.random_range(0.0..PI);
            let h = 1e-5;
            let at = |t: f64, z: f64| {
                synthesize(&c, &AngularGrid { theta: vec![t], zeta: vec![z], nfp: 2 }).unwrap()
            };
            let f0 = at(theta, zeta);
            let (ft_p, ft_m) = (at(theta + h, zeta), at(theta - h, zeta));
            let (fz_p, fz_m) = (at(theta, zeta + h), at(theta, zeta - h));
            let fd = |p: f64, m: f64| (p - m) / (2.0 * h);
            let close = |a: f64, b: f64, scale: f64| (a - b).abs() <= 1e-7 * scale.max(1.0);
            let scale = c.values.iter().map(|v| v.abs()).sum::<f64>() * 64.0;
            prop_assert!(close(f0.d_theta[0], fd(ft_p.value[0], ft_m.value[0]), scale));
            prop_assert!(close(f0.d_zeta[0], fd(fz_p.value[0], fz_m.value[0]), scale));
            prop_assert!(close(f0.d_theta2[0], fd(ft_p.d_theta[0], ft_m.d_theta[0]), scale));
            prop_assert!(close(f0.d_theta_zeta[0], fd(fz_p.d_theta[0], fz_m.d_theta[0]), scale));
            prop_assert!(close(f0.d_zeta2[0], fd(fz_p.d_zeta[0], fz_m.d_zeta[0]), scale));
            let r0 = f0.radial.as_ref().unwrap();
            prop_assert!(close(r0.d_rho_theta[0], fd(ft_p.radial.as_ref().unwrap().d_rho[0], ft_m.radial.as_ref().unwrap().d_rho[0]), scale));
            prop_assert!(close(r0.d_rho_zeta[0], fd(fz_p.radial.as_ref().unwrap().d_rho[0], fz_m.radial.as_ref().unwrap().d_rho[0]), scale));
        }

        #[test]
        fn projection_recovers_coefficients(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (m_count, n_max, nfp) = (4u32, 2u32, 3u32);
            for parity in [Parity::Cosine, Parity::Sine] {
                let ms = build_mode_set(m_count, n_max, nfp, parity).unwrap();
                let c = random_coeffs(&ms, &mut rng);
                let grid = AngularGrid::uniform(2 * (2 * m_count as usize + 1), 2 * (2 * n_max as usize + 1), nfp).unwrap();
                let f = synthesize(&c, &grid).unwrap();
                for (j, &(m, n)) in ms.entries().iter().enumerate() {
                    if ms.is_fixed_zero(j) {
                        continue;
                    }
                    let mut acc = 0.0;
                    for node in 0..grid.len() {
                        let (t, z) = grid.node(node);
                        let a = fourier_angle(m, n, nfp, t, z);
                        acc += f.value[node] * match parity { Parity::Cosine => a.cos(), Parity::Sine => a.sin() };
                    }
                    let norm = if (m, n) == (0, 0) { 1.0 } else { 0.5 };
                    let recovered = acc / grid.len() as f64 / norm;
                    prop_assert!((recovered - c.values[j]).abs() <= 1e-10);
                }
            }
        }

        #[test]
        fn stellarator_symmetry(seed in 0u64..1000, theta in 0.0f64..6.2, zeta in 0.0f64..6.2) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let ms = build_mode_set(5, 2, 3, Parity::Cosine).unwrap();
            let r = random_coeffs(&ms, &mut rng);
            let z = random_coeffs(&ms.with_parity(Parity::Sine), &mut rng);
            prop_assert!((r.evaluate(theta, zeta) - r.evaluate(-theta, -zeta)).abs() < 1e-13);
            prop_assert!((z.evaluate(theta, zeta) + z.evaluate(-theta, -zeta)).abs() < 1e-13);
        }
    }
}
