//! Exact derivatives.
//!
//! Radial derivatives of the mode profiles are carried by second-order
//! forward jets ([`Jet2`]); angular derivatives by [`Dual3`]. The gradient of
//! the scalar loss with respect to the network parameters is obtained by
//! reverse accumulation over the evaluation trace ([`tape`]), with the jets
//! recorded as ordinary arithmetic on tape variables.

mod dual;
mod jet;
mod real;
pub mod tape;

pub use dual::Dual3;
pub use jet::{jet_lift, Jet2};
pub use real::Real;
pub use tape::Var;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// A differentiable scalar function of a flat parameter vector.
pub trait Objective: Sync {
    fn dim(&self) -> usize;

    fn value(&self, x: &[f64]) -> Result<f64>;

    fn value_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)>;
}

/// Wraps a closure as an [`Objective`], differentiating it on the tape.
pub struct TapeObjective<F> {
    dim: usize,
    f: F,
}

impl<F> TapeObjective<F>
where
    F: Fn(&[Var]) -> Var + Sync,
{
    pub fn new(dim: usize, f: F) -> Self {
        TapeObjective { dim, f }
    }
}

impl<F> Objective for TapeObjective<F>
where
    F: Fn(&[Var]) -> Var + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        Ok(self.value_and_gradient(x)?.0)
    }

    fn value_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (v, g) = tape::gradient(x, |vars| (self.f)(vars));
        if !v.is_finite() {
            return Err(Error::NonFinite {
                rho: f64::NAN,
                theta: f64::NAN,
                zeta: f64::NAN,
            });
        }
        Ok((v, g))
    }
}

/// Loss value and gradient of `objective` at `params`.
pub fn loss_gradient(objective: &dyn Objective, params: &[f64]) -> Result<(f64, Vec<f64>)> {
    objective.value_and_gradient(params)
}

/// Compares the analytic gradient against finite differences on a random
/// subset of `samples` entries and returns the worst relative error, with
/// denominators floored at 1e-8.
///
/// Each reference derivative is a central difference refined by Ridders'
/// extrapolation, started from `step`, `step / 10` and `step / 100`; the
/// run with the smallest error estimate wins. A single central difference
/// at a small step cannot resolve entries much smaller than the loss times
/// machine epsilon over the step, while a large starting step can straddle
/// sharp features of `|F|` near nodes where the residual almost vanishes.
pub fn grad_check(
    objective: &dyn Objective,
    params: &[f64],
    step: f64,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    assert!(step > 0.0, "finite-difference step must be positive");
    let (_, grad) = objective.value_and_gradient(params)?;
    let n = params.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks: Vec<usize> = if samples >= n {
        (0..n).collect()
    } else {
        sample(&mut rng, n, samples).into_vec()
    };
    let mut worst: f64 = 0.0;
    let mut x = params.to_vec();
    for i in picks {
        let mut central = |h: f64| {
            let orig = x[i];
            x[i] = orig + h;
            let up = objective.value(&x);
            x[i] = orig - h;
            let down = objective.value(&x);
            x[i] = orig;
            Ok((up? - down?) / (2.0 * h))
        };
        let mut fd = (f64::NAN, f64::INFINITY);
        for h0 in [step, step / 10.0, step / 100.0] {
            let r = ridders(&mut central, h0)?;
            if r.1 < fd.1 {
                fd = r;
            }
        }
        let fd = fd.0;
        let err = (grad[i] - fd).abs() / fd.abs().max(1e-8);
        log::debug!(
            "grad_check entry {i}: analytic {:e} fd {fd:e} rel {err:e}",
            grad[i]
        );
        worst = worst.max(err);
    }
    Ok(worst)
}

/// Ridders' polynomial extrapolation of `diff(h)` to `h -> 0`. Returns the
/// estimate and its error estimate.
pub fn ridders(mut diff: impl FnMut(f64) -> Result<f64>, h0: f64) -> Result<(f64, f64)> {
    const SHRINK: f64 = 1.4;
    const LEVELS: usize = 10;
    let con2 = SHRINK * SHRINK;
    let mut table = [[0.0; LEVELS]; LEVELS];
    let mut h = h0;
    table[0][0] = diff(h)?;
    let mut best = table[0][0];
    let mut err = f64::MAX;
    for i in 1..LEVELS {
        h /= SHRINK;
        table[0][i] = diff(h)?;
        let mut fac = con2;
        for j in 1..=i {
            table[j][i] = (table[j - 1][i] * fac - table[j - 1][i - 1]) / (fac - 1.0);
            fac *= con2;
            let e = (table[j][i] - table[j - 1][i])
                .abs()
                .max((table[j][i] - table[j - 1][i - 1]).abs());
            if e <= err {
                err = e;
                best = table[j][i];
            }
        }
        if (table[i][i] - table[i - 1][i - 1]).abs() >= 2.0 * err {
            break;
        }
    }
    Ok((best, err))
}

/// Sum by recursive halving; the association order depends only on the
/// length, so results are reproducible regardless of how terms were produced.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        2 => xs[0] + xs[1],
        n => {
            let mid = n / 2;
            pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
        }
    }
}

/// Element-wise [`pairwise_sum`] over equally sized vectors.
pub fn pairwise_sum_vectors(vs: &[Vec<f64>]) -> Vec<f64> {
    match vs.len() {
        0 => Vec::new(),
        1 => vs[0].clone(),
        n => {
            let mid = n / 2;
            let mut a = pairwise_sum_vectors(&vs[..mid]);
            let b = pairwise_sum_vectors(&vs[mid..]);
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
            a
        }
    }
}
