use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::adamw::max_abs;
use super::{StageOutcome, StepInfo, StopConfig, Termination};
use crate::autodiff::Objective;

/// Above this dimension a dense inverse Hessian is not stored and the limited
/// memory form is used instead.
pub const DENSE_LIMIT: usize = 6000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BfgsConfig {
    pub max_iter: usize,
    /// Sufficient-decrease constant of the strong Wolfe conditions.
    pub c1: f64,
    /// Curvature constant of the strong Wolfe conditions.
    pub c2: f64,
    /// Maximum function evaluations per line search.
    pub max_line_search: usize,
    /// Number of stored curvature pairs; 0 keeps the full dense inverse.
    pub memory: usize,
}

impl Default for BfgsConfig {
    fn default() -> Self {
        BfgsConfig {
            max_iter: 3000,
            c1: 1e-4,
            c2: 0.9,
            max_line_search: 30,
            memory: 0,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

enum InverseHessian {
    Dense {
        n: usize,
        h: Vec<f64>,
        scaled: bool,
    },
    Limited {
        m: usize,
        pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)>,
    },
}

impl InverseHessian {
    fn new(n: usize, memory: usize) -> Self {
        if memory == 0 && n <= DENSE_LIMIT {
            let mut h = vec![0.0; n * n];
            for i in 0..n {
                h[i * n + i] = 1.0;
            }
            InverseHessian::Dense {
                n,
                h,
                scaled: false,
            }
        } else {
            let m = if memory == 0 { 64 } else { memory };
            if memory == 0 {
                log::info!("{n} parameters: using limited-memory curvature with {m} pairs");
            }
            InverseHessian::Limited {
                m,
                pairs: VecDeque::new(),
            }
        }
    }

    fn reset(&mut self) {
        match self {
            InverseHessian::Dense { n, h, scaled } => {
                h.iter_mut().for_each(|v| *v = 0.0);
                for i in 0..*n {
                    h[i * *n + i] = 1.0;
                }
                *scaled = false;
            }
            InverseHessian::Limited { pairs, .. } => pairs.clear(),
        }
    }

    /// `-H g`.
    fn direction(&self, g: &[f64]) -> Vec<f64> {
        match self {
            InverseHessian::Dense { n, h, .. } => {
                (0..*n).map(|i| -dot(&h[i * n..(i + 1) * n], g)).collect()
            }
            InverseHessian::Limited { pairs, .. } => {
                let mut q = g.to_vec();
                let mut alpha = vec![0.0; pairs.len()];
                for (k, (s, y, rho)) in pairs.iter().enumerate().rev() {
                    alpha[k] = rho * dot(s, &q);
                    q.iter_mut()
                        .zip(y)
                        .for_each(|(qi, yi)| *qi -= alpha[k] * yi);
                }
                if let Some((s, y, _)) = pairs.back() {
                    let gamma = dot(s, y) / dot(y, y);
                    q.iter_mut().for_each(|v| *v *= gamma);
                }
                for (k, (s, y, rho)) in pairs.iter().enumerate() {
                    let beta = rho * dot(y, &q);
                    q.iter_mut()
                        .zip(s)
                        .for_each(|(qi, si)| *qi += (alpha[k] - beta) * si);
                }
                q.iter_mut().for_each(|v| *v = -*v);
                q
            }
        }
    }

    /// Curvature update; returns false when the pair was skipped.
    fn update(&mut self, s: Vec<f64>, y: Vec<f64>) -> bool {
        let ys = dot(&y, &s);
        if !(ys > 0.0) {
            return false;
        }
        let rho = 1.0 / ys;
        match self {
            InverseHessian::Dense { n, h, scaled } => {
                let n = *n;
                if !*scaled {
                    let gamma = ys / dot(&y, &y);
                    h.iter_mut().for_each(|v| *v *= gamma);
                    *scaled = true;
                }
                let hy: Vec<f64> = (0..n).map(|i| dot(&h[i * n..(i + 1) * n], &y)).collect();
                let yhy = dot(&y, &hy);
                let c = rho * rho * yhy + rho;
                for i in 0..n {
                    let row = &mut h[i * n..(i + 1) * n];
                    for j in 0..n {
                        row[j] += c * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
                    }
                }
            }
            InverseHessian::Limited { m, pairs } => {
                if pairs.len() == *m {
                    pairs.pop_front();
                }
                pairs.push_back((s, y, rho));
            }
        }
        true
    }
}

struct Point {
    alpha: f64,
    f: f64,
    d: f64,
    x: Vec<f64>,
    g: Vec<f64>,
}

/// Strong Wolfe line search along `p` from `x` (value `f0`, slope `d0 < 0`).
/// Trial points where the objective fails count as infinitely bad.
fn line_search(
    objective: &dyn Objective,
    x: &[f64],
    p: &[f64],
    f0: f64,
    d0: f64,
    alpha0: f64,
    cfg: &BfgsConfig,
) -> Option<Point> {
    let evals = std::cell::Cell::new(0usize);
    let eval = |alpha: f64| -> Point {
        evals.set(evals.get() + 1);
        let xt: Vec<f64> = x.iter().zip(p).map(|(a, b)| a + alpha * b).collect();
        match objective.value_and_gradient(&xt) {
            Ok((f, g)) => Point {
                alpha,
                f,
                d: dot(&g, p),
                x: xt,
                g,
            },
            Err(e) => {
                log::debug!("line search trial alpha={alpha:e} rejected: {e}");
                Point {
                    alpha,
                    f: f64::INFINITY,
                    d: f64::NAN,
                    x: xt,
                    g: Vec::new(),
                }
            }
        }
    };
    let sufficient = |pt: &Point| pt.f.is_finite() && pt.f <= f0 + cfg.c1 * pt.alpha * d0;
    let curvature = |pt: &Point| pt.d.abs() <= -cfg.c2 * d0;

    let mut prev = Point {
        alpha: 0.0,
        f: f0,
        d: d0,
        x: x.to_vec(),
        g: Vec::new(),
    };
    let mut alpha = alpha0;
    let (mut lo, mut hi);
    let mut first = true;
    loop {
        let cur = eval(alpha);
        if !sufficient(&cur) || (!first && cur.f >= prev.f) {
            lo = prev;
            hi = cur;
            break;
        }
        if curvature(&cur) {
            return Some(cur);
        }
        if cur.d >= 0.0 {
            lo = cur;
            hi = prev;
            break;
        }
        if evals.get() >= cfg.max_line_search {
            return None;
        }
        first = false;
        alpha *= 2.0;
        prev = cur;
    }

    // zoom: lo satisfies sufficient decrease and has the lowest value so far
    while evals.get() < cfg.max_line_search {
        let (a, b) = (lo.alpha, hi.alpha);
        let width = (b - a).abs();
        if width <= 1e-16 * a.abs().max(b.abs()).max(1e-300) {
            return None;
        }
        let mut trial = if hi.f.is_finite() && hi.d.is_finite() {
            cubic_minimizer(&lo, &hi)
        } else {
            f64::NAN
        };
        let (left, right) = (a.min(b), a.max(b));
        let margin = 0.1 * width;
        if !trial.is_finite() || trial < left + margin || trial > right - margin {
            trial = 0.5 * (a + b);
        }
        let cur = eval(trial);
        if !sufficient(&cur) || cur.f >= lo.f {
            hi = cur;
        } else {
            if curvature(&cur) {
                return Some(cur);
            }
            if cur.d * (hi.alpha - lo.alpha) >= 0.0 {
                hi = lo;
            }
            lo = cur;
        }
    }
    None
}

fn cubic_minimizer(a: &Point, b: &Point) -> f64 {
    let d1 = a.d + b.d - 3.0 * (a.f - b.f) / (a.alpha - b.alpha);
    let disc = d1 * d1 - a.d * b.d;
    if disc < 0.0 {
        return f64::NAN;
    }
    let d2 = (b.alpha - a.alpha).signum() * disc.sqrt();
    b.alpha - (b.alpha - a.alpha) * (b.d + d2 - d1) / (b.d - a.d + 2.0 * d2)
}

/// Quasi-Newton minimization with a strong Wolfe line search.
///
/// `start` may carry the value and gradient at `x0` when already known.
/// Iteration 0 reports `x0`; every further reported iterate is an accepted
/// step. After a failed line search the curvature is reset and a
/// steepest-descent step is tried; a second consecutive failure ends the
/// stage with [`Termination::ParamStall`].
pub fn bfgs_stage(
    objective: &dyn Objective,
    x0: Vec<f64>,
    start: Option<(f64, Vec<f64>)>,
    cfg: &BfgsConfig,
    stop: &StopConfig,
    hook: &mut dyn FnMut(&StepInfo) -> Option<Termination>,
) -> StageOutcome {
    let mut x = x0;
    let (mut f, mut g) = match start {
        Some(fg) => fg,
        None => match objective.value_and_gradient(&x) {
            Ok(fg) => fg,
            Err(e) => return StageOutcome::diverged(x, f64::NAN, 0, e),
        },
    };
    let mut h = InverseHessian::new(x.len(), cfg.memory);
    let mut failures = 0;
    for k in 0..=cfg.max_iter {
        let info = StepInfo {
            iteration: k,
            x: &x,
            loss: f,
            grad: &g,
        };
        if let Some(reason) = hook(&info) {
            return StageOutcome::stopped(x, Some((f, g)), k, reason);
        }
        if max_abs(&g) < stop.grad_tol {
            return StageOutcome::stopped(x, Some((f, g)), k, Termination::GradTol);
        }
        if k == cfg.max_iter {
            break;
        }
        loop {
            let mut p = h.direction(&g);
            let mut d0 = dot(&g, &p);
            if !(d0 < 0.0) {
                h.reset();
                p = g.iter().map(|v| -v).collect();
                d0 = dot(&g, &p);
            }
            let steepest = matches!(&h, InverseHessian::Dense { scaled: false, .. })
                || matches!(&h, InverseHessian::Limited { pairs, .. } if pairs.is_empty());
            let alpha0 = if steepest {
                (1.0 / max_abs(&g)).min(1.0)
            } else {
                1.0
            };
            match line_search(objective, &x, &p, f, d0, alpha0, cfg) {
                Some(pt) => {
                    failures = 0;
                    let s: Vec<f64> = pt.x.iter().zip(&x).map(|(a, b)| a - b).collect();
                    let y: Vec<f64> = pt.g.iter().zip(&g).map(|(a, b)| a - b).collect();
                    let max_dx = max_abs(&s);
                    if !h.update(s, y) {
                        log::debug!("skipping curvature pair with non-positive y.s");
                    }
                    x = pt.x;
                    f = pt.f;
                    g = pt.g;
                    if max_dx < stop.param_tol {
                        return StageOutcome::stopped(
                            x,
                            Some((f, g)),
                            k + 1,
                            Termination::ParamStall,
                        );
                    }
                    break;
                }
                None => {
                    failures += 1;
                    if failures >= 2 {
                        log::warn!("line search failed twice in a row; stopping");
                        return StageOutcome::stopped(x, Some((f, g)), k, Termination::ParamStall);
                    }
                    log::debug!("line search failed; retrying along steepest descent");
                    h.reset();
                }
            }
        }
    }
    StageOutcome::stopped(x, Some((f, g)), cfg.max_iter, Termination::MaxIter)
}
