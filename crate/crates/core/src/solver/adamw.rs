use serde::{Deserialize, Serialize};

use super::{StageOutcome, StepInfo, StopConfig, Termination};
use crate::autodiff::Objective;

/// Adaptive-moment optimizer with decoupled weight decay.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamWConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    pub max_iter: usize,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.0,
            max_iter: 5000,
        }
    }
}

/// Runs at most `cfg.max_iter` AdamW updates from `x0`.
///
/// `hook` sees every iterate before it is updated and may stop the stage by
/// returning a termination reason.
pub fn adamw_stage(
    objective: &dyn Objective,
    x0: Vec<f64>,
    cfg: &AdamWConfig,
    stop: &StopConfig,
    hook: &mut dyn FnMut(&StepInfo) -> Option<Termination>,
) -> StageOutcome {
    let mut x = x0;
    let n = x.len();
    let mut m = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut last_loss = f64::NAN;
    for t in 0..cfg.max_iter {
        let (f, g) = match objective.value_and_gradient(&x) {
            Ok(r) => r,
            Err(e) => return StageOutcome::diverged(x, last_loss, t, e),
        };
        last_loss = f;
        let info = StepInfo {
            iteration: t,
            x: &x,
            loss: f,
            grad: &g,
        };
        if let Some(reason) = hook(&info) {
            return StageOutcome::stopped(x, Some((f, g)), t, reason);
        }
        if max_abs(&g) < stop.grad_tol {
            return StageOutcome::stopped(x, Some((f, g)), t, Termination::GradTol);
        }

        let step = t as i32 + 1;
        let bc1 = 1.0 - cfg.beta1.powi(step);
        let bc2 = 1.0 - cfg.beta2.powi(step);
        let mut max_dx: f64 = 0.0;
        for i in 0..n {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            let old = x[i];
            x[i] -= cfg.learning_rate * cfg.weight_decay * x[i];
            x[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
            max_dx = max_dx.max((x[i] - old).abs());
        }
        if max_dx < stop.param_tol {
            return StageOutcome::stopped(x, None, t + 1, Termination::ParamStall);
        }
    }
    StageOutcome::stopped(x, None, cfg.max_iter, Termination::MaxIter)
}

pub(crate) fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, b| a.max(b.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{Real, TapeObjective, Var};

    fn square() -> TapeObjective<impl Fn(&[Var]) -> Var + Sync> {
        TapeObjective::new(1, |x: &[Var]| x[0] * x[0])
    }

    #[test]
    fn first_step_moves_by_the_learning_rate() {
        let cfg = AdamWConfig {
            learning_rate: 0.1,
            max_iter: 1,
            ..Default::default()
        };
        let out = adamw_stage(
            &square(),
            vec![1.0],
            &cfg,
            &StopConfig::default(),
            &mut |_| None,
        );
        assert!((out.x[0] - 0.9).abs() < 1e-7, "{}", out.x[0]);
        assert_eq!(out.termination, Termination::MaxIter);
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let obj = TapeObjective::new(2, |_: &[Var]| Var::constant(1.0));
        let stop = StopConfig {
            grad_tol: 0.0,
            param_tol: 0.0,
            ..Default::default()
        };
        let cfg = AdamWConfig {
            max_iter: 10,
            ..Default::default()
        };
        let out = adamw_stage(&obj, vec![0.5, -2.0], &cfg, &stop, &mut |_| None);
        assert_eq!(out.x, vec![0.5, -2.0]);
    }

    #[test]
    fn deterministic_history() {
        let cfg = AdamWConfig {
            learning_rate: 0.05,
            max_iter: 50,
            ..Default::default()
        };
        let run = || {
            let mut h = Vec::new();
            adamw_stage(
                &square(),
                vec![1.0],
                &cfg,
                &StopConfig::default(),
                &mut |s| {
                    h.push(s.loss);
                    None
                },
            );
            h
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn weight_decay_shrinks_params() {
        let obj = TapeObjective::new(1, |_: &[Var]| Var::constant(0.0));
        let stop = StopConfig {
            grad_tol: 0.0,
            ..Default::default()
        };
        let cfg = AdamWConfig {
            learning_rate: 0.1,
            weight_decay: 0.5,
            max_iter: 1,
            ..Default::default()
        };
        let out = adamw_stage(&obj, vec![2.0], &cfg, &stop, &mut |_| None);
        assert!((out.x[0] - 1.9).abs() < 1e-15);
    }
}
