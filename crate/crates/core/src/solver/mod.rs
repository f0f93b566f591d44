//! Loss assembly and the two-stage optimization (AdamW, then BFGS).

mod adamw;
mod bfgs;
mod loss;

use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use adamw::{adamw_stage, AdamWConfig};
pub use bfgs::{bfgs_stage, BfgsConfig, DENSE_LIMIT};
pub use loss::LossContext;

use crate::autodiff::Objective;
use crate::error::{Error, Result};
use crate::mhdkernel::{CollocationGrid, FieldState};
use crate::netfield::{init_params, EquilibriumInput, NetParams};
use crate::spectral::AngularGrid;

/// Why an optimization stage stopped.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    ParamStall,
    GradTol,
    TargetReached,
    MaxIter,
    /// An iterate produced an invalid state (overlapping surfaces or a
    /// non-finite residual).
    Diverged,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::ParamStall => "param-stall",
            Termination::GradTol => "grad-tol",
            Termination::TargetReached => "target-reached",
            Termination::MaxIter => "max-iter",
            Termination::Diverged => "diverged",
        }
    }
}

impl std::fmt::Display for Termination {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Adamw,
    Bfgs,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Adamw => "adamw",
            Stage::Bfgs => "bfgs",
        }
    }
}

/// Stopping tolerances shared by both stages.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StopConfig {
    /// Stop when no parameter moves by more than this in one step.
    pub param_tol: f64,
    /// Stop when the largest gradient entry falls below this.
    pub grad_tol: f64,
    /// Stop once `F_vol_norm <= target * (1 + target_rel_tol)`.
    pub target_fvol: Option<f64>,
    pub target_rel_tol: f64,
    /// Iterations between `F_vol_norm` evaluations for the target check.
    pub target_every: usize,
}

impl Default for StopConfig {
    fn default() -> Self {
        StopConfig {
            param_tol: 1e-12,
            grad_tol: 1e-10,
            target_fvol: None,
            target_rel_tol: 0.005,
            target_every: 25,
        }
    }
}

/// One iterate as seen by stage hooks.
pub struct StepInfo<'a> {
    /// Iteration index within the stage.
    pub iteration: usize,
    pub x: &'a [f64],
    pub loss: f64,
    pub grad: &'a [f64],
}

/// Result of one optimization stage.
#[derive(Debug)]
pub struct StageOutcome {
    pub x: Vec<f64>,
    /// Value and gradient at `x` when they were computed.
    pub last_eval: Option<(f64, Vec<f64>)>,
    pub iterations: usize,
    pub termination: Termination,
    pub error: Option<Error>,
}

impl StageOutcome {
    fn stopped(
        x: Vec<f64>,
        last_eval: Option<(f64, Vec<f64>)>,
        iterations: usize,
        termination: Termination,
    ) -> Self {
        StageOutcome {
            x,
            last_eval,
            iterations,
            termination,
            error: None,
        }
    }

    fn diverged(x: Vec<f64>, _last_loss: f64, iterations: usize, error: Error) -> Self {
        log::warn!("optimization diverged after {iterations} iterations: {error}");
        StageOutcome {
            x,
            last_eval: None,
            iterations,
            termination: Termination::Diverged,
            error: Some(error),
        }
    }
}

/// Grid sizes; angular counts default to `4M` and `max(1, 4N)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub n_rho: usize,
    pub n_theta: Option<usize>,
    pub n_zeta: Option<usize>,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            n_rho: 50,
            n_theta: None,
            n_zeta: None,
        }
    }
}

impl GridConfig {
    pub fn build(&self, input: &EquilibriumInput) -> Result<CollocationGrid> {
        let n_theta = self.n_theta.unwrap_or(4 * input.m_count as usize);
        let n_zeta = self.n_zeta.unwrap_or((4 * input.n_max as usize).max(1));
        CollocationGrid::midpoints(
            self.n_rho,
            AngularGrid::uniform(n_theta, n_zeta, input.nfp)?,
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub width: usize,
    pub seed: u64,
    pub grid: GridConfig,
    /// Grid for reported metrics; the training grid when absent.
    pub eval_grid: Option<GridConfig>,
    pub adamw: AdamWConfig,
    pub bfgs: BfgsConfig,
    pub stop: StopConfig,
    /// Iterations between checkpoints; 0 disables them.
    pub checkpoint_every: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            width: 8,
            seed: 0,
            grid: GridConfig::default(),
            eval_grid: None,
            adamw: AdamWConfig::default(),
            bfgs: BfgsConfig::default(),
            stop: StopConfig::default(),
            checkpoint_every: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidInput(m.to_string()));
        if self.width == 0 {
            return bad("width must be >= 1");
        }
        if self.grid.n_rho == 0 || self.eval_grid.as_ref().is_some_and(|g| g.n_rho == 0) {
            return bad("n_rho must be >= 1");
        }
        let a = &self.adamw;
        if !(a.learning_rate > 0.0 && a.epsilon > 0.0 && a.weight_decay >= 0.0) {
            return bad("adamw learning_rate and epsilon must be > 0, weight_decay >= 0");
        }
        if !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) {
            return bad("adamw decay rates must lie in [0, 1)");
        }
        let b = &self.bfgs;
        if !(0.0 < b.c1 && b.c1 < b.c2 && b.c2 < 1.0) {
            return bad("line search constants must satisfy 0 < c1 < c2 < 1");
        }
        if b.max_line_search < 2 {
            return bad("max_line_search must be >= 2");
        }
        if self.adamw.max_iter + self.bfgs.max_iter == 0 {
            return bad("at least one stage needs max_iter >= 1");
        }
        let s = &self.stop;
        if !(s.param_tol >= 0.0 && s.grad_tol >= 0.0 && s.target_rel_tol >= 0.0) {
            return bad("tolerances must be non-negative");
        }
        if s.target_every == 0 {
            return bad("target_every must be >= 1");
        }
        if s.target_fvol.is_some_and(|t| !(t > 0.0)) {
            return bad("target_fvol must be > 0");
        }
        Ok(())
    }

    pub fn training_grid(&self, input: &EquilibriumInput) -> Result<CollocationGrid> {
        self.grid.build(input)
    }

    pub fn metrics_grid(&self, input: &EquilibriumInput) -> Result<CollocationGrid> {
        self.eval_grid.as_ref().unwrap_or(&self.grid).build(input)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    /// Global iteration index across both stages.
    pub iteration: usize,
    pub stage: Stage,
    pub loss: f64,
    /// Seconds since the start of the solve.
    pub wall_time: f64,
}

/// Force-residual metrics of a parameter set.
#[derive(Clone, Debug, PartialEq)]
pub struct Metrics {
    pub f_vol_norm: f64,
    /// `(rho, <F_norm>)` per surface.
    pub f_norm_profile: Vec<(f64, f64)>,
    pub volume: f64,
}

pub fn compute_metrics(
    params: &NetParams,
    input: &EquilibriumInput,
    grid: &CollocationGrid,
) -> Result<Metrics> {
    let state = FieldState::evaluate(params, input, grid)?;
    let f = state.f_norm_self()?;
    Ok(Metrics {
        f_vol_norm: f.volume,
        f_norm_profile: grid.rho.iter().copied().zip(f.profile).collect(),
        volume: state.volume(),
    })
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub params: NetParams,
    pub input: EquilibriumInput,
    pub config: SolverConfig,
    pub history: Vec<HistoryEntry>,
    /// `NaN` when metrics could not be evaluated.
    pub f_vol_norm: f64,
    pub f_norm_profile: Vec<(f64, f64)>,
    pub termination: Termination,
    /// Total iterations over both stages.
    pub iterations: usize,
    /// Number of iterates at which the Jacobian was checked.
    pub checked_iterates: usize,
    /// Diagnostic message for diverged or unevaluable solutions.
    pub error: Option<String>,
}

/// Progress events delivered to [`solve_with`] observers.
pub struct Checkpoint<'a> {
    pub iteration: usize,
    pub stage: Stage,
    pub loss: f64,
    pub params: &'a NetParams,
}

/// Initializes and trains the networks with the default no-op observer.
pub fn solve(input: &EquilibriumInput, config: &SolverConfig) -> Result<Solution> {
    solve_with(input, config, &mut |_| Ok(()))
}

/// Initializes and trains the networks; `observer` is called at every
/// `checkpoint_every`-th iterate and once for the final parameters.
pub fn solve_with(
    input: &EquilibriumInput,
    config: &SolverConfig,
    observer: &mut dyn FnMut(&Checkpoint) -> Result<()>,
) -> Result<Solution> {
    config.validate()?;
    input.validate()?;
    let start = Instant::now();
    let grid = config.training_grid(input)?;
    let metrics_grid = config.metrics_grid(input)?;
    let objective = LossContext::new(input, config.width, grid)?;
    let init = init_params(input, config.width, config.seed)?;
    let layout = init.layout;
    log::info!(
        "solving: {} parameters, {} collocation nodes",
        objective.dim(),
        objective.grid().len()
    );

    let mut history = Vec::new();
    let mut observer_error = None;
    let mut offset = 0;
    let mut hook = |stage: Stage, offset: usize, step: &StepInfo| -> Option<Termination> {
        let iteration = offset + step.iteration;
        history.push(HistoryEntry {
            iteration,
            stage,
            loss: step.loss,
            wall_time: start.elapsed().as_secs_f64(),
        });
        if config.checkpoint_every > 0 && iteration % config.checkpoint_every == 0 {
            let params = NetParams {
                layout,
                values: step.x.to_vec(),
            };
            let cp = Checkpoint {
                iteration,
                stage,
                loss: step.loss,
                params: &params,
            };
            if let Err(e) = observer(&cp) {
                observer_error = Some(e);
                return Some(Termination::Diverged);
            }
        }
        if iteration % 100 == 0 {
            log::info!(
                "{} iter {iteration}: loss {:.6e}",
                stage.as_str(),
                step.loss
            );
        }
        if let Some(target) = config.stop.target_fvol {
            if iteration % config.stop.target_every == 0 {
                let params = NetParams {
                    layout,
                    values: step.x.to_vec(),
                };
                match compute_metrics(&params, input, &metrics_grid) {
                    Ok(m) if m.f_vol_norm <= target * (1.0 + config.stop.target_rel_tol) => {
                        log::info!(
                            "F_vol_norm {:.4e} reached target at iteration {iteration}",
                            m.f_vol_norm
                        );
                        return Some(Termination::TargetReached);
                    }
                    Ok(m) => log::debug!("iteration {iteration}: F_vol_norm {:.4e}", m.f_vol_norm),
                    Err(e) => {
                        log::warn!("F_vol_norm evaluation failed at iteration {iteration}: {e}")
                    }
                }
            }
        }
        None
    };

    let mut x = init.values.clone();
    let mut last_eval = None;
    let mut outcome = None;
    if config.adamw.max_iter > 0 {
        let out = adamw_stage(&objective, x, &config.adamw, &config.stop, &mut |s| {
            hook(Stage::Adamw, 0, s)
        });
        offset = out.iterations;
        x = out.x.clone();
        last_eval = out.last_eval.clone();
        if out.termination != Termination::MaxIter || config.bfgs.max_iter == 0 {
            outcome = Some(out);
        }
    }
    let outcome = match outcome {
        Some(o) => o,
        None => bfgs_stage(
            &objective,
            x,
            last_eval,
            &config.bfgs,
            &config.stop,
            &mut |s| hook(Stage::Bfgs, offset, s),
        ),
    };
    if let Some(e) = observer_error {
        return Err(e);
    }
    let iterations = offset + outcome.iterations;
    let checked_iterates = history.len();

    let params = NetParams {
        layout,
        values: outcome.x,
    };
    let mut error = outcome.error.map(|e| e.to_string());
    let (f_vol_norm, f_norm_profile) = match compute_metrics(&params, input, &metrics_grid) {
        Ok(m) => (m.f_vol_norm, m.f_norm_profile),
        Err(e) => {
            error.get_or_insert_with(|| e.to_string());
            (f64::NAN, Vec::new())
        }
    };
    let loss = history.last().map_or(f64::NAN, |h| h.loss);
    let stage = history.last().map_or(Stage::Adamw, |h| h.stage);
    observer(&Checkpoint {
        iteration: iterations,
        stage,
        loss,
        params: &params,
    })?;
    log::info!(
        "finished after {iterations} iterations ({}): F_vol_norm {f_vol_norm:.4e}",
        outcome.termination
    );
    Ok(Solution {
        params,
        input: input.clone(),
        config: config.clone(),
        history,
        f_vol_norm,
        f_norm_profile,
        termination: outcome.termination,
        iterations,
        checked_iterates,
        error,
    })
}
