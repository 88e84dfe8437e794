use log::debug;

use super::objective::{objective_and_gradient, Problem};
use super::{FactorModel, GroupUpdate, Params, TrainConfig};
use crate::error::{Error, Result};

/// Rejected steps in a row before training is declared divergent.
pub const MAX_CONSECUTIVE_REJECTIONS: usize = 40;
/// Step lengths below this are declared divergent.
pub const MIN_STEP: f64 = 1e-12;
/// Growth factor after an accepted step.
const GROWTH: f64 = 1.1;
/// A failed step whose objective change is within this fraction of the
/// objective is treated as numerical stagnation, i.e. convergence.
const PLATEAU: f64 = 1e-13;

/// Next step length: after an accepted step (`j_after < j_before`) grow by
/// 10% up to `alpha_max`; otherwise halve.
pub fn backtracking_step(alpha: f64, alpha_max: f64, j_before: f64, j_after: f64) -> f64 {
    if j_after < j_before {
        (alpha * GROWTH).min(alpha_max)
    } else {
        alpha / 2.0
    }
}

/// Step-length state across iterations.
#[derive(Clone, Debug)]
pub struct StepControl {
    alpha: f64,
    alpha_max: f64,
    rejections: usize,
}

impl StepControl {
    pub fn new(alpha: f64) -> Self {
        StepControl {
            alpha,
            alpha_max: alpha,
            rejections: 0,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Records the outcome of a trial step. Returns whether it was accepted,
    /// or a divergence error once the step collapses.
    pub fn observe(&mut self, iteration: usize, j_before: f64, j_after: f64) -> Result<bool> {
        let accepted = j_after < j_before;
        self.alpha = backtracking_step(self.alpha, self.alpha_max, j_before, j_after);
        if accepted {
            self.rejections = 0;
            return Ok(true);
        }
        self.rejections += 1;
        if self.rejections >= MAX_CONSECUTIVE_REJECTIONS || self.alpha < MIN_STEP {
            return Err(Error::Divergence {
                iteration,
                reason: format!(
                    "no decrease after {} trial steps (step length {:e}, objective {j_before} -> {j_after})",
                    self.rejections, self.alpha
                ),
            });
        }
        Ok(false)
    }
}

/// Full-batch gradient descent with backtracking.
///
/// With [`GroupUpdate::Exact`] each trial step is followed by setting the
/// group and package blocks to their exact minimizers (member means), so the
/// step is a gradient step on user/item parameters and a block minimization
/// on the rest; it is accepted or rejected as a whole.
///
/// Every accepted step strictly lowers the objective, so the returned
/// (final) iterate is also the best one seen. Training stops after
/// `max_iters` accepted steps, or earlier when the gradient vanishes or a
/// failed step changes the objective only at rounding level.
pub fn train(problem: &Problem<'_>, cfg: &TrainConfig) -> Result<FactorModel> {
    cfg.validate()?;
    let dims = problem.dims();
    let mut params = Params::init(problem.kind, dims, cfg);
    problem.check_shapes(&params)?;

    let (mut j, mut grad) = objective_and_gradient(problem, &params);
    if !j.is_finite() {
        return Err(Error::Divergence {
            iteration: 0,
            reason: format!("initial objective is {j}"),
        });
    }
    let mut trajectory = vec![j];
    let mut control = StepControl::new(cfg.alpha);
    let mut iteration = 0;
    let exact = problem.kind.is_unified() && cfg.group_update == GroupUpdate::Exact;

    while iteration < cfg.max_iters {
        if grad.squared_norm() == 0.0 {
            debug!("{}: zero gradient at iteration {iteration}", problem.kind);
            break;
        }
        let mut candidate = params.add_scaled(&grad, -control.alpha());
        if exact {
            candidate.center_groups(problem.groups.expect("unified"), problem.packages.expect("unified"));
        }
        // most trial steps are accepted, so evaluate the gradient alongside
        let (j_new, grad_new) = objective_and_gradient(problem, &candidate);
        let plateau = j_new.is_finite() && j_new >= j && j_new - j <= PLATEAU * j.abs();
        if plateau {
            debug!("{}: stalled at iteration {iteration}, objective {j}", problem.kind);
            break;
        }
        // NaN compares false, so a non-finite trial is a rejection
        let j_cmp = if j_new.is_nan() { f64::INFINITY } else { j_new };
        if control.observe(iteration + 1, j, j_cmp)? {
            params = candidate;
            j = j_new;
            grad = grad_new;
            iteration += 1;
            trajectory.push(j);
        }
    }
    debug!(
        "{}: {} accepted steps, objective {} -> {}",
        problem.kind,
        iteration,
        trajectory[0],
        j
    );
    Ok(FactorModel {
        kind: problem.kind,
        dims,
        config: *cfg,
        params,
        trajectory,
    })
}
