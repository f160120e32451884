//! Møller's scaled conjugate gradient.
//!
//! Full-batch, no line search: the step size comes from a finite-difference
//! estimate of the curvature along the search direction, and a
//! Levenberg-Marquardt style regulator `lambda` keeps that estimate positive
//! definite and is adapted from the ratio of actual to predicted decrease.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Perturbation used for the curvature estimate along `p`.
pub const SIGMA: f64 = 5e-5;
/// Initial regulator.
pub const LAMBDA_INIT: f64 = 5e-7;

pub trait Objective {
    fn dim(&self) -> usize;
    fn value(&mut self, theta: &[f64]) -> Result<f64>;
    fn value_and_gradient(&mut self, theta: &[f64]) -> Result<(f64, Vec<f64>)>;
}

/// Objective from a pair of closures.
pub struct FnObjective<F, G> {
    dim: usize,
    value: F,
    value_and_gradient: G,
}

impl<F, G> FnObjective<F, G>
where
    F: FnMut(&[f64]) -> f64,
    G: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    pub fn new(dim: usize, value: F, value_and_gradient: G) -> Self {
        FnObjective {
            dim,
            value,
            value_and_gradient,
        }
    }
}

impl<F, G> Objective for FnObjective<F, G>
where
    F: FnMut(&[f64]) -> f64,
    G: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&mut self, theta: &[f64]) -> Result<f64> {
        Ok((self.value)(theta))
    }

    fn value_and_gradient(&mut self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        Ok((self.value_and_gradient)(theta))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub max_iterations: usize,
    pub seed: u64,
    /// Relative loss decrease below which a successful step counts as stalled.
    pub tolerance: f64,
    /// Consecutive stalled successful steps before stopping.
    pub patience: usize,
    /// Stop once the gradient norm falls to this value.
    pub gradient_tolerance: f64,
}

impl TrainConfig {
    pub fn new(max_iterations: usize, seed: u64) -> Self {
        TrainConfig {
            max_iterations,
            seed,
            ..TrainConfig::default()
        }
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_iterations: 100,
            seed: 0,
            tolerance: 1e-7,
            patience: 10,
            gradient_tolerance: 1e-12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxIterations,
    GradientVanished,
    Saturated,
}

/// Optimizer state between iterations.
#[derive(Debug, Clone)]
pub struct ScgState {
    pub theta: Vec<f64>,
    /// Search direction.
    pub direction: Vec<f64>,
    /// Negative gradient at `theta`.
    pub residual: Vec<f64>,
    pub loss: f64,
    pub sigma: f64,
    pub lambda: f64,
    pub lambda_bar: f64,
    /// Scaled curvature along `direction`, carried over failed steps.
    pub delta: f64,
    pub success: bool,
    pub iteration: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScgOutcome {
    pub params: Vec<f64>,
    /// Loss before the first iteration followed by the loss after each one.
    pub trace: Vec<f64>,
    /// Whether each iteration's step was accepted.
    pub accepted: Vec<bool>,
    pub iterations: usize,
    pub stop: StopReason,
}

impl ScgOutcome {
    pub fn final_loss(&self) -> f64 {
        *self.trace.last().expect("trace holds the initial loss")
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(theta: &[f64], alpha: f64, p: &[f64]) -> Vec<f64> {
    theta.iter().zip(p).map(|(t, d)| t + alpha * d).collect()
}

fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

fn non_finite(iteration: usize, what: &str) -> Error {
    Error::Training {
        iteration,
        message: format!("non-finite {what}"),
    }
}

pub fn scg_minimize<O: Objective + ?Sized>(
    objective: &mut O,
    theta0: &[f64],
    cfg: &TrainConfig,
) -> Result<ScgOutcome> {
    if theta0.len() != objective.dim() {
        return Err(Error::Dimension {
            expected: objective.dim(),
            actual: theta0.len(),
        });
    }
    let n = theta0.len().max(1);
    let (loss, grad) = objective.value_and_gradient(theta0)?;
    if !loss.is_finite() {
        return Err(non_finite(0, "loss"));
    }
    if !all_finite(&grad) {
        return Err(non_finite(0, "gradient"));
    }
    let residual: Vec<f64> = grad.iter().map(|g| -g).collect();
    let mut st = ScgState {
        theta: theta0.to_vec(),
        direction: residual.clone(),
        residual,
        loss,
        sigma: SIGMA,
        lambda: LAMBDA_INIT,
        lambda_bar: 0.0,
        delta: 0.0,
        success: true,
        iteration: 0,
    };
    let mut trace = vec![loss];
    let mut accepted = Vec::new();
    let mut stalled = 0usize;
    let mut stop = StopReason::MaxIterations;

    while st.iteration < cfg.max_iterations {
        if dot(&st.residual, &st.residual).sqrt() <= cfg.gradient_tolerance {
            stop = StopReason::GradientVanished;
            break;
        }
        st.iteration += 1;
        let k = st.iteration;

        // A direction that is not a descent direction restarts along the
        // steepest descent.
        if dot(&st.direction, &st.residual) <= 0.0 {
            st.direction = st.residual.clone();
            st.success = true;
            st.lambda_bar = 0.0;
        }
        let p_sq = dot(&st.direction, &st.direction);

        if st.success {
            let sigma_k = st.sigma / p_sq.sqrt();
            let probe = axpy(&st.theta, sigma_k, &st.direction);
            let (_, g_probe) = objective.value_and_gradient(&probe)?;
            if !all_finite(&g_probe) {
                return Err(non_finite(k, "gradient"));
            }
            // s = (g(theta + sigma_k p) - g(theta)) / sigma_k, with g = -r.
            st.delta = g_probe
                .iter()
                .zip(&st.residual)
                .zip(&st.direction)
                .map(|((gp, r), p)| (gp + r) / sigma_k * p)
                .sum();
        }

        st.delta += (st.lambda - st.lambda_bar) * p_sq;
        if st.delta <= 0.0 {
            st.lambda_bar = 2.0 * (st.lambda - st.delta / p_sq);
            st.delta = -st.delta + st.lambda * p_sq;
            st.lambda = st.lambda_bar;
        }

        let mu = dot(&st.direction, &st.residual);
        let alpha = mu / st.delta;
        let trial = axpy(&st.theta, alpha, &st.direction);
        let trial_loss = objective.value(&trial)?;
        if !trial_loss.is_finite() {
            return Err(non_finite(k, "loss"));
        }
        let comparison = 2.0 * st.delta * (st.loss - trial_loss) / (mu * mu);

        if comparison >= 0.0 {
            let (new_loss, g_new) = objective.value_and_gradient(&trial)?;
            if !new_loss.is_finite() {
                return Err(non_finite(k, "loss"));
            }
            if !all_finite(&g_new) {
                return Err(non_finite(k, "gradient"));
            }
            let r_new: Vec<f64> = g_new.iter().map(|g| -g).collect();
            let previous = st.loss;
            st.theta = trial;
            st.loss = new_loss;
            st.lambda_bar = 0.0;
            st.success = true;
            if k.is_multiple_of(n) {
                st.direction = r_new.clone();
            } else {
                let beta = (dot(&r_new, &r_new) - dot(&r_new, &st.residual)) / mu;
                st.direction = r_new
                    .iter()
                    .zip(&st.direction)
                    .map(|(r, p)| r + beta * p)
                    .collect();
            }
            st.residual = r_new;
            if comparison >= 0.75 {
                st.lambda *= 0.25;
            }

            let decrease = previous - st.loss;
            let relative = if previous.abs() > 0.0 {
                decrease / previous.abs()
            } else {
                0.0
            };
            if relative < cfg.tolerance {
                stalled += 1;
            } else {
                stalled = 0;
            }
        } else {
            st.lambda_bar = st.lambda;
            st.success = false;
        }

        if comparison < 0.25 {
            st.lambda += st.delta * (1.0 - comparison) / p_sq;
        }

        trace.push(st.loss);
        accepted.push(st.success);
        log::trace!(
            "scg iter {k}: loss {:.6e} lambda {:.3e} accepted {}",
            st.loss,
            st.lambda,
            st.success
        );

        if st.loss == 0.0 {
            stop = StopReason::GradientVanished;
            break;
        }
        if stalled >= cfg.patience {
            stop = StopReason::Saturated;
            break;
        }
    }

    Ok(ScgOutcome {
        params: st.theta,
        iterations: st.iteration,
        trace,
        accepted,
        stop,
    })
}
