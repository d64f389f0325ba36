//! MAML over closure tasks.
//!
//! Each meta-iteration draws a batch of tasks with disjoint support and query
//! samples, adapts a copy of the meta-parameters on every task's support set
//! with a few plain gradient steps, and moves the meta-parameters against the
//! task-summed query-loss gradient.

mod sampling;
pub mod toy;

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use sampling::{feature_widths, materialize, meta_train_gnn, sample_task_batch, TaskDraw};

use crate::error::{Error, Result};
use crate::rng::{stream, Rng, META_STREAM};

/// A model viewed as a loss over a flat parameter vector.
pub trait Learner: Sync {
    type Sample: Sync;

    fn n_params(&self) -> usize;

    /// Mean loss over `samples` and its gradient. `train` enables stochastic
    /// layers, which draw from `rng`.
    fn loss_grad(&self, theta: &[f64], samples: &[&Self::Sample], train: bool, rng: &mut Rng) -> Result<(f64, Vec<f64>)>;

    /// Mean evaluation-mode loss over `samples`.
    fn loss(&self, theta: &[f64], samples: &[&Self::Sample]) -> Result<f64>;
}

/// How the outer gradient is obtained.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetaGradMode {
    /// Query gradient at the adapted parameters.
    #[default]
    FirstOrder,
    /// Central differences of the query loss through the inner loop. Costs
    /// two inner loops per parameter.
    ExactFd,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OuterOptimizer {
    #[default]
    Sgd,
    Adam,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetaConfig {
    /// Inner (task) learning rate.
    pub alpha: f64,
    /// Outer (meta) learning rate.
    pub beta: f64,
    /// Support samples per task.
    pub k_support: usize,
    /// Query samples per task.
    pub m_query: usize,
    pub inner_steps: usize,
    pub task_batch: usize,
    pub meta_iterations: usize,
    pub meta_grad_mode: MetaGradMode,
    pub seed: u64,
    /// Global-norm gradient clip applied in both loops.
    pub clip_norm: f64,
    /// Step of the finite-difference meta-gradient.
    pub fd_step: f64,
    pub outer_optimizer: OuterOptimizer,
}

impl Default for MetaConfig {
    fn default() -> Self {
        Self {
            alpha: 0.02,
            beta: 0.055,
            k_support: 4,
            m_query: 25,
            inner_steps: 5,
            task_batch: 7,
            meta_iterations: 1500,
            meta_grad_mode: MetaGradMode::FirstOrder,
            seed: 0,
            clip_norm: 10.0,
            fd_step: 1e-5,
            outer_optimizer: OuterOptimizer::Sgd,
        }
    }
}

impl MetaConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad("alpha must be > 0");
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad("beta must be ≥ 0");
        }
        if self.k_support < 1 || self.m_query < 1 {
            return bad("k_support and m_query must be ≥ 1");
        }
        if self.inner_steps < 1 || self.task_batch < 1 {
            return bad("inner_steps and task_batch must be ≥ 1");
        }
        if self.clip_norm.is_nan() || self.clip_norm <= 0.0 {
            return bad("clip_norm must be > 0");
        }
        if self.fd_step.is_nan() || self.fd_step <= 0.0 {
            return bad("fd_step must be > 0");
        }
        Ok(())
    }
}

/// One task's support and query samples.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskData<S> {
    pub task_id: usize,
    pub support: Vec<S>,
    pub query: Vec<S>,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Rescales `grad` in place to at most `max_norm`; returns the original norm.
pub fn clip_global_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let n = norm(grad);
    if n > max_norm {
        let s = max_norm / n;
        grad.iter_mut().for_each(|g| *g *= s);
    }
    n
}

/// Plain gradient descent on the mean support loss, starting from a copy of
/// `theta`.
pub fn inner_adapt<L: Learner>(
    learner: &L,
    theta: &[f64],
    support: &[&L::Sample],
    alpha: f64,
    inner_steps: usize,
    clip_norm: f64,
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    if support.is_empty() {
        return Err(Error::Contract("inner adaptation needs at least one support sample".into()));
    }
    if inner_steps == 0 {
        return Err(Error::Contract("inner adaptation needs at least one step".into()));
    }
    let mut w = theta.to_vec();
    for step in 0..inner_steps {
        let (loss, mut grad) = learner.loss_grad(&w, support, true, rng).map_err(|e| match e {
            Error::NonFinite(_) => Error::Adaptation { step },
            other => other,
        })?;
        let gnorm = clip_global_norm(&mut grad, clip_norm);
        if !loss.is_finite() || !gnorm.is_finite() {
            return Err(Error::Adaptation { step });
        }
        for (wi, gi) in w.iter_mut().zip(&grad) {
            *wi -= alpha * gi;
        }
    }
    Ok(w)
}

/// Adam state for the optional adaptive outer update.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, theta: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for (i, (w, g)) in theta.iter_mut().zip(grad).enumerate() {
            self.m[i] = Self::B1 * self.m[i] + (1.0 - Self::B1) * g;
            self.v[i] = Self::B2 * self.v[i] + (1.0 - Self::B2) * g * g;
            *w -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + Self::EPS);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HistoryEntry {
    pub iteration: usize,
    pub mean_query_loss: f64,
    pub wall_time_s: f64,
}

/// Meta-parameters and training record. Randomness is derived from the seed
/// and the iteration counter, so the state needs no stored generator.
#[derive(Clone, Debug, PartialEq)]
pub struct MetaTrainState {
    pub theta: Vec<f64>,
    pub iteration: usize,
    pub history: Vec<HistoryEntry>,
    /// Parameters that achieved the lowest recorded query loss.
    pub best_theta: Vec<f64>,
    pub best_loss: f64,
    adam: Option<Adam>,
}

impl MetaTrainState {
    pub fn new(theta: Vec<f64>, config: &MetaConfig) -> Self {
        let adam = (config.outer_optimizer == OuterOptimizer::Adam).then(|| Adam::new(theta.len()));
        Self {
            best_theta: theta.clone(),
            theta,
            iteration: 0,
            history: Vec::new(),
            best_loss: f64::INFINITY,
            adam,
        }
    }
}

/// Per-task outcome of one meta-step.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskOutcome {
    pub task_id: usize,
    pub query_loss: f64,
    pub meta_grad: Vec<f64>,
}

/// Query loss and meta-gradient contribution of one task.
pub fn task_meta_gradient<L: Learner>(
    learner: &L,
    theta: &[f64],
    task: &TaskData<L::Sample>,
    config: &MetaConfig,
    seed: u64,
) -> Result<TaskOutcome> {
    let support: Vec<&L::Sample> = task.support.iter().collect();
    let query: Vec<&L::Sample> = task.query.iter().collect();
    // the same stream for every evaluation makes the query loss a
    // deterministic function of theta
    let query_loss_at = |w: &[f64]| -> Result<(f64, Vec<f64>)> {
        let mut rng = stream(seed, &[]);
        let adapted = inner_adapt(learner, w, &support, config.alpha, config.inner_steps, config.clip_norm, &mut rng)?;
        learner.loss_grad(&adapted, &query, true, &mut rng)
    };
    let (query_loss, meta_grad) = match config.meta_grad_mode {
        MetaGradMode::FirstOrder => query_loss_at(theta)?,
        MetaGradMode::ExactFd => {
            let (loss, _) = query_loss_at(theta)?;
            let mut w = theta.to_vec();
            let mut grad = vec![0.0; theta.len()];
            for i in 0..theta.len() {
                let x0 = w[i];
                w[i] = x0 + config.fd_step;
                let up = query_loss_at(&w)?.0;
                w[i] = x0 - config.fd_step;
                let down = query_loss_at(&w)?.0;
                w[i] = x0;
                grad[i] = (up - down) / (2.0 * config.fd_step);
            }
            (loss, grad)
        }
    };
    Ok(TaskOutcome {
        task_id: task.task_id,
        query_loss,
        meta_grad,
    })
}

/// One outer update on `tasks`. Tasks are processed in parallel and reduced
/// in task order, so the result does not depend on the thread count.
pub fn meta_step<L: Learner>(
    learner: &L,
    state: &mut MetaTrainState,
    tasks: &[TaskData<L::Sample>],
    config: &MetaConfig,
) -> Result<f64>
where
    L::Sample: Send,
{
    let iteration = state.iteration as u64;
    let outcomes: Vec<TaskOutcome> = tasks
        .par_iter()
        .enumerate()
        .map(|(i, task)| {
            let seed = crate::rng::derive_seed(config.seed, &[META_STREAM, iteration, i as u64]);
            task_meta_gradient(learner, &state.theta, task, config, seed)
        })
        .collect::<Result<_>>()?;

    let mut grad = vec![0.0; state.theta.len()];
    for o in &outcomes {
        for (g, t) in grad.iter_mut().zip(&o.meta_grad) {
            *g += t;
        }
    }
    let gnorm = clip_global_norm(&mut grad, config.clip_norm);
    if !gnorm.is_finite() {
        let bad: Vec<usize> = outcomes
            .iter()
            .filter(|o| !norm(&o.meta_grad).is_finite())
            .map(|o| o.task_id)
            .collect();
        return Err(Error::NonFinite(format!(
            "meta-gradient at iteration {iteration}, tasks {bad:?}"
        )));
    }
    let mean_loss = outcomes.iter().map(|o| o.query_loss).sum::<f64>() / outcomes.len().max(1) as f64;
    if mean_loss < state.best_loss {
        state.best_loss = mean_loss;
        state.best_theta.clone_from(&state.theta);
    }
    match &mut state.adam {
        Some(adam) => adam.step(&mut state.theta, &grad, config.beta),
        None => state
            .theta
            .iter_mut()
            .zip(&grad)
            .for_each(|(w, g)| *w -= config.beta * g),
    }
    Ok(mean_loss)
}

/// Runs `config.meta_iterations` meta-steps. `draw` supplies the task batch
/// for an iteration from that iteration's random stream; `on_step` sees
/// every history entry as it is recorded.
pub fn meta_train<L, D, C>(learner: &L, theta: Vec<f64>, config: &MetaConfig, mut draw: D, mut on_step: C) -> Result<MetaTrainState>
where
    L: Learner,
    L::Sample: Send,
    D: FnMut(usize, &mut Rng) -> Result<Vec<TaskData<L::Sample>>>,
    C: FnMut(&HistoryEntry),
{
    config.validate()?;
    if theta.len() != learner.n_params() {
        return Err(Error::Shape {
            op: "meta_train",
            lhs: (learner.n_params(), 1),
            rhs: (theta.len(), 1),
        });
    }
    let start = Instant::now();
    let mut state = MetaTrainState::new(theta, config);
    for it in 0..config.meta_iterations {
        let mut rng = stream(config.seed, &[META_STREAM, u64::MAX, it as u64]);
        let tasks = draw(it, &mut rng)?;
        let loss = meta_step(learner, &mut state, &tasks, config)?;
        let entry = HistoryEntry {
            iteration: it,
            mean_query_loss: loss,
            wall_time_s: start.elapsed().as_secs_f64(),
        };
        on_step(&entry);
        state.history.push(entry);
        state.iteration += 1;
    }
    Ok(state)
}

/// Writes the history CSV: `iteration,mean_query_loss,wall_time_s`.
pub fn history_csv(history: &[HistoryEntry]) -> String {
    let mut out = String::from("iteration,mean_query_loss,wall_time_s\n");
    for h in history {
        out.push_str(&format!("{},{:e},{:.3}\n", h.iteration, h.mean_query_loss, h.wall_time_s));
    }
    out
}
