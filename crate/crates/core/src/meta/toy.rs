//! Small learners with known behaviour, used to check the MAML machinery.

use std::f64::consts::PI;

use rand::Rng as _;

use super::{Learner, TaskData};
use crate::error::Result;
use crate::rng::Rng;
use crate::tensor::{Tape, Tensor};

/// One parameter `w` with task loss `(w − w*)²`; a sample is the task's `w*`.
#[derive(Clone, Copy, Debug, Default)]
pub struct Quadratic;

impl Quadratic {
    /// One task per optimum, with the optimum as its only support and query
    /// sample.
    pub fn tasks(optima: &[f64]) -> Vec<TaskData<f64>> {
        optima
            .iter()
            .enumerate()
            .map(|(i, &w)| TaskData {
                task_id: i,
                support: vec![w],
                query: vec![w],
            })
            .collect()
    }
}

impl Learner for Quadratic {
    type Sample = f64;

    fn n_params(&self) -> usize {
        1
    }

    fn loss_grad(&self, theta: &[f64], samples: &[&f64], _train: bool, _rng: &mut Rng) -> Result<(f64, Vec<f64>)> {
        let k = samples.len().max(1) as f64;
        let loss = samples.iter().map(|&&w| (theta[0] - w).powi(2)).sum::<f64>() / k;
        let grad = samples.iter().map(|&&w| 2.0 * (theta[0] - w)).sum::<f64>() / k;
        Ok((loss, vec![grad]))
    }

    fn loss(&self, theta: &[f64], samples: &[&f64]) -> Result<f64> {
        Ok(samples.iter().map(|&&w| (theta[0] - w).powi(2)).sum::<f64>() / samples.len().max(1) as f64)
    }
}

/// A point of a 1-D regression task.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

/// Regression tasks `y = c + A·sin(x + φ)` on `x ∈ [−2, 2]`, fitted by a
/// `1 → H → 1` sigmoid network on the autodiff tape with Smooth-L1 loss.
/// With `H = 4` the model has 13 parameters.
#[derive(Clone, Copy, Debug)]
pub struct SineMlp {
    hidden: usize,
}

impl SineMlp {
    pub fn new(hidden: usize) -> Self {
        Self { hidden }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(&self, seed: u64) -> Vec<f64> {
        let mut rng = crate::rng::stream(seed, &[crate::rng::INIT_STREAM]);
        let h = self.hidden;
        let limit = (6.0 / (1 + h) as f64).sqrt();
        let mut theta = vec![0.0; self.n_params()];
        for i in (0..h).chain(2 * h..3 * h) {
            theta[i] = rng.random_range(-limit..=limit);
        }
        theta
    }

    /// A random task as `(offset, amplitude, phase)`.
    pub fn random_task(rng: &mut Rng) -> (f64, f64, f64) {
        (rng.random_range(0.5..1.0), rng.random_range(0.3..0.8), rng.random_range(0.0..PI / 4.0))
    }

    pub fn points(task: (f64, f64, f64), n: usize, rng: &mut Rng) -> Vec<Point> {
        let (c, a, phi) = task;
        (0..n)
            .map(|_| {
                let x = rng.random_range(-2.0..2.0);
                Point { x, y: c + a * (x + phi).sin() }
            })
            .collect()
    }

    /// `count` random tasks with `k` support and `m` query points each.
    pub fn draw_tasks(&self, count: usize, k: usize, m: usize, rng: &mut Rng) -> Vec<TaskData<Point>> {
        (0..count)
            .map(|i| {
                let task = Self::random_task(rng);
                TaskData {
                    task_id: i,
                    support: Self::points(task, k, rng),
                    query: Self::points(task, m, rng),
                }
            })
            .collect()
    }

    fn forward_loss(&self, theta: &[f64], samples: &[&Point], grad: bool) -> Result<(f64, Vec<f64>)> {
        let h = self.hidden;
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::column(samples.iter().map(|p| p.x).collect()));
        let target = Tensor::column(samples.iter().map(|p| p.y).collect());
        let w1 = tape.leaf(Tensor::new(1, h, theta[..h].to_vec())?);
        let b1 = tape.leaf(Tensor::new(1, h, theta[h..2 * h].to_vec())?);
        let w2 = tape.leaf(Tensor::new(h, 1, theta[2 * h..3 * h].to_vec())?);
        let b2 = tape.leaf(Tensor::new(1, 1, theta[3 * h..].to_vec())?);
        let z = tape.matmul(x, w1)?;
        let z = tape.add_row(z, b1)?;
        let z = tape.sigmoid(z)?;
        let z = tape.matmul(z, w2)?;
        let out = tape.add_row(z, b2)?;
        let loss = tape.smooth_l1(out, &target, 1.0)?;
        let value = tape.value(loss).item()?;
        if !grad {
            return Ok((value, Vec::new()));
        }
        let g = tape.backward(loss)?;
        let mut flat = Vec::with_capacity(theta.len());
        for v in [w1, b1, w2, b2] {
            flat.extend_from_slice(g.wrt(v).data());
        }
        Ok((value, flat))
    }
}

impl Learner for SineMlp {
    type Sample = Point;

    fn n_params(&self) -> usize {
        3 * self.hidden + 1
    }

    fn loss_grad(&self, theta: &[f64], samples: &[&Point], _train: bool, _rng: &mut Rng) -> Result<(f64, Vec<f64>)> {
        self.forward_loss(theta, samples, true)
    }

    fn loss(&self, theta: &[f64], samples: &[&Point]) -> Result<f64> {
        Ok(self.forward_loss(theta, samples, false)?.0)
    }
}
