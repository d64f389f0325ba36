//! Meta-test protocol, metrics, report files and the self-test suite.

mod report;
pub mod selftest;

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use report::{loss_svg, scatter_svg, summary_csv, write_report};

use crate::error::{Error, Result};
use crate::gnn::{GatedGcn, GatedGcnParams, GraphBatch};
use crate::meta::{inner_adapt, Learner, MetaConfig};
use crate::netio::Dataset;
use crate::rng::{stream, EVAL_STREAM};

/// Coefficient of determination `1 − SS_res / SS_tot`.
pub fn r_squared(truth: &[f64], pred: &[f64]) -> Result<f64> {
    if truth.len() != pred.len() || truth.is_empty() {
        return Err(Error::Shape {
            op: "r_squared",
            lhs: (truth.len(), 1),
            rhs: (pred.len(), 1),
        });
    }
    let mean = truth.iter().sum::<f64>() / truth.len() as f64;
    let ss_tot: f64 = truth.iter().map(|t| (t - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::UndefinedMetric("R² of a constant target".into()));
    }
    let ss_res: f64 = truth.iter().zip(pred).map(|(t, p)| (t - p).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskReport {
    pub task_id: usize,
    /// Pooled over every edge of every query OD, in vehicles / hour.
    pub r_squared: f64,
    pub r_squared_before: f64,
    pub n_points: usize,
    pub support_loss_before: f64,
    pub support_loss_after: f64,
    pub query_loss_before: f64,
    pub query_loss_after: f64,
    pub support_ods: Vec<usize>,
    pub query_ods: Vec<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetaTestReport {
    pub per_task: Vec<TaskReport>,
    /// Per task, `(true_flow, predicted_flow)` in vehicles / hour.
    pub scatter: Vec<Vec<(f64, f64)>>,
}

/// Held-out ODs of a task split into support and query.
pub fn test_support_query(dataset: &Dataset, task_id: usize, k: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let ods = &dataset.split.test_od_ids;
    if ods.len() <= k {
        return Err(Error::Config(format!(
            "{} held-out ODs leave no query set after {k} support samples",
            ods.len()
        )));
    }
    let mut rng = stream(seed, &[EVAL_STREAM, task_id as u64]);
    let mut picked = index::sample(&mut rng, ods.len(), k).into_vec();
    picked.sort_unstable();
    let support: Vec<usize> = picked.iter().map(|&i| ods[i]).collect();
    let query = ods.iter().copied().filter(|o| !support.contains(o)).collect();
    Ok((support, query))
}

/// Adapts `params` to every held-out task with one round of `inner_steps`
/// gradient steps on `k_support` held-out ODs, then scores the remaining
/// held-out ODs.
pub fn meta_test(params: &GatedGcnParams, dataset: &Dataset, config: &MetaConfig) -> Result<MetaTestReport> {
    config.validate()?;
    if dataset.split.test_task_ids.is_empty() || dataset.split.test_od_ids.is_empty() {
        return Err(Error::Config("dataset has no held-out test split".into()));
    }
    let model = GatedGcn::for_params(params)?;
    let scale = dataset.normalization.flow_scale;
    let results: Vec<(TaskReport, Vec<(f64, f64)>)> = dataset
        .split
        .test_task_ids
        .par_iter()
        .map(|&task_id| {
            let (support_ods, query_ods) = test_support_query(dataset, task_id, config.k_support, config.seed)?;
            let batch = |o: usize| {
                let s = dataset
                    .sample(task_id, o)
                    .ok_or_else(|| Error::Config(format!("dataset has no sample for task {task_id}, od {o}")))?;
                GraphBatch::from_sample(&dataset.network, s)
            };
            let support: Vec<GraphBatch> = support_ods.iter().map(|&o| batch(o)).collect::<Result<_>>()?;
            let query: Vec<GraphBatch> = query_ods.iter().map(|&o| batch(o)).collect::<Result<_>>()?;
            let s_refs: Vec<&GraphBatch> = support.iter().collect();
            let q_refs: Vec<&GraphBatch> = query.iter().collect();

            let theta = &params.values;
            let mut rng = stream(config.seed, &[EVAL_STREAM, task_id as u64, 1]);
            let adapted = inner_adapt(&model, theta, &s_refs, config.alpha, config.inner_steps, config.clip_norm, &mut rng)?;

            let mut truth = Vec::new();
            let mut before = Vec::new();
            let mut after = Vec::new();
            for q in &query {
                truth.extend(q.targets.data().iter().map(|t| t * scale));
                before.extend(model.predict(theta, q)?.into_iter().map(|p| p * scale));
                after.extend(model.predict(&adapted, q)?.into_iter().map(|p| p * scale));
            }
            let report = TaskReport {
                task_id,
                r_squared: r_squared(&truth, &after)?,
                r_squared_before: r_squared(&truth, &before)?,
                n_points: truth.len(),
                support_loss_before: model.loss(theta, &s_refs)?,
                support_loss_after: model.loss(&adapted, &s_refs)?,
                query_loss_before: model.loss(theta, &q_refs)?,
                query_loss_after: model.loss(&adapted, &q_refs)?,
                support_ods,
                query_ods,
            };
            Ok((report, truth.into_iter().zip(after).collect()))
        })
        .collect::<Result<_>>()?;
    let (per_task, scatter) = results.into_iter().unzip();
    Ok(MetaTestReport { per_task, scatter })
}
