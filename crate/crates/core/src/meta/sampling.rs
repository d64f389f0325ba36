use rand::seq::index;

use super::{meta_train, HistoryEntry, MetaConfig, MetaTrainState, TaskData};
use crate::error::{Error, Result};
use crate::gnn::{GatedGcn, GatedGcnParams, GnnHyper, GraphBatch};
use crate::netio::Dataset;
use crate::rng::{stream, Rng, INIT_STREAM};

/// Identifiers of one task's support and query assignments.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TaskDraw {
    pub task_id: usize,
    pub support_ods: Vec<usize>,
    pub query_ods: Vec<usize>,
}

/// Draws `task_batch` training tasks without replacement and, per task,
/// `k_support + m_query` distinct training ODs split into support and query.
/// Held-out tasks and ODs are never drawn.
pub fn sample_task_batch(dataset: &Dataset, config: &MetaConfig, rng: &mut Rng) -> Result<Vec<TaskDraw>> {
    let tasks = &dataset.split.train_task_ids;
    let ods = dataset.train_od_ids();
    if tasks.len() < config.task_batch {
        return Err(Error::Config(format!(
            "task batch of {} but only {} training tasks",
            config.task_batch,
            tasks.len()
        )));
    }
    let per_task = config.k_support + config.m_query;
    if ods.len() < per_task {
        return Err(Error::Config(format!(
            "{} support + {} query samples per task but only {} training ODs",
            config.k_support,
            config.m_query,
            ods.len()
        )));
    }
    let picked = index::sample(rng, tasks.len(), config.task_batch).into_vec();
    Ok(picked
        .into_iter()
        .map(|ti| {
            let chosen: Vec<usize> = index::sample(rng, ods.len(), per_task).into_iter().map(|i| ods[i]).collect();
            TaskDraw {
                task_id: tasks[ti],
                support_ods: chosen[..config.k_support].to_vec(),
                query_ods: chosen[config.k_support..].to_vec(),
            }
        })
        .collect())
}

/// Model inputs for the drawn assignments.
pub fn materialize(dataset: &Dataset, draws: &[TaskDraw]) -> Result<Vec<TaskData<GraphBatch>>> {
    let batch = |t: usize, o: usize| {
        let s = dataset
            .sample(t, o)
            .ok_or_else(|| Error::Config(format!("dataset has no sample for task {t}, od {o}")))?;
        GraphBatch::from_sample(&dataset.network, s)
    };
    draws
        .iter()
        .map(|d| {
            Ok(TaskData {
                task_id: d.task_id,
                support: d.support_ods.iter().map(|&o| batch(d.task_id, o)).collect::<Result<_>>()?,
                query: d.query_ods.iter().map(|&o| batch(d.task_id, o)).collect::<Result<_>>()?,
            })
        })
        .collect()
}

/// Width of the node and edge feature rows stored in `dataset`.
pub fn feature_widths(dataset: &Dataset) -> Result<(usize, usize)> {
    let s = dataset
        .samples
        .values()
        .next()
        .ok_or_else(|| Error::Config("dataset has no samples".into()))?;
    Ok((s.node_features.cols(), s.edge_features.cols()))
}

/// Meta-trains a freshly initialized gated GCN on the training split of
/// `dataset` and returns the parameters with the lowest recorded query loss
/// together with the final training state.
pub fn meta_train_gnn<C>(
    dataset: &Dataset,
    hyper: &GnnHyper,
    config: &MetaConfig,
    on_step: C,
) -> Result<(GatedGcnParams, MetaTrainState)>
where
    C: FnMut(&HistoryEntry),
{
    let (node_in, edge_in) = feature_widths(dataset)?;
    let init = GatedGcnParams::init(hyper, node_in, edge_in, &mut stream(config.seed, &[INIT_STREAM]))?;
    let model = GatedGcn::for_params(&init)?;
    let draw = |_: usize, rng: &mut Rng| materialize(dataset, &sample_task_batch(dataset, config, rng)?);
    let state = meta_train(&model, init.values.clone(), config, draw, on_step)?;
    let best = GatedGcnParams {
        values: state.best_theta.clone(),
        ..init
    };
    Ok((best, state))
}
