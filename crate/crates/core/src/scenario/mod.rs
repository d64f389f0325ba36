//! Corpus generation: closure tasks, perturbed OD matrices, ground-truth
//! assignments and feature tensors.

mod closure;
mod demand;
mod features;
mod synthetic;

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use closure::{closure_count_range, sample_closure};
pub use demand::{OdPerturbation, OdPerturber};
pub use features::{build_edge_features, build_node_features, node_feature_width, DegreeMode};
pub use synthetic::{synthetic_network, SyntheticConfig};

use crate::assign::{solve_ue, SolverOptions};
use crate::error::{Error, Result};
use crate::netio::{ClosureTask, Dataset, Normalization, OdMatrix, RoadNetwork, Sample, Split};
use crate::rng::{stream, OD_STREAM, SPLIT_STREAM, TASK_STREAM};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationConfig {
    pub n_tasks: usize,
    pub n_ods: usize,
    /// Closed share of edges per task, `[low, high]`.
    pub closure_fraction_range: (f64, f64),
    pub od_perturbation: OdPerturbation,
    pub seed: u64,
    pub n_test_tasks: usize,
    pub n_test_ods: usize,
    /// Explicit held-out task ids; drawn from the seed when absent.
    pub test_task_ids: Option<Vec<usize>>,
    /// Explicit held-out OD ids; drawn from the seed when absent.
    pub test_od_ids: Option<Vec<usize>>,
    pub degree_mode: DegreeMode,
    /// Redraws allowed per task before a closure range is deemed infeasible.
    pub max_closure_retries: usize,
    pub solver: SolverOptions,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            n_tasks: 336,
            n_ods: 74,
            closure_fraction_range: (0.05, 0.30),
            od_perturbation: OdPerturbation::default(),
            seed: 0,
            n_test_tasks: 3,
            n_test_ods: 25,
            test_task_ids: None,
            test_od_ids: None,
            degree_mode: DegreeMode::Open,
            max_closure_retries: 1000,
            solver: SolverOptions::default(),
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let (low, high) = self.closure_fraction_range;
        if !(0.0 <= low && low <= high && high < 1.0) {
            return bad(format!("closure fraction range [{low}, {high}] must satisfy 0 ≤ low ≤ high < 1"));
        }
        if self.n_tasks == 0 || self.n_ods == 0 {
            return bad("n_tasks and n_ods must be positive".into());
        }
        if self.n_test_tasks >= self.n_tasks {
            return bad(format!("n_test_tasks {} must be < n_tasks {}", self.n_test_tasks, self.n_tasks));
        }
        if self.n_test_ods >= self.n_ods {
            return bad(format!("n_test_ods {} must be < n_ods {}", self.n_test_ods, self.n_ods));
        }
        for (name, ids, count, limit) in [
            ("test_task_ids", &self.test_task_ids, self.n_test_tasks, self.n_tasks),
            ("test_od_ids", &self.test_od_ids, self.n_test_ods, self.n_ods),
        ] {
            if let Some(ids) = ids {
                let mut sorted = ids.clone();
                sorted.sort_unstable();
                sorted.dedup();
                if sorted.len() != count || sorted.iter().any(|&i| i >= limit) {
                    return bad(format!("{name} must be {count} distinct ids below {limit}, got {ids:?}"));
                }
            }
        }
        self.od_perturbation.validate()?;
        self.solver.validate()
    }

    fn held_out(&self, explicit: &Option<Vec<usize>>, count: usize, total: usize, key: u64) -> Vec<usize> {
        let mut ids = match explicit {
            Some(ids) => ids.clone(),
            None => index::sample(&mut stream(self.seed, &[SPLIT_STREAM, key]), total, count).into_vec(),
        };
        ids.sort_unstable();
        ids
    }

    /// Held-out task and OD ids.
    pub fn split(&self) -> Split {
        let test_task_ids = self.held_out(&self.test_task_ids, self.n_test_tasks, self.n_tasks, 0);
        let test_od_ids = self.held_out(&self.test_od_ids, self.n_test_ods, self.n_ods, 1);
        let train_task_ids = (0..self.n_tasks).filter(|t| !test_task_ids.contains(t)).collect();
        Split {
            train_task_ids,
            test_task_ids,
            test_od_ids,
        }
    }
}

/// Solves one (task, OD) assignment and packages features and targets.
pub fn build_sample(
    network: &RoadNetwork,
    task: &ClosureTask,
    od: &OdMatrix,
    norm: &Normalization,
    degree_mode: DegreeMode,
    solver: &SolverOptions,
) -> Result<Sample> {
    let result = solve_ue(network, &task.present, od, solver).map_err(|e| match e {
        Error::ScenarioInfeasible { demand, .. } => Error::ScenarioInfeasible {
            demand,
            task_id: Some(task.task_id),
            od_id: Some(od.od_id()),
        },
        other => other,
    })?;
    let target_flows: Vec<f64> = result
        .flows
        .iter()
        .zip(&task.present)
        .map(|(&v, &open)| if open { v } else { 0.0 })
        .collect();
    Ok(Sample {
        task_id: task.task_id,
        od_id: od.od_id(),
        node_features: build_node_features(network, &task.present, od, norm, degree_mode),
        edge_features: build_edge_features(network, &task.present, norm),
        target_normalized: target_flows.iter().map(|v| v / norm.flow_scale).collect(),
        target_flows,
        normalization: *norm,
        relative_gap: result.relative_gap,
    })
}

/// Progress callback receiving `(finished, total)` assignment counts.
pub type Progress<'a> = &'a (dyn Fn(usize, usize) + Sync);

/// Generates the full corpus: `n_tasks` closure patterns times `n_ods` OD
/// matrices, each solved to equilibrium.
///
/// OD 0 is the base matrix itself; the others are perturbations of it. Every
/// task and OD draws from its own random stream, so the result does not
/// depend on the number of worker threads.
pub fn generate_dataset(
    network: &RoadNetwork,
    base_od: &OdMatrix,
    config: &GenerationConfig,
    progress: Option<Progress<'_>>,
) -> Result<Dataset> {
    config.validate()?;
    if base_od.zones() != network.n_zones() {
        return Err(Error::Shape {
            op: "generate_dataset",
            lhs: (network.n_zones(), network.n_zones()),
            rhs: (base_od.zones(), base_od.zones()),
        });
    }
    let norm = Normalization::from_base(network, base_od);

    let tasks = (0..config.n_tasks)
        .into_par_iter()
        .map(|t| {
            sample_closure(
                t,
                network,
                base_od,
                config.closure_fraction_range,
                config.max_closure_retries,
                &mut stream(config.seed, &[TASK_STREAM, t as u64]),
            )
        })
        .collect::<Result<Vec<_>>>()?;

    let zone_coords = network.coordinates().map(|xy| xy[..network.n_zones()].to_vec());
    let perturber = OdPerturber::new(&config.od_perturbation, network.n_zones(), zone_coords.as_deref())?;
    let od_matrices = (0..config.n_ods)
        .into_par_iter()
        .map(|o| {
            if o == 0 {
                Ok(base_od.clone().with_id(0))
            } else {
                perturber.perturb(base_od, o, &mut stream(config.seed, &[OD_STREAM, o as u64]))
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let total = config.n_tasks * config.n_ods;
    let done = AtomicUsize::new(0);
    let results: Vec<Result<Sample>> = (0..total)
        .into_par_iter()
        .map(|k| {
            let (t, o) = (k / config.n_ods, k % config.n_ods);
            let sample = build_sample(network, &tasks[t], &od_matrices[o], &norm, config.degree_mode, &config.solver);
            let finished = done.fetch_add(1, Ordering::Relaxed) + 1;
            if let Some(report) = progress {
                report(finished, total);
            }
            sample
        })
        .collect();
    let mut samples = BTreeMap::new();
    for sample in results {
        let s = sample?;
        samples.insert((s.task_id, s.od_id), s);
    }
    Dataset::new(network.clone(), tasks, od_matrices, samples, config.split(), norm)
}
