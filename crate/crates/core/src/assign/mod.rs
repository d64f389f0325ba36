//! Static user-equilibrium traffic assignment.
//!
//! [`solve_ue`] minimises the Beckmann objective with the Frank-Wolfe
//! family: plain FW, conjugate FW and bi-conjugate FW. The linearised
//! subproblem is an all-or-nothing loading on shortest paths.

mod paths;
mod solver;

use std::fmt;
use std::str::FromStr;

pub use paths::{all_or_nothing, shortest_path_tree, AllOrNothing, ShortestPathTree};
pub use solver::solve_ue;

use crate::error::{Error, Result};
use crate::netio::Edge;

/// BPR travel time `t₀ · (1 + b · (v / c)^p)` in minutes.
pub fn bpr_cost(free_flow_time: f64, capacity: f64, bpr_b: f64, bpr_power: f64, flow: f64) -> f64 {
    free_flow_time * (1.0 + bpr_b * (flow / capacity).powf(bpr_power))
}

pub(crate) fn edge_cost(e: &Edge, flow: f64) -> f64 {
    bpr_cost(e.free_flow_time, e.capacity, e.bpr_b, e.bpr_power, flow)
}

/// `∫₀^v t(s) ds` for a BPR edge.
pub(crate) fn edge_integral(e: &Edge, flow: f64) -> f64 {
    let p1 = e.bpr_power + 1.0;
    e.free_flow_time * flow + e.free_flow_time * e.bpr_b * e.capacity / p1 * (flow / e.capacity).powf(p1)
}

/// `dt/dv` for a BPR edge; zero where it is not finite.
pub(crate) fn edge_derivative(e: &Edge, flow: f64) -> f64 {
    if e.bpr_power == 0.0 || e.bpr_b == 0.0 {
        return 0.0;
    }
    let d = e.free_flow_time * e.bpr_b * e.bpr_power / e.capacity * (flow / e.capacity).powf(e.bpr_power - 1.0);
    if d.is_finite() {
        d
    } else {
        0.0
    }
}

/// Search-direction rule.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Frank-Wolfe: move toward the all-or-nothing point.
    Fw,
    /// Conjugate Frank-Wolfe: target conjugate to the previous one.
    Cfw,
    /// Bi-conjugate Frank-Wolfe: target conjugate to the two previous ones.
    #[default]
    #[serde(alias = "bfw")]
    Bcfw,
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fw" => Ok(Method::Fw),
            "cfw" => Ok(Method::Cfw),
            "bcfw" | "bfw" => Ok(Method::Bcfw),
            other => Err(Error::Config(format!("unknown assignment method {other:?} (fw, cfw, bfw, bcfw)"))),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Fw => "fw",
            Method::Cfw => "cfw",
            Method::Bcfw => "bcfw",
        })
    }
}

/// What to do when positive demand cannot reach its destination.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Unreachable {
    #[default]
    Error,
    /// Log a warning, drop the stranded demand and carry on.
    Warn,
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    pub max_iterations: usize,
    pub gap_tolerance: f64,
    pub method: Method,
    /// Final bracket width of the golden-section line search.
    pub line_search_tolerance: f64,
    pub unreachable: Unreachable,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            gap_tolerance: 1e-4,
            method: Method::Bcfw,
            line_search_tolerance: 1e-8,
            unreachable: Unreachable::Error,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if self.gap_tolerance.is_nan() || self.gap_tolerance <= 0.0 {
            return Err(Error::Config(format!("gap tolerance {} must be > 0", self.gap_tolerance)));
        }
        if self.max_iterations < 1 {
            return Err(Error::Config("max_iterations must be ≥ 1".into()));
        }
        if self.line_search_tolerance.is_nan() || self.line_search_tolerance <= 0.0 {
            return Err(Error::Config("line search tolerance must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AssignmentResult {
    /// vehicles / hour per edge; zero on closed edges
    pub flows: Vec<f64>,
    /// travel time per edge at `flows`
    pub costs: Vec<f64>,
    pub relative_gap: f64,
    /// Number of line-search updates performed.
    pub iterations: usize,
    pub converged: bool,
    /// Beckmann objective at `flows`.
    pub objective: f64,
    /// Objective before the first update and after each one.
    pub objective_history: Vec<f64>,
    /// Demand dropped because it had no path (only with [`Unreachable::Warn`]).
    pub unreachable_demand: f64,
}
