//! Fast correctness checks against independent references, run by the
//! `selftest` command.

use std::fmt;

use super::r_squared;
use crate::assign::{solve_ue, Method, SolverOptions};
use crate::error::Result;
use crate::gnn::{GatedGcn, GatedGcnParams, GnnHyper, GraphBatch};
use crate::meta::toy::Quadratic;
use crate::meta::{meta_train, MetaConfig};
use crate::oracle::{braess_instance, conservation_residual, path_equilibrium, two_link_instance};
use crate::rng::stream;
use crate::tensor::grad_check;

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed { "ok  " } else { "FAIL" };
        write!(f, "{verdict} {}: {}", self.name, self.detail)
    }
}

fn check(name: &'static str, outcome: Result<(bool, String)>) -> Check {
    match outcome {
        Ok((passed, detail)) => Check { name, passed, detail },
        Err(e) => Check {
            name,
            passed: false,
            detail: format!("error: {e}"),
        },
    }
}

fn tight() -> SolverOptions {
    SolverOptions {
        gap_tolerance: 1e-8,
        max_iterations: 5000,
        ..Default::default()
    }
}

fn two_link() -> Result<(bool, String)> {
    let (net, od) = two_link_instance();
    let mut worst: f64 = 0.0;
    for method in [Method::Fw, Method::Cfw, Method::Bcfw] {
        let r = solve_ue(&net, &[true, true], &od, &SolverOptions { method, ..tight() })?;
        worst = worst.max((r.flows[0] - 2.0).abs()).max((r.flows[1] - 1.0).abs());
    }
    Ok((worst <= 1e-3, format!("max |v − (2, 1)| = {worst:.2e}")))
}

fn braess() -> Result<(bool, String)> {
    let (net, od) = braess_instance();
    let present = vec![true; net.n_edges()];
    let reference = path_equilibrium(&net, &present, &od, 0.02, 200_000).link_flows;
    let r = solve_ue(&net, &present, &od, &tight())?;
    let rel = r
        .flows
        .iter()
        .zip(&reference)
        .map(|(a, b)| (a - b).abs() / b.abs().max(1e-9))
        .fold(0.0, f64::max);
    let residual = conservation_residual(&net, &od, &r.flows);
    Ok((
        rel <= 1e-3 && residual <= 1e-6 * od.total(),
        format!("relative deviation {rel:.2e}, conservation residual {residual:.2e}"),
    ))
}

fn gnn_gradient() -> Result<(bool, String)> {
    let hyper = GnnHyper {
        hidden: 3,
        layers: 2,
        dropout: 0.0,
        edge_update: true,
        ..Default::default()
    };
    let batch = GraphBatch::example();
    let model = GatedGcn::new(&hyper, batch.node_features.cols(), batch.edge_features.cols())?;
    let mut theta = GatedGcnParams::init(&hyper, batch.node_features.cols(), batch.edge_features.cols(), &mut stream(5, &[]))?.values;
    for (i, v) in theta.iter_mut().enumerate().filter(|(_, v)| **v == 0.0) {
        *v = 0.05 * ((i % 5) as f64 - 2.0);
    }
    let g = grad_check(|t| model.sample_loss_grad(t, &batch, false, &mut stream(0, &[])), &theta, 1e-6)?;
    Ok((g.max_relative_error < 1e-5, format!("max relative error {:.2e}", g.max_relative_error)))
}

fn mask_severing() -> Result<(bool, String)> {
    let hyper = GnnHyper {
        hidden: 4,
        layers: 2,
        dropout: 0.0,
        ..Default::default()
    };
    let batch = GraphBatch::example();
    let model = GatedGcn::new(&hyper, batch.node_features.cols(), batch.edge_features.cols())?;
    let theta = GatedGcnParams::init(&hyper, batch.node_features.cols(), batch.edge_features.cols(), &mut stream(6, &[]))?.values;
    let p = model.predict(&theta, &batch)?;
    let closed: Vec<f64> = (0..batch.n_edges()).filter(|&e| !batch.present[e]).map(|e| p[e]).collect();
    let exact = closed.iter().all(|v| v.to_bits() == 0.0f64.to_bits());
    Ok((exact, format!("{} closed edges predict exactly 0", closed.len())))
}

fn maml_quadratic() -> Result<(bool, String)> {
    let cfg = MetaConfig {
        meta_iterations: 200,
        task_batch: 2,
        ..Default::default()
    };
    let state = meta_train(&Quadratic, vec![1.0], &cfg, |_, _| Ok(Quadratic::tasks(&[-1.0, 1.0])), |_| {})?;
    let w = state.theta[0];
    Ok((w.abs() < 0.05, format!("meta-trained θ = {w:.2e}")))
}

fn metric() -> Result<(bool, String)> {
    let t = [0.0, 1.0, 2.0];
    let ok = r_squared(&t, &t)? == 1.0 && r_squared(&t, &[1.0; 3])? == 0.0 && r_squared(&t, &[0.0, 1.0, 1.0])? == 0.5;
    Ok((ok, "R² of identity, mean and [0, 1, 1] predictions".into()))
}

/// Runs every check; each finishes well under a second.
pub fn run() -> Vec<Check> {
    vec![
        check("two-link equilibrium", two_link()),
        check("braess vs path enumeration", braess()),
        check("gated GCN gradient", gnn_gradient()),
        check("closed-edge masking", mask_severing()),
        check("MAML quadratic family", maml_quadratic()),
        check("R² definition", metric()),
    ]
}

#[cfg(test)]
mod tests {
    #[test]
    fn all_checks_pass() {
        for c in super::run() {
            assert!(c.passed, "{c}");
        }
    }
}
