//! Reference computations used to check the solvers.
//!
//! Nothing here calls into [`crate::assign`]: path equilibria are found by
//! enumerating simple paths and running a projected extragradient iteration
//! on path flows, and costs are evaluated from their own BPR formula.

use crate::netio::{Edge, OdMatrix, RoadNetwork};

/// Every simple directed path from `origin` to `dest` over open edges, as
/// edge-id lists, in depth-first order.
pub fn enumerate_paths(network: &RoadNetwork, present: &[bool], origin: usize, dest: usize) -> Vec<Vec<usize>> {
    fn dfs(
        net: &RoadNetwork,
        present: &[bool],
        at: usize,
        dest: usize,
        visited: &mut Vec<bool>,
        path: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
    ) {
        if at == dest {
            out.push(path.clone());
            return;
        }
        for e in net.edges().iter().filter(|e| e.from_node == at && present[e.edge_id]) {
            if visited[e.to_node] {
                continue;
            }
            visited[e.to_node] = true;
            path.push(e.edge_id);
            dfs(net, present, e.to_node, dest, visited, path, out);
            path.pop();
            visited[e.to_node] = false;
        }
    }
    let mut visited = vec![false; network.n_nodes()];
    visited[origin] = true;
    let mut out = Vec::new();
    dfs(network, present, origin, dest, &mut visited, &mut Vec::new(), &mut out);
    out
}

fn link_cost(network: &RoadNetwork, e: usize, v: f64) -> f64 {
    let l = &network.edges()[e];
    l.free_flow_time + l.free_flow_time * l.bpr_b * (v / l.capacity).powf(l.bpr_power)
}

/// Euclidean projection of `v` onto `{f ≥ 0, Σf = total}`.
fn project_simplex(v: &[f64], total: f64) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (i, &ui) in u.iter().enumerate() {
        cumulative += ui;
        let t = (cumulative - total) / (i + 1) as f64;
        if ui - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

/// `(origin, dest, paths, path flows)` for one OD pair.
pub type OdPaths = (usize, usize, Vec<Vec<usize>>, Vec<f64>);

/// Path-based user equilibrium for every positive OD pair.
#[derive(Clone, Debug)]
pub struct PathEquilibrium {
    pub pairs: Vec<OdPaths>,
    pub link_flows: Vec<f64>,
    pub iterations: usize,
}

/// Solves UE by projected extragradient on path flows. Only practical for
/// toy networks, where all simple paths can be listed.
pub fn path_equilibrium(network: &RoadNetwork, present: &[bool], od: &OdMatrix, step: f64, max_iterations: usize) -> PathEquilibrium {
    let mut pairs = Vec::new();
    for o in 0..od.zones() {
        for d in 0..od.zones() {
            let demand = od.get(o, d);
            if demand > 0.0 {
                let paths = enumerate_paths(network, present, o, d);
                assert!(!paths.is_empty(), "no path for OD ({o}, {d})");
                let f = vec![demand / paths.len() as f64; paths.len()];
                pairs.push((o, d, paths, f));
            }
        }
    }
    let n_edges = network.n_edges();
    let load = |flows: &[Vec<f64>], pairs: &[OdPaths]| {
        let mut v = vec![0.0; n_edges];
        for ((_, _, paths, _), f) in pairs.iter().zip(flows) {
            for (p, &fp) in paths.iter().zip(f) {
                for &e in p {
                    v[e] += fp;
                }
            }
        }
        v
    };
    let path_costs = |v: &[f64], paths: &[Vec<usize>]| -> Vec<f64> {
        paths
            .iter()
            .map(|p| p.iter().map(|&e| link_cost(network, e, v[e])).sum())
            .collect()
    };

    let mut flows: Vec<Vec<f64>> = pairs.iter().map(|p| p.3.clone()).collect();
    let mut iterations = 0;
    for it in 0..max_iterations {
        iterations = it + 1;
        let v = load(&flows, &pairs);
        let half: Vec<Vec<f64>> = pairs
            .iter()
            .zip(&flows)
            .map(|((o, d, paths, _), f)| {
                let c = path_costs(&v, paths);
                let moved: Vec<f64> = f.iter().zip(&c).map(|(x, ci)| x - step * ci).collect();
                project_simplex(&moved, od.get(*o, *d))
            })
            .collect();
        let vh = load(&half, &pairs);
        let mut change = 0.0_f64;
        let next: Vec<Vec<f64>> = pairs
            .iter()
            .zip(&flows)
            .map(|((o, d, paths, _), f)| {
                let c = path_costs(&vh, paths);
                let moved: Vec<f64> = f.iter().zip(&c).map(|(x, ci)| x - step * ci).collect();
                let p = project_simplex(&moved, od.get(*o, *d));
                for (a, b) in p.iter().zip(f) {
                    change = change.max((a - b).abs());
                }
                p
            })
            .collect();
        flows = next;
        if change < 1e-13 {
            break;
        }
    }
    let link_flows = load(&flows, &pairs);
    for (pair, f) in pairs.iter_mut().zip(flows) {
        pair.3 = f;
    }
    PathEquilibrium {
        pairs,
        link_flows,
        iterations,
    }
}

/// Largest per-node violation of
/// `Σ_in v + Σ_d OD[n,d] = Σ_out v + Σ_o OD[o,n]`.
pub fn conservation_residual(network: &RoadNetwork, od: &OdMatrix, flows: &[f64]) -> f64 {
    let mut balance = vec![0.0; network.n_nodes()];
    for e in network.edges() {
        balance[e.to_node] += flows[e.edge_id];
        balance[e.from_node] -= flows[e.edge_id];
    }
    for o in 0..od.zones() {
        for d in 0..od.zones() {
            let q = od.get(o, d);
            balance[o] += q;
            balance[d] -= q;
        }
    }
    balance.iter().fold(0.0, |m, b| m.max(b.abs()))
}


/// Two parallel links with costs `1 + v` and `2 + v` carrying 3 trips from
/// node 0 to node 1. Equilibrium flows are `(2, 1)`.
pub fn two_link_instance() -> (RoadNetwork, OdMatrix) {
    let net = RoadNetwork::from_edges(
        2,
        2,
        vec![Edge::bpr(0, 1, 1.0, 1.0, 1.0, 1.0), Edge::bpr(0, 1, 1.0, 2.0, 0.5, 1.0)],
    )
    .expect("valid instance");
    let od = OdMatrix::new(0, 2, vec![0.0, 3.0, 0.0, 0.0]).expect("valid instance");
    (net, od)
}

/// Braess network: two congestible and two nearly constant links forming
/// routes 0→1→3 and 0→2→3, plus a cheap shortcut 1→2. 60 trips from node 0
/// to node 3.
pub fn braess_instance() -> (RoadNetwork, OdMatrix) {
    let net = RoadNetwork::from_edges(
        4,
        4,
        vec![
            Edge::bpr(0, 1, 10.0, 1.0, 1.0, 1.0),
            Edge::bpr(1, 3, 100.0, 5.0, 0.01, 1.0),
            Edge::bpr(0, 2, 100.0, 5.0, 0.01, 1.0),
            Edge::bpr(2, 3, 10.0, 1.0, 1.0, 1.0),
            Edge::bpr(1, 2, 10.0, 0.5, 0.1, 1.0),
        ],
    )
    .expect("valid instance");
    let mut demand = vec![0.0; 16];
    demand[3] = 60.0;
    let od = OdMatrix::new(0, 4, demand).expect("valid instance");
    (net, od)
}
