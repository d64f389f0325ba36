use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::assign::all_or_nothing;
use crate::error::{Error, Result};
use crate::netio::{Edge, Node, OdMatrix, RoadNetwork};
use crate::rng::stream;

const SYNTH_STREAM: u64 = 0x7379_6e74;

/// Random planar-ish road network with a gravity demand model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub n_nodes: usize,
    /// Directed edge count, between `2(n−1)` and `n(n−1)`.
    pub n_edges: usize,
    pub seed: u64,
    /// Node spacing of the underlying grid, in km.
    pub spacing: f64,
    /// Mean volume/capacity ratio over loaded edges of the free-flow
    /// all-or-nothing assignment; sets the total demand.
    pub target_vc: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_nodes: 20,
            n_edges: 60,
            seed: 0,
            spacing: 2.0,
            target_vc: 0.9,
        }
    }
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Builds a strongly connected network and a base OD matrix. Every node is a
/// zone. Roads are two-way except possibly the last one when `n_edges` is
/// odd; a minimum spanning tree over jittered grid positions guarantees
/// connectivity and the shortest remaining node pairs fill up the rest.
pub fn synthetic_network(config: &SyntheticConfig) -> Result<(RoadNetwork, OdMatrix)> {
    let n = config.n_nodes;
    if n < 2 || config.n_edges < 2 * (n - 1) || config.n_edges > n * (n - 1) {
        return Err(Error::Config(format!(
            "cannot build a connected network with {n} nodes and {} directed edges",
            config.n_edges
        )));
    }
    if !(config.spacing > 0.0 && config.target_vc > 0.0) {
        return Err(Error::Config("spacing and target_vc must be positive".into()));
    }
    let mut rng = stream(config.seed, &[SYNTH_STREAM]);
    let cols = (n as f64).sqrt().ceil() as usize;
    let jitter = 0.2 * config.spacing;
    let xy: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let (r, c) = (i / cols, i % cols);
            (
                c as f64 * config.spacing + rng.random_range(-jitter..jitter),
                r as f64 * config.spacing + rng.random_range(-jitter..jitter),
            )
        })
        .collect();
    let dist = |a: usize, b: usize| (xy[a].0 - xy[b].0).hypot(xy[a].1 - xy[b].1);

    let mut pairs: Vec<(usize, usize)> = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
    pairs.sort_by(|p, q| dist(p.0, p.1).total_cmp(&dist(q.0, q.1)).then(p.cmp(q)));
    let mut parent: Vec<usize> = (0..n).collect();
    let mut chosen = Vec::new();
    let mut rest = Vec::new();
    for &(a, b) in &pairs {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra] = rb;
            chosen.push((a, b));
        } else {
            rest.push((a, b));
        }
    }
    let n_roads = config.n_edges.div_ceil(2);
    chosen.extend(rest.into_iter().take(n_roads - chosen.len()));

    let mut edges = Vec::with_capacity(config.n_edges);
    for &(a, b) in &chosen {
        let capacity = [600.0, 1200.0, 1800.0][rng.random_range(0..3)];
        let speed = [50.0, 80.0][rng.random_range(0..2)];
        let length = dist(a, b);
        let mut road = Edge::bpr(a, b, capacity, length / speed * 60.0, 0.15, 4.0);
        road.length = length;
        road.speed = speed;
        for (from, to) in [(a, b), (b, a)] {
            if edges.len() < config.n_edges {
                edges.push(Edge {
                    from_node: from,
                    to_node: to,
                    ..road.clone()
                });
            }
        }
    }
    let nodes = (0..n)
        .map(|i| Node {
            node_id: i,
            original_id: i as u64 + 1,
            zone_id: Some(i),
            x: Some(xy[i].0),
            y: Some(xy[i].1),
        })
        .collect();
    let network = RoadNetwork::new(nodes, edges, n, 0)?;

    let population: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..1.5)).collect();
    let raw: Vec<f64> = (0..n * n)
        .map(|k| {
            let (o, d) = (k / n, k % n);
            if o == d {
                0.0
            } else {
                population[o] * population[d] * (-dist(o, d) / (2.0 * config.spacing)).exp()
            }
        })
        .collect();
    let unit = OdMatrix::new(0, n, raw.clone())?;
    let free_flow: Vec<f64> = network.edges().iter().map(|e| e.free_flow_time).collect();
    let aon = all_or_nothing(&network, &vec![true; network.n_edges()], &free_flow, &unit);
    let ratios: Vec<f64> = aon
        .flows
        .iter()
        .zip(network.edges())
        .filter(|(v, _)| **v > 0.0)
        .map(|(v, e)| v / e.capacity)
        .collect();
    let mean_vc = ratios.iter().sum::<f64>() / ratios.len().max(1) as f64;
    let scale = config.target_vc / mean_vc;
    let od = OdMatrix::new(0, n, raw.into_iter().map(|q| q * scale).collect())?;
    Ok((network, od))
}
