//! Road networks, OD matrices and the generated corpus, plus their file
//! formats.

mod format;
mod tntp;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

pub use format::{decode_dataset, encode_dataset, read_dataset, write_dataset, DATASET_MAGIC, DATASET_VERSION};
pub use tntp::{
    parse_network, parse_nodes, parse_trips, parse_trips_detailed, write_network_tntp, write_nodes_tntp,
    write_trips_tntp,
    TripsFile,
};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct Node {
    pub node_id: usize,
    /// Node number as it appeared in the source file.
    pub original_id: u64,
    pub zone_id: Option<usize>,
    pub x: Option<f64>,
    pub y: Option<f64>,
}

/// A directed link with a BPR volume-delay function.
#[derive(Clone, Debug, PartialEq)]
pub struct Edge {
    pub edge_id: usize,
    pub from_node: usize,
    pub to_node: usize,
    /// vehicles / hour
    pub capacity: f64,
    /// minutes
    pub free_flow_time: f64,
    pub bpr_b: f64,
    pub bpr_power: f64,
    pub length: f64,
    pub speed: f64,
    pub toll: f64,
    pub link_type: i64,
}

impl Edge {
    /// Edge with the given BPR parameters; remaining attributes get neutral
    /// values (`length = free_flow_time`, no toll, link type 1).
    pub fn bpr(from_node: usize, to_node: usize, capacity: f64, free_flow_time: f64, bpr_b: f64, bpr_power: f64) -> Self {
        Self {
            edge_id: 0,
            from_node,
            to_node,
            capacity,
            free_flow_time,
            bpr_b,
            bpr_power,
            length: free_flow_time,
            speed: 0.0,
            toll: 0.0,
            link_type: 1,
        }
    }
}

/// Directed road graph. Nodes `0..n_zones` are the zones (centroids).
#[derive(Clone, Debug, PartialEq)]
pub struct RoadNetwork {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    n_zones: usize,
    first_thru_node: usize,
    from_index: Arc<[usize]>,
    to_index: Arc<[usize]>,
    out_offsets: Vec<usize>,
    out_edges: Vec<usize>,
}

impl RoadNetwork {
    /// Validates and assembles a network. Node and edge ids are reassigned
    /// to their positions.
    ///
    /// `first_thru_node` is the dense index of the first node that paths may
    /// pass through; zone nodes below it can only start or end a path.
    pub fn new(mut nodes: Vec<Node>, mut edges: Vec<Edge>, n_zones: usize, first_thru_node: usize) -> Result<Self> {
        let n = nodes.len();
        if n_zones > n {
            return Err(Error::InvalidNetwork(format!("{n_zones} zones but only {n} nodes")));
        }
        for (i, node) in nodes.iter_mut().enumerate() {
            node.node_id = i;
            node.zone_id = (i < n_zones).then_some(i);
        }
        for (i, e) in edges.iter_mut().enumerate() {
            e.edge_id = i;
            if e.from_node >= n || e.to_node >= n {
                return Err(Error::InvalidNetwork(format!(
                    "edge {i} references node outside 0..{n}: {} -> {}",
                    e.from_node, e.to_node
                )));
            }
            if e.from_node == e.to_node {
                return Err(Error::InvalidNetwork(format!("edge {i} is a self-loop on node {}", e.from_node)));
            }
            if !(e.capacity > 0.0 && e.capacity.is_finite()) {
                return Err(Error::InvalidNetwork(format!("edge {i} has capacity {}", e.capacity)));
            }
            if !(e.free_flow_time > 0.0 && e.free_flow_time.is_finite()) {
                return Err(Error::InvalidNetwork(format!("edge {i} has free-flow time {}", e.free_flow_time)));
            }
            if !(e.bpr_b >= 0.0 && e.bpr_power >= 0.0 && e.bpr_b.is_finite() && e.bpr_power.is_finite()) {
                return Err(Error::InvalidNetwork(format!(
                    "edge {i} has BPR parameters b={} power={}",
                    e.bpr_b, e.bpr_power
                )));
            }
        }
        let from_index: Arc<[usize]> = edges.iter().map(|e| e.from_node).collect();
        let to_index: Arc<[usize]> = edges.iter().map(|e| e.to_node).collect();
        let mut out_offsets = vec![0usize; n + 1];
        for e in &edges {
            out_offsets[e.from_node + 1] += 1;
        }
        for i in 0..n {
            out_offsets[i + 1] += out_offsets[i];
        }
        let mut fill = out_offsets.clone();
        let mut out_edges = vec![0usize; edges.len()];
        for e in &edges {
            out_edges[fill[e.from_node]] = e.edge_id;
            fill[e.from_node] += 1;
        }
        Ok(Self {
            nodes,
            edges,
            n_zones,
            first_thru_node: first_thru_node.min(n),
            from_index,
            to_index,
            out_offsets,
            out_edges,
        })
    }

    /// Network on `n_nodes` anonymous nodes (original ids 1-based), all of
    /// them through nodes.
    pub fn from_edges(n_nodes: usize, n_zones: usize, edges: Vec<Edge>) -> Result<Self> {
        let nodes = (0..n_nodes)
            .map(|i| Node {
                node_id: i,
                original_id: i as u64 + 1,
                zone_id: None,
                x: None,
                y: None,
            })
            .collect();
        Self::new(nodes, edges, n_zones, 0)
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn n_zones(&self) -> usize {
        self.n_zones
    }

    pub fn first_thru_node(&self) -> usize {
        self.first_thru_node
    }

    /// Whether shortest paths may continue out of `node` when it is not the
    /// path origin.
    pub fn is_through(&self, node: usize) -> bool {
        node >= self.first_thru_node
    }

    /// Ids of the edges leaving `node`, ascending.
    pub fn outgoing(&self, node: usize) -> &[usize] {
        &self.out_edges[self.out_offsets[node]..self.out_offsets[node + 1]]
    }

    pub fn from_index(&self) -> Arc<[usize]> {
        self.from_index.clone()
    }

    pub fn to_index(&self) -> Arc<[usize]> {
        self.to_index.clone()
    }

    pub fn max_capacity(&self) -> f64 {
        self.edges.iter().map(|e| e.capacity).fold(0.0, f64::max)
    }

    /// Largest in+out degree over the full (unmasked) graph.
    pub fn max_total_degree(&self) -> usize {
        let mut deg = vec![0usize; self.n_nodes()];
        for e in &self.edges {
            deg[e.from_node] += 1;
            deg[e.to_node] += 1;
        }
        deg.into_iter().max().unwrap_or(0)
    }

    /// Node coordinates when every node has them.
    pub fn coordinates(&self) -> Option<Vec<(f64, f64)>> {
        self.nodes.iter().map(|n| Some((n.x?, n.y?))).collect()
    }

    pub fn set_coordinates(&mut self, coords: &[(f64, f64)]) -> Result<()> {
        if coords.len() != self.nodes.len() {
            return Err(Error::InvalidNetwork(format!(
                "{} coordinates for {} nodes",
                coords.len(),
                self.nodes.len()
            )));
        }
        for (n, &(x, y)) in self.nodes.iter_mut().zip(coords) {
            n.x = Some(x);
            n.y = Some(y);
        }
        Ok(())
    }

    /// Dense id of the node with the given original number.
    pub fn node_by_original(&self, original: u64) -> Option<usize> {
        self.nodes.iter().position(|n| n.original_id == original)
    }
}

/// Zone-to-zone demand in trips per hour, row-major by origin.
#[derive(Clone, Debug, PartialEq)]
pub struct OdMatrix {
    od_id: usize,
    zones: usize,
    demand: Vec<f64>,
}

impl OdMatrix {
    pub fn new(od_id: usize, zones: usize, demand: Vec<f64>) -> Result<Self> {
        if demand.len() != zones * zones {
            return Err(Error::Shape {
                op: "od_matrix",
                lhs: (zones, zones),
                rhs: (demand.len(), 1),
            });
        }
        for (i, &v) in demand.iter().enumerate() {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Validation {
                    row: i / zones.max(1),
                    msg: format!("demand to zone {} is {v}", i % zones.max(1)),
                });
            }
        }
        if let Some(z) = (0..zones).find(|&z| demand[z * zones + z] != 0.0) {
            return Err(Error::Validation {
                row: z,
                msg: "diagonal demand must be zero".into(),
            });
        }
        Ok(Self { od_id, zones, demand })
    }

    pub fn zeros(od_id: usize, zones: usize) -> Self {
        Self {
            od_id,
            zones,
            demand: vec![0.0; zones * zones],
        }
    }

    pub fn od_id(&self) -> usize {
        self.od_id
    }

    pub fn with_id(mut self, od_id: usize) -> Self {
        self.od_id = od_id;
        self
    }

    pub fn zones(&self) -> usize {
        self.zones
    }

    pub fn get(&self, origin: usize, dest: usize) -> f64 {
        self.demand[origin * self.zones + dest]
    }

    pub fn row(&self, origin: usize) -> &[f64] {
        &self.demand[origin * self.zones..(origin + 1) * self.zones]
    }

    pub fn values(&self) -> &[f64] {
        &self.demand
    }

    pub fn total(&self) -> f64 {
        self.demand.iter().sum()
    }

    pub fn max_entry(&self) -> f64 {
        self.demand.iter().copied().fold(0.0, f64::max)
    }
}

/// A closure pattern over the base network; one meta-learning task.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClosureTask {
    pub task_id: usize,
    /// `true` = edge open.
    pub present: Vec<bool>,
}

impl ClosureTask {
    pub fn all_open(task_id: usize, n_edges: usize) -> Self {
        Self {
            task_id,
            present: vec![true; n_edges],
        }
    }

    pub fn closed_count(&self) -> usize {
        self.present.iter().filter(|&&p| !p).count()
    }

    pub fn closed_fraction(&self) -> f64 {
        if self.present.is_empty() {
            0.0
        } else {
            self.closed_count() as f64 / self.present.len() as f64
        }
    }

    pub fn mask(&self) -> Arc<[bool]> {
        self.present.iter().copied().collect()
    }
}

/// Scale constants fixed at generation time and stored with the corpus.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Normalization {
    /// vehicles / hour; max capacity of the base network
    pub flow_scale: f64,
    /// trips / hour; max entry of the base OD matrix
    pub demand_scale: f64,
    /// vehicles / hour; max capacity of the base network
    pub capacity_scale: f64,
    /// max in+out degree of the base network
    pub degree_scale: f64,
}

impl Normalization {
    pub fn from_base(network: &RoadNetwork, base_od: &OdMatrix) -> Self {
        let cap = network.max_capacity();
        let pos = |v: f64| if v > 0.0 { v } else { 1.0 };
        Self {
            flow_scale: pos(cap),
            demand_scale: pos(base_od.max_entry()),
            capacity_scale: pos(cap),
            degree_scale: pos(network.max_total_degree() as f64),
        }
    }
}

/// One (task, OD) assignment with its model inputs and targets.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub task_id: usize,
    pub od_id: usize,
    /// `|N| × (3 + Z)`: in/out/total degree, then the node's OD row.
    pub node_features: Tensor,
    /// `|E| × 2`: capacity, present flag.
    pub edge_features: Tensor,
    /// vehicles / hour
    pub target_flows: Vec<f64>,
    /// `target_flows / flow_scale`
    pub target_normalized: Vec<f64>,
    pub normalization: Normalization,
    /// relative gap reached by the ground-truth solve
    pub relative_gap: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Split {
    pub train_task_ids: Vec<usize>,
    pub test_task_ids: Vec<usize>,
    pub test_od_ids: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub network: RoadNetwork,
    pub tasks: Vec<ClosureTask>,
    pub od_matrices: Vec<OdMatrix>,
    pub samples: BTreeMap<(usize, usize), Sample>,
    pub split: Split,
    pub normalization: Normalization,
}

impl Dataset {
    /// Assembles a dataset after checking its cross-references.
    pub fn new(
        network: RoadNetwork,
        tasks: Vec<ClosureTask>,
        od_matrices: Vec<OdMatrix>,
        samples: BTreeMap<(usize, usize), Sample>,
        split: Split,
        normalization: Normalization,
    ) -> Result<Self> {
        let ds = Self {
            network,
            tasks,
            od_matrices,
            samples,
            split,
            normalization,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Integrity(m));
        for (i, t) in self.tasks.iter().enumerate() {
            if t.task_id != i || t.present.len() != self.network.n_edges() {
                return bad(format!("task {i} has id {} and {} flags", t.task_id, t.present.len()));
            }
        }
        for (i, od) in self.od_matrices.iter().enumerate() {
            if od.od_id() != i || od.zones() != self.network.n_zones() {
                return bad(format!("od {i} has id {} and {} zones", od.od_id(), od.zones()));
            }
        }
        let train: BTreeSet<_> = self.split.train_task_ids.iter().collect();
        if let Some(t) = self.split.test_task_ids.iter().find(|t| train.contains(t)) {
            return bad(format!("task {t} is in both the train and test split"));
        }
        let ids = self
            .split
            .train_task_ids
            .iter()
            .chain(&self.split.test_task_ids)
            .all(|&t| t < self.tasks.len());
        if !ids || self.split.test_od_ids.iter().any(|&o| o >= self.od_matrices.len()) {
            return bad("split references a missing task or OD".into());
        }
        for (&(t, o), s) in &self.samples {
            if t >= self.tasks.len() || o >= self.od_matrices.len() || s.task_id != t || s.od_id != o {
                return bad(format!("sample ({t}, {o}) references a missing task or OD"));
            }
            if s.target_flows.len() != self.network.n_edges() {
                return bad(format!("sample ({t}, {o}) has {} targets", s.target_flows.len()));
            }
        }
        Ok(())
    }

    pub fn sample(&self, task_id: usize, od_id: usize) -> Option<&Sample> {
        self.samples.get(&(task_id, od_id))
    }

    /// OD ids available to meta-training (all ODs not held out).
    pub fn train_od_ids(&self) -> Vec<usize> {
        let test: BTreeSet<_> = self.split.test_od_ids.iter().collect();
        (0..self.od_matrices.len()).filter(|o| !test.contains(o)).collect()
    }

    /// `(task, od)` pairs making up the held-out test split.
    pub fn test_pairs(&self) -> Vec<(usize, usize)> {
        self.split
            .test_task_ids
            .iter()
            .flat_map(|&t| self.split.test_od_ids.iter().map(move |&o| (t, o)))
            .collect()
    }
}
