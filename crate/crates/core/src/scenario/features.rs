use serde::{Deserialize, Serialize};

use crate::netio::{Normalization, OdMatrix, RoadNetwork};
use crate::tensor::Tensor;

/// Which graph the node degree features are counted on.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DegreeMode {
    /// Only open edges count.
    #[default]
    Open,
    /// Every edge of the base network counts.
    Base,
}

/// Node width: three degree columns plus one OD column per zone.
pub fn node_feature_width(n_zones: usize) -> usize {
    3 + n_zones
}

/// `|N| × (3 + Z)` rows of `[in, out, in + out, od_row / demand_scale]`,
/// degrees divided by the base network's largest total degree. Non-zone
/// nodes have a zero OD block.
pub fn build_node_features(
    network: &RoadNetwork,
    present: &[bool],
    od: &OdMatrix,
    norm: &Normalization,
    mode: DegreeMode,
) -> Tensor {
    let n = network.n_nodes();
    let z = od.zones();
    let width = node_feature_width(z);
    let mut indeg = vec![0usize; n];
    let mut outdeg = vec![0usize; n];
    for e in network.edges() {
        if mode == DegreeMode::Base || present[e.edge_id] {
            indeg[e.to_node] += 1;
            outdeg[e.from_node] += 1;
        }
    }
    let mut data = vec![0.0; n * width];
    for (node, row) in data.chunks_exact_mut(width).enumerate() {
        row[0] = indeg[node] as f64 / norm.degree_scale;
        row[1] = outdeg[node] as f64 / norm.degree_scale;
        row[2] = (indeg[node] + outdeg[node]) as f64 / norm.degree_scale;
        if node < z {
            for (slot, q) in row[3..].iter_mut().zip(od.row(node)) {
                *slot = q / norm.demand_scale;
            }
        }
    }
    Tensor::new(n, width, data).expect("width matches buffer")
}

/// `|E| × 2` rows of `[capacity / capacity_scale, present]`.
pub fn build_edge_features(network: &RoadNetwork, present: &[bool], norm: &Normalization) -> Tensor {
    let data = network
        .edges()
        .iter()
        .flat_map(|e| [e.capacity / norm.capacity_scale, if present[e.edge_id] { 1.0 } else { 0.0 }])
        .collect();
    Tensor::new(network.n_edges(), 2, data).expect("two columns per edge")
}
