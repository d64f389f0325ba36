use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::netio::{OdMatrix, RoadNetwork};

#[derive(Clone, Debug, PartialEq)]
pub struct ShortestPathTree {
    pub origin: usize,
    /// minutes; `f64::INFINITY` when unreachable
    pub dist: Vec<f64>,
    pub predecessor_edge: Vec<Option<usize>>,
    /// Reachable nodes in the order they were settled.
    pub settled: Vec<usize>,
}

impl ShortestPathTree {
    /// Edge ids from the origin to `node`, or `None` if unreachable.
    pub fn path_to(&self, network: &RoadNetwork, node: usize) -> Option<Vec<usize>> {
        if !self.dist[node].is_finite() {
            return None;
        }
        let mut path = Vec::new();
        let mut at = node;
        while let Some(e) = self.predecessor_edge[at] {
            path.push(e);
            at = network.edges()[e].from_node;
        }
        path.reverse();
        Some(path)
    }
}

#[derive(Clone, Copy, PartialEq)]
struct Entry {
    dist: f64,
    node: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on (dist, node)
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Label-setting shortest paths from `origin` over open edges.
///
/// Among equal-cost predecessors the smaller edge id wins. Zone nodes below
/// the network's first through node are never passed through.
pub fn shortest_path_tree(network: &RoadNetwork, present: &[bool], edge_costs: &[f64], origin: usize) -> ShortestPathTree {
    let n = network.n_nodes();
    let edges = network.edges();
    let mut dist = vec![f64::INFINITY; n];
    let mut pred: Vec<Option<usize>> = vec![None; n];
    let mut done = vec![false; n];
    let mut settled = Vec::with_capacity(n);
    let mut heap = BinaryHeap::new();

    dist[origin] = 0.0;
    heap.push(Entry { dist: 0.0, node: origin });
    while let Some(Entry { dist: d, node: u }) = heap.pop() {
        if done[u] || d > dist[u] {
            continue;
        }
        done[u] = true;
        settled.push(u);
        if u != origin && !network.is_through(u) {
            continue;
        }
        for &e in network.outgoing(u) {
            if !present[e] {
                continue;
            }
            let v = edges[e].to_node;
            if done[v] {
                continue;
            }
            let nd = d + edge_costs[e];
            let better = nd < dist[v] || (nd == dist[v] && pred[v].is_some_and(|p| e < p));
            if better {
                if nd < dist[v] {
                    heap.push(Entry { dist: nd, node: v });
                }
                dist[v] = nd;
                pred[v] = Some(e);
            }
        }
    }
    ShortestPathTree {
        origin,
        dist,
        predecessor_edge: pred,
        settled,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AllOrNothing {
    pub flows: Vec<f64>,
    /// Positive demand with no open path.
    pub unreachable_demand: f64,
    /// `Σ demand · shortest distance`, equal to `Σ cost · flow`.
    pub shortest_cost: f64,
}

/// Loads every OD pair's demand onto its current shortest path.
pub fn all_or_nothing(network: &RoadNetwork, present: &[bool], edge_costs: &[f64], od: &OdMatrix) -> AllOrNothing {
    let n = network.n_nodes();
    let edges = network.edges();
    let mut flows = vec![0.0; network.n_edges()];
    let mut unreachable = 0.0;
    let mut shortest_cost = 0.0;
    let mut load = vec![0.0; n];

    for origin in 0..od.zones() {
        let row = od.row(origin);
        if row.iter().all(|&d| d <= 0.0) {
            continue;
        }
        let tree = shortest_path_tree(network, present, edge_costs, origin);
        load.fill(0.0);
        for (dest, &demand) in row.iter().enumerate() {
            if demand <= 0.0 || dest == origin {
                continue;
            }
            if tree.dist[dest].is_finite() {
                load[dest] += demand;
                shortest_cost += demand * tree.dist[dest];
            } else {
                unreachable += demand;
            }
        }
        // push loads back towards the origin, farthest nodes first
        for &v in tree.settled.iter().rev() {
            if v == origin || load[v] == 0.0 {
                continue;
            }
            let e = tree.predecessor_edge[v].expect("settled non-origin node has a predecessor");
            flows[e] += load[v];
            load[edges[e].from_node] += load[v];
        }
    }
    AllOrNothing {
        flows,
        unreachable_demand: unreachable,
        shortest_cost,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netio::Edge;

    fn net(n: usize, links: &[(usize, usize)]) -> RoadNetwork {
        let edges = links.iter().map(|&(a, b)| Edge::bpr(a, b, 100.0, 1.0, 0.15, 4.0)).collect();
        RoadNetwork::from_edges(n, n, edges).unwrap()
    }

    #[test]
    fn chain() {
        let g = net(3, &[(0, 1), (1, 2)]);
        let t = shortest_path_tree(&g, &[true, true], &[1.0, 2.0], 0);
        assert_eq!(t.dist, vec![0.0, 1.0, 3.0]);
        assert_eq!(t.path_to(&g, 2).unwrap(), vec![0, 1]);

        let cut = shortest_path_tree(&g, &[false, true], &[1.0, 2.0], 0);
        assert!(cut.dist[2].is_infinite());
        assert!(cut.path_to(&g, 2).is_none());
    }

    #[test]
    fn diamond_prefers_cheaper_two_hop() {
        let g = net(3, &[(0, 1), (0, 2), (1, 2)]);
        let t = shortest_path_tree(&g, &[true; 3], &[1.0, 4.0, 1.0], 0);
        assert_eq!(t.dist[2], 2.0);
        assert_eq!(t.predecessor_edge[2], Some(2));
    }

    #[test]
    fn ties_pick_smaller_edge_id() {
        // two parallel routes 0->1->3 (edges 0,2) and 0->2->3 (edges 1,3)
        let g = net(4, &[(0, 1), (0, 2), (1, 3), (2, 3)]);
        let t = shortest_path_tree(&g, &[true; 4], &[1.0; 4], 0);
        assert_eq!(t.predecessor_edge[3], Some(2));
        // parallel edges between the same nodes
        let p = net(2, &[(0, 1), (0, 1)]);
        let t = shortest_path_tree(&p, &[true; 2], &[5.0, 5.0], 0);
        assert_eq!(t.predecessor_edge[1], Some(0));
    }

    #[test]
    fn zones_are_not_passed_through() {
        let nodes = (0..3)
            .map(|i| crate::netio::Node {
                node_id: i,
                original_id: i as u64 + 1,
                zone_id: None,
                x: None,
                y: None,
            })
            .collect();
        let edges = vec![Edge::bpr(0, 1, 1.0, 1.0, 0.0, 1.0), Edge::bpr(1, 2, 1.0, 1.0, 0.0, 1.0)];
        // nodes 0 and 1 are non-through zones
        let g = RoadNetwork::new(nodes, edges, 3, 2).unwrap();
        let t = shortest_path_tree(&g, &[true, true], &[1.0, 1.0], 0);
        assert_eq!(t.dist[1], 1.0);
        assert!(t.dist[2].is_infinite());
    }

    #[test]
    fn aon_single_pair_and_superposition() {
        let g = net(3, &[(0, 1), (1, 2)]);
        let od = OdMatrix::new(0, 3, vec![0.0, 0.0, 100.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let r = all_or_nothing(&g, &[true, true], &[1.0, 1.0], &od);
        assert_eq!(r.flows, vec![100.0, 100.0]);
        assert_eq!(r.unreachable_demand, 0.0);
        assert_eq!(r.shortest_cost, 200.0);

        let od2 = OdMatrix::new(0, 3, vec![0.0, 0.0, 100.0, 0.0, 0.0, 40.0, 0.0, 0.0, 0.0]).unwrap();
        let r = all_or_nothing(&g, &[true, true], &[1.0, 1.0], &od2);
        assert_eq!(r.flows, vec![100.0, 140.0]);
    }

    #[test]
    fn aon_reports_unreachable_demand() {
        let g = net(4, &[(0, 1), (2, 3)]);
        let mut d = vec![0.0; 16];
        d[3] = 100.0; // 0 -> 3 crosses components
        let od = OdMatrix::new(0, 4, d).unwrap();
        let r = all_or_nothing(&g, &[true, true], &[1.0, 1.0], &od);
        assert_eq!(r.flows, vec![0.0, 0.0]);
        assert_eq!(r.unreachable_demand, 100.0);
    }
}
