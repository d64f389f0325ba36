use rand::seq::index;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::netio::{ClosureTask, OdMatrix, RoadNetwork};
use crate::rng::Rng;

/// Inclusive range of closed-edge counts for a fraction range over `n_edges`.
pub fn closure_count_range(n_edges: usize, (low, high): (f64, f64)) -> Option<(usize, usize)> {
    // absorb representation error such as 0.05 * 20 = 1.0000000000000002
    let lo = (low * n_edges as f64 - 1e-9).ceil().max(0.0) as usize;
    let hi = (high * n_edges as f64 + 1e-9).floor() as usize;
    (lo <= hi.min(n_edges)).then_some((lo, hi.min(n_edges)))
}

/// Origins with positive demand and their positive-demand destinations.
pub(crate) fn demand_pairs(od: &OdMatrix) -> Vec<(usize, Vec<usize>)> {
    (0..od.zones())
        .filter_map(|o| {
            let dests: Vec<usize> = od
                .row(o)
                .iter()
                .enumerate()
                .filter(|&(d, &q)| d != o && q > 0.0)
                .map(|(d, _)| d)
                .collect();
            (!dests.is_empty()).then_some((o, dests))
        })
        .collect()
}

/// Whether every listed destination is reachable from its origin over open
/// edges, never passing through non-through zone nodes.
pub(crate) fn demand_connected(network: &RoadNetwork, present: &[bool], pairs: &[(usize, Vec<usize>)]) -> bool {
    let mut seen = vec![false; network.n_nodes()];
    let mut queue = Vec::with_capacity(network.n_nodes());
    for (origin, dests) in pairs {
        seen.fill(false);
        queue.clear();
        seen[*origin] = true;
        queue.push(*origin);
        while let Some(u) = queue.pop() {
            if u != *origin && !network.is_through(u) {
                continue;
            }
            for &e in network.outgoing(u) {
                let v = network.edges()[e].to_node;
                if present[e] && !seen[v] {
                    seen[v] = true;
                    queue.push(v);
                }
            }
        }
        if dests.iter().any(|&d| !seen[d]) {
            return false;
        }
    }
    true
}

/// Draws a closure pattern: the closed count is uniform over the integer
/// range implied by `fraction_range`, the closed set uniform without
/// replacement. Patterns that disconnect a positive-demand pair of `base_od`
/// are redrawn, at most `max_retries` times.
pub fn sample_closure(
    task_id: usize,
    network: &RoadNetwork,
    base_od: &OdMatrix,
    fraction_range: (f64, f64),
    max_retries: usize,
    rng: &mut Rng,
) -> Result<ClosureTask> {
    let n = network.n_edges();
    let (lo, hi) = closure_count_range(n, fraction_range).ok_or_else(|| {
        Error::Generation(format!(
            "closure fraction range {fraction_range:?} contains no whole edge count for {n} edges"
        ))
    })?;
    let pairs = demand_pairs(base_od);
    for _ in 0..max_retries.max(1) {
        let count = rng.random_range(lo..=hi);
        let mut present = vec![true; n];
        for e in index::sample(rng, n, count) {
            present[e] = false;
        }
        if demand_connected(network, &present, &pairs) {
            return Ok(ClosureTask { task_id, present });
        }
    }
    Err(Error::Generation(format!(
        "closure fraction range {fraction_range:?} is infeasible for this network: \
         no connected pattern in {max_retries} attempts (task {task_id})"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netio::Edge;
    use crate::rng::stream;

    fn ring(n: usize) -> RoadNetwork {
        let edges = (0..n)
            .flat_map(|i| {
                let j = (i + 1) % n;
                [Edge::bpr(i, j, 100.0, 1.0, 0.15, 4.0), Edge::bpr(j, i, 100.0, 1.0, 0.15, 4.0)]
            })
            .collect();
        RoadNetwork::from_edges(n, n, edges).unwrap()
    }

    fn uniform_od(n: usize) -> OdMatrix {
        let d = (0..n * n).map(|k| if k / n == k % n { 0.0 } else { 1.0 }).collect();
        OdMatrix::new(0, n, d).unwrap()
    }

    #[test]
    fn count_range_rounding() {
        assert_eq!(closure_count_range(258, (0.05, 0.30)), Some((13, 77)));
        assert_eq!(closure_count_range(20, (0.05, 0.05)), Some((1, 1)));
        assert_eq!(closure_count_range(10, (0.0, 0.0)), Some((0, 0)));
        assert_eq!(closure_count_range(10, (0.11, 0.19)), None);
    }

    #[test]
    fn empty_range_keeps_everything_open() {
        let net = ring(5);
        let t = sample_closure(3, &net, &uniform_od(5), (0.0, 0.0), 10, &mut stream(1, &[])).unwrap();
        assert_eq!(t.task_id, 3);
        assert!(t.present.iter().all(|&p| p));
    }

    #[test]
    fn closures_respect_range_and_connectivity() {
        let net = ring(8);
        let od = uniform_od(8);
        let pairs = demand_pairs(&od);
        let mut rng = stream(7, &[]);
        for _ in 0..50 {
            let t = sample_closure(0, &net, &od, (0.05, 0.2), 1000, &mut rng).unwrap();
            let c = t.closed_count();
            assert!((1..=3).contains(&c), "closed {c}");
            assert!(demand_connected(&net, &t.present, &pairs));
        }
    }

    #[test]
    fn same_seed_same_mask() {
        let net = ring(8);
        let od = uniform_od(8);
        let a = sample_closure(0, &net, &od, (0.05, 0.2), 1000, &mut stream(42, &[1])).unwrap();
        let b = sample_closure(0, &net, &od, (0.05, 0.2), 1000, &mut stream(42, &[1])).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn impossible_fraction_is_reported() {
        // a one-way ring has no spare edges: any closure disconnects it
        let edges = (0..4).map(|i| Edge::bpr(i, (i + 1) % 4, 100.0, 1.0, 0.15, 4.0)).collect();
        let net = RoadNetwork::from_edges(4, 4, edges).unwrap();
        let err = sample_closure(0, &net, &uniform_od(4), (0.25, 0.5), 20, &mut stream(0, &[])).unwrap_err();
        assert!(matches!(err, Error::Generation(ref m) if m.contains("infeasible")));
    }
}
