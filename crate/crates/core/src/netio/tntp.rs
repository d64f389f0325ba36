//! Readers and writers for the TNTP text formats (`*_net.tntp`,
//! `*_trips.tntp`, `*_node.tntp`).

use std::collections::HashMap;
use std::fmt::Write as _;

use super::{Edge, Node, OdMatrix, RoadNetwork};
use crate::error::{Error, Result};

const TAG_NODES: &str = "<NUMBER OF NODES>";
const TAG_LINKS: &str = "<NUMBER OF LINKS>";
const TAG_ZONES: &str = "<NUMBER OF ZONES>";
const TAG_THRU: &str = "<FIRST THRU NODE>";
const TAG_TOTAL: &str = "<TOTAL OD FLOW>";
const TAG_END: &str = "<END OF METADATA>";

/// Metadata tags and the (1-based line number, text) of every body line.
struct Sections<'a> {
    tags: HashMap<String, &'a str>,
    body: Vec<(usize, &'a str)>,
}

fn split_sections(text: &str) -> Sections<'_> {
    let mut tags = HashMap::new();
    let mut body = Vec::new();
    let mut in_meta = true;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if in_meta && line.starts_with('<') {
            if line.eq_ignore_ascii_case(TAG_END) {
                in_meta = false;
                continue;
            }
            if let Some(close) = line.find('>') {
                tags.insert(line[..=close].to_ascii_uppercase(), line[close + 1..].trim());
            }
            continue;
        }
        in_meta = false;
        if line.starts_with('~') {
            continue;
        }
        body.push((i + 1, line));
    }
    Sections { tags, body }
}

fn tag_usize(sections: &Sections<'_>, tag: &'static str) -> Result<usize> {
    let raw = sections.tags.get(tag).ok_or(Error::MissingTag(tag))?;
    raw.parse::<usize>()
        .map_err(|_| Error::Parse(format!("{tag} has non-integer value {raw:?}")))
}

fn number(line: usize, token: &str) -> Result<f64> {
    token
        .parse::<f64>()
        .map_err(|_| Error::Parse(format!("line {line}: expected a number, found {token:?}")))
}

/// Parses a link file. Node numbers must lie in `1..=<NUMBER OF NODES>`;
/// node `k` becomes dense id `k − 1` and keeps `k` as its original id.
pub fn parse_network(text: &str) -> Result<RoadNetwork> {
    let sections = split_sections(text);
    let n_nodes = tag_usize(&sections, TAG_NODES)?;
    let n_links = tag_usize(&sections, TAG_LINKS)?;
    let n_zones = tag_usize(&sections, TAG_ZONES)?;
    let first_thru = tag_usize(&sections, TAG_THRU)?;
    if n_zones > n_nodes {
        return Err(Error::Parse(format!("{n_zones} zones exceed {n_nodes} nodes")));
    }

    let mut edges = Vec::with_capacity(n_links);
    for &(line_no, line) in &sections.body {
        let line = line.trim_end_matches(';');
        let cols: Vec<&str> = line.split_whitespace().filter(|t| *t != ";").collect();
        if cols.is_empty() {
            continue;
        }
        if cols.len() < 7 {
            return Err(Error::Parse(format!(
                "line {line_no}: link row needs at least 7 columns, found {}",
                cols.len()
            )));
        }
        let vals = cols.iter().map(|t| number(line_no, t)).collect::<Result<Vec<_>>>()?;
        let node = |v: f64| -> Result<usize> {
            if v.fract() != 0.0 || v < 1.0 || v > n_nodes as f64 {
                return Err(Error::Validation {
                    row: line_no,
                    msg: format!("node number {v} outside 1..={n_nodes}"),
                });
            }
            Ok(v as usize - 1)
        };
        let (from, to) = (node(vals[0])?, node(vals[1])?);
        let (capacity, length, fft) = (vals[2], vals[3], vals[4]);
        if capacity.is_nan() || capacity <= 0.0 {
            return Err(Error::Validation {
                row: line_no,
                msg: format!("capacity {capacity} must be positive"),
            });
        }
        if fft.is_nan() || fft <= 0.0 {
            return Err(Error::Validation {
                row: line_no,
                msg: format!("free-flow time {fft} must be positive"),
            });
        }
        if from == to {
            return Err(Error::Validation {
                row: line_no,
                msg: format!("self-loop on node {}", from + 1),
            });
        }
        if vals[5] < 0.0 || vals[6] < 0.0 {
            return Err(Error::Validation {
                row: line_no,
                msg: format!("negative BPR parameters b={} power={}", vals[5], vals[6]),
            });
        }
        edges.push(Edge {
            edge_id: edges.len(),
            from_node: from,
            to_node: to,
            capacity,
            free_flow_time: fft,
            bpr_b: vals[5],
            bpr_power: vals[6],
            length,
            speed: vals.get(7).copied().unwrap_or(0.0),
            toll: vals.get(8).copied().unwrap_or(0.0),
            link_type: vals.get(9).map_or(1, |&v| v as i64),
        });
    }
    if edges.len() != n_links {
        return Err(Error::Parse(format!(
            "{TAG_LINKS} declares {n_links} links but {} rows were found",
            edges.len()
        )));
    }

    let nodes = (0..n_nodes)
        .map(|i| Node {
            node_id: i,
            original_id: i as u64 + 1,
            zone_id: None,
            x: None,
            y: None,
        })
        .collect();
    RoadNetwork::new(nodes, edges, n_zones, first_thru.saturating_sub(1))
}

/// A parsed trips file with its declared total.
#[derive(Clone, Debug, PartialEq)]
pub struct TripsFile {
    pub matrix: OdMatrix,
    pub declared_total: Option<f64>,
}

/// Parses an OD trips file into a dense matrix (diagonal forced to zero).
pub fn parse_trips(text: &str) -> Result<OdMatrix> {
    parse_trips_detailed(text).map(|f| f.matrix)
}

pub fn parse_trips_detailed(text: &str) -> Result<TripsFile> {
    let sections = split_sections(text);
    let zones = tag_usize(&sections, TAG_ZONES)?;
    let declared_total = match sections.tags.get(TAG_TOTAL) {
        Some(raw) => Some(
            raw.parse::<f64>()
                .map_err(|_| Error::Parse(format!("{TAG_TOTAL} has value {raw:?}")))?,
        ),
        None => None,
    };

    let mut demand = vec![0.0; zones * zones];
    let mut origin: Option<usize> = None;
    for &(line_no, line) in &sections.body {
        let spaced = line.replace(':', " : ").replace(';', " ; ");
        let mut tokens = spaced.split_whitespace().peekable();
        while let Some(tok) = tokens.next() {
            if tok.eq_ignore_ascii_case("origin") {
                let o = tokens
                    .next()
                    .ok_or_else(|| Error::Parse(format!("line {line_no}: Origin without a zone number")))?;
                let o = number(line_no, o)? as usize;
                if o < 1 || o > zones {
                    return Err(Error::Validation {
                        row: line_no,
                        msg: format!("origin {o} outside 1..={zones}"),
                    });
                }
                origin = Some(o - 1);
                continue;
            }
            if tok == ";" {
                continue;
            }
            let dest = number(line_no, tok)?;
            if tokens.next() != Some(":") {
                return Err(Error::Parse(format!("line {line_no}: expected ':' after destination {tok}")));
            }
            let flow_tok = tokens
                .next()
                .ok_or_else(|| Error::Parse(format!("line {line_no}: missing flow after ':'")))?;
            let flow = number(line_no, flow_tok)?;
            let o = origin.ok_or_else(|| Error::Parse(format!("line {line_no}: demand before any Origin")))?;
            if dest.fract() != 0.0 || dest < 1.0 || dest > zones as f64 {
                return Err(Error::Validation {
                    row: line_no,
                    msg: format!("destination {dest} outside 1..={zones}"),
                });
            }
            if !(flow >= 0.0 && flow.is_finite()) {
                return Err(Error::Validation {
                    row: line_no,
                    msg: format!("demand {flow} must be finite and non-negative"),
                });
            }
            let d = dest as usize - 1;
            if d != o {
                demand[o * zones + d] += flow;
            }
        }
    }
    Ok(TripsFile {
        matrix: OdMatrix::new(0, zones, demand)?,
        declared_total,
    })
}

/// Reads `node x y ;` rows and attaches coordinates to `network`.
pub fn parse_nodes(text: &str, network: &mut RoadNetwork) -> Result<()> {
    let mut coords = vec![None; network.n_nodes()];
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim().trim_end_matches(';');
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.len() < 3 || cols[0].parse::<f64>().is_err() {
            continue;
        }
        let id = number(i + 1, cols[0])? as u64;
        let node = network.node_by_original(id).ok_or_else(|| Error::Validation {
            row: i + 1,
            msg: format!("unknown node {id}"),
        })?;
        coords[node] = Some((number(i + 1, cols[1])?, number(i + 1, cols[2])?));
    }
    let coords: Option<Vec<_>> = coords.into_iter().collect();
    let coords = coords.ok_or_else(|| Error::Parse("node file does not cover every node".into()))?;
    network.set_coordinates(&coords)
}

pub fn write_network_tntp(network: &RoadNetwork) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{TAG_ZONES} {}", network.n_zones());
    let _ = writeln!(s, "{TAG_NODES} {}", network.n_nodes());
    let _ = writeln!(s, "{TAG_THRU} {}", network.first_thru_node() + 1);
    let _ = writeln!(s, "{TAG_LINKS} {}", network.n_edges());
    let _ = writeln!(s, "{TAG_END}\n\n");
    let _ = writeln!(
        s,
        "~\tinit_node\tterm_node\tcapacity\tlength\tfree_flow_time\tb\tpower\tspeed\ttoll\tlink_type\t;"
    );
    let nodes = network.nodes();
    for e in network.edges() {
        let _ = writeln!(
            s,
            "\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t;",
            nodes[e.from_node].original_id,
            nodes[e.to_node].original_id,
            e.capacity,
            e.length,
            e.free_flow_time,
            e.bpr_b,
            e.bpr_power,
            e.speed,
            e.toll,
            e.link_type
        );
    }
    s
}

/// `node x y ;` rows; `None` when the network has no coordinates.
pub fn write_nodes_tntp(network: &RoadNetwork) -> Option<String> {
    let coords = network.coordinates()?;
    let mut s = String::from("node\tx\ty\t;\n");
    for (node, (x, y)) in network.nodes().iter().zip(coords) {
        let _ = writeln!(s, "{}\t{x}\t{y}\t;", node.original_id);
    }
    Some(s)
}

pub fn write_trips_tntp(od: &OdMatrix) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{TAG_ZONES} {}", od.zones());
    let _ = writeln!(s, "{TAG_TOTAL} {}", od.total());
    let _ = writeln!(s, "{TAG_END}\n");
    for o in 0..od.zones() {
        let _ = writeln!(s, "\nOrigin \t{}", o + 1);
        for (d, &v) in od.row(o).iter().enumerate() {
            let _ = write!(s, "{:>6} : {};", d + 1, v);
            if d % 5 == 4 {
                s.push('\n');
            }
        }
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_NODE: &str = "<NUMBER OF ZONES> 2\n<NUMBER OF NODES> 2\n<FIRST THRU NODE> 1\n<NUMBER OF LINKS> 1\n<END OF METADATA>\n\n~ init_node term_node capacity length free_flow_time b power speed toll link_type ;\n1 2 1000 1 10 0.15 4 0 0 1 ;\n";

    #[test]
    fn two_node_network() {
        let net = parse_network(TWO_NODE).unwrap();
        assert_eq!(net.n_nodes(), 2);
        assert_eq!(net.n_edges(), 1);
        let e = &net.edges()[0];
        assert_eq!((e.from_node, e.to_node), (0, 1));
        assert_eq!(e.capacity, 1000.0);
        assert_eq!(e.bpr_b, 0.15);
        assert_eq!(e.bpr_power, 4.0);
        assert_eq!(e.free_flow_time, 10.0);
        assert_eq!(net.nodes()[1].original_id, 2);
    }

    #[test]
    fn empty_link_section() {
        let text = "<NUMBER OF ZONES> 0\n<NUMBER OF NODES> 3\n<FIRST THRU NODE> 1\n<NUMBER OF LINKS> 0\n<END OF METADATA>\n";
        let net = parse_network(text).unwrap();
        assert_eq!(net.n_edges(), 0);
        assert_eq!(net.n_nodes(), 3);
    }

    #[test]
    fn missing_tag_is_named() {
        let text = TWO_NODE.replace("<NUMBER OF LINKS> 1\n", "");
        match parse_network(&text) {
            Err(Error::MissingTag(tag)) => assert_eq!(tag, "<NUMBER OF LINKS>"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_positive_capacity_reports_row() {
        let text = TWO_NODE.replace("1 2 1000", "1 2 0");
        match parse_network(&text) {
            Err(Error::Validation { row, .. }) => assert_eq!(row, 8),
            other => panic!("unexpected {other:?}"),
        }
        let text = TWO_NODE.replace("1 2 1000 1 10", "1 2 1000 1 0");
        assert!(matches!(parse_network(&text), Err(Error::Validation { row: 8, .. })));
    }

    #[test]
    fn link_count_must_match() {
        let text = TWO_NODE.replace("<NUMBER OF LINKS> 1", "<NUMBER OF LINKS> 2");
        assert!(matches!(parse_network(&text), Err(Error::Parse(_))));
    }

    #[test]
    fn simple_trips() {
        let text = "<NUMBER OF ZONES> 2\n<TOTAL OD FLOW> 100.0\n<END OF METADATA>\n\nOrigin 1\n 2 : 100.0;\n";
        let f = parse_trips_detailed(text).unwrap();
        assert_eq!(f.matrix.values(), &[0.0, 100.0, 0.0, 0.0]);
        assert_eq!(f.declared_total, Some(100.0));
    }

    #[test]
    fn header_only_trips_is_zero() {
        let text = "<NUMBER OF ZONES> 3\n<TOTAL OD FLOW> 0.0\n<END OF METADATA>\n";
        let od = parse_trips(text).unwrap();
        assert_eq!(od.total(), 0.0);
        assert_eq!(od.zones(), 3);
    }

    #[test]
    fn diagonal_is_forced_to_zero_and_compact_syntax_accepted() {
        let text = "<NUMBER OF ZONES> 2\n<END OF METADATA>\nOrigin 1\n1 : 5.0; 2:7;\nOrigin 2\n1 :3.5 ;\n";
        let od = parse_trips(text).unwrap();
        assert_eq!(od.values(), &[0.0, 7.0, 3.5, 0.0]);
    }

    #[test]
    fn destination_out_of_range() {
        let text = "<NUMBER OF ZONES> 2\n<END OF METADATA>\nOrigin 1\n 3 : 1.0;\n";
        assert!(matches!(parse_trips(text), Err(Error::Validation { .. })));
    }

    #[test]
    fn writers_round_trip() {
        let net = parse_network(TWO_NODE).unwrap();
        assert_eq!(parse_network(&write_network_tntp(&net)).unwrap(), net);
        let od = OdMatrix::new(0, 3, vec![0.0, 1.25, 3.0, 4.0, 0.0, 0.1, 7.0, 8.5, 0.0]).unwrap();
        let f = parse_trips_detailed(&write_trips_tntp(&od)).unwrap();
        assert_eq!(f.matrix, od);
        assert_eq!(f.declared_total, Some(od.total()));
    }

    #[test]
    fn node_coordinates() {
        let mut net = parse_network(TWO_NODE).unwrap();
        parse_nodes("Node X Y ;\n1 0.5 1.5 ;\n2 -3 4 ;\n", &mut net).unwrap();
        assert_eq!(net.coordinates().unwrap(), vec![(0.5, 1.5), (-3.0, 4.0)]);
        let mut again = parse_network(TWO_NODE).unwrap();
        parse_nodes(&write_nodes_tntp(&net).unwrap(), &mut again).unwrap();
        assert_eq!(again.coordinates(), net.coordinates());
        assert!(write_nodes_tntp(&parse_network(TWO_NODE).unwrap()).is_none());
        assert!(parse_nodes("1 0 0 ;\n", &mut net).is_err());
    }
}
