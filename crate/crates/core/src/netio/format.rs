//! Binary dataset file (`MASG`, version 1).
//!
//! All integers are little-endian; `f64` values are stored as their raw
//! IEEE-754 bits so a round trip is exact. Lengths are `u64`.
//!
//! ```text
//! frame: "MASG" | u32 version | u64 payload_len | payload | u32 crc32(payload)
//!
//! payload:
//!   network:
//!     u64 n_nodes, u64 n_zones, u64 first_thru_node
//!     n_nodes × { u64 original_id, opt_f64 x, opt_f64 y }
//!     u64 n_edges
//!     n_edges × { u64 from, u64 to, f64 capacity, f64 free_flow_time,
//!                 f64 bpr_b, f64 bpr_power, f64 length, f64 speed,
//!                 f64 toll, i64 link_type }
//!   normalization: f64 flow_scale, f64 demand_scale,
//!                  f64 capacity_scale, f64 degree_scale
//!   tasks: u64 n, n × { u64 task_id, u64 n_flags, ceil(n_flags/8) bytes
//!                       (bit i of byte i/8 = edge i open) }
//!   ods:   u64 n, n × { u64 od_id, u64 zones, f64s demand (row-major) }
//!   split: usizes train_task_ids, usizes test_task_ids, usizes test_od_ids
//!   samples: u64 n, n × {
//!     u64 task_id, u64 od_id,
//!     matrix node_features, matrix edge_features,
//!     f64s target_flows, f64s target_normalized,
//!     normalization, f64 relative_gap }
//!
//! opt_f64 = u8 tag (0 absent, 1 present) [+ f64]
//! f64s    = u64 len, len × f64;   usizes = u64 len, len × u64
//! matrix  = u64 rows, u64 cols, rows·cols × f64 (row-major)
//! ```
//! Samples are written in ascending `(task_id, od_id)` order.

use std::collections::BTreeMap;
use std::path::Path;

use super::{ClosureTask, Dataset, Edge, Node, Normalization, OdMatrix, RoadNetwork, Sample, Split};
use crate::binfmt::{frame, unframe, Reader, Writer};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const DATASET_MAGIC: &[u8; 4] = b"MASG";
pub const DATASET_VERSION: u32 = 1;

fn put_norm(w: &mut Writer, n: &Normalization) {
    w.f64(n.flow_scale);
    w.f64(n.demand_scale);
    w.f64(n.capacity_scale);
    w.f64(n.degree_scale);
}

fn get_norm(r: &mut Reader<'_>) -> Result<Normalization> {
    Ok(Normalization {
        flow_scale: r.f64()?,
        demand_scale: r.f64()?,
        capacity_scale: r.f64()?,
        degree_scale: r.f64()?,
    })
}

fn put_matrix(w: &mut Writer, t: &Tensor) {
    w.len(t.rows());
    w.len(t.cols());
    for &v in t.data() {
        w.f64(v);
    }
}

fn get_matrix(r: &mut Reader<'_>) -> Result<Tensor> {
    let rows = r.len(0)?;
    let cols = r.len(0)?;
    let n = rows
        .checked_mul(cols)
        .ok_or_else(|| Error::Integrity("matrix size overflows".into()))?;
    let data = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    Tensor::new(rows, cols, data)
}

pub fn encode_dataset(ds: &Dataset) -> Vec<u8> {
    let mut w = Writer::new();
    let net = &ds.network;
    w.len(net.n_nodes());
    w.len(net.n_zones());
    w.len(net.first_thru_node());
    for n in net.nodes() {
        w.u64(n.original_id);
        w.opt_f64(n.x);
        w.opt_f64(n.y);
    }
    w.len(net.n_edges());
    for e in net.edges() {
        w.len(e.from_node);
        w.len(e.to_node);
        for v in [e.capacity, e.free_flow_time, e.bpr_b, e.bpr_power, e.length, e.speed, e.toll] {
            w.f64(v);
        }
        w.i64(e.link_type);
    }
    put_norm(&mut w, &ds.normalization);

    w.len(ds.tasks.len());
    for t in &ds.tasks {
        w.len(t.task_id);
        w.len(t.present.len());
        for chunk in t.present.chunks(8) {
            let byte = chunk.iter().enumerate().fold(0u8, |b, (i, &p)| b | ((p as u8) << i));
            w.u8(byte);
        }
    }

    w.len(ds.od_matrices.len());
    for od in &ds.od_matrices {
        w.len(od.od_id());
        w.len(od.zones());
        w.f64s(od.values());
    }

    w.usizes(&ds.split.train_task_ids);
    w.usizes(&ds.split.test_task_ids);
    w.usizes(&ds.split.test_od_ids);

    w.len(ds.samples.len());
    for s in ds.samples.values() {
        w.len(s.task_id);
        w.len(s.od_id);
        put_matrix(&mut w, &s.node_features);
        put_matrix(&mut w, &s.edge_features);
        w.f64s(&s.target_flows);
        w.f64s(&s.target_normalized);
        put_norm(&mut w, &s.normalization);
        w.f64(s.relative_gap);
    }
    frame(DATASET_MAGIC, DATASET_VERSION, &w.0)
}

pub fn decode_dataset(bytes: &[u8]) -> Result<Dataset> {
    let payload = unframe(DATASET_MAGIC, DATASET_VERSION, bytes)?;
    let mut r = Reader::new(payload);

    let n_nodes = r.len(17)?;
    let n_zones = r.len(0)?;
    let first_thru = r.len(0)?;
    let mut nodes = Vec::with_capacity(n_nodes);
    for i in 0..n_nodes {
        nodes.push(Node {
            node_id: i,
            original_id: r.u64()?,
            zone_id: None,
            x: r.opt_f64()?,
            y: r.opt_f64()?,
        });
    }
    let n_edges = r.len(80)?;
    let mut edges = Vec::with_capacity(n_edges);
    for i in 0..n_edges {
        let from_node = r.len(0)?;
        let to_node = r.len(0)?;
        let mut v = [0.0; 7];
        for x in v.iter_mut() {
            *x = r.f64()?;
        }
        edges.push(Edge {
            edge_id: i,
            from_node,
            to_node,
            capacity: v[0],
            free_flow_time: v[1],
            bpr_b: v[2],
            bpr_power: v[3],
            length: v[4],
            speed: v[5],
            toll: v[6],
            link_type: r.i64()?,
        });
    }
    let network = RoadNetwork::new(nodes, edges, n_zones, first_thru)
        .map_err(|e| Error::Integrity(format!("stored network is invalid: {e}")))?;
    let normalization = get_norm(&mut r)?;

    let n_tasks = r.len(16)?;
    let mut tasks = Vec::with_capacity(n_tasks);
    for _ in 0..n_tasks {
        let task_id = r.len(0)?;
        let n_flags = r.len(0)?;
        let bytes = r.bytes(n_flags.div_ceil(8))?;
        let present = (0..n_flags).map(|i| bytes[i / 8] >> (i % 8) & 1 == 1).collect();
        tasks.push(ClosureTask { task_id, present });
    }

    let n_ods = r.len(24)?;
    let mut od_matrices = Vec::with_capacity(n_ods);
    for _ in 0..n_ods {
        let od_id = r.len(0)?;
        let zones = r.len(0)?;
        let demand = r.f64s()?;
        od_matrices.push(
            OdMatrix::new(od_id, zones, demand).map_err(|e| Error::Integrity(format!("stored OD {od_id}: {e}")))?,
        );
    }

    let split = Split {
        train_task_ids: r.usizes()?,
        test_task_ids: r.usizes()?,
        test_od_ids: r.usizes()?,
    };

    let n_samples = r.len(16)?;
    let mut samples = BTreeMap::new();
    for _ in 0..n_samples {
        let task_id = r.len(0)?;
        let od_id = r.len(0)?;
        let sample = Sample {
            task_id,
            od_id,
            node_features: get_matrix(&mut r)?,
            edge_features: get_matrix(&mut r)?,
            target_flows: r.f64s()?,
            target_normalized: r.f64s()?,
            normalization: get_norm(&mut r)?,
            relative_gap: r.f64()?,
        };
        if samples.insert((task_id, od_id), sample).is_some() {
            return Err(Error::Integrity(format!("duplicate sample ({task_id}, {od_id})")));
        }
    }
    r.finish()?;
    Dataset::new(network, tasks, od_matrices, samples, split, normalization)
}

pub fn write_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_dataset(dataset)).map_err(|e| Error::io(path, e))
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_dataset(&bytes)
}
