//! Gated graph convolutional surrogate predicting equilibrium edge flows.
//!
//! Node and edge features are lifted to width `H` by affine encoders, then
//! `L` gated message-passing layers update the node states:
//!
//! ```text
//! g   = σ(e_h·W_e + x_dst·W_dst + x_org·W_org + b_g)      (zero on closed edges)
//! m   = (x_org·W_m) ⊙ g                                  (zero on closed edges)
//! agg = Σ_{e→d} m / (Σ_{e→d} g + ε)
//! x'  = dropout(act(x·W_self + b_s + agg))
//! ```
//!
//! A three-layer MLP on `[x_org ‖ x_dst ‖ e_h]` produces one normalized flow
//! per edge. All weights live in one flat `f64` vector laid out by
//! [`ParamLayout`].

mod checkpoint;
mod model;

use std::sync::Arc;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

pub use checkpoint::{decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use model::{Forward, GatedGcn, LOSS_DELTA};

use crate::error::{Error, Result};
use crate::netio::{RoadNetwork, Sample};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Nonlinearity applied after each node update.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Identity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GnnHyper {
    /// Hidden width `H`.
    pub hidden: usize,
    /// Number of message-passing layers `L`.
    pub layers: usize,
    pub dropout: f64,
    /// Added to the gate sum in the aggregation denominator.
    pub epsilon: f64,
    pub activation: Activation,
    /// Replace `e_h` by `relu` of the gate pre-activation after every layer.
    pub edge_update: bool,
    /// Force predictions on closed edges to zero.
    pub output_mask: bool,
    /// Add the layer input to its output.
    pub residual: bool,
}

impl Default for GnnHyper {
    fn default() -> Self {
        Self {
            hidden: 192,
            layers: 6,
            dropout: 0.01,
            epsilon: 1e-6,
            activation: Activation::Relu,
            edge_update: false,
            output_mask: true,
            residual: false,
        }
    }
}

impl GnnHyper {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 {
            return Err(Error::Config("hidden width must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} not in [0, 1)", self.dropout)));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config(format!("epsilon {} must be positive", self.epsilon)));
        }
        Ok(())
    }
}

/// One weight matrix or bias row inside the flat parameter vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamBlock {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
    pub bias: bool,
}

impl ParamBlock {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Order of the parameter blocks:
///
/// ```text
/// node_enc.w (F_n×H), node_enc.b (1×H), edge_enc.w (F_e×H), edge_enc.b (1×H),
/// per layer l: layer{l}.w_edge, .w_dst, .w_org, .w_msg, .w_self (H×H),
///              layer{l}.b_gate, .b_self (1×H),
/// decoder.w1 (3H×H), decoder.b1, decoder.w2 (H×H), decoder.b2,
/// decoder.w3 (H×1), decoder.b3 (1×1)
/// ```
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamLayout {
    blocks: Vec<ParamBlock>,
    total: usize,
}

pub(crate) const LAYER_BLOCKS: usize = 7;

impl ParamLayout {
    pub fn new(hyper: &GnnHyper, node_in: usize, edge_in: usize) -> Self {
        let h = hyper.hidden;
        let mut blocks = Vec::new();
        let mut total = 0;
        let mut push = |name: String, rows: usize, cols: usize, bias: bool| {
            blocks.push(ParamBlock {
                name,
                rows,
                cols,
                offset: total,
                bias,
            });
            total += rows * cols;
        };
        push("node_enc.w".into(), node_in, h, false);
        push("node_enc.b".into(), 1, h, true);
        push("edge_enc.w".into(), edge_in, h, false);
        push("edge_enc.b".into(), 1, h, true);
        for l in 0..hyper.layers {
            for w in ["w_edge", "w_dst", "w_org", "w_msg", "w_self"] {
                push(format!("layer{l}.{w}"), h, h, false);
            }
            push(format!("layer{l}.b_gate"), 1, h, true);
            push(format!("layer{l}.b_self"), 1, h, true);
        }
        push("decoder.w1".into(), 3 * h, h, false);
        push("decoder.b1".into(), 1, h, true);
        push("decoder.w2".into(), h, h, false);
        push("decoder.b2".into(), 1, h, true);
        push("decoder.w3".into(), h, 1, false);
        push("decoder.b3".into(), 1, 1, true);
        Self { blocks, total }
    }

    pub fn blocks(&self) -> &[ParamBlock] {
        &self.blocks
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn block(&self, name: &str) -> Option<&ParamBlock> {
        self.blocks.iter().find(|b| b.name == name)
    }
}

/// All trainable weights of a [`GatedGcn`] plus the shape information
/// needed to interpret them.
#[derive(Clone, Debug, PartialEq)]
pub struct GatedGcnParams {
    pub hyper: GnnHyper,
    pub node_in: usize,
    pub edge_in: usize,
    pub values: Vec<f64>,
}

impl GatedGcnParams {
    /// Glorot-uniform weights `U(±√(6/(fan_in+fan_out)))`, zero biases.
    pub fn init(hyper: &GnnHyper, node_in: usize, edge_in: usize, rng: &mut Rng) -> Result<Self> {
        hyper.validate()?;
        let layout = ParamLayout::new(hyper, node_in, edge_in);
        let mut values = vec![0.0; layout.total()];
        for b in layout.blocks().iter().filter(|b| !b.bias) {
            let limit = (6.0 / (b.rows + b.cols) as f64).sqrt();
            for v in &mut values[b.range()] {
                *v = rng.random_range(-limit..=limit);
            }
        }
        Ok(Self {
            hyper: hyper.clone(),
            node_in,
            edge_in,
            values,
        })
    }

    pub fn layout(&self) -> ParamLayout {
        ParamLayout::new(&self.hyper, self.node_in, self.edge_in)
    }

    /// Copy of one block as a matrix.
    pub fn block(&self, name: &str) -> Option<Tensor> {
        let layout = self.layout();
        let b = layout.block(name)?;
        Tensor::new(b.rows, b.cols, self.values[b.range()].to_vec()).ok()
    }
}

/// Model input for one (closure, OD) graph.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphBatch {
    pub node_features: Tensor,
    pub edge_features: Tensor,
    pub origin: Arc<[usize]>,
    pub dest: Arc<[usize]>,
    pub present: Arc<[bool]>,
    /// `|E| × 1` normalized target flows.
    pub targets: Tensor,
}

impl GraphBatch {
    pub fn new(
        node_features: Tensor,
        edge_features: Tensor,
        origin: Arc<[usize]>,
        dest: Arc<[usize]>,
        present: Arc<[bool]>,
        targets: Tensor,
    ) -> Result<Self> {
        let (n, e) = (node_features.rows(), edge_features.rows());
        for (len, op) in [
            (origin.len(), "graph batch origin"),
            (dest.len(), "graph batch dest"),
            (present.len(), "graph batch present"),
        ] {
            if len != e {
                return Err(Error::Shape {
                    op,
                    lhs: (e, 1),
                    rhs: (len, 1),
                });
            }
        }
        if targets.shape() != (e, 1) {
            return Err(Error::Shape {
                op: "graph batch targets",
                lhs: (e, 1),
                rhs: targets.shape(),
            });
        }
        if let Some(&bad) = origin.iter().chain(dest.iter()).find(|&&i| i >= n) {
            return Err(Error::Index {
                op: "graph batch",
                index: bad,
                len: n,
            });
        }
        Ok(Self {
            node_features,
            edge_features,
            origin,
            dest,
            present,
            targets,
        })
    }

    /// Batch for a stored sample; the closure is read from the edge
    /// features' present column.
    pub fn from_sample(network: &RoadNetwork, sample: &Sample) -> Result<Self> {
        let present: Arc<[bool]> = (0..sample.edge_features.rows())
            .map(|e| sample.edge_features.get(e, 1) != 0.0)
            .collect();
        Self::new(
            sample.node_features.clone(),
            sample.edge_features.clone(),
            network.from_index(),
            network.to_index(),
            present,
            Tensor::column(sample.target_normalized.clone()),
        )
    }

    /// Small fixed graph: 5 nodes with 5 features, 8 edges with 2 features,
    /// edge 6 closed.
    pub fn example() -> Self {
        let links = [(0, 1), (1, 2), (2, 3), (3, 4), (4, 0), (1, 0), (2, 4), (3, 1)];
        let present: Arc<[bool]> = (0..8).map(|e| e != 6).collect();
        let x = Tensor::new(5, 5, (0..25).map(|i| ((i * 7) % 11) as f64 / 11.0 - 0.3).collect()).expect("shape");
        let e = Tensor::new(
            8,
            2,
            (0..8).flat_map(|k| [0.2 + 0.2 * k as f64, if present[k] { 1.0 } else { 0.0 }]).collect(),
        )
        .expect("shape");
        let t = Tensor::column((0..8).map(|k| if present[k] { 0.1 * k as f64 } else { 0.0 }).collect());
        Self::new(
            x,
            e,
            links.iter().map(|l| l.0).collect(),
            links.iter().map(|l| l.1).collect(),
            present,
            t,
        )
        .expect("consistent example")
    }

    /// The same graph with node `i` renamed `node_perm[i]` and edge `k`
    /// renamed `edge_perm[k]`. Feature columns are left as they are.
    pub fn relabel(&self, node_perm: &[usize], edge_perm: &[usize]) -> Result<Self> {
        let (n, e) = (self.n_nodes(), self.n_edges());
        for (perm, len, op) in [(node_perm, n, "relabel nodes"), (edge_perm, e, "relabel edges")] {
            let mut seen = vec![false; len];
            if perm.len() != len {
                return Err(Error::Shape {
                    op,
                    lhs: (len, 1),
                    rhs: (perm.len(), 1),
                });
            }
            for &p in perm {
                if p >= len || std::mem::replace(&mut seen[p], true) {
                    return Err(Error::Contract(format!("{op}: not a permutation")));
                }
            }
        }
        let scatter_rows = |t: &Tensor, perm: &[usize]| {
            let mut out = Tensor::zeros(t.rows(), t.cols());
            for (old, &new) in perm.iter().enumerate() {
                for c in 0..t.cols() {
                    out.set(new, c, t.get(old, c));
                }
            }
            out
        };
        let mut origin = vec![0; e];
        let mut dest = vec![0; e];
        let mut present = vec![false; e];
        for (old, &new) in edge_perm.iter().enumerate() {
            origin[new] = node_perm[self.origin[old]];
            dest[new] = node_perm[self.dest[old]];
            present[new] = self.present[old];
        }
        Self::new(
            scatter_rows(&self.node_features, node_perm),
            scatter_rows(&self.edge_features, edge_perm),
            origin.into(),
            dest.into(),
            present.into(),
            scatter_rows(&self.targets, edge_perm),
        )
    }

    pub fn n_nodes(&self) -> usize {
        self.node_features.rows()
    }

    pub fn n_edges(&self) -> usize {
        self.edge_features.rows()
    }
}
