use super::{Activation, GatedGcnParams, GnnHyper, GraphBatch, ParamLayout, LAYER_BLOCKS};
use crate::error::{Error, Result};
use crate::meta::Learner;
use crate::rng::{stream, Rng};
use crate::tensor::{Tape, Tensor, Var};

/// Smooth-L1 threshold of the training loss.
pub const LOSS_DELTA: f64 = 1.0;

/// The surrogate as a function of a flat parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct GatedGcn {
    hyper: GnnHyper,
    node_in: usize,
    edge_in: usize,
    layout: ParamLayout,
}

/// Tape handles produced by one forward pass.
pub struct Forward {
    /// `|E| × 1` normalized flow predictions.
    pub prediction: Var,
    /// One leaf per parameter block, in layout order.
    pub params: Vec<Var>,
}

impl GatedGcn {
    pub fn new(hyper: &GnnHyper, node_in: usize, edge_in: usize) -> Result<Self> {
        hyper.validate()?;
        Ok(Self {
            hyper: hyper.clone(),
            node_in,
            edge_in,
            layout: ParamLayout::new(hyper, node_in, edge_in),
        })
    }

    pub fn for_params(params: &GatedGcnParams) -> Result<Self> {
        let model = Self::new(&params.hyper, params.node_in, params.edge_in)?;
        if params.values.len() != model.layout.total() {
            return Err(Error::Integrity(format!(
                "{} parameters for a layout of {}",
                params.values.len(),
                model.layout.total()
            )));
        }
        Ok(model)
    }

    pub fn hyper(&self) -> &GnnHyper {
        &self.hyper
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    fn check(&self, theta: &[f64], batch: &GraphBatch) -> Result<()> {
        if theta.len() != self.layout.total() {
            return Err(Error::Shape {
                op: "gated gcn parameters",
                lhs: (self.layout.total(), 1),
                rhs: (theta.len(), 1),
            });
        }
        if batch.node_features.cols() != self.node_in || batch.edge_features.cols() != self.edge_in {
            return Err(Error::Shape {
                op: "gated gcn features",
                lhs: (self.node_in, self.edge_in),
                rhs: (batch.node_features.cols(), batch.edge_features.cols()),
            });
        }
        Ok(())
    }

    /// Records encode → message passing → decode on `tape`.
    pub fn forward(&self, tape: &mut Tape, theta: &[f64], batch: &GraphBatch, train: bool, rng: &mut Rng) -> Result<Forward> {
        self.check(theta, batch)?;
        let params: Vec<Var> = self
            .layout
            .blocks()
            .iter()
            .map(|b| tape.leaf(Tensor::new(b.rows, b.cols, theta[b.range()].to_vec()).expect("block shape")))
            .collect();
        let n = batch.n_nodes();
        let h = &self.hyper;
        let (org, dst, present) = (batch.origin.clone(), batch.dest.clone(), batch.present.clone());

        let x_in = tape.constant(batch.node_features.clone());
        let e_in = tape.constant(batch.edge_features.clone());
        // OD columns are node-indexed; the canonical product keeps node
        // relabelling exact
        let x_proj = tape.matmul_canonical(x_in, params[0])?;
        let mut x = tape.add_row(x_proj, params[1])?;
        let e_proj = tape.matmul(e_in, params[2])?;
        let mut e_h = tape.add_row(e_proj, params[3])?;

        for l in 0..h.layers {
            let p = &params[4 + l * LAYER_BLOCKS..4 + (l + 1) * LAYER_BLOCKS];
            let (w_edge, w_dst, w_org, w_msg, w_self, b_gate, b_self) = (p[0], p[1], p[2], p[3], p[4], p[5], p[6]);

            let from_edge = tape.matmul(e_h, w_edge)?;
            let x_dst = tape.matmul(x, w_dst)?;
            let from_dst = tape.gather(x_dst, dst.clone())?;
            let x_org = tape.matmul(x, w_org)?;
            let from_org = tape.gather(x_org, org.clone())?;
            let pre = tape.add(from_edge, from_dst)?;
            let pre = tape.add(pre, from_org)?;
            let pre = tape.add_row(pre, b_gate)?;
            let gate = tape.sigmoid(pre)?;
            let gate = tape.mask_rows(gate, present.clone())?;

            let x_msg = tape.matmul(x, w_msg)?;
            let msg = tape.gather(x_msg, org.clone())?;
            let msg = tape.hadamard(msg, gate)?;
            let msg = tape.mask_rows(msg, present.clone())?;

            let num = tape.segment_sum(msg, dst.clone(), n)?;
            let den = tape.segment_sum(gate, dst.clone(), n)?;
            let den = tape.add_scalar(den, h.epsilon)?;
            let agg = tape.div(num, den)?;

            let own = tape.matmul(x, w_self)?;
            let own = tape.add_row(own, b_self)?;
            let mut upd = tape.add(own, agg)?;
            if h.activation == Activation::Relu {
                upd = tape.relu(upd)?;
            }
            if h.residual {
                upd = tape.add(upd, x)?;
            }
            x = tape.dropout(upd, h.dropout, rng, train)?;

            if h.edge_update {
                let new_e = tape.relu(pre)?;
                e_h = if h.residual { tape.add(new_e, e_h)? } else { new_e };
            }
        }

        let d = 4 + h.layers * LAYER_BLOCKS;
        let x_o = tape.gather(x, org)?;
        let x_d = tape.gather(x, dst)?;
        let z = tape.concat(&[x_o, x_d, e_h], 1)?;
        let z = tape.matmul(z, params[d])?;
        let z = tape.add_row(z, params[d + 1])?;
        let z = tape.relu(z)?;
        let z = tape.matmul(z, params[d + 2])?;
        let z = tape.add_row(z, params[d + 3])?;
        let z = tape.relu(z)?;
        let z = tape.matmul(z, params[d + 4])?;
        let mut prediction = tape.add_row(z, params[d + 5])?;
        if h.output_mask {
            prediction = tape.mask_rows(prediction, present)?;
        }
        Ok(Forward { prediction, params })
    }

    /// Evaluation-mode normalized predictions, one per edge.
    pub fn predict(&self, theta: &[f64], batch: &GraphBatch) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let fwd = self.forward(&mut tape, theta, batch, false, &mut stream(0, &[]))?;
        Ok(tape.value(fwd.prediction).data().to_vec())
    }

    /// Smooth-L1 loss of one graph and its gradient in layout order.
    pub fn sample_loss_grad(&self, theta: &[f64], batch: &GraphBatch, train: bool, rng: &mut Rng) -> Result<(f64, Vec<f64>)> {
        let mut tape = Tape::new();
        let fwd = self.forward(&mut tape, theta, batch, train, rng)?;
        let loss = tape.smooth_l1(fwd.prediction, &batch.targets, LOSS_DELTA)?;
        let grads = tape.backward(loss)?;
        let mut flat = Vec::with_capacity(theta.len());
        for v in fwd.params {
            flat.extend_from_slice(grads.wrt(v).data());
        }
        Ok((tape.value(loss).item()?, flat))
    }

    /// Evaluation-mode Smooth-L1 loss of one graph.
    pub fn sample_loss(&self, theta: &[f64], batch: &GraphBatch) -> Result<f64> {
        let mut tape = Tape::new();
        let fwd = self.forward(&mut tape, theta, batch, false, &mut stream(0, &[]))?;
        let loss = tape.smooth_l1(fwd.prediction, &batch.targets, LOSS_DELTA)?;
        tape.value(loss).item()
    }
}

impl Learner for GatedGcn {
    type Sample = GraphBatch;

    fn n_params(&self) -> usize {
        self.layout.total()
    }

    fn loss_grad(&self, theta: &[f64], samples: &[&GraphBatch], train: bool, rng: &mut Rng) -> Result<(f64, Vec<f64>)> {
        let k = samples.len().max(1) as f64;
        let mut loss = 0.0;
        let mut grad = vec![0.0; theta.len()];
        for batch in samples {
            let (l, g) = self.sample_loss_grad(theta, batch, train, rng)?;
            loss += l / k;
            for (acc, gi) in grad.iter_mut().zip(g) {
                *acc += gi / k;
            }
        }
        Ok((loss, grad))
    }

    fn loss(&self, theta: &[f64], samples: &[&GraphBatch]) -> Result<f64> {
        let k = samples.len().max(1) as f64;
        samples
            .iter()
            .try_fold(0.0, |acc, b| Ok(acc + self.sample_loss(theta, b)? / k))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::grad_check;

    fn tiny_hyper() -> GnnHyper {
        GnnHyper {
            hidden: 3,
            layers: 2,
            dropout: 0.0,
            ..Default::default()
        }
    }

    fn tiny_batch() -> GraphBatch {
        GraphBatch::example()
    }

    #[test]
    fn masked_edge_predicts_zero_and_eval_is_deterministic() {
        let model = GatedGcn::new(&tiny_hyper(), 5, 2).unwrap();
        let theta = GatedGcnParams::init(&tiny_hyper(), 5, 2, &mut stream(1, &[])).unwrap().values;
        let b = tiny_batch();
        let p = model.predict(&theta, &b).unwrap();
        assert_eq!(p.len(), 8);
        assert_eq!(p[6].to_bits(), 0.0f64.to_bits());
        assert_eq!(p, model.predict(&theta, &b).unwrap());
    }

    #[test]
    fn zero_parameters_predict_zero() {
        let model = GatedGcn::new(&tiny_hyper(), 5, 2).unwrap();
        let theta = vec![0.0; model.n_params()];
        assert!(model.predict(&theta, &tiny_batch()).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let hyper = tiny_hyper();
        let model = GatedGcn::new(&hyper, 5, 2).unwrap();
        let mut theta = GatedGcnParams::init(&hyper, 5, 2, &mut stream(2, &[])).unwrap().values;
        // nonzero biases so every path is exercised
        for (i, v) in theta.iter_mut().enumerate() {
            if *v == 0.0 {
                *v = 0.05 * ((i % 5) as f64 - 2.0);
            }
        }
        let b = tiny_batch();
        let check = grad_check(
            |t| model.sample_loss_grad(t, &b, false, &mut stream(0, &[])),
            &theta,
            1e-6,
        )
        .unwrap();
        assert!(check.max_relative_error < 1e-5, "{check:?}");
    }

    #[test]
    fn batch_loss_is_mean_of_sample_losses() {
        let model = GatedGcn::new(&tiny_hyper(), 5, 2).unwrap();
        let theta = GatedGcnParams::init(&tiny_hyper(), 5, 2, &mut stream(3, &[])).unwrap().values;
        let mut batches: Vec<GraphBatch> = Vec::new();
        for k in 0..4 {
            let mut b = tiny_batch();
            b.targets.data_mut().iter_mut().for_each(|t| *t *= k as f64);
            batches.push(b);
        }
        let refs: Vec<&GraphBatch> = batches.iter().collect();
        let each: Vec<f64> = refs.iter().map(|b| model.sample_loss(&theta, b).unwrap()).collect();
        let mean = model.loss(&theta, &refs).unwrap();
        assert!((mean - each.iter().sum::<f64>() / 4.0).abs() < 1e-15);
    }

    #[test]
    fn feature_width_mismatch() {
        let model = GatedGcn::new(&tiny_hyper(), 6, 2).unwrap();
        let theta = vec![0.0; model.n_params()];
        assert!(matches!(model.predict(&theta, &tiny_batch()), Err(Error::Shape { .. })));
    }
}
