//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records the forward pass of one training example as a flat
//! tape of nodes; `backward_bce` replays the tape in reverse and accumulates
//! gradients into the owning [`ParamSet`]. The op set is exactly what the
//! scorers need: embedding row lookup, masked average lookup, element-wise
//! product, concatenation, affine layers, ReLU, and a sigmoid output head.
//!
//! Gradients *accumulate* across calls (`+=`), so a minibatch is a sequence
//! of forward/backward pairs between `zero_grads` and `adam_step`.

use crate::error::{Error, Result};
use crate::param::{ParamId, ParamSet};
use crate::tensor::{bce_loss, sigmoid};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Clone, Debug)]
enum Node {
    LookupRow {
        table: ParamId,
        row: usize,
    },
    LookupAvg {
        table: ParamId,
        indices: Vec<u32>,
        mask: Vec<u8>,
        live: u32,
    },
    Mul {
        a: NodeId,
        b: NodeId,
    },
    Concat {
        parts: Vec<NodeId>,
    },
    Affine {
        w: ParamId,
        b: ParamId,
        x: NodeId,
    },
    Relu {
        x: NodeId,
    },
    Sigmoid {
        x: NodeId,
    },
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    values: Vec<Vec<f32>>,
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    fn push(&mut self, node: Node, value: Vec<f32>) -> NodeId {
        self.nodes.push(node);
        self.values.push(value);
        NodeId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: NodeId) -> &[f32] {
        &self.values[id.0]
    }

    /// Value of the most recently added node.
    pub fn output(&self) -> Result<&[f32]> {
        self.values
            .last()
            .map(|v| v.as_slice())
            .ok_or_else(|| Error::State("empty graph has no output".into()))
    }

    pub fn lookup_row(&mut self, ps: &ParamSet, table: ParamId, row: usize) -> Result<NodeId> {
        let t = &ps.get(table).value;
        let value = t.row(row)?.to_vec();
        Ok(self.push(Node::LookupRow { table, row }, value))
    }

    /// Masked mean of embedding rows; an all-masked input yields the zero
    /// vector and receives no gradient.
    pub fn lookup_avg(
        &mut self,
        ps: &ParamSet,
        table: ParamId,
        indices: &[u32],
        mask: &[u8],
    ) -> Result<NodeId> {
        let t = &ps.get(table).value;
        let dim = t.shape()[1];
        let mut value = vec![0.0f32; dim];
        crate::tensor::lookup_avg(t, indices, mask, &mut value)?;
        let live = indices
            .iter()
            .zip(mask)
            .filter(|&(_, &m)| m != 0)
            .count() as u32;
        Ok(self.push(
            Node::LookupAvg {
                table,
                indices: indices.to_vec(),
                mask: mask.to_vec(),
                live,
            },
            value,
        ))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (&self.values[a.0], &self.values[b.0]);
        if va.len() != vb.len() {
            return Err(Error::Shape(format!(
                "mul operands disagree: {} vs {}",
                va.len(),
                vb.len()
            )));
        }
        let value: Vec<f32> = va.iter().zip(vb).map(|(x, y)| x * y).collect();
        Ok(self.push(Node::Mul { a, b }, value))
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::Shape("concat of zero parts".into()));
        }
        let mut value = Vec::new();
        for p in parts {
            value.extend_from_slice(&self.values[p.0]);
        }
        Ok(self.push(
            Node::Concat {
                parts: parts.to_vec(),
            },
            value,
        ))
    }

    /// y = W x + b.
    pub fn affine(&mut self, ps: &ParamSet, w: ParamId, b: ParamId, x: NodeId) -> Result<NodeId> {
        let wt = &ps.get(w).value;
        let bt = &ps.get(b).value;
        let xv = &self.values[x.0];
        let rows = wt.shape()[0];
        let mut value = vec![0.0f32; rows];
        crate::tensor::dense_forward(wt, xv, bt.data(), &mut value)?;
        Ok(self.push(Node::Affine { w, b, x }, value))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let value: Vec<f32> = self.values[x.0]
            .iter()
            .map(|&v| if v > 0.0 { v } else { 0.0 })
            .collect();
        self.push(Node::Relu { x }, value)
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let value: Vec<f32> = self.values[x.0].iter().map(|&v| sigmoid(v)).collect();
        self.push(Node::Sigmoid { x }, value)
    }

    /// The pre-sigmoid value feeding the output head, if the tape ends in one.
    pub fn logit(&self) -> Result<f32> {
        match self.nodes.last() {
            Some(Node::Sigmoid { x }) if self.values[x.0].len() == 1 => Ok(self.values[x.0][0]),
            _ => Err(Error::State(
                "tape does not end in a scalar sigmoid head".into(),
            )),
        }
    }

    /// Backward pass for binary cross-entropy against `label`, seeding the
    /// gradient at the logit (dL/dz = p - y), which sidesteps the blow-up of
    /// dL/dp at saturated outputs. Accumulates into `ps` gradients and
    /// returns the example loss.
    pub fn backward_bce(&self, ps: &mut ParamSet, label: f32) -> Result<f64> {
        let last = match self.nodes.last() {
            Some(n) => n,
            None => return Err(Error::State("backward over empty tape".into())),
        };
        let (head_input, pred) = match last {
            Node::Sigmoid { x } if self.values[x.0].len() == 1 => {
                (*x, self.values[self.nodes.len() - 1][0])
            }
            _ => {
                return Err(Error::State(
                    "backward_bce needs the tape to end in a scalar sigmoid head".into(),
                ))
            }
        };
        if !(0.0..=1.0).contains(&label) {
            return Err(Error::State(format!("label {label} outside [0, 1]")));
        }
        let loss = bce_loss(pred, label);

        let mut grads: Vec<Vec<f32>> = self.values.iter().map(|v| vec![0.0; v.len()]).collect();
        grads[head_input.0][0] = pred - label;

        // Skip the sigmoid head itself; its contribution is already seeded.
        for i in (0..self.nodes.len() - 1).rev() {
            if grads[i].iter().all(|&g| g == 0.0) {
                continue;
            }
            let g = std::mem::take(&mut grads[i]);
            match &self.nodes[i] {
                Node::LookupRow { table, row } => {
                    let dst = ps.get_mut(*table).grad.row_mut(*row)?;
                    for (d, &gv) in dst.iter_mut().zip(&g) {
                        *d += gv;
                    }
                }
                Node::LookupAvg {
                    table,
                    indices,
                    mask,
                    live,
                } => {
                    if *live > 0 {
                        let scale = 1.0 / *live as f32;
                        let grad = &mut ps.get_mut(*table).grad;
                        for (&idx, &m) in indices.iter().zip(mask) {
                            if m == 0 {
                                continue;
                            }
                            let dst = grad.row_mut(idx as usize)?;
                            for (d, &gv) in dst.iter_mut().zip(&g) {
                                *d += gv * scale;
                            }
                        }
                    }
                }
                Node::Mul { a, b } => {
                    for k in 0..g.len() {
                        let (va, vb) = (self.values[a.0][k], self.values[b.0][k]);
                        grads[a.0][k] += g[k] * vb;
                        grads[b.0][k] += g[k] * va;
                    }
                }
                Node::Concat { parts } => {
                    let mut off = 0;
                    for p in parts {
                        let n = self.values[p.0].len();
                        for k in 0..n {
                            grads[p.0][k] += g[off + k];
                        }
                        off += n;
                    }
                }
                Node::Affine { w, b, x } => {
                    let xv = self.values[x.0].clone();
                    let cols = xv.len();
                    {
                        let wp = ps.get_mut(*w);
                        for (r, &gr) in g.iter().enumerate() {
                            if gr == 0.0 {
                                continue;
                            }
                            let dst = &mut wp.grad.data_mut()[r * cols..(r + 1) * cols];
                            for (d, &xc) in dst.iter_mut().zip(&xv) {
                                *d += gr * xc;
                            }
                        }
                    }
                    {
                        let bp = ps.get_mut(*b);
                        for (d, &gr) in bp.grad.data_mut().iter_mut().zip(&g) {
                            *d += gr;
                        }
                    }
                    let wv = &ps.get(*w).value;
                    for (c, gx) in grads[x.0].iter_mut().enumerate() {
                        let mut acc = 0.0f64;
                        for (r, &gr) in g.iter().enumerate() {
                            acc += gr as f64 * wv.data()[r * cols + c] as f64;
                        }
                        *gx += acc as f32;
                    }
                }
                Node::Relu { x } => {
                    for k in 0..g.len() {
                        if self.values[x.0][k] > 0.0 {
                            grads[x.0][k] += g[k];
                        }
                    }
                }
                Node::Sigmoid { x } => {
                    // Interior sigmoids (not the loss head) differentiate
                    // through p(1 - p).
                    for k in 0..g.len() {
                        let p = self.values[i][k];
                        grads[x.0][k] += g[k] * p * (1.0 - p);
                    }
                }
            }
        }
        Ok(loss)
    }
}
