//! Dense row-major tensors and the small set of numeric kernels the scorers
//! need. Values are stored and multiplied in f32; reductions (dot products,
//! averages, losses) accumulate in f64 before rounding back, which keeps
//! summation order artifacts below test tolerances.

use crate::error::{Error, Result};
use crate::rng::RngState;

/// Sigmoid outputs and BCE inputs are clamped to [EPS, 1 - EPS] so the loss
/// and its gradient stay finite even for saturated logits.
pub const PROB_EPS: f32 = 1e-7;

/// Row-major dense tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f32>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Shape(format!(
                "shape {:?} wants {} elements, got {}",
                shape,
                n,
                data.len()
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn scalar(v: f32) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![v],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    /// Row `i` of a rank-2 tensor.
    pub fn row(&self, i: usize) -> Result<&[f32]> {
        if self.shape.len() != 2 {
            return Err(Error::Shape(format!(
                "row() needs rank-2 tensor, got shape {:?}",
                self.shape
            )));
        }
        let (rows, cols) = (self.shape[0], self.shape[1]);
        if i >= rows {
            return Err(Error::Lookup {
                what: "row",
                index: i,
                size: rows,
            });
        }
        Ok(&self.data[i * cols..(i + 1) * cols])
    }

    pub fn row_mut(&mut self, i: usize) -> Result<&mut [f32]> {
        if self.shape.len() != 2 {
            return Err(Error::Shape(format!(
                "row_mut() needs rank-2 tensor, got shape {:?}",
                self.shape
            )));
        }
        let (rows, cols) = (self.shape[0], self.shape[1]);
        if i >= rows {
            return Err(Error::Lookup {
                what: "row",
                index: i,
                size: rows,
            });
        }
        Ok(&mut self.data[i * cols..(i + 1) * cols])
    }
}

/// Xavier/Glorot uniform init over an explicit (fan_in, fan_out) pair:
/// U(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
pub fn xavier_fill(rng: &mut RngState, t: &mut Tensor, fan_in: usize, fan_out: usize) {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    for v in t.data_mut() {
        *v = ((rng.next_f64() * 2.0 - 1.0) * a) as f32;
    }
}

/// Fans for a weight tensor as the layers use it: rank-2 `[out, in]` maps
/// columns to fan_in and rows to fan_out; rank-1 tensors are treated as a
/// single-output projection (embedding rows and the output head both follow
/// this rule); rank-0/biases should be zero-initialized instead.
pub fn weight_fans(shape: &[usize]) -> (usize, usize) {
    match shape {
        [n] => (*n, 1),
        [out, inp] => (*inp, *out),
        _ => {
            let n: usize = shape.iter().product();
            (n, 1)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
    Sigmoid,
}

impl Activation {
    pub fn apply(self, x: f32) -> f32 {
        match self {
            Activation::Identity => x,
            Activation::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => sigmoid(x),
        }
    }
}

/// Numerically stable logistic function, clamped away from {0, 1}.
pub fn sigmoid(x: f32) -> f32 {
    let p = if x >= 0.0 {
        1.0 / (1.0 + (-x as f64).exp())
    } else {
        let e = (x as f64).exp();
        e / (1.0 + e)
    };
    (p as f32).clamp(PROB_EPS, 1.0 - PROB_EPS)
}

/// y = W x + b for W: [out, in], x: [in], b: [out]. Dot products accumulate
/// in f64.
pub fn dense_forward(w: &Tensor, x: &[f32], b: &[f32], out: &mut [f32]) -> Result<()> {
    if w.shape().len() != 2 {
        return Err(Error::Shape(format!(
            "dense weight must be rank-2, got {:?}",
            w.shape()
        )));
    }
    let (rows, cols) = (w.shape()[0], w.shape()[1]);
    if x.len() != cols || b.len() != rows || out.len() != rows {
        return Err(Error::Shape(format!(
            "dense shapes disagree: W [{}, {}], x {}, b {}, out {}",
            rows,
            cols,
            x.len(),
            b.len(),
            out.len()
        )));
    }
    for r in 0..rows {
        let wr = &w.data()[r * cols..(r + 1) * cols];
        let mut acc = b[r] as f64;
        for (wv, xv) in wr.iter().zip(x) {
            acc += *wv as f64 * *xv as f64;
        }
        out[r] = acc as f32;
    }
    Ok(())
}

pub fn elementwise_mul(a: &[f32], b: &[f32], out: &mut [f32]) -> Result<()> {
    if a.len() != b.len() || a.len() != out.len() {
        return Err(Error::Shape(format!(
            "elementwise_mul lengths disagree: {} vs {} vs {}",
            a.len(),
            b.len(),
            out.len()
        )));
    }
    for i in 0..a.len() {
        out[i] = a[i] * b[i];
    }
    Ok(())
}

/// Mean of the table rows selected by `indices`, skipping entries where the
/// mask is 0. All-masked inputs average zero rows and return the zero vector,
/// matching an entity with no observed tokens.
pub fn lookup_avg(table: &Tensor, indices: &[u32], mask: &[u8], out: &mut [f32]) -> Result<()> {
    if table.shape().len() != 2 {
        return Err(Error::Shape(format!(
            "lookup table must be rank-2, got {:?}",
            table.shape()
        )));
    }
    let (rows, cols) = (table.shape()[0], table.shape()[1]);
    if indices.len() != mask.len() {
        return Err(Error::Shape(format!(
            "indices/mask lengths disagree: {} vs {}",
            indices.len(),
            mask.len()
        )));
    }
    if out.len() != cols {
        return Err(Error::Shape(format!(
            "lookup_avg out length {} != embedding dim {}",
            out.len(),
            cols
        )));
    }
    let mut acc = vec![0.0f64; cols];
    let mut live = 0u32;
    for (&idx, &m) in indices.iter().zip(mask) {
        if m == 0 {
            continue;
        }
        let idx = idx as usize;
        if idx >= rows {
            return Err(Error::Lookup {
                what: "embedding row",
                index: idx,
                size: rows,
            });
        }
        live += 1;
        for (a, &v) in acc.iter_mut().zip(&table.data()[idx * cols..(idx + 1) * cols]) {
            *a += v as f64;
        }
    }
    if live == 0 {
        out.fill(0.0);
    } else {
        for (o, a) in out.iter_mut().zip(&acc) {
            *o = (*a / live as f64) as f32;
        }
    }
    Ok(())
}

/// Binary cross-entropy of one prediction: -(y ln p + (1-y) ln (1-p)),
/// with p clamped to [PROB_EPS, 1 - PROB_EPS].
pub fn bce_loss(pred: f32, label: f32) -> f64 {
    let p = (pred as f64).clamp(PROB_EPS as f64, 1.0 - PROB_EPS as f64);
    -(label as f64 * p.ln() + (1.0 - label as f64) * (1.0 - p).ln())
}
