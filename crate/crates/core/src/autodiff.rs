//! Minimal tape-based reverse-mode automatic differentiation over dense
//! `f64` tensors.
//!
//! Every forward op appends a [`Node`] to a [`Tape`] and returns a [`Var`]
//! handle. [`Tape::backward`] walks the tape in reverse and returns the
//! gradient of a scalar root with respect to every node.
//!
//! The op set is deliberately small: it covers an MLP forward pass, binary
//! cross-entropy on logits, and the masked log-sum-exp extrema used by the
//! fairness margins. Subgroup selection is expressed with boolean masks over
//! the flattened tensor so the graph shape never depends on the batch
//! composition.
//!
//! ```
//! use fairmargin::autodiff::{Tape, Tensor};
//!
//! let mut tape = Tape::new();
//! let x = tape.param(Tensor::vector(vec![0.0, 0.0]));
//! let y = tape.lse_max(x, &[true, true]).unwrap();
//! assert!((tape.value(y).item() - 2f64.ln()).abs() < 1e-15);
//!
//! let grads = tape.backward(y).unwrap();
//! assert_eq!(grads.get(x).unwrap().data(), &[0.5, 0.5]);
//! ```

use std::fmt;

use thiserror::Error;

/// Errors raised by tensor construction and tape operations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum AutodiffError {
    #[error("{op}: shape mismatch between {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("tensor shape {shape:?} does not hold {len} values")]
    BadShape { shape: Vec<usize>, len: usize },
    #[error("{op}: mask selects no elements")]
    EmptyPool { op: &'static str },
    #[error("backward root must be a scalar, got shape {shape:?}")]
    NonScalarRoot { shape: Vec<usize> },
    #[error("bce target at index {index} is {value}, expected 0 or 1")]
    InvalidTarget { index: usize, value: f64 },
}

pub type Result<T> = std::result::Result<T, AutodiffError>;

/// Dense row-major array of `f64`.
#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if shape.contains(&0) || expected != data.len() {
            return Err(AutodiffError::BadShape { shape, len: data.len() });
        }
        Ok(Self { shape, data })
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: vec![1],
            data: vec![value],
        }
    }

    /// Rank-1 tensor. Panics on an empty vector.
    pub fn vector(data: Vec<f64>) -> Self {
        assert!(!data.is_empty(), "empty tensor");
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; len],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// The single value of a scalar tensor.
    pub fn item(&self) -> f64 {
        debug_assert!(self.is_scalar());
        self.data[0]
    }

    /// `(rows, cols)` of a rank-2 tensor; rank-1 tensors count as one row.
    pub fn dims2(&self) -> (usize, usize) {
        match self.shape.as_slice() {
            [n] => (1, *n),
            [r, c] => (*r, *c),
            other => panic!("dims2 on rank-{} tensor", other.len()),
        }
    }

    pub fn get2(&self, row: usize, col: usize) -> f64 {
        let (_, cols) = self.dims2();
        self.data[row * cols + col]
    }

    fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor{:?}{:?}", self.shape, self.data)
    }
}

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Recorded operation together with whatever forward state its backward
/// rule needs.
#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(Var, Var),
    /// `a[m×n] + b[n]`, bias broadcast over rows.
    AddBias(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Neg(Var),
    MatMul(Var, Var),
    Relu(Var),
    Sigmoid(Var),
    /// Saved softmax weights over the masked pool, zero elsewhere.
    LseMax {
        x: Var,
        weights: Vec<f64>,
    },
    Hinge(Var),
    Bce {
        logits: Var,
        targets: Vec<f64>,
    },
    Mean {
        x: Var,
        mask: Vec<bool>,
        count: usize,
    },
}

#[derive(Debug, Clone)]
pub struct Node {
    op: Op,
    value: Tensor,
}

impl Node {
    pub fn value(&self) -> &Tensor {
        &self.value
    }

    /// Node ids this node reads from.
    pub fn parents(&self) -> Vec<Var> {
        match &self.op {
            Op::Leaf => vec![],
            Op::Add(a, b) | Op::AddBias(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::MatMul(a, b) => {
                vec![*a, *b]
            }
            Op::Scale(a, _) | Op::Neg(a) | Op::Relu(a) | Op::Sigmoid(a) | Op::Hinge(a) => vec![*a],
            Op::LseMax { x, .. } | Op::Mean { x, .. } => vec![*x],
            Op::Bce { logits, .. } => vec![*logits],
        }
    }
}

/// Gradients produced by one backward pass, indexed by [`Var`].
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the root w.r.t. `var`; `None` if `var` does not
    /// influence the root.
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    /// Gradient as a dense tensor, materializing zeros for unreached nodes.
    pub fn get_or_zeros(&self, var: Var, shape: &[usize]) -> Tensor {
        self.get(var).cloned().unwrap_or_else(|| Tensor::zeros(shape))
    }
}

/// Append-only computation graph.
#[derive(Debug, Default, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
    params: Vec<Var>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    /// Registered trainable leaves, in registration order.
    pub fn params(&self) -> &[Var] {
        &self.params
    }

    fn push(&mut self, op: Op, value: Tensor) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    /// Non-trainable input leaf.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(Op::Leaf, value)
    }

    /// Trainable leaf, recorded in the parameter registry.
    pub fn param(&mut self, value: Tensor) -> Var {
        let v = self.push(Op::Leaf, value);
        self.params.push(v);
        v
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    fn shape_of(&self, var: Var) -> &[usize] {
        &self.nodes[var.0].value.shape
    }

    fn zip(&self, op: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape != tb.shape {
            return Err(AutodiffError::ShapeMismatch {
                op,
                left: ta.shape.clone(),
                right: tb.shape.clone(),
            });
        }
        Ok(Tensor {
            shape: ta.shape.clone(),
            data: ta.data.iter().zip(&tb.data).map(|(&x, &y)| f(x, y)).collect(),
        })
    }

    /// Elementwise sum. `b` may also be a bias row broadcast along the
    /// trailing axis of a rank-2 `a`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape_of(a) == self.shape_of(b) {
            let value = self.zip("add", a, b, |x, y| x + y)?;
            return Ok(self.push(Op::Add(a, b), value));
        }
        let ta = self.value(a);
        let tb = self.value(b);
        let broadcastable = ta.shape.len() == 2
            && match tb.shape.as_slice() {
                [n] => *n == ta.shape[1],
                [1, n] => *n == ta.shape[1],
                _ => false,
            };
        if !broadcastable {
            return Err(AutodiffError::ShapeMismatch {
                op: "add",
                left: ta.shape.clone(),
                right: tb.shape.clone(),
            });
        }
        let cols = ta.shape[1];
        let data = ta.data.iter().enumerate().map(|(i, &x)| x + tb.data[i % cols]).collect();
        let value = Tensor {
            shape: ta.shape.clone(),
            data,
        };
        Ok(self.push(Op::AddBias(a, b), value))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.zip("sub", a, b, |x, y| x - y)?;
        Ok(self.push(Op::Sub(a, b), value))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.zip("mul", a, b, |x, y| x * y)?;
        Ok(self.push(Op::Mul(a, b), value))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a).map(|x| x * c);
        self.push(Op::Scale(a, c), value)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| -x);
        self.push(Op::Neg(a), value)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape.len() != 2 || tb.shape.len() != 2 || ta.shape[1] != tb.shape[0] {
            return Err(AutodiffError::ShapeMismatch {
                op: "matmul",
                left: ta.shape.clone(),
                right: tb.shape.clone(),
            });
        }
        let (m, k, n) = (ta.shape[0], ta.shape[1], tb.shape[1]);
        let data = matmul_raw(&ta.data, &tb.data, m, k, n);
        let value = Tensor { shape: vec![m, n], data };
        Ok(self.push(Op::MatMul(a, b), value))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| if x > 0.0 { x } else { 0.0 });
        self.push(Op::Relu(a), value)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).map(sigmoid);
        self.push(Op::Sigmoid(a), value)
    }

    /// `log Σ_{i∈mask} exp(x_i)`, evaluated with the masked maximum
    /// subtracted first. Backward is the softmax over the pool.
    pub fn lse_max(&mut self, x: Var, mask: &[bool]) -> Result<Var> {
        let tx = self.value(x);
        if mask.len() != tx.len() {
            return Err(AutodiffError::ShapeMismatch {
                op: "lse_max",
                left: tx.shape.clone(),
                right: vec![mask.len()],
            });
        }
        let (value, weights) = masked_lse(&tx.data, mask).ok_or(AutodiffError::EmptyPool { op: "lse_max" })?;
        Ok(self.push(Op::LseMax { x, weights }, Tensor::scalar(value)))
    }

    /// `-log Σ_{i∈mask} exp(-x_i)`, recorded as `-lse_max(-x)` so the
    /// identity holds bit for bit.
    pub fn lse_min(&mut self, x: Var, mask: &[bool]) -> Result<Var> {
        if mask.len() != self.value(x).len() {
            return Err(AutodiffError::ShapeMismatch {
                op: "lse_min",
                left: self.shape_of(x).to_vec(),
                right: vec![mask.len()],
            });
        }
        if !mask.iter().any(|&m| m) {
            return Err(AutodiffError::EmptyPool { op: "lse_min" });
        }
        let negated = self.neg(x);
        let lse = self.lse_max(negated, mask)?;
        Ok(self.neg(lse))
    }

    /// `max(0, x)` with subgradient 0 at `x == 0`.
    pub fn hinge(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| if v > 0.0 { v } else { 0.0 });
        self.push(Op::Hinge(x), value)
    }

    /// Mean binary cross-entropy on logits,
    /// `max(ℓ,0) − yℓ + ln(1+e^{−|ℓ|})` per element.
    pub fn bce_with_logits(&mut self, logits: Var, targets: &Tensor) -> Result<Var> {
        let tl = self.value(logits);
        if tl.shape != targets.shape {
            return Err(AutodiffError::ShapeMismatch {
                op: "bce_with_logits",
                left: tl.shape.clone(),
                right: targets.shape.clone(),
            });
        }
        if let Some((index, &value)) = targets.data.iter().enumerate().find(|(_, &y)| y != 0.0 && y != 1.0) {
            return Err(AutodiffError::InvalidTarget { index, value });
        }
        let sum: f64 = tl.data.iter().zip(&targets.data).map(|(&l, &y)| bce_term(l, y)).sum();
        let value = sum / tl.len() as f64;
        Ok(self.push(
            Op::Bce {
                logits,
                targets: targets.data.clone(),
            },
            Tensor::scalar(value),
        ))
    }

    /// Mean over the masked elements.
    pub fn mean(&mut self, x: Var, mask: &[bool]) -> Result<Var> {
        let tx = self.value(x);
        if mask.len() != tx.len() {
            return Err(AutodiffError::ShapeMismatch {
                op: "mean",
                left: tx.shape.clone(),
                right: vec![mask.len()],
            });
        }
        let count = mask.iter().filter(|&&m| m).count();
        if count == 0 {
            return Err(AutodiffError::EmptyPool { op: "mean" });
        }
        let sum: f64 = tx.data.iter().zip(mask).filter(|(_, &m)| m).map(|(&v, _)| v).sum();
        let value = Tensor::scalar(sum / count as f64);
        Ok(self.push(
            Op::Mean {
                x,
                mask: mask.to_vec(),
                count,
            },
            value,
        ))
    }

    /// Mean over all elements.
    pub fn mean_all(&mut self, x: Var) -> Var {
        let mask = vec![true; self.value(x).len()];
        self.mean(x, &mask).expect("tensors are never empty")
    }

    /// Reverse pass from a scalar root. Accumulators start at zero on
    /// every call, so repeated calls return identical gradients.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        let root_value = self.value(root);
        if !root_value.is_scalar() {
            return Err(AutodiffError::NonScalarRoot {
                shape: root_value.shape.clone(),
            });
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; root.0 + 1];
        grads[root.0] = Some(Tensor {
            shape: root_value.shape.clone(),
            data: vec![1.0],
        });

        for idx in (0..=root.0).rev() {
            let Some(upstream) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, upstream.clone());
                    accumulate(&mut grads, *b, upstream.clone());
                }
                Op::AddBias(a, b) => {
                    let bshape = self.shape_of(*b).to_vec();
                    let cols = *bshape.last().unwrap();
                    let mut db = vec![0.0; cols];
                    for (i, &g) in upstream.data.iter().enumerate() {
                        db[i % cols] += g;
                    }
                    accumulate(&mut grads, *a, upstream.clone());
                    accumulate(&mut grads, *b, Tensor { shape: bshape, data: db });
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *a, upstream.clone());
                    accumulate(&mut grads, *b, upstream.map(|g| -g));
                }
                Op::Mul(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let da = zip_data(&upstream, tb, |g, y| g * y);
                    let db = zip_data(&upstream, ta, |g, x| g * x);
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::Scale(a, c) => {
                    let c = *c;
                    accumulate(&mut grads, *a, upstream.map(|g| g * c));
                }
                Op::Neg(a) => accumulate(&mut grads, *a, upstream.map(|g| -g)),
                Op::MatMul(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let (m, k, n) = (ta.shape[0], ta.shape[1], tb.shape[1]);
                    // dA = dC·Bᵀ, dB = Aᵀ·dC
                    let bt = transpose(&tb.data, k, n);
                    let at = transpose(&ta.data, m, k);
                    let da = matmul_raw(&upstream.data, &bt, m, n, k);
                    let db = matmul_raw(&at, &upstream.data, k, m, n);
                    accumulate(
                        &mut grads,
                        *a,
                        Tensor {
                            shape: vec![m, k],
                            data: da,
                        },
                    );
                    accumulate(
                        &mut grads,
                        *b,
                        Tensor {
                            shape: vec![k, n],
                            data: db,
                        },
                    );
                }
                Op::Relu(a) => {
                    let d = zip_data(&upstream, self.value(*a), |g, x| if x > 0.0 { g } else { 0.0 });
                    accumulate(&mut grads, *a, d);
                }
                Op::Sigmoid(a) => {
                    let d = zip_data(&upstream, &node.value, |g, s| g * s * (1.0 - s));
                    accumulate(&mut grads, *a, d);
                }
                Op::LseMax { x, weights } => {
                    let g = upstream.item();
                    let d = Tensor {
                        shape: self.shape_of(*x).to_vec(),
                        data: weights.iter().map(|&w| g * w).collect(),
                    };
                    accumulate(&mut grads, *x, d);
                }
                Op::Hinge(a) => {
                    let d = zip_data(&upstream, self.value(*a), |g, x| if x > 0.0 { g } else { 0.0 });
                    accumulate(&mut grads, *a, d);
                }
                Op::Bce { logits, targets } => {
                    let tl = self.value(*logits);
                    let scale = upstream.item() / tl.len() as f64;
                    let data = tl.data.iter().zip(targets).map(|(&l, &y)| scale * (sigmoid(l) - y)).collect();
                    accumulate(
                        &mut grads,
                        *logits,
                        Tensor {
                            shape: tl.shape.clone(),
                            data,
                        },
                    );
                }
                Op::Mean { x, mask, count } => {
                    let g = upstream.item() / *count as f64;
                    let d = Tensor {
                        shape: self.shape_of(*x).to_vec(),
                        data: mask.iter().map(|&m| if m { g } else { 0.0 }).collect(),
                    };
                    accumulate(&mut grads, *x, d);
                }
            }
            grads[idx] = Some(upstream);
        }
        Ok(Gradients { grads })
    }
}

fn accumulate(grads: &mut [Option<Tensor>], var: Var, delta: Tensor) {
    match &mut grads[var.0] {
        Some(acc) => {
            for (a, d) in acc.data.iter_mut().zip(&delta.data) {
                *a += d;
            }
        }
        slot @ None => *slot = Some(delta),
    }
}

fn zip_data(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    Tensor {
        shape: a.shape.clone(),
        data: a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect(),
    }
}

fn bce_term(logit: f64, target: f64) -> f64 {
    logit.max(0.0) - target * logit + (-logit.abs()).exp().ln_1p()
}

/// Masked log-sum-exp and its softmax weights; `None` for an empty mask.
fn masked_lse(values: &[f64], mask: &[bool]) -> Option<(f64, Vec<f64>)> {
    let max = values
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(&v, _)| v)
        .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))))?;
    let mut weights: Vec<f64> = values
        .iter()
        .zip(mask)
        .map(|(&v, &m)| if m { (v - max).exp() } else { 0.0 })
        .collect();
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    Some((max + total.ln(), weights))
}

pub(crate) fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
    out
}

fn transpose(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = a[r * cols + c];
        }
    }
    out
}
