//! Tape-based reverse-mode differentiation over tensor primitives.
//!
//! Each call on [`Tape`] runs the forward kernel immediately, stores the
//! result as a node, and remembers which nodes fed it. [`Tape::backward`]
//! then walks the nodes from last to first exactly once, pushing adjoints
//! to the inputs of every op that lies on a path requiring gradients.

use std::collections::hash_map::DefaultHasher;
use std::hash::Hasher;

use crate::error::{Error, Result};
use crate::ops;
use crate::tensor::{Real, Shape, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Conv2d { x: Var, w: Var, b: Var, dilation: usize },
    MaxPool { x: Var, argmax: Vec<usize> },
    Concat { parts: Vec<Var> },
    Dense { x: Var, w: Var, b: Var },
    Relu { x: Var },
    Sigmoid { x: Var },
    GlobalAvgPool { x: Var },
    Flatten { x: Var },
    Sum { x: Var },
    Bce { p: Var, targets: Vec<T> },
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

/// Adjoints produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
    shapes: Vec<Shape>,
    visited: usize,
}

impl<T: Real> Gradients<T> {
    /// Gradient of the loss with respect to `v`; zeros if `v` does not
    /// influence the loss.
    pub fn get(&self, v: Var) -> Tensor<T> {
        self.grads[v.0]
            .clone()
            .unwrap_or_else(|| Tensor::zeros(self.shapes[v.0]))
    }

    /// Move the gradient out, leaving nothing behind.
    pub fn take(&mut self, v: Var) -> Tensor<T> {
        self.grads[v.0]
            .take()
            .unwrap_or_else(|| Tensor::zeros(self.shapes[v.0]))
    }

    /// Number of tape nodes replayed by the reverse sweep.
    pub fn visited(&self) -> usize {
        self.visited
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> Shape {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// A trainable leaf: gradients are accumulated for it.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A constant leaf (inputs, labels): no gradient flows into it.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, dilation: usize) -> Result<Var> {
        let y = ops::conv2d_forward(self.value(x), self.value(w), self.value(b), dilation)?;
        let rg = self.rg(&[x, w, b]);
        Ok(self.push(y, Op::Conv2d { x, w, b, dilation }, rg))
    }

    pub fn maxpool2d(&mut self, x: Var, m: usize) -> Result<Var> {
        let (y, argmax) = ops::maxpool2d_with_indices(self.value(x), m)?;
        let rg = self.rg(&[x]);
        Ok(self.push(y, Op::MaxPool { x, argmax }, rg))
    }

    pub fn concat_channels(&mut self, parts: &[Var]) -> Result<Var> {
        let y = {
            let refs: Vec<&Tensor<T>> = parts.iter().map(|&p| self.value(p)).collect();
            ops::concat_channels(&refs)?
        };
        let rg = self.rg(parts);
        Ok(self.push(y, Op::Concat { parts: parts.to_vec() }, rg))
    }

    pub fn dense(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let y = ops::dense(self.value(x), self.value(w), self.value(b))?;
        let rg = self.rg(&[x, w, b]);
        Ok(self.push(y, Op::Dense { x, w, b }, rg))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let y = ops::relu(self.value(x));
        let rg = self.rg(&[x]);
        self.push(y, Op::Relu { x }, rg)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let y = ops::sigmoid(self.value(x));
        let rg = self.rg(&[x]);
        self.push(y, Op::Sigmoid { x }, rg)
    }

    pub fn global_avg_pool(&mut self, x: Var) -> Var {
        let y = ops::global_avg_pool(self.value(x));
        let rg = self.rg(&[x]);
        self.push(y, Op::GlobalAvgPool { x }, rg)
    }

    /// `(n, h, w, c) -> (n, 1, 1, h·w·c)`; the data order is unchanged.
    pub fn flatten(&mut self, x: Var) -> Var {
        let s = self.shape(x);
        let y = self
            .value(x)
            .clone()
            .reshape(Shape::new(s.n, 1, 1, s.h * s.w * s.c))
            .expect("flatten preserves element count");
        let rg = self.rg(&[x]);
        self.push(y, Op::Flatten { x }, rg)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let y = Tensor::scalar(self.value(x).sum());
        let rg = self.rg(&[x]);
        self.push(y, Op::Sum { x }, rg)
    }

    pub fn bce_loss(&mut self, p: Var, targets: &[T]) -> Result<Var> {
        let l = ops::bce_loss(self.value(p), targets)?;
        let rg = self.rg(&[p]);
        Ok(self.push(
            Tensor::scalar(l),
            Op::Bce {
                p,
                targets: targets.to_vec(),
            },
            rg,
        ))
    }

    /// Fingerprint of every piecewise-linear branch taken in the forward
    /// pass (ReLU on/off states and max-pool winners). Two evaluations with
    /// equal fingerprints lie on the same differentiable piece.
    pub fn branch_fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for node in &self.nodes {
            match &node.op {
                Op::Relu { .. } => {
                    for &v in node.value.data() {
                        h.write_u8((v > T::zero()) as u8);
                    }
                }
                Op::MaxPool { argmax, .. } => {
                    for &i in argmax {
                        h.write_usize(i);
                    }
                }
                _ => {}
            }
        }
        h.finish()
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let loss_shape = self.shape(loss);
        if loss_shape != Shape::scalar() {
            return Err(Error::NonScalarLoss(loss_shape));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(T::one()));
        let mut visited = 0;

        for idx in (0..self.nodes.len()).rev() {
            visited += 1;
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(dy) = grads[idx].take() else {
                continue;
            };
            let needs = |v: &Var| self.nodes[v.0].requires_grad;
            match &node.op {
                Op::Leaf => {
                    grads[idx] = Some(dy);
                }
                Op::Conv2d { x, w, b, dilation } => {
                    let g = ops::conv2d_backward(self.value(*x), self.value(*w), *dilation, &dy, needs(x));
                    if let Some(dx) = g.dx {
                        accumulate(&mut grads, *x, dx);
                    }
                    if needs(w) {
                        accumulate(&mut grads, *w, g.dw);
                    }
                    if needs(b) {
                        accumulate(&mut grads, *b, g.db);
                    }
                }
                Op::MaxPool { x, argmax } => {
                    let dx = ops::maxpool2d_backward(self.shape(*x), argmax, &dy);
                    accumulate(&mut grads, *x, dx);
                }
                Op::Concat { parts } => {
                    let widths: Vec<usize> = parts.iter().map(|p| self.shape(*p).c).collect();
                    let pieces = ops::split_channels(&dy, &widths)?;
                    for (p, g) in parts.iter().zip(pieces) {
                        if needs(p) {
                            accumulate(&mut grads, *p, g);
                        }
                    }
                }
                Op::Dense { x, w, b } => {
                    let g = ops::dense_backward(self.value(*x), self.value(*w), &dy, needs(x));
                    if let Some(dx) = g.dx {
                        accumulate(&mut grads, *x, dx);
                    }
                    if needs(w) {
                        accumulate(&mut grads, *w, g.dw);
                    }
                    if needs(b) {
                        accumulate(&mut grads, *b, g.db);
                    }
                }
                Op::Relu { x } => {
                    accumulate(&mut grads, *x, ops::relu_backward(&node.value, &dy));
                }
                Op::Sigmoid { x } => {
                    accumulate(&mut grads, *x, ops::sigmoid_backward(&node.value, &dy));
                }
                Op::GlobalAvgPool { x } => {
                    accumulate(&mut grads, *x, ops::global_avg_pool_backward(self.shape(*x), &dy));
                }
                Op::Flatten { x } => {
                    accumulate(&mut grads, *x, dy.reshape(self.shape(*x))?);
                }
                Op::Sum { x } => {
                    let g = dy.data()[0];
                    accumulate(&mut grads, *x, Tensor::full(self.shape(*x), g));
                }
                Op::Bce { p, targets } => {
                    let dp = ops::bce_loss_backward(self.value(*p), targets, dy.data()[0]);
                    accumulate(&mut grads, *p, dp);
                }
            }
        }

        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape()).collect(),
            visited,
        })
    }
}

fn accumulate<T: Real>(grads: &mut [Option<Tensor<T>>], v: Var, g: Tensor<T>) {
    match &mut grads[v.0] {
        Some(acc) => acc.add_assign(&g).expect("adjoint shape matches node"),
        slot @ None => *slot = Some(g),
    }
}
