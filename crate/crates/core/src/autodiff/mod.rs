//! Dense-tensor reverse-mode automatic differentiation.
//!
//! A [`Graph`] records every primitive application as it happens; calling
//! [`Graph::backward`] on a scalar output walks the record in reverse and
//! accumulates vector-Jacobian products into every leaf created with
//! `requires_grad = true`. Graphs are rebuilt per forward pass and confined
//! to one thread; distinct graphs may run in parallel.
//!
//! All values are 64-bit floats. Elementwise binary ops broadcast like
//! NumPy: shapes are right-aligned and extents of 1 stretch.
//!
//! Shape mismatches are programming errors and panic with the primitive
//! name and both shapes.

mod check;

pub use check::{grad_check, GradCheckConfig};

use std::cell::RefCell;

use ndarray::{concatenate, ArrayD, Axis, IxDyn, Slice};

use crate::error::{Error, Result};

enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Matmul(usize, usize),
    Concat { inputs: Vec<usize>, axis: usize },
    Slice { input: usize, axis: usize, start: usize },
    Reshape(usize),
    Transpose(usize),
    ReduceSum { input: usize, axis: usize },
    ReduceMean { input: usize, axis: usize },
    Sigmoid(usize),
    Tanh(usize),
    Elu { input: usize, alpha: f64 },
    Exp(usize),
    Log(usize),
    Softmax { input: usize, axis: usize },
}

struct Node {
    value: ArrayD<f64>,
    grad: Option<ArrayD<f64>>,
    op: Op,
    needs_grad: bool,
}

/// Record of primitive applications forming one forward pass.
pub struct Graph {
    nodes: RefCell<Vec<Node>>,
    backward_done: RefCell<bool>,
}

/// Handle to a value in a [`Graph`]. Cheap to copy; all arithmetic goes
/// through the owning graph.
#[derive(Clone, Copy)]
pub struct Tensor<'g> {
    graph: &'g Graph,
    id: usize,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph {
            nodes: RefCell::new(Vec::new()),
            backward_done: RefCell::new(false),
        }
    }

    fn push(&self, value: ArrayD<f64>, op: Op, needs_grad: bool) -> Tensor<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            grad: None,
            op,
            needs_grad,
        });
        Tensor {
            graph: self,
            id: nodes.len() - 1,
        }
    }

    fn needs(&self, id: usize) -> bool {
        self.nodes.borrow()[id].needs_grad
    }

    /// Insert a differentiable leaf.
    pub fn leaf(&self, value: ArrayD<f64>, requires_grad: bool) -> Tensor<'_> {
        self.push(value, Op::Leaf, requires_grad)
    }

    /// Insert a value that never receives a gradient.
    pub fn constant(&self, value: ArrayD<f64>) -> Tensor<'_> {
        self.push(value, Op::Leaf, false)
    }

    /// 0-d constant.
    pub fn scalar(&self, x: f64) -> Tensor<'_> {
        self.constant(ArrayD::from_elem(IxDyn(&[]), x))
    }

    /// Concatenate along `axis`.
    pub fn concat<'g>(&'g self, parts: &[Tensor<'g>], axis: usize) -> Tensor<'g> {
        assert!(!parts.is_empty(), "concat: empty input list");
        let nodes = self.nodes.borrow();
        let views: Vec<_> = parts.iter().map(|t| nodes[t.id].value.view()).collect();
        let value = concatenate(Axis(axis), &views).unwrap_or_else(|e| {
            panic!(
                "concat: incompatible shapes {:?} along axis {axis}: {e}",
                parts.iter().map(|t| nodes[t.id].value.shape().to_vec()).collect::<Vec<_>>()
            )
        });
        let needs = parts.iter().any(|t| nodes[t.id].needs_grad);
        let ids = parts.iter().map(|t| t.id).collect();
        drop(nodes);
        self.push(value, Op::Concat { inputs: ids, axis }, needs)
    }

    /// Gradient of `t` after [`Graph::backward`], if one was accumulated.
    pub fn grad(&self, t: Tensor<'_>) -> Option<ArrayD<f64>> {
        self.nodes.borrow()[t.id]
            .grad
            .as_ref()
            .map(|g| g.as_standard_layout().into_owned())
    }

    /// Run reverse-mode accumulation from a scalar `loss`. May be called
    /// once per graph.
    pub fn backward(&self, loss: Tensor<'_>) -> Result<()> {
        if *self.backward_done.borrow() {
            return Err(Error::InvalidArgument(
                "backward already run on this graph".into(),
            ));
        }
        let mut nodes = self.nodes.borrow_mut();
        if nodes[loss.id].value.len() != 1 {
            return Err(Error::InvalidArgument(format!(
                "backward requires a scalar loss, got shape {:?}",
                nodes[loss.id].value.shape()
            )));
        }
        let seed_shape = nodes[loss.id].value.raw_dim();
        nodes[loss.id].grad = Some(ArrayD::ones(seed_shape));
        for id in (0..=loss.id).rev() {
            if nodes[id].grad.is_none() || !nodes[id].needs_grad {
                continue;
            }
            let contribs = vjp(&nodes, id);
            for (pid, c) in contribs {
                match &mut nodes[pid].grad {
                    Some(g) => *g += &c,
                    slot @ None => *slot = Some(c),
                }
            }
        }
        *self.backward_done.borrow_mut() = true;
        Ok(())
    }
}

/// Vector-Jacobian contributions of node `id` to its parents.
fn vjp(nodes: &[Node], id: usize) -> Vec<(usize, ArrayD<f64>)> {
    let g = nodes[id].grad.as_ref().expect("vjp on node without grad");
    let y = &nodes[id].value;
    let mut out: Vec<(usize, ArrayD<f64>)> = Vec::new();
    let mut emit = |pid: usize, contrib: ArrayD<f64>| {
        if nodes[pid].needs_grad {
            out.push((pid, contrib));
        }
    };
    match &nodes[id].op {
        Op::Leaf => {}
        Op::Add(a, b) => {
            emit(*a, reduce_to_shape(g.clone(), nodes[*a].value.shape()));
            emit(*b, reduce_to_shape(g.clone(), nodes[*b].value.shape()));
        }
        Op::Sub(a, b) => {
            emit(*a, reduce_to_shape(g.clone(), nodes[*a].value.shape()));
            emit(*b, reduce_to_shape(-g.clone(), nodes[*b].value.shape()));
        }
        Op::Mul(a, b) => {
            let av = broadcast_to(&nodes[*a].value, y.shape());
            let bv = broadcast_to(&nodes[*b].value, y.shape());
            emit(*a, reduce_to_shape(g * &bv, nodes[*a].value.shape()));
            emit(*b, reduce_to_shape(g * &av, nodes[*b].value.shape()));
        }
        Op::Matmul(a, b) => {
            let a2 = as2(&nodes[*a].value);
            let b2 = as2(&nodes[*b].value);
            let g2 = as2(g);
            emit(*a, g2.dot(&b2.t()).into_dyn());
            emit(*b, a2.t().dot(&g2).into_dyn());
        }
        Op::Concat { inputs, axis } => {
            let mut offset = 0;
            for pid in inputs {
                let len = nodes[*pid].value.shape()[*axis];
                let piece = g
                    .slice_axis(Axis(*axis), Slice::from(offset..offset + len))
                    .to_owned();
                emit(*pid, piece);
                offset += len;
            }
        }
        Op::Slice { input, axis, start } => {
            let mut gx = ArrayD::zeros(nodes[*input].value.raw_dim());
            let len = y.shape()[*axis];
            gx.slice_axis_mut(Axis(*axis), Slice::from(*start..*start + len))
                .assign(g);
            emit(*input, gx);
        }
        Op::Reshape(input) => {
            let shape = nodes[*input].value.shape().to_vec();
            emit(
                *input,
                g.as_standard_layout()
                    .into_owned()
                    .into_shape_with_order(IxDyn(&shape))
                    .expect("reshape grad"),
            );
        }
        Op::Transpose(input) => {
            emit(*input, g.clone().reversed_axes());
        }
        Op::ReduceSum { input, axis } => {
            let gx = broadcast_to(&g.clone().insert_axis(Axis(*axis)), nodes[*input].value.shape());
            emit(*input, gx);
        }
        Op::ReduceMean { input, axis } => {
            let m = nodes[*input].value.shape()[*axis] as f64;
            let gx = broadcast_to(&g.clone().insert_axis(Axis(*axis)), nodes[*input].value.shape());
            emit(*input, gx / m);
        }
        Op::Sigmoid(input) => emit(*input, g * y * &(1.0 - y)),
        Op::Tanh(input) => emit(*input, g * &(1.0 - y * y)),
        Op::Elu { input, alpha } => {
            let x = &nodes[*input].value;
            let mut gx = g.clone();
            ndarray::Zip::from(&mut gx).and(x).and(y).for_each(|gi, &xi, &yi| {
                if xi <= 0.0 {
                    *gi *= yi + alpha;
                }
            });
            emit(*input, gx);
        }
        Op::Exp(input) => emit(*input, g * y),
        Op::Log(input) => emit(*input, g / &nodes[*input].value),
        Op::Softmax { input, axis } => {
            let s = (g * y).sum_axis(Axis(*axis)).insert_axis(Axis(*axis));
            let sb = broadcast_to(&s, y.shape());
            emit(*input, y * &(g - &sb));
        }
    }
    out
}

fn as2(a: &ArrayD<f64>) -> ndarray::Array2<f64> {
    a.clone()
        .into_dimensionality::<ndarray::Ix2>()
        .expect("expected a rank-2 array")
}

fn broadcast_to(a: &ArrayD<f64>, shape: &[usize]) -> ArrayD<f64> {
    a.broadcast(IxDyn(shape))
        .unwrap_or_else(|| panic!("cannot broadcast {:?} to {:?}", a.shape(), shape))
        .to_owned()
}

/// NumPy-style broadcast result shape; panics on incompatibility.
fn broadcast_shape(name: &str, a: &[usize], b: &[usize]) -> Vec<usize> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = if i < rank - a.len() { 1 } else { a[i - (rank - a.len())] };
        let db = if i < rank - b.len() { 1 } else { b[i - (rank - b.len())] };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => panic!("{name}: incompatible shapes {a:?} and {b:?}"),
        };
    }
    out
}

/// Sum a gradient over broadcast axes so it matches `target` again.
fn reduce_to_shape(mut g: ArrayD<f64>, target: &[usize]) -> ArrayD<f64> {
    while g.ndim() > target.len() {
        g = g.sum_axis(Axis(0));
    }
    for i in 0..target.len() {
        if target[i] == 1 && g.shape()[i] != 1 {
            g = g.sum_axis(Axis(i)).insert_axis(Axis(i));
        }
    }
    g
}

impl<'g> Tensor<'g> {
    pub fn shape(&self) -> Vec<usize> {
        self.graph.nodes.borrow()[self.id].value.shape().to_vec()
    }

    pub fn value(&self) -> ArrayD<f64> {
        self.graph.nodes.borrow()[self.id].value.clone()
    }

    fn unop(
        &self,
        f: impl FnOnce(&ArrayD<f64>) -> ArrayD<f64>,
        op: impl FnOnce(usize) -> Op,
    ) -> Tensor<'g> {
        let value = {
            let nodes = self.graph.nodes.borrow();
            f(&nodes[self.id].value)
        };
        self.graph.push(value, op(self.id), self.graph.needs(self.id))
    }

    fn binop_elem(
        &self,
        rhs: Tensor<'g>,
        name: &str,
        f: impl Fn(f64, f64) -> f64,
        op: impl FnOnce(usize, usize) -> Op,
    ) -> Tensor<'g> {
        let value = {
            let nodes = self.graph.nodes.borrow();
            let a = &nodes[self.id].value;
            let b = &nodes[rhs.id].value;
            let shape = broadcast_shape(name, a.shape(), b.shape());
            let av = a.broadcast(IxDyn(&shape)).unwrap();
            let bv = b.broadcast(IxDyn(&shape)).unwrap();
            let mut out = ArrayD::zeros(IxDyn(&shape));
            ndarray::Zip::from(&mut out).and(&av).and(&bv).for_each(|o, &x, &y| *o = f(x, y));
            out
        };
        let needs = self.graph.needs(self.id) || self.graph.needs(rhs.id);
        self.graph.push(value, op(self.id, rhs.id), needs)
    }

    pub fn matmul(&self, rhs: Tensor<'g>) -> Tensor<'g> {
        let value = {
            let nodes = self.graph.nodes.borrow();
            let a = &nodes[self.id].value;
            let b = &nodes[rhs.id].value;
            assert!(
                a.ndim() == 2 && b.ndim() == 2 && a.shape()[1] == b.shape()[0],
                "matmul: incompatible shapes {:?} and {:?}",
                a.shape(),
                b.shape()
            );
            as2(a).dot(&as2(b)).into_dyn()
        };
        let needs = self.graph.needs(self.id) || self.graph.needs(rhs.id);
        self.graph.push(value, Op::Matmul(self.id, rhs.id), needs)
    }

    /// Narrow along one axis to `start..start + len`.
    pub fn slice(&self, axis: usize, start: usize, len: usize) -> Tensor<'g> {
        self.unop(
            |x| {
                assert!(
                    axis < x.ndim() && start + len <= x.shape()[axis],
                    "slice: range {start}..{} out of bounds for axis {axis} of {:?}",
                    start + len,
                    x.shape()
                );
                x.slice_axis(Axis(axis), Slice::from(start..start + len)).to_owned()
            },
            |input| Op::Slice { input, axis, start },
        )
    }

    pub fn reshape(&self, shape: &[usize]) -> Tensor<'g> {
        let shape = shape.to_vec();
        self.unop(
            move |x| {
                assert_eq!(
                    x.len(),
                    shape.iter().product::<usize>(),
                    "reshape: cannot reshape {:?} to {:?}",
                    x.shape(),
                    shape
                );
                x.as_standard_layout()
                    .into_owned()
                    .into_shape_with_order(IxDyn(&shape))
                    .unwrap()
            },
            Op::Reshape,
        )
    }

    /// 2-D transpose.
    pub fn t(&self) -> Tensor<'g> {
        self.unop(
            |x| {
                assert!(x.ndim() == 2, "transpose: expected rank 2, got {:?}", x.shape());
                x.clone().reversed_axes()
            },
            Op::Transpose,
        )
    }

    pub fn sum(&self, axis: usize) -> Tensor<'g> {
        self.unop(
            |x| x.sum_axis(Axis(axis)),
            |input| Op::ReduceSum { input, axis },
        )
    }

    pub fn mean(&self, axis: usize) -> Tensor<'g> {
        self.unop(
            |x| x.mean_axis(Axis(axis)).expect("mean over empty axis"),
            |input| Op::ReduceMean { input, axis },
        )
    }

    pub fn sigmoid(&self) -> Tensor<'g> {
        self.unop(
            |x| {
                x.mapv(|v| {
                    if v >= 0.0 {
                        1.0 / (1.0 + (-v).exp())
                    } else {
                        let e = v.exp();
                        e / (1.0 + e)
                    }
                })
            },
            Op::Sigmoid,
        )
    }

    pub fn tanh(&self) -> Tensor<'g> {
        self.unop(|x| x.mapv(f64::tanh), Op::Tanh)
    }

    pub fn elu(&self, alpha: f64) -> Tensor<'g> {
        self.unop(
            |x| x.mapv(|v| if v > 0.0 { v } else { alpha * (v.exp() - 1.0) }),
            |input| Op::Elu { input, alpha },
        )
    }

    pub fn exp(&self) -> Tensor<'g> {
        self.unop(|x| x.mapv(f64::exp), Op::Exp)
    }

    pub fn log(&self) -> Tensor<'g> {
        self.unop(|x| x.mapv(f64::ln), Op::Log)
    }

    /// Numerically stable softmax along `axis` (rowwise max subtracted).
    pub fn softmax(&self, axis: usize) -> Tensor<'g> {
        self.unop(
            |x| {
                let max = x.fold_axis(Axis(axis), f64::NEG_INFINITY, |a, &b| a.max(b));
                let shifted = x - &broadcast_to(&max.insert_axis(Axis(axis)), x.shape());
                let e = shifted.mapv(f64::exp);
                let sums = e.sum_axis(Axis(axis)).insert_axis(Axis(axis));
                &e / &broadcast_to(&sums, x.shape())
            },
            |input| Op::Softmax { input, axis },
        )
    }

    /// Multiply by a plain scalar.
    pub fn scale(&self, c: f64) -> Tensor<'g> {
        *self * self.graph.scalar(c)
    }
}

impl<'g> std::ops::Add for Tensor<'g> {
    type Output = Tensor<'g>;
    fn add(self, rhs: Tensor<'g>) -> Tensor<'g> {
        self.binop_elem(rhs, "add", |a, b| a + b, Op::Add)
    }
}

impl<'g> std::ops::Sub for Tensor<'g> {
    type Output = Tensor<'g>;
    fn sub(self, rhs: Tensor<'g>) -> Tensor<'g> {
        self.binop_elem(rhs, "sub", |a, b| a - b, Op::Sub)
    }
}

impl<'g> std::ops::Mul for Tensor<'g> {
    type Output = Tensor<'g>;
    fn mul(self, rhs: Tensor<'g>) -> Tensor<'g> {
        self.binop_elem(rhs, "mul", |a, b| a * b, Op::Mul)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr1, arr2};

    fn dyn1(v: &[f64]) -> ArrayD<f64> {
        arr1(v).into_dyn()
    }

    #[test]
    fn sigmoid_at_zero_is_half() {
        let g = Graph::new();
        let x = g.constant(dyn1(&[0.0]));
        assert_eq!(x.sigmoid().value()[[0]], 0.5);
    }

    #[test]
    fn elu_definition() {
        let g = Graph::new();
        let x = g.constant(dyn1(&[-30.0, 2.0]));
        let y = x.elu(1.0).value();
        assert!((y[[0]] - (-1.0 + (-30.0f64).exp())).abs() < 1e-15);
        assert_eq!(y[[1]], 2.0);
    }

    #[test]
    fn softmax_uniform_on_equal_logits() {
        let g = Graph::new();
        let x = g.constant(dyn1(&[1.0, 1.0, 1.0]));
        let y = x.softmax(0).value();
        for i in 0..3 {
            assert!((y[[i]] - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_rows_sum_to_one_and_open_interval() {
        let g = Graph::new();
        let x = g.constant(arr2(&[[3.0, -1.0, 8.0], [0.1, 0.2, 0.3]]).into_dyn());
        let y = x.softmax(1).value();
        for r in 0..2 {
            let s: f64 = (0..3).map(|c| y[[r, c]]).sum();
            assert!((s - 1.0).abs() < 1e-12);
            for c in 0..3 {
                assert!(y[[r, c] ] > 0.0 && y[[r, c]] < 1.0);
            }
        }
    }

    #[test]
    fn grad_of_sum_is_ones() {
        let g = Graph::new();
        let x = g.leaf(arr2(&[[1.0, 2.0], [3.0, 4.0]]).into_dyn(), true);
        let loss = x.sum(1).sum(0);
        g.backward(loss).unwrap();
        let gx = g.grad(x).unwrap();
        assert!(gx.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn grad_of_square_sum() {
        let g = Graph::new();
        let x = g.leaf(dyn1(&[1.0, -2.0]), true);
        let loss = (x * x).sum(0);
        g.backward(loss).unwrap();
        let gx = g.grad(x).unwrap();
        assert_eq!(gx[[0]], 2.0);
        assert_eq!(gx[[1]], -4.0);
    }

    #[test]
    fn grad_accumulates_across_consumers() {
        let g = Graph::new();
        let x = g.leaf(dyn1(&[3.0]), true);
        let loss = (x + x).sum(0);
        g.backward(loss).unwrap();
        assert_eq!(g.grad(x).unwrap()[[0]], 2.0);
    }

    #[test]
    fn broadcast_add_reduces_grad() {
        let g = Graph::new();
        let x = g.leaf(arr2(&[[1.0, 2.0], [3.0, 4.0]]).into_dyn(), true);
        let b = g.leaf(dyn1(&[10.0, 20.0]), true);
        let loss = (x + b).sum(1).sum(0);
        g.backward(loss).unwrap();
        let gb = g.grad(b).unwrap();
        assert_eq!(gb.shape(), &[2]);
        assert_eq!(gb[[0]], 2.0);
        assert_eq!(gb[[1]], 2.0);
    }

    #[test]
    fn broadcast_add_commutes() {
        let g = Graph::new();
        let a = g.constant(arr2(&[[1.0], [2.0]]).into_dyn());
        let b = g.constant(dyn1(&[5.0, 7.0]));
        assert_eq!((a + b).value(), (b + a).value());
    }

    #[test]
    fn reduce_sum_twice_equals_full_sum() {
        let g = Graph::new();
        let x = g.constant(arr2(&[[1.0, 2.0], [3.0, 4.5]]).into_dyn());
        let total = x.sum(1).sum(0).value();
        assert_eq!(total[[]], 10.5);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let g = Graph::new();
        let x = g.leaf(dyn1(&[1.0, 2.0]), true);
        assert!(g.backward(x).is_err());
    }

    #[test]
    fn double_backward_rejected() {
        let g = Graph::new();
        let x = g.leaf(dyn1(&[1.0]), true);
        let l = x.sum(0);
        g.backward(l).unwrap();
        assert!(g.backward(l).is_err());
    }

    #[test]
    #[should_panic(expected = "matmul")]
    fn matmul_shape_mismatch_panics() {
        let g = Graph::new();
        let a = g.constant(arr2(&[[1.0, 2.0]]).into_dyn());
        let b = g.constant(arr2(&[[1.0, 2.0]]).into_dyn());
        let _ = a.matmul(b);
    }

    #[test]
    fn matmul_grads() {
        // loss = sum(A·B); dA = 1·Bᵀ, dB = Aᵀ·1
        let g = Graph::new();
        let a = g.leaf(arr2(&[[1.0, 2.0], [3.0, 4.0]]).into_dyn(), true);
        let b = g.leaf(arr2(&[[5.0, 6.0], [7.0, 8.0]]).into_dyn(), true);
        let loss = a.matmul(b).sum(1).sum(0);
        g.backward(loss).unwrap();
        let ga = g.grad(a).unwrap();
        let gb = g.grad(b).unwrap();
        assert_eq!(ga[[0, 0]], 11.0); // b row sums
        assert_eq!(ga[[0, 1]], 15.0);
        assert_eq!(gb[[0, 0]], 4.0); // a col sums
        assert_eq!(gb[[1, 0]], 6.0);
    }

    #[test]
    fn concat_slice_roundtrip_grads() {
        let g = Graph::new();
        let a = g.leaf(dyn1(&[1.0, 2.0]), true);
        let b = g.leaf(dyn1(&[3.0]), true);
        let c = g.concat(&[a, b], 0);
        // keep only b's slot
        let s = c.slice(0, 2, 1);
        g.backward(s.sum(0)).unwrap();
        assert_eq!(g.grad(a).unwrap(), dyn1(&[0.0, 0.0]));
        assert_eq!(g.grad(b).unwrap(), dyn1(&[1.0]));
    }
}
