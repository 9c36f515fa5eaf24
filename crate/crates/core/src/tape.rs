//! Reverse-mode automatic differentiation over two-dimensional values.
//!
//! A [`Tape`] is built fresh for every forward pass. Leaves copy their data
//! from [`Tensor`]s; leaves whose tensor has `requires_grad` set receive a
//! gradient on [`Tape::backward`], accumulated across calls until
//! [`Tape::zero_grad`].

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::gemm;
use crate::math;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf { trainable: bool },
    Linear { x: Var, w: Var, b: Var },
    Tanh(Var),
    Relu(Var),
    Exp(Var),
    Log(Var),
    Square(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Minimum(Var, Var),
    Scale(Var, f64),
    Shift(Var),
    Clamp(Var, f64, f64),
    Sum(Var),
    Mean(Var),
    SumCols(Var),
    ConcatCols(Var, Var),
    SliceCols(Var, usize),
}

#[derive(Debug, Clone)]
struct Node {
    rows: usize,
    cols: usize,
    value: Vec<f64>,
    op: Op,
}

#[derive(Debug, Default, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
    leaf_grads: Vec<Option<Vec<f64>>>,
}

/// Index into an operand that may be broadcast along rows and/or columns.
#[inline]
fn bidx(rows: usize, cols: usize, r: usize, c: usize) -> usize {
    let r = if rows == 1 { 0 } else { r };
    let c = if cols == 1 { 0 } else { c };
    r * cols + c
}

fn broadcast_dim(a: usize, b: usize) -> usize {
    match (a, b) {
        (x, y) if x == y => x,
        (1, y) => y,
        (x, 1) => x,
        (x, y) => panic!("tape: cannot broadcast {x} against {y}"),
    }
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

    fn push(&mut self, rows: usize, cols: usize, value: Vec<f64>, op: Op) -> Var {
        debug_assert_eq!(rows * cols, value.len());
        self.nodes.push(Node {
            rows,
            cols,
            value,
            op,
        });
        self.leaf_grads.push(None);
        Var(self.nodes.len() - 1)
    }

    /// Copies `tensor` onto the tape; it is trainable iff it requires grad.
    pub fn leaf(&mut self, tensor: &Tensor) -> Var {
        let (r, c) = tensor.dims2();
        self.push(
            r,
            c,
            tensor.data().to_vec(),
            Op::Leaf {
                trainable: tensor.requires_grad(),
            },
        )
    }

    pub fn constant(&mut self, rows: usize, cols: usize, data: Vec<f64>) -> Var {
        assert_eq!(rows * cols, data.len(), "tape: constant shape");
        self.push(rows, cols, data, Op::Leaf { trainable: false })
    }

    pub fn scalar_constant(&mut self, value: f64) -> Var {
        self.constant(1, 1, vec![value])
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let n = &self.nodes[v.0];
        (n.rows, n.cols)
    }

    /// The single value of a `1 x 1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        let n = &self.nodes[v.0];
        assert_eq!(n.value.len(), 1, "tape: not a scalar");
        n.value[0]
    }

    /// `x * w^T + b` with `w` stored `(out, in)` and `b` of length `out`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Var {
        let (rows, fan_in) = self.shape(x);
        let (fan_out, w_in) = self.shape(w);
        assert_eq!(fan_in, w_in, "tape: linear input width");
        assert_eq!(self.nodes[b.0].value.len(), fan_out, "tape: bias length");
        let mut out = vec![0.0; rows * fan_out];
        gemm(
            rows,
            fan_in,
            fan_out,
            &self.nodes[x.0].value,
            false,
            &self.nodes[w.0].value,
            true,
            0.0,
            &mut out,
        );
        let bias = &self.nodes[b.0].value;
        for row in out.chunks_exact_mut(fan_out) {
            row.iter_mut().zip(bias).for_each(|(o, b)| *o += b);
        }
        self.push(rows, fan_out, out, Op::Linear { x, w, b })
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let (r, c) = self.shape(a);
        let value = self.nodes[a.0].value.iter().map(|&x| f(x)).collect();
        self.push(r, c, value, op)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, math::tanh, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |x| if x > 0.0 { x } else { 0.0 }, Op::Relu(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, math::exp, Op::Exp(a))
    }

    pub fn ln(&mut self, a: Var) -> Var {
        self.unary(a, math::ln, Op::Log(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, |x| x * x, Op::Square(a))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        self.unary(a, |x| k * x, Op::Scale(a, k))
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    pub fn add_scalar(&mut self, a: Var, k: f64) -> Var {
        self.unary(a, |x| x + k, Op::Shift(a))
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        self.unary(a, |x| x.clamp(lo, hi), Op::Clamp(a, lo, hi))
    }

    fn binary(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Var {
        let (ra, ca) = self.shape(a);
        let (rb, cb) = self.shape(b);
        let rows = broadcast_dim(ra, rb);
        let cols = broadcast_dim(ca, cb);
        let av = &self.nodes[a.0].value;
        let bv = &self.nodes[b.0].value;
        let value = if (ra, ca) == (rb, cb) {
            av.iter().zip(bv).map(|(&x, &y)| f(x, y)).collect()
        } else {
            let mut v = Vec::with_capacity(rows * cols);
            for r in 0..rows {
                for c in 0..cols {
                    v.push(f(av[bidx(ra, ca, r, c)], bv[bidx(rb, cb, r, c)]));
                }
            }
            v
        };
        self.push(rows, cols, value, op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// Elementwise minimum; ties route the gradient to `a`.
    pub fn minimum(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| if x <= y { x } else { y }, Op::Minimum(a, b))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.nodes[a.0].value.iter().sum();
        self.push(1, 1, vec![s], Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let v = &self.nodes[a.0].value;
        let s = v.iter().sum::<f64>() / v.len() as f64;
        self.push(1, 1, vec![s], Op::Mean(a))
    }

    /// Row sums, producing a `rows x 1` column.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let (r, c) = self.shape(a);
        let value = self.nodes[a.0]
            .value
            .chunks_exact(c)
            .map(|row| row.iter().sum())
            .collect();
        self.push(r, 1, value, Op::SumCols(a))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Var {
        let (ra, ca) = self.shape(a);
        let (rb, cb) = self.shape(b);
        assert_eq!(ra, rb, "tape: concat row count");
        let mut value = Vec::with_capacity(ra * (ca + cb));
        for r in 0..ra {
            value.extend_from_slice(&self.nodes[a.0].value[r * ca..(r + 1) * ca]);
            value.extend_from_slice(&self.nodes[b.0].value[r * cb..(r + 1) * cb]);
        }
        self.push(ra, ca + cb, value, Op::ConcatCols(a, b))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let (r, c) = self.shape(a);
        assert!(start + len <= c, "tape: column slice out of range");
        let mut value = Vec::with_capacity(r * len);
        for row in self.nodes[a.0].value.chunks_exact(c) {
            value.extend_from_slice(&row[start..start + len]);
        }
        self.push(r, len, value, Op::SliceCols(a, start))
    }

    /// Backpropagates from a scalar loss.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.nodes[loss.0].value.len() != 1 {
            return Err(Error::Contract("backward needs a single-element loss"));
        }
        self.backward_with(loss, &[1.0])
    }

    /// Vector-Jacobian product: backpropagates `cotangent` from `output`.
    pub fn backward_with(&mut self, output: Var, cotangent: &[f64]) -> Result<()> {
        let out_len = self.nodes[output.0].value.len();
        if cotangent.len() != out_len {
            return Err(Error::dim("backward cotangent", out_len, cotangent.len()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; output.0 + 1];
        grads[output.0] = Some(cotangent.to_vec());
        for i in (0..=output.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            if let Op::Leaf { trainable: true } = self.nodes[i].op {
                match &mut self.leaf_grads[i] {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, x)| *a += x),
                    slot => *slot = Some(g),
                }
            }
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let acc = |grads: &mut [Option<Vec<f64>>], v: Var, len: usize| -> usize {
            if grads[v.0].is_none() {
                grads[v.0] = Some(vec![0.0; len]);
            }
            v.0
        };
        let len_of = |v: Var| self.nodes[v.0].value.len();
        match node.op {
            Op::Leaf { .. } => {}
            Op::Linear { x, w, b } => {
                let (rows, fan_in) = self.shape(x);
                let fan_out = node.cols;
                let xi = acc(grads, x, rows * fan_in);
                gemm(
                    rows,
                    fan_out,
                    fan_in,
                    g,
                    false,
                    &self.nodes[w.0].value,
                    false,
                    1.0,
                    grads[xi].as_mut().unwrap(),
                );
                let wi = acc(grads, w, fan_out * fan_in);
                gemm(
                    fan_out,
                    rows,
                    fan_in,
                    g,
                    true,
                    &self.nodes[x.0].value,
                    false,
                    1.0,
                    grads[wi].as_mut().unwrap(),
                );
                let bi = acc(grads, b, fan_out);
                let gb = grads[bi].as_mut().unwrap();
                for row in g.chunks_exact(fan_out) {
                    gb.iter_mut().zip(row).for_each(|(a, x)| *a += x);
                }
            }
            Op::Tanh(a) => {
                let ai = acc(grads, a, g.len());
                let ga = grads[ai].as_mut().unwrap();
                for ((d, y), gi) in ga.iter_mut().zip(&node.value).zip(g) {
                    *d += gi * (1.0 - y * y);
                }
            }
            Op::Relu(a) => {
                let ai = acc(grads, a, g.len());
                let x = &self.nodes[a.0].value;
                let ga = grads[ai].as_mut().unwrap();
                for ((d, xv), gi) in ga.iter_mut().zip(x).zip(g) {
                    if *xv > 0.0 {
                        *d += gi;
                    }
                }
            }
            Op::Exp(a) => {
                let ai = acc(grads, a, g.len());
                let ga = grads[ai].as_mut().unwrap();
                for ((d, y), gi) in ga.iter_mut().zip(&node.value).zip(g) {
                    *d += gi * y;
                }
            }
            Op::Log(a) => {
                let ai = acc(grads, a, g.len());
                let x = &self.nodes[a.0].value;
                let ga = grads[ai].as_mut().unwrap();
                for ((d, xv), gi) in ga.iter_mut().zip(x).zip(g) {
                    *d += gi / xv;
                }
            }
            Op::Square(a) => {
                let ai = acc(grads, a, g.len());
                let x = &self.nodes[a.0].value;
                let ga = grads[ai].as_mut().unwrap();
                for ((d, xv), gi) in ga.iter_mut().zip(x).zip(g) {
                    *d += 2.0 * gi * xv;
                }
            }
            Op::Scale(a, k) => {
                let ai = acc(grads, a, g.len());
                let ga = grads[ai].as_mut().unwrap();
                ga.iter_mut().zip(g).for_each(|(d, gi)| *d += k * gi);
            }
            Op::Shift(a) => {
                let ai = acc(grads, a, g.len());
                let ga = grads[ai].as_mut().unwrap();
                ga.iter_mut().zip(g).for_each(|(d, gi)| *d += gi);
            }
            Op::Clamp(a, lo, hi) => {
                let ai = acc(grads, a, g.len());
                let x = &self.nodes[a.0].value;
                let ga = grads[ai].as_mut().unwrap();
                for ((d, xv), gi) in ga.iter_mut().zip(x).zip(g) {
                    if *xv >= lo && *xv <= hi {
                        *d += gi;
                    }
                }
            }
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::Minimum(a, b) => {
                let (ra, ca) = self.shape(a);
                let (rb, cb) = self.shape(b);
                let av = &self.nodes[a.0].value;
                let bv = &self.nodes[b.0].value;
                let (rows, cols) = (node.rows, node.cols);
                // d/da and d/db of one output element given operand values
                let partials = |x: f64, y: f64| -> (f64, f64) {
                    match node.op {
                        Op::Add(..) => (1.0, 1.0),
                        Op::Sub(..) => (1.0, -1.0),
                        Op::Mul(..) => (y, x),
                        _ => {
                            if x <= y {
                                (1.0, 0.0)
                            } else {
                                (0.0, 1.0)
                            }
                        }
                    }
                };
                let mut da = vec![0.0; len_of(a)];
                let mut db = vec![0.0; len_of(b)];
                for r in 0..rows {
                    for c in 0..cols {
                        let ia = bidx(ra, ca, r, c);
                        let ib = bidx(rb, cb, r, c);
                        let (pa, pb) = partials(av[ia], bv[ib]);
                        let gi = g[r * cols + c];
                        da[ia] += pa * gi;
                        db[ib] += pb * gi;
                    }
                }
                let ai = acc(grads, a, da.len());
                grads[ai]
                    .as_mut()
                    .unwrap()
                    .iter_mut()
                    .zip(&da)
                    .for_each(|(d, x)| *d += x);
                let bi = acc(grads, b, db.len());
                grads[bi]
                    .as_mut()
                    .unwrap()
                    .iter_mut()
                    .zip(&db)
                    .for_each(|(d, x)| *d += x);
            }
            Op::Sum(a) => {
                let ai = acc(grads, a, len_of(a));
                grads[ai].as_mut().unwrap().iter_mut().for_each(|d| *d += g[0]);
            }
            Op::Mean(a) => {
                let n = len_of(a);
                let ai = acc(grads, a, n);
                let s = g[0] / n as f64;
                grads[ai].as_mut().unwrap().iter_mut().for_each(|d| *d += s);
            }
            Op::SumCols(a) => {
                let (r, c) = self.shape(a);
                let ai = acc(grads, a, r * c);
                let ga = grads[ai].as_mut().unwrap();
                for (row, gi) in ga.chunks_exact_mut(c).zip(g) {
                    row.iter_mut().for_each(|d| *d += gi);
                }
            }
            Op::ConcatCols(a, b) => {
                let (r, ca) = self.shape(a);
                let cb = self.shape(b).1;
                let ai = acc(grads, a, r * ca);
                {
                    let ga = grads[ai].as_mut().unwrap();
                    for row in 0..r {
                        for c in 0..ca {
                            ga[row * ca + c] += g[row * (ca + cb) + c];
                        }
                    }
                }
                let bi = acc(grads, b, r * cb);
                let gb = grads[bi].as_mut().unwrap();
                for row in 0..r {
                    for c in 0..cb {
                        gb[row * cb + c] += g[row * (ca + cb) + ca + c];
                    }
                }
            }
            Op::SliceCols(a, start) => {
                let (r, c) = self.shape(a);
                let len = node.cols;
                let ai = acc(grads, a, r * c);
                let ga = grads[ai].as_mut().unwrap();
                for row in 0..r {
                    for j in 0..len {
                        ga[row * c + start + j] += g[row * len + j];
                    }
                }
            }
        }
    }

    /// Accumulated gradient of a trainable leaf, if any has been computed.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.leaf_grads[v.0].as_deref()
    }

    pub fn zero_grad(&mut self) {
        self.leaf_grads.iter_mut().for_each(|g| *g = None);
    }
}
