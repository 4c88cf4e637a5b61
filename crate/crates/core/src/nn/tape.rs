//! Reverse-mode automatic differentiation over 2-D arrays.
//!
//! A [`Tape`] records every operation of one forward pass. Leaves may borrow
//! parameter arrays, so binding a model's weights costs no copies. Nodes that
//! do not depend on any gradient-requiring leaf are skipped in the backward
//! pass.

use std::borrow::Cow;
use std::sync::Arc;

use ndarray::{s, Array2, Axis, Zip};

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Flat index map shared by gather/scatter ops; `NONE` marks a zero entry.
#[derive(Debug, Clone)]
pub struct IndexMap {
    pub map: Vec<u32>,
    pub out_shape: (usize, usize),
}

impl IndexMap {
    pub const NONE: u32 = u32::MAX;
}

enum Op<T: Scalar> {
    Leaf,
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    AddCol(Var, Var),
    Scale(Var, T),
    AddScalar(Var),
    Silu(Var),
    Relu(Var),
    LayerNorm { x: Var, inv_std: Vec<T> },
    Softmax(Var),
    SliceCols { x: Var, start: usize },
    ConcatCols(Vec<Var>),
    Gather(Var, Arc<IndexMap>),
    ScatterAdd(Var, Arc<IndexMap>),
    Reshape(Var),
    Mse { x: Var, target: Array2<T> },
    SumAll(Var),
}

struct Node<'a, T: Scalar> {
    value: Cow<'a, Array2<T>>,
    op: Op<T>,
    needs_grad: bool,
}

pub struct Tape<'a, T: Scalar> {
    nodes: Vec<Node<'a, T>>,
}

impl<'a, T: Scalar> Default for Tape<'a, T> {
    fn default() -> Self {
        Self::new()
    }
}

const LN_EPS: f64 = 1e-5;

/// Matrix product; a few-row left operand is done as row combinations of
/// `b`, which beats the packed kernel at that size.
fn mat_mul<T: Scalar>(a: &Array2<T>, b: &Array2<T>) -> Array2<T> {
    if a.nrows() > 4 {
        return a.dot(b);
    }
    let mut out = Array2::zeros((a.nrows(), b.ncols()));
    for (arow, mut orow) in a.rows().into_iter().zip(out.rows_mut()) {
        for (k, &x) in arow.iter().enumerate() {
            orow.scaled_add(x, &b.row(k));
        }
    }
    out
}

impl<'a, T: Scalar> Tape<'a, T> {
    pub fn new() -> Self {
        Self { nodes: Vec::with_capacity(256) }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Array2<T> {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Array2<T>, op: Op<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node { value: Cow::Owned(value), op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Trainable leaf borrowing its storage.
    pub fn param(&mut self, value: &'a Array2<T>) -> Var {
        self.nodes.push(Node { value: Cow::Borrowed(value), op: Op::Leaf, needs_grad: true });
        Var(self.nodes.len() - 1)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Array2<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn constant_ref(&mut self, value: &'a Array2<T>) -> Var {
        self.nodes.push(Node { value: Cow::Borrowed(value), op: Op::Leaf, needs_grad: false });
        Var(self.nodes.len() - 1)
    }

    /// Leaf that receives a gradient but is owned by the tape.
    pub fn input(&mut self, value: Array2<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = mat_mul(self.value(a), self.value(b));
        let ng = self.ng(a) || self.ng(b);
        self.push(v, Op::MatMul(a, b), ng)
    }

    /// `a · bᵀ`
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(&self.value(b).t());
        let ng = self.ng(a) || self.ng(b);
        self.push(v, Op::MatMulT(a, b), ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        let ng = self.ng(a) || self.ng(b);
        self.push(v, Op::Add(a, b), ng)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) - self.value(b);
        let ng = self.ng(a) || self.ng(b);
        self.push(v, Op::Sub(a, b), ng)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) * self.value(b);
        let ng = self.ng(a) || self.ng(b);
        self.push(v, Op::Mul(a, b), ng)
    }

    /// Broadcast-add a `1×m` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        assert_eq!(self.value(row).nrows(), 1);
        let v = self.value(a) + self.value(row);
        let ng = self.ng(a) || self.ng(row);
        self.push(v, Op::AddRow(a, row), ng)
    }

    /// Broadcast-multiply every row of `a` by a `1×m` row.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Var {
        assert_eq!(self.value(row).nrows(), 1);
        let v = self.value(a) * self.value(row);
        let ng = self.ng(a) || self.ng(row);
        self.push(v, Op::MulRow(a, row), ng)
    }

    /// Broadcast-add an `n×1` column to every column of `a`.
    pub fn add_col(&mut self, a: Var, col: Var) -> Var {
        assert_eq!(self.value(col).ncols(), 1);
        let v = self.value(a) + self.value(col);
        let ng = self.ng(a) || self.ng(col);
        self.push(v, Op::AddCol(a, col), ng)
    }

    pub fn scale(&mut self, a: Var, s: T) -> Var {
        let v = self.value(a) * s;
        let ng = self.ng(a);
        self.push(v, Op::Scale(a, s), ng)
    }

    pub fn add_scalar(&mut self, a: Var, s: T) -> Var {
        let v = self.value(a) + s;
        let ng = self.ng(a);
        self.push(v, Op::AddScalar(a), ng)
    }

    /// `x · sigmoid(x)`
    pub fn silu(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| x / (T::one() + (-x).exp()));
        let ng = self.ng(a);
        self.push(v, Op::Silu(a), ng)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| x.max(T::zero()));
        let ng = self.ng(a);
        self.push(v, Op::Relu(a), ng)
    }

    /// Row-wise normalization to zero mean and unit variance, no affine part.
    pub fn layer_norm(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let n = T::lit(x.ncols() as f64);
        let eps = T::lit(LN_EPS);
        let mut out = x.to_owned();
        let mut inv_std = Vec::with_capacity(x.nrows());
        for mut row in out.rows_mut() {
            let mean = row.sum() / n;
            row.mapv_inplace(|v| v - mean);
            let var = row.iter().map(|v| *v * *v).sum::<T>() / n;
            let inv = T::one() / (var + eps).sqrt();
            row.mapv_inplace(|v| v * inv);
            inv_std.push(inv);
        }
        let ng = self.ng(a);
        self.push(out, Op::LayerNorm { x: a, inv_std }, ng)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let mut out = self.value(a).to_owned();
        for mut row in out.rows_mut() {
            let m = row.iter().fold(T::neg_infinity(), |acc, v| acc.max(*v));
            row.mapv_inplace(|v| (v - m).exp());
            let s = row.sum();
            row.mapv_inplace(|v| v / s);
        }
        let ng = self.ng(a);
        self.push(out, Op::Softmax(a), ng)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        let v = self.value(a).slice(s![.., start..end]).to_owned();
        let ng = self.ng(a);
        self.push(v, Op::SliceCols { x: a, start }, ng)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|p| self.value(*p).view()).collect();
        let v = ndarray::concatenate(Axis(1), &views).expect("equal row counts");
        let ng = parts.iter().any(|p| self.ng(*p));
        self.push(v, Op::ConcatCols(parts.to_vec()), ng)
    }

    /// `out.flat[i] = a.flat[map[i]]`.
    pub fn gather(&mut self, a: Var, map: Arc<IndexMap>) -> Var {
        let src = self.value(a).as_standard_layout();
        let src = src.as_slice().expect("standard layout");
        let data: Vec<T> = map
            .map
            .iter()
            .map(|&m| if m == IndexMap::NONE { T::zero() } else { src[m as usize] })
            .collect();
        let v = Array2::from_shape_vec(map.out_shape, data).expect("index map shape");
        let ng = self.ng(a);
        self.push(v, Op::Gather(a, map), ng)
    }

    /// `out.flat[map[i]] += a.flat[i]`.
    pub fn scatter_add(&mut self, a: Var, map: Arc<IndexMap>) -> Var {
        let src = self.value(a).as_standard_layout();
        let src = src.as_slice().expect("standard layout");
        assert_eq!(src.len(), map.map.len());
        let mut data = vec![T::zero(); map.out_shape.0 * map.out_shape.1];
        for (i, &m) in map.map.iter().enumerate() {
            if m != IndexMap::NONE {
                data[m as usize] += src[i];
            }
        }
        let v = Array2::from_shape_vec(map.out_shape, data).expect("index map shape");
        let ng = self.ng(a);
        self.push(v, Op::ScatterAdd(a, map), ng)
    }

    /// Row-major reshape.
    pub fn reshape(&mut self, a: Var, shape: (usize, usize)) -> Var {
        let v = self
            .value(a)
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order(shape)
            .expect("reshape keeps element count");
        let ng = self.ng(a);
        self.push(v, Op::Reshape(a), ng)
    }

    /// Mean squared error against a fixed target; a `1×1` node.
    pub fn mse(&mut self, a: Var, target: Array2<T>) -> Var {
        let x = self.value(a);
        assert_eq!(x.dim(), target.dim(), "mse shape");
        let n = T::lit(x.len() as f64);
        let mut acc = T::zero();
        Zip::from(x).and(&target).for_each(|&p, &q| acc += (p - q) * (p - q));
        let ng = self.ng(a);
        self.push(Array2::from_elem((1, 1), acc / n), Op::Mse { x: a, target }, ng)
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        let ng = self.ng(a);
        self.push(Array2::from_elem((1, 1), s), Op::SumAll(a), ng)
    }

    // ---- composite helpers ----

    /// `x · w + b` with `b` a `1×out` row.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Var {
        let y = self.matmul(x, w);
        self.add_row(y, b)
    }

    /// Back-propagate from a scalar (`1×1`) node.
    pub fn backward(&self, loss: Var) -> Grads<T> {
        assert_eq!(self.value(loss).dim(), (1, 1), "backward needs a scalar");
        let mut grads: Vec<Option<Array2<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Array2::from_elem((1, 1), T::one()));
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            self.backward_node(&node.op, i, &g, &mut grads);
            if matches!(node.op, Op::Leaf) {
                grads[i] = Some(g);
            }
        }
        Grads { grads }
    }

    fn acc(&self, grads: &mut [Option<Array2<T>>], v: Var, contribution: Array2<T>) {
        if !self.ng(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(g) => *g += &contribution,
            slot => *slot = Some(contribution),
        }
    }

    fn backward_node(&self, op: &Op<T>, i: usize, g: &Array2<T>, grads: &mut [Option<Array2<T>>]) {
        match op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.ng(*a) {
                    self.acc(grads, *a, g.dot(&self.value(*b).t()));
                }
                if self.ng(*b) {
                    self.acc(grads, *b, self.value(*a).t().dot(g));
                }
            }
            Op::MatMulT(a, b) => {
                if self.ng(*a) {
                    self.acc(grads, *a, g.dot(self.value(*b)));
                }
                if self.ng(*b) {
                    self.acc(grads, *b, g.t().dot(self.value(*a)));
                }
            }
            Op::Add(a, b) => {
                self.acc(grads, *a, g.clone());
                self.acc(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.acc(grads, *a, g.clone());
                self.acc(grads, *b, g.mapv(|v| -v));
            }
            Op::Mul(a, b) => {
                if self.ng(*a) {
                    self.acc(grads, *a, g * self.value(*b));
                }
                if self.ng(*b) {
                    self.acc(grads, *b, g * self.value(*a));
                }
            }
            Op::AddRow(a, r) => {
                self.acc(grads, *a, g.clone());
                if self.ng(*r) {
                    self.acc(grads, *r, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                }
            }
            Op::MulRow(a, r) => {
                if self.ng(*a) {
                    self.acc(grads, *a, g * self.value(*r));
                }
                if self.ng(*r) {
                    let prod = g * self.value(*a);
                    self.acc(grads, *r, prod.sum_axis(Axis(0)).insert_axis(Axis(0)));
                }
            }
            Op::AddCol(a, c) => {
                self.acc(grads, *a, g.clone());
                if self.ng(*c) {
                    self.acc(grads, *c, g.sum_axis(Axis(1)).insert_axis(Axis(1)));
                }
            }
            Op::Scale(a, s) => self.acc(grads, *a, g * *s),
            Op::AddScalar(a) => self.acc(grads, *a, g.clone()),
            Op::Silu(a) => {
                let mut d = self.value(*a).to_owned();
                Zip::from(&mut d).and(g).for_each(|x, &gy| {
                    let sg = T::one() / (T::one() + (-*x).exp());
                    *x = gy * sg * (T::one() + *x * (T::one() - sg));
                });
                self.acc(grads, *a, d);
            }
            Op::Relu(a) => {
                let mut d = g.clone();
                Zip::from(&mut d).and(self.value(*a)).for_each(|gy, &x| {
                    if x <= T::zero() {
                        *gy = T::zero();
                    }
                });
                self.acc(grads, *a, d);
            }
            Op::LayerNorm { x, inv_std } => {
                let y = self.value(Var(i));
                let n = T::lit(y.ncols() as f64);
                let mut d = g.clone();
                for ((mut drow, yrow), &inv) in d.rows_mut().into_iter().zip(y.rows()).zip(inv_std) {
                    let mg = drow.sum() / n;
                    let mgy = drow.iter().zip(yrow.iter()).map(|(a, b)| *a * *b).sum::<T>() / n;
                    Zip::from(&mut drow).and(&yrow).for_each(|dv, &yv| *dv = inv * (*dv - mg - yv * mgy));
                }
                self.acc(grads, *x, d);
            }
            Op::Softmax(a) => {
                let y = self.value(Var(i));
                let mut d = g * y;
                for (mut drow, yrow) in d.rows_mut().into_iter().zip(y.rows()) {
                    let s = drow.sum();
                    Zip::from(&mut drow).and(&yrow).for_each(|dv, &yv| *dv -= yv * s);
                }
                self.acc(grads, *a, d);
            }
            Op::SliceCols { x, start } => {
                if self.ng(*x) {
                    let mut d = Array2::zeros(self.value(*x).dim());
                    d.slice_mut(s![.., *start..*start + g.ncols()]).assign(g);
                    self.acc(grads, *x, d);
                }
            }
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for p in parts {
                    let w = self.value(*p).ncols();
                    if self.ng(*p) {
                        self.acc(grads, *p, g.slice(s![.., off..off + w]).to_owned());
                    }
                    off += w;
                }
            }
            Op::Gather(a, map) => {
                let shape = self.value(*a).dim();
                let mut d = vec![T::zero(); shape.0 * shape.1];
                let gs = g.as_standard_layout();
                for (gv, &m) in gs.iter().zip(&map.map) {
                    if m != IndexMap::NONE {
                        d[m as usize] += *gv;
                    }
                }
                self.acc(grads, *a, Array2::from_shape_vec(shape, d).expect("shape"));
            }
            Op::ScatterAdd(a, map) => {
                let shape = self.value(*a).dim();
                let gs = g.as_standard_layout();
                let gs = gs.as_slice().expect("standard layout");
                let d: Vec<T> = map
                    .map
                    .iter()
                    .map(|&m| if m == IndexMap::NONE { T::zero() } else { gs[m as usize] })
                    .collect();
                self.acc(grads, *a, Array2::from_shape_vec(shape, d).expect("shape"));
            }
            Op::Reshape(a) => {
                let shape = self.value(*a).dim();
                let d = g.as_standard_layout().into_owned().into_shape_with_order(shape).expect("reshape");
                self.acc(grads, *a, d);
            }
            Op::Mse { x, target } => {
                let xv = self.value(*x);
                let k = g[[0, 0]] * T::lit(2.0) / T::lit(xv.len() as f64);
                let mut d = xv - target;
                d.mapv_inplace(|v| v * k);
                self.acc(grads, *x, d);
            }
            Op::SumAll(a) => {
                let d = Array2::from_elem(self.value(*a).dim(), g[[0, 0]]);
                self.acc(grads, *a, d);
            }
        }
    }
}

/// Gradients of leaves after [`Tape::backward`].
pub struct Grads<T: Scalar> {
    grads: Vec<Option<Array2<T>>>,
}

impl<T: Scalar> Grads<T> {
    pub fn get(&self, v: Var) -> Option<&Array2<T>> {
        self.grads[v.0].as_ref()
    }

    pub fn take(&mut self, v: Var) -> Option<Array2<T>> {
        self.grads[v.0].take()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn fd_check<F>(inputs: &[Array2<f64>], f: F)
    where
        F: for<'t> Fn(&mut Tape<'t, f64>, &[Var]) -> Var,
    {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|x| tape.input(x.clone())).collect();
        let out = f(&mut tape, &vars);
        let loss = {
            let w = tape.constant(Array2::from_shape_fn(tape.value(out).dim(), |(i, j)| {
                1.0 + 0.1 * i as f64 - 0.07 * j as f64
            }));
            let m = tape.mul(out, w);
            tape.sum_all(m)
        };
        let grads = tape.backward(loss);
        let h = 1e-6;
        for (k, x) in inputs.iter().enumerate() {
            let g = grads.get(vars[k]).cloned().unwrap_or_else(|| Array2::zeros(x.dim()));
            for idx in 0..x.len() {
                let eval = |delta: f64| {
                    let mut xs: Vec<Array2<f64>> = inputs.to_vec();
                    let shape = xs[k].dim();
                    let flat = xs[k].as_slice_mut().unwrap();
                    flat[idx] += delta;
                    let _ = shape;
                    let mut t = Tape::new();
                    let vs: Vec<Var> = xs.into_iter().map(|x| t.input(x)).collect();
                    let o = f(&mut t, &vs);
                    let w = Array2::from_shape_fn(t.value(o).dim(), |(i, j)| {
                        1.0 + 0.1 * i as f64 - 0.07 * j as f64
                    });
                    (t.value(o) * &w).sum()
                };
                let fd = (eval(h) - eval(-h)) / (2.0 * h);
                let an = g.as_slice().unwrap()[idx];
                assert!(
                    (fd - an).abs() <= 1e-6 * (1.0 + fd.abs()),
                    "input {k} idx {idx}: fd {fd} vs analytic {an}"
                );
            }
        }
    }

    fn a(r: usize, c: usize, seed: f64) -> Array2<f64> {
        Array2::from_shape_fn((r, c), |(i, j)| ((i * 7 + j * 3) as f64 * 0.37 + seed).sin())
    }

    #[test]
    fn grad_matmul_family() {
        fd_check(&[a(3, 4, 0.1), a(4, 2, 0.5)], |t, v| t.matmul(v[0], v[1]));
        fd_check(&[a(3, 4, 0.1), a(5, 4, 0.9)], |t, v| t.matmul_t(v[0], v[1]));
    }

    #[test]
    fn grad_elementwise() {
        fd_check(&[a(3, 4, 0.1), a(3, 4, 0.2)], |t, v| {
            let x = t.add(v[0], v[1]);
            let y = t.mul(x, v[0]);
            let z = t.sub(y, v[1]);
            let z = t.silu(z);
            t.scale(z, 0.7)
        });
        fd_check(&[a(3, 4, 0.3), a(1, 4, 0.2)], |t, v| {
            let x = t.mul_row(v[0], v[1]);
            t.add_row(x, v[1])
        });
        fd_check(&[a(3, 4, 0.3), a(3, 1, 0.2)], |t, v| t.add_col(v[0], v[1]));
    }

    #[test]
    fn grad_norm_softmax() {
        fd_check(&[a(4, 6, 0.3)], |t, v| t.layer_norm(v[0]));
        fd_check(&[a(4, 6, 0.8)], |t, v| t.softmax_rows(v[0]));
    }

    #[test]
    fn grad_slicing_and_maps() {
        fd_check(&[a(3, 6, 0.3), a(3, 2, 0.1)], |t, v| {
            let p = t.slice_cols(v[0], 1, 4);
            t.concat_cols(&[p, v[1], p])
        });
        let map = Arc::new(IndexMap { map: vec![0, 5, IndexMap::NONE, 5, 2, 1], out_shape: (2, 3) });
        fd_check(&[a(2, 3, 0.4)], |t, v| t.gather(v[0], map.clone()));
        let smap = Arc::new(IndexMap { map: vec![0, 1, 1, IndexMap::NONE, 3, 0], out_shape: (2, 2) });
        fd_check(&[a(2, 3, 0.4)], |t, v| t.scatter_add(v[0], smap.clone()));
        fd_check(&[a(2, 6, 0.4)], |t, v| t.reshape(v[0], (3, 4)));
    }

    #[test]
    fn mse_value_and_grad() {
        let mut t = Tape::<f64>::new();
        let x = t.input(array![[1.0, 2.0], [3.0, 5.0]]);
        let l = t.mse(x, array![[0.0, 2.0], [3.0, 3.0]]);
        assert!((t.value(l)[[0, 0]] - 1.25).abs() < 1e-15);
        let g = t.backward(l);
        assert_eq!(g.get(x).unwrap(), &array![[0.5, 0.0], [0.0, 1.0]]);
    }

    #[test]
    fn constants_receive_no_gradient() {
        let w = array![[1.0, 2.0]];
        let mut t = Tape::new();
        let c = t.constant(array![[3.0], [4.0]]);
        let p = t.param(&w);
        let y = t.matmul(c, p);
        let l = t.sum_all(y);
        let g = t.backward(l);
        assert!(g.get(c).is_none());
        assert_eq!(g.get(p).unwrap(), &array![[7.0, 7.0]]);
    }
}
