//! Tape-based reverse-mode differentiation over a small set of matrix
//! primitives.
//!
//! Every operation appends a node holding its forward value. [`Tape::backward`]
//! walks the tape in reverse once and accumulates gradients into the
//! parameter leaves. Parameter leaves borrow their values from the caller's
//! [`ParamStore`], so building a tape never copies weights.

use std::borrow::Cow;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::{matmul_into, matmul_nt_into, matmul_tn_into};
use super::{ParamId, ParamStore, Tensor2};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
    LogSoftmaxRows,
}

/// Constant sparse row operator: `out[r] += c · x[src]` for every entry
/// `(r, src, c)`. Gather, scatter, mean aggregation and row sums are all
/// instances of this.
#[derive(Clone, Debug, PartialEq)]
pub struct RowMap {
    out_rows: usize,
    in_rows: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl RowMap {
    pub fn new(out_rows: usize, in_rows: usize, entries: Vec<(usize, usize, f64)>) -> Result<Self> {
        if let Some(&(r, s, _)) = entries.iter().find(|(r, s, _)| *r >= out_rows || *s >= in_rows) {
            return Err(Error::Shape(format!(
                "row map entry ({r}, {s}) outside {out_rows}x{in_rows}"
            )));
        }
        Ok(Self {
            out_rows,
            in_rows,
            entries,
        })
    }

    /// Selects rows `indices` of an `in_rows`-row input, in order.
    pub fn gather(indices: &[usize], in_rows: usize) -> Result<Self> {
        Self::new(
            indices.len(),
            in_rows,
            indices.iter().enumerate().map(|(o, &i)| (o, i, 1.0)).collect(),
        )
    }

    /// Places row `i` of the input at row `indices[i]` of an `out_rows` output.
    pub fn scatter(indices: &[usize], out_rows: usize) -> Result<Self> {
        Self::new(
            out_rows,
            indices.len(),
            indices.iter().enumerate().map(|(i, &o)| (o, i, 1.0)).collect(),
        )
    }

    /// Single output row holding `scale · Σ rows`.
    pub fn reduce(in_rows: usize, scale: f64) -> Self {
        Self {
            out_rows: 1,
            in_rows,
            entries: (0..in_rows).map(|i| (0, i, scale)).collect(),
        }
    }

    pub fn out_rows(&self) -> usize {
        self.out_rows
    }

    pub fn in_rows(&self) -> usize {
        self.in_rows
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }
}

enum Op {
    Leaf(Option<ParamId>),
    Linear { x: Var, w: Var, b: Option<Var> },
    Add(Var, Var),
    Sum(Vec<Var>),
    Mul(Var, Var),
    Scale(Var, f64),
    Activation(Var, Activation),
    ConcatCols(Vec<Var>),
    SliceCols { x: Var, start: usize },
    RowMap { x: Var, map: Arc<RowMap> },
    MulRows { x: Var, s: Var },
    Mask { x: Var, mask: Vec<f64> },
    MaxRows { x: Var, argmax: Vec<usize> },
    WeightedSum { x: Var, coeffs: Tensor2 },
}

struct Node<'a> {
    value: Cow<'a, Tensor2>,
    op: Op,
    needs_grad: bool,
}

/// Recording of one forward computation.
pub struct Tape<'a> {
    nodes: Vec<Node<'a>>,
    track: bool,
}

/// Parameter gradients produced by [`Tape::backward`].
#[derive(Clone, Debug, Default)]
pub struct Gradients {
    grads: Vec<(ParamId, Tensor2)>,
}

impl Gradients {
    pub fn get(&self, id: ParamId) -> Option<&Tensor2> {
        self.grads.iter().find(|(p, _)| *p == id).map(|(_, g)| g)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Tensor2)> {
        self.grads.iter().map(|(p, g)| (*p, g))
    }

    /// One tensor per parameter in `store`, zero for parameters the loss
    /// never touched.
    pub fn into_dense(self, store: &ParamStore) -> Vec<Tensor2> {
        let mut out = store.zeros_like();
        for (id, g) in self.grads {
            out[id.index()].add_assign(&g);
        }
        out
    }
}

fn shape_str(t: &Tensor2) -> String {
    format!("{}x{}", t.rows(), t.cols())
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    let y = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    // Keep log(sigmoid) finite even when exp underflows.
    y.max(f64::MIN_POSITIVE)
}

fn log_softmax_rows(x: &Tensor2) -> Tensor2 {
    let mut out = x.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        for v in row.iter_mut() {
            *v -= lse;
        }
    }
    out
}

/// Applies an activation outside of any tape.
pub fn activate(x: &Tensor2, kind: Activation) -> Tensor2 {
    match kind {
        Activation::Relu => x.map(|v| v.max(0.0)),
        Activation::Sigmoid => x.map(sigmoid),
        Activation::Tanh => x.map(f64::tanh),
        Activation::LogSoftmaxRows => log_softmax_rows(x),
    }
}

impl<'a> Default for Tape<'a> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'a> Tape<'a> {
    /// A tape that tracks gradients for parameter leaves.
    pub fn new() -> Self {
        Self {
            nodes: Vec::with_capacity(256),
            track: true,
        }
    }

    /// A tape for pure evaluation: parameters are treated as constants.
    pub fn inference() -> Self {
        Self {
            nodes: Vec::with_capacity(256),
            track: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor2 {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor2, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value: Cow::Owned(value),
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn param(&mut self, id: ParamId, value: &'a Tensor2) -> Var {
        self.nodes.push(Node {
            value: Cow::Borrowed(value),
            op: Op::Leaf(Some(id)),
            needs_grad: self.track,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor2) -> Var {
        self.push(value, Op::Leaf(None), false)
    }

    pub fn constant_ref(&mut self, value: &'a Tensor2) -> Var {
        self.nodes.push(Node {
            value: Cow::Borrowed(value),
            op: Op::Leaf(None),
            needs_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    /// `x · w (+ b)`, with `b` a 1×cols row broadcast over rows.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (xv, wv) = (self.value(x), self.value(w));
        if xv.cols() != wv.rows() {
            return Err(Error::Shape(format!(
                "linear: input {} vs weight {}",
                shape_str(xv),
                shape_str(wv)
            )));
        }
        let mut out = Tensor2::zeros(xv.rows(), wv.cols());
        if let Some(b) = b {
            let bv = self.value(b);
            if bv.rows() != 1 || bv.cols() != wv.cols() {
                return Err(Error::Shape(format!(
                    "linear: bias {} vs weight {}",
                    shape_str(bv),
                    shape_str(wv)
                )));
            }
            for r in 0..out.rows() {
                out.row_mut(r).copy_from_slice(bv.data());
            }
        }
        matmul_into(xv, wv, &mut out);
        let ng = self.ng(x) || self.ng(w) || b.is_some_and(|b| self.ng(b));
        Ok(self.push(out, Op::Linear { x, w, b }, ng))
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(Error::Shape(format!(
                "{what}: {} vs {}",
                shape_str(av),
                shape_str(bv)
            )));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::Add(a, b), ng))
    }

    /// Elementwise sum of any number of same-shaped nodes.
    pub fn sum(&mut self, terms: &[Var]) -> Result<Var> {
        let first = *terms
            .first()
            .ok_or_else(|| Error::Contract("sum of zero terms".into()))?;
        let mut out = self.value(first).clone();
        for &t in &terms[1..] {
            self.same_shape(first, t, "sum")?;
            out.add_assign(self.value(t));
        }
        let ng = terms.iter().any(|&t| self.ng(t));
        Ok(self.push(out, Op::Sum(terms.to_vec()), ng))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let (av, bv) = (self.value(a), self.value(b));
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| x * y).collect();
        let out = Tensor2::from_vec(av.rows(), av.cols(), data)?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::Mul(a, b), ng))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let out = self.value(x).scaled(c);
        let ng = self.ng(x);
        self.push(out, Op::Scale(x, c), ng)
    }

    pub fn activate(&mut self, x: Var, kind: Activation) -> Var {
        let out = activate(self.value(x), kind);
        let ng = self.ng(x);
        self.push(out, Op::Activation(x, kind), ng)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.activate(x, Activation::Relu)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.activate(x, Activation::Sigmoid)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.activate(x, Activation::Tanh)
    }

    pub fn log_softmax_rows(&mut self, x: Var) -> Var {
        self.activate(x, Activation::LogSoftmaxRows)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::Contract("concat of zero tensors".into()))?;
        let rows = self.value(first).rows();
        if let Some(bad) = parts.iter().find(|&&p| self.value(p).rows() != rows) {
            return Err(Error::Shape(format!(
                "concat_cols: {} rows vs {} rows",
                rows,
                self.value(*bad).rows()
            )));
        }
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut out = Tensor2::zeros(rows, cols);
        for r in 0..rows {
            let mut offset = 0;
            let row = out.row_mut(r);
            for &p in parts {
                let src = self.nodes[p.0].value.row(r);
                row[offset..offset + src.len()].copy_from_slice(src);
                offset += src.len();
            }
        }
        let ng = parts.iter().any(|&p| self.ng(p));
        Ok(self.push(out, Op::ConcatCols(parts.to_vec()), ng))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let xv = self.value(x);
        if start + len > xv.cols() {
            return Err(Error::Shape(format!(
                "slice_cols [{start}, {}) of {}",
                start + len,
                shape_str(xv)
            )));
        }
        let out = xv.slice_cols(start, len);
        let ng = self.ng(x);
        Ok(self.push(out, Op::SliceCols { x, start }, ng))
    }

    pub fn row_map(&mut self, x: Var, map: &Arc<RowMap>) -> Result<Var> {
        let xv = self.value(x);
        if xv.rows() != map.in_rows {
            return Err(Error::Shape(format!(
                "row map expects {} input rows, got {}",
                map.in_rows,
                shape_str(xv)
            )));
        }
        let mut out = Tensor2::zeros(map.out_rows, xv.cols());
        for &(r, s, c) in &map.entries {
            let src = xv.row(s);
            for (o, v) in out.row_mut(r).iter_mut().zip(src) {
                *o += c * v;
            }
        }
        let ng = self.ng(x);
        Ok(self.push(
            out,
            Op::RowMap {
                x,
                map: Arc::clone(map),
            },
            ng,
        ))
    }

    /// Scales row `i` of `x` by `s[i]`, where `s` is a column vector.
    pub fn mul_rows(&mut self, x: Var, s: Var) -> Result<Var> {
        let (xv, sv) = (self.value(x), self.value(s));
        if sv.cols() != 1 || sv.rows() != xv.rows() {
            return Err(Error::Shape(format!(
                "mul_rows: {} by {}",
                shape_str(xv),
                shape_str(sv)
            )));
        }
        let mut out = xv.clone();
        for r in 0..out.rows() {
            let c = sv.get(r, 0);
            out.row_mut(r).iter_mut().for_each(|v| *v *= c);
        }
        let ng = self.ng(x) || self.ng(s);
        Ok(self.push(out, Op::MulRows { x, s }, ng))
    }

    /// Inverted dropout: each entry kept with probability `1 - rate` and
    /// rescaled by `1 / (1 - rate)`.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, rate: f64, rng: &mut R) -> Var {
        if rate <= 0.0 {
            return x;
        }
        let keep = 1.0 - rate;
        let xv = self.value(x);
        let mask: Vec<f64> = (0..xv.len())
            .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        let data = xv.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let out = Tensor2::from_vec(xv.rows(), xv.cols(), data).expect("mask shape");
        let ng = self.ng(x);
        self.push(out, Op::Mask { x, mask }, ng)
    }

    /// Column-wise maximum, one output row. Ties go to the lowest row.
    pub fn max_rows(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        if xv.rows() == 0 {
            return Err(Error::Contract("max over zero rows".into()));
        }
        let mut out = Tensor2::row_vector(xv.row(0));
        let mut argmax = vec![0; xv.cols()];
        for r in 1..xv.rows() {
            for (c, &v) in xv.row(r).iter().enumerate() {
                if v > out.get(0, c) {
                    out.set(0, c, v);
                    argmax[c] = r;
                }
            }
        }
        let ng = self.ng(x);
        Ok(self.push(out, Op::MaxRows { x, argmax }, ng))
    }

    /// Scalar `Σ coeffs ∘ x`.
    pub fn weighted_sum(&mut self, x: Var, coeffs: Tensor2) -> Result<Var> {
        let xv = self.value(x);
        if xv.shape() != coeffs.shape() {
            return Err(Error::Shape(format!(
                "weighted_sum: {} vs coefficients {}",
                shape_str(xv),
                shape_str(&coeffs)
            )));
        }
        let s: f64 = xv.data().iter().zip(coeffs.data()).map(|(a, b)| a * b).sum();
        let ng = self.ng(x);
        Ok(self.push(
            Tensor2::filled(1, 1, s),
            Op::WeightedSum { x, coeffs },
            ng,
        ))
    }

    /// Gradients of the scalar `loss` with respect to every parameter leaf on
    /// the tape. Leaves the loss does not depend on receive zeros.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.shape() != (1, 1) {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got {}",
                shape_str(lv)
            )));
        }
        let mut grads: Vec<Option<Tensor2>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Tensor2::filled(1, 1, 1.0));
        let mut out = Vec::new();

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if let Op::Leaf(Some(id)) = node.op {
                if node.needs_grad {
                    let g = grads[i]
                        .take()
                        .unwrap_or_else(|| Tensor2::zeros(node.value.rows(), node.value.cols()));
                    out.push((id, g));
                }
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            if !node.needs_grad {
                continue;
            }
            self.propagate(node, &g, &mut grads);
        }
        out.sort_by_key(|(id, _)| *id);
        Ok(Gradients { grads: out })
    }

    fn slot<'g>(&self, grads: &'g mut [Option<Tensor2>], v: Var) -> Option<&'g mut Tensor2> {
        let node = &self.nodes[v.0];
        if !node.needs_grad {
            return None;
        }
        Some(grads[v.0].get_or_insert_with(|| Tensor2::zeros(node.value.rows(), node.value.cols())))
    }

    fn propagate(&self, node: &Node<'a>, g: &Tensor2, grads: &mut [Option<Tensor2>]) {
        match &node.op {
            Op::Leaf(_) => {}
            Op::Linear { x, w, b } => {
                let (xv, wv) = (self.value(*x), self.value(*w));
                if let Some(gx) = self.slot(grads, *x) {
                    matmul_nt_into(g, wv, gx);
                }
                if let Some(gw) = self.slot(grads, *w) {
                    matmul_tn_into(xv, g, gw);
                }
                if let Some(b) = b {
                    if let Some(gb) = self.slot(grads, *b) {
                        for r in 0..g.rows() {
                            for (o, v) in gb.data_mut().iter_mut().zip(g.row(r)) {
                                *o += v;
                            }
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                for v in [a, b] {
                    if let Some(gv) = self.slot(grads, *v) {
                        gv.add_assign(g);
                    }
                }
            }
            Op::Sum(terms) => {
                for v in terms {
                    if let Some(gv) = self.slot(grads, *v) {
                        gv.add_assign(g);
                    }
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if let Some(ga) = self.slot(grads, *a) {
                    for ((o, gi), bi) in ga.data_mut().iter_mut().zip(g.data()).zip(bv.data()) {
                        *o += gi * bi;
                    }
                }
                if let Some(gb) = self.slot(grads, *b) {
                    for ((o, gi), ai) in gb.data_mut().iter_mut().zip(g.data()).zip(av.data()) {
                        *o += gi * ai;
                    }
                }
            }
            Op::Scale(x, c) => {
                if let Some(gx) = self.slot(grads, *x) {
                    for (o, gi) in gx.data_mut().iter_mut().zip(g.data()) {
                        *o += c * gi;
                    }
                }
            }
            Op::Activation(x, kind) => {
                let y = &node.value;
                let Some(gx) = self.slot(grads, *x) else { return };
                match kind {
                    Activation::Relu => {
                        for ((o, gi), yi) in gx.data_mut().iter_mut().zip(g.data()).zip(y.data()) {
                            if *yi > 0.0 {
                                *o += gi;
                            }
                        }
                    }
                    Activation::Sigmoid => {
                        for ((o, gi), yi) in gx.data_mut().iter_mut().zip(g.data()).zip(y.data()) {
                            *o += gi * yi * (1.0 - yi);
                        }
                    }
                    Activation::Tanh => {
                        for ((o, gi), yi) in gx.data_mut().iter_mut().zip(g.data()).zip(y.data()) {
                            *o += gi * (1.0 - yi * yi);
                        }
                    }
                    Activation::LogSoftmaxRows => {
                        for r in 0..y.rows() {
                            let g_row = g.row(r);
                            let total: f64 = g_row.iter().sum();
                            for ((o, gi), yi) in gx.row_mut(r).iter_mut().zip(g_row).zip(y.row(r)) {
                                *o += gi - yi.exp() * total;
                            }
                        }
                    }
                }
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for p in parts {
                    let width = self.value(*p).cols();
                    if let Some(gp) = self.slot(grads, *p) {
                        for r in 0..g.rows() {
                            for (o, v) in gp.row_mut(r).iter_mut().zip(&g.row(r)[offset..offset + width]) {
                                *o += v;
                            }
                        }
                    }
                    offset += width;
                }
            }
            Op::SliceCols { x, start } => {
                if let Some(gx) = self.slot(grads, *x) {
                    for r in 0..g.rows() {
                        let dst = &mut gx.row_mut(r)[*start..*start + g.cols()];
                        for (o, v) in dst.iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                }
            }
            Op::RowMap { x, map } => {
                if let Some(gx) = self.slot(grads, *x) {
                    for &(r, s, c) in &map.entries {
                        let src = g.row(r);
                        for (o, v) in gx.row_mut(s).iter_mut().zip(src) {
                            *o += c * v;
                        }
                    }
                }
            }
            Op::MulRows { x, s } => {
                let (xv, sv) = (self.value(*x), self.value(*s));
                if let Some(gx) = self.slot(grads, *x) {
                    for r in 0..g.rows() {
                        let c = sv.get(r, 0);
                        for (o, v) in gx.row_mut(r).iter_mut().zip(g.row(r)) {
                            *o += c * v;
                        }
                    }
                }
                if let Some(gs) = self.slot(grads, *s) {
                    for r in 0..g.rows() {
                        let d: f64 = g.row(r).iter().zip(xv.row(r)).map(|(a, b)| a * b).sum();
                        gs.data_mut()[r] += d;
                    }
                }
            }
            Op::Mask { x, mask } => {
                if let Some(gx) = self.slot(grads, *x) {
                    for ((o, gi), m) in gx.data_mut().iter_mut().zip(g.data()).zip(mask) {
                        *o += gi * m;
                    }
                }
            }
            Op::MaxRows { x, argmax } => {
                if let Some(gx) = self.slot(grads, *x) {
                    for (c, &r) in argmax.iter().enumerate() {
                        let v = gx.get(r, c) + g.get(0, c);
                        gx.set(r, c, v);
                    }
                }
            }
            Op::WeightedSum { x, coeffs } => {
                let s = g.get(0, 0);
                if let Some(gx) = self.slot(grads, *x) {
                    for (o, c) in gx.data_mut().iter_mut().zip(coeffs.data()) {
                        *o += s * c;
                    }
                }
            }
        }
    }
}
