//! Reverse-mode automatic differentiation over a linear operation record.
//!
//! A [`Graph`] is rebuilt for every sentence (or batch): forward operations
//! append nodes in execution order, so the record is topologically sorted by
//! construction, and [`Graph::backward`] walks it once in reverse.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::params::{Grads, ParamId, ParamStore};
use crate::tensor::{dropout_mask_with, Result, Tensor, TensorError};

/// Probability floor applied before taking logarithms.
pub const LOG_FLOOR: f64 = 1e-12;

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    Affine {
        terms: Vec<(Var, Var)>,
        bias: Option<Var>,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Tanh(Var),
    Sigmoid(Var),
    Scale(Var, f64),
    Softmax(Var),
    CrossEntropy {
        probs: Var,
        target: usize,
    },
    Gather {
        table: Var,
        indices: Vec<usize>,
    },
    Concat(Vec<Var>),
    Stack(Vec<Var>),
    Sum(Var),
}

#[derive(Debug)]
struct Node {
    shape: Vec<usize>,
    // `None` for parameter leaves, whose values live in the store.
    value: Option<Vec<f64>>,
    op: Op,
    requires_grad: bool,
}

/// Counters for instrumented decoding.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counters {
    pub attention_calls: usize,
}

struct Dropout {
    rate: f64,
    rng: ChaCha8Rng,
}

/// The computation record.
pub struct Graph<'s> {
    store: Option<&'s ParamStore>,
    nodes: Vec<Node>,
    param_vars: Vec<Option<Var>>,
    grads: Vec<Option<Vec<f64>>>,
    backward_done: bool,
    dropout: Option<Dropout>,
    counters: Counters,
}

fn value_of<'a>(nodes: &'a [Node], store: Option<&'a ParamStore>, v: Var) -> &'a [f64] {
    let node = &nodes[v.0];
    match (&node.value, &node.op) {
        (Some(val), _) => val,
        (None, Op::Param(id)) => store.expect("parameter leaf without store").get(*id).data(),
        _ => unreachable!("node without value"),
    }
}

fn mismatch(op: &'static str, a: &[usize], b: &[usize]) -> TensorError {
    TensorError::ShapeMismatch {
        op,
        left: a.to_vec(),
        right: b.to_vec(),
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
}

// y += W x  for W: rows × cols (row-major)
fn gemv_acc(y: &mut [f64], w: &[f64], x: &[f64]) {
    let cols = x.len();
    for (yi, row) in y.iter_mut().zip(w.chunks_exact(cols)) {
        *yi += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

// y += Wᵀ g
fn gemv_t_acc(y: &mut [f64], w: &[f64], g: &[f64]) {
    let cols = y.len();
    for (gi, row) in g.iter().zip(w.chunks_exact(cols)) {
        if *gi != 0.0 {
            y.iter_mut().zip(row).for_each(|(yj, wj)| *yj += gi * wj);
        }
    }
}

// W += g xᵀ
fn outer_acc(w: &mut [f64], g: &[f64], x: &[f64]) {
    let cols = x.len();
    for (gi, row) in g.iter().zip(w.chunks_exact_mut(cols)) {
        if *gi != 0.0 {
            row.iter_mut().zip(x).for_each(|(wj, xj)| *wj += gi * xj);
        }
    }
}

impl<'s> Graph<'s> {
    /// A record that can read parameters from `store`.
    pub fn new(store: &'s ParamStore) -> Self {
        Graph {
            store: Some(store),
            nodes: Vec::new(),
            param_vars: vec![None; store.len()],
            grads: Vec::new(),
            backward_done: false,
            dropout: None,
            counters: Counters::default(),
        }
    }

    /// A record with no parameter store (constants and variables only).
    pub fn detached() -> Graph<'static> {
        Graph {
            store: None,
            nodes: Vec::new(),
            param_vars: Vec::new(),
            grads: Vec::new(),
            backward_done: false,
            dropout: None,
            counters: Counters::default(),
        }
    }

    /// Clears every recorded operation, gradient and counter.
    pub fn reset(&mut self) {
        self.nodes.clear();
        self.grads.clear();
        self.param_vars.iter_mut().for_each(|p| *p = None);
        self.backward_done = false;
        self.counters = Counters::default();
    }

    /// Enables inverted dropout for subsequent [`Graph::dropout`] calls.
    pub fn enable_dropout(&mut self, rate: f64, seed: u64) -> Result<()> {
        if !(0.0..1.0).contains(&rate) {
            return Err(TensorError::InvalidRate(rate));
        }
        self.dropout = (rate > 0.0).then(|| Dropout {
            rate,
            rng: ChaCha8Rng::seed_from_u64(seed),
        });
        Ok(())
    }

    pub fn counters(&self) -> Counters {
        self.counters
    }

    pub(crate) fn count_attention(&mut self) {
        self.counters.attention_calls += 1;
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &[f64] {
        value_of(&self.nodes, self.store, v)
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn tensor(&self, v: Var) -> Tensor {
        Tensor::new(self.shape(v).to_vec(), self.value(v).to_vec()).expect("recorded shape")
    }

    /// Scalar value of a one-element node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v)[0]
    }

    fn push(
        &mut self,
        shape: Vec<usize>,
        value: Vec<f64>,
        op: Op,
        requires_grad: bool,
        name: &'static str,
    ) -> Result<Var> {
        if value.iter().any(|v| !v.is_finite()) {
            return Err(TensorError::NonFinite(name));
        }
        self.nodes.push(Node {
            shape,
            value: Some(value),
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        let shape = t.shape().to_vec();
        self.nodes.push(Node {
            shape,
            value: Some(t.into_data()),
            op: Op::Leaf,
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    /// A leaf that receives a gradient.
    pub fn variable(&mut self, t: Tensor) -> Var {
        let v = self.constant(t);
        self.nodes[v.0].requires_grad = true;
        v
    }

    /// The leaf for a stored parameter; repeated calls share one node so
    /// gradients accumulate in a single buffer.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars[id.0] {
            return v;
        }
        let shape = self
            .store
            .expect("graph has no parameter store")
            .get(id)
            .shape()
            .to_vec();
        self.nodes.push(Node {
            shape,
            value: None,
            op: Op::Param(id),
            requires_grad: true,
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars[id.0] = Some(v);
        v
    }

    /// Matrix product. 1-axis operands act as row (left) or column (right)
    /// vectors; two 1-axis operands give their dot product as a scalar.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let (va, vb) = (self.value(a), self.value(b));
        let (shape, out) = match (sa.len(), sb.len()) {
            (2, 2) if sa[1] == sb[0] => {
                let (m, k, n) = (sa[0], sa[1], sb[1]);
                let mut out = vec![0.0; m * n];
                for i in 0..m {
                    for p in 0..k {
                        let aip = va[i * k + p];
                        if aip != 0.0 {
                            let row = &vb[p * n..(p + 1) * n];
                            out[i * n..(i + 1) * n]
                                .iter_mut()
                                .zip(row)
                                .for_each(|(o, bv)| *o += aip * bv);
                        }
                    }
                }
                (vec![m, n], out)
            }
            (2, 1) if sa[1] == sb[0] => {
                let mut out = vec![0.0; sa[0]];
                gemv_acc(&mut out, va, vb);
                (vec![sa[0]], out)
            }
            (1, 2) if sa[0] == sb[0] => {
                let mut out = vec![0.0; sb[1]];
                gemv_t_acc(&mut out, vb, va);
                (vec![sb[1]], out)
            }
            (1, 1) if sa[0] == sb[0] => {
                let dot = va.iter().zip(vb).map(|(x, y)| x * y).sum();
                (Vec::new(), vec![dot])
            }
            _ => return Err(mismatch("matmul", &sa, &sb)),
        };
        let rg = self.rg(a) || self.rg(b);
        self.push(shape, out, Op::MatMul(a, b), rg, "matmul")
    }

    /// `Σ Wᵢ xᵢ + bias` for matrices `Wᵢ` and vectors `xᵢ`.
    pub fn affine(&mut self, terms: &[(Var, Var)], bias: Option<Var>) -> Result<Var> {
        let rows = match (terms.first(), bias) {
            (Some(&(w, _)), _) => self.shape(w).first().copied().unwrap_or(0),
            (None, Some(b)) => self.shape(b)[0],
            (None, None) => return Err(TensorError::Empty("affine")),
        };
        let mut out = match bias {
            Some(b) => {
                if self.shape(b) != [rows] {
                    return Err(mismatch("affine", &[rows], self.shape(b)));
                }
                self.value(b).to_vec()
            }
            None => vec![0.0; rows],
        };
        let mut rg = bias.map(|b| self.rg(b)).unwrap_or(false);
        for &(w, x) in terms {
            let (sw, sx) = (self.shape(w), self.shape(x));
            if sw.len() != 2 || sx.len() != 1 || sw[0] != rows || sw[1] != sx[0] {
                return Err(mismatch("affine", sw, sx));
            }
            gemv_acc(&mut out, self.value(w), self.value(x));
            rg |= self.rg(w) || self.rg(x);
        }
        self.push(
            vec![rows],
            out,
            Op::Affine {
                terms: terms.to_vec(),
                bias,
            },
            rg,
            "affine",
        )
    }

    fn binary(
        &mut self,
        a: Var,
        b: Var,
        name: &'static str,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(mismatch(name, self.shape(a), self.shape(b)));
        }
        let out = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| f(x, y))
            .collect();
        let rg = self.rg(a) || self.rg(b);
        self.push(self.shape(a).to_vec(), out, op, rg, name)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    fn unary(&mut self, a: Var, name: &'static str, f: impl Fn(f64) -> f64, op: Op) -> Result<Var> {
        let out = self.value(a).iter().map(|&x| f(x)).collect();
        let rg = self.rg(a);
        self.push(self.shape(a).to_vec(), out, op, rg, name)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.unary(a, "tanh", f64::tanh, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary(a, "sigmoid", sigmoid, Op::Sigmoid(a))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        self.unary(a, "scale", |x| c * x, Op::Scale(a, c))
    }

    /// Sum of all entries, as a scalar.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).iter().sum();
        let rg = self.rg(a);
        self.push(Vec::new(), vec![s], Op::Sum(a), rg, "sum")
    }

    /// Softmax of a vector, computed with max subtraction.
    pub fn softmax(&mut self, logits: Var) -> Result<Var> {
        if self.shape(logits).len() != 1 {
            return Err(mismatch("softmax", self.shape(logits), &[]));
        }
        let x = self.value(logits);
        if x.is_empty() {
            return Err(TensorError::Empty("softmax"));
        }
        let out = softmax_values(x);
        let rg = self.rg(logits);
        self.push(vec![out.len()], out, Op::Softmax(logits), rg, "softmax")
    }

    /// `−ln max(p[target], 1e-12)` as a scalar.
    pub fn cross_entropy(&mut self, probs: Var, target: usize) -> Result<Var> {
        let p = self.value(probs);
        if target >= p.len() {
            return Err(TensorError::IndexOutOfRange {
                op: "cross_entropy",
                position: 0,
                index: target,
                bound: p.len(),
            });
        }
        let loss = -p[target].max(LOG_FLOOR).ln();
        let rg = self.rg(probs);
        self.push(
            Vec::new(),
            vec![loss],
            Op::CrossEntropy { probs, target },
            rg,
            "cross_entropy",
        )
    }

    /// Rows of `table` selected by `indices`, as a `len × d` matrix.
    pub fn gather_rows(&mut self, table: Var, indices: &[usize]) -> Result<Var> {
        let d = self.gather_check(table, indices)?;
        let t = self.value(table);
        let mut out = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            out.extend_from_slice(&t[i * d..(i + 1) * d]);
        }
        let rg = self.rg(table);
        self.push(
            vec![indices.len(), d],
            out,
            Op::Gather {
                table,
                indices: indices.to_vec(),
            },
            rg,
            "gather_rows",
        )
    }

    /// One row of `table` as a vector (embedding lookup).
    pub fn row(&mut self, table: Var, index: usize) -> Result<Var> {
        let d = self.gather_check(table, &[index])?;
        let out = self.value(table)[index * d..(index + 1) * d].to_vec();
        let rg = self.rg(table);
        self.push(
            vec![d],
            out,
            Op::Gather {
                table,
                indices: vec![index],
            },
            rg,
            "row",
        )
    }

    fn gather_check(&self, table: Var, indices: &[usize]) -> Result<usize> {
        let shape = self.shape(table);
        if shape.len() != 2 {
            return Err(mismatch("gather_rows", shape, &[]));
        }
        if let Some((position, &index)) = indices.iter().enumerate().find(|(_, &i)| i >= shape[0]) {
            return Err(TensorError::IndexOutOfRange {
                op: "gather_rows",
                position,
                index,
                bound: shape[0],
            });
        }
        Ok(shape[1])
    }

    /// Concatenation of vectors.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let mut out = Vec::new();
        let mut rg = false;
        for &p in parts {
            if self.shape(p).len() != 1 {
                return Err(mismatch("concat", self.shape(p), &[]));
            }
            out.extend_from_slice(self.value(p));
            rg |= self.rg(p);
        }
        if out.is_empty() {
            return Err(TensorError::Empty("concat"));
        }
        self.push(
            vec![out.len()],
            out,
            Op::Concat(parts.to_vec()),
            rg,
            "concat",
        )
    }

    /// Stacks equal-width vectors as the rows of a matrix.
    pub fn stack_rows(&mut self, rows: &[Var]) -> Result<Var> {
        let first = *rows.first().ok_or(TensorError::Empty("stack_rows"))?;
        let width = self.shape(first).to_vec();
        if width.len() != 1 {
            return Err(mismatch("stack_rows", &width, &[]));
        }
        let mut out = Vec::with_capacity(rows.len() * width[0]);
        let mut rg = false;
        for &r in rows {
            if self.shape(r) != width.as_slice() {
                return Err(mismatch("stack_rows", &width, self.shape(r)));
            }
            out.extend_from_slice(self.value(r));
            rg |= self.rg(r);
        }
        self.push(
            vec![rows.len(), width[0]],
            out,
            Op::Stack(rows.to_vec()),
            rg,
            "stack_rows",
        )
    }

    /// Applies inverted dropout when enabled; identity otherwise.
    pub fn dropout(&mut self, x: Var) -> Result<Var> {
        let Some(d) = self.dropout.as_mut() else {
            return Ok(x);
        };
        let mask = dropout_mask_with(&self.nodes[x.0].shape, d.rate, &mut d.rng)?;
        let m = self.constant(mask);
        self.mul(x, m)
    }

    /// Back-propagates from a scalar `loss` with seed gradient 1.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.backward_done {
            return Err(TensorError::BackwardTwice);
        }
        if self.value(loss).len() != 1 {
            return Err(TensorError::NotScalar(self.shape(loss).to_vec()));
        }
        self.backward_done = true;
        self.grads = vec![None; self.nodes.len()];
        self.grads[loss.0] = Some(vec![1.0]);
        let nodes = &self.nodes;
        let store = self.store;
        let grads = &mut self.grads;
        let val = |v: Var| value_of(nodes, store, v);

        fn slot<'g>(
            grads: &'g mut [Option<Vec<f64>>],
            nodes: &[Node],
            v: Var,
        ) -> Option<&'g mut Vec<f64>> {
            if !nodes[v.0].requires_grad {
                return None;
            }
            let n = nodes[v.0].shape.iter().product::<usize>().max(1);
            Some(grads[v.0].get_or_insert_with(|| vec![0.0; n]))
        }

        for i in (0..=loss.0).rev() {
            if !nodes[i].requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            match &nodes[i].op {
                Op::Leaf | Op::Param(_) => {}
                Op::MatMul(a, b) => {
                    let (a, b) = (*a, *b);
                    let (sa, sb) = (&nodes[a.0].shape, &nodes[b.0].shape);
                    let (va, vb) = (val(a), val(b));
                    match (sa.len(), sb.len()) {
                        (2, 2) => {
                            let (m, k, n) = (sa[0], sa[1], sb[1]);
                            if let Some(ga) = slot(grads, nodes, a) {
                                for r in 0..m {
                                    for p in 0..k {
                                        ga[r * k + p] += (0..n)
                                            .map(|c| g[r * n + c] * vb[p * n + c])
                                            .sum::<f64>();
                                    }
                                }
                            }
                            if let Some(gb) = slot(grads, nodes, b) {
                                for r in 0..m {
                                    for p in 0..k {
                                        let arp = va[r * k + p];
                                        for c in 0..n {
                                            gb[p * n + c] += arp * g[r * n + c];
                                        }
                                    }
                                }
                            }
                        }
                        (2, 1) => {
                            if let Some(ga) = slot(grads, nodes, a) {
                                outer_acc(ga, &g, vb);
                            }
                            if let Some(gb) = slot(grads, nodes, b) {
                                gemv_t_acc(gb, va, &g);
                            }
                        }
                        (1, 2) => {
                            if let Some(ga) = slot(grads, nodes, a) {
                                gemv_acc(ga, vb, &g);
                            }
                            if let Some(gb) = slot(grads, nodes, b) {
                                outer_acc(gb, va, &g);
                            }
                        }
                        _ => {
                            if let Some(ga) = slot(grads, nodes, a) {
                                ga.iter_mut().zip(vb).for_each(|(x, y)| *x += g[0] * y);
                            }
                            if let Some(gb) = slot(grads, nodes, b) {
                                gb.iter_mut().zip(va).for_each(|(x, y)| *x += g[0] * y);
                            }
                        }
                    }
                }
                Op::Affine { terms, bias } => {
                    for &(w, x) in terms {
                        if let Some(gw) = slot(grads, nodes, w) {
                            outer_acc(gw, &g, val(x));
                        }
                        if let Some(gx) = slot(grads, nodes, x) {
                            gemv_t_acc(gx, val(w), &g);
                        }
                    }
                    if let Some(b) = bias {
                        if let Some(gb) = slot(grads, nodes, *b) {
                            add_into(gb, &g);
                        }
                    }
                }
                Op::Add(a, b) => {
                    let (a, b) = (*a, *b);
                    if let Some(ga) = slot(grads, nodes, a) {
                        add_into(ga, &g);
                    }
                    if let Some(gb) = slot(grads, nodes, b) {
                        add_into(gb, &g);
                    }
                }
                Op::Sub(a, b) => {
                    let (a, b) = (*a, *b);
                    if let Some(ga) = slot(grads, nodes, a) {
                        add_into(ga, &g);
                    }
                    if let Some(gb) = slot(grads, nodes, b) {
                        gb.iter_mut().zip(&g).for_each(|(x, y)| *x -= y);
                    }
                }
                Op::Mul(a, b) => {
                    let (a, b) = (*a, *b);
                    let (va, vb) = (val(a), val(b));
                    if let Some(ga) = slot(grads, nodes, a) {
                        for ((x, gi), bi) in ga.iter_mut().zip(&g).zip(vb) {
                            *x += gi * bi;
                        }
                    }
                    if let Some(gb) = slot(grads, nodes, b) {
                        for ((x, gi), ai) in gb.iter_mut().zip(&g).zip(va) {
                            *x += gi * ai;
                        }
                    }
                }
                Op::Tanh(a) => {
                    let y = nodes[i].value.as_deref().unwrap();
                    if let Some(ga) = slot(grads, nodes, *a) {
                        for ((x, gi), yi) in ga.iter_mut().zip(&g).zip(y) {
                            *x += gi * (1.0 - yi * yi);
                        }
                    }
                }
                Op::Sigmoid(a) => {
                    let y = nodes[i].value.as_deref().unwrap();
                    if let Some(ga) = slot(grads, nodes, *a) {
                        for ((x, gi), yi) in ga.iter_mut().zip(&g).zip(y) {
                            *x += gi * yi * (1.0 - yi);
                        }
                    }
                }
                Op::Scale(a, c) => {
                    let c = *c;
                    if let Some(ga) = slot(grads, nodes, *a) {
                        ga.iter_mut().zip(&g).for_each(|(x, gi)| *x += c * gi);
                    }
                }
                Op::Sum(a) => {
                    if let Some(ga) = slot(grads, nodes, *a) {
                        ga.iter_mut().for_each(|x| *x += g[0]);
                    }
                }
                Op::Softmax(a) => {
                    let y = nodes[i].value.as_deref().unwrap();
                    let dot: f64 = g.iter().zip(y).map(|(gi, yi)| gi * yi).sum();
                    if let Some(ga) = slot(grads, nodes, *a) {
                        for ((x, gi), yi) in ga.iter_mut().zip(&g).zip(y) {
                            *x += yi * (gi - dot);
                        }
                    }
                }
                Op::CrossEntropy { probs, target } => {
                    let p = val(*probs)[*target];
                    if p > LOG_FLOOR {
                        if let Some(gp) = slot(grads, nodes, *probs) {
                            gp[*target] -= g[0] / p;
                        }
                    }
                }
                Op::Gather { table, indices } => {
                    let d = nodes[table.0].shape[1];
                    if let Some(gt) = slot(grads, nodes, *table) {
                        for (r, &ix) in indices.iter().enumerate() {
                            add_into(&mut gt[ix * d..(ix + 1) * d], &g[r * d..(r + 1) * d]);
                        }
                    }
                }
                Op::Concat(parts) | Op::Stack(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let n = nodes[p.0].shape.iter().product::<usize>();
                        if let Some(gp) = slot(grads, nodes, p) {
                            add_into(gp, &g[offset..offset + n]);
                        }
                        offset += n;
                    }
                }
            }
            grads[i] = Some(g);
        }
        Ok(())
    }

    /// Gradient of the last backward pass with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Parameter gradients of the last backward pass, aligned with the store.
    pub fn param_grads(&self) -> Grads {
        let slots = self
            .param_vars
            .iter()
            .map(|v| v.and_then(|v| self.grads.get(v.0).cloned().flatten()))
            .collect();
        Grads::from_slots(slots)
    }
}

pub(crate) fn softmax_values(x: &[f64]) -> Vec<f64> {
    let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let z: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= z);
    out
}

/// Log-probability with the same floor used by [`Graph::cross_entropy`].
pub fn floored_ln(p: f64) -> f64 {
    p.max(LOG_FLOOR).ln()
}
