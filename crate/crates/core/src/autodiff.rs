//! Reverse-mode differentiation over vector-valued nodes.
//!
//! Every node holds a dense `Vec<f64>` and the primitive that produced it.
//! Matrices are stored row-major and carry their shape in the op. The tape is
//! append-only, so node order is already a topological order and `backward`
//! is a single reverse sweep.
//!
//! Piecewise-linear primitives (`max`, `relu`, top-k gathers) route gradient
//! to the selected branch; ties go to the lowest index. [`Tape::decisions`]
//! exposes every such branch choice so callers can detect when a perturbation
//! crosses a kink.

use std::fmt;

use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Affine { x: Var, scale: f64 },
    AddScalar { x: Var, s: Var, idx: usize },
    ScaleBy { x: Var, s: Var, idx: usize },
    Lincomb(Vec<(Var, f64)>),
    Sum(Var),
    Dot(Var, Var),
    Tanh(Var),
    Exp(Var),
    Sqrt(Var),
    Relu(Var),
    MatVec { m: Var, rows: usize, cols: usize, x: Var },
    VecMat { m: Var, rows: usize, cols: usize, x: Var },
    Bilinear { left: Var, diag: Var, right: Var, rows: usize, cols: usize },
    Transpose { x: Var, rows: usize, cols: usize },
    Softmax(Var),
    Normalize { x: Var, norm: f64 },
    SubMax { x: Var, arg: usize },
    Max { x: Var, arg: usize },
    RowMax { x: Var, cols: usize, arg: Vec<usize> },
    MaxProduct { table: Var, pre: Var, cols: usize, arg: Vec<usize> },
    Gather(Vec<(Var, usize)>),
    Concat(Vec<Var>),
    Slice { x: Var, start: usize },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Affine { .. } => "affine",
            Op::AddScalar { .. } => "add_scalar",
            Op::ScaleBy { .. } => "scale_by",
            Op::Lincomb(_) => "lincomb",
            Op::Sum(_) => "sum",
            Op::Dot(..) => "dot",
            Op::Tanh(_) => "tanh",
            Op::Exp(_) => "exp",
            Op::Sqrt(_) => "sqrt",
            Op::Relu(_) => "relu",
            Op::MatVec { .. } => "matvec",
            Op::VecMat { .. } => "vecmat",
            Op::Bilinear { .. } => "bilinear",
            Op::Transpose { .. } => "transpose",
            Op::Softmax(_) => "softmax",
            Op::Normalize { .. } => "normalize",
            Op::SubMax { .. } => "sub_max",
            Op::Max { .. } => "max",
            Op::RowMax { .. } => "row_max",
            Op::MaxProduct { .. } => "max_product",
            Op::Gather(_) => "gather",
            Op::Concat(_) => "concat",
            Op::Slice { .. } => "slice",
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    value: Vec<f64>,
    op: Op,
}

/// Append-only computation record.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar with respect to every node that influenced it.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient for `v`, or `None` when `v` did not reach the loss.
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }
}

/// Index of the first maximum; later equal values lose.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Numerically stable softmax.
pub fn softmax(xs: &[f64]) -> Vec<f64> {
    if xs.is_empty() {
        return Vec::new();
    }
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = xs.iter().map(|&x| (x - m).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
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

    fn push(&mut self, value: Vec<f64>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let val = self.value(v);
        debug_assert_eq!(val.len(), 1, "scalar() on a vector node");
        val[0]
    }

    pub fn dim(&self, v: Var) -> usize {
        self.nodes[v.0].value.len()
    }

    /// Input node (parameter or constant).
    pub fn leaf(&mut self, value: Vec<f64>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn constant(&mut self, value: &[f64]) -> Var {
        self.leaf(value.to_vec())
    }

    fn zip(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.len(), y.len(), "length mismatch");
        x.iter().zip(y).map(|(&p, &q)| f(p, q)).collect()
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.zip(a, b, |p, q| p + q);
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.zip(a, b, |p, q| p - q);
        self.push(v, Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.zip(a, b, |p, q| p * q);
        self.push(v, Op::Mul(a, b))
    }

    /// `scale * x + shift`.
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Var {
        let v = self.value(x).iter().map(|&p| scale * p + shift).collect();
        self.push(v, Op::Affine { x, scale })
    }

    pub fn scale(&mut self, x: Var, scale: f64) -> Var {
        self.affine(x, scale, 0.0)
    }

    /// `x + s[idx]` broadcast over `x`.
    pub fn add_scalar(&mut self, x: Var, s: Var, idx: usize) -> Var {
        let c = self.value(s)[idx];
        let v = self.value(x).iter().map(|&p| p + c).collect();
        self.push(v, Op::AddScalar { x, s, idx })
    }

    /// `x * s[idx]` broadcast over `x`.
    pub fn scale_by(&mut self, x: Var, s: Var, idx: usize) -> Var {
        let c = self.value(s)[idx];
        let v = self.value(x).iter().map(|&p| p * c).collect();
        self.push(v, Op::ScaleBy { x, s, idx })
    }

    /// `Σ c_t x_t` over equal-length inputs.
    pub fn lincomb(&mut self, terms: Vec<(Var, f64)>) -> Var {
        assert!(!terms.is_empty(), "lincomb of nothing");
        let n = self.dim(terms[0].0);
        let mut v = vec![0.0; n];
        for &(x, c) in &terms {
            let xv = self.value(x);
            assert_eq!(xv.len(), n, "length mismatch");
            for (o, &p) in v.iter_mut().zip(xv) {
                *o += c * p;
            }
        }
        self.push(v, Op::Lincomb(terms))
    }

    /// Elementwise sum of equal-length inputs.
    pub fn sum_all(&mut self, xs: &[Var]) -> Var {
        if xs.len() == 1 {
            return xs[0];
        }
        self.lincomb(xs.iter().map(|&x| (x, 1.0)).collect())
    }

    /// Sum of the entries of `x`, as a length-1 node.
    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).iter().sum();
        self.push(vec![s], Op::Sum(x))
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Var {
        let s = self.zip(a, b, |p, q| p * q).iter().sum();
        self.push(vec![s], Op::Dot(a, b))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let v = self.value(x).iter().map(|p| p.tanh()).collect();
        self.push(v, Op::Tanh(x))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let v = self.value(x).iter().map(|p| p.exp()).collect();
        self.push(v, Op::Exp(x))
    }

    /// Square root; the derivative at zero is taken as zero.
    pub fn sqrt(&mut self, x: Var) -> Var {
        let v = self.value(x).iter().map(|p| p.max(0.0).sqrt()).collect();
        self.push(v, Op::Sqrt(x))
    }

    /// `max(0, x)`; the subgradient at zero is zero.
    pub fn relu(&mut self, x: Var) -> Var {
        let v = self.value(x).iter().map(|&p| if p > 0.0 { p } else { 0.0 }).collect();
        self.push(v, Op::Relu(x))
    }

    /// `m · x` with `m` a `rows × cols` row-major matrix.
    pub fn matvec(&mut self, m: Var, rows: usize, cols: usize, x: Var) -> Var {
        let (mv, xv) = (self.value(m), self.value(x));
        assert_eq!(mv.len(), rows * cols, "matvec: matrix shape");
        assert_eq!(xv.len(), cols, "matvec: vector length");
        let v = mv
            .chunks_exact(cols.max(1))
            .take(rows)
            .map(|row| row.iter().zip(xv).map(|(a, b)| a * b).sum())
            .collect::<Vec<f64>>();
        let v = if cols == 0 { vec![0.0; rows] } else { v };
        self.push(v, Op::MatVec { m, rows, cols, x })
    }

    /// `mᵀ · x` with `m` a `rows × cols` row-major matrix and `x` of length `rows`.
    pub fn vecmat(&mut self, m: Var, rows: usize, cols: usize, x: Var) -> Var {
        let (mv, xv) = (self.value(m), self.value(x));
        assert_eq!(mv.len(), rows * cols, "vecmat: matrix shape");
        assert_eq!(xv.len(), rows, "vecmat: vector length");
        let mut v = vec![0.0; cols];
        for (r, &w) in xv.iter().enumerate() {
            for (o, &a) in v.iter_mut().zip(&mv[r * cols..(r + 1) * cols]) {
                *o += w * a;
            }
        }
        self.push(v, Op::VecMat { m, rows, cols, x })
    }

    /// `left · diag(d) · rightᵀ` for `left: rows × k`, `right: cols × k`.
    /// The result is a `rows × cols` matrix.
    pub fn bilinear_diag(&mut self, left: Var, diag: Var, right: Var, rows: usize, cols: usize) -> Var {
        let (l, d, r) = (self.value(left), self.value(diag), self.value(right));
        let k = d.len();
        assert_eq!(l.len(), rows * k, "bilinear: left shape");
        assert_eq!(r.len(), cols * k, "bilinear: right shape");
        let mut v = vec![0.0; rows * cols];
        let mut scaled = vec![0.0; k];
        for a in 0..rows {
            for t in 0..k {
                scaled[t] = l[a * k + t] * d[t];
            }
            for b in 0..cols {
                v[a * cols + b] = scaled.iter().zip(&r[b * k..(b + 1) * k]).map(|(p, q)| p * q).sum();
            }
        }
        self.push(v, Op::Bilinear { left, diag, right, rows, cols })
    }

    pub fn transpose(&mut self, x: Var, rows: usize, cols: usize) -> Var {
        let xv = self.value(x);
        assert_eq!(xv.len(), rows * cols, "transpose: shape");
        let mut v = vec![0.0; rows * cols];
        for a in 0..rows {
            for b in 0..cols {
                v[b * rows + a] = xv[a * cols + b];
            }
        }
        self.push(v, Op::Transpose { x, rows, cols })
    }

    pub fn softmax(&mut self, x: Var) -> Var {
        let v = softmax(self.value(x));
        self.push(v, Op::Softmax(x))
    }

    /// `x / ‖x‖₂`; the zero vector maps to itself with zero gradient.
    pub fn normalize(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let norm = xv.iter().map(|p| p * p).sum::<f64>().sqrt();
        let v = if norm > 0.0 { xv.iter().map(|p| p / norm).collect() } else { vec![0.0; xv.len()] };
        self.push(v, Op::Normalize { x, norm })
    }

    /// `x - max(x)`.
    pub fn sub_max(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let arg = argmax(xv);
        let m = xv[arg];
        let v = xv.iter().map(|p| p - m).collect();
        self.push(v, Op::SubMax { x, arg })
    }

    pub fn max(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let arg = argmax(xv);
        let v = vec![xv[arg]];
        self.push(v, Op::Max { x, arg })
    }

    /// Row-wise maximum of a `rows × cols` matrix.
    pub fn row_max(&mut self, x: Var, rows: usize, cols: usize) -> Var {
        let xv = self.value(x);
        assert_eq!(xv.len(), rows * cols, "row_max: shape");
        let arg: Vec<usize> = xv.chunks_exact(cols).map(argmax).collect();
        let v = arg.iter().enumerate().map(|(r, &a)| xv[r * cols + a]).collect();
        self.push(v, Op::RowMax { x, cols, arg })
    }

    /// `out[b] = max_a (table[a, b] + pre[a])` for a `rows × cols` table.
    pub fn max_product(&mut self, table: Var, pre: Var, rows: usize, cols: usize) -> Var {
        let (t, p) = (self.value(table), self.value(pre));
        assert_eq!(t.len(), rows * cols, "max_product: table shape");
        assert_eq!(p.len(), rows, "max_product: pre length");
        let mut arg = vec![0usize; cols];
        let mut v = vec![f64::NEG_INFINITY; cols];
        for a in 0..rows {
            for b in 0..cols {
                let s = t[a * cols + b] + p[a];
                if s > v[b] {
                    v[b] = s;
                    arg[b] = a;
                }
            }
        }
        self.push(v, Op::MaxProduct { table, pre, cols, arg })
    }

    /// New vector whose entries are picked from existing nodes.
    pub fn gather(&mut self, picks: Vec<(Var, usize)>) -> Var {
        let v = picks.iter().map(|&(x, i)| self.value(x)[i]).collect();
        self.push(v, Op::Gather(picks))
    }

    pub fn concat(&mut self, xs: Vec<Var>) -> Var {
        let v = xs.iter().flat_map(|&x| self.value(x).iter().copied()).collect();
        self.push(v, Op::Concat(xs))
    }

    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Var {
        let v = self.value(x)[start..start + len].to_vec();
        self.push(v, Op::Slice { x, start })
    }

    /// Every discrete branch choice made so far, in tape order.
    ///
    /// Two evaluations of the same graph share a signature exactly when every
    /// max, relu and gather picked the same branch.
    pub fn decisions(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for node in &self.nodes {
            match &node.op {
                Op::SubMax { arg, .. } | Op::Max { arg, .. } => out.push(*arg),
                Op::RowMax { arg, .. } | Op::MaxProduct { arg, .. } => out.extend(arg),
                Op::Relu(_) => out.extend(node.value.iter().map(|&v| usize::from(v > 0.0))),
                Op::Gather(picks) => out.extend(picks.iter().map(|&(x, i)| x.0 * 131 + i)),
                Op::Normalize { norm, .. } => out.push(usize::from(*norm > 0.0)),
                _ => {}
            }
        }
        out
    }

    /// Reverse sweep from the scalar node `loss`.
    ///
    /// Fails on the first node (in reverse order) whose value or incoming
    /// gradient is not finite.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        assert_eq!(self.dim(loss), 1, "backward from a non-scalar node");
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if node.value.iter().chain(&g).any(|x| !x.is_finite()) {
                return Err(Error::NonFinite { node: i, op: node.op.name() });
            }
            self.propagate(&node.op, &node.value, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, op: &Op, out: &[f64], g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        fn acc<'a>(grads: &'a mut [Option<Vec<f64>>], v: Var, len: usize) -> &'a mut Vec<f64> {
            grads[v.0].get_or_insert_with(|| vec![0.0; len])
        }
        let len = |v: Var| self.dim(v);
        match op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                add_into(acc(grads, *a, g.len()), g, 1.0);
                add_into(acc(grads, *b, g.len()), g, 1.0);
            }
            Op::Sub(a, b) => {
                add_into(acc(grads, *a, g.len()), g, 1.0);
                add_into(acc(grads, *b, g.len()), g, -1.0);
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let ga = acc(grads, *a, g.len());
                for ((o, &gi), &bi) in ga.iter_mut().zip(g).zip(bv) {
                    *o += gi * bi;
                }
                let gb = acc(grads, *b, g.len());
                for ((o, &gi), &ai) in gb.iter_mut().zip(g).zip(av) {
                    *o += gi * ai;
                }
            }
            Op::Affine { x, scale } => add_into(acc(grads, *x, g.len()), g, *scale),
            Op::AddScalar { x, s, idx } => {
                add_into(acc(grads, *x, g.len()), g, 1.0);
                let total: f64 = g.iter().sum();
                acc(grads, *s, len(*s))[*idx] += total;
            }
            Op::ScaleBy { x, s, idx } => {
                let c = self.value(*s)[*idx];
                add_into(acc(grads, *x, g.len()), g, c);
                let xv = self.value(*x);
                let total: f64 = g.iter().zip(xv).map(|(a, b)| a * b).sum();
                acc(grads, *s, len(*s))[*idx] += total;
            }
            Op::Lincomb(terms) => {
                for &(x, c) in terms {
                    add_into(acc(grads, x, g.len()), g, c);
                }
            }
            Op::Sum(x) => {
                let n = len(*x);
                acc(grads, *x, n).iter_mut().for_each(|o| *o += g[0]);
            }
            Op::Dot(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                add_into(acc(grads, *a, av.len()), bv, g[0]);
                add_into(acc(grads, *b, bv.len()), av, g[0]);
            }
            Op::Tanh(x) => {
                let gx = acc(grads, *x, g.len());
                for ((o, &gi), &y) in gx.iter_mut().zip(g).zip(out) {
                    *o += gi * (1.0 - y * y);
                }
            }
            Op::Exp(x) => {
                let gx = acc(grads, *x, g.len());
                for ((o, &gi), &y) in gx.iter_mut().zip(g).zip(out) {
                    *o += gi * y;
                }
            }
            Op::Sqrt(x) => {
                let gx = acc(grads, *x, g.len());
                for ((o, &gi), &y) in gx.iter_mut().zip(g).zip(out) {
                    if y > 0.0 {
                        *o += gi * 0.5 / y;
                    }
                }
            }
            Op::Relu(x) => {
                let gx = acc(grads, *x, g.len());
                for ((o, &gi), &y) in gx.iter_mut().zip(g).zip(out) {
                    if y > 0.0 {
                        *o += gi;
                    }
                }
            }
            Op::MatVec { m, rows, cols, x } => {
                let (mv, xv) = (self.value(*m), self.value(*x));
                let gm = acc(grads, *m, rows * cols);
                for r in 0..*rows {
                    for c in 0..*cols {
                        gm[r * cols + c] += g[r] * xv[c];
                    }
                }
                let gx = acc(grads, *x, *cols);
                for r in 0..*rows {
                    for c in 0..*cols {
                        gx[c] += g[r] * mv[r * cols + c];
                    }
                }
            }
            Op::VecMat { m, rows, cols, x } => {
                let (mv, xv) = (self.value(*m), self.value(*x));
                let gm = acc(grads, *m, rows * cols);
                for r in 0..*rows {
                    for c in 0..*cols {
                        gm[r * cols + c] += xv[r] * g[c];
                    }
                }
                let gx = acc(grads, *x, *rows);
                for r in 0..*rows {
                    gx[r] += mv[r * cols..(r + 1) * cols].iter().zip(g).map(|(a, b)| a * b).sum::<f64>();
                }
            }
            Op::Bilinear { left, diag, right, rows, cols } => {
                let (l, d, r) = (self.value(*left), self.value(*diag), self.value(*right));
                let k = d.len();
                // gl[a,t] = d[t] Σ_b g[a,b] r[b,t]; gr[b,t] = d[t] Σ_a g[a,b] l[a,t]
                let mut gl = vec![0.0; rows * k];
                let mut gr = vec![0.0; cols * k];
                let mut gd = vec![0.0; k];
                for a in 0..*rows {
                    for b in 0..*cols {
                        let gab = g[a * cols + b];
                        if gab == 0.0 {
                            continue;
                        }
                        for t in 0..k {
                            let (lt, rt) = (l[a * k + t], r[b * k + t]);
                            gl[a * k + t] += gab * d[t] * rt;
                            gr[b * k + t] += gab * d[t] * lt;
                            gd[t] += gab * lt * rt;
                        }
                    }
                }
                add_into(acc(grads, *left, rows * k), &gl, 1.0);
                add_into(acc(grads, *diag, k), &gd, 1.0);
                add_into(acc(grads, *right, cols * k), &gr, 1.0);
            }
            Op::Transpose { x, rows, cols } => {
                let gx = acc(grads, *x, rows * cols);
                for a in 0..*rows {
                    for b in 0..*cols {
                        gx[a * cols + b] += g[b * rows + a];
                    }
                }
            }
            Op::Softmax(x) => {
                let inner: f64 = g.iter().zip(out).map(|(a, b)| a * b).sum();
                let gx = acc(grads, *x, g.len());
                for ((o, &gi), &y) in gx.iter_mut().zip(g).zip(out) {
                    *o += y * (gi - inner);
                }
            }
            Op::Normalize { x, norm } => {
                if *norm > 0.0 {
                    let inner: f64 = g.iter().zip(out).map(|(a, b)| a * b).sum();
                    let gx = acc(grads, *x, g.len());
                    for ((o, &gi), &y) in gx.iter_mut().zip(g).zip(out) {
                        *o += (gi - y * inner) / norm;
                    }
                }
            }
            Op::SubMax { x, arg } => {
                let total: f64 = g.iter().sum();
                let gx = acc(grads, *x, g.len());
                add_into(gx, g, 1.0);
                gx[*arg] -= total;
            }
            Op::Max { x, arg } => {
                let n = len(*x);
                acc(grads, *x, n)[*arg] += g[0];
            }
            Op::RowMax { x, cols, arg } => {
                let gx = acc(grads, *x, arg.len() * cols);
                for (r, &a) in arg.iter().enumerate() {
                    gx[r * cols + a] += g[r];
                }
            }
            Op::MaxProduct { table, pre, cols, arg } => {
                let rows = len(*pre);
                {
                    let gt = acc(grads, *table, rows * cols);
                    for (b, &a) in arg.iter().enumerate() {
                        gt[a * cols + b] += g[b];
                    }
                }
                let gp = acc(grads, *pre, rows);
                for (b, &a) in arg.iter().enumerate() {
                    gp[a] += g[b];
                }
            }
            Op::Gather(picks) => {
                for (&(x, i), &gi) in picks.iter().zip(g) {
                    let n = len(x);
                    acc(grads, x, n)[i] += gi;
                }
            }
            Op::Concat(xs) => {
                let mut off = 0;
                for &x in xs {
                    let n = len(x);
                    add_into(acc(grads, x, n), &g[off..off + n], 1.0);
                    off += n;
                }
            }
            Op::Slice { x, start } => {
                let n = len(*x);
                let gx = acc(grads, *x, n);
                add_into(&mut gx[*start..start + g.len()], g, 1.0);
            }
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64], scale: f64) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += scale * s;
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "%{}", self.0)
    }
}
