//! Tape-based reverse-mode differentiation over complex matrices.
//!
//! Every node holds a [`ComplexMatrix`]. Complex numbers are treated as
//! pairs of reals: for a real loss `L` and a complex entry `x + iy`, the
//! gradient stored for that entry is `dL/dx + i dL/dy`, which equals twice the
//! Wirtinger derivative `dL/d conj(z)`. With that convention the adjoint of
//! `C = A B` is `G B^H` for `A` and `A^H G` for `B`, just as in the real case.
//!
//! Values are computed eagerly as nodes are pushed (define-by-run), so
//! building the tape *is* the forward pass. [`Tape::scalar`] reports whether
//! any intermediate went non-finite; [`Tape::backward`] walks the nodes in
//! reverse insertion order, which is a valid topological order since inputs
//! always precede their consumers.
//!
//! ```
//! use ssce_core::autodiff::Tape;
//! use ssce_core::linalg::ComplexMatrix;
//!
//! let x0 = ComplexMatrix::scalar(3.0);
//! let mut tape = Tape::new();
//! let x = tape.param(&x0);
//! let y = tape.matmul(x, x);
//! assert_eq!(tape.scalar(y).unwrap(), 9.0);
//! let grad = tape.backward(y).unwrap();
//! assert_eq!(grad.get(0)[(0, 0)].re, 6.0);
//! ```

use std::borrow::Cow;

use crate::error::{Error, Result};
use crate::linalg::{ComplexMatrix, HermitianPd, C64};

/// Index of a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    /// `a * b^H`
    MatMulAdjoint(NodeId, NodeId),
    Adjoint(NodeId),
    Add(NodeId, NodeId),
    /// `x + 1 b` with `b` a row vector broadcast over rows.
    AddRowBias(NodeId, NodeId),
    Scale(NodeId, f64),
    /// Matrix times a real `1x1` node.
    ScaleBy(NodeId, NodeId),
    SplitRelu(NodeId),
    Modulus(NodeId),
    RowSoftmax(NodeId),
    Exp(NodeId),
    Gram(NodeId),
    /// Cached inverse of the argument.
    Logdet(NodeId),
    QuadForm { matrix: NodeId, vector: NodeId },
    /// Cached `C^{-1} z`.
    InvQuadForm { matrix: NodeId, vector: NodeId },
    Mean(Vec<NodeId>),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::MatMulAdjoint(..) => "matmul_adjoint",
            Op::Adjoint(_) => "adjoint",
            Op::Add(..) => "add",
            Op::AddRowBias(..) => "add_row_bias",
            Op::Scale(..) => "scale",
            Op::ScaleBy(..) => "scale_by",
            Op::SplitRelu(_) => "split_relu",
            Op::Modulus(_) => "modulus",
            Op::RowSoftmax(_) => "row_softmax",
            Op::Exp(_) => "exp",
            Op::Gram(_) => "gram",
            Op::Logdet(_) => "logdet",
            Op::QuadForm { .. } => "quad_form",
            Op::InvQuadForm { .. } => "inv_quad_form",
            Op::Mean(_) => "mean",
        }
    }
}

struct Node<'a> {
    op: Op,
    value: Cow<'a, ComplexMatrix>,
    aux: Option<ComplexMatrix>,
}

/// Gradients of a scalar with respect to every registered parameter, in
/// registration order.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradient {
    grads: Vec<ComplexMatrix>,
}

impl Gradient {
    pub fn get(&self, param: usize) -> &ComplexMatrix {
        &self.grads[param]
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ComplexMatrix> {
        self.grads.iter()
    }

    pub fn into_vec(self) -> Vec<ComplexMatrix> {
        self.grads
    }

    /// Euclidean norm over all real components.
    pub fn global_norm(&self) -> f64 {
        self.grads.iter().map(ComplexMatrix::frobenius_norm_sq).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, alpha: f64) {
        for g in &mut self.grads {
            g.as_mut_slice().iter_mut().for_each(|z| *z *= alpha);
        }
    }

    /// `self += alpha * other`.
    pub fn accumulate(&mut self, alpha: f64, other: &Gradient) {
        assert_eq!(self.grads.len(), other.grads.len(), "gradient arity");
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            a.add_scaled(alpha, b);
        }
    }
}

/// Operation record for one forward/backward pass.
///
/// Parameters are borrowed, not copied, so a tape cannot outlive the model
/// it differentiates.
#[derive(Default)]
pub struct Tape<'a> {
    nodes: Vec<Node<'a>>,
    params: Vec<NodeId>,
    first_non_finite: Option<(usize, &'static str)>,
}

impl<'a> Tape<'a> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn value(&self, id: NodeId) -> &ComplexMatrix {
        &self.nodes[id.0].value
    }

    /// Real part of a `1x1` node, or `NonFiniteValue` if anything on the
    /// tape so far overflowed.
    pub fn scalar(&self, id: NodeId) -> Result<f64> {
        self.check_finite()?;
        let v = self.value(id);
        assert_eq!(v.shape(), (1, 1), "scalar() on a non-scalar node");
        Ok(v[(0, 0)].re)
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.first_non_finite {
            Some((idx, op)) => Err(Error::NonFiniteValue(format!("tape node {idx} ({op})"))),
            None => Ok(()),
        }
    }

    fn push(&mut self, op: Op, value: ComplexMatrix, aux: Option<ComplexMatrix>) -> NodeId {
        let idx = self.nodes.len();
        if self.first_non_finite.is_none() && !value.is_finite() {
            self.first_non_finite = Some((idx, op.name()));
        }
        self.nodes.push(Node { op, value: Cow::Owned(value), aux });
        NodeId(idx)
    }

    /// Non-differentiated input.
    pub fn constant(&mut self, value: ComplexMatrix) -> NodeId {
        self.push(Op::Leaf, value, None)
    }

    pub fn constant_ref(&mut self, value: &'a ComplexMatrix) -> NodeId {
        let idx = self.nodes.len();
        self.nodes.push(Node { op: Op::Leaf, value: Cow::Borrowed(value), aux: None });
        NodeId(idx)
    }

    /// Differentiable leaf; its gradient appears at the next parameter index.
    pub fn param(&mut self, value: &'a ComplexMatrix) -> NodeId {
        let id = self.constant_ref(value);
        if self.first_non_finite.is_none() && !value.is_finite() {
            self.first_non_finite = Some((id.0, "param"));
        }
        self.params.push(id);
        id
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).matmul(self.value(b));
        self.push(Op::MatMul(a, b), v, None)
    }

    pub fn matmul_adjoint(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).matmul_adjoint(self.value(b));
        self.push(Op::MatMulAdjoint(a, b), v, None)
    }

    pub fn adjoint(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).adjoint();
        self.push(Op::Adjoint(a), v, None)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).add(self.value(b));
        self.push(Op::Add(a, b), v, None)
    }

    pub fn add_row_bias(&mut self, x: NodeId, bias: NodeId) -> NodeId {
        let xv = self.value(x);
        let bv = self.value(bias);
        assert_eq!(bv.shape(), (1, xv.cols()), "bias must be a 1 x cols row");
        let mut out = xv.clone();
        let cols = xv.cols();
        for (k, z) in out.as_mut_slice().iter_mut().enumerate() {
            *z += bv.as_slice()[k % cols];
        }
        self.push(Op::AddRowBias(x, bias), out, None)
    }

    pub fn scale(&mut self, a: NodeId, alpha: f64) -> NodeId {
        let v = self.value(a).scale(alpha);
        self.push(Op::Scale(a, alpha), v, None)
    }

    /// `s * a` for a real `1x1` node `s`.
    pub fn scale_by(&mut self, a: NodeId, s: NodeId) -> NodeId {
        let sv = self.value(s);
        assert_eq!(sv.shape(), (1, 1), "scale_by needs a 1x1 scale");
        let v = self.value(a).scale(sv[(0, 0)].re);
        self.push(Op::ScaleBy(a, s), v, None)
    }

    /// ReLU applied separately to real and imaginary parts.
    pub fn split_relu(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|z| C64::new(z.re.max(0.0), z.im.max(0.0)));
        self.push(Op::SplitRelu(a), v, None)
    }

    /// Entrywise `|z|` as a real-valued matrix.
    pub fn modulus(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|z| C64::new(z.norm(), 0.0));
        self.push(Op::Modulus(a), v, None)
    }

    /// Softmax along each row of the real parts.
    pub fn row_softmax(&mut self, a: NodeId) -> NodeId {
        let x = self.value(a);
        let cols = x.cols();
        let mut out = ComplexMatrix::zeros(x.rows(), cols);
        for i in 0..x.rows() {
            let row = x.row(i);
            let max = row.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = row.iter().map(|z| (z.re - max).exp()).collect();
            let total: f64 = exps.iter().sum();
            for (j, e) in exps.into_iter().enumerate() {
                out[(i, j)] = C64::new(e / total, 0.0);
            }
        }
        self.push(Op::RowSoftmax(a), out, None)
    }

    /// Entrywise `exp` of the real parts.
    pub fn exp(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|z| C64::new(z.re.exp(), 0.0));
        self.push(Op::Exp(a), v, None)
    }

    /// `X^H X`.
    pub fn gram(&mut self, x: NodeId) -> NodeId {
        let v = crate::linalg::gram(self.value(x));
        self.push(Op::Gram(x), v, None)
    }

    /// `log |S|` of a Hermitian positive definite node, as a `1x1` node.
    pub fn logdet(&mut self, s: NodeId) -> Result<NodeId> {
        let pd = HermitianPd::with_tolerance(self.value(s), 1e-9)?;
        let v = ComplexMatrix::scalar(pd.logdet());
        let inv = pd.inverse();
        Ok(self.push(Op::Logdet(s), v, Some(inv)))
    }

    /// `Re(z^H S z)` for a column vector `z`.
    pub fn quad_form(&mut self, matrix: NodeId, vector: NodeId) -> NodeId {
        let z = self.value(vector);
        assert_eq!(z.cols(), 1, "quad_form needs a column vector");
        let q = self.value(matrix).quadratic_form(z.as_slice());
        self.push(Op::QuadForm { matrix, vector }, ComplexMatrix::scalar(q.re), None)
    }

    /// `z^H C^{-1} z` for a Hermitian positive definite `C`.
    pub fn inv_quad_form(&mut self, matrix: NodeId, vector: NodeId) -> Result<NodeId> {
        let pd = HermitianPd::with_tolerance(self.value(matrix), 1e-9)?;
        let z = self.value(vector);
        assert_eq!(z.cols(), 1, "inv_quad_form needs a column vector");
        let w = pd.solve_vec(z.as_slice());
        let q = crate::linalg::inner(z.as_slice(), &w).re;
        let aux = ComplexMatrix::column(&w);
        Ok(self.push(Op::InvQuadForm { matrix, vector }, ComplexMatrix::scalar(q), Some(aux)))
    }

    pub fn mean(&mut self, items: &[NodeId]) -> NodeId {
        assert!(!items.is_empty(), "mean of nothing");
        let mut acc = self.value(items[0]).clone();
        for &id in &items[1..] {
            acc.add_assign(self.value(id));
        }
        let v = acc.scale(1.0 / items.len() as f64);
        self.push(Op::Mean(items.to_vec()), v, None)
    }

    /// Gradient of a `1x1` node with respect to every parameter.
    pub fn backward(&self, loss: NodeId) -> Result<Gradient> {
        assert_eq!(self.value(loss).shape(), (1, 1), "backward() from a non-scalar node");
        self.backward_seeded(loss, ComplexMatrix::scalar(1.0))
    }

    /// Backpropagates an arbitrary upstream gradient `seed` from `output`.
    pub fn backward_seeded(&self, output: NodeId, seed: ComplexMatrix) -> Result<Gradient> {
        self.check_finite()?;
        assert_eq!(seed.shape(), self.value(output).shape(), "seed shape");
        let mut grads: Vec<Option<ComplexMatrix>> = vec![None; output.0 + 1];
        grads[output.0] = Some(seed);

        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {
                    grads[idx] = Some(g);
                }
                Op::MatMul(a, b) => {
                    let ga = g.matmul_adjoint(self.value(*b));
                    let gb = self.value(*a).adjoint_matmul(&g);
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::MatMulAdjoint(a, b) => {
                    let ga = g.matmul(self.value(*b));
                    let gb = g.adjoint_matmul(self.value(*a));
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Adjoint(a) => accumulate(&mut grads, *a, g.adjoint()),
                Op::Add(a, b) => {
                    accumulate(&mut grads, *b, g.clone());
                    accumulate(&mut grads, *a, g);
                }
                Op::AddRowBias(x, b) => {
                    let cols = g.cols();
                    let mut gb = ComplexMatrix::zeros(1, cols);
                    for i in 0..g.rows() {
                        for (acc, z) in gb.as_mut_slice().iter_mut().zip(g.row(i)) {
                            *acc += z;
                        }
                    }
                    accumulate(&mut grads, *b, gb);
                    accumulate(&mut grads, *x, g);
                }
                Op::Scale(a, alpha) => accumulate(&mut grads, *a, g.scale(*alpha)),
                Op::ScaleBy(a, s) => {
                    let av = self.value(*a);
                    let gs: f64 =
                        g.as_slice().iter().zip(av.as_slice()).map(|(x, y)| x.re * y.re + x.im * y.im).sum();
                    let alpha = self.value(*s)[(0, 0)].re;
                    accumulate(&mut grads, *s, ComplexMatrix::scalar(gs));
                    accumulate(&mut grads, *a, g.scale(alpha));
                }
                Op::SplitRelu(a) => {
                    let x = self.value(*a);
                    let mut ga = g;
                    for (gz, xz) in ga.as_mut_slice().iter_mut().zip(x.as_slice()) {
                        if xz.re <= 0.0 {
                            gz.re = 0.0;
                        }
                        if xz.im <= 0.0 {
                            gz.im = 0.0;
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::Modulus(a) => {
                    let x = self.value(*a);
                    let mut ga = ComplexMatrix::zeros(x.rows(), x.cols());
                    for ((out, gz), xz) in ga.as_mut_slice().iter_mut().zip(g.as_slice()).zip(x.as_slice()) {
                        let r = xz.norm();
                        if r > 0.0 {
                            *out = xz * (gz.re / r);
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::RowSoftmax(a) => {
                    let y = &node.value;
                    let mut ga = ComplexMatrix::zeros(y.rows(), y.cols());
                    for i in 0..y.rows() {
                        let yr = y.row(i);
                        let gr = g.row(i);
                        let dot: f64 = yr.iter().zip(gr).map(|(p, q)| p.re * q.re).sum();
                        for j in 0..y.cols() {
                            ga[(i, j)] = C64::new(yr[j].re * (gr[j].re - dot), 0.0);
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::Exp(a) => {
                    let y = &node.value;
                    let ga = ComplexMatrix::from_fn(y.rows(), y.cols(), |i, j| {
                        C64::new(g[(i, j)].re * y[(i, j)].re, 0.0)
                    });
                    accumulate(&mut grads, *a, ga);
                }
                Op::Gram(x) => {
                    let sym = g.add(&g.adjoint());
                    let gx = self.value(*x).matmul(&sym);
                    accumulate(&mut grads, *x, gx);
                }
                Op::Logdet(s) => {
                    let inv = node.aux.as_ref().expect("logdet caches its inverse");
                    accumulate(&mut grads, *s, inv.scale(g[(0, 0)].re));
                }
                Op::QuadForm { matrix, vector } => {
                    let gl = g[(0, 0)].re;
                    let z = self.value(*vector);
                    let s = self.value(*matrix);
                    let outer = z.matmul_adjoint(z).scale(gl);
                    let sym = s.add(&s.adjoint());
                    let gz = sym.matmul(z).scale(gl);
                    accumulate(&mut grads, *matrix, outer);
                    accumulate(&mut grads, *vector, gz);
                }
                Op::InvQuadForm { matrix, vector } => {
                    let gl = g[(0, 0)].re;
                    let w = node.aux.as_ref().expect("inv_quad_form caches C^-1 z");
                    let gc = w.matmul_adjoint(w).scale(-gl);
                    accumulate(&mut grads, *matrix, gc);
                    accumulate(&mut grads, *vector, w.scale(2.0 * gl));
                }
                Op::Mean(items) => {
                    let gi = g.scale(1.0 / items.len() as f64);
                    for &id in items {
                        accumulate(&mut grads, id, gi.clone());
                    }
                }
            }
        }

        let mut out = Vec::with_capacity(self.params.len());
        for &p in &self.params {
            let g = match grads.get_mut(p.0).and_then(Option::take) {
                Some(g) => g,
                None => {
                    let (r, c) = self.value(p).shape();
                    ComplexMatrix::zeros(r, c)
                }
            };
            if !g.is_finite() {
                return Err(Error::NonFiniteValue(format!("gradient of parameter node {}", p.0)));
            }
            out.push(g);
        }
        Ok(Gradient { grads: out })
    }
}

fn accumulate(grads: &mut [Option<ComplexMatrix>], id: NodeId, g: ComplexMatrix) {
    match &mut grads[id.0] {
        Some(acc) => acc.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}
