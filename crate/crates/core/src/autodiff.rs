//! Tape-based reverse-mode differentiation over matrix-valued nodes.
//!
//! Every operation appends a node holding its forward value; [`Tape::backward`]
//! walks the nodes in reverse insertion order (a valid reverse topological
//! order, since inputs always precede outputs) and accumulates adjoints.
//!
//! ```
//! use hnko_core::autodiff::Tape;
//! use hnko_core::Matrix;
//!
//! let mut tape = Tape::new();
//! let x = tape.leaf(Matrix::row_vector(&[1.0, 2.0]));
//! let loss = tape.sum_squares(x);
//! let grads = tape.backward(loss).unwrap();
//! assert_eq!(grads.get(x).data(), &[2.0, 4.0]);
//! ```

use crate::error::{dim_err, Error, Result};
use crate::numerics::{self, kron, matmul_nt, matmul_tn, ExpmTrace, Matrix};
use crate::orthogonal::{skew_from_upper, upper_from_skew_grad};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Scale(Var, f64),
    AddRow(Var, Var),
    SubScalar(Var, Var),
    Tanh(Var),
    Exp(Var),
    SumSquares(Var),
    Inner(Var, Var),
    RowSqNorms(Var),
    NormalizeColumns(Var, Vec<f64>),
    OffDiagonal(Var),
    SliceRows(Var, usize),
    ExpmSkew(Var, Box<ExpmTrace>),
    Kron(Var, Var),
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Matrix,
}

/// A single-owner computation record.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Adjoints for every node of a tape.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    /// Gradient for `v`; zeros when the loss does not depend on it.
    pub fn get(&self, v: Var) -> Matrix {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[v.0];
                Matrix::zeros(r, c)
            }
        }
    }

    pub fn get_ref(&self, v: Var) -> Option<&Matrix> {
        self.grads[v.0].as_ref()
    }
}

fn same_shape(op: &'static str, a: &Matrix, b: &Matrix) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(dim_err(op, format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
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

    fn push(&mut self, op: Op, value: Matrix) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.as_scalar()
    }

    /// Records an input (parameter or constant data).
    pub fn leaf(&mut self, value: Matrix) -> Var {
        self.push(Op::Leaf, value)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = numerics::matmul(self.value(a), self.value(b))?;
        Ok(self.push(Op::MatMul(a, b), value))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.value(a).transpose();
        self.push(Op::Transpose(a), value)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).add(self.value(b))?;
        Ok(self.push(Op::Add(a, b), value))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).sub(self.value(b))?;
        Ok(self.push(Op::Sub(a, b), value))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let value = self.value(a).scale(s);
        self.push(Op::Scale(a, s), value)
    }

    /// Adds a `1 x cols` row to every row of `a` (bias broadcast).
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (av, rv) = (self.value(a), self.value(row));
        if rv.rows() != 1 || rv.cols() != av.cols() {
            return Err(dim_err(
                "add_row",
                format!("{:?} + row {:?}", av.shape(), rv.shape()),
            ));
        }
        let mut value = av.clone();
        let cols = value.cols();
        for chunk in value.data_mut().chunks_mut(cols) {
            for (x, b) in chunk.iter_mut().zip(rv.data()) {
                *x += b;
            }
        }
        Ok(self.push(Op::AddRow(a, row), value))
    }

    /// Subtracts a `1 x 1` scalar node from every entry.
    pub fn sub_scalar(&mut self, a: Var, s: Var) -> Result<Var> {
        if self.value(s).shape() != (1, 1) {
            return Err(dim_err("sub_scalar", format!("scalar has shape {:?}", self.value(s).shape())));
        }
        let sv = self.scalar(s);
        let value = self.value(a).map(|x| x - sv);
        Ok(self.push(Op::SubScalar(a, s), value))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::tanh);
        self.push(Op::Tanh(a), value)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::exp);
        self.push(Op::Exp(a), value)
    }

    /// Sum of squared entries (squared Frobenius norm), as a 1x1 node.
    pub fn sum_squares(&mut self, a: Var) -> Var {
        let value = Matrix::scalar(self.value(a).sum_squares());
        self.push(Op::SumSquares(a), value)
    }

    /// `sum_ij a_ij b_ij`, as a 1x1 node.
    pub fn inner(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape("inner", self.value(a), self.value(b))?;
        let s: f64 = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x * y)
            .sum();
        Ok(self.push(Op::Inner(a, b), Matrix::scalar(s)))
    }

    /// Squared Euclidean norm of every row, as an `rows x 1` column.
    pub fn row_sq_norms(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let norms: Vec<f64> = (0..av.rows())
            .map(|i| av.row(i).iter().map(|x| x * x).sum())
            .collect();
        self.push(Op::RowSqNorms(a), Matrix::column_vector(&norms))
    }

    /// Divides each column by its Euclidean norm. Columns with norm at or
    /// below `guard` are rejected.
    pub fn normalize_columns(&mut self, a: Var, guard: f64) -> Result<Var> {
        let av = self.value(a);
        let norms: Vec<f64> = (0..av.cols())
            .map(|j| (0..av.rows()).map(|i| av[(i, j)].powi(2)).sum::<f64>().sqrt())
            .collect();
        if let Some((index, &norm)) = norms.iter().enumerate().find(|(_, n)| !(**n > guard)) {
            return Err(Error::DegenerateHyperplane { index, norm, guard });
        }
        let value = Matrix::from_fn(av.rows(), av.cols(), |i, j| av[(i, j)] / norms[j]);
        Ok(self.push(Op::NormalizeColumns(a, norms), value))
    }

    /// Copy of a square matrix with its diagonal zeroed.
    pub fn off_diagonal(&mut self, a: Var) -> Result<Var> {
        let mut value = self.value(a).clone();
        if !value.is_square() {
            return Err(dim_err("off_diagonal", format!("non-square {:?}", value.shape())));
        }
        for i in 0..value.rows() {
            value[(i, i)] = 0.0;
        }
        Ok(self.push(Op::OffDiagonal(a), value))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let av = self.value(a);
        if start > end || end > av.rows() {
            return Err(dim_err(
                "slice_rows",
                format!("rows {start}..{end} of {}", av.rows()),
            ));
        }
        let value = av.slice_rows(start, end);
        Ok(self.push(Op::SliceRows(a, start), value))
    }

    /// `expm(alpha(params))` for a vector of `p(p-1)/2` strictly-upper entries.
    pub fn expm_skew(&mut self, params: Var, p: usize) -> Result<Var> {
        let pv = self.value(params);
        if pv.data().len() != p * (p.saturating_sub(1)) / 2 {
            return Err(dim_err(
                "expm_skew",
                format!("p = {p} needs {} parameters, got {}", p * (p.saturating_sub(1)) / 2, pv.data().len()),
            ));
        }
        let a = skew_from_upper(pv.data(), p);
        let (k, trace) = numerics::expm_traced(&a);
        Ok(self.push(Op::ExpmSkew(params, Box::new(trace)), k))
    }

    pub fn kron(&mut self, a: Var, b: Var) -> Var {
        let value = kron(self.value(a), self.value(b));
        self.push(Op::Kron(a, b), value)
    }

    /// Reverse pass from a scalar node. May be called repeatedly.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).shape() != (1, 1) {
            return Err(dim_err(
                "backward",
                format!("loss must be 1x1, got {:?}", self.value(loss).shape()),
            ));
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Matrix::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let ga = matmul_nt(&g, self.value(*b));
                    let gb = matmul_tn(self.value(*a), &g);
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Transpose(a) => accumulate(&mut grads, *a, g.transpose()),
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g.clone());
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g.scale(-1.0));
                }
                Op::Scale(a, s) => accumulate(&mut grads, *a, g.scale(*s)),
                Op::AddRow(a, row) => {
                    let mut gr = Matrix::zeros(1, g.cols());
                    for i in 0..g.rows() {
                        for (acc, x) in gr.data_mut().iter_mut().zip(g.row(i)) {
                            *acc += x;
                        }
                    }
                    accumulate(&mut grads, *row, gr);
                    accumulate(&mut grads, *a, g.clone());
                }
                Op::SubScalar(a, s) => {
                    let total: f64 = g.data().iter().sum();
                    accumulate(&mut grads, *s, Matrix::scalar(-total));
                    accumulate(&mut grads, *a, g.clone());
                }
                Op::Tanh(a) => {
                    let y = &node.value;
                    let mut ga = g.clone();
                    for (x, yv) in ga.data_mut().iter_mut().zip(y.data()) {
                        *x *= 1.0 - yv * yv;
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::Exp(a) => {
                    let ga = g.hadamard(&node.value)?;
                    accumulate(&mut grads, *a, ga);
                }
                Op::SumSquares(a) => {
                    let s = g.as_scalar();
                    accumulate(&mut grads, *a, self.value(*a).scale(2.0 * s));
                }
                Op::Inner(a, b) => {
                    let s = g.as_scalar();
                    accumulate(&mut grads, *a, self.value(*b).scale(s));
                    accumulate(&mut grads, *b, self.value(*a).scale(s));
                }
                Op::RowSqNorms(a) => {
                    let av = self.value(*a);
                    let mut ga = av.clone();
                    let cols = ga.cols();
                    for (i, row) in ga.data_mut().chunks_mut(cols).enumerate() {
                        let f = 2.0 * g.data()[i];
                        row.iter_mut().for_each(|x| *x *= f);
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::NormalizeColumns(a, norms) => {
                    let y = &node.value;
                    let mut ga = Matrix::zeros(y.rows(), y.cols());
                    for j in 0..y.cols() {
                        let dot: f64 = (0..y.rows()).map(|i| y[(i, j)] * g[(i, j)]).sum();
                        for i in 0..y.rows() {
                            ga[(i, j)] = (g[(i, j)] - y[(i, j)] * dot) / norms[j];
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::OffDiagonal(a) => {
                    let mut ga = g.clone();
                    for i in 0..ga.rows() {
                        ga[(i, i)] = 0.0;
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::SliceRows(a, start) => {
                    let av = self.value(*a);
                    let mut ga = Matrix::zeros(av.rows(), av.cols());
                    let cols = av.cols();
                    ga.data_mut()[start * cols..start * cols + g.data().len()].copy_from_slice(g.data());
                    accumulate(&mut grads, *a, ga);
                }
                Op::ExpmSkew(params, trace) => {
                    let ga = expm_backward(trace, g);
                    let p = ga.rows();
                    let gp = upper_from_skew_grad(&ga, p);
                    let shape = self.value(*params).shape();
                    accumulate(&mut grads, *params, Matrix::new(shape.0, shape.1, gp)?);
                }
                Op::Kron(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let (p1, q1) = av.shape();
                    let (p2, q2) = bv.shape();
                    let mut ga = Matrix::zeros(p1, q1);
                    let mut gb = Matrix::zeros(p2, q2);
                    for i in 0..p1 {
                        for k in 0..p2 {
                            let grow = g.row(i * p2 + k);
                            for j in 0..q1 {
                                let block = &grow[j * q2..(j + 1) * q2];
                                let aij = av[(i, j)];
                                let mut s = 0.0;
                                for (l, gx) in block.iter().enumerate() {
                                    s += gx * bv[(k, l)];
                                    gb[(k, l)] += gx * aij;
                                }
                                ga[(i, j)] += s;
                            }
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
            }
        }
        // Interior adjoints are consumed on the way down; only leaves keep theirs.
        let shapes = self.nodes.iter().map(|n| n.value.shape()).collect();
        Ok(Gradients { grads, shapes })
    }
}

fn accumulate(grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
    match &mut grads[v.0] {
        Some(existing) => existing.axpy(1.0, &g),
        slot @ None => *slot = Some(g),
    }
}

/// Adjoint of `A` given the adjoint of `expm(A)`, by reversing the exact
/// scaling-and-squaring recursion recorded in `trace`.
fn expm_backward(trace: &ExpmTrace, mut g: Matrix) -> Matrix {
    // Squaring: M' = M M  =>  dM = G M^T + M^T G.
    for m in trace.square_inputs.iter().rev() {
        let mut next = matmul_nt(&g, m);
        next.axpy(1.0, &matmul_tn(m, &g));
        g = next;
    }
    // Horner: P' = I + B P / k  =>  dB += G P^T / k, dP = B^T G / k.
    let b = &trace.scaled;
    let n = b.rows();
    let order = trace.horner_inputs.len();
    let mut gb = Matrix::zeros(n, n);
    for (step, p_in) in trace.horner_inputs.iter().enumerate().rev() {
        let k = (order - step) as f64;
        gb.axpy(1.0 / k, &matmul_nt(&g, p_in));
        g = matmul_tn(b, &g).scale(1.0 / k);
    }
    gb.scale(1.0 / 2f64.powi(trace.squarings as i32))
}

#[cfg(test)]
pub(crate) mod fd {
    //! Central finite differences, independent of the reverse pass.
    use super::*;

    /// Numerical gradient of `f` at `x` with step `h`.
    pub fn gradient(f: &dyn Fn(&Matrix) -> f64, x: &Matrix, h: f64) -> Matrix {
        let mut g = Matrix::zeros(x.rows(), x.cols());
        let mut xp = x.clone();
        for i in 0..x.data().len() {
            let orig = xp.data()[i];
            xp.data_mut()[i] = orig + h;
            let fp = f(&xp);
            xp.data_mut()[i] = orig - h;
            let fm = f(&xp);
            xp.data_mut()[i] = orig;
            g.data_mut()[i] = (fp - fm) / (2.0 * h);
        }
        g
    }

    pub fn relative_error(a: &Matrix, b: &Matrix) -> f64 {
        let diff = a.sub(b).unwrap().frobenius_norm();
        let scale = a.frobenius_norm().max(b.frobenius_norm());
        if scale == 0.0 {
            diff
        } else {
            diff / scale
        }
    }
}

#[cfg(test)]
mod tests {
    use super::fd::{gradient, relative_error};
    use super::*;
    use crate::rng::{uniform_matrix, Rng64, SeedableRng};

    /// Builds a scalar loss of one input on a fresh tape, returns value and
    /// reverse-mode gradient.
    fn eval(build: &dyn Fn(&mut Tape, Var) -> Var, x: &Matrix) -> (f64, Matrix) {
        let mut tape = Tape::new();
        let v = tape.leaf(x.clone());
        let out = build(&mut tape, v);
        let grads = tape.backward(out).unwrap();
        (tape.scalar(out), grads.get(v))
    }

    fn check(build: &dyn Fn(&mut Tape, Var) -> Var, x: &Matrix, tol: f64) {
        let (_, g) = eval(build, x);
        let fd = gradient(&|m: &Matrix| eval(build, m).0, x, 1e-5);
        let err = relative_error(&g, &fd);
        assert!(err < tol, "relative error {err:e} >= {tol:e}\nad={g:?}\nfd={fd:?}");
    }

    fn rng(seed: u64) -> Rng64 {
        Rng64::seed_from_u64(seed)
    }

    #[test]
    fn tanh_at_zero() {
        let (v, g) = eval(&|t, x| {
            let y = t.tanh(x);
            let one = t.leaf(Matrix::scalar(1.0));
            t.inner(y, one).unwrap()
        }, &Matrix::scalar(0.0));
        assert_eq!(v, 0.0);
        assert_eq!(g.as_scalar(), 1.0);
    }

    #[test]
    fn sum_squares_gradient_is_two_x() {
        let x = Matrix::row_vector(&[1.0, 2.0]);
        let (v, g) = eval(&|t, x| t.sum_squares(x), &x);
        assert_eq!(v, 5.0);
        assert_eq!(g.data(), &[2.0, 4.0]);
    }

    #[test]
    fn constant_loss_has_zero_gradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(Matrix::row_vector(&[1.0, -3.0]));
        let c = tape.leaf(Matrix::scalar(7.0));
        let loss = tape.scale(c, 2.0);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(x).data(), &[0.0, 0.0]);
        assert!(grads.get_ref(x).is_none());
    }

    #[test]
    fn backward_requires_scalar() {
        let mut tape = Tape::new();
        let x = tape.leaf(Matrix::zeros(2, 2));
        assert!(tape.backward(x).is_err());
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let mut tape = Tape::new();
        let a = tape.leaf(Matrix::zeros(2, 3));
        let b = tape.leaf(Matrix::zeros(2, 3));
        assert!(tape.matmul(a, b).is_err());
        let c = tape.leaf(Matrix::zeros(3, 2));
        assert!(tape.add(a, c).is_err());
    }

    #[test]
    fn repeated_subexpression_accumulates() {
        // loss = <x, x> + ||x||^2 = 2 ||x||^2 -> grad 4x
        let x = Matrix::row_vector(&[0.5, -1.5, 2.0]);
        let (_, g) = eval(&|t, x| {
            let a = t.inner(x, x).unwrap();
            let b = t.sum_squares(x);
            t.add(a, b).unwrap()
        }, &x);
        assert_eq!(g.data(), &[2.0, -6.0, 8.0]);
    }

    #[test]
    fn two_backward_passes_agree() {
        let mut r = rng(1);
        let mut tape = Tape::new();
        let a = tape.leaf(uniform_matrix(&mut r, 15, 1, -0.5, 0.5));
        let k = tape.expm_skew(a, 6).unwrap();
        let y = tape.leaf(uniform_matrix(&mut r, 6, 4, -1.0, 1.0));
        let ky = tape.matmul(k, y).unwrap();
        let loss = tape.sum_squares(ky);
        let g1 = tape.backward(loss).unwrap().get(a);
        let g2 = tape.backward(loss).unwrap().get(a);
        assert_eq!(g1, g2);
    }

    #[test]
    fn primitives_match_finite_differences() {
        let mut r = rng(2);
        let w = uniform_matrix(&mut r, 4, 3, -1.0, 1.0);
        let bias = uniform_matrix(&mut r, 1, 3, -1.0, 1.0);
        let x = uniform_matrix(&mut r, 5, 4, -1.0, 1.0);

        // matmul, add_row, tanh, sum_squares (input side)
        let (wc, bc) = (w.clone(), bias.clone());
        check(&move |t, x| {
            let w = t.leaf(wc.clone());
            let b = t.leaf(bc.clone());
            let h = t.matmul(x, w).unwrap();
            let h = t.add_row(h, b).unwrap();
            let h = t.tanh(h);
            t.sum_squares(h)
        }, &x, 1e-7);

        // weight side with transpose and exp
        let xc = x.clone();
        check(&move |t, w| {
            let x = t.leaf(xc.clone());
            let wt = t.transpose(w);
            let h = t.matmul(x, w).unwrap();
            let e = t.exp(h);
            let s = t.sum_squares(e);
            let q = t.sum_squares(wt);
            t.add(s, q).unwrap()
        }, &w, 1e-7);

        // bias through sub_scalar / row norms
        check(&move |t, s| {
            let xv = t.leaf(x.clone());
            let n = t.row_sq_norms(xv);
            let d = t.sub_scalar(n, s).unwrap();
            let d = t.scale(d, 0.3);
            t.sum_squares(d)
        }, &Matrix::scalar(0.7), 1e-7);
    }

    #[test]
    fn structural_ops_match_finite_differences() {
        let mut r = rng(3);
        let v = uniform_matrix(&mut r, 6, 3, -1.0, 1.0);
        let y = uniform_matrix(&mut r, 8, 6, -1.0, 1.0);
        check(&move |t, v| {
            let yv = t.leaf(y.clone());
            let vn = t.normalize_columns(v, 1e-12).unwrap();
            let proj = t.matmul(yv, vn).unwrap();
            let deg = t.sum_squares(proj);
            let vt = t.transpose(v);
            let gram = t.matmul(vt, v).unwrap();
            let off = t.off_diagonal(gram).unwrap();
            let ind = t.sum_squares(off);
            t.add(deg, ind).unwrap()
        }, &v, 1e-7);

        let z = uniform_matrix(&mut r, 7, 3, -1.0, 1.0);
        check(&|t, z| {
            let a = t.slice_rows(z, 0, 6).unwrap();
            let b = t.slice_rows(z, 1, 7).unwrap();
            let d = t.sub(a, b).unwrap();
            let i = t.inner(d, a).unwrap();
            let s = t.sum_squares(d);
            t.add(i, s).unwrap()
        }, &z, 1e-7);
    }

    #[test]
    fn kron_matches_finite_differences() {
        let mut r = rng(4);
        let a = uniform_matrix(&mut r, 2, 3, -1.0, 1.0);
        let b = uniform_matrix(&mut r, 3, 2, -1.0, 1.0);
        let probe = uniform_matrix(&mut r, 6, 6, -1.0, 1.0);
        let (bc, pc) = (b.clone(), probe.clone());
        check(&move |t, a| {
            let b = t.leaf(bc.clone());
            let p = t.leaf(pc.clone());
            let k = t.kron(a, b);
            let s = t.inner(k, p).unwrap();
            let q = t.sum_squares(k);
            t.add(s, q).unwrap()
        }, &a, 1e-7);
        check(&move |t, b| {
            let a = t.leaf(a.clone());
            let p = t.leaf(probe.clone());
            let k = t.kron(a, b);
            let s = t.inner(k, p).unwrap();
            let q = t.sum_squares(k);
            t.add(s, q).unwrap()
        }, &b, 1e-7);
    }

    #[test]
    fn expm_skew_matches_finite_differences() {
        let mut r = rng(5);
        let p = 6;
        let probe = uniform_matrix(&mut r, p, p, -1.0, 1.0);
        for scale in [0.05, 0.8, 3.0] {
            let params = uniform_matrix(&mut r, p * (p - 1) / 2, 1, -scale, scale);
            let pc = probe.clone();
            check(&move |t, a| {
                let k = t.expm_skew(a, p).unwrap();
                let pr = t.leaf(pc.clone());
                t.inner(k, pr).unwrap()
            }, &params, 1e-5);
        }
    }

    #[test]
    fn koopman_residual_gradient() {
        // || K y - y' ||^2 with K = expm(alpha(A))
        let mut r = rng(6);
        let p = 5;
        let ys = uniform_matrix(&mut r, p, 9, -1.0, 1.0);
        let yn = uniform_matrix(&mut r, p, 9, -1.0, 1.0);
        let params = uniform_matrix(&mut r, 10, 1, -0.7, 0.7);
        check(&move |t, a| {
            let k = t.expm_skew(a, p).unwrap();
            let y = t.leaf(ys.clone());
            let y2 = t.leaf(yn.clone());
            let ky = t.matmul(k, y).unwrap();
            let d = t.sub(ky, y2).unwrap();
            t.sum_squares(d)
        }, &params, 1e-5);
    }

    #[test]
    fn expm_skew_value_matches_numerics() {
        let mut r = rng(7);
        let params = uniform_matrix(&mut r, 3, 1, -1.0, 1.0);
        let mut tape = Tape::new();
        let a = tape.leaf(params.clone());
        let k = tape.expm_skew(a, 3).unwrap();
        let direct = numerics::expm(&skew_from_upper(params.data(), 3)).unwrap();
        assert_eq!(tape.value(k), &direct);
        assert!(tape.expm_skew(a, 4).is_err());
    }
}
