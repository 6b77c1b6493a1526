//! Exactly orthogonal Koopman matrices.
//!
//! A vector of `p(p-1)/2` unconstrained parameters fills the strict upper
//! triangle of `A`; `alpha(A) = A - A^T` is skew-symmetric and `expm` maps it
//! into SO(p). The Kronecker variant builds `K = K_1 ⊗ K_2 (⊗ ...)` from
//! small factors, cutting the parameter count from quadratic to linear in `p`
//! when the factors have size `sqrt(p)`.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::numerics::{expm, kron, Matrix};
use crate::rng::{uniform, Rng64};

/// Half-width of the uniform initialization, divided by `p`.
pub const INIT_SCALE: f64 = 0.1;

pub(crate) fn skew_from_upper(params: &[f64], p: usize) -> Matrix {
    let mut a = Matrix::zeros(p, p);
    let mut idx = 0;
    for i in 0..p {
        for j in i + 1..p {
            a[(i, j)] = params[idx];
            a[(j, i)] = -params[idx];
            idx += 1;
        }
    }
    a
}

/// Chain rule through `alpha`: `d/dparam_(ij) = G_ij - G_ji`.
pub(crate) fn upper_from_skew_grad(g: &Matrix, p: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(p * (p - 1) / 2);
    for i in 0..p {
        for j in i + 1..p {
            out.push(g[(i, j)] - g[(j, i)]);
        }
    }
    out
}

/// Strictly-upper-triangular entries of a `p x p` skew matrix, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkewParams {
    p: usize,
    params: Vec<f64>,
}

impl SkewParams {
    pub fn new(p: usize, params: Vec<f64>) -> Result<Self> {
        let expected = p * p.saturating_sub(1) / 2;
        if params.len() != expected {
            return Err(Error::InvalidParameter(format!(
                "skew parameters for p = {p} need {expected} entries, got {}",
                params.len()
            )));
        }
        Ok(Self { p, params })
    }

    pub fn zeros(p: usize) -> Self {
        Self {
            p,
            params: vec![0.0; p * p.saturating_sub(1) / 2],
        }
    }

    /// I.i.d. uniform in `[-0.1/p, 0.1/p]`, so the exponential starts near I.
    pub fn near_identity(p: usize, rng: &mut Rng64) -> Self {
        let h = INIT_SCALE / p.max(1) as f64;
        let n = p * p.saturating_sub(1) / 2;
        Self {
            p,
            params: (0..n).map(|_| uniform(rng, -h, h)).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn negated(&self) -> Self {
        Self {
            p: self.p,
            params: self.params.iter().map(|x| -x).collect(),
        }
    }
}

/// The skew-symmetric image `A - A^T` of a parameter vector.
pub fn alpha(a: &SkewParams) -> Matrix {
    skew_from_upper(&a.params, a.p)
}

/// Layout of an orthogonal Koopman layer, independent of parameter values.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum KoopmanShape {
    Full { p: usize },
    Kronecker { p: usize, factors: Vec<usize> },
}

impl KoopmanShape {
    /// Two factors of size `sqrt(p)`; `p` must be a perfect square.
    pub fn kronecker_square(p: usize) -> Result<Self> {
        let r = (p as f64).sqrt().round() as usize;
        if r * r != p || r < 2 {
            return Err(Error::InvalidParameter(format!(
                "Kronecker layer needs a square latent dimension, got p = {p}"
            )));
        }
        Ok(KoopmanShape::Kronecker {
            p,
            factors: vec![r, r],
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            KoopmanShape::Full { p } | KoopmanShape::Kronecker { p, .. } => *p,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            KoopmanShape::Full { p } if *p == 0 => Err(Error::InvalidParameter(
                "latent dimension must be positive".into(),
            )),
            KoopmanShape::Full { .. } => Ok(()),
            KoopmanShape::Kronecker { p, factors } => {
                if factors.len() < 2 {
                    return Err(Error::InvalidParameter(
                        "Kronecker layer needs at least two factors".into(),
                    ));
                }
                let prod: usize = factors.iter().product();
                if prod != *p || factors.contains(&0) {
                    return Err(Error::InvalidParameter(format!(
                        "Kronecker factors {factors:?} multiply to {prod}, expected p = {p}"
                    )));
                }
                Ok(())
            }
        }
    }
}

/// Number of learnable parameters: `p(p-1)/2` for the full layer, the sum of
/// the factor counts for the Kronecker layer.
pub fn param_count(shape: &KoopmanShape) -> Result<usize> {
    shape.validate()?;
    Ok(match shape {
        KoopmanShape::Full { p } => p * (p - 1) / 2,
        KoopmanShape::Kronecker { factors, .. } => factors.iter().map(|q| q * (q - 1) / 2).sum(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum OrthogonalKoopman {
    Full { params: SkewParams },
    Kronecker { factors: Vec<SkewParams> },
}

impl OrthogonalKoopman {
    pub fn init(shape: &KoopmanShape, rng: &mut Rng64) -> Result<Self> {
        shape.validate()?;
        Ok(match shape {
            KoopmanShape::Full { p } => OrthogonalKoopman::Full {
                params: SkewParams::near_identity(*p, rng),
            },
            KoopmanShape::Kronecker { factors, .. } => OrthogonalKoopman::Kronecker {
                factors: factors.iter().map(|&q| SkewParams::near_identity(q, rng)).collect(),
            },
        })
    }

    pub fn identity(shape: &KoopmanShape) -> Result<Self> {
        shape.validate()?;
        Ok(match shape {
            KoopmanShape::Full { p } => OrthogonalKoopman::Full {
                params: SkewParams::zeros(*p),
            },
            KoopmanShape::Kronecker { factors, .. } => OrthogonalKoopman::Kronecker {
                factors: factors.iter().map(|&q| SkewParams::zeros(q)).collect(),
            },
        })
    }

    pub fn shape(&self) -> KoopmanShape {
        match self {
            OrthogonalKoopman::Full { params } => KoopmanShape::Full { p: params.dim() },
            OrthogonalKoopman::Kronecker { factors } => KoopmanShape::Kronecker {
                p: factors.iter().map(SkewParams::dim).product(),
                factors: factors.iter().map(SkewParams::dim).collect(),
            },
        }
    }

    pub fn dim(&self) -> usize {
        self.shape().dim()
    }

    pub fn param_count(&self) -> usize {
        self.skew_params().iter().map(|s| s.params().len()).sum()
    }

    pub fn skew_params(&self) -> Vec<&SkewParams> {
        match self {
            OrthogonalKoopman::Full { params } => vec![params],
            OrthogonalKoopman::Kronecker { factors } => factors.iter().collect(),
        }
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            OrthogonalKoopman::Full { params } => vec![params.params_mut()],
            OrthogonalKoopman::Kronecker { factors } => {
                factors.iter_mut().map(SkewParams::params_mut).collect()
            }
        }
    }

    /// The orthogonal factor matrices (one for the full layer).
    pub fn factor_matrices(&self) -> Vec<Matrix> {
        self.skew_params()
            .into_iter()
            .map(|s| expm(&alpha(s)).expect("skew matrix is square"))
            .collect()
    }

    /// The `p x p` matrix `K`.
    pub fn materialize(&self) -> Matrix {
        let mut mats = self.factor_matrices().into_iter();
        let first = mats.next().expect("at least one factor");
        mats.fold(first, |acc, m| kron(&acc, &m))
    }

    /// Records `K` on a tape. Returns the `K` node and one leaf per parameter
    /// vector (in [`Self::skew_params`] order).
    pub fn bind(&self, tape: &mut Tape) -> Result<(Var, Vec<Var>)> {
        let mut leaves = Vec::new();
        let mut k: Option<Var> = None;
        for s in self.skew_params() {
            let leaf = tape.leaf(Matrix::column_vector(s.params()));
            leaves.push(leaf);
            let factor = tape.expm_skew(leaf, s.dim())?;
            k = Some(match k {
                None => factor,
                Some(acc) => tape.kron(acc, factor),
            });
        }
        Ok((k.expect("at least one factor"), leaves))
    }

    /// A frozen operator for repeated application.
    pub fn operator(&self) -> KoopmanOperator {
        match self {
            OrthogonalKoopman::Full { .. } => KoopmanOperator::Dense(self.materialize()),
            OrthogonalKoopman::Kronecker { .. } => KoopmanOperator::Factored(self.factor_matrices()),
        }
    }
}

/// Materialized `K`, dense or as Kronecker factors.
#[derive(Clone, Debug)]
pub enum KoopmanOperator {
    Dense(Matrix),
    Factored(Vec<Matrix>),
}

impl KoopmanOperator {
    pub fn dim(&self) -> usize {
        match self {
            KoopmanOperator::Dense(k) => k.rows(),
            KoopmanOperator::Factored(f) => f.iter().map(Matrix::rows).product(),
        }
    }

    /// `K y`. The factored form applies each factor along its tensor mode, so
    /// the big matrix is never formed.
    pub fn apply(&self, y: &[f64]) -> Vec<f64> {
        match self {
            KoopmanOperator::Dense(k) => k.matvec(y),
            KoopmanOperator::Factored(factors) => apply_kron(factors, y),
        }
    }

    pub fn to_dense(&self) -> Matrix {
        match self {
            KoopmanOperator::Dense(k) => k.clone(),
            KoopmanOperator::Factored(f) => {
                let mut it = f.iter();
                let first = it.next().expect("at least one factor").clone();
                it.fold(first, |acc, m| kron(&acc, m))
            }
        }
    }
}

/// `(F_1 ⊗ ... ⊗ F_m) y` for square factors, `y` in row-major tensor order.
pub fn apply_kron(factors: &[Matrix], y: &[f64]) -> Vec<f64> {
    let dims: Vec<usize> = factors.iter().map(Matrix::rows).collect();
    let mut cur = y.to_vec();
    let mut next = vec![0.0; y.len()];
    for (mode, f) in factors.iter().enumerate() {
        let d = dims[mode];
        let pre: usize = dims[..mode].iter().product();
        let post: usize = dims[mode + 1..].iter().product();
        for a in 0..pre {
            for r in 0..d {
                let frow = f.row(r);
                let out = &mut next[(a * d + r) * post..(a * d + r + 1) * post];
                out.iter_mut().for_each(|x| *x = 0.0);
                for (c, fc) in frow.iter().enumerate() {
                    let src = &cur[(a * d + c) * post..(a * d + c + 1) * post];
                    for (o, s) in out.iter_mut().zip(src) {
                        *o += fc * s;
                    }
                }
            }
        }
        std::mem::swap(&mut cur, &mut next);
    }
    cur
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{matmul, mm};
    use crate::rng::{normal_matrix, uniform_matrix, SeedableRng};
    use approx::assert_abs_diff_eq;

    fn rng(seed: u64) -> Rng64 {
        Rng64::seed_from_u64(seed)
    }

    fn diff(a: &Matrix, b: &Matrix) -> f64 {
        a.sub(b).unwrap().frobenius_norm()
    }

    #[test]
    fn alpha_cases() {
        assert_eq!(alpha(&SkewParams::zeros(3)), Matrix::zeros(3, 3));
        let a = alpha(&SkewParams::new(2, vec![0.7]).unwrap());
        assert_eq!(a.data(), &[0.0, 0.7, -0.7, 0.0]);
        let mut r = rng(1);
        let s = SkewParams::new(5, uniform_matrix(&mut r, 10, 1, -1.0, 1.0).into_data()).unwrap();
        let a = alpha(&s);
        assert!(a.add(&a.transpose()).unwrap().data().iter().all(|&x| x == 0.0));
        // row-major strict upper order
        assert_eq!(a[(0, 1)], s.params()[0]);
        assert_eq!(a[(1, 2)], s.params()[4]);
        assert_eq!(a[(3, 4)], s.params()[9]);
    }

    #[test]
    fn skew_params_validate_length() {
        assert!(SkewParams::new(4, vec![0.0; 5]).is_err());
    }

    #[test]
    fn zero_params_give_identity() {
        let k = OrthogonalKoopman::identity(&KoopmanShape::Full { p: 5 }).unwrap();
        assert_eq!(k.materialize(), Matrix::identity(5));
        let k = OrthogonalKoopman::identity(&KoopmanShape::kronecker_square(9).unwrap()).unwrap();
        assert_eq!(k.materialize(), Matrix::identity(9));
    }

    #[test]
    fn full_two_by_two_is_rotation() {
        let th = 0.4f64;
        let k = OrthogonalKoopman::Full {
            params: SkewParams::new(2, vec![th]).unwrap(),
        };
        let m = k.materialize();
        let expected = Matrix::new(2, 2, vec![th.cos(), th.sin(), -th.sin(), th.cos()]).unwrap();
        assert!(diff(&m, &expected) < 1e-15);
    }

    #[test]
    fn kronecker_is_orthogonal() {
        let mut r = rng(2);
        let mut k = OrthogonalKoopman::init(&KoopmanShape::kronecker_square(9).unwrap(), &mut r).unwrap();
        for s in k.param_slices_mut() {
            s.iter_mut().for_each(|x| *x = uniform(&mut r, -2.0, 2.0));
        }
        let m = k.materialize();
        assert_eq!(m.shape(), (9, 9));
        assert!(m.orthogonality_defect() < 1e-10);
    }

    #[test]
    fn counts() {
        assert_eq!(param_count(&KoopmanShape::Full { p: 64 }).unwrap(), 2016);
        assert_eq!(param_count(&KoopmanShape::kronecker_square(64).unwrap()).unwrap(), 56);
        let bad = KoopmanShape::Kronecker {
            p: 64,
            factors: vec![8, 7],
        };
        assert!(param_count(&bad).is_err());
        assert!(KoopmanShape::kronecker_square(80).is_err());
        // linear growth across p = 16, 64, 256: count = p - sqrt(p)
        let c: Vec<usize> = [16, 64, 256]
            .iter()
            .map(|&p| param_count(&KoopmanShape::kronecker_square(p).unwrap()).unwrap())
            .collect();
        assert_eq!(c, vec![12, 56, 240]);
    }

    #[test]
    fn three_factor_chain() {
        let mut r = rng(3);
        let shape = KoopmanShape::Kronecker {
            p: 24,
            factors: vec![2, 3, 4],
        };
        let k = OrthogonalKoopman::init(&shape, &mut r).unwrap();
        assert_eq!(k.param_count(), 1 + 3 + 6);
        let m = k.materialize();
        assert!(m.orthogonality_defect() < 1e-12);
        let y: Vec<f64> = (0..24).map(|i| (i as f64 * 0.37).sin()).collect();
        let dense = m.matvec(&y);
        let fact = k.operator().apply(&y);
        for (a, b) in dense.iter().zip(&fact) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-13);
        }
    }

    #[test]
    fn bind_matches_materialize() {
        let mut r = rng(4);
        for shape in [KoopmanShape::Full { p: 6 }, KoopmanShape::kronecker_square(16).unwrap()] {
            let k = OrthogonalKoopman::init(&shape, &mut r).unwrap();
            let mut tape = Tape::new();
            let (kv, leaves) = k.bind(&mut tape).unwrap();
            assert_eq!(leaves.len(), k.skew_params().len());
            assert!(diff(tape.value(kv), &k.materialize()) < 1e-14);
        }
    }

    #[test]
    fn kronecker_powers_factorize() {
        let mut r = rng(5);
        let mut k = OrthogonalKoopman::init(&KoopmanShape::kronecker_square(9).unwrap(), &mut r).unwrap();
        for s in k.param_slices_mut() {
            s.iter_mut().for_each(|x| *x = uniform(&mut r, -1.0, 1.0));
        }
        let f = k.factor_matrices();
        let big = k.materialize();
        let (mut pk, mut p1, mut p2) = (big.clone(), f[0].clone(), f[1].clone());
        for _ in 1..100 {
            pk = mm(&pk, &big);
            p1 = mm(&p1, &f[0]);
            p2 = mm(&p2, &f[1]);
        }
        assert!(diff(&pk, &kron(&p1, &p2)) < 1e-8);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]

            #[test]
            fn any_params_give_orthogonal_k(seed in any::<u64>(), p in 2usize..12, scale in 0.0f64..20.0) {
                let mut r = rng(seed);
                let s = SkewParams::new(p, uniform_matrix(&mut r, p * (p - 1) / 2, 1, -scale, scale).into_data()).unwrap();
                let k = OrthogonalKoopman::Full { params: s.clone() };
                let m = k.materialize();
                prop_assert!(m.orthogonality_defect() < 1e-8);
                let v = normal_matrix(&mut r, p, 1, 1.0);
                let kv = matmul(&m, &v).unwrap();
                prop_assert!((kv.frobenius_norm() - v.frobenius_norm()).abs() < 1e-8);
                let inv = OrthogonalKoopman::Full { params: s.negated() }.materialize();
                prop_assert!(diff(&mm(&m, &inv), &Matrix::identity(p)) < 1e-8);
            }
        }
    }
}
