//! Least-squares linear Koopman fits: exact DMD on raw states and EDMD on a
//! probabilists' Hermite dictionary.

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::numerics::{self, matmul, pinv, Matrix, DEFAULT_RANK_TOL};
use crate::systems::Trajectory;

/// Default cap on the EDMD dictionary size.
pub const DEFAULT_DICTIONARY_CAP: usize = 5000;

/// Products of `He_k(x_i)` over all multi-indices of total order at most
/// `max_order`, graded by total order. Entry 0 is the constant and entries
/// `1..=input_dim` are the coordinates themselves.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HermiteDict {
    pub max_order: usize,
    pub input_dim: usize,
}

/// `C(n + d, d)`, or `None` on overflow.
pub fn dictionary_size(input_dim: usize, max_order: usize) -> Option<usize> {
    let mut c: u128 = 1;
    for i in 1..=max_order as u128 {
        c = c.checked_mul(input_dim as u128 + i)? / i;
    }
    usize::try_from(c).ok()
}

/// `He_0 .. He_order` at `x` via `He_{k+1} = x He_k - k He_{k-1}`.
pub fn hermite_values(x: f64, order: usize) -> Vec<f64> {
    let mut h = Vec::with_capacity(order + 1);
    h.push(1.0);
    if order >= 1 {
        h.push(x);
    }
    for k in 1..order {
        h.push(x * h[k] - k as f64 * h[k - 1]);
    }
    h
}

impl HermiteDict {
    pub fn new(input_dim: usize, max_order: usize, cap: usize) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::InvalidParameter("dictionary input dimension must be positive".into()));
        }
        match dictionary_size(input_dim, max_order) {
            Some(size) if size <= cap => Ok(Self {
                max_order,
                input_dim,
            }),
            Some(size) => Err(Error::DictionaryTooLarge { size, cap }),
            None => Err(Error::DictionaryTooLarge {
                size: usize::MAX,
                cap,
            }),
        }
    }

    pub fn size(&self) -> usize {
        dictionary_size(self.input_dim, self.max_order).expect("checked at construction")
    }

    /// All multi-indices, graded by total order, then lexicographically
    /// descending within an order (so order 1 is `e_0, e_1, ...`).
    pub fn multi_indices(&self) -> Vec<Vec<usize>> {
        fn rec(pos: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            if pos + 1 == cur.len() {
                cur[pos] = left;
                out.push(cur.clone());
                return;
            }
            for k in (0..=left).rev() {
                cur[pos] = k;
                rec(pos + 1, left - k, cur, out);
            }
        }
        let mut out = Vec::with_capacity(self.size());
        let mut cur = vec![0; self.input_dim];
        for order in 0..=self.max_order {
            rec(0, order, &mut cur, &mut out);
        }
        out
    }

    pub fn lift(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim {
            return Err(dim_err("HermiteDict::lift", format!("state of dimension {} for dictionary on {}", x.len(), self.input_dim)));
        }
        let tables: Vec<Vec<f64>> = x.iter().map(|&xi| hermite_values(xi, self.max_order)).collect();
        Ok(self
            .multi_indices()
            .iter()
            .map(|alpha| alpha.iter().zip(&tables).map(|(&k, t)| t[k]).product())
            .collect())
    }

    fn lift_all(&self, x: &Matrix) -> Result<Matrix> {
        let indices = self.multi_indices();
        let mut out = Matrix::zeros(x.rows(), indices.len());
        for i in 0..x.rows() {
            let tables: Vec<Vec<f64>> = x.row(i).iter().map(|&xi| hermite_values(xi, self.max_order)).collect();
            for (j, alpha) in indices.iter().enumerate() {
                out[(i, j)] = alpha.iter().zip(&tables).map(|(&k, t)| t[k]).product();
            }
        }
        Ok(out)
    }
}

/// A fitted one-step operator on states (DMD) or on lifted states (EDMD).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub k: Matrix,
    pub dictionary: Option<HermiteDict>,
}

impl LinearModel {
    pub fn state_dim(&self) -> usize {
        match &self.dictionary {
            Some(d) => d.input_dim,
            None => self.k.rows(),
        }
    }

    pub fn spectral_radius(&self) -> Result<f64> {
        numerics::spectral_radius(&self.k)
    }
}

/// `K = Y' Y^+` for snapshot columns `Y = (y_0..y_{m-1})`, `Y' = (y_1..y_m)`;
/// `rows` holds the snapshots as rows.
fn fit_operator(rows: &Matrix) -> Result<Matrix> {
    if rows.rows() < 2 {
        return Err(Error::InvalidParameter("fitting needs at least two states".into()));
    }
    let m = rows.rows();
    let x = rows.slice_rows(0, m - 1).transpose();
    let xp = rows.slice_rows(1, m).transpose();
    matmul(&xp, &pinv(&x, DEFAULT_RANK_TOL)?)
}

/// Exact DMD: the least-squares (minimum-norm) `K` with `K X ≈ X'`.
pub fn dmd_fit(traj: &Trajectory) -> Result<LinearModel> {
    Ok(LinearModel {
        k: fit_operator(traj.states())?,
        dictionary: None,
    })
}

/// EDMD on a Hermite dictionary of total order `max_order`.
pub fn edmd_fit(traj: &Trajectory, max_order: usize) -> Result<LinearModel> {
    edmd_fit_capped(traj, max_order, DEFAULT_DICTIONARY_CAP)
}

pub fn edmd_fit_capped(traj: &Trajectory, max_order: usize, cap: usize) -> Result<LinearModel> {
    if max_order == 0 {
        return Err(Error::InvalidParameter("EDMD needs max_order >= 1 to recover the state".into()));
    }
    let dict = HermiteDict::new(traj.dim(), max_order, cap)?;
    let lifted = dict.lift_all(traj.states())?;
    Ok(LinearModel {
        k: fit_operator(&lifted)?,
        dictionary: Some(dict),
    })
}

/// Rolls the fitted operator forward `steps` times. EDMD lifts the current
/// state, advances it and reads the state back from the order-1 entries.
/// Blow-up is not an error: the trajectory simply carries the non-finite
/// values (see [`Trajectory::first_non_finite`]).
pub fn linear_predict(model: &LinearModel, x0: &[f64], steps: usize, dt: f64) -> Result<Trajectory> {
    let n = model.state_dim();
    if x0.len() != n {
        return Err(dim_err("linear_predict", format!("x0 has dimension {}, model expects {n}", x0.len())));
    }
    let mut data = Vec::with_capacity((steps + 1) * n);
    data.extend_from_slice(x0);
    let mut x = x0.to_vec();
    for _ in 0..steps {
        x = match &model.dictionary {
            None => model.k.matvec(&x),
            Some(d) => {
                let next = model.k.matvec(&d.lift(&x)?);
                next[1..=n].to_vec()
            }
        };
        data.extend_from_slice(&x);
    }
    Trajectory::new(dt, 0.0, Matrix::new(steps + 1, n, data)?)
}
