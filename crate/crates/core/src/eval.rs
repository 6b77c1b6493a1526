//! Rollout metrics, exact 2-Wasserstein distance and conserved-quantity
//! discovery from the Koopman spectrum.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::model::HnkoModel;
use crate::numerics::{eig_orthogonal, Matrix};
use crate::par;
use crate::systems::{hamiltonian, invariant_values, SystemSpec, Trajectory};

/// Largest point-set size accepted by [`wasserstein2`].
pub const MAX_ASSIGNMENT_SIZE: usize = 5000;
/// Default `|lambda - 1|` tolerance for invariant discovery.
pub const DEFAULT_EIGEN_TOL: f64 = 1e-3;

/// One conserved quantity tracked along both trajectories.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvariantSeries {
    pub name: String,
    pub predicted: Vec<f64>,
    pub truth: Vec<f64>,
    /// `|I_k - I_0| / |I_0|` of the prediction, relative to its own start.
    pub predicted_drift: Vec<f64>,
    pub truth_drift: Vec<f64>,
    pub max_predicted_drift: f64,
    pub max_truth_drift: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub horizon: usize,
    pub mse_per_step: Vec<f64>,
    pub mean_mse: f64,
    /// Between the predicted and true state sets; `None` above
    /// [`MAX_ASSIGNMENT_SIZE`] samples.
    pub wasserstein2: Option<f64>,
    pub invariant_drift: Vec<InvariantSeries>,
}

impl MetricsReport {
    pub fn invariant(&self, name: &str) -> Option<&InvariantSeries> {
        self.invariant_drift.iter().find(|s| s.name == name)
    }
}

fn relative_drift(series: &[f64]) -> Vec<f64> {
    let base = series[0];
    let scale = if base.abs() > f64::MIN_POSITIVE { base.abs() } else { 1.0 };
    series.iter().map(|x| (x - base).abs() / scale).collect()
}

fn max_or_nan(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, &x| if x.is_nan() || m.is_nan() { f64::NAN } else { m.max(x) })
}

fn series(name: &str, predicted: Vec<f64>, truth: Vec<f64>) -> InvariantSeries {
    let predicted_drift = relative_drift(&predicted);
    let truth_drift = relative_drift(&truth);
    InvariantSeries {
        name: name.to_string(),
        max_predicted_drift: max_or_nan(&predicted_drift),
        max_truth_drift: max_or_nan(&truth_drift),
        predicted,
        truth,
        predicted_drift,
        truth_drift,
    }
}

/// Energy (and for KdV, mass) along a trajectory. Samples where the value is
/// undefined (e.g. coincident bodies) become NaN.
pub fn invariant_series(spec: &SystemSpec, traj: &Trajectory) -> Result<Vec<(String, Vec<f64>)>> {
    if traj.dim() != spec.state_dim() {
        return Err(dim_err("invariant_series", format!("trajectory dimension {} for system of dimension {}", traj.dim(), spec.state_dim())));
    }
    if spec.is_kdv() {
        let (mass, energy): (Vec<f64>, Vec<f64>) = (0..traj.len())
            .map(|k| invariant_values(spec, traj.state(k)).unwrap_or((f64::NAN, f64::NAN)))
            .unzip();
        Ok(vec![("energy".into(), energy), ("mass".into(), mass)])
    } else {
        let energy = (0..traj.len())
            .map(|k| hamiltonian(spec, traj.state(k)).unwrap_or(f64::NAN))
            .collect();
        Ok(vec![("energy".into(), energy)])
    }
}

/// Compares a prediction against the ground truth sample by sample.
pub fn evaluate(predicted: &Trajectory, truth: &Trajectory, spec: &SystemSpec) -> Result<MetricsReport> {
    if predicted.len() != truth.len() || predicted.dim() != truth.dim() {
        return Err(dim_err(
            "evaluate",
            format!(
                "predicted {} x {} vs truth {} x {}",
                predicted.len(),
                predicted.dim(),
                truth.len(),
                truth.dim()
            ),
        ));
    }
    let n = truth.dim() as f64;
    let mse_per_step: Vec<f64> = (0..truth.len())
        .map(|k| {
            predicted
                .state(k)
                .iter()
                .zip(truth.state(k))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                / n
        })
        .collect();
    let mean_mse = mse_per_step.iter().sum::<f64>() / mse_per_step.len() as f64;
    let all_finite = predicted.first_non_finite().is_none();
    let wasserstein2 = if truth.len() <= MAX_ASSIGNMENT_SIZE && all_finite {
        Some(wasserstein2(predicted.states(), truth.states())?)
    } else {
        None
    };
    let pred = invariant_series(spec, predicted)?;
    let tru = invariant_series(spec, truth)?;
    let invariant_drift = pred
        .into_iter()
        .zip(tru)
        .map(|((name, p), (_, t))| series(&name, p, t))
        .collect();
    Ok(MetricsReport {
        horizon: truth.len() - 1,
        mse_per_step,
        mean_mse,
        wasserstein2,
        invariant_drift,
    })
}

/// Minimum-cost perfect matching on a square row-major cost matrix
/// (Hungarian algorithm with potentials, `O(n^3)`). Returns the column
/// assigned to each row.
pub fn linear_assignment(cost: &[f64], n: usize) -> Result<Vec<usize>> {
    if cost.len() != n * n {
        return Err(dim_err("linear_assignment", format!("{} costs for a {n} x {n} problem", cost.len())));
    }
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFinite("assignment cost".into()));
    }
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            let row = &cost[(i0 - 1) * n..i0 * n];
            for j in 1..=n {
                if !used[j] {
                    let cur = row[j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        assignment[p[j] - 1] = j - 1;
    }
    Ok(assignment)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Exact 2-Wasserstein distance between two equal-size point sets (rows),
/// `sqrt(min_pi (1/N) sum_i |a_i - b_pi(i)|^2)`.
pub fn wasserstein2(a: &Matrix, b: &Matrix) -> Result<f64> {
    if a.rows() != b.rows() || a.cols() != b.cols() {
        return Err(dim_err("wasserstein2", format!("point sets {:?} and {:?}", a.shape(), b.shape())));
    }
    let n = a.rows();
    if n == 0 {
        return Err(Error::InvalidParameter("empty point sets".into()));
    }
    if n > MAX_ASSIGNMENT_SIZE {
        return Err(Error::InvalidParameter(format!(
            "{n} points exceed the exact-assignment cap of {MAX_ASSIGNMENT_SIZE}"
        )));
    }
    let rows = par::map_indexed(n, |i| (0..n).map(|j| sq_dist(a.row(i), b.row(j))).collect::<Vec<f64>>());
    let cost: Vec<f64> = rows.into_iter().flatten().collect();
    let assignment = linear_assignment(&cost, n)?;
    // summing the matched costs in sorted order makes the result exactly
    // symmetric in (a, b)
    let mut matched: Vec<f64> = assignment.iter().enumerate().map(|(i, &j)| cost[i * n + j]).collect();
    matched.sort_by(f64::total_cmp);
    Ok((matched.iter().sum::<f64>() / n as f64).sqrt())
}

/// A conserved quantity `g_c(x) = <c, phi(x)>` read off an eigenvector of `K`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscoveredInvariant {
    pub eigenvalue: Complex64,
    pub coefficients: Vec<f64>,
    pub temporal_variance: f64,
    pub normalized: bool,
}

/// A complex eigenvalue pair close to one: slow rotation, not an invariant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlowMode {
    pub eigenvalue: Complex64,
    pub angle: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Discovery {
    pub tolerance: f64,
    /// Sorted by ascending temporal variance.
    pub invariants: Vec<DiscoveredInvariant>,
    pub slow_modes: Vec<SlowMode>,
}

/// Population variance (divides by the number of samples).
pub fn variance(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.is_empty() {
        f64::NAN
    } else if v.len() % 2 == 0 {
        0.5 * (v[m - 1] + v[m])
    } else {
        v[m]
    }
}

/// Temporal variance of every encoder output along `data`.
pub fn feature_variance(model: &HnkoModel, data: &Trajectory) -> Result<Vec<f64>> {
    let y = model.encode_batch(data.states())?;
    Ok((0..y.cols()).map(|j| variance(&y.column(j))).collect())
}

/// Temporal variance of `<c, y_k>` for latent codes `y` (rows).
pub fn projected_variance(latent: &Matrix, c: &[f64]) -> f64 {
    let g: Vec<f64> = (0..latent.rows())
        .map(|k| latent.row(k).iter().zip(c).map(|(a, b)| a * b).sum())
        .collect();
    variance(&g)
}

/// Real eigenvectors of `K` with `|lambda - 1| < tol`, as an orthonormal
/// basis of that eigenspace, each scored by the temporal variance of the
/// induced function along `data`.
pub fn discover_invariants(model: &HnkoModel, data: &Trajectory, tol: f64) -> Result<Discovery> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("eigenvalue tolerance must be positive, got {tol}")));
    }
    let k = model.koopman.materialize();
    let pairs = eig_orthogonal(&k)?;
    let one = Complex64::new(1.0, 0.0);
    let mut basis: Vec<(Complex64, Vec<f64>)> = Vec::new();
    let mut slow_modes = Vec::new();
    for pair in pairs.iter().filter(|p| (p.value - one).norm() < tol) {
        if !pair.is_real() {
            if pair.value.im > 0.0 {
                slow_modes.push(SlowMode {
                    eigenvalue: pair.value,
                    angle: pair.value.arg(),
                });
            }
            continue;
        }
        // Gram-Schmidt against the vectors kept so far
        let mut v = pair.real_vector();
        for _ in 0..2 {
            for (_, b) in &basis {
                let d: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-8 {
            continue;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        // sign convention: largest-magnitude coefficient positive
        let (_, big) = v.iter().enumerate().fold((0, 0.0f64), |(bi, bv), (i, x)| {
            if x.abs() > bv.abs() {
                (i, *x)
            } else {
                (bi, bv)
            }
        });
        if big < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        basis.push((pair.value, v));
    }
    let latent = model.encode_batch(data.states())?;
    let mut invariants: Vec<DiscoveredInvariant> = basis
        .into_iter()
        .map(|(eigenvalue, c)| DiscoveredInvariant {
            eigenvalue,
            temporal_variance: projected_variance(&latent, &c),
            coefficients: c,
            normalized: true,
        })
        .collect();
    invariants.sort_by(|a, b| a.temporal_variance.total_cmp(&b.temporal_variance));
    Ok(Discovery {
        tolerance: tol,
        invariants,
        slow_modes,
    })
}

/// `g_c(x) = <c, phi(x)>` along a trajectory.
pub fn invariant_values_along(model: &HnkoModel, inv: &DiscoveredInvariant, data: &Trajectory) -> Result<Vec<f64>> {
    let y = model.encode_batch(data.states())?;
    Ok((0..y.rows())
        .map(|k| y.row(k).iter().zip(&inv.coefficients).map(|(a, b)| a * b).sum())
        .collect())
}
