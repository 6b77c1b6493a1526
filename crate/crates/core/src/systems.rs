//! Ground-truth Hamiltonian systems.
//!
//! * n-body gravity and Kepler: state `(q, v)` with positions first, velocities
//!   second; energy `sum m_i/2 |v_i|^2 - g sum_{i<j} m_i m_j / |q_i - q_j|`.
//!   Integrated with the 4th-order Yoshida composition of leapfrog.
//! * mass-spring: state `(q, p)`, exact rotation update.
//! * KdV `u_t + u_xxx - 6 u u_x = 0` on a periodic grid: Fourier spectral
//!   derivatives, skew-symmetric split of the nonlinear term (so the discrete
//!   mass and energy are conserved by the semi-discrete system) and
//!   integrating-factor RK4 in time.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::numerics::Matrix;
use crate::par;
use crate::rng::{fill_normal, Rng64, SeedableRng};

/// Default integrator step for the particle systems.
pub const DEFAULT_NBODY_DT: f64 = 0.01;
/// Default integrator step for KdV.
pub const DEFAULT_KDV_DT: f64 = 1e-3;
/// Pairwise distance below which a simulation is aborted.
pub const COLLISION_DISTANCE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "system", rename_all = "snake_case")]
pub enum SystemSpec {
    NBody {
        masses: Vec<f64>,
        g: f64,
        spatial_dim: usize,
    },
    Kepler {
        m: f64,
        g: f64,
    },
    MassSpring {
        m: f64,
        k: f64,
    },
    Kdv {
        grid_points: usize,
        domain_length: f64,
    },
}

impl SystemSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        match self {
            SystemSpec::NBody {
                masses,
                g,
                spatial_dim,
            } => {
                if masses.is_empty() || masses.iter().any(|m| !(*m > 0.0)) {
                    return bad(format!("n-body masses must be positive, got {masses:?}"));
                }
                if !(2..=3).contains(spatial_dim) {
                    return bad(format!("spatial_dim must be 2 or 3, got {spatial_dim}"));
                }
                if !g.is_finite() {
                    return bad("gravitational constant must be finite".into());
                }
            }
            SystemSpec::Kepler { m, g } => {
                if !(*m > 0.0) || !g.is_finite() {
                    return bad(format!("Kepler needs m > 0 and finite g, got m = {m}, g = {g}"));
                }
            }
            SystemSpec::MassSpring { m, k } => {
                if !(*m > 0.0) || !(*k > 0.0) {
                    return bad(format!("mass-spring needs m > 0 and k > 0, got m = {m}, k = {k}"));
                }
            }
            SystemSpec::Kdv {
                grid_points,
                domain_length,
            } => {
                if *grid_points < 16 {
                    return bad(format!("KdV needs at least 16 grid points, got {grid_points}"));
                }
                if !(*domain_length > 0.0) {
                    return bad(format!("KdV domain length must be positive, got {domain_length}"));
                }
            }
        }
        Ok(())
    }

    pub fn state_dim(&self) -> usize {
        match self {
            SystemSpec::NBody {
                masses,
                spatial_dim,
                ..
            } => 2 * spatial_dim * masses.len(),
            SystemSpec::Kepler { .. } => 4,
            SystemSpec::MassSpring { .. } => 2,
            SystemSpec::Kdv { grid_points, .. } => *grid_points,
        }
    }

    /// `sqrt(k m)` for the mass-spring system.
    pub fn stiffness(&self) -> Option<f64> {
        match self {
            SystemSpec::MassSpring { m, k } => Some((k * m).sqrt()),
            _ => None,
        }
    }

    pub fn default_integrator_dt(&self) -> f64 {
        match self {
            SystemSpec::Kdv { .. } => DEFAULT_KDV_DT,
            _ => DEFAULT_NBODY_DT,
        }
    }

    pub fn is_kdv(&self) -> bool {
        matches!(self, SystemSpec::Kdv { .. })
    }
}

/// Time-ordered samples `x_0 .. x_m` spaced `dt` apart, one row per sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    dt: f64,
    t0: f64,
    states: Matrix,
}

impl Trajectory {
    pub fn new(dt: f64, t0: f64, states: Matrix) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidParameter(format!("time step must be positive, got {dt}")));
        }
        if states.rows() == 0 {
            return Err(Error::InvalidParameter("trajectory needs at least one state".into()));
        }
        Ok(Self { dt, t0, states })
    }

    pub fn from_states(dt: f64, t0: f64, states: &[Vec<f64>]) -> Result<Self> {
        Self::new(dt, t0, Matrix::from_rows(states)?)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    /// Number of samples (`m + 1`).
    pub fn len(&self) -> usize {
        self.states.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.states.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.states.cols()
    }

    pub fn state(&self, k: usize) -> &[f64] {
        self.states.row(k)
    }

    pub fn last(&self) -> &[f64] {
        self.states.row(self.len() - 1)
    }

    pub fn states(&self) -> &Matrix {
        &self.states
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.time(k)).collect()
    }

    /// Samples `start..end` with the start time shifted accordingly.
    pub fn slice(&self, start: usize, end: usize) -> Result<Trajectory> {
        if start >= end || end > self.len() {
            return Err(dim_err(
                "Trajectory::slice",
                format!("{start}..{end} of {} samples", self.len()),
            ));
        }
        Ok(Trajectory {
            dt: self.dt,
            t0: self.time(start),
            states: self.states.slice_rows(start, end),
        })
    }

    /// Index of the first sample containing NaN or infinity.
    pub fn first_non_finite(&self) -> Option<usize> {
        (0..self.len()).find(|&k| self.state(k).iter().any(|x| !x.is_finite()))
    }
}

fn check_x0(spec: &SystemSpec, x0: &[f64]) -> Result<()> {
    spec.validate()?;
    if x0.len() != spec.state_dim() {
        return Err(dim_err(
            "simulate",
            format!("state has dimension {}, system expects {}", x0.len(), spec.state_dim()),
        ));
    }
    if x0.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("initial state".into()));
    }
    Ok(())
}

/// Simulates `steps` sampling intervals of length `dt` from `x0` using the
/// system's default integrator step.
pub fn simulate(spec: &SystemSpec, x0: &[f64], dt: f64, steps: usize) -> Result<Trajectory> {
    simulate_with_step(spec, x0, dt, steps, spec.default_integrator_dt())
}

/// As [`simulate`] with an explicit integrator step; the actual step is
/// `dt / ceil(dt / integrator_dt)` so samples land exactly on the grid.
pub fn simulate_with_step(
    spec: &SystemSpec,
    x0: &[f64],
    dt: f64,
    steps: usize,
    integrator_dt: f64,
) -> Result<Trajectory> {
    check_x0(spec, x0)?;
    if !(dt > 0.0) || !(integrator_dt > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "time steps must be positive (dt = {dt}, integrator dt = {integrator_dt})"
        )));
    }
    let substeps = ((dt / integrator_dt) - 1e-9).ceil().max(1.0) as usize;
    let h = dt / substeps as f64;
    let n = x0.len();
    let mut data = Vec::with_capacity((steps + 1) * n);
    data.extend_from_slice(x0);

    match spec {
        SystemSpec::MassSpring { m, k } => {
            let omega = (k / m).sqrt();
            for step in 1..=steps {
                let t = step as f64 * dt;
                let (s, c) = (omega * t).sin_cos();
                data.push(x0[0] * c + x0[1] / (m * omega) * s);
                data.push(-m * omega * x0[0] * s + x0[1] * c);
            }
        }
        SystemSpec::Kepler { .. } | SystemSpec::NBody { .. } => {
            let mut integ = Yoshida::new(spec, x0);
            for step in 1..=steps {
                for sub in 0..substeps {
                    integ.step(h).map_err(|e| match e {
                        Error::NearCollision { i, j, distance, .. } => Error::NearCollision {
                            i,
                            j,
                            distance,
                            time: (step - 1) as f64 * dt + sub as f64 * h,
                        },
                        other => other,
                    })?;
                }
                let x = integ.state();
                if x.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite(format!("state at t = {}", step as f64 * dt)));
                }
                data.extend_from_slice(&x);
            }
        }
        SystemSpec::Kdv { domain_length, .. } => {
            let mut solver = KdvSolver::new(x0, *domain_length, h);
            for step in 1..=steps {
                for _ in 0..substeps {
                    solver.step();
                }
                let u = solver.field();
                if u.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite(format!("KdV field at t = {}", step as f64 * dt)));
                }
                data.extend_from_slice(&u);
            }
        }
    }
    Trajectory::new(dt, 0.0, Matrix::new(steps + 1, n, data)?)
}

/// Simulates several initial conditions, in parallel when enabled.
pub fn simulate_batch(
    spec: &SystemSpec,
    initial_states: &[Vec<f64>],
    dt: f64,
    steps: usize,
) -> Result<Vec<Trajectory>> {
    par::map_slice(initial_states, |x0| simulate(spec, x0, dt, steps))
        .into_iter()
        .collect()
}

/// Central-force parameters shared by Kepler and n-body.
struct Gravity {
    masses: Vec<f64>,
    g: f64,
    dim: usize,
    /// Kepler: a single body attracted to a fixed centre of mass `m`.
    fixed_centre: bool,
}

struct Yoshida {
    grav: Gravity,
    q: Vec<f64>,
    v: Vec<f64>,
    acc: Vec<f64>,
}

const CBRT2: f64 = 1.259_921_049_894_873_2;
const YOSHIDA_W1: f64 = 1.0 / (2.0 - CBRT2);
const YOSHIDA_W0: f64 = -CBRT2 / (2.0 - CBRT2);

impl Yoshida {
    fn new(spec: &SystemSpec, x0: &[f64]) -> Self {
        let grav = match spec {
            SystemSpec::Kepler { m, g } => Gravity {
                masses: vec![*m],
                g: *g,
                dim: 2,
                fixed_centre: true,
            },
            SystemSpec::NBody {
                masses,
                g,
                spatial_dim,
            } => Gravity {
                masses: masses.clone(),
                g: *g,
                dim: *spatial_dim,
                fixed_centre: false,
            },
            _ => unreachable!("not a gravitational system"),
        };
        let half = x0.len() / 2;
        Self {
            q: x0[..half].to_vec(),
            v: x0[half..].to_vec(),
            acc: vec![0.0; half],
            grav,
        }
    }

    fn state(&self) -> Vec<f64> {
        let mut x = self.q.clone();
        x.extend_from_slice(&self.v);
        x
    }

    fn accelerations(&mut self) -> Result<()> {
        let Gravity {
            masses,
            g,
            dim,
            fixed_centre,
        } = &self.grav;
        let d = *dim;
        self.acc.iter_mut().for_each(|a| *a = 0.0);
        if *fixed_centre {
            let r2: f64 = self.q.iter().map(|x| x * x).sum();
            let r = r2.sqrt();
            if r < COLLISION_DISTANCE {
                return Err(Error::NearCollision {
                    i: 0,
                    j: 0,
                    distance: r,
                    time: f64::NAN,
                });
            }
            let f = -g * masses[0] / (r2 * r);
            for (a, x) in self.acc.iter_mut().zip(&self.q) {
                *a = f * x;
            }
            return Ok(());
        }
        let n = masses.len();
        for i in 0..n {
            for j in i + 1..n {
                let mut diff = [0.0; 3];
                let mut r2 = 0.0;
                for c in 0..d {
                    diff[c] = self.q[i * d + c] - self.q[j * d + c];
                    r2 += diff[c] * diff[c];
                }
                let r = r2.sqrt();
                if r < COLLISION_DISTANCE {
                    return Err(Error::NearCollision {
                        i,
                        j,
                        distance: r,
                        time: f64::NAN,
                    });
                }
                let inv3 = g / (r2 * r);
                for c in 0..d {
                    self.acc[i * d + c] -= masses[j] * inv3 * diff[c];
                    self.acc[j * d + c] += masses[i] * inv3 * diff[c];
                }
            }
        }
        Ok(())
    }

    /// Moves positions along straight lines, failing if any pair (or the
    /// Kepler body and the centre) comes within [`COLLISION_DISTANCE`] on the way.
    fn drift(&mut self, h: f64) -> Result<()> {
        let d = self.grav.dim;
        let bodies = self.q.len() / d;
        let closest = |dq: &[f64], dv: &[f64]| {
            let w2: f64 = dv.iter().map(|x| x * x).sum();
            let dot: f64 = dq.iter().zip(dv).map(|(a, b)| a * b).sum();
            let s = if w2 > 0.0 { (-dot / w2).clamp(h.min(0.0), h.max(0.0)) } else { 0.0 };
            dq.iter().zip(dv).map(|(a, b)| (a + s * b).powi(2)).sum::<f64>().sqrt()
        };
        if self.grav.fixed_centre {
            let r = closest(&self.q, &self.v);
            if r < COLLISION_DISTANCE {
                return Err(Error::NearCollision { i: 0, j: 0, distance: r, time: f64::NAN });
            }
        } else {
            for i in 0..bodies {
                for j in i + 1..bodies {
                    let mut dq = [0.0; 3];
                    let mut dv = [0.0; 3];
                    for c in 0..d {
                        dq[c] = self.q[i * d + c] - self.q[j * d + c];
                        dv[c] = self.v[i * d + c] - self.v[j * d + c];
                    }
                    let r = closest(&dq[..d], &dv[..d]);
                    if r < COLLISION_DISTANCE {
                        return Err(Error::NearCollision { i, j, distance: r, time: f64::NAN });
                    }
                }
            }
        }
        for (q, v) in self.q.iter_mut().zip(&self.v) {
            *q += h * v;
        }
        Ok(())
    }

    fn kick(&mut self, h: f64) -> Result<()> {
        self.accelerations()?;
        for (v, a) in self.v.iter_mut().zip(&self.acc) {
            *v += h * a;
        }
        Ok(())
    }

    /// Drift-kick-drift leapfrog composed as `S(w1 h) S(w0 h) S(w1 h)`.
    fn step(&mut self, h: f64) -> Result<()> {
        let c1 = 0.5 * YOSHIDA_W1;
        let c2 = 0.5 * (YOSHIDA_W0 + YOSHIDA_W1);
        self.drift(c1 * h)?;
        self.kick(YOSHIDA_W1 * h)?;
        self.drift(c2 * h)?;
        self.kick(YOSHIDA_W0 * h)?;
        self.drift(c2 * h)?;
        self.kick(YOSHIDA_W1 * h)?;
        self.drift(c1 * h)?;
        Ok(())
    }
}

/// Pseudo-spectral KdV integrator on a periodic grid.
pub struct KdvSolver {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    /// `i k` with the Nyquist mode zeroed (keeps the derivative skew).
    ik: Vec<Complex64>,
    /// `exp(L h / 2)` and `exp(L h)` for `L = -(i k)^3`.
    e_half: Vec<Complex64>,
    e_full: Vec<Complex64>,
    h: f64,
    u_hat: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl KdvSolver {
    pub fn new(u0: &[f64], domain_length: f64, h: f64) -> Self {
        let n = u0.len();
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let ik: Vec<Complex64> = (0..n)
            .map(|j| {
                let kj = if 2 * j == n {
                    0.0
                } else if j < n / 2 + n % 2 {
                    j as f64
                } else {
                    j as f64 - n as f64
                };
                Complex64::new(0.0, 2.0 * PI * kj / domain_length)
            })
            .collect();
        let lin: Vec<Complex64> = ik.iter().map(|z| -(z * z * z)).collect();
        let e_half = lin.iter().map(|l| (l * (0.5 * h)).exp()).collect();
        let e_full = lin.iter().map(|l| (l * h).exp()).collect();
        let mut u_hat: Vec<Complex64> = u0.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        fwd.process(&mut u_hat);
        Self {
            n,
            fwd,
            inv,
            ik,
            e_half,
            e_full,
            h,
            u_hat,
            scratch: vec![Complex64::new(0.0, 0.0); n],
        }
    }

    fn to_physical(&self, hat: &[Complex64]) -> Vec<f64> {
        let mut buf = hat.to_vec();
        self.inv.process(&mut buf);
        let s = 1.0 / self.n as f64;
        buf.iter().map(|z| z.re * s).collect()
    }

    fn to_spectral(&self, u: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = u.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.fwd.process(&mut buf);
        buf
    }

    /// `h * F[2 D(u^2) + 2 u D u]`, the Fourier transform of `6 u u_x` in
    /// skew-symmetric form, scaled by the step.
    fn nonlinear(&mut self, hat: &[Complex64]) -> Vec<Complex64> {
        let u = self.to_physical(hat);
        for (s, (h, k)) in self.scratch.iter_mut().zip(hat.iter().zip(&self.ik)) {
            *s = h * k;
        }
        let du = self.to_physical(&self.scratch.clone());
        let sq: Vec<f64> = u.iter().map(|x| x * x).collect();
        let u_du: Vec<f64> = u.iter().zip(&du).map(|(a, b)| a * b).collect();
        let sq_hat = self.to_spectral(&sq);
        let udu_hat = self.to_spectral(&u_du);
        sq_hat
            .iter()
            .zip(&udu_hat)
            .zip(&self.ik)
            .map(|((s, w), k)| (k * s * 2.0 + w * 2.0) * self.h)
            .collect()
    }

    /// One integrating-factor RK4 step.
    pub fn step(&mut self) {
        let v = self.u_hat.clone();
        let (e, e2) = (self.e_half.clone(), self.e_full.clone());
        let a = self.nonlinear(&v);
        let arg: Vec<Complex64> = (0..self.n).map(|j| e[j] * (v[j] + a[j] * 0.5)).collect();
        let b = self.nonlinear(&arg);
        let arg: Vec<Complex64> = (0..self.n).map(|j| e[j] * v[j] + b[j] * 0.5).collect();
        let c = self.nonlinear(&arg);
        let arg: Vec<Complex64> = (0..self.n).map(|j| e2[j] * v[j] + e[j] * c[j]).collect();
        let d = self.nonlinear(&arg);
        for j in 0..self.n {
            self.u_hat[j] = e2[j] * v[j] + (e2[j] * a[j] + e[j] * (b[j] + c[j]) * 2.0 + d[j]) / 6.0;
        }
    }

    pub fn field(&self) -> Vec<f64> {
        self.to_physical(&self.u_hat)
    }
}

/// Energy (or discrete energy integral for KdV) of one state.
pub fn hamiltonian(spec: &SystemSpec, state: &[f64]) -> Result<f64> {
    if state.len() != spec.state_dim() {
        return Err(dim_err(
            "hamiltonian",
            format!("state has dimension {}, system expects {}", state.len(), spec.state_dim()),
        ));
    }
    match spec {
        SystemSpec::MassSpring { m, k } => Ok(0.5 * k * state[0].powi(2) + state[1].powi(2) / (2.0 * m)),
        SystemSpec::Kepler { m, g } => {
            let r = (state[0].powi(2) + state[1].powi(2)).sqrt();
            if r == 0.0 {
                return Err(Error::NonFinite("Kepler potential at the origin".into()));
            }
            Ok(0.5 * m * (state[2].powi(2) + state[3].powi(2)) - g * m * m / r)
        }
        SystemSpec::NBody {
            masses,
            g,
            spatial_dim,
        } => {
            let d = *spatial_dim;
            let n = masses.len();
            let (q, v) = state.split_at(n * d);
            let mut kinetic = 0.0;
            let mut potential = 0.0;
            for i in 0..n {
                kinetic += 0.5 * masses[i] * v[i * d..(i + 1) * d].iter().map(|x| x * x).sum::<f64>();
                for j in i + 1..n {
                    let r = (0..d)
                        .map(|c| (q[i * d + c] - q[j * d + c]).powi(2))
                        .sum::<f64>()
                        .sqrt();
                    if r == 0.0 {
                        return Err(Error::NearCollision {
                            i,
                            j,
                            distance: 0.0,
                            time: f64::NAN,
                        });
                    }
                    potential -= g * masses[i] * masses[j] / r;
                }
            }
            Ok(kinetic + potential)
        }
        SystemSpec::Kdv { .. } => Ok(invariant_values(spec, state)?.1),
    }
}

/// Discrete mass `dx sum u` and energy `dx sum u^2` of a KdV field.
pub fn invariant_values(spec: &SystemSpec, field: &[f64]) -> Result<(f64, f64)> {
    let SystemSpec::Kdv {
        grid_points,
        domain_length,
    } = spec
    else {
        return Err(Error::InvalidParameter(
            "mass/energy integrals are defined for the KdV system only".into(),
        ));
    };
    if field.len() != *grid_points {
        return Err(dim_err(
            "invariant_values",
            format!("field has {} points, grid has {grid_points}", field.len()),
        ));
    }
    let dx = domain_length / *grid_points as f64;
    let mass = dx * field.iter().sum::<f64>();
    let energy = dx * field.iter().map(|u| u * u).sum::<f64>();
    Ok((mass, energy))
}

/// Total momentum `sum m_i v_i` of an n-body state.
pub fn total_momentum(spec: &SystemSpec, state: &[f64]) -> Result<Vec<f64>> {
    let SystemSpec::NBody {
        masses,
        spatial_dim,
        ..
    } = spec
    else {
        return Err(Error::InvalidParameter("momentum is defined for n-body only".into()));
    };
    let d = *spatial_dim;
    let v = &state[masses.len() * d..];
    let mut p = vec![0.0; d];
    for (i, m) in masses.iter().enumerate() {
        for c in 0..d {
            p[c] += m * v[i * d + c];
        }
    }
    Ok(p)
}

/// Adds i.i.d. `N(0, sigma2)` noise to every coordinate of every sample.
///
/// Samples are drawn in row-major order from [`Rng64`] seeded with `seed`.
pub fn add_noise(traj: &Trajectory, sigma2: f64, seed: u64) -> Result<Trajectory> {
    add_noise_scaled(traj, sigma2, seed, &vec![1.0; traj.dim()])
}

/// Like [`add_noise`], but coordinate `j` receives noise with standard
/// deviation `sqrt(sigma2) * scale[j]`.
///
/// With `scale` set to the per-coordinate magnitude of the trajectory the
/// variance is relative, which keeps noise comparable across unit changes.
pub fn add_noise_scaled(traj: &Trajectory, sigma2: f64, seed: u64, scale: &[f64]) -> Result<Trajectory> {
    if !(sigma2 >= 0.0) {
        return Err(Error::InvalidParameter(format!("noise variance must be >= 0, got {sigma2}")));
    }
    if scale.len() != traj.dim() {
        return Err(dim_err(
            "add_noise_scaled",
            format!("{} scale entries for state dimension {}", scale.len(), traj.dim()),
        ));
    }
    if sigma2 == 0.0 {
        return Ok(traj.clone());
    }
    let mut rng = Rng64::seed_from_u64(seed);
    let mut noise = vec![0.0; traj.states.data().len()];
    fill_normal(&mut rng, &mut noise, sigma2.sqrt());
    let mut states = traj.states.clone();
    let n = traj.dim();
    for (i, (x, e)) in states.data_mut().iter_mut().zip(&noise).enumerate() {
        *x += e * scale[i % n];
    }
    Trajectory::new(traj.dt, traj.t0, states)
}

/// One KdV soliton `-(c/2) sech^2(sqrt(c)/2 (x - centre))` sampled on the
/// periodic grid `x_j = j L / N`, using the nearest periodic image.
pub fn kdv_soliton(grid_points: usize, domain_length: f64, speed: f64, centre: f64) -> Vec<f64> {
    let dx = domain_length / grid_points as f64;
    (0..grid_points)
        .map(|j| {
            let mut s = j as f64 * dx - centre;
            s -= domain_length * (s / domain_length).round();
            let sech = 1.0 / (0.5 * speed.sqrt() * s).cosh();
            -0.5 * speed * sech * sech
        })
        .collect()
}

/// Figure-eight choreography for three unit masses with `g = 1`
/// (positions then velocities; period about 6.3259).
pub const FIGURE_EIGHT: [f64; 12] = [
    -0.970_004_36,
    0.243_087_53,
    0.970_004_36,
    -0.243_087_53,
    0.0,
    0.0,
    0.466_203_685,
    0.432_365_73,
    0.466_203_685,
    0.432_365_73,
    -0.932_407_37,
    -0.864_731_46,
];

/// Period of [`FIGURE_EIGHT`].
pub const FIGURE_EIGHT_PERIOD: f64 = 6.325_9;
