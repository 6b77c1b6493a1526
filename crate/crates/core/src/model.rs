//! The encoder / orthogonal Koopman / decoder model and its loss terms.
//!
//! States are divided coordinate-wise by a fixed `scaling` vector before
//! encoding and multiplied back after decoding, so all losses are measured in
//! normalized units. Batches keep samples as rows.
//!
//! The trainable parameters are exposed as one flat vector (see
//! [`HnkoModel::param_groups`] for the layout), which is what the optimizer
//! and finite-difference checks operate on.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{dim_err, Error, Result};
use crate::numerics::{matmul_nt, orthonormal_columns, Matrix};
use crate::orthogonal::{KoopmanShape, OrthogonalKoopman};
use crate::rng::{normal_matrix, uniform, Rng64};
use crate::systems::Trajectory;

/// Columns of `V` with norm at or below this are rejected by `L_deg`.
pub const HYPERPLANE_GUARD: f64 = 1e-12;
/// Initial radius relative to the largest normalized training state.
pub const RADIUS_SLACK: f64 = 1.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// `out x in`.
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

/// Fully connected network: tanh on hidden layers, identity on the output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layers: Vec<Layer>,
}

impl Mlp {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidParameter("network needs at least one layer".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.weight.rows() {
                return Err(dim_err(
                    "Mlp::new",
                    format!("layer {i}: bias {} for weight {:?}", l.bias.len(), l.weight.shape()),
                ));
            }
            if i > 0 && layers[i - 1].weight.rows() != l.weight.cols() {
                return Err(dim_err(
                    "Mlp::new",
                    format!("layer {i} expects {} inputs, previous emits {}", l.weight.cols(), layers[i - 1].weight.rows()),
                ));
            }
        }
        Ok(Self { layers })
    }

    /// Uniform `±sqrt(6 / (fan_in + fan_out))` weights, zero biases.
    /// `sizes` lists input, hidden and output widths.
    pub fn glorot(sizes: &[usize], rng: &mut Rng64) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::InvalidParameter(format!("bad layer sizes {sizes:?}")));
        }
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let mut weight = Matrix::zeros(fan_out, fan_in);
                weight.data_mut().iter_mut().for_each(|x| *x = uniform(rng, -a, a));
                Layer {
                    weight,
                    bias: vec![0.0; fan_out],
                }
            })
            .collect();
        Self::new(layers)
    }

    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        Self::new(
            sizes
                .windows(2)
                .map(|w| Layer {
                    weight: Matrix::zeros(w[1], w[0]),
                    bias: vec![0.0; w[1]],
                })
                .collect(),
        )
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].weight.rows()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.data().len() + l.bias.len()).sum()
    }

    /// Batch forward pass, one sample per row.
    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.input_dim() {
            return Err(dim_err(
                "Mlp::forward",
                format!("input width {} for network expecting {}", x.cols(), self.input_dim()),
            ));
        }
        let last = self.layers.len() - 1;
        let mut h = x.clone();
        for (i, l) in self.layers.iter().enumerate() {
            let mut z = matmul_nt(&h, &l.weight);
            let cols = z.cols();
            for row in z.data_mut().chunks_mut(cols) {
                for (v, b) in row.iter_mut().zip(&l.bias) {
                    *v += b;
                }
            }
            h = if i < last { z.map(f64::tanh) } else { z };
        }
        Ok(h)
    }

    fn bind(&self, tape: &mut Tape) -> Vec<(Var, Var)> {
        self.layers
            .iter()
            .map(|l| {
                let w = tape.leaf(l.weight.clone());
                let b = tape.leaf(Matrix::row_vector(&l.bias));
                (w, b)
            })
            .collect()
    }

    fn forward_tape(tape: &mut Tape, leaves: &[(Var, Var)], x: Var) -> Result<Var> {
        let last = leaves.len() - 1;
        let mut h = x;
        for (i, &(w, b)) in leaves.iter().enumerate() {
            let wt = tape.transpose(w);
            let z = tape.matmul(h, wt)?;
            let z = tape.add_row(z, b)?;
            h = if i < last { tape.tanh(z) } else { z };
        }
        Ok(h)
    }

    fn flatten_into(&self, out: &mut Vec<f64>) {
        for l in &self.layers {
            out.extend_from_slice(l.weight.data());
            out.extend_from_slice(&l.bias);
        }
    }

    fn unflatten_from(&mut self, src: &[f64]) -> usize {
        let mut off = 0;
        for l in &mut self.layers {
            let nw = l.weight.data().len();
            l.weight.data_mut().copy_from_slice(&src[off..off + nw]);
            off += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&src[off..off + nb]);
            off += nb;
        }
        off
    }
}

/// Which Koopman parameterization to use.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KoopmanVariant {
    Full,
    /// Two factors of size `sqrt(p)`.
    Kronecker,
}

/// Architecture of an [`HnkoModel`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub latent_dim: usize,
    pub hyperplanes: usize,
    /// Hidden widths, shared by encoder and decoder. Empty means the default
    /// of two layers of width `max(64, 4p)`.
    #[serde(default)]
    pub hidden: Vec<usize>,
    pub variant: KoopmanVariant,
}

impl ModelConfig {
    pub fn new(latent_dim: usize, hyperplanes: usize) -> Self {
        Self {
            latent_dim,
            hyperplanes,
            hidden: Vec::new(),
            variant: KoopmanVariant::Full,
        }
    }

    pub fn hidden_widths(&self) -> Vec<usize> {
        if self.hidden.is_empty() {
            vec![64.max(4 * self.latent_dim); 2]
        } else {
            self.hidden.clone()
        }
    }

    pub fn koopman_shape(&self) -> Result<KoopmanShape> {
        match self.variant {
            KoopmanVariant::Full => Ok(KoopmanShape::Full { p: self.latent_dim }),
            KoopmanVariant::Kronecker => KoopmanShape::kronecker_square(self.latent_dim),
        }
    }

    pub fn validate(&self) -> Result<()> {
        validate_q(self.latent_dim, self.hyperplanes)?;
        if self.hidden.contains(&0) {
            return Err(Error::InvalidParameter("hidden widths must be positive".into()));
        }
        self.koopman_shape()?.validate()
    }
}

/// Checks `p - floor(p/2) - 1 <= q <= p - 2`.
pub fn validate_q(p: usize, q: usize) -> Result<()> {
    if p < 3 {
        return Err(Error::InvalidParameter(format!("latent dimension must be at least 3, got {p}")));
    }
    let lo = p - p / 2 - 1;
    let hi = p - 2;
    if q < lo || q > hi {
        return Err(Error::InvalidParameter(format!(
            "hyperplane count q = {q} outside [{lo}, {hi}] for latent dimension p = {p}"
        )));
    }
    Ok(())
}

/// Per-coordinate maximum absolute value over the data (ones where a
/// coordinate is identically zero).
pub fn max_abs_scaling(data: &[Trajectory]) -> Result<Vec<f64>> {
    let n = data.first().ok_or_else(|| Error::InvalidParameter("no training data".into()))?.dim();
    let mut s = vec![0.0f64; n];
    for tr in data {
        if tr.dim() != n {
            return Err(dim_err("max_abs_scaling", "trajectories differ in dimension"));
        }
        for k in 0..tr.len() {
            for (m, x) in s.iter_mut().zip(tr.state(k)) {
                *m = m.max(x.abs());
            }
        }
    }
    Ok(s.into_iter().map(|m| if m > 0.0 { m } else { 1.0 }).collect())
}

/// Per-term loss weights; all ones reproduces the unweighted sum.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub dict: f64,
    pub koop: f64,
    pub sphere: f64,
    pub deg: f64,
    pub ind: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self::uniform(1.0)
    }
}

impl LossWeights {
    pub fn uniform(w: f64) -> Self {
        Self {
            dict: w,
            koop: w,
            sphere: w,
            deg: w,
            ind: w,
        }
    }

    pub fn as_array(&self) -> [f64; 5] {
        [self.dict, self.koop, self.sphere, self.deg, self.ind]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub dict: f64,
    pub koop: f64,
    pub sphere: f64,
    pub deg: f64,
    pub ind: f64,
    pub total: f64,
    pub weights: LossWeights,
}

impl LossBreakdown {
    pub fn is_finite(&self) -> bool {
        [self.dict, self.koop, self.sphere, self.deg, self.ind, self.total]
            .iter()
            .all(|x| x.is_finite())
    }
}

/// A contiguous block of the flat parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamGroup {
    pub name: String,
    pub range: Range<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HnkoModel {
    pub encoder: Mlp,
    pub decoder: Mlp,
    pub koopman: OrthogonalKoopman,
    /// `rho = ln r`.
    pub log_radius: f64,
    /// `p x q`, one hyperplane normal per column.
    pub hyperplanes: Matrix,
    pub scaling: Vec<f64>,
}

impl HnkoModel {
    /// Builds a model from parts, checking that all dimensions agree.
    pub fn from_parts(
        encoder: Mlp,
        decoder: Mlp,
        koopman: OrthogonalKoopman,
        log_radius: f64,
        hyperplanes: Matrix,
        scaling: Vec<f64>,
    ) -> Result<Self> {
        let p = koopman.dim();
        let n = encoder.input_dim();
        if encoder.output_dim() != p || decoder.input_dim() != p || decoder.output_dim() != n {
            return Err(dim_err(
                "HnkoModel",
                format!(
                    "encoder {} -> {}, decoder {} -> {}, latent dimension {p}",
                    n,
                    encoder.output_dim(),
                    decoder.input_dim(),
                    decoder.output_dim()
                ),
            ));
        }
        if hyperplanes.rows() != p {
            return Err(dim_err("HnkoModel", format!("V has {} rows for p = {p}", hyperplanes.rows())));
        }
        validate_q(p, hyperplanes.cols())?;
        if scaling.len() != n || scaling.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "scaling must hold {n} positive finite values"
            )));
        }
        if !log_radius.is_finite() {
            return Err(Error::NonFinite("log radius".into()));
        }
        Ok(Self {
            encoder,
            decoder,
            koopman,
            log_radius,
            hyperplanes,
            scaling,
        })
    }

    /// Random initialization. `r` starts at 1.1 times the largest normalized
    /// training state and `V` has orthonormal random columns.
    pub fn init(cfg: &ModelConfig, data: &[Trajectory], scaling: Vec<f64>, rng: &mut Rng64) -> Result<Self> {
        cfg.validate()?;
        let n = scaling.len();
        let p = cfg.latent_dim;
        let hidden = cfg.hidden_widths();
        let mut enc_sizes = vec![n];
        enc_sizes.extend(&hidden);
        enc_sizes.push(p);
        let mut dec_sizes = vec![p];
        dec_sizes.extend(hidden.iter().rev());
        dec_sizes.push(n);
        let encoder = Mlp::glorot(&enc_sizes, rng)?;
        let decoder = Mlp::glorot(&dec_sizes, rng)?;
        let koopman = OrthogonalKoopman::init(&cfg.koopman_shape()?, rng)?;
        let hyperplanes = orthonormal_columns(&normal_matrix(rng, p, cfg.hyperplanes, 1.0));

        let mut max_norm = 0.0f64;
        for tr in data {
            if tr.dim() != n {
                return Err(dim_err("HnkoModel::init", format!("data dimension {} for scaling of length {n}", tr.dim())));
            }
            for k in 0..tr.len() {
                let sq: f64 = tr.state(k).iter().zip(&scaling).map(|(x, s)| (x / s).powi(2)).sum();
                max_norm = max_norm.max(sq.sqrt());
            }
        }
        let r = if max_norm > 0.0 { RADIUS_SLACK * max_norm } else { 1.0 };
        Self::from_parts(encoder, decoder, koopman, r.ln(), hyperplanes, scaling)
    }

    pub fn state_dim(&self) -> usize {
        self.encoder.input_dim()
    }

    pub fn latent_dim(&self) -> usize {
        self.koopman.dim()
    }

    pub fn q(&self) -> usize {
        self.hyperplanes.cols()
    }

    pub fn radius(&self) -> f64 {
        self.log_radius.exp()
    }

    /// Stacks and normalizes the states of all trajectories.
    pub fn normalize(&self, data: &[Trajectory]) -> Result<Matrix> {
        let n = self.state_dim();
        let mut rows = Vec::new();
        for tr in data {
            if tr.dim() != n {
                return Err(dim_err("normalize", format!("data dimension {} for model expecting {n}", tr.dim())));
            }
            for k in 0..tr.len() {
                rows.extend(tr.state(k).iter().zip(&self.scaling).map(|(x, s)| x / s));
            }
        }
        Matrix::new(rows.len() / n.max(1), n, rows)
    }

    /// Latent codes of raw states, one per row.
    pub fn encode_batch(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.state_dim() {
            return Err(dim_err("encode", format!("state width {} for model expecting {}", x.cols(), self.state_dim())));
        }
        let z = Matrix::from_fn(x.rows(), x.cols(), |i, j| x[(i, j)] / self.scaling[j]);
        self.encoder.forward(&z)
    }

    /// Raw states decoded from latent codes, one per row.
    pub fn decode_batch(&self, y: &Matrix) -> Result<Matrix> {
        let z = self.decoder.forward(y)?;
        Ok(Matrix::from_fn(z.rows(), z.cols(), |i, j| z[(i, j)] * self.scaling[j]))
    }

    pub fn encode(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.encode_batch(&Matrix::row_vector(x))?.into_data())
    }

    pub fn decode(&self, y: &[f64]) -> Result<Vec<f64>> {
        Ok(self.decode_batch(&Matrix::row_vector(y))?.into_data())
    }

    /// Latent rollout `y_k = K^k phi(x0)`, `k = 0..=steps`, one row per step.
    pub fn predict_latent(&self, x0: &[f64], steps: usize) -> Result<Matrix> {
        let op = self.koopman.operator();
        let p = self.latent_dim();
        let mut y = self.encode(x0)?;
        let mut out = Vec::with_capacity((steps + 1) * p);
        out.extend_from_slice(&y);
        for _ in 0..steps {
            y = op.apply(&y);
            out.extend_from_slice(&y);
        }
        Matrix::new(steps + 1, p, out)
    }

    /// `x_k = phi^{-1}(K^k phi(x0))` for `k = 0..=steps`.
    pub fn predict(&self, x0: &[f64], steps: usize, dt: f64) -> Result<Trajectory> {
        let latent = self.predict_latent(x0, steps)?;
        Trajectory::new(dt, 0.0, self.decode_batch(&latent)?)
    }

    /// Layout of the flat parameter vector: encoder layers (weight then bias),
    /// decoder layers, Koopman factors, `rho`, then `V` row-major.
    pub fn param_groups(&self) -> Vec<ParamGroup> {
        let mut groups = Vec::new();
        let mut off = 0;
        let mut push = |name: String, len: usize| {
            groups.push(ParamGroup {
                name,
                range: off..off + len,
            });
            off += len;
        };
        for (tag, net) in [("encoder", &self.encoder), ("decoder", &self.decoder)] {
            for (i, l) in net.layers.iter().enumerate() {
                push(format!("{tag}.{i}.weight"), l.weight.data().len());
                push(format!("{tag}.{i}.bias"), l.bias.len());
            }
        }
        for (i, s) in self.koopman.skew_params().iter().enumerate() {
            push(format!("koopman.{i}"), s.params().len());
        }
        push("log_radius".into(), 1);
        push("hyperplanes".into(), self.hyperplanes.data().len());
        groups
    }

    pub fn param_count(&self) -> usize {
        self.encoder.param_count()
            + self.decoder.param_count()
            + self.koopman.param_count()
            + 1
            + self.hyperplanes.data().len()
    }

    pub fn parameters(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        self.encoder.flatten_into(&mut out);
        self.decoder.flatten_into(&mut out);
        for s in self.koopman.skew_params() {
            out.extend_from_slice(s.params());
        }
        out.push(self.log_radius);
        out.extend_from_slice(self.hyperplanes.data());
        out
    }

    pub fn set_parameters(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(dim_err(
                "set_parameters",
                format!("{} values for {} parameters", flat.len(), self.param_count()),
            ));
        }
        let mut off = self.encoder.unflatten_from(flat);
        off += self.decoder.unflatten_from(&flat[off..]);
        for s in self.koopman.param_slices_mut() {
            let len = s.len();
            s.copy_from_slice(&flat[off..off + len]);
            off += len;
        }
        self.log_radius = flat[off];
        off += 1;
        self.hyperplanes.data_mut().copy_from_slice(&flat[off..]);
        Ok(())
    }

    /// Records the comprehensive loss on `tape`.
    fn build_loss(&self, tape: &mut Tape, data: &[Trajectory], weights: &LossWeights) -> Result<Graph> {
        if data.is_empty() {
            return Err(Error::InvalidParameter("no training data".into()));
        }
        let z = self.normalize(data)?;
        let enc = self.encoder.bind(tape);
        let dec = self.decoder.bind(tape);
        let (k, k_leaves) = self.koopman.bind(tape)?;
        let rho = tape.leaf(Matrix::scalar(self.log_radius));
        let v = tape.leaf(self.hyperplanes.clone());

        let x = tape.leaf(z);
        let y = Mlp::forward_tape(tape, &enc, x)?;
        let xr = Mlp::forward_tape(tape, &dec, y)?;
        let diff = tape.sub(xr, x)?;
        let dict = tape.sum_squares(diff);

        let kt = tape.transpose(k);
        let mut koop: Option<Var> = None;
        let mut start = 0;
        for tr in data {
            let end = start + tr.len();
            if tr.len() >= 2 {
                let y0 = tape.slice_rows(y, start, end - 1)?;
                let y1 = tape.slice_rows(y, start + 1, end)?;
                let pred = tape.matmul(y0, kt)?;
                let res = tape.sub(pred, y1)?;
                let term = tape.sum_squares(res);
                koop = Some(match koop {
                    None => term,
                    Some(acc) => tape.add(acc, term)?,
                });
            }
            start = end;
        }
        let koop = match koop {
            Some(v) => v,
            None => return Err(Error::InvalidParameter("Koopman loss needs a trajectory with at least two samples".into())),
        };

        let two_rho = tape.scale(rho, 2.0);
        let r2 = tape.exp(two_rho);
        let norms = tape.row_sq_norms(y);
        let dev = tape.sub_scalar(norms, r2)?;
        let sphere = tape.sum_squares(dev);

        let vn = tape.normalize_columns(v, HYPERPLANE_GUARD)?;
        let proj = tape.matmul(y, vn)?;
        let deg = tape.sum_squares(proj);

        let vt = tape.transpose(v);
        let gram = tape.matmul(vt, v)?;
        let off = tape.off_diagonal(gram)?;
        let ind = tape.sum_squares(off);

        let terms = [dict, koop, sphere, deg, ind];
        let mut total = tape.scale(terms[0], weights.dict);
        for (t, w) in terms.iter().zip(weights.as_array()).skip(1) {
            let s = tape.scale(*t, w);
            total = tape.add(total, s)?;
        }

        let mut leaves = Vec::new();
        for (w, b) in enc.iter().chain(dec.iter()) {
            leaves.push(*w);
            leaves.push(*b);
        }
        leaves.extend(k_leaves);
        leaves.push(rho);
        leaves.push(v);
        Ok(Graph {
            terms,
            total,
            leaves,
        })
    }

    /// All five loss terms and their weighted sum.
    pub fn total_loss(&self, data: &[Trajectory], weights: &LossWeights) -> Result<LossBreakdown> {
        let mut tape = Tape::new();
        let g = self.build_loss(&mut tape, data, weights)?;
        Ok(g.breakdown(&tape, weights))
    }

    /// Loss breakdown and the gradient of the weighted total with respect to
    /// the flat parameter vector.
    pub fn loss_and_gradient(&self, data: &[Trajectory], weights: &LossWeights) -> Result<(LossBreakdown, Vec<f64>)> {
        let mut tape = Tape::new();
        let g = self.build_loss(&mut tape, data, weights)?;
        let breakdown = g.breakdown(&tape, weights);
        let grads = tape.backward(g.total)?;
        let mut flat = Vec::with_capacity(self.param_count());
        for leaf in &g.leaves {
            match grads.get_ref(*leaf) {
                Some(m) => flat.extend_from_slice(m.data()),
                None => flat.extend(std::iter::repeat_n(0.0, tape.value(*leaf).data().len())),
            }
        }
        Ok((breakdown, flat))
    }

    /// `sum_i |x_i - dec(enc(x_i))|^2` in normalized units.
    pub fn loss_dict(&self, data: &[Trajectory]) -> Result<f64> {
        Ok(self.total_loss(data, &LossWeights::default())?.dict)
    }

    /// `sum_i |K y_i - y_{i+1}|^2` within each trajectory.
    pub fn loss_koop(&self, data: &[Trajectory]) -> Result<f64> {
        Ok(self.total_loss(data, &LossWeights::default())?.koop)
    }

    /// `sum_i (|y_i|^2 - r^2)^2`.
    pub fn loss_sphere(&self, data: &[Trajectory]) -> Result<f64> {
        Ok(self.total_loss(data, &LossWeights::default())?.sphere)
    }

    /// `sum_k sum_i <v_k / |v_k|, y_i>^2`.
    pub fn loss_deg(&self, data: &[Trajectory]) -> Result<f64> {
        Ok(self.total_loss(data, &LossWeights::default())?.deg)
    }

    /// `sum_{k != j} <v_k, v_j>^2` over ordered pairs.
    pub fn loss_ind(&self) -> f64 {
        let g = crate::numerics::matmul_tn(&self.hyperplanes, &self.hyperplanes);
        let mut s = 0.0;
        for i in 0..g.rows() {
            for j in 0..g.cols() {
                if i != j {
                    s += g[(i, j)] * g[(i, j)];
                }
            }
        }
        s
    }
}

struct Graph {
    terms: [Var; 5],
    total: Var,
    leaves: Vec<Var>,
}

impl Graph {
    fn breakdown(&self, tape: &Tape, weights: &LossWeights) -> LossBreakdown {
        let [dict, koop, sphere, deg, ind] = self.terms.map(|v| tape.scalar(v));
        LossBreakdown {
            dict,
            koop,
            sphere,
            deg,
            ind,
            total: tape.scalar(self.total),
            weights: *weights,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::fd::relative_error;
    use crate::numerics::matmul;
    use crate::orthogonal::SkewParams;
    use crate::rng::{uniform_matrix, SeedableRng};
    use approx::assert_abs_diff_eq;

    fn rng(seed: u64) -> Rng64 {
        Rng64::seed_from_u64(seed)
    }

    fn random_data(r: &mut Rng64, n: usize, lens: &[usize]) -> Vec<Trajectory> {
        lens.iter()
            .map(|&m| Trajectory::new(0.1, 0.0, uniform_matrix(r, m, n, -1.0, 1.0)).unwrap())
            .collect()
    }

    fn small_model(r: &mut Rng64, n: usize, p: usize, q: usize) -> HnkoModel {
        let mut cfg = ModelConfig::new(p, q);
        cfg.hidden = vec![5];
        let data = random_data(r, n, &[4]);
        let mut m = HnkoModel::init(&cfg, &data, vec![1.0; n], r).unwrap();
        // non-trivial Koopman, bias and scaling values
        let flat: Vec<f64> = m.parameters().iter().map(|x| x + uniform(r, -0.3, 0.3)).collect();
        m.set_parameters(&flat).unwrap();
        m.scaling = (0..n).map(|i| 1.0 + 0.5 * i as f64).collect();
        m
    }

    /// Identity-block encoder/decoder `x -> (x, 0, ..)` and back, no hidden layer.
    fn embedding_model(n: usize, p: usize, q: usize) -> HnkoModel {
        let enc = Mlp::new(vec![Layer {
            weight: Matrix::from_fn(p, n, |i, j| if i == j { 1.0 } else { 0.0 }),
            bias: vec![0.0; p],
        }])
        .unwrap();
        let dec = Mlp::new(vec![Layer {
            weight: Matrix::from_fn(n, p, |i, j| if i == j { 1.0 } else { 0.0 }),
            bias: vec![0.0; n],
        }])
        .unwrap();
        let koop = OrthogonalKoopman::identity(&KoopmanShape::Full { p }).unwrap();
        let v = Matrix::from_fn(p, q, |i, j| if i == p - 1 - j { 1.0 } else { 0.0 });
        HnkoModel::from_parts(enc, dec, koop, 0.0, v, vec![1.0; n]).unwrap()
    }

    #[test]
    fn q_range() {
        assert!(validate_q(6, 2).is_ok());
        assert!(validate_q(6, 4).is_ok());
        assert!(validate_q(6, 1).is_err());
        assert!(validate_q(6, 5).is_err());
        assert!(validate_q(7, 3).is_ok());
        assert!(validate_q(7, 2).is_err());
        assert!(validate_q(81, 40).is_ok());
        assert!(validate_q(2, 0).is_err());
    }

    #[test]
    fn init_constraints() {
        let mut r = rng(1);
        let data = random_data(&mut r, 4, &[30]);
        let cfg = ModelConfig::new(7, 3);
        let m = HnkoModel::init(&cfg, &data, vec![0.5; 4], &mut r).unwrap();
        let max_sq = (0..30)
            .map(|k| data[0].state(k).iter().map(|x| (x / 0.5).powi(2)).sum::<f64>())
            .fold(0.0, f64::max);
        assert!(m.radius().powi(2) >= max_sq);
        assert!(matmul_tn_check(&m.hyperplanes) < 1e-12);
        assert_eq!(m.encoder.layers()[0].weight.shape(), (64, 4));
        assert!(m.koopman.materialize().orthogonality_defect() < 1e-12);
        assert!(HnkoModel::init(&ModelConfig::new(6, 1), &data, vec![1.0; 4], &mut r).is_err());
    }

    fn matmul_tn_check(v: &Matrix) -> f64 {
        let g = matmul(&v.transpose(), v).unwrap();
        g.sub(&Matrix::identity(v.cols())).unwrap().frobenius_norm()
    }

    #[test]
    fn glorot_bounds() {
        let mut r = rng(2);
        let net = Mlp::glorot(&[10, 20, 5], &mut r).unwrap();
        let a = (6.0f64 / 30.0).sqrt();
        assert!(net.layers()[0].weight.data().iter().all(|w| w.abs() <= a));
        assert!(net.layers()[0].bias.iter().all(|b| *b == 0.0));
        assert!(Mlp::glorot(&[3], &mut r).is_err());
    }

    #[test]
    fn zero_encoder_gives_zero_latent() {
        let mut m = embedding_model(2, 5, 2);
        m.encoder = Mlp::zeros(&[2, 8, 5]).unwrap();
        assert_eq!(m.encode(&[0.3, -2.0]).unwrap(), vec![0.0; 5]);
    }

    #[test]
    fn identity_block_encoder() {
        let m = embedding_model(2, 5, 2);
        assert_eq!(m.encode(&[0.3, -2.0]).unwrap(), vec![0.3, -2.0, 0.0, 0.0, 0.0]);
        assert_eq!(m.decode(&[0.3, -2.0, 0.0, 0.0, 0.0]).unwrap(), vec![0.3, -2.0]);
    }

    #[test]
    fn loss_definitions_on_constructed_models() {
        let mut m = embedding_model(2, 5, 2);
        let data = [Trajectory::from_states(0.1, 0.0, &[vec![0.6, 0.8], vec![0.6, 0.8]]).unwrap()];
        // exact inverse
        assert_eq!(m.loss_dict(&data).unwrap(), 0.0);
        // K = I on a constant trajectory
        assert_eq!(m.loss_koop(&data).unwrap(), 0.0);
        // on the unit sphere, orthogonal to V = (e5, e4)
        assert_abs_diff_eq!(m.loss_sphere(&data).unwrap(), 0.0, epsilon = 1e-28);
        assert_eq!(m.loss_deg(&data).unwrap(), 0.0);
        assert_eq!(m.loss_ind(), 0.0);

        // decoder off by a unit vector
        m.decoder.layers_mut()[0].bias = vec![1.0, 0.0];
        assert_abs_diff_eq!(m.loss_dict(&data).unwrap(), 2.0, epsilon = 1e-12);

        // |y|^2 = r^2 + 1
        let m = embedding_model(2, 5, 2);
        let lone = [Trajectory::from_states(0.1, 0.0, &[vec![1.0, 1.0]]).unwrap()];
        assert!(m.total_loss(&lone, &LossWeights::default()).is_err());
        let two = [Trajectory::from_states(0.1, 0.0, &[vec![1.0, 1.0], vec![0.6, 0.8]]).unwrap()];
        assert_abs_diff_eq!(m.loss_sphere(&two).unwrap(), 1.0, epsilon = 1e-12);

        // two identical unit columns count twice
        let mut m = embedding_model(2, 5, 2);
        m.hyperplanes = Matrix::from_fn(5, 2, |i, _| if i == 4 { 1.0 } else { 0.0 });
        assert_abs_diff_eq!(m.loss_ind(), 2.0);
        assert_abs_diff_eq!(m.total_loss(&two, &LossWeights::default()).unwrap().ind, 2.0);
    }

    #[test]
    fn koop_zero_for_exact_rotation() {
        let p = 5;
        let mut r = rng(3);
        let sp = SkewParams::near_identity(p, &mut r);
        let sp = SkewParams::new(p, sp.params().iter().map(|x| x * 40.0).collect()).unwrap();
        let koop = OrthogonalKoopman::Full { params: sp };
        let k = koop.materialize();
        let mut m = embedding_model(p, p, 2);
        m.koopman = koop;
        let mut y = vec![0.3, -0.2, 0.5, 0.1, 0.7];
        let mut states = vec![y.clone()];
        for _ in 0..20 {
            y = k.matvec(&y);
            states.push(y.clone());
        }
        let tr = Trajectory::from_states(0.1, 0.0, &states).unwrap();
        assert!(m.loss_koop(&[tr]).unwrap() < 1e-20);
    }

    /// Independent scalar re-evaluation of every term.
    fn reference_terms(m: &HnkoModel, data: &[Trajectory]) -> [f64; 5] {
        let fwd = |net: &Mlp, x: &[f64]| -> Vec<f64> {
            let mut h = x.to_vec();
            let last = net.layers().len() - 1;
            for (li, l) in net.layers().iter().enumerate() {
                let mut out = l.bias.clone();
                for (i, o) in out.iter_mut().enumerate() {
                    for (j, hj) in h.iter().enumerate() {
                        *o += l.weight[(i, j)] * hj;
                    }
                }
                if li < last {
                    out.iter_mut().for_each(|v| *v = v.tanh());
                }
                h = out;
            }
            h
        };
        let k = m.koopman.materialize();
        let r2 = (2.0 * m.log_radius).exp();
        let (mut dict, mut koop, mut sphere, mut deg) = (0.0, 0.0, 0.0, 0.0);
        for tr in data {
            let ys: Vec<Vec<f64>> = (0..tr.len())
                .map(|i| {
                    let z: Vec<f64> = tr.state(i).iter().zip(&m.scaling).map(|(x, s)| x / s).collect();
                    let y = fwd(&m.encoder, &z);
                    let xr = fwd(&m.decoder, &y);
                    dict += xr.iter().zip(&z).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
                    y
                })
                .collect();
            for i in 0..ys.len() {
                let n2: f64 = ys[i].iter().map(|v| v * v).sum();
                sphere += (n2 - r2).powi(2);
                for c in 0..m.q() {
                    let col = m.hyperplanes.column(c);
                    let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
                    let d: f64 = col.iter().zip(&ys[i]).map(|(a, b)| a * b).sum::<f64>() / norm;
                    deg += d * d;
                }
                if i + 1 < ys.len() {
                    let ky = k.matvec(&ys[i]);
                    koop += ky.iter().zip(&ys[i + 1]).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
                }
            }
        }
        let mut ind = 0.0;
        for a in 0..m.q() {
            for b in 0..m.q() {
                if a != b {
                    let d: f64 = m.hyperplanes.column(a).iter().zip(m.hyperplanes.column(b)).map(|(x, y)| x * y).sum();
                    ind += d * d;
                }
            }
        }
        [dict, koop, sphere, deg, ind]
    }

    #[test]
    fn losses_match_reference() {
        let mut r = rng(4);
        let m = small_model(&mut r, 3, 7, 3);
        let data = random_data(&mut r, 3, &[6, 5]);
        let lb = m.total_loss(&data, &LossWeights::default()).unwrap();
        let reference = reference_terms(&m, &data);
        for (got, want) in [lb.dict, lb.koop, lb.sphere, lb.deg, lb.ind].iter().zip(reference) {
            assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0), "{got} vs {want}");
        }
        assert_eq!(lb.total, lb.dict + lb.koop + lb.sphere + lb.deg + lb.ind);
        assert!((m.loss_ind() - reference[4]).abs() < 1e-12);
        let zero = m.total_loss(&data, &LossWeights::uniform(0.0)).unwrap();
        assert_eq!(zero.total, 0.0);
    }

    #[test]
    fn deg_is_scale_invariant_per_column() {
        let mut r = rng(5);
        let mut m = small_model(&mut r, 3, 7, 3);
        let data = random_data(&mut r, 3, &[6]);
        let before = m.loss_deg(&data).unwrap();
        for i in 0..7 {
            m.hyperplanes[(i, 1)] *= 10.0;
        }
        let after = m.loss_deg(&data).unwrap();
        assert!(((before - after) / before).abs() < 1e-10);
        m.hyperplanes = Matrix::zeros(7, 3);
        assert!(matches!(m.loss_deg(&data), Err(Error::DegenerateHyperplane { index: 0, .. })));
    }

    #[test]
    fn gradients_match_finite_differences() {
        for variant in [KoopmanVariant::Full, KoopmanVariant::Kronecker] {
            let mut r = rng(6);
            let mut cfg = ModelConfig::new(9, 4);
            cfg.hidden = vec![6, 5];
            cfg.variant = variant;
            let data = random_data(&mut r, 3, &[5, 4]);
            let mut m = HnkoModel::init(&cfg, &data, vec![1.0, 2.0, 0.5], &mut r).unwrap();
            let flat: Vec<f64> = m.parameters().iter().map(|x| x + uniform(&mut r, -0.2, 0.2)).collect();
            m.set_parameters(&flat).unwrap();
            let weights = LossWeights {
                dict: 1.0,
                koop: 0.7,
                sphere: 0.3,
                deg: 1.3,
                ind: 0.9,
            };
            let (_, grad) = m.loss_and_gradient(&data, &weights).unwrap();
            let h = 1e-5;
            for group in m.param_groups() {
                let mut fd = Vec::new();
                for i in group.range.clone() {
                    let mut probe = m.clone();
                    let mut x = flat.clone();
                    x[i] = flat[i] + h;
                    probe.set_parameters(&x).unwrap();
                    let fp = probe.total_loss(&data, &weights).unwrap().total;
                    x[i] = flat[i] - h;
                    probe.set_parameters(&x).unwrap();
                    let fm = probe.total_loss(&data, &weights).unwrap().total;
                    fd.push((fp - fm) / (2.0 * h));
                }
                let ad = Matrix::row_vector(&grad[group.range.clone()]);
                let err = relative_error(&ad, &Matrix::row_vector(&fd));
                assert!(err < 1e-4, "{variant:?} {}: relative error {err:e}", group.name);
            }
        }
    }

    #[test]
    fn parameter_round_trip() {
        let mut r = rng(7);
        let m = small_model(&mut r, 3, 7, 3);
        let flat = m.parameters();
        assert_eq!(flat.len(), m.param_count());
        let groups = m.param_groups();
        assert_eq!(groups.last().unwrap().range.end, flat.len());
        let mut m2 = m.clone();
        m2.set_parameters(&vec![0.0; flat.len()]).unwrap();
        m2.set_parameters(&flat).unwrap();
        assert_eq!(m, m2);
        assert!(m2.set_parameters(&flat[1..]).is_err());
    }

    #[test]
    fn prediction_properties() {
        let mut r = rng(8);
        let m = small_model(&mut r, 3, 7, 3);
        let x0 = [0.3, -0.4, 0.9];
        let tr = m.predict(&x0, 0, 0.1).unwrap();
        assert_eq!(tr.len(), 1);
        let recon = m.decode(&m.encode(&x0).unwrap()).unwrap();
        assert_eq!(tr.state(0), recon.as_slice());

        let latent = m.predict_latent(&x0, 10_000).unwrap();
        let n0: f64 = latent.row(0).iter().map(|v| v * v).sum::<f64>().sqrt();
        for k in (0..=10_000).step_by(1000) {
            let nk: f64 = latent.row(k).iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((nk - n0).abs() < 1e-6);
        }

        let mut ident = m.clone();
        ident.koopman = OrthogonalKoopman::identity(&KoopmanShape::Full { p: 7 }).unwrap();
        let tr = ident.predict(&x0, 5, 0.1).unwrap();
        for k in 0..tr.len() {
            assert_eq!(tr.state(k), recon.as_slice());
        }
    }

    #[test]
    fn scaling_from_data() {
        let tr = Trajectory::from_states(0.1, 0.0, &[vec![1.0, -3.0, 0.0], vec![-2.0, 1.0, 0.0]]).unwrap();
        assert_eq!(max_abs_scaling(&[tr]).unwrap(), vec![2.0, 3.0, 1.0]);
    }
}
