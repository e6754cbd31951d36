//! The debiasing autoencoder: a tanh encoder ending in the linear Recovery
//! Layer `A`, a mirrored decoder, and a linear classifier on `ẑ = A·h`.
//!
//! The training objective is
//! `L = L_CE + [use_recon]·L_recon + [use_proj]·L_proj`, where the
//! projection loss is
//! `λ·mean_i √(‖h_i − AᵀA h_i‖² + ε²) + λ·‖AAᵀ − I_d‖_F²`.
//! It pulls the row space of `A` towards the subspace minimizing the sum of
//! Euclidean residuals and keeps the rows of `A` near-orthonormal.

mod io;
mod train;

use serde::{Deserialize, Serialize};

use crate::error::{Result, RiskError};
use crate::ndcore::{derive_seed, gaussian_matrix, qr_orthonormalize, Matrix};
use crate::nn::{
    mse_reconstruction, softmax_cross_entropy, tanh_backward, tanh_forward, AffineLayer, Param,
};
use crate::oracle::Subspace;

pub use io::{load_model, model_from_json, model_to_json, save_model, MODEL_FORMAT};
pub use train::{fit_recovery_layer, train, EpochLosses, RecoveryFit, RecoveryFitConfig, TrainReport};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Recovered subspace dimension (rows of `A`).
    pub d: usize,
    pub lambda: f64,
    /// First encoder width; defaults to `max(D/2, 2d)`.
    pub w1: Option<usize>,
    /// Second encoder width, the space `A` acts on; defaults to `max(D/4, 2d)`.
    pub d_h: Option<usize>,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub use_recon: bool,
    pub use_proj: bool,
    pub l1_smoothing: f64,
    /// Apply `A` to the raw features instead of the encoder output; the
    /// encoder stages are then absent and `A` is `d × D`.
    pub proj_on_input: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            d: 8,
            lambda: 0.01,
            w1: None,
            d_h: None,
            lr: 1e-3,
            weight_decay: 0.01,
            batch_size: 32,
            epochs: 20,
            seed: 0,
            use_recon: true,
            use_proj: true,
            l1_smoothing: 1e-12,
            proj_on_input: false,
        }
    }
}

/// Resolved layer widths for one input dimension.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Widths {
    pub input: usize,
    pub w1: usize,
    pub d_h: usize,
    /// Width of the space `A` acts on: `d_h`, or `input` under `proj_on_input`.
    pub hidden: usize,
    pub d: usize,
}

impl TrainConfig {
    pub fn widths(&self, input_dim: usize) -> Result<Widths> {
        let bad = |msg: String| Err(RiskError::InvalidConfig(msg));
        if input_dim == 0 {
            return bad("input dimension must be positive".into());
        }
        if self.d == 0 {
            return bad("d must be positive".into());
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be finite and >= 0, got {}", self.lambda));
        }
        if !(self.l1_smoothing >= 0.0 && self.l1_smoothing.is_finite()) {
            return bad(format!("l1_smoothing must be finite and >= 0, got {}", self.l1_smoothing));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be finite and >= 0, got {}", self.lr));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!("weight_decay must be finite and >= 0, got {}", self.weight_decay));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        let w1 = self.w1.unwrap_or((input_dim / 2).max(2 * self.d));
        let d_h = self.d_h.unwrap_or((input_dim / 4).max(2 * self.d));
        if w1 == 0 || d_h == 0 {
            return bad("layer widths must be positive".into());
        }
        let hidden = if self.proj_on_input { input_dim } else { d_h };
        if self.d > hidden {
            return bad(format!("d = {} exceeds the width {hidden} that A acts on", self.d));
        }
        Ok(Widths {
            input: input_dim,
            w1,
            d_h,
            hidden,
            d: self.d,
        })
    }
}

/// The linear map `A: R^{hidden} → R^d`.
#[derive(Clone, Debug, PartialEq)]
pub struct RecoveryLayer {
    pub a: Param,
}

impl RecoveryLayer {
    pub fn new(a: Matrix) -> Result<Self> {
        if !a.is_finite() {
            return Err(RiskError::NonFinite("recovery layer".into()));
        }
        if a.rows() > a.cols() {
            return Err(RiskError::InvalidShape(format!(
                "recovery layer is {}x{}; needs d <= hidden width",
                a.rows(),
                a.cols()
            )));
        }
        Ok(Self { a: Param::new(a) })
    }

    pub fn matrix(&self) -> &Matrix {
        &self.a.value
    }

    /// `‖AAᵀ − I_d‖_F`.
    pub fn orthogonality_residual(&self) -> f64 {
        let a = self.matrix();
        a.matmul_t(a).sub(&Matrix::identity(a.rows())).frobenius_norm()
    }

    /// Orthonormal basis of the row space of `A`.
    pub fn subspace(&self) -> Result<Subspace> {
        Subspace::new(qr_orthonormalize(&self.matrix().transpose())?)
    }
}

/// Value and gradients of the projection loss.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionLoss {
    /// `λ·(data_term + ortho_term)`.
    pub value: f64,
    /// `mean_i √(‖h_i − AᵀA h_i‖² + ε²)`.
    pub data_term: f64,
    /// `‖AAᵀ − I_d‖_F²`.
    pub ortho_term: f64,
    pub grad_a: Matrix,
    pub grad_h: Matrix,
}

pub fn projection_loss(a: &Matrix, h: &Matrix, lambda: f64, smoothing: f64) -> Result<ProjectionLoss> {
    if a.cols() != h.cols() {
        return Err(RiskError::ShapeMismatch {
            op: "projection_loss",
            detail: format!("A is {}x{}, H has {} columns", a.rows(), a.cols(), h.cols()),
        });
    }
    let batch = h.rows();
    let p = h.matmul_t(a);
    let resid = h.sub(&p.matmul(a));
    let mut g = Matrix::zeros(batch, h.cols());
    let mut data_term = 0.0;
    for i in 0..batch {
        let r = resid.row(i);
        let s = (r.iter().map(|v| v * v).sum::<f64>() + smoothing * smoothing).sqrt();
        data_term += s;
        if s > 0.0 {
            let coef = lambda / (batch as f64 * s);
            for (gi, ri) in g.row_mut(i).iter_mut().zip(r) {
                *gi = coef * ri;
            }
        }
    }
    if batch > 0 {
        data_term /= batch as f64;
    }
    let q = g.matmul_t(a);
    let grad_h = g.sub(&q.matmul(a));
    let o = a.matmul_t(a).sub(&Matrix::identity(a.rows()));
    let ortho_term = o.data().iter().map(|v| v * v).sum::<f64>();
    let mut grad_a = p.t_matmul(&g).add(&q.t_matmul(h)).scale(-1.0);
    grad_a.add_assign(&o.matmul(a).scale(4.0 * lambda));
    Ok(ProjectionLoss {
        value: lambda * (data_term + ortho_term),
        data_term,
        ortho_term,
        grad_a,
        grad_h,
    })
}

/// Per-component loss values of one batch. Disabled components are still
/// measured but excluded from `total`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub ce: f64,
    pub recon: f64,
    pub proj: f64,
    pub total: f64,
}

struct Cache {
    /// Encoder inputs and stage outputs; the last entry is `H`.
    enc: Vec<Matrix>,
    zhat: Matrix,
    /// Decoder stage outputs; the last entry is the reconstruction.
    dec: Vec<Matrix>,
    dlogits: Matrix,
    drecon: Matrix,
    proj: ProjectionLoss,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RiskModel {
    pub config: TrainConfig,
    pub widths: Widths,
    pub classes: usize,
    /// Two tanh stages `D → w1 → d_h`; empty under `proj_on_input`.
    pub encoder: Vec<AffineLayer>,
    pub recovery: RecoveryLayer,
    /// `d → d_h → w1 → D`, tanh after the first two stages.
    pub decoder: Vec<AffineLayer>,
    pub classifier: AffineLayer,
}

impl RiskModel {
    /// Gaussian initialization scaled by `1/√fan_in`, zero biases, every
    /// layer on its own stream of `cfg.seed`.
    pub fn new(input_dim: usize, classes: usize, cfg: &TrainConfig) -> Result<Self> {
        let w = cfg.widths(input_dim)?;
        if classes < 2 {
            return Err(RiskError::InvalidConfig(format!("need at least 2 classes, got {classes}")));
        }
        let seed = |k: u64| derive_seed(cfg.seed, 100 + k);
        let encoder = if cfg.proj_on_input {
            vec![]
        } else {
            vec![
                AffineLayer::init(w.input, w.w1, seed(0))?,
                AffineLayer::init(w.w1, w.d_h, seed(1))?,
            ]
        };
        let a = gaussian_matrix(w.d, w.hidden, seed(2))?.scale(1.0 / (w.hidden as f64).sqrt());
        Ok(Self {
            config: cfg.clone(),
            widths: w,
            classes,
            encoder,
            recovery: RecoveryLayer::new(a)?,
            decoder: vec![
                AffineLayer::init(w.d, w.d_h, seed(3))?,
                AffineLayer::init(w.d_h, w.w1, seed(4))?,
                AffineLayer::init(w.w1, w.input, seed(5))?,
            ],
            classifier: AffineLayer::init(w.d, classes, seed(6))?,
        })
    }

    /// Same shapes as [`RiskModel::new`] with every parameter zero.
    pub fn zeros(input_dim: usize, classes: usize, cfg: &TrainConfig) -> Result<Self> {
        let mut m = Self::new(input_dim, classes, cfg)?;
        for p in m.params_mut() {
            p.value.fill(0.0);
        }
        Ok(m)
    }

    pub fn input_dim(&self) -> usize {
        self.widths.input
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut out = vec![];
        for l in &self.encoder {
            out.extend(l.params());
        }
        out.push(&self.recovery.a);
        for l in &self.decoder {
            out.extend(l.params());
        }
        out.extend(self.classifier.params());
        out
    }

    /// Parameters in a fixed order: encoder, `A`, decoder, classifier.
    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out = vec![];
        for l in &mut self.encoder {
            out.extend(l.params_mut());
        }
        out.push(&mut self.recovery.a);
        for l in &mut self.decoder {
            out.extend(l.params_mut());
        }
        out.extend(self.classifier.params_mut());
        out
    }

    pub fn param_vector(&self) -> Vec<f64> {
        self.params().iter().flat_map(|p| p.value.data().to_vec()).collect()
    }

    pub fn grad_vector(&self) -> Vec<f64> {
        self.params().iter().flat_map(|p| p.grad.data().to_vec()).collect()
    }

    pub fn set_param_vector(&mut self, values: &[f64]) -> Result<()> {
        let total: usize = self.params().iter().map(|p| p.len()).sum();
        if values.len() != total {
            return Err(RiskError::ShapeMismatch {
                op: "set_param_vector",
                detail: format!("{} values for {total} parameters", values.len()),
            });
        }
        let mut offset = 0;
        for p in self.params_mut() {
            let n = p.len();
            p.value.data_mut().copy_from_slice(&values[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    fn check_input(&self, z: &Matrix) -> Result<()> {
        if z.cols() != self.widths.input {
            return Err(RiskError::ShapeMismatch {
                op: "encode",
                detail: format!("{} input columns, model expects {}", z.cols(), self.widths.input),
            });
        }
        Ok(())
    }

    fn encode_cached(&self, z: &Matrix) -> Result<Vec<Matrix>> {
        self.check_input(z)?;
        let mut acts = vec![z.clone()];
        for layer in &self.encoder {
            let next = tanh_forward(&layer.forward(acts.last().unwrap())?);
            acts.push(next);
        }
        Ok(acts)
    }

    /// `(H, Ẑ)` with `Ẑ = H·Aᵀ`.
    pub fn encode(&self, z: &Matrix) -> Result<(Matrix, Matrix)> {
        let h = self.encode_cached(z)?.pop().unwrap();
        let zhat = h.matmul_t(self.recovery.matrix());
        Ok((h, zhat))
    }

    fn decode_cached(&self, zhat: &Matrix) -> Result<Vec<Matrix>> {
        if zhat.cols() != self.widths.d {
            return Err(RiskError::ShapeMismatch {
                op: "decode",
                detail: format!("{} code columns, model expects {}", zhat.cols(), self.widths.d),
            });
        }
        let last = self.decoder.len() - 1;
        let mut acts = vec![];
        for (k, layer) in self.decoder.iter().enumerate() {
            let y = layer.forward(acts.last().unwrap_or(zhat))?;
            acts.push(if k < last { tanh_forward(&y) } else { y });
        }
        Ok(acts)
    }

    pub fn decode(&self, zhat: &Matrix) -> Result<Matrix> {
        Ok(self.decode_cached(zhat)?.pop().unwrap())
    }

    pub fn logits(&self, z: &Matrix) -> Result<Matrix> {
        let (_, zhat) = self.encode(z)?;
        self.classifier.forward(&zhat)
    }

    /// Argmax of the logits; ties go to the lower class index.
    pub fn predict(&self, z: &Matrix) -> Result<Vec<usize>> {
        Ok(argmax_rows(&self.logits(z)?))
    }

    pub fn extract_subspace(&self) -> Result<Subspace> {
        self.recovery.subspace()
    }

    fn forward(&self, z: &Matrix, labels: &[usize]) -> Result<(LossBreakdown, Cache)> {
        if z.rows() == 0 {
            return Err(RiskError::InvalidShape("empty batch".into()));
        }
        let enc = self.encode_cached(z)?;
        let h = enc.last().unwrap();
        let zhat = h.matmul_t(self.recovery.matrix());
        let logits = self.classifier.forward(&zhat)?;
        let (ce, dlogits) = softmax_cross_entropy(&logits, labels)?;
        let dec = self.decode_cached(&zhat)?;
        let (recon, drecon) = mse_reconstruction(z, dec.last().unwrap())?;
        let cfg = &self.config;
        let proj = projection_loss(self.recovery.matrix(), h, cfg.lambda, cfg.l1_smoothing)?;
        let mut total = ce;
        if cfg.use_recon {
            total += recon;
        }
        if cfg.use_proj {
            total += proj.value;
        }
        let losses = LossBreakdown {
            ce,
            recon,
            proj: proj.value,
            total,
        };
        Ok((
            losses,
            Cache {
                enc,
                zhat,
                dec,
                dlogits,
                drecon,
                proj,
            },
        ))
    }

    /// Loss components on a batch without touching gradients.
    pub fn loss(&self, z: &Matrix, labels: &[usize]) -> Result<LossBreakdown> {
        Ok(self.forward(z, labels)?.0)
    }

    /// Loss components on a batch; gradients of `total` with respect to
    /// every parameter replace the current gradient buffers.
    pub fn risk_loss(&mut self, z: &Matrix, labels: &[usize]) -> Result<LossBreakdown> {
        let (losses, cache) = self.forward(z, labels)?;
        self.zero_grad();
        self.backward(cache)?;
        Ok(losses)
    }

    fn backward(&mut self, cache: Cache) -> Result<()> {
        let Cache {
            enc,
            zhat,
            dec,
            dlogits,
            drecon,
            proj,
        } = cache;
        let mut dzhat = self.classifier.backward(&zhat, &dlogits)?;
        if self.config.use_recon {
            let mut g = drecon;
            for k in (0..self.decoder.len()).rev() {
                if k + 1 < self.decoder.len() {
                    g = tanh_backward(&dec[k], &g);
                }
                let input = if k == 0 { &zhat } else { &dec[k - 1] };
                g = self.decoder[k].backward(input, &g)?;
            }
            dzhat.add_assign(&g);
        }
        let h = enc.last().unwrap();
        let a = &mut self.recovery.a;
        a.grad.add_assign(&dzhat.t_matmul(h));
        let mut dh = dzhat.matmul(&a.value);
        if self.config.use_proj {
            a.grad.add_assign(&proj.grad_a);
            dh.add_assign(&proj.grad_h);
        }
        for k in (0..self.encoder.len()).rev() {
            let g = tanh_backward(&enc[k + 1], &dh);
            dh = self.encoder[k].backward(&enc[k], &g)?;
        }
        Ok(())
    }
}

pub fn argmax_rows(m: &Matrix) -> Vec<usize> {
    (0..m.rows())
        .map(|i| {
            let row = m.row(i);
            (1..row.len()).fold(0, |best, k| if row[k] > row[best] { k } else { best })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ndcore::{derive_seed, rng_from_seed};
    use crate::nn::finite_diff_check;
    use crate::oracle::{max_principal_angle, random_orthogonal};
    use proptest::prelude::*;
    use rand::Rng;

    fn toy_cfg() -> TrainConfig {
        TrainConfig {
            d: 2,
            lambda: 0.3,
            w1: Some(5),
            d_h: Some(4),
            ..TrainConfig::default()
        }
    }

    fn toy_batch(seed: u64) -> (Matrix, Vec<usize>) {
        let z = gaussian_matrix(6, 7, seed).unwrap();
        (z, vec![0, 1, 2, 0, 1, 2])
    }

    /// Finite-difference check of the full objective over every parameter.
    fn model_grad_error(mut model: RiskModel, z: &Matrix, y: &[usize]) -> f64 {
        let theta = model.param_vector();
        finite_diff_check(
            |v| {
                model.set_param_vector(v).unwrap();
                let total = model.risk_loss(z, y).unwrap().total;
                (total, model.grad_vector())
            },
            &theta,
            1e-5,
        )
    }

    #[test]
    fn projection_loss_examples() {
        let h = Matrix::from_rows(&[vec![3.0, 4.0]]).unwrap();
        let a = Matrix::from_rows(&[vec![1.0, 0.0]]).unwrap();
        assert_eq!(projection_loss(&a, &h, 0.5, 0.0).unwrap().value, 2.0);
        let a = Matrix::from_rows(&[vec![2.0, 0.0]]).unwrap();
        let v = projection_loss(&a, &h, 1.0, 0.0).unwrap().value;
        assert!((v - (97f64.sqrt() + 9.0)).abs() < 1e-12, "{v}");
        assert!((v - 18.8489).abs() < 1e-4);
    }

    #[test]
    fn projection_loss_vanishes_on_rowspace() {
        let q = random_orthogonal(5, 3).unwrap();
        let a = q.transpose().select_rows(&[0, 1]);
        let coeffs = gaussian_matrix(9, 2, 4).unwrap();
        let h = coeffs.matmul(&a);
        let loss = projection_loss(&a, &h, 1.0, 0.0).unwrap();
        assert!(loss.value.abs() < 1e-12, "{}", loss.value);
    }

    #[test]
    fn projection_loss_gradients() {
        for seed in 0..5 {
            let a0 = gaussian_matrix(2, 5, derive_seed(seed, 1)).unwrap();
            let h = gaussian_matrix(7, 5, derive_seed(seed, 2)).unwrap();
            let na = a0.data().len();
            let theta: Vec<f64> = a0.data().iter().chain(h.data()).copied().collect();
            let err = finite_diff_check(
                |v| {
                    let a = Matrix::new(2, 5, v[..na].to_vec()).unwrap();
                    let h = Matrix::new(7, 5, v[na..].to_vec()).unwrap();
                    let l = projection_loss(&a, &h, 0.7, 1e-12).unwrap();
                    let g = l.grad_a.data().iter().chain(l.grad_h.data()).copied().collect();
                    (l.value, g)
                },
                &theta,
                1e-5,
            );
            assert!(err <= 1e-4, "seed {seed}: {err}");
        }
    }

    #[test]
    fn data_term_scales_linearly() {
        let a = qr_orthonormalize(&gaussian_matrix(6, 2, 8).unwrap()).unwrap().transpose();
        let h = gaussian_matrix(10, 6, 9).unwrap();
        let base = projection_loss(&a, &h, 1.0, 0.0).unwrap().data_term;
        for c in [0.5, 3.0, 17.0] {
            let scaled = projection_loss(&a, &h.scale(c), 1.0, 0.0).unwrap().data_term;
            assert!((scaled - c * base).abs() <= 1e-12 * scaled.max(1.0));
        }
    }

    #[test]
    fn data_term_is_rotation_invariant() {
        let a = gaussian_matrix(2, 6, 1).unwrap();
        let h = gaussian_matrix(10, 6, 2).unwrap();
        let r = random_orthogonal(6, 3).unwrap();
        let base = projection_loss(&a, &h, 1.0, 0.0).unwrap().data_term;
        let rot = projection_loss(&a.matmul_t(&r), &h.matmul_t(&r), 1.0, 0.0).unwrap().data_term;
        assert!((base - rot).abs() <= 1e-10 * base, "{base} vs {rot}");
    }

    #[test]
    fn zero_model_encodes_and_decodes_to_zero() {
        let m = RiskModel::zeros(7, 3, &toy_cfg()).unwrap();
        let z = gaussian_matrix(4, 7, 1).unwrap();
        let (h, zhat) = m.encode(&z).unwrap();
        assert_eq!((h.shape(), zhat.shape()), ((4, 4), (4, 2)));
        assert!(h.data().iter().chain(zhat.data()).all(|&v| v == 0.0));
        let out = m.decode(&zhat).unwrap();
        assert_eq!(out.shape(), (4, 7));
        assert!(out.data().iter().all(|&v| v == 0.0));
        assert!(m.encode(&Matrix::zeros(1, 6)).is_err());
        assert!(m.decode(&Matrix::zeros(1, 3)).is_err());
    }

    #[test]
    fn orthonormal_recovery_reproduces_rowspace_vectors() {
        let cfg = TrainConfig {
            proj_on_input: true,
            ..toy_cfg()
        };
        let mut m = RiskModel::new(5, 2, &cfg).unwrap();
        let a = random_orthogonal(5, 2).unwrap().transpose().select_rows(&[0, 1]);
        m.recovery = RecoveryLayer::new(a.clone()).unwrap();
        let h = gaussian_matrix(3, 2, 5).unwrap().matmul(&a);
        let (_, zhat) = m.encode(&h).unwrap();
        let back = zhat.matmul(&a);
        assert!(back.sub(&h).frobenius_norm() < 1e-12);
        assert_eq!(m.encode(&h).unwrap(), m.encode(&h).unwrap());
    }

    #[test]
    fn ablation_identities() {
        let (z, y) = toy_batch(3);
        let base = RiskModel::new(7, 3, &toy_cfg()).unwrap();
        let ce_only = RiskModel {
            config: TrainConfig {
                use_recon: false,
                use_proj: false,
                ..toy_cfg()
            },
            ..base.clone()
        };
        let l = ce_only.loss(&z, &y).unwrap();
        assert_eq!(l.total, l.ce);

        let no_recon = RiskModel {
            config: TrainConfig { use_recon: false, ..toy_cfg() },
            ..base.clone()
        };
        let full = base.loss(&z, &y).unwrap();
        assert_eq!(no_recon.loss(&z, &y).unwrap().total, full.ce + full.proj);

        let lambda0 = |use_proj| RiskModel {
            config: TrainConfig {
                lambda: 0.0,
                use_proj,
                ..toy_cfg()
            },
            ..base.clone()
        };
        let (mut on, mut off) = (lambda0(true), lambda0(false));
        let lon = on.risk_loss(&z, &y).unwrap().total;
        let loff = off.risk_loss(&z, &y).unwrap().total;
        assert!((lon - loff).abs() <= 1e-12);
        let diff = on
            .grad_vector()
            .iter()
            .zip(off.grad_vector())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(diff <= 1e-12, "{diff}");
    }

    #[test]
    fn full_objective_gradient() {
        let (z, y) = toy_batch(5);
        for (use_recon, use_proj, proj_on_input) in [
            (true, true, false),
            (true, true, true),
            (false, true, false),
            (true, false, false),
        ] {
            let cfg = TrainConfig {
                use_recon,
                use_proj,
                proj_on_input,
                ..toy_cfg()
            };
            let m = RiskModel::new(7, 3, &cfg).unwrap();
            let err = model_grad_error(m, &z, &y);
            assert!(err <= 1e-4, "{use_recon} {use_proj} {proj_on_input}: {err}");
        }
    }

    #[test]
    fn decode_encode_composite_gradient() {
        let cfg = TrainConfig {
            use_proj: false,
            ..toy_cfg()
        };
        let mut m = RiskModel::new(7, 3, &cfg).unwrap();
        let (z, y) = toy_batch(8);
        let theta = m.param_vector();
        let err = finite_diff_check(
            |v| {
                m.set_param_vector(v).unwrap();
                (m.loss(&z, &y).unwrap().recon, recon_only_grads(&m, &z, &y))
            },
            &theta,
            1e-5,
        );
        assert!(err <= 1e-4, "{err}");
    }

    /// Gradient of the reconstruction term alone: the objective is linear
    /// in its components, so it is the difference of two toggled passes.
    fn recon_only_grads(m: &RiskModel, z: &Matrix, y: &[usize]) -> Vec<f64> {
        let mut r = m.clone();
        r.config.use_proj = false;
        r.risk_loss(z, y).unwrap();
        let with = r.grad_vector();
        r.config.use_recon = false;
        r.risk_loss(z, y).unwrap();
        with.iter().zip(r.grad_vector()).map(|(a, b)| a - b).collect()
    }

    #[test]
    fn argmax_ties_go_low() {
        let logits = Matrix::from_rows(&[vec![2.0, 2.0], vec![1.0, 3.0], vec![5.0, 5.0]]).unwrap();
        assert_eq!(argmax_rows(&logits), vec![0, 1, 0]);
    }

    #[test]
    fn extract_subspace_of_orthonormal_rows() {
        let a = random_orthogonal(6, 1).unwrap().transpose().select_rows(&[0, 1, 2]);
        let layer = RecoveryLayer::new(a.clone()).unwrap();
        let s = layer.subspace().unwrap();
        let t = Subspace::new(a.transpose()).unwrap();
        assert!(max_principal_angle(&s, &t).unwrap() <= 1e-8);
        assert!(layer.orthogonality_residual() < 1e-12);
        let rank_deficient = Matrix::from_rows(&[vec![1.0, 0.0, 0.0], vec![2.0, 0.0, 0.0]]).unwrap();
        assert!(matches!(
            RecoveryLayer::new(rank_deficient).unwrap().subspace(),
            Err(RiskError::RankDeficient { .. })
        ));
    }

    #[test]
    fn width_defaults_and_validation() {
        let w = TrainConfig { d: 4, ..TrainConfig::default() }.widths(64).unwrap();
        assert_eq!((w.w1, w.d_h, w.hidden), (32, 16, 16));
        let w = TrainConfig { d: 16, ..TrainConfig::default() }.widths(64).unwrap();
        assert_eq!((w.w1, w.d_h), (32, 32));
        let bad = TrainConfig { d: 5, d_h: Some(4), ..TrainConfig::default() };
        assert!(bad.widths(64).is_err());
        let bad = TrainConfig { lambda: -1.0, ..TrainConfig::default() };
        assert!(bad.widths(64).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn projection_loss_is_nonnegative(seed in any::<u64>(), lambda in 0.0f64..3.0) {
            let mut rng = rng_from_seed(seed);
            let hidden = rng.random_range(2..7);
            let d = rng.random_range(1..=hidden);
            let a = gaussian_matrix(d, hidden, derive_seed(seed, 1)).unwrap();
            let h = gaussian_matrix(5, hidden, derive_seed(seed, 2)).unwrap();
            let l = projection_loss(&a, &h, lambda, 1e-12).unwrap();
            prop_assert!(l.value >= 0.0);
        }

        #[test]
        fn random_model_gradients(seed in any::<u64>()) {
            let cfg = TrainConfig { seed, ..toy_cfg() };
            let m = RiskModel::new(7, 3, &cfg).unwrap();
            let (z, y) = toy_batch(derive_seed(seed, 9));
            let err = model_grad_error(m, &z, &y);
            prop_assert!(err <= 1e-4, "{}", err);
        }
    }
}
