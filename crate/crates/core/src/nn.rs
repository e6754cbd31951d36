//! Trainable-network substrate: affine layers, tanh, losses, AdamW and a
//! finite-difference gradient checker.

use serde::{Deserialize, Serialize};

use crate::error::{Result, RiskError};
use crate::ndcore::{gaussian_matrix, Matrix};

/// A parameter tensor and its gradient buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub value: Matrix,
    pub grad: Matrix,
}

impl Param {
    pub fn new(value: Matrix) -> Self {
        let grad = Matrix::zeros(value.rows(), value.cols());
        Self { value, grad }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    pub fn len(&self) -> usize {
        self.value.data().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// `y = W·x + b` applied row-wise to a batch.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineLayer {
    /// `out × in`.
    pub weight: Param,
    /// `1 × out`.
    pub bias: Param,
}

impl AffineLayer {
    pub fn new(weight: Matrix, bias: Vec<f64>) -> Result<Self> {
        if bias.len() != weight.rows() {
            return Err(RiskError::ShapeMismatch {
                op: "AffineLayer::new",
                detail: format!("bias length {} for {} outputs", bias.len(), weight.rows()),
            });
        }
        let n = bias.len();
        Ok(Self {
            weight: Param::new(weight),
            bias: Param::new(Matrix::new(1, n, bias)?),
        })
    }

    /// Gaussian weights scaled by `1/√fan_in`, zero bias.
    pub fn init(inputs: usize, outputs: usize, seed: u64) -> Result<Self> {
        let scale = 1.0 / (inputs as f64).sqrt();
        let w = gaussian_matrix(outputs, inputs, seed)?.scale(scale);
        Self::new(w, vec![0.0; outputs])
    }

    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weight: Param::new(Matrix::zeros(outputs, inputs)),
            bias: Param::new(Matrix::zeros(1, outputs)),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.value.cols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.value.rows()
    }

    fn check_input(&self, op: &'static str, x: &Matrix) -> Result<()> {
        if x.cols() != self.inputs() {
            return Err(RiskError::ShapeMismatch {
                op,
                detail: format!("input width {}, layer expects {}", x.cols(), self.inputs()),
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        self.check_input("affine_forward", x)?;
        let mut y = x.matmul_t(&self.weight.value);
        let b = self.bias.value.data();
        for i in 0..y.rows() {
            for (v, bj) in y.row_mut(i).iter_mut().zip(b) {
                *v += bj;
            }
        }
        Ok(y)
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&mut self, x: &Matrix, upstream: &Matrix) -> Result<Matrix> {
        self.check_input("affine_backward", x)?;
        if upstream.cols() != self.outputs() || upstream.rows() != x.rows() {
            return Err(RiskError::ShapeMismatch {
                op: "affine_backward",
                detail: format!(
                    "upstream {}x{}, expected {}x{}",
                    upstream.rows(),
                    upstream.cols(),
                    x.rows(),
                    self.outputs()
                ),
            });
        }
        self.weight.grad.add_assign(&upstream.t_matmul(x));
        let sums = upstream.column_sums();
        for (g, s) in self.bias.grad.data_mut().iter_mut().zip(sums) {
            *g += s;
        }
        Ok(upstream.matmul(&self.weight.value))
    }

    pub fn params_mut(&mut self) -> [&mut Param; 2] {
        [&mut self.weight, &mut self.bias]
    }

    pub fn params(&self) -> [&Param; 2] {
        [&self.weight, &self.bias]
    }
}

pub fn tanh_forward(x: &Matrix) -> Matrix {
    x.map(f64::tanh)
}

/// Backward through tanh given its forward output `y`.
pub fn tanh_backward(y: &Matrix, upstream: &Matrix) -> Matrix {
    assert_eq!(y.shape(), upstream.shape(), "tanh_backward shapes");
    let data = y
        .data()
        .iter()
        .zip(upstream.data())
        .map(|(t, g)| g * (1.0 - t * t))
        .collect();
    Matrix::new(y.rows(), y.cols(), data).expect("shape preserved")
}

/// Row-wise softmax with max subtraction.
pub fn softmax(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        row.iter_mut().for_each(|v| *v /= sum);
    }
    out
}

/// Mean cross-entropy and its gradient `(softmax − onehot)/batch`.
pub fn softmax_cross_entropy(logits: &Matrix, labels: &[usize]) -> Result<(f64, Matrix)> {
    let (n, c) = logits.shape();
    if labels.len() != n {
        return Err(RiskError::ShapeMismatch {
            op: "softmax_cross_entropy",
            detail: format!("{} labels for {n} rows", labels.len()),
        });
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= c) {
        return Err(RiskError::LabelOutOfRange { label, classes: c });
    }
    let mut grad = softmax(logits);
    let mut loss = 0.0;
    let batch = n as f64;
    for (i, &y) in labels.iter().enumerate() {
        let row = logits.row(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss += lse - row[y];
        let g = grad.row_mut(i);
        g[y] -= 1.0;
        g.iter_mut().for_each(|v| *v /= batch);
    }
    Ok((loss / batch, grad))
}

/// Mean squared Euclidean reconstruction error and its gradient with respect
/// to the reconstruction, `2(Z̃ − Z)/batch`.
pub fn mse_reconstruction(target: &Matrix, recon: &Matrix) -> Result<(f64, Matrix)> {
    if target.shape() != recon.shape() {
        return Err(RiskError::ShapeMismatch {
            op: "mse_reconstruction",
            detail: format!("{:?} vs {:?}", target.shape(), recon.shape()),
        });
    }
    let batch = target.rows().max(1) as f64;
    let diff = recon.sub(target);
    let loss = diff.data().iter().map(|v| v * v).sum::<f64>() / batch;
    Ok((loss, diff.scale(2.0 / batch)))
}

/// AdamW hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl AdamWConfig {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
        }
    }
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self::new(1e-3, 0.01)
    }
}

/// Moment accumulators for one parameter list, in a fixed order.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamWState {
    pub config: AdamWConfig,
    pub step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl AdamWState {
    pub fn new(config: AdamWConfig, shapes: &[usize]) -> Self {
        Self {
            config,
            step: 0,
            first: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            second: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn for_params(config: AdamWConfig, params: &[&mut Param]) -> Self {
        let sizes: Vec<usize> = params.iter().map(|p| p.len()).collect();
        Self::new(config, &sizes)
    }
}

/// One AdamW update: decoupled decay `θ ← θ − lr·wd·θ`, then the
/// bias-corrected adaptive step.
pub fn adamw_step(params: &mut [&mut Param], state: &mut AdamWState) {
    assert_eq!(params.len(), state.first.len(), "parameter count");
    state.step += 1;
    let AdamWConfig {
        lr,
        beta1,
        beta2,
        eps,
        weight_decay,
    } = state.config;
    let t = state.step as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    for ((p, m), v) in params
        .iter_mut()
        .zip(state.first.iter_mut())
        .zip(state.second.iter_mut())
    {
        assert_eq!(p.len(), m.len(), "moment shape");
        let grads = p.grad.data().to_vec();
        for (((theta, g), mi), vi) in p
            .value
            .data_mut()
            .iter_mut()
            .zip(&grads)
            .zip(m.iter_mut())
            .zip(v.iter_mut())
        {
            *theta -= lr * weight_decay * *theta;
            *mi = beta1 * *mi + (1.0 - beta1) * g;
            *vi = beta2 * *vi + (1.0 - beta2) * g * g;
            let m_hat = *mi / c1;
            let v_hat = *vi / c2;
            *theta -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

/// Relative error `|a − n| / max(|a|, |n|, 1e-12)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-12)
}

/// Compares the analytic gradient returned by `f` at `params` against
/// central differences of its value, coordinate by coordinate, and returns
/// the maximum relative error.
pub fn finite_diff_check<F>(mut f: F, params: &[f64], step: f64) -> f64
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let (_, analytic) = f(params);
    assert_eq!(analytic.len(), params.len(), "gradient length");
    let mut x = params.to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + step;
        let (fp, _) = f(&x);
        x[i] = orig - step;
        let (fm, _) = f(&x);
        x[i] = orig;
        let numeric = (fp - fm) / (2.0 * step);
        worst = worst.max(relative_error(analytic[i], numeric));
    }
    worst
}
