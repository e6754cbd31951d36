use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{projection_loss, LossBreakdown, RecoveryLayer, RiskModel, TrainConfig};
use crate::error::{Result, RiskError};
use crate::features::{FeatureDataset, Split};
use crate::ndcore::{derive_seed, gaussian_matrix, rng_from_seed, Matrix};
use crate::nn::{adamw_step, AdamWConfig, AdamWState, Param};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLosses {
    pub epoch: usize,
    pub ce: f64,
    pub recon: f64,
    pub proj: f64,
    pub total: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub seed: u64,
    pub config: TrainConfig,
    pub n_train: usize,
    /// Full-data losses before the first update.
    pub initial: LossBreakdown,
    /// Full-data losses after the last update.
    #[serde(rename = "final")]
    pub final_loss: LossBreakdown,
    /// Example-weighted means over the mini-batches of each epoch.
    pub epochs: Vec<EpochLosses>,
    /// `‖AAᵀ − I_d‖_F` of the trained model.
    pub orthogonality_residual: f64,
    pub wall_time_secs: f64,
}

fn check_finite(l: &LossBreakdown, cfg: &TrainConfig, epoch: usize, batch: usize) -> Result<()> {
    let parts = [
        ("cross-entropy", l.ce, true),
        ("reconstruction", l.recon, cfg.use_recon),
        ("projection", l.proj, cfg.use_proj),
        ("total", l.total, true),
    ];
    for (component, v, active) in parts {
        if active && !v.is_finite() {
            return Err(RiskError::NonFiniteLoss {
                component,
                epoch,
                batch,
            });
        }
    }
    Ok(())
}

/// Trains a fresh model on the `id-train` rows of `ds`.
pub fn train(ds: &FeatureDataset, cfg: &TrainConfig) -> Result<(RiskModel, TrainReport)> {
    let start = Instant::now();
    ds.require_evaluable(Split::IdTrain)?;
    let data = ds.split_view(Split::IdTrain);
    let (z, y) = (data.features(), data.labels());
    let mut model = RiskModel::new(data.dim(), data.classes(), cfg)?;
    let initial = model.loss(z, y)?;
    check_finite(&initial, cfg, 0, 0)?;

    let mut opt = AdamWState::for_params(
        AdamWConfig::new(cfg.lr, cfg.weight_decay),
        &model.params_mut(),
    );
    let mut rng = rng_from_seed(derive_seed(cfg.seed, 7));
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut epochs = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut sums = LossBreakdown::default();
        for (batch, idx) in order.chunks(cfg.batch_size).enumerate() {
            let zb = z.select_rows(idx);
            let yb: Vec<usize> = idx.iter().map(|&i| y[i]).collect();
            let l = model.risk_loss(&zb, &yb)?;
            check_finite(&l, cfg, epoch, batch)?;
            let w = idx.len() as f64;
            sums.ce += w * l.ce;
            sums.recon += w * l.recon;
            sums.proj += w * l.proj;
            sums.total += w * l.total;
            adamw_step(&mut model.params_mut(), &mut opt);
        }
        let n = data.len() as f64;
        epochs.push(EpochLosses {
            epoch,
            ce: sums.ce / n,
            recon: sums.recon / n,
            proj: sums.proj / n,
            total: sums.total / n,
        });
    }
    let final_loss = model.loss(z, y)?;
    check_finite(&final_loss, cfg, cfg.epochs, 0)?;
    let report = TrainReport {
        seed: cfg.seed,
        config: cfg.clone(),
        n_train: data.len(),
        initial,
        final_loss,
        epochs,
        orthogonality_residual: model.recovery.orthogonality_residual(),
        wall_time_secs: start.elapsed().as_secs_f64(),
    };
    Ok((model, report))
}

/// Settings for fitting a Recovery Layer alone to fixed vectors under the
/// projection loss.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecoveryFitConfig {
    pub lambda: f64,
    /// Initial AdamW step, decayed linearly to zero over `steps`.
    pub lr: f64,
    pub steps: usize,
    /// Independent random starts; the lowest final loss wins.
    pub restarts: usize,
    pub seed: u64,
    pub l1_smoothing: f64,
}

impl Default for RecoveryFitConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            lr: 0.05,
            steps: 1500,
            restarts: 4,
            seed: 0,
            l1_smoothing: 1e-12,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecoveryFit {
    pub layer: RecoveryLayer,
    pub loss: f64,
    pub restart: usize,
}

/// Fits `A` (`d × D`) to the rows of `z` by full-batch AdamW on the
/// projection loss, with no classifier or decoder attached.
pub fn fit_recovery_layer(z: &Matrix, d: usize, cfg: &RecoveryFitConfig) -> Result<RecoveryFit> {
    let dim = z.cols();
    if d == 0 || d > dim {
        return Err(RiskError::InvalidConfig(format!("d = {d} for {dim}-dimensional data")));
    }
    if cfg.restarts == 0 {
        return Err(RiskError::InvalidConfig("restarts must be positive".into()));
    }
    let mut best: Option<RecoveryFit> = None;
    for restart in 0..cfg.restarts {
        let init = gaussian_matrix(d, dim, derive_seed(cfg.seed, restart as u64))?;
        let mut a = Param::new(init.scale(1.0 / (dim as f64).sqrt()));
        let mut opt = AdamWState::new(AdamWConfig::new(cfg.lr, 0.0), &[a.len()]);
        for step in 0..cfg.steps {
            opt.config.lr = cfg.lr * (1.0 - step as f64 / cfg.steps as f64);
            a.grad = projection_loss(&a.value, z, cfg.lambda, cfg.l1_smoothing)?.grad_a;
            adamw_step(&mut [&mut a], &mut opt);
        }
        let loss = projection_loss(&a.value, z, cfg.lambda, cfg.l1_smoothing)?.value;
        if !loss.is_finite() {
            return Err(RiskError::NonFiniteLoss {
                component: "projection",
                epoch: cfg.steps,
                batch: restart,
            });
        }
        if best.as_ref().is_none_or(|b| loss < b.loss) {
            best = Some(RecoveryFit {
                layer: RecoveryLayer::new(a.value)?,
                loss,
                restart,
            });
        }
    }
    Ok(best.unwrap())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{generate_synthetic, SynthConfig};
    use crate::oracle::{gms_grid_search, gms_objective, max_principal_angle, Subspace};

    fn small_data() -> FeatureDataset {
        let cfg = SynthConfig {
            n_train: 120,
            n_test: 40,
            n_ood: 40,
            dim: 16,
            k_intended: 2,
            k_shortcut: 2,
            ..SynthConfig::default()
        };
        generate_synthetic(&cfg, 1).unwrap().0
    }

    fn small_cfg() -> TrainConfig {
        TrainConfig {
            d: 2,
            lambda: 0.5,
            epochs: 5,
            lr: 5e-3,
            seed: 3,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn training_is_deterministic() {
        let ds = small_data();
        let (m1, mut r1) = train(&ds, &small_cfg()).unwrap();
        let (m2, mut r2) = train(&ds, &small_cfg()).unwrap();
        assert_eq!(m1, m2);
        r1.wall_time_secs = 0.0;
        r2.wall_time_secs = 0.0;
        assert_eq!(r1, r2);
        let (m3, _) = train(&ds, &TrainConfig { seed: 4, ..small_cfg() }).unwrap();
        assert_ne!(m1, m3);
    }

    #[test]
    fn training_reduces_loss() {
        let (_, r) = train(&small_data(), &small_cfg()).unwrap();
        assert_eq!(r.epochs.len(), 5);
        assert!(r.final_loss.total < r.initial.total, "{:?} -> {:?}", r.initial, r.final_loss);
        assert!(r.epochs.iter().all(|e| e.total.is_finite()));
    }

    #[test]
    fn missing_class_or_empty_split_is_rejected() {
        let ds = small_data();
        let only_zero: Vec<usize> = (0..ds.len())
            .filter(|&i| ds.labels()[i] == 0 || ds.splits()[i] != Split::IdTrain)
            .collect();
        assert!(matches!(
            train(&ds.subset(&only_zero), &small_cfg()),
            Err(RiskError::MissingClass { .. })
        ));
        let no_train: Vec<usize> = (0..ds.len()).filter(|&i| ds.splits()[i] != Split::IdTrain).collect();
        assert!(matches!(
            train(&ds.subset(&no_train), &small_cfg()),
            Err(RiskError::EmptySplit(_))
        ));
    }

    #[test]
    fn divergence_names_the_component() {
        let cfg = TrainConfig {
            lr: 1e300,
            weight_decay: 0.0,
            ..small_cfg()
        };
        match train(&small_data(), &cfg) {
            Err(RiskError::NonFiniteLoss { .. }) => {}
            other => panic!("expected a non-finite loss, got {other:?}"),
        }
    }

    #[test]
    fn recovery_fit_finds_dominant_line() {
        let z = Matrix::from_rows(&[
            vec![1.0, 0.05],
            vec![-1.0, 0.0],
            vec![2.0, -0.05],
            vec![-2.0, 0.1],
            vec![0.0, 5.0],
        ])
        .unwrap();
        let fit = fit_recovery_layer(&z, 1, &RecoveryFitConfig::default()).unwrap();
        let (grid, obj) = gms_grid_search(&z, 1, 0.1f64.to_radians()).unwrap();
        let sub = fit.layer.subspace().unwrap();
        assert!(max_principal_angle(&sub, &grid).unwrap() < 1f64.to_radians());
        assert!(gms_objective(&z, &sub).unwrap() <= obj * 1.001);
        assert!(fit.layer.orthogonality_residual() < 1e-3);
        let e1 = Subspace::from_directions(&[vec![1.0, 0.0]]).unwrap();
        assert!(max_principal_angle(&sub, &e1).unwrap() < 5f64.to_radians());
    }
}
