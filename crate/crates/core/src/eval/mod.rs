//! Accuracy metrics with group × class breakdowns, hyperparameter sweeps,
//! alignment against planted bases and report files.

mod report;
mod sweep;

use serde::{Deserialize, Serialize};

use crate::error::{Result, RiskError};
use crate::features::{FeatureDataset, Group, PlantedBases, Split};
use crate::model::RiskModel;
use crate::ndcore::{qr_orthonormalize, Matrix};
use crate::oracle::{gms_grid_search, gms_objective, principal_angles, Subspace};

pub use report::{write_report, CsvTable, Report, ReportFormat, REPORT_SCHEMA};
pub use sweep::{sweep, sweep_seed, SweepParam, SweepPoint, SweepResult, SweepRun};

/// Accuracy within one (group, class) cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellMetrics {
    pub group: Group,
    pub class: usize,
    pub count: usize,
    pub correct: usize,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub split: Split,
    pub n_examples: usize,
    pub correct: usize,
    pub accuracy: f64,
    /// Non-empty cells ordered by group tag, then class.
    pub cells: Vec<CellMetrics>,
}

/// Exact counting of `predictions` against the rows of `ds`.
pub fn metrics_from_predictions(predictions: &[usize], ds: &FeatureDataset, split: Split) -> Result<Metrics> {
    if predictions.len() != ds.len() {
        return Err(RiskError::ShapeMismatch {
            op: "metrics",
            detail: format!("{} predictions for {} examples", predictions.len(), ds.len()),
        });
    }
    if ds.is_empty() {
        return Err(RiskError::EmptySplit(split.to_string()));
    }
    let groups = [Group::BiasFree, Group::Biased, Group::Unknown];
    let mut counts = vec![[0usize; 2]; groups.len() * ds.classes()];
    for ((&p, &y), g) in predictions.iter().zip(ds.labels()).zip(ds.groups()) {
        let gi = groups.iter().position(|x| x == g).unwrap();
        let cell = &mut counts[gi * ds.classes() + y];
        cell[0] += 1;
        cell[1] += usize::from(p == y);
    }
    let mut cells = vec![];
    for (gi, &group) in groups.iter().enumerate() {
        for class in 0..ds.classes() {
            let [count, correct] = counts[gi * ds.classes() + class];
            if count > 0 {
                cells.push(CellMetrics {
                    group,
                    class,
                    count,
                    correct,
                    accuracy: correct as f64 / count as f64,
                });
            }
        }
    }
    let correct: usize = cells.iter().map(|c| c.correct).sum();
    Ok(Metrics {
        split,
        n_examples: ds.len(),
        correct,
        accuracy: correct as f64 / ds.len() as f64,
        cells,
    })
}

/// Accuracy of `model` on the rows of `ds` tagged `split`.
pub fn evaluate(model: &RiskModel, ds: &FeatureDataset, split: Split) -> Result<Metrics> {
    ds.require_evaluable(split)?;
    let view = ds.split_view(split);
    let predictions = model.predict(view.features())?;
    metrics_from_predictions(&predictions, &view, split)
}

/// Angular step of the grid oracle used by [`alignment_report`].
pub const ALIGNMENT_GRID_RESOLUTION_DEG: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignmentReport {
    /// Principal angles (radians, ascending) between the model subspace in
    /// input space and the planted intended span.
    pub angles: Vec<f64>,
    pub max_angle: f64,
    /// True when the encoder was linearized at the data mean to carry the
    /// row space of `A` back to input space.
    pub linearized: bool,
    /// Sum of residual norms of the `id-train` rows to the model subspace;
    /// reported with the grid-search minimum when `D ≤ 3` and `d = 1`.
    pub model_objective: Option<f64>,
    pub oracle_objective: Option<f64>,
}

/// Row space of `A` expressed in input coordinates.
///
/// With `proj_on_input` this is the row space of `A` itself. Otherwise the
/// encoder `h(z)` is replaced by its Jacobian `J` at the mean `μ` of the
/// given rows, `ẑ ≈ A·J·(z − μ) + const`, and the subspace is the row space
/// of `A·J`.
pub fn input_space_subspace(model: &RiskModel, rows: &Matrix) -> Result<(Subspace, bool)> {
    if model.encoder.is_empty() {
        return Ok((model.extract_subspace()?, false));
    }
    let mean = Matrix::new(1, rows.cols(), rows.column_means())?;
    let mut jac = Matrix::identity(rows.cols());
    let mut x = mean;
    for layer in &model.encoder {
        let y = layer.forward(&x)?.map(f64::tanh);
        let slope: Vec<f64> = y.data().iter().map(|v| 1.0 - v * v).collect();
        let mut step = layer.weight.value.clone();
        for (i, s) in slope.iter().enumerate() {
            for v in step.row_mut(i) {
                *v *= s;
            }
        }
        jac = step.matmul(&jac);
        x = y;
    }
    let map = model.recovery.matrix().matmul(&jac);
    Ok((Subspace::new(qr_orthonormalize(&map.transpose())?)?, true))
}

pub fn alignment_report(
    model: &RiskModel,
    planted: Option<&PlantedBases>,
    ds: &FeatureDataset,
) -> Result<AlignmentReport> {
    let planted = planted.ok_or(RiskError::MissingPlanted)?;
    if planted.intended.rows() != model.input_dim() {
        return Err(RiskError::ShapeMismatch {
            op: "alignment_report",
            detail: format!(
                "planted bases live in R^{}, model input is R^{}",
                planted.intended.rows(),
                model.input_dim()
            ),
        });
    }
    let train = ds.split_view(Split::IdTrain);
    let rows = if train.is_empty() { ds.features().clone() } else { train.features().clone() };
    let (sub, linearized) = input_space_subspace(model, &rows)?;
    let intended = Subspace::new(planted.intended.clone())?;
    let angles = principal_angles(&sub, &intended)?;
    let (mut model_objective, mut oracle_objective) = (None, None);
    if rows.cols() <= 3 && sub.dim() == 1 && rows.rows() > 0 {
        model_objective = Some(gms_objective(&rows, &sub)?);
        let step = ALIGNMENT_GRID_RESOLUTION_DEG.to_radians();
        oracle_objective = Some(gms_grid_search(&rows, 1, step)?.1);
    }
    Ok(AlignmentReport {
        max_angle: angles.last().copied().unwrap_or(0.0),
        angles,
        linearized,
        model_objective,
        oracle_objective,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{generate_synthetic, SynthConfig};
    use crate::model::{RecoveryLayer, TrainConfig};
    use crate::ndcore::{derive_seed, rng_from_seed};
    use proptest::prelude::*;
    use rand::Rng;
    use std::f64::consts::FRAC_PI_2;

    fn labelled(labels: Vec<usize>, groups: Vec<Group>, classes: usize) -> FeatureDataset {
        let n = labels.len();
        FeatureDataset::new(Matrix::zeros(n, 1), labels, groups, vec![Split::IdTest; n], classes).unwrap()
    }

    #[test]
    fn perfect_and_constant_predictors() {
        let labels = vec![0, 1, 2, 0, 1, 2];
        let groups = vec![Group::Biased, Group::BiasFree, Group::Biased, Group::BiasFree, Group::Biased, Group::BiasFree];
        let ds = labelled(labels.clone(), groups, 3);
        let m = metrics_from_predictions(&labels, &ds, Split::IdTest).unwrap();
        assert_eq!(m.accuracy, 1.0);
        assert_eq!(m.cells.len(), 6);
        assert!(m.cells.iter().all(|c| c.accuracy == 1.0));
        let m = metrics_from_predictions(&[0; 6], &ds, Split::IdTest).unwrap();
        assert!((m.accuracy - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn empty_split_is_an_error() {
        let ds = labelled(vec![], vec![], 2);
        assert!(matches!(
            metrics_from_predictions(&[], &ds, Split::Ood),
            Err(RiskError::EmptySplit(_))
        ));
    }

    proptest! {
        #[test]
        fn overall_is_weighted_mean_of_cells(seed in any::<u64>(), n in 1usize..60, classes in 2usize..5) {
            let mut rng = rng_from_seed(seed);
            let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..classes)).collect();
            let groups: Vec<Group> = (0..n)
                .map(|_| [Group::BiasFree, Group::Biased, Group::Unknown][rng.random_range(0..3)])
                .collect();
            let preds: Vec<usize> = (0..n).map(|_| rng.random_range(0..classes)).collect();
            let ds = labelled(labels, groups, classes);
            let m = metrics_from_predictions(&preds, &ds, Split::IdTest).unwrap();
            let weighted: f64 = m.cells.iter().map(|c| c.accuracy * c.count as f64).sum::<f64>() / n as f64;
            prop_assert!((weighted - m.accuracy).abs() < 1e-12);
            prop_assert_eq!(m.cells.iter().map(|c| c.count).sum::<usize>(), n);
            prop_assert!(m.cells.iter().all(|c| (0.0..=1.0).contains(&c.accuracy)));
        }
    }

    fn planted_setup() -> (FeatureDataset, PlantedBases, RiskModel) {
        let sc = SynthConfig {
            n_train: 40,
            n_test: 20,
            n_ood: 20,
            dim: 12,
            k_intended: 2,
            k_shortcut: 2,
            ..SynthConfig::default()
        };
        let (ds, planted) = generate_synthetic(&sc, 4).unwrap();
        let cfg = TrainConfig {
            d: 2,
            proj_on_input: true,
            ..TrainConfig::default()
        };
        let model = RiskModel::new(12, 2, &cfg).unwrap();
        (ds, planted, model)
    }

    #[test]
    fn alignment_of_planted_rows() {
        let (ds, planted, mut model) = planted_setup();
        model.recovery = RecoveryLayer::new(planted.intended.transpose()).unwrap();
        let r = alignment_report(&model, Some(&planted), &ds).unwrap();
        assert!(!r.linearized);
        assert!(r.max_angle <= 1e-8, "{:?}", r.angles);

        model.recovery = RecoveryLayer::new(planted.shortcut.transpose()).unwrap();
        let r = alignment_report(&model, Some(&planted), &ds).unwrap();
        assert!(r.angles.iter().all(|a| (a - FRAC_PI_2).abs() < 1e-8), "{:?}", r.angles);

        assert!(matches!(alignment_report(&model, None, &ds), Err(RiskError::MissingPlanted)));
    }

    #[test]
    fn linearization_matches_finite_differences() {
        let sc = SynthConfig {
            n_train: 30,
            n_test: 10,
            n_ood: 10,
            dim: 8,
            k_intended: 2,
            k_shortcut: 2,
            ..SynthConfig::default()
        };
        let (ds, _) = generate_synthetic(&sc, 2).unwrap();
        let model = RiskModel::new(8, 2, &TrainConfig { d: 2, d_h: Some(4), ..TrainConfig::default() }).unwrap();
        let (sub, linearized) = input_space_subspace(&model, ds.features()).unwrap();
        assert!(linearized);
        // Numerical Jacobian of z ↦ ẑ at the mean, column by column.
        let mean = ds.features().column_means();
        let eps = 1e-6;
        let mut cols = vec![];
        for j in 0..8 {
            let (mut zp, mut zm) = (mean.clone(), mean.clone());
            zp[j] += eps;
            zm[j] -= eps;
            let up = model.encode(&Matrix::new(1, 8, zp).unwrap()).unwrap().1;
            let dn = model.encode(&Matrix::new(1, 8, zm).unwrap()).unwrap().1;
            cols.push(up.sub(&dn).scale(0.5 / eps).into_data());
        }
        let numeric = Matrix::from_columns(&cols).unwrap();
        let expected = Subspace::from_spanning(&numeric.transpose()).unwrap();
        let angle = crate::oracle::max_principal_angle(&sub, &expected).unwrap();
        assert!(angle < 1e-6, "{angle}");
    }

    #[test]
    fn low_dimensional_alignment_reports_objectives() {
        let z = Matrix::from_rows(&[vec![1.0, 0.1], vec![-1.0, 0.0], vec![2.0, 0.0], vec![0.0, 3.0]]).unwrap();
        let n = z.rows();
        let ds = FeatureDataset::new(z, vec![0, 1, 0, 1], vec![Group::Biased; n], vec![Split::IdTrain; n], 2).unwrap();
        let planted = PlantedBases {
            intended: Matrix::from_columns(&[vec![1.0, 0.0]]).unwrap(),
            shortcut: Matrix::from_columns(&[vec![0.0, 1.0]]).unwrap(),
            intended_codes: Matrix::from_rows(&[vec![1.0, -1.0]]).unwrap(),
            shortcut_codes: vec![-1.0, 1.0],
            intended_margin: 1.0,
            shortcut_margin: 1.0,
        };
        let cfg = TrainConfig { d: 1, proj_on_input: true, seed: derive_seed(1, 2), ..TrainConfig::default() };
        let mut model = RiskModel::new(2, 2, &cfg).unwrap();
        model.recovery = RecoveryLayer::new(Matrix::from_rows(&[vec![1.0, 0.0]]).unwrap()).unwrap();
        let r = alignment_report(&model, Some(&planted), &ds).unwrap();
        let (mo, oo) = (r.model_objective.unwrap(), r.oracle_objective.unwrap());
        assert!(oo <= mo + 1e-12 && mo <= oo * 1.01, "{mo} {oo}");
    }
}
