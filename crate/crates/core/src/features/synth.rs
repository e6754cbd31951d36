//! Planted-direction benchmark for biased feature datasets.
//!
//! Two mutually orthogonal families of directions are planted in `R^D`:
//!
//! * intended directions `U*` (`k_intended` columns): every example of every
//!   split carries `intended_margin · U*·q_y`, where the class codes `q_y`
//!   are centered, unit-norm vectors in `R^{k_intended}`;
//! * shortcut directions `S` (`k_shortcut` columns), one per bias type: a
//!   biased example picks a bias type `j` uniformly and carries
//!   `shortcut_margin · b_y · s_j`, with scalar class codes `b_c` evenly
//!   spaced in `[-1, 1]`.
//!
//! Bias-free in-distribution examples carry no shortcut offset. Bias-free
//! out-of-distribution examples carry a shortcut offset that points at the
//! next class `(y + 1) mod C` (`flip`) or at a uniformly drawn class
//! (`random`). Isotropic Gaussian noise of scale `noise_sigma` is added to
//! every coordinate, and features are rounded to `f32`.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{FeatureDataset, Group, Split};
use crate::error::{Result, RiskError};
use crate::ndcore::{derive_seed, gaussian_matrix, qr_orthonormalize, rng_from_seed, standard_normal, Matrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShortcutMode {
    Flip,
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_train: usize,
    pub n_test: usize,
    pub n_ood: usize,
    pub dim: usize,
    pub classes: usize,
    pub k_intended: usize,
    pub k_shortcut: usize,
    /// Fraction of biased examples in both in-distribution splits.
    pub biased_fraction: f64,
    /// Fraction of out-of-distribution examples whose shortcut still agrees
    /// with the label (group `Biased`). Zero makes every OOD example bias-free.
    pub ood_biased_fraction: f64,
    pub intended_margin: f64,
    pub shortcut_margin: f64,
    pub noise_sigma: f64,
    pub ood_shortcut_mode: ShortcutMode,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_train: 1000,
            n_test: 400,
            n_ood: 400,
            dim: 64,
            classes: 2,
            k_intended: 4,
            k_shortcut: 4,
            biased_fraction: 0.9,
            ood_biased_fraction: 0.0,
            intended_margin: 1.0,
            shortcut_margin: 2.5,
            noise_sigma: 0.05,
            ood_shortcut_mode: ShortcutMode::Flip,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(RiskError::InvalidConfig(msg));
        if self.dim == 0 {
            return bad("dim must be positive".into());
        }
        if self.classes < 2 {
            return bad(format!("need at least 2 classes, got {}", self.classes));
        }
        if self.k_intended == 0 {
            return bad("k_intended must be positive".into());
        }
        if self.k_intended == 1 && self.classes > 2 {
            return bad("k_intended = 1 supports only two classes".into());
        }
        if self.k_intended + self.k_shortcut > self.dim {
            return bad(format!(
                "k_intended + k_shortcut = {} exceeds dim {}",
                self.k_intended + self.k_shortcut,
                self.dim
            ));
        }
        for (name, p) in [
            ("biased_fraction", self.biased_fraction),
            ("ood_biased_fraction", self.ood_biased_fraction),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must lie in [0, 1], got {p}"));
            }
        }
        for (name, m) in [
            ("intended_margin", self.intended_margin),
            ("shortcut_margin", self.shortcut_margin),
            ("noise_sigma", self.noise_sigma),
        ] {
            if !(m >= 0.0 && m.is_finite()) {
                return bad(format!("{name} must be finite and >= 0, got {m}"));
            }
        }
        if self.n_train == 0 {
            return bad("n_train must be positive".into());
        }
        Ok(())
    }

    /// Skewness of the in-distribution splits implied by the configuration.
    pub fn id_skewness(&self) -> f64 {
        self.biased_fraction / (1.0 - self.biased_fraction)
    }
}

/// Ground truth planted by the generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantedBases {
    /// `D × k_intended`, orthonormal columns.
    pub intended: Matrix,
    /// `D × k_shortcut`, orthonormal columns, orthogonal to `intended`.
    pub shortcut: Matrix,
    /// `k_intended × C`; column `c` is the unit intended code of class `c`.
    pub intended_codes: Matrix,
    /// Scalar shortcut code of each class.
    pub shortcut_codes: Vec<f64>,
    pub intended_margin: f64,
    pub shortcut_margin: f64,
}

impl PlantedBases {
    /// Noise-free class mean in input space restricted to the intended part.
    pub fn intended_mean(&self, class: usize) -> Vec<f64> {
        let code = self.intended_codes.column(class);
        self.intended
            .mul_vec(&code)
            .into_iter()
            .map(|v| v * self.intended_margin)
            .collect()
    }
}

fn class_codes(k: usize, classes: usize, seed: u64) -> Result<Matrix> {
    let g = gaussian_matrix(k, classes, seed)?;
    let mut codes = Matrix::zeros(k, classes);
    for i in 0..k {
        let mean = g.row(i).iter().sum::<f64>() / classes as f64;
        for c in 0..classes {
            codes[(i, c)] = g[(i, c)] - mean;
        }
    }
    for c in 0..classes {
        let n = codes.column(c).iter().map(|v| v * v).sum::<f64>().sqrt();
        if n < 1e-12 {
            return Err(RiskError::InvalidConfig("degenerate class code".into()));
        }
        for i in 0..k {
            codes[(i, c)] /= n;
        }
    }
    Ok(codes)
}

struct SplitPlan {
    split: Split,
    n: usize,
    aligned: usize,
}

pub fn generate_synthetic(cfg: &SynthConfig, seed: u64) -> Result<(FeatureDataset, PlantedBases)> {
    cfg.validate()?;
    let (d, c) = (cfg.dim, cfg.classes);
    let k_total = cfg.k_intended + cfg.k_shortcut;
    let bases = qr_orthonormalize(&gaussian_matrix(d, k_total, derive_seed(seed, 1))?)?;
    let planted = PlantedBases {
        intended: bases.column_range(0, cfg.k_intended),
        shortcut: bases.column_range(cfg.k_intended, k_total),
        intended_codes: class_codes(cfg.k_intended, c, derive_seed(seed, 2))?,
        shortcut_codes: (0..c)
            .map(|k| 2.0 * k as f64 / (c - 1) as f64 - 1.0)
            .collect(),
        intended_margin: cfg.intended_margin,
        shortcut_margin: cfg.shortcut_margin,
    };
    let intended_means: Vec<Vec<f64>> = (0..c).map(|k| planted.intended_mean(k)).collect();

    let plans = [
        SplitPlan {
            split: Split::IdTrain,
            n: cfg.n_train,
            aligned: (cfg.biased_fraction * cfg.n_train as f64).round() as usize,
        },
        SplitPlan {
            split: Split::IdTest,
            n: cfg.n_test,
            aligned: (cfg.biased_fraction * cfg.n_test as f64).round() as usize,
        },
        SplitPlan {
            split: Split::Ood,
            n: cfg.n_ood,
            aligned: (cfg.ood_biased_fraction * cfg.n_ood as f64).round() as usize,
        },
    ];

    let total = cfg.n_train + cfg.n_test + cfg.n_ood;
    let mut data = Vec::with_capacity(total * d);
    let (mut labels, mut groups, mut splits) = (vec![], vec![], vec![]);

    for (stream, plan) in plans.iter().enumerate() {
        let mut rng = rng_from_seed(derive_seed(seed, 10 + stream as u64));
        let mut split_labels: Vec<usize> = (0..plan.n).map(|i| i % c).collect();
        split_labels.shuffle(&mut rng);
        let mut order: Vec<usize> = (0..plan.n).collect();
        order.shuffle(&mut rng);
        let mut aligned = vec![false; plan.n];
        for &i in &order[..plan.aligned] {
            aligned[i] = true;
        }

        for (i, &y) in split_labels.iter().enumerate() {
            let mut z = intended_means[y].clone();
            let shortcut_class = if aligned[i] {
                Some(y)
            } else if plan.split == Split::Ood {
                Some(match cfg.ood_shortcut_mode {
                    ShortcutMode::Flip => (y + 1) % c,
                    ShortcutMode::Random => rng.random_range(0..c),
                })
            } else {
                None
            };
            if let (Some(sc), true) = (shortcut_class, cfg.k_shortcut > 0) {
                let j = rng.random_range(0..cfg.k_shortcut);
                let amp = cfg.shortcut_margin * planted.shortcut_codes[sc];
                for (zi, s) in z.iter_mut().zip(planted.shortcut.column(j)) {
                    *zi += amp * s;
                }
            }
            add_noise(&mut z, cfg.noise_sigma, &mut rng);
            data.extend(z);
            labels.push(y);
            groups.push(if aligned[i] { Group::Biased } else { Group::BiasFree });
            splits.push(plan.split);
        }
    }

    let mut meta = BTreeMap::new();
    meta.insert("generator".into(), "planted-directions".into());
    meta.insert("seed".into(), seed.to_string());
    meta.insert("synth_config".into(), serde_json::to_string(cfg)?);
    let ds = FeatureDataset::new(Matrix::new(total, d, data)?, labels, groups, splits, c)?
        .with_metadata(meta);
    Ok((ds, planted))
}

fn add_noise(z: &mut [f64], sigma: f64, rng: &mut ChaCha8Rng) {
    for zi in z.iter_mut() {
        let e = standard_normal(rng);
        if sigma > 0.0 {
            *zi += sigma * e;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::write_rskf;
    use crate::ndcore::dot;
    use crate::oracle::pca_subspace;

    /// Nearest-centroid classifier in planted intended coordinates, written
    /// as a linear rule: logit_c = μ_cᵀ (U*ᵀ z) − ‖μ_c‖²/2.
    fn intended_classifier_accuracy(ds: &FeatureDataset, planted: &PlantedBases, split: Split) -> f64 {
        let view = ds.split_view(split);
        let ut = planted.intended.transpose();
        let means: Vec<Vec<f64>> = (0..ds.classes())
            .map(|c| {
                planted
                    .intended_codes
                    .column(c)
                    .iter()
                    .map(|v| v * planted.intended_margin)
                    .collect()
            })
            .collect();
        let mut correct = 0;
        for i in 0..view.len() {
            let coords = ut.mul_vec(view.features().row(i));
            let logits: Vec<f64> = means
                .iter()
                .map(|m| dot(m, &coords) - 0.5 * dot(m, m))
                .collect();
            let pred = (0..logits.len())
                .fold(0, |best, k| if logits[k] > logits[best] { k } else { best });
            correct += usize::from(pred == view.labels()[i]);
        }
        correct as f64 / view.len() as f64
    }

    #[test]
    fn skewness_matches_fraction() {
        let cfg = SynthConfig {
            n_train: 1000,
            biased_fraction: 0.9,
            ..SynthConfig::default()
        };
        let (ds, _) = generate_synthetic(&cfg, 3).unwrap();
        assert_eq!(ds.bias_skewness(Split::IdTrain).unwrap(), 9.0);
    }

    #[test]
    fn noise_free_intended_classifier_is_perfect() {
        for classes in [2, 3, 4] {
            let cfg = SynthConfig {
                n_train: 60,
                n_test: 30,
                n_ood: 30,
                dim: 12,
                classes,
                noise_sigma: 0.0,
                ..SynthConfig::default()
            };
            let (ds, planted) = generate_synthetic(&cfg, 11).unwrap();
            for split in Split::ALL {
                assert_eq!(intended_classifier_accuracy(&ds, &planted, split), 1.0);
            }
        }
    }

    #[test]
    fn deterministic_bytes() {
        let cfg = SynthConfig::default();
        let (a, pa) = generate_synthetic(&cfg, 7).unwrap();
        let (b, pb) = generate_synthetic(&cfg, 7).unwrap();
        assert_eq!(write_rskf(&a), write_rskf(&b));
        assert_eq!(pa, pb);
        let (c, _) = generate_synthetic(&cfg, 8).unwrap();
        assert_ne!(write_rskf(&a), write_rskf(&c));
    }

    #[test]
    fn bases_are_mutually_orthonormal() {
        let (_, p) = generate_synthetic(&SynthConfig::default(), 5).unwrap();
        let k = p.intended.cols() + p.shortcut.cols();
        let both = Matrix::from_fn(p.intended.rows(), k, |i, j| {
            if j < p.intended.cols() {
                p.intended[(i, j)]
            } else {
                p.shortcut[(i, j - p.intended.cols())]
            }
        });
        let err = both.t_matmul(&both).sub(&Matrix::identity(k)).frobenius_norm();
        assert!(err <= 1e-10, "{err}");
    }

    #[test]
    fn labels_are_balanced() {
        let cfg = SynthConfig {
            n_train: 101,
            n_test: 37,
            n_ood: 50,
            classes: 3,
            ..SynthConfig::default()
        };
        let (ds, _) = generate_synthetic(&cfg, 2).unwrap();
        for split in Split::ALL {
            let counts = ds.split_view(split).class_counts();
            let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
            assert!(hi - lo <= 1, "{split}: {counts:?}");
        }
    }

    #[test]
    fn top_pca_direction_of_biased_data_is_shortcut() {
        let cfg = SynthConfig::default();
        assert!(cfg.shortcut_margin > cfg.intended_margin);
        let (ds, p) = generate_synthetic(&cfg, 1).unwrap();
        let biased = ds.group_view(Split::IdTrain, Group::Biased);
        let top = pca_subspace(biased.features(), 1, false).unwrap();
        let u = top.basis().column(0);
        let on = |m: &Matrix| m.t_matmul(&Matrix::from_columns(std::slice::from_ref(&u)).unwrap())
            .data().iter().map(|v| v * v).sum::<f64>();
        let (shortcut, intended) = (on(&p.shortcut), on(&p.intended));
        assert!(shortcut > intended, "shortcut {shortcut} intended {intended}");
    }

    #[test]
    fn flipped_shortcut_classifier_is_below_chance() {
        let cfg = SynthConfig::default();
        let (ds, p) = generate_synthetic(&cfg, 4).unwrap();
        let ood = ds.split_view(Split::Ood);
        let mut correct = 0;
        for i in 0..ood.len() {
            let coords = p.shortcut.t_matmul(&Matrix::from_columns(&[ood.features().row(i).to_vec()]).unwrap());
            // strongest bias-type coordinate, read through the class codes
            let v = coords.data().iter().fold(0.0f64, |b, &v| if v.abs() > b.abs() { v } else { b });
            let pred = (0..ds.classes())
                .min_by(|&a, &b| {
                    let da = (v - cfg.shortcut_margin * p.shortcut_codes[a]).abs();
                    let db = (v - cfg.shortcut_margin * p.shortcut_codes[b]).abs();
                    da.total_cmp(&db)
                })
                .unwrap();
            correct += usize::from(pred == ood.labels()[i]);
        }
        let acc = correct as f64 / ood.len() as f64;
        assert!(acc < 1.0 / ds.classes() as f64, "{acc}");
    }

    #[test]
    fn config_validation() {
        let bad = [
            SynthConfig { k_intended: 40, k_shortcut: 40, ..SynthConfig::default() },
            SynthConfig { biased_fraction: 1.5, ..SynthConfig::default() },
            SynthConfig { shortcut_margin: -1.0, ..SynthConfig::default() },
            SynthConfig { classes: 1, ..SynthConfig::default() },
            SynthConfig { k_intended: 1, classes: 3, ..SynthConfig::default() },
        ];
        for cfg in bad {
            assert!(matches!(generate_synthetic(&cfg, 0), Err(RiskError::InvalidConfig(_))));
        }
    }
}
