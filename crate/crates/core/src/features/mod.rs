//! Feature datasets: the in-memory model, on-disk formats and the
//! planted-direction synthetic generator.

mod io;
mod synth;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Result, RiskError};
use crate::ndcore::Matrix;

pub use io::{
    load_csv, load_features, load_rskf, metadata_path, read_rskf, save_csv, save_features,
    save_rskf, write_rskf, RSKF_MAGIC, RSKF_VERSION,
};
pub use synth::{generate_synthetic, PlantedBases, ShortcutMode, SynthConfig};

/// Evaluation split tag.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Split {
    IdTrain = 0,
    IdTest = 1,
    Ood = 2,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::IdTrain, Split::IdTest, Split::Ood];

    pub fn tag(self) -> u8 {
        self as u8
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(Split::IdTrain),
            1 => Ok(Split::IdTest),
            2 => Ok(Split::Ood),
            other => Err(RiskError::UnknownSplitTag(other)),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Split::IdTrain => "id-train",
            Split::IdTest => "id-test",
            Split::Ood => "ood",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = RiskError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "id-train" | "train" | "0" => Ok(Split::IdTrain),
            "id-test" | "test" | "1" => Ok(Split::IdTest),
            "ood" | "2" => Ok(Split::Ood),
            other => Err(RiskError::InvalidConfig(format!("unknown split {other:?}"))),
        }
    }
}

/// Biased / bias-free flag. `Unknown` (tag 255) marks ingested data without
/// bias annotations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Group {
    BiasFree = 0,
    Biased = 1,
    Unknown = 255,
}

impl Group {
    pub fn tag(self) -> u8 {
        self as u8
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(Group::BiasFree),
            1 => Ok(Group::Biased),
            255 => Ok(Group::Unknown),
            other => Err(RiskError::UnknownGroupFlag(other)),
        }
    }
}

/// `N` feature vectors of dimension `D` with labels, group flags and split tags.
///
/// Features are held in `f64` but are always exactly representable as `f32`,
/// the on-disk precision; construction rounds them.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureDataset {
    features: Matrix,
    labels: Vec<usize>,
    groups: Vec<Group>,
    splits: Vec<Split>,
    classes: usize,
    pub metadata: BTreeMap<String, String>,
}

impl FeatureDataset {
    pub fn new(
        features: Matrix,
        labels: Vec<usize>,
        groups: Vec<Group>,
        splits: Vec<Split>,
        classes: usize,
    ) -> Result<Self> {
        let n = features.rows();
        if labels.len() != n || groups.len() != n || splits.len() != n {
            return Err(RiskError::ShapeMismatch {
                op: "FeatureDataset::new",
                detail: format!(
                    "{n} feature rows, {} labels, {} groups, {} splits",
                    labels.len(),
                    groups.len(),
                    splits.len()
                ),
            });
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
            return Err(RiskError::LabelOutOfRange { label, classes });
        }
        if !features.is_finite() {
            return Err(RiskError::NonFinite("dataset features".into()));
        }
        let features = features.map(|v| v as f32 as f64);
        if !features.is_finite() {
            return Err(RiskError::NonFinite("dataset features (f32 overflow)".into()));
        }
        Ok(Self {
            features,
            labels,
            groups,
            splits,
            classes,
            metadata: BTreeMap::new(),
        })
    }

    pub fn with_metadata(mut self, metadata: BTreeMap<String, String>) -> Self {
        self.metadata = metadata;
        self
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn groups(&self) -> &[Group] {
        &self.groups
    }

    pub fn splits(&self) -> &[Split] {
        &self.splits
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    /// Rows with the given tag, in original order.
    pub fn split_view(&self, split: Split) -> FeatureDataset {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| self.splits[i] == split).collect();
        self.subset(&idx)
    }

    pub fn subset(&self, idx: &[usize]) -> FeatureDataset {
        FeatureDataset {
            features: self.features.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            groups: idx.iter().map(|&i| self.groups[i]).collect(),
            splits: idx.iter().map(|&i| self.splits[i]).collect(),
            classes: self.classes,
            metadata: self.metadata.clone(),
        }
    }

    /// Rows of the given group within the given split.
    pub fn group_view(&self, split: Split, group: Group) -> FeatureDataset {
        let idx: Vec<usize> = (0..self.len())
            .filter(|&i| self.splits[i] == split && self.groups[i] == group)
            .collect();
        self.subset(&idx)
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// `# biased / # bias-free` within a split.
    pub fn bias_skewness(&self, split: Split) -> Result<f64> {
        let (mut biased, mut free, mut total) = (0usize, 0usize, 0usize);
        for (g, s) in self.groups.iter().zip(&self.splits) {
            if *s != split {
                continue;
            }
            total += 1;
            match g {
                Group::Biased => biased += 1,
                Group::BiasFree => free += 1,
                Group::Unknown => return Err(RiskError::UnknownGroup(split.to_string())),
            }
        }
        if total == 0 {
            return Err(RiskError::EmptySplit(split.to_string()));
        }
        if free == 0 {
            return Err(RiskError::NoBiasFree(split.to_string()));
        }
        Ok(biased as f64 / free as f64)
    }

    /// Fails unless the split is non-empty and holds every class.
    pub fn require_evaluable(&self, split: Split) -> Result<()> {
        let view_counts = self.split_view(split).class_counts();
        if view_counts.iter().sum::<usize>() == 0 {
            return Err(RiskError::EmptySplit(split.to_string()));
        }
        if let Some(class) = view_counts.iter().position(|&c| c == 0) {
            return Err(RiskError::MissingClass {
                split: split.to_string(),
                class,
            });
        }
        Ok(())
    }
}
