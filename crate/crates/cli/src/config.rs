//! Run configuration: one flat JSON object covering data generation,
//! training, sweeps, oracles and file paths.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use risk_core::eval::SweepParam;
use risk_core::features::{ShortcutMode, Split, SynthConfig};
use risk_core::model::TrainConfig;

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OracleMethod {
    Grid,
    Irls,
    Pca,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    // synthetic data
    pub n_train: usize,
    pub n_test: usize,
    pub n_ood: usize,
    pub dim: usize,
    pub classes: usize,
    pub k_intended: usize,
    pub k_shortcut: usize,
    pub biased_fraction: f64,
    pub ood_biased_fraction: f64,
    pub intended_margin: f64,
    pub shortcut_margin: f64,
    pub noise_sigma: f64,
    pub ood_shortcut_mode: ShortcutMode,

    // model and training
    pub d: usize,
    pub lambda: f64,
    pub w1: Option<usize>,
    pub d_h: Option<usize>,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub use_recon: bool,
    pub use_proj: bool,
    pub l1_smoothing: f64,
    pub proj_on_input: bool,

    // sweeps
    pub sweep_param: SweepParam,
    pub sweep_grid: Vec<f64>,
    pub n_seeds: usize,

    // oracles
    pub method: OracleMethod,
    /// Angular step of the grid oracle: `"<x>deg"`, `"<x>rad"` or degrees.
    pub resolution: String,
    pub center: bool,
    pub irls_delta: f64,
    pub irls_max_iter: usize,

    pub grad_tolerance: f64,

    // paths and selection
    pub features: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub model_out: Option<PathBuf>,
    pub report_out: Option<PathBuf>,
    pub planted: Option<PathBuf>,
    pub planted_out: Option<PathBuf>,
    pub split: Option<Split>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let s = SynthConfig::default();
        let t = TrainConfig::default();
        Self {
            n_train: s.n_train,
            n_test: s.n_test,
            n_ood: s.n_ood,
            dim: s.dim,
            classes: s.classes,
            k_intended: s.k_intended,
            k_shortcut: s.k_shortcut,
            biased_fraction: s.biased_fraction,
            ood_biased_fraction: s.ood_biased_fraction,
            intended_margin: s.intended_margin,
            shortcut_margin: s.shortcut_margin,
            noise_sigma: s.noise_sigma,
            ood_shortcut_mode: s.ood_shortcut_mode,
            d: t.d,
            lambda: t.lambda,
            w1: t.w1,
            d_h: t.d_h,
            lr: t.lr,
            weight_decay: t.weight_decay,
            batch_size: t.batch_size,
            epochs: t.epochs,
            seed: t.seed,
            use_recon: t.use_recon,
            use_proj: t.use_proj,
            l1_smoothing: t.l1_smoothing,
            proj_on_input: t.proj_on_input,
            sweep_param: SweepParam::Lambda,
            sweep_grid: vec![0.0, 0.005, 0.01, 0.025, 0.05],
            n_seeds: 5,
            method: OracleMethod::Grid,
            resolution: "1deg".into(),
            center: false,
            irls_delta: 1e-8,
            irls_max_iter: 500,
            grad_tolerance: 1e-4,
            features: None,
            out: None,
            model: None,
            model_out: None,
            report_out: None,
            planted: None,
            planted_out: None,
            split: None,
        }
    }
}

impl RunConfig {
    pub fn synth(&self) -> SynthConfig {
        SynthConfig {
            n_train: self.n_train,
            n_test: self.n_test,
            n_ood: self.n_ood,
            dim: self.dim,
            classes: self.classes,
            k_intended: self.k_intended,
            k_shortcut: self.k_shortcut,
            biased_fraction: self.biased_fraction,
            ood_biased_fraction: self.ood_biased_fraction,
            intended_margin: self.intended_margin,
            shortcut_margin: self.shortcut_margin,
            noise_sigma: self.noise_sigma,
            ood_shortcut_mode: self.ood_shortcut_mode,
        }
    }

    pub fn train(&self) -> TrainConfig {
        TrainConfig {
            d: self.d,
            lambda: self.lambda,
            w1: self.w1,
            d_h: self.d_h,
            lr: self.lr,
            weight_decay: self.weight_decay,
            batch_size: self.batch_size,
            epochs: self.epochs,
            seed: self.seed,
            use_recon: self.use_recon,
            use_proj: self.use_proj,
            l1_smoothing: self.l1_smoothing,
            proj_on_input: self.proj_on_input,
        }
    }

    /// Grid step in radians.
    pub fn resolution_radians(&self) -> Result<f64, CliError> {
        let s = self.resolution.trim();
        let (num, to_rad) = if let Some(v) = s.strip_suffix("deg") {
            (v, true)
        } else if let Some(v) = s.strip_suffix("rad") {
            (v, false)
        } else {
            (s, true)
        };
        let v: f64 = num
            .trim()
            .parse()
            .map_err(|_| CliError::Config(format!("resolution: cannot parse {:?}", self.resolution)))?;
        if !(v > 0.0 && v.is_finite()) {
            return Err(CliError::Config(format!("resolution: must be positive, got {:?}", self.resolution)));
        }
        Ok(if to_rad { v.to_radians() } else { v })
    }

    /// Path stored under `key`, or a missing-key error.
    pub fn require<'a>(&self, key: &str, value: &'a Option<PathBuf>) -> Result<&'a Path, CliError> {
        value
            .as_deref()
            .ok_or_else(|| CliError::Config(format!("missing required key `{key}` (set it in the config or with a flag)")))
    }
}

/// Value of a `--set key=value` override: JSON if it parses, else a string.
pub fn parse_override(arg: &str) -> Result<(String, Value), CliError> {
    let (key, raw) = arg
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got {arg:?}")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    Ok((key.trim().to_string(), value))
}

/// Defaults, then the config file, then overrides in order.
pub fn resolve(file: Option<&Path>, overrides: &[(String, Value)]) -> Result<RunConfig, CliError> {
    let mut obj = match file {
        None => Map::new(),
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
            match serde_json::from_str::<Value>(&text) {
                Ok(Value::Object(m)) => m,
                Ok(_) => {
                    return Err(CliError::Config(format!("config {} must be a JSON object", path.display())))
                }
                Err(e) => return Err(CliError::Config(format!("malformed JSON in {}: {e}", path.display()))),
            }
        }
    };
    for (k, v) in overrides {
        obj.insert(k.clone(), v.clone());
    }
    serde_path_to_error::deserialize(Value::Object(obj)).map_err(|e| {
        let path = e.path().to_string();
        CliError::Config(format!("config key `{path}`: {}", e.inner()))
    })
}

/// The `key = default` table shown by `--help`.
pub fn defaults_table() -> String {
    let value = serde_json::to_value(RunConfig::default()).expect("defaults serialize");
    let mut out = String::from("Config keys and defaults (JSON object; flags override file values):\n");
    if let Value::Object(m) = value {
        let width = m.keys().map(|k| k.len()).max().unwrap_or(0);
        for (k, v) in m {
            let _ = writeln!(out, "  {k:<width$}  {v}");
        }
    }
    out
}
