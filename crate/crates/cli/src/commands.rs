//! Subcommand implementations. Each one validates its paths before doing any
//! work, prints its report as JSON on stdout and, when `report_out` is set,
//! also writes it there (`.csv` for a table, otherwise JSON).

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use risk_core::eval::{
    alignment_report, evaluate, write_report, AlignmentReport, CsvTable, Metrics, Report, ReportFormat,
    SweepResult,
};
use risk_core::features::{generate_synthetic, load_features, save_features, FeatureDataset, PlantedBases, Split};
use risk_core::model::{load_model, save_model, train as train_model, RiskModel, TrainReport};
use risk_core::ndcore::{derive_seed, gaussian_matrix};
use risk_core::nn::finite_diff_check;
use risk_core::oracle::{gms_grid_search, gms_irls, gms_objective, pca_subspace, Subspace};
use risk_core::Matrix;

use crate::config::{OracleMethod, RunConfig};
use crate::CliError;

fn check_input(key: &str, path: &Path) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Config(format!("{key}: no such file {}", path.display())))
    }
}

fn check_output(key: &str, path: &Path, inputs: &[&Path]) -> Result<(), CliError> {
    let parent = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    if !parent.is_dir() {
        return Err(CliError::Config(format!("{key}: directory {} does not exist", parent.display())));
    }
    let target = std::path::absolute(path).map_err(|e| CliError::Config(format!("{key}: {e}")))?;
    for input in inputs {
        let same = match (input.canonicalize(), target.canonicalize()) {
            (Ok(a), Ok(b)) => a == b,
            _ => std::path::absolute(input).is_ok_and(|a| a == target),
        };
        if same {
            return Err(CliError::Config(format!("{key}: refusing to overwrite input {}", input.display())));
        }
    }
    Ok(())
}

fn emit<T>(kind: &str, cfg: &RunConfig, body: T, out: &mut dyn Write) -> Result<(), CliError>
where
    T: Serialize + DeserializeOwned + CsvTable,
{
    let report = Report::new(kind, cfg, body)?;
    if let Some(path) = &cfg.report_out {
        write_report(&report, path, ReportFormat::from_path(path))?;
    }
    writeln!(out, "{}", report.to_json()?).map_err(risk_core::RiskError::from)?;
    Ok(())
}

fn load_dataset(cfg: &RunConfig) -> Result<(PathBuf, FeatureDataset), CliError> {
    let path = cfg.require("features", &cfg.features)?.to_path_buf();
    check_input("features", &path)?;
    let ds = load_features(&path)?;
    Ok((path, ds))
}

pub fn threads_from_env() -> Result<usize, CliError> {
    match std::env::var("RISK_THREADS") {
        Err(_) => Ok(1),
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| CliError::Config(format!("RISK_THREADS must be a positive integer, got {v:?}"))),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenSynthSummary {
    pub out: PathBuf,
    pub planted_out: Option<PathBuf>,
    pub n_examples: usize,
    pub dim: usize,
    pub classes: usize,
    pub id_skewness: f64,
}

impl CsvTable for GenSynthSummary {
    fn csv_header(&self) -> Vec<&'static str> {
        vec!["out", "n_examples", "dim", "classes", "id_skewness"]
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        vec![vec![
            self.out.display().to_string(),
            self.n_examples.to_string(),
            self.dim.to_string(),
            self.classes.to_string(),
            self.id_skewness.to_string(),
        ]]
    }
}

pub fn gen_synth(cfg: &RunConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let path = cfg.require("out", &cfg.out)?;
    check_output("out", path, &[])?;
    if let Some(p) = &cfg.planted_out {
        check_output("planted_out", p, &[])?;
    }
    let synth = cfg.synth();
    let (ds, planted) = generate_synthetic(&synth, cfg.seed)?;
    save_features(&ds, path)?;
    if let Some(p) = &cfg.planted_out {
        std::fs::write(p, serde_json::to_string_pretty(&planted).map_err(risk_core::RiskError::from)?)
            .map_err(risk_core::RiskError::from)?;
    }
    let body = GenSynthSummary {
        out: path.to_path_buf(),
        planted_out: cfg.planted_out.clone(),
        n_examples: ds.len(),
        dim: ds.dim(),
        classes: ds.classes(),
        id_skewness: synth.id_skewness(),
    };
    emit("gen-synth", cfg, body, out)
}

pub fn train(cfg: &RunConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let features = cfg.require("features", &cfg.features)?;
    check_input("features", features)?;
    for (key, p) in [("model_out", &cfg.model_out), ("report_out", &cfg.report_out)] {
        if let Some(p) = p {
            check_output(key, p, &[features])?;
        }
    }
    let tc = cfg.train();
    let (_, ds) = load_dataset(cfg)?;
    tc.widths(ds.dim())?;
    let (model, report) = train_model(&ds, &tc)?;
    if let Some(p) = &cfg.model_out {
        save_model(&model, p)?;
    }
    emit::<TrainReport>("train", cfg, report, out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalBody {
    pub metrics: Metrics,
    pub alignment: Option<AlignmentReport>,
}

impl CsvTable for EvalBody {
    fn csv_header(&self) -> Vec<&'static str> {
        self.metrics.csv_header()
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        self.metrics.csv_rows()
    }
}

pub fn eval(cfg: &RunConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let model_path = cfg.require("model", &cfg.model)?;
    check_input("model", model_path)?;
    let features = cfg.require("features", &cfg.features)?;
    check_input("features", features)?;
    if let Some(p) = &cfg.planted {
        check_input("planted", p)?;
    }
    if let Some(p) = &cfg.report_out {
        let mut inputs = vec![model_path, features];
        inputs.extend(cfg.planted.as_deref());
        check_output("report_out", p, &inputs)?;
    }
    let model: RiskModel = load_model(model_path)?;
    let (_, ds) = load_dataset(cfg)?;
    let split = cfg.split.unwrap_or(Split::Ood);
    let metrics = evaluate(&model, &ds, split)?;
    let alignment = match &cfg.planted {
        None => None,
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(risk_core::RiskError::from)?;
            let planted: PlantedBases = serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("planted: malformed JSON in {}: {e}", p.display())))?;
            Some(alignment_report(&model, Some(&planted), &ds)?)
        }
    };
    emit("eval", cfg, EvalBody { metrics, alignment }, out)
}

pub fn sweep(cfg: &RunConfig, threads: usize, out: &mut dyn Write) -> Result<(), CliError> {
    let features = cfg.require("features", &cfg.features)?;
    check_input("features", features)?;
    if let Some(p) = &cfg.report_out {
        check_output("report_out", p, &[features])?;
    }
    let (_, ds) = load_dataset(cfg)?;
    let result = risk_core::eval::sweep(&ds, &cfg.train(), cfg.sweep_param, &cfg.sweep_grid, cfg.n_seeds, threads)?;
    emit::<SweepResult>("sweep", cfg, result, out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleBody {
    pub method: OracleMethod,
    pub d: usize,
    pub n_rows: usize,
    /// Sum of residual norms to the returned subspace.
    pub objective: f64,
    /// Orthonormal basis, one vector per entry.
    pub basis: Vec<Vec<f64>>,
    pub iterations: Option<usize>,
    pub converged: Option<bool>,
}

impl CsvTable for OracleBody {
    fn csv_header(&self) -> Vec<&'static str> {
        vec!["index", "direction"]
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        self.basis
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let coords: Vec<String> = v.iter().map(|x| x.to_string()).collect();
                vec![i.to_string(), coords.join(" ")]
            })
            .collect()
    }
}

fn basis_vectors(sub: &Subspace) -> Vec<Vec<f64>> {
    (0..sub.dim()).map(|j| sub.basis().column(j)).collect()
}

pub fn oracle(cfg: &RunConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let features = cfg.require("features", &cfg.features)?;
    check_input("features", features)?;
    if let Some(p) = &cfg.report_out {
        check_output("report_out", p, &[features])?;
    }
    let resolution = cfg.resolution_radians()?;
    let (_, ds) = load_dataset(cfg)?;
    let ds = match cfg.split {
        Some(s) => ds.split_view(s),
        None => ds,
    };
    let z = ds.features();
    let (mut iterations, mut converged) = (None, None);
    let (sub, objective) = match cfg.method {
        OracleMethod::Grid => gms_grid_search(z, cfg.d, resolution)?,
        OracleMethod::Irls => {
            let r = gms_irls(z, cfg.d, cfg.irls_delta, cfg.irls_max_iter)?;
            iterations = Some(r.iterations);
            converged = Some(r.converged);
            (r.subspace, r.objective)
        }
        OracleMethod::Pca => {
            let sub = pca_subspace(z, cfg.d, cfg.center)?;
            let obj = gms_objective(z, &sub)?;
            (sub, obj)
        }
    };
    let body = OracleBody {
        method: cfg.method,
        d: cfg.d,
        n_rows: z.rows(),
        objective,
        basis: basis_vectors(&sub),
        iterations,
        converged,
    };
    emit("oracle", cfg, body, out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckBody {
    pub n_params: usize,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl CsvTable for GradCheckBody {
    fn csv_header(&self) -> Vec<&'static str> {
        vec!["n_params", "max_rel_error", "tolerance", "pass"]
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        vec![vec![
            self.n_params.to_string(),
            self.max_rel_error.to_string(),
            self.tolerance.to_string(),
            self.pass.to_string(),
        ]]
    }
}

const GRAD_CHECK_ROWS: usize = 6;
const GRAD_CHECK_STEP: f64 = 1e-5;

/// Central-difference check of the full objective on a random batch of
/// `GRAD_CHECK_ROWS` rows in `R^dim`. Fails with exit code 3 above tolerance.
pub fn grad_check(cfg: &RunConfig, out: &mut dyn Write) -> Result<(), CliError> {
    if let Some(p) = &cfg.report_out {
        check_output("report_out", p, &[])?;
    }
    let tc = cfg.train();
    tc.widths(cfg.dim)?;
    if cfg.classes < 2 {
        return Err(CliError::Config("classes must be at least 2".into()));
    }
    let z: Matrix = gaussian_matrix(GRAD_CHECK_ROWS, cfg.dim, derive_seed(cfg.seed, 900))?;
    let labels: Vec<usize> = (0..GRAD_CHECK_ROWS).map(|i| i % cfg.classes).collect();
    let mut model = RiskModel::new(cfg.dim, cfg.classes, &tc)?;
    let theta = model.param_vector();
    let mut failure = None;
    let err = finite_diff_check(
        |v| {
            model.set_param_vector(v).expect("parameter length");
            match model.risk_loss(&z, &labels) {
                Ok(l) => (l.total, model.grad_vector()),
                Err(e) => {
                    failure.get_or_insert(e);
                    (f64::NAN, vec![f64::NAN; v.len()])
                }
            }
        },
        &theta,
        GRAD_CHECK_STEP,
    );
    if let Some(e) = failure {
        return Err(e.into());
    }
    let body = GradCheckBody {
        n_params: theta.len(),
        max_rel_error: err,
        tolerance: cfg.grad_tolerance,
        pass: err <= cfg.grad_tolerance,
    };
    let pass = body.pass;
    emit("grad-check", cfg, body, out)?;
    if pass {
        Ok(())
    } else {
        Err(CliError::Numerical(format!(
            "max relative gradient error {err:.3e} exceeds {}",
            cfg.grad_tolerance
        )))
    }
}
