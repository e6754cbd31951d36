use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::evaluate;
use crate::error::{Result, RiskError};
use crate::features::{FeatureDataset, Split};
use crate::model::{train, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParam {
    Lambda,
    D,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Lambda => "lambda",
            SweepParam::D => "d",
        }
    }

    fn apply(self, base: &TrainConfig, value: f64, seed: u64) -> Result<TrainConfig> {
        let mut cfg = TrainConfig { seed, ..base.clone() };
        match self {
            SweepParam::Lambda => cfg.lambda = value,
            SweepParam::D => {
                if !(value >= 1.0 && value.fract() == 0.0) {
                    return Err(RiskError::InvalidConfig(format!("d grid value {value} is not a positive integer")));
                }
                cfg.d = value as usize;
            }
        }
        Ok(cfg)
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepParam {
    type Err = RiskError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lambda" => Ok(SweepParam::Lambda),
            "d" => Ok(SweepParam::D),
            other => Err(RiskError::InvalidConfig(format!("unknown sweep parameter {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRun {
    pub value: f64,
    pub seed: u64,
    pub id_test: f64,
    pub ood: f64,
}

/// Aggregate over the seeds of one grid value; std is the population std.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    pub id_test_mean: f64,
    pub id_test_std: f64,
    pub ood_mean: f64,
    pub ood_std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub parameter: SweepParam,
    pub grid: Vec<f64>,
    pub n_seeds: usize,
    pub base_seed: u64,
    /// Grid order, then seed order.
    pub runs: Vec<SweepRun>,
    pub points: Vec<SweepPoint>,
    /// Grid value with the highest mean accuracy; the earliest wins ties.
    pub best_id_test: f64,
    pub best_ood: f64,
}

/// Seed of run `s` at grid index `v`. Every (value, seed) pair gets its own
/// seed so runs at different grid values are independent.
pub fn sweep_seed(base_seed: u64, n_seeds: usize, value_index: usize, s: usize) -> u64 {
    base_seed.wrapping_add((value_index * n_seeds + s) as u64)
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn argmax_value(points: &[SweepPoint], key: impl Fn(&SweepPoint) -> f64) -> f64 {
    let mut best = &points[0];
    for p in &points[1..] {
        if key(p) > key(best) {
            best = p;
        }
    }
    best.value
}

/// Trains `n_seeds` models per grid value and scores each on `id-test` and
/// `ood`. Up to `threads` runs execute concurrently; results do not depend
/// on the thread count.
pub fn sweep(
    ds: &FeatureDataset,
    base: &TrainConfig,
    parameter: SweepParam,
    grid: &[f64],
    n_seeds: usize,
    threads: usize,
) -> Result<SweepResult> {
    if grid.is_empty() {
        return Err(RiskError::InvalidConfig("sweep grid is empty".into()));
    }
    if n_seeds == 0 {
        return Err(RiskError::InvalidConfig("n_seeds must be positive".into()));
    }
    ds.require_evaluable(Split::IdTrain)?;
    ds.require_evaluable(Split::IdTest)?;
    ds.require_evaluable(Split::Ood)?;

    let mut jobs = vec![];
    for (vi, &value) in grid.iter().enumerate() {
        for s in 0..n_seeds {
            let seed = sweep_seed(base.seed, n_seeds, vi, s);
            let cfg = parameter.apply(base, value, seed)?;
            cfg.widths(ds.dim())?;
            jobs.push((value, cfg));
        }
    }

    let run = |value: f64, cfg: &TrainConfig| -> Result<SweepRun> {
        let annotate = |e: RiskError| RiskError::Sweep {
            param: parameter.name().into(),
            value,
            seed: cfg.seed,
            source: Box::new(e),
        };
        let (model, _) = train(ds, cfg).map_err(annotate)?;
        Ok(SweepRun {
            value,
            seed: cfg.seed,
            id_test: evaluate(&model, ds, Split::IdTest).map_err(annotate)?.accuracy,
            ood: evaluate(&model, ds, Split::Ood).map_err(annotate)?.accuracy,
        })
    };

    let results: Vec<Mutex<Option<Result<SweepRun>>>> = jobs.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let worker = || loop {
        let i = next.fetch_add(1, Ordering::Relaxed);
        let Some((value, cfg)) = jobs.get(i) else { break };
        *results[i].lock().unwrap() = Some(run(*value, cfg));
    };
    std::thread::scope(|scope| {
        for _ in 1..threads.clamp(1, jobs.len()) {
            scope.spawn(worker);
        }
        worker();
    });
    let runs = results
        .into_iter()
        .map(|r| r.into_inner().unwrap().expect("every job runs"))
        .collect::<Result<Vec<_>>>()?;

    let points: Vec<SweepPoint> = runs
        .chunks(n_seeds)
        .map(|chunk| {
            let id: Vec<f64> = chunk.iter().map(|r| r.id_test).collect();
            let ood: Vec<f64> = chunk.iter().map(|r| r.ood).collect();
            let (id_test_mean, id_test_std) = mean_std(&id);
            let (ood_mean, ood_std) = mean_std(&ood);
            SweepPoint {
                value: chunk[0].value,
                id_test_mean,
                id_test_std,
                ood_mean,
                ood_std,
            }
        })
        .collect();
    Ok(SweepResult {
        parameter,
        grid: grid.to_vec(),
        n_seeds,
        base_seed: base.seed,
        best_id_test: argmax_value(&points, |p| p.id_test_mean),
        best_ood: argmax_value(&points, |p| p.ood_mean),
        runs,
        points,
    })
}
