//! Experiment runner: sweeps, per-cell synthesis and calibration, metrics,
//! quartile aggregation and CSV reports.
//!
//! A sweep cell is one (sweep value, seed) combination. Its dataset is drawn
//! once and shared by every scheme, so schemes are compared on identical
//! data. Cells run in parallel; rows come back in (value, seed, scheme)
//! order whatever the thread count.

mod config;

use std::path::Path as FsPath;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibrate::{calibrate, Scheme};
use crate::channel::{synthesize_dataset, ChannelDataset, SynthesisSpec};
use crate::error::{Error, Result};
use crate::raytracer::{trace_paths, MaterialParams, PathSet, Scene};

pub use config::{CellSettings, ExperimentConfig, RadioSpec, Sweep, SweepAxis};

/// Normalised calibration errors.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub eps_error: f64,
    pub sigma_error: f64,
    pub power_error: f64,
    pub power_error_db: f64,
}

/// `|eps^ - eps| / eps`, `|sigma^ - sigma| / sigma` and
/// `|P^ - P| / P` with `P = ||alpha||^2` of the respective path sets.
pub fn compute_metrics(
    estimate: MaterialParams,
    truth: MaterialParams,
    dt_paths: &PathSet,
    truth_paths: &PathSet,
) -> Result<Metrics> {
    if dt_paths.is_empty() || truth_paths.is_empty() {
        return Err(Error::EmptyPathSet);
    }
    let p_true = truth_paths.power();
    if !(p_true > 0.0) {
        return Err(Error::Validation("true received power is zero".into()));
    }
    let power_error = (dt_paths.power() - p_true).abs() / p_true;
    Ok(Metrics {
        eps_error: (estimate.eps - truth.eps).abs() / truth.eps,
        sigma_error: (estimate.sigma - truth.sigma).abs() / truth.sigma,
        power_error,
        power_error_db: 10.0 * power_error.log10(),
    })
}

/// One calibration run. Numeric fields are empty when `error` is set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub scheme: Scheme,
    pub sweep_value: f64,
    pub seed: u64,
    pub eps_hat: Option<f64>,
    pub sigma_hat: Option<f64>,
    pub eps_error: Option<f64>,
    pub sigma_error: Option<f64>,
    pub power_error: Option<f64>,
    pub power_error_db: Option<f64>,
    pub kappa0_hat: Option<f64>,
    pub iterations: Option<usize>,
    pub error: String,
}

impl MetricsRow {
    fn failed(scheme: Scheme, sweep_value: f64, seed: u64, error: String) -> Self {
        MetricsRow {
            scheme,
            sweep_value,
            seed,
            eps_hat: None,
            sigma_hat: None,
            eps_error: None,
            sigma_error: None,
            power_error: None,
            power_error_db: None,
            kappa0_hat: None,
            iterations: None,
            error,
        }
    }
}

/// Loaded scenes plus the index of the material the metrics report on.
struct Scenes {
    truth: Scene,
    dt: Scene,
    truth_material: usize,
    dt_material: usize,
}

fn scenes(cfg: &ExperimentConfig) -> Result<Scenes> {
    let (truth, dt) = cfg.load_scenes()?;
    let name = match &cfg.metric_material {
        Some(n) => n.clone(),
        None => truth
            .material_names()
            .first()
            .cloned()
            .ok_or_else(|| Error::Config("truth scene has no materials".into()))?,
    };
    let find = |s: &Scene, which: &str| {
        s.material_index(&name)
            .ok_or_else(|| Error::Config(format!("{which} scene has no material {name:?}")))
    };
    Ok(Scenes { truth_material: find(&truth, "truth")?, dt_material: find(&dt, "DT")?, truth, dt })
}

/// Draws the dataset of one sweep cell.
pub fn cell_dataset(cfg: &ExperimentConfig, truth: &Scene, sweep_value: f64, seed: u64) -> Result<ChannelDataset> {
    let cell = cfg.cell(sweep_value)?;
    synthesize_dataset(&SynthesisSpec {
        scene: truth,
        materials: truth.materials(),
        pair: cfg.pair,
        radio: &cell.radio,
        trace: cfg.trace,
        observations: cfg.observations,
        mode: cell.discrepancy,
        snr_db: cell.snr_db,
        seed,
    })
}

fn run_scheme(
    cfg: &ExperimentConfig,
    sc: &Scenes,
    dataset: &ChannelDataset,
    truth_paths: &PathSet,
    scheme: Scheme,
    seed: u64,
) -> Result<(crate::calibrate::CalibrationResult, Metrics)> {
    let mut optim = cfg.optim.clone();
    optim.seed = seed;
    let result = calibrate(scheme, &sc.dt, &cfg.trace, dataset, &optim)?;
    let theta = result.theta();
    let dt_paths = trace_paths(&sc.dt.with_materials(&theta)?, cfg.pair, &cfg.trace, dataset.radio.carrier_hz())?;
    let metrics = compute_metrics(
        theta[sc.dt_material],
        sc.truth.materials()[sc.truth_material],
        &dt_paths,
        truth_paths,
    )?;
    Ok((result, metrics))
}

fn run_cell(cfg: &ExperimentConfig, sc: &Scenes, value: f64, seed: u64) -> Vec<MetricsRow> {
    let context = |scheme: Scheme| format!("{} = {value}, seed {seed}, scheme {scheme}", cfg.sweep.axis.name());
    let prepared = cell_dataset(cfg, &sc.truth, value, seed).and_then(|ds| {
        let truth_paths = trace_paths(&sc.truth, cfg.pair, &cfg.trace, ds.radio.carrier_hz())?;
        Ok((ds, truth_paths))
    });
    let (dataset, truth_paths) = match prepared {
        Ok(v) => v,
        Err(e) => {
            return cfg
                .schemes
                .iter()
                .map(|&s| MetricsRow::failed(s, value, seed, e.clone_message(&context(s))))
                .collect()
        }
    };
    cfg.schemes
        .iter()
        .map(|&scheme| match run_scheme(cfg, sc, &dataset, &truth_paths, scheme, seed) {
            Ok((result, m)) => {
                let theta = result.theta()[sc.dt_material];
                MetricsRow {
                    scheme,
                    sweep_value: value,
                    seed,
                    eps_hat: Some(theta.eps),
                    sigma_hat: Some(theta.sigma),
                    eps_error: Some(m.eps_error),
                    sigma_error: Some(m.sigma_error),
                    power_error: Some(m.power_error),
                    power_error_db: Some(m.power_error_db),
                    kappa0_hat: result.kappa0.map(|k| k.value()),
                    iterations: Some(result.iterations),
                    error: String::new(),
                }
            }
            Err(e) => {
                let msg = e.clone_message(&context(scheme));
                log::warn!("{msg}");
                MetricsRow::failed(scheme, value, seed, msg)
            }
        })
        .collect()
}

/// Runs every (sweep value, seed, scheme) combination.
///
/// Configuration problems (unreadable scenes, unknown materials) abort the
/// run; failures inside a cell are recorded in the row's `error` column.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<MetricsRow>> {
    cfg.validate()?;
    let sc = scenes(cfg)?;
    let cells: Vec<(f64, u64)> = cfg
        .sweep
        .values
        .iter()
        .flat_map(|&v| cfg.seeds.iter().map(move |&s| (v, s)))
        .collect();
    let rows: Vec<Vec<MetricsRow>> = cells.par_iter().map(|&(v, s)| run_cell(cfg, &sc, v, s)).collect();
    Ok(rows.into_iter().flatten().collect())
}

/// Quantile with linear interpolation between order statistics,
/// `p(k) = (k - 1) / (n - 1)`.
pub fn quantile(sorted: &[f64], q: f64) -> Result<f64> {
    if sorted.is_empty() {
        return Err(Error::Validation("quantile of an empty group".into()));
    }
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = h - lo as f64;
    if frac == 0.0 {
        return Ok(sorted[lo]);
    }
    Ok(sorted[lo] + frac * (sorted[hi] - sorted[lo]))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub scheme: Scheme,
    pub sweep_value: f64,
    pub metric: String,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub count: usize,
}

/// Median and quartiles of every error metric per (scheme, sweep value),
/// over the rows that completed. Groups come out sorted by scheme, then value.
pub fn aggregate(rows: &[MetricsRow]) -> Result<Vec<AggregateRow>> {
    type Getter = fn(&MetricsRow) -> Option<f64>;
    let metrics: [(&str, Getter); 4] = [
        ("eps_error", |r| r.eps_error),
        ("sigma_error", |r| r.sigma_error),
        ("power_error", |r| r.power_error),
        ("power_error_db", |r| r.power_error_db),
    ];
    let mut keys: Vec<(Scheme, f64)> = rows
        .iter()
        .filter(|r| r.error.is_empty())
        .map(|r| (r.scheme, r.sweep_value))
        .collect();
    keys.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    keys.dedup_by(|a, b| a.0 == b.0 && a.1.total_cmp(&b.1).is_eq());
    let mut out = Vec::new();
    for (scheme, value) in keys {
        for (name, get) in metrics {
            let mut v: Vec<f64> = rows
                .iter()
                .filter(|r| r.scheme == scheme && r.sweep_value.total_cmp(&value).is_eq() && r.error.is_empty())
                .filter_map(get)
                .collect();
            v.sort_by(f64::total_cmp);
            out.push(AggregateRow {
                scheme,
                sweep_value: value,
                metric: name.to_string(),
                median: quantile(&v, 0.5)?,
                q1: quantile(&v, 0.25)?,
                q3: quantile(&v, 0.75)?,
                count: v.len(),
            });
        }
    }
    Ok(out)
}

fn csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| Error::Validation(format!("csv buffer: {e}")))
}

pub fn rows_to_csv(rows: &[MetricsRow]) -> Result<Vec<u8>> {
    csv_bytes(rows)
}

pub fn aggregate_to_csv(rows: &[AggregateRow]) -> Result<Vec<u8>> {
    csv_bytes(rows)
}

pub fn write_file(path: impl AsRef<FsPath>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, bytes).map_err(|source| Error::Io { path: path.display().to_string(), source })
}

impl Error {
    fn clone_message(&self, context: &str) -> String {
        format!("{context}: {self}")
    }
}
