mod common;

use num_complex::Complex64;
use proptest::prelude::*;

use common::configs_dir;
use rtcal::calibrate::Scheme;
use rtcal::harness::{aggregate, compute_metrics, rows_to_csv, run_experiment, ExperimentConfig, MetricsRow, SweepAxis};
use rtcal::raytracer::{trace_paths, DevicePair, MaterialParams, PathSet, Scene, TraceOptions};
use rtcal::Error;

const CONCRETE: MaterialParams = MaterialParams { eps: 5.31, sigma: 0.139 };

fn toy_paths() -> PathSet {
    let scene = Scene::load(configs_dir().join("toy_truth.json")).unwrap();
    let pair = DevicePair::new([12.0, 0.0], [-12.0, 0.0]).unwrap();
    trace_paths(&scene, pair, &TraceOptions { max_bounces: 1, include_los: false }, 5.996e9).unwrap()
}

fn scaled(set: &PathSet, power: f64) -> PathSet {
    let mut out = set.clone();
    let c = (power / set.power()).sqrt();
    for p in &mut out.paths {
        p.amplitude *= Complex64::new(c, 0.0);
    }
    out
}

fn small_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::load(configs_dir().join("toy_fig5.json")).unwrap();
    cfg.optim.max_outer_iters = 3;
    cfg.observations = 5;
    cfg
}

#[test]
fn identical_estimate_has_zero_errors() {
    let set = toy_paths();
    let m = compute_metrics(CONCRETE, CONCRETE, &set, &set).unwrap();
    assert_eq!((m.eps_error, m.sigma_error, m.power_error), (0.0, 0.0, 0.0));
    assert_eq!(m.power_error_db, f64::NEG_INFINITY);
}

#[test]
fn doubled_power_is_zero_db() {
    let set = toy_paths();
    let m = compute_metrics(CONCRETE, CONCRETE, &scaled(&set, 2.0), &scaled(&set, 1.0)).unwrap();
    assert!((m.power_error - 1.0).abs() < 1e-12);
    assert!(m.power_error_db.abs() < 1e-10);
}

#[test]
fn permittivity_error_example() {
    let set = toy_paths();
    let m = compute_metrics(MaterialParams { eps: 3.0, sigma: 0.139 }, CONCRETE, &set, &set).unwrap();
    assert!((m.eps_error - (5.31 - 3.0) / 5.31).abs() < 1e-15);
    assert!((m.eps_error - 0.435).abs() < 1e-3);
}

#[test]
fn zero_true_power_is_an_error() {
    let set = toy_paths();
    let mut dead = set.clone();
    for p in &mut dead.paths {
        p.amplitude = Complex64::default();
    }
    assert!(compute_metrics(CONCRETE, CONCRETE, &set, &dead).is_err());
    let empty = PathSet { paths: Vec::new(), ..set.clone() };
    assert!(matches!(compute_metrics(CONCRETE, CONCRETE, &set, &empty), Err(Error::EmptyPathSet)));
}

#[test]
fn power_error_ignores_common_scaling() {
    let set = toy_paths();
    let (a, b) = (scaled(&set, 1.7), scaled(&set, 1.0));
    let m1 = compute_metrics(CONCRETE, CONCRETE, &a, &b).unwrap();
    let m2 = compute_metrics(CONCRETE, CONCRETE, &scaled(&a, 1.7 * 37.0), &scaled(&b, 37.0)).unwrap();
    assert!((m1.power_error - m2.power_error).abs() < 1e-12);
}

#[test]
fn single_cell_gives_one_row() {
    let mut cfg = small_config();
    cfg.sweep.values = vec![1e8];
    cfg.seeds = vec![0];
    cfg.schemes = vec![Scheme::Peoc];
    let rows = run_experiment(&cfg).unwrap();
    assert_eq!(rows.len(), 1);
    assert!(rows[0].error.is_empty());
    assert!(rows[0].power_error.unwrap() >= 0.0);
}

#[test]
fn full_grid_cardinality_and_order() {
    let mut cfg = small_config();
    cfg.sweep.values = vec![1e6, 1e7, 1e8, 5e8];
    let rows = run_experiment(&cfg).unwrap();
    assert_eq!(rows.len(), 10 * 3 * 4);
    let mut i = 0;
    for &v in &cfg.sweep.values {
        for &s in &cfg.seeds {
            for &scheme in &cfg.schemes {
                assert_eq!((rows[i].sweep_value, rows[i].seed, rows[i].scheme), (v, s, scheme));
                i += 1;
            }
        }
    }
}

#[test]
fn csv_has_header_and_one_line_per_row() {
    let mut cfg = small_config();
    cfg.sweep.values = vec![1e8];
    cfg.seeds = vec![0, 1];
    let rows = run_experiment(&cfg).unwrap();
    let text = String::from_utf8(rows_to_csv(&rows).unwrap()).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 1 + rows.len());
    assert!(lines[0].starts_with("scheme,sweep_value,seed,eps_hat"));
}

#[test]
fn failures_land_in_the_error_column() {
    let mut cfg = small_config();
    cfg.sweep.values = vec![1e8];
    cfg.seeds = vec![4];
    cfg.schemes = vec![Scheme::Peac];
    cfg.snr_db = f64::INFINITY;
    let rows = run_experiment(&cfg).unwrap();
    assert_eq!(rows.len(), 1);
    assert!(rows[0].eps_hat.is_none());
    for part in ["bandwidth = 100000000", "seed 4", "scheme peac"] {
        assert!(rows[0].error.contains(part), "{}", rows[0].error);
    }
}

#[test]
fn config_validation() {
    let base = small_config();
    let mut c = base.clone();
    c.seeds = vec![1, 1];
    assert!(matches!(c.validate(), Err(Error::Config(_))));
    let mut c = base.clone();
    c.sweep.values.clear();
    assert!(matches!(c.validate(), Err(Error::Config(_))));
    let mut c = base.clone();
    c.sweep.axis = SweepAxis::Displacement;
    c.sweep.values = vec![0.7];
    assert!(c.validate().is_err());
    let mut c = base;
    c.sweep.values = vec![1.0];
    assert!(matches!(c.validate(), Err(Error::Config(_))));
    assert!(ExperimentConfig::load(configs_dir().join("missing.json")).is_err());
}

#[test]
fn bundled_configs_load() {
    for name in ["toy_fig5.json", "toy_snr.json"] {
        let cfg = ExperimentConfig::load(configs_dir().join(name)).unwrap();
        cfg.load_scenes().unwrap();
    }
}

fn row(scheme: Scheme, value: f64, seed: u64, err: f64) -> MetricsRow {
    MetricsRow {
        scheme,
        sweep_value: value,
        seed,
        eps_hat: Some(3.0),
        sigma_hat: Some(0.1),
        eps_error: Some(err),
        sigma_error: Some(err),
        power_error: Some(err),
        power_error_db: Some(10.0 * err.log10()),
        kappa0_hat: None,
        iterations: Some(1),
        error: String::new(),
    }
}

#[test]
fn quartiles_of_one_to_ten() {
    let rows: Vec<MetricsRow> = (1..=10).map(|i| row(Scheme::Upec, 1.0, i, i as f64)).collect();
    let agg = aggregate(&rows).unwrap();
    let eps = agg.iter().find(|a| a.metric == "eps_error").unwrap();
    assert_eq!((eps.median, eps.q1, eps.q3, eps.count), (5.5, 3.25, 7.75, 10));
}

#[test]
fn single_and_constant_groups() {
    let agg = aggregate(&[row(Scheme::Peoc, 2.0, 0, 0.3)]).unwrap();
    assert!(agg.iter().all(|a| a.median == a.q1 && a.q1 == a.q3));
    let rows: Vec<MetricsRow> = (0..5).map(|i| row(Scheme::Peac, 2.0, i, 0.25)).collect();
    assert!(aggregate(&rows).unwrap().iter().all(|a| a.q3 - a.q1 == 0.0));
}

proptest! {
    #[test]
    fn aggregation_is_permutation_invariant(
        errs in prop::collection::vec(1e-6f64..10.0, 1..30),
        perm in any::<prop::sample::Index>(),
    ) {
        let rows: Vec<MetricsRow> = errs
            .iter()
            .enumerate()
            .map(|(i, &e)| row(Scheme::ALL[i % 3], (i % 2) as f64, i as u64, e))
            .collect();
        let mut shuffled = rows.clone();
        // deterministic shuffle driven by the sampled index
        let n = shuffled.len();
        let mut k = perm.index(n.max(1));
        for i in (1..n).rev() {
            k = (k * 31 + 7) % (i + 1);
            shuffled.swap(i, k);
        }
        prop_assert_eq!(aggregate(&rows).unwrap(), aggregate(&shuffled).unwrap());
    }
}
