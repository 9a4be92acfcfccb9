//! Random instances shared by the integration suites.
#![allow(dead_code)]

use std::path::PathBuf;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rtcal::calibrate::{Problem, ProjectionPolicy, ThetaParam};
use rtcal::channel::{
    space_freq_signature, synthesize_dataset, ArrayGeometry, ChannelDataset, DiscrepancyMode, GMatrix, RadioConfig,
    SynthesisSpec,
};
use rtcal::mathkit::{Angle, Concentration};
use rtcal::raytracer::{DevicePair, MaterialParams, Scene, TraceOptions, Wall, SPEED_OF_LIGHT};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn configs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs")
}

pub fn complex_normal(rng: &mut impl Rng) -> Complex64 {
    let r = (-rng.random::<f64>().max(1e-300).ln()).sqrt();
    Complex64::from_polar(r, std::f64::consts::TAU * rng.random::<f64>())
}

/// Radio with `s` tones and 1-2 element arrays at 6 GHz.
pub fn random_radio(rng: &mut impl Rng, s: usize) -> RadioConfig {
    let fc = 6e9;
    let spacing = 0.5 * SPEED_OF_LIGHT / fc;
    let nrx = rng.random_range(1..=2);
    let ntx = rng.random_range(1..=2);
    RadioConfig::centered(fc, rng.random_range(5e6..20e6), s)
        .unwrap()
        .with_arrays(ArrayGeometry::linear(nrx, spacing), ArrayGeometry::linear(ntx, spacing))
        .unwrap()
}

/// `p` random signatures on `radio` with random complex amplitudes.
pub fn random_g(rng: &mut impl Rng, radio: &RadioConfig, p: usize) -> GMatrix {
    let cols: Vec<Vec<Complex64>> = (0..p)
        .map(|_| {
            let delay = rng.random_range(20e-9..300e-9);
            let aoa = Angle::new(rng.random_range(-3.0..3.0));
            let aod = Angle::new(rng.random_range(-3.0..3.0));
            space_freq_signature(delay, aoa, aod, radio)
        })
        .collect();
    let s = DMatrix::from_fn(radio.len(), p, |i, j| cols[j][i]);
    let alpha = (0..p).map(|_| complex_normal(rng) * rng.random_range(0.2..1.0)).collect();
    GMatrix::from_parts(&s, alpha)
}

pub fn random_concentration(rng: &mut impl Rng) -> Concentration {
    Concentration::new(rng.random_range(0.0..30.0)).unwrap()
}

/// Corridor of two materials: two long walls and a short back wall.
pub fn corridor(materials: [MaterialParams; 2]) -> Scene {
    Scene::new(
        vec![
            Wall { a: [-15.0, 4.0], b: [15.0, 4.0], material: 0 },
            Wall { a: [-15.0, -3.0], b: [15.0, -3.0], material: 1 },
            Wall { a: [14.0, -3.0], b: [14.0, 4.0], material: 0 },
        ],
        vec![("brick".into(), materials[0]), ("glass".into(), materials[1])],
    )
    .unwrap()
}

pub fn random_materials(rng: &mut impl Rng) -> [MaterialParams; 2] {
    let mut m = || MaterialParams { eps: rng.random_range(2.0..9.0), sigma: rng.random_range(0.01..0.5) };
    [m(), m()]
}

pub struct Instance {
    pub scene: Scene,
    pub dataset: ChannelDataset,
    pub problem: Problem,
    pub theta: ThetaParam,
    pub trace: TraceOptions,
}

/// Corridor data with random materials, phase errors and noise; `theta` is a
/// second random material draw at which losses are evaluated.
pub fn random_instance(seed: u64) -> Instance {
    let mut r = rng(seed);
    let truth = corridor(random_materials(&mut r));
    let radio = RadioConfig::centered(6e9, 10e6, r.random_range(8..24)).unwrap();
    let pair = DevicePair::new(
        [r.random_range(-8.0..0.0), r.random_range(-2.0..3.0)],
        [r.random_range(2.0..10.0), r.random_range(-2.0..3.0)],
    )
    .unwrap();
    let trace = TraceOptions { max_bounces: 1, include_los: r.random_bool(0.5) };
    let dataset = synthesize_dataset(&SynthesisSpec {
        scene: &truth,
        materials: truth.materials(),
        pair,
        radio: &radio,
        trace,
        observations: r.random_range(2..6),
        mode: DiscrepancyMode::IidPhase { kappa0: Concentration::new(r.random_range(0.5..10.0)).unwrap() },
        snr_db: r.random_range(5.0..25.0),
        seed,
    })
    .unwrap();
    let problem = Problem::new(&truth, &trace, &dataset, ProjectionPolicy::Paths).unwrap();
    let theta = ThetaParam::encode(&random_materials(&mut r)).unwrap();
    Instance { scene: truth, dataset, problem, theta, trace }
}

/// Central differences of `f` in every coordinate of `u`.
pub fn fd_gradient(f: impl Fn(&ThetaParam) -> f64, theta: &ThetaParam, h: f64) -> Vec<[f64; 2]> {
    let u = theta.u().to_vec();
    let mut out = vec![[0.0; 2]; u.len()];
    for m in 0..u.len() {
        for c in 0..2 {
            let mut up = u.clone();
            let mut dn = u.clone();
            up[m][c] += h;
            dn[m][c] -= h;
            out[m][c] = (f(&ThetaParam::from_u(up)) - f(&ThetaParam::from_u(dn))) / (2.0 * h);
        }
    }
    out
}

/// `||a - b|| / ||b||` over all components.
pub fn rel_err(a: &[[f64; 2]], b: &[[f64; 2]]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2)).sum();
    let norm: f64 = b.iter().map(|y| y[0] * y[0] + y[1] * y[1]).sum();
    (diff / norm).sqrt()
}

/// Root of `kappa = 2 s b(kappa)` by bisection on `[lo, hi]`.
pub fn fixed_point(s: f64, lo: f64, hi: f64) -> f64 {
    let f = |k: f64| k - 2.0 * s * rtcal::mathkit::bessel_ratio(Concentration::new(k).unwrap());
    let (mut a, mut b) = (lo, hi);
    assert!(f(a) <= 0.0 && f(b) >= 0.0, "bracket does not contain the fixed point");
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if f(m) <= 0.0 {
            a = m
        } else {
            b = m
        }
    }
    0.5 * (a + b)
}
