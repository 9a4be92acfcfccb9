use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::{ArrayGeometry, RadioConfig};
use crate::error::{Error, Result};
use crate::mathkit::Angle;
use crate::raytracer::{path_amplitudes, MaterialParams, PathSet, SPEED_OF_LIGHT};

/// Far-field steering vector, entry `n = exp(j 2 pi f_c / v * d_n . u(angle))`.
pub fn steering_vector(angle: Angle, array: &ArrayGeometry, carrier_hz: f64) -> Vec<Complex64> {
    let u = angle.direction();
    let k = 2.0 * PI * carrier_hz / SPEED_OF_LIGHT;
    array
        .offsets
        .iter()
        .map(|d| Complex64::from_polar(1.0, k * (d[0] * u[0] + d[1] * u[1])))
        .collect()
}

/// `a(tau, aoa, aod) = w(tau) ⊗ a_rx(aoa) ⊗ conj(a_tx(aod))`.
pub fn space_freq_signature(delay: f64, aoa: Angle, aod: Angle, radio: &RadioConfig) -> Vec<Complex64> {
    let fc = radio.carrier_hz();
    let a_rx = steering_vector(aoa, &radio.rx_array, fc);
    let a_tx = steering_vector(aod, &radio.tx_array, fc);
    let mut out = Vec::with_capacity(radio.len());
    for s in 0..radio.subcarriers {
        let w = Complex64::from_polar(1.0, -2.0 * PI * radio.frequency(s) * delay);
        for r in &a_rx {
            let wr = w * r;
            for t in &a_tx {
                out.push(wr * t.conj());
            }
        }
    }
    out
}

/// `L x P` matrix of unit-amplitude path signatures.
pub fn signature_matrix(set: &PathSet, radio: &RadioConfig) -> DMatrix<Complex64> {
    let l = radio.len();
    let mut m = DMatrix::zeros(l, set.len());
    for (p, path) in set.paths.iter().enumerate() {
        let a = space_freq_signature(path.delay, path.aoa, path.aod, radio);
        m.column_mut(p).copy_from_slice(&a);
    }
    m
}

/// `G = [a_1 ... a_P] diag(alpha)` together with `alpha`.
#[derive(Clone, Debug, PartialEq)]
pub struct GMatrix {
    pub matrix: DMatrix<Complex64>,
    pub alpha: Vec<Complex64>,
}

impl GMatrix {
    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn paths(&self) -> usize {
        self.matrix.ncols()
    }

    /// Builds `G` from signatures and amplitudes.
    pub fn from_parts(signatures: &DMatrix<Complex64>, alpha: Vec<Complex64>) -> Self {
        let mut matrix = signatures.clone();
        for (p, a) in alpha.iter().enumerate() {
            for v in matrix.column_mut(p).iter_mut() {
                *v *= a;
            }
        }
        GMatrix { matrix, alpha }
    }

    /// `G v` for a length-`P` vector.
    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::default(); self.rows()];
        for (p, x) in v.iter().enumerate() {
            for (o, g) in out.iter_mut().zip(self.matrix.column(p).iter()) {
                *o += g * x;
            }
        }
        out
    }

    /// Singular values, largest first.
    pub fn singular_values(&self) -> Vec<f64> {
        let mut s: Vec<f64> = self.matrix.clone().svd(false, false).singular_values.iter().copied().collect();
        s.sort_by(|a, b| b.total_cmp(a));
        s
    }
}

/// `G(c, theta)` for the traced geometry and the given materials.
pub fn g_matrix(set: &PathSet, materials: &[MaterialParams], radio: &RadioConfig) -> Result<GMatrix> {
    if set.is_empty() {
        return Err(Error::EmptyPathSet);
    }
    let alpha = path_amplitudes(set, materials, radio.carrier_hz())?.alpha;
    Ok(GMatrix::from_parts(&signature_matrix(set, radio), alpha))
}

/// Deterministic CFR `G 1`.
pub fn deterministic_cfr(g: &GMatrix) -> Vec<Complex64> {
    g.apply(&vec![Complex64::new(1.0, 0.0); g.paths()])
}

/// Phase-error CFR `G exp(jZ)`.
pub fn phase_error_cfr(g: &GMatrix, phases: &[f64]) -> Vec<Complex64> {
    let phasors: Vec<Complex64> = phases.iter().map(|&z| Complex64::from_polar(1.0, z)).collect();
    g.apply(&phasors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raytracer::{trace_paths, DevicePair, Scene, TraceOptions, Wall};

    fn half_wave_pair(fc: f64) -> ArrayGeometry {
        ArrayGeometry::linear(2, SPEED_OF_LIGHT / fc / 2.0)
    }

    #[test]
    fn steering_examples() {
        let fc = 6e9;
        assert_eq!(steering_vector(Angle::new(1.2), &ArrayGeometry::single(), fc), vec![Complex64::new(1.0, 0.0)]);
        let broadside = steering_vector(Angle::new(0.0), &half_wave_pair(fc), fc);
        assert!((broadside[1] - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        let endfire = steering_vector(Angle::new(std::f64::consts::FRAC_PI_2), &half_wave_pair(fc), fc);
        assert!((endfire[1] - Complex64::new(-1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn siso_signature() {
        let radio = RadioConfig::centered(6e9, 30e3, 2).unwrap();
        let tau = 87e-9;
        let a = space_freq_signature(tau, Angle::new(0.3), Angle::new(-2.0), &radio);
        for (s, v) in a.iter().enumerate() {
            let want = Complex64::from_polar(1.0, -2.0 * PI * radio.frequency(s) * tau);
            assert!((v - want).norm() < 1e-12);
        }
    }

    #[test]
    fn kronecker_ordering_brute_force() {
        let fc = 6e9;
        let radio = RadioConfig::centered(fc, 1e6, 3)
            .unwrap()
            .with_arrays(half_wave_pair(fc), ArrayGeometry::linear(2, 0.013))
            .unwrap();
        let (tau, aoa, aod) = (42e-9, Angle::new(0.7), Angle::new(-1.1));
        let a = space_freq_signature(tau, aoa, aod, &radio);
        assert_eq!(a.len(), 12);
        let rx = steering_vector(aoa, &radio.rx_array, fc);
        let tx = steering_vector(aod, &radio.tx_array, fc);
        for s in 0..3 {
            for r in 0..2 {
                for t in 0..2 {
                    let w = Complex64::from_polar(1.0, -2.0 * PI * radio.frequency(s) * tau);
                    let want = w * rx[r] * tx[t].conj();
                    assert!((a[(s * 2 + r) * 2 + t] - want).norm() < 1e-13);
                }
            }
        }
        let norm2: f64 = a.iter().map(|v| v.norm_sqr()).sum();
        assert!((norm2 - 12.0).abs() < 1e-12);
    }

    fn toy_set(radio: &RadioConfig) -> (Scene, PathSet) {
        let lam = 0.05;
        let m = vec![("concrete".to_string(), MaterialParams { eps: 5.31, sigma: 0.139 })];
        let walls = vec![
            Wall { a: [-20.0, 100.0 * lam], b: [20.0, 100.0 * lam], material: 0 },
            Wall { a: [-20.0, -180.0 * lam], b: [20.0, -180.0 * lam], material: 0 },
        ];
        let scene = Scene::new(walls, m).unwrap();
        let pair = DevicePair::new([240.0 * lam, 0.0], [-240.0 * lam, 0.0]).unwrap();
        let set = trace_paths(
            &scene,
            pair,
            &TraceOptions { max_bounces: 1, include_los: false },
            radio.carrier_hz(),
        )
        .unwrap();
        (scene, set)
    }

    #[test]
    fn g_matrix_columns_and_rank() {
        let radio = RadioConfig::centered(SPEED_OF_LIGHT / 0.05, 30e3, 3333).unwrap();
        let (scene, set) = toy_set(&radio);
        let g = g_matrix(&set, scene.materials(), &radio).unwrap();
        let l = radio.len() as f64;
        let gram = g.matrix.adjoint() * &g.matrix;
        for p in 0..2 {
            assert!((gram[(p, p)].re - l * g.alpha[p].norm_sqr()).abs() < 1e-9 * l * g.alpha[p].norm_sqr());
        }
        let sv = g.singular_values();
        assert!(sv[1] / sv[0] > 1e-6);
    }

    #[test]
    fn constructive_at_centre() {
        let radio = RadioConfig::centered(SPEED_OF_LIGHT / 0.05, 30e3, 1).unwrap();
        let (scene, set) = toy_set(&radio);
        let g = g_matrix(&set, scene.materials(), &radio).unwrap();
        let h = deterministic_cfr(&g);
        let sum = g.alpha[0].norm() + g.alpha[1].norm();
        // the only misalignment left is the Fresnel phase difference between bounces
        assert!(h[0].norm() > 0.999 * sum);
        assert!(h[0].norm() <= sum * (1.0 + 1e-12));
    }

    #[test]
    fn cfr_is_column_sum() {
        let radio = RadioConfig::centered(6e9, 30e3, 7).unwrap();
        let (scene, set) = toy_set(&radio);
        let g = g_matrix(&set, scene.materials(), &radio).unwrap();
        let h = deterministic_cfr(&g);
        assert_eq!(h, phase_error_cfr(&g, &[0.0, 0.0]));
        for i in 0..radio.len() {
            let s = g.matrix[(i, 0)] + g.matrix[(i, 1)];
            assert!((h[i] - s).norm() < 1e-18);
        }
    }

    #[test]
    fn single_path_cfr() {
        let radio = RadioConfig::centered(6e9, 30e3, 1).unwrap();
        let (scene, mut set) = toy_set(&radio);
        set.paths.truncate(1);
        let g = g_matrix(&set, scene.materials(), &radio).unwrap();
        let h = deterministic_cfr(&g);
        let want = g.alpha[0] * Complex64::from_polar(1.0, -2.0 * PI * radio.frequency(0) * set.paths[0].delay);
        assert!((h[0] - want).norm() < 1e-15);
    }

    #[test]
    fn empty_pathset_errors() {
        let radio = RadioConfig::centered(6e9, 30e3, 1).unwrap();
        let (scene, mut set) = toy_set(&radio);
        set.paths.clear();
        assert!(matches!(g_matrix(&set, scene.materials(), &radio), Err(Error::EmptyPathSet)));
    }
}
