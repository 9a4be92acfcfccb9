use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::ThetaParam;
use crate::channel::{signature_matrix, space_freq_signature, ChannelDataset, RadioConfig};
use crate::error::{Error, Result};
use crate::mathkit::{pairwise_sum, Angle};
use crate::raytracer::{path_amplitudes, DevicePair, PathAmplitudes, PathSet, Scene, TraceOptions};

/// A delay-angle triple onto which CFRs are projected.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub delay: f64,
    pub aoa: Angle,
    pub aod: Angle,
}

/// How the UPEC projection triples are chosen.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum ProjectionPolicy {
    /// One triple per traced path.
    #[default]
    Paths,
    /// `count` delays evenly spread over `[tau_min, tau_max]`, each taking the
    /// angles of the path nearest in delay.
    DelayGrid { count: usize },
}

pub fn select_projections(set: &PathSet, policy: ProjectionPolicy) -> Result<Vec<Projection>> {
    if set.is_empty() {
        return Err(Error::EmptyPathSet);
    }
    let from_path = |p: &crate::raytracer::Path| Projection { delay: p.delay, aoa: p.aoa, aod: p.aod };
    match policy {
        ProjectionPolicy::Paths => Ok(set.paths.iter().map(from_path).collect()),
        ProjectionPolicy::DelayGrid { count } => {
            if count == 0 {
                return Err(Error::Config("delay grid needs at least one point".into()));
            }
            let lo = set.paths.iter().map(|p| p.delay).fold(f64::INFINITY, f64::min);
            let hi = set.paths.iter().map(|p| p.delay).fold(f64::NEG_INFINITY, f64::max);
            Ok((0..count)
                .map(|i| {
                    let delay = if count == 1 { lo } else { lo + (hi - lo) * i as f64 / (count - 1) as f64 };
                    let nearest = set
                        .paths
                        .iter()
                        .min_by(|a, b| (a.delay - delay).abs().total_cmp(&(b.delay - delay).abs()))
                        .expect("non-empty");
                    Projection { delay, ..from_path(nearest) }
                })
                .collect())
        }
    }
}

/// Everything the calibration losses need about one device pair, computed once:
/// the DT path geometry, the signature Gram matrix and its triangular factor,
/// and per-observation projections of the data.
#[derive(Clone, Debug)]
pub struct PairData {
    pub pair: DevicePair,
    pub paths: PathSet,
    /// `L x P` unit-amplitude signatures.
    pub signatures: DMatrix<Complex64>,
    /// `A = S^H S`.
    pub gram: DMatrix<Complex64>,
    /// Upper-triangular `R` with `A = R^H R` (thin QR of `S`).
    r_factor: DMatrix<Complex64>,
    /// Dataset indices of this pair's observations.
    pub observations: Vec<usize>,
    /// `y_n = S^H H_n` per observation.
    pub y: Vec<DVector<Complex64>>,
    /// `||H_n||^2` per observation.
    pub h2: Vec<f64>,
    y_sum: DVector<Complex64>,
    h2_sum: f64,
    pub projections: Vec<Projection>,
    /// `C[m, p] = |b_m^H a_p|^2 / L`.
    coupling: DMatrix<f64>,
    /// `sum_n P_nm` and `sum_n P_nm^2`.
    power_sum: Vec<f64>,
    power_sq_sum: Vec<f64>,
    /// Paths with no bounce (line of sight).
    pub los: Vec<bool>,
}

impl PairData {
    pub fn paths_len(&self) -> usize {
        self.signatures.ncols()
    }

    /// Solves `A x = v` with the cached factor.
    pub fn solve_gram(&self, v: &DVector<Complex64>) -> Option<DVector<Complex64>> {
        let z = self.r_factor.adjoint().solve_lower_triangular(v)?;
        self.r_factor.solve_upper_triangular(&z)
    }

    /// Singular values of `G = S diag(alpha)` via `R diag(alpha)`, largest first.
    pub fn g_singular_values(&self, alpha: &[Complex64]) -> Vec<f64> {
        let mut m = self.r_factor.clone();
        for (p, a) in alpha.iter().enumerate() {
            for v in m.column_mut(p).iter_mut() {
                *v *= a;
            }
        }
        let mut s: Vec<f64> = m.svd(false, false).singular_values.iter().copied().collect();
        s.sort_by(|a, b| b.total_cmp(a));
        s
    }
}

/// `||S x - H_n||^2 = h2 - 2 Re(x^H y) + x^H A x`, clamped at zero.
pub(crate) fn residual(gram: &DMatrix<Complex64>, y: &DVector<Complex64>, h2: f64, x: &DVector<Complex64>) -> f64 {
    let quad = x.dotc(&(gram * x)).re;
    (h2 - 2.0 * x.dotc(y).re + quad).max(0.0)
}

/// Calibration data prepared against a DT scene.
#[derive(Clone, Debug)]
pub struct Problem {
    pub radio: RadioConfig,
    pub noise_power: f64,
    pub materials: usize,
    pub pairs: Vec<PairData>,
    /// `(pair index, position within the pair)` for every dataset observation.
    pub index: Vec<(usize, usize)>,
}

impl Problem {
    pub fn new(
        dt_scene: &Scene,
        trace: &TraceOptions,
        dataset: &ChannelDataset,
        policy: ProjectionPolicy,
    ) -> Result<Self> {
        dataset.validate()?;
        if dataset.is_empty() {
            return Err(Error::Validation("dataset has no observations".into()));
        }
        let radio = &dataset.radio;
        let l = radio.len() as f64;
        let mut groups: Vec<(DevicePair, Vec<usize>)> = Vec::new();
        let mut index = Vec::with_capacity(dataset.len());
        for (n, obs) in dataset.observations.iter().enumerate() {
            let g = match groups.iter().position(|(p, _)| *p == obs.pair) {
                Some(g) => g,
                None => {
                    groups.push((obs.pair, Vec::new()));
                    groups.len() - 1
                }
            };
            index.push((g, groups[g].1.len()));
            groups[g].1.push(n);
        }

        let mut pairs = Vec::with_capacity(groups.len());
        for (pair, observations) in groups {
            let paths = crate::raytracer::trace_paths(dt_scene, pair, trace, radio.carrier_hz())?;
            if paths.is_empty() {
                return Err(Error::EmptyPathSet.context(format!("DT trace for pair {pair:?}")));
            }
            let s = signature_matrix(&paths, radio);
            let gram = s.adjoint() * &s;
            let r_factor = s.clone().qr().r();
            let mut y = Vec::with_capacity(observations.len());
            let mut h2 = Vec::with_capacity(observations.len());
            for &n in &observations {
                let h = DVector::from_column_slice(&dataset.observations[n].h);
                y.push(s.adjoint() * &h);
                h2.push(h.norm_squared());
            }
            let mut y_sum = DVector::zeros(paths.len());
            for v in &y {
                y_sum += v;
            }
            let h2_sum = pairwise_sum(&h2);

            let projections = select_projections(&paths, policy)?;
            let mut coupling = DMatrix::zeros(projections.len(), paths.len());
            let mut power_sum = Vec::with_capacity(projections.len());
            let mut power_sq_sum = Vec::with_capacity(projections.len());
            for (m, pr) in projections.iter().enumerate() {
                let b = DVector::from_vec(space_freq_signature(pr.delay, pr.aoa, pr.aod, radio));
                let bs = s.adjoint() * &b;
                for p in 0..paths.len() {
                    coupling[(m, p)] = bs[p].norm_sqr() / l;
                }
                let measured: Vec<f64> = observations
                    .iter()
                    .map(|&n| {
                        let h = DVector::from_column_slice(&dataset.observations[n].h);
                        b.dotc(&h).norm_sqr() / l
                    })
                    .collect();
                power_sum.push(pairwise_sum(&measured));
                power_sq_sum.push(pairwise_sum(&measured.iter().map(|v| v * v).collect::<Vec<_>>()));
            }
            let los = paths.paths.iter().map(|p| p.bounces() == 0).collect();
            pairs.push(PairData {
                pair,
                paths,
                signatures: s,
                gram,
                r_factor,
                observations,
                y,
                h2,
                y_sum,
                h2_sum,
                projections,
                coupling,
                power_sum,
                power_sq_sum,
                los,
            });
        }
        Ok(Problem {
            radio: radio.clone(),
            noise_power: dataset.noise_power,
            materials: dt_scene.materials().len(),
            pairs,
            index,
        })
    }

    pub fn observations(&self) -> usize {
        self.index.len()
    }

    pub fn amplitudes(&self, theta: &ThetaParam) -> Result<Vec<PathAmplitudes>> {
        if theta.len() != self.materials {
            return Err(Error::Validation(format!(
                "theta has {} materials, scene has {}",
                theta.len(),
                self.materials
            )));
        }
        let mats = theta.decode();
        self.pairs
            .iter()
            .map(|pd| path_amplitudes(&pd.paths, &mats, self.radio.carrier_hz()))
            .collect()
    }

    /// `sum_n ||H_n||^2`.
    pub fn data_energy(&self) -> f64 {
        pairwise_sum(&self.pairs.iter().map(|pd| pd.h2_sum).collect::<Vec<_>>())
    }

    /// `sum_n sum_m P_nm^2`.
    pub fn profile_energy(&self) -> f64 {
        pairwise_sum(&self.pairs.iter().map(|pd| pairwise_sum(&pd.power_sq_sum)).collect::<Vec<_>>())
    }

    /// PEOC loss `sum_n ||H_n - G(c_n, theta) 1||^2` and its gradient in `u`.
    pub fn peoc_loss_grad(&self, theta: &ThetaParam) -> Result<(f64, Vec<[f64; 2]>)> {
        let amps = self.amplitudes(theta)?;
        let mut losses = Vec::with_capacity(self.pairs.len());
        let mut grad = vec![[0.0; 2]; self.materials];
        for (pd, amp) in self.pairs.iter().zip(&amps) {
            let alpha = DVector::from_column_slice(&amp.alpha);
            let count = pd.observations.len() as f64;
            let a_alpha = &pd.gram * &alpha;
            let quad = alpha.dotc(&a_alpha).re;
            losses.push((pd.h2_sum - 2.0 * alpha.dotc(&pd.y_sum).re + count * quad).max(0.0));
            // d/d conj(alpha) = N A alpha - sum_n y_n
            let g: Vec<Complex64> = (a_alpha * Complex64::new(count, 0.0) - &pd.y_sum).iter().copied().collect();
            accumulate(&mut grad, &g, amp);
        }
        Ok((pairwise_sum(&losses), theta.chain(grad)))
    }

    /// UPEC loss `sum_n sum_m (P_nm - P^_m(theta))^2` and its gradient in `u`.
    pub fn upec_loss_grad(&self, theta: &ThetaParam) -> Result<(f64, Vec<[f64; 2]>)> {
        let amps = self.amplitudes(theta)?;
        let mut losses = Vec::with_capacity(self.pairs.len());
        let mut grad = vec![[0.0; 2]; self.materials];
        for (pd, amp) in self.pairs.iter().zip(&amps) {
            let count = pd.observations.len() as f64;
            let pw: Vec<f64> = amp.alpha.iter().map(|a| a.norm_sqr()).collect();
            let mut weights = vec![0.0; pd.paths_len()];
            let mut terms = Vec::with_capacity(pd.projections.len());
            for m in 0..pd.projections.len() {
                let model: f64 = (0..pd.paths_len()).map(|p| pd.coupling[(m, p)] * pw[p]).sum();
                terms.push(pd.power_sq_sum[m] - 2.0 * model * pd.power_sum[m] + count * model * model);
                let dmodel = 2.0 * (count * model - pd.power_sum[m]);
                for (p, w) in weights.iter_mut().enumerate() {
                    *w += dmodel * pd.coupling[(m, p)];
                }
            }
            losses.push(pairwise_sum(&terms).max(0.0));
            // d|alpha_p|^2 = 2 Re(conj(alpha_p) d alpha_p)
            let g: Vec<Complex64> = amp.alpha.iter().zip(&weights).map(|(a, w)| a * *w).collect();
            accumulate(&mut grad, &g, amp);
        }
        Ok((pairwise_sum(&losses), theta.chain(grad)))
    }
}

/// Adds `2 Re(conj(g_p) d alpha_p / d theta)` for every path, where `g` is the
/// Wirtinger derivative of a real loss with respect to `conj(alpha)`.
pub(crate) fn accumulate(grad: &mut [[f64; 2]], g: &[Complex64], amp: &PathAmplitudes) {
    for (p, gp) in g.iter().enumerate() {
        for (m, gm) in grad.iter_mut().enumerate() {
            gm[0] += 2.0 * (gp.conj() * amp.d_eps[p][m]).re;
            gm[1] += 2.0 * (gp.conj() * amp.d_sigma[p][m]).re;
        }
    }
}
