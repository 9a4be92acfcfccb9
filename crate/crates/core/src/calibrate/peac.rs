use nalgebra::DVector;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::problem::{accumulate, residual, PairData, Problem};
use super::ThetaParam;
use crate::channel::GMatrix;
use crate::error::{Error, Result};
use crate::mathkit::{
    bessel_ratio, bessel_ratio_inv, log_bessel_i0, mean_resultant, pairwise_sum, wrap_angle, Concentration,
};
use crate::raytracer::PathAmplitudes;

/// Singular-value ratio below which `G` is treated as rank deficient.
pub const RANK_TOL: f64 = 1e-9;

/// Variational phase-error posteriors `VM(mu_np, kappa_np)` for every
/// observation, plus the shared prior concentration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariationalState {
    pub mu: Vec<Vec<f64>>,
    pub kappa: Vec<Vec<Concentration>>,
    pub kappa0: Concentration,
    /// Paths whose phase error is fixed to zero (excluded from the prior).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pinned: Vec<Vec<bool>>,
}

impl VariationalState {
    fn is_pinned(&self, n: usize, p: usize) -> bool {
        self.pinned.get(n).and_then(|v| v.get(p)).copied().unwrap_or(false)
    }
}

/// Lower bound on the fixed point of `kappa = 2 s b(kappa)` with per-path SNR
/// `s = L |alpha|^2 / sigma^2`: `2 sqrt(s - 1) sqrt(s)` above `s = 1`, else 0.
pub fn posterior_concentration(snr: f64) -> Concentration {
    if snr > 1.0 {
        Concentration::saturating(2.0 * (snr - 1.0).sqrt() * snr.sqrt()).unwrap_or(Concentration::CAP)
    } else {
        Concentration::ZERO
    }
}

fn check_noise(noise_power: f64) -> Result<()> {
    if !(noise_power > 0.0) || !noise_power.is_finite() {
        return Err(Error::Validation(format!(
            "phase-error-aware calibration needs a positive noise power, got {noise_power}"
        )));
    }
    Ok(())
}

fn check_rank(singular_values: &[f64], observation: usize, paths: usize) -> Result<()> {
    let ratio = if singular_values.len() < paths || singular_values[0] == 0.0 {
        0.0
    } else {
        singular_values[paths - 1] / singular_values[0]
    };
    if !(ratio > RANK_TOL) {
        return Err(Error::RankDeficient { observation, ratio, tolerance: RANK_TOL });
    }
    Ok(())
}

/// Prior and entropy part of the free energy for one observation:
/// `sum_p ln I0(k0) - ln I0(k_p) + b_p (k_p - k0 cos mu_p)`.
fn prior_terms(mu: &[f64], kappa: &[Concentration], kappa0: Concentration, pinned: impl Fn(usize) -> bool) -> f64 {
    let l0 = log_bessel_i0(kappa0);
    let k0 = kappa0.value();
    let terms: Vec<f64> = (0..mu.len())
        .filter(|&p| !pinned(p))
        .map(|p| {
            let k = kappa[p];
            l0 - log_bessel_i0(k) + mean_resultant(k) * (k.value() - k0 * mu[p].cos())
        })
        .collect();
    pairwise_sum(&terms)
}

/// Free energy `F_n` of one observation, evaluated on the full length-`L`
/// vectors:
///
/// `prior + L ln(pi s2) + (||G diag(B) e^{j mu} - H||^2 + L sum |alpha|^2 (1 - b^2)) / s2`.
pub fn free_energy(
    mu: &[f64],
    kappa: &[Concentration],
    g: &GMatrix,
    kappa0: Concentration,
    h: &[Complex64],
    noise_power: f64,
) -> Result<f64> {
    check_noise(noise_power)?;
    let p = g.paths();
    if mu.len() != p || kappa.len() != p || h.len() != g.rows() {
        return Err(Error::Validation("free energy: dimension mismatch".into()));
    }
    let l = g.rows() as f64;
    let b: Vec<f64> = kappa.iter().map(|&k| mean_resultant(k)).collect();
    let mean: Vec<Complex64> = mu.iter().zip(&b).map(|(&m, &bb)| Complex64::from_polar(bb, m)).collect();
    let pred = g.apply(&mean);
    let res: f64 = pred.iter().zip(h).map(|(a, b)| (a - b).norm_sqr()).sum();
    let diffuse: f64 = g.alpha.iter().zip(&b).map(|(a, bb)| a.norm_sqr() * (1.0 - bb * bb)).sum();
    Ok(prior_terms(mu, kappa, kappa0, |_| false)
        + l * (std::f64::consts::PI * noise_power).ln()
        + (res + l * diffuse) / noise_power)
}

/// E-step for one observation on the full vectors: `mu` is the angle of
/// `(G^H G)^{-1} (s2 k0 / 2 * 1 + G^H H)` and `kappa` follows the per-path SNR.
pub fn e_step(
    g: &GMatrix,
    h: &[Complex64],
    kappa0: Concentration,
    noise_power: f64,
    observation: usize,
) -> Result<(Vec<f64>, Vec<Concentration>)> {
    check_noise(noise_power)?;
    let p = g.paths();
    check_rank(&g.singular_values(), observation, p)?;
    let gm = &g.matrix;
    let gram = gm.adjoint() * gm;
    let rhs = gm.adjoint() * DVector::from_column_slice(h)
        + DVector::from_element(p, Complex64::new(noise_power * kappa0.value() / 2.0, 0.0));
    let chol = gram
        .cholesky()
        .ok_or(Error::RankDeficient { observation, ratio: 0.0, tolerance: RANK_TOL })?;
    let x = chol.solve(&rhs);
    let l = g.rows() as f64;
    let mu = x.iter().map(|v| wrap_angle(v.arg())).collect();
    let kappa = g
        .alpha
        .iter()
        .map(|a| posterior_concentration(l * a.norm_sqr() / noise_power))
        .collect();
    Ok((mu, kappa))
}

/// Closed-form prior update: `b^{-1}` of the mean of `b(kappa) cos(mu)` over
/// all non-pinned paths, or 0 when that mean is not positive.
pub fn m_step_kappa0(state: &VariationalState) -> Result<Concentration> {
    let mut terms = Vec::new();
    for (n, (mu, kappa)) in state.mu.iter().zip(&state.kappa).enumerate() {
        for p in 0..mu.len() {
            if !state.is_pinned(n, p) {
                terms.push(mean_resultant(kappa[p]) * mu[p].cos());
            }
        }
    }
    if terms.is_empty() {
        return Ok(state.kappa0);
    }
    let r = pairwise_sum(&terms) / terms.len() as f64;
    if r <= 0.0 {
        Ok(Concentration::ZERO)
    } else if r >= bessel_ratio(Concentration::CAP) {
        Ok(Concentration::CAP)
    } else {
        bessel_ratio_inv(r)
    }
}

/// `d(sum_n F_n) / d kappa0 = sum_p b(kappa0) - b(kappa_p) cos(mu_p)`.
pub fn free_energy_kappa0_derivative(state: &VariationalState) -> f64 {
    let b0 = bessel_ratio(state.kappa0);
    let mut terms = Vec::new();
    for (n, (mu, kappa)) in state.mu.iter().zip(&state.kappa).enumerate() {
        for p in 0..mu.len() {
            if !state.is_pinned(n, p) {
                terms.push(b0 - mean_resultant(kappa[p]) * mu[p].cos());
            }
        }
    }
    pairwise_sum(&terms)
}

/// Residual, diffuse and Wirtinger gradient for one observation in the
/// projected (`P`-dimensional) form.
fn observation_energy(
    pd: &PairData,
    k: usize,
    alpha: &[Complex64],
    mu: &[f64],
    kappa: &[Concentration],
    l: f64,
    noise_power: f64,
    want_grad: bool,
) -> (f64, Option<Vec<Complex64>>) {
    let b: Vec<f64> = kappa.iter().map(|&kk| mean_resultant(kk)).collect();
    let c: Vec<Complex64> = mu.iter().zip(&b).map(|(&m, &bb)| Complex64::from_polar(bb, m)).collect();
    let x = DVector::from_iterator(alpha.len(), alpha.iter().zip(&c).map(|(a, cc)| a * cc));
    let res = residual(&pd.gram, &pd.y[k], pd.h2[k], &x);
    let diffuse: f64 = alpha.iter().zip(&b).map(|(a, bb)| a.norm_sqr() * (1.0 - bb * bb)).sum();
    let value = (res + l * diffuse) / noise_power;
    let grad = want_grad.then(|| {
        let r = &pd.gram * &x - &pd.y[k];
        (0..alpha.len())
            .map(|p| (c[p].conj() * r[p] + alpha[p] * (l * (1.0 - b[p] * b[p]))) / noise_power)
            .collect()
    });
    (value, grad)
}

fn pinned_mask(pd: &PairData, los_override: bool) -> Vec<bool> {
    if los_override {
        pd.los.clone()
    } else {
        vec![false; pd.paths_len()]
    }
}

impl Problem {
    /// E-step over all observations using the cached Gram factorization.
    pub fn e_step_all(&self, theta: &ThetaParam, kappa0: Concentration, los_override: bool) -> Result<VariationalState> {
        check_noise(self.noise_power)?;
        let amps = self.amplitudes(theta)?;
        let l = self.radio.len() as f64;
        for (pd, amp) in self.pairs.iter().zip(&amps) {
            check_rank(&pd.g_singular_values(&amp.alpha), pd.observations[0], pd.paths_len())?;
        }
        let shift = self.noise_power * kappa0.value() / 2.0;
        let per_obs: Vec<(Vec<f64>, Vec<Concentration>, Vec<bool>)> = self
            .index
            .par_iter()
            .enumerate()
            .map(|(n, &(g, k))| {
                let pd = &self.pairs[g];
                let alpha = &amps[g].alpha;
                // (G^H G)^{-1} v = diag(alpha)^{-1} A^{-1} (shift / conj(alpha) + y)
                let v = DVector::from_iterator(
                    alpha.len(),
                    alpha.iter().zip(pd.y[k].iter()).map(|(a, y)| shift / a.conj() + y),
                );
                let z = pd
                    .solve_gram(&v)
                    .ok_or(Error::RankDeficient { observation: n, ratio: 0.0, tolerance: RANK_TOL })?;
                let pinned = pinned_mask(pd, los_override);
                let mut mu: Vec<f64> = z.iter().zip(alpha).map(|(zz, a)| wrap_angle((zz / a).arg())).collect();
                let mut kappa: Vec<Concentration> =
                    alpha.iter().map(|a| posterior_concentration(l * a.norm_sqr() / self.noise_power)).collect();
                for p in 0..alpha.len() {
                    if pinned[p] {
                        mu[p] = 0.0;
                        kappa[p] = Concentration::CAP;
                    }
                }
                Ok((mu, kappa, pinned))
            })
            .collect::<Result<_>>()?;
        let mut state = VariationalState {
            mu: Vec::with_capacity(per_obs.len()),
            kappa: Vec::with_capacity(per_obs.len()),
            kappa0,
            pinned: Vec::new(),
        };
        let any_pinned = per_obs.iter().any(|o| o.2.iter().any(|&b| b));
        for (mu, kappa, pinned) in per_obs {
            state.mu.push(mu);
            state.kappa.push(kappa);
            if any_pinned {
                state.pinned.push(pinned);
            }
        }
        Ok(state)
    }

    /// `sum_n F_n` for the given state, and its gradient in `u` when asked.
    pub fn free_energy_grad(
        &self,
        theta: &ThetaParam,
        state: &VariationalState,
        want_grad: bool,
    ) -> Result<(f64, Vec<[f64; 2]>)> {
        check_noise(self.noise_power)?;
        if state.mu.len() != self.observations() || state.kappa.len() != self.observations() {
            return Err(Error::Validation("variational state does not match the dataset".into()));
        }
        let amps = self.amplitudes(theta)?;
        let l = self.radio.len() as f64;
        let log_norm = l * (std::f64::consts::PI * self.noise_power).ln();
        let per_obs: Vec<(f64, Option<Vec<Complex64>>)> = self
            .index
            .par_iter()
            .enumerate()
            .map(|(n, &(g, k))| {
                let pd = &self.pairs[g];
                let (mu, kappa) = (&state.mu[n], &state.kappa[n]);
                if mu.len() != pd.paths_len() || kappa.len() != pd.paths_len() {
                    return Err(Error::Validation(format!("variational state of observation {n} has wrong length")));
                }
                let (v, grad) = observation_energy(pd, k, &amps[g].alpha, mu, kappa, l, self.noise_power, want_grad);
                let prior = prior_terms(mu, kappa, state.kappa0, |p| state.is_pinned(n, p));
                Ok((prior + log_norm + v, grad))
            })
            .collect::<Result<_>>()?;
        let total = pairwise_sum(&per_obs.iter().map(|o| o.0).collect::<Vec<_>>());
        let mut grad = vec![[0.0; 2]; self.materials];
        if want_grad {
            // sum the per-path Wirtinger derivatives in observation order, then chain once per pair
            let mut per_pair: Vec<Vec<Complex64>> =
                self.pairs.iter().map(|pd| vec![Complex64::default(); pd.paths_len()]).collect();
            for (&(g, _), (_, gr)) in self.index.iter().zip(&per_obs) {
                for (acc, v) in per_pair[g].iter_mut().zip(gr.as_ref().expect("gradient requested")) {
                    *acc += v;
                }
            }
            for (gvec, amp) in per_pair.iter().zip(&amps) {
                accumulate(&mut grad, gvec, amp);
            }
        }
        Ok((total, theta.chain(grad)))
    }

    /// The `theta`-independent part of `sum_n F_n` for the degenerate state
    /// `kappa = kappa0 = cap`, `mu = 0`, where the prior terms vanish and only
    /// the Gaussian normalizer `N L ln(pi s2)` remains.
    pub fn degenerate_constant(&self) -> f64 {
        self.observations() as f64 * self.radio.len() as f64 * (std::f64::consts::PI * self.noise_power).ln()
    }
}

/// Amplitude vector of an observation's pair, for callers building `G`.
pub fn pair_alpha<'a>(problem: &Problem, amps: &'a [PathAmplitudes], n: usize) -> &'a [Complex64] {
    &amps[problem.index[n].0].alpha
}

/// `G` for observation `n` on the full vectors.
pub fn observation_g(problem: &Problem, amps: &[PathAmplitudes], n: usize) -> GMatrix {
    let (g, _) = problem.index[n];
    GMatrix::from_parts(&problem.pairs[g].signatures, pair_alpha(problem, amps, n).to_vec())
}
