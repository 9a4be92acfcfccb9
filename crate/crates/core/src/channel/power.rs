use num_complex::Complex64;

use super::{space_freq_signature, GMatrix, RadioConfig};
use crate::error::{Error, Result};
use crate::mathkit::{mean_resultant, Angle, Concentration};

fn check_len(got: usize, radio: &RadioConfig) -> Result<()> {
    if got != radio.len() {
        return Err(Error::Validation(format!(
            "vector length {got} does not match radio dimension {}",
            radio.len()
        )));
    }
    Ok(())
}

fn inner(a: &[Complex64], b: impl Iterator<Item = Complex64>) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Power-angle-delay profile of a measured CFR: `|a^H H|^2 / L`.
pub fn measured_power(h: &[Complex64], delay: f64, aoa: Angle, aod: Angle, radio: &RadioConfig) -> Result<f64> {
    check_len(h.len(), radio)?;
    let a = space_freq_signature(delay, aoa, aod, radio);
    Ok(inner(&a, h.iter().copied()).norm_sqr() / radio.len() as f64)
}

/// Modelled profile under uniform phase errors: `||a^H G||^2 / L`.
pub fn model_power(g: &GMatrix, delay: f64, aoa: Angle, aod: Angle, radio: &RadioConfig) -> Result<f64> {
    check_len(g.rows(), radio)?;
    let a = space_freq_signature(delay, aoa, aod, radio);
    let total: f64 = (0..g.paths())
        .map(|p| inner(&a, g.matrix.column(p).iter().copied()).norm_sqr())
        .sum();
    Ok(total / radio.len() as f64)
}

/// Mean received power per antenna pair and subcarrier when the path phases
/// are independent `VM(mu_p, kappa_p)`:
/// `||G diag(B) e^{j mu}||^2 / L + sum_p |alpha_p|^2 (1 - b_p^2)`.
pub fn avg_power_von_mises(g: &GMatrix, mu: &[f64], kappa: &[Concentration]) -> Result<f64> {
    let p = g.paths();
    if mu.len() != p || kappa.len() != p {
        return Err(Error::Validation(format!(
            "expected {p} phase means and concentrations, got {} and {}",
            mu.len(),
            kappa.len()
        )));
    }
    let b: Vec<f64> = kappa.iter().map(|&k| mean_resultant(k)).collect();
    let mean: Vec<Complex64> = mu.iter().zip(&b).map(|(&m, &bb)| Complex64::from_polar(bb, m)).collect();
    let coherent: f64 = g.apply(&mean).iter().map(|v| v.norm_sqr()).sum::<f64>() / g.rows() as f64;
    let diffuse: f64 = g.alpha.iter().zip(&b).map(|(a, bb)| a.norm_sqr() * (1.0 - bb * bb)).sum();
    Ok(coherent + diffuse)
}
