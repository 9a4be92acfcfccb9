use std::f64::consts::PI;

use num_complex::Complex64;

use super::fresnel::{complex_permittivity, conductivity_scale, fresnel_te_with_derivative};
use super::{MaterialParams, PathSet, SPEED_OF_LIGHT};
use crate::error::{Error, Result};

/// Path amplitudes and their derivatives with respect to every material's
/// permittivity and conductivity.
#[derive(Clone, Debug, PartialEq)]
pub struct PathAmplitudes {
    pub alpha: Vec<Complex64>,
    /// `d_eps[p][m] = d alpha_p / d eps_m`
    pub d_eps: Vec<Vec<Complex64>>,
    /// `d_sigma[p][m] = d alpha_p / d sigma_m`
    pub d_sigma: Vec<Vec<Complex64>>,
}

/// `alpha_p = lambda_c / (4 pi d_p) * prod_i r_TE(cos_i, eta(material_i, f_c))`
/// with closed-form gradients by the product rule.
pub fn path_amplitudes(set: &PathSet, materials: &[MaterialParams], carrier_hz: f64) -> Result<PathAmplitudes> {
    if !(carrier_hz > 0.0) {
        return Err(Error::Domain(format!("carrier frequency must be positive, got {carrier_hz}")));
    }
    let lambda = SPEED_OF_LIGHT / carrier_hz;
    let etas: Vec<Complex64> = materials.iter().map(|&m| complex_permittivity(m, carrier_hz)).collect();
    let deta_dsigma = Complex64::new(0.0, -conductivity_scale(carrier_hz));
    let n_mat = materials.len();

    let mut out = PathAmplitudes {
        alpha: Vec::with_capacity(set.len()),
        d_eps: Vec::with_capacity(set.len()),
        d_sigma: Vec::with_capacity(set.len()),
    };
    for path in &set.paths {
        let spread = lambda / (4.0 * PI * path.total_length);
        let mut coeffs = Vec::with_capacity(path.bounces());
        for (&m, &c) in path.materials.iter().zip(&path.incidence_cos) {
            let eta = *etas.get(m).ok_or_else(|| {
                Error::Validation(format!("path references material {m} but {n_mat} are given"))
            })?;
            coeffs.push(fresnel_te_with_derivative(c, eta)?);
        }
        // prefix/suffix products so a zero coefficient never divides
        let k = coeffs.len();
        let mut prefix = vec![Complex64::new(1.0, 0.0); k + 1];
        let mut suffix = vec![Complex64::new(1.0, 0.0); k + 1];
        for i in 0..k {
            prefix[i + 1] = prefix[i] * coeffs[i].0;
            suffix[k - 1 - i] = suffix[k - i] * coeffs[k - 1 - i].0;
        }
        let alpha = spread * prefix[k];
        let mut d_eps = vec![Complex64::default(); n_mat];
        let mut d_sigma = vec![Complex64::default(); n_mat];
        for (i, &m) in path.materials.iter().enumerate() {
            let d_eta = spread * prefix[i] * coeffs[i].1 * suffix[i + 1];
            d_eps[m] += d_eta;
            d_sigma[m] += d_eta * deta_dsigma;
        }
        out.alpha.push(alpha);
        out.d_eps.push(d_eps);
        out.d_sigma.push(d_sigma);
    }
    Ok(out)
}
