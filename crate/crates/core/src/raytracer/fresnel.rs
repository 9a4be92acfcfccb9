use std::f64::consts::PI;

use num_complex::Complex64;

use super::{MaterialParams, VACUUM_PERMITTIVITY};
use crate::error::{Error, Result};

/// Complex relative permittivity `eps - j sigma / (2 pi f eps0)`.
pub fn complex_permittivity(mat: MaterialParams, freq_hz: f64) -> Complex64 {
    Complex64::new(mat.eps, -conductivity_scale(freq_hz) * mat.sigma)
}

/// `d Im(eta) / d sigma` up to sign: `1 / (2 pi f eps0)`.
pub(crate) fn conductivity_scale(freq_hz: f64) -> f64 {
    1.0 / (2.0 * PI * freq_hz * VACUUM_PERMITTIVITY)
}

fn check_cos(cos_incidence: f64) -> Result<()> {
    if !(cos_incidence > 0.0 && cos_incidence <= 1.0 + 1e-12) {
        return Err(Error::Geometry(format!(
            "cosine of incidence must lie in (0, 1], got {cos_incidence}"
        )));
    }
    Ok(())
}

/// TE (perpendicular) reflection coefficient
/// `(cos - sqrt(eta - sin^2)) / (cos + sqrt(eta - sin^2))`.
pub fn fresnel_te(cos_incidence: f64, eta: Complex64) -> Result<Complex64> {
    fresnel_te_with_derivative(cos_incidence, eta).map(|(r, _)| r)
}

/// Reflection coefficient together with `d r / d eta`.
pub fn fresnel_te_with_derivative(cos_incidence: f64, eta: Complex64) -> Result<(Complex64, Complex64)> {
    check_cos(cos_incidence)?;
    let c = cos_incidence.min(1.0);
    let sin2 = 1.0 - c * c;
    // principal branch, Re >= 0
    let q = (eta - sin2).sqrt();
    let den = c + q;
    let r = (c - q) / den;
    // dr/dq = -2c / (c + q)^2, dq/deta = 1 / (2q)
    let dr = -c / (den * den * q);
    Ok((r, dr))
}
