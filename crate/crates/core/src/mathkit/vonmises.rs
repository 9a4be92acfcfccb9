use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use super::bessel::log_i0;
use super::{wrap_angle, Angle, Concentration};

/// Density of `VM(mu, kappa)` at `x`, evaluated in the log domain.
pub fn von_mises_pdf(x: Angle, mu: Angle, kappa: Concentration) -> f64 {
    let k = kappa.value();
    let log_density = k * ((x.radians() - mu.radians()).cos() - 1.0) + (k - log_i0(k));
    log_density.exp() / (2.0 * PI)
}

/// Draws one angle from `VM(mu, kappa)`.
///
/// Best-Fisher rejection sampler. `kappa = 0` is uniform on `[-pi, pi)`, the
/// cap returns `mu` itself, and above `1e6` the wrapped normal
/// `N(mu, 1/kappa)` is used; the two agree to `O(1/kappa^2)` in every
/// circular moment there.
pub fn von_mises_sample<R: Rng + ?Sized>(rng: &mut R, mu: Angle, kappa: Concentration) -> Angle {
    let k = kappa.value();
    if kappa.is_capped() {
        return mu;
    }
    if k < 1e-8 {
        return Angle::new(PI * (2.0 * rng.random::<f64>() - 1.0));
    }
    if k > 1e6 {
        let z: f64 = rng.sample(StandardNormal);
        return Angle::new(mu.radians() + z / k.sqrt());
    }
    let s = if k < 1e-5 {
        // series of the expression below, avoiding 0/0
        1.0 / k + k
    } else {
        let r = 1.0 + (1.0 + 4.0 * k * k).sqrt();
        let rho = (r - (2.0 * r).sqrt()) / (2.0 * k);
        (1.0 + rho * rho) / (2.0 * rho)
    };
    loop {
        let u: f64 = rng.random();
        let z = (PI * u).cos();
        let w = (1.0 + s * z) / (s + z);
        let y = k * (s - w);
        let v: f64 = rng.random();
        if y * (2.0 - y) - v >= 0.0 || (y / v).ln() + 1.0 - y >= 0.0 {
            let theta = w.clamp(-1.0, 1.0).acos();
            let sign = if rng.random::<f64>() < 0.5 { -1.0 } else { 1.0 };
            return Angle::new(wrap_angle(mu.radians() + sign * theta));
        }
    }
}
