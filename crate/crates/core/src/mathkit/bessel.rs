use super::{Concentration, KAPPA_CAP};
use crate::error::{Error, Result};

// Power series below this argument, Hankel asymptotic expansion above.
// At 30 the smallest asymptotic term is ~e^-60, and the series still sums
// positive terms only, so both branches are accurate to a few ulps.
const SERIES_LIMIT: f64 = 30.0;

/// Power series sums `(sum0, sum1)` with `I0 = sum0` and `I1 = (x/2) * sum1`.
fn series(x: f64) -> (f64, f64) {
    let q = 0.25 * x * x;
    let (mut t0, mut s0) = (1.0, 1.0);
    let (mut t1, mut s1) = (1.0, 1.0);
    for k in 1..500 {
        let kf = k as f64;
        t0 *= q / (kf * kf);
        t1 *= q / (kf * (kf + 1.0));
        s0 += t0;
        s1 += t1;
        if t0 < 1e-17 * s0 && t1 < 1e-17 * s1 {
            break;
        }
    }
    (s0, s1)
}

/// Scaled asymptotic sums: `I_nu(x) ~ e^x / sqrt(2 pi x) * sum_nu`.
fn asymptotic(x: f64) -> (f64, f64) {
    let mut sums = [1.0, 1.0];
    for (nu, sum) in sums.iter_mut().enumerate() {
        let mu = 4.0 * (nu * nu) as f64;
        let mut term = 1.0_f64;
        for k in 1..60 {
            let odd = (2 * k - 1) as f64;
            let next = term * -(mu - odd * odd) / (8.0 * k as f64 * x);
            if next.abs() >= term.abs() {
                break;
            }
            term = next;
            *sum += term;
            if term.abs() < 1e-17 * sum.abs() {
                break;
            }
        }
    }
    (sums[0], sums[1])
}

pub(crate) fn log_i0(x: f64) -> f64 {
    if x < SERIES_LIMIT {
        series(x).0.ln()
    } else {
        let (s0, _) = asymptotic(x);
        x - 0.5 * (2.0 * std::f64::consts::PI * x).ln() + s0.ln()
    }
}

pub(crate) fn ratio(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else if x < SERIES_LIMIT {
        let (s0, s1) = series(x);
        0.5 * x * s1 / s0
    } else {
        let (s0, s1) = asymptotic(x);
        s1 / s0
    }
}

fn ratio_derivative(x: f64) -> f64 {
    if x == 0.0 {
        return 0.5;
    }
    if x > 1e3 {
        // 1 - b/x - b^2 cancels badly here; use the large-argument expansion
        let r = 1.0 / x;
        return 0.5 * r * r * (1.0 + 0.5 * r + 0.75 * r * r);
    }
    let b = ratio(x);
    1.0 - b / x - b * b
}

/// `ln I0(kappa)`, finite for every admissible concentration.
pub fn log_bessel_i0(kappa: Concentration) -> f64 {
    log_i0(kappa.value())
}

/// Bessel ratio `b(kappa) = I1(kappa) / I0(kappa)`, the mean resultant
/// length of a von Mises variable. Lies in `[0, 1)`.
pub fn bessel_ratio(kappa: Concentration) -> f64 {
    ratio(kappa.value())
}

/// `db/dkappa = 1 - b/kappa - b^2`.
pub fn bessel_ratio_derivative(kappa: Concentration) -> f64 {
    ratio_derivative(kappa.value())
}

/// Inverse of [`bessel_ratio`] on `[0, 1)`.
///
/// Safeguarded Newton iteration from the `r (2 - r^2) / (1 - r^2)` starting
/// point, falling back to bisection whenever a step leaves the bracket.
/// Returns [`KAPPA_CAP`] for `r >= b(KAPPA_CAP)`.
pub fn bessel_ratio_inv(r: f64) -> Result<Concentration> {
    if !(0.0..1.0).contains(&r) {
        return Err(Error::Domain(format!("Bessel ratio inverse needs r in [0, 1), got {r}")));
    }
    if r == 0.0 {
        return Ok(Concentration::ZERO);
    }
    if r >= ratio(KAPPA_CAP) {
        return Ok(Concentration::CAP);
    }
    let (mut lo, mut hi) = (0.0_f64, KAPPA_CAP);
    let mut k = (r * (2.0 - r * r) / (1.0 - r * r)).min(KAPPA_CAP);
    for _ in 0..300 {
        let f = ratio(k) - r;
        if f == 0.0 {
            break;
        }
        if f < 0.0 {
            lo = k;
        } else {
            hi = k;
        }
        let newton = k - f / ratio_derivative(k);
        let next = if newton > lo && newton < hi {
            newton
        } else if hi > 1e3 * lo.max(1e-300) {
            (lo.max(1e-12) * hi).sqrt()
        } else {
            0.5 * (lo + hi)
        };
        let converged = (next - k).abs() <= 4.0 * f64::EPSILON * k.max(1e-300);
        k = next;
        if converged || hi - lo <= 4.0 * f64::EPSILON * hi {
            break;
        }
    }
    Concentration::saturating(k)
}
