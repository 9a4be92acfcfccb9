//! Special functions and circular statistics.
//!
//! Everything downstream leans on the modified Bessel functions `I0`/`I1`
//! (through the von Mises normalizer and the Bessel ratio `b = I1/I0`), so
//! these are evaluated in a scaled form that never overflows, up to and
//! including [`KAPPA_CAP`].

mod bessel;
mod vonmises;

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use bessel::{bessel_ratio, bessel_ratio_derivative, bessel_ratio_inv, log_bessel_i0};
pub use vonmises::{von_mises_pdf, von_mises_sample};

/// Concentration standing in for `+inf`.
pub const KAPPA_CAP: f64 = 1e8;

/// Wraps an angle into `[-pi, pi)`.
pub fn wrap_angle(x: f64) -> f64 {
    if (-PI..PI).contains(&x) {
        return x;
    }
    let y = (x + PI).rem_euclid(2.0 * PI) - PI;
    // rem_euclid can round up to exactly 2*pi for tiny negative inputs
    if y >= PI {
        y - 2.0 * PI
    } else {
        y
    }
}

/// An angle in radians, canonically wrapped to `[-pi, pi)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Angle(f64);

impl Angle {
    pub fn new(radians: f64) -> Self {
        Angle(wrap_angle(radians))
    }

    pub fn radians(self) -> f64 {
        self.0
    }

    /// Unit direction `(cos, sin)`.
    pub fn direction(self) -> [f64; 2] {
        let (s, c) = self.0.sin_cos();
        [c, s]
    }
}

impl From<Angle> for f64 {
    fn from(a: Angle) -> f64 {
        a.0
    }
}

impl fmt::Display for Angle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} rad", self.0)
    }
}

/// Von Mises concentration `kappa` in `[0, KAPPA_CAP]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Concentration(f64);

impl Concentration {
    pub const ZERO: Concentration = Concentration(0.0);
    pub const CAP: Concentration = Concentration(KAPPA_CAP);

    pub fn new(kappa: f64) -> Result<Self> {
        if kappa.is_nan() || kappa < 0.0 {
            return Err(Error::Domain(format!("concentration must be >= 0, got {kappa}")));
        }
        if kappa > KAPPA_CAP {
            return Err(Error::Domain(format!(
                "concentration {kappa} exceeds the cap {KAPPA_CAP}"
            )));
        }
        Ok(Concentration(kappa))
    }

    /// Clamps into `[0, KAPPA_CAP]`; `+inf` maps to the cap. NaN is rejected.
    pub fn saturating(kappa: f64) -> Result<Self> {
        if kappa.is_nan() {
            return Err(Error::Domain("concentration is NaN".into()));
        }
        Ok(Concentration(kappa.clamp(0.0, KAPPA_CAP)))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_capped(self) -> bool {
        self.0 >= KAPPA_CAP
    }
}

impl TryFrom<f64> for Concentration {
    type Error = Error;

    fn try_from(v: f64) -> Result<Self> {
        Concentration::new(v)
    }
}

impl From<Concentration> for f64 {
    fn from(k: Concentration) -> f64 {
        k.0
    }
}

/// Mean resultant length `E[cos(z - mu)]` of `VM(mu, kappa)` as used by the
/// channel and free-energy formulas: [`bessel_ratio`], except that the cap
/// takes the `kappa -> inf` limit of exactly 1.
pub fn mean_resultant(kappa: Concentration) -> f64 {
    if kappa.is_capped() {
        1.0
    } else {
        bessel_ratio(kappa)
    }
}

/// Sum by recursive halving; keeps reductions independent of thread layout.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const BLOCK: usize = 8;
    if values.len() <= BLOCK {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Linear-space standard deviation of a `VM(0, kappa)` variable on `[-pi, pi)`.
///
/// Uniform phases (`kappa = 0`) give `pi / sqrt(3)`.
pub fn von_mises_std(kappa: Concentration) -> f64 {
    if kappa.value() == 0.0 {
        return PI / 3f64.sqrt();
    }
    // composite Simpson on a grid fine enough for the narrowest mode we sweep
    let n = 20_000;
    let h = 2.0 * PI / n as f64;
    let mut acc = 0.0;
    for i in 0..=n {
        let x = -PI + i as f64 * h;
        let w = if i == 0 || i == n {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        acc += w * x * x * von_mises_pdf(Angle(x), Angle(0.0), kappa);
    }
    (acc * h / 3.0).sqrt()
}

/// Inverts [`von_mises_std`] by bisection on `log(kappa)`.
pub fn kappa_from_std(std_rad: f64) -> Result<Concentration> {
    let uniform = PI / 3f64.sqrt();
    if !(std_rad > 0.0) || std_rad > uniform + 1e-12 {
        return Err(Error::Domain(format!(
            "phase standard deviation must lie in (0, pi/sqrt(3)], got {std_rad}"
        )));
    }
    if std_rad >= uniform - 1e-12 {
        return Ok(Concentration::ZERO);
    }
    // small-std regime: std^2 ~ 1/kappa
    let (mut lo, mut hi) = (1e-8_f64.ln(), KAPPA_CAP.ln());
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let s = von_mises_std(Concentration(mid.exp()));
        if s > std_rad {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    Concentration::new((0.5 * (lo + hi)).exp())
}
