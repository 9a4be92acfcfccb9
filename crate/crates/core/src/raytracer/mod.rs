//! Image-method specular ray tracer for 2D wall scenes.
//!
//! Tracing fixes the path geometry (delays, angles, bounce incidence) once;
//! amplitudes are a separate, differentiable function of the material
//! parameters so calibration can re-evaluate them without re-tracing.

mod amplitude;
mod fresnel;
mod scene;
mod trace;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::mathkit::Angle;

pub use amplitude::{path_amplitudes, PathAmplitudes};
pub use fresnel::{complex_permittivity, fresnel_te, fresnel_te_with_derivative};
pub use scene::{MaterialParams, Scene, Wall};
pub use trace::{trace_paths, TraceOptions};

/// Propagation speed [m/s].
pub const SPEED_OF_LIGHT: f64 = 2.998e8;
/// Vacuum permittivity [F/m].
pub const VACUUM_PERMITTIVITY: f64 = 8.854187817e-12;

pub type Point = [f64; 2];

/// Receiver and transmitter reference points.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DevicePair {
    pub rx: Point,
    pub tx: Point,
}

impl DevicePair {
    pub fn new(rx: Point, tx: Point) -> crate::Result<Self> {
        if rx == tx {
            return Err(crate::Error::Validation("receiver and transmitter coincide".into()));
        }
        if !(rx.iter().chain(tx.iter()).all(|v| v.is_finite())) {
            return Err(crate::Error::Validation("device coordinates must be finite".into()));
        }
        Ok(DevicePair { rx, tx })
    }

    pub fn swapped(self) -> Self {
        DevicePair { rx: self.tx, tx: self.rx }
    }
}

/// One specular path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub amplitude: Complex64,
    /// seconds
    pub delay: f64,
    pub aod: Angle,
    pub aoa: Angle,
    /// Reflection points from the transmitter side.
    pub bounce_points: Vec<Point>,
    pub wall_ids: Vec<usize>,
    /// Material index of each bounce.
    pub materials: Vec<usize>,
    /// Cosine of the incidence angle at each bounce.
    pub incidence_cos: Vec<f64>,
    /// meters
    pub total_length: f64,
}

impl Path {
    pub fn bounces(&self) -> usize {
        self.wall_ids.len()
    }
}

/// Traced paths sorted by ascending delay.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathSet {
    pub pair: DevicePair,
    /// Carrier frequency the amplitudes were evaluated at.
    pub carrier_hz: f64,
    pub paths: Vec<Path>,
}

impl PathSet {
    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn amplitudes(&self) -> Vec<Complex64> {
        self.paths.iter().map(|p| p.amplitude).collect()
    }

    /// Total path power `||alpha||^2`.
    pub fn power(&self) -> f64 {
        self.paths.iter().map(|p| p.amplitude.norm_sqr()).sum()
    }

    /// Copy with amplitudes re-evaluated for the given materials.
    pub fn with_materials(&self, materials: &[MaterialParams]) -> crate::Result<PathSet> {
        let amps = path_amplitudes(self, materials, self.carrier_hz)?;
        let mut out = self.clone();
        for (p, a) in out.paths.iter_mut().zip(amps.alpha) {
            p.amplitude = a;
        }
        Ok(out)
    }
}
