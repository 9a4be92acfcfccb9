//! Space-frequency channel model.
//!
//! Every length-`L` vector in this crate uses the same ordering:
//! subcarrier-major, then receive antenna, then transmit antenna, i.e. the
//! Kronecker order `w(tau) ⊗ a_rx ⊗ conj(a_tx)`. Entry
//! `(s, r, t)` sits at index `(s * n_rx + r) * n_tx + t`.

mod dataset;
mod power;
mod signature;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raytracer::{Point, SPEED_OF_LIGHT};

pub use dataset::{
    noise_power_from_snr, synthesize_dataset, ChannelDataset, ChannelObservation, DiscrepancyMode, Provenance,
    SynthesisSpec,
};
pub use power::{avg_power_von_mises, measured_power, model_power};
pub use signature::{
    deterministic_cfr, g_matrix, phase_error_cfr, signature_matrix, space_freq_signature, steering_vector, GMatrix,
};

/// Antenna element offsets in the array's local frame [m].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ArrayGeometry {
    pub offsets: Vec<Point>,
}

impl ArrayGeometry {
    pub fn single() -> Self {
        ArrayGeometry { offsets: vec![[0.0, 0.0]] }
    }

    /// Uniform linear array along the local y axis.
    pub fn linear(n: usize, spacing: f64) -> Self {
        ArrayGeometry {
            offsets: (0..n).map(|i| [0.0, i as f64 * spacing]).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    fn validate(&self, which: &str) -> Result<()> {
        if self.offsets.is_empty() {
            return Err(Error::Config(format!("{which} array has no elements")));
        }
        for (i, a) in self.offsets.iter().enumerate() {
            if self.offsets[..i].contains(a) {
                return Err(Error::Config(format!("{which} array has duplicate element offsets")));
            }
        }
        Ok(())
    }
}

impl Default for ArrayGeometry {
    fn default() -> Self {
        ArrayGeometry::single()
    }
}

/// Multi-carrier radio configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadioConfig {
    /// Lowest subcarrier frequency [Hz].
    pub f_min_hz: f64,
    pub subcarrier_spacing_hz: f64,
    pub subcarriers: usize,
    #[serde(default)]
    pub rx_array: ArrayGeometry,
    #[serde(default)]
    pub tx_array: ArrayGeometry,
}

impl RadioConfig {
    /// Radio with `subcarriers` tones centred on `carrier_hz`.
    pub fn centered(carrier_hz: f64, spacing_hz: f64, subcarriers: usize) -> Result<Self> {
        let radio = RadioConfig {
            f_min_hz: carrier_hz - (subcarriers.max(1) - 1) as f64 * spacing_hz / 2.0,
            subcarrier_spacing_hz: spacing_hz,
            subcarriers,
            rx_array: ArrayGeometry::single(),
            tx_array: ArrayGeometry::single(),
        };
        radio.validate()?;
        Ok(radio)
    }

    pub fn with_arrays(mut self, rx: ArrayGeometry, tx: ArrayGeometry) -> Result<Self> {
        self.rx_array = rx;
        self.tx_array = tx;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.subcarriers == 0 {
            return Err(Error::Config("need at least one subcarrier".into()));
        }
        if !(self.subcarrier_spacing_hz > 0.0) || !(self.f_min_hz > 0.0) {
            return Err(Error::Config(format!(
                "f_min ({}) and subcarrier spacing ({}) must be positive",
                self.f_min_hz, self.subcarrier_spacing_hz
            )));
        }
        self.rx_array.validate("rx")?;
        self.tx_array.validate("tx")
    }

    pub fn carrier_hz(&self) -> f64 {
        self.f_min_hz + (self.subcarriers - 1) as f64 * self.subcarrier_spacing_hz / 2.0
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_hz()
    }

    pub fn bandwidth_hz(&self) -> f64 {
        self.subcarriers as f64 * self.subcarrier_spacing_hz
    }

    pub fn frequency(&self, s: usize) -> f64 {
        self.f_min_hz + s as f64 * self.subcarrier_spacing_hz
    }

    /// `L = S * N_rx * N_tx`.
    pub fn len(&self) -> usize {
        self.subcarriers * self.rx_array.len() * self.tx_array.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
