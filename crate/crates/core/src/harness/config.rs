use std::path::{Path as FsPath, PathBuf};

use serde::{Deserialize, Serialize};

use crate::calibrate::{OptimConfig, Scheme};
use crate::channel::{ArrayGeometry, DiscrepancyMode, RadioConfig};
use crate::error::{Error, Result};
use crate::mathkit::kappa_from_std;
use crate::raytracer::{DevicePair, Scene, TraceOptions, SPEED_OF_LIGHT};

/// Radio described by its carrier, tone spacing and bandwidth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadioSpec {
    pub carrier_hz: f64,
    pub subcarrier_spacing_hz: f64,
    pub bandwidth_hz: f64,
    #[serde(default = "one")]
    pub rx_elements: usize,
    #[serde(default = "one")]
    pub tx_elements: usize,
    /// Element spacing of the linear arrays in carrier wavelengths.
    #[serde(default = "half")]
    pub element_spacing_wavelengths: f64,
}

fn one() -> usize {
    1
}
fn half() -> f64 {
    0.5
}

impl RadioSpec {
    /// `S = floor(B / df)` tones centred on the carrier.
    pub fn build(&self) -> Result<RadioConfig> {
        if !(self.bandwidth_hz > 0.0) || !(self.subcarrier_spacing_hz > 0.0) {
            return Err(Error::Config("bandwidth and subcarrier spacing must be positive".into()));
        }
        // tolerate representation error on exact multiples
        let s = (self.bandwidth_hz / self.subcarrier_spacing_hz * (1.0 + 1e-12)).floor() as usize;
        if s == 0 {
            return Err(Error::Config(format!(
                "bandwidth {} Hz holds no subcarrier at spacing {} Hz",
                self.bandwidth_hz, self.subcarrier_spacing_hz
            )));
        }
        let spacing = self.element_spacing_wavelengths * SPEED_OF_LIGHT / self.carrier_hz;
        RadioConfig::centered(self.carrier_hz, self.subcarrier_spacing_hz, s)?.with_arrays(
            ArrayGeometry::linear(self.rx_elements, spacing),
            ArrayGeometry::linear(self.tx_elements, spacing),
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Bandwidth in Hz.
    Bandwidth,
    /// SNR in dB.
    Snr,
    /// Standard deviation of i.i.d. phase errors in degrees.
    PhaseStd,
    /// Receiver displacement in carrier wavelengths.
    Displacement,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Bandwidth => "bandwidth",
            SweepAxis::Snr => "snr",
            SweepAxis::PhaseStd => "phase_std",
            SweepAxis::Displacement => "displacement",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    /// Ground-truth scene; its materials are the true parameters.
    pub truth_scene: PathBuf,
    /// Geometry available to the calibrator.
    pub dt_scene: PathBuf,
    /// Receiver and transmitter where the data are collected.
    pub pair: DevicePair,
    pub trace: TraceOptions,
    pub radio: RadioSpec,
    pub discrepancy: DiscrepancyMode,
    pub snr_db: f64,
    /// Observations drawn per sweep cell.
    pub observations: usize,
    pub schemes: Vec<Scheme>,
    #[serde(default)]
    pub optim: OptimConfig,
    pub sweep: Sweep,
    pub seeds: Vec<u64>,
    /// Material reported in the metrics; defaults to the first one.
    #[serde(default)]
    pub metric_material: Option<String>,
}

/// Settings of one sweep cell after the sweep value has been applied.
#[derive(Clone, Debug, PartialEq)]
pub struct CellSettings {
    pub radio: RadioConfig,
    pub discrepancy: DiscrepancyMode,
    pub snr_db: f64,
}

impl ExperimentConfig {
    /// Reads a config; relative scene paths resolve against its directory.
    pub fn load(path: impl AsRef<FsPath>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| FsPath::new("."));
        for p in [&mut cfg.truth_scene, &mut cfg.dt_scene] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.sweep.values.is_empty() {
            return fail("sweep grid is empty".into());
        }
        if self.seeds.is_empty() {
            return fail("no seeds given".into());
        }
        for (i, s) in self.seeds.iter().enumerate() {
            if self.seeds[..i].contains(s) {
                return fail(format!("seed {s} listed twice"));
            }
        }
        if self.schemes.is_empty() {
            return fail("no calibration schemes given".into());
        }
        DevicePair::new(self.pair.rx, self.pair.tx).map_err(|e| Error::Config(e.to_string()))?;
        if self.observations == 0 {
            return fail("need at least one observation per pair".into());
        }
        self.optim.validate()?;
        for v in &self.sweep.values {
            self.cell(*v).map_err(|e| match e {
                Error::Config(_) => e,
                other => Error::Config(format!("{} value {v}: {other}", self.sweep.axis.name())),
            })?;
        }
        Ok(())
    }

    pub fn load_scenes(&self) -> Result<(Scene, Scene)> {
        Ok((Scene::load(&self.truth_scene)?, Scene::load(&self.dt_scene)?))
    }

    /// Applies a sweep value to the base settings.
    pub fn cell(&self, value: f64) -> Result<CellSettings> {
        let mut radio = self.radio.clone();
        let mut discrepancy = self.discrepancy;
        let mut snr_db = self.snr_db;
        match self.sweep.axis {
            SweepAxis::Bandwidth => radio.bandwidth_hz = value,
            SweepAxis::Snr => snr_db = value,
            SweepAxis::PhaseStd => {
                discrepancy = DiscrepancyMode::IidPhase { kappa0: kappa_from_std(value.to_radians())? }
            }
            SweepAxis::Displacement => discrepancy = DiscrepancyMode::RxDisplacement { eta: value },
        }
        discrepancy.validate()?;
        Ok(CellSettings { radio: radio.build()?, discrepancy, snr_db })
    }
}
