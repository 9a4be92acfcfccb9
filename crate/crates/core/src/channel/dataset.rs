use std::f64::consts::PI;
use std::path::Path as FsPath;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{deterministic_cfr, g_matrix, phase_error_cfr, RadioConfig};
use crate::error::{Error, Result};
use crate::mathkit::{von_mises_sample, Angle, Concentration};
use crate::raytracer::{trace_paths, DevicePair, MaterialParams, PathSet, Scene, TraceOptions};

/// How the observations deviate from the nominal deterministic model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum DiscrepancyMode {
    /// Observations follow the traced geometry exactly (plus noise).
    Exact,
    /// The receiver sits `eta * lambda_c` away from its nominal position, in a
    /// uniformly random direction drawn per observation.
    RxDisplacement { eta: f64 },
    /// Every path picks up an i.i.d. `VM(0, kappa0)` phase error.
    IidPhase { kappa0: Concentration },
}

impl DiscrepancyMode {
    pub fn validate(&self) -> Result<()> {
        match *self {
            DiscrepancyMode::RxDisplacement { eta } if !(0.0..=0.5).contains(&eta) => Err(Error::Config(format!(
                "rx displacement must lie in [0, 0.5] wavelengths, got {eta}"
            ))),
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    #[serde(flatten)]
    pub mode: DiscrepancyMode,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelObservation {
    pub pair: DevicePair,
    /// CFR as `[re, im]` pairs in the crate-wide vector ordering.
    pub h: Vec<Complex64>,
    /// Phase errors injected per path (i.i.d. phase mode only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub injected_phases: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelDataset {
    pub radio: RadioConfig,
    pub noise_power: f64,
    pub provenance: Provenance,
    pub observations: Vec<ChannelObservation>,
}

impl ChannelDataset {
    pub fn validate(&self) -> Result<()> {
        self.radio.validate()?;
        if !(self.noise_power >= 0.0) {
            return Err(Error::Validation(format!("noise power must be >= 0, got {}", self.noise_power)));
        }
        let l = self.radio.len();
        for (n, obs) in self.observations.iter().enumerate() {
            if obs.h.len() != l {
                return Err(Error::Validation(format!(
                    "observation {n} has {} entries, radio expects {l}",
                    obs.h.len()
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ds: ChannelDataset = serde_json::from_str(text)?;
        ds.validate()?;
        Ok(ds)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn load(path: impl AsRef<FsPath>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        ChannelDataset::from_json(&text).map_err(|e| e.context(format!("dataset {}", path.display())))
    }

    pub fn save(&self, path: impl AsRef<FsPath>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

/// `sigma^2 = ||alpha||^2 / 10^(snr_db / 10)`; an infinite SNR gives zero noise.
pub fn noise_power_from_snr(set: &PathSet, snr_db: f64) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::EmptyPathSet);
    }
    if snr_db.is_nan() {
        return Err(Error::Config("SNR is NaN".into()));
    }
    Ok(set.power() / 10f64.powf(snr_db / 10.0))
}

/// Ground truth and sampling settings for [`synthesize_dataset`].
#[derive(Clone, Debug)]
pub struct SynthesisSpec<'a> {
    pub scene: &'a Scene,
    pub materials: &'a [MaterialParams],
    pub pair: DevicePair,
    pub radio: &'a RadioConfig,
    pub trace: TraceOptions,
    pub observations: usize,
    pub mode: DiscrepancyMode,
    pub snr_db: f64,
    pub seed: u64,
}

fn observation_rng(seed: u64, n: usize) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(n as u64);
    rng
}

fn add_noise(h: &mut [Complex64], noise_power: f64, rng: &mut ChaCha20Rng) {
    if noise_power == 0.0 {
        return;
    }
    let s = (noise_power / 2.0).sqrt();
    for v in h.iter_mut() {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        *v += Complex64::new(s * re, s * im);
    }
}

/// Draws `N` noisy observations of the ground-truth scene.
///
/// Each observation uses its own ChaCha stream, so the result is independent
/// of thread count. The noise power is fixed from the nominal truth paths.
pub fn synthesize_dataset(spec: &SynthesisSpec<'_>) -> Result<ChannelDataset> {
    if spec.observations == 0 {
        return Err(Error::Config("need at least one observation".into()));
    }
    spec.mode.validate()?;
    spec.radio.validate()?;
    let scene = spec.scene.with_materials(spec.materials)?;
    let fc = spec.radio.carrier_hz();
    let nominal = trace_paths(&scene, spec.pair, &spec.trace, fc)?;
    let noise_power = noise_power_from_snr(&nominal, spec.snr_db)?;
    let g_nominal = g_matrix(&nominal, scene.materials(), spec.radio)?;

    let observations = (0..spec.observations)
        .into_par_iter()
        .map(|n| {
            let mut rng = observation_rng(spec.seed, n);
            let (mut h, injected_phases) = match spec.mode {
                DiscrepancyMode::Exact => (deterministic_cfr(&g_nominal), None),
                DiscrepancyMode::IidPhase { kappa0 } => {
                    let z: Vec<f64> = (0..g_nominal.paths())
                        .map(|_| von_mises_sample(&mut rng, Angle::new(0.0), kappa0).radians())
                        .collect();
                    (phase_error_cfr(&g_nominal, &z), Some(z))
                }
                DiscrepancyMode::RxDisplacement { eta } => {
                    let phi: f64 = rng.random_range(0.0..2.0 * PI);
                    let r = eta * spec.radio.wavelength();
                    let rx = [spec.pair.rx[0] + r * phi.cos(), spec.pair.rx[1] + r * phi.sin()];
                    let moved = DevicePair::new(rx, spec.pair.tx)?;
                    let set = trace_paths(&scene, moved, &spec.trace, fc)?;
                    // paths may disappear under displacement; what remains is the truth
                    let h = if set.is_empty() {
                        vec![Complex64::default(); spec.radio.len()]
                    } else {
                        deterministic_cfr(&g_matrix(&set, scene.materials(), spec.radio)?)
                    };
                    (h, None)
                }
            };
            add_noise(&mut h, noise_power, &mut rng);
            Ok(ChannelObservation { pair: spec.pair, h, injected_phases })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(ChannelDataset {
        radio: spec.radio.clone(),
        noise_power,
        provenance: Provenance { mode: spec.mode, seed: spec.seed },
        observations,
    })
}
