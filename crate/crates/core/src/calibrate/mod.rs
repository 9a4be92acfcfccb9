//! Material calibration from channel observations.
//!
//! All three schemes minimise a smooth objective by gradient descent over an
//! unconstrained parametrisation `eps = 1 + exp(u1)`, `sigma = exp(u2)` of
//! every material in the DT scene:
//!
//! * [`Scheme::Peoc`]: `sum_n ||H_n - G 1||^2`;
//! * [`Scheme::Upec`]: squared mismatch of power-angle-delay profiles;
//! * [`Scheme::Peac`]: variational EM on the free energy, alternating a
//!   closed-form E-step, `inner_m_steps` descent steps on `theta` and a
//!   closed-form prior update.
//!
//! The data enter only through small per-device-pair statistics
//! ([`Problem`]), so each objective evaluation costs `O(N P^2)` regardless of
//! the number of subcarriers.

mod peac;
mod problem;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::channel::ChannelDataset;
use crate::error::{Error, Result};
use crate::mathkit::Concentration;
use crate::raytracer::{MaterialParams, Scene, TraceOptions};

pub use peac::{
    e_step, free_energy, free_energy_kappa0_derivative, m_step_kappa0, observation_g, posterior_concentration,
    VariationalState, RANK_TOL,
};
pub use problem::{select_projections, PairData, Problem, Projection, ProjectionPolicy};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Peoc,
    Upec,
    Peac,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Peoc, Scheme::Upec, Scheme::Peac];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Peoc => "peoc",
            Scheme::Upec => "upec",
            Scheme::Peac => "peac",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|x| x.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Config(format!("unknown scheme {s:?} (expected peoc, upec or peac)")))
    }
}

/// Unconstrained material parameters: `eps = 1 + exp(u1)`, `sigma = exp(u2)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThetaParam {
    u: Vec<[f64; 2]>,
}

impl ThetaParam {
    pub fn encode(materials: &[MaterialParams]) -> Result<Self> {
        let u = materials
            .iter()
            .map(|m| {
                if !(m.eps > 1.0) || !(m.sigma > 0.0) || !m.eps.is_finite() || !m.sigma.is_finite() {
                    return Err(Error::Domain(format!(
                        "calibrated materials need eps > 1 and sigma > 0, got eps={} sigma={}",
                        m.eps, m.sigma
                    )));
                }
                Ok([(m.eps - 1.0).ln(), m.sigma.ln()])
            })
            .collect::<Result<_>>()?;
        Ok(ThetaParam { u })
    }

    pub fn from_u(u: Vec<[f64; 2]>) -> Self {
        ThetaParam { u }
    }

    pub fn u(&self) -> &[[f64; 2]] {
        &self.u
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn decode(&self) -> Vec<MaterialParams> {
        self.u
            .iter()
            .map(|u| MaterialParams { eps: 1.0 + u[0].exp(), sigma: u[1].exp() })
            .collect()
    }

    /// Converts a gradient with respect to `(eps, sigma)` into one with respect to `u`.
    pub fn chain(&self, grad: Vec<[f64; 2]>) -> Vec<[f64; 2]> {
        grad.into_iter()
            .zip(&self.u)
            .map(|(g, u)| [g[0] * u[0].exp(), g[1] * u[1].exp()])
            .collect()
    }

    fn step(&self, grad: &[[f64; 2]], lr: f64) -> Self {
        ThetaParam {
            u: self
                .u
                .iter()
                .zip(grad)
                .map(|(u, g)| [u[0] - lr * g[0], u[1] - lr * g[1]])
                .collect(),
        }
    }

    fn is_finite(&self) -> bool {
        self.u.iter().all(|u| u[0].is_finite() && u[1].is_finite())
    }
}

fn default_lr() -> f64 {
    0.05
}
fn default_outer() -> usize {
    100
}
fn default_inner() -> usize {
    20
}
fn default_tol() -> f64 {
    1e-8
}
fn default_true() -> bool {
    true
}
fn default_initial() -> MaterialParams {
    MaterialParams { eps: 3.0, sigma: 0.1 }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimConfig {
    /// Step size in `u`-space, applied to the data-normalised objective.
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_outer")]
    pub max_outer_iters: usize,
    /// Descent steps per outer iteration (every scheme gets the same budget).
    #[serde(default = "default_inner")]
    pub inner_m_steps: usize,
    /// Stop when the objective changes by less than this, relatively, over an
    /// outer iteration.
    #[serde(default = "default_tol")]
    pub convergence_tol: f64,
    #[serde(default)]
    pub seed: u64,
    /// Starting point for every material.
    #[serde(default = "default_initial")]
    pub initial: MaterialParams,
    #[serde(default)]
    pub kappa0_init: Concentration,
    /// Halve the step until the objective does not increase.
    #[serde(default = "default_true")]
    pub step_halving: bool,
    /// Pin line-of-sight paths to a zero phase error in PEAC.
    #[serde(default)]
    pub los_override: bool,
    #[serde(default)]
    pub projections: ProjectionPolicy,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            learning_rate: default_lr(),
            max_outer_iters: default_outer(),
            inner_m_steps: default_inner(),
            convergence_tol: default_tol(),
            seed: 0,
            initial: default_initial(),
            kappa0_init: Concentration::ZERO,
            step_halving: true,
            los_override: false,
            projections: ProjectionPolicy::Paths,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if self.max_outer_iters == 0 || self.inner_m_steps == 0 {
            return Err(Error::Config("iteration counts must be positive".into()));
        }
        if !(self.convergence_tol > 0.0) {
            return Err(Error::Config(format!(
                "convergence tolerance must be positive, got {}",
                self.convergence_tol
            )));
        }
        ThetaParam::encode(&[self.initial]).map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibratedMaterial {
    pub name: String,
    pub eps: f64,
    pub sigma: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub scheme: Scheme,
    pub materials: Vec<CalibratedMaterial>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa0: Option<Concentration>,
    /// Objective after every outer iteration (the free energy for PEAC).
    pub loss_trace: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub free_energy_trace: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state: Option<VariationalState>,
    pub iterations: usize,
    pub converged: bool,
    pub wall_clock_s: f64,
}

impl CalibrationResult {
    pub fn theta(&self) -> Vec<MaterialParams> {
        self.materials
            .iter()
            .map(|m| MaterialParams { eps: m.eps, sigma: m.sigma })
            .collect()
    }
}

/// Gradient descent with optional step halving on a normalised objective.
/// Returns the final iterate and its (unnormalised) objective value.
fn descend<F>(
    objective: F,
    mut theta: ThetaParam,
    steps: usize,
    cfg: &OptimConfig,
    scale: f64,
    iteration: usize,
) -> Result<(ThetaParam, f64)>
where
    F: Fn(&ThetaParam) -> Result<(f64, Vec<[f64; 2]>)>,
{
    const MAX_HALVINGS: usize = 60;
    let diverged = |theta: &ThetaParam| Error::Divergence {
        iteration,
        last_theta: theta.decode().iter().map(|m| (m.eps, m.sigma)).collect(),
    };
    let (mut value, mut grad) = objective(&theta)?;
    if !value.is_finite() {
        return Err(diverged(&theta));
    }
    for _ in 0..steps {
        let g: Vec<[f64; 2]> = grad.iter().map(|g| [g[0] / scale, g[1] / scale]).collect();
        if !g.iter().all(|g| g[0].is_finite() && g[1].is_finite()) {
            return Err(diverged(&theta));
        }
        let mut lr = cfg.learning_rate;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let cand = theta.step(&g, lr);
            if cand.is_finite() {
                let (v, gr) = objective(&cand)?;
                if !cfg.step_halving || (v.is_finite() && v <= value) {
                    accepted = Some((cand, v, gr));
                    break;
                }
            }
            if !cfg.step_halving {
                return Err(diverged(&theta));
            }
            lr *= 0.5;
        }
        match accepted {
            Some((cand, v, gr)) => {
                if !v.is_finite() {
                    return Err(diverged(&theta));
                }
                theta = cand;
                value = v;
                grad = gr;
            }
            // no descent direction left at machine precision
            None => break,
        }
    }
    Ok((theta, value))
}

fn relative_change(prev: f64, next: f64) -> f64 {
    (prev - next).abs() / prev.abs().max(f64::MIN_POSITIVE)
}

fn nonzero(x: f64) -> f64 {
    if x > 0.0 && x.is_finite() {
        x
    } else {
        1.0
    }
}

/// Calibrates the materials of `dt_scene` against `dataset`.
///
/// The DT scene is traced once per device pair with `trace`; only its
/// geometry and material names are used, the starting point comes from
/// `optim.initial`.
pub fn calibrate(
    scheme: Scheme,
    dt_scene: &Scene,
    trace: &TraceOptions,
    dataset: &ChannelDataset,
    optim: &OptimConfig,
) -> Result<CalibrationResult> {
    let start = Instant::now();
    optim.validate()?;
    let problem = Problem::new(dt_scene, trace, dataset, optim.projections)?;
    let mut theta = ThetaParam::encode(&vec![optim.initial; problem.materials])?;
    let mut loss_trace: Vec<f64> = Vec::new();
    let mut free_energy_trace: Vec<f64> = Vec::new();
    let mut converged = false;
    let mut kappa0 = optim.kappa0_init;
    let mut state = None;

    match scheme {
        Scheme::Peoc | Scheme::Upec => {
            let scale = nonzero(match scheme {
                Scheme::Peoc => problem.data_energy(),
                _ => problem.profile_energy(),
            });
            let objective = |t: &ThetaParam| match scheme {
                Scheme::Peoc => problem.peoc_loss_grad(t),
                _ => problem.upec_loss_grad(t),
            };
            for it in 0..optim.max_outer_iters {
                let (next, value) = descend(objective, theta, optim.inner_m_steps, optim, scale, it)?;
                theta = next;
                let prev = loss_trace.last().copied();
                loss_trace.push(value);
                if let Some(prev) = prev {
                    if relative_change(prev, value) < optim.convergence_tol {
                        converged = true;
                        break;
                    }
                }
            }
        }
        Scheme::Peac => {
            let scale = nonzero(problem.data_energy() / problem.noise_power);
            let mut increases = 0usize;
            for it in 0..optim.max_outer_iters {
                let mut st = problem
                    .e_step_all(&theta, kappa0, optim.los_override)
                    .map_err(|e| e.context(format!("E-step, iteration {it}")))?;
                let objective = |t: &ThetaParam| problem.free_energy_grad(t, &st, true);
                let (next, _) = descend(objective, theta, optim.inner_m_steps, optim, scale, it)?;
                theta = next;
                kappa0 = m_step_kappa0(&st)?;
                st.kappa0 = kappa0;
                let (value, _) = problem.free_energy_grad(&theta, &st, false)?;
                if !value.is_finite() {
                    return Err(Error::Divergence {
                        iteration: it,
                        last_theta: theta.decode().iter().map(|m| (m.eps, m.sigma)).collect(),
                    });
                }
                let prev = free_energy_trace.last().copied();
                if let Some(prev) = prev {
                    if value > prev + 1e-12 * prev.abs() {
                        log::debug!("PEAC free energy increased at iteration {it}: {prev} -> {value}");
                        increases += 1;
                    }
                }
                free_energy_trace.push(value);
                loss_trace.push(value);
                state = Some(st);
                if let Some(prev) = prev {
                    if relative_change(prev, value) < optim.convergence_tol {
                        converged = true;
                        break;
                    }
                }
            }
            if increases > 0 {
                log::warn!("PEAC free energy increased in {increases} of {} iterations", free_energy_trace.len());
            }
        }
    }

    let materials = dt_scene
        .material_names()
        .iter()
        .zip(theta.decode())
        .map(|(name, m)| CalibratedMaterial { name: name.clone(), eps: m.eps, sigma: m.sigma })
        .collect();
    Ok(CalibrationResult {
        scheme,
        materials,
        kappa0: (scheme == Scheme::Peac).then_some(kappa0),
        iterations: loss_trace.len(),
        loss_trace,
        free_energy_trace,
        state,
        converged,
        wall_clock_s: start.elapsed().as_secs_f64(),
    })
}
