//! Ray-tracing calibration workbench.
//!
//! A small image-method ray tracer for 2D wall scenes feeds a multi-carrier
//! MIMO channel model; three calibration schemes then recover the material
//! permittivity and conductivity from channel observations:
//!
//! * PEOC: least squares on the channel responses, ignoring phase errors;
//! * UPEC: matching power-angle-delay profiles under uniform phase errors;
//! * PEAC: variational EM with von Mises phase errors and a learned prior.

pub mod calibrate;
pub mod channel;
pub mod error;
pub mod harness;
pub mod mathkit;
pub mod raytracer;

pub use error::{Error, Result};
