//! Single-range 3D localization.
//!
//! An agent with known velocity measures its (squared) distance to one fixed beacon.
//! Subtracting the first measurement and the squared norm of the integrated velocity
//! turns the nonlinear range output into a linear, input-dependent one, so both
//! identifiability and estimation reduce to linear machinery:
//!
//! * [`signals`]: input velocities and their running integral `I(t)`;
//! * [`truth`]: ground-truth kinematics (optionally with a constant current) and noise;
//! * [`observability`]: regression rank, Gramians and least-squares initial position;
//! * [`estimators`]: the 3-state and 8-state Kalman filters, with re-anchoring;
//! * [`frames`]: body-to-inertial mapping of measured velocities;
//! * [`experiment`]: end-to-end pipelines and the built-in reproduction scenarios.

pub mod estimators;
pub mod experiment;
pub mod frames;
pub mod observability;
pub mod signals;
pub mod truth;

pub use frames::{Rotation3, Vec3};
