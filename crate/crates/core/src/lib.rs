//! Robot-configuration sampling strategies for universal quadruped
//! locomotion, evaluated with a reduced-order simulator.
//!
//! The crate is organized around five pieces:
//! - [`model`]: reference quadruped models, sampled configurations, and
//!   leg forward kinematics.
//! - [`sampling`]: morphology sampling and the joint PD-gain sampling
//!   strategies.
//! - [`curriculum`]: tracking metrics, sampling-range adaptation, and the
//!   SIR particle-filter population update.
//! - [`sim`]: PD-actuated reduced-order dynamics, the stand-admission
//!   test, episode rollout, and robustness sweeps.
//! - [`policy`]: the policy interface plus built-in heuristic policies.

pub mod curriculum;
pub mod error;
pub mod model;
pub mod policy;
pub mod rng;
pub mod sampling;
pub mod sim;

pub use error::{Error, Result};
