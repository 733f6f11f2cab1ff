//! Proprioception-only terrain traversability estimation for quadruped
//! robots: windowed joint-signal features, two-component PCA, per
//! terrain-gait Gaussian ellipse models, an adaptive gait-selection state
//! machine, and crash/entrapment prediction with recovery.

pub mod calibrate;
pub mod config;
pub mod error;
pub mod features;
pub mod gait_policy;
pub mod pipeline;
pub mod profile;
pub mod projection;
pub mod safety;
pub mod simulator;
pub mod telemetry;
pub mod terrain_model;

pub use config::Config;
pub use error::{Error, Result};
