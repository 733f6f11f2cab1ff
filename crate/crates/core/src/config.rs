//! Runtime configuration.
//!
//! All tunables live here with documented defaults; `PRONAV_CONFIG` may point
//! at a JSON file overriding any subset of fields.

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};
use crate::telemetry::Gait;

/// How force spikes are counted per pipeline step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SpikeCounting {
    /// One increment per step if any leg's force delta is negative.
    #[default]
    AnyLeg,
    /// One increment per leg with a negative force delta.
    PerLeg,
}

/// Maximum commanded speed per gait, in m/s. Trot and amble share the top
/// speed; crawl is the slow, low-power gait.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VmaxTable {
    pub trot: f64,
    pub amble: f64,
    pub crawl: f64,
}

impl Default for VmaxTable {
    fn default() -> Self {
        Self { trot: 1.0, amble: 1.0, crawl: 0.4 }
    }
}

impl VmaxTable {
    pub fn get(&self, gait: Gait) -> f64 {
        match gait {
            Gait::Trot => self.trot,
            Gait::Amble => self.amble,
            Gait::Crawl => self.crawl,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    /// Force window length (samples).
    pub n: usize,
    /// Hip position window length (samples).
    pub m: usize,
    /// Pipeline rate in Hz.
    pub rate_hz: f64,
    /// Spike counting policy.
    pub spike_counting: SpikeCounting,

    /// Minimum frames between gait changes (hysteresis). 0 disables dwell.
    pub d_min: u32,
    /// Consecutive in-active frames after which temporary exclusions clear.
    pub k_stable: u32,

    /// Squared-Mahalanobis boundary for terrain-gait ellipses (95%, 2 dof).
    pub chi2_cluster: f64,
    /// Initial boundary for the outer safety region (99.9%, 2 dof).
    pub chi2_gamma: f64,
    /// Multiplicative chi2 growth per inflation round.
    pub gamma_inflation: f64,
    /// Inflation rounds before calibration gives up.
    pub gamma_max_inflations: u32,
    /// Boundary samples per ellipse for containment checks.
    pub boundary_samples: usize,

    /// Pre-crash observation horizon in seconds.
    pub crash_window_s: f64,
    /// Entrapment scoring window (frames).
    pub entrap_window: usize,
    /// Entrapment score threshold.
    pub e_thresh: f64,
    /// Commanded speed below which entrapment scoring is skipped (m/s).
    pub v_min: f64,

    /// Battery voltage for power reporting (robot specific).
    pub battery_voltage: f64,
    /// Goal-reached radius on odometry (m).
    pub goal_radius: f64,

    pub v_max: VmaxTable,
    /// Reverse speed while recovering an entrapped leg (m/s).
    pub v_rec: f64,
    /// Yaw rate while recovering (rad/s).
    pub w_rec: f64,

    /// Physical bound on any joint force magnitude (N).
    pub force_bound: f64,

    /// Terrain classes expected during calibration.
    pub terrain_classes: Vec<String>,
    /// The class whose high-stability ellipse becomes the low variance zone.
    pub stable_terrain: String,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            n: 16,
            m: 16,
            rate_hz: 16.0,
            spike_counting: SpikeCounting::AnyLeg,
            d_min: 20,
            k_stable: 16,
            chi2_cluster: 5.991,
            chi2_gamma: 13.82,
            gamma_inflation: 1.25,
            gamma_max_inflations: 20,
            boundary_samples: 64,
            crash_window_s: 3.0,
            entrap_window: 16,
            e_thresh: 0.7,
            v_min: 0.05,
            battery_voltage: 50.0,
            goal_radius: 0.5,
            v_max: VmaxTable::default(),
            v_rec: 0.2,
            w_rec: 0.3,
            force_bound: 1000.0,
            terrain_classes: vec![
                "solid-flat".into(),
                "granular".into(),
                "poor-foothold".into(),
                "high-resistance".into(),
            ],
            stable_terrain: "solid-flat".into(),
        }
    }
}

impl Config {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: Config =
            serde_json::from_str(&text).map_err(|e| Error::schema(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads from the file named by `PRONAV_CONFIG`, or defaults when unset.
    pub fn from_env() -> Result<Self> {
        match std::env::var("PRONAV_CONFIG") {
            Ok(path) if !path.is_empty() => Self::from_file(path),
            _ => Ok(Self::default()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m == 0 {
            return Err(Error::config("window lengths must be positive"));
        }
        if self.rate_hz <= 0.0 {
            return Err(Error::config("rate_hz must be positive"));
        }
        if self.chi2_cluster <= 0.0 || self.chi2_gamma <= 0.0 {
            return Err(Error::config("chi2 levels must be positive"));
        }
        if self.gamma_inflation <= 1.0 {
            return Err(Error::config("gamma_inflation must exceed 1"));
        }
        if !(self.v_max.trot >= self.v_max.crawl && self.v_max.amble >= self.v_max.crawl) {
            return Err(Error::config("v_max must honor trot = amble > crawl"));
        }
        if self.terrain_classes.is_empty() {
            return Err(Error::config("at least one terrain class required"));
        }
        if !self.terrain_classes.contains(&self.stable_terrain) {
            return Err(Error::config("stable_terrain must be a configured class"));
        }
        Ok(())
    }

    /// Frames covered by the crash observation horizon.
    pub fn crash_window_frames(&self) -> usize {
        (self.crash_window_s * self.rate_hz).round().max(1.0) as usize
    }
}

/// Nominal current ordering of the gaits: amble draws the most, crawl the
/// least. Used to break ties toward the cheaper gait.
pub fn nominal_current_rank(gait: Gait) -> u8 {
    match gait {
        Gait::Crawl => 0,
        Gait::Trot => 1,
        Gait::Amble => 2,
    }
}
