//! Crash prediction and per-leg entrapment scoring with recovery selection.
//!
//! Two independent signals feed the verdict:
//!
//! * Crash risk combines the magnitude of the recent PC2 shift away from the
//!   active ellipse's center (instability builds along PC2 in the seconds
//!   before a fall) with an immediate trigger when the latest point leaves
//!   the outer safety region.
//! * Entrapment scores compare each leg's lateral hip effort against the
//!   odometry progress the commanded motion should produce: a leg working
//!   hard while the body goes nowhere is likely caught.
//!
//! A halt always wins over recovery; recovery reverses toward the entrapped
//! leg's side.

use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

use crate::projection::PcaPoint;
use crate::telemetry::{LegId, ProprioFrame};
use crate::terrain_model::ZoneSet;

/// Crash predictor tuning.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CrashPredictorConfig {
    /// Observation horizon in frames.
    pub window: usize,
    /// PC2 shift magnitude treated as certain crash risk.
    pub pc2_threshold: f64,
}

/// Crash predictor output for one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrashAssessment {
    /// In [0, 1]; 1 means halt.
    pub risk: f64,
    pub halt: bool,
    /// False while the history window is still filling.
    pub warm: bool,
}

/// Risk from the PC2 shift of `history` (oldest first) relative to the active
/// ellipse's center, forced to 1 when the newest point is outside the safety
/// region. `history` must be non-empty; an underfilled window is reported via
/// `warm = false` rather than an error.
pub fn crash_risk(
    history: &[PcaPoint],
    zones: &ZoneSet,
    active_index: usize,
    cfg: &CrashPredictorConfig,
) -> CrashAssessment {
    assert!(!history.is_empty(), "crash_risk needs at least one point");
    let mean_pc2 = history.iter().map(|p| p.pc2).sum::<f64>() / history.len() as f64;
    let baseline = zones.sz()[active_index].mean[1];
    let shift = (mean_pc2 - baseline).abs();
    let mut risk = (shift / cfg.pc2_threshold).min(1.0);
    let latest = history.last().expect("non-empty");
    if !zones.gamma_safe().contains(latest) {
        risk = 1.0;
    }
    CrashAssessment {
        risk,
        halt: risk >= 1.0,
        warm: history.len() >= cfg.window,
    }
}

/// Entrapment scorer tuning.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EntrapmentConfig {
    /// Scoring window in frames; scores stay zero below 8 buffered frames.
    pub window: usize,
    /// Normalizer for lateral hip effort (N); calibrated as the 95th
    /// percentile of |hip_fy| over the calibration logs.
    pub f_ref: f64,
    /// Commanded speed below which no motion is being attempted (m/s).
    pub v_min: f64,
    /// Score threshold that triggers recovery.
    pub e_thresh: f64,
}

/// Frames an entrapment window must hold before scoring.
pub const MIN_ENTRAP_WINDOW: usize = 8;

/// Per-leg entrapment likelihoods in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntrapmentScore {
    pub e: [f64; 4],
    pub threshold: f64,
}

impl EntrapmentScore {
    pub fn zero(threshold: f64) -> Self {
        Self { e: [0.0; 4], threshold }
    }

    /// Highest-scoring leg (lowest id on ties) and its score.
    pub fn max_leg(&self) -> (LegId, f64) {
        let mut best = 0;
        for i in 1..4 {
            if self.e[i] > self.e[best] {
                best = i;
            }
        }
        (LegId::ALL[best], self.e[best])
    }
}

/// Scores each leg over the recent frames given the commanded velocities.
///
/// `activity_i = min(1, rms(hip_fy_i) / f_ref)`, `progress = min(1,
/// mean(odom speed) / |v*|)`, `e_i = activity_i * (1 - progress)`. Scores are
/// zero when fewer than [`MIN_ENTRAP_WINDOW`] frames are buffered or no
/// motion is commanded.
pub fn entrapment_scores(
    frames: &[ProprioFrame],
    commanded: (f64, f64),
    cfg: &EntrapmentConfig,
) -> EntrapmentScore {
    let v_cmd = commanded.0.abs();
    if frames.len() < MIN_ENTRAP_WINDOW || v_cmd < cfg.v_min {
        return EntrapmentScore::zero(cfg.e_thresh);
    }
    let n = frames.len() as f64;
    let mean_speed = frames.iter().map(|f| f.odom.speed()).sum::<f64>() / n;
    let progress = (mean_speed / v_cmd).min(1.0);
    let e = std::array::from_fn(|i| {
        let ms = frames.iter().map(|f| f.legs[i].hip_fy.powi(2)).sum::<f64>() / n;
        let activity = (ms.sqrt() / cfg.f_ref).min(1.0);
        (activity * (1.0 - progress)).clamp(0.0, 1.0)
    });
    EntrapmentScore { e, threshold: cfg.e_thresh }
}

/// Lateral-reverse recovery command; the side names the entrapped leg.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RecoveryCommand {
    ReverseLeft,
    ReverseRight,
}

/// Combined safety verdict for one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SafetyVerdict {
    pub crash_risk: f64,
    pub halt: bool,
    pub scores: [f64; 4],
    pub entrapped_leg: Option<LegId>,
    pub recovery: Option<RecoveryCommand>,
}

/// Resolves the navigation mode: halt wins over recovery, recovery over
/// normal operation. Recovery reverses left for left-side legs (1, 3) and
/// right for right-side legs (2, 4).
pub fn select_mode(scores: &EntrapmentScore, crash: &CrashAssessment) -> SafetyVerdict {
    if crash.halt {
        return SafetyVerdict {
            crash_risk: crash.risk,
            halt: true,
            scores: scores.e,
            entrapped_leg: None,
            recovery: None,
        };
    }
    let (leg, score) = scores.max_leg();
    if score > scores.threshold {
        let cmd = if leg.is_left() {
            RecoveryCommand::ReverseLeft
        } else {
            RecoveryCommand::ReverseRight
        };
        return SafetyVerdict {
            crash_risk: crash.risk,
            halt: false,
            scores: scores.e,
            entrapped_leg: Some(leg),
            recovery: Some(cmd),
        };
    }
    SafetyVerdict {
        crash_risk: crash.risk,
        halt: false,
        scores: scores.e,
        entrapped_leg: None,
        recovery: None,
    }
}

/// Streaming safety state for one pipeline: the PCA history feeding the
/// crash predictor and the frame window feeding the entrapment scorer.
#[derive(Debug, Clone)]
pub struct SafetyMonitor {
    crash_cfg: CrashPredictorConfig,
    entrap_cfg: EntrapmentConfig,
    history: VecDeque<PcaPoint>,
    frames: VecDeque<ProprioFrame>,
    recoveries: u32,
    recovering: bool,
}

impl SafetyMonitor {
    pub fn new(crash_cfg: CrashPredictorConfig, entrap_cfg: EntrapmentConfig) -> Self {
        Self {
            history: VecDeque::with_capacity(crash_cfg.window + 1),
            frames: VecDeque::with_capacity(entrap_cfg.window + 1),
            crash_cfg,
            entrap_cfg,
            recoveries: 0,
            recovering: false,
        }
    }

    /// Frames are buffered even before the estimator is warm so the
    /// entrapment window fills from the first sample.
    pub fn push_frame(&mut self, frame: &ProprioFrame) {
        self.frames.push_back(frame.clone());
        if self.frames.len() > self.entrap_cfg.window {
            self.frames.pop_front();
        }
    }

    /// Evaluates the verdict for the newest point.
    pub fn observe(
        &mut self,
        p: PcaPoint,
        commanded: (f64, f64),
        zones: &ZoneSet,
        active_index: usize,
    ) -> SafetyVerdict {
        self.history.push_back(p);
        if self.history.len() > self.crash_cfg.window {
            self.history.pop_front();
        }
        let hist: Vec<PcaPoint> = self.history.iter().copied().collect();
        let crash = crash_risk(&hist, zones, active_index, &self.crash_cfg);
        let frames: Vec<ProprioFrame> = self.frames.iter().cloned().collect();
        let scores = entrapment_scores(&frames, commanded, &self.entrap_cfg);
        let verdict = select_mode(&scores, &crash);
        // Count distinct recovery activations, not recovery frames.
        if verdict.recovery.is_some() && !self.recovering {
            self.recoveries += 1;
        }
        self.recovering = verdict.recovery.is_some();
        verdict
    }

    /// Distinct recovery activations so far; recurring entrapment in the
    /// same region shows up as a growing count.
    pub fn recovery_count(&self) -> u32 {
        self.recoveries
    }
}
