//! Offline calibration: labeled telemetry logs in, sealed profile out.
//!
//! Per-log feature extraction fans out across worker threads (logs are
//! independent); everything after the merge is deterministic single-threaded
//! fitting, so rerunning on the same corpus reproduces the same checksum.

use std::collections::BTreeMap;
use std::path::PathBuf;

use crate::config::Config;
use crate::error::{Error, Result};
use crate::features::{extract_features, FeatureVector};
use crate::profile::{CalibrationProfile, SafetyCalibration, PROFILE_VERSION};
use crate::projection::{self, PcaPoint};
use crate::telemetry::{Gait, ProprioFrame, StreamEvent};
use crate::terrain_model::{build_gamma_safe, fit_ellipse, select_high_stability};

/// One labeled feature vector.
struct LabeledVector {
    terrain: String,
    gait: Gait,
    vector: FeatureVector,
}

/// Extraction result for one log.
struct LogFeatures {
    labeled: Vec<LabeledVector>,
    /// |hip_fy| samples for the effort normalizer.
    hip_efforts: Vec<f64>,
    /// (terrain, gait, crash time, pc2-window frame times) per crash event.
    crashes: Vec<CrashSegment>,
}

struct CrashSegment {
    terrain: String,
    gait: Gait,
    /// Indices (into this log's emitted vectors) covering the pre-crash
    /// horizon.
    vector_range: (usize, usize),
}

fn extract_log(frames: &[ProprioFrame], cfg: &Config) -> Result<LogFeatures> {
    let batch = extract_features(frames, cfg)?;
    let mut labeled = Vec::with_capacity(batch.vectors.len());
    for (i, vector) in batch.vectors.iter().enumerate() {
        let frame = &frames[batch.offset + i];
        let terrain = frame.terrain.clone().ok_or_else(|| {
            Error::calibration(format!("frame at t={} has no terrain label", frame.t))
        })?;
        let gait = frame.gait.ok_or_else(|| {
            Error::calibration(format!("frame at t={} has no gait label", frame.t))
        })?;
        labeled.push(LabeledVector { terrain, gait, vector: *vector });
    }
    let hip_efforts = frames
        .iter()
        .flat_map(|f| f.legs.iter().map(|l| l.hip_fy.abs()))
        .collect();

    let mut crashes = Vec::new();
    for (ci, frame) in frames.iter().enumerate() {
        if frame.event != Some(StreamEvent::Crash) {
            continue;
        }
        let (Some(terrain), Some(gait)) = (frame.terrain.clone(), frame.gait) else {
            continue;
        };
        if ci < batch.offset {
            continue;
        }
        let end = ci - batch.offset;
        let horizon = (3.0 * cfg.rate_hz) as usize;
        let start = end.saturating_sub(horizon);
        crashes.push(CrashSegment { terrain, gait, vector_range: (start, end) });
    }
    Ok(LogFeatures { labeled, hip_efforts, crashes })
}

#[cfg(feature = "parallel")]
fn extract_all(logs: &[Vec<ProprioFrame>], cfg: &Config) -> Result<Vec<LogFeatures>> {
    use rayon::prelude::*;
    logs.par_iter().map(|frames| extract_log(frames, cfg)).collect()
}

#[cfg(not(feature = "parallel"))]
fn extract_all(logs: &[Vec<ProprioFrame>], cfg: &Config) -> Result<Vec<LogFeatures>> {
    logs.iter().map(|frames| extract_log(frames, cfg)).collect()
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let rank = (q * (sorted.len() - 1) as f64).round() as usize;
    sorted[rank.min(sorted.len() - 1)]
}

/// Fits the full calibration profile from labeled logs.
pub fn calibrate(logs: &[Vec<ProprioFrame>], cfg: &Config) -> Result<CalibrationProfile> {
    if logs.is_empty() {
        return Err(Error::calibration("no calibration logs"));
    }
    let per_log = extract_all(logs, cfg)?;

    let dataset: Vec<FeatureVector> = per_log
        .iter()
        .flat_map(|l| l.labeled.iter().map(|v| v.vector))
        .collect();
    let model = projection::fit(&dataset)?;

    // Group projected points by (terrain, gait).
    let mut clusters: BTreeMap<(String, Gait), Vec<PcaPoint>> = BTreeMap::new();
    let mut log_points: Vec<Vec<PcaPoint>> = Vec::with_capacity(per_log.len());
    for log in &per_log {
        let mut points = Vec::with_capacity(log.labeled.len());
        for lv in &log.labeled {
            let p = model.project(&lv.vector)?;
            clusters.entry((lv.terrain.clone(), lv.gait)).or_default().push(p);
            points.push(p);
        }
        log_points.push(points);
    }

    // Twelve ellipses, in configured terrain order then gait order.
    let mut ellipses = Vec::with_capacity(cfg.terrain_classes.len() * Gait::ALL.len());
    for terrain in &cfg.terrain_classes {
        for gait in Gait::ALL {
            let points = clusters.get(&(terrain.clone(), gait)).ok_or_else(|| {
                Error::calibration(format!("missing terrain-gait pair {terrain}/{gait}"))
            })?;
            ellipses.push(fit_ellipse(
                points,
                terrain,
                gait,
                cfg.chi2_cluster,
                cfg.v_max.get(gait),
            )?);
        }
    }

    let selection = select_high_stability(&ellipses, cfg)?;

    let sz_ellipses: Vec<_> = selection
        .sz_ids
        .iter()
        .map(|id| ellipses.iter().find(|e| &e.id == id).expect("winner was fitted"))
        .collect();
    let sz_points: Vec<PcaPoint> = sz_ellipses
        .iter()
        .flat_map(|e| clusters[&(e.terrain.clone(), e.gait)].iter().copied())
        .collect();
    let gamma_safe = build_gamma_safe(&sz_points, &sz_ellipses, cfg)?;

    let lvz = ellipses.iter().find(|e| e.id == selection.lvz_id).expect("LVZ was fitted");

    // PC2 threshold: 5th percentile of pre-crash PC2 shifts when crash labels
    // exist, else three LVZ standard deviations along PC2.
    let mut shifts = Vec::new();
    for (log, points) in per_log.iter().zip(&log_points) {
        for seg in &log.crashes {
            let (start, end) = seg.vector_range;
            if end <= start || end > points.len() {
                continue;
            }
            let window = &points[start..end];
            let mean_pc2 = window.iter().map(|p| p.pc2).sum::<f64>() / window.len() as f64;
            let baseline = ellipses
                .iter()
                .find(|e| e.terrain == seg.terrain && e.gait == seg.gait)
                .map(|e| e.mean[1])
                .unwrap_or(lvz.mean[1]);
            shifts.push((mean_pc2 - baseline).abs());
        }
    }
    let pc2_threshold = if shifts.is_empty() {
        3.0 * lvz.cov[1][1].sqrt()
    } else {
        shifts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        percentile(&shifts, 0.05)
    };

    let mut efforts: Vec<f64> =
        per_log.iter().flat_map(|l| l.hip_efforts.iter().copied()).collect();
    efforts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let f_ref = percentile(&efforts, 0.95).max(1e-6);

    let mut profile = CalibrationProfile {
        version: PROFILE_VERSION,
        k: 2,
        feature_mean: model.feature_mean,
        feature_std: model.feature_std,
        components: model.components,
        explained_variance: model.explained_variance,
        ellipses,
        gamma_safe,
        lvz_id: selection.lvz_id,
        sz_ids: selection.sz_ids,
        safety: SafetyCalibration { pc2_threshold, f_ref },
        checksum: String::new(),
    };
    profile.seal();
    Ok(profile)
}

/// Reads every `*.jsonl` log under `dir` (sorted by name) and calibrates.
pub fn calibrate_dir(dir: impl AsRef<std::path::Path>, cfg: &Config) -> Result<CalibrationProfile> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().map(|e| e == "jsonl").unwrap_or(false))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::calibration("no .jsonl logs in directory"));
    }
    let logs = read_logs(&paths)?;
    calibrate(&logs, cfg)
}

#[cfg(feature = "parallel")]
fn read_logs(paths: &[PathBuf]) -> Result<Vec<Vec<ProprioFrame>>> {
    use rayon::prelude::*;
    paths.par_iter().map(crate::telemetry::read_log_file).collect()
}

#[cfg(not(feature = "parallel"))]
fn read_logs(paths: &[PathBuf]) -> Result<Vec<Vec<ProprioFrame>>> {
    paths.iter().map(crate::telemetry::read_log_file).collect()
}
