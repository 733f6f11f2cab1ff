//! Windowed joint-signal preprocessing and assembly of the 9-dimensional
//! input vector.
//!
//! Per pipeline step the stage computes, from the per-leg windows:
//!
//! * the mean knee force per leg and for the robot as a whole,
//! * the per-leg force deltas `Δ_i = μ_rob − f_i(t)` and their sum,
//! * a sliding spike count (steps in the last `n` where any `Δ_i < 0`),
//! * the hip position spreads `Ω_x`, `Ω_y` (sum over legs of window
//!   max − min),
//!
//! and joins them with the instantaneous battery current into the fixed-order
//! vector `[Δ1, Δ2, Δ3, Δ4, ΣΔ, count, Ωx, Ωy, I]`.
//!
//! The batch path reproduces the streaming path bit for bit: both iterate
//! windows oldest-to-newest and sum in the same order.

use std::collections::VecDeque;

use crate::config::{Config, SpikeCounting};
use crate::error::{Error, Result};
use crate::telemetry::{LegId, ProprioFrame, SignalWindow};

pub const FEATURE_DIM: usize = 9;

/// Windowed knee-force statistics for one pipeline step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForceStats {
    /// Mean knee force per leg over the window (N).
    pub mu_leg: [f64; 4],
    /// Mean of the four per-leg means (N).
    pub mu_rob: f64,
    /// μ_rob − f_i(t) per leg (N). Negative means the leg is loaded above
    /// the recent robot-wide average.
    pub delta: [f64; 4],
    /// Sum of the four deltas (N).
    pub delta_sum: f64,
    /// Spike increments accumulated over the last `n` pipeline steps.
    pub spike_count: u32,
}

/// Hip position spread over the window, per axis (m).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositionSpread {
    pub omega_x: f64,
    pub omega_y: f64,
}

/// The 9-entry input vector, ordered `[Δ1, Δ2, Δ3, Δ4, ΣΔ, count, Ωx, Ωy, I]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector(pub [f64; FEATURE_DIM]);

impl FeatureVector {
    pub fn as_array(&self) -> &[f64; FEATURE_DIM] {
        &self.0
    }
}

impl std::ops::Index<usize> for FeatureVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Sliding history of per-step spike increments, capacity `n`.
#[derive(Debug, Clone)]
pub struct SpikeWindow {
    increments: VecDeque<u32>,
    capacity: usize,
}

impl SpikeWindow {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0);
        Self { increments: VecDeque::with_capacity(capacity + 1), capacity }
    }

    pub fn push(&mut self, increment: u32) {
        self.increments.push_back(increment);
        if self.increments.len() > self.capacity {
            self.increments.pop_front();
        }
    }

    pub fn total(&self) -> u32 {
        self.increments.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.increments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.increments.is_empty()
    }
}

/// Per-step spike increment from the four deltas. With [`SpikeCounting::AnyLeg`]
/// a step contributes at most 1; per-leg counting contributes one per spiking
/// leg. The comparison is strict: a delta of exactly zero is no spike.
pub fn spike_increment(delta: &[f64; 4], counting: SpikeCounting) -> u32 {
    match counting {
        SpikeCounting::AnyLeg => u32::from(delta.iter().any(|&d| d < 0.0)),
        SpikeCounting::PerLeg => delta.iter().filter(|&&d| d < 0.0).count() as u32,
    }
}

fn slice_mean(samples: &[f64]) -> f64 {
    samples.iter().fold(0.0, |acc, &v| acc + v) / samples.len() as f64
}

/// Core of `force_stats` over plain slices (oldest-to-newest), shared by the
/// streaming and batch paths.
fn force_stats_from_slices(
    windows: [&[f64]; 4],
    current: [f64; 4],
    counting: SpikeCounting,
) -> (ForceStats, u32) {
    let mu_leg: [f64; 4] = std::array::from_fn(|i| slice_mean(windows[i]));
    let mu_rob = (mu_leg[0] + mu_leg[1] + mu_leg[2] + mu_leg[3]) / 4.0;
    let delta: [f64; 4] = std::array::from_fn(|i| mu_rob - current[i]);
    let delta_sum = delta[0] + delta[1] + delta[2] + delta[3];
    let increment = spike_increment(&delta, counting);
    (
        ForceStats { mu_leg, mu_rob, delta, delta_sum, spike_count: 0 },
        increment,
    )
}

/// Computes the force statistics for the newest step of `window`, pushing the
/// step's spike increment into `spikes` and reporting the sliding count.
///
/// `current` is the instantaneous knee force per leg, i.e. the newest sample
/// of each window. Errors with `NotWarm` until the force rings are full.
pub fn force_stats(
    window: &SignalWindow,
    current: [f64; 4],
    spikes: &mut SpikeWindow,
    counting: SpikeCounting,
) -> Result<ForceStats> {
    if !window.force_warm() {
        return Err(Error::NotWarm {
            have: window.force_fill(),
            need: window.force_capacity(),
        });
    }
    let buffers: [Vec<f64>; 4] =
        std::array::from_fn(|i| window.knee_fz(LegId::ALL[i]).iter().collect());
    let slices: [&[f64]; 4] = std::array::from_fn(|i| buffers[i].as_slice());
    let (mut stats, increment) = force_stats_from_slices(slices, current, counting);
    spikes.push(increment);
    stats.spike_count = spikes.total();
    Ok(stats)
}

fn spread_from_slices(xs: [&[f64]; 4], ys: [&[f64]; 4]) -> PositionSpread {
    let spread = |w: &[f64]| {
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for &v in w {
            min = min.min(v);
            max = max.max(v);
        }
        (max - min).abs()
    };
    let omega_x = xs.iter().fold(0.0, |acc, w| acc + spread(w));
    let omega_y = ys.iter().fold(0.0, |acc, w| acc + spread(w));
    PositionSpread { omega_x, omega_y }
}

/// Hip position spread over the window: per axis, the sum over legs of
/// |max − min| of the last `m` samples. Errors with `NotWarm` until the
/// position rings are full.
pub fn position_spread(window: &SignalWindow) -> Result<PositionSpread> {
    if !window.pos_warm() {
        return Err(Error::NotWarm {
            have: window.pos_fill(),
            need: window.pos_capacity(),
        });
    }
    let xs: [Vec<f64>; 4] =
        std::array::from_fn(|i| window.hip_px(LegId::ALL[i]).iter().collect());
    let ys: [Vec<f64>; 4] =
        std::array::from_fn(|i| window.hip_py(LegId::ALL[i]).iter().collect());
    Ok(spread_from_slices(
        std::array::from_fn(|i| xs[i].as_slice()),
        std::array::from_fn(|i| ys[i].as_slice()),
    ))
}

/// Joins the preprocessed quantities into the fixed-order input vector.
pub fn assemble(stats: &ForceStats, spread: &PositionSpread, current: f64) -> Result<FeatureVector> {
    let a = [
        stats.delta[0],
        stats.delta[1],
        stats.delta[2],
        stats.delta[3],
        stats.delta_sum,
        stats.spike_count as f64,
        spread.omega_x,
        spread.omega_y,
        current,
    ];
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::signal("non-finite feature entry"));
    }
    Ok(FeatureVector(a))
}

/// Streaming feature extraction for one telemetry stream.
///
/// Emits nothing during warm-up; the first vector appears once both the force
/// window (`n` samples) and the position window (`m` samples) are full.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    window: SignalWindow,
    spikes: SpikeWindow,
    counting: SpikeCounting,
}

impl FeatureExtractor {
    pub fn new(cfg: &Config) -> Self {
        Self {
            window: SignalWindow::new(cfg.n, cfg.m),
            spikes: SpikeWindow::new(cfg.n),
            counting: cfg.spike_counting,
        }
    }

    /// Number of frames before the first vector can be emitted.
    pub fn warmup(&self) -> usize {
        self.window.force_capacity().max(self.window.pos_capacity())
    }

    pub fn push(&mut self, frame: &ProprioFrame) -> Result<Option<FeatureVector>> {
        self.window.push(frame);
        if !self.window.force_warm() {
            return Ok(None);
        }
        let current: [f64; 4] = std::array::from_fn(|i| frame.legs[i].knee_fz);
        let stats = force_stats(&self.window, current, &mut self.spikes, self.counting)?;
        if !self.window.pos_warm() {
            return Ok(None);
        }
        let spread = position_spread(&self.window)?;
        Ok(Some(assemble(&stats, &spread, frame.current)?))
    }
}

/// Batch feature extraction over a frame slice.
///
/// `offset` is the index of the frame the first vector belongs to, so
/// `vectors[i]` describes `frames[offset + i]`.
#[derive(Debug, Clone)]
pub struct BatchFeatures {
    pub offset: usize,
    pub vectors: Vec<FeatureVector>,
}

fn frame_windows(frames: &[ProprioFrame], t: usize, len: usize) -> [Vec<f64>; 4] {
    std::array::from_fn(|leg| {
        frames[t + 1 - len..=t].iter().map(|f| f.legs[leg].knee_fz).collect()
    })
}

/// Per-step spike increments for all force-warm steps (`t >= n-1`).
fn batch_spike_increments(
    frames: &[ProprioFrame],
    n: usize,
    counting: SpikeCounting,
) -> Vec<u32> {
    let compute = |t: usize| {
        let windows = frame_windows(frames, t, n);
        let slices: [&[f64]; 4] = std::array::from_fn(|i| windows[i].as_slice());
        let current: [f64; 4] = std::array::from_fn(|i| frames[t].legs[i].knee_fz);
        force_stats_from_slices(slices, current, counting).1
    };
    run_indexed(n - 1, frames.len(), compute)
}

fn batch_vector(
    frames: &[ProprioFrame],
    increments: &[u32],
    t: usize,
    n: usize,
    m: usize,
) -> Result<FeatureVector> {
    let windows = frame_windows(frames, t, n);
    let slices: [&[f64]; 4] = std::array::from_fn(|i| windows[i].as_slice());
    let current: [f64; 4] = std::array::from_fn(|i| frames[t].legs[i].knee_fz);
    // Counting mode does not matter here; the sliding count comes from the
    // precomputed increments.
    let (mut stats, _) = force_stats_from_slices(slices, current, SpikeCounting::AnyLeg);
    // increments[k] belongs to step n-1+k; sum the last n steps' worth.
    let upto = t - (n - 1);
    let from = upto.saturating_sub(n - 1);
    stats.spike_count = increments[from..=upto].iter().sum();

    let xs: [Vec<f64>; 4] = std::array::from_fn(|leg| {
        frames[t + 1 - m..=t].iter().map(|f| f.legs[leg].hip_px).collect()
    });
    let ys: [Vec<f64>; 4] = std::array::from_fn(|leg| {
        frames[t + 1 - m..=t].iter().map(|f| f.legs[leg].hip_py).collect()
    });
    let spread = spread_from_slices(
        std::array::from_fn(|i| xs[i].as_slice()),
        std::array::from_fn(|i| ys[i].as_slice()),
    );
    assemble(&stats, &spread, frames[t].current)
}

fn extract_impl(frames: &[ProprioFrame], cfg: &Config) -> Result<BatchFeatures> {
    let (n, m) = (cfg.n, cfg.m);
    let offset = n.max(m) - 1;
    if frames.len() <= offset {
        return Ok(BatchFeatures { offset, vectors: Vec::new() });
    }
    let increments = batch_spike_increments(frames, n, cfg.spike_counting);
    let vectors = run_indexed(offset, frames.len(), |t| {
        batch_vector(frames, &increments, t, n, m)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(BatchFeatures { offset, vectors })
}

#[cfg(feature = "parallel")]
fn run_indexed<T, F>(from: usize, to: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (from..to).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn run_indexed<T, F>(from: usize, to: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (from..to).map(f).collect()
}

/// Batch extraction over a recorded stream. Dispatches to the rayon path when
/// the `parallel` feature is enabled.
pub fn extract_features(frames: &[ProprioFrame], cfg: &Config) -> Result<BatchFeatures> {
    extract_impl(frames, cfg)
}

/// Sequential batch extraction, always available; the reference the parallel
/// path is benchmarked and tested against.
pub fn extract_features_seq(frames: &[ProprioFrame], cfg: &Config) -> Result<BatchFeatures> {
    let (n, m) = (cfg.n, cfg.m);
    let offset = n.max(m) - 1;
    if frames.len() <= offset {
        return Ok(BatchFeatures { offset, vectors: Vec::new() });
    }
    let increments: Vec<u32> = (n - 1..frames.len())
        .map(|t| {
            let windows = frame_windows(frames, t, n);
            let slices: [&[f64]; 4] = std::array::from_fn(|i| windows[i].as_slice());
            let current: [f64; 4] = std::array::from_fn(|i| frames[t].legs[i].knee_fz);
            force_stats_from_slices(slices, current, cfg.spike_counting).1
        })
        .collect();
    let vectors = (offset..frames.len())
        .map(|t| batch_vector(frames, &increments, t, n, m))
        .collect::<Result<Vec<_>>>()?;
    Ok(BatchFeatures { offset, vectors })
}
