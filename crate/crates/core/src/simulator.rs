//! Seeded synthetic telemetry generator, one parameter set per terrain-gait
//! pair.
//!
//! Signal model per frame:
//!
//! * knee force: base + Gaussian noise + Poisson-arriving impact spikes.
//!   A spike is an episode, not an impulse: its magnitude decays by
//!   [`SPIKE_DECAY`] per frame, the way a stumble or an entanglement loads
//!   a knee for a few hundred milliseconds,
//! * hip position: gait-frequency sinusoid + mean-reverting random-walk
//!   drift (bounded wander, so stable terrain produces a tight envelope),
//! * battery current: per-pair mean + noise, plus a surge proportional to
//!   the total spike load currently on the legs (a stumbling or entangled
//!   leg draws extra current even for a nominally cheap gait),
//! * odometry: commanded velocity scaled by the pair's slip factor.
//!
//! The gait driving the signal model is queried from a callback every frame,
//! which is how closed-loop runs couple the generator to the gait policy.
//! Scenario scripts can inject a pre-crash instability ramp or a leg stall.
//!
//! All magnitudes are synthetic: only the orderings between pairs are
//! meaningful, and those are validated by [`ParamsTable::validate`].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::telemetry::{Gait, ImuSample, LegId, LegSample, Odometry, ProprioFrame, StreamEvent};

/// Amperes of surge current per newton of spike load on the legs.
pub const CURRENT_SURGE_PER_NEWTON: f64 = 0.15;

/// Per-frame decay of a spike episode's force contribution.
pub const SPIKE_DECAY: f64 = 0.7;

/// Lateral hip force applied to a stalled leg (N).
pub const ENTRAPMENT_FORCE: f64 = 80.0;

/// Mean-reversion rate of the hip drift walk.
const DRIFT_REVERSION: f64 = 0.25;

/// Gait oscillation frequency in Hz.
pub fn gait_frequency(gait: Gait) -> f64 {
    match gait {
        Gait::Trot => 2.0,
        Gait::Amble => 1.3,
        Gait::Crawl => 0.7,
    }
}

/// Signal parameters for one terrain-gait pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GaitParams {
    /// Knee force base level (N).
    pub force_base: f64,
    /// Knee force Gaussian noise std (N).
    pub force_noise_std: f64,
    /// Force spike rate (events per second per leg).
    pub spike_rate_hz: f64,
    /// Force spike magnitude (N).
    pub spike_magnitude: f64,
    /// Hip oscillation amplitude, X axis (m).
    pub hip_amp_x: f64,
    /// Hip oscillation amplitude, Y axis (m).
    pub hip_amp_y: f64,
    /// Hip drift random-walk step std (m).
    pub hip_drift_std: f64,
    /// Battery current mean (A).
    pub current_mean: f64,
    /// Battery current noise std (A).
    pub current_std: f64,
    /// IMU acceleration noise std (m/s^2).
    pub imu_noise_std: f64,
    /// Odometry speed ratio in [0, 1].
    pub slip_factor: f64,
}

/// All pairs for one terrain.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TerrainParams {
    pub terrain: String,
    pub gaits: BTreeMap<Gait, GaitParams>,
}

/// The full simulation table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamsTable {
    pub terrains: Vec<TerrainParams>,
}

#[allow(clippy::too_many_arguments)]
fn pair(
    force_base: f64,
    spike_rate_hz: f64,
    spike_magnitude: f64,
    hip_amp_x: f64,
    hip_amp_y: f64,
    hip_drift_std: f64,
    current_mean: f64,
    current_std: f64,
    imu_noise_std: f64,
    slip_factor: f64,
) -> GaitParams {
    GaitParams {
        force_base,
        force_noise_std: 0.0,
        spike_rate_hz,
        spike_magnitude,
        hip_amp_x,
        hip_amp_y,
        hip_drift_std,
        current_mean,
        current_std,
        imu_noise_std,
        slip_factor,
    }
}

impl Default for ParamsTable {
    /// The documented default table.
    ///
    /// Orderings encoded here, not absolute values, are the contract:
    /// current means honor amble > trot > crawl within every terrain;
    /// solid-flat is calmer than every other terrain in hip amplitude and
    /// spike rate; the stable gait of each terrain (trot on solid-flat,
    /// crawl on granular, amble elsewhere) gets the tightest signals.
    /// Knee-force Gaussian noise defaults to zero: spike episodes carry all
    /// force stochasticity, so the spike count tracks the spike rate instead
    /// of saturating on symmetric noise.
    fn default() -> Self {
        let table = [
            ("solid-flat", [
                (Gait::Trot,  pair(40.0, 2.20, 3.2, 0.018, 0.015, 0.0005,  3.0, 0.12, 0.05, 0.97)),
                (Gait::Crawl, pair(40.0, 2.20, 4.1, 0.028, 0.022, 0.0012,  1.5, 0.15, 0.06, 0.97)),
                (Gait::Amble, pair(40.0, 2.20, 4.2, 0.032, 0.026, 0.0014,  4.5, 0.15, 0.07, 0.97)),
            ]),
            ("granular", [
                (Gait::Trot,  pair(50.0, 3.50, 6.8, 0.155, 0.125, 0.0100, 12.0, 0.45, 0.80, 0.60)),
                (Gait::Crawl, pair(50.0, 2.50, 2.8, 0.034, 0.029, 0.0010, 10.5, 0.15, 0.10, 0.93)),
                (Gait::Amble, pair(50.0, 3.40, 6.8, 0.150, 0.120, 0.0090, 13.5, 0.40, 0.60, 0.68)),
            ]),
            ("poor-foothold", [
                (Gait::Trot,  pair(48.0, 3.50, 5.7, 0.130, 0.105, 0.0080,  7.5, 0.40, 0.70, 0.70)),
                (Gait::Crawl, pair(48.0, 3.00, 5.2, 0.100, 0.082, 0.0040,  6.0, 0.25, 0.25, 0.85)),
                (Gait::Amble, pair(48.0, 2.60, 4.5, 0.080, 0.065, 0.0025,  9.0, 0.20, 0.15, 0.92)),
            ]),
            ("high-resistance", [
                (Gait::Trot,  pair(57.0, 3.50, 5.7, 0.140, 0.120, 0.0090, 16.5, 0.45, 0.90, 0.55)),
                (Gait::Crawl, pair(57.0, 4.50, 16.0, 0.120, 0.100, 0.0060, 15.0, 0.40, 0.60, 0.40)),
                (Gait::Amble, pair(57.0, 2.60, 4.7, 0.075, 0.062, 0.0022, 19.0, 0.20, 0.20, 0.88)),
            ]),
        ];
        ParamsTable {
            terrains: table
                .into_iter()
                .map(|(terrain, gaits)| TerrainParams {
                    terrain: terrain.into(),
                    gaits: gaits.into_iter().collect(),
                })
                .collect(),
        }
    }
}

impl ParamsTable {
    pub fn get(&self, terrain: &str, gait: Gait) -> Result<&GaitParams> {
        let t = self
            .terrains
            .iter()
            .find(|t| t.terrain == terrain)
            .ok_or_else(|| Error::config(format!("unknown terrain {terrain:?}")))?;
        t.gaits
            .get(&gait)
            .ok_or_else(|| Error::config(format!("terrain {terrain:?} has no {gait} params")))
    }

    pub fn from_file(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let table: ParamsTable =
            serde_json::from_str(&text).map_err(|e| Error::schema(format!("params: {e}")))?;
        table.validate("solid-flat")?;
        Ok(table)
    }

    /// Checks the ordering invariants the rest of the system relies on.
    pub fn validate(&self, stable_terrain: &str) -> Result<()> {
        for t in &self.terrains {
            let get = |g: Gait| {
                t.gaits
                    .get(&g)
                    .ok_or_else(|| Error::config(format!("{} is missing {g}", t.terrain)))
            };
            let (crawl, trot, amble) = (get(Gait::Crawl)?, get(Gait::Trot)?, get(Gait::Amble)?);
            if !(amble.current_mean > trot.current_mean && trot.current_mean > crawl.current_mean) {
                return Err(Error::config(format!(
                    "{}: current means must order amble > trot > crawl",
                    t.terrain
                )));
            }
            for p in [crawl, trot, amble] {
                if !(0.0..=1.0).contains(&p.slip_factor) {
                    return Err(Error::config(format!("{}: slip outside [0,1]", t.terrain)));
                }
            }
        }
        let stable = self
            .terrains
            .iter()
            .find(|t| t.terrain == stable_terrain)
            .ok_or_else(|| Error::config(format!("missing stable terrain {stable_terrain:?}")))?;
        let stable_amp = stable.gaits.values().map(|p| p.hip_amp_x).fold(0.0, f64::max);
        let stable_rate = stable.gaits.values().map(|p| p.spike_rate_hz).fold(0.0, f64::max);
        for t in &self.terrains {
            if t.terrain == stable_terrain {
                continue;
            }
            let min_amp = t.gaits.values().map(|p| p.hip_amp_x).fold(f64::INFINITY, f64::min);
            let min_rate =
                t.gaits.values().map(|p| p.spike_rate_hz).fold(f64::INFINITY, f64::min);
            if min_amp <= stable_amp || min_rate <= stable_rate {
                return Err(Error::config(format!(
                    "{} must be less stable than {stable_terrain} in amplitude and spike rate",
                    t.terrain
                )));
            }
        }
        Ok(())
    }
}

/// Scripted disturbance within one segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Injection {
    /// Instability ramp ending in a crash at the segment's last frame.
    CrashDrift { pc2_rate: f64 },
    /// One leg stalls from `onset_s` (relative to the segment start) onward.
    Entrapment { leg: u8, onset_s: f64 },
}

/// One scripted stretch of terrain and commanded motion.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Segment {
    /// Seconds; must be positive.
    pub duration: f64,
    pub terrain: String,
    /// Commanded forward velocity (m/s).
    pub v: f64,
    /// Commanded yaw rate (rad/s).
    pub w: f64,
    /// Scripted gait for open-loop generation; trot when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gait: Option<Gait>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inject: Option<Injection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioScript {
    pub segments: Vec<Segment>,
}

impl ScenarioScript {
    /// Single steady segment, the building block of the calibration corpus.
    pub fn steady(terrain: &str, gait: Gait, duration: f64, v: f64) -> Self {
        Self {
            segments: vec![Segment {
                duration,
                terrain: terrain.into(),
                v,
                w: 0.0,
                gait: Some(gait),
                inject: None,
            }],
        }
    }

    pub fn from_file(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let script: ScenarioScript =
            serde_json::from_str(&text).map_err(|e| Error::schema(format!("scenario: {e}")))?;
        script.validate()?;
        Ok(script)
    }

    pub fn validate(&self) -> Result<()> {
        if self.segments.is_empty() {
            return Err(Error::schema("scenario has no segments"));
        }
        for s in &self.segments {
            if s.duration <= 0.0 {
                return Err(Error::schema("segment durations must be positive"));
            }
            if let Some(Injection::Entrapment { leg, onset_s }) = s.inject {
                if LegId::from_id(leg).is_none() {
                    return Err(Error::schema(format!("entrapment leg {leg} out of range")));
                }
                if onset_s < 0.0 || onset_s >= s.duration {
                    return Err(Error::schema("entrapment onset outside its segment"));
                }
            }
        }
        Ok(())
    }

    pub fn total_duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }
}

/// Per-frame gait authority. `scripted` is the segment's gait (trot when the
/// script leaves it open); a closed-loop source replaces it with the policy's
/// choice computed from the previous frame.
pub trait GaitSource {
    fn next_gait(&mut self, prev: Option<&ProprioFrame>, scripted: Gait) -> Gait;
}

/// Follows the script.
pub struct ScriptedGaits;

impl GaitSource for ScriptedGaits {
    fn next_gait(&mut self, _prev: Option<&ProprioFrame>, scripted: Gait) -> Gait {
        scripted
    }
}

/// Ignores the script entirely.
pub struct FixedGait(pub Gait);

impl GaitSource for FixedGait {
    fn next_gait(&mut self, _prev: Option<&ProprioFrame>, _scripted: Gait) -> Gait {
        self.0
    }
}

struct LegState {
    drift_x: f64,
    drift_y: f64,
    /// Oscillator phase, advanced incrementally so gait (frequency) changes
    /// keep the leg position continuous.
    phase: f64,
    /// Decaying spike load on the knee (N).
    spike_load: f64,
}

/// Generates a seeded 16 Hz (or `rate_hz`) telemetry stream for the script.
///
/// Identical inputs produce byte-identical logs. Frames are labeled with the
/// gait and terrain that produced them; a crash-drift segment labels its last
/// frame with a crash event, an entrapment injection labels its onset frame.
pub fn generate(
    table: &ParamsTable,
    script: &ScenarioScript,
    source: &mut dyn GaitSource,
    seed: u64,
    rate_hz: f64,
) -> Result<Vec<ProprioFrame>> {
    script.validate()?;
    let dt = 1.0 / rate_hz;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");

    let mut legs: Vec<LegState> = [0.0, std::f64::consts::PI, std::f64::consts::FRAC_PI_2, 3.0 * std::f64::consts::FRAC_PI_2]
        .iter()
        .map(|&phase| LegState { drift_x: 0.0, drift_y: 0.0, phase, spike_load: 0.0 })
        .collect();

    let mut frames: Vec<ProprioFrame> = Vec::new();
    let mut t = 0.0;
    let mut odom_x = 0.0;
    let mut odom_y = 0.0;
    let mut yaw = 0.0;

    for segment in &script.segments {
        let steps = (segment.duration * rate_hz).round() as usize;
        let scripted = segment.gait.unwrap_or(Gait::Trot);
        let mut entrap_marked = false;
        for k in 0..steps {
            let tau = k as f64 * dt; // time since segment start
            let gait = source.next_gait(frames.last(), scripted);
            let p = table.get(&segment.terrain, gait)?;

            // Injection modifiers.
            let mut amp_mult = 1.0;
            let mut extra_rate = 0.0;
            let mut mag_mult = 1.0;
            let mut slip = p.slip_factor;
            let mut entrapped_leg: Option<LegId> = None;
            let mut event = None;
            match segment.inject {
                Some(Injection::CrashDrift { pc2_rate }) => {
                    amp_mult = 1.0 + pc2_rate * tau;
                    extra_rate = 2.0 * pc2_rate * tau;
                    mag_mult = 1.0 + pc2_rate * tau;
                    if k == steps - 1 {
                        event = Some(StreamEvent::Crash);
                    }
                }
                Some(Injection::Entrapment { leg, onset_s }) if tau >= onset_s => {
                    entrapped_leg = LegId::from_id(leg);
                    slip = 0.0;
                    if !entrap_marked {
                        event = Some(StreamEvent::Entrapment);
                        entrap_marked = true;
                    }
                }
                _ => {}
            }

            let freq = gait_frequency(gait);
            let omega = 2.0 * std::f64::consts::PI * freq;
            let hipf_std = 1.5 + 25.0 * p.hip_amp_y;
            let mut spike_mass = 0.0;
            let leg_samples: [LegSample; 4] = std::array::from_fn(|i| {
                let leg = &mut legs[i];
                leg.phase += omega * dt;
                let osc = leg.phase;
                leg.drift_x += p.hip_drift_std * unit.sample(&mut rng)
                    - DRIFT_REVERSION * leg.drift_x;
                leg.drift_y += p.hip_drift_std * unit.sample(&mut rng)
                    - DRIFT_REVERSION * leg.drift_y;

                let noise = if p.force_noise_std > 0.0 {
                    p.force_noise_std * unit.sample(&mut rng)
                } else {
                    0.0
                };
                let rate = (p.spike_rate_hz + extra_rate) * dt;
                let arrivals = if rate > 0.0 {
                    Poisson::new(rate).expect("positive rate").sample(&mut rng)
                } else {
                    0.0
                };
                leg.spike_load =
                    leg.spike_load * SPIKE_DECAY + arrivals * p.spike_magnitude * mag_mult;
                spike_mass += leg.spike_load;

                let amp_x = p.hip_amp_x * amp_mult;
                let amp_y = p.hip_amp_y * amp_mult;
                let hip_fy = if entrapped_leg == Some(LegId::ALL[i]) {
                    ENTRAPMENT_FORCE + 5.0 * unit.sample(&mut rng)
                } else {
                    hipf_std * unit.sample(&mut rng)
                };
                LegSample {
                    hip_px: amp_x * osc.sin() + leg.drift_x,
                    hip_py: amp_y * (osc + std::f64::consts::FRAC_PI_2).sin() + leg.drift_y,
                    knee_pz: -0.30 + 0.03 * osc.sin(),
                    hip_vx: amp_x * omega * osc.cos(),
                    hip_vy: -amp_y * omega * osc.sin(),
                    knee_vz: 0.03 * omega * osc.cos(),
                    hip_fx: hipf_std * unit.sample(&mut rng),
                    hip_fy,
                    knee_fz: p.force_base + noise + leg.spike_load,
                }
            });

            let current = p.current_mean
                + p.current_std * unit.sample(&mut rng)
                + spike_mass * CURRENT_SURGE_PER_NEWTON;
            let imu = ImuSample {
                ax: p.imu_noise_std * unit.sample(&mut rng),
                ay: p.imu_noise_std * unit.sample(&mut rng),
                az: p.imu_noise_std * unit.sample(&mut rng),
            };

            let speed = segment.v * slip;
            yaw += segment.w * dt;
            odom_x += speed * yaw.cos() * dt;
            odom_y += speed * yaw.sin() * dt;
            let odom = Odometry { x: odom_x, y: odom_y, yaw, vx: speed, vy: 0.0, wz: segment.w };

            frames.push(ProprioFrame {
                t,
                legs: leg_samples,
                current,
                imu,
                odom,
                gait: Some(gait),
                terrain: Some(segment.terrain.clone()),
                event,
            });
            t += dt;
        }
    }
    Ok(frames)
}

/// One calibration log of the bundled corpus.
pub struct CorpusLog {
    pub terrain: String,
    pub gait: Gait,
    pub seed: u64,
    pub frames: Vec<ProprioFrame>,
}

/// Seconds of steady walking per corpus log.
pub const CORPUS_LOG_SECONDS: f64 = 60.0;

/// Deterministic 12-log calibration corpus: every terrain-gait pair, fixed
/// seeds, 60 s each.
pub fn bundled_corpus(table: &ParamsTable, rate_hz: f64) -> Result<Vec<CorpusLog>> {
    let mut logs = Vec::with_capacity(12);
    let mut seed = 101;
    for terrain in table.terrains.iter().map(|t| t.terrain.clone()).collect::<Vec<_>>() {
        for gait in Gait::ALL {
            let script = ScenarioScript::steady(&terrain, gait, CORPUS_LOG_SECONDS, 0.5);
            let frames = generate(table, &script, &mut ScriptedGaits, seed, rate_hz)?;
            logs.push(CorpusLog { terrain: terrain.clone(), gait, seed, frames });
            seed += 1;
        }
    }
    Ok(logs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet_table() -> ParamsTable {
        let mut table = ParamsTable::default();
        for t in &mut table.terrains {
            for p in t.gaits.values_mut() {
                *p = pair(40.0, 0.0, 0.0, 0.0, 0.0, 0.0, 5.0, 0.0, 0.0, 1.0);
                p.force_noise_std = 0.0;
            }
        }
        table
    }

    #[test]
    fn default_table_validates() {
        ParamsTable::default().validate("solid-flat").unwrap();
    }

    #[test]
    fn zero_params_give_constant_signals() {
        let table = quiet_table();
        let script = ScenarioScript::steady("solid-flat", Gait::Trot, 2.0, 0.5);
        let frames = generate(&table, &script, &mut ScriptedGaits, 1, 16.0).unwrap();
        assert_eq!(frames.len(), 32);
        for f in &frames {
            for leg in &f.legs {
                assert_eq!(leg.knee_fz, 40.0);
                assert_eq!(leg.hip_px, 0.0);
            }
            assert_eq!(f.current, 5.0);
        }
    }

    #[test]
    fn same_seed_is_byte_identical() {
        let table = ParamsTable::default();
        let script = ScenarioScript::steady("granular", Gait::Trot, 5.0, 0.5);
        let a = generate(&table, &script, &mut ScriptedGaits, 7, 16.0).unwrap();
        let b = generate(&table, &script, &mut ScriptedGaits, 7, 16.0).unwrap();
        let text = |frames: &[ProprioFrame]| {
            frames.iter().map(crate::telemetry::serialize_frame).collect::<Vec<_>>().join("\n")
        };
        assert_eq!(text(&a), text(&b));
        let c = generate(&table, &script, &mut ScriptedGaits, 8, 16.0).unwrap();
        assert_ne!(text(&a), text(&c));
    }

    #[test]
    fn spike_events_follow_poisson_rate() {
        let mut table = ParamsTable::default();
        for t in &mut table.terrains {
            for p in t.gaits.values_mut() {
                p.force_noise_std = 0.0;
            }
        }
        let script = ScenarioScript::steady("granular", Gait::Trot, 60.0, 0.5);
        let frames = generate(&table, &script, &mut ScriptedGaits, 3, 16.0).unwrap();
        let p = table.get("granular", Gait::Trot).unwrap();
        // Recover arrival counts from the decaying force offsets (noise is
        // zero): offset_t = decay * offset_{t-1} + arrivals * magnitude.
        let mut events = 0.0;
        for leg in 0..4 {
            let mut prev = 0.0;
            for f in &frames {
                let offset = f.legs[leg].knee_fz - p.force_base;
                events += ((offset - SPIKE_DECAY * prev) / p.spike_magnitude).round().max(0.0);
                prev = offset;
            }
        }
        let expect = p.spike_rate_hz * 60.0 * 4.0;
        let sigma = expect.sqrt();
        assert!(
            (events - expect).abs() <= 3.0 * sigma,
            "events {events} vs Poisson expectation {expect} (3 sigma {:.1})",
            3.0 * sigma
        );
    }

    #[test]
    fn unknown_terrain_is_config_error() {
        let table = ParamsTable::default();
        let script = ScenarioScript::steady("lava", Gait::Trot, 1.0, 0.5);
        let err = generate(&table, &script, &mut ScriptedGaits, 1, 16.0).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn corpus_has_all_twelve_pairs() {
        let table = ParamsTable::default();
        let logs = bundled_corpus(&table, 16.0).unwrap();
        assert_eq!(logs.len(), 12);
        let mut pairs: Vec<(String, Gait)> =
            logs.iter().map(|l| (l.terrain.clone(), l.gait)).collect();
        pairs.sort();
        pairs.dedup();
        assert_eq!(pairs.len(), 12);
        for log in &logs {
            assert_eq!(log.frames.len(), 960);
            assert_eq!(log.frames[0].terrain.as_deref(), Some(log.terrain.as_str()));
            assert_eq!(log.frames[0].gait, Some(log.gait));
        }
    }

    #[test]
    fn gait_switch_changes_current_per_ordering() {
        // Nominal ordering is observed where spike surges are negligible; on
        // mismatched terrain-gait pairs the surge term dominates instead.
        let table = ParamsTable::default();
        let mean_current = |gait: Gait| {
            let script = ScenarioScript::steady("solid-flat", gait, 30.0, 0.5);
            let frames = generate(&table, &script, &mut ScriptedGaits, 17, 16.0).unwrap();
            frames.iter().map(|f| f.current).sum::<f64>() / frames.len() as f64
        };
        let (crawl, trot, amble) = (
            mean_current(Gait::Crawl),
            mean_current(Gait::Trot),
            mean_current(Gait::Amble),
        );
        assert!(amble > trot && trot > crawl, "{amble} > {trot} > {crawl} violated");
    }

    #[test]
    fn higher_spike_rate_raises_spike_feature() {
        use crate::config::Config;
        use crate::features::extract_features_seq;
        // Symmetric Gaussian noise saturates the any-leg count, so the
        // rate response is measured on the spike process alone.
        let mut table = ParamsTable::default();
        for t in &mut table.terrains {
            for p in t.gaits.values_mut() {
                p.force_noise_std = 0.0;
            }
        }
        let cfg = Config::default();
        let mean_count = |table: &ParamsTable, seed| {
            let script = ScenarioScript::steady("granular", Gait::Crawl, 625.0, 0.5);
            let frames = generate(table, &script, &mut ScriptedGaits, seed, 16.0).unwrap();
            let batch = extract_features_seq(&frames, &cfg).unwrap();
            batch.vectors.iter().map(|v| v[5]).sum::<f64>() / batch.vectors.len() as f64
        };
        let low = mean_count(&table, 5);
        for t in &mut table.terrains {
            if t.terrain == "granular" {
                t.gaits.get_mut(&Gait::Crawl).unwrap().spike_rate_hz *= 4.0;
            }
        }
        let high = mean_count(&table, 5);
        assert!(
            high > low + 0.1,
            "spike count must increase with spike rate: {low} -> {high}"
        );
    }

    #[test]
    fn higher_amplitude_raises_spread_feature() {
        use crate::config::Config;
        use crate::features::extract_features_seq;
        let mut table = ParamsTable::default();
        let cfg = Config::default();
        let mean_omega = |table: &ParamsTable, seed| {
            let script = ScenarioScript::steady("granular", Gait::Crawl, 625.0, 0.5);
            let frames = generate(table, &script, &mut ScriptedGaits, seed, 16.0).unwrap();
            let batch = extract_features_seq(&frames, &cfg).unwrap();
            batch.vectors.iter().map(|v| v[6]).sum::<f64>() / batch.vectors.len() as f64
        };
        let low = mean_omega(&table, 6);
        for t in &mut table.terrains {
            if t.terrain == "granular" {
                t.gaits.get_mut(&Gait::Crawl).unwrap().hip_amp_x *= 2.0;
            }
        }
        let high = mean_omega(&table, 6);
        assert!(high > low * 1.5, "spread must increase with amplitude: {low} -> {high}");
    }

    #[test]
    fn entrapment_injection_stalls_odometry_and_loads_leg() {
        let table = ParamsTable::default();
        let script = ScenarioScript {
            segments: vec![Segment {
                duration: 10.0,
                terrain: "solid-flat".into(),
                v: 0.5,
                w: 0.0,
                gait: Some(Gait::Trot),
                inject: Some(Injection::Entrapment { leg: 2, onset_s: 5.0 }),
            }],
        };
        let frames = generate(&table, &script, &mut ScriptedGaits, 9, 16.0).unwrap();
        let before = &frames[40];
        let after = &frames[120];
        assert!(before.odom.speed() > 0.4);
        assert_eq!(after.odom.speed(), 0.0);
        assert!(after.legs[1].hip_fy > 50.0, "stalled leg must show high lateral effort");
        assert_eq!(frames[80].event, Some(StreamEvent::Entrapment));
    }

    #[test]
    fn crash_drift_ramps_instability_and_marks_crash() {
        let table = ParamsTable::default();
        let script = ScenarioScript {
            segments: vec![Segment {
                duration: 3.0,
                terrain: "solid-flat".into(),
                v: 0.5,
                w: 0.0,
                gait: Some(Gait::Trot),
                inject: Some(Injection::CrashDrift { pc2_rate: 4.0 }),
            }],
        };
        let frames = generate(&table, &script, &mut ScriptedGaits, 13, 16.0).unwrap();
        assert_eq!(frames.last().unwrap().event, Some(StreamEvent::Crash));
        let early_amp: f64 =
            frames[..8].iter().map(|f| f.legs[0].hip_px.abs()).fold(0.0, f64::max);
        let late_amp: f64 =
            frames[40..].iter().map(|f| f.legs[0].hip_px.abs()).fold(0.0, f64::max);
        assert!(late_amp > 4.0 * early_amp, "{early_amp} -> {late_amp}");
    }

    #[test]
    fn scenario_script_round_trips_as_json() {
        let script = ScenarioScript {
            segments: vec![
                Segment {
                    duration: 10.0,
                    terrain: "granular".into(),
                    v: 0.5,
                    w: 0.1,
                    gait: None,
                    inject: Some(Injection::CrashDrift { pc2_rate: 2.0 }),
                },
                Segment {
                    duration: 5.0,
                    terrain: "solid-flat".into(),
                    v: 0.3,
                    w: 0.0,
                    gait: Some(Gait::Amble),
                    inject: Some(Injection::Entrapment { leg: 3, onset_s: 1.0 }),
                },
            ],
        };
        let text = serde_json::to_string(&script).unwrap();
        assert!(text.contains("\"kind\":\"crash_drift\""));
        let back: ScenarioScript = serde_json::from_str(&text).unwrap();
        assert_eq!(back.segments.len(), 2);
        assert_eq!(back.segments[1].inject, script.segments[1].inject);
    }
}
