//! The per-frame runtime: features, projection, gait policy, and safety,
//! wired into one stream processor that emits decision records.
//!
//! Decision stream format: line-delimited JSON, one record per warm frame
//! (nothing is emitted while the signal windows fill).

use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};

use crate::config::Config;
use crate::error::{Error, Result};
use crate::features::FeatureExtractor;
use crate::gait_policy::{self, DecisionCase, NavMode, PolicyState};
use crate::profile::CalibrationProfile;
use crate::projection::PcaModel;
use crate::safety::{CrashPredictorConfig, EntrapmentConfig, RecoveryCommand, SafetyMonitor};
use crate::simulator::GaitSource;
use crate::telemetry::{Gait, ProprioFrame};
use crate::terrain_model::ZoneSet;

/// One line of the decision stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub t: f64,
    pub pc1: f64,
    pub pc2: f64,
    pub gait: Option<Gait>,
    pub active_ellipse: String,
    pub case: DecisionCase,
    pub mode: NavMode,
    pub crash_risk: f64,
    pub halt: bool,
    pub e: [f64; 4],
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub recovery: Option<RecoveryCommand>,
}

/// Full runtime for one telemetry stream.
pub struct StreamProcessor {
    model: PcaModel,
    zones: ZoneSet,
    cfg: Config,
    extractor: FeatureExtractor,
    policy: PolicyState,
    monitor: SafetyMonitor,
    last_t: Option<f64>,
    frames_seen: u64,
    decisions_emitted: u64,
}

impl StreamProcessor {
    pub fn new(profile: &CalibrationProfile, cfg: &Config) -> Result<Self> {
        cfg.validate()?;
        let zones = profile.zone_set()?;
        let policy = gait_policy::init(&zones);
        let monitor = SafetyMonitor::new(
            CrashPredictorConfig {
                window: cfg.crash_window_frames(),
                pc2_threshold: profile.safety.pc2_threshold,
            },
            EntrapmentConfig {
                window: cfg.entrap_window,
                f_ref: profile.safety.f_ref,
                v_min: cfg.v_min,
                e_thresh: cfg.e_thresh,
            },
        );
        Ok(Self {
            model: profile.pca_model(),
            zones,
            cfg: cfg.clone(),
            extractor: FeatureExtractor::new(cfg),
            policy,
            monitor,
            last_t: None,
            frames_seen: 0,
            decisions_emitted: 0,
        })
    }

    pub fn zones(&self) -> &ZoneSet {
        &self.zones
    }

    /// The gait the policy currently selects (None while halted).
    pub fn current_gait(&self) -> Option<Gait> {
        self.policy.gait()
    }

    pub fn frames_seen(&self) -> u64 {
        self.frames_seen
    }

    pub fn decisions_emitted(&self) -> u64 {
        self.decisions_emitted
    }

    pub fn recovery_count(&self) -> u32 {
        self.monitor.recovery_count()
    }

    /// Processes one frame. Returns `None` during warm-up. `commanded` is the
    /// external planner's (v*, w*), needed for entrapment scoring.
    pub fn process(
        &mut self,
        frame: &ProprioFrame,
        commanded: (f64, f64),
    ) -> Result<Option<DecisionRecord>> {
        if let Some(prev) = self.last_t {
            if frame.t <= prev {
                return Err(Error::Sequence { line: self.frames_seen as usize + 1, t: frame.t, prev });
            }
        }
        self.last_t = Some(frame.t);
        self.frames_seen += 1;
        frame.check_force_bound(self.cfg.force_bound)?;
        self.monitor.push_frame(frame);

        let Some(vector) = self.extractor.push(frame)? else {
            return Ok(None);
        };
        let p = self.model.project(&vector)?;
        let (next, decision) = gait_policy::step(&self.policy, frame.t, &p, &self.zones, &self.cfg);
        self.policy = next;
        let verdict =
            self.monitor.observe(p, commanded, &self.zones, self.policy.active_index());

        let mode = if decision.mode == NavMode::Halt || verdict.halt {
            NavMode::Halt
        } else if verdict.recovery.is_some() {
            NavMode::Recovery
        } else {
            NavMode::Normal
        };
        self.decisions_emitted += 1;
        Ok(Some(DecisionRecord {
            t: decision.t,
            pc1: decision.p.pc1,
            pc2: decision.p.pc2,
            gait: decision.gait,
            active_ellipse: decision.active_ellipse,
            case: decision.case,
            mode,
            crash_risk: verdict.crash_risk,
            halt: verdict.halt || decision.case == DecisionCase::OutGammaSafe,
            e: verdict.scores,
            recovery: verdict.recovery,
        }))
    }
}

pub fn serialize_decision(d: &DecisionRecord) -> String {
    serde_json::to_string(d).expect("decision serialization")
}

pub fn write_decisions<W: Write>(mut w: W, decisions: &[DecisionRecord]) -> Result<()> {
    for d in decisions {
        writeln!(w, "{}", serialize_decision(d))?;
    }
    Ok(())
}

pub fn read_decisions<R: BufRead>(r: R) -> Result<Vec<DecisionRecord>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let d: DecisionRecord = serde_json::from_str(&line)
            .map_err(|e| Error::schema(format!("decision line {}: {e}", i + 1)))?;
        out.push(d);
    }
    Ok(out)
}

pub fn read_decisions_file(path: impl AsRef<std::path::Path>) -> Result<Vec<DecisionRecord>> {
    let file = std::fs::File::open(path)?;
    read_decisions(std::io::BufReader::new(file))
}

/// Gait source that closes the loop: each frame is fed through a full
/// processor and the policy's chosen gait drives the next frame's signal
/// model. While the policy halts (no gait), the generator keeps the last
/// walking gait; velocity feedback is out of scope for the gait loop.
pub struct ClosedLoopGaits {
    processor: StreamProcessor,
    commanded: (f64, f64),
    last_gait: Gait,
    pub decisions: Vec<DecisionRecord>,
}

impl ClosedLoopGaits {
    pub fn new(profile: &CalibrationProfile, cfg: &Config, commanded: (f64, f64)) -> Result<Self> {
        Ok(Self {
            processor: StreamProcessor::new(profile, cfg)?,
            commanded,
            last_gait: Gait::Trot,
            decisions: Vec::new(),
        })
    }
}

impl GaitSource for ClosedLoopGaits {
    fn next_gait(&mut self, prev: Option<&ProprioFrame>, _scripted: Gait) -> Gait {
        if let Some(frame) = prev {
            let decision = self
                .processor
                .process(frame, self.commanded)
                .expect("closed-loop frames are well-formed");
            if let Some(d) = decision {
                if let Some(g) = d.gait {
                    self.last_gait = g;
                }
                self.decisions.push(d);
            }
        }
        self.last_gait
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibrate::calibrate;
    use crate::simulator::{bundled_corpus, generate, ParamsTable, ScenarioScript, ScriptedGaits};
    use once_cell_like::corpus_profile;

    /// Shared fixture: calibrate once per test binary.
    mod once_cell_like {
        use super::*;
        use std::sync::OnceLock;

        static PROFILE: OnceLock<(CalibrationProfile, ParamsTable)> = OnceLock::new();

        pub fn corpus_profile() -> &'static (CalibrationProfile, ParamsTable) {
            PROFILE.get_or_init(|| {
                let cfg = Config::default();
                let table = ParamsTable::default();
                let logs: Vec<_> = bundled_corpus(&table, 16.0)
                    .unwrap()
                    .into_iter()
                    .map(|l| l.frames)
                    .collect();
                (calibrate(&logs, &cfg).unwrap(), table)
            })
        }
    }

    #[test]
    fn solid_flat_stream_stays_in_trot() {
        let (profile, table) = corpus_profile();
        let cfg = Config::default();
        let script = ScenarioScript::steady("solid-flat", Gait::Trot, 20.0, 0.5);
        let frames = generate(table, &script, &mut ScriptedGaits, 555, 16.0).unwrap();
        let mut proc = StreamProcessor::new(profile, &cfg).unwrap();
        let mut decisions = Vec::new();
        for f in &frames {
            if let Some(d) = proc.process(f, (0.5, 0.0)).unwrap() {
                decisions.push(d);
            }
        }
        assert_eq!(decisions.len(), frames.len() - 15, "one decision per warm frame");
        let trot = decisions.iter().filter(|d| d.gait == Some(Gait::Trot)).count();
        assert!(
            trot as f64 >= 0.95 * decisions.len() as f64,
            "only {trot}/{} trot decisions",
            decisions.len()
        );
    }

    #[test]
    fn non_monotone_stream_is_rejected() {
        let (profile, table) = corpus_profile();
        let cfg = Config::default();
        let script = ScenarioScript::steady("solid-flat", Gait::Trot, 1.0, 0.5);
        let frames = generate(table, &script, &mut ScriptedGaits, 1, 16.0).unwrap();
        let mut proc = StreamProcessor::new(profile, &cfg).unwrap();
        proc.process(&frames[5], (0.5, 0.0)).unwrap();
        let err = proc.process(&frames[2], (0.5, 0.0)).unwrap_err();
        assert!(matches!(err, Error::Sequence { .. }));
    }

    #[test]
    fn decision_stream_round_trips() {
        let (profile, table) = corpus_profile();
        let cfg = Config::default();
        let script = ScenarioScript::steady("granular", Gait::Trot, 5.0, 0.5);
        let frames = generate(table, &script, &mut ScriptedGaits, 7, 16.0).unwrap();
        let mut proc = StreamProcessor::new(profile, &cfg).unwrap();
        let mut decisions = Vec::new();
        for f in &frames {
            if let Some(d) = proc.process(f, (0.5, 0.0)).unwrap() {
                decisions.push(d);
            }
        }
        let mut buf = Vec::new();
        write_decisions(&mut buf, &decisions).unwrap();
        let back = read_decisions(buf.as_slice()).unwrap();
        assert_eq!(back, decisions);
    }

    #[test]
    fn identical_runs_are_byte_identical() {
        let (profile, table) = corpus_profile();
        let cfg = Config::default();
        let script = ScenarioScript::steady("poor-foothold", Gait::Trot, 8.0, 0.5);
        let frames = generate(table, &script, &mut ScriptedGaits, 99, 16.0).unwrap();
        let run = || {
            let mut proc = StreamProcessor::new(profile, &cfg).unwrap();
            let mut buf = Vec::new();
            for f in &frames {
                if let Some(d) = proc.process(f, (0.5, 0.0)).unwrap() {
                    buf.extend_from_slice(serialize_decision(&d).as_bytes());
                    buf.push(b'\n');
                }
            }
            buf
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn closed_loop_converges_on_granular() {
        let (profile, table) = corpus_profile();
        let cfg = Config::default();
        let script = ScenarioScript::steady("granular", Gait::Trot, 10.0, 0.5);
        let mut source = ClosedLoopGaits::new(profile, &cfg, (0.5, 0.0)).unwrap();
        let frames = generate(table, &script, &mut source, 42, 16.0).unwrap();
        // Feed the final frame through as well.
        source.next_gait(frames.last(), Gait::Trot);
        // Converged when the walking gait reaches crawl and holds it for two
        // seconds; rare boundary excursions may hunt briefly afterwards.
        let hold = 32;
        let gaits: Vec<(f64, Gait)> =
            source.decisions.iter().filter_map(|d| d.gait.map(|g| (d.t, g))).collect();
        let converged_at = gaits
            .windows(hold)
            .find(|w| w.iter().all(|(_, g)| *g == Gait::Crawl))
            .map(|w| w[0].0);
        let t_c = converged_at.expect("never held crawl for two seconds");
        assert!(t_c <= 5.0, "converged too late, at t={t_c}");
        let crawl_share = gaits.iter().filter(|(t, g)| *t >= t_c && *g == Gait::Crawl).count()
            as f64
            / gaits.iter().filter(|(t, _)| *t >= t_c).count() as f64;
        assert!(crawl_share >= 0.8, "crawl share after convergence only {crawl_share:.2}");
    }
}
