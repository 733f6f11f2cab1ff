//! Telemetry domain types, the line-delimited JSON log format, and per-leg
//! sliding windows.
//!
//! One [`ProprioFrame`] is a single 16 Hz sample of everything the estimator
//! consumes: the 36 joint signals (position, velocity, force per joint of all
//! four legs), battery current, IMU acceleration, and odometry. Frames are
//! immutable after parse and safe to share read-only across threads.

use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};

/// Leg identity. Numbering is fixed: 1 front-left, 2 front-right,
/// 3 rear-left, 4 rear-right.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LegId {
    FrontLeft,
    FrontRight,
    RearLeft,
    RearRight,
}

impl LegId {
    pub const ALL: [LegId; 4] = [
        LegId::FrontLeft,
        LegId::FrontRight,
        LegId::RearLeft,
        LegId::RearRight,
    ];

    /// 1-based wire id.
    pub fn id(self) -> u8 {
        match self {
            LegId::FrontLeft => 1,
            LegId::FrontRight => 2,
            LegId::RearLeft => 3,
            LegId::RearRight => 4,
        }
    }

    /// 0-based array index.
    pub fn index(self) -> usize {
        self.id() as usize - 1
    }

    pub fn from_id(id: u8) -> Option<LegId> {
        match id {
            1 => Some(LegId::FrontLeft),
            2 => Some(LegId::FrontRight),
            3 => Some(LegId::RearLeft),
            4 => Some(LegId::RearRight),
            _ => None,
        }
    }

    /// Legs 1 and 3 are on the robot's left side.
    pub fn is_left(self) -> bool {
        matches!(self, LegId::FrontLeft | LegId::RearLeft)
    }
}

/// Locomotion gaits. Trot keeps two feet down and is fast; crawl and amble
/// keep three down. Maximum speed orders trot = amble > crawl, nominal
/// current draw orders amble > trot > crawl.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum Gait {
    Trot,
    Crawl,
    Amble,
}

impl Gait {
    pub const ALL: [Gait; 3] = [Gait::Trot, Gait::Crawl, Gait::Amble];

    pub fn name(self) -> &'static str {
        match self {
            Gait::Trot => "trot",
            Gait::Crawl => "crawl",
            Gait::Amble => "amble",
        }
    }
}

impl std::fmt::Display for Gait {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Labeled stream events.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StreamEvent {
    Crash,
    Entrapment,
}

/// One leg's joint feedback: hip X/Y and knee Z position (m), velocity (m/s),
/// and force (N).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LegSample {
    pub hip_px: f64,
    pub hip_py: f64,
    pub knee_pz: f64,
    pub hip_vx: f64,
    pub hip_vy: f64,
    pub knee_vz: f64,
    pub hip_fx: f64,
    pub hip_fy: f64,
    pub knee_fz: f64,
}

impl LegSample {
    fn all_finite(&self) -> bool {
        [
            self.hip_px, self.hip_py, self.knee_pz, self.hip_vx, self.hip_vy, self.knee_vz,
            self.hip_fx, self.hip_fy, self.knee_fz,
        ]
        .iter()
        .all(|v| v.is_finite())
    }

    /// Largest force magnitude across the three measured force channels.
    pub fn max_force(&self) -> f64 {
        self.hip_fx.abs().max(self.hip_fy.abs()).max(self.knee_fz.abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ImuSample {
    pub ax: f64,
    pub ay: f64,
    pub az: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Odometry {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    pub vx: f64,
    pub vy: f64,
    pub wz: f64,
}

impl Odometry {
    pub fn speed(&self) -> f64 {
        self.vx.hypot(self.vy)
    }
}

/// One telemetry sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ProprioFrame {
    /// Seconds; strictly increasing within a stream.
    pub t: f64,
    pub legs: [LegSample; 4],
    /// Battery current draw in amperes.
    pub current: f64,
    pub imu: ImuSample,
    pub odom: Odometry,
    pub gait: Option<Gait>,
    pub terrain: Option<String>,
    pub event: Option<StreamEvent>,
}

impl ProprioFrame {
    pub fn leg(&self, id: LegId) -> &LegSample {
        &self.legs[id.index()]
    }

    fn all_finite(&self) -> bool {
        self.t.is_finite()
            && self.current.is_finite()
            && self.legs.iter().all(LegSample::all_finite)
            && [self.imu.ax, self.imu.ay, self.imu.az].iter().all(|v| v.is_finite())
            && [
                self.odom.x, self.odom.y, self.odom.yaw, self.odom.vx, self.odom.vy, self.odom.wz,
            ]
            .iter()
            .all(|v| v.is_finite())
    }

    /// Checks the physical force envelope.
    pub fn check_force_bound(&self, bound: f64) -> Result<()> {
        for id in LegId::ALL {
            let f = self.leg(id).max_force();
            if f >= bound {
                return Err(Error::signal(format!(
                    "leg {} force {f:.1} N exceeds bound {bound:.1} N",
                    id.id()
                )));
            }
        }
        Ok(())
    }
}

// Wire representation. Leg entries carry an explicit id so record order
// cannot silently swap legs.
#[derive(Serialize, Deserialize)]
struct LegRecord {
    id: u8,
    hip_px: f64,
    hip_py: f64,
    knee_pz: f64,
    hip_vx: f64,
    hip_vy: f64,
    knee_vz: f64,
    hip_fx: f64,
    hip_fy: f64,
    knee_fz: f64,
}

#[derive(Serialize, Deserialize)]
struct FrameRecord {
    t: f64,
    legs: Vec<LegRecord>,
    current: f64,
    imu: ImuSample,
    odom: Odometry,
    #[serde(skip_serializing_if = "Option::is_none")]
    gait: Option<Gait>,
    #[serde(skip_serializing_if = "Option::is_none")]
    terrain: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    event: Option<StreamEvent>,
}

/// Parses one log line into a frame. `line_no` is used for error reporting
/// only. Missing optional fields default to absent; a missing or duplicated
/// leg is a parse error naming the leg.
pub fn parse_frame(line: &str, line_no: usize) -> Result<ProprioFrame> {
    let rec: FrameRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
        line: line_no,
        reason: e.to_string(),
    })?;

    let mut legs: [Option<LegSample>; 4] = [None, None, None, None];
    for leg in &rec.legs {
        let id = LegId::from_id(leg.id).ok_or_else(|| Error::Parse {
            line: line_no,
            reason: format!("unknown leg id {}", leg.id),
        })?;
        let slot = &mut legs[id.index()];
        if slot.is_some() {
            return Err(Error::Parse {
                line: line_no,
                reason: format!("duplicate leg {}", leg.id),
            });
        }
        *slot = Some(LegSample {
            hip_px: leg.hip_px,
            hip_py: leg.hip_py,
            knee_pz: leg.knee_pz,
            hip_vx: leg.hip_vx,
            hip_vy: leg.hip_vy,
            knee_vz: leg.knee_vz,
            hip_fx: leg.hip_fx,
            hip_fy: leg.hip_fy,
            knee_fz: leg.knee_fz,
        });
    }
    for id in LegId::ALL {
        if legs[id.index()].is_none() {
            return Err(Error::Parse {
                line: line_no,
                reason: format!("missing leg {}", id.id()),
            });
        }
    }

    let frame = ProprioFrame {
        t: rec.t,
        legs: legs.map(Option::unwrap),
        current: rec.current,
        imu: rec.imu,
        odom: rec.odom,
        gait: rec.gait,
        terrain: rec.terrain,
        event: rec.event,
    };
    if !frame.all_finite() {
        return Err(Error::Parse {
            line: line_no,
            reason: "non-finite value".into(),
        });
    }
    Ok(frame)
}

/// Serializes a frame to its canonical log line (legs ordered by id, fixed
/// field order, no trailing newline).
pub fn serialize_frame(frame: &ProprioFrame) -> String {
    let rec = FrameRecord {
        t: frame.t,
        legs: LegId::ALL
            .iter()
            .map(|&id| {
                let s = frame.leg(id);
                LegRecord {
                    id: id.id(),
                    hip_px: s.hip_px,
                    hip_py: s.hip_py,
                    knee_pz: s.knee_pz,
                    hip_vx: s.hip_vx,
                    hip_vy: s.hip_vy,
                    knee_vz: s.knee_vz,
                    hip_fx: s.hip_fx,
                    hip_fy: s.hip_fy,
                    knee_fz: s.knee_fz,
                }
            })
            .collect(),
        current: frame.current,
        imu: frame.imu,
        odom: frame.odom,
        gait: frame.gait,
        terrain: frame.terrain.clone(),
        event: frame.event,
    };
    serde_json::to_string(&rec).expect("frame serialization cannot fail")
}

/// Streaming log reader enforcing strictly increasing timestamps.
pub struct LogReader<R: BufRead> {
    inner: R,
    line_no: usize,
    prev_t: Option<f64>,
    buf: String,
}

impl<R: BufRead> LogReader<R> {
    pub fn new(inner: R) -> Self {
        Self { inner, line_no: 0, prev_t: None, buf: String::new() }
    }
}

impl<R: BufRead> Iterator for LogReader<R> {
    type Item = Result<ProprioFrame>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            self.buf.clear();
            match self.inner.read_line(&mut self.buf) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => return Some(Err(e.into())),
            }
            self.line_no += 1;
            let line = self.buf.trim();
            if line.is_empty() {
                continue;
            }
            let frame = match parse_frame(line, self.line_no) {
                Ok(f) => f,
                Err(e) => return Some(Err(e)),
            };
            if let Some(prev) = self.prev_t {
                if frame.t <= prev {
                    return Some(Err(Error::Sequence {
                        line: self.line_no,
                        t: frame.t,
                        prev,
                    }));
                }
            }
            self.prev_t = Some(frame.t);
            return Some(Ok(frame));
        }
    }
}

/// Reads a whole log into memory.
pub fn read_log<R: BufRead>(reader: R) -> Result<Vec<ProprioFrame>> {
    LogReader::new(reader).collect()
}

pub fn read_log_file(path: impl AsRef<std::path::Path>) -> Result<Vec<ProprioFrame>> {
    let file = std::fs::File::open(path)?;
    read_log(std::io::BufReader::new(file))
}

pub fn write_log<W: Write>(mut writer: W, frames: &[ProprioFrame]) -> Result<()> {
    for frame in frames {
        writeln!(writer, "{}", serialize_frame(frame))?;
    }
    Ok(())
}

/// Fixed-capacity ring of samples, oldest first.
#[derive(Debug, Clone)]
pub struct Ring {
    buf: VecDeque<f64>,
    capacity: usize,
}

impl Ring {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "ring capacity must be positive");
        Self { buf: VecDeque::with_capacity(capacity + 1), capacity }
    }

    pub fn push(&mut self, v: f64) {
        self.buf.push_back(v);
        if self.buf.len() > self.capacity {
            self.buf.pop_front();
        }
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.buf.len() == self.capacity
    }

    /// Oldest-to-newest iteration.
    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.buf.iter().copied()
    }

    pub fn newest(&self) -> Option<f64> {
        self.buf.back().copied()
    }

    pub fn oldest(&self) -> Option<f64> {
        self.buf.front().copied()
    }
}

/// Per-leg sliding windows over the signals the feature stage consumes:
/// knee Z force (length `n`) and hip X/Y position (length `m`).
#[derive(Debug, Clone)]
pub struct SignalWindow {
    knee_fz: [Ring; 4],
    hip_px: [Ring; 4],
    hip_py: [Ring; 4],
    force_capacity: usize,
    pos_capacity: usize,
}

impl SignalWindow {
    pub fn new(n: usize, m: usize) -> Self {
        Self {
            knee_fz: std::array::from_fn(|_| Ring::new(n)),
            hip_px: std::array::from_fn(|_| Ring::new(m)),
            hip_py: std::array::from_fn(|_| Ring::new(m)),
            force_capacity: n,
            pos_capacity: m,
        }
    }

    pub fn push(&mut self, frame: &ProprioFrame) {
        for id in LegId::ALL {
            let i = id.index();
            let leg = frame.leg(id);
            self.knee_fz[i].push(leg.knee_fz);
            self.hip_px[i].push(leg.hip_px);
            self.hip_py[i].push(leg.hip_py);
        }
    }

    pub fn force_capacity(&self) -> usize {
        self.force_capacity
    }

    pub fn pos_capacity(&self) -> usize {
        self.pos_capacity
    }

    /// Samples currently held in the force rings.
    pub fn force_fill(&self) -> usize {
        self.knee_fz[0].len()
    }

    /// Samples currently held in the position rings.
    pub fn pos_fill(&self) -> usize {
        self.hip_px[0].len()
    }

    pub fn force_warm(&self) -> bool {
        self.force_fill() == self.force_capacity
    }

    pub fn pos_warm(&self) -> bool {
        self.pos_fill() == self.pos_capacity
    }

    pub fn knee_fz(&self, id: LegId) -> &Ring {
        &self.knee_fz[id.index()]
    }

    pub fn hip_px(&self, id: LegId) -> &Ring {
        &self.hip_px[id.index()]
    }

    pub fn hip_py(&self, id: LegId) -> &Ring {
        &self.hip_py[id.index()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn test_frame(t: f64) -> ProprioFrame {
        ProprioFrame {
            t,
            legs: std::array::from_fn(|i| LegSample {
                hip_px: 0.1 + i as f64 * 0.01,
                hip_py: -0.05,
                knee_pz: -0.3,
                hip_vx: 0.0,
                hip_vy: 0.0,
                knee_vz: 0.0,
                hip_fx: 1.0,
                hip_fy: 2.0,
                knee_fz: 40.0 + i as f64,
            }),
            current: 5.2,
            imu: ImuSample { ax: 0.01, ay: -0.02, az: 0.03 },
            odom: Odometry { x: 1.0, y: 2.0, yaw: 0.1, vx: 0.4, vy: 0.0, wz: 0.0 },
            gait: None,
            terrain: None,
            event: None,
        }
    }

    #[test]
    fn parse_full_record_passthrough() {
        let line = serialize_frame(&test_frame(0.0625));
        let frame = parse_frame(&line, 1).unwrap();
        assert_eq!(frame.event, None);
        assert_eq!(frame.current, 5.2);
        assert_eq!(frame.leg(LegId::RearRight).knee_fz, 43.0);
    }

    #[test]
    fn parse_missing_leg_names_it() {
        let line = serialize_frame(&test_frame(0.0));
        // Remove leg 3 from the serialized record.
        let mut rec: serde_json::Value = serde_json::from_str(&line).unwrap();
        let legs = rec["legs"].as_array_mut().unwrap();
        legs.retain(|l| l["id"] != 3);
        let line = serde_json::to_string(&rec).unwrap();
        let err = parse_frame(&line, 7).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("leg 3"), "unexpected error: {msg}");
        assert!(msg.contains("line 7"), "unexpected error: {msg}");
    }

    #[test]
    fn optional_labels_round_trip() {
        let mut frame = test_frame(1.0);
        frame.gait = Some(Gait::Crawl);
        frame.terrain = Some("granular".into());
        frame.event = Some(StreamEvent::Entrapment);
        let line = serialize_frame(&frame);
        assert!(line.contains("\"gait\":\"crawl\""));
        assert!(line.contains("\"event\":\"entrapment\""));
        let back = parse_frame(&line, 1).unwrap();
        assert_eq!(back, frame);
    }

    #[test]
    fn reader_rejects_non_monotone_t() {
        let a = serialize_frame(&test_frame(1.0));
        let b = serialize_frame(&test_frame(0.5));
        let text = format!("{a}\n{b}\n");
        let frames: Vec<_> = LogReader::new(text.as_bytes()).collect();
        assert!(frames[0].is_ok());
        assert!(matches!(frames[1], Err(Error::Sequence { line: 2, .. })));
    }

    #[test]
    fn reader_skips_blank_lines() {
        let a = serialize_frame(&test_frame(1.0));
        let text = format!("\n{a}\n\n");
        let frames = read_log(text.as_bytes()).unwrap();
        assert_eq!(frames.len(), 1);
    }

    #[test]
    fn window_fifo_eviction() {
        let mut w = SignalWindow::new(4, 4);
        for k in 0..7 {
            let mut f = test_frame(k as f64);
            f.legs[0].knee_fz = k as f64;
            w.push(&f);
        }
        assert_eq!(w.force_fill(), 4);
        let held: Vec<f64> = w.knee_fz(LegId::FrontLeft).iter().collect();
        assert_eq!(held, vec![3.0, 4.0, 5.0, 6.0]);
    }

    #[test]
    fn window_reports_fill() {
        let mut w = SignalWindow::new(16, 8);
        assert_eq!(w.force_fill(), 0);
        w.push(&test_frame(0.0));
        assert_eq!(w.force_fill(), 1);
        assert_eq!(w.pos_fill(), 1);
        assert!(!w.force_warm());
    }

    #[test]
    fn force_bound_check() {
        let mut f = test_frame(0.0);
        f.legs[1].knee_fz = 1500.0;
        let err = f.check_force_bound(1000.0).unwrap_err();
        assert!(err.to_string().contains("leg 2"));
    }
}
