//! The five-case gait-selection state machine.
//!
//! Evaluated in order for each new PCA point `p`:
//!
//! 1. `p` in the LVZ: trot, exclusions cleared.
//! 2. `p` in the active ellipse: keep the gait.
//! 3. `p` in the stable zone but not the active ellipse: retire the active
//!    ellipse and adopt the smallest-area SZ ellipse containing `p`.
//! 4. `p` inside the safety region but outside the SZ: retire the active
//!    ellipse and adopt the nearest (squared Mahalanobis) non-LVZ ellipse.
//! 5. `p` outside the safety region: halt, no gait.
//!
//! Retired ellipses stay excluded until the choice demonstrably stabilizes
//! (`k_stable` consecutive in-active frames) or the point returns to the LVZ;
//! if exclusions ever empty a candidate set they are cleared and the step
//! retried.
//!
//! Dwell hysteresis: changes of the walking gait in cases 3-4 are suppressed
//! until `d_min` frames have passed since the last walking-gait change; a
//! suppressed step keeps the previous selection and only records the case.
//! Halting is never suppressed and does not count as a walking-gait change
//! (the active ellipse survives a halt, so leaving the halt resumes it, and
//! switching away from it mid-halt still honors the dwell).

use serde::{Deserialize, Serialize};

use crate::config::{nominal_current_rank, Config};
use crate::projection::PcaPoint;
use crate::telemetry::Gait;
use crate::terrain_model::ZoneSet;

/// Which branch of the selection rule fired.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DecisionCase {
    #[serde(rename = "InLVZ")]
    InLvz,
    InActive,
    #[serde(rename = "InSZ_MinArea")]
    InSzMinArea,
    #[serde(rename = "OutSZ_MinDist")]
    OutSzMinDist,
    OutGammaSafe,
}

/// Navigation mode carried on each decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NavMode {
    Normal,
    Halt,
    Recovery,
}

/// Mutable policy state for one stream.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyState {
    /// Index into the zone set's SZ ellipses.
    active: usize,
    gait: Option<Gait>,
    /// Bitmask over SZ indices of temporarily removed ellipses. Never
    /// includes the LVZ or the active ellipse.
    excluded: u32,
    /// Frames since the last gait change.
    dwell: u32,
    /// Consecutive frames with `p` inside the active ellipse.
    stable_streak: u32,
}

impl PolicyState {
    pub fn active_index(&self) -> usize {
        self.active
    }

    pub fn gait(&self) -> Option<Gait> {
        self.gait
    }

    pub fn dwell(&self) -> u32 {
        self.dwell
    }

    pub fn stable_streak(&self) -> u32 {
        self.stable_streak
    }

    pub fn excluded_ids<'z>(&self, zones: &'z ZoneSet) -> Vec<&'z str> {
        (0..zones.sz().len())
            .filter(|i| self.excluded & (1 << i) != 0)
            .map(|i| zones.sz()[i].id.as_str())
            .collect()
    }

    pub fn is_excluded(&self, index: usize) -> bool {
        self.excluded & (1 << index) != 0
    }
}

/// One step's outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct GaitDecision {
    pub t: f64,
    pub p: PcaPoint,
    pub gait: Option<Gait>,
    pub active_ellipse: String,
    pub case: DecisionCase,
    pub mode: NavMode,
}

/// Initial state: trot inside the LVZ, nothing excluded.
pub fn init(zones: &ZoneSet) -> PolicyState {
    let lvz = zones
        .index_of(&zones.lvz().id)
        .expect("LVZ is the first SZ ellipse");
    PolicyState {
        active: lvz,
        gait: Some(Gait::Trot),
        excluded: 0,
        dwell: 0,
        stable_streak: 0,
    }
}

/// Candidate choice for cases 3 and 4.
struct Candidate {
    index: usize,
    gait: Gait,
}

fn argmin_area(zones: &ZoneSet, candidates: impl Iterator<Item = usize>) -> Candidate {
    let sz = zones.sz();
    let index = candidates
        .min_by(|&a, &b| {
            let ka = (sz[a].area, nominal_current_rank(sz[a].gait), a);
            let kb = (sz[b].area, nominal_current_rank(sz[b].gait), b);
            ka.partial_cmp(&kb).expect("areas are finite")
        })
        .expect("candidate set is non-empty");
    Candidate { index, gait: sz[index].gait }
}

fn argmin_distance(zones: &ZoneSet, p: &PcaPoint, candidates: impl Iterator<Item = usize>) -> Candidate {
    let sz = zones.sz();
    let index = candidates
        .min_by(|&a, &b| {
            let ka = (sz[a].mahalanobis2(p), sz[a].area, a);
            let kb = (sz[b].mahalanobis2(p), sz[b].area, b);
            ka.partial_cmp(&kb).expect("distances are finite")
        })
        .expect("candidate set is non-empty");
    Candidate { index, gait: sz[index].gait }
}

/// Advances the policy by one PCA point. Pure: identical inputs produce
/// identical outputs, so streams replay deterministically.
pub fn step(
    state: &PolicyState,
    t: f64,
    p: &PcaPoint,
    zones: &ZoneSet,
    cfg: &Config,
) -> (PolicyState, GaitDecision) {
    let sz = zones.sz();
    let lvz_index = 0usize;
    let dwell = state.dwell.saturating_add(1);
    // The walking gait is the active ellipse's: it survives halts, so dwell
    // measures frames since the last change of it.
    let walking = sz[state.active].gait;

    let decision = |next: &PolicyState, case: DecisionCase, mode: NavMode| GaitDecision {
        t,
        p: *p,
        gait: next.gait,
        active_ellipse: sz[next.active].id.clone(),
        case,
        mode,
    };

    // Case 1: inside the LVZ.
    if zones.lvz().contains(p) {
        let gait = zones.lvz().gait;
        let next = PolicyState {
            active: lvz_index,
            gait: Some(gait),
            excluded: 0,
            dwell: if gait == walking { dwell } else { 0 },
            stable_streak: if state.active == lvz_index {
                state.stable_streak.saturating_add(1)
            } else {
                1
            },
        };
        let d = decision(&next, DecisionCase::InLvz, NavMode::Normal);
        return (next, d);
    }

    // Case 2: still inside the active ellipse.
    if sz[state.active].contains(p) {
        let streak = state.stable_streak.saturating_add(1);
        let next = PolicyState {
            active: state.active,
            gait: Some(walking),
            excluded: if streak >= cfg.k_stable { 0 } else { state.excluded },
            dwell,
            stable_streak: streak,
        };
        let d = decision(&next, DecisionCase::InActive, NavMode::Normal);
        return (next, d);
    }

    let containing: Vec<usize> = (0..sz.len()).filter(|&i| sz[i].contains(p)).collect();

    if !containing.is_empty() {
        // Case 3: in the SZ but not the active ellipse.
        let mut excluded = state.excluded;
        if state.active != lvz_index {
            excluded |= 1 << state.active;
        }
        let mut cands: Vec<usize> =
            containing.iter().copied().filter(|&i| excluded & (1 << i) == 0).collect();
        if cands.is_empty() {
            excluded = 0;
            cands = containing;
        }
        let choice = argmin_area(zones, cands.into_iter());
        let next = apply_choice(state, walking, choice, excluded, dwell, true, cfg);
        let d = decision(&next, DecisionCase::InSzMinArea, NavMode::Normal);
        return (next, d);
    }

    if zones.gamma_safe().contains(p) {
        // Case 4: inside the safety region but outside the SZ.
        let mut excluded = state.excluded;
        if state.active != lvz_index {
            excluded |= 1 << state.active;
        }
        let mut cands: Vec<usize> =
            (1..sz.len()).filter(|&i| excluded & (1 << i) == 0).collect();
        if cands.is_empty() {
            excluded = 0;
            cands = (1..sz.len()).collect();
        }
        let choice = argmin_distance(zones, p, cands.into_iter());
        let next = apply_choice(state, walking, choice, excluded, dwell, false, cfg);
        let d = decision(&next, DecisionCase::OutSzMinDist, NavMode::Normal);
        return (next, d);
    }

    // Case 5: outside the safety region. Never suppressed; the active
    // ellipse and the dwell clock survive the halt.
    let next = PolicyState {
        active: state.active,
        gait: None,
        excluded: state.excluded,
        dwell,
        stable_streak: 0,
    };
    let d = decision(&next, DecisionCase::OutGammaSafe, NavMode::Halt);
    (next, d)
}

/// Commits a case-3/4 choice, honoring dwell suppression. A suppressed step
/// keeps the previous selection (resuming the active ellipse's gait if the
/// policy was halted) and leaves the exclusion set untouched.
fn apply_choice(
    state: &PolicyState,
    walking: Gait,
    choice: Candidate,
    excluded: u32,
    dwell: u32,
    point_in_choice: bool,
    cfg: &Config,
) -> PolicyState {
    let changes_gait = choice.gait != walking;
    if changes_gait && dwell < cfg.d_min {
        return PolicyState {
            active: state.active,
            gait: Some(walking),
            excluded: state.excluded,
            dwell,
            stable_streak: 0,
        };
    }
    PolicyState {
        active: choice.index,
        gait: Some(choice.gait),
        excluded: excluded & !(1 << choice.index),
        dwell: if changes_gait { 0 } else { dwell },
        stable_streak: u32::from(point_in_choice),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::terrain_model::{GammaSafe, TerrainGaitEllipse, ZoneSet};

    fn ellipse(id: &str, gait: Gait, mean: [f64; 2], scale: f64) -> TerrainGaitEllipse {
        TerrainGaitEllipse {
            id: id.into(),
            terrain: id.into(),
            gait,
            mean,
            cov: [[scale, 0.0], [0.0, scale]],
            chi2: 5.991,
            area: std::f64::consts::PI * 5.991 * scale,
            v_max: if gait == Gait::Crawl { 0.4 } else { 1.0 },
        }
    }

    /// Four well separated unit ellipses with a generous safety region.
    pub(crate) fn test_zones() -> ZoneSet {
        let sz = vec![
            ellipse("E1", Gait::Trot, [0.0, 0.0], 1.0),
            ellipse("E2", Gait::Crawl, [10.0, 0.0], 1.0),
            ellipse("E3", Gait::Amble, [0.0, 10.0], 1.0),
            ellipse("E4", Gait::Amble, [10.0, 10.0], 1.5),
        ];
        let gamma = GammaSafe {
            mean: [5.0, 5.0],
            cov: [[10.0, 0.0], [0.0, 10.0]],
            chi2: 16.0,
        };
        ZoneSet::new(sz, gamma).unwrap()
    }

    fn fast_cfg() -> Config {
        let mut cfg = Config::default();
        cfg.d_min = 0;
        cfg
    }

    #[test]
    fn init_is_trot_in_lvz() {
        let zones = test_zones();
        let s = init(&zones);
        assert_eq!(s.gait(), Some(Gait::Trot));
        assert_eq!(s.active_index(), 0);
        assert_eq!(s.excluded, 0);
        // Deterministic.
        assert_eq!(init(&zones), init(&zones));
    }

    #[test]
    fn case1_point_near_lvz_center() {
        let zones = test_zones();
        let cfg = fast_cfg();
        let s = init(&zones);
        let (next, d) = step(&s, 0.0, &PcaPoint::new(0.1, 0.1), &zones, &cfg);
        assert_eq!(d.case, DecisionCase::InLvz);
        assert_eq!(d.gait, Some(Gait::Trot));
        assert_eq!(next.gait(), Some(Gait::Trot));
    }

    #[test]
    fn case3_picks_min_area_and_excludes_active() {
        // p inside both E2 (area ~ small) and an enlarged E3; active = E4.
        let sz = vec![
            ellipse("E1", Gait::Trot, [0.0, 0.0], 1.0),
            ellipse("E2", Gait::Crawl, [10.0, 0.0], 4.0 / (std::f64::consts::PI * 5.991)),
            ellipse("E3", Gait::Amble, [10.0, 0.5], 9.0 / (std::f64::consts::PI * 5.991)),
            ellipse("E4", Gait::Amble, [30.0, 30.0], 1.0),
        ];
        let gamma = GammaSafe { mean: [10.0, 10.0], cov: [[200.0, 0.0], [0.0, 200.0]], chi2: 25.0 };
        let zones = ZoneSet::new(sz, gamma).unwrap();
        let cfg = fast_cfg();
        let mut s = init(&zones);
        s.active = 3;
        s.gait = Some(Gait::Amble);
        let p = PcaPoint::new(10.0, 0.2); // inside E2 and E3, far from E4
        assert!(zones.sz()[1].contains(&p) && zones.sz()[2].contains(&p));
        let (next, d) = step(&s, 1.0, &p, &zones, &cfg);
        assert_eq!(d.case, DecisionCase::InSzMinArea);
        assert_eq!(next.active_index(), 1, "E2 has the smaller area");
        assert!(next.is_excluded(3), "E4 was retired");
        assert_eq!(d.gait, Some(Gait::Crawl));
    }

    #[test]
    fn case4_picks_min_distance() {
        let zones = test_zones();
        let cfg = fast_cfg();
        let s = init(&zones);
        // Outside every ellipse, inside gamma; nearest is E3.
        let p = PcaPoint::new(0.0, 6.5);
        let m: Vec<f64> = zones.sz().iter().map(|e| e.mahalanobis2(&p)).collect();
        assert!(m.iter().all(|&d| d > 5.991));
        let (next, d) = step(&s, 1.0, &p, &zones, &cfg);
        assert_eq!(d.case, DecisionCase::OutSzMinDist);
        assert_eq!(next.active_index(), 2);
        assert_eq!(d.gait, Some(Gait::Amble));
    }

    #[test]
    fn case4_distance_arithmetic() {
        // Distances to E2, E3, E4 = (7.1, 3.2, 9.0): E3 wins. Encode via
        // scaled isotropic ellipses sharing a center offset.
        let d_targets = [7.1, 3.2, 9.0];
        let p = PcaPoint::new(50.0, 0.0);
        // mahalanobis2 = |p - mean|^2 / scale; pick means so distances match.
        // chi2 = 2.0 keeps p outside all three candidates.
        let mut sz = vec![
            ellipse("E1", Gait::Trot, [0.0, 0.0], 1.0),
            ellipse("E2", Gait::Crawl, [50.0 - (7.1f64).sqrt(), 0.0], 1.0),
            ellipse("E3", Gait::Amble, [50.0 - (3.2f64).sqrt(), 0.0], 1.0),
            ellipse("E4", Gait::Amble, [50.0 - (9.0f64).sqrt(), 0.0], 1.0),
        ];
        for e in &mut sz {
            e.chi2 = 2.0;
        }
        let gamma = GammaSafe { mean: [25.0, 0.0], cov: [[500.0, 0.0], [0.0, 500.0]], chi2: 25.0 };
        let zones = ZoneSet::new(sz, gamma).unwrap();
        for (i, want) in d_targets.iter().enumerate() {
            assert!((zones.sz()[i + 1].mahalanobis2(&p) - want).abs() < 1e-9);
        }
        let cfg = fast_cfg();
        let s = init(&zones);
        let (next, d) = step(&s, 0.0, &p, &zones, &cfg);
        assert_eq!(d.case, DecisionCase::OutSzMinDist);
        assert_eq!(next.active_index(), 2, "E3 is nearest");
    }

    #[test]
    fn case5_halts_regardless_of_state() {
        let zones = test_zones();
        let cfg = fast_cfg();
        let mut s = init(&zones);
        s.dwell = 0; // even mid-dwell
        let p = PcaPoint::new(100.0, 100.0);
        let (next, d) = step(&s, 0.0, &p, &zones, &cfg);
        assert_eq!(d.case, DecisionCase::OutGammaSafe);
        assert_eq!(d.gait, None);
        assert_eq!(d.mode, NavMode::Halt);
        assert_eq!(next.gait(), None);
    }

    #[test]
    fn halt_then_reenter_active_resumes_gait() {
        let zones = test_zones();
        let cfg = fast_cfg();
        let s = init(&zones);
        let (halted, _) = step(&s, 0.0, &PcaPoint::new(100.0, 100.0), &zones, &cfg);
        assert_eq!(halted.gait(), None);
        let (resumed, d) = step(&halted, 1.0, &PcaPoint::new(0.0, 0.0), &zones, &cfg);
        assert_eq!(d.case, DecisionCase::InLvz);
        assert_eq!(resumed.gait(), Some(Gait::Trot));
    }

    #[test]
    fn stable_streak_clears_exclusions() {
        let zones = test_zones();
        let mut cfg = fast_cfg();
        cfg.k_stable = 4;
        let mut s = init(&zones);
        s.active = 2;
        s.gait = Some(Gait::Amble);
        s.excluded = 1 << 3;
        let p = PcaPoint::new(0.0, 10.0); // center of E3
        for k in 0..4 {
            let (next, d) = step(&s, k as f64, &p, &zones, &cfg);
            assert_eq!(d.case, DecisionCase::InActive);
            s = next;
        }
        assert_eq!(s.excluded, 0, "exclusions clear after k_stable in-active frames");
    }

    #[test]
    fn dwell_suppresses_thrash() {
        let zones = test_zones();
        let mut cfg = Config::default();
        cfg.d_min = 8;
        let s = init(&zones); // dwell = 0
        // A point inside E2 would switch trot -> crawl, but dwell < d_min.
        let p = PcaPoint::new(10.0, 0.0);
        let (next, d) = step(&s, 0.0, &p, &zones, &cfg);
        assert_eq!(d.case, DecisionCase::InSzMinArea, "case still recorded");
        assert_eq!(d.gait, Some(Gait::Trot), "change suppressed");
        assert_eq!(next.active_index(), 0);
        // After d_min frames the change goes through.
        let mut s = next;
        for k in 1..8 {
            let (n, _) = step(&s, k as f64, &p, &zones, &cfg);
            s = n;
        }
        assert_eq!(s.gait(), Some(Gait::Crawl));
    }

    #[test]
    fn exclusion_soundness_under_fuzz() {
        use rand::{Rng, SeedableRng};
        let zones = test_zones();
        let cfg = fast_cfg();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(123);
        let mut s = init(&zones);
        for k in 0..20_000 {
            let p = PcaPoint::new(rng.gen_range(-20.0..30.0), rng.gen_range(-20.0..30.0));
            let (next, d) = step(&s, k as f64, &p, &zones, &cfg);
            assert!(!next.is_excluded(next.active_index()), "active excluded at step {k}");
            assert!(!next.is_excluded(0), "LVZ must never be excluded");
            assert_eq!(d.gait.is_none(), d.case == DecisionCase::OutGammaSafe);
            s = next;
        }
    }

    #[test]
    fn convergence_to_fixed_ellipse() {
        use rand::{Rng, SeedableRng};
        use rand_distr::{Distribution, Normal};
        let zones = test_zones();
        let cfg = fast_cfg();
        let norm = Normal::new(0.0, 0.4).unwrap();
        // Points drawn inside E2 (j != LVZ): at most |SZ|-1 gait changes.
        for seed in 0..1000u64 {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut s = init(&zones);
            let mut changes = 0;
            let mut prev = s.gait();
            let mut converged_at = None;
            for k in 0..120 {
                let p = PcaPoint::new(
                    10.0 + norm.sample(&mut rng),
                    norm.sample(&mut rng).clamp(-2.0, 2.0),
                );
                let (next, d) = step(&s, k as f64, &p, &zones, &cfg);
                if d.gait != prev {
                    changes += 1;
                    prev = d.gait;
                }
                if d.gait == Some(Gait::Crawl) && converged_at.is_none() {
                    converged_at = Some(k);
                }
                s = next;
            }
            assert!(changes <= 3, "seed {seed}: {changes} gait changes");
            assert_eq!(s.gait(), Some(Gait::Crawl), "seed {seed} did not converge");
        }
    }

    #[test]
    fn determinism_over_identical_streams() {
        use rand::{Rng, SeedableRng};
        let zones = test_zones();
        let cfg = Config::default();
        let run = || {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
            let mut s = init(&zones);
            let mut out = Vec::new();
            for k in 0..500 {
                let p = PcaPoint::new(rng.gen_range(-5.0..15.0), rng.gen_range(-5.0..15.0));
                let (next, d) = step(&s, k as f64, &p, &zones, &cfg);
                out.push(d);
                s = next;
            }
            out
        };
        assert_eq!(run(), run());
    }
}
