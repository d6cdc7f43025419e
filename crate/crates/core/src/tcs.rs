//! Three-layer cushioning structure: classifies every in-motion wrench sample
//! as safe, warning or dangerous and applies the decision table, keeping track
//! of the last state and the latest safe pose.

use crate::kinematics::Pose;
use crate::sim::{SimError, WorldState, Wrench};

pub const PUNISH_REVERT: f64 = -0.003;
pub const PUNISH_ABORT: f64 = -0.01;
/// Consecutive dangerous evaluations that end the episode.
pub const ABORT_AFTER: u32 = 10;

/// Sub-step granularity of supervised motion.
pub const SUBSTEP_TRANSLATION: f64 = 0.05e-3;
pub const SUBSTEP_ROTATION: f64 = 0.01 * std::f64::consts::PI / 180.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SafetyZone {
    Safe,
    Warning,
    Dangerous,
}

impl SafetyZone {
    pub fn as_str(self) -> &'static str {
        match self {
            SafetyZone::Safe => "safe",
            SafetyZone::Warning => "warning",
            SafetyZone::Dangerous => "dangerous",
        }
    }
}

/// Per-axis limits in N (forces) and N·m (torques).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SafetyThresholds {
    pub warn_f: f64,
    pub danger_f: f64,
    pub warn_m: f64,
    pub danger_m: f64,
}

impl Default for SafetyThresholds {
    fn default() -> Self {
        Self { warn_f: 5.0, danger_f: 10.0, warn_m: 0.8, danger_m: 1.5 }
    }
}

impl SafetyThresholds {
    pub fn is_valid(&self) -> bool {
        0.0 < self.warn_f && self.warn_f < self.danger_f && 0.0 < self.warn_m && self.warn_m < self.danger_m
    }
}

pub fn classify(w: &Wrench, th: &SafetyThresholds) -> SafetyZone {
    let f = [w.fx.abs(), w.fy.abs(), w.fz.abs()];
    let m = [w.mx.abs(), w.my.abs(), w.mz.abs()];
    if f.iter().any(|&v| v >= th.danger_f) || m.iter().any(|&v| v >= th.danger_m) {
        SafetyZone::Dangerous
    } else if f.iter().any(|&v| v >= th.warn_f) || m.iter().any(|&v| v >= th.warn_m) {
        SafetyZone::Warning
    } else {
        SafetyZone::Safe
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TcsMemory {
    pub last_state: SafetyZone,
    pub latest_safe_pose: Pose,
    /// Dangerous evaluations in a row, up to and including the latest one.
    pub consecutive_danger: u32,
}

impl TcsMemory {
    pub fn new(start: Pose) -> Self {
        Self { last_state: SafetyZone::Safe, latest_safe_pose: start, consecutive_danger: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TcsAction {
    Proceed,
    HaltHere,
    RevertToSafe,
    AbortEpisode,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TcsDecision {
    pub action: TcsAction,
    pub r_pun: f64,
}

impl TcsDecision {
    const fn of(action: TcsAction) -> Self {
        let r_pun = match action {
            TcsAction::RevertToSafe => PUNISH_REVERT,
            TcsAction::AbortEpisode => PUNISH_ABORT,
            _ => 0.0,
        };
        Self { action, r_pun }
    }
}

/// Decision table. A jump straight from safe to dangerous is treated like
/// warning → dangerous; leaving the dangerous zone proceeds.
pub fn decide(last: SafetyZone, current: SafetyZone, mem: &TcsMemory) -> TcsDecision {
    use SafetyZone::*;
    use TcsAction::*;
    match (last, current) {
        (Safe, Safe) | (Warning, Safe) | (Warning, Warning) => TcsDecision::of(Proceed),
        (Safe, Warning) => TcsDecision::of(HaltHere),
        (Dangerous, Safe) | (Dangerous, Warning) => TcsDecision::of(Proceed),
        (Safe, Dangerous) | (Warning, Dangerous) => TcsDecision::of(RevertToSafe),
        (Dangerous, Dangerous) => {
            if mem.consecutive_danger + 1 >= ABORT_AFTER {
                TcsDecision::of(AbortEpisode)
            } else {
                TcsDecision::of(RevertToSafe)
            }
        }
    }
}

/// One evaluated sub-step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubstepRecord {
    /// Bias-compensated reading the decision was based on.
    pub wrench: Wrench,
    pub zone: SafetyZone,
    /// False for readings whose pose was cancelled by a revert.
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MoveOutcome {
    pub final_pose: Pose,
    pub r_pun: f64,
    pub aborted: bool,
    pub halted: bool,
    pub reverted: bool,
    /// The workspace refused part of the motion.
    pub blocked: bool,
    pub substeps: Vec<SubstepRecord>,
    /// Reading at the final pose.
    pub final_wrench: Wrench,
}

impl MoveOutcome {
    pub fn danger_events(&self) -> usize {
        self.substeps.iter().filter(|s| s.zone == SafetyZone::Dangerous).count()
    }

    pub fn warning_substeps(&self) -> usize {
        self.substeps.iter().filter(|s| s.accepted && s.zone == SafetyZone::Warning).count()
    }
}

/// Number of interpolation sub-steps between two poses.
pub fn substep_count(from: &Pose, to: &Pose) -> usize {
    use crate::kinematics::angle_diff;
    let d = (to.position - from.position).norm();
    let a = from.orientation;
    let b = to.orientation;
    let r = angle_diff(b.gamma, a.gamma)
        .abs()
        .max(angle_diff(b.beta, a.beta).abs())
        .max(angle_diff(b.alpha, a.alpha).abs());
    let n_t = (d / SUBSTEP_TRANSLATION - 1e-9).ceil();
    let n_r = (r / SUBSTEP_ROTATION - 1e-9).ceil();
    (n_t.max(n_r) as usize).max(1)
}

/// Executes a motion in sub-steps, classifying each reading.
///
/// `read` turns the simulator's true contact wrench into the bias-compensated
/// sensor reading. With `enabled = false` the motion runs unsupervised but
/// readings are still recorded.
pub fn supervised_move(
    target: &Pose,
    world: &mut WorldState,
    mem: &mut TcsMemory,
    th: &SafetyThresholds,
    enabled: bool,
    read: &mut dyn FnMut(Wrench) -> Wrench,
) -> MoveOutcome {
    let start = world.tcp;
    let n = substep_count(&start, target);
    let mut out = MoveOutcome {
        final_pose: start,
        r_pun: 0.0,
        aborted: false,
        halted: false,
        reverted: false,
        blocked: false,
        substeps: Vec::with_capacity(n),
        final_wrench: Wrench::ZERO,
    };
    let mut last_reading: Option<Wrench> = None;

    for i in 1..=n {
        let cmd = start.lerp(target, i as f64 / n as f64);
        let truth = match world.step(cmd) {
            Ok((_, w)) => w,
            Err(SimError::Workspace(_)) | Err(SimError::Scene(_)) => {
                out.blocked = true;
                break;
            }
        };
        let reading = read(truth);
        let zone = classify(&reading, th);
        if !enabled {
            out.substeps.push(SubstepRecord { wrench: reading, zone, accepted: true });
            mem.last_state = zone;
            last_reading = Some(reading);
            continue;
        }
        let decision = decide(mem.last_state, zone, mem);
        match decision.action {
            TcsAction::Proceed => {
                out.substeps.push(SubstepRecord { wrench: reading, zone, accepted: true });
                mem.last_state = zone;
                if zone == SafetyZone::Safe {
                    mem.latest_safe_pose = world.tcp;
                }
                mem.consecutive_danger = 0;
                last_reading = Some(reading);
            }
            TcsAction::HaltHere => {
                out.substeps.push(SubstepRecord { wrench: reading, zone, accepted: true });
                mem.last_state = zone;
                mem.consecutive_danger = 0;
                out.halted = true;
                last_reading = Some(reading);
                break;
            }
            TcsAction::RevertToSafe | TcsAction::AbortEpisode => {
                out.substeps.push(SubstepRecord { wrench: reading, zone, accepted: false });
                mem.consecutive_danger += 1;
                out.r_pun += decision.r_pun;
                mem.last_state = zone;
                if decision.action == TcsAction::AbortEpisode {
                    out.aborted = true;
                    last_reading = Some(reading);
                    break;
                }
                out.reverted = true;
                // move back and re-evaluate until out of danger or out of patience
                loop {
                    world.place(mem.latest_safe_pose);
                    let reading = read(world.contact_at(&world.tcp).wrench);
                    let zone = classify(&reading, th);
                    last_reading = Some(reading);
                    if zone != SafetyZone::Dangerous {
                        out.substeps.push(SubstepRecord { wrench: reading, zone, accepted: true });
                        mem.last_state = zone;
                        mem.consecutive_danger = 0;
                        break;
                    }
                    let d = decide(SafetyZone::Dangerous, zone, mem);
                    out.substeps.push(SubstepRecord { wrench: reading, zone, accepted: false });
                    mem.consecutive_danger += 1;
                    mem.last_state = zone;
                    out.r_pun += d.r_pun;
                    if d.action == TcsAction::AbortEpisode {
                        out.aborted = true;
                        break;
                    }
                }
                break;
            }
        }
    }

    out.final_pose = world.tcp;
    out.final_wrench = match last_reading {
        Some(w) => w,
        None => read(world.contact_at(&world.tcp).wrench),
    };
    if last_reading.is_none() {
        mem.last_state = classify(&out.final_wrench, th);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::{Rpy, Vec3};
    use crate::sim::{HoleSpec, PegSpec, SimParams};
    use std::f64::consts::PI;
    use SafetyZone::*;

    fn world_at(bottom: Vec3) -> WorldState {
        let peg = PegSpec { radius: 0.01, length: 0.03, grasp_offset: Vec3::ZERO };
        let hole = HoleSpec::with_clearance(Vec3::new(0.5, 0.0, 0.1), &peg, 0.0005, 0.015);
        let tcp = Pose::new(bottom + Vec3::new(0.0, 0.0, 0.03), Rpy::new(PI, 0.0, 0.0));
        WorldState::new(peg, hole, SimParams::default(), tcp).unwrap()
    }

    fn exact(w: Wrench) -> Wrench {
        w
    }

    #[test]
    fn classification_examples() {
        let th = SafetyThresholds::default();
        assert_eq!(classify(&Wrench::ZERO, &th), Safe);
        assert_eq!(classify(&Wrench::new(0.0, 0.0, -10.0, 0.0, 0.0, 0.0), &th), Dangerous);
        assert_eq!(classify(&Wrench::new(0.0, 0.0, 0.0, 0.0, 0.0, -1.78), &th), Dangerous);
        assert_eq!(classify(&Wrench::new(0.0, 6.0, 0.0, 0.0, 0.0, 0.0), &th), Warning);
        assert_eq!(classify(&Wrench::new(0.0, 0.0, 0.0, 0.9, 0.0, 0.0), &th), Warning);
    }

    #[test]
    fn free_motion_reaches_target() {
        let mut w = world_at(Vec3::new(0.5, -0.003, 0.102));
        let mut mem = TcsMemory::new(w.tcp);
        let mut target = w.tcp;
        target.position.z -= 0.001;
        let out = supervised_move(&target, &mut w, &mut mem, &SafetyThresholds::default(), true, &mut exact);
        assert!((out.final_pose.position - target.position).norm() < 1e-12);
        assert_eq!(out.r_pun, 0.0);
        assert_eq!(mem.last_state, Safe);
        assert_eq!(out.substeps.len(), 20);
    }

    #[test]
    fn warning_halts_motion() {
        let mut w = world_at(Vec3::new(0.53, 0.0, 0.1 + 0.00002));
        let mut mem = TcsMemory::new(w.tcp);
        let start_z = w.tcp.position.z;
        let mut target = w.tcp;
        target.position.z -= 0.001;
        let out = supervised_move(&target, &mut w, &mut mem, &SafetyThresholds::default(), true, &mut exact);
        assert!(out.halted);
        // 3 N after the first sub-step, 8 N after the second
        assert_eq!(out.substeps.len(), 2);
        assert!((out.final_pose.position.z - (start_z - 0.0001)).abs() < 1e-12);
        assert_eq!(mem.last_state, Warning);
    }

    #[test]
    fn ramp_into_danger_reverts() {
        // resting at 0.03 mm penetration: 3 N, safe
        let mut w = world_at(Vec3::new(0.53, 0.0, 0.1 - 0.00003));
        let th = SafetyThresholds::default();
        let mut mem = TcsMemory::new(w.tcp);
        let safe = w.tcp;
        let mut target = w.tcp;
        target.position.z -= 0.0001;
        let out = supervised_move(&target, &mut w, &mut mem, &th, true, &mut exact);
        assert!(out.halted, "8 N is a warning");
        let mut target = w.tcp;
        target.position.z -= 0.0005;
        let out = supervised_move(&target, &mut w, &mut mem, &th, true, &mut exact);
        assert!(out.reverted);
        assert_eq!(out.final_pose, safe);
        assert_eq!(out.r_pun, PUNISH_REVERT);
        assert_eq!(mem.last_state, Safe);
        assert_eq!(classify(&w.contact_at(&w.tcp).wrench, &th), Safe);
    }

    #[test]
    fn jam_aborts_after_ten() {
        let mut w = world_at(Vec3::new(0.53, 0.0, 0.1005));
        let th = SafetyThresholds::default();
        let mut mem = TcsMemory::new(w.tcp);
        // the plate rises under the peg: every reachable pose is pinned
        w.hole.surface_z += 0.0007;
        w.place(w.tcp);
        let mut target = w.tcp;
        target.position.x += 0.0001;
        let mut pinned = |_w: Wrench| Wrench::new(0.0, 0.0, -20.0, 0.0, 0.0, 0.0);
        let out = supervised_move(&target, &mut w, &mut mem, &th, true, &mut pinned);
        assert!(out.aborted);
        assert_eq!(out.danger_events(), ABORT_AFTER as usize);
        let expect = 9.0 * PUNISH_REVERT + PUNISH_ABORT;
        assert!((out.r_pun - expect).abs() < 1e-15);
    }

    #[test]
    fn transition_table_exhaustive() {
        let mem = TcsMemory::new(Pose::default());
        let zones = [Safe, Warning, Dangerous];
        let expected = [
            [(TcsAction::Proceed, 0.0), (TcsAction::HaltHere, 0.0), (TcsAction::RevertToSafe, PUNISH_REVERT)],
            [(TcsAction::Proceed, 0.0), (TcsAction::Proceed, 0.0), (TcsAction::RevertToSafe, PUNISH_REVERT)],
            [(TcsAction::Proceed, 0.0), (TcsAction::Proceed, 0.0), (TcsAction::RevertToSafe, PUNISH_REVERT)],
        ];
        for (i, &last) in zones.iter().enumerate() {
            for (j, &cur) in zones.iter().enumerate() {
                let d = decide(last, cur, &mem);
                assert_eq!((d.action, d.r_pun), expected[i][j], "{last:?} -> {cur:?}");
            }
        }
        let jammed = TcsMemory { consecutive_danger: ABORT_AFTER - 1, ..mem };
        let d = decide(Dangerous, Dangerous, &jammed);
        assert_eq!((d.action, d.r_pun), (TcsAction::AbortEpisode, PUNISH_ABORT));
    }

    #[test]
    fn substeps_cover_rotation() {
        let p = Pose::new(Vec3::ZERO, Rpy::new(PI, 0.0, 0.0));
        let mut q = p;
        q.orientation.beta += 0.1f64.to_radians();
        assert_eq!(substep_count(&p, &q), 10);
        let mut q = p;
        q.position.x += 0.001;
        assert_eq!(substep_count(&p, &q), 20);
    }
}
