//! Per-step rewards and termination rules.

use crate::kinematics::Pose;
use crate::sim::contact::PegPlacement;
use crate::sim::{HoleSpec, PegSpec};

pub const STEP_MAX: u32 = 5000;
pub const R_GEN: f64 = -0.001;
/// Reward per metre of TCP descent.
pub const R_EXT_SCALE: f64 = 75.0;
/// Required TCP descent from the start pose.
pub const SUCCESS_DEPTH: f64 = 0.01;
/// Planar distance from the hole axis that ends the episode.
pub const REGION_RADIUS: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardBreakdown {
    pub r_gen: f64,
    pub r_ext: f64,
    pub r_suc: f64,
    pub r_pun: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EpisodeStatus {
    Success,
    OutOfRegion,
    StepLimit,
    DangerAbort,
}

impl EpisodeStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            EpisodeStatus::Success => "success",
            EpisodeStatus::OutOfRegion => "out_of_region",
            EpisodeStatus::StepLimit => "step_limit",
            EpisodeStatus::DangerAbort => "danger_abort",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeOutcome {
    pub status: EpisodeStatus,
    pub steps_taken: u32,
    pub episode_reward: f64,
}

/// `success_step` is `Some(step_f)` when this step completed the insertion.
pub fn compute_reward(prev_z: f64, next_z: f64, success_step: Option<u32>, r_pun: f64) -> RewardBreakdown {
    let r_gen = R_GEN;
    let r_ext = R_EXT_SCALE * (prev_z - next_z);
    let r_suc = match success_step {
        Some(step_f) => 1.0 - step_f as f64 / STEP_MAX as f64,
        None => 0.0,
    };
    RewardBreakdown { r_gen, r_ext, r_suc, r_pun, total: r_gen + r_ext + r_suc + r_pun }
}

/// Returns the terminal status, if any. `Success` wins over `OutOfRegion`, which
/// wins over `StepLimit`. The region test uses the physical peg bottom.
pub fn check_termination(
    tcp: &Pose,
    start: &Pose,
    peg: &PegSpec,
    hole: &HoleSpec,
    steps: u32,
) -> Option<EpisodeStatus> {
    if start.position.z - tcp.position.z >= SUCCESS_DEPTH - 1e-9 {
        return Some(EpisodeStatus::Success);
    }
    let bottom = PegPlacement::from_tcp(tcp, peg).bottom;
    if (bottom - hole.center_true).planar_norm() > REGION_RADIUS {
        return Some(EpisodeStatus::OutOfRegion);
    }
    (steps >= STEP_MAX).then_some(EpisodeStatus::StepLimit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::{Rpy, Vec3};
    use std::f64::consts::PI;

    #[test]
    fn descent_reward() {
        let r = compute_reward(0.131, 0.130, None, 0.0);
        assert!((r.r_ext - 0.075).abs() < 1e-12);
        assert!((r.total - 0.074).abs() < 1e-12);
        assert_eq!(r.total, r.r_gen + r.r_ext + r.r_suc + r.r_pun);
    }

    #[test]
    fn success_bonus() {
        let r = compute_reward(0.1, 0.1, Some(19), 0.0);
        assert!((r.r_suc - 0.9962).abs() < 1e-12);
        assert_eq!(compute_reward(0.1, 0.1, None, 0.0).total, -0.001);
    }

    fn setup() -> (PegSpec, HoleSpec, Pose) {
        let peg = PegSpec { radius: 0.01, length: 0.03, grasp_offset: Vec3::ZERO };
        let hole = HoleSpec::with_clearance(Vec3::new(0.5, 0.0, 0.1), &peg, 0.0005, 0.015);
        let start = Pose::new(Vec3::new(0.5, 0.0, 0.131), Rpy::new(PI, 0.0, 0.0));
        (peg, hole, start)
    }

    #[test]
    fn termination_rules() {
        let (peg, hole, start) = setup();
        let mut tcp = start;
        tcp.position.z -= 0.010;
        assert_eq!(check_termination(&tcp, &start, &peg, &hole, 3), Some(EpisodeStatus::Success));
        let mut far = start;
        far.position.x += 0.011;
        assert_eq!(check_termination(&far, &start, &peg, &hole, 3), Some(EpisodeStatus::OutOfRegion));
        assert_eq!(check_termination(&start, &start, &peg, &hole, 5000), Some(EpisodeStatus::StepLimit));
        assert_eq!(check_termination(&start, &start, &peg, &hole, 4999), None);
        // success outranks the others
        let mut both = tcp;
        both.position.x += 0.011;
        assert_eq!(check_termination(&both, &start, &peg, &hole, 5000), Some(EpisodeStatus::Success));
        assert_eq!(check_termination(&far, &start, &peg, &hole, 5000), Some(EpisodeStatus::OutOfRegion));
    }
}
