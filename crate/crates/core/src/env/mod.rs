//! Insertion MDP over the simulated cell: observation assembly, the discrete
//! action space, rewards, termination and the wrist-yaw probe that works
//! around the camera's blind spot.

pub mod action;
pub mod reward;

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::{peg_frame_translation_to_base, rpy_to_matrix, tcp_after_rotation, Axis, Pose, Rpy, Vec3};
use crate::sim::{
    self, estimate_hole_center, render_camera, sense_ft, FtSensor, GrayImage, HoleSpec, PegSpec, SimError, SimParams,
    WorldState, Wrench,
};
use crate::tcs::{supervised_move, MoveOutcome, SafetyThresholds, SafetyZone, TcsMemory};

pub use action::{action_table_hash, decode_action, encode_action, ActionId, Dimension, Primitive, NUM_ACTIONS};
pub use reward::{check_termination, compute_reward, EpisodeOutcome, EpisodeStatus, RewardBreakdown, STEP_MAX};

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("action index {0} out of range")]
    ActionOutOfRange(usize),
    #[error("episode has terminated; call reset")]
    EpisodeOver,
    #[error("invalid environment config: {0}")]
    Config(String),
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StartMode {
    Fixed,
    Random,
}

/// Network input: camera frame, pose relative to the hole estimate, and the
/// bias-compensated wrench without Mz.
#[derive(Debug, Clone, PartialEq)]
pub struct StateObs {
    pub image: Arc<GrayImage>,
    pub pose_n: [f64; 6],
    pub wrench_n: [f64; 5],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FtCalibration {
    pub f_star: Wrench,
}

pub fn normalize_ft(raw: &Wrench, calib: &FtCalibration) -> [f64; 5] {
    let d = (*raw - calib.f_star).to_array();
    [d[0], d[1], d[2], d[3], d[4]]
}

pub fn normalize_image(width: usize, height: usize, gray8: Vec<u8>) -> Option<GrayImage> {
    GrayImage::from_levels(width, height, gray8)
}

pub fn normalize_pose(tcp: &Pose, hole_est: Vec3) -> [f64; 6] {
    let d = tcp.position - hole_est;
    let o = tcp.orientation;
    [d.x, d.y, d.z, o.gamma, o.beta, o.alpha]
}

/// Candidate wrist yaws in probe order, radians.
pub const AASM_CANDIDATES_DEG: [f64; 5] = [0.0, 45.0, -45.0, 90.0, -90.0];

/// Picks the yaw with the most hole pixels. Ties go to 0°, then the smaller
/// magnitude, then the positive direction.
pub fn select_yaw(counts: &[(f64, usize)]) -> f64 {
    let mut best = counts[0];
    for &(yaw, n) in &counts[1..] {
        let better =
            n > best.1 || (n == best.1 && (yaw.abs() < best.0.abs() || (yaw.abs() == best.0.abs() && yaw > best.0)));
        if better {
            best = (yaw, n);
        }
    }
    best.0
}

/// Tool pose after yawing the wrist by `yaw` about the vertical line through
/// `pivot` (the peg bottom), keeping the pivot fixed.
pub fn yawed_pose(tcp: &Pose, peg: &PegSpec, pivot: Vec3, yaw: f64) -> Pose {
    let mut o = tcp.orientation;
    o.alpha += yaw;
    let m = rpy_to_matrix(o);
    let local = peg.grasp_offset + Vec3::new(0.0, 0.0, peg.length);
    Pose::new(pivot - m.mul_vec(local), o)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AasmResult {
    /// Selected yaw, degrees.
    pub yaw_deg: f64,
    pub counts: Vec<(f64, usize)>,
    pub pose: Pose,
    pub image: Arc<GrayImage>,
}

/// Probes the candidate yaws and returns the view with the most visible hole.
pub fn aasm_select_angle(world: &WorldState) -> AasmResult {
    let pivot = world.peg_bottom();
    let mut probe = world.clone();
    let mut views = Vec::with_capacity(AASM_CANDIDATES_DEG.len());
    for &deg in &AASM_CANDIDATES_DEG {
        let pose = yawed_pose(&world.tcp, &world.peg, pivot, deg.to_radians());
        probe.place(pose);
        let image = render_camera(&probe);
        views.push((deg, pose, image));
    }
    let counts: Vec<(f64, usize)> = views.iter().map(|(d, _, img)| (*d, img.hole_pixel_count())).collect();
    let yaw_deg = select_yaw(&counts);
    let (_, pose, image) = views.into_iter().find(|(d, _, _)| *d == yaw_deg).expect("selected yaw is a candidate");
    AasmResult { yaw_deg, counts, pose, image }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub peg_radius: f64,
    pub peg_length: f64,
    /// Radial gap between peg and hole.
    pub clearance: f64,
    pub hole_depth: f64,
    pub hole_center: [f64; 3],
    /// Height of the peg bottom above the surface at reset.
    pub start_height: f64,
    /// Planar start offset in fixed mode and its direction from the hole.
    pub fixed_offset: f64,
    pub fixed_offset_angle_deg: f64,
    /// Radius of the start disc in random mode.
    pub random_radius: f64,
    pub max_grasp_offset: f64,
    pub sensor_noise: bool,
    pub sensor_bias: bool,
    pub tcs: bool,
    pub aasm: bool,
    pub step_max: u32,
    pub warn_force: f64,
    pub danger_force: f64,
    pub warn_moment: f64,
    pub danger_moment: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        let th = SafetyThresholds::default();
        Self {
            peg_radius: 0.01,
            peg_length: 0.03,
            clearance: 0.0005,
            hole_depth: 0.015,
            hole_center: [0.5, 0.0, 0.1],
            start_height: 0.001,
            fixed_offset: 0.003,
            fixed_offset_angle_deg: -90.0,
            random_radius: 0.004,
            max_grasp_offset: 0.001,
            sensor_noise: true,
            sensor_bias: true,
            tcs: true,
            aasm: true,
            step_max: STEP_MAX,
            warn_force: th.warn_f,
            danger_force: th.danger_f,
            warn_moment: th.warn_m,
            danger_moment: th.danger_m,
        }
    }
}

impl EnvConfig {
    pub fn thresholds(&self) -> SafetyThresholds {
        SafetyThresholds {
            warn_f: self.warn_force,
            danger_f: self.danger_force,
            warn_m: self.warn_moment,
            danger_m: self.danger_moment,
        }
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |m: &str| Err(EnvError::Config(m.into()));
        if !(self.peg_radius > 0.0 && self.peg_length > 0.0 && self.hole_depth > 0.0) {
            return bad("peg and hole dimensions must be positive");
        }
        if !(self.clearance > 0.0) {
            return bad("clearance must be positive");
        }
        if !(0.0..=sim::MAX_GRASP_OFFSET).contains(&self.max_grasp_offset) {
            return bad("max_grasp_offset must be within [0, 1 mm]");
        }
        if !(self.start_height > 0.0 && self.fixed_offset >= 0.0 && self.random_radius >= 0.0) {
            return bad("start geometry must be non-negative");
        }
        if self.step_max == 0 || self.step_max > STEP_MAX {
            return bad("step_max must be in 1..=5000");
        }
        if !self.thresholds().is_valid() {
            return bad("thresholds must satisfy 0 < warn < danger");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub obs: StateObs,
    pub reward: RewardBreakdown,
    pub outcome: Option<EpisodeOutcome>,
    pub motion: MoveOutcome,
}

/// One row of the in-motion wrench trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub step: u32,
    pub substep: u32,
    pub wrench: Wrench,
    pub zone: SafetyZone,
    pub accepted: bool,
}

/// Per-episode counters for logs.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EpisodeStats {
    pub danger_events: u64,
    pub warning_substeps: u64,
    pub accepted_substeps: u64,
}

pub struct PegInHoleEnv {
    cfg: EnvConfig,
    params: SimParams,
    thresholds: SafetyThresholds,
    rng: ChaCha8Rng,
    world: WorldState,
    sensor: FtSensor,
    calib: FtCalibration,
    hole_est: Vec3,
    start: Pose,
    tcs: TcsMemory,
    steps: u32,
    episode_reward: f64,
    active: bool,
    stats: EpisodeStats,
    aasm_yaw_deg: f64,
    trace: Option<Vec<TraceRow>>,
}

impl PegInHoleEnv {
    pub fn new(cfg: EnvConfig, seed: u64) -> Result<Self, EnvError> {
        cfg.validate()?;
        let peg = PegSpec { radius: cfg.peg_radius, length: cfg.peg_length, grasp_offset: Vec3::ZERO };
        let [x, y, z] = cfg.hole_center;
        let hole = HoleSpec::with_clearance(Vec3::new(x, y, z), &peg, cfg.clearance, cfg.hole_depth);
        let params = SimParams::default();
        let tcp =
            Pose::new(Vec3::new(x, y, z + cfg.start_height + cfg.peg_length), Rpy::new(std::f64::consts::PI, 0.0, 0.0));
        let world = WorldState::new(peg, hole, params, tcp)?;
        Ok(Self {
            thresholds: cfg.thresholds(),
            cfg,
            params,
            rng: ChaCha8Rng::seed_from_u64(seed),
            world,
            sensor: FtSensor::new(Wrench::ZERO, false),
            calib: FtCalibration { f_star: Wrench::ZERO },
            hole_est: hole.center_true,
            start: tcp,
            tcs: TcsMemory::new(tcp),
            steps: 0,
            episode_reward: 0.0,
            active: false,
            stats: EpisodeStats::default(),
            aasm_yaw_deg: 0.0,
            trace: None,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn world(&self) -> &WorldState {
        &self.world
    }

    pub fn start_pose(&self) -> Pose {
        self.start
    }

    pub fn hole_estimate(&self) -> Vec3 {
        self.hole_est
    }

    pub fn calibration(&self) -> FtCalibration {
        self.calib
    }

    pub fn steps(&self) -> u32 {
        self.steps
    }

    pub fn episode_reward(&self) -> f64 {
        self.episode_reward
    }

    pub fn stats(&self) -> EpisodeStats {
        self.stats
    }

    pub fn aasm_yaw_deg(&self) -> f64 {
        self.aasm_yaw_deg
    }

    pub fn is_active(&self) -> bool {
        self.active
    }

    /// Restarts the random stream, so an episode can be replayed from its seed.
    pub fn reseed(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    /// Caps the length of subsequent episodes.
    pub fn set_step_max(&mut self, step_max: u32) -> Result<(), EnvError> {
        if step_max == 0 || step_max > STEP_MAX {
            return Err(EnvError::Config("step_max must be in 1..=5000".into()));
        }
        self.cfg.step_max = step_max;
        Ok(())
    }

    /// Turns on in-motion wrench recording for subsequent episodes.
    pub fn record_trace(&mut self, on: bool) {
        self.trace = on.then(Vec::new);
    }

    pub fn trace(&self) -> Option<&[TraceRow]> {
        self.trace.as_deref()
    }

    fn draw_grasp_offset(&mut self) -> Vec3 {
        let r = self.cfg.max_grasp_offset;
        if r == 0.0 {
            return Vec3::ZERO;
        }
        loop {
            let v =
                Vec3::new(self.rng.random_range(-r..=r), self.rng.random_range(-r..=r), self.rng.random_range(-r..=r));
            if v.norm() <= r {
                return v;
            }
        }
    }

    fn start_offset(&mut self, mode: StartMode) -> (f64, f64) {
        match mode {
            StartMode::Fixed => {
                let a = self.cfg.fixed_offset_angle_deg.to_radians();
                (self.cfg.fixed_offset * a.cos(), self.cfg.fixed_offset * a.sin())
            }
            StartMode::Random => {
                let rho = self.cfg.random_radius * self.rng.random::<f64>().sqrt();
                let th = self.rng.random_range(0.0..std::f64::consts::TAU);
                (rho * th.cos(), rho * th.sin())
            }
        }
    }

    /// Starts a new episode and returns the first observation.
    pub fn reset(&mut self, mode: StartMode) -> Result<StateObs, EnvError> {
        let grasp = self.draw_grasp_offset();
        let (dx, dy) = self.start_offset(mode);
        let c = self.world.hole.center_true;
        let bottom = Vec3::new(c.x + dx, c.y + dy, self.world.hole.surface_z + self.cfg.start_height);

        let peg = PegSpec { grasp_offset: grasp, ..self.world.peg };
        let nominal = Pose::new(Vec3::ZERO, Rpy::new(std::f64::consts::PI, 0.0, 0.0));
        let tcp = yawed_pose(&nominal, &peg, bottom, 0.0);
        self.world = WorldState::new(peg, self.world.hole, self.params, tcp)?;

        let bias = if self.cfg.sensor_bias { FtSensor::random_bias(&mut self.rng) } else { Wrench::ZERO };
        self.sensor = FtSensor::new(bias, self.cfg.sensor_noise);
        self.hole_est = estimate_hole_center(&self.world.hole, &mut self.rng);

        let (pose, image) = if self.cfg.aasm {
            let r = aasm_select_angle(&self.world);
            self.aasm_yaw_deg = r.yaw_deg;
            (r.pose, r.image)
        } else {
            self.aasm_yaw_deg = 0.0;
            (tcp, render_camera(&self.world))
        };
        self.world.place(pose);

        // the bias snapshot is taken in free space and reused as the first reading
        let first = sense_ft(self.world.contact_at(&pose).wrench, &self.sensor, &mut self.rng);
        self.calib = FtCalibration { f_star: first };

        self.start = pose;
        self.tcs = TcsMemory::new(pose);
        self.steps = 0;
        self.episode_reward = 0.0;
        self.active = true;
        self.stats = EpisodeStats::default();
        if let Some(t) = self.trace.as_mut() {
            t.clear();
        }
        Ok(StateObs {
            image,
            pose_n: normalize_pose(&pose, self.hole_est),
            wrench_n: normalize_ft(&first, &self.calib),
        })
    }

    /// Target pose for an action from the current pose.
    pub fn action_target(&self, a: ActionId) -> Pose {
        let p = decode_action(a);
        let tcp = self.world.tcp;
        let s = p.sign as f64;
        let unit = |v: Vec3| peg_frame_translation_to_base(v, &tcp).expect("unit direction");
        match p.dim {
            Dimension::TransX => Pose::new(tcp.position + unit(Vec3::new(s * p.magnitude, 0.0, 0.0)), tcp.orientation),
            Dimension::TransY => Pose::new(tcp.position + unit(Vec3::new(0.0, s * p.magnitude, 0.0)), tcp.orientation),
            Dimension::TransZ => Pose::new(tcp.position + unit(Vec3::new(0.0, 0.0, s * p.magnitude)), tcp.orientation),
            Dimension::RotX => {
                tcp_after_rotation(&tcp, Axis::X, s * p.magnitude, self.cfg.peg_length).expect("valid peg length")
            }
            Dimension::RotY => {
                tcp_after_rotation(&tcp, Axis::Y, s * p.magnitude, self.cfg.peg_length).expect("valid peg length")
            }
        }
    }

    pub fn step(&mut self, a: ActionId) -> Result<StepResult, EnvError> {
        if !self.active {
            return Err(EnvError::EpisodeOver);
        }
        let target = self.action_target(a);
        let prev_z = self.world.tcp.position.z;

        let Self { world, tcs, thresholds, sensor, rng, calib, cfg, .. } = self;
        let f_star = calib.f_star;
        let mut read = |truth: Wrench| sense_ft(truth, sensor, rng) - f_star;
        let motion = supervised_move(&target, world, tcs, thresholds, cfg.tcs, &mut read);

        self.steps += 1;
        let tcp = self.world.tcp;
        let status = if motion.aborted {
            Some(EpisodeStatus::DangerAbort)
        } else {
            check_termination(&tcp, &self.start, &self.world.peg, &self.world.hole, self.steps)
                .or_else(|| (self.steps >= self.cfg.step_max).then_some(EpisodeStatus::StepLimit))
        };
        let success_step = (status == Some(EpisodeStatus::Success)).then_some(self.steps);
        let reward = compute_reward(prev_z, tcp.position.z, success_step, motion.r_pun);
        self.episode_reward += reward.total;

        self.stats.danger_events += motion.danger_events() as u64;
        self.stats.warning_substeps += motion.warning_substeps() as u64;
        self.stats.accepted_substeps += motion.substeps.iter().filter(|s| s.accepted).count() as u64;
        if let Some(t) = self.trace.as_mut() {
            for (i, s) in motion.substeps.iter().enumerate() {
                t.push(TraceRow {
                    step: self.steps,
                    substep: i as u32,
                    wrench: s.wrench,
                    zone: s.zone,
                    accepted: s.accepted,
                });
            }
        }

        let outcome = status.map(|status| {
            self.active = false;
            EpisodeOutcome { status, steps_taken: self.steps, episode_reward: self.episode_reward }
        });
        // the supervisor reads are already bias-compensated
        let w = motion.final_wrench.to_array();
        let wrench_n = [w[0], w[1], w[2], w[3], w[4]];
        let obs = StateObs { image: render_camera(&self.world), pose_n: normalize_pose(&tcp, self.hole_est), wrench_n };
        Ok(StepResult { obs, reward, outcome, motion })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::camera::CameraScene;
    use std::f64::consts::PI;

    fn quiet() -> EnvConfig {
        EnvConfig { sensor_noise: false, sensor_bias: false, max_grasp_offset: 0.0, ..EnvConfig::default() }
    }

    #[test]
    fn ft_normalization() {
        let f_star = Wrench::new(0.3, -0.1, 1.2, 0.01, 0.02, -0.05);
        let calib = FtCalibration { f_star };
        assert_eq!(normalize_ft(&f_star, &calib), [0.0; 5]);
        let raw = f_star + Wrench::new(1.0, 2.0, 3.0, 0.1, 0.2, 9.0);
        let n = normalize_ft(&raw, &calib);
        let expect = [1.0, 2.0, 3.0, 0.1, 0.2];
        for i in 0..5 {
            assert!((n[i] - expect[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn image_normalization() {
        let img = normalize_image(3, 1, vec![0, 255, 128]).unwrap();
        assert_eq!(img.value(0, 0), 1.0);
        assert_eq!(img.value(1, 0), 0.00390625);
        assert_eq!(img.value(2, 0), 0.5);
        assert!(normalize_image(2, 2, vec![0; 3]).is_none());
    }

    #[test]
    fn pose_normalization() {
        let tcp = Pose::new(Vec3::new(0.503, 0.201, 0.1), Rpy::new(3.0, 0.1, -0.2));
        let p = normalize_pose(&tcp, Vec3::new(0.5, 0.2, 0.1));
        assert!((p[0] - 0.003).abs() < 1e-12 && (p[1] - 0.001).abs() < 1e-12 && p[2].abs() < 1e-12);
        assert_eq!(&p[3..], &[3.0, 0.1, -0.2]);
        assert_eq!(normalize_pose(&tcp, tcp.position)[..3], [0.0; 3]);
    }

    #[test]
    fn yaw_tie_rules() {
        assert_eq!(select_yaw(&[(0.0, 5), (45.0, 5), (-45.0, 5), (90.0, 5), (-90.0, 5)]), 0.0);
        assert_eq!(select_yaw(&[(0.0, 1), (45.0, 5), (-45.0, 5), (90.0, 5), (-90.0, 5)]), 45.0);
        assert_eq!(select_yaw(&[(0.0, 1), (45.0, 2), (-45.0, 5), (90.0, 5), (-90.0, 5)]), -45.0);
        assert_eq!(select_yaw(&[(0.0, 1), (45.0, 2), (-45.0, 2), (90.0, 0), (-90.0, 0)]), 45.0);
    }

    #[test]
    fn aasm_picks_visible_view() {
        // constructed scene: at 0° the shadow covers the hole side, at +90° the
        // shadow rotates away
        let mut s = CameraScene {
            center: [0.0, 0.0],
            u_axis: [1.0, 0.0],
            v_axis: [0.0, 1.0],
            pixel_size: 0.0005,
            size: 64,
            hole_center: [0.0, 0.006],
            hole_radius: 0.004,
            peg: Some(([0.0, 0.0], 0.004)),
            shadow: [0.0, 0.01],
        };
        let at0 = sim::render_scene(&s).hole_pixel_count();
        s.shadow = [-0.01, 0.0];
        let at90 = sim::render_scene(&s).hole_pixel_count();
        assert_eq!(at0, 0);
        assert!(at90 > 100);
        assert_eq!(select_yaw(&[(0.0, at0), (45.0, 10), (-45.0, 10), (90.0, at90), (-90.0, 20)]), 90.0);
    }

    #[test]
    fn fixed_start_prefers_default_yaw() {
        let mut env = PegInHoleEnv::new(quiet(), 1).unwrap();
        env.reset(StartMode::Fixed).unwrap();
        assert_eq!(env.aasm_yaw_deg(), 0.0);
    }

    #[test]
    fn yaw_keeps_peg_bottom() {
        let peg = PegSpec { radius: 0.01, length: 0.03, grasp_offset: Vec3::new(0.0004, -0.0003, 0.0002) };
        let pivot = Vec3::new(0.5, 0.01, 0.101);
        let tcp = yawed_pose(&Pose::new(Vec3::ZERO, Rpy::new(PI, 0.0, 0.0)), &peg, pivot, 0.0);
        for yaw in [0.3, -1.2, PI / 2.0] {
            let p = yawed_pose(&tcp, &peg, pivot, yaw);
            let b = sim::contact::PegPlacement::from_tcp(&p, &peg).bottom;
            assert!((b - pivot).norm() < 1e-12);
        }
    }

    #[test]
    fn reset_is_deterministic_and_zeroes_wrench() {
        let mut a = PegInHoleEnv::new(EnvConfig::default(), 9).unwrap();
        let mut b = PegInHoleEnv::new(EnvConfig::default(), 9).unwrap();
        let oa = a.reset(StartMode::Fixed).unwrap();
        let ob = b.reset(StartMode::Fixed).unwrap();
        assert_eq!(oa, ob);
        assert_eq!(oa.wrench_n, [0.0; 5]);
        assert!(oa.pose_n[..3].iter().all(|v| v.abs() < 0.05));
    }

    #[test]
    fn random_starts_within_disc() {
        let mut cfg = quiet();
        cfg.aasm = false;
        let mut env = PegInHoleEnv::new(cfg, 4).unwrap();
        for _ in 0..2000 {
            env.reset(StartMode::Random).unwrap();
            let d = env.world().peg_bottom() - env.world().hole.center_true;
            assert!(d.planar_norm() <= 0.004 + 1e-12);
            assert!((d.z - 0.001).abs() < 1e-12);
        }
    }

    #[test]
    fn free_descent_step() {
        let mut env = PegInHoleEnv::new(quiet(), 2).unwrap();
        env.reset(StartMode::Fixed).unwrap();
        let z0 = env.world().tcp.position.z;
        // 0.5 mm down from 1 mm above the surface stays in free space
        let r = env.step(ActionId::new(13).unwrap()).unwrap();
        assert!((z0 - env.world().tcp.position.z - 0.0005).abs() < 1e-12);
        assert!((r.reward.total - (75.0 * 0.0005 - 0.001)).abs() < 1e-12);
        assert_eq!(r.obs.wrench_n, [0.0; 5]);
        assert_eq!(env.episode_reward(), r.reward.total);
    }

    #[test]
    fn one_mm_descent_in_free_space() {
        let mut cfg = quiet();
        cfg.start_height = 0.005;
        let mut env = PegInHoleEnv::new(cfg, 2).unwrap();
        env.reset(StartMode::Fixed).unwrap();
        let z0 = env.world().tcp.position.z;
        let r = env.step(ActionId::new(14).unwrap()).unwrap();
        assert!((z0 - env.world().tcp.position.z - 0.001).abs() < 1e-12);
        assert!((r.reward.total - 0.074).abs() < 1e-12);
    }

    #[test]
    fn step_after_end_rejected() {
        let mut cfg = quiet();
        cfg.step_max = 1;
        let mut env = PegInHoleEnv::new(cfg, 3).unwrap();
        env.reset(StartMode::Fixed).unwrap();
        let r = env.step(ActionId::new(0).unwrap()).unwrap();
        assert_eq!(r.outcome.unwrap().status, EpisodeStatus::StepLimit);
        assert!(matches!(env.step(ActionId::new(0).unwrap()), Err(EnvError::EpisodeOver)));
    }

    #[test]
    fn rotation_keeps_peg_tip() {
        let mut env = PegInHoleEnv::new(quiet(), 5).unwrap();
        env.reset(StartMode::Fixed).unwrap();
        let before = env.world().peg_bottom();
        env.step(ActionId::new(17).unwrap()).unwrap();
        env.step(ActionId::new(25).unwrap()).unwrap();
        assert!((env.world().peg_bottom() - before).norm() < 1e-9);
    }

    #[test]
    fn centred_insertion_succeeds() {
        let mut cfg = quiet();
        cfg.fixed_offset = 0.0;
        let mut env = PegInHoleEnv::new(cfg, 6).unwrap();
        env.reset(StartMode::Fixed).unwrap();
        let mut last = None;
        let mut sum = 0.0;
        for _ in 0..20 {
            let r = env.step(ActionId::new(14).unwrap()).unwrap();
            sum += r.reward.total;
            if r.outcome.is_some() {
                last = r.outcome;
                break;
            }
        }
        let out = last.expect("terminates");
        assert_eq!(out.status, EpisodeStatus::Success);
        assert_eq!(out.steps_taken, 10);
        assert!((out.episode_reward - sum).abs() < 1e-12);
    }

    #[test]
    fn surface_press_is_supervised() {
        let mut cfg = quiet();
        cfg.fixed_offset = 0.004;
        let mut env = PegInHoleEnv::new(cfg, 7).unwrap();
        env.reset(StartMode::Fixed).unwrap();
        let mut max_force: f64 = 0.0;
        for _ in 0..10 {
            let r = env.step(ActionId::new(14).unwrap()).unwrap();
            for s in r.motion.substeps.iter().filter(|s| s.accepted) {
                max_force = max_force.max(s.wrench.fz.abs());
            }
            if r.outcome.is_some() {
                break;
            }
        }
        assert!(max_force > 0.0 && max_force < 10.0, "{max_force}");
    }
}
