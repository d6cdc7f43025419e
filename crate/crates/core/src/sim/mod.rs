//! Simulated plant standing in for the arm, camera and force/torque sensor.

pub mod camera;
pub mod contact;
pub mod sensor;

use std::ops::{Add, Sub};

use rand::Rng;
use thiserror::Error;

use crate::kinematics::{Pose, Vec3};

pub use camera::{render_camera, render_scene, CameraScene, GrayImage};
pub use contact::{ContactKind, ContactReport};
pub use sensor::{sense_ft, FtSensor};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("command outside the workspace: {0}")]
    Workspace(String),
    #[error("invalid scene: {0}")]
    Scene(String),
}

/// Six-axis force/torque sample in N and N·m.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Wrench {
    pub fx: f64,
    pub fy: f64,
    pub fz: f64,
    pub mx: f64,
    pub my: f64,
    pub mz: f64,
}

impl Wrench {
    pub const ZERO: Wrench = Wrench { fx: 0.0, fy: 0.0, fz: 0.0, mx: 0.0, my: 0.0, mz: 0.0 };

    pub const fn new(fx: f64, fy: f64, fz: f64, mx: f64, my: f64, mz: f64) -> Self {
        Self { fx, fy, fz, mx, my, mz }
    }

    pub fn to_array(self) -> [f64; 6] {
        [self.fx, self.fy, self.fz, self.mx, self.my, self.mz]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        Self::new(a[0], a[1], a[2], a[3], a[4], a[5])
    }

    pub fn force_norm(&self) -> f64 {
        (self.fx * self.fx + self.fy * self.fy + self.fz * self.fz).sqrt()
    }

    pub fn moment_norm(&self) -> f64 {
        (self.mx * self.mx + self.my * self.my + self.mz * self.mz).sqrt()
    }
}

impl Add for Wrench {
    type Output = Wrench;
    fn add(self, o: Wrench) -> Wrench {
        let (a, b) = (self.to_array(), o.to_array());
        Wrench::from_array(std::array::from_fn(|i| a[i] + b[i]))
    }
}

impl Sub for Wrench {
    type Output = Wrench;
    fn sub(self, o: Wrench) -> Wrench {
        let (a, b) = (self.to_array(), o.to_array());
        Wrench::from_array(std::array::from_fn(|i| a[i] - b[i]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PegSpec {
    pub radius: f64,
    /// Distance from TCP to the peg bottom along the tool Z axis (z_peg).
    pub length: f64,
    /// Random peg-in-gripper displacement, tool frame.
    pub grasp_offset: Vec3,
}

pub const MAX_GRASP_OFFSET: f64 = 0.001;

impl PegSpec {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.radius > 0.0 && self.length > 0.0) {
            return Err(SimError::Scene("peg radius and length must be positive".into()));
        }
        if self.grasp_offset.norm() > MAX_GRASP_OFFSET + 1e-12 {
            return Err(SimError::Scene("grasp offset exceeds 1 mm".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HoleSpec {
    /// Hole axis at the surface plane, base frame.
    pub center_true: Vec3,
    pub radius: f64,
    pub depth: f64,
    pub surface_z: f64,
}

impl HoleSpec {
    pub fn with_clearance(center: Vec3, peg: &PegSpec, clearance: f64, depth: f64) -> Self {
        Self { center_true: center, radius: peg.radius + clearance, depth, surface_z: center.z }
    }

    pub fn clearance(&self, peg: &PegSpec) -> f64 {
        self.radius - peg.radius
    }
}

/// Stiffness, compliance and imaging constants of the simulated cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimParams {
    /// Surface normal stiffness, N/m.
    pub k_z: f64,
    /// Lateral wall stiffness, N/m.
    pub k_xy: f64,
    /// Maximum penetration the arm's compliance admits, m.
    pub compliance_limit: f64,
    /// Rounding radius of the hole's top edge, m.
    pub edge_fillet: f64,
    /// Camera pixel pitch, m/pixel.
    pub pixel_size: f64,
    pub image_size: usize,
    /// Length of the peg's occlusion shadow along tool +Y, m.
    pub shadow_length: f64,
    /// Maximum tool tilt from vertical accepted by the workspace, rad.
    pub max_tilt: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            k_z: 100_000.0,
            k_xy: 50_000.0,
            compliance_limit: 0.0002,
            edge_fillet: 0.00025,
            pixel_size: 0.0005,
            image_size: 64,
            shadow_length: 0.005,
            max_tilt: 0.25,
        }
    }
}

/// Planar workspace half-width around the hole and headroom above the surface.
pub const WORKSPACE_HALF_WIDTH: f64 = 0.05;
pub const WORKSPACE_HEADROOM: f64 = 0.05;

#[derive(Debug, Clone)]
pub struct WorldState {
    pub peg: PegSpec,
    pub hole: HoleSpec,
    pub params: SimParams,
    pub tcp: Pose,
    pub commanded: Pose,
    pub contact: ContactKind,
}

impl WorldState {
    pub fn new(peg: PegSpec, hole: HoleSpec, params: SimParams, tcp: Pose) -> Result<Self, SimError> {
        peg.validate()?;
        if hole.radius <= peg.radius {
            return Err(SimError::Scene("hole must be wider than the peg".into()));
        }
        let contact = contact::evaluate(&tcp, &peg, &hole, &params).kind;
        Ok(Self { peg, hole, params, tcp, commanded: tcp, contact })
    }

    pub fn contact_at(&self, tcp: &Pose) -> ContactReport {
        contact::evaluate(tcp, &self.peg, &self.hole, &self.params)
    }

    /// True peg bottom centre for the current pose.
    pub fn peg_bottom(&self) -> Vec3 {
        contact::PegPlacement::from_tcp(&self.tcp, &self.peg).bottom
    }

    pub fn check_workspace(&self, cmd: &Pose) -> Result<(), SimError> {
        cmd.validate().map_err(|e| SimError::Workspace(e.to_string()))?;
        let bottom = contact::PegPlacement::from_tcp(cmd, &self.peg);
        let d = bottom.bottom - self.hole.center_true;
        if d.x.abs() > WORKSPACE_HALF_WIDTH || d.y.abs() > WORKSPACE_HALF_WIDTH {
            return Err(SimError::Workspace(format!("planar offset ({:.4}, {:.4}) m", d.x, d.y)));
        }
        let z = bottom.bottom.z;
        let lo = self.hole.surface_z - self.hole.depth;
        let hi = self.hole.surface_z + WORKSPACE_HEADROOM;
        if z < lo || z > hi {
            return Err(SimError::Workspace(format!("peg bottom height {z:.4} m")));
        }
        let tilt = bottom.up.z.clamp(-1.0, 1.0).acos();
        if tilt > self.params.max_tilt {
            return Err(SimError::Workspace(format!("tilt {tilt:.3} rad")));
        }
        Ok(())
    }

    /// Moves towards `command`, projecting the result back along the motion so that
    /// penetration never exceeds the compliance limit.
    pub fn step(&mut self, command: Pose) -> Result<(Pose, Wrench), SimError> {
        self.check_workspace(&command)?;
        self.commanded = command;
        let limit = self.params.compliance_limit;
        let mut report = self.contact_at(&command);
        let mut achieved = command;
        if report.max_penetration > limit {
            let start = self.tcp;
            let (mut lo, mut hi) = (0.0f64, 1.0f64);
            for _ in 0..40 {
                let mid = 0.5 * (lo + hi);
                if self.contact_at(&start.lerp(&command, mid)).max_penetration > limit {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            achieved = start.lerp(&command, lo);
            report = self.contact_at(&achieved);
        }
        self.tcp = achieved;
        self.contact = report.kind;
        Ok((achieved, report.wrench))
    }

    /// Teleports without contact resolution (resets and test setups).
    pub fn place(&mut self, tcp: Pose) {
        self.tcp = tcp;
        self.commanded = tcp;
        self.contact = self.contact_at(&tcp).kind;
    }
}

/// True hole centre plus a 3–4 mm planar error in a uniform direction and ±1 mm in z.
pub fn estimate_hole_center<R: Rng + ?Sized>(hole: &HoleSpec, rng: &mut R) -> Vec3 {
    let mag = rng.random_range(0.003..=0.004);
    let dir = rng.random_range(0.0..std::f64::consts::TAU);
    let dz = rng.random_range(-0.001..=0.001);
    hole.center_true + Vec3::new(mag * dir.cos(), mag * dir.sin(), dz)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::Rpy;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn world() -> WorldState {
        let peg = PegSpec { radius: 0.01, length: 0.03, grasp_offset: Vec3::ZERO };
        let hole = HoleSpec::with_clearance(Vec3::new(0.5, 0.0, 0.1), &peg, 0.0005, 0.015);
        let tcp = Pose::new(Vec3::new(0.53, 0.0, 0.1 + 0.03 + 0.001), Rpy::new(PI, 0.0, 0.0));
        WorldState::new(peg, hole, SimParams::default(), tcp).unwrap()
    }

    #[test]
    fn free_motion_is_exact() {
        let mut w = world();
        let mut cmd = w.tcp;
        cmd.position.z -= 0.0005;
        let (achieved, wr) = w.step(cmd).unwrap();
        assert_eq!(achieved, cmd);
        assert_eq!(wr, Wrench::ZERO);
    }

    #[test]
    fn projection_caps_penetration() {
        let mut w = world();
        let mut cmd = w.tcp;
        cmd.position.z -= 0.002;
        let (achieved, wr) = w.step(cmd).unwrap();
        let pen = w.contact_at(&achieved).max_penetration;
        assert!(pen <= 0.0002 + 1e-12 && pen > 0.00019);
        assert!(wr.fz < 0.0 && wr.fz >= -20.0 - 1e-6);
    }

    #[test]
    fn out_of_workspace_rejected() {
        let mut w = world();
        let mut cmd = w.tcp;
        cmd.position.x += 0.1;
        assert!(matches!(w.step(cmd), Err(SimError::Workspace(_))));
    }

    #[test]
    fn step_is_deterministic() {
        let mut a = world();
        let mut b = world();
        let mut cmd = a.tcp;
        cmd.position.z -= 0.00105;
        assert_eq!(a.step(cmd).unwrap(), b.step(cmd).unwrap());
    }

    #[test]
    fn hole_estimate_error_bounds() {
        let w = world();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10_000 {
            let e = estimate_hole_center(&w.hole, &mut rng) - w.hole.center_true;
            let planar = e.planar_norm();
            assert!((0.003 - 1e-12..=0.004 + 1e-12).contains(&planar));
            assert!(e.z.abs() <= 0.001);
        }
        let a = estimate_hole_center(&w.hole, &mut ChaCha8Rng::seed_from_u64(3));
        let b = estimate_hole_center(&w.hole, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(a, b);
        let origin = HoleSpec { center_true: Vec3::ZERO, ..w.hole };
        assert_ne!(estimate_hole_center(&origin, &mut rng), Vec3::ZERO);
    }
}
