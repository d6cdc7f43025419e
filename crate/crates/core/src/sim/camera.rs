//! Orthographic eye-in-hand camera.
//!
//! The camera looks straight down and rotates with the tool. Its image axes are
//! the tool X/Y axes projected on the table. The peg is drawn as its bottom disc
//! swept along tool +Y by the shadow length, which models the region the peg
//! body hides from a camera mounted on the −Y side of the gripper.

use std::sync::Arc;

use super::contact::PegPlacement;
use super::WorldState;
use crate::kinematics::Vec3;

pub const GRAY_BACKGROUND: u8 = 200;
pub const GRAY_HOLE: u8 = 25;
pub const GRAY_PEG: u8 = 160;

/// Threshold on the normalized value above which a pixel counts as hole.
pub const HOLE_PIXEL_THRESHOLD: f64 = 0.5;

/// `1 − g/256`, the intensity inversion applied to camera levels.
pub fn normalized_level(g: u8) -> f64 {
    1.0 - g as f64 / 256.0
}

/// Grayscale camera frame. Levels are kept as captured; `value` returns the
/// normalized intensity in (0, 1].
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GrayImage {
    width: usize,
    height: usize,
    levels: Vec<u8>,
}

impl GrayImage {
    pub fn from_levels(width: usize, height: usize, levels: Vec<u8>) -> Option<Self> {
        (levels.len() == width * height).then_some(Self { width, height, levels })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn levels(&self) -> &[u8] {
        &self.levels
    }

    pub fn level(&self, u: usize, v: usize) -> u8 {
        self.levels[v * self.width + u]
    }

    pub fn value(&self, u: usize, v: usize) -> f64 {
        normalized_level(self.level(u, v))
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.levels.iter().map(|&g| normalized_level(g))
    }

    /// Writes normalized values as f32, row-major.
    pub fn write_f32(&self, out: &mut [f32]) {
        for (o, &g) in out.iter_mut().zip(&self.levels) {
            *o = normalized_level(g) as f32;
        }
    }

    pub fn hole_pixel_count(&self) -> usize {
        self.values().filter(|&v| v > HOLE_PIXEL_THRESHOLD).count()
    }
}

/// Everything the renderer needs, in base-frame planar coordinates (meters).
#[derive(Debug, Clone, PartialEq)]
pub struct CameraScene {
    pub center: [f64; 2],
    /// Image +u and +v directions on the table, unit length.
    pub u_axis: [f64; 2],
    pub v_axis: [f64; 2],
    pub pixel_size: f64,
    pub size: usize,
    pub hole_center: [f64; 2],
    pub hole_radius: f64,
    /// Peg bottom centre and radius; `None` renders the scene without the peg.
    pub peg: Option<([f64; 2], f64)>,
    /// Shadow sweep vector from the peg centre.
    pub shadow: [f64; 2],
}

impl CameraScene {
    /// World point at the centre of pixel (u, v).
    pub fn pixel_center(&self, u: usize, v: usize) -> [f64; 2] {
        let half = self.size as f64 / 2.0;
        let a = (u as f64 + 0.5 - half) * self.pixel_size;
        let b = (v as f64 + 0.5 - half) * self.pixel_size;
        [
            self.center[0] + a * self.u_axis[0] + b * self.v_axis[0],
            self.center[1] + a * self.u_axis[1] + b * self.v_axis[1],
        ]
    }

    pub fn occluded(&self, p: [f64; 2]) -> bool {
        let Some((c, r)) = self.peg else { return false };
        let d = [p[0] - c[0], p[1] - c[1]];
        let len2 = self.shadow[0] * self.shadow[0] + self.shadow[1] * self.shadow[1];
        let t = if len2 > 0.0 { ((d[0] * self.shadow[0] + d[1] * self.shadow[1]) / len2).clamp(0.0, 1.0) } else { 0.0 };
        let e = [d[0] - t * self.shadow[0], d[1] - t * self.shadow[1]];
        e[0] * e[0] + e[1] * e[1] <= r * r
    }

    pub fn in_hole(&self, p: [f64; 2]) -> bool {
        let dx = p[0] - self.hole_center[0];
        let dy = p[1] - self.hole_center[1];
        dx * dx + dy * dy < self.hole_radius * self.hole_radius
    }
}

pub fn render_scene(scene: &CameraScene) -> GrayImage {
    let n = scene.size;
    let mut levels = Vec::with_capacity(n * n);
    for v in 0..n {
        for u in 0..n {
            let p = scene.pixel_center(u, v);
            let g = if scene.occluded(p) {
                GRAY_PEG
            } else if scene.in_hole(p) {
                GRAY_HOLE
            } else {
                GRAY_BACKGROUND
            };
            levels.push(g);
        }
    }
    GrayImage { width: n, height: n, levels }
}

fn planar_unit(v: Vec3) -> [f64; 2] {
    let n = v.x.hypot(v.y);
    if n == 0.0 {
        [1.0, 0.0]
    } else {
        [v.x / n, v.y / n]
    }
}

/// Builds the camera scene for the current world state.
pub fn camera_scene(world: &WorldState) -> CameraScene {
    let m = world.tcp.rotation();
    let sight = world.tcp.position + m.mul_vec(Vec3::new(0.0, 0.0, world.peg.length));
    let place = PegPlacement::from_tcp(&world.tcp, &world.peg);
    let v_axis = planar_unit(m.column(1));
    let p = &world.params;
    CameraScene {
        center: [sight.x, sight.y],
        u_axis: planar_unit(m.column(0)),
        v_axis,
        pixel_size: p.pixel_size,
        size: p.image_size,
        hole_center: [world.hole.center_true.x, world.hole.center_true.y],
        hole_radius: world.hole.radius,
        peg: Some(([place.bottom.x, place.bottom.y], world.peg.radius)),
        shadow: [v_axis[0] * p.shadow_length, v_axis[1] * p.shadow_length],
    }
}

pub fn render_camera(world: &WorldState) -> Arc<GrayImage> {
    Arc::new(render_scene(&camera_scene(world)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::{Pose, Rpy};
    use crate::sim::{HoleSpec, PegSpec, SimParams};
    use std::f64::consts::PI;

    fn base_scene() -> CameraScene {
        CameraScene {
            center: [0.0, 0.0],
            u_axis: [1.0, 0.0],
            v_axis: [0.0, 1.0],
            pixel_size: 0.0005,
            size: 64,
            hole_center: [0.0, 0.0],
            hole_radius: 0.0105,
            peg: None,
            shadow: [0.0, 0.0],
        }
    }

    #[test]
    fn full_occlusion_hides_hole() {
        let mut s = base_scene();
        s.hole_radius = 0.008;
        s.peg = Some(([0.0, 0.0], 0.01));
        assert_eq!(render_scene(&s).hole_pixel_count(), 0);
    }

    #[test]
    fn bare_hole_matches_disc_area() {
        let s = base_scene();
        let count = render_scene(&s).hole_pixel_count() as f64;
        let expect = PI * s.hole_radius * s.hole_radius / (s.pixel_size * s.pixel_size);
        assert!(((count - expect) / expect).abs() < 0.02, "{count} vs {expect}");
    }

    #[test]
    fn crescent_matches_brute_force() {
        let mut s = base_scene();
        s.hole_radius = 0.0101;
        s.peg = Some(([0.004, 0.0], 0.01));
        let img = render_scene(&s);
        // independent containment check at every pixel centre
        let mut oracle = 0;
        for v in 0..64 {
            for u in 0..64 {
                let x = (u as f64 + 0.5 - 32.0) * 0.0005;
                let y = (v as f64 + 0.5 - 32.0) * 0.0005;
                let in_hole = x * x + y * y < 0.0101f64.powi(2);
                let in_peg = (x - 0.004).powi(2) + y * y <= 0.0001;
                if in_hole && !in_peg {
                    oracle += 1;
                }
            }
        }
        assert!(oracle > 50);
        assert_eq!(img.hole_pixel_count(), oracle);
    }

    #[test]
    fn values_in_unit_interval() {
        let mut s = base_scene();
        s.peg = Some(([0.002, 0.001], 0.01));
        s.shadow = [0.0, 0.005];
        let img = render_scene(&s);
        assert!(img.values().all(|v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn translation_equivariance() {
        let peg = PegSpec { radius: 0.01, length: 0.03, grasp_offset: Vec3::new(0.0003, -0.0002, 0.0) };
        let hole = HoleSpec::with_clearance(Vec3::new(0.5, 0.0, 0.1), &peg, 0.0005, 0.015);
        let tcp = Pose::new(Vec3::new(0.502, -0.001, 0.131), Rpy::new(PI, 0.0, 0.3));
        let w1 = WorldState::new(peg, hole, SimParams::default(), tcp).unwrap();
        let shift = Vec3::new(0.0125, -0.0075, 0.0);
        let mut hole2 = hole;
        hole2.center_true = hole.center_true + shift;
        let mut tcp2 = tcp;
        tcp2.position = tcp.position + shift;
        let w2 = WorldState::new(peg, hole2, SimParams::default(), tcp2).unwrap();
        assert_eq!(render_camera(&w1), render_camera(&w2));
    }
}
