//! Quasi-static penalty contact between a cylindrical peg and a plate with a
//! cylindrical hole.
//!
//! The plate is the region below `surface_z` outside the hole column, plus the
//! hole floor. Its top edge carries a small fillet so that penetration depth is
//! continuous across the rim. Three contact groups are evaluated:
//!
//! * bottom rim samples against surface, fillet, wall and floor,
//! * the peg side against the straight wall just below the fillet,
//!
//! and each group contributes `stiffness × max penetration` along its mean normal.

use super::{HoleSpec, PegSpec, SimParams, Wrench};
use crate::kinematics::{Pose, Vec3};

pub const RIM_SAMPLES: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ContactKind {
    Free,
    Surface,
    Rim,
    InHole,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactReport {
    /// Force/torque on the tool, expressed in the end-effector frame.
    pub wrench: Wrench,
    /// Largest geometric penetration over all samples (meters).
    pub max_penetration: f64,
    pub kind: ContactKind,
}

/// Peg placement derived from a tool pose.
#[derive(Debug, Clone, Copy)]
pub struct PegPlacement {
    pub bottom: Vec3,
    /// Unit axis from the bottom towards the tool.
    pub up: Vec3,
    pub e1: Vec3,
    pub e2: Vec3,
}

impl PegPlacement {
    pub fn from_tcp(tcp: &Pose, peg: &PegSpec) -> Self {
        let m = tcp.rotation();
        let local = peg.grasp_offset + Vec3::new(0.0, 0.0, peg.length);
        Self { bottom: tcp.position + m.mul_vec(local), up: -m.column(2), e1: m.column(0), e2: m.column(1) }
    }

    pub fn rim_point(&self, radius: f64, i: usize) -> Vec3 {
        let th = 2.0 * std::f64::consts::PI * i as f64 / RIM_SAMPLES as f64;
        self.bottom + self.e1 * (radius * th.cos()) + self.e2 * (radius * th.sin())
    }

    /// Axis point at the given world height.
    pub fn axis_at_height(&self, z: f64) -> Vec3 {
        let t = (z - self.bottom.z) / self.up.z;
        self.bottom + self.up * t
    }
}

/// Penetration of a point into the plate and the outward surface normal there.
pub fn solid_penetration(p: Vec3, hole: &HoleSpec, fillet: f64) -> Option<(f64, Vec3)> {
    let s = hole.surface_z;
    if p.z >= s {
        return None;
    }
    let dx = p.x - hole.center_true.x;
    let dy = p.y - hole.center_true.y;
    let rho = dx.hypot(dy);
    if rho < hole.radius {
        let floor = s - hole.depth;
        return (p.z < floor).then(|| (floor - p.z, Vec3::new(0.0, 0.0, 1.0)));
    }
    let outward = Vec3::new(dx / rho, dy / rho, 0.0);
    let d_v = s - p.z;
    let d_h = rho - hole.radius;
    if d_v < fillet && d_h < fillet {
        // rounded corner, centre at (R + f, s − f) in the (ρ, z) half-plane
        let q_rho = d_h - fillet;
        let q_z = fillet - d_v;
        let dist = q_rho.hypot(q_z);
        if dist > fillet {
            return None;
        }
        if dist == 0.0 {
            let n = (Vec3::new(0.0, 0.0, 1.0) - outward) * std::f64::consts::FRAC_1_SQRT_2;
            return Some((fillet, n));
        }
        let n = outward * (q_rho / dist) + Vec3::new(0.0, 0.0, q_z / dist);
        return Some((fillet - dist, n));
    }
    if d_v <= d_h {
        Some((d_v, Vec3::new(0.0, 0.0, 1.0)))
    } else {
        Some((d_h, -outward))
    }
}

#[derive(Default)]
struct Group {
    max_pen: f64,
    weight: f64,
    normal: Vec3,
    point: Vec3,
}

impl Group {
    fn add(&mut self, pen: f64, normal: Vec3, at: Vec3) {
        self.max_pen = self.max_pen.max(pen);
        self.weight += pen;
        self.normal = self.normal + normal * pen;
        self.point = self.point + at * pen;
    }

    /// World force and application point, or None when the group is not touching.
    fn resolve(&self, p: &SimParams, scale: f64) -> Option<(Vec3, Vec3)> {
        if self.weight <= 0.0 {
            return None;
        }
        let nn = self.normal.norm();
        if nn == 0.0 {
            return None;
        }
        let n = self.normal * (1.0 / nn);
        let mag = self.max_pen * scale;
        let f = Vec3::new(n.x * p.k_xy * mag, n.y * p.k_xy * mag, n.z * p.k_z * mag);
        Some((f, self.point * (1.0 / self.weight)))
    }
}

/// Evaluates contact for a tool pose. Pure and deterministic.
pub fn evaluate(tcp: &Pose, peg: &PegSpec, hole: &HoleSpec, params: &SimParams) -> ContactReport {
    let place = PegPlacement::from_tcp(tcp, peg);
    let fillet = params.edge_fillet;
    let mut rim = Group::default();
    let mut near_edge = false;
    for i in 0..RIM_SAMPLES {
        let pt = place.rim_point(peg.radius, i);
        if let Some((pen, n)) = solid_penetration(pt, hole, fillet) {
            if pen > 0.0 {
                rim.add(pen, n, pt);
                let rho = (pt.x - hole.center_true.x).hypot(pt.y - hole.center_true.y);
                if rho < hole.radius + fillet {
                    near_edge = true;
                }
            }
        }
    }

    // Side against the straight wall just below the fillet.
    let wall_top = hole.surface_z - fillet;
    let mut side = Group::default();
    let mut side_scale = 0.0;
    if place.bottom.z < wall_top && place.up.z > 1e-6 {
        let q = place.axis_at_height(wall_top);
        let dx = q.x - hole.center_true.x;
        let dy = q.y - hole.center_true.y;
        let off = dx.hypot(dy);
        let pen = off + peg.radius - hole.radius;
        if pen > 0.0 && off > 0.0 {
            let u = Vec3::new(dx / off, dy / off, 0.0);
            let at = Vec3::new(q.x + u.x * peg.radius, q.y + u.y * peg.radius, wall_top);
            side.add(pen, -u, at);
            // blends in over one fillet radius so the force is continuous in depth
            side_scale = ((wall_top - place.bottom.z) / fillet).clamp(0.0, 1.0);
        }
    }

    let max_penetration = rim.max_pen.max(side.max_pen);
    let mut force = Vec3::ZERO;
    let mut moment = Vec3::ZERO;
    for (g, scale) in [(&rim, 1.0), (&side, side_scale)] {
        if let Some((f, at)) = g.resolve(params, scale) {
            force = force + f;
            moment = moment + (at - tcp.position).cross(f);
        }
    }

    let kind = if max_penetration <= 0.0 {
        ContactKind::Free
    } else if place.bottom.z < hole.surface_z - 1e-6 && (place.bottom - hole.center_true).planar_norm() < hole.radius {
        ContactKind::InHole
    } else if near_edge {
        ContactKind::Rim
    } else {
        ContactKind::Surface
    };

    let m = tcp.rotation();
    let f = m.tr_mul_vec(force);
    let mo = m.tr_mul_vec(moment);
    ContactReport { wrench: Wrench::new(f.x, f.y, f.z, mo.x, mo.y, mo.z), max_penetration, kind }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::Rpy;
    use std::f64::consts::PI;

    fn scene() -> (PegSpec, HoleSpec, SimParams) {
        let peg = PegSpec { radius: 0.010, length: 0.03, grasp_offset: Vec3::ZERO };
        let hole = HoleSpec::with_clearance(Vec3::new(0.5, 0.0, 0.1), &peg, 0.0005, 0.015);
        (peg, hole, SimParams::default())
    }

    fn tcp_for_bottom(bottom: Vec3, peg: &PegSpec) -> Pose {
        Pose::new(bottom + Vec3::new(0.0, 0.0, peg.length), Rpy::new(PI, 0.0, 0.0))
    }

    #[test]
    fn free_space_has_no_wrench() {
        let (peg, hole, p) = scene();
        let tcp = tcp_for_bottom(Vec3::new(0.5, 0.003, 0.101), &peg);
        let r = evaluate(&tcp, &peg, &hole, &p);
        assert_eq!(r.wrench, Wrench::ZERO);
        assert_eq!(r.kind, ContactKind::Free);
    }

    #[test]
    fn flat_press_gives_analytic_force() {
        let (peg, hole, p) = scene();
        let tcp = tcp_for_bottom(Vec3::new(0.53, 0.0, 0.1 - 0.00005), &peg);
        let r = evaluate(&tcp, &peg, &hole, &p);
        assert!((r.wrench.fz + 5.0).abs() < 1e-9, "{:?}", r.wrench);
        assert!(r.wrench.fx.abs() < 1e-9 && r.wrench.fy.abs() < 1e-9);
        assert!(r.wrench.mx.abs() < 1e-9 && r.wrench.my.abs() < 1e-9);
        assert_eq!(r.kind, ContactKind::Surface);
    }

    #[test]
    fn centred_descent_is_symmetric() {
        let (peg, hole, p) = scene();
        let tcp = tcp_for_bottom(Vec3::new(0.5, 0.0, 0.095), &peg);
        let r = evaluate(&tcp, &peg, &hole, &p);
        assert!(r.wrench.fx.abs() < 1e-12 && r.wrench.fy.abs() < 1e-12);
        assert!(r.wrench.mx.abs() < 1e-12 && r.wrench.my.abs() < 1e-12);
    }

    #[test]
    fn wall_contact_pushes_towards_axis() {
        let (peg, hole, p) = scene();
        // 0.6 mm offset along +x with 0.5 mm clearance: 0.1 mm into the wall
        let tcp = tcp_for_bottom(Vec3::new(0.5006, 0.0, 0.095), &peg);
        let r = evaluate(&tcp, &peg, &hole, &p);
        assert_eq!(r.kind, ContactKind::InHole);
        assert!((r.max_penetration - 0.0001).abs() < 1e-9);
        // tool x is base x for roll = π, so the restoring force is −x
        assert!(r.wrench.fx < -1.0, "{:?}", r.wrench);
    }

    #[test]
    fn rim_contact_points_back_to_hole() {
        let (peg, hole, p) = scene();
        let tcp = tcp_for_bottom(Vec3::new(0.5015, 0.0, 0.1 - 0.00005), &peg);
        let r = evaluate(&tcp, &peg, &hole, &p);
        assert!(r.wrench.fz < 0.0);
        assert!(r.wrench.fx < 0.0, "{:?}", r.wrench);
    }

    #[test]
    fn penetration_is_continuous_across_rim() {
        let (_, hole, _) = scene();
        let f = 0.00025;
        let mut last = None::<f64>;
        for i in 0..2000 {
            let rho = hole.radius - 0.0005 + i as f64 * 1e-6;
            let pt = Vec3::new(hole.center_true.x + rho, 0.0, hole.surface_z - 0.0001);
            let d = solid_penetration(pt, &hole, f).map(|x| x.0).unwrap_or(0.0);
            if let Some(prev) = last {
                assert!((d - prev).abs() <= 1.01e-6, "jump at rho={rho}: {prev} -> {d}");
            }
            last = Some(d);
        }
    }
}
