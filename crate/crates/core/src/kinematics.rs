//! Frame math for the tool: roll-pitch-yaw rotations, peg-tip bookkeeping and
//! the TCP correction that pivots rotation actions about the peg bottom.
//!
//! Conventions: the peg extends along +Z of the tool frame and the nominal tool
//! orientation points that axis down at the table (roll = π). The peg bottom
//! centre (CBP) therefore sits at `tcp + M·[0, 0, z_peg]`.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};

use thiserror::Error;

/// Poses with pitch beyond this magnitude are rejected (gimbal lock guard).
pub const MAX_PITCH: f64 = 1.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KinematicsError {
    #[error("peg length must be positive, got {0}")]
    NonPositivePegLength(f64),
    #[error("rotation actions exist only about X and Y")]
    ZRotation,
    #[error("translation direction must be non-zero")]
    ZeroDirection,
    #[error("pitch {0} rad is too close to the Euler singularity")]
    NearSingularity(f64),
    #[error("non-finite pose component")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(self.y * o.z - self.z * o.y, self.z * o.x - self.x * o.z, self.x * o.y - self.y * o.x)
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Length of the projection onto the XY plane.
    pub fn planar_norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

/// Wraps an angle into the principal range (−π, π].
pub fn wrap_angle(a: f64) -> f64 {
    if a > -PI && a <= PI {
        return a;
    }
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    // rem_euclid maps −π to π already; guard the opposite rounding edge.
    if w <= -PI {
        w += 2.0 * PI;
    }
    w
}

/// Smallest signed difference `a − b` on the circle.
pub fn angle_diff(a: f64, b: f64) -> f64 {
    let d = wrap_angle(a - b);
    if d == PI {
        // ±π are the same distance; report the negative side symmetrically
        -PI
    } else {
        d
    }
}

/// Roll (about X), pitch (about Y), yaw (about Z), composed as Rz·Ry·Rx.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Rpy {
    pub gamma: f64,
    pub beta: f64,
    pub alpha: f64,
}

impl Rpy {
    pub const fn new(gamma: f64, beta: f64, alpha: f64) -> Self {
        Self { gamma, beta, alpha }
    }

    pub fn normalized(self) -> Self {
        Self::new(wrap_angle(self.gamma), wrap_angle(self.beta), wrap_angle(self.alpha))
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.gamma, self.beta, self.alpha]
    }
}

/// Row-major 3×3 rotation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationMatrix(pub [[f64; 3]; 3]);

impl RotationMatrix {
    pub const IDENTITY: RotationMatrix = RotationMatrix([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);

    pub fn mul_vec(&self, v: Vec3) -> Vec3 {
        let m = &self.0;
        Vec3::new(
            m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
            m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
            m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z,
        )
    }

    /// Applies the transpose, i.e. maps base-frame vectors into the tool frame.
    pub fn tr_mul_vec(&self, v: Vec3) -> Vec3 {
        let m = &self.0;
        Vec3::new(
            m[0][0] * v.x + m[1][0] * v.y + m[2][0] * v.z,
            m[0][1] * v.x + m[1][1] * v.y + m[2][1] * v.z,
            m[0][2] * v.x + m[1][2] * v.y + m[2][2] * v.z,
        )
    }

    pub fn mul_mat(&self, o: &RotationMatrix) -> RotationMatrix {
        let mut out = [[0.0; 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = (0..3).map(|k| self.0[i][k] * o.0[k][j]).sum();
            }
        }
        RotationMatrix(out)
    }

    pub fn transpose(&self) -> RotationMatrix {
        let m = &self.0;
        RotationMatrix([[m[0][0], m[1][0], m[2][0]], [m[0][1], m[1][1], m[2][1]], [m[0][2], m[1][2], m[2][2]]])
    }

    pub fn determinant(&self) -> f64 {
        let m = &self.0;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    pub fn column(&self, j: usize) -> Vec3 {
        Vec3::new(self.0[0][j], self.0[1][j], self.0[2][j])
    }
}

/// Tool pose in the base frame.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Pose {
    pub position: Vec3,
    pub orientation: Rpy,
}

impl Pose {
    pub fn new(position: Vec3, orientation: Rpy) -> Self {
        Self { position, orientation: orientation.normalized() }
    }

    pub fn rotation(&self) -> RotationMatrix {
        rpy_to_matrix(self.orientation)
    }

    pub fn validate(&self) -> Result<(), KinematicsError> {
        let o = self.orientation;
        if !self.position.is_finite() || !(o.gamma.is_finite() && o.beta.is_finite() && o.alpha.is_finite()) {
            return Err(KinematicsError::NonFinite);
        }
        if o.beta.abs() > MAX_PITCH {
            return Err(KinematicsError::NearSingularity(o.beta));
        }
        Ok(())
    }

    /// Linear interpolation between two poses, taking the short way round on angles.
    pub fn lerp(&self, to: &Pose, t: f64) -> Pose {
        let a = self.orientation;
        let b = to.orientation;
        Pose::new(
            self.position + (to.position - self.position) * t,
            Rpy::new(
                a.gamma + angle_diff(b.gamma, a.gamma) * t,
                a.beta + angle_diff(b.beta, a.beta) * t,
                a.alpha + angle_diff(b.alpha, a.alpha) * t,
            ),
        )
    }
}

/// Rotation about a tool axis available to the agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    X,
    Y,
    Z,
}

pub fn rot_x(a: f64) -> RotationMatrix {
    let (s, c) = a.sin_cos();
    RotationMatrix([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])
}

pub fn rot_y(a: f64) -> RotationMatrix {
    let (s, c) = a.sin_cos();
    RotationMatrix([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])
}

pub fn rot_z(a: f64) -> RotationMatrix {
    let (s, c) = a.sin_cos();
    RotationMatrix([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
}

/// Closed-form Rz(α)·Ry(β)·Rx(γ).
pub fn rpy_to_matrix(r: Rpy) -> RotationMatrix {
    let (sg, cg) = r.gamma.sin_cos();
    let (sb, cb) = r.beta.sin_cos();
    let (sa, ca) = r.alpha.sin_cos();
    RotationMatrix([
        [ca * cb, ca * sb * sg - sa * cg, ca * sb * cg + sa * sg],
        [sa * cb, sa * sb * sg + ca * cg, sa * sb * cg - ca * sg],
        [-sb, cb * sg, cb * cg],
    ])
}

/// World position of the peg bottom centre for a tool pose.
pub fn cbp_world(tcp: &Pose, z_peg: f64) -> Result<Vec3, KinematicsError> {
    if !(z_peg >= 0.0) {
        return Err(KinematicsError::NonPositivePegLength(z_peg));
    }
    Ok(tcp.position + tcp.rotation().mul_vec(Vec3::new(0.0, 0.0, z_peg)))
}

/// New TCP pose after incrementing one Euler angle by `delta`, keeping the CBP fixed:
/// `P_new = M_old·[0,0,z]ᵀ + P_old − M_new·[0,0,z]ᵀ`.
pub fn tcp_after_rotation(tcp_old: &Pose, axis: Axis, delta: f64, z_peg: f64) -> Result<Pose, KinematicsError> {
    if !(z_peg > 0.0) {
        return Err(KinematicsError::NonPositivePegLength(z_peg));
    }
    let mut o = tcp_old.orientation;
    match axis {
        Axis::X => o.gamma += delta,
        Axis::Y => o.beta += delta,
        Axis::Z => return Err(KinematicsError::ZRotation),
    }
    let lever = Vec3::new(0.0, 0.0, z_peg);
    let m_old = rpy_to_matrix(tcp_old.orientation);
    let m_new = rpy_to_matrix(o);
    let position = m_old.mul_vec(lever) + tcp_old.position - m_new.mul_vec(lever);
    Ok(Pose::new(position, o))
}

/// Maps a translation given in the peg (tool) frame into the base frame.
pub fn peg_frame_translation_to_base(dir: Vec3, tcp: &Pose) -> Result<Vec3, KinematicsError> {
    if dir.norm() == 0.0 {
        return Err(KinematicsError::ZeroDirection);
    }
    Ok(tcp.rotation().mul_vec(dir))
}
