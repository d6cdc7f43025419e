//! The 27-action discrete space, frozen in dimension-major order with
//! magnitudes ascending inside each block.

use std::fmt;

use super::EnvError;

pub const NUM_ACTIONS: usize = 27;

/// Translation step lengths in millimetres.
pub const TRANSLATION_STEPS_MM: [f64; 3] = [0.1, 0.5, 1.0];
/// Rotation step lengths in degrees.
pub const ROTATION_STEPS_DEG: [f64; 3] = [0.05, 0.08, 0.1];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ActionId(u8);

impl ActionId {
    pub fn new(index: usize) -> Result<Self, EnvError> {
        if index < NUM_ACTIONS {
            Ok(Self(index as u8))
        } else {
            Err(EnvError::ActionOutOfRange(index))
        }
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn all() -> impl Iterator<Item = ActionId> {
        (0..NUM_ACTIONS as u8).map(ActionId)
    }
}

/// Motion dimension in the peg frame. Tool +Z points at the table, so `TransZ`
/// with positive sign is the downward insertion move.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Dimension {
    TransX,
    TransY,
    TransZ,
    RotX,
    RotY,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Primitive {
    pub dim: Dimension,
    pub sign: i8,
    /// Meters for translations, radians for rotations.
    pub magnitude: f64,
}

impl Primitive {
    pub fn is_rotation(&self) -> bool {
        matches!(self.dim, Dimension::RotX | Dimension::RotY)
    }
}

impl fmt::Display for Primitive {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = if self.sign > 0 { '+' } else { '-' };
        match self.dim {
            Dimension::TransX => write!(f, "tx{s}{}mm", self.magnitude * 1e3),
            Dimension::TransY => write!(f, "ty{s}{}mm", self.magnitude * 1e3),
            Dimension::TransZ => write!(f, "tz{s}{}mm", self.magnitude * 1e3),
            Dimension::RotX => write!(f, "rx{s}{}deg", self.magnitude.to_degrees()),
            Dimension::RotY => write!(f, "ry{s}{}deg", self.magnitude.to_degrees()),
        }
    }
}

const BLOCKS: [(Dimension, i8); 9] = [
    (Dimension::TransX, 1),
    (Dimension::TransX, -1),
    (Dimension::TransY, 1),
    (Dimension::TransY, -1),
    (Dimension::TransZ, 1),
    (Dimension::RotX, 1),
    (Dimension::RotX, -1),
    (Dimension::RotY, 1),
    (Dimension::RotY, -1),
];

pub fn decode_action(a: ActionId) -> Primitive {
    let (dim, sign) = BLOCKS[a.index() / 3];
    let k = a.index() % 3;
    let magnitude = match dim {
        Dimension::TransX | Dimension::TransY | Dimension::TransZ => TRANSLATION_STEPS_MM[k] * 1e-3,
        Dimension::RotX | Dimension::RotY => ROTATION_STEPS_DEG[k].to_radians(),
    };
    Primitive { dim, sign, magnitude }
}

pub fn encode_action(p: &Primitive) -> Option<ActionId> {
    ActionId::all().find(|&a| {
        let q = decode_action(a);
        q.dim == p.dim && q.sign == p.sign && (q.magnitude - p.magnitude).abs() < 1e-12
    })
}

/// Canonical text of the enumeration, as stored in config echoes.
pub fn action_table() -> String {
    ActionId::all().map(|a| decode_action(a).to_string()).collect::<Vec<_>>().join(",")
}

/// FNV-1a over the canonical table; checkpoints carry it to catch reordering.
pub fn action_table_hash() -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in action_table().bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}
