//! Biased, noisy six-axis force/torque sensor.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::Wrench;

pub const SIGMA_FORCE: f64 = 0.05;
pub const SIGMA_MOMENT: f64 = 0.005;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FtSensor {
    /// Constant offset, drawn once per episode.
    pub bias: Wrench,
    pub sigma_force: f64,
    pub sigma_moment: f64,
    pub noise: bool,
}

impl FtSensor {
    pub fn new(bias: Wrench, noise: bool) -> Self {
        Self { bias, sigma_force: SIGMA_FORCE, sigma_moment: SIGMA_MOMENT, noise }
    }

    /// Draws a bias of up to ±2 N and ±0.2 N·m per axis.
    pub fn random_bias<R: Rng + ?Sized>(rng: &mut R) -> Wrench {
        let mut a = [0.0; 6];
        for (i, v) in a.iter_mut().enumerate() {
            let span = if i < 3 { 2.0 } else { 0.2 };
            *v = rng.random_range(-span..=span);
        }
        Wrench::from_array(a)
    }
}

/// True wrench plus bias plus zero-mean Gaussian noise.
pub fn sense_ft<R: Rng + ?Sized>(truth: Wrench, sensor: &FtSensor, rng: &mut R) -> Wrench {
    let mut out = (truth + sensor.bias).to_array();
    if sensor.noise {
        let nf = Normal::new(0.0, sensor.sigma_force).expect("finite sigma");
        let nm = Normal::new(0.0, sensor.sigma_moment).expect("finite sigma");
        for (i, v) in out.iter_mut().enumerate() {
            *v += if i < 3 { nf.sample(rng) } else { nm.sample(rng) };
        }
    }
    Wrench::from_array(out)
}
