//! Central finite-difference sweep over every parameter of the small network.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::network::loss_grad;
use super::{loss, Architecture, Batch, DuelingNet, ForwardCache};
use crate::env::StateObs;
use crate::sim::GrayImage;

pub const GRADCHECK_BOUND: f64 = 1e-3;
/// Perturbation for the central differences.
pub const FD_STEP: f64 = 1e-5;
/// Denominator floor so that parameters with vanishing gradient compare absolutely.
pub const REL_FLOOR: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub seed: u64,
    pub params_checked: usize,
    pub max_rel_error: f64,
    /// Layer name and flat index of the worst parameter.
    pub worst: (String, usize),
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < GRADCHECK_BOUND
    }
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_FLOOR)
}

/// Random states, actions and regression targets for the sweep.
pub fn random_problem(arch: &Architecture, n: usize, rng: &mut ChaCha8Rng) -> (Vec<StateObs>, Vec<usize>, Vec<f64>) {
    let mut states = Vec::with_capacity(n);
    for _ in 0..n {
        let levels = (0..arch.pixels()).map(|_| rng.random::<u8>()).collect();
        states.push(StateObs {
            image: Arc::new(GrayImage::from_levels(arch.image_size, arch.image_size, levels).expect("square image")),
            pose_n: std::array::from_fn(|_| rng.random_range(-0.5..0.5)),
            wrench_n: std::array::from_fn(|_| rng.random_range(-2.0..2.0)),
        });
    }
    let actions = (0..n).map(|_| rng.random_range(0..arch.n_actions)).collect();
    let targets = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    (states, actions, targets)
}

/// Mean loss over the batch, taken at the chosen actions.
pub fn batch_loss(net: &DuelingNet<f64>, batch: &Batch<f64>, actions: &[usize], targets: &[f64]) -> f64 {
    let mut cache = ForwardCache::new();
    let q = net.forward(batch, &mut cache).expect("well-formed batch");
    let n = net.architecture().n_actions;
    let total: f64 = actions.iter().zip(targets).enumerate().map(|(i, (&a, &t))| loss(q[i * n + a], t)).sum();
    total / actions.len() as f64
}

/// Analytic gradient of `batch_loss`.
pub fn batch_gradient(
    net: &DuelingNet<f64>,
    batch: &Batch<f64>,
    actions: &[usize],
    targets: &[f64],
) -> DuelingNet<f64> {
    let mut cache = ForwardCache::new();
    let q = net.forward(batch, &mut cache).expect("well-formed batch").to_vec();
    let n = net.architecture().n_actions;
    let mut dq = vec![0.0; q.len()];
    let scale = 1.0 / actions.len() as f64;
    for (i, (&a, &t)) in actions.iter().zip(targets).enumerate() {
        dq[i * n + a] = loss_grad(q[i * n + a], t) * scale;
    }
    let mut g = DuelingNet::zeros(net.architecture());
    net.backward(&mut cache, &dq, &mut g).expect("matching shapes");
    g
}

/// Runs the sweep. `corrupt` perturbs one analytic entry as a negative control.
pub fn gradcheck(seed: u64, corrupt: bool) -> GradcheckReport {
    let arch = Architecture::downsized();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = DuelingNet::<f64>::init(&arch, &mut rng);
    // non-zero biases keep pre-activations off the ReLU kink at exactly 0
    for l in net.layers_mut() {
        for b in l.bias.data_mut() {
            *b = rng.random_range(-0.1..0.1);
        }
    }
    let (states, actions, targets) = random_problem(&arch, 3, &mut rng);
    let batch = Batch::from_obs(&states);
    let mut analytic: Vec<f64> = batch_gradient(&net, &batch, &actions, &targets).params().copied().collect();
    if corrupt {
        let i = analytic.len() / 2;
        analytic[i] = analytic[i] * 1.5 + 0.01;
    }

    let mut names = Vec::with_capacity(analytic.len());
    for l in net.layers() {
        for k in 0..l.weight.len() + l.bias.len() {
            names.push((l.name.clone(), k));
        }
    }

    let mut probe = net.clone();
    let mut worst = (0.0, 0usize);
    for i in 0..analytic.len() {
        let original = *net.params().nth(i).expect("index in range");
        let set = |p: &mut DuelingNet<f64>, v: f64| *p.params_mut().nth(i).expect("index in range") = v;
        set(&mut probe, original + FD_STEP);
        let up = batch_loss(&probe, &batch, &actions, &targets);
        set(&mut probe, original - FD_STEP);
        let down = batch_loss(&probe, &batch, &actions, &targets);
        set(&mut probe, original);
        let numeric = (up - down) / (2.0 * FD_STEP);
        let e = relative_error(analytic[i], numeric);
        if e > worst.0 {
            worst = (e, i);
        }
    }
    GradcheckReport { seed, params_checked: analytic.len(), max_rel_error: worst.0, worst: names[worst.1].clone() }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fresh_network_passes() {
        let r = gradcheck(11, false);
        assert!(r.passed(), "{r:?}");
        assert_eq!(r.params_checked, DuelingNet::<f64>::zeros(&Architecture::downsized()).num_params());
    }

    #[test]
    fn corrupted_gradient_fails() {
        assert!(!gradcheck(11, true).passed());
    }

    #[test]
    fn single_precision_backprop_tracks_double() {
        let arch = Architecture::downsized();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = DuelingNet::<f64>::init(&arch, &mut rng);
        let (states, actions, targets) = random_problem(&arch, 3, &mut rng);
        let g64 = batch_gradient(&net, &Batch::from_obs(&states), &actions, &targets);

        let net32: DuelingNet<f32> = net.cast();
        let batch32 = Batch::<f32>::from_obs(&states);
        let mut cache = ForwardCache::new();
        let q = net32.forward(&batch32, &mut cache).unwrap().to_vec();
        let mut dq = vec![0.0f32; q.len()];
        for (i, (&a, &t)) in actions.iter().zip(&targets).enumerate() {
            dq[i * 27 + a] = loss_grad(q[i * 27 + a], t as f32) / 3.0;
        }
        let mut g32 = DuelingNet::zeros(&arch);
        net32.backward(&mut cache, &dq, &mut g32).unwrap();
        let scale = g64.params().fold(0.0f64, |m, v| m.max(v.abs()));
        for (a, b) in g32.params().zip(g64.params()) {
            assert!((*a as f64 - b).abs() < 1e-4 * scale);
        }
    }
}
