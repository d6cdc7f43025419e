use std::f64::consts::PI;
use std::sync::Arc;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use peghole::agent::{
    discounted_sum, epsilon_value, greedy, select_action, target_value, EpsilonSchedule, ReplayBuffer, TargetStyle,
    TrainConfig, Transition,
};
use peghole::env::{decode_action, encode_action, ActionId, StateObs, NUM_ACTIONS};
use peghole::kinematics::{cbp_world, tcp_after_rotation, Axis, Pose, Rpy, Vec3};
use peghole::nn::dueling_combine;
use peghole::sim::{GrayImage, Wrench};
use peghole::tcs::{classify, SafetyThresholds, SafetyZone};

fn pose() -> impl Strategy<Value = Pose> {
    (0.3..0.7f64, -0.2..0.2f64, 0.1..0.4f64, -0.4..0.4f64, -0.4..0.4f64, -PI..PI)
        .prop_map(|(x, y, z, g, b, a)| Pose::new(Vec3::new(x, y, z), Rpy::new(PI + g, b, a)))
}

fn obs(tag: u8) -> StateObs {
    StateObs {
        image: Arc::new(GrayImage::from_levels(2, 2, vec![tag; 4]).unwrap()),
        pose_n: [tag as f64; 6],
        wrench_n: [0.0; 5],
    }
}

proptest! {
    #[test]
    fn rotation_keeps_cbp_fixed(p in pose(), delta in -0.01..0.01f64, about_x in any::<bool>(), z in 0.01..0.1f64) {
        let axis = if about_x { Axis::X } else { Axis::Y };
        let after = tcp_after_rotation(&p, axis, delta, z).unwrap();
        let d = (cbp_world(&after, z).unwrap() - cbp_world(&p, z).unwrap()).norm();
        prop_assert!(d < 1e-9, "moved {d}");
    }

    #[test]
    fn action_codec_round_trips(i in 0..NUM_ACTIONS) {
        let a = ActionId::new(i).unwrap();
        prop_assert_eq!(encode_action(&decode_action(a)), Some(a));
    }

    #[test]
    fn dueling_advantages_are_centred(val in -10.0..10.0f64, adv in prop::collection::vec(-10.0..10.0f64, 2..40)) {
        let q = dueling_combine(val, &adv);
        let mean_q = q.iter().sum::<f64>() / q.len() as f64;
        prop_assert!((mean_q - val).abs() < 1e-9);
        for w in 0..adv.len() {
            for v in 0..adv.len() {
                prop_assert!(((q[w] - q[v]) - (adv[w] - adv[v])).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn standard_target_is_bellman(rewards in prop::collection::vec(-1.0..1.0f64, 1..6), lambda in 0.0..1.0f64, boot in -3.0..3.0f64) {
        let k = rewards.len();
        let cfg = TrainConfig { k, lambda, target_style: TargetStyle::StandardDqn, ..TrainConfig::default() };
        // peel the first reward off: y_k = r_1 + λ·y_{k−1} on the tail
        let y = target_value(0.0, &rewards, false, boot, &cfg);
        let tail = if k == 1 {
            boot
        } else {
            let c = TrainConfig { k: k - 1, ..cfg.clone() };
            target_value(0.0, &rewards[1..], false, boot, &c)
        };
        let lam = if k == 1 { 1.0 } else { lambda };
        prop_assert!((y - (rewards[0] + lam * tail)).abs() < 1e-9);
        let yt = target_value(0.0, &rewards, true, boot, &cfg);
        prop_assert!((yt - discounted_sum(&rewards, lambda)).abs() < 1e-12);
    }

    #[test]
    fn literal_target_moves_toward_return(rewards in prop::collection::vec(-1.0..1.0f64, 1..6), q_pre in -3.0..3.0f64, alpha in 0.0..1.0f64) {
        let cfg = TrainConfig { k: rewards.len(), alpha, target_style: TargetStyle::LiteralEq10, ..TrainConfig::default() };
        let g = discounted_sum(&rewards, cfg.lambda);
        let y = target_value(q_pre, &rewards, true, 0.0, &cfg);
        prop_assert!((y - q_pre).abs() <= (g - q_pre).abs() + 1e-12);
        prop_assert!((y - q_pre) * (g - q_pre) >= 0.0);
    }

    #[test]
    fn replay_holds_the_newest(capacity in 1..20usize, pushes in 0..60usize) {
        let mut buf = ReplayBuffer::new(capacity);
        for i in 0..pushes {
            buf.push(Transition {
                state: obs(i as u8),
                action: ActionId::new(i % NUM_ACTIONS).unwrap(),
                rewards: vec![i as f64],
                terminal_within: None,
                bootstrap_state: obs(0),
            });
        }
        prop_assert_eq!(buf.len(), pushes.min(capacity));
        let mut held: Vec<usize> = buf.iter().map(|t| t.rewards[0] as usize).collect();
        held.sort();
        let want: Vec<usize> = (pushes.saturating_sub(capacity)..pushes).collect();
        prop_assert_eq!(held, want);
        if !buf.is_empty() {
            let mut rng = ChaCha8Rng::seed_from_u64(pushes as u64);
            prop_assert!(buf.sample_indices(64, &mut rng).iter().all(|&i| i < buf.len()));
        }
    }

    #[test]
    fn epsilon_is_monotone_and_bounded(a in 0..200_000u64, b in 0..200_000u64, decay in 1..100_000u64) {
        let e = |s| epsilon_value(&EpsilonSchedule { steps_accu: s, indx_decay: decay, ..EpsilonSchedule::default() });
        let (lo, hi) = (a.min(b), a.max(b));
        prop_assert!(e(lo) >= e(hi));
        prop_assert!((0.1..=1.0).contains(&e(a)));
    }

    #[test]
    fn greedy_when_not_exploring(q in prop::collection::vec(-5.0..5.0f32, NUM_ACTIONS), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        prop_assert_eq!(select_action(&q, 0.0, &mut rng).index(), greedy(&q));
        let best = q.iter().cloned().fold(f32::MIN, f32::max);
        prop_assert_eq!(q[greedy(&q)], best);
    }

    #[test]
    fn zones_grow_with_magnitude(w in prop::array::uniform6(-20.0..20.0f64), scale in 1.0..3.0f64) {
        let th = SafetyThresholds::default();
        let a = Wrench::new(w[0], w[1], w[2], w[3] / 10.0, w[4] / 10.0, w[5] / 10.0);
        let b = Wrench::new(a.fx * scale, a.fy * scale, a.fz * scale, a.mx * scale, a.my * scale, a.mz * scale);
        let rank = |z: SafetyZone| match z {
            SafetyZone::Safe => 0,
            SafetyZone::Warning => 1,
            SafetyZone::Dangerous => 2,
        };
        prop_assert!(rank(classify(&b, &th)) >= rank(classify(&a, &th)));
    }
}
