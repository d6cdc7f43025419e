//! N-step dueling DQN agent: ε-greedy selection, replay, k-step targets and
//! the episode loop that feeds them.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{ActionId, EnvError, EpisodeOutcome, PegInHoleEnv, StartMode, StateObs, NUM_ACTIONS};
use crate::nn::{Architecture, Batch, DuelingNet, ForwardCache, Nadam, NadamState, NnError};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("replay holds {have} transitions, batch needs {need}")]
    InsufficientBuffer { have: usize, need: usize },
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("invalid training config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetStyle {
    /// `Q_pre + α(G − Q_pre)`, with the learning rate inside the target.
    LiteralEq10,
    /// `G`, the learning rate is left to the optimizer.
    StandardDqn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Discount λ.
    pub lambda: f64,
    /// Learning rate α.
    pub alpha: f64,
    /// Look-ahead steps.
    pub k: usize,
    pub step_max: u32,
    pub batch_size: usize,
    pub buffer_size: usize,
    /// Optimizer steps between target-network copies.
    pub update_rate: u64,
    pub target_style: TargetStyle,
    /// Environment steps per optimizer step.
    pub train_every: u64,
    /// Transitions collected before the first optimizer step.
    pub learning_starts: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 0.95,
            alpha: 1e-4,
            k: 4,
            step_max: crate::env::STEP_MAX,
            batch_size: 32,
            buffer_size: 100_000,
            update_rate: 1000,
            target_style: TargetStyle::StandardDqn,
            train_every: 1,
            learning_starts: 1000,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        let ok = self.lambda > 0.0
            && self.lambda <= 1.0
            && self.alpha > 0.0
            && self.k >= 1
            && self.step_max >= 1
            && self.batch_size >= 1
            && self.buffer_size >= self.batch_size
            && self.update_rate >= 1
            && self.train_every >= 1;
        if ok {
            Ok(())
        } else {
            Err(AgentError::Config("hyperparameters must be positive with k ≥ 1 and buffer ≥ batch".into()))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpsilonSchedule {
    pub eps_min: f64,
    pub eps_max: f64,
    pub indx_decay: u64,
    pub steps_accu: u64,
    pub frozen_eps: Option<f64>,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        Self { eps_min: 0.1, eps_max: 1.0, indx_decay: 30_000, steps_accu: 0, frozen_eps: None }
    }
}

/// Linear decay from `eps_max` to `eps_min` over `indx_decay` steps, then flat.
pub fn epsilon_value(s: &EpsilonSchedule) -> f64 {
    if let Some(e) = s.frozen_eps {
        return e;
    }
    let frac = 1.0 - s.steps_accu as f64 / s.indx_decay as f64;
    (s.eps_min + (s.eps_max - s.eps_min) * frac).clamp(s.eps_min, s.eps_max)
}

/// Lowest index among the maximal entries.
pub fn greedy(q: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in q.iter().enumerate().skip(1) {
        if v > q[best] {
            best = i;
        }
    }
    best
}

/// ε-greedy. One uniform draw decides exploration; a second picks the action
/// only when exploring.
pub fn select_action<R: Rng + ?Sized>(q: &[f32], eps: f64, rng: &mut R) -> ActionId {
    let idx = if rng.random::<f64>() < eps { rng.random_range(0..NUM_ACTIONS) } else { greedy(q) };
    ActionId::new(idx).expect("index below NUM_ACTIONS")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: StateObs,
    pub action: ActionId,
    /// `R_{t+1} … R_{t+m}` with `1 ≤ m ≤ k`.
    pub rewards: Vec<f64>,
    /// Set to m when the episode ended at the m-th reward.
    pub terminal_within: Option<usize>,
    pub bootstrap_state: StateObs,
}

/// Fixed-capacity ring with uniform sampling.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self { capacity, items: Vec::with_capacity(capacity.min(1 << 16)), next: 0 }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    /// Indices drawn uniformly with replacement.
    pub fn sample_indices<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<usize> {
        (0..n).map(|_| rng.random_range(0..self.items.len())).collect()
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.items[i]
    }
}

/// `Σ λ^{i−1} R_{t+i}`.
pub fn discounted_sum(rewards: &[f64], lambda: f64) -> f64 {
    let mut acc = 0.0;
    let mut w = 1.0;
    for r in rewards {
        acc += w * r;
        w *= lambda;
    }
    acc
}

/// Regression target from its scalar ingredients. `bootstrap_max` is ignored
/// when the window contains the terminal step.
pub fn target_value(q_pre: f64, rewards: &[f64], terminal: bool, bootstrap_max: f64, cfg: &TrainConfig) -> f64 {
    let mut g = discounted_sum(rewards, cfg.lambda);
    if !terminal {
        g += cfg.lambda.powi(cfg.k as i32 - 1) * bootstrap_max;
    }
    match cfg.target_style {
        TargetStyle::LiteralEq10 => q_pre + cfg.alpha * (g - q_pre),
        TargetStyle::StandardDqn => g,
    }
}

/// Target for one transition: bootstrap from the target network, baseline from
/// the online network.
pub fn n_step_target(tr: &Transition, online: &DuelingNet<f32>, target: &DuelingNet<f32>, cfg: &TrainConfig) -> f64 {
    let q_pre = online.forward_obs(&tr.state)[tr.action.index()] as f64;
    let terminal = tr.terminal_within.is_some();
    let boot = if terminal {
        0.0
    } else {
        let q = target.forward_obs(&tr.bootstrap_state);
        q[greedy(&q)] as f64
    };
    target_value(q_pre, &tr.rewards, terminal, boot, cfg)
}

/// Minimal environment interface the episode loop needs.
pub trait Environment {
    fn reset(&mut self, mode: StartMode) -> Result<StateObs, EnvError>;
    fn step(&mut self, a: ActionId) -> Result<(StateObs, f64, Option<EpisodeOutcome>), EnvError>;
}

impl Environment for PegInHoleEnv {
    fn reset(&mut self, mode: StartMode) -> Result<StateObs, EnvError> {
        PegInHoleEnv::reset(self, mode)
    }

    fn step(&mut self, a: ActionId) -> Result<(StateObs, f64, Option<EpisodeOutcome>), EnvError> {
        let r = PegInHoleEnv::step(self, a)?;
        Ok((r.obs, r.reward.total, r.outcome))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TelemetryRow {
    pub step: u64,
    pub loss: f64,
    pub epsilon: f64,
    pub buffer_size: usize,
    pub target_syncs: u64,
}

struct Pending {
    state: StateObs,
    action: ActionId,
    rewards: Vec<f64>,
}

pub struct Agent {
    pub cfg: TrainConfig,
    pub eps: EpsilonSchedule,
    pub online: DuelingNet<f32>,
    pub target: DuelingNet<f32>,
    pub opt: NadamState<f32>,
    pub buffer: ReplayBuffer,
    rng: ChaCha8Rng,
    grads: DuelingNet<f32>,
    act_cache: ForwardCache<f32>,
    train_cache: ForwardCache<f32>,
    boot_cache: ForwardCache<f32>,
    batch: Batch<f32>,
    boot_batch: Batch<f32>,
    pub optimizer_steps: u64,
    pub target_syncs: u64,
    pub env_steps: u64,
    pub telemetry: Vec<TelemetryRow>,
}

impl Agent {
    /// Fresh agent. Weights come from `init_seed`, exploration and replay
    /// sampling from `rng_seed`.
    pub fn new(
        cfg: TrainConfig,
        eps: EpsilonSchedule,
        arch: &Architecture,
        init_seed: u64,
        rng_seed: u64,
    ) -> Result<Self, AgentError> {
        cfg.validate()?;
        arch.validate()?;
        let online = DuelingNet::<f32>::init(arch, &mut ChaCha8Rng::seed_from_u64(init_seed));
        Ok(Self::with_params(cfg, eps, online, rng_seed))
    }

    pub fn with_params(cfg: TrainConfig, eps: EpsilonSchedule, online: DuelingNet<f32>, rng_seed: u64) -> Self {
        let arch = online.architecture().clone();
        Self {
            buffer: ReplayBuffer::new(cfg.buffer_size),
            cfg,
            eps,
            target: online.clone(),
            opt: NadamState::new(&online),
            grads: DuelingNet::zeros(&arch),
            online,
            rng: ChaCha8Rng::seed_from_u64(rng_seed),
            act_cache: ForwardCache::new(),
            train_cache: ForwardCache::new(),
            boot_cache: ForwardCache::new(),
            batch: Batch::new(),
            boot_batch: Batch::new(),
            optimizer_steps: 0,
            target_syncs: 0,
            env_steps: 0,
            telemetry: Vec::new(),
        }
    }

    pub fn epsilon(&self) -> f64 {
        epsilon_value(&self.eps)
    }

    pub fn q_values(&mut self, s: &StateObs) -> Vec<f32> {
        self.batch.clear();
        self.batch.push(s);
        self.online.forward(&self.batch, &mut self.act_cache).expect("observation matches the network").to_vec()
    }

    pub fn act(&mut self, s: &StateObs) -> ActionId {
        let q = self.q_values(s);
        let eps = self.epsilon();
        select_action(&q, eps, &mut self.rng)
    }

    /// One optimizer step on a uniform minibatch; returns the mean loss.
    pub fn train_step(&mut self) -> Result<f64, AgentError> {
        let n = self.cfg.batch_size;
        if self.buffer.len() < n {
            return Err(AgentError::InsufficientBuffer { have: self.buffer.len(), need: n });
        }
        let idx = self.buffer.sample_indices(n, &mut self.rng);
        self.batch.clear();
        self.boot_batch.clear();
        for &i in &idx {
            let t = self.buffer.get(i);
            self.batch.push(&t.state);
            self.boot_batch.push(&t.bootstrap_state);
        }
        let boot = self.target.forward(&self.boot_batch, &mut self.boot_cache)?.to_vec();
        let q = self.online.forward(&self.batch, &mut self.train_cache)?.to_vec();

        let na = NUM_ACTIONS;
        let mut dq = vec![0.0f32; n * na];
        let mut total = 0.0;
        for (row, &i) in idx.iter().enumerate() {
            let t = self.buffer.get(i);
            let a = t.action.index();
            let q_pre = q[row * na + a] as f64;
            let brow = &boot[row * na..(row + 1) * na];
            let bmax = brow[greedy(brow)] as f64;
            let y = target_value(q_pre, &t.rewards, t.terminal_within.is_some(), bmax, &self.cfg);
            total += 0.5 * (y - q_pre) * (y - q_pre);
            dq[row * na + a] = (-(y - q_pre) / n as f64) as f32;
        }
        let loss = total / n as f64;

        self.grads.set_zero();
        self.online.backward(&mut self.train_cache, &dq, &mut self.grads)?;
        Nadam::step(&mut self.opt, &mut self.online, &self.grads, self.cfg.alpha);
        self.optimizer_steps += 1;
        if self.optimizer_steps % self.cfg.update_rate == 0 {
            self.target.copy_from(&self.online);
            self.target_syncs += 1;
        }
        self.telemetry.push(TelemetryRow {
            step: self.optimizer_steps,
            loss,
            epsilon: self.epsilon(),
            buffer_size: self.buffer.len(),
            target_syncs: self.target_syncs,
        });
        Ok(loss)
    }

    fn flush(&mut self, pending: &mut VecDeque<Pending>, bootstrap: &StateObs, terminal: bool, learn: bool) {
        while let Some(front) = pending.front() {
            if !terminal && front.rewards.len() < self.cfg.k {
                break;
            }
            let p = pending.pop_front().expect("front exists");
            if learn {
                let m = p.rewards.len();
                self.buffer.push(Transition {
                    state: p.state,
                    action: p.action,
                    rewards: p.rewards,
                    terminal_within: terminal.then_some(m),
                    bootstrap_state: bootstrap.clone(),
                });
            }
        }
    }

    /// Plays one episode. With `learn`, transitions enter the replay buffer and
    /// the optimizer runs every `train_every` steps once `learning_starts`
    /// transitions are stored.
    pub fn run_episode(
        &mut self,
        env: &mut dyn Environment,
        mode: StartMode,
        learn: bool,
    ) -> Result<EpisodeOutcome, AgentError> {
        let mut s = env.reset(mode)?;
        let mut pending: VecDeque<Pending> = VecDeque::with_capacity(self.cfg.k + 1);
        loop {
            let a = self.act(&s);
            let (next, r, outcome) = env.step(a)?;
            self.eps.steps_accu += 1;
            self.env_steps += 1;
            pending.push_back(Pending { state: s, action: a, rewards: Vec::with_capacity(self.cfg.k) });
            for p in pending.iter_mut() {
                p.rewards.push(r);
            }
            self.flush(&mut pending, &next, outcome.is_some(), learn);

            let ready = self.buffer.len() >= self.cfg.learning_starts.max(self.cfg.batch_size);
            if learn && ready && self.env_steps % self.cfg.train_every == 0 {
                self.train_step()?;
            }
            if let Some(o) = outcome {
                return Ok(o);
            }
            s = next;
        }
    }
}
