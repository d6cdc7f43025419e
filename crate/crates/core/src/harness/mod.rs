//! Command implementations behind the CLI: training, evaluation, gradient
//! checks and plot export.

pub mod config;
pub mod plots;
pub mod report;

use std::fs;
use std::path::{Path, PathBuf};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::agent::{Agent, AgentError, Environment};
use crate::env::{action_table_hash, ActionId, EnvError, PegInHoleEnv, StartMode, TraceRow};
use crate::nn::gradcheck::{gradcheck, GradcheckReport};
use crate::nn::{load_params, save_params, CheckpointError, DuelingNet};

pub use config::RunConfig;
pub use report::{Aggregates, EpisodeRow, EvalMode, ExperimentReport};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("checkpoint: {0}")]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("bound violated: {0}")]
    Bound(String),
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Bound(_) => 2,
            _ => 1,
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> HarnessError {
    HarnessError::Io(format!("{}: {e}", path.display()))
}

/// Named random streams derived from the master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    World = 1,
    Init = 2,
    Agent = 3,
    Eval = 4,
}

/// Independent seed for `index` under `seed`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng.next_u64()
}

pub fn sub_seed(master: u64, stream: Stream) -> u64 {
    derive_seed(master, stream as u64)
}

fn episode_row(
    env: &PegInHoleEnv,
    episode: u64,
    mode: EvalMode,
    outcome: &crate::env::EpisodeOutcome,
    seed: u64,
) -> EpisodeRow {
    let st = env.stats();
    EpisodeRow {
        episode,
        mode,
        outcome: outcome.status.as_str().to_string(),
        steps: outcome.steps_taken,
        er: outcome.episode_reward,
        danger_events: st.danger_events,
        warning_steps: st.warning_substeps,
        accepted_substeps: st.accepted_substeps,
        seed,
    }
}

/// Trains in memory. `on_checkpoint` runs every `checkpoint_every` steps.
pub fn run_training(
    cfg: &RunConfig,
    mut on_checkpoint: impl FnMut(&Agent) -> Result<(), HarnessError>,
) -> Result<(Agent, Vec<EpisodeRow>), HarnessError> {
    cfg.validate()?;
    let arch = cfg.architecture();
    let mut agent = Agent::new(
        cfg.train_config(),
        cfg.epsilon_schedule(),
        &arch,
        sub_seed(cfg.seed, Stream::Init),
        sub_seed(cfg.seed, Stream::Agent),
    )?;
    let mut env = PegInHoleEnv::new(cfg.env_config(), 0)?;
    let world = sub_seed(cfg.seed, Stream::World);
    let budget = cfg.train.budget_steps;
    let every = cfg.train.checkpoint_every;
    let mut next_ckpt = every;
    let mut rows = Vec::new();
    while agent.env_steps < budget {
        let remaining = budget - agent.env_steps;
        env.set_step_max(remaining.min(cfg.train.episode_step_max as u64) as u32)?;
        let episode = rows.len() as u64;
        let seed = derive_seed(world, episode);
        env.reseed(seed);
        let o = agent.run_episode(&mut env, cfg.train.start_mode, true)?;
        rows.push(episode_row(&env, episode, EvalMode::Train, &o, seed));
        if every > 0 && agent.env_steps >= next_ckpt {
            on_checkpoint(&agent)?;
            while next_ckpt <= agent.env_steps {
                next_ckpt += every;
            }
        }
    }
    Ok((agent, rows))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

fn create_file(path: &Path) -> Result<fs::File, HarnessError> {
    fs::File::create(path).map_err(|e| io_err(path, e))
}

pub fn write_telemetry(path: &Path, agent: &Agent) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(create_file(path)?);
    w.write_record(["step", "loss", "epsilon", "buffer_size", "target_syncs"])?;
    for r in &agent.telemetry {
        w.write_record([
            r.step.to_string(),
            r.loss.to_string(),
            r.epsilon.to_string(),
            r.buffer_size.to_string(),
            r.target_syncs.to_string(),
        ])?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

fn write_rows_file(path: &Path, rows: &[EpisodeRow]) -> Result<(), HarnessError> {
    report::write_rows(create_file(path)?, rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub episodes: usize,
    pub env_steps: u64,
    pub optimizer_steps: u64,
    pub checkpoint: PathBuf,
}

/// `train --config <path> --out <dir>`
pub fn cmd_train(config: &Path, out: &Path) -> Result<TrainSummary, HarnessError> {
    let cfg = RunConfig::load(config)?;
    train_to_dir(&cfg, out)
}

pub fn train_to_dir(cfg: &RunConfig, out: &Path) -> Result<TrainSummary, HarnessError> {
    fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    write_file(&out.join("config.toml"), cfg.to_toml().as_bytes())?;
    let hash = action_table_hash();
    let (agent, rows) = run_training(cfg, |a| {
        let p = out.join(format!("checkpoint_{}.bin", a.env_steps));
        write_file(&p, &save_params(&a.online, hash))
    })?;
    let checkpoint = out.join("checkpoint.bin");
    write_file(&checkpoint, &save_params(&agent.online, hash))?;
    write_telemetry(&out.join("telemetry.csv"), &agent)?;
    write_rows_file(&out.join("episodes.csv"), &rows)?;
    Ok(TrainSummary {
        episodes: rows.len(),
        env_steps: agent.env_steps,
        optimizer_steps: agent.optimizer_steps,
        checkpoint,
    })
}

/// One wrench sample recorded during an evaluation episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub episode: u64,
    pub row: TraceRow,
}

pub const TRACE_HEADER: [&str; 11] =
    ["episode", "step", "substep", "fx", "fy", "fz", "mx", "my", "mz", "zone", "accepted"];

pub fn write_trace(path: &Path, trace: &[TraceRecord]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(create_file(path)?);
    w.write_record(TRACE_HEADER)?;
    for t in trace {
        let mut rec = vec![t.episode.to_string(), t.row.step.to_string(), t.row.substep.to_string()];
        rec.extend(t.row.wrench.to_array().iter().map(|v| v.to_string()));
        rec.push(t.row.zone.as_str().to_string());
        rec.push(t.row.accepted.to_string());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Fixed start for FT and FNT, random start for RT.
pub fn start_mode(mode: EvalMode) -> StartMode {
    match mode {
        EvalMode::Rt => StartMode::Random,
        _ => StartMode::Fixed,
    }
}

/// Greedy evaluation for FT/RT; FNT runs fresh weights under the initial ε
/// schedule. Nothing is learned in any mode.
pub fn evaluate(
    cfg: &RunConfig,
    net: Option<&DuelingNet<f32>>,
    mode: EvalMode,
    episodes: usize,
    record_trace: bool,
) -> Result<(ExperimentReport, Vec<TraceRecord>), HarnessError> {
    cfg.validate()?;
    let base = derive_seed(sub_seed(cfg.seed, Stream::Eval), mode as u64);
    let agent_seed = derive_seed(base, u64::MAX);
    let mut agent = match mode {
        EvalMode::Fnt => {
            let mut eps = cfg.epsilon_schedule();
            eps.frozen_eps = None;
            Agent::new(cfg.train_config(), eps, &cfg.architecture(), derive_seed(base, u64::MAX - 1), agent_seed)?
        }
        EvalMode::Ft | EvalMode::Rt => {
            let net = net.ok_or_else(|| HarnessError::Usage("trained modes need a checkpoint".into()))?;
            let mut eps = cfg.epsilon_schedule();
            eps.frozen_eps = Some(0.0);
            Agent::with_params(cfg.train_config(), eps, net.clone(), agent_seed)
        }
        EvalMode::Train => return Err(HarnessError::Usage("train is not an evaluation mode".into())),
    };
    let mut env = PegInHoleEnv::new(cfg.env_config(), 0)?;
    env.record_trace(record_trace);
    let mut rows = Vec::with_capacity(episodes);
    let mut trace = Vec::new();
    for ep in 0..episodes as u64 {
        let seed = derive_seed(base, ep);
        env.reseed(seed);
        let o = agent.run_episode(&mut env, start_mode(mode), false)?;
        rows.push(episode_row(&env, ep, mode, &o, seed));
        if let Some(t) = env.trace() {
            trace.extend(t.iter().map(|&row| TraceRecord { episode: ep, row }));
        }
    }
    Ok((ExperimentReport::new(mode, rows), trace))
}

/// Scripted insert phase without learning: press straight down from the
/// FT start until the episode ends.
pub fn scripted_insert_baseline(cfg: &RunConfig, episodes: usize) -> Result<ExperimentReport, HarnessError> {
    let base = derive_seed(sub_seed(cfg.seed, Stream::Eval), 100);
    let mut env = PegInHoleEnv::new(cfg.env_config(), 0)?;
    let down = ActionId::new(14).expect("valid action");
    let mut rows = Vec::with_capacity(episodes);
    for ep in 0..episodes as u64 {
        let seed = derive_seed(base, ep);
        env.reseed(seed);
        Environment::reset(&mut env, StartMode::Fixed)?;
        let o = loop {
            if let (_, _, Some(o)) = Environment::step(&mut env, down)? {
                break o;
            }
        };
        rows.push(episode_row(&env, ep, EvalMode::Fnt, &o, seed));
    }
    Ok(ExperimentReport::new(EvalMode::Fnt, rows))
}

fn config_for_checkpoint(checkpoint: &Path, config: Option<&Path>) -> Result<RunConfig, HarnessError> {
    if let Some(c) = config {
        return RunConfig::load(c);
    }
    let beside = checkpoint.parent().map(|d| d.join("config.toml"));
    match beside {
        Some(p) if p.exists() => RunConfig::load(&p),
        _ => Ok(RunConfig::default()),
    }
}

pub fn load_checkpoint(path: &Path, cfg: &RunConfig) -> Result<DuelingNet<f32>, HarnessError> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    Ok(load_params(&bytes, &cfg.architecture(), action_table_hash())?)
}

/// `eval --checkpoint <path> --mode ft|rt|fnt --episodes N --out <dir>`.
/// The run configuration is taken from `config`, else from `config.toml`
/// beside the checkpoint, else the defaults.
pub fn cmd_eval(
    checkpoint: Option<&Path>,
    mode: EvalMode,
    episodes: usize,
    out: &Path,
    config: Option<&Path>,
) -> Result<ExperimentReport, HarnessError> {
    let cfg = match checkpoint {
        Some(c) => config_for_checkpoint(c, config)?,
        None => config.map(RunConfig::load).transpose()?.unwrap_or_default(),
    };
    let net = match (mode, checkpoint) {
        (EvalMode::Fnt, _) => None,
        (_, Some(c)) => Some(load_checkpoint(c, &cfg)?),
        (_, None) => return Err(HarnessError::Usage("--checkpoint is required for ft and rt".into())),
    };
    let (report, trace) = evaluate(&cfg, net.as_ref(), mode, episodes, true)?;
    fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    let m = mode.as_str();
    write_rows_file(&out.join(format!("eval_{m}.csv")), &report.rows)?;
    write_trace(&out.join(format!("trace_{m}.csv")), &trace)?;
    write_file(&out.join(format!("summary_{m}.txt")), report.summary().as_bytes())?;
    Ok(report)
}

pub const GRADCHECK_SEEDS: [u64; 3] = [1, 2, 3];

/// Finite-difference sweep over several seeds; fails with `Bound` when any
/// seed exceeds the tolerance.
pub fn cmd_gradcheck(
    seeds: &[u64],
    corrupt: bool,
) -> Result<Vec<GradcheckReport>, (Vec<GradcheckReport>, HarnessError)> {
    let reports: Vec<GradcheckReport> = seeds.iter().map(|&s| gradcheck(s, corrupt)).collect();
    match reports.iter().find(|r| !r.passed()) {
        None => Ok(reports),
        Some(bad) => {
            let msg = format!(
                "seed {} max relative error {:.3e} at {}[{}]",
                bad.seed, bad.max_rel_error, bad.worst.0, bad.worst.1
            );
            Err((reports, HarnessError::Bound(msg)))
        }
    }
}

pub use plots::cmd_export_plots;

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> RunConfig {
        let mut c = RunConfig::default();
        c.train.budget_steps = 300;
        c.train.episode_step_max = 100;
        c.train.learning_starts = 64;
        c.train.batch_size = 8;
        c.train.buffer_size = 1000;
        c.train.checkpoint_every = 0;
        c.world.step_max = 100;
        c
    }

    #[test]
    fn seeds_are_distinct_per_stream() {
        let s: Vec<u64> =
            [Stream::World, Stream::Init, Stream::Agent, Stream::Eval].iter().map(|&x| sub_seed(7, x)).collect();
        for i in 0..s.len() {
            for j in i + 1..s.len() {
                assert_ne!(s[i], s[j]);
            }
        }
        assert_eq!(sub_seed(7, Stream::World), sub_seed(7, Stream::World));
        assert_ne!(sub_seed(7, Stream::World), sub_seed(8, Stream::World));
    }

    #[test]
    fn training_respects_budget() {
        let cfg = tiny();
        let (agent, rows) = run_training(&cfg, |_| Ok(())).unwrap();
        assert_eq!(agent.env_steps, 300);
        assert_eq!(rows.iter().map(|r| r.steps as u64).sum::<u64>(), 300);
        assert!(agent.optimizer_steps > 0);
    }

    #[test]
    fn zero_budget_keeps_initial_weights() {
        let mut cfg = tiny();
        cfg.train.budget_steps = 0;
        let (agent, rows) = run_training(&cfg, |_| Ok(())).unwrap();
        assert!(rows.is_empty());
        let fresh = Agent::new(
            cfg.train_config(),
            cfg.epsilon_schedule(),
            &cfg.architecture(),
            sub_seed(cfg.seed, Stream::Init),
            0,
        )
        .unwrap();
        assert_eq!(agent.online, fresh.online);
    }

    #[test]
    fn episode_seed_replays_world() {
        let cfg = tiny();
        let (report, _) = evaluate(&cfg, None, EvalMode::Fnt, 3, false).unwrap();
        let mut env = PegInHoleEnv::new(cfg.env_config(), 0).unwrap();
        let starts: Vec<_> = report
            .rows
            .iter()
            .map(|r| {
                env.reseed(r.seed);
                env.reset(StartMode::Fixed).unwrap();
                env.start_pose()
            })
            .collect();
        env.reseed(report.rows[1].seed);
        env.reset(StartMode::Fixed).unwrap();
        assert_eq!(env.start_pose(), starts[1]);
        assert_ne!(starts[0], starts[1]);
    }

    #[test]
    fn trained_modes_need_a_network() {
        assert!(matches!(evaluate(&tiny(), None, EvalMode::Ft, 1, false), Err(HarnessError::Usage(_))));
    }

    #[test]
    fn gradcheck_exit_codes() {
        assert!(cmd_gradcheck(&[5], false).is_ok());
        let (_, e) = cmd_gradcheck(&[5], true).unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }
}
