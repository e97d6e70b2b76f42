//! Training loop, evaluation rollouts and run checkpoints.

use std::path::{Path, PathBuf};

use crate::agents::{obs_tensor, Agent, Batch, Phase};
use crate::buffer::ReplayBuffer;
use crate::envs::{scripted_action, write_pgm, DistractionSpec, EnvSpec, ReacherEnv, Tier};
use crate::error::{Error, Result};
use crate::nets::masker::mask_to_bytes;
use crate::nets::Checkpoint;
use crate::rng::RngStream;
use crate::types::{Action, Observation, Transition};

use super::analysis::{mask_stats, MaskStats};
use super::metrics::{EvalRecord, RunMetrics, TrainRecord};
use super::run_config::RunConfig;

/// Checkpoint `algorithm` value of the scripted controller.
pub const SCRIPTED: &str = "scripted";
const CFG_PREFIX: &str = "cfg:";

/// Anything that can drive the reacher during evaluation.
pub trait Policy {
    fn action(&self, env: &ReacherEnv, obs: &Observation) -> Result<Action>;
}

/// Deterministic agent policy, `tanh(μ)` on the acting pipeline.
impl Policy for Agent<f32> {
    fn action(&self, _env: &ReacherEnv, obs: &Observation) -> Result<Action> {
        // The deterministic act path draws no noise; the stream is a formality.
        self.act(obs, true, &mut RngStream::new(0))
    }
}

/// Proportional controller reading the true state.
#[derive(Debug, Clone, Copy, Default)]
pub struct Scripted;

impl Policy for Scripted {
    fn action(&self, env: &ReacherEnv, _obs: &Observation) -> Result<Action> {
        Ok(scripted_action(env.spec(), env.state()))
    }
}

/// Mean undiscounted return of `episodes` rollouts on a private env.
pub fn evaluate<P: Policy + ?Sized>(
    policy: &P,
    spec: &EnvSpec,
    dspec: &DistractionSpec,
    episodes: usize,
    rng: RngStream,
) -> Result<f64> {
    if episodes == 0 {
        return Err(Error::config("evaluation needs at least one episode"));
    }
    let mut env = ReacherEnv::new(spec.clone(), dspec.clone(), rng)?;
    let mut total = 0.0;
    for _ in 0..episodes {
        let mut obs = env.reset();
        loop {
            let a = policy.action(&env, &obs)?;
            let out = env.step(&a)?;
            total += out.reward;
            if out.done {
                break;
            }
            obs = out.obs;
        }
    }
    Ok(total / episodes as f64)
}

/// Observations met by `policy` along rollouts on a private env, each with
/// the task-pixel flags of its newest frame. Episodes restart as needed.
pub fn rollout_observations<P: Policy + ?Sized>(
    policy: &P,
    spec: &EnvSpec,
    dspec: &DistractionSpec,
    count: usize,
    rng: RngStream,
) -> Result<Vec<(Observation, Vec<bool>)>> {
    let mut env = ReacherEnv::new(spec.clone(), dspec.clone(), rng)?;
    let mut obs = env.reset();
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        out.push((obs.clone(), env.task_pixels()));
        let step = env.step(&policy.action(&env, &obs)?)?;
        obs = if step.done { env.reset() } else { step.obs };
    }
    Ok(out)
}

/// A training run in progress.
pub struct Trainer {
    pub cfg: RunConfig,
    pub agent: Agent<f32>,
    pub buffer: ReplayBuffer,
    pub metrics: RunMetrics,
    env: ReacherEnv,
    obs: Observation,
    root: RngStream,
    sample_rng: RngStream,
    augment_rng: RngStream,
    act_rng: RngStream,
    step: usize,
    out: Option<PathBuf>,
}

impl Trainer {
    /// Builds the run; with `out` set, writes `config.resolved` there.
    pub fn new(cfg: &RunConfig, out: Option<&Path>) -> Result<Self> {
        cfg.validate()?;
        let root = RngStream::new(cfg.seed);
        let mut env = ReacherEnv::new(cfg.env_spec(), DistractionSpec::clean(), root.substream("env"))?;
        let mut agent = Agent::new(
            cfg.algorithm_spec(),
            cfg.hp.clone(),
            cfg.net_config(),
            &mut root.substream("net-init"),
        )?;
        agent.set_exec(cfg.exec());
        let buffer = ReplayBuffer::new(cfg.hp.buffer_capacity, env.obs_shape(), 2)?;
        if let Some(dir) = out {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            let p = dir.join("config.resolved");
            std::fs::write(&p, cfg.to_text()).map_err(|e| Error::io(&p, e))?;
        }
        let obs = env.reset();
        Ok(Trainer {
            cfg: cfg.clone(),
            agent,
            buffer,
            metrics: RunMetrics::default(),
            env,
            obs,
            sample_rng: root.substream("sample"),
            augment_rng: root.substream("augment"),
            act_rng: root.substream("act"),
            root,
            step: 0,
            out: out.map(Path::to_path_buf),
        })
    }

    /// Environment steps taken so far.
    pub fn step_count(&self) -> usize {
        self.step
    }

    pub fn is_finished(&self) -> bool {
        self.step >= self.cfg.hp.total_steps
    }

    /// One environment step, then the scheduled update, logging and
    /// evaluation for that step.
    pub fn step(&mut self) -> Result<()> {
        if self.is_finished() {
            return Err(Error::Protocol("training already finished".into()));
        }
        self.step += 1;
        let t = self.step;
        let hp = &self.cfg.hp;
        let action = if t <= hp.init_steps {
            Action::clamped(
                (0..2)
                    .map(|_| self.act_rng.uniform_range(-1.0, 1.0) as f32)
                    .collect(),
            )
        } else {
            self.agent.act(&self.obs, false, &mut self.act_rng)?
        };
        let out = self.env.step(&action)?;
        // Episodes end on a time limit only, so the successor always bootstraps.
        self.buffer.push(Transition {
            obs: self.obs.clone(),
            action,
            reward: out.reward as f32,
            next_obs: out.obs.clone(),
            bootstrap: true,
        })?;
        self.obs = if out.done { self.env.reset() } else { out.obs };

        if t > hp.init_steps {
            let items = self.buffer.sample(hp.batch_size, &mut self.sample_rng)?;
            let batch = Batch::from_transitions(&items)?;
            let stats = self.agent.update(&batch, t, &mut self.augment_rng)?;
            if t.is_multiple_of(self.cfg.log_interval) {
                let ms = self.current_mask_stats()?;
                self.metrics.train.push(TrainRecord {
                    step: t,
                    loss_q: stats.loss_q,
                    loss_pi: stats.loss_pi,
                    loss_alpha: stats.loss_alpha,
                    alpha: stats.alpha,
                    mask_task_mean: ms.and_then(|m| m.task),
                    mask_bg_mean: ms.and_then(|m| m.background),
                });
            }
        }
        if self.cfg.mask_interval > 0 && t.is_multiple_of(self.cfg.mask_interval) {
            self.dump_mask(t)?;
        }
        if t.is_multiple_of(self.cfg.hp.eval_interval) {
            self.evaluate_all()?;
        }
        Ok(())
    }

    /// Evaluates the current policy on every configured tier at the
    /// current step and records the results.
    pub fn evaluate_all(&mut self) -> Result<()> {
        let spec = self.cfg.env_spec();
        for &tier in &self.cfg.tiers {
            let mean_return = evaluate(
                &self.agent,
                &spec,
                &self.cfg.distraction(tier),
                self.cfg.hp.eval_episodes,
                eval_stream(&self.root, tier),
            )?;
            self.metrics.eval.push(EvalRecord {
                step: self.step,
                tier,
                mean_return,
            });
        }
        Ok(())
    }

    fn current_mask_stats(&self) -> Result<Option<MaskStats>> {
        if self.agent.nets.masker.is_none() {
            return Ok(None);
        }
        mask_stats(&self.agent, &self.obs, &self.env.task_pixels())
    }

    fn dump_mask(&self, t: usize) -> Result<()> {
        let Some(dir) = &self.out else { return Ok(()) };
        let x = obs_tensor::<f32>(&[&self.obs])?;
        let x = self.agent.augment(&x, Phase::Act, &mut RngStream::new(0))?;
        let Some(masks) = self.agent.masks(&x)? else {
            return Ok(());
        };
        let (h, w) = self.agent.input_hw();
        let newest = masks.row(masks.dim(0) - 1);
        write_pgm(&dir.join(format!("mask_step{t:06}.pgm")), h, w, &mask_to_bytes(newest))
    }

    pub fn run(&mut self) -> Result<()> {
        while !self.is_finished() {
            self.step()?;
        }
        Ok(())
    }

    /// Agent checkpoint carrying the run configuration.
    pub fn checkpoint(&self) -> Checkpoint {
        let mut ck = self.agent.to_checkpoint();
        add_config(&mut ck, &self.cfg);
        ck.push_meta("run.steps", self.step);
        ck.push_meta("run.critic_updates", self.agent.counters.critic);
        ck.push_meta("run.actor_updates", self.agent.counters.actor);
        ck
    }

    /// Writes `train.csv`, `eval.csv` and `final.ckpt` to the output dir.
    pub fn finish(&self) -> Result<()> {
        if let Some(dir) = &self.out {
            self.metrics.write(dir)?;
            self.checkpoint().save(&dir.join("final.ckpt"))?;
        }
        Ok(())
    }
}

/// The evaluation stream of `tier`; each evaluation point replays the same
/// episodes so that successive points differ only through the policy.
pub fn eval_stream(root: &RngStream, tier: Tier) -> RngStream {
    root.substream(&format!("eval/{tier}"))
}

/// Runs training to completion. With `out` set, every run file is written.
pub fn train(cfg: &RunConfig, out: Option<&Path>) -> Result<Trainer> {
    let mut tr = Trainer::new(cfg, out)?;
    tr.run()?;
    tr.finish()?;
    Ok(tr)
}

fn add_config(ck: &mut Checkpoint, cfg: &RunConfig) {
    for (k, v) in cfg.entries() {
        ck.push_meta(&format!("{CFG_PREFIX}{k}"), v);
    }
}

/// Checkpoint of the scripted controller for `cfg`'s environment.
pub fn scripted_checkpoint(cfg: &RunConfig) -> Checkpoint {
    let mut ck = Checkpoint::new();
    ck.push_meta("algorithm", SCRIPTED);
    add_config(&mut ck, cfg);
    ck
}

/// Run configuration stored in a checkpoint.
pub fn checkpoint_config(ck: &Checkpoint) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    let mut any = false;
    for (k, v) in &ck.meta {
        if let Some(key) = k.strip_prefix(CFG_PREFIX) {
            cfg.set(key, v).map_err(|e| Error::Checkpoint(e.to_string()))?;
            any = true;
        }
    }
    if !any {
        return Err(Error::Checkpoint("checkpoint carries no run configuration".into()));
    }
    Ok(cfg)
}

pub enum LoadedPolicy {
    Agent(Box<Agent<f32>>),
    Scripted(Scripted),
}

impl LoadedPolicy {
    pub fn as_policy(&self) -> &dyn Policy {
        match self {
            LoadedPolicy::Agent(a) => a.as_ref(),
            LoadedPolicy::Scripted(s) => s,
        }
    }

    pub fn agent(&self) -> Option<&Agent<f32>> {
        match self {
            LoadedPolicy::Agent(a) => Some(a),
            LoadedPolicy::Scripted(_) => None,
        }
    }
}

/// Reads a run checkpoint; every inconsistency is a checkpoint error.
pub fn load_checkpoint(path: &Path) -> Result<(RunConfig, LoadedPolicy)> {
    let ck = Checkpoint::load(path)?;
    let cfg = checkpoint_config(&ck)?;
    if ck.meta("algorithm") == Some(SCRIPTED) {
        return Ok((cfg, LoadedPolicy::Scripted(Scripted)));
    }
    let mut agent = Agent::from_checkpoint(&ck, cfg.hp.clone()).map_err(|e| match e {
        Error::Checkpoint(_) | Error::Io { .. } => e,
        other => Error::Checkpoint(other.to_string()),
    })?;
    if agent.algorithm() != cfg.algorithm || agent.defs.config != cfg.net_config() {
        return Err(Error::Checkpoint(
            "network metadata disagrees with the stored run configuration".into(),
        ));
    }
    agent.set_exec(cfg.exec());
    Ok((cfg, LoadedPolicy::Agent(Box::new(agent))))
}
