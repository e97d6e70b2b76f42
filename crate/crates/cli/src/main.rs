//! `madi`: train, evaluate, inspect masks and sensitivity, and report.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use madi::agents::{obs_tensor, Phase};
use madi::envs::{write_pgm, write_ppm, Tier};
use madi::harness::{
    agent_sensitivity, eval_stream, evaluate, load_checkpoint, mask_stats, report, rollout_observations,
    scripted_checkpoint, RunConfig, Trainer,
};
use madi::nets::masker::mask_to_bytes;
use madi::rng::RngStream;
use madi::types::Frame;
use madi::{Error, Result};

#[derive(Parser)]
#[command(name = "madi", about = "Masked-distraction SAC and baselines on a pixel reacher")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one run and write its files to DIR.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Overridden by the MADI_SEED environment variable.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint on one tier.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        tier: String,
        #[arg(long, default_value_t = 10)]
        episodes: usize,
    },
    /// Write observation, mask and masked-observation images.
    Masks {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        tier: String,
        #[arg(long, default_value_t = 8)]
        frames: usize,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Critic sensitivity to task versus background pixels.
    Sensitivity {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        tier: String,
        #[arg(long, default_value_t = 4)]
        frames: usize,
        /// Background pixels probed per frame.
        #[arg(long, default_value_t = 64)]
        pixels: usize,
    },
    /// Summarize run directories into summary.csv and curve plots.
    Report {
        #[arg(long, num_args = 1..)]
        runs: Vec<PathBuf>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Write a checkpoint of the scripted controller for a config.
    Scripted {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 2,
        Error::Io { .. } | Error::Format { .. } => 3,
        Error::Checkpoint(_) | Error::Params(_) => 4,
        _ => 1,
    }
}

/// A config file that cannot be read is a configuration error.
fn load_config(path: &Path) -> Result<RunConfig> {
    RunConfig::load(path).map_err(|e| match e {
        Error::Io { path, source } => Error::config(format!("cannot read {}: {source}", path.display())),
        other => other,
    })
}

fn seed_override(seed: Option<u64>) -> Result<Option<u64>> {
    match std::env::var("MADI_SEED") {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::config(format!("MADI_SEED must be an unsigned integer, got '{v}'"))),
        Err(_) => Ok(seed),
    }
}

fn train(config: &Path, seed: Option<u64>, out: &Path) -> Result<()> {
    let mut cfg = load_config(config)?;
    if let Some(s) = seed_override(seed)? {
        cfg.seed = s;
    }
    let mut tr = Trainer::new(&cfg, Some(out))?;
    tr.run()?;
    tr.finish()?;
    eprintln!("trained {} for {} steps into {}", cfg.algorithm, tr.step_count(), out.display());
    Ok(())
}

fn eval(ckpt: &Path, tier: &str, episodes: usize) -> Result<()> {
    let tier: Tier = tier.parse()?;
    let (cfg, policy) = load_checkpoint(ckpt)?;
    let root = RngStream::new(cfg.seed);
    let r = evaluate(
        policy.as_policy(),
        &cfg.env_spec(),
        &cfg.distraction(tier),
        episodes,
        eval_stream(&root, tier),
    )?;
    println!("tier={tier} mean_return={r}");
    Ok(())
}

fn masks(ckpt: &Path, tier: &str, frames: usize, out: &Path) -> Result<()> {
    let tier: Tier = tier.parse()?;
    let (cfg, policy) = load_checkpoint(ckpt)?;
    let agent = match policy.agent() {
        Some(a) if a.nets.masker.is_some() => a,
        _ => return Err(Error::Checkpoint(format!("{} has no masker", ckpt.display()))),
    };
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let rng = RngStream::new(cfg.seed).substream(&format!("masks/{tier}"));
    let samples = rollout_observations(agent, &cfg.env_spec(), &cfg.distraction(tier), frames, rng)?;
    let (h, w) = agent.input_hw();
    for (i, (obs, _)) in samples.iter().enumerate() {
        let x = agent.augment(&obs_tensor::<f32>(&[obs])?, Phase::Act, &mut RngStream::new(0))?;
        let m = agent.masks(&x)?.expect("masker checked above");
        let mask = m.row(m.dim(0) - 1);
        let newest = obs.newest();
        let masked: Vec<u8> = newest
            .pixels()
            .chunks(3)
            .zip(mask)
            .flat_map(|(px, &v)| px.iter().map(move |&c| (f32::from(c) * v.clamp(0.0, 1.0)).round() as u8))
            .collect();
        write_ppm(&out.join(format!("obs_{i}.ppm")), newest)?;
        write_pgm(&out.join(format!("mask_{i}.pgm")), h, w, &mask_to_bytes(mask))?;
        write_ppm(&out.join(format!("masked_{i}.ppm")), &Frame::new(h, w, masked)?)?;
    }
    Ok(())
}

fn sensitivity(ckpt: &Path, tier: &str, frames: usize, pixels: usize) -> Result<()> {
    let tier: Tier = tier.parse()?;
    let (cfg, policy) = load_checkpoint(ckpt)?;
    let agent = policy
        .agent()
        .ok_or_else(|| Error::Checkpoint("the scripted controller has no critic".into()))?;
    let root = RngStream::new(cfg.seed);
    let samples = rollout_observations(
        agent,
        &cfg.env_spec(),
        &cfg.distraction(tier),
        frames,
        root.substream(&format!("sensitivity/{tier}")),
    )?;
    let mut pick = root.substream("sensitivity/pixels");
    let (mut task_sum, mut task_n, mut bg_sum, mut bg_n) = (0.0, 0usize, 0.0, 0usize);
    for (obs, task) in &samples {
        let w = obs.width();
        let task_px: Vec<(usize, usize)> = (0..task.len()).filter(|&i| task[i]).map(|i| (i / w, i % w)).collect();
        let bg: Vec<usize> = (0..task.len()).filter(|&i| !task[i]).collect();
        let bg_px: Vec<(usize, usize)> = (0..pixels.min(bg.len()))
            .map(|_| bg[pick.below(bg.len())])
            .map(|i| (i / w, i % w))
            .collect();
        let action = agent.act(obs, true, &mut RngStream::new(0))?;
        let s = agent_sensitivity(agent, obs, &action, &[task_px.clone(), bg_px].concat())?;
        task_sum += s[..task_px.len()].iter().sum::<f64>();
        task_n += task_px.len();
        bg_sum += s[task_px.len()..].iter().sum::<f64>();
        bg_n += s.len() - task_px.len();
        if let Some(ms) = mask_stats(agent, obs, task)? {
            if let (Some(t), Some(b)) = (ms.task, ms.background) {
                eprintln!("mask task_mean={t} background_mean={b}");
            }
        }
    }
    let mean = |s: f64, n: usize| if n > 0 { (s / n as f64).to_string() } else { "nan".into() };
    println!(
        "tier={tier} task_mean={} background_mean={}",
        mean(task_sum, task_n),
        mean(bg_sum, bg_n)
    );
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { config, seed, out } => train(&config, seed, &out),
        Command::Eval { ckpt, tier, episodes } => eval(&ckpt, &tier, episodes),
        Command::Masks {
            ckpt,
            tier,
            frames,
            out,
        } => masks(&ckpt, &tier, frames, &out),
        Command::Sensitivity {
            ckpt,
            tier,
            frames,
            pixels,
        } => sensitivity(&ckpt, &tier, frames, pixels),
        Command::Report { runs, out } => {
            let rows = report(&runs, &out)?;
            eprintln!("wrote {} rows to {}", rows.len(), out.join("summary.csv").display());
            Ok(())
        }
        Command::Scripted { config, out } => scripted_checkpoint(&load_config(&config)?).save(&out),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
