use std::path::{Path, PathBuf};

use super::config::RunConfig;
use super::eval::{export_trace, Evaluation, PolicyController};
use super::predict::{compare_controllers, ComparisonTable};
use crate::env::{EnvConfig, PlatoonEnv};
use crate::error::{Error, Result};
use crate::nn::Checkpoint;
use crate::sac::{CoreType, Policy, Trainer, TrainingLog};

pub const METRICS_FILE: &str = "metrics.json";
pub const TIMING_FILE: &str = "timing.json";
pub const TRAINING_LOG_FILE: &str = "training_log.csv";
pub const VALIDATION_LOG_FILE: &str = "validation_log.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const CONFIG_FILE: &str = "config.json";

pub fn trace_file(episode: usize) -> String {
    format!("trace_{episode}.csv")
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub log: TrainingLog,
    pub checkpoint: Checkpoint,
    pub policy: Policy,
}

/// Trains one agent with the config's core type.
pub fn train(cfg: &RunConfig, diagnostic: Option<&Path>) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut env = PlatoonEnv::new(cfg.env_config(), 0)?;
    let mut trainer = Trainer::new(&cfg.trainer, cfg.core_type, env.obs_dim())?;
    let log = trainer.run(&mut env, diagnostic)?;
    let checkpoint = trainer.checkpoint()?;
    let policy = Policy::from_agent(trainer.selected_agent());
    Ok(TrainOutcome { log, checkpoint, policy })
}

/// Writes the training log, the checkpoint and the resolved config.
pub fn write_training(out: &TrainOutcome, cfg: &RunConfig, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    out.log.write_csv(&dir.join(TRAINING_LOG_FILE))?;
    if !out.log.validations.is_empty() {
        std::fs::write(dir.join(VALIDATION_LOG_FILE), out.log.validation_csv())?;
    }
    out.checkpoint.save(&dir.join(CHECKPOINT_FILE))?;
    std::fs::write(dir.join(CONFIG_FILE), cfg.to_json())?;
    Ok(())
}

/// Loads a checkpoint and checks it against the scenario's observation
/// layout. Every failure is reported against the file.
pub fn load_controller(path: &Path, env_cfg: &EnvConfig) -> Result<PolicyController> {
    let fail = |reason: String| Error::Checkpoint { path: path.to_path_buf(), reason };
    let ck = Checkpoint::load(path)?;
    let policy = Policy::from_checkpoint(&ck).map_err(|e| fail(e.to_string()))?;
    let ctrl = PolicyController::new(policy);
    let env = PlatoonEnv::new(env_cfg.clone(), 0)?;
    ctrl.check_env(&env).map_err(|e| fail(e.to_string()))?;
    Ok(ctrl)
}

/// Writes `metrics.json`, `timing.json` and one trace per episode.
pub fn write_evaluation(eval: &Evaluation, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(METRICS_FILE), eval.report.to_json())?;
    let timing = serde_json::json!({
        "avg_compute_time_per_step": eval.report.avg_compute_time_per_step,
        "n_episodes": eval.report.n_episodes,
    });
    std::fs::write(dir.join(TIMING_FILE), serde_json::to_string_pretty(&timing)?)?;
    for (i, r) in eval.records.iter().enumerate() {
        export_trace(r, &dir.join(trace_file(i)))?;
    }
    Ok(())
}

/// Trains both cores for every seed under the same budget and tabulates
/// rollout MAE per horizon.
pub fn compare_cores(
    cfg: &RunConfig,
    h_values: &[usize],
    seeds: &[u64],
    episodes: usize,
    eval_seed: u64,
) -> Result<ComparisonTable> {
    if seeds.is_empty() {
        return Err(Error::invalid("compare_cores needs at least one seed"));
    }
    let mut entries = Vec::new();
    for core in [CoreType::Gru, CoreType::Mlp] {
        for &seed in seeds {
            let mut run = cfg.clone();
            run.core_type = core;
            run.trainer.seed = seed;
            let out = train(&run, None)?;
            entries.push((core, seed, PolicyController::new(out.policy)));
        }
    }
    compare_controllers(&entries, &cfg.env_config(), h_values, episodes, eval_seed)
}

/// The config's output directory unless `out` overrides it.
pub fn output_dir(cfg: &RunConfig, out: Option<&Path>) -> PathBuf {
    out.map_or_else(|| cfg.output_dir.clone(), Path::to_path_buf)
}
