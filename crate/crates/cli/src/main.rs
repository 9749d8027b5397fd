use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use platoon_core::harness::{
    compare_cores, load_controller, output_dir, rollout_mae, run_episodes, train, worker_threads,
    write_evaluation, write_training, RunConfig, CHECKPOINT_FILE, DEFAULT_H_GRID,
};
use platoon_core::sac::CoreType;
use platoon_core::Error;

#[derive(Parser)]
#[command(name = "platoon-sim", version, about = "Platoon lane-change simulator with a recurrent SAC trainer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train an agent and write training_log.csv, checkpoint.bin and config.json.
    Train {
        #[command(flatten)]
        common: Common,
        /// Network core, overrides the config.
        #[arg(long, value_parser = parse_core)]
        core: Option<CoreType>,
    },
    /// Evaluate a checkpoint and write metrics.json, timing.json and traces.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 20)]
        episodes: usize,
        /// Defaults to checkpoint.bin in the output directory.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Autoregressive rollout error of a checkpoint for each horizon.
    Predict {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 5)]
        episodes: usize,
        #[arg(long = "horizon-h", value_delimiter = ',')]
        horizon_h: Vec<usize>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Train both network cores per seed and tabulate rollout error.
    CompareCores {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 5)]
        episodes: usize,
        #[arg(long = "horizon-h", value_delimiter = ',')]
        horizon_h: Vec<usize>,
        /// Training seeds.
        #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
        seeds: Vec<u64>,
    },
    /// Print the resolved config with every default filled in.
    InspectConfig {
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    /// JSON run config; defaults apply when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, overrides the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_core(s: &str) -> Result<CoreType, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, Error> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn horizons(h: Vec<usize>) -> Result<Vec<usize>, Error> {
    if h.is_empty() {
        return Ok(DEFAULT_H_GRID.to_vec());
    }
    if h.contains(&0) {
        return Err(Error::Config("--horizon-h values must be at least 1".into()));
    }
    Ok(h)
}

fn checkpoint_path(cfg: &RunConfig, common: &Common, given: Option<PathBuf>) -> PathBuf {
    given.unwrap_or_else(|| output_dir(cfg, common.out.as_deref()).join(CHECKPOINT_FILE))
}

fn mae_table(h: &[usize], maes: &[f64]) -> String {
    let mut s = String::from("h,mae\n");
    for (h, m) in h.iter().zip(maes) {
        s += &format!("{h},{m}\n");
    }
    s
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::InspectConfig { config } => {
            println!("{}", load_config(config.as_deref())?.to_json());
        }
        Command::Train { common, core } => {
            let mut cfg = load_config(common.config.as_deref())?;
            if let Some(seed) = common.seed {
                cfg.trainer.seed = seed;
            }
            if let Some(core) = core {
                cfg.core_type = core;
            }
            let dir = output_dir(&cfg, common.out.as_deref());
            std::fs::create_dir_all(&dir)?;
            let out = train(&cfg, Some(&dir.join("diverged.bin")))?;
            write_training(&out, &cfg, &dir)?;
            let n = out.log.episodes.len();
            println!("episodes: {n}");
            if let (Some(first), Some(last)) = (out.log.mean_return(0..100), out.log.mean_return(n.saturating_sub(100)..n)) {
                println!("mean return, first 100: {first:.3}");
                println!("mean return, last 100: {last:.3}");
            }
            println!("checkpoint: {} (step {})", dir.join(CHECKPOINT_FILE).display(), out.checkpoint.step);
        }
        Command::Eval { common, episodes, checkpoint } => {
            let cfg = load_config(common.config.as_deref())?;
            if episodes == 0 {
                return Err(Error::Config("--episodes must be at least 1".into()));
            }
            let env_cfg = cfg.env_config();
            let ctrl = load_controller(&checkpoint_path(&cfg, &common, checkpoint), &env_cfg)?;
            let eval = run_episodes(&ctrl, &env_cfg, episodes, common.seed.unwrap_or(0), worker_threads()?)?;
            write_evaluation(&eval, &output_dir(&cfg, common.out.as_deref()))?;
            let mut shown = serde_json::to_value(&eval.report)?;
            shown["avg_compute_time_per_step"] = eval.report.avg_compute_time_per_step.into();
            println!("{}", serde_json::to_string_pretty(&shown)?);
        }
        Command::Predict { common, episodes, horizon_h, checkpoint } => {
            let cfg = load_config(common.config.as_deref())?;
            let h = horizons(horizon_h)?;
            let env_cfg = cfg.env_config();
            let ctrl = load_controller(&checkpoint_path(&cfg, &common, checkpoint), &env_cfg)?;
            let maes = rollout_mae(&ctrl, &env_cfg, &h, episodes, common.seed.unwrap_or(0), 10)?;
            let table = mae_table(&h, &maes);
            let dir = output_dir(&cfg, common.out.as_deref());
            std::fs::create_dir_all(&dir)?;
            std::fs::write(dir.join("prediction_mae.csv"), &table)?;
            print!("{table}");
        }
        Command::CompareCores { common, episodes, horizon_h, seeds } => {
            let cfg = load_config(common.config.as_deref())?;
            let h = horizons(horizon_h)?;
            let table = compare_cores(&cfg, &h, &seeds, episodes, common.seed.unwrap_or(0))?;
            let dir = output_dir(&cfg, common.out.as_deref());
            std::fs::create_dir_all(&dir)?;
            std::fs::write(dir.join("comparison.csv"), table.to_csv())?;
            std::fs::write(dir.join("comparison.json"), serde_json::to_string_pretty(&table)?)?;
            print!("{}", table.to_csv());
            for &hh in &h {
                if let Some(ok) = table.gru_not_worse(hh) {
                    println!("h={hh}: gru {} mlp", if ok { "<=" } else { ">" });
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
