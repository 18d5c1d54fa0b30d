use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use coisland::environment::Ablation;
use coisland::harness::{cmd_ablate, cmd_eval, cmd_grid, cmd_train, IslandMode, PolicySource, RunConfig};

#[derive(Parser)]
#[command(
    name = "coisland",
    version,
    about = "Co-adaptive island generation and hummingbird PPO training"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the solver with the island controller in the loop.
    Train {
        #[command(flatten)]
        common: Common,
        /// Override `train.total_timesteps`.
        #[arg(long)]
        timesteps: Option<u64>,
        /// Override `island.mode`.
        #[arg(long, value_enum)]
        island: Option<Mode>,
        /// Override `train.ablation`.
        #[arg(long)]
        ablation: Option<String>,
    },
    /// Evaluate a frozen checkpoint on fresh layouts.
    Eval {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        episodes: Option<usize>,
        /// Layout radius; overrides `eval.r`.
        #[arg(long)]
        r: Option<f64>,
        /// Layout congestion; overrides `eval.c`.
        #[arg(long)]
        c: Option<f64>,
        /// Sample actions instead of using the policy mean.
        #[arg(long)]
        stochastic: bool,
        /// Write every step to trajectories.jsonl.
        #[arg(long)]
        dump_trajectories: bool,
    },
    /// Train and evaluate one solver per observation variant.
    Ablate {
        #[command(flatten)]
        common: Common,
        /// Comma-separated variants, or `all`.
        #[arg(long, default_value = "all")]
        variants: String,
        #[arg(long)]
        timesteps: Option<u64>,
    },
    /// Sweep nectar collection over a grid of layout parameters.
    Grid {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        source: Source,
        #[arg(long, value_delimiter = ',', default_value = "4,7,10")]
        r: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "0.2,0.5,0.8")]
        c: Vec<f64>,
        /// Episodes per cell.
        #[arg(long, default_value_t = 20)]
        episodes: usize,
    },
    /// Print a complete configuration file.
    Config {
        #[arg(long, value_enum, default_value = "default")]
        preset: Preset,
    },
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "runs/latest")]
    out: PathBuf,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct Source {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Use a freshly initialised policy with sampled actions.
    #[arg(long)]
    untrained: bool,
}

impl Source {
    fn policy(&self) -> PolicySource<'_> {
        match &self.checkpoint {
            Some(path) => PolicySource::Checkpoint(path),
            None => PolicySource::Untrained,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Fixed,
    Heuristic,
    Learned,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Default,
    Smoke,
}

fn load(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path).with_context(|| format!("loading {}", path.display()))?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn parse_variants(spec: &str) -> Result<Vec<Ablation>> {
    if spec == "all" {
        return Ok(Ablation::ALL.to_vec());
    }
    let variants = spec
        .split(',')
        .map(|s| Ablation::parse(s.trim()))
        .collect::<coisland::Result<Vec<_>>>()?;
    if variants.is_empty() {
        bail!("no ablation variants given");
    }
    Ok(variants)
}

fn finish(cfg: &RunConfig, out: &Path) -> Result<()> {
    cfg.validate()?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train {
            common,
            timesteps,
            island,
            ablation,
        } => {
            let mut cfg = load(&common)?;
            if let Some(t) = timesteps {
                cfg.train.total_timesteps = t;
            }
            if let Some(mode) = island {
                cfg.island.mode = match mode {
                    Mode::Fixed => IslandMode::Fixed,
                    Mode::Heuristic => IslandMode::Heuristic,
                    Mode::Learned => IslandMode::Learned,
                };
            }
            if let Some(a) = ablation {
                cfg.train.ablation = Ablation::parse(&a)?;
            }
            finish(&cfg, &common.out)?;
            let report = cmd_train(&cfg, &common.out)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Eval {
            common,
            source,
            episodes,
            r,
            c,
            stochastic,
            dump_trajectories,
        } => {
            let mut cfg = load(&common)?;
            if let Some(n) = episodes {
                cfg.eval.episodes = n;
            }
            cfg.eval.r = r.unwrap_or(cfg.eval.r);
            cfg.eval.c = c.unwrap_or(cfg.eval.c);
            cfg.eval.deterministic &= !stochastic;
            cfg.eval.dump_trajectories |= dump_trajectories;
            finish(&cfg, &common.out)?;
            let report = cmd_eval(&cfg, source.policy(), &common.out)?;
            println!("{}", serde_json::to_string_pretty(&report.summary)?);
        }
        Command::Ablate {
            common,
            variants,
            timesteps,
        } => {
            let mut cfg = load(&common)?;
            if let Some(t) = timesteps {
                cfg.train.total_timesteps = t;
            }
            finish(&cfg, &common.out)?;
            let rows = cmd_ablate(&cfg, &parse_variants(&variants)?, &common.out)?;
            println!("{}", serde_json::to_string_pretty(&rows)?);
        }
        Command::Grid {
            common,
            source,
            r,
            c,
            episodes,
        } => {
            let cfg = load(&common)?;
            finish(&cfg, &common.out)?;
            let cells = cmd_grid(&cfg, source.policy(), &r, &c, episodes, &common.out)?;
            for cell in &cells {
                println!(
                    "r={:<5} c={:<5} nectar {:.3} +/- {:.3}",
                    cell.r, cell.c, cell.nectar.mean, cell.nectar.std
                );
            }
        }
        Command::Config { preset } => {
            let cfg = match preset {
                Preset::Default => RunConfig::default(),
                Preset::Smoke => RunConfig::smoke(),
            };
            print!("{}", cfg.to_toml()?);
        }
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
