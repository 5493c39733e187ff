//! Command-line front end for the `kdrive` binary.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use tracing_subscriber::EnvFilter;

use crate::descriptor::DEFAULT_INTENTION;
use crate::gateway::{Backend, BackendConfig};
use crate::harness::{run_experiment, stats_from_episodes_file, write_summary_csv, ExperimentConfig, RunMode};
use crate::memory::{
    parse_seed_template, render_seed_template, Experience, ExperienceKind, MemoryStore, Source, DEFAULT_SEEDS,
};
use crate::sim::{EnvConfig, Layout};

#[derive(Debug, Parser)]
#[command(name = "kdrive", version, about = "Knowledge-driven highway driving agent")]
pub struct Cli {
    /// Log filter, e.g. `info` or `kdrive=debug` (RUST_LOG also works).
    #[arg(long, global = true)]
    pub log: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run an experiment (evaluate or evolve).
    Run(RunArgs),
    /// Build, inspect and convert memory files.
    #[command(subcommand)]
    Memory(MemoryCommand),
    /// Recompute statistics from an episodes.jsonl file.
    Stats {
        episodes: PathBuf,
        /// Also write stats.json and summary.csv here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum BackendChoice {
    Heuristic,
    Remote,
    Scripted,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeChoice {
    Evaluate,
    Evolve,
}

#[derive(Debug, Args)]
pub struct BackendArgs {
    #[arg(long, value_enum, default_value = "heuristic")]
    pub backend: BackendChoice,
    /// Reply file for the scripted backend; replies are separated by `---` lines.
    #[arg(long)]
    pub script: Option<PathBuf>,
    /// Reply file for a scripted corrector (defaults to the heuristic corrector).
    #[arg(long)]
    pub reflect_script: Option<PathBuf>,
    #[arg(long, default_value = "https://api.openai.com/v1")]
    pub api_base: String,
    #[arg(long, default_value = "gpt-3.5-turbo")]
    pub model: String,
    #[arg(long, default_value = "gpt-4")]
    pub reflect_model: String,
    #[arg(long, default_value = "text-embedding-ada-002")]
    pub embedding_model: String,
    /// Environment variable holding the bearer token.
    #[arg(long, default_value = "OPENAI_API_KEY")]
    pub api_key_env: String,
    #[arg(long, default_value_t = 60.0)]
    pub timeout: f64,
}

impl BackendArgs {
    fn remote(&self, model: &str) -> BackendConfig {
        BackendConfig {
            embedding_model: Some(self.embedding_model.clone()),
            api_key_env: self.api_key_env.clone(),
            timeout_secs: self.timeout,
            ..BackendConfig::remote(&self.api_base, model)
        }
    }

    pub fn driver(&self) -> Result<BackendConfig> {
        Ok(match self.backend {
            BackendChoice::Heuristic => BackendConfig::heuristic(),
            BackendChoice::Remote => self.remote(&self.model),
            BackendChoice::Scripted => {
                let path = self.script.as_ref().context("--backend scripted needs --script FILE")?;
                BackendConfig::scripted(read_script(path)?)
            }
        })
    }

    pub fn corrector(&self) -> Result<BackendConfig> {
        if let Some(path) = &self.reflect_script {
            return Ok(BackendConfig::scripted(read_script(path)?));
        }
        Ok(match self.backend {
            BackendChoice::Remote => self.remote(&self.reflect_model),
            _ => BackendConfig::heuristic(),
        })
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long, default_value_t = 4)]
    pub lanes: usize,
    #[arg(long, default_value_t = 2.0)]
    pub density: f64,
    /// First seed; episode i uses seed + i.
    #[arg(long, default_value_t = 0, conflicts_with = "seeds")]
    pub seed: u64,
    /// Explicit comma-separated seeds (one episode each).
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[arg(long, default_value_t = 10)]
    pub episodes: usize,
    #[arg(long, default_value_t = 30)]
    pub frames: usize,
    /// Few-shot count k.
    #[arg(long, default_value_t = 3)]
    pub shots: usize,
    #[arg(long)]
    pub memory: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "evaluate")]
    pub mode: ModeChoice,
    #[arg(long, default_value = DEFAULT_INTENTION)]
    pub intention: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// `random` or `stopped-leader:<meters>`.
    #[arg(long, default_value = "random", value_parser = parse_layout)]
    pub layout: Layout,
    #[arg(long)]
    pub workers: Option<usize>,
    #[command(flatten)]
    pub backend: BackendArgs,
}

#[derive(Debug, Subcommand)]
pub enum MemoryCommand {
    /// Create a memory file from a seed template (built-in seeds by default).
    Init {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        template: Option<PathBuf>,
        #[command(flatten)]
        backend: BackendArgs,
    },
    /// Print counts by kind and action.
    Stats { memory: PathBuf },
    /// Write the memory as a seed template.
    Export {
        memory: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Merge experiences from another memory file.
    Import {
        memory: PathBuf,
        #[arg(long)]
        from: PathBuf,
    },
}

fn parse_layout(s: &str) -> Result<Layout, String> {
    if s == "random" {
        return Ok(Layout::Random);
    }
    match s.strip_prefix("stopped-leader:").map(str::parse::<f64>) {
        Some(Ok(distance)) => Ok(Layout::StoppedLeader { distance }),
        _ => Err(format!("expected `random` or `stopped-leader:<meters>`, got {s:?}")),
    }
}

fn read_script(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut replies = Vec::new();
    let mut current = Vec::new();
    for line in text.lines().chain(std::iter::once("---")) {
        if line.trim() == "---" {
            let reply = current.join("\n").trim().to_string();
            if !reply.is_empty() {
                replies.push(reply);
            }
            current.clear();
        } else {
            current.push(line);
        }
    }
    if replies.is_empty() {
        bail!("script {} has no replies", path.display());
    }
    Ok(replies)
}

pub fn init_logging(filter: Option<&str>) {
    let filter = filter
        .map(EnvFilter::new)
        .or_else(|| EnvFilter::try_from_default_env().ok())
        .unwrap_or_else(|| EnvFilter::new("warn"));
    let _ = tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).try_init();
}

fn run(args: RunArgs) -> Result<()> {
    let seeds = args.seeds.clone().unwrap_or_else(|| ExperimentConfig::seed_range(args.seed, args.episodes));
    let mut env = EnvConfig::new(args.lanes, args.density, seeds[0]).with_layout(args.layout);
    env.max_decision_frames = args.frames;
    let cfg = ExperimentConfig {
        shots_k: args.shots,
        memory_path: args.memory.clone(),
        mode: match args.mode {
            ModeChoice::Evaluate => RunMode::Evaluate,
            ModeChoice::Evolve => RunMode::Evolve,
        },
        driver: args.backend.driver()?,
        corrector: args.backend.corrector()?,
        intention: args.intention.clone(),
        out_dir: args.out.clone(),
        workers: args.workers,
        ..ExperimentConfig::new(env, seeds)
    };
    let report = run_experiment(&cfg)?;
    let s = &report.stats;
    println!(
        "{} k={} memory={} episodes={} SS min={} q1={} median={} q3={} max={} SR={}",
        s.label, s.k, s.memory_size, s.episodes, s.min, s.q1, s.median, s.q3, s.max, s.success_rate
    );
    if cfg.mode == RunMode::Evolve {
        println!("memory grew to {} experiences", report.final_memory_size);
    }
    Ok(())
}

fn memory_init(out: &Path, template: Option<&Path>, backend: &BackendArgs) -> Result<()> {
    let text = match template {
        Some(p) => fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        None => DEFAULT_SEEDS.to_string(),
    };
    let entries = parse_seed_template(&text)?;
    let embedder = Backend::new(backend.driver()?)?;
    let mut seeds = Vec::with_capacity(entries.len());
    for (i, entry) in entries.into_iter().enumerate() {
        let key = embedder.embed(&entry.description)?;
        let mut exp = Experience::from_reasoning(key, entry.description, entry.reasoning, ExperienceKind::Init)?;
        exp.id = format!("init-{}", i + 1);
        exp.source = Source::External;
        seeds.push(exp);
    }
    let dim = seeds.first().map(|e| e.key.dim()).context("template has no entries")?;
    let mut store = MemoryStore::init(seeds, dim)?;
    store.save(out)?;
    println!("wrote {} seed experiences (dim {dim}) to {}", store.len(), out.display());
    Ok(())
}

fn memory_stats(path: &Path) -> Result<()> {
    let store = MemoryStore::load(path)?;
    println!("{}: {} experiences, dim {}", path.display(), store.len(), store.dim());
    for kind in [ExperienceKind::Init, ExperienceKind::Success, ExperienceKind::Correction] {
        println!("  {:<10} {}", format!("{kind:?}").to_lowercase(), store.count_kind(kind));
    }
    for action in crate::sim::MetaAction::ALL {
        let n = store.items().iter().filter(|e| e.action == action).count();
        println!("  {:<10} {n}", action.as_str());
    }
    Ok(())
}

fn memory_import(path: &Path, from: &Path) -> Result<()> {
    let mut store = MemoryStore::load(path)?;
    let other = MemoryStore::load(from)?;
    let before = store.len();
    for mut exp in other.items().iter().cloned() {
        if store.items().iter().any(|e| e.id == exp.id) {
            exp.id = uuid::Uuid::new_v4().to_string();
        }
        exp.source = Source::External;
        store.store_experience(exp)?;
    }
    store.save(path)?;
    println!("imported {} experiences; memory now {} (was {before})", other.len(), store.len());
    Ok(())
}

pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => run(args),
        Command::Memory(MemoryCommand::Init { out, template, backend }) => {
            memory_init(&out, template.as_deref(), &backend)
        }
        Command::Memory(MemoryCommand::Stats { memory }) => memory_stats(&memory),
        Command::Memory(MemoryCommand::Export { memory, out }) => {
            let store = MemoryStore::load(&memory)?;
            fs::write(&out, render_seed_template(store.items()))?;
            println!("exported {} experiences to {}", store.len(), out.display());
            Ok(())
        }
        Command::Memory(MemoryCommand::Import { memory, from }) => memory_import(&memory, &from),
        Command::Stats { episodes, out } => {
            let stats = stats_from_episodes_file(&episodes)?;
            println!("{}", serde_json::to_string_pretty(&stats)?);
            if let Some(dir) = out {
                fs::create_dir_all(&dir)?;
                fs::write(dir.join("stats.json"), serde_json::to_string_pretty(&stats)? + "\n")?;
                write_summary_csv(&dir.join("summary.csv"), &stats)?;
            }
            Ok(())
        }
    }
}
