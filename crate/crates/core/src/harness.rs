//! Experiment orchestration and metrics.
//!
//! Output directory layout:
//!
//! ```text
//! stats.json                    ExperimentStats
//! summary.csv                   label,k,memory_size,min,q1,median,q3,max,sr
//! episodes.jsonl                one summary line per episode
//! traces/episode_NNN.jsonl      simulator trace per decision frame
//! decisions/episode_NNN.jsonl   decision records (embeddings elided)
//! reflection_audit.jsonl        evolve mode only
//! ```

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::info;

use crate::descriptor::DEFAULT_INTENTION;
use crate::gateway::{BackendConfig, GatewayError};
use crate::memory::{MemoryError, MemoryStore};
use crate::reasoning::{
    run_episode, write_decision_records, Backends, DriveSettings, EpisodeRecord, ReasoningError, Termination,
    SYSTEM_PROMPT,
};
use crate::reflection::{apply_reflection, write_audit, AuditEntry, ReflectionError};
use crate::sim::{write_trace, EnvConfig, MetaAction};

pub const DEFAULT_WORKERS: usize = 4;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("quartiles of an empty list")]
    Empty,
    #[error("invalid experiment config: {0}")]
    InvalidConfig(String),
    #[error("episode {episode} (seed {seed}) aborted: {reason}")]
    Aborted { episode: usize, seed: u64, reason: String },
    #[error(transparent)]
    Reasoning(#[from] ReasoningError),
    #[error(transparent)]
    Reflection(#[from] ReflectionError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad trace file: {0}")]
    Trace(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunMode {
    /// Frozen memory; the memory file is never written.
    Evaluate,
    /// Reflect after every episode and save the grown memory at the end.
    Evolve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub env: EnvConfig,
    pub shots_k: usize,
    pub memory_path: Option<PathBuf>,
    /// One episode per seed; the seed overrides `env.seed`.
    pub seeds: Vec<u64>,
    pub mode: RunMode,
    pub driver: BackendConfig,
    pub corrector: BackendConfig,
    pub intention: String,
    pub out_dir: Option<PathBuf>,
    /// Concurrent episodes in evaluate mode; defaults to min(4, episodes).
    pub workers: Option<usize>,
}

impl ExperimentConfig {
    pub fn new(env: EnvConfig, seeds: Vec<u64>) -> Self {
        Self {
            env,
            shots_k: 3,
            memory_path: None,
            seeds,
            mode: RunMode::Evaluate,
            driver: BackendConfig::heuristic(),
            corrector: BackendConfig::heuristic(),
            intention: DEFAULT_INTENTION.to_string(),
            out_dir: None,
            workers: None,
        }
    }

    /// `count` consecutive seeds starting at `base`.
    pub fn seed_range(base: u64, count: usize) -> Vec<u64> {
        (0..count as u64).map(|i| base.wrapping_add(i)).collect()
    }

    pub fn episodes(&self) -> usize {
        self.seeds.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Type 7 quantile of sorted data: h = (n - 1) p, linear between neighbors.
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn quartile_stats(values: &[f64]) -> Result<Quartiles, HarnessError> {
    if values.is_empty() {
        return Err(HarnessError::Empty);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(Quartiles {
        min: sorted[0],
        q1: quantile_sorted(&sorted, 0.25),
        median: quantile_sorted(&sorted, 0.5),
        q3: quantile_sorted(&sorted, 0.75),
        max: sorted[sorted.len() - 1],
    })
}

/// Fraction of episodes that reached `max_frames`.
pub fn success_rate(ss_values: &[usize], max_frames: usize) -> f64 {
    if ss_values.is_empty() {
        return 0.0;
    }
    ss_values.iter().filter(|&&s| s == max_frames).count() as f64 / ss_values.len() as f64
}

/// Frames completed before the first collision (or undecodable decision).
pub fn compute_success_steps(ep: &EpisodeRecord) -> usize {
    ep.records
        .iter()
        .take_while(|r| !r.events.collision && !r.decoder_failure)
        .count()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentStats {
    pub label: String,
    pub k: usize,
    pub memory_size: usize,
    pub episodes: usize,
    pub max_decision_frames: usize,
    pub ss_values: Vec<usize>,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub success_rate: f64,
    pub complete: bool,
}

impl ExperimentStats {
    pub fn from_ss(
        label: String,
        k: usize,
        memory_size: usize,
        max_decision_frames: usize,
        ss_values: Vec<usize>,
        complete: bool,
    ) -> Self {
        let as_f64: Vec<f64> = ss_values.iter().map(|&s| s as f64).collect();
        let q = quartile_stats(&as_f64).unwrap_or(Quartiles {
            min: 0.0,
            q1: 0.0,
            median: 0.0,
            q3: 0.0,
            max: 0.0,
        });
        Self {
            label,
            k,
            memory_size,
            episodes: ss_values.len(),
            max_decision_frames,
            success_rate: success_rate(&ss_values, max_decision_frames),
            ss_values,
            min: q.min,
            q1: q.q1,
            median: q.median,
            q3: q.q3,
            max: q.max,
            complete,
        }
    }
}

/// One line of `episodes.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub episode: usize,
    pub seed: u64,
    pub label: String,
    pub k: usize,
    pub max_decision_frames: usize,
    pub memory_size: usize,
    pub terminated_by: Option<Termination>,
    pub success_steps: usize,
    pub abort_reason: Option<String>,
    pub actions: Vec<MetaAction>,
}

#[derive(Debug)]
pub struct ExperimentReport {
    pub stats: ExperimentStats,
    pub episodes: Vec<EpisodeRecord>,
    pub audit: Vec<AuditEntry>,
    /// Memory size after the run (grows in evolve mode).
    pub final_memory_size: usize,
}

fn load_store(cfg: &ExperimentConfig, backends: &Backends) -> Result<MemoryStore, HarnessError> {
    match &cfg.memory_path {
        Some(path) if path.exists() => Ok(MemoryStore::load(path)?),
        Some(path) if cfg.mode == RunMode::Evaluate => Err(HarnessError::Memory(MemoryError::Io(
            std::io::Error::new(std::io::ErrorKind::NotFound, format!("memory file {} not found", path.display())),
        ))),
        _ => {
            let dim = match backends.embedder.embedding_dim() {
                Some(d) => d,
                None => backends.embedder.embed("embedding dimension probe")?.dim(),
            };
            Ok(MemoryStore::new(dim))
        }
    }
}

fn episode_id(label: &str, index: usize, seed: u64) -> String {
    format!("{label}/ep-{index:03}-seed-{seed}")
}

fn run_parallel(
    cfg: &ExperimentConfig,
    store: &MemoryStore,
    backends: &Backends,
    settings: &DriveSettings,
) -> Vec<Result<EpisodeRecord, ReasoningError>> {
    let n = cfg.seeds.len();
    let workers = cfg.workers.unwrap_or(DEFAULT_WORKERS).clamp(1, n.max(1));
    let mut results: Vec<Option<Result<EpisodeRecord, ReasoningError>>> = (0..n).map(|_| None).collect();
    std::thread::scope(|scope| {
        let chunks: Vec<_> = results.chunks_mut(n.div_ceil(workers).max(1)).enumerate().collect();
        let chunk_len = n.div_ceil(workers).max(1);
        for (c, slots) in chunks {
            scope.spawn(move || {
                for (j, slot) in slots.iter_mut().enumerate() {
                    let i = c * chunk_len + j;
                    let env = EnvConfig { seed: cfg.seeds[i], ..cfg.env.clone() };
                    *slot = Some(run_episode(&env, store, backends, settings));
                }
            });
        }
    });
    results.into_iter().map(|r| r.expect("every slot is filled")).collect()
}

/// Runs all episodes of an experiment and writes results when `out_dir` is set.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport, HarnessError> {
    if cfg.seeds.is_empty() {
        return Err(HarnessError::InvalidConfig("at least one episode is required".into()));
    }
    cfg.env.validate().map_err(|e| HarnessError::InvalidConfig(e.to_string()))?;
    let backends = Backends::new(cfg.driver.clone(), cfg.corrector.clone())?;
    let mut store = load_store(cfg, &backends)?;
    let initial_size = store.len();
    let settings = DriveSettings {
        k: cfg.shots_k,
        intention: cfg.intention.clone(),
        system_prompt: SYSTEM_PROMPT.to_string(),
    };
    let label = cfg.env.label();
    info!(%label, mode = ?cfg.mode, episodes = cfg.episodes(), memory = initial_size, "starting experiment");

    let mut episodes = Vec::with_capacity(cfg.episodes());
    let mut audit = Vec::new();
    let mut failure: Option<HarnessError> = None;

    match cfg.mode {
        RunMode::Evaluate => {
            for (i, result) in run_parallel(cfg, &store, &backends, &settings).into_iter().enumerate() {
                match result {
                    Ok(ep) => episodes.push(ep),
                    Err(err) => {
                        failure.get_or_insert(HarnessError::Aborted {
                            episode: i,
                            seed: cfg.seeds[i],
                            reason: err.to_string(),
                        });
                    }
                }
            }
        }
        RunMode::Evolve => {
            for (i, &seed) in cfg.seeds.iter().enumerate() {
                let env = EnvConfig { seed, ..cfg.env.clone() };
                let ep = match run_episode(&env, &store, &backends, &settings) {
                    Ok(ep) => ep,
                    Err(err) => {
                        failure = Some(HarnessError::Aborted { episode: i, seed, reason: err.to_string() });
                        break;
                    }
                };
                let id = episode_id(&label, i, seed);
                match apply_reflection(&ep, &id, &mut store, &backends) {
                    Ok(Some(outcome)) => audit.push(AuditEntry::from(&outcome)),
                    Ok(None) => {}
                    Err(err) => failure = Some(err.into()),
                }
                episodes.push(ep);
                if failure.is_some() {
                    break;
                }
            }
        }
    }

    for (i, ep) in episodes.iter().enumerate() {
        if ep.terminated_by == Some(Termination::Aborted) {
            failure.get_or_insert(HarnessError::Aborted {
                episode: i,
                seed: ep.config.seed,
                reason: ep.abort_reason.clone().unwrap_or_default(),
            });
        }
    }

    let ss_values: Vec<usize> = episodes.iter().map(compute_success_steps).collect();
    let stats = ExperimentStats::from_ss(
        label.clone(),
        cfg.shots_k,
        initial_size,
        cfg.env.max_decision_frames,
        ss_values,
        failure.is_none() && episodes.len() == cfg.episodes(),
    );

    if cfg.mode == RunMode::Evolve {
        if let Some(path) = &cfg.memory_path {
            store.save(path)?;
        }
    }
    if let Some(dir) = &cfg.out_dir {
        write_results(dir, cfg, &stats, &episodes, &audit)?;
    }
    if let Some(err) = failure {
        return Err(err);
    }
    info!(sr = stats.success_rate, median = stats.median, "experiment finished");
    Ok(ExperimentReport {
        stats,
        episodes,
        audit,
        final_memory_size: store.len(),
    })
}

fn write_json_file<T: Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value).map_err(std::io::Error::from)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

pub fn write_summary_csv(path: &Path, stats: &ExperimentStats) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| HarnessError::Io(e.into()))?;
    let row = |w: &mut csv::Writer<File>, fields: &[String]| w.write_record(fields).map_err(|e| HarnessError::Io(e.into()));
    row(&mut w, &["label", "k", "memory_size", "min", "q1", "median", "q3", "max", "sr"].map(String::from))?;
    row(
        &mut w,
        &[
            stats.label.clone(),
            stats.k.to_string(),
            stats.memory_size.to_string(),
            stats.min.to_string(),
            stats.q1.to_string(),
            stats.median.to_string(),
            stats.q3.to_string(),
            stats.max.to_string(),
            stats.success_rate.to_string(),
        ],
    )?;
    w.flush()?;
    Ok(())
}

fn write_results(
    dir: &Path,
    cfg: &ExperimentConfig,
    stats: &ExperimentStats,
    episodes: &[EpisodeRecord],
    audit: &[AuditEntry],
) -> Result<(), HarnessError> {
    fs::create_dir_all(dir.join("traces"))?;
    fs::create_dir_all(dir.join("decisions"))?;
    write_json_file(&dir.join("stats.json"), stats)?;
    write_summary_csv(&dir.join("summary.csv"), stats)?;

    let mut summary = BufWriter::new(File::create(dir.join("episodes.jsonl"))?);
    for (i, ep) in episodes.iter().enumerate() {
        let line = EpisodeSummary {
            episode: i,
            seed: ep.config.seed,
            label: stats.label.clone(),
            k: cfg.shots_k,
            max_decision_frames: ep.config.max_decision_frames,
            memory_size: stats.memory_size,
            terminated_by: ep.terminated_by,
            success_steps: compute_success_steps(ep),
            abort_reason: ep.abort_reason.clone(),
            actions: ep.records.iter().map(|r| r.action).collect(),
        };
        serde_json::to_writer(&mut summary, &line).map_err(std::io::Error::from)?;
        summary.write_all(b"\n")?;

        let trace = BufWriter::new(File::create(dir.join(format!("traces/episode_{i:03}.jsonl")))?);
        write_trace(trace, &ep.trace())?;
        let decisions = BufWriter::new(File::create(dir.join(format!("decisions/episode_{i:03}.jsonl")))?);
        write_decision_records(decisions, &ep.records)?;
    }
    summary.flush()?;
    if cfg.mode == RunMode::Evolve {
        write_audit(BufWriter::new(File::create(dir.join("reflection_audit.jsonl"))?), audit)?;
    }
    Ok(())
}

/// Recomputes statistics from an `episodes.jsonl` file.
pub fn stats_from_episodes_file(path: &Path) -> Result<ExperimentStats, HarnessError> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let s: EpisodeSummary =
            serde_json::from_str(&line).map_err(|e| HarnessError::Trace(format!("line {}: {e}", n + 1)))?;
        lines.push(s);
    }
    let first = lines.first().ok_or_else(|| HarnessError::Trace("no episodes in file".into()))?;
    let (label, k, frames, memory) = (first.label.clone(), first.k, first.max_decision_frames, first.memory_size);
    let complete = lines.iter().all(|s| s.terminated_by != Some(Termination::Aborted));
    let ss = lines.iter().map(|s| s.success_steps).collect();
    Ok(ExperimentStats::from_ss(label, k, memory, frames, ss, complete))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn quartiles_by_hand() {
        let q = quartile_stats(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!((q.min, q.q1, q.median, q.q3, q.max), (1.0, 2.0, 3.0, 4.0, 5.0));
        let q = quartile_stats(&[7.0]).unwrap();
        assert_eq!((q.min, q.q1, q.median, q.q3, q.max), (7.0, 7.0, 7.0, 7.0, 7.0));
        // h = 0.75, 1.5, 2.25 for n = 4.
        let q = quartile_stats(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!((q.min, q.q1, q.median, q.q3, q.max), (1.0, 1.75, 2.5, 3.25, 4.0));
        assert!(matches!(quartile_stats(&[]), Err(HarnessError::Empty)));
    }

    #[test]
    fn success_rate_examples() {
        assert_eq!(success_rate(&[30; 10], 30), 1.0);
        let mixed = [30, 30, 30, 30, 30, 30, 30, 12, 5, 9];
        assert_eq!(success_rate(&mixed, 30), 0.7);
        assert_eq!(success_rate(&[1, 2, 29], 30), 0.0);
    }

    proptest! {
        #[test]
        fn quartiles_ignore_order(mut v in proptest::collection::vec(0.0f64..30.0, 1..40), rot in 0usize..40) {
            let a = quartile_stats(&v).unwrap();
            let len = v.len();
            v.rotate_left(rot % len);
            v.reverse();
            prop_assert_eq!(a, quartile_stats(&v).unwrap());
            prop_assert!(a.min <= a.q1 && a.q1 <= a.median && a.median <= a.q3 && a.q3 <= a.max);
        }

        #[test]
        fn success_rate_is_a_count(v in proptest::collection::vec(0usize..=30, 1..50)) {
            let sr = success_rate(&v, 30);
            let count = sr * v.len() as f64;
            prop_assert!((count - count.round()).abs() < 1e-9);
        }
    }
}
