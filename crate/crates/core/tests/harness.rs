use std::fs;
use std::process::Command;

use kdrive::gateway::BackendConfig;
use kdrive::harness::{run_experiment, stats_from_episodes_file, ExperimentConfig, HarnessError, RunMode};
use kdrive::memory::{ExperienceKind, MemoryStore};
use kdrive::sim::EnvConfig;

fn kdrive() -> Command {
    Command::new(env!("CARGO_BIN_EXE_kdrive"))
}

#[test]
fn evaluate_writes_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = ExperimentConfig {
        out_dir: Some(out.clone()),
        ..ExperimentConfig::new(EnvConfig::new(3, 1.0, 0), ExperimentConfig::seed_range(5, 3))
    };
    let report = run_experiment(&cfg).unwrap();
    assert!(report.stats.complete);
    assert_eq!(report.stats.episodes, 3);
    for f in ["stats.json", "summary.csv", "episodes.jsonl", "traces/episode_002.jsonl", "decisions/episode_000.jsonl"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    assert!(!out.join("reflection_audit.jsonl").exists());
    let csv = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert!(csv.starts_with("label,k,memory_size,min,q1,median,q3,max,sr\nlane-3-density-1,3,0,"));
    let recomputed = stats_from_episodes_file(&out.join("episodes.jsonl")).unwrap();
    assert_eq!(recomputed, report.stats);
    let trace_lines = fs::read_to_string(out.join("traces/episode_000.jsonl")).unwrap().lines().count();
    assert_eq!(trace_lines, report.episodes[0].records.len());
}

#[test]
fn worker_count_does_not_change_results() {
    let base = ExperimentConfig::new(EnvConfig::new(4, 2.0, 0), ExperimentConfig::seed_range(0, 6));
    let one = run_experiment(&ExperimentConfig { workers: Some(1), ..base.clone() }).unwrap();
    let four = run_experiment(&ExperimentConfig { workers: Some(4), ..base }).unwrap();
    assert_eq!(one.stats, four.stats);
    assert_eq!(one.episodes, four.episodes);
}

#[test]
fn evolve_grows_memory_and_audits() {
    let dir = tempfile::tempdir().unwrap();
    let mem = dir.path().join("m.jsonl");
    let out = dir.path().join("out");
    let cfg = ExperimentConfig {
        mode: RunMode::Evolve,
        memory_path: Some(mem.clone()),
        out_dir: Some(out.clone()),
        ..ExperimentConfig::new(EnvConfig::new(2, 0.0, 0), ExperimentConfig::seed_range(0, 2))
    };
    let report = run_experiment(&cfg).unwrap();
    assert_eq!(report.final_memory_size, 6);
    let store = MemoryStore::load(&mem).unwrap();
    assert_eq!(store.count_kind(ExperienceKind::Success), 6);
    assert_eq!(fs::read_to_string(out.join("reflection_audit.jsonl")).unwrap().lines().count(), 2);
}

#[test]
fn evaluate_requires_existing_memory_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig {
        memory_path: Some(dir.path().join("nope.jsonl")),
        ..ExperimentConfig::new(EnvConfig::new(2, 0.0, 0), vec![0])
    };
    assert!(matches!(run_experiment(&cfg), Err(HarnessError::Memory(_))));
}

#[test]
fn backend_outage_marks_results_incomplete() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let cfg = ExperimentConfig {
        driver: BackendConfig {
            max_retries: 0,
            ..BackendConfig::remote(format!("http://127.0.0.1:{port}"), "m")
        },
        shots_k: 0,
        out_dir: Some(out.clone()),
        ..ExperimentConfig::new(EnvConfig::new(2, 0.0, 0), vec![0, 1])
    };
    // Embedding dimension probing fails first without a memory file, so seed one.
    let mem = dir.path().join("m.jsonl");
    MemoryStore::new(256).save(&mem).unwrap();
    let cfg = ExperimentConfig { memory_path: Some(mem), ..cfg };
    assert!(matches!(run_experiment(&cfg), Err(HarnessError::Aborted { .. })));
    let stats: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("stats.json")).unwrap()).unwrap();
    assert_eq!(stats["complete"], false);
}

#[test]
fn cli_memory_lifecycle() {
    let dir = tempfile::tempdir().unwrap();
    let mem = dir.path().join("mem.jsonl");
    let ok = |cmd: &mut Command| {
        let out = cmd.output().unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        String::from_utf8(out.stdout).unwrap()
    };
    ok(kdrive().args(["memory", "init", "--out"]).arg(&mem));
    assert!(ok(kdrive().args(["memory", "stats"]).arg(&mem)).contains("5 experiences"));

    let template = dir.path().join("seeds.txt");
    ok(kdrive().args(["memory", "export"]).arg(&mem).arg("--out").arg(&template));
    let other = dir.path().join("other.jsonl");
    ok(kdrive().args(["memory", "init", "--out"]).arg(&other).arg("--template").arg(&template));
    // Same descriptions: imports replace rather than duplicate.
    ok(kdrive().args(["memory", "import"]).arg(&mem).arg("--from").arg(&other));
    assert_eq!(MemoryStore::load(&mem).unwrap().len(), 5);

    let out = dir.path().join("run");
    let script = dir.path().join("faster.txt");
    fs::write(&script, "Go.\ndecision: FASTER\n").unwrap();
    let printed = ok(kdrive()
        .args(["run", "--mode", "evolve", "--backend", "scripted", "--script"])
        .arg(&script)
        .args(["--layout", "stopped-leader:15", "--lanes", "3", "--episodes", "1", "--memory"])
        .arg(&mem)
        .arg("--out")
        .arg(&out));
    assert!(printed.contains("memory grew to 6"), "{printed}");
    let stats = ok(kdrive().arg("stats").arg(out.join("episodes.jsonl")));
    assert!(stats.contains("\"success_rate\": 0.0"), "{stats}");
}

#[test]
fn cli_rejects_bad_arguments() {
    let out = kdrive().args(["run", "--backend", "scripted"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--script"));
    let out = kdrive().args(["run", "--layout", "sideways"]).output().unwrap();
    assert!(!out.status.success());
}
