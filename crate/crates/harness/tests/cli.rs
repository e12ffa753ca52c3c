use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use actmap_harness::manifest::RunManifest;
use actmap_harness::plots::{read_episodes, run_bands};
use actmap_harness::RunConfig;

fn actmap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_actmap")).arg("--quiet").args(args).output().expect("binary runs")
}

const SMALL: [&str; 8] = [
    "--set",
    "run.total_steps=1500",
    "--set",
    "run.checkpoint_every=500",
    "--set",
    "feasibility.steps=100",
    "--set",
    "run.progress_every=250",
];

fn small_run(dir: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["train", "--out", dir.to_str().unwrap()];
    args.extend(SMALL);
    args.extend(extra);
    actmap(&args)
}

fn assert_monotone(path: &Path) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let col = r.headers().unwrap().iter().position(|h| h == "step").unwrap();
    let mut last = 0usize;
    for rec in r.records() {
        let s: usize = rec.unwrap()[col].parse().unwrap();
        assert!(s >= last, "{} not monotone", path.display());
        last = s;
    }
}

#[test]
fn am_sac_on_toy_writes_manifest_and_metrics_per_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("run");
    let out = small_run(&dir, &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let m = RunManifest::read(&dir).unwrap();
    assert_eq!(m.seeds, vec![0, 1, 2]);
    assert_eq!(m.config.run.algorithm.to_string(), "am-sac");
    for s in &m.outputs.seed_dirs {
        let sd = dir.join(s);
        for f in ["episodes.csv", "progress.csv", "pretrain.csv"] {
            assert_monotone(&sd.join(f));
        }
        assert!(sd.join("feasibility.ckpt").exists());
        assert!(sd.join("final").join("actor.ckpt").exists());
    }
    assert!(dir.join("completion.json").exists());
    let again = RunConfig::load(&dir.join("effective_config.toml"), &[]).unwrap();
    assert_eq!(again, m.config);
}

#[test]
fn rerun_from_manifest_reproduces_metrics() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert!(small_run(&a, &["--set", "run.seeds=[4]"]).status.success());
    let m = a.join("manifest.json");
    let out = actmap(&["train", "--manifest", m.to_str().unwrap(), "--out", b.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["episodes.csv", "progress.csv", "pretrain.csv"] {
        assert_eq!(fs::read(a.join("seed-4").join(f)).unwrap(), fs::read(b.join("seed-4").join(f)).unwrap(), "{f}");
    }
}

#[test]
fn resume_continues_from_the_latest_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("run");
    assert!(small_run(&dir, &["--set", "run.seeds=[1]", "--set", "run.algorithm=sac"]).status.success());
    let sd = dir.join("seed-1");
    let before = read_episodes(&sd.join("episodes.csv")).unwrap();
    // Pretend the process died after the step-1000 checkpoint.
    fs::remove_dir_all(sd.join("final")).unwrap();
    fs::remove_file(sd.join("summary.json")).unwrap();
    fs::remove_file(dir.join("completion.json")).unwrap();
    let out = actmap(&["train", "--resume", dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let after = read_episodes(&sd.join("episodes.csv")).unwrap();
    let kept: Vec<_> = before.iter().filter(|e| e.step <= 1000).collect();
    assert_eq!(after.iter().filter(|e| e.step <= 1000).collect::<Vec<_>>(), kept);
    assert!(after.iter().any(|e| e.step > 1000));
    assert_monotone(&sd.join("episodes.csv"));
    assert_monotone(&sd.join("progress.csv"));
    assert!(sd.join("final").join("state.json").exists());
}

#[test]
fn replacement_on_path_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = actmap(&[
        "train",
        "--set",
        "run.env=path",
        "--set",
        "run.algorithm=sac+replacement",
        "--out",
        tmp.path().join("x").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("run.algorithm"));
    assert!(!tmp.path().join("x").exists());
}

#[test]
fn unknown_field_is_named_and_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.toml");
    fs::write(&cfg, "[agent]\nlearning_rate = 0.1\n").unwrap();
    let out = actmap(&["config", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("learning_rate"));
}

#[test]
fn missing_run_directory_is_a_runtime_error() {
    let out = actmap(&["eval", "--run", "/nonexistent/run"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn existing_run_directory_is_not_overwritten() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("run");
    assert!(small_run(&dir, &["--set", "run.seeds=[0]", "--set", "run.algorithm=sac"]).status.success());
    let out = small_run(&dir, &["--set", "run.seeds=[0]"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn config_dump_round_trips() {
    let out = actmap(&["config", "--set", "run.env=robot", "--set", "run.algorithm=lag-ppo"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let c = RunConfig::from_toml(&text, &[]).unwrap();
    assert_eq!(c.run.algorithm.to_string(), "lag-ppo");
    assert_eq!(c.agent.entropy_coef, 0.005);
}

#[test]
fn eval_and_plot_export_on_a_finished_run() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("toy-sac");
    assert!(small_run(&dir, &["--set", "run.algorithm=sac+projection", "--set", "run.total_steps=4000"]).status.success());
    let out = actmap(&["eval", "--run", dir.to_str().unwrap(), "--episodes", "5"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8_lossy(&out.stdout).lines().count(), 3);
    assert_eq!(read_episodes(&dir.join("seed-0").join("eval.csv")).unwrap().len(), 5);

    let plots = tmp.path().join("plots");
    let out = actmap(&["export-plots", dir.to_str().unwrap(), "--out", plots.to_str().unwrap(), "--bin", "250"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for kind in ["return", "violation"] {
        let path = plots.join(format!("toy-sac_{kind}.csv"));
        assert_monotone(&path);
        let mut r = csv::Reader::from_path(&path).unwrap();
        assert_eq!(r.headers().unwrap().iter().collect::<Vec<_>>(), ["step", "median", "min", "max"]);
        assert!(r.records().count() > 0);
    }
    let (ret, vio) = run_bands(&dir, 250).unwrap();
    for row in ret.iter().chain(&vio) {
        assert!(row.min <= row.median && row.median <= row.max);
    }
}

#[test]
fn timing_and_sweep_emit_json() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path().join("t.json");
    let out = actmap(&["timing", "--decisions", "200", "--out", t.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows: Vec<serde_json::Value> = serde_json::from_str(&fs::read_to_string(&t).unwrap()).unwrap();
    let names: Vec<&str> = rows.iter().map(|r| r["method"].as_str().unwrap()).collect();
    assert_eq!(names, ["base", "action-mapping", "projection", "resampling", "replacement"]);

    let s = tmp.path().join("s.json");
    let out = actmap(&["s-sweep", "--pairs", "500", "--s", "4,64,128", "--out", s.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(&s).unwrap()).unwrap();
    assert_eq!(r["agreement"].as_array().unwrap().len(), 3);
    assert_eq!(r["eval_seconds"].as_array().unwrap().len(), 3);
}
