//! End-to-end checks of the command-line interface: the `pipeline`
//! subcommand must produce byte-identical artifacts to running the stages
//! one by one, and failures must exit with the documented codes and a JSON
//! record on stderr.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

fn fruitmap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fruitmap"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_ok(args: &[&str]) -> String {
    let out = fruitmap(args);
    assert!(
        out.status.success(),
        "fruitmap {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).expect("stdout is UTF-8")
}

/// Every file under `dir`, keyed by relative path.
fn file_map(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut map = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path
                    .strip_prefix(dir)
                    .unwrap()
                    .to_string_lossy()
                    .into_owned();
                map.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    map
}

fn assert_trees_equal(a: &Path, b: &Path) {
    let left = file_map(a);
    let right = file_map(b);
    let left_names: Vec<_> = left.keys().collect();
    let right_names: Vec<_> = right.keys().collect();
    assert_eq!(
        left_names,
        right_names,
        "{} and {} hold different files",
        a.display(),
        b.display()
    );
    for (name, bytes) in &left {
        assert_eq!(
            bytes,
            &right[name],
            "{name} differs between {} and {}",
            a.display(),
            b.display()
        );
    }
}

fn assert_files_equal(a: &Path, b: &Path) {
    assert_eq!(
        std::fs::read(a).unwrap(),
        std::fs::read(b).unwrap(),
        "{} differs from {}",
        a.display(),
        b.display()
    );
}

const SMALL_SCENE: &str = r#"
[scene]
seed = 11
fruit_count = 3
image_width = 160
image_height = 120
focal_px = 150.0
camera_count = 4
"#;

#[test]
fn pipeline_matches_stage_by_stage_runs() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let config = root.join("config.toml");
    std::fs::write(&config, SMALL_SCENE).unwrap();
    let cfg = config.to_str().unwrap();
    let p = |tail: &str| root.join(tail).to_str().unwrap().to_owned();

    let synth_out = run_ok(&["--config", cfg, "synth", "--out", &p("synth")]);
    assert!(synth_out.contains("3 fruits"), "synth said: {synth_out}");
    assert!(root.join("synth/truth.json").is_file());
    assert!(root.join("synth/resolved_config.toml").is_file());

    let pipe_out = run_ok(&[
        "--config",
        cfg,
        "pipeline",
        "--frames",
        &p("synth/frames"),
        "--out",
        &p("pipe"),
        "--truth",
        &p("synth/truth.json"),
    ]);
    assert!(pipe_out.contains("pipeline:"), "pipeline said: {pipe_out}");
    assert!(pipe_out.contains("eval:"), "pipeline said: {pipe_out}");
    assert!(pipe_out.contains("baseline:"), "pipeline said: {pipe_out}");
    assert!(root.join("pipe/summary.json").is_file());

    run_ok(&[
        "--config",
        cfg,
        "segment",
        "--frames",
        &p("synth/frames"),
        "--out",
        &p("stages/clouds"),
    ]);
    run_ok(&[
        "--config",
        cfg,
        "integrate",
        "--clouds",
        &p("stages/clouds"),
        "--out",
        &p("stages/grid.tsdf"),
    ]);
    run_ok(&[
        "--config",
        cfg,
        "extract",
        "--grid",
        &p("stages/grid.tsdf"),
        "--out",
        &p("stages/surface.pcd"),
    ]);
    run_ok(&[
        "--config",
        cfg,
        "cluster",
        "--surface",
        &p("stages/surface.pcd"),
        "--out",
        &p("stages/clusters"),
    ]);
    run_ok(&[
        "--config",
        cfg,
        "fit",
        "--clusters",
        &p("stages/clusters"),
        "--out",
        &p("stages/fits.json"),
        "--shapes",
        &p("stages/shapes"),
    ]);
    let eval_out = run_ok(&[
        "--config",
        cfg,
        "eval",
        "--fits",
        &p("stages/fits.json"),
        "--truth",
        &p("synth/truth.json"),
        "--out",
        &p("stages/eval"),
        "--clusters",
        &p("stages/clusters"),
    ]);
    assert!(eval_out.contains("eval:"), "eval said: {eval_out}");

    assert_trees_equal(&root.join("pipe/clouds"), &root.join("stages/clouds"));
    assert_files_equal(&root.join("pipe/grid.tsdf"), &root.join("stages/grid.tsdf"));
    assert_files_equal(&root.join("pipe/surface.pcd"), &root.join("stages/surface.pcd"));
    assert_trees_equal(&root.join("pipe/clusters"), &root.join("stages/clusters"));
    assert_files_equal(&root.join("pipe/fits.json"), &root.join("stages/fits.json"));
    assert_trees_equal(&root.join("pipe/shapes"), &root.join("stages/shapes"));
    for name in [
        "report.json",
        "report.csv",
        "baseline_report.json",
        "baseline_report.csv",
    ] {
        assert_files_equal(&root.join("pipe").join(name), &root.join("stages/eval").join(name));
    }
}

#[test]
fn seed_flag_overrides_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let config = root.join("config.toml");
    std::fs::write(&config, SMALL_SCENE).unwrap();
    let cfg = config.to_str().unwrap();
    let p = |tail: &str| root.join(tail).to_str().unwrap().to_owned();

    run_ok(&["--config", cfg, "--seed", "99", "synth", "--out", &p("a")]);
    run_ok(&["--config", cfg, "--seed", "99", "synth", "--out", &p("b")]);
    run_ok(&["--config", cfg, "synth", "--out", &p("c")]);
    assert_files_equal(&root.join("a/truth.json"), &root.join("b/truth.json"));
    assert_ne!(
        std::fs::read(root.join("a/truth.json")).unwrap(),
        std::fs::read(root.join("c/truth.json")).unwrap(),
        "seed override had no effect"
    );
    let resolved = std::fs::read_to_string(root.join("a/resolved_config.toml")).unwrap();
    assert!(resolved.contains("seed = 99"), "resolved config: {resolved}");
}

fn stderr_record(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(text.trim()).unwrap_or_else(|e| panic!("stderr not JSON ({e}): {text}"))
}

#[test]
fn usage_errors_exit_2_with_a_json_record() {
    let out = fruitmap(&["--config", "/does/not/exist.toml", "synth", "--out", "/tmp/x"]);
    assert_eq!(out.status.code(), Some(2));
    let record = stderr_record(&out);
    assert_eq!(record["stage"], "usage");
    assert!(record["error"].is_string());

    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    std::fs::write(&config, "[cluster]\ntolerance = -1.0\n").unwrap();
    let out = fruitmap(&[
        "--config",
        config.to_str().unwrap(),
        "synth",
        "--out",
        dir.path().join("x").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_record(&out)["stage"], "usage");
}

#[test]
fn stage_failures_exit_1_with_a_json_record() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    let out_dir = dir.path().join("out");

    let out = fruitmap(&[
        "segment",
        "--frames",
        empty.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let record = stderr_record(&out);
    assert_eq!(record["stage"], "segment");
    assert!(record["error"].as_str().unwrap().contains("no frames"));

    let out = fruitmap(&[
        "eval",
        "--fits",
        dir.path().join("missing.json").to_str().unwrap(),
        "--truth",
        dir.path().join("missing_truth.json").to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_record(&out)["stage"], "eval");
}
