//! End-to-end runs of the `rgb2dem` binary against a small synthetic corpus.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rgb2dem"))
}

fn write_config(dir: &Path) -> std::path::PathBuf {
    let work = dir.join("work");
    let config = format!(
        r#"
root_seed = 7
work_dir = "{}"

[build]
count = 12
tile_size = 16

[train.stage1]
steps = 8
batch_size = 2
depth = 2
base_channels = 4
disc_base_channels = 4
checkpoint_every = 0

[train.stage2]
steps = 4
batch_size = 2
depth = 2
base_channels = 4
disc_base_channels = 4
checkpoint_every = 0
learning_rate = 1e-4
ssim_filter_threshold = -1.0

[eval]
clusters = 2
histogram_bins = 8
"#,
        work.display()
    );
    let path = dir.join("pipeline.toml");
    std::fs::write(&path, config).unwrap();
    path
}

fn run_ok(config: &Path, args: &[&str]) -> String {
    let out = bin().arg("--config").arg(config).args(args).output().unwrap();
    assert!(
        out.status.success(),
        "{args:?} failed: {}\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn exit_code(config: &Path, args: &[&str]) -> i32 {
    bin()
        .arg("--config")
        .arg(config)
        .args(args)
        .output()
        .unwrap()
        .status
        .code()
        .unwrap()
}

#[test]
fn full_pipeline_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let work = dir.path().join("work");

    // data errors before artifacts exist
    assert_eq!(exit_code(&config, &["curate"]), 3);
    assert_eq!(exit_code(&config, &["train", "--stage", "1"]), 3);
    assert_eq!(exit_code(&config, &["report"]), 3);

    run_ok(&config, &["build"]);
    let manifest = work.join("manifest.ndjson");
    assert!(manifest.exists());
    assert_eq!(std::fs::read_to_string(&manifest).unwrap().lines().count(), 12);

    // train before curate: no split assignments yet
    assert_eq!(exit_code(&config, &["train", "--stage", "1"]), 3);
    // stage 2 before stage 1: missing prerequisite
    run_ok(&config, &["curate"]);
    assert_eq!(exit_code(&config, &["train", "--stage", "2"]), 3);

    run_ok(&config, &["train", "--stage", "1"]);
    assert!(work.join("checkpoints/stage1.ckpt.json").exists());
    assert!(work.join("reports/loss_stage1.csv").exists());

    run_ok(&config, &["eval", "--stage", "1"]);
    assert!(work.join("reports/eval_stage1.csv").exists());
    assert!(work.join("reports/aggregate_stage1.json").exists());
    assert!(work.join("reports/ssim_hist_stage1.csv").exists());
    assert!(work.join("reports/clusters_stage1.csv").exists());

    // threshold -1 keeps every pair but still exercises the scoring path
    run_ok(&config, &["train", "--stage", "2"]);
    assert!(work.join("checkpoints/stage2.ckpt.json").exists());
    let manifest_text = std::fs::read_to_string(&manifest).unwrap();
    assert!(manifest_text.contains("ssim_score"), "train split must be scored");

    run_ok(&config, &["eval"]);
    assert!(work.join("reports/aggregate_stage2_ge-1.json").exists());

    let report = run_ok(&config, &["report"]);
    assert!(report.contains("stage 1 baseline"));
    assert!(report.contains("stage 2 filter SSIM >= -1"));
    assert!(work.join("reports/report.csv").exists());
    assert!(work.join("reports/report.txt").exists());

    // eval CSV row count equals the test-split size (12 -> 10/1/1)
    let eval_csv = std::fs::read_to_string(work.join("reports/eval_stage1.csv")).unwrap();
    assert_eq!(eval_csv.lines().count(), 2);
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.toml");
    assert_eq!(exit_code(&missing, &["build"]), 2);

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "work_dir = \"w\"\n[curate]\ntrain_fraction = 0.5\n").unwrap();
    assert_eq!(exit_code(&bad, &["build"]), 2);

    let unknown = dir.path().join("unknown.toml");
    std::fs::write(&unknown, "work_dir = \"w\"\nwat = true\n").unwrap();
    assert_eq!(exit_code(&unknown, &["build"]), 2);
}

#[test]
fn build_and_curate_are_deterministic() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let (config_a, config_b) = (write_config(dir_a.path()), write_config(dir_b.path()));
    for config in [&config_a, &config_b] {
        run_ok(config, &["build"]);
        run_ok(config, &["curate"]);
        run_ok(config, &["train", "--stage", "1"]);
    }
    for rel in ["manifest.ndjson", "reports/loss_stage1.csv", "tiles/pair_00003_rgb.tif"] {
        let a = std::fs::read(dir_a.path().join("work").join(rel)).unwrap();
        let b = std::fs::read(dir_b.path().join("work").join(rel)).unwrap();
        assert_eq!(a, b, "{rel} differs between identical runs");
    }
}

#[test]
fn sites_command_mines_cloud_grid() {
    let dir = tempfile::tempdir().unwrap();
    let work = dir.path().join("work");
    let grid = dir.path().join("clouds.csv");
    let mut rows = String::from("lat,lon,cloud_fraction\n");
    for i in 0..20 {
        let cloud = if i % 2 == 0 { 0.0 } else { 0.4 };
        rows.push_str(&format!("{},{},{cloud}\n", 10.0 + i as f64 * 0.1, 20.0));
    }
    std::fs::write(&grid, rows).unwrap();
    let config = dir.path().join("pipeline.toml");
    std::fs::write(
        &config,
        format!(
            "work_dir = \"{}\"\n[sites]\ncloud_grid = \"{}\"\nk = 3\n",
            work.display(),
            grid.display()
        ),
    )
    .unwrap();
    let out = run_ok(&config, &["sites"]);
    assert!(out.contains("10 zero-cloud cells"), "{out}");
    assert!(work.join("reports/sites.csv").exists());
    assert!(work.join("reports/sites.json").exists());
}
