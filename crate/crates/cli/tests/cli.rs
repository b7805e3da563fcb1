//! End-to-end checks of the command-line surface: exit codes, file outputs
//! and reproducibility.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_daycorrect"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn assert_code(out: &Output, code: i32) {
    assert_eq!(
        out.status.code(),
        Some(code),
        "stdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn write_small_world(dir: &Path) -> String {
    let path = dir.join("world.json");
    fs::write(
        &path,
        r#"{
            "hours": 6, "regions": 4, "channels": 1, "horizon": 40,
            "base": {"profile": "sine", "offset": 8.0, "amplitude": 2.0},
            "drift_std": 0.3, "noise_std": 1.0, "drift_rho": 0.8,
            "seed": 11, "grid": [2, 2]
        }"#,
    )
    .unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn synth_run_pipeline_and_improvement_row() {
    let tmp = tempfile::tempdir().unwrap();
    let world = write_small_world(tmp.path());
    let stream = tmp.path().join("stream");
    let out = run(&[
        "synth",
        "--config",
        &world,
        "--out",
        stream.to_str().unwrap(),
        "--with-truth",
        "--no-timestamp",
    ]);
    assert_code(&out, 0);
    assert!(stream.join("manifest.json").is_file());
    assert!(stream.join("graph.txt").is_file());
    assert!(stream.join("truth/bias.csv").is_file());

    // Reconstruction identity across the reload boundary: for each entry of
    // day one, actual == pred + bias + noise, all read back from disk.
    let truth = |name: &str| -> Vec<f64> {
        fs::read_to_string(stream.join("truth").join(name))
            .unwrap()
            .lines()
            .skip(1)
            .filter(|l| l.starts_with("1,"))
            .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
            .collect()
    };
    let bias = truth("bias.csv");
    let noise = truth("noise.csv");
    let day1 = fs::read_to_string(stream.join("day_00001.csv")).unwrap();
    for (i, line) in day1.lines().skip(1).enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        let pred: f64 = fields[2].parse().unwrap();
        let actual: f64 = fields[3].parse().unwrap();
        assert_eq!(actual, pred + bias[i] + noise[i], "entry {i}");
    }

    // Uncorrected run: improvement over itself is zero.
    let results = tmp.path().join("ori");
    let out = run(&[
        "run",
        "--stream",
        stream.to_str().unwrap(),
        "--strategy",
        "ori",
        "--out",
        results.to_str().unwrap(),
        "--no-timestamp",
    ]);
    assert_code(&out, 0);
    let metrics: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(results.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["improve_mae_pct"], 0.0);
    assert_eq!(metrics["strategy"], "ori");

    // Full method with the grid graph: trace has one line per day and the
    // drifting world is improved on.
    let results = tmp.path().join("full");
    let out = run(&[
        "run",
        "--stream",
        stream.to_str().unwrap(),
        "--graph",
        stream.join("graph.txt").to_str().unwrap(),
        "--out",
        results.to_str().unwrap(),
        "--no-timestamp",
    ]);
    assert_code(&out, 0);
    let trace = fs::read_to_string(results.join("trace.ndjson")).unwrap();
    assert_eq!(trace.lines().count(), 40);
    let first: serde_json::Value = serde_json::from_str(trace.lines().next().unwrap()).unwrap();
    assert!(first["weights"].as_array().unwrap().len() == 4);
    let metrics: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(results.join("metrics.json")).unwrap()).unwrap();
    assert!(metrics["improve_mae_pct"].as_f64().unwrap() > 0.0);
}

#[test]
fn synth_is_reproducible_byte_for_byte() {
    let tmp = tempfile::tempdir().unwrap();
    let world = write_small_world(tmp.path());
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for dir in [&a, &b] {
        let out = run(&[
            "synth",
            "--config",
            &world,
            "--seed",
            "77",
            "--out",
            dir.to_str().unwrap(),
            "--no-timestamp",
        ]);
        assert_code(&out, 0);
    }
    for name in [
        "manifest.json",
        "day_00001.csv",
        "day_00040.csv",
        "graph.txt",
    ] {
        let left = fs::read(a.join(name)).unwrap();
        let right = fs::read(b.join(name)).unwrap();
        assert_eq!(left, right, "{name} differs");
    }
}

#[test]
fn regime_shift_flag_produces_the_step() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("world.json");
    fs::write(
        &path,
        r#"{"hours": 2, "regions": 1, "channels": 1, "horizon": 8, "seed": 5}"#,
    )
    .unwrap();
    let stream = tmp.path().join("stream");
    let out = run(&[
        "synth",
        "--config",
        path.to_str().unwrap(),
        "--shift-day",
        "5",
        "--shift-amount",
        "10",
        "--out",
        stream.to_str().unwrap(),
        "--no-timestamp",
    ]);
    assert_code(&out, 0);
    // Zero std world: actual - pred is 0 before day 5 and 10 from it on.
    let day = |i: u64| {
        let text = fs::read_to_string(stream.join(format!("day_{i:05}.csv"))).unwrap();
        let line = text.lines().nth(1).unwrap();
        let fields: Vec<&str> = line.split(',').collect();
        let pred: f64 = fields[2].parse().unwrap();
        let actual: f64 = fields[3].parse().unwrap();
        actual - pred
    };
    assert_eq!(day(4), 0.0);
    assert_eq!(day(5), 10.0);
    assert_eq!(day(8), 10.0);
}

#[test]
fn verify_passes_on_default_identity_worlds() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&[
        "verify",
        "--theorem",
        "t1",
        "--trials",
        "200",
        "--out",
        tmp.path().to_str().unwrap(),
        "--no-timestamp",
    ]);
    assert_code(&out, 0);
    let csv = fs::read_to_string(tmp.path().join("verify.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4); // header + 3 worlds
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",true")));
}

#[test]
fn verify_fails_with_exit_3_when_an_identity_breaks() {
    // On a driftless world the EMA identity's noise coefficient is far off
    // at high alpha; the checker must say so and exit 3.
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("world.json");
    fs::write(
        &path,
        r#"{"hours": 12, "regions": 2, "channels": 2, "horizon": 400,
            "drift_std": 0.0, "noise_std": 1.0, "seed": 13}"#,
    )
    .unwrap();
    let out = run(&[
        "verify",
        "--theorem",
        "t3",
        "--config",
        path.to_str().unwrap(),
        "--alpha",
        "0.9",
        "--trials",
        "60",
        "--out",
        tmp.path().to_str().unwrap(),
        "--no-timestamp",
    ]);
    assert_code(&out, 3);
    let csv = fs::read_to_string(tmp.path().join("verify.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().ends_with(",false"));
}

#[test]
fn sweep_alpha_emits_grid_plus_comparator_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let world = write_small_world(tmp.path());
    let out = run(&[
        "sweep-alpha",
        "--config",
        &world,
        "--trials",
        "5",
        "--out",
        tmp.path().to_str().unwrap(),
        "--no-timestamp",
    ]);
    assert_code(&out, 0);
    let csv = fs::read_to_string(tmp.path().join("sweep.csv")).unwrap();
    // Header + 21 grid rows (0..=0.95 plus 1.0) + the full-method row.
    assert_eq!(csv.lines().count(), 23);
    assert!(csv.lines().last().unwrap().starts_with("full,"));
    // Grid value 1.0 is routed to the uncorrected model.
    assert!(csv.lines().any(|l| l.starts_with("ori,1")));
}

#[test]
fn ablate_reports_three_strategies() {
    let tmp = tempfile::tempdir().unwrap();
    let world = write_small_world(tmp.path());
    let out = run(&[
        "ablate",
        "--config",
        &world,
        "--trials",
        "10",
        "--out",
        tmp.path().to_str().unwrap(),
        "--no-timestamp",
    ]);
    assert_code(&out, 0);
    let csv = fs::read_to_string(tmp.path().join("ablate.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("ori,"));
    assert!(lines[2].starts_with("full,"));
    assert!(lines[3].starts_with("no-smooth,"));
}

#[test]
fn real_data_flag_applies_the_demand_floor() {
    // Hand-written two-region stream: r0 has mean demand 1.5, r1 has 3.0.
    let tmp = tempfile::tempdir().unwrap();
    let stream = tmp.path().join("stream");
    fs::create_dir_all(&stream).unwrap();
    fs::write(
        stream.join("manifest.json"),
        r#"{"version": 1, "hours": 2, "channels": 1, "regions": ["r0", "r1"],
            "days": [{"index": 1, "file": "day_00001.csv"}]}"#,
    )
    .unwrap();
    fs::write(
        stream.join("day_00001.csv"),
        "hour,region,pred_0,actual_0\n0,r0,1.0,1.5\n0,r1,2.0,3.0\n1,r0,1.0,1.5\n1,r1,2.0,3.0\n",
    )
    .unwrap();
    let out_dir = tmp.path().join("out");
    let out = run(&[
        "run",
        "--stream",
        stream.to_str().unwrap(),
        "--strategy",
        "ori",
        "--real-data",
        "--out",
        out_dir.to_str().unwrap(),
        "--no-timestamp",
    ]);
    assert_code(&out, 0);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("r0"), "stderr: {stderr}");
    let metrics: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("metrics.json")).unwrap()).unwrap();
    // Only r1 survives: 2 hours x 1 region x 1 channel.
    assert_eq!(metrics["count"], 2);
    assert_eq!(metrics["mae"], 1.0);
}

#[test]
fn exit_codes_for_usage_and_data_errors() {
    let tmp = tempfile::tempdir().unwrap();
    // Unknown subcommand and missing required flags: usage, exit 1.
    assert_code(&run(&["frobnicate"]), 1);
    assert_code(&run(&["run", "--stream", "x"]), 1); // missing --out
    let out = run(&[
        "run",
        "--stream",
        "nowhere",
        "--strategy",
        "hedge",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_code(&out, 1);

    // Missing stream directory: data, exit 2.
    let out = run(&[
        "run",
        "--stream",
        tmp.path().join("missing").to_str().unwrap(),
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_code(&out, 2);

    // Help and version succeed.
    assert_code(&run(&["--help"]), 0);
    assert_code(&run(&["--version"]), 0);
}

#[test]
fn run_round_trips_saved_synthetic_data_exactly() {
    // The stream format carries 17 significant digits; reloading and
    // rerunning the uncorrected strategy must reproduce MAE bit for bit.
    let tmp = tempfile::tempdir().unwrap();
    let world = write_small_world(tmp.path());
    let stream = tmp.path().join("stream");
    assert_code(
        &run(&[
            "synth",
            "--config",
            &world,
            "--out",
            stream.to_str().unwrap(),
            "--no-timestamp",
        ]),
        0,
    );
    let out_a = tmp.path().join("a");
    let out_b = tmp.path().join("b");
    for out_dir in [&out_a, &out_b] {
        assert_code(
            &run(&[
                "run",
                "--stream",
                stream.to_str().unwrap(),
                "--strategy",
                "prev-day",
                "--out",
                out_dir.to_str().unwrap(),
                "--no-timestamp",
            ]),
            0,
        );
    }
    let a = fs::read(out_a.join("metrics.json")).unwrap();
    let b = fs::read(out_b.join("metrics.json")).unwrap();
    assert_eq!(a, b);
}
