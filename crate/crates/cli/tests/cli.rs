//! End-to-end tests of the `voxsurf` binary: flags, exit codes, artifacts.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nalgebra::Vector3;
use voxsurf::io::{read_cloud, write_cloud, CloudFormat, PointCloud};
use voxsurf::metrics;

fn binary() -> &'static str {
    env!("CARGO_BIN_EXE_voxsurf")
}

fn run(args: &[&str]) -> Output {
    Command::new(binary())
        .args(args)
        .output()
        .expect("binary should launch")
}

fn assert_success(out: &Output) {
    assert!(
        out.status.success(),
        "command failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("no exit code")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn parse_metrics_csv(path: &Path) -> Vec<(String, String, f64)> {
    let text = std::fs::read_to_string(path).unwrap();
    text.lines()
        .skip(1)
        .map(|line| {
            let cols: Vec<&str> = line.split(',').collect();
            (cols[0].to_string(), cols[1].to_string(), cols[2].parse().unwrap())
        })
        .collect()
}

fn metric(rows: &[(String, String, f64)], metric: &str, direction: &str) -> f64 {
    rows.iter()
        .find(|(m, d, _)| m == metric && d == direction)
        .map(|(_, _, v)| *v)
        .unwrap_or_else(|| panic!("metric {metric}/{direction} missing"))
}

fn synth_small(dir: &Path, seed: u64) -> (PathBuf, PathBuf) {
    let out = run(&[
        "synth",
        "--out-dir",
        path_str(dir),
        "--seed",
        &seed.to_string(),
        "--layers",
        "32",
        "--steps",
        "300",
        "--range-max",
        "12",
        "--noise-sigma",
        "0.01",
        "--gt-layers",
        "128",
    ]);
    assert_success(&out);
    (dir.join("scan.ply"), dir.join("ground_truth.ply"))
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(exit_code(&run(&["--help"])), 0);
    assert_eq!(exit_code(&run(&["--version"])), 0);
    assert_eq!(exit_code(&run(&["synth", "--help"])), 0);
}

#[test]
fn unknown_flag_exits_one() {
    assert_eq!(exit_code(&run(&["reconstruct", "--bogus"])), 1);
    assert_eq!(exit_code(&run(&["frobnicate"])), 1);
}

#[test]
fn missing_input_file_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "reconstruct",
        "--input",
        "/nonexistent/cloud.ply",
        "--out",
        path_str(&dir.path().join("mesh.ply")),
    ]);
    assert_eq!(exit_code(&out), 2);
}

#[test]
fn malformed_cloud_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.ply");
    std::fs::write(&bad, b"not a ply file\n").unwrap();
    let out = run(&[
        "reconstruct",
        "--input",
        path_str(&bad),
        "--out",
        path_str(&dir.path().join("mesh.ply")),
    ]);
    assert_eq!(exit_code(&out), 1);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("parse error"), "stderr: {stderr}");
}

#[test]
fn bad_mode_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let (scan, _) = synth_small(dir.path(), 0);
    let out = run(&[
        "reconstruct",
        "--input",
        path_str(&scan),
        "--out",
        path_str(&dir.path().join("mesh.ply")),
        "--mode",
        "bogus",
    ]);
    assert_eq!(exit_code(&out), 1);
}

#[test]
fn synth_produces_scan_ground_truth_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let (scan, gt) = synth_small(dir.path(), 1);
    let sparse = read_cloud(&scan, CloudFormat::Ply).unwrap();
    let dense = read_cloud(&gt, CloudFormat::Ply).unwrap();
    assert!(!sparse.is_empty());
    assert!(dense.len() >= sparse.len(), "ground truth must be denser");

    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("synth.manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["command"], "synth");
    assert_eq!(manifest["outputs"].as_array().unwrap().len(), 2);
    assert_eq!(manifest["config"]["seed"], 1);
}

#[test]
fn synth_is_byte_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let (scan_a, gt_a) = synth_small(&dir.path().join("a"), 9);
    let (scan_b, gt_b) = synth_small(&dir.path().join("b"), 9);
    assert_eq!(std::fs::read(&scan_a).unwrap(), std::fs::read(&scan_b).unwrap());
    assert_eq!(std::fs::read(&gt_a).unwrap(), std::fs::read(&gt_b).unwrap());

    let (scan_c, _) = synth_small(&dir.path().join("c"), 10);
    assert_ne!(std::fs::read(&scan_a).unwrap(), std::fs::read(&scan_c).unwrap());
}

#[test]
fn sphere_scene_ground_truth_lies_on_sphere() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("scene.toml");
    std::fs::write(&scene, "[[sphere]]\ncenter = [0.0, 0.0, -5.0]\nradius = 2.0\n").unwrap();
    let out = run(&[
        "synth",
        "--out-dir",
        path_str(dir.path()),
        "--scene",
        path_str(&scene),
        "--sensor",
        "0,0,0",
        "--vfov",
        "-80,-30",
        "--layers",
        "16",
        "--steps",
        "120",
    ]);
    assert_success(&out);
    let gt = read_cloud(&dir.path().join("ground_truth.ply"), CloudFormat::Ply).unwrap();
    assert!(!gt.is_empty());
    let center = Vector3::new(0.0, 0.0, -5.0);
    for p in &gt.points {
        // float32 storage rounds the analytic hit
        assert!(((p - center).norm() - 2.0).abs() < 1e-5);
    }
}

#[test]
fn reconstruct_writes_mesh_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let (scan, _) = synth_small(dir.path(), 2);
    let mesh_path = dir.path().join("mesh.ply");
    let out = run(&[
        "reconstruct",
        "--input",
        path_str(&scan),
        "--out",
        path_str(&mesh_path),
        "--sensor",
        "0,0,1.8",
    ]);
    assert_success(&out);
    let mesh = read_cloud(&mesh_path, CloudFormat::Ply).unwrap();
    assert!(!mesh.is_empty(), "reconstruction produced an empty mesh");

    let manifest_path = dir.path().join("mesh.ply.manifest.json");
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&manifest_path).unwrap()).unwrap();
    assert_eq!(manifest["command"], "reconstruct");
    assert_eq!(manifest["config"]["reconstruction"]["alpha"], 0.2);
    assert_eq!(manifest["config"]["reconstruction"]["mode"], "an-gc");
    assert_eq!(manifest["inputs"][0]["path"], path_str(&scan));
    assert_eq!(manifest["inputs"][0]["sha256"].as_str().unwrap().len(), 64);
    assert!(manifest["timings_ms"]["tsdf_ms"].is_number());
}

#[test]
fn reconstruct_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (scan, _) = synth_small(dir.path(), 3);
    for name in ["m1.ply", "m2.ply"] {
        let out = run(&[
            "reconstruct",
            "--input",
            path_str(&scan),
            "--out",
            path_str(&dir.path().join(name)),
            "--sensor",
            "0,0,1.8",
        ]);
        assert_success(&out);
    }
    assert_eq!(
        std::fs::read(dir.path().join("m1.ply")).unwrap(),
        std::fs::read(dir.path().join("m2.ply")).unwrap()
    );
}

#[test]
fn config_file_supplies_flags_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let (scan, _) = synth_small(dir.path(), 4);
    let config = dir.path().join("run.toml");
    std::fs::write(
        &config,
        "alpha = 0.4\nkmax = 3\nmode = \"an\"\nsensor = [0.0, 0.0, 1.8]\n",
    )
    .unwrap();
    let out = run(&[
        "reconstruct",
        "--input",
        path_str(&scan),
        "--out",
        path_str(&dir.path().join("mesh.ply")),
        "--config",
        path_str(&config),
        "--alpha",
        "0.25",
    ]);
    assert_success(&out);
    let manifest: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("mesh.ply.manifest.json")).unwrap(),
    )
    .unwrap();
    // flag wins over file, file wins over default
    assert_eq!(manifest["config"]["reconstruction"]["alpha"], 0.25);
    assert_eq!(manifest["config"]["reconstruction"]["k_max"], 3);
    assert_eq!(manifest["config"]["reconstruction"]["mode"], "an");
    assert_eq!(manifest["config"]["sensor"][2], 1.8);

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "alpa = 0.4\n").unwrap();
    let out = run(&[
        "reconstruct",
        "--input",
        path_str(&scan),
        "--out",
        path_str(&dir.path().join("mesh2.ply")),
        "--config",
        path_str(&bad),
    ]);
    assert_eq!(exit_code(&out), 1);
}

#[test]
fn explicit_format_flag_overrides_extension_inference() {
    let dir = tempfile::tempdir().unwrap();
    // xyz content under an uninferrable extension
    let cloud = dir.path().join("scan.dat");
    let mut body = String::new();
    for i in 0..40 {
        for j in 0..40 {
            body.push_str(&format!("{} {} 0.0\n", i as f64 * 0.05, j as f64 * 0.05));
        }
    }
    std::fs::write(&cloud, body).unwrap();

    // without --format the extension cannot be inferred
    let out = run(&[
        "reconstruct",
        "--input",
        path_str(&cloud),
        "--out",
        path_str(&dir.path().join("mesh.ply")),
        "--sensor",
        "1,1,2",
    ]);
    assert_eq!(exit_code(&out), 1);

    let mesh_path = dir.path().join("mesh.ply");
    let out = run(&[
        "reconstruct",
        "--input",
        path_str(&cloud),
        "--out",
        path_str(&mesh_path),
        "--sensor",
        "1,1,2",
        "--format",
        "xyz",
    ]);
    assert_success(&out);
    assert!(!read_cloud(&mesh_path, CloudFormat::Ply).unwrap().is_empty());
}

#[test]
fn eval_of_identical_sets_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cloud = PointCloud::new(
        vec![
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(1.0, 2.0, 3.0),
            Vector3::new(-2.0, 1.0, 0.5),
        ],
        Vector3::zeros(),
    );
    let path = dir.path().join("set.ply");
    write_cloud(&cloud, &path).unwrap();
    let prefix = dir.path().join("self");
    let out = run(&[
        "eval",
        "--pred",
        path_str(&path),
        "--gt",
        path_str(&path),
        "--out-prefix",
        path_str(&prefix),
    ]);
    assert_success(&out);
    let rows = parse_metrics_csv(&dir.path().join("self.metrics.csv"));
    for (m, d, v) in &rows {
        assert_eq!(*v, 0.0, "{m}/{d} should be zero");
    }
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("ae  sym"));
    assert!(stdout.contains("hd  sym"));
}

#[test]
fn eval_two_point_fixture_matches_hand_computation() {
    let dir = tempfile::tempdir().unwrap();
    let pred_path = dir.path().join("pred.ply");
    // ground truth as xyz text to exercise the second reader through the CLI
    let gt_path = dir.path().join("gt.xyz");
    write_cloud(
        &PointCloud::new(vec![Vector3::zeros()], Vector3::zeros()),
        &pred_path,
    )
    .unwrap();
    std::fs::write(&gt_path, "1 0 0\n5 0 0\n").unwrap();
    let prefix = dir.path().join("two");
    assert_success(&run(&[
        "eval",
        "--pred",
        path_str(&pred_path),
        "--gt",
        path_str(&gt_path),
        "--out-prefix",
        path_str(&prefix),
    ]));
    let rows = parse_metrics_csv(&dir.path().join("two.metrics.csv"));
    assert_eq!(metric(&rows, "ae", "p_to_gt"), 1.0);
    assert_eq!(metric(&rows, "hd", "p_to_gt"), 1.0);
    assert_eq!(metric(&rows, "ae", "gt_to_p"), 3.0); // (1 + 5) / 2
    assert_eq!(metric(&rows, "hd", "gt_to_p"), 5.0);
    assert_eq!(metric(&rows, "ae", "sym"), 2.0);
    assert_eq!(metric(&rows, "hd", "sym"), 3.0);
}

#[test]
fn eval_csv_round_trips_the_in_memory_report() {
    let dir = tempfile::tempdir().unwrap();
    let (scan, gt) = synth_small(dir.path(), 5);
    let mesh_path = dir.path().join("mesh.ply");
    assert_success(&run(&[
        "reconstruct",
        "--input",
        path_str(&scan),
        "--out",
        path_str(&mesh_path),
        "--sensor",
        "0,0,1.8",
    ]));
    let prefix = dir.path().join("eval");
    assert_success(&run(&[
        "eval",
        "--pred",
        path_str(&mesh_path),
        "--gt",
        path_str(&gt),
        "--sensor",
        "0,0,1.8",
        "--out-prefix",
        path_str(&prefix),
    ]));

    // recompute in-process and compare against the CSV exactly
    let pred = read_cloud(&mesh_path, CloudFormat::Ply).unwrap();
    let gt_cloud = read_cloud(&gt, CloudFormat::Ply).unwrap();
    let report = metrics::evaluate(
        &pred.points,
        &gt_cloud.points,
        &Vector3::new(0.0, 0.0, 1.8),
        1.0,
        &metrics::default_delta_thresholds(),
    )
    .unwrap();

    let rows = parse_metrics_csv(&dir.path().join("eval.metrics.csv"));
    assert_eq!(metric(&rows, "ae", "p_to_gt"), report.ae_p_to_gt);
    assert_eq!(metric(&rows, "ae", "gt_to_p"), report.ae_gt_to_p);
    assert_eq!(metric(&rows, "hd", "sym"), report.hd_sym);

    let delta_text = std::fs::read_to_string(dir.path().join("eval.delta.csv")).unwrap();
    let delta_rows: Vec<(f64, f64)> = delta_text
        .lines()
        .skip(1)
        .map(|l| {
            let mut cols = l.split(',');
            (
                cols.next().unwrap().parse().unwrap(),
                cols.next().unwrap().parse().unwrap(),
            )
        })
        .collect();
    assert_eq!(delta_rows.len(), report.delta_curve.len());
    for ((t_csv, f_csv), (t, f)) in delta_rows.iter().zip(report.delta_curve.iter()) {
        assert_eq!(t_csv, t);
        assert_eq!(f_csv, f);
    }
}

#[test]
fn constant_level_one_is_noisier_than_gated_adaptive_on_plane_scan() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("plane.toml");
    std::fs::write(&scene, "[[plane]]\nz = 0.0\n").unwrap();
    let out = run(&[
        "synth",
        "--out-dir",
        path_str(dir.path()),
        "--scene",
        path_str(&scene),
        "--seed",
        "11",
        "--layers",
        "32",
        "--steps",
        "400",
        "--range-max",
        "6",
        "--noise-sigma",
        "0.01",
        "--gt-layers",
        "96",
    ]);
    assert_success(&out);
    let scan = dir.path().join("scan.ply");
    let gt = dir.path().join("ground_truth.ply");

    let mut ae_sym = std::collections::HashMap::new();
    for (label, extra) in [
        ("an-gc", vec!["--mode", "an-gc"]),
        ("cn", vec!["--mode", "cn", "--fixed-k", "1"]),
    ] {
        let mesh = dir.path().join(format!("mesh_{label}.ply"));
        let mut args = vec![
            "reconstruct",
            "--input",
            path_str(&scan),
            "--out",
            path_str(&mesh),
            "--sensor",
            "0,0,1.8",
        ];
        args.extend(extra.iter());
        assert_success(&run(&args));

        let prefix = dir.path().join(format!("eval_{label}"));
        assert_success(&run(&[
            "eval",
            "--pred",
            path_str(&mesh),
            "--gt",
            path_str(&gt),
            "--sensor",
            "0,0,1.8",
            "--out-prefix",
            path_str(&prefix),
        ]));
        let rows = parse_metrics_csv(&dir.path().join(format!("eval_{label}.metrics.csv")));
        ae_sym.insert(label, metric(&rows, "ae", "sym"));
    }
    assert!(
        ae_sym["an-gc"] < ae_sym["cn"],
        "gated adaptive ({}) should beat constant level 1 ({})",
        ae_sym["an-gc"],
        ae_sym["cn"]
    );
}
