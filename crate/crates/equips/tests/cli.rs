//! End-to-end smoke tests of the `equips` binary: subcommand chaining,
//! output formats, and the 0/2/3/4 exit-code contract.

use std::path::Path;
use std::process::{Command, Output};

use equips::grid::{GridShape, PhaseGrid};
use equips::io::{synthetic_stack, write_phase_npy, PhantomGeometry, PhantomSpec};

fn equips(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_equips"))
        .args(args)
        .env_remove("EQUIPS_THREADS")
        .output()
        .expect("binary runs")
}

fn assert_exit(out: &Output, code: i32) {
    assert_eq!(
        out.status.code(),
        Some(code),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn stdout_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

/// Writes a small noisy sphere stack as one NPY file per sample and returns
/// the file paths.
fn write_stack(dir: &Path, n: usize) -> Vec<String> {
    let shape = GridShape::new(12, 12, 12).unwrap();
    let spec = PhantomSpec {
        geometry: PhantomGeometry::Sphere { center: [6.0; 3], radius: 4.0 },
        blur_width: 1.0,
        flip_noise: 0.2,
        seed: 9,
    };
    let (stack, _) = synthetic_stack(&spec, n, shape).unwrap();
    stack
        .samples()
        .iter()
        .enumerate()
        .map(|(i, sample)| {
            let seg = PhaseGrid::new(shape, sample.clone()).unwrap();
            let path = dir.join(format!("sample_{i}.npy"));
            write_phase_npy(&path, &seg).unwrap();
            path.to_string_lossy().into_owned()
        })
        .collect()
}

#[test]
fn subcommand_chain_probmap_umap_threshold_simulate_mesh_info() {
    let dir = tempfile::tempdir().unwrap();
    let samples = write_stack(dir.path(), 6);
    let pmap = dir.path().join("pmap.npy");
    let pmap_s = pmap.to_string_lossy().into_owned();

    let mut args = vec!["probmap", "--stack"];
    args.extend(samples.iter().map(String::as_str));
    args.extend(["--out", &pmap_s]);
    assert_exit(&equips(&args), 0);
    assert!(pmap.exists());

    let umap = dir.path().join("umap.npy").to_string_lossy().into_owned();
    assert_exit(&equips(&["umap", "--pmap", &pmap_s, "--out", &umap]), 0);

    let seg = dir.path().join("seg.npy").to_string_lossy().into_owned();
    assert_exit(
        &equips(&["threshold", "--pmap", &pmap_s, "--percentile", "50", "--out", &seg]),
        0,
    );

    let sim = equips(&["simulate", "--seg", &seg, "--physics", "volume_fraction"]);
    assert_exit(&sim, 0);
    let report = stdout_json(&sim);
    let vf = report["porosity"].as_f64().unwrap();
    assert!(vf > 0.0 && vf < 1.0, "volume fraction {vf}");

    let stl = dir.path().join("surface.stl");
    let stl_s = stl.to_string_lossy().into_owned();
    let mesh = equips(&["mesh", "--pmap", &pmap_s, "--out", &stl_s]);
    assert_exit(&mesh, 0);
    let bytes = std::fs::metadata(&stl).unwrap().len();
    assert!(bytes >= 84 && (bytes - 84) % 50 == 0, "STL layout: {bytes} bytes");

    for file in [&pmap_s, &stl_s] {
        let info = equips(&["info", file]);
        assert_exit(&info, 0);
        assert!(stdout_json(&info)["format"].is_string());
    }
}

#[test]
fn fit_and_check_read_both_csv_schemas() {
    let dir = tempfile::tempdir().unwrap();
    let scalar = dir.path().join("scalar.csv");
    std::fs::write(&scalar, "percentile,quantity\n15.9,0.8\n50.0,1.0\n84.1,1.2\n").unwrap();
    let fit = equips(&["fit", "--csv", &scalar.to_string_lossy()]);
    assert_exit(&fit, 0);
    let report = stdout_json(&fit);
    assert!(report["distribution"].is_object());
    assert!(report["within_tolerance"].as_bool().unwrap());

    let series = dir.path().join("series.csv");
    let mut text = String::from("percentile,time,value\n");
    for (q, v) in [(15.9, 1.0), (50.0, 1.5), (84.1, 2.0)] {
        for t in 0..3 {
            text.push_str(&format!("{q},{t},{v}\n"));
        }
    }
    std::fs::write(&series, text).unwrap();
    let check = equips(&["check", "--csv", &series.to_string_lossy()]);
    assert_exit(&check, 0);
    let report = stdout_json(&check);
    assert!(report["sigma_violations"].as_array().unwrap().is_empty());
}

#[test]
fn sweep_honors_flag_overrides_and_threads_env() {
    let dir = tempfile::tempdir().unwrap();
    let out_a = dir.path().join("a");
    let config = dir.path().join("run.toml");
    std::fs::write(
        &config,
        format!(
            r#"
class_label = "sphere"
seed = 5

[input.phantom]
kind = "sphere"
center = [8.0, 8.0, 8.0]
radius = 5.0
shape = [16, 16, 16]
n_samples = 16
blur_width = 1.5
flip_noise = 0.2

[physics]
kind = "volume_fraction"

[output]
dir = "{}"
"#,
            out_a.display()
        ),
    )
    .unwrap();

    let out_b = dir.path().join("b");
    let sweep = Command::new(env!("CARGO_BIN_EXE_equips"))
        .args([
            "sweep",
            "--config",
            &config.to_string_lossy(),
            "--out",
            &out_b.to_string_lossy(),
            "--percentiles",
            "15.9,50,84.1,90",
            "--seed",
            "3",
        ])
        .env("EQUIPS_THREADS", "2")
        .output()
        .unwrap();
    assert_exit(&sweep, 0);
    let report = stdout_json(&sweep);
    assert_eq!(report["threads"].as_u64(), Some(2), "env var thread count");
    assert_eq!(report["percentiles"].as_array().unwrap().len(), 4, "percentile override");
    assert!(out_b.join("manifest.json").exists(), "output dir override");
    assert!(!out_a.exists(), "config output dir must not be used when overridden");
}

#[test]
fn validation_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let samples = write_stack(dir.path(), 2);
    let pmap = dir.path().join("pmap.npy").to_string_lossy().into_owned();
    let mut args = vec!["probmap", "--stack"];
    args.extend(samples.iter().map(String::as_str));
    args.extend(["--out", &pmap]);
    assert_exit(&equips(&args), 0);

    let out = dir.path().join("seg.npy").to_string_lossy().into_owned();
    let bad =
        equips(&["threshold", "--pmap", &pmap, "--percentile", "150", "--out", &out]);
    assert_exit(&bad, 2);
}

#[test]
fn missing_input_files_exit_4() {
    let bad = equips(&["umap", "--pmap", "/nonexistent/pmap.npy", "--out", "/tmp/u.npy"]);
    assert_exit(&bad, 4);
}

#[test]
fn solver_non_convergence_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let samples = write_stack(dir.path(), 1);
    let out = equips(&[
        "simulate",
        "--seg",
        &samples[0],
        "--physics",
        "conductivity",
        "--axis",
        "z",
        "--tol",
        "1e-14",
        "--max-iter",
        "2",
    ]);
    assert_exit(&out, 3);
}
