//! CLI acceptance: payloads are byte-identical across thread counts and
//! across repeated runs (timestamps and wall times excluded), and the
//! envelope's config echo reproduces the run.

use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sketchlsr"))
}

fn criterion(name: &str, pass: bool, details: String) {
    let tag = if pass { "PASS" } else { "FAIL" };
    println!("[{tag}] {name}: {details}");
    assert!(pass, "{name}: {details}");
}

/// Removes wall-clock fields so the remaining document must be bit-stable.
fn strip_timings(v: &mut Value) {
    match v {
        Value::Object(map) => {
            map.remove("timings");
            map.remove("started_at");
            map.remove("finished_at");
            map.remove("mean_wall_time_ms");
            for (_, val) in map.iter_mut() {
                strip_timings(val);
            }
        }
        Value::Array(arr) => arr.iter_mut().for_each(strip_timings),
        _ => {}
    }
}

fn canonical(output: &[u8]) -> String {
    let mut v: Value = serde_json::from_slice(output).expect("valid JSON envelope");
    strip_timings(&mut v);
    serde_json::to_string(&v).unwrap()
}

fn write_problem(dir: &Path) -> (PathBuf, PathBuf) {
    let mut rng = sketchlsr::SeededRng::new(77, 0).to_rng();
    use rand::Rng;
    let x = sketchlsr::DenseMatrix::from_fn(60, 3, |_, _| {
        rng.sample::<f64, _>(rand_distr::StandardNormal)
    });
    let y: Vec<f64> = (0..60)
        .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
        .collect();
    let x_path = dir.join("x.mtx");
    let y_path = dir.join("y.csv");
    sketchlsr::io::write_matrix_market_array(&x_path, &x).unwrap();
    sketchlsr::io::write_vector_csv(&y_path, &y).unwrap();
    (x_path, y_path)
}

#[test]
fn solve_payload_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let (x, y) = write_problem(dir.path());
    let mut outputs = Vec::new();
    for threads in ["1", "8", "1"] {
        let out = bin()
            .args(["solve", "--x"])
            .arg(&x)
            .arg("--y")
            .arg(&y)
            .args([
                "--method", "srht", "--c", "24", "--seed", "42", "--stream", "3", "--threads",
                threads,
            ])
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        outputs.push(canonical(&out.stdout));
    }
    criterion(
        "solve payload identical across thread counts",
        outputs[0] == outputs[1] && outputs[0] == outputs[2],
        format!("3 runs (threads 1/8/1), {} canonical bytes each", outputs[0].len()),
    );
}

#[test]
fn experiment_payload_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let config = serde_json::json!({
        "problem": {
            "n": 256, "d": 4,
            "coherence_profile": { "profile": "incoherent" },
            "kappa_target": 10.0, "gamma_target": 0.9, "seed": 5
        },
        "sampler": { "kind": "uniform" },
        "c_grid": [64, 128],
        "trials": 50,
        "eps": 0.5,
        "success_threshold": 1.5,
        "master_seed": 11
    });
    let cfg_path = dir.path().join("config.json");
    std::fs::write(&cfg_path, serde_json::to_string_pretty(&config).unwrap()).unwrap();

    let mut outputs = Vec::new();
    for threads in ["1", "8"] {
        let out = bin()
            .args(["experiment", "--config"])
            .arg(&cfg_path)
            .args(["--threads", threads])
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        outputs.push(canonical(&out.stdout));
    }
    criterion(
        "experiment payload identical across thread counts",
        outputs[0] == outputs[1],
        format!("threads 1 vs 8, {} canonical bytes", outputs[0].len()),
    );
}

#[test]
fn config_echo_reproduces_experiment() {
    let dir = tempfile::tempdir().unwrap();
    let config = serde_json::json!({
        "problem": {
            "n": 128, "d": 3,
            "coherence_profile": { "profile": "spiked", "k": 1 },
            "kappa_target": 5.0, "gamma_target": 0.8, "seed": 21
        },
        "sampler": { "kind": "sparse" },
        "c_grid": [16],
        "trials": 25,
        "eps": 0.5,
        "success_threshold": 1.5,
        "master_seed": 99
    });
    let cfg_path = dir.path().join("config.json");
    std::fs::write(&cfg_path, serde_json::to_string(&config).unwrap()).unwrap();
    let first = bin()
        .args(["experiment", "--config"])
        .arg(&cfg_path)
        .output()
        .unwrap();
    assert!(first.status.success());

    let envelope: Value = serde_json::from_slice(&first.stdout).unwrap();
    let echo_path = dir.path().join("echo.json");
    std::fs::write(&echo_path, serde_json::to_string(&envelope["config_echo"]).unwrap()).unwrap();
    let second = bin()
        .args(["experiment", "--config"])
        .arg(&echo_path)
        .output()
        .unwrap();
    assert!(second.status.success());
    criterion(
        "config echo reproduces the experiment",
        canonical(&first.stdout) == canonical(&second.stdout),
        "payload identical after round-tripping config_echo".into(),
    );
}
