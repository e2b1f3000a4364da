//! End-to-end tests of the `hyperstab` binary: exit codes, emitted files
//! and reproducibility of outputs.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hyperstab"))
}

fn scratch_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("hyperstab-cli-{tag}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).expect("create scratch dir");
    dir
}

fn write(path: &Path, text: &str) {
    fs::write(path, text).expect("write fixture");
}

fn counterflow_json(k: f64) -> String {
    hyperstab::presets::sine_counterflow(0.25, 1.0, k).to_json()
}

fn counterflow_weights_json() -> String {
    hyperstab::presets::sine_counterflow_weights(1.0, 1.5).to_json()
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).to_string()
}

#[test]
fn check_relaxed_accepts_and_strict_rejects() {
    let dir = scratch_dir("check");
    let system = dir.join("system.json");
    let weights = dir.join("weights.json");
    write(&system, &counterflow_json(0.75));
    write(&weights, &counterflow_weights_json());

    let out = bin()
        .args(["check", system.to_str().unwrap(), "--weights", weights.to_str().unwrap()])
        .args(["--mode", "relaxed"])
        .output()
        .expect("run check");
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let cert: serde_json::Value = serde_json::from_str(&stdout_of(&out)).expect("cert JSON");
    assert_eq!(cert["verdict"], "certified-relaxed");

    let out = bin()
        .args(["check", system.to_str().unwrap(), "--weights", weights.to_str().unwrap()])
        .args(["--mode", "strict"])
        .output()
        .expect("run check");
    assert_eq!(out.status.code(), Some(1));
    let cert: serde_json::Value = serde_json::from_str(&stdout_of(&out)).expect("cert JSON");
    assert_eq!(cert["verdict"], "rejected");
    let margin = cert["interior_margin"].as_f64().unwrap();
    assert!((margin + 0.107143).abs() < 1e-5, "margin {margin}");
}

#[test]
fn check_rejects_malformed_config_with_exit_2() {
    let dir = scratch_dir("badcfg");
    let system = dir.join("system.json");
    // boundary block without the required K matrix
    write(
        &system,
        r#"{
        "name": "broken", "n": 2, "m": 1, "L": 1.0,
        "lambda": ["1", "-1"],
        "source": {"B": ["0", "0"], "C_B": 0.0},
        "boundary": {"G": ["out[2]", "out[1]"]}
    }"#,
    );
    let weights = dir.join("weights.json");
    write(&weights, &counterflow_weights_json());
    let out = bin()
        .args(["check", system.to_str().unwrap(), "--weights", weights.to_str().unwrap()])
        .output()
        .expect("run check");
    assert_eq!(out.status.code(), Some(2));

    // missing weights flag is also an input error
    write(&system, &counterflow_json(0.75));
    let out = bin().args(["check", system.to_str().unwrap()]).output().expect("run check");
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn synth_is_reproducible_and_check_agrees() {
    let dir = scratch_dir("synth");
    let system = dir.join("system.json");
    write(&system, &hyperstab::presets::damped_exchange().to_json());

    let run = |out_name: &str| -> (i32, String, String) {
        let weights_path = dir.join(out_name);
        let output = bin()
            .args(["synth", system.to_str().unwrap()])
            .args(["--seed", "7", "--multistarts", "4", "--iterations", "8"])
            .args(["--grid", "128"])
            .args(["--out", weights_path.to_str().unwrap()])
            .env("HYPERSTAB_THREADS", "2")
            .output()
            .expect("run synth");
        (
            output.status.code().unwrap_or(-1),
            stdout_of(&output),
            fs::read_to_string(&weights_path).expect("weights written"),
        )
    };
    let (code_a, cert_a, weights_a) = run("wa.json");
    let (code_b, cert_b, weights_b) = run("wb.json");
    assert_eq!(code_a, 0);
    assert_eq!(code_a, code_b);
    assert_eq!(cert_a, cert_b, "certificate output must be byte-identical");
    assert_eq!(weights_a, weights_b, "weights must be byte-identical");

    // single-threaded run gives the same bytes
    let weights_c = dir.join("wc.json");
    let out = bin()
        .args(["synth", system.to_str().unwrap()])
        .args(["--seed", "7", "--multistarts", "4", "--iterations", "8"])
        .args(["--grid", "128"])
        .args(["--out", weights_c.to_str().unwrap()])
        .env("HYPERSTAB_THREADS", "1")
        .output()
        .expect("run synth");
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(fs::read_to_string(&weights_c).unwrap(), weights_a);

    // check on the synthesized weights agrees with the reported verdict
    let wa = dir.join("wa.json");
    let out = bin()
        .args(["check", system.to_str().unwrap(), "--weights", wa.to_str().unwrap()])
        .args(["--grid", "128"])
        .output()
        .expect("run check");
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn synth_reports_failure_with_exit_1() {
    let dir = scratch_dir("synthfail");
    let system = dir.join("system.json");
    // loop gain 4 across the boundary cannot be certified
    write(
        &system,
        r#"{
        "name": "hopeless", "n": 2, "m": 1, "L": 1.0,
        "lambda": ["1", "-1"],
        "source": {"B": ["0*u[1]", "0*u[1]"], "C_B": 0.0},
        "boundary": {"G": ["2*out[2]", "2*out[1]"], "K": [[0.0,2.0],[2.0,0.0]]}
    }"#,
    );
    let trace = dir.join("trace.csv");
    let out = bin()
        .args(["synth", system.to_str().unwrap()])
        .args(["--seed", "1", "--multistarts", "2", "--iterations", "4", "--grid", "64"])
        .args(["--trace", trace.to_str().unwrap()])
        .output()
        .expect("run synth");
    assert_eq!(out.status.code(), Some(1));
    let trace_text = fs::read_to_string(&trace).expect("trace written");
    assert!(trace_text.starts_with("iteration,objective\n"));
}

#[test]
fn simulate_traveling_wave_keeps_norm() {
    let dir = scratch_dir("sim");
    let system = dir.join("system.json");
    write(&system, &counterflow_json(0.0));
    let csv_path = dir.join("traj.csv");
    let out = bin()
        .args(["simulate", system.to_str().unwrap()])
        .args(["--initial", "0.3*cos(2*pi*x); 0.3*cos(2*pi*x)"])
        .args(["--t-end", "5", "--grid", "200"])
        .args(["--out", csv_path.to_str().unwrap()])
        .args(["--fit-window", "0,5"])
        .arg("--json")
        .output()
        .expect("run simulate");
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value = serde_json::from_str(&stdout_of(&out)).expect("summary");
    let rate = summary["fitted_rate"].as_f64().unwrap();
    assert!(rate.abs() <= 1e-6, "open-loop wave should not decay: rate {rate}");

    let csv = fs::read_to_string(&csv_path).unwrap();
    assert!(csv.starts_with("t,l2_norm,lyapunov_v,d1_l2,d2_abs\n"));
    assert!(csv.lines().count() > 400);
}

#[test]
fn simulate_emits_svg_and_snapshots() {
    let dir = scratch_dir("svg");
    let system = dir.join("system.json");
    write(&system, &hyperstab::presets::damped_exchange().to_json());
    let csv_path = dir.join("run.csv");
    let svg_path = dir.join("run.svg");
    let out = bin()
        .args(["simulate", system.to_str().unwrap()])
        .args(["--initial", "sin(pi*x); cos(pi*x)"])
        .args(["--t-end", "4", "--grid", "100"])
        .args(["--out", csv_path.to_str().unwrap()])
        .args(["--svg", svg_path.to_str().unwrap()])
        .args(["--snapshots", "0,2"])
        .output()
        .expect("run simulate");
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let svg = fs::read_to_string(&svg_path).unwrap();
    assert!(svg.starts_with("<svg"));
    assert!(dir.join("run_snap000.csv").exists());
    let snap = fs::read_to_string(dir.join("run_snap001.csv")).unwrap();
    assert!(snap.starts_with("x,u_1,u_2\n"));
}

#[test]
fn iss_damped_exchange_passes_and_counterflow_fails() {
    let dir = scratch_dir("iss");
    let system = dir.join("system.json");
    write(&system, &hyperstab::presets::damped_exchange().to_json());
    let weights = dir.join("weights.json");
    write(&weights, &hyperstab::presets::damped_exchange_weights().to_json());

    let out = bin()
        .args(["iss", system.to_str().unwrap(), "--weights", weights.to_str().unwrap()])
        .args(["--initial", "sin(pi*x); cos(pi*x)"])
        .args(["--d1", "0.1*sin(t); 0"])
        .args(["--d2", "0.05*sin(2*t); 0"])
        .args(["--t-end", "40", "--grid", "200"])
        .output()
        .expect("run iss");
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_str(&stdout_of(&out)).expect("report");
    assert!(report["max_ratio"].as_f64().unwrap() <= 1.05);
    assert_eq!(report["envelope_holds"], true);

    // the counterflow boundary matrix has a zero eigenvalue: no ISS gains
    let system2 = dir.join("counterflow.json");
    write(&system2, &counterflow_json(0.75));
    let weights2 = dir.join("weights2.json");
    write(&weights2, &counterflow_weights_json());
    let out = bin()
        .args(["iss", system2.to_str().unwrap(), "--weights", weights2.to_str().unwrap()])
        .args(["--initial", "sin(pi*x); cos(pi*x)"])
        .output()
        .expect("run iss");
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("positive definite") || stderr.contains("interior"),
        "stderr: {stderr}"
    );
}

#[test]
fn reproduce_example_emits_bundle() {
    let dir = scratch_dir("repro");
    let out = bin()
        .args(["reproduce-example", "--out", dir.to_str().unwrap()])
        .output()
        .expect("run reproduce-example");
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    for file in [
        "example5.json",
        "weights_affine.json",
        "certificate_relaxed.json",
        "certificate_strict.json",
        "traj_k000.csv",
        "traj_k050.csv",
        "traj_k075.csv",
        "overlay.svg",
        "summary.txt",
    ] {
        assert!(dir.join(file).exists(), "missing {file}");
    }
    let summary = stdout_of(&out);
    assert!(summary.contains("0.654653671"), "summary lacks the designed gain:\n{summary}");
    assert!(summary.contains("closed-loop decay: yes"));
    assert!(summary.contains("open-loop persistence: yes"));

    // the emitted system file round-trips through check
    let out = bin()
        .args([
            "check",
            dir.join("example5.json").to_str().unwrap(),
            "--weights",
            dir.join("weights_affine.json").to_str().unwrap(),
        ])
        .args(["--mode", "relaxed"])
        .output()
        .expect("run check on bundle");
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn sweep_writes_ordered_outputs() {
    let dir = scratch_dir("sweep");
    let system = dir.join("system.json");
    write(&system, &hyperstab::presets::damped_exchange().to_json());
    let out_dir = dir.join("runs");
    let out = bin()
        .args(["sweep", system.to_str().unwrap()])
        .args(["--initial", "sin(pi*x); cos(pi*x)"])
        .args(["--d2", "0.05*sin(2*t); 0"])
        .args(["--scales", "1,2,4"])
        .args(["--t-end", "10", "--grid", "100"])
        .args(["--out", out_dir.to_str().unwrap()])
        .env("HYPERSTAB_THREADS", "2")
        .output()
        .expect("run sweep");
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    for i in 0..3 {
        assert!(out_dir.join(format!("sweep_{i:02}.csv")).exists());
    }
    let stdout = stdout_of(&out);
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines[0], "scale,final_norm,max_norm");
    assert!(lines[1].starts_with("1,"));
    assert!(lines[2].starts_with("2,"));
    assert!(lines[3].starts_with("4,"));
}

#[test]
fn simulate_blow_up_exits_3() {
    let dir = scratch_dir("blowup");
    let system = dir.join("system.json");
    write(
        &system,
        r#"{
        "name": "amplify", "n": 2, "m": 1, "L": 1.0,
        "lambda": ["1", "-1"],
        "source": {"B": ["-60*u[1]", "-60*u[2]"], "C_B": 60.0},
        "boundary": {"G": ["4*out[2]", "4*out[1]"], "K": [[0.0,4.0],[4.0,0.0]]}
    }"#,
    );
    let out = bin()
        .args(["simulate", system.to_str().unwrap()])
        .args(["--initial", "sin(pi*x); sin(pi*x)"])
        .args(["--t-end", "200", "--grid", "64"])
        .args(["--out", dir.join("t.csv").to_str().unwrap()])
        .output()
        .expect("run simulate");
    assert_eq!(out.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("last finite time"), "stderr: {stderr}");
}

#[test]
fn estimated_lipschitz_constant_yields_heuristic_certificate() {
    let dir = scratch_dir("estimate");
    let system = dir.join("system.json");
    // same counterflow, but the Lipschitz constant must be sampled
    let text = counterflow_json(0.75).replace("\"C_B\": 0.25", "\"C_B\": \"estimate\"");
    let text = text.replace("\"C_g\": 0.25", "\"C_g\": \"estimate\"");
    write(&system, &text);
    let weights = dir.join("weights.json");
    write(&weights, &counterflow_weights_json());

    let out = bin()
        .args(["check", system.to_str().unwrap(), "--weights", weights.to_str().unwrap()])
        .args(["--mode", "relaxed", "--seed", "3"])
        .output()
        .expect("run check");
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let cert: serde_json::Value = serde_json::from_str(&stdout_of(&out)).expect("cert JSON");
    assert_eq!(cert["verdict"], "certified-relaxed");
    assert_eq!(cert["heuristic"], true);
    assert_eq!(cert["c_g"]["provenance"], "estimated");
    let est = cert["c_g"]["value"].as_f64().unwrap();
    assert!(est > 0.2 && est <= 0.25 + 1e-9, "estimate {est}");
}

#[test]
fn help_and_unknown_commands() {
    let out = bin().arg("--help").output().expect("run help");
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout_of(&out).contains("reproduce-example"));

    let out = bin().arg("frobnicate").output().expect("run unknown");
    assert_eq!(out.status.code(), Some(2));

    let out = bin().output().expect("run bare");
    assert_eq!(out.status.code(), Some(2));
}
