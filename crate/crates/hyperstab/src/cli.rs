//! Command-line front end.
//!
//! Subcommands: `check`, `synth`, `simulate`, `iss`, `reproduce-example`,
//! `sweep`. Exit codes are a total function of the inputs and seed:
//!
//! - `check`: 0 certified, 1 rejected, 2 input error
//! - `synth`: 0 weights found and written, 1 no certificate found, 2 input error
//! - `simulate`/`sweep`: 0 done, 3 blow-up, 2 input error
//! - `iss`: 0 certificate obtained and envelope holds, 1 otherwise, 2 input error
//!
//! Configuration comes from files and flags; there are no interactive
//! prompts. `HYPERSTAB_THREADS` caps parallel fan-out in `synth` and
//! `sweep`.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::certify::{
    certify, iss_gains, CertifyOptions, CgValue, InteriorMode, WeightSpec, DEFAULT_CERT_CELLS,
};
use crate::expr::{Expression, VariableContext};
use crate::model::{
    estimate_lipschitz_residual, validate_spec, Grid, LipschitzConstant, SamplingOptions,
    SystemSpec,
};
use crate::plot::{line_plot, Series};
use crate::presets;
use crate::sim::{
    check_iss_bound, fit_decay_rate, simulate, write_snapshot_csv, DisturbanceSpec, SimError,
    SimOptions,
};
use crate::synth::{synthesize, SynthBudget};

const USAGE: &str = "\
hyperstab - stability and ISS certificates for 1-D semilinear hyperbolic systems

USAGE:
    hyperstab <COMMAND> [ARGS] [FLAGS]

COMMANDS:
    check <system.json> --weights <weights.json>
        Evaluate the certificate conditions. Exit 0 when certified under
        the selected --mode, 1 when rejected.

    synth <system.json>
        Search affine and exponential weight families for a certificate.
        Writes the weights JSON (--out, default weights.json) on success.
        Flags: --multistarts N (16), --iterations N (30), --trace <csv>

    simulate <system.json> --initial \"<e1>; <e2>; ...\"
        Upwind simulation. Writes the trajectory CSV (--out or stdout) and
        prints a summary with the fitted decay rate. Flags: --t-end T (30),
        --cfl C, --d1 \"...\", --d2 \"...\", --weights <json>, --svg <file>,
        --snapshots \"t1,t2\", --fit-window \"a,b\"

    iss <system.json> --weights <weights.json> --initial \"...\"
        Compute ISS gains, run the disturbed simulation and check the
        certified envelope. Flags: --d1, --d2, --t-end, --out <report.json>

    reproduce-example [--out <dir>]
        Build the bundled counterflow example end to end: system file,
        weights, certificates, three trajectories (k = 0, 1/2, 3/4), an
        overlay SVG and a summary table.

    sweep <system.json> --initial \"...\" --scales \"1,2,4\"
        Re-run a disturbed simulation with scaled disturbances in parallel.
        Writes one CSV per scale under --out (default sweep-out).

GLOBAL FLAGS:
    --grid N        grid cells (default: 512 certification, 200 simulation)
    --seed S        sampling / search seed (default 0)
    --mode M        strict | relaxed  (default strict)
    --out PATH      output file or directory (command-specific)
    --json          machine-readable summary on stdout
";

struct Args {
    positional: Vec<String>,
    values: HashMap<String, String>,
    json: bool,
}

fn parse_args(raw: &[String]) -> Result<Args, String> {
    let mut positional = Vec::new();
    let mut values = HashMap::new();
    let mut json = false;
    let mut it = raw.iter().peekable();
    while let Some(arg) = it.next() {
        if arg == "--json" {
            json = true;
        } else if let Some(name) = arg.strip_prefix("--") {
            let value = it
                .next()
                .ok_or_else(|| format!("flag --{name} expects a value"))?
                .clone();
            values.insert(name.to_string(), value);
        } else {
            positional.push(arg.clone());
        }
    }
    Ok(Args { positional, values, json })
}

impl Args {
    fn value(&self, name: &str) -> Option<&str> {
        self.values.get(name).map(|s| s.as_str())
    }

    fn parse_value<T: std::str::FromStr>(&self, name: &str, default: T) -> Result<T, String> {
        match self.value(name) {
            None => Ok(default),
            Some(s) => s.parse().map_err(|_| format!("invalid value for --{name}: '{s}'")),
        }
    }

    fn mode(&self) -> Result<InteriorMode, String> {
        match self.value("mode").unwrap_or("strict") {
            "strict" => Ok(InteriorMode::Strict),
            "relaxed" => Ok(InteriorMode::RelaxedLocal),
            other => Err(format!("invalid --mode '{other}' (expected strict or relaxed)")),
        }
    }

    fn unknown_flags(&self, allowed: &[&str]) -> Option<String> {
        self.values.keys().find(|k| !allowed.contains(&k.as_str())).cloned()
    }
}

fn fail(msg: impl fmt::Display) -> i32 {
    eprintln!("error: {msg}");
    2
}

use std::fmt;

/// Entry point: returns the process exit code.
pub fn run(raw_args: &[String]) -> i32 {
    if raw_args.is_empty()
        || raw_args[0] == "-h"
        || raw_args[0] == "--help"
        || raw_args[0] == "help"
    {
        print!("{USAGE}");
        return if raw_args.is_empty() { 2 } else { 0 };
    }
    let command = raw_args[0].as_str();
    let args = match parse_args(&raw_args[1..]) {
        Ok(a) => a,
        Err(msg) => return fail(msg),
    };
    match command {
        "check" => cmd_check(&args),
        "synth" => cmd_synth(&args),
        "simulate" => cmd_simulate(&args),
        "iss" => cmd_iss(&args),
        "reproduce-example" => cmd_reproduce_example(&args),
        "sweep" => cmd_sweep(&args),
        other => fail(format!("unknown command '{other}'; run with --help for usage")),
    }
}

fn load_system(args: &Args) -> Result<SystemSpec, String> {
    let path = args
        .positional
        .first()
        .ok_or_else(|| "missing system JSON path".to_string())?;
    let text = fs::read_to_string(path).map_err(|e| format!("cannot read {path}: {e}"))?;
    let spec = SystemSpec::from_json(&text).map_err(|e| format!("{path}: {e}"))?;
    let report = validate_spec(&spec);
    if !report.pass() {
        return Err(format!("{path}: structural validation failed\n{report}"));
    }
    Ok(spec)
}

fn load_weights(args: &Args, spec: &SystemSpec) -> Result<WeightSpec, String> {
    let path = args
        .value("weights")
        .ok_or_else(|| "missing --weights <weights.json>".to_string())?;
    let text = fs::read_to_string(path).map_err(|e| format!("cannot read {path}: {e}"))?;
    let weights = WeightSpec::from_json(&text).map_err(|e| format!("{path}: {e}"))?;
    if weights.j2.len() != spec.n {
        return Err(format!(
            "{path}: weights have {} components but the system has {}",
            weights.j2.len(),
            spec.n
        ));
    }
    Ok(weights)
}

/// Resolve the residual Lipschitz constant, estimating it when requested.
fn resolve_c_g(spec: &SystemSpec, seed: u64) -> Result<CgValue, String> {
    match spec.source.c_g {
        LipschitzConstant::Known(v) => Ok(CgValue::certified(v)),
        LipschitzConstant::Estimate => {
            let grid = Grid::new(128, spec.l).map_err(|e| e.to_string())?;
            let opts = SamplingOptions { seed, ..Default::default() };
            let est =
                estimate_lipschitz_residual(spec, &grid, &opts).map_err(|e| e.to_string())?;
            Ok(CgValue::estimated(est))
        }
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), String> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| format!("cannot create {parent:?}: {e}"))?;
        }
    }
    fs::write(path, contents).map_err(|e| format!("cannot write {path:?}: {e}"))
}

fn parse_expr_list(raw: &str, ctx: &VariableContext) -> Result<Vec<Expression>, String> {
    raw.split(';')
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| Expression::parse(s, ctx).map_err(|e| format!("in '{s}': {e}")))
        .collect()
}

fn parse_f64_list(raw: &str) -> Result<Vec<f64>, String> {
    raw.split(',')
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|_| format!("invalid number '{s}'")))
        .collect()
}

fn disturbances_from_args(args: &Args, n: usize) -> Result<DisturbanceSpec, String> {
    let split = |raw: Option<&str>| -> Vec<String> {
        raw.map(|r| {
            r.split(';').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()
        })
        .unwrap_or_default()
    };
    DisturbanceSpec::parse(&split(args.value("d1")), &split(args.value("d2")), n)
        .map_err(|e| e.to_string())
}

// ---------------------------------------------------------------------------
// check
// ---------------------------------------------------------------------------

fn cmd_check(args: &Args) -> i32 {
    if let Some(flag) = args.unknown_flags(&["weights", "mode", "grid", "seed", "out"]) {
        return fail(format!("unknown flag --{flag}"));
    }
    let run = || -> Result<(String, bool), String> {
        let spec = load_system(args)?;
        let weights = load_weights(args, &spec)?;
        let c_g = resolve_c_g(&spec, args.parse_value("seed", 0u64)?)?;
        let opts = CertifyOptions {
            grid_cells: args.parse_value("grid", DEFAULT_CERT_CELLS)?,
            mode: args.mode()?,
            ..Default::default()
        };
        let cert = certify(&spec, &weights, c_g, &opts).map_err(|e| e.to_string())?;
        Ok((cert.to_json(), cert.is_certified()))
    };
    match run() {
        Ok((json, certified)) => {
            println!("{json}");
            if let Some(out) = args.value("out") {
                if let Err(e) = write_file(Path::new(out), &json) {
                    return fail(e);
                }
            }
            if certified {
                0
            } else {
                1
            }
        }
        Err(msg) => fail(msg),
    }
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

fn cmd_synth(args: &Args) -> i32 {
    if let Some(flag) = args.unknown_flags(&[
        "mode",
        "grid",
        "seed",
        "out",
        "multistarts",
        "iterations",
        "trace",
    ]) {
        return fail(format!("unknown flag --{flag}"));
    }
    let run = || -> Result<(crate::synth::SynthesisResult, PathBuf), String> {
        let spec = load_system(args)?;
        let c_g = resolve_c_g(&spec, args.parse_value("seed", 0u64)?)?;
        let budget = SynthBudget {
            multistarts: args.parse_value("multistarts", SynthBudget::default().multistarts)?,
            iterations: args.parse_value("iterations", SynthBudget::default().iterations)?,
        };
        let result = synthesize(
            &spec,
            c_g,
            args.mode()?,
            &budget,
            args.parse_value("seed", 0u64)?,
            args.parse_value("grid", DEFAULT_CERT_CELLS)?,
        )
        .map_err(|e| e.to_string())?;
        let out = PathBuf::from(args.value("out").unwrap_or("weights.json"));
        Ok((result, out))
    };
    match run() {
        Ok((result, out)) => {
            if let Some(trace_path) = args.value("trace") {
                if let Err(e) = write_file(Path::new(trace_path), &result.trace_csv()) {
                    return fail(e);
                }
            }
            if result.feasible {
                let weights = result.weights.as_ref().expect("feasible result has weights");
                if let Err(e) = write_file(&out, &weights.to_json()) {
                    return fail(e);
                }
                let cert = result.certificate.as_ref().expect("feasible result has certificate");
                println!("{}", cert.to_json());
                eprintln!(
                    "weights written to {} (objective {:.6e}, {} evaluations)",
                    out.display(),
                    result.objective,
                    result.evaluations
                );
                0
            } else {
                eprintln!(
                    "no certificate found: best objective {:.6e} after {} evaluations",
                    result.objective, result.evaluations
                );
                if args.value("trace").is_none() {
                    eprint!("{}", result.trace_csv());
                }
                1
            }
        }
        Err(msg) => fail(msg),
    }
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

#[derive(serde::Serialize)]
struct SimSummary {
    initial_norm: f64,
    final_norm: f64,
    fitted_rate: Option<f64>,
    r_squared: Option<f64>,
    cfl: f64,
    dt: f64,
    grid_cells: usize,
}

fn cmd_simulate(args: &Args) -> i32 {
    if let Some(flag) = args.unknown_flags(&[
        "initial",
        "t-end",
        "grid",
        "cfl",
        "weights",
        "d1",
        "d2",
        "out",
        "svg",
        "snapshots",
        "fit-window",
        "seed",
        "mode",
    ]) {
        return fail(format!("unknown flag --{flag}"));
    }
    let run = || -> Result<(crate::sim::Trajectory, SimSummary), String> {
        let spec = load_system(args)?;
        let initial_raw =
            args.value("initial").ok_or_else(|| "missing --initial \"<e1>; ...\"".to_string())?;
        let initial = parse_expr_list(initial_raw, &VariableContext::initial())?;
        let disturbances = disturbances_from_args(args, spec.n)?;
        let weights = match args.value("weights") {
            Some(_) => Some(load_weights(args, &spec)?),
            None => None,
        };
        let t_end: f64 = args.parse_value("t-end", 30.0)?;
        let mut opts = SimOptions::new(args.parse_value("grid", 200usize)?, t_end);
        if let Some(c) = args.value("cfl") {
            opts.cfl = Some(c.parse().map_err(|_| format!("invalid --cfl '{c}'"))?);
        }
        if let Some(snaps) = args.value("snapshots") {
            opts.snapshot_times = parse_f64_list(snaps)?;
        }
        let traj = simulate(
            &spec,
            &initial,
            &disturbances,
            weights.as_ref().map(|w| w.j2.as_slice()),
            &opts,
        )
        .map_err(|e| match e {
            SimError::BlowUp { .. } => format!("BLOWUP:{e}"),
            other => other.to_string(),
        })?;
        let window = match args.value("fit-window") {
            Some(raw) => {
                let vals = parse_f64_list(raw)?;
                if vals.len() != 2 {
                    return Err("--fit-window expects \"t0,t1\"".to_string());
                }
                (vals[0], vals[1])
            }
            None => (0.05 * t_end, 0.95 * t_end),
        };
        let fit = fit_decay_rate(&traj, window).ok();
        let summary = SimSummary {
            initial_norm: traj.initial_norm(),
            final_norm: traj.final_norm(),
            fitted_rate: fit.map(|f| f.rate),
            r_squared: fit.map(|f| f.r_squared),
            cfl: opts.cfl.unwrap_or(f64::NAN),
            dt: f64::NAN,
            grid_cells: opts.grid_cells,
        };
        Ok((traj, summary))
    };
    match run() {
        Ok((traj, mut summary)) => {
            // recompute stepper metadata for the summary
            if let Ok(spec) = load_system(args) {
                if let Ok(grid) = Grid::new(summary.grid_cells, spec.l) {
                    if let Ok(stepper) = crate::sim::Stepper::new(
                        &spec,
                        grid,
                        args.value("cfl").and_then(|c| c.parse().ok()),
                    ) {
                        summary.cfl = stepper.cfl;
                        summary.dt = stepper.dt;
                    }
                }
            }
            let mut csv = Vec::new();
            traj.write_csv(&mut csv).expect("in-memory write");
            let csv = String::from_utf8(csv).expect("csv is utf-8");
            match args.value("out") {
                Some(path) => {
                    if let Err(e) = write_file(Path::new(path), &csv) {
                        return fail(e);
                    }
                    for (i, snap) in traj.snapshots.iter().enumerate() {
                        let snap_path = snapshot_path(Path::new(path), i);
                        let mut buf = Vec::new();
                        write_snapshot_csv(snap, &traj.grid, &mut buf).expect("in-memory write");
                        if let Err(e) =
                            write_file(&snap_path, &String::from_utf8(buf).expect("utf-8"))
                        {
                            return fail(e);
                        }
                    }
                }
                None => print!("{csv}"),
            }
            if let Some(svg_path) = args.value("svg") {
                let points: Vec<(f64, f64)> = traj
                    .times
                    .iter()
                    .zip(&traj.l2_norm)
                    .filter(|(_, &n)| n > 0.0)
                    .map(|(&t, &n)| (t, n.ln()))
                    .collect();
                let svg = line_plot(
                    &[Series { label: "run", points: &points, color: "#1f77b4" }],
                    "log L2 norm",
                    "t",
                    "log |u|",
                );
                if let Err(e) = write_file(Path::new(svg_path), &svg) {
                    return fail(e);
                }
            }
            if args.json {
                println!("{}", serde_json::to_string_pretty(&summary).expect("summary"));
            } else {
                match (summary.fitted_rate, summary.r_squared) {
                    (Some(rate), Some(r2)) => eprintln!(
                        "final/initial norm {:.6e}/{:.6e}; fitted decay rate {rate:.6} (r^2 = {r2:.4})",
                        summary.final_norm, summary.initial_norm
                    ),
                    _ => eprintln!(
                        "final/initial norm {:.6e}/{:.6e}; decay fit unavailable",
                        summary.final_norm, summary.initial_norm
                    ),
                }
            }
            0
        }
        Err(msg) if msg.starts_with("BLOWUP:") => {
            eprintln!("error: {}", &msg["BLOWUP:".len()..]);
            3
        }
        Err(msg) => fail(msg),
    }
}

fn snapshot_path(out: &Path, index: usize) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("trajectory");
    let dir = out.parent().map(Path::to_path_buf).unwrap_or_default();
    dir.join(format!("{stem}_snap{index:03}.csv"))
}

// ---------------------------------------------------------------------------
// iss
// ---------------------------------------------------------------------------

#[derive(serde::Serialize)]
struct IssSummary {
    certificate: serde_json::Value,
    max_ratio: Option<f64>,
    worst_time: Option<f64>,
    envelope_holds: Option<bool>,
}

fn cmd_iss(args: &Args) -> i32 {
    if let Some(flag) = args.unknown_flags(&[
        "weights", "initial", "d1", "d2", "t-end", "grid", "out", "seed", "mode",
    ]) {
        return fail(format!("unknown flag --{flag}"));
    }
    let run = || -> Result<(IssSummary, bool), String> {
        let spec = load_system(args)?;
        let weights = load_weights(args, &spec)?;
        let c_g = resolve_c_g(&spec, args.parse_value("seed", 0u64)?)?;
        let opts = CertifyOptions {
            grid_cells: args.parse_value("grid", DEFAULT_CERT_CELLS)?,
            ..Default::default()
        };
        let cert = iss_gains(&spec, &weights, c_g, &opts).map_err(|e| e.to_string())?;
        let cert_value: serde_json::Value =
            serde_json::from_str(&cert.to_json()).expect("certificate JSON");
        if cert.iss.is_none() {
            let reason = cert
                .warnings
                .last()
                .cloned()
                .unwrap_or_else(|| "ISS certificate rejected".to_string());
            eprintln!("{reason}");
            return Ok((
                IssSummary {
                    certificate: cert_value,
                    max_ratio: None,
                    worst_time: None,
                    envelope_holds: None,
                },
                false,
            ));
        }
        let initial_raw =
            args.value("initial").ok_or_else(|| "missing --initial \"<e1>; ...\"".to_string())?;
        let initial = parse_expr_list(initial_raw, &VariableContext::initial())?;
        let disturbances = disturbances_from_args(args, spec.n)?;
        let sim_opts = SimOptions::new(
            args.parse_value("grid", 200usize).unwrap_or(200).min(2000),
            args.parse_value("t-end", 40.0)?,
        );
        let traj = simulate(
            &spec,
            &initial,
            &disturbances,
            Some(weights.j2.as_slice()),
            &sim_opts,
        )
        .map_err(|e| e.to_string())?;
        let report = check_iss_bound(&traj, &cert).map_err(|e| e.to_string())?;
        let ok = report.pass;
        Ok((
            IssSummary {
                certificate: cert_value,
                max_ratio: Some(report.max_ratio),
                worst_time: Some(report.worst_time),
                envelope_holds: Some(report.pass),
            },
            ok,
        ))
    };
    match run() {
        Ok((summary, ok)) => {
            let text = serde_json::to_string_pretty(&summary).expect("summary");
            println!("{text}");
            if let Some(out) = args.value("out") {
                if let Err(e) = write_file(Path::new(out), &text) {
                    return fail(e);
                }
            }
            if ok {
                0
            } else {
                1
            }
        }
        Err(msg) => fail(msg),
    }
}

// ---------------------------------------------------------------------------
// reproduce-example
// ---------------------------------------------------------------------------

fn cmd_reproduce_example(args: &Args) -> i32 {
    if let Some(flag) = args.unknown_flags(&["out", "mode", "grid", "seed", "t-end"]) {
        return fail(format!("unknown flag --{flag}"));
    }
    let out_dir = PathBuf::from(args.value("out").unwrap_or("reproduce-example"));
    let grid_cells: usize = match args.parse_value("grid", 200usize) {
        Ok(v) => v,
        Err(e) => return fail(e),
    };
    let t_end: f64 = match args.parse_value("t-end", 30.0) {
        Ok(v) => v,
        Err(e) => return fail(e),
    };

    let c = 0.25;
    let l = 1.0;
    let (epsilon, k_design) = presets::design_feedback(c, l).expect("|c|L < 1/2");
    let weights = presets::sine_counterflow_weights(l, epsilon);
    let initial = presets::sine_counterflow_initial();

    let run = || -> Result<(String, bool), String> {
        // system + weights files
        let closed_loop = presets::sine_counterflow(c, l, 0.75);
        write_file(&out_dir.join("example5.json"), &closed_loop.to_json())?;
        write_file(&out_dir.join("weights_affine.json"), &weights.to_json())?;

        // certificates in both modes at k = 3/4
        let relaxed_opts =
            CertifyOptions { mode: InteriorMode::RelaxedLocal, ..Default::default() };
        let cert_relaxed = certify(&closed_loop, &weights, CgValue::certified(c), &relaxed_opts)
            .map_err(|e| e.to_string())?;
        write_file(&out_dir.join("certificate_relaxed.json"), &cert_relaxed.to_json())?;
        let cert_strict =
            certify(&closed_loop, &weights, CgValue::certified(c), &CertifyOptions::default())
                .map_err(|e| e.to_string())?;
        write_file(&out_dir.join("certificate_strict.json"), &cert_strict.to_json())?;

        // three trajectories with the bundled initial data
        let gains = [(0.0, "traj_k000.csv"), (0.5, "traj_k050.csv"), (0.75, "traj_k075.csv")];
        let mut final_by_k = Vec::new();
        let mut series_points = Vec::new();
        for (k, file) in gains {
            let spec = presets::sine_counterflow(c, l, k);
            let opts = SimOptions::new(grid_cells, t_end);
            let traj = simulate(&spec, &initial, &DisturbanceSpec::zero(2), Some(&weights.j2), &opts)
                .map_err(|e| e.to_string())?;
            let mut buf = Vec::new();
            traj.write_csv(&mut buf).expect("in-memory write");
            write_file(&out_dir.join(file), &String::from_utf8(buf).expect("utf-8"))?;
            let points: Vec<(f64, f64)> = traj
                .times
                .iter()
                .zip(&traj.l2_norm)
                .filter(|(_, &n)| n > 1e-300)
                .map(|(&t, &n)| (t, n.ln()))
                .collect();
            series_points.push(points);
            final_by_k.push((k, traj.initial_norm(), traj.final_norm()));
        }
        let series: Vec<Series> = series_points
            .iter()
            .zip([("k = 0 (open loop)", "#1f77b4"), ("k = 1/2", "#d62728"), ("k = 3/4", "#2ca02c")])
            .map(|(points, (label, color))| Series { label, points, color })
            .collect();
        write_file(
            &out_dir.join("overlay.svg"),
            &line_plot(&series, "closed vs open loop", "t", "log |u|"),
        )?;

        // boundary diagonal across the three gains
        let n_diag: Vec<f64> =
            gains.iter().map(|(k, _)| epsilon - (epsilon + 2.0 * l) * (1.0 - k) * (1.0 - k)).collect();
        let strict_threshold = cert_strict.interior_threshold;
        let relaxed_threshold = cert_relaxed.interior_threshold;

        let decay_ok = final_by_k
            .iter()
            .filter(|(k, _, _)| *k > 0.0)
            .all(|(_, n0, nf)| nf <= &(0.05 * n0));
        let open_loop_ok = {
            let (_, n0, nf) = final_by_k[0];
            nf >= 0.5 * n0
        };

        let mut summary = String::new();
        summary.push_str("bundled counterflow example: c = 0.25, L = 1\n");
        summary.push_str(&format!("weight offset epsilon        : {epsilon:.9}\n"));
        summary.push_str(&format!("designed boundary gain k      : {k_design:.9}\n"));
        summary.push_str(&format!("strict interior threshold     : {strict_threshold:.9}\n"));
        summary.push_str(&format!("relaxed interior threshold    : {relaxed_threshold:.9}\n"));
        summary.push_str(&format!(
            "strict margin (C_g = 0.25)    : {:.9}  -> {}\n",
            cert_strict.interior_margin,
            if cert_strict.is_certified() { "certified" } else { "rejected" }
        ));
        summary.push_str(&format!(
            "relaxed margin (C_g = 0.25)   : {:.9}  -> {}\n",
            cert_relaxed.interior_margin,
            if cert_relaxed.is_certified() { "certified" } else { "rejected" }
        ));
        summary.push_str(&format!(
            "note: the strict condition bounds C_g by {strict_threshold:.6} while the relaxed\n\
             pointwise condition allows up to {relaxed_threshold:.6} (a factor {:.1} apart);\n\
             with C_g = 0.25 only the relaxed, local-case form certifies this system, and a\n\
             relaxed certificate carries no decay-rate guarantee.\n",
            relaxed_threshold / strict_threshold
        ));
        for ((k, n0, nf), nd) in final_by_k.iter().zip(&n_diag) {
            summary.push_str(&format!(
                "k = {k:<5} N = diag({nd:.6}, 0)  |u(0)| = {n0:.6}  |u({t_end})| = {nf:.6e}\n"
            ));
        }
        summary.push_str(&format!(
            "closed-loop decay: {}; open-loop persistence: {}\n",
            if decay_ok { "yes" } else { "NO" },
            if open_loop_ok { "yes" } else { "NO" }
        ));
        write_file(&out_dir.join("summary.txt"), &summary)?;
        Ok((summary, decay_ok && open_loop_ok))
    };
    match run() {
        Ok((summary, ok)) => {
            print!("{summary}");
            if ok {
                0
            } else {
                1
            }
        }
        Err(msg) => fail(msg),
    }
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

fn cmd_sweep(args: &Args) -> i32 {
    if let Some(flag) = args.unknown_flags(&[
        "initial", "d1", "d2", "scales", "t-end", "grid", "out", "weights", "seed", "mode",
    ]) {
        return fail(format!("unknown flag --{flag}"));
    }
    let run = || -> Result<Vec<(f64, f64, f64)>, String> {
        let spec = load_system(args)?;
        let initial_raw =
            args.value("initial").ok_or_else(|| "missing --initial \"<e1>; ...\"".to_string())?;
        let initial = parse_expr_list(initial_raw, &VariableContext::initial())?;
        let scales = parse_f64_list(
            args.value("scales").ok_or_else(|| "missing --scales \"1,2,4\"".to_string())?,
        )?;
        if scales.is_empty() {
            return Err("--scales must list at least one factor".to_string());
        }
        let weights = match args.value("weights") {
            Some(_) => Some(load_weights(args, &spec)?),
            None => None,
        };
        let t_end: f64 = args.parse_value("t-end", 30.0)?;
        let grid_cells: usize = args.parse_value("grid", 200usize)?;
        let out_dir = PathBuf::from(args.value("out").unwrap_or("sweep-out"));

        let d1_raw: Vec<String> = args
            .value("d1")
            .map(|r| r.split(';').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect())
            .unwrap_or_default();
        let d2_raw: Vec<String> = args
            .value("d2")
            .map(|r| r.split(';').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect())
            .unwrap_or_default();

        let scaled = |raw: &[String], scale: f64| -> Vec<String> {
            raw.iter().map(|e| format!("{scale}*({e})")).collect()
        };

        // independent runs; fan out but report in input order
        let n_threads = std::env::var("HYPERSTAB_THREADS")
            .ok()
            .and_then(|v| v.parse::<usize>().ok())
            .filter(|&v| v >= 1)
            .unwrap_or_else(|| {
                std::thread::available_parallelism().map(|p| p.get()).unwrap_or(1)
            })
            .min(scales.len());
        let mut results: Vec<Option<Result<(f64, f64, String), String>>> =
            (0..scales.len()).map(|_| None).collect();
        let next = std::sync::atomic::AtomicUsize::new(0);
        let results_mutex = std::sync::Mutex::new(&mut results);
        std::thread::scope(|scope| {
            for _ in 0..n_threads {
                let spec = &spec;
                let initial = &initial;
                let weights = &weights;
                let scales = &scales;
                let d1_raw = &d1_raw;
                let d2_raw = &d2_raw;
                let next = &next;
                let results_mutex = &results_mutex;
                let scaled = &scaled;
                scope.spawn(move || loop {
                    let idx = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                    if idx >= scales.len() {
                        break;
                    }
                    let scale = scales[idx];
                    let outcome = (|| -> Result<(f64, f64, String), String> {
                        let disturbances = DisturbanceSpec::parse(
                            &scaled(d1_raw, scale),
                            &scaled(d2_raw, scale),
                            spec.n,
                        )
                        .map_err(|e| e.to_string())?;
                        let opts = SimOptions::new(grid_cells, t_end);
                        let traj = simulate(
                            spec,
                            initial,
                            &disturbances,
                            weights.as_ref().map(|w| w.j2.as_slice()),
                            &opts,
                        )
                        .map_err(|e| e.to_string())?;
                        let max_norm = traj.l2_norm.iter().fold(0.0f64, |a, &v| a.max(v));
                        let mut buf = Vec::new();
                        traj.write_csv(&mut buf).expect("in-memory write");
                        Ok((traj.final_norm(), max_norm, String::from_utf8(buf).expect("utf-8")))
                    })();
                    results_mutex.lock().expect("sweep results lock")[idx] = Some(outcome);
                });
            }
        });

        let mut rows = Vec::new();
        for (idx, (scale, slot)) in scales.iter().zip(results.into_iter()).enumerate() {
            let (final_norm, max_norm, csv) =
                slot.expect("every sweep slot filled").map_err(|e| e)?;
            write_file(&out_dir.join(format!("sweep_{idx:02}.csv")), &csv)?;
            rows.push((*scale, final_norm, max_norm));
        }
        Ok(rows)
    };
    match run() {
        Ok(rows) => {
            if args.json {
                let rows_json: Vec<serde_json::Value> = rows
                    .iter()
                    .map(|(scale, final_norm, max_norm)| {
                        serde_json::json!({
                            "scale": scale,
                            "final_norm": final_norm,
                            "max_norm": max_norm,
                        })
                    })
                    .collect();
                println!(
                    "{}",
                    serde_json::to_string_pretty(&rows_json).expect("sweep summary")
                );
            } else {
                println!("scale,final_norm,max_norm");
                for (scale, final_norm, max_norm) in rows {
                    println!("{scale},{final_norm:.9e},{max_norm:.9e}");
                }
            }
            0
        }
        Err(msg) if msg.contains("blew up") => {
            eprintln!("error: {msg}");
            3
        }
        Err(msg) => fail(msg),
    }
}
