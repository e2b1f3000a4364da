//! Certify the bundled sine counterflow: the strict interior condition
//! fails for this nonlocal source, while the relaxed pointwise condition
//! certifies it, and the boundary verdict flips with the feedback gain.
//!
//! ```bash
//! cargo run --example certify_counterflow
//! ```

use hyperstab::certify::{certify, CertifyOptions, CgValue, InteriorMode};
use hyperstab::presets;

fn main() {
    let c = 0.25;
    let l = 1.0;
    let (epsilon, k_design) = presets::design_feedback(c, l).unwrap();
    println!("coupling c = {c}, length L = {l}");
    println!("designed weight offset epsilon = {epsilon}");
    println!("designed boundary gain k       = {k_design:.9}");

    let weights = presets::sine_counterflow_weights(l, epsilon);
    for k in [0.0, 0.5, 0.75] {
        let spec = presets::sine_counterflow(c, l, k);
        let relaxed = certify(
            &spec,
            &weights,
            CgValue::certified(c),
            &CertifyOptions { mode: InteriorMode::RelaxedLocal, ..Default::default() },
        )
        .unwrap();
        let strict =
            certify(&spec, &weights, CgValue::certified(c), &CertifyOptions::default()).unwrap();
        println!(
            "k = {k:<4}  boundary min eig {:+.6}  relaxed: {:?}  strict: {:?}",
            relaxed.boundary_min_eig, relaxed.verdict, strict.verdict
        );
    }

    let closed = presets::sine_counterflow(c, l, 0.75);
    let strict =
        certify(&closed, &weights, CgValue::certified(c), &CertifyOptions::default()).unwrap();
    let relaxed = certify(
        &closed,
        &weights,
        CgValue::certified(c),
        &CertifyOptions { mode: InteriorMode::RelaxedLocal, ..Default::default() },
    )
    .unwrap();
    println!();
    println!("strict  threshold {:.6}, margin {:+.6}", strict.interior_threshold, strict.interior_margin);
    println!("relaxed threshold {:.6}, margin {:+.6}", relaxed.interior_threshold, relaxed.interior_margin);
    println!("gain |J^-1||J| = {:.6}", relaxed.gain);
    for w in &relaxed.warnings {
        println!("warning: {w}");
    }
}
