//! Weight synthesis: search the affine and exponential families for a
//! certificate when no weights are supplied, then re-certify the result.
//!
//! ```bash
//! cargo run --example synthesize_weights
//! ```

use hyperstab::certify::{certify, CertifyOptions, CgValue, InteriorMode};
use hyperstab::presets;
use hyperstab::synth::{synthesize, SynthBudget};

fn main() {
    let spec = presets::damped_exchange();
    let budget = SynthBudget { multistarts: 16, iterations: 30 };
    let result =
        synthesize(&spec, CgValue::certified(0.05), InteriorMode::Strict, &budget, 0, 512)
            .unwrap();

    println!("feasible    : {}", result.feasible);
    println!("objective   : {:.6}", result.objective);
    println!("family      : {:?}", result.family);
    println!("evaluations : {}", result.evaluations);

    let weights = result.weights.expect("a strict certificate exists for this system");
    println!("weights     : {}", weights.to_json().replace('\n', " "));

    let cert = result.certificate.unwrap();
    println!("decay rate  : {:.6}", cert.decay_rate_norm.unwrap());
    println!("gain        : {:.6}", cert.gain);

    // closing the loop: an independent certification run agrees
    let check =
        certify(&spec, &weights, CgValue::certified(0.05), &CertifyOptions::default()).unwrap();
    println!("re-certified: {:?}", check.verdict);
}
