//! A strict certificate: the damped exchange system with exponential
//! weights earns a decay rate and gain, and the certificate JSON is the
//! exact document the CLI emits.
//!
//! ```bash
//! cargo run --example certify_damped_exchange
//! ```

use hyperstab::certify::{certify, CertifyOptions, CgValue};
use hyperstab::presets;

fn main() {
    let spec = presets::damped_exchange();
    let weights = presets::damped_exchange_weights();
    let cert =
        certify(&spec, &weights, CgValue::certified(0.05), &CertifyOptions::default()).unwrap();

    println!("verdict           : {:?}", cert.verdict);
    println!("lambda_m          : {:.9} (refined grid: {:.9})", cert.lambda_m, cert.lambda_m_refined);
    println!("interior threshold: {:.9}", cert.interior_threshold);
    println!("interior margin   : {:.9}", cert.interior_margin);
    println!("boundary min eig  : {:.9}", cert.boundary_min_eig);
    println!("decay rate (norm) : {:.9}", cert.decay_rate_norm.unwrap());
    println!("gain              : {:.9}", cert.gain);
    println!();
    println!("{}", cert.to_json());
}
