//! Stability certificates for 1-D semilinear hyperbolic systems.
//!
//! This crate decides global exponential stability and input-to-state
//! stability in the L² norm for systems of the form
//!
//! ```text
//! ∂t u + Λ(x) ∂x u + B(u, x) = 0        on (0, L)
//! (incoming traces) = G(outgoing traces)
//! ```
//!
//! with Lipschitz, possibly nonlocal sources `B` and nonlinear boundary
//! feedback `G`. It evaluates an interior eigenvalue condition and a
//! boundary positive-semidefiniteness condition built from diagonal
//! Lyapunov weights `J²(x)`, reports the certified decay rate and gain,
//! searches for weights when none are given, and validates every
//! certificate against a direct upwind simulation.
//!
//! Modules follow the pipeline:
//!
//! - [`expr`] — the closed-form expression language used in config files
//! - [`linalg`] — small symmetric eigenproblems and PSD tests
//! - [`model`] — system specification, validation, coefficient sampling,
//!   Lipschitz-constant estimation
//! - [`certify`] — interior/boundary conditions, decay rate, gain, ISS gains
//! - [`synth`] — weight synthesis by multistart coordinate ascent
//! - [`sim`] — upwind finite-difference simulation, decay-rate fitting,
//!   ISS-bound checking, grid-convergence studies
//! - [`presets`] — bundled example systems
//! - [`cli`] — the command-line front end (see the `hyperstab` binary)
//!
//! The `examples/` directory contains one runnable example per capability;
//! start with `cargo run --example certify_counterflow`.

pub mod cli;
pub mod expr;
pub mod linalg;
pub mod model;
pub mod plot;
pub mod presets;
pub mod rng;
pub mod sim;
pub mod synth;

pub mod certify;
