//! Bundled example systems.
//!
//! Two systems ship with the crate:
//!
//! - the *sine counterflow*: two counter-propagating unit-speed components
//!   coupled through bounded nonlocal sources `±(c/L)·sin(∫ u_j dx)`, with
//!   one transparent boundary relation and one tunable feedback gain `k`.
//!   In open loop (`k = 0`) it carries a continuum of traveling waves and
//!   is not asymptotically stable; a suitable `k` stabilizes it.
//! - the *damped exchange*: unit-speed counterflow with a weak saturating
//!   interior exchange (Lipschitz constant 0.05) and damping boundary
//!   reflections of gain 0.25. It admits a strict certificate with
//!   exponential weights, which makes it the reference case for ISS runs.
//!
//! A smooth variable-speed exchange system is included for grid-convergence
//! studies.

use crate::certify::WeightSpec;
use crate::expr::{Expression, VariableContext};
use crate::model::SystemSpec;

fn must_parse(src: &str, ctx: &VariableContext) -> Expression {
    Expression::parse(src, ctx).unwrap_or_else(|e| panic!("bad builtin expression '{src}': {e}"))
}

fn system_from_json(json: &str) -> SystemSpec {
    SystemSpec::from_json(json).unwrap_or_else(|e| panic!("bad builtin system: {e}"))
}

/// The sine counterflow system with coupling strength `c`, domain length
/// `l` and boundary feedback gain `k`.
pub fn sine_counterflow(c: f64, l: f64, k: f64) -> SystemSpec {
    let coeff = -c / l;
    let json = format!(
        r#"{{
  "name": "sine-counterflow",
  "n": 2, "m": 1, "L": {l},
  "lambda": ["1", "-1"],
  "source": {{
    "B": ["{coeff}*sin(I[2])", "{coeff}*sin(I[1])"],
    "C_B": {cb}
  }},
  "boundary": {{
    "G": ["out[2]", "{r}*out[1]"],
    "K": [[0, 1], [{rk}, 0]]
  }}
}}"#,
        l = l,
        coeff = coeff,
        cb = c.abs(),
        r = 1.0 - k,
        rk = (1.0 - k).abs(),
    );
    system_from_json(&json)
}

/// Affine weights `J² = (l + ε - x, l + ε + x)` for the sine counterflow.
pub fn sine_counterflow_weights(l: f64, epsilon: f64) -> WeightSpec {
    let ctx = VariableContext::coefficient();
    WeightSpec::new(vec![
        must_parse(&format!("{}-x", l + epsilon), &ctx),
        must_parse(&format!("{}+x", l + epsilon), &ctx),
    ])
}

/// Feedback design for the sine counterflow, valid while `|c|·l < 1/2`:
/// the weight offset `ε = 3(1/|c| - 2l)/4` and the matching boundary gain
/// `k = sqrt(1 / (1 + 2l/ε))`.
pub fn design_feedback(c: f64, l: f64) -> Option<(f64, f64)> {
    if !(c.abs() * l < 0.5) || c == 0.0 {
        return None;
    }
    let epsilon = 3.0 * (1.0 / c.abs() - 2.0 * l) / 4.0;
    let k = (1.0 / (1.0 + 2.0 * l / epsilon)).sqrt();
    Some((epsilon, k))
}

/// Initial data used by the bundled counterflow runs:
/// `u₁(0, x) = sqrt(2πx)`, `u₂(0, x) = exp(-2πx)`.
pub fn sine_counterflow_initial() -> Vec<Expression> {
    let ctx = VariableContext::initial();
    vec![must_parse("sqrt(2*pi*x)", &ctx), must_parse("exp(-2*pi*x)", &ctx)]
}

/// Initial slice of the open-loop traveling wave
/// `u = 0.3·(cos 2π(t - x), cos 2π(t + x))` at `t = 0`.
pub fn traveling_wave_initial() -> Vec<Expression> {
    let ctx = VariableContext::initial();
    vec![must_parse("0.3*cos(2*pi*x)", &ctx), must_parse("0.3*cos(2*pi*x)", &ctx)]
}

/// The damped exchange system: saturating interior exchange of Lipschitz
/// constant 0.05 and boundary reflections of gain 0.25.
pub fn damped_exchange() -> SystemSpec {
    system_from_json(
        r#"{
  "name": "damped-exchange",
  "n": 2, "m": 1, "L": 1.0,
  "lambda": ["1", "-1"],
  "source": {
    "B": ["-0.05*sin(u[2])", "-0.05*sin(u[1])"],
    "C_B": 0.05
  },
  "boundary": {
    "G": ["0.25*out[2]", "0.25*out[1]"],
    "K": [[0, 0.25], [0.25, 0]]
  }
}"#,
    )
}

/// Exponential weights `J² = (e^{-x/2}, e^{x/2})` certifying the damped
/// exchange system strictly.
pub fn damped_exchange_weights() -> WeightSpec {
    let ctx = VariableContext::coefficient();
    WeightSpec::new(vec![must_parse("exp(-0.5*x)", &ctx), must_parse("exp(0.5*x)", &ctx)])
}

/// Smooth variable-speed exchange used by the grid-convergence study.
pub fn variable_speed_exchange() -> SystemSpec {
    system_from_json(
        r#"{
  "name": "variable-speed-exchange",
  "n": 2, "m": 1, "L": 1.0,
  "lambda": ["1+0.5*x", "-(1.5-0.5*x)"],
  "source": {
    "B": ["-0.2*u[2]", "-0.2*u[1]"],
    "C_B": 0.2
  },
  "boundary": {
    "G": ["0.5*out[2]", "0.5*out[1]"],
    "K": [[0, 0.5], [0.5, 0]]
  }
}"#,
    )
}

/// Smooth initial data compatible with the exchange boundary conditions
/// (vanishing traces at both ends).
pub fn smooth_compatible_initial() -> Vec<Expression> {
    let ctx = VariableContext::initial();
    vec![must_parse("x^2*(1-x)^2", &ctx), must_parse("sin(pi*x)^2", &ctx)]
}
