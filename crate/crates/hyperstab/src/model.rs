//! System specification and structural checks.
//!
//! A [`SystemSpec`] describes `∂t u + Λ(x) ∂x u + B(u, x) = 0` on `(0, L)`
//! with boundary feedback `G` and a reflection bound `K`. Components
//! `1..=m` carry positive speeds, `m+1..=n` negative ones. Sources may be
//! nonlocal through the integral channel `I[j] = ∫₀ᴸ u_j dx`.
//!
//! The module also samples coefficients onto grids (including the weighted
//! transport derivative `(J²Λ)'` needed by the interior condition), checks
//! the structural assumptions (nonvanishing speeds, `B(0) = 0`, `G(0) = 0`,
//! the componentwise bound `|G_i| ≤ Σ K_ij |out_j|`), and estimates
//! Lipschitz constants by sampling when the user does not supply them.
//! Sampled estimates are lower bounds; certificates built on them are
//! flagged as heuristic downstream.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::expr::{Bindings, EvalError, Expression, ParseError, VariableContext};
use crate::linalg::Mat;
use crate::rng::Rng;

const SPEED_FLOOR: f64 = 1e-8;
const ZERO_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub enum ModelError {
    Parse { field: String, err: ParseError },
    Eval { field: String, err: EvalError },
    Invalid(String),
    Json(String),
}

impl fmt::Display for ModelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelError::Parse { field, err } => write!(f, "in {field}: {err}"),
            ModelError::Eval { field, err } => write!(f, "evaluating {field}: {err}"),
            ModelError::Invalid(msg) => write!(f, "{msg}"),
            ModelError::Json(msg) => write!(f, "config error: {msg}"),
        }
    }
}

impl std::error::Error for ModelError {}

// ---------------------------------------------------------------------------
// Grid
// ---------------------------------------------------------------------------

/// Uniform grid on `[0, L]` with `n_cells + 1` nodes including both endpoints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    n_cells: usize,
    length: f64,
}

impl Grid {
    pub fn new(n_cells: usize, length: f64) -> Result<Grid, ModelError> {
        if n_cells < 8 {
            return Err(ModelError::Invalid(format!(
                "grid must have at least 8 cells, got {n_cells}"
            )));
        }
        if !(length > 0.0) || !length.is_finite() {
            return Err(ModelError::Invalid(format!(
                "domain length must be positive, got {length}"
            )));
        }
        Ok(Grid { n_cells, length })
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn n_nodes(&self) -> usize {
        self.n_cells + 1
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn spacing(&self) -> f64 {
        self.length / self.n_cells as f64
    }

    pub fn node(&self, j: usize) -> f64 {
        // exact at both endpoints
        self.length * j as f64 / self.n_cells as f64
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_nodes()).map(move |j| self.node(j))
    }

    /// Trapezoid quadrature of nodal values.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.n_nodes());
        let mut s = 0.5 * (values[0] + values[values.len() - 1]);
        for v in &values[1..values.len() - 1] {
            s += v;
        }
        s * self.spacing()
    }

    /// Squared L² norm of a vector field given as `fields[i][j]`.
    pub fn l2_norm_sq(&self, fields: &[Vec<f64>]) -> f64 {
        let mut total = 0.0;
        let mut sq = vec![0.0; self.n_nodes()];
        for comp in fields {
            for (s, v) in sq.iter_mut().zip(comp) {
                *s = v * v;
            }
            total += self.integrate(&sq);
        }
        total
    }

    pub fn l2_norm(&self, fields: &[Vec<f64>]) -> f64 {
        self.l2_norm_sq(fields).sqrt()
    }
}

// ---------------------------------------------------------------------------
// Spec types
// ---------------------------------------------------------------------------

/// A Lipschitz constant that is either supplied (certified) or to be
/// estimated by sampling (heuristic).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LipschitzConstant {
    Known(f64),
    Estimate,
}

/// Source term `B` with its Lipschitz data and optional linear split `M`.
/// `c_g` is the Lipschitz constant of the residual `g = B - Mu`.
#[derive(Debug, Clone)]
pub struct SourceSpec {
    pub b: Vec<Expression>,
    pub c_b: LipschitzConstant,
    pub m: Option<Vec<Vec<Expression>>>,
    pub c_g: LipschitzConstant,
}

/// Boundary feedback `G` over the outgoing traces and the nonnegative
/// reflection matrix `K` bounding it componentwise.
#[derive(Debug, Clone)]
pub struct BoundarySpec {
    pub g: Vec<Expression>,
    pub k: Mat,
}

#[derive(Debug, Clone)]
pub struct SystemSpec {
    pub name: String,
    /// state dimension
    pub n: usize,
    /// number of positive-speed components (they come first)
    pub m: usize,
    /// domain length
    pub l: f64,
    pub lambda: Vec<Expression>,
    pub source: SourceSpec,
    pub boundary: BoundarySpec,
}

/// Bindings for coefficient expressions of `x` only.
pub struct XBindings {
    pub x: f64,
}

impl Bindings for XBindings {
    fn value(&self, name: &str, index: Option<usize>) -> Option<f64> {
        (name == "x" && index.is_none()).then_some(self.x)
    }
}

/// Bindings for source expressions: position, point values and integrals.
pub struct SourceBindings<'a> {
    pub x: f64,
    pub u: &'a [f64],
    pub integrals: &'a [f64],
}

impl Bindings for SourceBindings<'_> {
    fn value(&self, name: &str, index: Option<usize>) -> Option<f64> {
        match (name, index) {
            ("x", None) => Some(self.x),
            ("u", Some(i)) => self.u.get(i - 1).copied(),
            ("I", Some(i)) => self.integrals.get(i - 1).copied(),
            _ => None,
        }
    }
}

/// Bindings for boundary expressions over the outgoing traces.
pub struct OutBindings<'a> {
    pub out: &'a [f64],
}

impl Bindings for OutBindings<'_> {
    fn value(&self, name: &str, index: Option<usize>) -> Option<f64> {
        match (name, index) {
            ("out", Some(i)) => self.out.get(i - 1).copied(),
            _ => None,
        }
    }
}

/// Bindings for disturbance expressions (`t` alone, or `t` and `x`).
pub struct TxBindings {
    pub t: f64,
    pub x: Option<f64>,
}

impl Bindings for TxBindings {
    fn value(&self, name: &str, index: Option<usize>) -> Option<f64> {
        match (name, index) {
            ("t", None) => Some(self.t),
            ("x", None) => self.x,
            _ => None,
        }
    }
}

impl SystemSpec {
    fn eval_x(expr: &Expression, field: &str, x: f64) -> Result<f64, ModelError> {
        expr.eval(&XBindings { x })
            .map_err(|err| ModelError::Eval { field: field.to_string(), err })
    }

    /// Characteristic speeds sampled at `x`.
    pub fn lambda_at(&self, x: f64) -> Result<Vec<f64>, ModelError> {
        self.lambda
            .iter()
            .enumerate()
            .map(|(i, e)| Self::eval_x(e, &format!("lambda[{}]", i + 1), x))
            .collect()
    }

    /// Evaluate the source components at one point of a field.
    pub fn source_at(&self, x: f64, u: &[f64], integrals: &[f64]) -> Result<Vec<f64>, ModelError> {
        let b = SourceBindings { x, u, integrals };
        self.source
            .b
            .iter()
            .enumerate()
            .map(|(i, e)| {
                e.eval(&b).map_err(|err| ModelError::Eval { field: format!("B[{}]", i + 1), err })
            })
            .collect()
    }

    /// Evaluate the boundary map on outgoing traces.
    pub fn boundary_at(&self, out: &[f64]) -> Result<Vec<f64>, ModelError> {
        let b = OutBindings { out };
        self.boundary
            .g
            .iter()
            .enumerate()
            .map(|(i, e)| {
                e.eval(&b).map_err(|err| ModelError::Eval { field: format!("G[{}]", i + 1), err })
            })
            .collect()
    }

    /// True if any source component uses the nonlocal channel `I[j]`.
    pub fn source_is_nonlocal(&self) -> bool {
        self.source.b.iter().any(|e| e.uses_family("I"))
    }

    /// The user-supplied linear split sampled at `x`, if any.
    pub fn m_at(&self, x: f64) -> Result<Option<Mat>, ModelError> {
        match &self.source.m {
            None => Ok(None),
            Some(rows) => {
                let n = self.n;
                let mut m = Mat::zero(n);
                for (i, row) in rows.iter().enumerate() {
                    for (j, e) in row.iter().enumerate() {
                        m.set(i, j, Self::eval_x(e, &format!("M[{}][{}]", i + 1, j + 1), x)?);
                    }
                }
                Ok(Some(m))
            }
        }
    }
}

// ---------------------------------------------------------------------------
// JSON config
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum RawLipschitz {
    Number(f64),
    Keyword(String),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSource {
    #[serde(rename = "B")]
    b: Vec<String>,
    #[serde(rename = "C_B")]
    c_b: RawLipschitz,
    #[serde(rename = "M", default)]
    m: Option<Vec<Vec<String>>>,
    #[serde(rename = "C_g", default, skip_serializing_if = "Option::is_none")]
    c_g: Option<RawLipschitz>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBoundary {
    #[serde(rename = "G")]
    g: Vec<String>,
    #[serde(rename = "K")]
    k: Vec<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSystem {
    name: String,
    n: usize,
    m: usize,
    #[serde(rename = "L")]
    l: f64,
    lambda: Vec<String>,
    source: RawSource,
    boundary: RawBoundary,
}

fn lipschitz_from_raw(raw: &RawLipschitz, field: &str) -> Result<LipschitzConstant, ModelError> {
    match raw {
        RawLipschitz::Number(v) => {
            if !v.is_finite() || *v < 0.0 {
                return Err(ModelError::Invalid(format!(
                    "{field} must be a finite nonnegative number, got {v}"
                )));
            }
            Ok(LipschitzConstant::Known(*v))
        }
        RawLipschitz::Keyword(s) if s == "estimate" => Ok(LipschitzConstant::Estimate),
        RawLipschitz::Keyword(s) => Err(ModelError::Invalid(format!(
            "{field} must be a number or \"estimate\", got \"{s}\""
        ))),
    }
}

fn lipschitz_to_raw(c: LipschitzConstant) -> RawLipschitz {
    match c {
        LipschitzConstant::Known(v) => RawLipschitz::Number(v),
        LipschitzConstant::Estimate => RawLipschitz::Keyword("estimate".to_string()),
    }
}

fn parse_list(
    sources: &[String],
    ctx: &VariableContext,
    field: &str,
    expected: usize,
) -> Result<Vec<Expression>, ModelError> {
    if sources.len() != expected {
        return Err(ModelError::Invalid(format!(
            "{field} must have {expected} entries, got {}",
            sources.len()
        )));
    }
    sources
        .iter()
        .enumerate()
        .map(|(i, s)| {
            Expression::parse(s, ctx)
                .map_err(|err| ModelError::Parse { field: format!("{field}[{}]", i + 1), err })
        })
        .collect()
}

impl SystemSpec {
    /// Load a system from its JSON document. Unknown fields are rejected;
    /// expressions are parsed against their role contexts.
    pub fn from_json(text: &str) -> Result<SystemSpec, ModelError> {
        let raw: RawSystem =
            serde_json::from_str(text).map_err(|e| ModelError::Json(e.to_string()))?;
        if raw.n == 0 {
            return Err(ModelError::Invalid("n must be at least 1".to_string()));
        }
        if raw.m > raw.n {
            return Err(ModelError::Invalid(format!("m = {} exceeds n = {}", raw.m, raw.n)));
        }
        if !(raw.l > 0.0) || !raw.l.is_finite() {
            return Err(ModelError::Invalid(format!("L must be positive, got {}", raw.l)));
        }
        let n = raw.n;

        let lambda = parse_list(&raw.lambda, &VariableContext::coefficient(), "lambda", n)?;
        let b = parse_list(&raw.source.b, &VariableContext::source(n), "source.B", n)?;
        let m = match &raw.source.m {
            None => None,
            Some(rows) => {
                if rows.len() != n {
                    return Err(ModelError::Invalid(format!(
                        "source.M must have {n} rows, got {}",
                        rows.len()
                    )));
                }
                let mut out = Vec::with_capacity(n);
                for (i, row) in rows.iter().enumerate() {
                    out.push(parse_list(
                        row,
                        &VariableContext::coefficient(),
                        &format!("source.M[{}]", i + 1),
                        n,
                    )?);
                }
                Some(out)
            }
        };
        let c_b = lipschitz_from_raw(&raw.source.c_b, "source.C_B")?;
        let c_g = match &raw.source.c_g {
            Some(rawc) => lipschitz_from_raw(rawc, "source.C_g")?,
            // without a linear split the residual is B itself
            None if m.is_none() => c_b,
            None => LipschitzConstant::Estimate,
        };

        let g = parse_list(&raw.boundary.g, &VariableContext::boundary(n), "boundary.G", n)?;
        if raw.boundary.k.len() != n {
            return Err(ModelError::Invalid(format!(
                "boundary.K must be {n}x{n}, got {} rows",
                raw.boundary.k.len()
            )));
        }
        for (i, row) in raw.boundary.k.iter().enumerate() {
            if row.len() != n {
                return Err(ModelError::Invalid(format!(
                    "boundary.K row {} must have {n} entries, got {}",
                    i + 1,
                    row.len()
                )));
            }
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() || v < 0.0 {
                    return Err(ModelError::Invalid(format!(
                        "boundary.K[{}][{}] must be finite and nonnegative, got {v}",
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        let k = Mat::from_rows(&raw.boundary.k)
            .map_err(|e| ModelError::Invalid(format!("boundary.K: {e}")))?;

        Ok(SystemSpec {
            name: raw.name,
            n,
            m: raw.m,
            l: raw.l,
            lambda,
            source: SourceSpec { b, c_b, m, c_g },
            boundary: BoundarySpec { g, k },
        })
    }

    pub fn to_json(&self) -> String {
        let raw = RawSystem {
            name: self.name.clone(),
            n: self.n,
            m: self.m,
            l: self.l,
            lambda: self.lambda.iter().map(|e| e.to_string()).collect(),
            source: RawSource {
                b: self.source.b.iter().map(|e| e.to_string()).collect(),
                c_b: lipschitz_to_raw(self.source.c_b),
                m: self.source.m.as_ref().map(|rows| {
                    rows.iter().map(|r| r.iter().map(|e| e.to_string()).collect()).collect()
                }),
                c_g: Some(lipschitz_to_raw(self.source.c_g)),
            },
            boundary: RawBoundary {
                g: self.boundary.g.iter().map(|e| e.to_string()).collect(),
                k: (0..self.n)
                    .map(|i| (0..self.n).map(|j| self.boundary.k.get(i, j)).collect())
                    .collect(),
            },
        };
        serde_json::to_string_pretty(&raw).expect("system spec serializes")
    }
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub pass: bool,
    /// sample points or entries violating the check, empty when passing
    pub violations: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<CheckResult>,
}

impl ValidationReport {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{}: {}", c.name, if c.pass { "ok" } else { "FAIL" })?;
            for v in &c.violations {
                writeln!(f, "  {v}")?;
            }
        }
        Ok(())
    }
}

/// Check the structural assumptions: speed signs and nonvanishing on 256
/// samples, `B(0, x) = 0` on 32 samples, `G(0) = 0`. Failures are collected
/// into the report rather than returned as errors.
pub fn validate_spec(spec: &SystemSpec) -> ValidationReport {
    let mut checks = Vec::new();

    // speeds: component i <= m positive, otherwise negative, never near zero
    let mut violations = Vec::new();
    let samples = 256;
    for i in 0..spec.n {
        let positive = i < spec.m;
        for s in 0..=samples {
            let x = spec.l * s as f64 / samples as f64;
            match SystemSpec::eval_x(&spec.lambda[i], &format!("lambda[{}]", i + 1), x) {
                Ok(v) => {
                    let ok = if positive { v >= SPEED_FLOOR } else { v <= -SPEED_FLOOR };
                    if !ok {
                        violations.push(format!(
                            "lambda[{}]({x:.6}) = {v:.3e}, expected {} with |.| >= {SPEED_FLOOR:.0e}",
                            i + 1,
                            if positive { "positive" } else { "negative" }
                        ));
                        break;
                    }
                }
                Err(e) => {
                    violations.push(e.to_string());
                    break;
                }
            }
        }
    }
    checks.push(CheckResult {
        name: "speeds have constant sign and never vanish".to_string(),
        pass: violations.is_empty(),
        violations,
    });

    // B(0, x) = 0
    let mut violations = Vec::new();
    let zeros = vec![0.0; spec.n];
    for s in 0..32 {
        let x = spec.l * s as f64 / 31.0;
        match spec.source_at(x, &zeros, &zeros) {
            Ok(values) => {
                for (i, v) in values.iter().enumerate() {
                    if v.abs() > ZERO_TOL {
                        violations.push(format!("B[{}](0, {x:.6}) = {v:.3e}", i + 1));
                    }
                }
            }
            Err(e) => violations.push(e.to_string()),
        }
        if !violations.is_empty() {
            break;
        }
    }
    checks.push(CheckResult {
        name: "source vanishes at the origin".to_string(),
        pass: violations.is_empty(),
        violations,
    });

    // G(0) = 0
    let mut violations = Vec::new();
    match spec.boundary_at(&zeros) {
        Ok(values) => {
            for (i, v) in values.iter().enumerate() {
                if v.abs() > ZERO_TOL {
                    violations.push(format!("G[{}](0) = {v:.3e}", i + 1));
                }
            }
        }
        Err(e) => violations.push(e.to_string()),
    }
    checks.push(CheckResult {
        name: "boundary map vanishes at the origin".to_string(),
        pass: violations.is_empty(),
        violations,
    });

    ValidationReport { checks }
}

// ---------------------------------------------------------------------------
// Coefficient sampling
// ---------------------------------------------------------------------------

/// Coefficients sampled on a grid: speeds, weights, the transport
/// derivative `(J²Λ)'`, and the linear split `M` when present. Arrays are
/// indexed `[component][node]`; `m` is per node.
#[derive(Debug, Clone)]
pub struct SampledCoefficients {
    pub grid: Grid,
    pub lambda: Vec<Vec<f64>>,
    pub j2: Vec<Vec<f64>>,
    pub d: Vec<Vec<f64>>,
    pub j2_lambda_deriv: Vec<Vec<f64>>,
    pub m: Option<Vec<Mat>>,
}

/// Sample speeds, weights and `(J²Λ)'` on `grid`. The derivative uses
/// central differences with a 4x-refined auxiliary spacing, second-order
/// one-sided at the endpoints.
pub fn sample_coefficients(
    spec: &SystemSpec,
    grid: &Grid,
    j2_exprs: &[Expression],
    d_exprs: &[Expression],
) -> Result<SampledCoefficients, ModelError> {
    let n = spec.n;
    if j2_exprs.len() != n || d_exprs.len() != n {
        return Err(ModelError::Invalid(format!(
            "weights must have {n} components (got J2: {}, D: {})",
            j2_exprs.len(),
            d_exprs.len()
        )));
    }
    let nodes = grid.n_nodes();
    let h = grid.spacing() / 4.0;
    let l = grid.length();

    let mut lambda = vec![vec![0.0; nodes]; n];
    let mut j2 = vec![vec![0.0; nodes]; n];
    let mut d = vec![vec![0.0; nodes]; n];
    let mut deriv = vec![vec![0.0; nodes]; n];

    for i in 0..n {
        let f = |x: f64| -> Result<f64, ModelError> {
            let lam = SystemSpec::eval_x(&spec.lambda[i], &format!("lambda[{}]", i + 1), x)?;
            let w = SystemSpec::eval_x(&j2_exprs[i], &format!("J2[{}]", i + 1), x)?;
            Ok(w * lam)
        };
        for (j, x) in grid.nodes().enumerate() {
            lambda[i][j] = SystemSpec::eval_x(&spec.lambda[i], &format!("lambda[{}]", i + 1), x)?;
            j2[i][j] = SystemSpec::eval_x(&j2_exprs[i], &format!("J2[{}]", i + 1), x)?;
            d[i][j] = SystemSpec::eval_x(&d_exprs[i], &format!("D[{}]", i + 1), x)?;
            deriv[i][j] = if x - h < 0.0 {
                (-3.0 * f(x)? + 4.0 * f(x + h)? - f(x + 2.0 * h)?) / (2.0 * h)
            } else if x + h > l {
                (3.0 * f(x)? - 4.0 * f(x - h)? + f(x - 2.0 * h)?) / (2.0 * h)
            } else {
                (f(x + h)? - f(x - h)?) / (2.0 * h)
            };
            for (label, v) in [
                ("lambda", lambda[i][j]),
                ("J2", j2[i][j]),
                ("D", d[i][j]),
                ("(J2*lambda)'", deriv[i][j]),
            ] {
                if !v.is_finite() {
                    return Err(ModelError::Invalid(format!(
                        "{label}[{}] is not finite at x = {x}",
                        i + 1
                    )));
                }
            }
        }
    }

    let m = match &spec.source.m {
        None => None,
        Some(_) => {
            let mut per_node = Vec::with_capacity(nodes);
            for x in grid.nodes() {
                per_node.push(spec.m_at(x)?.expect("M present"));
            }
            Some(per_node)
        }
    };

    Ok(SampledCoefficients { grid: *grid, lambda, j2, d, j2_lambda_deriv: deriv, m })
}

// ---------------------------------------------------------------------------
// Lipschitz estimation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub struct SamplingOptions {
    pub n_samples: usize,
    pub amplitude: f64,
    pub seed: u64,
}

impl Default for SamplingOptions {
    fn default() -> Self {
        SamplingOptions { n_samples: 400, amplitude: 1.0, seed: 0 }
    }
}

const FOURIER_MODES: usize = 4;
const PROBE_EPS: f64 = 1e-4;

fn random_field(rng: &mut Rng, grid: &Grid, n: usize, amplitude: f64) -> Vec<Vec<f64>> {
    let l = grid.length();
    let mut field = vec![vec![0.0; grid.n_nodes()]; n];
    for comp in field.iter_mut() {
        let scale = amplitude * rng.uniform(0.05, 1.0);
        let mut coef = Vec::with_capacity(2 * FOURIER_MODES + 1);
        for _ in 0..(2 * FOURIER_MODES + 1) {
            coef.push(rng.uniform(-1.0, 1.0));
        }
        let mut max_abs = 0.0f64;
        for (j, x) in grid.nodes().enumerate() {
            let mut v = coef[0];
            for k in 1..=FOURIER_MODES {
                let arg = 2.0 * std::f64::consts::PI * k as f64 * x / l;
                v += coef[2 * k - 1] * arg.cos() + coef[2 * k] * arg.sin();
            }
            comp[j] = v;
            max_abs = max_abs.max(v.abs());
        }
        if max_abs > 0.0 {
            let factor = scale / max_abs;
            for v in comp.iter_mut() {
                *v *= factor;
            }
        }
    }
    field
}

/// Evaluate the source (minus the optional linear split) on a whole field.
fn source_on_field(
    spec: &SystemSpec,
    grid: &Grid,
    field: &[Vec<f64>],
    subtract_m: bool,
) -> Result<Vec<Vec<f64>>, ModelError> {
    let n = spec.n;
    let integrals: Vec<f64> = field.iter().map(|comp| grid.integrate(comp)).collect();
    let mut out = vec![vec![0.0; grid.n_nodes()]; n];
    let mut point = vec![0.0; n];
    for (j, x) in grid.nodes().enumerate() {
        for i in 0..n {
            point[i] = field[i][j];
        }
        let b = spec.source_at(x, &point, &integrals)?;
        for i in 0..n {
            out[i][j] = b[i];
        }
        if subtract_m {
            if let Some(m) = spec.m_at(x)? {
                for i in 0..n {
                    let mut mu = 0.0;
                    for k in 0..n {
                        mu += m.get(i, k) * point[k];
                    }
                    out[i][j] -= mu;
                }
            }
        }
    }
    Ok(out)
}

fn diff_field(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    a.iter()
        .zip(b)
        .map(|(ca, cb)| ca.iter().zip(cb).map(|(x, y)| x - y).collect())
        .collect()
}

fn lipschitz_ratio(
    spec: &SystemSpec,
    grid: &Grid,
    u: &[Vec<f64>],
    v: &[Vec<f64>],
    subtract_m: bool,
) -> Result<Option<f64>, ModelError> {
    let denom = grid.l2_norm(&diff_field(u, v));
    if denom < 1e-14 {
        return Ok(None); // degenerate pair
    }
    let bu = source_on_field(spec, grid, u, subtract_m)?;
    let bv = source_on_field(spec, grid, v, subtract_m)?;
    Ok(Some(grid.l2_norm(&diff_field(&bu, &bv)) / denom))
}

/// Sampled lower bound on the L² Lipschitz constant of the map chosen by
/// `subtract_m` (the raw source, or the residual after removing the linear
/// split). Deterministic for a fixed seed; the maximum over the first
/// `n_samples` draws is nondecreasing in `n_samples`.
fn estimate_lipschitz_impl(
    spec: &SystemSpec,
    grid: &Grid,
    opts: &SamplingOptions,
    subtract_m: bool,
) -> Result<f64, ModelError> {
    if opts.n_samples < 100 {
        return Err(ModelError::Invalid(format!(
            "lipschitz estimation needs at least 100 samples, got {}",
            opts.n_samples
        )));
    }
    let n = spec.n;
    let mut best = 0.0f64;

    // deterministic secant probes through the origin, one per component
    let zero = vec![vec![0.0; grid.n_nodes()]; n];
    for i in 0..n {
        let mut probe = zero.clone();
        for v in probe[i].iter_mut() {
            *v = PROBE_EPS;
        }
        if let Some(r) = lipschitz_ratio(spec, grid, &zero, &probe, subtract_m)? {
            best = best.max(r);
        }
    }

    let mut rng = Rng::new(opts.seed);
    for _ in 0..opts.n_samples {
        let u = random_field(&mut rng, grid, n, opts.amplitude);
        let v = random_field(&mut rng, grid, n, opts.amplitude);
        if let Some(r) = lipschitz_ratio(spec, grid, &u, &v, subtract_m)? {
            best = best.max(r);
        }
        // small perturbation pair around u
        let delta = random_field(&mut rng, grid, n, 1.0);
        let mut u_eps = u.clone();
        for (comp, dcomp) in u_eps.iter_mut().zip(&delta) {
            for (x, d) in comp.iter_mut().zip(dcomp) {
                *x += PROBE_EPS * d;
            }
        }
        if let Some(r) = lipschitz_ratio(spec, grid, &u, &u_eps, subtract_m)? {
            best = best.max(r);
        }
    }
    Ok(best)
}

/// Sampled lower bound on the Lipschitz constant of `B`.
pub fn estimate_lipschitz(
    spec: &SystemSpec,
    grid: &Grid,
    opts: &SamplingOptions,
) -> Result<f64, ModelError> {
    estimate_lipschitz_impl(spec, grid, opts, false)
}

/// Sampled lower bound on the Lipschitz constant of the residual
/// `g = B - Mu` (equal to the `B` estimate when no `M` is given).
pub fn estimate_lipschitz_residual(
    spec: &SystemSpec,
    grid: &Grid,
    opts: &SamplingOptions,
) -> Result<f64, ModelError> {
    estimate_lipschitz_impl(spec, grid, opts, spec.source.m.is_some())
}

// ---------------------------------------------------------------------------
// Reflection bound verification
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct KReport {
    /// worst observed |G_i(out)| / Σ_j K_ij |out_j|
    pub worst_ratio: f64,
    pub violations: Vec<String>,
    pub pass: bool,
}

/// Sample random outgoing traces and check `|G_i(out)| ≤ Σ_j K_ij |out_j|`
/// for every component.
pub fn verify_k(spec: &SystemSpec, opts: &SamplingOptions) -> Result<KReport, ModelError> {
    let n = spec.n;
    let mut rng = Rng::new(opts.seed);
    let mut worst: f64 = 0.0;
    let mut violations = Vec::new();

    let check = |out: &[f64],
                     violations: &mut Vec<String>,
                     worst: &mut f64|
     -> Result<(), ModelError> {
        let g = spec.boundary_at(out)?;
        for i in 0..n {
            let mut bound = 0.0;
            for (j, o) in out.iter().enumerate() {
                bound += spec.boundary.k.get(i, j) * o.abs();
            }
            if bound > 0.0 {
                *worst = worst.max(g[i].abs() / bound);
            }
            if g[i].abs() > bound + ZERO_TOL * bound.max(1.0) && violations.len() < 8 {
                violations.push(format!(
                    "|G[{}]({out:?})| = {:.6e} exceeds bound {:.6e}",
                    i + 1,
                    g[i].abs(),
                    bound
                ));
            }
        }
        Ok(())
    };

    // axis probes at a few magnitudes, then random traces
    for j in 0..n {
        for mag in [PROBE_EPS, 0.5 * opts.amplitude, opts.amplitude] {
            for sign in [-1.0, 1.0] {
                let mut out = vec![0.0; n];
                out[j] = sign * mag;
                check(&out, &mut violations, &mut worst)?;
            }
        }
    }
    for _ in 0..opts.n_samples {
        let out: Vec<f64> = (0..n).map(|_| rng.uniform(-opts.amplitude, opts.amplitude)).collect();
        check(&out, &mut violations, &mut worst)?;
    }

    let pass = violations.is_empty();
    Ok(KReport { worst_ratio: worst, violations, pass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    #[test]
    fn grid_basics() {
        let g = Grid::new(10, 2.0).unwrap();
        assert_eq!(g.n_nodes(), 11);
        assert_eq!(g.spacing(), 0.2);
        assert_eq!(g.node(0), 0.0);
        assert_eq!(g.node(10), 2.0);
        assert!(Grid::new(4, 1.0).is_err());
        // trapezoid is exact for affine data
        let vals: Vec<f64> = g.nodes().map(|x| 3.0 * x + 1.0).collect();
        assert!((g.integrate(&vals) - (3.0 * 2.0 + 2.0)).abs() < 1e-12);
    }

    #[test]
    fn counterflow_spec_validates() {
        let spec = presets::sine_counterflow(0.25, 1.0, 0.75);
        let report = validate_spec(&spec);
        assert!(report.pass(), "{report}");
    }

    #[test]
    fn vanishing_speed_fails_validation() {
        let json = r#"{
            "name": "bad", "n": 1, "m": 1, "L": 1.0,
            "lambda": ["x-0.5"],
            "source": {"B": ["0"], "C_B": 0.0},
            "boundary": {"G": ["0*out[1]"], "K": [[0.0]]}
        }"#;
        let spec = SystemSpec::from_json(json).unwrap();
        let report = validate_spec(&spec);
        assert!(!report.pass());
        assert!(!report.checks[0].pass);
    }

    #[test]
    fn nonzero_source_at_origin_fails_validation() {
        let json = r#"{
            "name": "bad", "n": 2, "m": 1, "L": 1.0,
            "lambda": ["1", "-1"],
            "source": {"B": ["sin(I[2])+1", "0"], "C_B": 1.0},
            "boundary": {"G": ["out[2]", "out[1]"], "K": [[0.0,1.0],[1.0,0.0]]}
        }"#;
        let spec = SystemSpec::from_json(json).unwrap();
        let report = validate_spec(&spec);
        assert!(!report.checks[1].pass);
    }

    #[test]
    fn json_round_trip_and_unknown_field_rejection() {
        let spec = presets::damped_exchange();
        let text = spec.to_json();
        let back = SystemSpec::from_json(&text).unwrap();
        assert_eq!(back.n, spec.n);
        assert_eq!(back.to_json(), text);

        let bad = text.replace("\"name\"", "\"extra\": 1, \"name\"");
        assert!(matches!(SystemSpec::from_json(&bad), Err(ModelError::Json(_))));
    }

    #[test]
    fn negative_k_entry_rejected() {
        let json = r#"{
            "name": "bad", "n": 1, "m": 1, "L": 1.0,
            "lambda": ["1"],
            "source": {"B": ["0"], "C_B": 0.0},
            "boundary": {"G": ["0*out[1]"], "K": [[-0.5]]}
        }"#;
        assert!(matches!(SystemSpec::from_json(json), Err(ModelError::Invalid(_))));
    }

    #[test]
    fn affine_weights_give_identity_interior_term() {
        // J² = (2.5 - x, 2.5 + x), Λ = (1, -1): (J²Λ)' = (-1, -1)
        let spec = presets::sine_counterflow(0.25, 1.0, 0.75);
        let grid = Grid::new(64, 1.0).unwrap();
        let weights = presets::sine_counterflow_weights(1.0, 1.5);
        let fields = sample_coefficients(&spec, &grid, &weights.j2, &weights.d).unwrap();
        for i in 0..2 {
            for j in 0..grid.n_nodes() {
                assert!(
                    (fields.j2_lambda_deriv[i][j] + 1.0).abs() < 1e-9,
                    "component {i} node {j}: {}",
                    fields.j2_lambda_deriv[i][j]
                );
            }
        }
    }

    #[test]
    fn constant_weights_constant_speeds_zero_derivative() {
        let json = r#"{
            "name": "const", "n": 2, "m": 1, "L": 1.0,
            "lambda": ["2", "-3"],
            "source": {"B": ["0", "0"], "C_B": 0.0},
            "boundary": {"G": ["0*out[1]", "0*out[1]"], "K": [[0.0,0.0],[0.0,0.0]]}
        }"#;
        let spec = SystemSpec::from_json(json).unwrap();
        let grid = Grid::new(32, 1.0).unwrap();
        let ctx = VariableContext::coefficient();
        let j2: Vec<_> =
            ["1.7", "0.4"].iter().map(|s| Expression::parse(s, &ctx).unwrap()).collect();
        let d: Vec<_> = ["1", "1"].iter().map(|s| Expression::parse(s, &ctx).unwrap()).collect();
        let fields = sample_coefficients(&spec, &grid, &j2, &d).unwrap();
        for comp in &fields.j2_lambda_deriv {
            for v in comp {
                assert!(v.abs() < 1e-10);
            }
        }
    }

    #[test]
    fn exponential_weight_derivative_matches_analytic() {
        let spec = presets::damped_exchange();
        let weights = presets::damped_exchange_weights();
        for n_cells in [256, 512] {
            let grid = Grid::new(n_cells, 1.0).unwrap();
            let fields = sample_coefficients(&spec, &grid, &weights.j2, &weights.d).unwrap();
            // (J²Λ)' = (-0.5 e^{-x/2}, -0.5 e^{x/2})
            for (j, x) in grid.nodes().enumerate() {
                let want0 = -0.5 * (-0.5 * x).exp();
                let want1 = -0.5 * (0.5 * x).exp();
                assert!((fields.j2_lambda_deriv[0][j] - want0).abs() < 1e-6);
                assert!((fields.j2_lambda_deriv[1][j] - want1).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn derivative_is_second_order() {
        // smooth non-polynomial weight: error drops by ~4x when dx halves
        let json = r#"{
            "name": "smooth", "n": 1, "m": 1, "L": 1.0,
            "lambda": ["1+0.5*sin(2*x)"],
            "source": {"B": ["0"], "C_B": 0.0},
            "boundary": {"G": ["0*out[1]"], "K": [[0.0]]}
        }"#;
        let spec = SystemSpec::from_json(json).unwrap();
        let ctx = VariableContext::coefficient();
        let j2 = vec![Expression::parse("exp(0.7*x)", &ctx).unwrap()];
        let d = vec![Expression::parse("1", &ctx).unwrap()];
        let exact = |x: f64| {
            // d/dx [ e^{0.7x} (1 + 0.5 sin 2x) ]
            (0.7 * x).exp() * (0.7 * (1.0 + 0.5 * (2.0 * x).sin()) + (2.0 * x).cos())
        };
        let max_err = |cells: usize| {
            let grid = Grid::new(cells, 1.0).unwrap();
            let fields = sample_coefficients(&spec, &grid, &j2, &d).unwrap();
            grid.nodes()
                .enumerate()
                .map(|(j, x)| (fields.j2_lambda_deriv[0][j] - exact(x)).abs())
                .fold(0.0f64, f64::max)
        };
        let e1 = max_err(64);
        let e2 = max_err(128);
        let factor = e1 / e2;
        assert!(
            (3.5..=4.5).contains(&factor),
            "expected ~4x error reduction, got {factor} ({e1} -> {e2})"
        );
    }

    #[test]
    fn lipschitz_estimate_counterflow() {
        // true constant is |c| = 0.25
        let spec = presets::sine_counterflow(0.25, 1.0, 0.0);
        let grid = Grid::new(128, 1.0).unwrap();
        let opts = SamplingOptions { n_samples: 200, amplitude: 1.0, seed: 1 };
        let est = estimate_lipschitz(&spec, &grid, &opts).unwrap();
        assert!(est > 0.20 && est <= 0.25 + 1e-9, "estimate {est}");
    }

    #[test]
    fn lipschitz_estimate_linear_source_bounded_by_operator_norm() {
        // B = M u with constant M: largest singular value of [[0, 0.3], [0.1, 0]]
        let json = r#"{
            "name": "linear", "n": 2, "m": 1, "L": 1.0,
            "lambda": ["1", "-1"],
            "source": {"B": ["0.3*u[2]", "0.1*u[1]"], "C_B": 0.3},
            "boundary": {"G": ["out[2]", "out[1]"], "K": [[0.0,1.0],[1.0,0.0]]}
        }"#;
        let spec = SystemSpec::from_json(json).unwrap();
        let grid = Grid::new(64, 1.0).unwrap();
        let opts = SamplingOptions { n_samples: 150, amplitude: 2.0, seed: 5 };
        let est = estimate_lipschitz(&spec, &grid, &opts).unwrap();
        assert!(est <= 0.3 + 1e-6, "estimate {est} exceeds operator norm");
        assert!(est > 0.25, "estimate {est} far below operator norm");
    }

    #[test]
    fn lipschitz_estimate_zero_source() {
        let json = r#"{
            "name": "zero", "n": 1, "m": 1, "L": 1.0,
            "lambda": ["1"],
            "source": {"B": ["0*u[1]"], "C_B": 0.0},
            "boundary": {"G": ["0*out[1]"], "K": [[0.0]]}
        }"#;
        let spec = SystemSpec::from_json(json).unwrap();
        let grid = Grid::new(64, 1.0).unwrap();
        let est = estimate_lipschitz(&spec, &grid, &SamplingOptions::default()).unwrap();
        assert_eq!(est, 0.0);
    }

    #[test]
    fn lipschitz_estimate_monotone_in_samples() {
        let spec = presets::sine_counterflow(0.25, 1.0, 0.0);
        let grid = Grid::new(64, 1.0).unwrap();
        let mut prev = 0.0;
        for n_samples in [100, 200, 400] {
            let opts = SamplingOptions { n_samples, amplitude: 1.0, seed: 9 };
            let est = estimate_lipschitz(&spec, &grid, &opts).unwrap();
            assert!(est >= prev);
            prev = est;
        }
    }

    #[test]
    fn verify_k_counterflow_equality() {
        let spec = presets::sine_counterflow(0.25, 1.0, 0.75);
        let report = verify_k(&spec, &SamplingOptions::default()).unwrap();
        assert!(report.pass, "{:?}", report.violations);
        assert!((report.worst_ratio - 1.0).abs() < 1e-9, "worst {}", report.worst_ratio);
    }

    #[test]
    fn verify_k_zero_bound_violated() {
        let json = r#"{
            "name": "bad", "n": 2, "m": 1, "L": 1.0,
            "lambda": ["1", "-1"],
            "source": {"B": ["0", "0"], "C_B": 0.0},
            "boundary": {"G": ["out[2]", "out[1]"], "K": [[0.0,0.0],[0.0,0.0]]}
        }"#;
        let spec = SystemSpec::from_json(json).unwrap();
        let report = verify_k(&spec, &SamplingOptions::default()).unwrap();
        assert!(!report.pass);
    }

    #[test]
    fn verify_k_tanh_within_unit_bound() {
        let json = r#"{
            "name": "tanh", "n": 2, "m": 1, "L": 1.0,
            "lambda": ["1", "-1"],
            "source": {"B": ["0", "0"], "C_B": 0.0},
            "boundary": {"G": ["tanh(out[2])", "tanh(out[1])"], "K": [[0.0,1.0],[1.0,0.0]]}
        }"#;
        let spec = SystemSpec::from_json(json).unwrap();
        let opts = SamplingOptions { n_samples: 500, amplitude: 3.0, seed: 2 };
        let report = verify_k(&spec, &opts).unwrap();
        assert!(report.pass, "{:?}", report.violations);
        assert!(report.worst_ratio <= 1.0 + 1e-12);
    }
}
