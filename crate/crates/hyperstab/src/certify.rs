//! Stability and ISS certificates.
//!
//! Certification evaluates two conditions built from diagonal weights
//! `J²(x)` (and an optional scaling `D(x)` plus linear split `M(x)`):
//!
//! - *interior*: the matrix `-D(J²Λ)'D + DJ²MD + DMᵀJ²D` must be positive
//!   definite on the domain with smallest eigenvalue `λ_m` large enough
//!   against the residual Lipschitz constant: `C_g < λ_m / (2·max(D_i)·
//!   max(D_i J_i²))`. A relaxed pointwise variant
//!   `C_g < λ_m(x) / max_i J_i²(x)` is available for local sources.
//! - *boundary*: `N = W_in - Kᵀ W_out K` must be positive semidefinite,
//!   where `W_in`/`W_out` carry the weighted absolute boundary speeds of
//!   the incoming/outgoing traces.
//!
//! A strict pass certifies global exponential decay of the L² norm with
//! rate `λ_m (2·max(D_i J_i²))⁻¹ - C_g·max(D_i)` and gain `‖J⁻¹‖·‖J‖`.
//! The relaxed pass certifies decay without a rate: no rate formula is
//! certified under the pointwise condition, so none is reported.
//!
//! ISS gains additionally require `N` strictly positive definite; the
//! largest `ε` keeping `N - ε·KᵀW_outK` semidefinite is found by doubling
//! plus bisection and enters the disturbance gain `C₂`.

use std::fmt;

use serde::Serialize;

use crate::expr::{Expression, ParseError, VariableContext};
use crate::linalg::{congruence, LinalgError, Mat, SymMatrix, DEFAULT_PSD_TOL};
use crate::model::{sample_coefficients, Grid, ModelError, SampledCoefficients, SystemSpec, XBindings};

/// Default number of cells in the certification grid. Independent of the
/// simulation grid; `λ_m` is also reported on the doubled grid so the
/// discretization sensitivity is visible in the certificate.
pub const DEFAULT_CERT_CELLS: usize = 512;

const WEIGHT_FLOOR: f64 = 1e-10;
const EPSILON_CAP: f64 = 1e6;

#[derive(Debug, Clone)]
pub enum CertifyError {
    Model(ModelError),
    Linalg(LinalgError),
    Invalid(String),
    Json(String),
}

impl fmt::Display for CertifyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CertifyError::Model(e) => write!(f, "{e}"),
            CertifyError::Linalg(e) => write!(f, "{e}"),
            CertifyError::Invalid(msg) => write!(f, "{msg}"),
            CertifyError::Json(msg) => write!(f, "weights config error: {msg}"),
        }
    }
}

impl std::error::Error for CertifyError {}

impl From<ModelError> for CertifyError {
    fn from(e: ModelError) -> Self {
        CertifyError::Model(e)
    }
}

impl From<LinalgError> for CertifyError {
    fn from(e: LinalgError) -> Self {
        CertifyError::Linalg(e)
    }
}

// ---------------------------------------------------------------------------
// Weights
// ---------------------------------------------------------------------------

/// Diagonal Lyapunov weights: squared entries `J_i²(x)`, the diagonal
/// scaling `D_i(x)` (default 1) and an optional linear split `M(x)`
/// overriding the one in the system spec.
#[derive(Debug, Clone)]
pub struct WeightSpec {
    pub j2: Vec<Expression>,
    pub d: Vec<Expression>,
    pub m: Option<Vec<Vec<Expression>>>,
}

impl WeightSpec {
    /// Weights with `D = 1` and no linear split.
    pub fn new(j2: Vec<Expression>) -> WeightSpec {
        let one = Expression::parse("1", &VariableContext::coefficient()).expect("constant");
        let d = vec![one; j2.len()];
        WeightSpec { j2, d, m: None }
    }

    pub fn with_d(mut self, d: Vec<Expression>) -> WeightSpec {
        self.d = d;
        self
    }

    pub fn with_m(mut self, m: Vec<Vec<Expression>>) -> WeightSpec {
        self.m = Some(m);
        self
    }

    /// Load weights from JSON: `{"J2": [...], "D": [...]?, "M": [[...]]?}`.
    pub fn from_json(text: &str) -> Result<WeightSpec, CertifyError> {
        #[derive(serde::Deserialize)]
        #[serde(deny_unknown_fields)]
        struct RawWeights {
            #[serde(rename = "J2")]
            j2: Vec<String>,
            #[serde(rename = "D", default)]
            d: Option<Vec<String>>,
            #[serde(rename = "M", default)]
            m: Option<Vec<Vec<String>>>,
        }
        let raw: RawWeights =
            serde_json::from_str(text).map_err(|e| CertifyError::Json(e.to_string()))?;
        if raw.j2.is_empty() {
            return Err(CertifyError::Invalid("weights J2 must not be empty".to_string()));
        }
        let n = raw.j2.len();
        let ctx = VariableContext::coefficient();
        let parse = |s: &str, field: String| -> Result<Expression, CertifyError> {
            Expression::parse(s, &ctx).map_err(|err: ParseError| {
                CertifyError::Model(ModelError::Parse { field, err })
            })
        };
        let j2 = raw
            .j2
            .iter()
            .enumerate()
            .map(|(i, s)| parse(s, format!("J2[{}]", i + 1)))
            .collect::<Result<Vec<_>, _>>()?;
        let mut weights = WeightSpec::new(j2);
        if let Some(d_raw) = raw.d {
            if d_raw.len() != n {
                return Err(CertifyError::Invalid(format!(
                    "weights D must have {n} entries, got {}",
                    d_raw.len()
                )));
            }
            weights.d = d_raw
                .iter()
                .enumerate()
                .map(|(i, s)| parse(s, format!("D[{}]", i + 1)))
                .collect::<Result<Vec<_>, _>>()?;
        }
        if let Some(m_raw) = raw.m {
            if m_raw.len() != n || m_raw.iter().any(|row| row.len() != n) {
                return Err(CertifyError::Invalid(format!("weights M must be {n}x{n}")));
            }
            let mut m = Vec::with_capacity(n);
            for (i, row) in m_raw.iter().enumerate() {
                let mut out_row = Vec::with_capacity(n);
                for (j, s) in row.iter().enumerate() {
                    out_row.push(parse(s, format!("M[{}][{}]", i + 1, j + 1))?);
                }
                m.push(out_row);
            }
            weights.m = Some(m);
        }
        Ok(weights)
    }

    pub fn to_json(&self) -> String {
        #[derive(serde::Serialize)]
        struct RawWeights {
            #[serde(rename = "J2")]
            j2: Vec<String>,
            #[serde(rename = "D")]
            d: Vec<String>,
            #[serde(rename = "M", skip_serializing_if = "Option::is_none")]
            m: Option<Vec<Vec<String>>>,
        }
        let raw = RawWeights {
            j2: self.j2.iter().map(|e| e.to_string()).collect(),
            d: self.d.iter().map(|e| e.to_string()).collect(),
            m: self.m.as_ref().map(|rows| {
                rows.iter().map(|r| r.iter().map(|e| e.to_string()).collect()).collect()
            }),
        };
        serde_json::to_string_pretty(&raw).expect("weights serialize")
    }
}

// ---------------------------------------------------------------------------
// Certificate
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    #[serde(rename = "certified-strict")]
    CertifiedStrict,
    #[serde(rename = "certified-relaxed")]
    CertifiedRelaxed,
    #[serde(rename = "rejected")]
    Rejected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CertMode {
    #[serde(rename = "stability")]
    Stability,
    #[serde(rename = "iss")]
    Iss,
}

/// Which interior condition to check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InteriorMode {
    Strict,
    RelaxedLocal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Provenance {
    #[serde(rename = "certified")]
    Certified,
    #[serde(rename = "estimated")]
    Estimated,
}

/// Residual Lipschitz constant with its provenance.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CgValue {
    pub value: f64,
    pub provenance: Provenance,
}

impl CgValue {
    pub fn certified(value: f64) -> CgValue {
        CgValue { value, provenance: Provenance::Certified }
    }

    pub fn estimated(value: f64) -> CgValue {
        CgValue { value, provenance: Provenance::Estimated }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct IssGains {
    /// gain on the initial data: `‖J⁻¹‖·‖J‖`
    pub c1: f64,
    /// gain on the faded disturbance norms
    pub c2: f64,
    /// largest ε keeping `N - ε·KᵀW_outK` positive semidefinite
    pub epsilon: f64,
    /// whether the ε search hit its upper cap (K ≈ 0 case)
    pub epsilon_capped: bool,
    /// `λ_m - 2 C_g max(D_iJ_i²) max(D_i)`; the norm envelope decays at
    /// `μ/4` and disturbances fade at `μ/2`
    pub mu: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Certificate {
    pub verdict: Verdict,
    pub mode: CertMode,
    /// minimum over grid nodes of the smallest interior eigenvalue
    pub lambda_m: f64,
    /// the same on the doubled certification grid (discretization sensitivity)
    pub lambda_m_refined: f64,
    pub c_g: CgValue,
    pub interior_threshold: f64,
    pub interior_margin: f64,
    pub boundary_min_eig: f64,
    /// certified decay rate of the L² norm; absent for relaxed certificates
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decay_rate_norm: Option<f64>,
    /// `‖J⁻¹‖_{L∞} ‖J‖_{L∞}`
    pub gain: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iss: Option<IssGains>,
    /// true when the certificate rests on an estimated Lipschitz constant
    pub heuristic: bool,
    pub warnings: Vec<String>,
    pub grid_cells: usize,
    pub tool_version: String,
}

impl Certificate {
    pub fn is_certified(&self) -> bool {
        matches!(self.verdict, Verdict::CertifiedStrict | Verdict::CertifiedRelaxed)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("certificate serializes")
    }
}

// ---------------------------------------------------------------------------
// Interior condition
// ---------------------------------------------------------------------------

/// The interior matrix `-D(J²Λ)'D + DJ²MD + DMᵀJ²D` at one grid node.
/// With `D = I` and `M = 0` this is exactly `-(J²Λ)'`.
pub fn interior_matrix(fields: &SampledCoefficients, node: usize) -> SymMatrix {
    interior_matrix_impl(fields, node, false)
}

fn interior_matrix_impl(fields: &SampledCoefficients, node: usize, unit_d: bool) -> SymMatrix {
    let n = fields.j2.len();
    let mut entries = vec![0.0; n * n];
    let d = |i: usize| if unit_d { 1.0 } else { fields.d[i][node] };
    for i in 0..n {
        entries[i * n + i] = -d(i) * d(i) * fields.j2_lambda_deriv[i][node];
    }
    if let Some(m_nodes) = &fields.m {
        let m = &m_nodes[node];
        for i in 0..n {
            for j in 0..n {
                entries[i * n + j] += d(i) * fields.j2[i][node] * m.get(i, j) * d(j)
                    + d(i) * m.get(j, i) * fields.j2[j][node] * d(j);
            }
        }
    }
    SymMatrix::new(n, entries).expect("interior matrix is symmetric by construction")
}

#[derive(Debug, Clone, Serialize)]
pub struct InteriorReport {
    pub lambda_m: f64,
    pub threshold: f64,
    pub margin: f64,
    pub pass: bool,
}

/// Evaluate the interior condition over all grid nodes.
///
/// Strict mode: `threshold = λ_m / (2 max(D_i) max(D_i J_i²))` with the
/// maxima over all nodes and components, `margin = threshold - C_g`.
/// Relaxed mode: the pointwise condition `C_g < λ_m(x)/max_i J_i²(x)` with
/// `D = I`; the reported threshold and margin are the worst over nodes.
pub fn check_interior(
    fields: &SampledCoefficients,
    c_g: f64,
    mode: InteriorMode,
) -> Result<InteriorReport, CertifyError> {
    let nodes = fields.grid.n_nodes();
    match mode {
        InteriorMode::Strict => {
            let mut lambda_m = f64::INFINITY;
            for node in 0..nodes {
                lambda_m = lambda_m.min(interior_matrix(fields, node).smallest_eigenvalue()?);
            }
            let mut max_d = 0.0f64;
            let mut max_dj2 = 0.0f64;
            for i in 0..fields.d.len() {
                for node in 0..nodes {
                    max_d = max_d.max(fields.d[i][node]);
                    max_dj2 = max_dj2.max(fields.d[i][node] * fields.j2[i][node]);
                }
            }
            let threshold = lambda_m / (2.0 * max_d * max_dj2);
            let margin = threshold - c_g;
            Ok(InteriorReport { lambda_m, threshold, margin, pass: margin > 0.0 })
        }
        InteriorMode::RelaxedLocal => {
            let mut lambda_m = f64::INFINITY;
            let mut threshold = f64::INFINITY;
            for node in 0..nodes {
                let lm = interior_matrix_impl(fields, node, true).smallest_eigenvalue()?;
                let max_j2 =
                    (0..fields.j2.len()).map(|i| fields.j2[i][node]).fold(0.0f64, f64::max);
                lambda_m = lambda_m.min(lm);
                threshold = threshold.min(lm / max_j2);
            }
            let margin = threshold - c_g;
            Ok(InteriorReport { lambda_m, threshold, margin, pass: margin > 0.0 })
        }
    }
}

// ---------------------------------------------------------------------------
// Boundary condition
// ---------------------------------------------------------------------------

/// Pieces of the boundary condition: `N = inflow_weight - outflow_congruence`.
#[derive(Debug, Clone)]
pub struct BoundaryParts {
    pub n_matrix: SymMatrix,
    pub inflow_weight: SymMatrix,
    pub outflow_congruence: SymMatrix,
}

/// Assemble the boundary matrix from endpoint samples. Components `1..=m`
/// flow rightward: their inflow weight is taken at `L` and their outflow
/// congruence weight at `0`; components `m+1..=n` the reverse.
pub fn boundary_parts_from_samples(
    k: &Mat,
    m: usize,
    j2_at_0: &[f64],
    j2_at_l: &[f64],
    lambda_at_0: &[f64],
    lambda_at_l: &[f64],
) -> Result<BoundaryParts, CertifyError> {
    let n = j2_at_0.len();
    let mut w_in = vec![0.0; n];
    let mut w_out = vec![0.0; n];
    for i in 0..n {
        if i < m {
            w_in[i] = j2_at_l[i] * lambda_at_l[i].abs();
            w_out[i] = j2_at_0[i] * lambda_at_0[i].abs();
        } else {
            w_in[i] = j2_at_0[i] * lambda_at_0[i].abs();
            w_out[i] = j2_at_l[i] * lambda_at_l[i].abs();
        }
    }
    let inflow_weight = SymMatrix::diag(&w_in);
    let outflow_congruence = congruence(k, &SymMatrix::diag(&w_out))?;
    let n_entries: Vec<f64> = (0..n * n)
        .map(|idx| {
            let (i, j) = (idx / n, idx % n);
            inflow_weight.get(i, j) - outflow_congruence.get(i, j)
        })
        .collect();
    let n_matrix = SymMatrix::new(n, n_entries)?;
    Ok(BoundaryParts { n_matrix, inflow_weight, outflow_congruence })
}

/// Evaluate the boundary parts for a spec and weights at the domain ends.
pub fn boundary_parts(spec: &SystemSpec, weights: &WeightSpec) -> Result<BoundaryParts, CertifyError> {
    if weights.j2.len() != spec.n {
        return Err(CertifyError::Invalid(format!(
            "weights have {} components but the system has {}",
            weights.j2.len(),
            spec.n
        )));
    }
    let eval_at = |exprs: &[Expression], x: f64| -> Result<Vec<f64>, CertifyError> {
        exprs
            .iter()
            .map(|e| {
                e.eval(&XBindings { x }).map_err(|err| {
                    CertifyError::Model(ModelError::Eval { field: format!("weight at x={x}"), err })
                })
            })
            .collect()
    };
    let j2_0 = eval_at(&weights.j2, 0.0)?;
    let j2_l = eval_at(&weights.j2, spec.l)?;
    let lam_0 = spec.lambda_at(0.0)?;
    let lam_l = spec.lambda_at(spec.l)?;
    boundary_parts_from_samples(&spec.boundary.k, spec.m, &j2_0, &j2_l, &lam_0, &lam_l)
}

/// The boundary matrix `N` alone.
pub fn boundary_matrix(spec: &SystemSpec, weights: &WeightSpec) -> Result<SymMatrix, CertifyError> {
    Ok(boundary_parts(spec, weights)?.n_matrix)
}

// ---------------------------------------------------------------------------
// Certification
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub struct CertifyOptions {
    pub grid_cells: usize,
    pub psd_tol: f64,
    pub mode: InteriorMode,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        CertifyOptions {
            grid_cells: DEFAULT_CERT_CELLS,
            psd_tol: DEFAULT_PSD_TOL,
            mode: InteriorMode::Strict,
        }
    }
}

fn check_weight_positivity(fields: &SampledCoefficients) -> Result<(), CertifyError> {
    for (i, comp) in fields.j2.iter().enumerate() {
        for (j, &v) in comp.iter().enumerate() {
            if v < WEIGHT_FLOOR {
                return Err(CertifyError::Invalid(format!(
                    "J2[{}] = {v:.3e} at node {j} is below the positivity floor {WEIGHT_FLOOR:e}",
                    i + 1
                )));
            }
        }
    }
    for (i, comp) in fields.d.iter().enumerate() {
        for (j, &v) in comp.iter().enumerate() {
            if v < WEIGHT_FLOOR {
                return Err(CertifyError::Invalid(format!(
                    "D[{}] = {v:.3e} at node {j} is below the positivity floor {WEIGHT_FLOOR:e}",
                    i + 1
                )));
            }
        }
    }
    Ok(())
}

fn sample_matrix_exprs(
    exprs: &[Vec<Expression>],
    grid: &Grid,
) -> Result<Vec<Mat>, CertifyError> {
    let n = exprs.len();
    let mut per_node = Vec::with_capacity(grid.n_nodes());
    for x in grid.nodes() {
        let mut m = Mat::zero(n);
        for (i, row) in exprs.iter().enumerate() {
            for (j, e) in row.iter().enumerate() {
                let v = e.eval(&XBindings { x }).map_err(|err| {
                    CertifyError::Model(ModelError::Eval {
                        field: format!("M[{}][{}]", i + 1, j + 1),
                        err,
                    })
                })?;
                m.set(i, j, v);
            }
        }
        per_node.push(m);
    }
    Ok(per_node)
}

/// Sample all certificate inputs on a grid, honoring a weights-file `M`
/// override when present.
pub fn sample_fields(
    spec: &SystemSpec,
    weights: &WeightSpec,
    grid: &Grid,
) -> Result<SampledCoefficients, CertifyError> {
    let mut fields = sample_coefficients(spec, grid, &weights.j2, &weights.d)?;
    if let Some(m_exprs) = &weights.m {
        fields.m = Some(sample_matrix_exprs(m_exprs, grid)?);
    }
    Ok(fields)
}

fn gain_from_fields(fields: &SampledCoefficients) -> f64 {
    let mut max_j = 0.0f64;
    let mut max_inv_j = 0.0f64;
    for comp in &fields.j2 {
        for &v in comp {
            let j = v.sqrt();
            max_j = max_j.max(j);
            max_inv_j = max_inv_j.max(1.0 / j);
        }
    }
    max_inv_j * max_j
}

fn max_d_and_dj2(fields: &SampledCoefficients) -> (f64, f64) {
    let mut max_d = 0.0f64;
    let mut max_dj2 = 0.0f64;
    for i in 0..fields.d.len() {
        for node in 0..fields.grid.n_nodes() {
            max_d = max_d.max(fields.d[i][node]);
            max_dj2 = max_dj2.max(fields.d[i][node] * fields.j2[i][node]);
        }
    }
    (max_d, max_dj2)
}

/// Run the full certification: interior condition in the requested mode,
/// boundary PSD test, decay rate and gain. Rejection is a verdict, not an
/// error; errors are reserved for invalid inputs.
pub fn certify(
    spec: &SystemSpec,
    weights: &WeightSpec,
    c_g: CgValue,
    opts: &CertifyOptions,
) -> Result<Certificate, CertifyError> {
    let grid = Grid::new(opts.grid_cells, spec.l)?;
    let fields = sample_fields(spec, weights, &grid)?;
    check_weight_positivity(&fields)?;

    let interior = check_interior(&fields, c_g.value, opts.mode)?;

    // discretization sensitivity of lambda_m on the doubled grid
    let grid2 = Grid::new(opts.grid_cells * 2, spec.l)?;
    let fields2 = sample_fields(spec, weights, &grid2)?;
    let interior2 = check_interior(&fields2, c_g.value, opts.mode)?;

    let parts = boundary_parts(spec, weights)?;
    let boundary_min_eig = parts.n_matrix.smallest_eigenvalue()?;
    let boundary_psd = parts.n_matrix.is_psd(opts.psd_tol)?;

    let mut warnings = Vec::new();
    if opts.mode == InteriorMode::RelaxedLocal && spec.source_is_nonlocal() {
        warnings.push(
            "relaxed interior condition applied to a nonlocal source; the pointwise \
             criterion is only justified for local sources"
                .to_string(),
        );
    }
    let heuristic = c_g.provenance == Provenance::Estimated;
    if heuristic {
        warnings.push(
            "C_g is a sampled lower bound, not a certified Lipschitz constant; \
             treat this certificate as heuristic"
                .to_string(),
        );
    }

    let verdict = match (interior.pass, boundary_psd, opts.mode) {
        (true, true, InteriorMode::Strict) => Verdict::CertifiedStrict,
        (true, true, InteriorMode::RelaxedLocal) => Verdict::CertifiedRelaxed,
        _ => Verdict::Rejected,
    };

    let decay_rate_norm = if verdict == Verdict::CertifiedStrict {
        let (max_d, max_dj2) = max_d_and_dj2(&fields);
        Some(interior.lambda_m / (2.0 * max_dj2) - c_g.value * max_d)
    } else {
        None
    };

    Ok(Certificate {
        verdict,
        mode: CertMode::Stability,
        lambda_m: interior.lambda_m,
        lambda_m_refined: interior2.lambda_m,
        c_g,
        interior_threshold: interior.threshold,
        interior_margin: interior.margin,
        boundary_min_eig,
        decay_rate_norm,
        gain: gain_from_fields(&fields),
        iss: None,
        heuristic,
        warnings,
        grid_cells: opts.grid_cells,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
    })
}

/// Largest `ε` in `(0, cap]` keeping `N - ε·C` positive semidefinite,
/// found by doubling then bisection to relative width 1e-6. Returns the
/// value and whether the cap was hit.
fn largest_epsilon(
    n_matrix: &SymMatrix,
    c_matrix: &SymMatrix,
    psd_tol: f64,
) -> Result<(f64, bool), CertifyError> {
    let n = n_matrix.order();
    let feasible = |eps: f64| -> Result<bool, CertifyError> {
        let entries: Vec<f64> = (0..n * n)
            .map(|idx| {
                let (i, j) = (idx / n, idx % n);
                n_matrix.get(i, j) - eps * c_matrix.get(i, j)
            })
            .collect();
        Ok(SymMatrix::new(n, entries)?.is_psd(psd_tol)?)
    };

    let mut hi = 1.0;
    if feasible(hi)? {
        loop {
            if hi >= EPSILON_CAP {
                return Ok((EPSILON_CAP, true));
            }
            let next = (hi * 2.0).min(EPSILON_CAP);
            if feasible(next)? {
                hi = next;
            } else {
                // bracket [hi feasible, next infeasible]
                let mut lo = hi;
                let mut hi = next;
                while hi - lo > 1e-6 * hi {
                    let mid = 0.5 * (lo + hi);
                    if feasible(mid)? {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                return Ok((lo, false));
            }
        }
    } else {
        let mut lo = 0.0f64;
        let mut hi = 1.0f64;
        while hi - lo > 1e-6 * hi.max(1e-12) {
            let mid = 0.5 * (lo + hi);
            if feasible(mid)? {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok((lo, false))
    }
}

/// Compute ISS gains. Requires the strict interior condition and a
/// strictly positive definite boundary matrix; failure of either yields a
/// rejected ISS certificate with an explanation.
pub fn iss_gains(
    spec: &SystemSpec,
    weights: &WeightSpec,
    c_g: CgValue,
    opts: &CertifyOptions,
) -> Result<Certificate, CertifyError> {
    let strict_opts = CertifyOptions { mode: InteriorMode::Strict, ..*opts };
    let mut cert = certify(spec, weights, c_g, &strict_opts)?;
    cert.mode = CertMode::Iss;

    let parts = boundary_parts(spec, weights)?;
    let boundary_pd = parts.n_matrix.is_pd(opts.psd_tol)?;

    if cert.verdict != Verdict::CertifiedStrict {
        cert.verdict = Verdict::Rejected;
        cert.warnings.push("strict interior condition fails; no ISS gains".to_string());
        return Ok(cert);
    }
    if !boundary_pd {
        cert.verdict = Verdict::Rejected;
        cert.decay_rate_norm = None;
        cert.warnings.push(
            "boundary matrix not strictly positive definite; ISS requires a strict margin"
                .to_string(),
        );
        return Ok(cert);
    }

    let (epsilon, epsilon_capped) =
        largest_epsilon(&parts.n_matrix, &parts.outflow_congruence, opts.psd_tol)?;

    let grid = Grid::new(opts.grid_cells, spec.l)?;
    let fields = sample_fields(spec, weights, &grid)?;
    let (max_d, max_dj2) = max_d_and_dj2(&fields);
    let mu = cert.lambda_m - 2.0 * c_g.value * max_dj2 * max_d;
    let lambda_inf = fields
        .lambda
        .iter()
        .flat_map(|comp| comp.iter())
        .fold(0.0f64, |acc, v| acc.max(v.abs()));

    let c1 = cert.gain;
    let inner = (mu / 2.0) * (1.0 + 1.0 / epsilon) * lambda_inf;
    let c2 = cert.gain * ((2.0 / mu) * inner.max(1.0)).sqrt();

    cert.iss = Some(IssGains { c1, c2, epsilon, epsilon_capped, mu });
    Ok(cert)
}
