//! Direct simulation of the hyperbolic system with first-order upwind
//! transport and explicit-Euler sources, used to validate certificates.
//!
//! Each component is advected in its own flow direction; at unit CFL with
//! constant speeds the transport is an exact shift, which keeps the
//! bundled traveling-wave and decay tests sharp. Nonlocal integrals are
//! evaluated once per step at the old time level. After the transport and
//! source update the incoming boundary nodes are overwritten from the
//! boundary map applied to the freshly computed outgoing traces, plus the
//! boundary disturbance.
//!
//! Runs record the L² norm, the Lyapunov value `V = ∫ (Ju)ᵀJu dx` and the
//! disturbance norms at regular output times. On top of the traces sit
//! [`fit_decay_rate`] (log-linear least squares), [`check_iss_bound`]
//! (quadrature evaluation of the certified ISS envelope) and
//! [`convergence_study`] (observed order under grid doubling).

use std::fmt;
use std::io::Write as IoWrite;

use crate::certify::Certificate;
use crate::expr::{Expression, VariableContext};
use crate::model::{Grid, ModelError, SystemSpec, TxBindings, XBindings};

#[derive(Debug, Clone)]
pub enum SimError {
    Model(ModelError),
    /// the state left the finite range; carries the last finite time
    BlowUp { t_last: f64 },
    Invalid(String),
}

impl fmt::Display for SimError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SimError::Model(e) => write!(f, "{e}"),
            SimError::BlowUp { t_last } => {
                write!(f, "state blew up; last finite time t = {t_last}")
            }
            SimError::Invalid(msg) => write!(f, "{msg}"),
        }
    }
}

impl std::error::Error for SimError {}

impl From<ModelError> for SimError {
    fn from(e: ModelError) -> Self {
        SimError::Model(e)
    }
}

// ---------------------------------------------------------------------------
// Disturbances
// ---------------------------------------------------------------------------

/// Interior disturbances `d1_i(t, x)` and boundary disturbances `d2_i(t)`.
#[derive(Debug, Clone)]
pub struct DisturbanceSpec {
    pub d1: Vec<Expression>,
    pub d2: Vec<Expression>,
}

impl DisturbanceSpec {
    pub fn zero(n: usize) -> DisturbanceSpec {
        let zero_tx =
            Expression::parse("0", &VariableContext::disturbance_interior()).expect("constant");
        let zero_t =
            Expression::parse("0", &VariableContext::disturbance_boundary()).expect("constant");
        DisturbanceSpec { d1: vec![zero_tx; n], d2: vec![zero_t; n] }
    }

    /// Parse component lists; an empty list means "no disturbance".
    pub fn parse(d1: &[String], d2: &[String], n: usize) -> Result<DisturbanceSpec, SimError> {
        let mut out = DisturbanceSpec::zero(n);
        if !d1.is_empty() {
            if d1.len() != n {
                return Err(SimError::Invalid(format!(
                    "d1 must have {n} components, got {}",
                    d1.len()
                )));
            }
            out.d1 = d1
                .iter()
                .map(|s| Expression::parse(s, &VariableContext::disturbance_interior()))
                .collect::<Result<_, _>>()
                .map_err(|e| SimError::Invalid(format!("d1: {e}")))?;
        }
        if !d2.is_empty() {
            if d2.len() != n {
                return Err(SimError::Invalid(format!(
                    "d2 must have {n} components, got {}",
                    d2.len()
                )));
            }
            out.d2 = d2
                .iter()
                .map(|s| Expression::parse(s, &VariableContext::disturbance_boundary()))
                .collect::<Result<_, _>>()
                .map_err(|e| SimError::Invalid(format!("d2: {e}")))?;
        }
        Ok(out)
    }

    fn d1_at(&self, t: f64, x: f64) -> Result<Vec<f64>, SimError> {
        self.d1
            .iter()
            .map(|e| {
                e.eval(&TxBindings { t, x: Some(x) })
                    .map_err(|err| SimError::Model(ModelError::Eval { field: "d1".to_string(), err }))
            })
            .collect()
    }

    fn d2_at(&self, t: f64) -> Result<Vec<f64>, SimError> {
        self.d2
            .iter()
            .map(|e| {
                e.eval(&TxBindings { t, x: None })
                    .map_err(|err| SimError::Model(ModelError::Eval { field: "d2".to_string(), err }))
            })
            .collect()
    }
}

// ---------------------------------------------------------------------------
// State and stepping
// ---------------------------------------------------------------------------

/// Grid state at one instant: `u[i][j]` is component `i+1` at node `j`.
#[derive(Debug, Clone)]
pub struct State {
    pub t: f64,
    pub u: Vec<Vec<f64>>,
}

impl State {
    pub fn is_finite(&self) -> bool {
        self.u.iter().all(|comp| comp.iter().all(|v| v.is_finite()))
    }
}

/// Precomputed stepping context: sampled speeds, the time step and the
/// CFL number (1.0 when every speed is constant, 0.9 otherwise).
pub struct Stepper<'a> {
    spec: &'a SystemSpec,
    grid: Grid,
    lambda: Vec<Vec<f64>>,
    pub dt: f64,
    pub cfl: f64,
    pub max_speed: f64,
}

impl<'a> Stepper<'a> {
    pub fn new(
        spec: &'a SystemSpec,
        grid: Grid,
        cfl_override: Option<f64>,
    ) -> Result<Stepper<'a>, SimError> {
        let n = spec.n;
        let mut lambda = vec![vec![0.0; grid.n_nodes()]; n];
        for (j, x) in grid.nodes().enumerate() {
            let at = spec.lambda_at(x)?;
            for i in 0..n {
                lambda[i][j] = at[i];
            }
        }
        let mut max_speed = 0.0f64;
        let mut constant = true;
        for comp in &lambda {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for &v in comp {
                lo = lo.min(v);
                hi = hi.max(v);
                max_speed = max_speed.max(v.abs());
            }
            if hi - lo > 1e-12 * hi.abs().max(1.0) {
                constant = false;
            }
        }
        if max_speed <= 0.0 {
            return Err(SimError::Invalid("all speeds vanish".to_string()));
        }
        let cfl = match cfl_override {
            Some(c) if c > 0.0 && c <= 1.0 => c,
            Some(c) => return Err(SimError::Invalid(format!("CFL must lie in (0, 1], got {c}"))),
            None => {
                if constant {
                    1.0
                } else {
                    0.9
                }
            }
        };
        let dt = cfl * grid.spacing() / max_speed;
        Ok(Stepper { spec, grid, lambda, dt, cfl, max_speed })
    }

    /// Advance one step of size `dt` (callers may pass a shorter final
    /// step). Fails with the blow-up error when the state leaves finite
    /// range.
    pub fn step(
        &self,
        state: &mut State,
        dt: f64,
        disturbances: &DisturbanceSpec,
    ) -> Result<(), SimError> {
        let n = self.spec.n;
        let m = self.spec.m;
        let grid = &self.grid;
        let nodes = grid.n_nodes();
        let dx = grid.spacing();
        let t = state.t;

        // an overflow inside a source or boundary expression on an already
        // enormous state is a blow-up, not a config error
        let huge = state.u.iter().flatten().any(|v| v.abs() > 1e100);
        let classify = |e: SimError| -> SimError {
            match e {
                SimError::Model(_) if huge => SimError::BlowUp { t_last: t },
                other => other,
            }
        };

        // nonlocal integrals at the old time level
        let integrals: Vec<f64> = state.u.iter().map(|comp| grid.integrate(comp)).collect();

        let mut next = vec![vec![0.0; nodes]; n];
        let mut point = vec![0.0; n];
        for j in 0..nodes {
            let x = grid.node(j);
            for i in 0..n {
                point[i] = state.u[i][j];
            }
            let b = self.spec.source_at(x, &point, &integrals).map_err(|e| classify(e.into()))?;
            let d1 = disturbances.d1_at(t, x)?;
            for i in 0..n {
                let lam = self.lambda[i][j];
                let du_dx = if i < m {
                    if j == 0 {
                        0.0 // inflow node; overwritten below
                    } else {
                        (state.u[i][j] - state.u[i][j - 1]) / dx
                    }
                } else if j == nodes - 1 {
                    0.0
                } else {
                    (state.u[i][j + 1] - state.u[i][j]) / dx
                };
                next[i][j] = state.u[i][j] - dt * (lam * du_dx + b[i] + d1[i]);
            }
        }

        // incoming traces from the fresh outgoing ones
        let t_new = t + dt;
        let out: Vec<f64> =
            (0..n).map(|i| if i < m { next[i][nodes - 1] } else { next[i][0] }).collect();
        let g = self.spec.boundary_at(&out).map_err(|e| classify(e.into()))?;
        let d2 = disturbances.d2_at(t_new)?;
        for i in 0..n {
            let incoming = g[i] + d2[i];
            if i < m {
                next[i][0] = incoming;
            } else {
                next[i][nodes - 1] = incoming;
            }
        }

        state.u = next;
        state.t = t_new;
        if !state.is_finite() {
            return Err(SimError::BlowUp { t_last: t });
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Trajectories
// ---------------------------------------------------------------------------

/// Recorded time series of a run.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub l2_norm: Vec<f64>,
    pub lyapunov_v: Vec<f64>,
    /// finite-difference estimate of dV/dt between output samples
    pub dvdt_est: Vec<f64>,
    pub d1_l2: Vec<f64>,
    pub d2_abs: Vec<f64>,
    pub snapshots: Vec<State>,
    pub grid: Grid,
}

impl Trajectory {
    pub fn initial_norm(&self) -> f64 {
        self.l2_norm[0]
    }

    pub fn final_norm(&self) -> f64 {
        *self.l2_norm.last().expect("nonempty trajectory")
    }

    /// CSV with the documented header, 17 significant digits per value.
    pub fn write_csv<W: IoWrite>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "t,l2_norm,lyapunov_v,d1_l2,d2_abs")?;
        for i in 0..self.times.len() {
            writeln!(
                w,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                self.times[i], self.l2_norm[i], self.lyapunov_v[i], self.d1_l2[i], self.d2_abs[i]
            )?;
        }
        Ok(())
    }
}

/// Write a state snapshot as `x,u_1,...,u_n` rows.
pub fn write_snapshot_csv<W: IoWrite>(
    state: &State,
    grid: &Grid,
    w: &mut W,
) -> std::io::Result<()> {
    let n = state.u.len();
    write!(w, "x")?;
    for i in 1..=n {
        write!(w, ",u_{i}")?;
    }
    writeln!(w)?;
    for (j, x) in grid.nodes().enumerate() {
        write!(w, "{x:.16e}")?;
        for comp in &state.u {
            write!(w, ",{:.16e}", comp[j])?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Lyapunov value `V = ∫ Σ_i J_i²(x) u_i(x)² dx` by trapezoid quadrature;
/// `j2[i][j]` are the squared weights sampled on the same grid.
pub fn lyapunov_value(u: &[Vec<f64>], j2: &[Vec<f64>], grid: &Grid) -> f64 {
    let mut weighted = vec![0.0; grid.n_nodes()];
    let mut total = 0.0;
    for (comp, w) in u.iter().zip(j2) {
        for ((out, v), wv) in weighted.iter_mut().zip(comp).zip(w) {
            *out = wv * v * v;
        }
        total += grid.integrate(&weighted);
    }
    total
}

#[derive(Debug, Clone)]
pub struct SimOptions {
    pub grid_cells: usize,
    pub t_end: f64,
    pub cfl: Option<f64>,
    /// trace recording interval; defaults to `t_end / 500`
    pub output_interval: Option<f64>,
    /// times at which to keep full state snapshots
    pub snapshot_times: Vec<f64>,
}

impl SimOptions {
    pub fn new(grid_cells: usize, t_end: f64) -> SimOptions {
        SimOptions {
            grid_cells,
            t_end,
            cfl: None,
            output_interval: None,
            snapshot_times: Vec::new(),
        }
    }
}

/// Sample initial-data expressions on the grid.
pub fn sample_initial(initial: &[Expression], grid: &Grid) -> Result<Vec<Vec<f64>>, SimError> {
    let mut u = vec![vec![0.0; grid.n_nodes()]; initial.len()];
    for (i, expr) in initial.iter().enumerate() {
        for (j, x) in grid.nodes().enumerate() {
            u[i][j] = expr.eval(&XBindings { x }).map_err(|err| {
                SimError::Model(ModelError::Eval { field: format!("initial[{}]", i + 1), err })
            })?;
        }
    }
    Ok(u)
}

/// Run the system from `initial` to `t_end`, recording traces every output
/// interval. `weights_j2` (if given) defines the Lyapunov value; without
/// weights `V` is the plain squared norm.
pub fn simulate(
    spec: &SystemSpec,
    initial: &[Expression],
    disturbances: &DisturbanceSpec,
    weights_j2: Option<&[Expression]>,
    opts: &SimOptions,
) -> Result<Trajectory, SimError> {
    if initial.len() != spec.n {
        return Err(SimError::Invalid(format!(
            "initial data must have {} components, got {}",
            spec.n,
            initial.len()
        )));
    }
    if !(opts.t_end > 0.0) {
        return Err(SimError::Invalid(format!("horizon must be positive, got {}", opts.t_end)));
    }
    let grid = Grid::new(opts.grid_cells, spec.l)?;
    let stepper = Stepper::new(spec, grid, opts.cfl)?;

    // sampled Lyapunov weights (identity when absent)
    let j2: Vec<Vec<f64>> = match weights_j2 {
        Some(exprs) => {
            if exprs.len() != spec.n {
                return Err(SimError::Invalid(format!(
                    "weights must have {} components, got {}",
                    spec.n,
                    exprs.len()
                )));
            }
            let mut j2 = vec![vec![0.0; grid.n_nodes()]; spec.n];
            for (i, expr) in exprs.iter().enumerate() {
                for (j, x) in grid.nodes().enumerate() {
                    j2[i][j] = expr.eval(&XBindings { x }).map_err(|err| {
                        SimError::Model(ModelError::Eval { field: format!("J2[{}]", i + 1), err })
                    })?;
                }
            }
            j2
        }
        None => vec![vec![1.0; grid.n_nodes()]; spec.n],
    };

    let mut state = State { t: 0.0, u: sample_initial(initial, &grid)? };
    if !state.is_finite() {
        return Err(SimError::Invalid("initial data is not finite".to_string()));
    }

    let output_interval = opts.output_interval.unwrap_or(opts.t_end / 500.0);
    let mut traj = Trajectory {
        times: Vec::new(),
        l2_norm: Vec::new(),
        lyapunov_v: Vec::new(),
        dvdt_est: Vec::new(),
        d1_l2: Vec::new(),
        d2_abs: Vec::new(),
        snapshots: Vec::new(),
        grid,
    };

    let record = |state: &State, traj: &mut Trajectory| -> Result<(), SimError> {
        let t = state.t;
        traj.times.push(t);
        traj.l2_norm.push(grid.l2_norm(&state.u));
        let v = lyapunov_value(&state.u, &j2, &grid);
        if let (Some(&t_prev), Some(&v_prev)) =
            (traj.times.iter().rev().nth(1), traj.lyapunov_v.last())
        {
            traj.dvdt_est.push((v - v_prev) / (t - t_prev));
        } else {
            traj.dvdt_est.push(0.0);
        }
        traj.lyapunov_v.push(v);
        let mut d1_field = vec![vec![0.0; grid.n_nodes()]; spec.n];
        for (j, x) in grid.nodes().enumerate() {
            let d1 = disturbances.d1_at(t, x)?;
            for i in 0..spec.n {
                d1_field[i][j] = d1[i];
            }
        }
        traj.d1_l2.push(grid.l2_norm(&d1_field));
        let d2 = disturbances.d2_at(t)?;
        traj.d2_abs.push(d2.iter().map(|v| v * v).sum::<f64>().sqrt());
        Ok(())
    };

    record(&state, &mut traj)?;

    let mut snapshot_queue: Vec<f64> = opts.snapshot_times.clone();
    snapshot_queue.sort_by(|a, b| a.partial_cmp(b).unwrap());
    snapshot_queue.reverse(); // pop back in ascending time order
    if snapshot_queue.last().is_some_and(|&t0| t0 <= 0.0) {
        traj.snapshots.push(state.clone());
        snapshot_queue.pop();
    }

    let mut next_output = output_interval;
    let eps = 1e-12 * opts.t_end.max(1.0);
    while state.t < opts.t_end - eps {
        let dt = stepper.dt.min(opts.t_end - state.t);
        stepper.step(&mut state, dt, disturbances)?;
        while snapshot_queue.last().is_some_and(|&ts| state.t >= ts - eps) {
            traj.snapshots.push(state.clone());
            snapshot_queue.pop();
        }
        if state.t >= next_output - eps || state.t >= opts.t_end - eps {
            record(&state, &mut traj)?;
            while next_output <= state.t + eps {
                next_output += output_interval;
            }
        }
    }
    Ok(traj)
}

// ---------------------------------------------------------------------------
// Decay-rate fitting
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct DecayFit {
    /// decay rate (negated slope of the log-norm)
    pub rate: f64,
    pub r_squared: f64,
    pub samples: usize,
}

/// Least-squares slope of `log ‖u(t)‖` over `[t0, t1]`; `rate = -slope`.
/// Needs at least 10 samples in the window, all with norms above 1e-14.
pub fn fit_decay_rate(traj: &Trajectory, window: (f64, f64)) -> Result<DecayFit, SimError> {
    let (t0, t1) = window;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (i, &t) in traj.times.iter().enumerate() {
        if t >= t0 && t <= t1 {
            let norm = traj.l2_norm[i];
            if norm <= 1e-14 {
                return Err(SimError::Invalid(format!(
                    "norm {norm:e} at t = {t} is below the fit floor; shrink the window"
                )));
            }
            xs.push(t);
            ys.push(norm.ln());
        }
    }
    if xs.len() < 10 {
        return Err(SimError::Invalid(format!(
            "window [{t0}, {t1}] holds only {} samples; at least 10 needed",
            xs.len()
        )));
    }
    let n = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / n;
    let mean_y = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        sxx += (x - mean_x) * (x - mean_x);
        sxy += (x - mean_x) * (y - mean_y);
        syy += (y - mean_y) * (y - mean_y);
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Ok(DecayFit { rate: -slope, r_squared, samples: xs.len() })
}

// ---------------------------------------------------------------------------
// ISS bound checking
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, serde::Serialize)]
pub struct IssBoundReport {
    /// max over samples of ‖u(t)‖ / (certified right side)
    pub max_ratio: f64,
    pub worst_time: f64,
    pub pass: bool,
}

/// Discretization allowance on the ISS envelope check.
pub const ISS_RATIO_TOL: f64 = 0.05;

/// Evaluate the certified ISS envelope along a recorded trajectory:
///
/// ```text
/// ‖u(t)‖ ≤ C₁ e^{-(μ/4) t} ‖u₀‖
///        + C₂ (‖e^{-(μ/2)(t-s)} d₁‖_{L²((0,t)×(0,L))} + ‖e^{-(μ/2)(t-s)} d₂‖_{L²(0,t)})
/// ```
///
/// with the faded disturbance norms computed by trapezoid quadrature over
/// the recorded samples. Passes while the worst ratio stays below
/// `1 + ISS_RATIO_TOL`.
pub fn check_iss_bound(traj: &Trajectory, cert: &Certificate) -> Result<IssBoundReport, SimError> {
    let iss = cert
        .iss
        .ok_or_else(|| SimError::Invalid("certificate carries no ISS gains".to_string()))?;
    if traj.times.len() < 2 {
        return Err(SimError::Invalid("trajectory too short for the ISS check".to_string()));
    }
    let u0 = traj.initial_norm();
    let mu = iss.mu;
    let mut max_ratio = 0.0f64;
    let mut worst_time = 0.0;

    // running fading integrals F(t) = ∫_0^t e^{-μ(t-s)} q(s) ds advanced
    // sample to sample via F(t+h) = e^{-μh} F(t) + trapezoid increment
    let mut fade_d1 = 0.0f64;
    let mut fade_d2 = 0.0f64;
    for i in 0..traj.times.len() {
        let t = traj.times[i];
        if i > 0 {
            let h = t - traj.times[i - 1];
            let decay = (-mu * h).exp();
            let q1_prev = traj.d1_l2[i - 1] * traj.d1_l2[i - 1];
            let q1_here = traj.d1_l2[i] * traj.d1_l2[i];
            fade_d1 = decay * fade_d1 + 0.5 * h * (decay * q1_prev + q1_here);
            let q2_prev = traj.d2_abs[i - 1] * traj.d2_abs[i - 1];
            let q2_here = traj.d2_abs[i] * traj.d2_abs[i];
            fade_d2 = decay * fade_d2 + 0.5 * h * (decay * q2_prev + q2_here);
        }
        let rhs = iss.c1 * (-mu * t / 4.0).exp() * u0 + iss.c2 * (fade_d1.sqrt() + fade_d2.sqrt());
        if rhs > 0.0 {
            let ratio = traj.l2_norm[i] / rhs;
            if ratio > max_ratio {
                max_ratio = ratio;
                worst_time = t;
            }
        }
    }
    Ok(IssBoundReport { max_ratio, worst_time, pass: max_ratio <= 1.0 + ISS_RATIO_TOL })
}

// ---------------------------------------------------------------------------
// Convergence study
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum ConvergenceRegime {
    /// successive differences at machine precision (exact-transport cases)
    Exact,
    Ordered,
    NonMonotone,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct ConvergenceReport {
    pub grid_cells: Vec<usize>,
    /// L² differences between consecutive grids at the final time
    pub errors: Vec<f64>,
    /// pairwise observed orders log2(e_k / e_{k+1})
    pub orders: Vec<f64>,
    /// mean observed order (absent outside the ordered regime)
    pub observed_order: Option<f64>,
    pub regime: ConvergenceRegime,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

/// Run the same problem on a doubling sequence of grids and report the
/// observed order of the successive L² differences at the final time.
pub fn convergence_study(
    spec: &SystemSpec,
    initial: &[Expression],
    t_end: f64,
    grids: &[usize],
) -> Result<ConvergenceReport, SimError> {
    if grids.len() < 3 {
        return Err(SimError::Invalid("need at least 3 grids".to_string()));
    }
    for pair in grids.windows(2) {
        if pair[1] != 2 * pair[0] {
            return Err(SimError::Invalid(format!(
                "grids must double: {} does not follow {}",
                pair[1], pair[0]
            )));
        }
    }
    let zero = DisturbanceSpec::zero(spec.n);
    let mut finals: Vec<(Grid, Vec<Vec<f64>>)> = Vec::new();
    for &cells in grids {
        let opts = SimOptions {
            output_interval: Some(t_end),
            snapshot_times: vec![t_end],
            ..SimOptions::new(cells, t_end)
        };
        let traj = simulate(spec, initial, &zero, None, &opts)?;
        let state = traj
            .snapshots
            .into_iter()
            .next_back()
            .ok_or_else(|| SimError::Invalid("missing final snapshot".to_string()))?;
        finals.push((traj.grid, state.u));
    }

    let mut errors = Vec::new();
    for w in finals.windows(2) {
        let (coarse_grid, coarse) = &w[0];
        let (_, fine) = &w[1];
        // fine-grid nodes 2j coincide with coarse nodes j
        let diff: Vec<Vec<f64>> = coarse
            .iter()
            .zip(fine)
            .map(|(c, f)| c.iter().enumerate().map(|(j, v)| v - f[2 * j]).collect())
            .collect();
        errors.push(coarse_grid.l2_norm(&diff));
    }

    let scale = finals[0].1.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
    if errors.iter().all(|&e| e < 1e-12 * scale) {
        return Ok(ConvergenceReport {
            grid_cells: grids.to_vec(),
            errors,
            orders: Vec::new(),
            observed_order: None,
            regime: ConvergenceRegime::Exact,
            warning: None,
        });
    }
    if errors.windows(2).any(|w| w[1] >= w[0]) {
        return Ok(ConvergenceReport {
            grid_cells: grids.to_vec(),
            errors,
            orders: Vec::new(),
            observed_order: None,
            regime: ConvergenceRegime::NonMonotone,
            warning: Some("errors do not decrease monotonically; order not computed".to_string()),
        });
    }
    let orders: Vec<f64> = errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let mean = orders.iter().sum::<f64>() / orders.len() as f64;
    let warning = (mean < 0.8)
        .then(|| format!("observed order {mean:.2} below first order; data may lack smoothness"));
    Ok(ConvergenceReport {
        grid_cells: grids.to_vec(),
        errors,
        orders,
        observed_order: Some(mean),
        regime: ConvergenceRegime::Ordered,
        warning,
    })
}
