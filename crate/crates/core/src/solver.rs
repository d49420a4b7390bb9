//! Projected gradient descent on `(Z, α, β)` for the partial-view likelihood.
//!
//! Every iteration evaluates `Θᵗ` and `Pᵗ = σ(Θᵗ)` once, forms the residual
//! `R = B - S(Pᵗ)` (diagonal excluded) and moves all three parameter blocks
//! from that same iterate:
//!
//! ```text
//! Z     += 2 η_Z  R Z
//! α_S   += 2 η_αS (R 1)_S        α_{I-S} += 2 η_αIS (R 1)_{I-S}
//! β     +=   η_β  <R, X>
//! ```
//!
//! followed by a projection. Rows of `R` outside the neighborhood are only
//! nonzero on neighborhood columns, so `(R 1)_{I-S}` is the sum over `𝒮`.

use log::warn;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{frobenius_sq, op_norm};
use crate::metrics::{ErrorReport, TruthReference};
use crate::model::{log_one_minus_sigmoid, sigmoid, Bounds, Likelihood, Params};
use crate::simgen::GroundTruth;
use crate::view::PartialView;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProjectionMode {
    /// `Z ← JZ`; `α` and `β` are left alone.
    #[default]
    Practical,
    /// Group centering plus the bounded constraint sets: row norms
    /// `‖z_i‖² ≤ M1/3`, `‖α‖_∞ ≤ M1/6` and `|β| max|X_ij| ≤ M1/3`.
    Theoretical,
}

impl std::str::FromStr for ProjectionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "practical" => Ok(ProjectionMode::Practical),
            "theoretical" => Ok(ProjectionMode::Theoretical),
            other => Err(Error::Config(format!("unknown projection `{other}` (expected practical or theoretical)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub eta: f64,
    pub iterations: usize,
    pub projection: ProjectionMode,
    pub bounds: Bounds,
    pub likelihood: Likelihood,
    /// Stop once the relative objective change stays below this value for
    /// ten consecutive iterations.
    pub stop_tol: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            eta: 0.2,
            iterations: 500,
            projection: ProjectionMode::Practical,
            bounds: Bounds::default(),
            likelihood: Likelihood::Full,
            stop_tol: None,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::Config(format!("eta must be positive, got {}", self.eta)));
        }
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSizes {
    pub z: f64,
    pub alpha_s: f64,
    pub alpha_out: f64,
    /// Zero when the masked covariates vanish; `β` is then frozen.
    pub beta: f64,
}

/// `η_Z = η / (2‖Z⁰‖²_op)`, `η_αS = η / 4n`, `η_αI-S = η / 4n_S`,
/// `η_β = η / (2‖S(X)‖²_F)`.
pub fn compute_step_sizes(z0: &DMatrix<f64>, view: &PartialView, x: &DMatrix<f64>, eta: f64) -> Result<StepSizes> {
    let z_op = op_norm(z0);
    if z_op == 0.0 || !z_op.is_finite() {
        return Err(Error::DegenerateInit);
    }
    let sx = frobenius_sq(&view.mask(x)?);
    let beta = if sx > 0.0 {
        eta / (2.0 * sx)
    } else {
        warn!("masked covariates are zero; beta cannot be estimated and stays fixed");
        0.0
    };
    Ok(StepSizes {
        z: eta / (2.0 * z_op * z_op),
        alpha_s: eta / (4.0 * view.n() as f64),
        alpha_out: eta / (4.0 * view.n_s() as f64),
        beta,
    })
}

/// Residual `B - S(P)` on the likelihood's pairs together with the objective
/// value at `params`, from a single pass over the observed pairs.
fn residual_and_objective(
    view: &PartialView,
    x: &DMatrix<f64>,
    params: &Params,
    kind: Likelihood,
) -> Result<(DMatrix<f64>, f64)> {
    let theta = params.theta(x)?;
    let n = view.n();
    let b = view.b();
    let mut r = DMatrix::zeros(n, n);
    let mut objective = 0.0;
    view.for_each_observed_pair(|i, j| {
        if kind.includes(view, i, j) {
            let t = theta[(i, j)];
            let v = b[(i, j)] - sigmoid(t);
            r[(i, j)] = v;
            r[(j, i)] = v;
            objective -= b[(i, j)] * t + log_one_minus_sigmoid(t);
        }
    });
    Ok((r, objective))
}

/// One iteration: gradient move from `params`, then projection. Returns the
/// new parameters and the objective at the incoming `params`.
pub fn pgd_step(
    params: &Params,
    view: &PartialView,
    x: &DMatrix<f64>,
    steps: &StepSizes,
    config: &SolverConfig,
    iteration: usize,
) -> Result<(Params, f64)> {
    let (r, objective) = residual_and_objective(view, x, params, config.likelihood)?;
    let moved = gradient_move(params, &r, view, x, steps);
    let next = project(&moved, view, x, config)?;
    if !next.is_finite() || !objective.is_finite() {
        return Err(Error::NonFinite { iteration });
    }
    Ok((next, objective))
}

fn gradient_move(params: &Params, r: &DMatrix<f64>, view: &PartialView, x: &DMatrix<f64>, steps: &StepSizes) -> Params {
    let z = &params.z + (r * &params.z) * (2.0 * steps.z);
    let row_sums = r.column_sum();
    let mut alpha = params.alpha.clone();
    for i in 0..view.n() {
        let step = if view.contains(i) { steps.alpha_s } else { steps.alpha_out };
        alpha[i] += 2.0 * step * row_sums[i];
    }
    let beta = params.beta + steps.beta * r.dot(x);
    Params { z, alpha, beta }
}

pub fn project(params: &Params, view: &PartialView, x: &DMatrix<f64>, config: &SolverConfig) -> Result<Params> {
    let mut z = view.center_rows(&params.z)?;
    let mut alpha = params.alpha.clone();
    let mut beta = params.beta;
    if config.projection == ProjectionMode::Theoretical {
        let m1 = config.bounds.m1;
        z = project_centered_ball(&params.z, view, m1 / 3.0)?;
        let a_max = m1 / 6.0;
        alpha.apply(|a| *a = a.clamp(-a_max, a_max));
        let x_max = max_off_diagonal_abs(x);
        if x_max > 0.0 {
            let b_max = m1 / (3.0 * x_max);
            beta = beta.clamp(-b_max, b_max);
        }
    }
    Ok(Params { z, alpha, beta })
}

const DYKSTRA_MAX_ROUNDS: usize = 10_000;
const DYKSTRA_TOL: f64 = 1e-15;

fn clip_rows(z: &mut DMatrix<f64>, radius_sq: f64) {
    for mut row in z.row_iter_mut() {
        let norm_sq = row.norm_squared();
        if norm_sq > radius_sq {
            row *= (radius_sq / norm_sq).sqrt();
        }
    }
}

/// Euclidean projection onto group-centered matrices whose rows satisfy
/// `‖z_i‖² ≤ radius_sq`, by Dykstra's alternating projections.
fn project_centered_ball(z: &DMatrix<f64>, view: &PartialView, radius_sq: f64) -> Result<DMatrix<f64>> {
    let centered = view.center_rows(z)?;
    if centered.row_iter().all(|r| r.norm_squared() <= radius_sq) {
        return Ok(centered);
    }
    let scale = z.norm().max(1.0);
    let mut x = z.clone();
    let mut p = DMatrix::zeros(z.nrows(), z.ncols());
    let mut q = DMatrix::zeros(z.nrows(), z.ncols());
    for _ in 0..DYKSTRA_MAX_ROUNDS {
        let y = view.center_rows(&(&x + &p))?;
        p = &x + &p - &y;
        let mut next = &y + &q;
        clip_rows(&mut next, radius_sq);
        q = &y + &q - &next;
        let moved = (&next - &x).amax();
        let gap = (&next - &y).amax();
        x = next;
        if moved <= DYKSTRA_TOL * scale && gap <= DYKSTRA_TOL * scale {
            break;
        }
    }
    Ok(x)
}

fn max_off_diagonal_abs(x: &DMatrix<f64>) -> f64 {
    let n = x.nrows();
    let mut m: f64 = 0.0;
    for j in 0..n {
        for i in 0..n {
            if i != j {
                m = m.max(x[(i, j)].abs());
            }
        }
    }
    m
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub params: Params,
    /// Objective at every iterate, starting with the initial value.
    pub objective_trace: Vec<f64>,
    /// Error metrics at every iterate when ground truth was supplied.
    pub truth_trace: Option<Vec<ErrorReport>>,
    pub iterations_run: usize,
    pub step_sizes: StepSizes,
    pub stopped_early: bool,
}

impl FitResult {
    pub fn e_t_trace(&self) -> Option<Vec<f64>> {
        self.truth_trace.as_ref().map(|t| t.iter().map(|r| r.e_t).collect())
    }

    pub fn final_objective(&self) -> f64 {
        *self.objective_trace.last().expect("trace holds the initial value")
    }
}

const STALL_WINDOW: usize = 10;

/// Runs the projected gradient descent from `init`.
pub fn fit(
    view: &PartialView,
    x: &DMatrix<f64>,
    init: Params,
    config: &SolverConfig,
    truth: Option<&GroundTruth>,
) -> Result<FitResult> {
    config.validate()?;
    let n = view.n();
    if init.n() != n || init.z.nrows() != n {
        return Err(Error::dim("init", format!("{n} nodes"), format!("{} nodes", init.n())));
    }
    if x.nrows() != n || x.ncols() != n {
        return Err(Error::dim("X", format!("{n}x{n}"), format!("{}x{}", x.nrows(), x.ncols())));
    }
    let steps = compute_step_sizes(&init.z, view, x, config.eta)?;
    let reference = truth
        .map(|t| TruthReference::new(t, view, config.likelihood == Likelihood::Conditional))
        .transpose()?;

    let mut params = init;
    let mut objective_trace: Vec<f64> = Vec::with_capacity(config.iterations + 1);
    let mut truth_trace = reference.as_ref().map(|_| Vec::with_capacity(config.iterations + 1));
    let mut stalled = 0;
    let mut stopped_early = false;
    let mut iterations_run = 0;

    for t in 0..config.iterations {
        if let (Some(reference), Some(trace)) = (&reference, truth_trace.as_mut()) {
            trace.push(reference.report(&params)?);
        }
        let (next, objective) = pgd_step(&params, view, x, &steps, config, t)?;
        if let (Some(tol), Some(&prev)) = (config.stop_tol, objective_trace.last()) {
            let change = (objective - prev).abs() / f64::max(f64::abs(prev), f64::MIN_POSITIVE);
            stalled = if change < tol { stalled + 1 } else { 0 };
        }
        objective_trace.push(objective);
        params = next;
        iterations_run = t + 1;
        if stalled >= STALL_WINDOW {
            stopped_early = true;
            break;
        }
    }

    let (_, final_objective) = residual_and_objective(view, x, &params, config.likelihood)?;
    objective_trace.push(final_objective);
    if let (Some(reference), Some(trace)) = (&reference, truth_trace.as_mut()) {
        trace.push(reference.report(&params)?);
    }

    Ok(FitResult {
        params,
        objective_trace,
        truth_trace,
        iterations_run,
        step_sizes: steps,
        stopped_early,
    })
}
