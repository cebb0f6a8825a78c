//! Successive convex approximation for the leverage-constrained design problem.
//!
//! Each outer iteration builds the quadratic surrogate at the current iterate,
//! solves it over `{w : ||Bw||_1 <= L}` with ADMM, and moves towards the
//! surrogate minimizer with a step-size chosen by the configured rule. Iterates
//! are convex combinations of feasible points and therefore stay feasible.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::admm::{solve_subproblem, AdmmConfig, AdmmState};
use crate::criteria::{eval_f, portfolio_variance, ObjectiveValue, PortfolioWeights};
use crate::error::{invalid, MrpError, Result};
use crate::market_data::SpreadBasis;
use crate::moments::{CriterionKind, CriterionSpec, LaggedMoments};
use crate::surrogate::{build_surrogate, default_tau};

/// Largest backtracking exponent tried by [`step_armijo`].
pub const ARMIJO_MAX_EXPONENT: u32 = 60;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepRule {
    Constant { gamma: f64 },
    /// `gamma_{k+1} = gamma_k (1 - theta gamma_k)`
    Diminishing { gamma0: f64, theta: f64 },
    /// Backtracking `gamma = beta^l` with sufficient decrease
    /// `F(w + gamma dw) - F(w) <= -alpha gamma ||dw||^2`.
    Armijo { alpha: f64, beta: f64 },
}

impl Default for StepRule {
    fn default() -> Self {
        StepRule::Armijo {
            alpha: 1e-4,
            beta: 0.5,
        }
    }
}

impl StepRule {
    pub fn validate(&self) -> Result<()> {
        let unit_open = |x: f64| x > 0.0 && x < 1.0;
        match *self {
            StepRule::Constant { gamma } if gamma > 0.0 && gamma <= 1.0 => Ok(()),
            StepRule::Diminishing { gamma0, theta } if gamma0 > 0.0 && gamma0 <= 1.0 && unit_open(theta) => Ok(()),
            StepRule::Armijo { alpha, beta } if unit_open(alpha) && unit_open(beta) => Ok(()),
            other => Err(invalid(format!("step rule parameters out of range: {other:?}"))),
        }
    }
}

pub fn step_diminishing(gamma: f64, theta: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(invalid(format!("step-size must lie in (0, 1], got {gamma}")));
    }
    if !(theta > 0.0 && theta < 1.0) {
        return Err(invalid(format!("theta must lie in (0, 1), got {theta}")));
    }
    Ok(gamma * (1.0 - theta * gamma))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmijoStep {
    pub gamma: f64,
    pub exponent: u32,
    /// False when no exponent up to the cap passed the decrease test.
    pub accepted: bool,
    /// Objective at `w + gamma * direction` when it could be evaluated.
    pub objective: Option<f64>,
}

/// Backtracking line search along `direction` from `w`. Points where the
/// objective cannot be evaluated count as failed trials.
pub fn step_armijo<F>(w: &DVector<f64>, direction: &DVector<f64>, objective: F, alpha: f64, beta: f64) -> Result<ArmijoStep>
where
    F: Fn(&DVector<f64>) -> Result<f64>,
{
    if !(alpha > 0.0 && alpha < 1.0) || !(beta > 0.0 && beta < 1.0) {
        return Err(invalid(format!("Armijo parameters must lie in (0, 1), got alpha={alpha}, beta={beta}")));
    }
    let dir_sq = direction.norm_squared();
    if !(dir_sq > 0.0) {
        return Err(invalid("Armijo line search needs a nonzero direction"));
    }
    let f0 = objective(w)?;
    let mut gamma = 1.0;
    for exponent in 0..=ARMIJO_MAX_EXPONENT {
        let trial = w + direction * gamma;
        if let Ok(f) = objective(&trial) {
            if f - f0 <= -alpha * gamma * dir_sq {
                return Ok(ArmijoStep {
                    gamma,
                    exponent,
                    accepted: true,
                    objective: Some(f),
                });
            }
        }
        if exponent < ARMIJO_MAX_EXPONENT {
            gamma *= beta;
        }
    }
    Ok(ArmijoStep {
        gamma,
        exponent: ARMIJO_MAX_EXPONENT,
        accepted: false,
        objective: None,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignOptions {
    pub mu: f64,
    /// Proximal weight; `None` selects [`default_tau`] at the starting point.
    pub tau: Option<f64>,
    pub step: StepRule,
    /// Inner solver settings; `None` selects [`AdmmConfig::for_dim`]. Inside
    /// the design loop `rho` and `dual_tol` are multiplied by
    /// `trace(2A) / trace(B'B)` of each surrogate.
    pub inner: Option<AdmmConfig>,
    /// Starting point; `None` selects the top eigenvector of `M0` scaled to
    /// half the leverage budget.
    pub w0: Option<DVector<f64>>,
    pub max_iters: usize,
    /// Relative objective change counted as a stall.
    pub objective_tol: f64,
    /// Consecutive stalls required before stopping.
    pub stall_iters: usize,
    /// Relative `||w_hat - w||` accepted as stationary.
    pub stationarity_tol: f64,
}

impl Default for DesignOptions {
    fn default() -> Self {
        Self {
            mu: 0.0,
            tau: None,
            step: StepRule::default(),
            inner: None,
            w0: None,
            max_iters: 500,
            objective_tol: 1e-8,
            stall_iters: 3,
            stationarity_tol: 1e-5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// Surrogate minimizer coincides with the iterate.
    FixedPoint,
    /// Objective stalled and the stationarity gap is below tolerance.
    ObjectiveStalled,
    LineSearchFailed,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub criterion: CriterionKind,
    pub mu: f64,
    /// Proximal weight at the start.
    pub tau: f64,
    /// Proximal weight of the last surrogate (differs from `tau` only when
    /// the default is adapting).
    pub tau_final: f64,
    pub leverage_budget: f64,
    pub weights: PortfolioWeights,
    pub objective: ObjectiveValue,
    /// `w' M0 w` at the final iterate.
    pub variance: f64,
    /// `F(w^(k))` for `k = 0..=iterations`.
    pub objective_trace: Vec<f64>,
    pub gamma_trace: Vec<f64>,
    /// `||Bw^(k)||_1` for `k = 0..=iterations`.
    pub leverage_trace: Vec<f64>,
    /// ADMM iterations per surrogate solve.
    pub inner_iters: Vec<usize>,
    pub iterations: usize,
    pub converged: bool,
    pub reason: StopReason,
    /// `||Bw||_1 - L` at exit (non-positive when feasible).
    pub feasibility_gap: f64,
    /// `||w_hat - w||_2` from the last surrogate solve.
    pub stationarity_gap: f64,
}

/// Feasible, deterministic starting point: top eigenvector of `M0`, sign fixed
/// so its largest-magnitude entry is positive, scaled to `||Bw||_1 = L/2`.
pub fn default_start(moments: &LaggedMoments, basis: &SpreadBasis) -> Result<DVector<f64>> {
    let eig = moments.m0().clone().symmetric_eigen();
    let top = eig.eigenvalues.imax();
    let mut w: DVector<f64> = eig.eigenvectors.column(top).into_owned();
    if w[w.iamax()] < 0.0 {
        w.neg_mut();
    }
    let lev = (basis.matrix() * &w).lp_norm(1);
    if !(lev > 0.0) {
        return Err(invalid("basis maps the default start to zero exposure"));
    }
    Ok(w * (0.5 * basis.leverage_budget() / lev))
}

fn leverage(basis: &SpreadBasis, w: &DVector<f64>) -> f64 {
    (basis.matrix() * w).lp_norm(1)
}

pub fn design_mrp(
    spec: &CriterionSpec,
    moments: &LaggedMoments,
    basis: &SpreadBasis,
    opts: &DesignOptions,
) -> Result<SolveReport> {
    let n = moments.dim();
    if basis.num_spreads() != n {
        return Err(MrpError::DimensionMismatch {
            what: "basis columns vs moment dimension",
            expected: n,
            found: basis.num_spreads(),
        });
    }
    let mu = opts.mu;
    if !(mu >= 0.0) || !mu.is_finite() {
        return Err(invalid(format!("trade-off weight mu must be >= 0, got {mu}")));
    }
    opts.step.validate()?;
    if opts.max_iters == 0 {
        return Err(invalid("max_iters must be positive"));
    }
    let inner = opts.inner.clone().unwrap_or_else(|| AdmmConfig::for_dim(n));
    inner.validate()?;
    let budget = basis.leverage_budget();

    let mut w = match &opts.w0 {
        Some(w0) => {
            if w0.len() != n {
                return Err(MrpError::DimensionMismatch {
                    what: "initial point",
                    expected: n,
                    found: w0.len(),
                });
            }
            w0.clone()
        }
        None => default_start(moments, basis)?,
    };
    let lev0 = leverage(basis, &w);
    if lev0 > budget * (1.0 + 1e-12) {
        return Err(MrpError::InfeasibleStart { leverage: lev0, budget });
    }
    portfolio_variance(&w, moments)?;
    let tau0 = match opts.tau {
        Some(tau) => tau,
        None => default_tau(&w, spec, moments, mu)?,
    };
    let tau = tau0;
    if !(tau >= 0.0) || !tau.is_finite() {
        return Err(invalid(format!("proximal weight tau must be >= 0, got {tau}")));
    }
    if tau == 0.0 {
        log::warn!("tau = 0: surrogate may not be strongly convex");
    }

    let objective = |x: &DVector<f64>| eval_f(x, spec, moments, mu).map(|o| o.f);
    let mut f_cur = objective(&w)?;
    let mut objective_trace = vec![f_cur];
    let mut gamma_trace = Vec::new();
    let mut leverage_trace = vec![lev0];
    let mut inner_iters = Vec::new();
    let mut warm: Option<AdmmState> = None;
    let mut progress = 1.0f64;
    let mut gamma_dim = match opts.step {
        StepRule::Diminishing { gamma0, .. } => gamma0,
        _ => 1.0,
    };
    let mut stalls = 0usize;
    let mut iterations = 0usize;
    let mut stationarity_gap;
    let btb_trace = basis.matrix().norm_squared();
    // Default tau adapts to the line search: full steps twice in a row halve
    // it, deep backtracking doubles it, within four decades of the start.
    let adapt_tau = opts.tau.is_none() && matches!(opts.step, StepRule::Armijo { .. });
    let mut tau_k = tau0;
    let mut full_steps = 0usize;
    let fail = |iteration: usize, reason: String, trace: &[f64]| MrpError::SolverFailure {
        iteration,
        reason,
        objective_trace: trace.to_vec(),
    };

    let reason = loop {
        let model = build_surrogate(&w, spec, moments, mu, tau_k)
            .map_err(|e| fail(iterations, e.to_string(), &objective_trace))?;
        let scale = progress.min(1.0);
        // rho and the dual tolerance are relative to the surrogate's curvature.
        let rho_scale = model.a.trace() * 2.0 / btb_trace;
        let inner_cfg = AdmmConfig {
            rho: inner.rho * rho_scale,
            primal_tol: (inner.primal_tol * scale).max(1e-13),
            dual_tol: (inner.dual_tol * scale).max(1e-13) * rho_scale,
            ..inner.clone()
        };
        let (mut w_hat, state) = solve_subproblem(&model.a, &model.b, basis, &inner_cfg, warm.as_ref())?;
        inner_iters.push(state.iterations);
        warm = Some(state);

        // Pull the inexact ADMM answer back onto the ball radially.
        let lev = leverage(basis, &w_hat);
        if lev > budget {
            w_hat *= budget / lev;
        }
        let direction = &w_hat - &w;
        stationarity_gap = direction.norm();
        progress = stationarity_gap;
        let w_scale = w.norm().max(1.0);

        if stationarity_gap <= 1e-12 * w_scale {
            break StopReason::FixedPoint;
        }
        if stalls >= opts.stall_iters && stationarity_gap <= opts.stationarity_tol * w_scale {
            break StopReason::ObjectiveStalled;
        }
        if iterations >= opts.max_iters {
            break StopReason::MaxIterations;
        }

        let gamma = match opts.step {
            StepRule::Constant { gamma } => gamma,
            StepRule::Diminishing { theta, .. } => {
                let g = gamma_dim;
                gamma_dim = step_diminishing(gamma_dim, theta)?;
                g
            }
            StepRule::Armijo { alpha, beta } => {
                let step = step_armijo(&w, &direction, objective, alpha, beta)?;
                if !step.accepted {
                    break StopReason::LineSearchFailed;
                }
                if adapt_tau {
                    if step.exponent == 0 {
                        full_steps += 1;
                        if full_steps >= 2 {
                            tau_k = (tau_k * 0.5).max(tau0 * 1e-4);
                            full_steps = 0;
                        }
                    } else {
                        full_steps = 0;
                        if step.exponent >= 2 {
                            tau_k = (tau_k * 2.0).min(tau0 * 1e4);
                        }
                    }
                }
                step.gamma
            }
        };

        w += &direction * gamma;
        let f_next = objective(&w).map_err(|e| fail(iterations + 1, e.to_string(), &objective_trace))?;
        if (f_next - f_cur).abs() <= opts.objective_tol * f_cur.abs().max(1.0) {
            stalls += 1;
        } else {
            stalls = 0;
        }
        f_cur = f_next;
        objective_trace.push(f_cur);
        gamma_trace.push(gamma);
        leverage_trace.push(leverage(basis, &w));
        iterations += 1;
    };

    let converged = match reason {
        StopReason::FixedPoint | StopReason::ObjectiveStalled => true,
        StopReason::LineSearchFailed => stationarity_gap <= opts.stationarity_tol * w.norm().max(1.0),
        StopReason::MaxIterations => false,
    };
    let objective = eval_f(&w, spec, moments, mu)?;
    let variance = portfolio_variance(&w, moments)?;
    Ok(SolveReport {
        criterion: spec.kind,
        mu,
        tau,
        tau_final: tau_k,
        leverage_budget: budget,
        weights: PortfolioWeights::new(&w, basis)?,
        objective,
        variance,
        objective_trace,
        gamma_trace,
        leverage_trace,
        inner_iters,
        iterations,
        converged,
        reason,
        feasibility_gap: leverage(basis, &w) - budget,
        stationarity_gap,
    })
}
