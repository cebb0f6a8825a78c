//! Three-block ADMM for `min w'Aw + b'w  s.t. ||Bw||_1 <= L`.
//!
//! The split `z = Bw` turns the constraint into an indicator on the l1-ball, so
//! each iteration is a linear solve with the fixed matrix `2A + rho B'B`, an
//! l1-ball projection and a scaled dual update.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{invalid, MrpError, Result};
use crate::l1_projection::project_l1;
use crate::market_data::SpreadBasis;

#[derive(Debug, Clone, PartialEq)]
pub struct AdmmConfig {
    pub rho: f64,
    pub max_iters: usize,
    pub primal_tol: f64,
    pub dual_tol: f64,
    /// Residual balancing: double/halve `rho` when one residual exceeds the
    /// other by 10x.
    pub adaptive_rho: bool,
}

impl AdmmConfig {
    /// Defaults for an `n`-spread problem: `rho = 1`, tolerances `1e-8 * sqrt(n)`.
    pub fn for_dim(n: usize) -> Self {
        let tol = 1e-8 * (n.max(1) as f64).sqrt();
        Self {
            rho: 1.0,
            max_iters: 20_000,
            primal_tol: tol,
            dual_tol: tol,
            adaptive_rho: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0) || !self.rho.is_finite() {
            return Err(invalid(format!("ADMM rho must be positive, got {}", self.rho)));
        }
        if self.max_iters == 0 {
            return Err(invalid("ADMM max_iters must be positive"));
        }
        if !(self.primal_tol > 0.0) || !(self.dual_tol > 0.0) {
            return Err(invalid("ADMM tolerances must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdmmState {
    pub w: DVector<f64>,
    /// Split variable, always a point of the l1-ball.
    pub z: DVector<f64>,
    /// Scaled dual `y / rho`.
    pub u: DVector<f64>,
    /// Penalty in effect when the state was produced (relevant for `u`).
    pub rho: f64,
    pub iterations: usize,
    pub converged: bool,
    /// `||Bw - z||_2` per iteration.
    pub primal_residuals: Vec<f64>,
    /// `rho ||B'(z_new - z_old)||_2` per iteration.
    pub dual_residuals: Vec<f64>,
}

impl AdmmState {
    pub fn primal_residual(&self) -> f64 {
        self.primal_residuals.last().copied().unwrap_or(f64::INFINITY)
    }

    pub fn dual_residual(&self) -> f64 {
        self.dual_residuals.last().copied().unwrap_or(f64::INFINITY)
    }
}

fn factor(a: &DMatrix<f64>, btb: &DMatrix<f64>, rho: f64) -> Result<Cholesky<f64, Dyn>> {
    let system = a * 2.0 + btb * rho;
    system.clone().cholesky().ok_or_else(|| MrpError::IndefiniteSystem {
        lambda_min: system.symmetric_eigen().eigenvalues.min(),
    })
}

pub fn solve_subproblem(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    basis: &SpreadBasis,
    cfg: &AdmmConfig,
    warm: Option<&AdmmState>,
) -> Result<(DVector<f64>, AdmmState)> {
    cfg.validate()?;
    let n = basis.num_spreads();
    let m = basis.num_assets();
    if a.nrows() != n || a.ncols() != n {
        return Err(MrpError::DimensionMismatch {
            what: "quadratic term vs basis columns",
            expected: n,
            found: a.nrows(),
        });
    }
    if b.len() != n {
        return Err(MrpError::DimensionMismatch {
            what: "linear term vs basis columns",
            expected: n,
            found: b.len(),
        });
    }
    let asym = (a - a.transpose()).amax();
    if asym > 1e-10 * a.amax().max(1.0) {
        return Err(invalid(format!("quadratic term is not symmetric (max asymmetry {asym:e})")));
    }

    let bmat = basis.matrix();
    let budget = basis.leverage_budget();
    let btb = bmat.transpose() * bmat;
    let mut rho = cfg.rho;
    let mut chol = factor(a, &btb, rho)?;

    let (mut w, mut z, mut u) = match warm {
        Some(state) => {
            if state.w.len() != n || state.z.len() != m || state.u.len() != m {
                return Err(invalid("warm-start state has wrong dimensions"));
            }
            (state.w.clone(), state.z.clone(), &state.u * (state.rho / rho))
        }
        None => {
            let w0 = DVector::zeros(n);
            let z0 = bmat * &w0;
            (w0, z0, DVector::zeros(m))
        }
    };

    let mut primal_residuals = Vec::new();
    let mut dual_residuals = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    while iterations < cfg.max_iters {
        iterations += 1;
        let rhs = -(b + bmat.tr_mul(&(&u - &z)) * rho);
        w = chol.solve(&rhs);
        let bw = bmat * &w;
        let h = &bw + &u;
        let z_new = project_l1(&h, budget)?.z;
        let gap = &bw - &z_new;
        u += &gap;

        let primal = gap.norm();
        let dual = rho * bmat.tr_mul(&(&z_new - &z)).norm();
        z = z_new;
        primal_residuals.push(primal);
        dual_residuals.push(dual);

        if primal <= cfg.primal_tol && dual <= cfg.dual_tol {
            converged = true;
            break;
        }
        if cfg.adaptive_rho {
            let scale = if primal > 10.0 * dual {
                2.0
            } else if dual > 10.0 * primal {
                0.5
            } else {
                1.0
            };
            if scale != 1.0 {
                rho *= scale;
                u /= scale;
                chol = factor(a, &btb, rho)?;
            }
        }
    }

    let state = AdmmState {
        w: w.clone(),
        z,
        u,
        rho,
        iterations,
        converged,
        primal_residuals,
        dual_residuals,
    };
    Ok((w, state))
}
