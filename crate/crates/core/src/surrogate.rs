//! Strongly convex quadratic surrogate `w' A w + b' w` of the objective at an anchor.
//!
//! Each squared ratio `r_i(w)^2` is convexified by linearizing `r_i` around the
//! anchor, the `xi` ratio term and `V` are linearized, and a proximal term
//! `tau * ||w - anchor||^2` is added. Constants are dropped. The model has the
//! same gradient as `F` at the anchor.

use nalgebra::{DMatrix, DVector};

use crate::criteria::{check_dims, ratio_directions, ratios};
use crate::error::{invalid, MrpError, Result};
use crate::moments::{CriterionSpec, LaggedMoments};

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticModel {
    /// `A = A_U + tau I`
    pub a: DMatrix<f64>,
    /// `b = b_U + mu b_V - 2 tau anchor`
    pub b: DVector<f64>,
    pub tau: f64,
    pub anchor: DVector<f64>,
}

impl QuadraticModel {
    /// Gradient of the model at `w`: `2 A w + b`.
    pub fn gradient(&self, w: &DVector<f64>) -> DVector<f64> {
        &self.a * w * 2.0 + &self.b
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }
}

/// Default proximal weight at `w`: a tenth of a curvature estimate of `F`.
///
/// Each ratio `r = w'Mw / w'M0w` has Hessian of order `||M - r M0|| / w'M0w`,
/// squared ratios pick up a factor `2|r|`, and `mu V` contributes about
/// `6 mu V / ||w||^2`. All terms scale like `1 / ||w||^2`, so the surrogate
/// step does not depend on price units or the leverage budget.
pub fn default_tau(w: &DVector<f64>, spec: &CriterionSpec, moments: &LaggedMoments, mu: f64) -> Result<f64> {
    let rat = ratios(w, spec, moments)?;
    let q0 = rat.variance;
    let spread = |m: &DMatrix<f64>, r: f64| (m - moments.m0() * r).symmetric_eigenvalues().amax() * 2.0 / q0;
    let mut curvature = 0.0;
    if spec.xi != 0.0 {
        curvature += spec.xi * spread(&spec.h_matrix, rat.r_h);
    }
    for (i, r) in rat.r.iter().enumerate() {
        let weight = if i == 0 { spec.zeta } else { spec.eta };
        if weight != 0.0 {
            curvature += weight * 2.0 * r.abs() * spread(moments.m(i + 1), *r);
        }
    }
    curvature += 6.0 * mu / (q0 * w.norm_squared());
    if !(curvature > 0.0) {
        curvature = 1e-2 / w.norm_squared();
    }
    Ok(0.1 * curvature)
}

pub fn build_surrogate(
    anchor: &DVector<f64>,
    spec: &CriterionSpec,
    moments: &LaggedMoments,
    mu: f64,
    tau: f64,
) -> Result<QuadraticModel> {
    if !(mu >= 0.0) || !mu.is_finite() {
        return Err(invalid(format!("trade-off weight mu must be >= 0, got {mu}")));
    }
    if !(tau >= 0.0) || !tau.is_finite() {
        return Err(invalid(format!("proximal weight tau must be >= 0, got {tau}")));
    }
    check_dims(anchor, spec, moments)?;
    let n = anchor.len();
    let dirs = ratio_directions(anchor, spec, moments)?;

    let mut a = DMatrix::<f64>::zeros(n, n);
    let mut b = &dirs.g_h * (2.0 * spec.xi);

    // Linearizing r_i around the anchor gives r_i + 2 g_i'(w - anchor) with
    // g_i' anchor = 0, so the square expands to r_i^2 + 4 r_i g_i'w + 4 (g_i'w)^2.
    let mut add_square = |weight: f64, g: &DVector<f64>, r: f64| {
        if weight != 0.0 {
            a.ger(4.0 * weight, g, g, 1.0);
            b.axpy(4.0 * weight * r, g, 1.0);
        }
    };
    if let Some(g1) = dirs.g.first() {
        add_square(spec.zeta, g1, dirs.ratios.r[0]);
    }
    for (gi, ri) in dirs.g.iter().zip(&dirs.ratios.r).skip(1) {
        add_square(spec.eta, gi, *ri);
    }

    if mu != 0.0 {
        let b_v = &dirs.m0w * (-2.0 / (dirs.variance * dirs.variance));
        b.axpy(mu, &b_v, 1.0);
    }
    if tau != 0.0 {
        for i in 0..n {
            a[(i, i)] += tau;
        }
        b.axpy(-2.0 * tau, anchor, 1.0);
    }
    Ok(QuadraticModel {
        a,
        b,
        tau,
        anchor: anchor.clone(),
    })
}

pub fn eval_surrogate(model: &QuadraticModel, w: &DVector<f64>) -> Result<f64> {
    if w.len() != model.dim() {
        return Err(MrpError::DimensionMismatch {
            what: "weights vs surrogate dimension",
            expected: model.dim(),
            found: w.len(),
        });
    }
    Ok(w.dot(&(&model.a * w)) + model.b.dot(w))
}
