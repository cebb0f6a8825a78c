//! The design objective `F(w) = U(w) + mu * V(w)` and its gradient.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, MrpError, Result};
use crate::market_data::SpreadBasis;
use crate::moments::{CriterionSpec, LaggedMoments};

/// Spread-space weights `w` and the implied asset-space weights `w_p = B w`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortfolioWeights {
    pub w: Vec<f64>,
    pub w_p: Vec<f64>,
}

impl PortfolioWeights {
    pub fn new(w: &DVector<f64>, basis: &SpreadBasis) -> Result<Self> {
        if w.len() != basis.num_spreads() {
            return Err(MrpError::DimensionMismatch {
                what: "weights vs basis columns",
                expected: basis.num_spreads(),
                found: w.len(),
            });
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(invalid("weights must be finite"));
        }
        let w_p = basis.matrix() * w;
        Ok(Self {
            w: w.iter().copied().collect(),
            w_p: w_p.iter().copied().collect(),
        })
    }

    pub fn spread_weights(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.w)
    }

    pub fn asset_weights(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.w_p)
    }

    /// Gross exposure `||w_p||_1`.
    pub fn leverage(&self) -> f64 {
        self.w_p.iter().map(|v| v.abs()).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveValue {
    pub u: f64,
    pub v: f64,
    pub f: f64,
    pub mu: f64,
}

/// Quadratic-form ratios of `w` against `M0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ratios {
    /// `w' M0 w`
    pub variance: f64,
    /// `w' H w / w' M0 w`
    pub r_h: f64,
    /// `r[i-1] = w' M_i w / w' M0 w` for `i = 1..=p`
    pub r: Vec<f64>,
}

pub(crate) fn quad(m: &DMatrix<f64>, w: &DVector<f64>) -> f64 {
    w.dot(&(m * w))
}

pub(crate) fn check_dims(w: &DVector<f64>, spec: &CriterionSpec, moments: &LaggedMoments) -> Result<()> {
    let n = moments.dim();
    if w.len() != n {
        return Err(MrpError::DimensionMismatch {
            what: "weights vs moment dimension",
            expected: n,
            found: w.len(),
        });
    }
    if spec.h_matrix.nrows() != n || spec.h_matrix.ncols() != n {
        return Err(MrpError::DimensionMismatch {
            what: "criterion H vs moment dimension",
            expected: n,
            found: spec.h_matrix.nrows(),
        });
    }
    if spec.lag_order > moments.lag_order() {
        return Err(invalid(format!(
            "criterion lag order {} exceeds estimated lag order {}",
            spec.lag_order,
            moments.lag_order()
        )));
    }
    Ok(())
}

/// `w' M0 w`, rejected when it is not safely positive relative to `||w||^2 ||M0||`.
pub fn portfolio_variance(w: &DVector<f64>, moments: &LaggedMoments) -> Result<f64> {
    let m0 = moments.m0();
    let q0 = quad(m0, w);
    let floor = 1e-12 * w.norm_squared() * m0.norm();
    if !(q0 > floor) || !(q0 > 0.0) || !q0.is_finite() {
        return Err(MrpError::DegenerateVariance { quad: q0 });
    }
    Ok(q0)
}

pub fn ratios(w: &DVector<f64>, spec: &CriterionSpec, moments: &LaggedMoments) -> Result<Ratios> {
    check_dims(w, spec, moments)?;
    let variance = portfolio_variance(w, moments)?;
    let r_h = quad(&spec.h_matrix, w) / variance;
    let r = (1..=spec.lag_order)
        .map(|i| quad(moments.m(i), w) / variance)
        .collect();
    Ok(Ratios { variance, r_h, r })
}

impl Ratios {
    fn criterion(&self, spec: &CriterionSpec) -> f64 {
        let mut u = 0.0;
        if spec.xi != 0.0 {
            u += spec.xi * self.r_h;
        }
        if spec.zeta != 0.0 {
            if let Some(r1) = self.r.first() {
                u += spec.zeta * r1 * r1;
            }
        }
        if spec.eta != 0.0 {
            u += spec.eta * self.r.iter().skip(1).map(|ri| ri * ri).sum::<f64>();
        }
        u
    }
}

/// Mean-reversion term `U(w)`.
pub fn eval_u(w: &DVector<f64>, spec: &CriterionSpec, moments: &LaggedMoments) -> Result<f64> {
    Ok(ratios(w, spec, moments)?.criterion(spec))
}

/// Variance term `V(w) = 1 / (w' M0 w)`.
pub fn eval_v(w: &DVector<f64>, moments: &LaggedMoments) -> Result<f64> {
    if w.len() != moments.dim() {
        return Err(MrpError::DimensionMismatch {
            what: "weights vs moment dimension",
            expected: moments.dim(),
            found: w.len(),
        });
    }
    Ok(1.0 / portfolio_variance(w, moments)?)
}

pub fn eval_f(w: &DVector<f64>, spec: &CriterionSpec, moments: &LaggedMoments, mu: f64) -> Result<ObjectiveValue> {
    if !(mu >= 0.0) || !mu.is_finite() {
        return Err(invalid(format!("trade-off weight mu must be >= 0, got {mu}")));
    }
    let rat = ratios(w, spec, moments)?;
    let u = rat.criterion(spec);
    let v = 1.0 / rat.variance;
    Ok(ObjectiveValue {
        u,
        v,
        f: u + mu * v,
        mu,
    })
}

/// Direction pair `(M w / q0, r * M0 w / q0)` whose difference is half the
/// gradient of the ratio `w' M w / w' M0 w`.
pub(crate) struct RatioDirections {
    pub variance: f64,
    pub m0w: DVector<f64>,
    /// `d_{0,h} - d_{h,0}`
    pub g_h: DVector<f64>,
    /// `g[i-1] = d_{0,i} - d_{i,0}`, `i = 1..=p`
    pub g: Vec<DVector<f64>>,
    pub ratios: Ratios,
}

pub(crate) fn ratio_directions(
    w: &DVector<f64>,
    spec: &CriterionSpec,
    moments: &LaggedMoments,
) -> Result<RatioDirections> {
    let ratios = ratios(w, spec, moments)?;
    let q0 = ratios.variance;
    let m0w = moments.m0() * w;
    let g_h = if spec.xi != 0.0 {
        (&spec.h_matrix * w - &m0w * ratios.r_h) / q0
    } else {
        DVector::zeros(w.len())
    };
    let g = (1..=spec.lag_order)
        .map(|i| (moments.m(i) * w - &m0w * ratios.r[i - 1]) / q0)
        .collect();
    Ok(RatioDirections {
        variance: q0,
        m0w,
        g_h,
        g,
        ratios,
    })
}

/// Analytical gradient of `U + mu V`.
pub fn grad_f(w: &DVector<f64>, spec: &CriterionSpec, moments: &LaggedMoments, mu: f64) -> Result<DVector<f64>> {
    let dirs = ratio_directions(w, spec, moments)?;
    let mut grad = &dirs.g_h * (2.0 * spec.xi);
    if spec.zeta != 0.0 {
        if let Some(g1) = dirs.g.first() {
            grad += g1 * (4.0 * spec.zeta * dirs.ratios.r[0]);
        }
    }
    if spec.eta != 0.0 {
        for (gi, ri) in dirs.g.iter().zip(&dirs.ratios.r).skip(1) {
            grad += gi * (4.0 * spec.eta * ri);
        }
    }
    if mu != 0.0 {
        grad -= &dirs.m0w * (2.0 * mu / (dirs.variance * dirs.variance));
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments::{build_criterion, CriterionKind};

    fn moments_identity(n: usize, m1_diag: f64) -> LaggedMoments {
        LaggedMoments::from_matrices(vec![
            DMatrix::identity(n, n),
            DMatrix::identity(n, n) * m1_diag,
        ])
        .unwrap()
    }

    #[test]
    fn scaled_identity_rayleigh_quotient() {
        let m = moments_identity(3, 0.0);
        let mut spec = build_criterion(&m, CriterionKind::Crossing, 0.0).unwrap();
        spec.h_matrix = DMatrix::identity(3, 3) * 3.0;
        let w = DVector::from_vec(vec![0.6, 0.0, 0.8]);
        assert!((eval_u(&w, &spec, &m).unwrap() - 3.0).abs() < 1e-14);
    }

    #[test]
    fn portmanteau_zero_lags() {
        let m = LaggedMoments::from_matrices(vec![
            DMatrix::identity(2, 2),
            DMatrix::zeros(2, 2),
            DMatrix::zeros(2, 2),
        ])
        .unwrap();
        let spec = build_criterion(&m, CriterionKind::Portmanteau, 0.0).unwrap();
        assert_eq!(eval_u(&DVector::from_vec(vec![0.3, -1.2]), &spec, &m).unwrap(), 0.0);
    }

    #[test]
    fn variance_term() {
        let m = moments_identity(2, 0.0);
        assert_eq!(eval_v(&DVector::from_vec(vec![2.0, 0.0]), &m).unwrap(), 0.25);
        assert_eq!(eval_v(&DVector::from_vec(vec![1.0, 0.0]), &m).unwrap(), 1.0);
        let w = DVector::from_vec(vec![0.3, 0.7]);
        let v1 = eval_v(&w, &m).unwrap();
        let v2 = eval_v(&(&w * 2.0), &m).unwrap();
        assert!((v2 - v1 / 4.0).abs() < 1e-15);
    }

    #[test]
    fn objective_composition() {
        let m = moments_identity(2, 0.5);
        let spec = build_criterion(&m, CriterionKind::Crossing, 0.0).unwrap();
        let w = DVector::from_vec(vec![1.0, 1.0]);
        let obj0 = eval_f(&w, &spec, &m, 0.0).unwrap();
        assert_eq!(obj0.f, obj0.u);
        let obj1 = eval_f(&w, &spec, &m, 1.0).unwrap();
        assert_eq!(obj1.f, obj1.u + obj1.v);
        assert!(eval_f(&w, &spec, &m, -1.0).is_err());
    }

    #[test]
    fn variance_gradient_at_unit_vector() {
        let m = moments_identity(3, 0.0);
        let spec = build_criterion(&m, CriterionKind::Crossing, 0.0).unwrap();
        let w = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        // Crossing U has zero gradient here since M1 = 0.
        let g = grad_f(&w, &spec, &m, 1.0).unwrap();
        assert!((g - DVector::from_vec(vec![-2.0, 0.0, 0.0])).norm() < 1e-15);
    }

    #[test]
    fn null_space_weights_are_degenerate() {
        let m = LaggedMoments::from_matrices(vec![
            DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0])),
            DMatrix::zeros(2, 2),
        ])
        .unwrap();
        let spec = build_criterion(&m, CriterionKind::Crossing, 0.0).unwrap();
        let w = DVector::from_vec(vec![0.0, 1.0]);
        assert!(matches!(
            eval_u(&w, &spec, &m),
            Err(MrpError::DegenerateVariance { .. })
        ));
        assert!(eval_v(&w, &m).is_err());
        assert!(eval_u(&DVector::zeros(2), &spec, &m).is_err());
    }

    #[test]
    fn weights_map_through_basis() {
        let basis = SpreadBasis::new(DMatrix::from_row_slice(3, 2, &[1.0, 0.0, -1.0, 1.0, 0.0, -2.0]), 1.0).unwrap();
        let pw = PortfolioWeights::new(&DVector::from_vec(vec![0.5, 0.25]), &basis).unwrap();
        assert_eq!(pw.w_p, vec![0.5, -0.25, -0.5]);
        assert_eq!(pw.leverage(), 1.25);
    }
}
