//! Lagged autocovariance estimation and criterion assembly.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, MrpError, Result};
use crate::market_data::SpreadSeries;

/// Condition-number ceiling for inverting `M0` in the predictability criterion.
pub const DEFAULT_CONDITION_BOUND: f64 = 1e12;

pub(crate) fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Symmetrized lagged autocovariances `M_0 ... M_p` of a spread series.
#[derive(Debug, Clone, PartialEq)]
pub struct LaggedMoments {
    matrices: Vec<DMatrix<f64>>,
    warnings: Vec<String>,
}

impl LaggedMoments {
    /// Wraps precomputed matrices; each is symmetrized.
    pub fn from_matrices(matrices: Vec<DMatrix<f64>>) -> Result<Self> {
        if matrices.len() < 2 {
            return Err(invalid("need M0 and at least one lagged matrix (p >= 1)"));
        }
        let n = matrices[0].nrows();
        for (i, m) in matrices.iter().enumerate() {
            if m.nrows() != n || m.ncols() != n {
                return Err(invalid(format!("moment matrix M{i} is not {n}x{n}")));
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(invalid(format!("moment matrix M{i} has non-finite entries")));
            }
        }
        let matrices: Vec<_> = matrices.iter().map(symmetrize).collect();
        let warnings = zero_variance_warnings(&matrices[0], None);
        Ok(Self { matrices, warnings })
    }

    pub fn lag_order(&self) -> usize {
        self.matrices.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.matrices[0].nrows()
    }

    /// `M_lag`; `lag` must be at most [`Self::lag_order`].
    pub fn m(&self, lag: usize) -> &DMatrix<f64> {
        &self.matrices[lag]
    }

    pub fn m0(&self) -> &DMatrix<f64> {
        &self.matrices[0]
    }

    pub fn matrices(&self) -> &[DMatrix<f64>] {
        &self.matrices
    }

    /// Non-fatal diagnostics, e.g. zero-variance spreads.
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn to_file(&self) -> MomentsFile {
        MomentsFile {
            lag_order: self.lag_order(),
            dimension: self.dim(),
            matrices: self
                .matrices
                .iter()
                .map(|m| m.transpose().as_slice().to_vec())
                .collect(),
            warnings: self.warnings.clone(),
        }
    }

    pub fn from_file(file: &MomentsFile) -> Result<Self> {
        let n = file.dimension;
        if file.matrices.len() != file.lag_order + 1 {
            return Err(invalid(format!(
                "moment file lists {} matrices for lag order {}",
                file.matrices.len(),
                file.lag_order
            )));
        }
        let matrices = file
            .matrices
            .iter()
            .map(|flat| {
                if flat.len() != n * n {
                    return Err(MrpError::DimensionMismatch {
                        what: "moment matrix entries",
                        expected: n * n,
                        found: flat.len(),
                    });
                }
                Ok(DMatrix::from_row_slice(n, n, flat))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut moments = Self::from_matrices(matrices)?;
        if !file.warnings.is_empty() {
            moments.warnings = file.warnings.clone();
        }
        Ok(moments)
    }
}

/// JSON layout of a moment dump: lag order plus row-major matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentsFile {
    pub lag_order: usize,
    pub dimension: usize,
    pub matrices: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

fn zero_variance_warnings(m0: &DMatrix<f64>, means: Option<&[f64]>) -> Vec<String> {
    (0..m0.nrows())
        .filter(|&j| {
            let scale = means.map_or(1.0, |mu| 1.0 + mu[j] * mu[j]);
            m0[(j, j)] <= 1e-24 * scale
        })
        .map(|j| format!("spread {j} has zero variance; M0 is singular"))
        .collect()
}

/// Estimates `M_0 ... M_p` with a single global sample mean and `1/(T-i)`
/// normalization, then symmetrizes each lag.
pub fn estimate_moments(spreads: &SpreadSeries, lag_order: usize) -> Result<LaggedMoments> {
    if lag_order == 0 {
        return Err(invalid("lag order p must be at least 1"));
    }
    let values = spreads.values();
    let (t, n) = values.shape();
    if t <= lag_order + 1 {
        return Err(MrpError::InsufficientData(format!(
            "need T > p + 1 observations, got T = {t} with p = {lag_order}"
        )));
    }
    let mean = values.row_mean();
    let mut centered = values.clone();
    for mut row in centered.row_iter_mut() {
        row -= &mean;
    }
    let matrices: Vec<DMatrix<f64>> = (0..=lag_order)
        .map(|lag| {
            let head = centered.rows(0, t - lag);
            let tail = centered.rows(lag, t - lag);
            let raw = head.transpose() * tail / (t - lag) as f64;
            symmetrize(&raw)
        })
        .collect();
    debug_assert_eq!(matrices[0].nrows(), n);
    let means: Vec<f64> = mean.iter().copied().collect();
    let warnings = zero_variance_warnings(&matrices[0], Some(&means));
    Ok(LaggedMoments { matrices, warnings })
}

/// Mean-reversion criterion family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CriterionKind {
    #[serde(rename = "pre", alias = "predictability")]
    Predictability,
    #[serde(rename = "por", alias = "portmanteau")]
    Portmanteau,
    #[serde(rename = "cro", alias = "crossing")]
    Crossing,
    #[serde(rename = "pcro", alias = "penalized_crossing")]
    PenalizedCrossing,
}

impl CriterionKind {
    pub const ALL: [CriterionKind; 4] = [
        CriterionKind::Predictability,
        CriterionKind::Portmanteau,
        CriterionKind::Crossing,
        CriterionKind::PenalizedCrossing,
    ];

    pub fn short_name(self) -> &'static str {
        match self {
            CriterionKind::Predictability => "pre",
            CriterionKind::Portmanteau => "por",
            CriterionKind::Crossing => "cro",
            CriterionKind::PenalizedCrossing => "pcro",
        }
    }
}

impl fmt::Display for CriterionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for CriterionKind {
    type Err = MrpError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pre" | "predictability" => Ok(CriterionKind::Predictability),
            "por" | "portmanteau" => Ok(CriterionKind::Portmanteau),
            "cro" | "crossing" => Ok(CriterionKind::Crossing),
            "pcro" | "penalized_crossing" => Ok(CriterionKind::PenalizedCrossing),
            other => Err(invalid(format!(
                "unknown criterion {other:?} (expected pre, por, cro or pcro)"
            ))),
        }
    }
}

/// Weights `(xi, zeta, eta)` and matrix `H` of the unified criterion
/// `U(w) = xi*r_H + zeta*r_1^2 + eta*sum_{i>=2} r_i^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct CriterionSpec {
    pub kind: CriterionKind,
    pub xi: f64,
    pub zeta: f64,
    pub eta: f64,
    pub h_matrix: DMatrix<f64>,
    pub lag_order: usize,
}

pub fn build_criterion(moments: &LaggedMoments, kind: CriterionKind, eta: f64) -> Result<CriterionSpec> {
    build_criterion_with_bound(moments, kind, eta, DEFAULT_CONDITION_BOUND)
}

pub fn build_criterion_with_bound(
    moments: &LaggedMoments,
    kind: CriterionKind,
    eta: f64,
    condition_bound: f64,
) -> Result<CriterionSpec> {
    let n = moments.dim();
    let lag_order = moments.lag_order();
    let (xi, zeta, eta, h_matrix) = match kind {
        CriterionKind::Predictability => (1.0, 0.0, 0.0, predictability_matrix(moments, condition_bound)?),
        CriterionKind::Portmanteau => (0.0, 1.0, 1.0, DMatrix::zeros(n, n)),
        CriterionKind::Crossing => (1.0, 0.0, 0.0, moments.m(1).clone()),
        CriterionKind::PenalizedCrossing => {
            if !(eta > 0.0) || !eta.is_finite() {
                return Err(invalid(format!(
                    "penalized crossing needs eta > 0, got {eta}"
                )));
            }
            (1.0, 0.0, eta, moments.m(1).clone())
        }
    };
    Ok(CriterionSpec {
        kind,
        xi,
        zeta,
        eta,
        h_matrix: symmetrize(&h_matrix),
        lag_order,
    })
}

/// `M1' M0^{-1} M1` via a Cholesky solve, guarded by the condition number of `M0`.
fn predictability_matrix(moments: &LaggedMoments, condition_bound: f64) -> Result<DMatrix<f64>> {
    let m0 = moments.m0();
    let eig = m0.clone().symmetric_eigen();
    let lmax = eig.eigenvalues.max();
    let lmin = eig.eigenvalues.min();
    let condition = if lmin > 0.0 { lmax / lmin } else { f64::INFINITY };
    if !(condition <= condition_bound) {
        return Err(MrpError::SingularCovariance { condition });
    }
    let chol = m0
        .clone()
        .cholesky()
        .ok_or(MrpError::SingularCovariance { condition })?;
    let m1 = moments.m(1);
    let x = chol.solve(m1);
    Ok(m1.transpose() * x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(rows: usize, cols: usize, data: &[f64]) -> SpreadSeries {
        SpreadSeries::new(DMatrix::from_row_slice(rows, cols, data)).unwrap()
    }

    #[test]
    fn hand_computed_scalar_series() {
        let m = estimate_moments(&series(3, 1, &[1.0, 2.0, 3.0]), 1).unwrap();
        assert!((m.m0()[(0, 0)] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(m.m(1)[(0, 0)], 0.0);
        assert!(m.warnings().is_empty());
    }

    #[test]
    fn constant_series_warns() {
        let m = estimate_moments(&series(4, 1, &[5.0; 4]), 1).unwrap();
        assert_eq!(m.m0()[(0, 0)], 0.0);
        assert_eq!(m.warnings().len(), 1);
    }

    #[test]
    fn too_short_rejected() {
        assert!(matches!(
            estimate_moments(&series(3, 1, &[1.0, 2.0, 3.0]), 2),
            Err(MrpError::InsufficientData(_))
        ));
        assert!(estimate_moments(&series(3, 1, &[1.0, 2.0, 3.0]), 0).is_err());
    }

    #[test]
    fn lagged_matrices_are_exactly_symmetric() {
        let data: Vec<f64> = (0..60).map(|i| ((i * 7 % 11) as f64).sin()).collect();
        let m = estimate_moments(&series(20, 3, &data), 3).unwrap();
        for mi in m.matrices() {
            assert_eq!(mi, &mi.transpose());
        }
    }

    fn diag_moments() -> LaggedMoments {
        LaggedMoments::from_matrices(vec![
            DMatrix::identity(3, 3),
            DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.5, -0.2, 0.9])),
        ])
        .unwrap()
    }

    #[test]
    fn crossing_and_portmanteau_weights() {
        let m = diag_moments();
        let cro = build_criterion(&m, CriterionKind::Crossing, 0.0).unwrap();
        assert_eq!((cro.xi, cro.zeta, cro.eta), (1.0, 0.0, 0.0));
        assert_eq!(&cro.h_matrix, m.m(1));
        let por = build_criterion(&m, CriterionKind::Portmanteau, 0.0).unwrap();
        assert_eq!((por.xi, por.zeta, por.eta), (0.0, 1.0, 1.0));
        assert_eq!(por.h_matrix, DMatrix::zeros(3, 3));
    }

    #[test]
    fn predictability_with_identity_m0_squares_m1() {
        let m = diag_moments();
        let pre = build_criterion(&m, CriterionKind::Predictability, 0.0).unwrap();
        let d = m.m(1);
        assert!((&pre.h_matrix - d * d).abs().max() < 1e-15);
    }

    #[test]
    fn pcro_requires_positive_eta() {
        let m = diag_moments();
        assert!(build_criterion(&m, CriterionKind::PenalizedCrossing, 0.0).is_err());
        let spec = build_criterion(&m, CriterionKind::PenalizedCrossing, 0.3).unwrap();
        assert_eq!((spec.xi, spec.zeta, spec.eta), (1.0, 0.0, 0.3));
    }

    #[test]
    fn singular_m0_rejected_for_predictability() {
        let m = LaggedMoments::from_matrices(vec![
            DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]),
            DMatrix::identity(2, 2),
        ])
        .unwrap();
        assert!(matches!(
            build_criterion(&m, CriterionKind::Predictability, 0.0),
            Err(MrpError::SingularCovariance { .. })
        ));
        assert!(build_criterion(&m, CriterionKind::Crossing, 0.0).is_ok());
    }

    #[test]
    fn criterion_names_parse() {
        for kind in CriterionKind::ALL {
            assert_eq!(kind.short_name().parse::<CriterionKind>().unwrap(), kind);
        }
        assert!("foo".parse::<CriterionKind>().is_err());
    }

    #[test]
    fn moment_file_round_trip() {
        let data: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).cos()).collect();
        let m = estimate_moments(&series(20, 2, &data), 2).unwrap();
        let json = serde_json::to_string(&m.to_file()).unwrap();
        let back = LaggedMoments::from_file(&serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(back, m);
    }
}
