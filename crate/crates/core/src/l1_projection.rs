//! Euclidean projection onto the l1-ball `{z : ||z||_1 <= L}` by sorting and
//! soft-thresholding.

use nalgebra::DVector;

use crate::error::{invalid, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionResult {
    pub z: DVector<f64>,
    /// Soft threshold; zero when the input was already inside the ball.
    pub threshold: f64,
    pub active: bool,
}

pub fn project_l1(h: &DVector<f64>, radius: f64) -> Result<ProjectionResult> {
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(invalid(format!("l1-ball radius must be positive, got {radius}")));
    }
    if h.iter().any(|v| !v.is_finite()) {
        return Err(invalid("projection input must be finite"));
    }
    if h.lp_norm(1) <= radius {
        return Ok(ProjectionResult {
            z: h.clone(),
            threshold: 0.0,
            active: false,
        });
    }

    let mut mags: Vec<f64> = h.iter().map(|v| v.abs()).collect();
    mags.sort_unstable_by(|a, b| b.total_cmp(a));

    // Largest j with b_(j) - (sum_{i<=j} b_(i) - L)/j > 0.
    let mut cumsum = 0.0;
    let mut pivot_count = 0;
    let mut pivot_sum = 0.0;
    for (j, &b) in mags.iter().enumerate() {
        cumsum += b;
        if b - (cumsum - radius) / (j + 1) as f64 > 0.0 {
            pivot_count = j + 1;
            pivot_sum = cumsum;
        }
    }
    let threshold = ((pivot_sum - radius) / pivot_count as f64).max(0.0);
    let z = h.map(|v| v.signum() * (v.abs() - threshold).max(0.0));
    Ok(ProjectionResult {
        z,
        threshold,
        active: true,
    })
}
