//! Seeded synthetic cointegrated markets.
//!
//! `N` stationary AR(1) spreads and `M - N` random walks are mixed into `M`
//! log-price series through a random invertible loading matrix `P`. The basis
//! returned is the first `N` columns of `P^{-T}` (columns rescaled to unit l1
//! norm), so `B' y_t` recovers the AR(1) spreads up to scale and a constant.

use chrono::{Duration, NaiveDate};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::market_data::{AssetPanel, SpreadBasis};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub assets: usize,
    pub spreads: usize,
    pub periods: usize,
    /// AR(1) coefficient of every spread; must lie in `(-1, 1)`.
    pub ar_coefficient: f64,
    pub spread_noise: f64,
    pub walk_noise: f64,
    /// Strength of the random part of the loading matrix `P = I + loading * G`.
    pub loading: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            assets: 6,
            spreads: 3,
            periods: 1000,
            ar_coefficient: 0.5,
            spread_noise: 0.01,
            walk_noise: 0.01,
            loading: 0.3,
            seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.assets == 0 || self.spreads == 0 || self.spreads > self.assets {
            return Err(invalid(format!(
                "need 1 <= spreads <= assets, got spreads={} assets={}",
                self.spreads, self.assets
            )));
        }
        if self.periods < 3 {
            return Err(invalid("need at least 3 periods"));
        }
        if !(self.ar_coefficient.abs() < 1.0) {
            return Err(invalid(format!(
                "AR coefficient must lie in (-1, 1) for stationary spreads, got {}",
                self.ar_coefficient
            )));
        }
        if !(self.spread_noise > 0.0) || !(self.walk_noise >= 0.0) || !(self.loading >= 0.0) {
            return Err(invalid("noise levels must be positive and loading non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub panel: AssetPanel,
    /// Basis with unit leverage budget.
    pub basis: SpreadBasis,
    /// Latent AR(1) spreads (`T x N`) before mixing.
    pub latent_spreads: DMatrix<f64>,
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthData> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
    let (m, n, t) = (cfg.assets, cfg.spreads, cfg.periods);

    let loading = DMatrix::from_fn(m, m, |i, j| if i == j { 1.0 } else { 0.0 }) + DMatrix::from_fn(m, m, |_, _| cfg.loading * normal());
    let inverse = loading
        .clone()
        .try_inverse()
        .ok_or_else(|| invalid("random loading matrix is singular; try another seed"))?;
    let mut basis = inverse.transpose().columns(0, n).into_owned();
    for mut col in basis.column_iter_mut() {
        let norm = col.lp_norm(1);
        col /= norm;
    }

    let phi = cfg.ar_coefficient;
    let stationary_sd = cfg.spread_noise / (1.0 - phi * phi).sqrt();
    let mut latent = DMatrix::zeros(t, m);
    for j in 0..m {
        latent[(0, j)] = if j < n { stationary_sd * normal() } else { 0.0 };
    }
    for i in 1..t {
        for j in 0..m {
            latent[(i, j)] = if j < n {
                phi * latent[(i - 1, j)] + cfg.spread_noise * normal()
            } else {
                latent[(i - 1, j)] + cfg.walk_noise * normal()
            };
        }
    }
    let base_level = 100f64.ln();
    let log_prices = (&latent * loading.transpose()).add_scalar(base_level);

    let start = NaiveDate::from_ymd_opt(2020, 1, 1).expect("valid date");
    let dates = (0..t).map(|i| start + Duration::days(i as i64)).collect();
    let tickers = (1..=m).map(|i| format!("A{i:02}")).collect();
    Ok(SynthData {
        panel: AssetPanel::new(dates, tickers, log_prices)?,
        basis: SpreadBasis::new(basis, 1.0)?,
        latent_spreads: latent.columns(0, n).into_owned(),
    })
}
