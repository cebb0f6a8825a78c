//! Threshold trading on the portfolio spread `z_t = w_p' y_t`.
//!
//! The spread is standardized with a trailing window ending at `t`, so every
//! decision uses data up to `t` only. A short is opened when the score reaches
//! `+open_threshold`, a long at `-open_threshold`; positions close once the
//! score comes back to `close_threshold` on their side. A close and an opposite
//! open may happen in the same period. P&L is measured on log-price spread
//! differences and scaled so that the position deploys the full leverage
//! budget.

use serde::{Deserialize, Serialize};

use crate::criteria::PortfolioWeights;
use crate::error::{invalid, MrpError, Result};
use crate::market_data::{AssetPanel, SpreadBasis};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeConfig {
    pub open_threshold: f64,
    pub close_threshold: f64,
    pub lookback: usize,
    /// Periods per year used to annualize the Sharpe ratio.
    pub annualization: f64,
}

impl Default for TradeConfig {
    fn default() -> Self {
        Self {
            open_threshold: 1.0,
            close_threshold: 0.0,
            lookback: 60,
            annualization: 252.0,
        }
    }
}

impl TradeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.open_threshold > 0.0) || !self.open_threshold.is_finite() {
            return Err(invalid("open threshold must be positive"));
        }
        if !(self.close_threshold >= 0.0) || self.close_threshold >= self.open_threshold {
            return Err(invalid("close threshold must satisfy 0 <= close < open"));
        }
        if self.lookback < 2 {
            return Err(invalid("lookback must be at least 2"));
        }
        if !(self.annualization > 0.0) || !self.annualization.is_finite() {
            return Err(invalid("annualization must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Long,
    Short,
}

impl Side {
    pub fn sign(self) -> f64 {
        match self {
            Side::Long => 1.0,
            Side::Short => -1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trade {
    pub entry_index: usize,
    pub exit_index: usize,
    pub side: Side,
    pub entry_value: f64,
    pub exit_value: f64,
    pub pnl: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpenPosition {
    pub entry_index: usize,
    pub side: Side,
    pub entry_value: f64,
    /// Unrealized P&L at the last period.
    pub mark: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SharpeRatio {
    pub value: f64,
    /// Set when the return standard deviation vanished; `value` is then 0.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestReport {
    pub trades: Vec<Trade>,
    pub num_trades: usize,
    pub open_position: Option<OpenPosition>,
    pub cumulative_pnl: Vec<f64>,
    /// Position held after the decision at each period: +1 long, -1 short, 0 flat.
    pub positions: Vec<i8>,
    /// Periods skipped because the trailing standard deviation was zero.
    pub skipped_periods: Vec<usize>,
    pub roi: f64,
    pub sharpe: SharpeRatio,
}

/// Annualized `mean / sample std` of per-period returns.
pub fn sharpe_ratio(returns: &[f64], annualization: f64) -> Result<SharpeRatio> {
    if returns.len() < 2 {
        return Err(MrpError::InsufficientData(format!(
            "Sharpe ratio needs at least 2 returns, got {}",
            returns.len()
        )));
    }
    if !(annualization > 0.0) {
        return Err(invalid("annualization must be positive"));
    }
    let n = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let std = var.sqrt();
    if std < 1e-15 {
        return Ok(SharpeRatio {
            value: 0.0,
            degenerate: true,
        });
    }
    Ok(SharpeRatio {
        value: mean / std * annualization.sqrt(),
        degenerate: false,
    })
}

fn trailing_stats(window: &[f64]) -> (f64, f64) {
    let n = window.len() as f64;
    let mean = window.iter().sum::<f64>() / n;
    let var = window.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Runs the threshold rule on a raw spread path. `pnl_scale` converts a unit
/// spread move into P&L and `budget` normalizes returns and ROI.
pub fn simulate_spread(spread: &[f64], cfg: &TradeConfig, pnl_scale: f64, budget: f64) -> Result<BacktestReport> {
    cfg.validate()?;
    if spread.len() < cfg.lookback {
        return Err(MrpError::InsufficientData(format!(
            "spread has {} periods, lookback needs {}",
            spread.len(),
            cfg.lookback
        )));
    }
    if spread.iter().any(|v| !v.is_finite()) {
        return Err(invalid("spread values must be finite"));
    }
    if !(pnl_scale.is_finite() && budget > 0.0) {
        return Err(invalid("P&L scale must be finite and budget positive"));
    }

    let t_len = spread.len();
    let mut trades = Vec::new();
    let mut open: Option<(usize, Side, f64)> = None;
    let mut realized = 0.0;
    let mut cumulative_pnl = Vec::with_capacity(t_len);
    let mut positions = Vec::with_capacity(t_len);
    let mut skipped_periods = Vec::new();

    for (t, &z) in spread.iter().enumerate() {
        if t + 1 >= cfg.lookback {
            let (mean, std) = trailing_stats(&spread[t + 1 - cfg.lookback..=t]);
            if std <= 1e-12 * mean.abs().max(1.0) {
                skipped_periods.push(t);
            } else {
                let score = (z - mean) / std;
                if let Some((entry_index, side, entry_value)) = open {
                    let close = match side {
                        Side::Long => score >= -cfg.close_threshold,
                        Side::Short => score <= cfg.close_threshold,
                    };
                    if close {
                        let pnl = side.sign() * (z - entry_value) * pnl_scale;
                        realized += pnl;
                        trades.push(Trade {
                            entry_index,
                            exit_index: t,
                            side,
                            entry_value,
                            exit_value: z,
                            pnl,
                        });
                        open = None;
                    }
                }
                if open.is_none() {
                    if score >= cfg.open_threshold {
                        open = Some((t, Side::Short, z));
                    } else if score <= -cfg.open_threshold {
                        open = Some((t, Side::Long, z));
                    }
                }
            }
        }
        let mark = open.map_or(0.0, |(_, side, entry)| side.sign() * (z - entry) * pnl_scale);
        cumulative_pnl.push(realized + mark);
        positions.push(open.map_or(0, |(_, side, _)| side.sign() as i8));
    }

    let open_position = open.map(|(entry_index, side, entry_value)| OpenPosition {
        entry_index,
        side,
        entry_value,
        mark: side.sign() * (spread[t_len - 1] - entry_value) * pnl_scale,
    });
    let returns: Vec<f64> = cumulative_pnl.windows(2).map(|p| (p[1] - p[0]) / budget).collect();
    let sharpe = if returns.len() >= 2 {
        sharpe_ratio(&returns, cfg.annualization)?
    } else {
        SharpeRatio {
            value: 0.0,
            degenerate: true,
        }
    };
    let roi = cumulative_pnl.last().copied().unwrap_or(0.0) / budget;
    Ok(BacktestReport {
        num_trades: trades.len(),
        trades,
        open_position,
        cumulative_pnl,
        positions,
        skipped_periods,
        roi,
        sharpe,
    })
}

/// Portfolio spread `z_t = w_p' y_t` for every period of the panel.
pub fn portfolio_spread(weights: &PortfolioWeights, panel: &AssetPanel) -> Result<Vec<f64>> {
    if weights.w_p.len() != panel.num_assets() {
        return Err(MrpError::DimensionMismatch {
            what: "asset weights vs panel assets",
            expected: panel.num_assets(),
            found: weights.w_p.len(),
        });
    }
    Ok((panel.log_prices() * weights.asset_weights()).iter().copied().collect())
}

pub fn run_backtest(
    weights: &PortfolioWeights,
    panel: &AssetPanel,
    basis: &SpreadBasis,
    cfg: &TradeConfig,
) -> Result<BacktestReport> {
    if weights.w.iter().chain(&weights.w_p).any(|v| !v.is_finite()) {
        return Err(invalid("weights must be finite"));
    }
    let spread = portfolio_spread(weights, panel)?;
    let gross = weights.leverage();
    if !(gross > 0.0) {
        return Err(invalid("weights have zero gross exposure"));
    }
    let budget = basis.leverage_budget();
    simulate_spread(&spread, cfg, budget / gross, budget)
}
