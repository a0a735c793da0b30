//! Synthetic panels with known lead-lag structure.

use alloc::format;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::date::weekday_calendar;
use crate::market::{ContractSpec, PricePanel, Sector};
use crate::{Date, Matrix, Result};

/// Leaders share a slowly varying drift; follower `m + n_leaders` repeats
/// leader `m`'s previous delta scaled by `spillover`, plus its own noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpilloverConfig {
    pub n_leaders: usize,
    pub n_dates: usize,
    pub spillover: f64,
    /// AR(1) coefficient of the common drift.
    pub trend_persistence: f64,
    /// Stationary standard deviation of the common drift.
    pub trend_scale: f64,
    pub leader_noise: f64,
    pub follower_noise: f64,
    pub point_value: f64,
    pub half_spread: f64,
    pub seed: u64,
}

impl Default for SpilloverConfig {
    fn default() -> Self {
        Self {
            n_leaders: 3,
            n_dates: 1500,
            spillover: 0.8,
            trend_persistence: 0.99,
            trend_scale: 0.15,
            leader_noise: 1.0,
            follower_noise: 0.6,
            point_value: 10.0,
            half_spread: 0.02,
            seed: 20,
        }
    }
}

/// `n_dates × 2·n_leaders` price deltas; row 0 is `NaN`.
pub fn spillover_deltas(cfg: &SpilloverConfig) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.n_leaders;
    let mut out = Matrix::zeros(cfg.n_dates, 2 * n);
    let phi = cfg.trend_persistence;
    let innov = cfg.trend_scale * libm::sqrt(1.0 - phi * phi);
    let mut drift = 0.0;
    let mut z = || -> f64 { StandardNormal.sample(&mut rng) };
    for t in 0..cfg.n_dates {
        drift = phi * drift + innov * z();
        for m in 0..n {
            out[(t, m)] = drift + cfg.leader_noise * z();
        }
        for m in 0..n {
            let prev = if t == 0 { 0.0 } else { out[(t - 1, m)] };
            out[(t, n + m)] = cfg.spillover * prev + cfg.follower_noise * z();
        }
    }
    for m in 0..2 * n {
        out[(0, m)] = f64::NAN;
    }
    out
}

/// Builds a panel whose prices are `base` plus cumulative `deltas` (row 0 of
/// `deltas` is ignored).
pub fn panel_from_deltas(deltas: &Matrix, specs: Vec<ContractSpec>, start: Date, base: f64) -> Result<PricePanel> {
    let (t_len, m) = (deltas.rows(), deltas.cols());
    let mut prices = Matrix::zeros(t_len, m);
    for j in 0..m {
        let mut p = base;
        for t in 0..t_len {
            if t > 0 {
                p += deltas[(t, j)];
            }
            prices[(t, j)] = p;
        }
    }
    PricePanel::new(weekday_calendar(start, t_len), specs, prices)
}

fn specs(names: impl Iterator<Item = alloc::string::String>, pv: f64, hs: f64) -> Vec<ContractSpec> {
    names.map(|n| ContractSpec::simple(&n, pv, hs, Sector::Equity)).collect()
}

/// Markets `L1..Ln` lead `F1..Fn`.
pub fn spillover_panel(cfg: &SpilloverConfig) -> Result<PricePanel> {
    let names = (1..=cfg.n_leaders).map(|i| format!("L{i}")).chain((1..=cfg.n_leaders).map(|i| format!("F{i}")));
    panel_from_deltas(
        &spillover_deltas(cfg),
        specs(names, cfg.point_value, cfg.half_spread),
        Date::new(2010, 1, 4).unwrap(),
        1000.0,
    )
}

/// Independent Gaussian random walks with per-market drift.
pub fn drifting_panel(drifts: &[f64], noise: f64, n_dates: usize, seed: u64) -> Result<PricePanel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut d = Matrix::zeros(n_dates, drifts.len());
    for t in 1..n_dates {
        for (j, mu) in drifts.iter().enumerate() {
            let e: f64 = StandardNormal.sample(&mut rng);
            d[(t, j)] = mu + noise * e;
        }
    }
    let names = (1..=drifts.len()).map(|i| format!("M{i}"));
    panel_from_deltas(&d, specs(names, 10.0, 0.02), Date::new(2010, 1, 4).unwrap(), 1000.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn followers_track_lagged_leaders() {
        let cfg = SpilloverConfig { n_dates: 4000, ..Default::default() };
        let d = spillover_deltas(&cfg);
        let lead: Vec<f64> = (1..3999).map(|t| d[(t, 0)]).collect();
        let follow: Vec<f64> = (2..4000).map(|t| d[(t, 3)]).collect();
        let beta = lead.iter().zip(&follow).map(|(a, b)| a * b).sum::<f64>() / lead.iter().map(|a| a * a).sum::<f64>();
        assert!((beta - 0.8).abs() < 0.05, "beta {beta}");
    }

    #[test]
    fn deterministic_by_seed() {
        let cfg = SpilloverConfig { n_dates: 50, ..Default::default() };
        assert_eq!(spillover_deltas(&cfg).row(10), spillover_deltas(&cfg).row(10));
        let other = SpilloverConfig { seed: 1, ..cfg };
        assert_ne!(spillover_deltas(&cfg).row(10), spillover_deltas(&other).row(10));
    }

    #[test]
    fn panel_shape() {
        let p = spillover_panel(&SpilloverConfig { n_dates: 100, ..Default::default() }).unwrap();
        assert_eq!((p.n_dates(), p.n_markets()), (100, 6));
        assert_eq!(p.markets[3].market_id, "F1");
        assert_eq!(p.prices[(0, 0)], 1000.0);
    }
}
