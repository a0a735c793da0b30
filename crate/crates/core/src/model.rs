//! Model zoo, strategy configuration and the single-panel pipeline.

use alloc::string::String;
use alloc::vec::Vec;
use alloc::{format, vec};
use core::fmt;
use core::ops::Range;
use core::str::FromStr;

use crate::backtest::{PerformanceReport, PnlFrame};
use crate::graph::{ensemble_network, GraphHyperParams};
use crate::leadlag::{leadlag_matrix, Detector};
use crate::market::{PricePanel, VOL_SPAN};
use crate::signals::{
    network_feature, position_signal, OscillatorSet, PositionParams, DEFAULT_LAMBDA, DEFAULT_SIGMA_TARGET,
    DEFAULT_SLOW_RATIO, SPEEDS,
};
use crate::{Error, Matrix, Result};

pub const DEFAULT_LOOKBACK: usize = 132;
pub const ENSEMBLE_LOOKBACKS: [usize; 6] = [22, 44, 66, 88, 110, 132];
pub const DEFAULT_DESCRIPTOR_LEN: usize = 11;
pub const HYPER_GRID: [f64; 6] = [0.001, 0.01, 0.1, 1.0, 10.0, 100.0];
pub const DEFAULT_GAMMA: f64 = 100_000_000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Macd,
    Nmm { detector: Detector, ensemble: bool },
}

impl ModelKind {
    /// Baseline plus every detector with a single and an ensemble lookback.
    pub fn zoo() -> Vec<ModelKind> {
        let mut out = vec![ModelKind::Macd];
        for detector in [Detector::Dtw, Detector::Ddtw, Detector::Sdtw, Detector::Sddtw, Detector::Levy] {
            out.push(ModelKind::Nmm { detector, ensemble: false });
            out.push(ModelKind::Nmm { detector, ensemble: true });
        }
        out
    }

    pub fn name(&self) -> String {
        match self {
            ModelKind::Macd => "MACD".into(),
            ModelKind::Nmm { detector, ensemble: false } => format!("NMM-{}", detector.name()),
            ModelKind::Nmm { detector, ensemble: true } => format!("NMM-{}-E", detector.name()),
        }
    }

    pub fn detector(&self) -> Option<Detector> {
        match self {
            ModelKind::Macd => None,
            ModelKind::Nmm { detector, .. } => Some(*detector),
        }
    }

    pub fn lookbacks(&self, cfg: &StrategyConfig) -> Vec<usize> {
        match self {
            ModelKind::Macd => Vec::new(),
            ModelKind::Nmm { ensemble: false, .. } => vec![cfg.lookback],
            ModelKind::Nmm { ensemble: true, .. } => cfg.ensemble_lookbacks.clone(),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let up = s.trim().to_ascii_uppercase();
        if up == "MACD" {
            return Ok(ModelKind::Macd);
        }
        let unknown = || Error::InvalidParameter(format!("unknown model '{s}'"));
        let rest = up.strip_prefix("NMM-").ok_or_else(unknown)?;
        let (det, ensemble) = match rest.strip_suffix("-E") {
            Some(d) => (d, true),
            None => (rest, false),
        };
        let detector = det.parse::<Detector>().map_err(|_| unknown())?;
        Ok(ModelKind::Nmm { detector, ensemble })
    }
}

/// Strategy constants shared by every model.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct StrategyConfig {
    pub speeds: Vec<u32>,
    pub slow_ratio: f64,
    pub lambda: f64,
    pub sigma_target: f64,
    pub gamma: f64,
    pub lookback: usize,
    pub ensemble_lookbacks: Vec<usize>,
    pub descriptor_len: usize,
    pub vol_span: usize,
    pub alpha_grid: Vec<f64>,
    pub beta_grid: Vec<f64>,
    pub graph_max_iters: usize,
    pub graph_tol: f64,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        let graph = GraphHyperParams::default();
        Self {
            speeds: SPEEDS.to_vec(),
            slow_ratio: DEFAULT_SLOW_RATIO,
            lambda: DEFAULT_LAMBDA,
            sigma_target: DEFAULT_SIGMA_TARGET,
            gamma: DEFAULT_GAMMA,
            lookback: DEFAULT_LOOKBACK,
            ensemble_lookbacks: ENSEMBLE_LOOKBACKS.to_vec(),
            descriptor_len: DEFAULT_DESCRIPTOR_LEN,
            vol_span: VOL_SPAN,
            alpha_grid: HYPER_GRID.to_vec(),
            beta_grid: HYPER_GRID.to_vec(),
            graph_max_iters: graph.max_iters,
            graph_tol: graph.tol,
        }
    }
}

impl StrategyConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.speeds.is_empty() || self.speeds.contains(&0) {
            return bad("speeds must be non-empty and >= 1".into());
        }
        if !(self.slow_ratio > 1.0) {
            return bad(format!("slow_ratio must be > 1, got {}", self.slow_ratio));
        }
        if !(self.lambda > 0.0 && self.sigma_target > 0.0 && self.gamma > 0.0) {
            return bad("lambda, sigma_target and gamma must be positive".into());
        }
        if self.lookback < 3 || self.ensemble_lookbacks.iter().any(|l| *l < 3) || self.ensemble_lookbacks.is_empty() {
            return bad("lookbacks must be >= 3".into());
        }
        if self.descriptor_len < 3 || self.descriptor_len % 2 == 0 {
            return bad(format!("descriptor length must be odd and >= 3, got {}", self.descriptor_len));
        }
        if self.vol_span < 2 {
            return bad("vol_span must be >= 2".into());
        }
        if self.alpha_grid.is_empty() || self.beta_grid.is_empty() {
            return bad("hyperparameter grids must be non-empty".into());
        }
        if self.alpha_grid.iter().any(|a| !(*a > 0.0)) || self.beta_grid.iter().any(|b| !(*b >= 0.0)) {
            return bad("alpha must be > 0 and beta >= 0".into());
        }
        Ok(())
    }

    pub fn position_params(&self) -> PositionParams {
        PositionParams { gamma: self.gamma, sigma_target: self.sigma_target, lambda: self.lambda }
    }

    pub fn graph_params(&self, alpha: f64, beta: f64) -> GraphHyperParams {
        GraphHyperParams { alpha, beta, max_iters: self.graph_max_iters, tol: self.graph_tol }
    }

    /// Longest lookback any model in `models` needs.
    pub fn max_lookback(&self, models: &[ModelKind]) -> usize {
        models.iter().flat_map(|m| m.lookbacks(self)).max().unwrap_or(1)
    }
}

/// First row on which every model in `models` can form a position: the
/// first fully defined row plus the longest lookback.
pub fn warmup_row(panel: &PricePanel, cfg: &StrategyConfig, models: &[ModelKind]) -> Result<usize> {
    let first = panel.first_defined_row().ok_or(Error::TooShort { needed: 1, got: 0 })?;
    let row = first + cfg.max_lookback(models) - 1;
    if row + 3 > panel.n_dates() {
        return Err(Error::InsufficientHistory { row: panel.n_dates(), needed: row + 3 });
    }
    Ok(row)
}

/// Lead-lag matrices for one detector, per row and lookback.
#[derive(Debug, Clone, PartialEq)]
pub struct LeadLagCache {
    pub detector: Detector,
    pub lookbacks: Vec<usize>,
    pub rows: Range<usize>,
    matrices: Vec<Vec<Matrix>>,
}

impl LeadLagCache {
    pub fn build(
        panel: &PricePanel,
        detector: Detector,
        lookbacks: &[usize],
        descriptor_len: usize,
        rows: Range<usize>,
    ) -> Result<Self> {
        let mut matrices = Vec::with_capacity(rows.len());
        for t in rows.clone() {
            let mut per = Vec::with_capacity(lookbacks.len());
            for &l in lookbacks {
                per.push(leadlag_matrix(&panel.scaled_deltas, t, l, detector, descriptor_len)?.values);
            }
            matrices.push(per);
        }
        Ok(Self { detector, lookbacks: lookbacks.to_vec(), rows, matrices })
    }

    /// Matrices for `row`, in lookback order.
    pub fn get(&self, row: usize) -> Option<&[Matrix]> {
        if self.rows.contains(&row) {
            Some(&self.matrices[row - self.rows.start])
        } else {
            None
        }
    }
}

/// Positions and pnl of one model on one panel.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelRun {
    pub model: ModelKind,
    pub hyper: Option<GraphHyperParams>,
    /// Rows with positions; the report covers the same rows.
    pub window: Range<usize>,
    /// `T × M`, zero outside the window.
    pub positions: Matrix,
    pub frame: PnlFrame,
    pub report: PerformanceReport,
}

impl ModelRun {
    pub fn window_returns(&self) -> &[f64] {
        &self.frame.returns[self.window.clone()]
    }

    pub fn window_positions(&self) -> Matrix {
        self.positions.slice_rows(self.window.start, self.window.end)
    }
}

/// Runs `model` with positions formed on rows `window`.
///
/// NMM models need `hyper` and a cache covering the window, which must have
/// been built for the same detector and lookbacks.
pub fn run_model(
    panel: &PricePanel,
    model: ModelKind,
    cfg: &StrategyConfig,
    hyper: Option<&GraphHyperParams>,
    cache: Option<&LeadLagCache>,
    window: Range<usize>,
) -> Result<ModelRun> {
    if window.end > panel.n_dates() || window.len() < 2 {
        return Err(Error::InvalidParameter(format!("window {window:?} outside {} rows", panel.n_dates())));
    }
    let oscillators = OscillatorSet::compute(&panel.scaled_prices, &cfg.speeds, cfg.slow_ratio)?;
    let params = cfg.position_params();
    let mut positions = Matrix::zeros(panel.n_dates(), panel.n_markets());
    let nmm = match model {
        ModelKind::Macd => None,
        ModelKind::Nmm { detector, .. } => {
            let hyper = hyper.ok_or_else(|| Error::InvalidParameter(format!("{model} needs alpha and beta")))?;
            let cache = cache.ok_or_else(|| Error::InvalidParameter(format!("{model} needs lead-lag matrices")))?;
            if cache.detector != detector || cache.lookbacks != model.lookbacks(cfg) {
                return Err(Error::InvalidParameter(format!("lead-lag cache does not match {model}")));
            }
            Some((hyper, cache))
        }
    };
    for t in window.clone() {
        let raw = oscillators.at(t);
        let features = match nmm {
            None => raw,
            Some((hyper, cache)) => {
                let mats = cache.get(t).ok_or(Error::InsufficientHistory { row: t, needed: cache.rows.start })?;
                let refs: Vec<&Matrix> = mats.iter().collect();
                let net = ensemble_network(&refs, hyper)?;
                network_feature(&raw, &net.values)?
            }
        };
        let x = position_signal(
            &features,
            panel.vol22.row(t),
            panel.point_values.row(t),
            panel.fx_rates.row(t),
            &params,
        )?;
        positions.row_mut(t).copy_from_slice(&x);
    }
    let spreads: Vec<f64> = panel.markets.iter().map(|m| m.half_spread).collect();
    let frame = PnlFrame::from_positions(
        panel.dates.clone(),
        &positions,
        &panel.deltas,
        &panel.point_values,
        &panel.fx_rates,
        &spreads,
        cfg.gamma,
    )?;
    let report = frame.slice(window.start, window.end).report()?;
    Ok(ModelRun { model, hyper: hyper.copied().filter(|_| nmm.is_some()), window, positions, frame, report })
}

/// Builds the cache a model needs over `window`; `None` for the baseline.
pub fn cache_for(
    panel: &PricePanel,
    model: ModelKind,
    cfg: &StrategyConfig,
    window: Range<usize>,
) -> Result<Option<LeadLagCache>> {
    match model.detector() {
        None => Ok(None),
        Some(d) => LeadLagCache::build(panel, d, &model.lookbacks(cfg), cfg.descriptor_len, window).map(Some),
    }
}

/// In-sample Sharpe for one grid point; `None` if infeasible.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GridPoint {
    pub alpha: f64,
    pub beta: f64,
    pub sharpe: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GridSearchResult {
    pub alpha: f64,
    pub beta: f64,
    pub sharpe: f64,
    pub points: Vec<GridPoint>,
}

fn dedup_sorted(grid: &[f64]) -> Vec<f64> {
    let mut g = grid.to_vec();
    g.sort_by(f64::total_cmp);
    g.dedup();
    g
}

/// Picks the best feasible point: highest Sharpe, ties toward larger β,
/// then larger α.
pub fn select_best(points: &[GridPoint]) -> Result<GridSearchResult> {
    let mut best: Option<(f64, f64, f64)> = None;
    for p in points {
        let Some(s) = p.sharpe else { continue };
        let better = match best {
            None => true,
            Some((bs, ba, bb)) => s > bs || (s == bs && (p.beta > bb || (p.beta == bb && p.alpha > ba))),
        };
        if better {
            best = Some((s, p.alpha, p.beta));
        }
    }
    let (sharpe, alpha, beta) = best.ok_or(Error::NoFeasibleCandidate)?;
    Ok(GridSearchResult { alpha, beta, sharpe, points: points.to_vec() })
}

/// Evaluates every `(α, β)` in the product of the (deduplicated) grids on
/// `window` and returns the in-sample Sharpe maximiser. Numerical failures
/// mark a point infeasible.
pub fn grid_search(
    panel: &PricePanel,
    model: ModelKind,
    cfg: &StrategyConfig,
    cache: &LeadLagCache,
    window: Range<usize>,
) -> Result<GridSearchResult> {
    if model == ModelKind::Macd {
        return Err(Error::InvalidParameter("the baseline has no graph hyperparameters".into()));
    }
    let mut points = Vec::new();
    for &alpha in &dedup_sorted(&cfg.alpha_grid) {
        for &beta in &dedup_sorted(&cfg.beta_grid) {
            let hyper = cfg.graph_params(alpha, beta);
            let sharpe = match run_model(panel, model, cfg, Some(&hyper), Some(cache), window.clone()) {
                Ok(run) => run.report.sharpe,
                Err(e) if e.is_numerical() => {
                    log::warn!("{model}: alpha={alpha} beta={beta} infeasible: {e}");
                    None
                }
                Err(e) => return Err(e),
            };
            points.push(GridPoint { alpha, beta, sharpe });
        }
    }
    select_best(&points)
}
