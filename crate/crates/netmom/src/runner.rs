//! Windows, hyperparameter selection and the parallel bootstrap runner.

use std::ops::Range;

use netmom_core::experiment::{aggregate, run_resample, ExperimentPlan, ExperimentSummary, ResampleOutcome};
use netmom_core::graph::GraphHyperParams;
use netmom_core::market::PricePanel;
use netmom_core::model::{cache_for, grid_search, run_model, warmup_row, GridSearchResult, ModelKind, ModelRun};
use netmom_core::{Date, Error};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::Config;
use crate::error::{AppError, AppResult};

/// Rows whose dates fall in `[start, end]`.
pub fn date_rows(dates: &[Date], start: Option<Date>, end: Option<Date>) -> Range<usize> {
    let lo = start.map_or(0, |s| dates.partition_point(|d| *d < s));
    let hi = end.map_or(dates.len(), |e| dates.partition_point(|d| *d <= e));
    lo..hi.max(lo)
}

fn clip_window(panel: &PricePanel, cfg: &Config, models: &[ModelKind], rows: Range<usize>, label: &str) -> AppResult<Range<usize>> {
    let warm = warmup_row(panel, &cfg.strategy, models).map_err(AppError::core(format!("{label} window")))?;
    let w = rows.start.max(warm)..rows.end;
    if w.len() < 2 {
        return Err(AppError::Core {
            context: format!("{label} window {rows:?} after warm-up row {warm}"),
            source: Error::InsufficientHistory { row: rows.end, needed: warm + 2 },
        });
    }
    Ok(w)
}

pub fn train_window(panel: &PricePanel, cfg: &Config, models: &[ModelKind]) -> AppResult<Range<usize>> {
    let rows = date_rows(&panel.dates, cfg.windows.train_start, cfg.windows.train_end);
    clip_window(panel, cfg, models, rows, "training")
}

pub fn oos_window(panel: &PricePanel, cfg: &Config, models: &[ModelKind]) -> AppResult<Range<usize>> {
    let rows = date_rows(&panel.dates, cfg.windows.oos_start, cfg.windows.oos_end);
    clip_window(panel, cfg, models, rows, "out-of-sample")
}

/// How a model's graph hyperparameters were chosen.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HyperChoice {
    pub model: String,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    /// `"baseline"`, `"fixed"` or `"grid"`.
    pub source: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub search: Option<GridSearchResult>,
}

impl HyperChoice {
    pub fn params(&self, cfg: &Config) -> Option<GraphHyperParams> {
        Some(cfg.strategy.graph_params(self.alpha?, self.beta?))
    }
}

/// Grid searches one model over the training window.
pub fn search_model(panel: &PricePanel, cfg: &Config, model: ModelKind) -> AppResult<GridSearchResult> {
    let window = train_window(panel, cfg, &[model])?;
    let ctx = || format!("grid search for {model}");
    let cache = cache_for(panel, model, &cfg.strategy, window.clone())
        .map_err(AppError::core(ctx()))?
        .ok_or_else(|| AppError::Usage(format!("{model} has no graph hyperparameters")))?;
    grid_search(panel, model, &cfg.strategy, &cache, window).map_err(AppError::core(ctx()))
}

/// Fixed hyperparameters where configured, otherwise the in-sample grid
/// search winner. Models are searched in parallel; the result is in model order.
pub fn choose_hyper(panel: &PricePanel, cfg: &Config, models: &[ModelKind]) -> AppResult<Vec<HyperChoice>> {
    models
        .par_iter()
        .map(|&model| {
            let name = model.name();
            if model == ModelKind::Macd {
                return Ok(HyperChoice { model: name, alpha: None, beta: None, source: "baseline", search: None });
            }
            if let Some(h) = cfg.fixed_hyper(model) {
                return Ok(HyperChoice { model: name, alpha: Some(h.alpha), beta: Some(h.beta), source: "fixed", search: None });
            }
            let r = search_model(panel, cfg, model)?;
            log::info!("{name}: alpha={} beta={} in-sample Sharpe {:.4}", r.alpha, r.beta, r.sharpe);
            Ok(HyperChoice { model: name, alpha: Some(r.alpha), beta: Some(r.beta), source: "grid", search: Some(r) })
        })
        .collect()
}

pub fn plan(cfg: &Config, models: Vec<ModelKind>, hyper: &[HyperChoice]) -> ExperimentPlan {
    ExperimentPlan {
        hyper: hyper.iter().map(|h| h.params(cfg)).collect(),
        models,
        strategy: cfg.strategy.clone(),
        bootstrap: cfg.bootstrap(),
    }
}

fn pool(jobs: Option<usize>) -> AppResult<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| AppError::Usage(format!("cannot start {jobs:?} worker threads: {e}")))
}

/// Evaluates every resample on `jobs` threads and reduces the outcomes in
/// index order, so the summary does not depend on `jobs`. The first failing
/// resample by index is reported.
pub fn run_bootstrap(panel: &PricePanel, plan: &ExperimentPlan, jobs: Option<usize>) -> AppResult<ExperimentSummary> {
    plan.validate().map_err(AppError::core("experiment plan"))?;
    let n = plan.bootstrap.n_resamples;
    let outcomes: Vec<netmom_core::Result<ResampleOutcome>> =
        pool(jobs)?.install(|| (0..n).into_par_iter().map(|i| run_resample(panel, plan, i)).collect());
    let outcomes = outcomes.into_iter().collect::<netmom_core::Result<Vec<_>>>().map_err(AppError::core("bootstrap"))?;
    aggregate(plan, &outcomes).map_err(AppError::core("aggregating resamples"))
}

/// Runs one model on the actual panel over the out-of-sample window.
pub fn backtest(panel: &PricePanel, cfg: &Config, model: ModelKind, hyper: Option<GraphHyperParams>) -> AppResult<ModelRun> {
    let window = oos_window(panel, cfg, &[model])?;
    let ctx = || format!("backtest of {model}");
    let cache = cache_for(panel, model, &cfg.strategy, window.clone()).map_err(AppError::core(ctx()))?;
    run_model(panel, model, &cfg.strategy, hyper.as_ref(), cache.as_ref(), window).map_err(AppError::core(ctx()))
}

/// Runs `f` on a pool of `jobs` threads.
pub fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> AppResult<T> {
    Ok(pool(jobs)?.install(f))
}
