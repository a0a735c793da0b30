//! Bootstrap experiments: per-resample evaluation and ordered aggregation.
//!
//! Each resample is an independent unit of work keyed by its index, so the
//! caller may evaluate them in any order or in parallel and aggregate the
//! outcomes sorted by index.

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::backtest::{diversification, horizon_skewness, long_short_split, PerformanceReport, SKEW_HORIZONS};
use crate::bootstrap::{BootstrapConfig, StationaryBootstrap};
use crate::graph::GraphHyperParams;
use crate::market::PricePanel;
use crate::model::{cache_for, run_model, warmup_row, ModelKind, ModelRun, StrategyConfig};
use crate::stats::{ks_one_sided, wilcoxon_one_sided, KsResult, WilcoxonResult};
use crate::{Error, Matrix, Result};

/// Everything fixed for the duration of an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub models: Vec<ModelKind>,
    pub strategy: StrategyConfig,
    pub bootstrap: BootstrapConfig,
    /// Graph hyperparameters per model, `None` for the baseline.
    pub hyper: Vec<Option<GraphHyperParams>>,
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        self.strategy.validate()?;
        self.bootstrap.validate()?;
        if self.models.is_empty() {
            return Err(Error::InvalidParameter("model list is empty".into()));
        }
        if self.hyper.len() != self.models.len() {
            return Err(Error::LengthMismatch { left: self.models.len(), right: self.hyper.len() });
        }
        for (m, h) in self.models.iter().zip(&self.hyper) {
            match (m, h) {
                (ModelKind::Nmm { .. }, None) => {
                    return Err(Error::InvalidParameter(alloc::format!("{m} has no alpha/beta")))
                }
                (_, Some(h)) => h.validate()?,
                _ => {}
            }
        }
        Ok(())
    }

    /// Position of the baseline in `models`.
    pub fn baseline(&self) -> Option<usize> {
        self.models.iter().position(|m| *m == ModelKind::Macd)
    }
}

/// Runs every model of `plan` on one panel over the common window.
pub fn run_models(panel: &PricePanel, plan: &ExperimentPlan) -> Result<Vec<ModelRun>> {
    let start = warmup_row(panel, &plan.strategy, &plan.models)?;
    let window = start..panel.n_dates();
    let mut runs = Vec::with_capacity(plan.models.len());
    for (model, hyper) in plan.models.iter().zip(&plan.hyper) {
        let cache = cache_for(panel, *model, &plan.strategy, window.clone())?;
        runs.push(run_model(panel, *model, &plan.strategy, hyper.as_ref(), cache.as_ref(), window.clone())?);
    }
    Ok(runs)
}

/// Statistics of every model on one resample.
#[derive(Debug, Clone, PartialEq)]
pub struct ResampleOutcome {
    pub index: usize,
    pub reports: Vec<PerformanceReport>,
    pub long: Vec<Option<PerformanceReport>>,
    pub short: Vec<Option<PerformanceReport>>,
    /// Model-by-model return correlation; `NaN` where undefined.
    pub correlation: Matrix,
    pub sign_agreement: Matrix,
    /// Against the baseline; `None` for the baseline itself or without opposing days.
    pub opposing_gain: Vec<Option<f64>>,
    /// Per model, one entry per [`SKEW_HORIZONS`] element.
    pub horizon_skew: Vec<Vec<Option<f64>>>,
}

/// Summarises finished runs of the same panel.
pub fn outcome_from_runs(index: usize, runs: &[ModelRun], baseline: Option<usize>) -> Result<ResampleOutcome> {
    let k = runs.len();
    let returns: Vec<&[f64]> = runs.iter().map(|r| r.window_returns()).collect();
    let positions: Vec<Matrix> = runs.iter().map(|r| r.window_positions()).collect();
    let mut correlation = Matrix::filled(k, k, f64::NAN);
    let mut sign_agreement = Matrix::zeros(k, k);
    let mut opposing_gain = vec![None; k];
    for a in 0..k {
        for b in a..k {
            let d = diversification(returns[a], returns[b], &positions[a], &positions[b])?;
            let c = d.correlation.unwrap_or(f64::NAN);
            correlation[(a, b)] = c;
            correlation[(b, a)] = c;
            sign_agreement[(a, b)] = d.sign_agreement;
            sign_agreement[(b, a)] = d.sign_agreement;
        }
        if let Some(base) = baseline.filter(|b| *b != a) {
            opposing_gain[a] = diversification(returns[a], returns[base], &positions[a], &positions[base])?.opposing_day_gain;
        }
    }
    let mut long = Vec::with_capacity(k);
    let mut short = Vec::with_capacity(k);
    for r in runs {
        let frame = r.frame.slice(r.window.start, r.window.end);
        let split = long_short_split(&r.window_positions(), &frame)?;
        long.push(split.long);
        short.push(split.short);
    }
    Ok(ResampleOutcome {
        index,
        reports: runs.iter().map(|r| r.report.clone()).collect(),
        long,
        short,
        correlation,
        sign_agreement,
        opposing_gain,
        horizon_skew: returns.iter().map(|r| horizon_skewness(r, &SKEW_HORIZONS).into_iter().map(|(_, s)| s).collect()).collect(),
    })
}

/// Draws resample `index` and evaluates every model on it.
pub fn run_resample(panel: &PricePanel, plan: &ExperimentPlan, index: usize) -> Result<ResampleOutcome> {
    let wrap = |e: Error| Error::Resample { index, source: Box::new(e) };
    let boot = StationaryBootstrap::new(plan.bootstrap)?;
    let sample = boot.resample_panel(panel, index).map_err(wrap)?;
    let runs = run_models(&sample, plan).map_err(wrap)?;
    outcome_from_runs(index, &runs, plan.baseline()).map_err(wrap)
}

/// Paired comparison of one model against the baseline.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ModelTest {
    pub model: String,
    pub mean_sharpe_diff: f64,
    pub wilcoxon: Option<WilcoxonResult>,
    pub ks: KsResult,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSummary {
    pub models: Vec<String>,
    pub n_resamples: usize,
    pub seed: u64,
    pub mean_reports: Vec<PerformanceReport>,
    pub mean_long: Vec<Option<PerformanceReport>>,
    pub mean_short: Vec<Option<PerformanceReport>>,
    /// `[model][resample]` net Sharpe.
    pub sharpes: Vec<Vec<f64>>,
    pub tests: Vec<ModelTest>,
    pub correlation: Matrix,
    pub sign_agreement: Matrix,
    pub opposing_gain: Vec<Option<f64>>,
    pub horizons: Vec<usize>,
    pub horizon_skew: Vec<Vec<Option<f64>>>,
}

fn mean_option(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for v in values.flatten() {
        sum += v;
        n += 1;
    }
    if n == 0 {
        None
    } else {
        Some(sum / n as f64)
    }
}

/// Field-wise mean; optional fields average over the reports that have them.
pub fn mean_report(reports: &[&PerformanceReport]) -> Option<PerformanceReport> {
    if reports.is_empty() {
        return None;
    }
    let n = reports.len() as f64;
    let avg = |f: fn(&PerformanceReport) -> f64| reports.iter().map(|r| f(r)).sum::<f64>() / n;
    let opt = |f: fn(&PerformanceReport) -> Option<f64>| mean_option(reports.iter().map(|r| f(r)));
    Some(PerformanceReport {
        n_days: libm::round(avg(|r| r.n_days as f64)) as usize,
        gross_return: avg(|r| r.gross_return),
        net_return: avg(|r| r.net_return),
        transaction_cost: avg(|r| r.transaction_cost),
        vol: avg(|r| r.vol),
        sharpe: opt(|r| r.sharpe),
        downside_deviation: avg(|r| r.downside_deviation),
        mdd: avg(|r| r.mdd),
        sortino: opt(|r| r.sortino),
        calmar: opt(|r| r.calmar),
        skewness: opt(|r| r.skewness),
        hit_rate: avg(|r| r.hit_rate),
        avg_profit_over_avg_loss: opt(|r| r.avg_profit_over_avg_loss),
    })
}

/// Reduces outcomes in resample order. Fails if any model has an undefined
/// Sharpe on some resample.
pub fn aggregate(plan: &ExperimentPlan, outcomes: &[ResampleOutcome]) -> Result<ExperimentSummary> {
    let k = plan.models.len();
    let mut sorted: Vec<&ResampleOutcome> = outcomes.iter().collect();
    sorted.sort_by_key(|o| o.index);
    if sorted.is_empty() {
        return Err(Error::InvalidParameter("no resample outcomes".into()));
    }
    let n = sorted.len();
    let mut sharpes = vec![Vec::with_capacity(n); k];
    for o in &sorted {
        for (m, rep) in o.reports.iter().enumerate() {
            let s = rep.sharpe.ok_or_else(|| Error::Resample {
                index: o.index,
                source: Box::new(Error::InvalidParameter(alloc::format!("{} has zero volatility", plan.models[m]))),
            })?;
            sharpes[m].push(s);
        }
    }
    let per_model = |m: usize, pick: fn(&ResampleOutcome, usize) -> Option<&PerformanceReport>| {
        let reps: Vec<&PerformanceReport> = sorted.iter().filter_map(|o| pick(o, m)).collect();
        mean_report(&reps)
    };
    let mean_reports: Vec<PerformanceReport> =
        (0..k).map(|m| per_model(m, |o, m| Some(&o.reports[m])).expect("non-empty")).collect();
    let mean_long = (0..k).map(|m| per_model(m, |o, m| o.long[m].as_ref())).collect();
    let mean_short = (0..k).map(|m| per_model(m, |o, m| o.short[m].as_ref())).collect();

    let mut tests = Vec::new();
    if let Some(base) = plan.baseline() {
        for m in (0..k).filter(|m| *m != base) {
            let diffs: Vec<f64> = sharpes[m].iter().zip(&sharpes[base]).map(|(a, b)| a - b).collect();
            let wilcoxon = match wilcoxon_one_sided(&diffs) {
                Ok(w) => Some(w),
                Err(Error::AllZeroDifferences) => None,
                Err(e) => return Err(e),
            };
            tests.push(ModelTest {
                model: plan.models[m].name(),
                mean_sharpe_diff: diffs.iter().sum::<f64>() / n as f64,
                wilcoxon,
                ks: ks_one_sided(&sharpes[base], &sharpes[m])?,
            });
        }
    }

    let mean_matrix = |pick: fn(&ResampleOutcome) -> &Matrix| {
        let mut out = Matrix::zeros(k, k);
        for a in 0..k {
            for b in 0..k {
                let vals = sorted.iter().map(|o| pick(o)[(a, b)]).filter(|v| !v.is_nan());
                out[(a, b)] = mean_option(vals.map(Some)).unwrap_or(f64::NAN);
            }
        }
        out
    };
    Ok(ExperimentSummary {
        models: plan.models.iter().map(|m| m.name()).collect(),
        n_resamples: n,
        seed: plan.bootstrap.seed,
        mean_reports,
        mean_long,
        mean_short,
        correlation: mean_matrix(|o| &o.correlation),
        sign_agreement: mean_matrix(|o| &o.sign_agreement),
        opposing_gain: (0..k).map(|m| mean_option(sorted.iter().map(|o| o.opposing_gain[m]))).collect(),
        horizons: SKEW_HORIZONS.to_vec(),
        horizon_skew: (0..k)
            .map(|m| {
                (0..SKEW_HORIZONS.len()).map(|h| mean_option(sorted.iter().map(|o| o.horizon_skew[m][h]))).collect()
            })
            .collect(),
        sharpes,
        tests,
    })
}

/// Sequential reference implementation: every resample in index order.
pub fn run_experiment(panel: &PricePanel, plan: &ExperimentPlan) -> Result<ExperimentSummary> {
    plan.validate()?;
    let outcomes = (0..plan.bootstrap.n_resamples)
        .map(|i| run_resample(panel, plan, i))
        .collect::<Result<Vec<_>>>()?;
    aggregate(plan, &outcomes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::drifting_panel;

    fn macd_plan(n: usize) -> ExperimentPlan {
        ExperimentPlan {
            models: vec![ModelKind::Macd],
            strategy: StrategyConfig::default(),
            bootstrap: BootstrapConfig { n_resamples: n, seed: 3, ..Default::default() },
            hyper: vec![None],
        }
    }

    #[test]
    fn single_macd_resample() {
        let panel = drifting_panel(&[0.1, -0.1], 1.0, 300, 2).unwrap();
        let s = run_experiment(&panel, &macd_plan(1)).unwrap();
        assert_eq!(s.mean_reports.len(), 1);
        assert_eq!(s.sharpes, vec![vec![s.mean_reports[0].sharpe.unwrap()]]);
        assert!(s.tests.is_empty());
    }

    #[test]
    fn rerun_is_identical_and_mean_is_exact() {
        let panel = drifting_panel(&[0.1, -0.1], 1.0, 300, 2).unwrap();
        let a = run_experiment(&panel, &macd_plan(4)).unwrap();
        let b = run_experiment(&panel, &macd_plan(4)).unwrap();
        assert_eq!(a, b);
        let mean = a.sharpes[0].iter().sum::<f64>() / 4.0;
        assert!((a.mean_reports[0].sharpe.unwrap() - mean).abs() <= 1e-12);
    }

    #[test]
    fn aggregate_is_order_independent() {
        let panel = drifting_panel(&[0.1, -0.1], 1.0, 300, 2).unwrap();
        let plan = macd_plan(3);
        let mut outs: Vec<_> = (0..3).map(|i| run_resample(&panel, &plan, i).unwrap()).collect();
        let a = aggregate(&plan, &outs).unwrap();
        outs.reverse();
        assert_eq!(a, aggregate(&plan, &outs).unwrap());
    }

    #[test]
    fn plan_validation() {
        let mut p = macd_plan(1);
        p.models.push(ModelKind::Nmm { detector: crate::leadlag::Detector::Levy, ensemble: false });
        assert!(p.validate().is_err());
        p.hyper.push(None);
        assert!(p.validate().is_err());
    }
}
