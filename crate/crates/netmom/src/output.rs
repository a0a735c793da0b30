//! CSV and JSON artifacts. Every CSV row ends with the artifact version, the
//! seed and the config checksum; JSON files carry the same under `manifest`.

use std::fs;
use std::path::{Path, PathBuf};

use netmom_core::backtest::PerformanceReport;
use netmom_core::experiment::{ExperimentSummary, ModelTest};
use netmom_core::model::{GridSearchResult, ModelRun};
use netmom_core::Matrix;
use serde::{Deserialize, Serialize};

use crate::error::{AppError, AppResult};
use crate::runner::HyperChoice;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Ingest,
    Backtest,
    Gridsearch,
    Experiment,
    Report,
}

/// Provenance of one command invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: Command,
    pub config_path: PathBuf,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub version: String,
    pub config_sha256: String,
    pub panel_sha256: String,
}

impl RunManifest {
    fn stamp(&self) -> [String; 3] {
        [self.version.clone(), self.seed.to_string(), self.config_sha256.clone()]
    }
}

const STAMP_HEADER: [&str; 3] = ["version", "seed", "config_sha256"];

struct CsvOut {
    path: PathBuf,
    writer: csv::Writer<fs::File>,
    stamp: [String; 3],
}

impl CsvOut {
    fn create(dir: &Path, name: &str, header: &[&str], manifest: &RunManifest) -> AppResult<Self> {
        let path = dir.join(name);
        let file = fs::File::create(&path).map_err(AppError::io(&path))?;
        let mut out = Self { path, writer: csv::Writer::from_writer(file), stamp: manifest.stamp() };
        let full: Vec<&str> = header.iter().copied().chain(STAMP_HEADER).collect();
        out.writer.write_record(&full).map_err(|e| out.err(e))?;
        Ok(out)
    }

    fn err(&self, e: csv::Error) -> AppError {
        AppError::Data(format!("{}: {e}", self.path.display()))
    }

    fn row(&mut self, fields: Vec<String>) -> AppResult<()> {
        let full: Vec<String> = fields.into_iter().chain(self.stamp.iter().cloned()).collect();
        self.writer.write_record(&full).map_err(|e| AppError::Data(format!("{}: {e}", self.path.display())))
    }

    fn finish(mut self) -> AppResult<PathBuf> {
        self.writer.flush().map_err(AppError::io(&self.path))?;
        Ok(self.path)
    }
}

fn num(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

const REPORT_HEADER: [&str; 13] = [
    "n_days",
    "gross_return",
    "net_return",
    "transaction_cost",
    "vol",
    "sharpe",
    "downside_deviation",
    "mdd",
    "sortino",
    "calmar",
    "skewness",
    "hit_rate",
    "avg_profit_over_avg_loss",
];

fn report_fields(r: &PerformanceReport) -> Vec<String> {
    vec![
        r.n_days.to_string(),
        num(r.gross_return),
        num(r.net_return),
        num(r.transaction_cost),
        num(r.vol),
        opt(r.sharpe),
        num(r.downside_deviation),
        num(r.mdd),
        opt(r.sortino),
        opt(r.calmar),
        opt(r.skewness),
        num(r.hit_rate),
        opt(r.avg_profit_over_avg_loss),
    ]
}

fn write_report_table(
    dir: &Path,
    name: &str,
    manifest: &RunManifest,
    rows: &[(String, &'static str, Option<&PerformanceReport>)],
) -> AppResult<PathBuf> {
    let header: Vec<&str> = ["model", "side"].into_iter().chain(REPORT_HEADER).collect();
    let mut out = CsvOut::create(dir, name, &header, manifest)?;
    for (model, side, rep) in rows {
        if let Some(r) = rep {
            out.row([model.clone(), side.to_string()].into_iter().chain(report_fields(r)).collect())?;
        }
    }
    out.finish()
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = (sorted.len() - 1) as f64 * q;
    let (lo, hi) = (h.floor() as usize, h.ceil() as usize);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn matrix_rows(m: &Matrix) -> Vec<Vec<Option<f64>>> {
    (0..m.rows()).map(|r| m.row(r).iter().map(|v| (!v.is_nan()).then_some(*v)).collect()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryJson {
    pub models: Vec<String>,
    pub n_resamples: usize,
    pub pipeline_runs: usize,
    pub mean_reports: Vec<PerformanceReport>,
    pub mean_long: Vec<Option<PerformanceReport>>,
    pub mean_short: Vec<Option<PerformanceReport>>,
    pub sharpes: Vec<Vec<f64>>,
    pub tests: Vec<ModelTest>,
    pub correlation: Vec<Vec<Option<f64>>>,
    pub sign_agreement: Vec<Vec<Option<f64>>>,
    pub opposing_gain: Vec<Option<f64>>,
    pub horizons: Vec<usize>,
    pub horizon_skew: Vec<Vec<Option<f64>>>,
}

impl SummaryJson {
    pub fn new(s: &ExperimentSummary) -> Self {
        Self {
            models: s.models.clone(),
            n_resamples: s.n_resamples,
            pipeline_runs: s.n_resamples * s.models.len(),
            mean_reports: s.mean_reports.clone(),
            mean_long: s.mean_long.clone(),
            mean_short: s.mean_short.clone(),
            sharpes: s.sharpes.clone(),
            tests: s.tests.clone(),
            correlation: matrix_rows(&s.correlation),
            sign_agreement: matrix_rows(&s.sign_agreement),
            opposing_gain: s.opposing_gain.clone(),
            horizons: s.horizons.clone(),
            horizon_skew: s.horizon_skew.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub manifest: RunManifest,
    pub hyper: Vec<HyperChoiceJson>,
    pub summary: SummaryJson,
}

/// Owned, deserializable form of [`HyperChoice`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperChoiceJson {
    pub model: String,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub source: String,
}

impl From<&HyperChoice> for HyperChoiceJson {
    fn from(h: &HyperChoice) -> Self {
        Self { model: h.model.clone(), alpha: h.alpha, beta: h.beta, source: h.source.to_string() }
    }
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> AppResult<PathBuf> {
    let path = dir.join(name);
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    fs::write(&path, text).map_err(AppError::io(&path))?;
    Ok(path)
}

pub fn ensure_dir(dir: &Path) -> AppResult<()> {
    fs::create_dir_all(dir).map_err(AppError::io(dir))
}

/// Writes the experiment artifacts and returns their paths.
pub fn write_experiment(
    dir: &Path,
    manifest: &RunManifest,
    hyper: &[HyperChoice],
    s: &ExperimentSummary,
) -> AppResult<Vec<PathBuf>> {
    ensure_dir(dir)?;
    let mut written = Vec::new();

    let mut rows = Vec::new();
    for (m, name) in s.models.iter().enumerate() {
        rows.push((name.clone(), "all", Some(&s.mean_reports[m])));
        rows.push((name.clone(), "long", s.mean_long[m].as_ref()));
        rows.push((name.clone(), "short", s.mean_short[m].as_ref()));
    }
    written.push(write_report_table(dir, "summary.csv", manifest, &rows)?);

    let baseline = s.models.iter().find(|m| m.as_str() == "MACD").cloned().unwrap_or_default();
    let mut p = CsvOut::create(
        dir,
        "pvalues.csv",
        &[
            "model",
            "baseline",
            "n_resamples",
            "mean_sharpe_diff",
            "wilcoxon_n",
            "wilcoxon_w_plus",
            "wilcoxon_p",
            "wilcoxon_exact",
            "ks_statistic",
            "ks_p",
        ],
        manifest,
    )?;
    for t in &s.tests {
        let w = t.wilcoxon.as_ref();
        p.row(vec![
            t.model.clone(),
            baseline.clone(),
            s.n_resamples.to_string(),
            num(t.mean_sharpe_diff),
            w.map(|w| w.n.to_string()).unwrap_or_default(),
            opt(w.map(|w| w.w_plus)),
            opt(w.map(|w| w.p_value)),
            w.map(|w| w.exact.to_string()).unwrap_or_default(),
            num(t.ks.statistic),
            num(t.ks.p_value),
        ])?;
    }
    written.push(p.finish()?);

    let mut d = CsvOut::create(dir, "diversification.csv", &["metric", "model_a", "model_b", "value"], manifest)?;
    for (metric, mat) in [("correlation", &s.correlation), ("sign_agreement", &s.sign_agreement)] {
        for (a, na) in s.models.iter().enumerate() {
            for (b, nb) in s.models.iter().enumerate() {
                d.row(vec![metric.into(), na.clone(), nb.clone(), num(mat[(a, b)])])?;
            }
        }
    }
    for (m, name) in s.models.iter().enumerate() {
        if name != &baseline {
            d.row(vec!["opposing_day_gain".into(), name.clone(), baseline.clone(), opt(s.opposing_gain[m])])?;
        }
    }
    written.push(d.finish()?);

    let mut k = CsvOut::create(dir, "skewness_horizons.csv", &["model", "horizon_days", "skewness"], manifest)?;
    for (m, name) in s.models.iter().enumerate() {
        for (h, horizon) in s.horizons.iter().enumerate() {
            k.row(vec![name.clone(), horizon.to_string(), opt(s.horizon_skew[m][h])])?;
        }
    }
    written.push(k.finish()?);

    let mut q = CsvOut::create(
        dir,
        "sharpe_distribution.csv",
        &["model", "min", "q1", "median", "q3", "max", "mean"],
        manifest,
    )?;
    for (m, name) in s.models.iter().enumerate() {
        let mut v = s.sharpes[m].clone();
        v.sort_by(f64::total_cmp);
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let qs = [0.0, 0.25, 0.5, 0.75, 1.0].map(|x| num(quantile(&v, x)));
        q.row([name.clone()].into_iter().chain(qs).chain([num(mean)]).collect())?;
    }
    written.push(q.finish()?);

    let report = ExperimentReport {
        manifest: manifest.clone(),
        hyper: hyper.iter().map(HyperChoiceJson::from).collect(),
        summary: SummaryJson::new(s),
    };
    written.push(write_json(dir, "report.json", &report)?);
    Ok(written)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestReport {
    pub manifest: RunManifest,
    pub model: String,
    pub hyper: HyperChoiceJson,
    pub start: String,
    pub end: String,
    pub report: PerformanceReport,
    pub long: Option<PerformanceReport>,
    pub short: Option<PerformanceReport>,
}

/// Writes `backtest.csv`, `backtest_returns.csv` and `backtest.json`.
pub fn write_backtest(
    dir: &Path,
    manifest: &RunManifest,
    hyper: &HyperChoice,
    run: &ModelRun,
    long: Option<&PerformanceReport>,
    short: Option<&PerformanceReport>,
) -> AppResult<Vec<PathBuf>> {
    ensure_dir(dir)?;
    let name = run.model.name();
    let rows = [(name.clone(), "all", Some(&run.report)), (name.clone(), "long", long), (name.clone(), "short", short)];
    let mut written = vec![write_report_table(dir, "backtest.csv", manifest, &rows)?];

    let mut r = CsvOut::create(dir, "backtest_returns.csv", &["date", "gross", "cost", "net"], manifest)?;
    let (gross, cost) = (run.frame.gross_returns(), run.frame.cost_returns());
    for t in run.window.clone() {
        r.row(vec![run.frame.dates[t].to_string(), num(gross[t]), num(cost[t]), num(run.frame.returns[t])])?;
    }
    written.push(r.finish()?);

    let report = BacktestReport {
        manifest: manifest.clone(),
        model: name,
        hyper: hyper.into(),
        start: run.frame.dates[run.window.start].to_string(),
        end: run.frame.dates[run.window.end - 1].to_string(),
        report: run.report.clone(),
        long: long.cloned(),
        short: short.cloned(),
    };
    written.push(write_json(dir, "backtest.json", &report)?);
    Ok(written)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridReport<'a> {
    pub manifest: &'a RunManifest,
    pub models: Vec<(String, &'a GridSearchResult)>,
}

/// Writes `gridsearch.csv` and `gridsearch.json`.
pub fn write_gridsearch(
    dir: &Path,
    manifest: &RunManifest,
    results: &[(String, GridSearchResult)],
) -> AppResult<Vec<PathBuf>> {
    ensure_dir(dir)?;
    let mut g = CsvOut::create(dir, "gridsearch.csv", &["model", "alpha", "beta", "in_sample_sharpe", "selected"], manifest)?;
    for (model, r) in results {
        for p in &r.points {
            let selected = p.alpha == r.alpha && p.beta == r.beta;
            g.row(vec![model.clone(), num(p.alpha), num(p.beta), opt(p.sharpe), selected.to_string()])?;
        }
    }
    let mut written = vec![g.finish()?];
    let report = GridReport { manifest, models: results.iter().map(|(m, r)| (m.clone(), r)).collect() };
    written.push(write_json(dir, "gridsearch.json", &report)?);
    Ok(written)
}

pub fn read_experiment(path: &Path) -> AppResult<ExperimentReport> {
    let bytes = fs::read(path).map_err(AppError::io(path))?;
    serde_json::from_slice(&bytes).map_err(|e| AppError::Data(format!("{}: {e}", path.display())))
}

/// Plain-text tables of a finished experiment.
pub fn render_report(r: &ExperimentReport) -> String {
    let s = &r.summary;
    let f = |v: Option<f64>| v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "-".into());
    let mut out = format!(
        "netmom {} | seed {} | config {} | {} resamples\n\n",
        r.manifest.version, r.manifest.seed, &r.manifest.config_sha256[..12.min(r.manifest.config_sha256.len())], s.n_resamples
    );
    out.push_str(&format!(
        "{:<12} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}\n",
        "model", "sharpe", "sortino", "calmar", "mdd", "vol", "hit", "skew"
    ));
    for (m, name) in s.models.iter().enumerate() {
        let rep = &s.mean_reports[m];
        out.push_str(&format!(
            "{:<12} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}\n",
            name,
            f(rep.sharpe),
            f(rep.sortino),
            f(rep.calmar),
            f(Some(rep.mdd)),
            f(Some(rep.vol)),
            f(Some(rep.hit_rate)),
            f(rep.skewness)
        ));
    }
    if !s.tests.is_empty() {
        out.push_str(&format!("\n{:<12} {:>10} {:>10} {:>10}\n", "vs MACD", "mean diff", "wilcoxon p", "ks p"));
        for t in &s.tests {
            out.push_str(&format!(
                "{:<12} {:>10} {:>10} {:>10}\n",
                t.model,
                f(Some(t.mean_sharpe_diff)),
                t.wilcoxon.map(|w| format!("{:.4}", w.p_value)).unwrap_or_else(|| "-".into()),
                format!("{:.4}", t.ks.p_value)
            ));
        }
    }
    out
}
