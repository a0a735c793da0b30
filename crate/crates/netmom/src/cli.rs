use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use netmom_core::backtest::long_short_split;
use netmom_core::market::PricePanel;
use netmom_core::model::ModelKind;

use crate::cache::{read_cache, write_cache};
use crate::config::Config;
use crate::data::load_panel;
use crate::error::{exit, AppError, AppResult};
use crate::output::{self, Command, RunManifest};
use crate::runner;

#[derive(Debug, Parser)]
#[command(name = "netmom", version, about = "Network momentum backtests on futures panels")]
pub struct Cli {
    /// Experiment config file (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides `output.dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Bootstrap seed; overrides `experiment.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to one per core.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Load price and contract files and write the panel cache.
    Ingest,
    /// Run one model on the actual panel over the out-of-sample window.
    Backtest {
        /// Model name, e.g. MACD or NMM-DTW-E; defaults to the first configured model.
        #[arg(long)]
        model: Option<String>,
    },
    /// In-sample alpha/beta search for the configured network models.
    Gridsearch {
        #[arg(long)]
        model: Option<String>,
    },
    /// Bootstrap experiment over the configured models.
    Experiment,
    /// Print the tables of a finished experiment.
    Report {
        /// Path to `report.json`; defaults to `<out>/report.json`.
        #[arg(long)]
        input: Option<PathBuf>,
    },
}

struct Ctx {
    cfg: Config,
    config_path: PathBuf,
    jobs: Option<usize>,
}

impl Ctx {
    fn new(cli: &Cli) -> AppResult<Self> {
        let config_path = cli.config.clone().ok_or_else(|| AppError::Usage("--config is required".into()))?;
        let mut cfg = Config::load(&config_path)?;
        if let Some(out) = &cli.out {
            cfg.output.dir = out.clone();
        }
        if let Some(seed) = cli.seed {
            cfg.experiment.seed = seed;
        }
        if cli.jobs == Some(0) {
            return Err(AppError::Usage("--jobs must be at least 1".into()));
        }
        Ok(Self { cfg, config_path, jobs: cli.jobs })
    }

    fn manifest(&self, command: Command, panel_sha256: String) -> RunManifest {
        RunManifest {
            command,
            config_path: self.config_path.clone(),
            output_dir: self.cfg.output.dir.clone(),
            seed: self.cfg.experiment.seed,
            version: crate::VERSION.to_string(),
            config_sha256: self.cfg.checksum(),
            panel_sha256,
        }
    }

    fn ingest(&self) -> AppResult<(PricePanel, String)> {
        let d = &self.cfg.data;
        let panel = load_panel(&d.prices, &d.contracts, d.calendar, self.cfg.strategy.vol_span)?;
        let checksum = write_cache(&self.cfg.cache_path(), &panel)?;
        Ok((panel, checksum))
    }

    /// The cached panel, ingesting first if there is no cache yet.
    fn panel(&self) -> AppResult<(PricePanel, String)> {
        let path = self.cfg.cache_path();
        if path.exists() {
            read_cache(&path, self.cfg.strategy.vol_span)
        } else {
            log::info!("no panel cache at {}, ingesting", path.display());
            self.ingest()
        }
    }

    fn pick_model(&self, name: Option<&str>) -> AppResult<ModelKind> {
        match name {
            Some(n) => n.parse().map_err(|e: netmom_core::Error| AppError::Usage(e.to_string())),
            None => Ok(self.cfg.models().expect("validated")[0]),
        }
    }
}

fn announce(paths: &[PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

fn cmd_ingest(ctx: &Ctx) -> AppResult<()> {
    let (panel, checksum) = ctx.ingest()?;
    println!(
        "panel: {} dates x {} markets ({} to {})",
        panel.n_dates(),
        panel.n_markets(),
        panel.dates[0],
        panel.dates[panel.n_dates() - 1]
    );
    println!("cache: {}", ctx.cfg.cache_path().display());
    println!("sha256: {checksum}");
    Ok(())
}

fn cmd_backtest(ctx: &Ctx, model: Option<&str>) -> AppResult<()> {
    let model = ctx.pick_model(model)?;
    let (panel, sum) = ctx.panel()?;
    let choice = runner::with_jobs(ctx.jobs, || runner::choose_hyper(&panel, &ctx.cfg, &[model]))??.remove(0);
    let run = runner::backtest(&panel, &ctx.cfg, model, choice.params(&ctx.cfg))?;
    let frame = run.frame.slice(run.window.start, run.window.end);
    let split = long_short_split(&run.window_positions(), &frame).map_err(AppError::core("long/short split"))?;
    let manifest = ctx.manifest(Command::Backtest, sum);
    let paths = output::write_backtest(&ctx.cfg.output.dir, &manifest, &choice, &run, split.long.as_ref(), split.short.as_ref())?;
    let f = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into());
    println!(
        "{}: net return {:.4}, sharpe {}, mdd {:.4} over {} days",
        model,
        run.report.net_return,
        f(run.report.sharpe),
        run.report.mdd,
        run.report.n_days
    );
    announce(&paths);
    Ok(())
}

fn cmd_gridsearch(ctx: &Ctx, model: Option<&str>) -> AppResult<()> {
    let models: Vec<ModelKind> = match model {
        Some(_) => vec![ctx.pick_model(model)?],
        None => ctx.cfg.models().expect("validated").into_iter().filter(|m| *m != ModelKind::Macd).collect(),
    };
    if models.is_empty() || models.contains(&ModelKind::Macd) {
        return Err(AppError::Usage("grid search needs at least one NMM model".into()));
    }
    let (panel, sum) = ctx.panel()?;
    let results = runner::with_jobs(ctx.jobs, || {
        use rayon::prelude::*;
        models
            .par_iter()
            .map(|m| runner::search_model(&panel, &ctx.cfg, *m).map(|r| (m.name(), r)))
            .collect::<AppResult<Vec<_>>>()
    })??;
    for (m, r) in &results {
        println!("{m}: alpha={} beta={} in-sample sharpe {:.4}", r.alpha, r.beta, r.sharpe);
    }
    announce(&output::write_gridsearch(&ctx.cfg.output.dir, &ctx.manifest(Command::Gridsearch, sum), &results)?);
    Ok(())
}

fn cmd_experiment(ctx: &Ctx) -> AppResult<()> {
    let models = ctx.cfg.models().expect("validated");
    let (panel, sum) = ctx.panel()?;
    let hyper = runner::with_jobs(ctx.jobs, || runner::choose_hyper(&panel, &ctx.cfg, &models))??;
    let plan = runner::plan(&ctx.cfg, models, &hyper);
    let summary = runner::run_bootstrap(&panel, &plan, ctx.jobs)?;
    let manifest = ctx.manifest(Command::Experiment, sum);
    let paths = output::write_experiment(&ctx.cfg.output.dir, &manifest, &hyper, &summary)?;
    let report = output::read_experiment(paths.last().expect("report.json"))?;
    print!("{}", output::render_report(&report));
    announce(&paths);
    Ok(())
}

fn cmd_report(cli: &Cli, input: Option<&Path>) -> AppResult<()> {
    let path = match (input, &cli.out, &cli.config) {
        (Some(p), _, _) => p.to_path_buf(),
        (None, Some(out), _) => out.join("report.json"),
        (None, None, Some(_)) => Ctx::new(cli)?.cfg.output.dir.join("report.json"),
        (None, None, None) => return Err(AppError::Usage("report needs --input, --out or --config".into())),
    };
    print!("{}", output::render_report(&output::read_experiment(&path)?));
    Ok(())
}

pub fn execute(cli: &Cli) -> AppResult<()> {
    if let Cmd::Report { input } = &cli.command {
        return cmd_report(cli, input.as_deref());
    }
    let ctx = Ctx::new(cli)?;
    match &cli.command {
        Cmd::Ingest => cmd_ingest(&ctx),
        Cmd::Backtest { model } => cmd_backtest(&ctx, model.as_deref()),
        Cmd::Gridsearch { model } => cmd_gridsearch(&ctx, model.as_deref()),
        Cmd::Experiment => cmd_experiment(&ctx),
        Cmd::Report { .. } => unreachable!(),
    }
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or("NETMOM_LOG", "warn");
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    init_logging();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { exit::USAGE } else { exit::OK };
        }
    };
    match execute(&cli) {
        Ok(()) => exit::OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
