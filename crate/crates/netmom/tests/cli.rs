use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use netmom::cache::read_cache;
use netmom::config::Config;
use netmom::data::{load_market_series, load_panel, write_contracts, write_prices};
use netmom::output::{read_experiment, BacktestReport};
use netmom_core::market::{CalendarPolicy, ContractSpec, Sector};
use netmom_core::synthetic::drifting_panel;
use tempfile::TempDir;

fn netmom(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_netmom")).args(args).output().expect("binary runs");
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stdout).into(), String::from_utf8_lossy(&out.stderr).into())
}

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    /// Three drifting markets, 400 dates, and a config with small lookbacks.
    fn new(experiment: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let panel = drifting_panel(&[0.3, 0.2, 0.25], 1.0, 400, 81).unwrap();
        let ids: Vec<String> = panel.markets.iter().map(|m| m.market_id.clone()).collect();
        write_prices(&dir.path().join("prices.csv"), &panel.dates, &ids, &panel.prices).unwrap();
        write_contracts(&dir.path().join("contracts.csv"), &panel.markets).unwrap();
        let cfg = format!(
            "[data]\nprices = [\"prices.csv\"]\ncontracts = \"contracts.csv\"\n\n\
             [strategy]\nlookback = 22\nensemble_lookbacks = [11, 22]\n\
             alpha_grid = [0.1, 1.0]\nbeta_grid = [1.0]\n\n\
             [experiment]\n{experiment}\n\n[output]\ndir = \"out\"\n"
        );
        fs::write(dir.path().join("config.toml"), cfg).unwrap();
        Self { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn config(&self) -> String {
        self.path("config.toml").display().to_string()
    }

    fn run(&self, args: &[&str]) -> (i32, String, String) {
        let cfg = self.config();
        let mut full = vec!["--config", cfg.as_str()];
        full.extend_from_slice(args);
        netmom(&full)
    }
}

const TWO_MODELS: &str = "models = [\"MACD\", \"NMM-LEVY\"]\nn_resamples = 2\nseed = 5\nhyper = { \"NMM-LEVY\" = [1.0, 1.0] }";

#[test]
fn ingest_writes_a_stable_cache() {
    let fx = Fixture::new(TWO_MODELS);
    let (code, stdout, _) = fx.run(&["ingest"]);
    assert_eq!(code, 0);
    assert!(stdout.contains("400 dates x 3 markets"), "{stdout}");
    let cache = fx.path("out/panel.json");
    let first = fs::read(&cache).unwrap();
    assert_eq!(fx.run(&["ingest"]).0, 0);
    assert_eq!(first, fs::read(&cache).unwrap());
    let (panel, _) = read_cache(&cache, 22).unwrap();
    let direct = load_panel(&[fx.path("prices.csv")], &fx.path("contracts.csv"), CalendarPolicy::Intersection, 22).unwrap();
    assert_eq!(panel.prices, direct.prices);

    let mut bytes = first.clone();
    let pos = bytes.windows(6).position(|w| w == b"prices").unwrap() + 12;
    bytes[pos] = if bytes[pos] == b'1' { b'2' } else { b'1' };
    fs::write(&cache, bytes).unwrap();
    let (code, _, stderr) = fx.run(&["backtest", "--model", "MACD"]);
    assert_eq!(code, 2, "{stderr}");
}

#[test]
fn malformed_input_is_located() {
    let fx = Fixture::new(TWO_MODELS);
    let prices = fs::read_to_string(fx.path("prices.csv")).unwrap();
    let mut lines: Vec<String> = prices.lines().map(str::to_string).collect();
    lines[2] = lines[2].replacen("-", "/", 1);
    fs::write(fx.path("prices.csv"), lines.join("\n")).unwrap();
    let (code, _, stderr) = fx.run(&["ingest"]);
    assert_eq!(code, 2);
    assert!(stderr.contains("prices.csv:3") && stderr.contains("malformed date"), "{stderr}");

    lines[2] = prices.lines().nth(2).unwrap().replace(".", "x");
    lines[4] = lines[4].rsplit_once(',').map(|(a, _)| format!("{a},abc")).unwrap();
    fs::write(fx.path("prices.csv"), lines.join("\n")).unwrap();
    let (code, _, stderr) = fx.run(&["ingest"]);
    assert_eq!(code, 2);
    assert!(stderr.contains("non-numeric price"), "{stderr}");
}

#[test]
fn unknown_market_is_rejected() {
    let fx = Fixture::new(TWO_MODELS);
    let mut prices = fs::read_to_string(fx.path("prices.csv")).unwrap();
    prices.push_str("2030-01-01,future_cl1,50\n");
    fs::write(fx.path("prices.csv"), prices).unwrap();
    let (code, _, stderr) = fx.run(&["ingest"]);
    assert_eq!(code, 2);
    assert!(stderr.contains("unknown market id") && stderr.contains("future_cl1"), "{stderr}");
}

#[test]
fn config_errors_name_the_field() {
    let fx = Fixture::new(TWO_MODELS);
    let text = fs::read_to_string(fx.path("config.toml")).unwrap();
    fs::write(fx.path("config.toml"), text.replace("contracts = \"contracts.csv\"\n", "")).unwrap();
    let (code, _, stderr) = fx.run(&["ingest"]);
    assert_eq!(code, 1);
    assert!(stderr.contains("contracts"), "{stderr}");

    fs::write(fx.path("config.toml"), text.replace("lookback = 22", "lookbak = 22")).unwrap();
    let (code, _, stderr) = fx.run(&["ingest"]);
    assert_eq!(code, 1);
    assert!(stderr.contains("lookbak"), "{stderr}");

    fs::write(fx.path("config.toml"), text.replace("\"NMM-LEVY\"]", "\"NMM-FOO\"]")).unwrap();
    let (code, _, stderr) = fx.run(&["ingest"]);
    assert_eq!(code, 1);
    assert!(stderr.contains("experiment.models") && stderr.contains("NMM-FOO"), "{stderr}");

    assert_eq!(netmom(&["ingest"]).0, 1);
    assert_eq!(netmom(&["frobnicate"]).0, 1);
    assert_eq!(netmom(&["--help"]).0, 0);
}

#[test]
fn backtest_reports_and_repeats() {
    let fx = Fixture::new(TWO_MODELS);
    let (code, stdout, stderr) = fx.run(&["backtest", "--model", "MACD"]);
    assert_eq!(code, 0, "{stderr}");
    assert!(stdout.contains("MACD"));
    let report: BacktestReport = serde_json::from_slice(&fs::read(fx.path("out/backtest.json")).unwrap()).unwrap();
    assert!(report.report.net_return > 0.0);
    let first = (fs::read(fx.path("out/backtest.csv")).unwrap(), fs::read(fx.path("out/backtest.json")).unwrap());
    assert_eq!(fx.run(&["backtest", "--model", "MACD"]).0, 0);
    assert_eq!(first, (fs::read(fx.path("out/backtest.csv")).unwrap(), fs::read(fx.path("out/backtest.json")).unwrap()));

    assert_eq!(fx.run(&["backtest", "--model", "NMM-LEVY"]).0, 0);
    let (code, _, stderr) = fx.run(&["backtest", "--model", "RANDOM"]);
    assert_eq!(code, 1);
    assert!(stderr.contains("unknown model"), "{stderr}");
}

#[test]
fn insufficient_history_is_a_data_error() {
    let fx = Fixture::new(TWO_MODELS);
    let text = fs::read_to_string(fx.path("config.toml")).unwrap();
    fs::write(fx.path("config.toml"), text.replace("lookback = 22", "lookback = 390")).unwrap();
    let (code, _, stderr) = fx.run(&["backtest", "--model", "NMM-LEVY"]);
    assert_eq!(code, 2, "{stderr}");
    assert!(stderr.contains("insufficient history"), "{stderr}");
}

#[test]
fn solver_failure_exits_numerically() {
    let fx = Fixture::new(TWO_MODELS);
    let text = fs::read_to_string(fx.path("config.toml")).unwrap();
    fs::write(fx.path("config.toml"), text.replace("[strategy]\n", "[strategy]\ngraph_max_iters = 1\ngraph_tol = 1e-15\n"))
        .unwrap();
    let (code, _, stderr) = fx.run(&["backtest", "--model", "NMM-LEVY"]);
    assert_eq!(code, 3, "{stderr}");
    assert!(stderr.contains("did not converge"), "{stderr}");
}

#[test]
fn gridsearch_lists_every_point() {
    let fx = Fixture::new(TWO_MODELS);
    let (code, _, stderr) = fx.run(&["gridsearch"]);
    assert_eq!(code, 0, "{stderr}");
    let csv = fs::read_to_string(fx.path("out/gridsearch.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2);
    assert_eq!(csv.lines().filter(|l| l.contains(",true,")).count(), 1);
    assert_eq!(fx.run(&["gridsearch", "--model", "MACD"]).0, 1);
}

fn stamped(dir: &Path, seed: u64) {
    for name in ["summary.csv", "pvalues.csv", "diversification.csv", "skewness_horizons.csv", "sharpe_distribution.csv"] {
        let text = fs::read_to_string(dir.join(name)).unwrap();
        let mut lines = text.lines();
        assert!(lines.next().unwrap().ends_with("version,seed,config_sha256"), "{name}");
        let mut rows = 0;
        for l in lines {
            let f: Vec<&str> = l.rsplitn(4, ',').collect();
            assert_eq!((f[2], f[1], f[0].len()), (netmom::VERSION, seed.to_string().as_str(), 64), "{name}: {l}");
            rows += 1;
        }
        assert!(rows > 0, "{name}");
    }
}

#[test]
fn experiment_outputs_are_stamped_and_job_independent() {
    let fx = Fixture::new(TWO_MODELS);
    let (code, stdout, stderr) = fx.run(&["experiment", "--jobs", "1", "--out", fx.path("a").to_str().unwrap()]);
    assert_eq!(code, 0, "{stderr}");
    assert!(stdout.contains("NMM-LEVY"));
    let (code, _, _) = fx.run(&["experiment", "--jobs", "3", "--out", fx.path("b").to_str().unwrap()]);
    assert_eq!(code, 0);
    for name in ["summary.csv", "pvalues.csv", "diversification.csv", "skewness_horizons.csv", "sharpe_distribution.csv"] {
        assert_eq!(fs::read(fx.path("a").join(name)).unwrap(), fs::read(fx.path("b").join(name)).unwrap(), "{name}");
    }
    let a = read_experiment(&fx.path("a/report.json")).unwrap();
    let b = read_experiment(&fx.path("b/report.json")).unwrap();
    assert_eq!(a.summary, b.summary);
    assert_eq!((a.summary.n_resamples, a.summary.pipeline_runs), (2, 4));
    assert_eq!(a.manifest.seed, 5);
    assert_eq!(a.manifest.config_sha256.len(), 64);
    stamped(&fx.path("a"), 5);

    let (code, _, _) = fx.run(&["experiment", "--seed", "77", "--out", fx.path("c").to_str().unwrap()]);
    assert_eq!(code, 0);
    let c = read_experiment(&fx.path("c/report.json")).unwrap();
    assert_eq!(c.manifest.seed, 77);
    assert_ne!(c.manifest.config_sha256, a.manifest.config_sha256);
    stamped(&fx.path("c"), 77);

    let (code, stdout, _) = netmom(&["report", "--out", fx.path("a").to_str().unwrap()]);
    assert_eq!(code, 0);
    assert!(stdout.contains("wilcoxon p") && stdout.contains("MACD"), "{stdout}");
    assert_eq!(netmom(&["report", "--out", fx.path("missing").to_str().unwrap()]).0, 2);
}

#[test]
fn contract_files_are_backadjusted() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("raw.csv");
    fs::write(
        &p,
        "date,market,price,contract,roll\n\
         2024-01-02,X,100,A,2024-01-03\n2024-01-03,X,100,A,2024-01-03\n\
         2024-01-03,X,102,B,\n2024-01-04,X,103,B,\n",
    )
    .unwrap();
    let s = load_market_series(std::slice::from_ref(&p)).unwrap();
    assert_eq!(s[0].prices, vec![102.0, 102.0, 103.0]);

    fs::write(&p, "date,market,price,contract,roll\n2024-01-02,X,100,A,2024-01-03\n2024-01-03,X,100,A,2024-01-05\n").unwrap();
    let err = load_market_series(&[p]).unwrap_err().to_string();
    assert!(err.contains("raw.csv:3") && err.contains("conflicts"), "{err}");
}

#[test]
fn dated_fx_and_relative_paths() {
    let dir = tempfile::tempdir().unwrap();
    fs::create_dir(dir.path().join("data")).unwrap();
    fs::write(dir.path().join("data/fx.csv"), "date,rate\n2024-01-01,1.1\n2024-01-04,1.2\n").unwrap();
    fs::write(
        dir.path().join("data/contracts.csv"),
        "market,point_value,fx,half_spread,sector\nA,10,fx.csv,0.1,Equity\nB,5,1,0,metals\n",
    )
    .unwrap();
    let mut prices = String::from("date,market,price\n");
    for (i, d) in ["2024-01-02", "2024-01-03", "2024-01-04", "2024-01-05"].iter().enumerate() {
        prices.push_str(&format!("{d},A,{}\n{d},B,{}\n", 10 + i, 20 - i));
    }
    fs::write(dir.path().join("data/prices.csv"), prices).unwrap();
    fs::write(
        dir.path().join("cfg.toml"),
        "[data]\nprices = [\"data/prices.csv\"]\ncontracts = \"data/contracts.csv\"\n[experiment]\nmodels = [\"MACD\"]\n",
    )
    .unwrap();
    let cfg = Config::load(&dir.path().join("cfg.toml")).unwrap();
    assert_eq!(cfg.data.contracts, dir.path().join("data/contracts.csv"));
    let panel = load_panel(&cfg.data.prices, &cfg.data.contracts, cfg.data.calendar, 22).unwrap();
    assert_eq!(panel.fx_rates.column_vec(0), vec![1.1, 1.1, 1.2, 1.2]);
    assert_eq!(panel.fx_rates.column_vec(1), vec![1.0; 4]);
    assert_eq!(panel.markets[1], ContractSpec::simple("B", 5.0, 0.0, Sector::Metals));
}
