use netmom_core::bootstrap::{BootstrapConfig, StationaryBootstrap};
use netmom_core::experiment::{run_experiment, run_resample, ExperimentPlan};
use netmom_core::leadlag::Detector;
use netmom_core::model::{cache_for, grid_search, warmup_row, ModelKind, StrategyConfig};
use netmom_core::synthetic::{drifting_panel, spillover_panel, SpilloverConfig};
use netmom_core::Error;
use proptest::prelude::*;

fn boot(l: f64, seed: u64) -> StationaryBootstrap {
    StationaryBootstrap::new(BootstrapConfig { expected_block_length: l, seed, ..Default::default() }).unwrap()
}

#[test]
fn resampled_rows_are_intact_source_rows() {
    let panel = drifting_panel(&[0.1, -0.2, 0.05], 1.0, 200, 61).unwrap();
    let b = boot(22.0, 7);
    let rows = panel.defined_rows();
    let idx = b.indices(rows.len(), 4).unwrap();
    let sample = b.resample_panel(&panel, 4).unwrap();
    assert_eq!(sample.n_dates(), rows.len());
    for (k, i) in idx.iter().enumerate() {
        let src = rows[*i];
        assert_eq!(sample.scaled_deltas.row(k), panel.scaled_deltas.row(src));
        assert_eq!(sample.deltas.row(k), panel.deltas.row(src));
        assert_eq!(sample.vol22.row(k), panel.vol22.row(src));
    }
    assert!(sample.row_defined(0));
}

#[test]
fn blocks_wrap_circularly() {
    let b = StationaryBootstrap::new(BootstrapConfig {
        expected_block_length: 50.0,
        seed: 8,
        resample_length: Some(300),
        ..Default::default()
    })
    .unwrap();
    let n = 30;
    let blocks = b.blocks(n, 300, 0).unwrap();
    assert_eq!(blocks.iter().map(|x| x.len).sum::<usize>(), 300);
    let idx = b.indices(n, 0).unwrap();
    let mut k = 0;
    for blk in &blocks {
        for s in 0..blk.len {
            assert_eq!(idx[k], (blk.start + s) % n);
            k += 1;
        }
    }
    assert!(blocks.iter().any(|blk| blk.start + blk.len > n));
}

#[test]
fn block_length_mean_tracks_parameter() {
    for l in [1.0, 5.0, 22.0] {
        let lens = boot(l, 9).block_lengths(20_000, 0);
        let mean = lens.iter().sum::<usize>() as f64 / lens.len() as f64;
        // sd of a geometric length is √(L(L−1)), so 5 standard errors is generous
        let se = (l * (l - 1.0)).sqrt() / (lens.len() as f64).sqrt();
        assert!((mean - l).abs() <= 5.0 * se + 1e-12, "L={l}: mean {mean}");
    }
}

#[test]
fn streams_are_independent_of_evaluation_order() {
    let b = boot(22.0, 10);
    let forward: Vec<Vec<usize>> = (0..5).map(|i| b.indices(100, i).unwrap()).collect();
    let backward: Vec<Vec<usize>> = (0..5).rev().map(|i| b.indices(100, i).unwrap()).collect();
    for i in 0..5 {
        assert_eq!(forward[i], backward[4 - i]);
    }
    assert_ne!(forward[0], forward[1]);
}

fn search_cfg() -> StrategyConfig {
    StrategyConfig {
        lookback: 40,
        alpha_grid: vec![0.01, 1.0, 100.0],
        beta_grid: vec![0.01, 1.0, 100.0],
        ..Default::default()
    }
}

#[test]
fn grid_search_edge_cases() {
    let panel = spillover_panel(&SpilloverConfig { n_dates: 260, ..Default::default() }).unwrap();
    let model = ModelKind::Nmm { detector: Detector::Levy, ensemble: false };
    let single = StrategyConfig { alpha_grid: vec![1.0], beta_grid: vec![1.0], ..search_cfg() };
    let w = warmup_row(&panel, &single, &[model]).unwrap()..panel.n_dates();
    let cache = cache_for(&panel, model, &single, w.clone()).unwrap().unwrap();
    let r = grid_search(&panel, model, &single, &cache, w.clone()).unwrap();
    assert_eq!((r.alpha, r.beta, r.points.len()), (1.0, 1.0, 1));

    let dup = StrategyConfig { alpha_grid: vec![1.0, 0.1, 1.0], beta_grid: vec![1.0, 1.0], ..search_cfg() };
    let clean = StrategyConfig { alpha_grid: vec![0.1, 1.0], beta_grid: vec![1.0], ..search_cfg() };
    assert_eq!(
        grid_search(&panel, model, &dup, &cache, w.clone()).unwrap(),
        grid_search(&panel, model, &clean, &cache, w.clone()).unwrap()
    );
    assert!(grid_search(&panel, ModelKind::Macd, &single, &cache, w).is_err());
}

#[test]
fn grid_search_winner_beats_grid_median() {
    let panel = spillover_panel(&SpilloverConfig { n_dates: 500, ..Default::default() }).unwrap();
    let model = ModelKind::Nmm { detector: Detector::Levy, ensemble: false };
    let cfg = search_cfg();
    let w = warmup_row(&panel, &cfg, &[model]).unwrap()..panel.n_dates();
    let cache = cache_for(&panel, model, &cfg, w.clone()).unwrap().unwrap();
    let r = grid_search(&panel, model, &cfg, &cache, w).unwrap();
    let mut s: Vec<f64> = r.points.iter().filter_map(|p| p.sharpe).collect();
    s.sort_by(f64::total_cmp);
    let median = s[s.len() / 2];
    assert!(r.sharpe >= median);
    assert_eq!(r.sharpe, *s.last().unwrap());
}

fn macd_plan(n: usize, seed: u64) -> ExperimentPlan {
    ExperimentPlan {
        models: vec![ModelKind::Macd],
        strategy: StrategyConfig::default(),
        bootstrap: BootstrapConfig { n_resamples: n, seed, ..Default::default() },
        hyper: vec![None],
    }
}

#[test]
fn experiment_reduction() {
    let panel = drifting_panel(&[0.1, -0.1, 0.0], 1.0, 400, 62).unwrap();
    let one = run_experiment(&panel, &macd_plan(1, 5)).unwrap();
    assert_eq!((one.n_resamples, one.mean_reports.len()), (1, 1));

    let a = run_experiment(&panel, &macd_plan(6, 5)).unwrap();
    assert_eq!(a, run_experiment(&panel, &macd_plan(6, 5)).unwrap());
    assert_ne!(a.sharpes, run_experiment(&panel, &macd_plan(6, 6)).unwrap().sharpes);
    let mean = a.sharpes[0].iter().sum::<f64>() / 6.0;
    assert!((a.mean_reports[0].sharpe.unwrap() - mean).abs() <= 1e-12);
    // the first resample of a longer run is the single-resample run
    assert_eq!(one.sharpes[0][0], run_experiment(&panel, &macd_plan(1, 5)).unwrap().sharpes[0][0]);
    assert_eq!(a.sharpes[0][0], one.sharpes[0][0]);
}

#[test]
fn failing_resample_reports_its_index() {
    let panel = drifting_panel(&[0.1, -0.1], 1.0, 300, 63).unwrap();
    let model = ModelKind::Nmm { detector: Detector::Levy, ensemble: false };
    let mut plan = macd_plan(5, 1);
    plan.models.push(model);
    plan.hyper.push(Some(plan.strategy.graph_params(1.0, 1.0)));
    // too short for the lead-lag lookback
    plan.bootstrap.resample_length = Some(30);
    match run_resample(&panel, &plan, 3) {
        Err(Error::Resample { index, .. }) => assert_eq!(index, 3),
        other => panic!("expected a resample failure, got {other:?}"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn indices_stay_in_range(n in 2usize..200, l in 1.0f64..40.0, seed in any::<u64>(), i in 0usize..50) {
        let idx = boot(l, seed).indices(n, i).unwrap();
        prop_assert_eq!(idx.len(), n);
        prop_assert!(idx.iter().all(|k| *k < n));
        prop_assert_eq!(idx, boot(l, seed).indices(n, i).unwrap());
    }
}
