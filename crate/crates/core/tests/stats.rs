use netmom_core::backtest::max_drawdown;
use netmom_core::stats::{ks_one_sided, ks_statistic, wilcoxon_exact, wilcoxon_normal, wilcoxon_one_sided};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Upper-tail signed-rank p-value by enumerating every sign assignment.
fn enumerated_p(diffs: &[f64]) -> f64 {
    let d: Vec<f64> = diffs.iter().copied().filter(|v| *v != 0.0).collect();
    let rank = |v: f64| {
        let below = d.iter().filter(|u| u.abs() < v.abs()).count() as f64;
        let equal = d.iter().filter(|u| u.abs() == v.abs()).count() as f64;
        below + (equal + 1.0) / 2.0
    };
    let ranks: Vec<f64> = d.iter().map(|v| rank(*v)).collect();
    let observed: f64 = d.iter().zip(&ranks).filter(|(v, _)| **v > 0.0).map(|(_, r)| r).sum();
    let n = d.len();
    let hits = (0u32..1 << n)
        .filter(|mask| (0..n).filter(|i| mask & (1 << i) != 0).map(|i| ranks[i]).sum::<f64>() >= observed)
        .count();
    hits as f64 / (1u64 << n) as f64
}

#[test]
fn wilcoxon_exact_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for n in 1..=12 {
        for trial in 0..40 {
            // integer draws give ties and zeros; continuous draws give none
            let diffs: Vec<f64> = if trial % 2 == 0 {
                (0..n).map(|_| rng.random_range(-4..=5) as f64).collect()
            } else {
                (0..n).map(|_| rng.random_range(-1.0..1.5)).collect()
            };
            if diffs.iter().all(|d| *d == 0.0) {
                continue;
            }
            let got = wilcoxon_exact(&diffs).unwrap().p_value;
            let want = enumerated_p(&diffs);
            assert!((got - want).abs() < 1e-12, "{diffs:?}: {got} vs {want}");
        }
    }
}

#[test]
fn wilcoxon_documented_cases() {
    let r = wilcoxon_one_sided(&[0.3, 1.2, 0.7, 2.0, 0.1]).unwrap();
    assert_eq!(r.p_value, 0.03125);
    assert!(r.exact);
    assert!(wilcoxon_one_sided(&[1.0, -1.0]).unwrap().p_value >= 0.5);
    assert!(wilcoxon_one_sided(&[0.0, 0.0]).is_err());
}

#[test]
fn wilcoxon_branches_agree_at_25() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for _ in 0..50 {
        let shift = rng.random_range(-0.5..0.5);
        let diffs: Vec<f64> = (0..25).map(|_| rng.random_range(-1.0..1.0) + shift).collect();
        let e = wilcoxon_exact(&diffs).unwrap().p_value;
        let a = wilcoxon_normal(&diffs).unwrap().p_value;
        assert!((e - a).abs() < 0.005, "exact {e}, normal {a}");
    }
}

/// `max_x (F_a(x) − F_b(x))` evaluated at every sample point.
fn brute_ks(a: &[f64], b: &[f64]) -> f64 {
    let ecdf = |s: &[f64], x: f64| s.iter().filter(|v| **v <= x).count() as f64 / s.len() as f64;
    a.iter().chain(b).map(|x| ecdf(a, *x) - ecdf(b, *x)).fold(0.0, f64::max)
}

#[test]
fn ks_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..300 {
        let (n, m) = (rng.random_range(1..=50), rng.random_range(1..=50));
        let ties = rng.random_bool(0.5);
        let mut draw = |shift: f64| -> f64 {
            let v = rng.random_range(-2.0..2.0) + shift;
            if ties { v.round() } else { v }
        };
        let a: Vec<f64> = (0..n).map(|_| draw(0.0)).collect();
        let b: Vec<f64> = (0..m).map(|_| draw(0.3)).collect();
        let d = ks_statistic(&a, &b).unwrap();
        assert!((d - brute_ks(&a, &b)).abs() < 1e-12);
        let r = ks_one_sided(&a, &b).unwrap();
        let (nf, mf) = (n as f64, m as f64);
        assert!((r.p_value - (-2.0 * nf * mf * d * d / (nf + mf)).exp()).abs() < 1e-15);
    }
}

#[test]
fn ks_documented_cases() {
    let a = [0.1, 0.5, 0.9];
    let same = ks_one_sided(&a, &a).unwrap();
    assert_eq!((same.statistic, same.p_value), (0.0, 1.0));
    assert_eq!(ks_statistic(&[0.0, 0.1, 0.2], &[1.0, 2.0]).unwrap(), 1.0);
}

/// Largest drop from any earlier point of the cumulative curve, starting at 0.
fn brute_mdd(returns: &[f64]) -> f64 {
    let mut curve = vec![0.0];
    for r in returns {
        curve.push(curve.last().unwrap() + r);
    }
    let mut worst = 0.0f64;
    for i in 0..curve.len() {
        for j in i..curve.len() {
            worst = worst.max(curve[i] - curve[j]);
        }
    }
    worst
}

#[test]
fn mdd_matches_all_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    for _ in 0..100 {
        let n = rng.random_range(1..=500);
        let drift = rng.random_range(-0.01..0.01);
        let r: Vec<f64> = (0..n).map(|_| rng.random_range(-0.02..0.02) + drift).collect();
        assert!((max_drawdown(&r) - brute_mdd(&r)).abs() < 1e-12);
    }
    // curve [0, 1, 0.5, 2]
    assert_eq!(max_drawdown(&[1.0, -0.5, 1.5]), 0.5);
}

proptest! {
    #[test]
    fn ks_invariant_under_monotone_transforms(
        a in prop::collection::vec(-5.0f64..5.0, 1..40),
        b in prop::collection::vec(-5.0f64..5.0, 1..40),
        k in 0usize..3,
    ) {
        let f = |x: f64| match k {
            0 => x.exp(),
            1 => x * x * x + 2.0 * x,
            _ => (x / 3.0).atan() * 7.0 - 1.0,
        };
        let ta: Vec<f64> = a.iter().map(|x| f(*x)).collect();
        let tb: Vec<f64> = b.iter().map(|x| f(*x)).collect();
        prop_assert_eq!(ks_statistic(&a, &b).unwrap(), ks_statistic(&ta, &tb).unwrap());
    }

    #[test]
    fn wilcoxon_p_in_unit_interval_and_monotone_in_shift(
        d in prop::collection::vec(-1.0f64..1.0, 1..20),
    ) {
        prop_assume!(d.iter().any(|v| *v != 0.0));
        let p = wilcoxon_one_sided(&d).unwrap().p_value;
        prop_assert!(p > 0.0 && p <= 1.0);
        let up: Vec<f64> = d.iter().map(|v| if *v < 0.0 { -v } else { *v }).collect();
        prop_assert!(wilcoxon_one_sided(&up).unwrap().p_value <= p);
    }
}
