mod common;

use common::{fam, quot};
use pclocal::ball::{bfs_ball, Ball};
use pclocal::perc::{
    bisect, connection_prob, connection_prob_exact, pc_estimate, reach_prob, reach_thresholds, sample_percolation,
    tree_pc_oracle, tree_reach_exact, EXACT_MAX_EDGES,
};
use pclocal::Error;
use proptest::prelude::*;

fn small_balls() -> Vec<(String, Ball)> {
    let mut out = Vec::new();
    for (name, g) in [
        ("t3", fam("t3")),
        ("tree:4", fam("tree:4")),
        ("z2z3", fam("z2z3")),
        ("free:3,3", fam("free:3,3")),
        ("mgp:3", fam("mgp:3")),
        ("z2z3/2", quot("z2z3", 2)),
        ("t3/2", quot("t3", 2)),
    ] {
        for r in 1..=4 {
            let b = bfs_ball(&g, &g.root(), r).unwrap();
            if b.num_edges() <= EXACT_MAX_EDGES {
                out.push((format!("{name} r{r}"), b));
            }
        }
    }
    out
}

#[test]
fn monte_carlo_connection_matches_enumeration() {
    let balls = small_balls();
    assert!(balls.len() >= 8);
    for (name, b) in &balls {
        for p in [0.3, 0.6] {
            let exact = connection_prob_exact(b, p).unwrap();
            let mc = connection_prob(b, p, 100_000, 17).unwrap();
            for (e, x) in mc.estimates.iter().zip(&exact) {
                let sigma = (x * (1.0 - x) / 1e5).sqrt().max(1e-9);
                assert!((e.value - x).abs() <= 4.0 * sigma, "{name} p={p}: {} vs {x}", e.value);
            }
        }
    }
}

#[test]
fn enumeration_on_a_path_is_a_power() {
    let b = bfs_ball(&fam("t3"), &fam("t3").root(), 2).unwrap();
    for (x, p) in connection_prob_exact(&b, 0.4).unwrap().iter().zip([0.4f64; 6]) {
        assert!((x - p * p).abs() < 1e-14);
    }
    let big = bfs_ball(&fam("t3"), &fam("t3").root(), 3).unwrap();
    assert!(matches!(connection_prob_exact(&big, 0.5), Err(Error::Precondition(_))));
}

#[test]
fn tree_reach_monte_carlo_matches_recursion() {
    for d in [3, 4] {
        let g = fam(&format!("tree:{d}"));
        for n in 1..=8 {
            for p in [0.3, 0.5, 0.7] {
                let exact = tree_reach_exact(d, p, n);
                let est = reach_prob(&g, p, n, 20_000, 3).unwrap();
                let sigma = (exact * (1.0 - exact) / 2e4).sqrt().max(1e-9);
                assert!((est.value - exact).abs() <= 4.0 * sigma, "d={d} n={n} p={p}: {} vs {exact}", est.value);
            }
        }
    }
}

#[test]
fn tree_recursion_edge_values() {
    assert_eq!(tree_reach_exact(3, 0.0, 4), 0.0);
    assert_eq!(tree_reach_exact(3, 1.0, 4), 1.0);
    // One step: 1 - (1-p)^3.
    assert!((tree_reach_exact(3, 0.5, 1) - 0.875).abs() < 1e-15);
    let crossing = tree_pc_oracle(3, 12, 0.3, 0.002).unwrap();
    assert!((crossing - 0.5).abs() < 0.03);
}

#[test]
fn bisection_rejects_unbracketed_targets() {
    assert!(matches!(bisect(|p| p, 1.0, 0.01), Err(Error::NonBracketing { .. })));
    assert!(matches!(bisect(|p| p * 0.5, 0.7, 0.01), Err(Error::NonBracketing { .. })));
    assert!((bisect(|p| p * p, 0.25, 1e-6).unwrap() - 0.5).abs() < 1e-5);
}

#[test]
fn crossing_estimate_tracks_oracle_on_t3() {
    let r = pc_estimate(&fam("t3"), &[6, 10], 0.3, 40_000, 9).unwrap();
    for pt in &r.points {
        let oracle = tree_pc_oracle(3, pt.n, 0.3, 0.002).unwrap();
        assert!((pt.p_hat - oracle).abs() < 0.01, "n={}: {} vs {oracle}", pt.n, pt.p_hat);
        assert!(pt.stderr > 0.0 && pt.stderr < 0.01);
    }
}

#[test]
fn estimates_are_reproducible() {
    let g = fam("z2z3");
    let a = pc_estimate(&g, &[5], 0.3, 5_000, 4).unwrap();
    let b = pc_estimate(&g, &[5], 0.3, 5_000, 4).unwrap();
    assert_eq!(a, b);
    let c = pc_estimate(&g, &[5], 0.3, 5_000, 5).unwrap();
    assert_ne!(a, c);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn samples_are_monotone_in_p(seed in any::<u64>(), trial in 0u64..1000, p in 0.0f64..1.0, q in 0.0f64..1.0) {
        let g = fam("z2z3");
        let b = bfs_ball(&g, &g.root(), 5).unwrap();
        let (lo, hi) = if p < q { (p, q) } else { (q, p) };
        let s_lo = sample_percolation(&b, lo, seed, trial);
        let s_hi = sample_percolation(&b, hi, seed, trial);
        for i in 0..b.num_edges() {
            prop_assert!(!s_lo.open[i] || s_hi.open[i]);
        }
    }

    #[test]
    fn thresholds_reproduce_reach_indicators(seed in any::<u64>(), p in 0.05f64..0.95) {
        let g = fam("mgp:3");
        let b = bfs_ball(&g, &g.root(), 3).unwrap();
        let th = reach_thresholds(&b, 3, 50, seed).unwrap();
        for (t, &thr) in th.iter().enumerate() {
            let s = sample_percolation(&b, p, seed, t as u64);
            let mut seen = vec![false; b.len()];
            seen[0] = true;
            let mut stack = vec![0usize];
            let mut reached = false;
            while let Some(i) = stack.pop() {
                if b.level(i) == 3 {
                    reached = true;
                }
                for (k, e) in b.edges().iter().enumerate() {
                    if !s.open[k] {
                        continue;
                    }
                    let (a, c) = (e.a as usize, e.b as usize);
                    for (x, y) in [(a, c), (c, a)] {
                        if x == i && !seen[y] {
                            seen[y] = true;
                            stack.push(y);
                        }
                    }
                }
            }
            prop_assert_eq!(reached, thr < p);
        }
    }
}
