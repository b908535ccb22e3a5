mod common;

use common::{fam, quot, random_connected_set, random_vertex, rng};
use indexmap::IndexSet;
use pclocal::ball::bfs_ball;
use pclocal::explore::default_spectral_tmax;
use pclocal::walk::{
    harmonic_measure, nice_edge_count_with, quotient_identity_check, return_probabilities, root_exit_report,
    spectral_estimate, ExitOracle,
};
use rand::Rng;

#[test]
fn translated_template_matches_direct_solve() {
    for (name, g) in [("t3", fam("t3")), ("z2z3", fam("z2z3")), ("mgp:3", fam("mgp:3")), ("z2z3/8", quot("z2z3", 8))] {
        let jmax = if name.starts_with("mgp") { 2 } else { 4 };
        let mut oracle = ExitOracle::new(&g, jmax).unwrap();
        let mut rng = rng(21);
        for _ in 0..10 {
            let u = random_vertex(&g, rng.gen_range(0..9), &mut rng);
            let big = bfs_ball(&g, &u, jmax).unwrap();
            let exits = oracle.exits(&u).unwrap().to_vec();
            for j in 1..=jmax {
                let direct = harmonic_measure(&big.truncate(j)).unwrap();
                assert_eq!(exits[j - 1].len(), direct.vertices.len(), "{name} at {u}, j = {j}");
                for (w, m) in &exits[j - 1] {
                    let d = direct.get(w).unwrap_or_else(|| panic!("{name}: {w} missing"));
                    assert!((d - m).abs() <= 1e-12, "{name} at {u}, j = {j}: {d} vs {m}");
                }
            }
        }
    }
}

#[test]
fn exit_distributions_are_probability_measures() {
    for g in [fam("t3"), fam("z2z3"), fam("mgp:3"), quot("z2z3", 3)] {
        for r in 1..=4 {
            let (dist, _, _) = root_exit_report(&g, r).unwrap();
            assert!((dist.total() - 1.0).abs() < 1e-12);
            assert!(dist.mu.iter().all(|&m| m > 0.0));
        }
    }
}

#[test]
fn tree_exit_measure_is_uniform() {
    for d in [3, 4, 5] {
        let g = fam(&format!("tree:{d}"));
        for r in 1..=5 {
            let (dist, _, rep) = root_exit_report(&g, r).unwrap();
            let want = 1.0 / (d * (d - 1usize).pow(r as u32 - 1)) as f64;
            assert!(dist.mu.iter().all(|m| (m - want).abs() < 1e-13));
            assert!(rep.global_ratio <= 1.0 + 1e-10);
        }
    }
}

#[test]
fn quotient_return_identity() {
    let base = fam("z2z3");
    for n in 2..=4 {
        let q = quot("z2z3", n);
        let ctx = q.coset_context().unwrap().clone();
        for j in 1..=10 {
            let res = quotient_identity_check(&base, &q, &ctx, j).unwrap();
            assert!(res <= 1e-12, "n = {n}, j = {j}: {res}");
        }
    }
}

#[test]
fn return_probabilities_match_tree_path_counts() {
    // Closed walks of length 4 at the root of T3: 3*3 + 3*2 = 15 of 81.
    let p = return_probabilities(&fam("t3"), 4).unwrap();
    assert!((p[2] - 1.0 / 3.0).abs() < 1e-15);
    assert!((p[4] - 15.0 / 81.0).abs() < 1e-15);
    assert_eq!(p[1], 0.0);
    assert_eq!(p[3], 0.0);
}

#[test]
fn nice_edge_lower_bound_on_random_sets() {
    for s in ["t3", "z2z3", "mgp:3"] {
        let g = fam(s);
        let est = spectral_estimate(&g, default_spectral_tmax(g.kind())).unwrap();
        let lambda = est.lambda_pessimistic;
        assert!(lambda > 0.0 && lambda <= est.lambda_hat);
        let nmax = if s.starts_with("mgp") { 2 } else { 3 };
        let mut oracle = ExitOracle::new(&g, nmax).unwrap();
        let mut rng = rng(33);
        for _ in 0..50 {
            let size = rng.gen_range(1..=30);
            let a = random_connected_set(&g, size, &mut rng);
            let count = nice_edge_count_with(&mut oracle, &a, lambda / 2.0, nmax).unwrap();
            let bound = lambda * g.degree() as f64 / 2.0 * a.len() as f64;
            assert!(count as f64 >= bound, "{s}: {count} < {bound} for |A| = {}", a.len());
        }
    }
}

#[test]
fn single_vertex_in_tree_has_all_edges_nice() {
    let g = fam("t3");
    let lambda = spectral_estimate(&g, 30).unwrap().lambda_pessimistic;
    let a: IndexSet<_> = [g.root()].into_iter().collect();
    let mut oracle = ExitOracle::new(&g, 3).unwrap();
    assert_eq!(nice_edge_count_with(&mut oracle, &a, lambda / 2.0, 3).unwrap(), 3);
    let u = &g.neighbors(&g.root())[0];
    // From a neighbour of the root, one third of the first exit mass sits on the root.
    assert!((oracle.beta(&a, &g.root(), u, 1).unwrap() - 2.0 / 9.0).abs() < 1e-14);
    assert_eq!(nice_edge_count_with(&mut oracle, &a, 0.999, 3).unwrap(), 0);
}
