//! Acceptance suite. Prints one line per criterion and exits nonzero if
//! any criterion fails.

mod common;

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use common::{fam, quot, random_connected_set, rng};
use pclocal::ball::{bfs_ball, local_radius, Ball};
use pclocal::explore::{locality_experiment, survival_runs, ExplorationParams, LocalityConfig};
use pclocal::graph::FamilyDescriptor;
use pclocal::perc::{
    connection_ratio_report, connection_prob, connection_prob_exact, pc_estimate, pc_estimate_ball, tree_pc_oracle,
    EXACT_MAX_EDGES,
};
use pclocal::walk::{nice_edge_count_with, quotient_identity_check, root_exit_report, spectral_estimate, ExitOracle};
use rand::Rng;

const SEED: u64 = 0x5eed_2026;

struct Outcome {
    pass: bool,
    detail: String,
    /// Every stochastic number the criterion produced, for the thread check.
    digest: String,
    elapsed: Duration,
}

type Check = fn() -> (bool, String, String);

fn timed(f: Check, budget: Duration) -> Outcome {
    let start = Instant::now();
    let (pass, detail, digest) = f();
    let elapsed = start.elapsed();
    let within = elapsed <= budget;
    Outcome {
        pass: pass && within,
        detail: if within {
            detail
        } else {
            format!("{detail}; over budget {budget:?}")
        },
        digest,
        elapsed,
    }
}

fn tree_pc() -> (bool, String, String) {
    let oracle = tree_pc_oracle(3, 12, 0.3, 0.002).unwrap();
    let mc = pc_estimate(&fam("t3"), &[12], 0.3, 100_000, SEED).unwrap().estimate();
    let ok = (oracle - 0.5).abs() <= 0.03 && (mc.p_hat - oracle).abs() <= 0.01;
    (
        ok,
        format!("oracle {oracle:.4} (target 0.5 +- 0.03), monte carlo {:.4} +- {:.4}", mc.p_hat, mc.stderr),
        format!("{mc:?}"),
    )
}

fn quotient_identity() -> (bool, String, String) {
    let base = fam("z2z3");
    let mut worst = 0.0f64;
    for n in 2..=4 {
        let q = quot("z2z3", n);
        let ctx = q.coset_context().unwrap().clone();
        for j in 1..=10 {
            worst = worst.max(quotient_identity_check(&base, &q, &ctx, j).unwrap());
        }
    }
    (worst <= 1e-12, format!("max residual {worst:.2e} over n in 2..=4, j <= 10"), String::new())
}

fn harmonic_ratios() -> (bool, String, String) {
    let mut ok = true;
    let mut detail = String::new();
    for d in [3, 4, 5] {
        let worst = (1..=6)
            .map(|r| root_exit_report(&fam(&format!("tree:{d}")), r).unwrap().2.global_ratio)
            .fold(1.0, f64::max);
        ok &= worst - 1.0 <= 1e-10;
        write!(detail, "T{d} ratio - 1 = {:.1e}; ", worst - 1.0).unwrap();
    }
    let (mut g_mg, mut w_mg) = (1.0f64, 1.0f64);
    let mut z = 1.0f64;
    for r in 1..=6 {
        let rep = root_exit_report(&fam("mgp:3"), r).unwrap().2;
        g_mg = g_mg.max(rep.global_ratio);
        w_mg = w_mg.max(rep.within_class_max());
        z = z.max(root_exit_report(&fam("z2z3"), r).unwrap().2.global_ratio);
    }
    ok &= g_mg <= 9.0 && w_mg - 1.0 <= 1e-10 && z <= 3.0;
    write!(detail, "MG ratio {g_mg:.4}, within-class excess {:.1e}; Z2*Z3 ratio {z:.4}", w_mg - 1.0).unwrap();
    (ok, detail, String::new())
}

fn connection_ratios() -> (bool, String, String) {
    let p = 0.6;
    let mut ok = true;
    let mut detail = String::new();
    let mut digest = String::new();
    for s in ["mgp:3", "z2z3"] {
        let g = fam(s);
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for n in 1..=4 {
            let ball = bfs_ball(&g, &g.root(), n).unwrap();
            let classes: Vec<_> = ball.vertices()[ball.sphere(n)].iter().map(|v| g.sphere_class(v)).collect();
            let rep = connection_ratio_report(&ball, p, 100_000, SEED + n as u64, &classes).unwrap();
            ok &= rep.holds();
            lo = lo.min(rep.min_ratio);
            hi = hi.max(rep.max_ratio);
            write!(digest, "{:?}{:?}{:?}{:?};", rep.min_ratio, rep.max_ratio, rep.sigma_min, rep.sigma_max).unwrap();
        }
        write!(detail, "{s} ratios in [{lo:.4}, {hi:.4}]; ").unwrap();
    }
    write!(detail, "bounds [{p}, {:.4}] up to 3 sigma", 1.0 / p).unwrap();
    (ok, detail, digest)
}

fn small_balls() -> Vec<(String, Ball)> {
    let mut out = Vec::new();
    for s in ["t3", "tree:4", "z2z3", "free:3,3", "free:2,4", "mgp:3"] {
        let g = fam(s);
        for r in 1..=4 {
            let b = bfs_ball(&g, &g.root(), r).unwrap();
            if b.num_edges() <= EXACT_MAX_EDGES {
                out.push((format!("{s} r{r}"), b));
            }
        }
    }
    for (s, n) in [("z2z3", 2), ("t3", 2)] {
        let g = quot(s, n);
        for r in 1..=4 {
            let b = bfs_ball(&g, &g.root(), r).unwrap();
            if b.num_edges() <= EXACT_MAX_EDGES {
                out.push((format!("{s}/{n} r{r}"), b));
            }
        }
    }
    out
}

fn oracle_equivalence() -> (bool, String, String) {
    let balls = small_balls();
    let mut worst = 0.0f64;
    let mut digest = String::new();
    for (k, (_, b)) in balls.iter().enumerate() {
        for p in [0.2, 0.5, 0.6, 0.8] {
            let exact = connection_prob_exact(b, p).unwrap();
            let mc = connection_prob(b, p, 100_000, SEED + k as u64).unwrap();
            for (e, x) in mc.estimates.iter().zip(&exact) {
                let sigma = (x * (1.0 - x) / mc.trials as f64).sqrt();
                let z = if sigma > 0.0 { (e.value - x).abs() / sigma } else { (e.value - x).abs() * 1e9 };
                worst = worst.max(z);
                write!(digest, "{:?},", e.value).unwrap();
            }
        }
    }
    (
        worst <= 4.0,
        format!("{} balls with at most {EXACT_MAX_EDGES} edges, max deviation {worst:.2} sigma", balls.len()),
        digest,
    )
}

fn nice_edges() -> (bool, String, String) {
    let mut ok = true;
    let mut detail = String::new();
    for (k, s) in ["t3", "z2z3"].into_iter().enumerate() {
        let g = fam(s);
        let tmax = pclocal::explore::default_spectral_tmax(g.kind());
        let lambda = spectral_estimate(&g, tmax).unwrap().lambda_pessimistic;
        let mut oracle = ExitOracle::new(&g, 3).unwrap();
        let mut r = rng(SEED + k as u64);
        let mut slack = f64::INFINITY;
        for _ in 0..50 {
            let size = r.gen_range(1..=30);
            let a = random_connected_set(&g, size, &mut r);
            let count = nice_edge_count_with(&mut oracle, &a, lambda / 2.0, 3).unwrap() as f64;
            let bound = lambda * g.degree() as f64 / 2.0 * a.len() as f64;
            ok &= count >= bound;
            slack = slack.min(count / bound);
        }
        write!(detail, "{s}: lambda {lambda:.4}, min count/bound {slack:.2}; ").unwrap();
    }
    (ok, detail.trim_end_matches("; ").to_string(), String::new())
}

fn survival() -> (bool, String, String) {
    let (eps, eps1) = (0.05, 0.05);
    let family = FamilyDescriptor::parse("z2z3").unwrap();
    let base = family.build().unwrap();
    let g = family.with_quotient(6).build().unwrap();
    let cfg = LocalityConfig::new(SEED);
    let ball = bfs_ball(&base, &base.root(), cfg.estimator_radius).unwrap();
    let pc = pc_estimate_ball(&ball, "z2z3", &[cfg.estimator_radius], cfg.theta_star, cfg.trials, SEED)
        .unwrap()
        .estimate();
    let r_n = local_radius(&g, &base, 8).unwrap().radius;
    let lambda = spectral_estimate(&g, 40).unwrap().lambda_pessimistic;
    let params = |p: f64| ExplorationParams {
        p,
        eps,
        eps1,
        r_n,
        lambda,
        cap: 10_000,
        step_cap: None,
    };
    let p_high = pc.p_hat + 2.0 * eps + eps1;
    let (high, _) = survival_runs(&g, &params(p_high), 200, SEED).unwrap();
    let p_low = 0.05;
    let (low, _) = survival_runs(&g, &params(p_low), 200, SEED + 1).unwrap();
    let ok = high.survived >= 10 && low.survived == 0;
    (
        ok,
        format!(
            "r_n {r_n}, lambda {lambda:.4}, pc(G) {:.4}; p = {p_high:.4}: {}/200 survive; p = {p_low}: {}/200 survive",
            pc.p_hat, high.survived, low.survived
        ),
        format!("{pc:?}{high:?}{low:?}"),
    )
}

fn locality_trend() -> (bool, String, String) {
    let mut ok = true;
    let mut detail = String::new();
    let mut digest = String::new();
    let ns: Vec<u32> = (3..=8).collect();
    for s in ["t3", "z2z3"] {
        let rep = locality_experiment(&FamilyDescriptor::parse(s).unwrap(), &ns, &LocalityConfig::new(SEED)).unwrap();
        let trend = rep.trend.clone().unwrap();
        ok &= trend.ok;
        let diffs: Vec<String> = rep.rows.iter().map(|r| format!("{:.4}", r.abs_diff)).collect();
        write!(detail, "{s} gaps [{}] violations {:?}; ", diffs.join(" "), trend.violations).unwrap();
        write!(digest, "{:?}", rep.rows).unwrap();
    }
    (ok, detail.trim_end_matches("; ").to_string(), digest)
}

const CRITERIA: [(&str, Check, u64); 8] = [
    ("tree pc", tree_pc, 120),
    ("quotient identity", quotient_identity, 10),
    ("harmonic ratios", harmonic_ratios, 60),
    ("connection ratios", connection_ratios, 180),
    ("oracle equivalence", oracle_equivalence, 600),
    ("nice edge count", nice_edges, 120),
    ("exploration survival", survival, 600),
    ("locality trend", locality_trend, 600),
];

fn run_all(threads: usize) -> Vec<Outcome> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    pool.install(|| {
        CRITERIA
            .iter()
            .map(|&(_, f, secs)| timed(f, Duration::from_secs(secs)))
            .collect()
    })
}

fn main() {
    // `cargo test -- --list` and filters come through here too.
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let mut all_ok = true;
    let four = run_all(4);
    for (k, ((name, _, _), o)) in CRITERIA.iter().zip(&four).enumerate() {
        all_ok &= o.pass;
        println!(
            "criterion {} ({name}): {} [{:.1}s] {}",
            k + 1,
            if o.pass { "PASS" } else { "FAIL" },
            o.elapsed.as_secs_f64(),
            o.detail
        );
    }
    let start = Instant::now();
    let one = run_all(1);
    let differing: Vec<usize> = four
        .iter()
        .zip(&one)
        .enumerate()
        .filter(|(_, (a, b))| a.digest != b.digest || a.pass != b.pass)
        .map(|(k, _)| k + 1)
        .collect();
    let ok = differing.is_empty();
    all_ok &= ok;
    println!(
        "criterion 9 (thread determinism): {} [{:.1}s] 1 vs 4 threads, differing criteria {differing:?}",
        if ok { "PASS" } else { "FAIL" },
        start.elapsed().as_secs_f64()
    );
    if !all_ok {
        std::process::exit(1);
    }
}
