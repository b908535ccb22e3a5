//! The coupled three-field exploration process and the end-to-end locality
//! experiment over a quotient sequence.

use std::collections::{HashMap, VecDeque};

use indexmap::IndexSet;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ball::{bfs_ball, local_radius, NONE};
use crate::error::{Error, Result};
use crate::graph::{EdgeKey, FamilyDescriptor, FamilyKind, ImplicitGraph};
use crate::group::Word;
use crate::perc::{edge_uniform, pc_estimate_ball, reach_prob_ball};
use crate::rng::derive_seed;
use crate::walk::{spectral_estimate, ExitOracle};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Marks {
    pub x: Option<bool>,
    pub y: Option<bool>,
    pub z: Option<bool>,
}

impl Marks {
    pub fn any_open(&self) -> bool {
        self.x == Some(true) || self.y == Some(true) || self.z == Some(true)
    }
}

/// Lazily sampled independent marks `X_e(p)`, `Y_e(eps)`, `Z_e(eps1)`.
///
/// The `X` channel uses the same keyed variate as plain percolation with
/// the same seed, so `X`-clusters are ordinary `p`-clusters.
#[derive(Debug, Clone)]
pub struct CoupledField {
    seeds: [u64; 3],
    p: f64,
    eps: f64,
    eps1: f64,
    marks: HashMap<EdgeKey, Marks>,
}

impl CoupledField {
    pub fn new(seed: u64, p: f64, eps: f64, eps1: f64) -> Self {
        CoupledField {
            seeds: [seed, derive_seed(seed, 1), derive_seed(seed, 2)],
            p,
            eps,
            eps1,
            marks: HashMap::new(),
        }
    }

    /// Probability that at least one mark of an edge is 1.
    pub fn open_probability(&self) -> f64 {
        1.0 - (1.0 - self.p) * (1.0 - self.eps) * (1.0 - self.eps1)
    }

    fn draw(&self, channel: usize, key: &EdgeKey) -> f64 {
        edge_uniform(self.seeds[channel], key.stable_hash())
    }

    pub fn x(&mut self, key: &EdgeKey) -> bool {
        if let Some(v) = self.marks.get(key).and_then(|m| m.x) {
            return v;
        }
        let v = self.draw(0, key) < self.p;
        self.marks.entry(key.clone()).or_default().x = Some(v);
        v
    }

    /// Samples the `eps` mark; the edge becomes eps-checked.
    pub fn y(&mut self, key: &EdgeKey) -> bool {
        if let Some(v) = self.marks.get(key).and_then(|m| m.y) {
            return v;
        }
        let v = self.draw(1, key) < self.eps;
        self.marks.entry(key.clone()).or_default().y = Some(v);
        v
    }

    /// Samples the `eps1` mark; the edge becomes eps1-checked.
    pub fn z(&mut self, key: &EdgeKey) -> bool {
        if let Some(v) = self.marks.get(key).and_then(|m| m.z) {
            return v;
        }
        let v = self.draw(2, key) < self.eps1;
        self.marks.entry(key.clone()).or_default().z = Some(v);
        v
    }

    pub fn marks(&self, key: &EdgeKey) -> Marks {
        self.marks.get(key).copied().unwrap_or_default()
    }

    pub fn eps_checked(&self, key: &EdgeKey) -> bool {
        self.marks(key).y.is_some()
    }

    pub fn eps1_checked(&self, key: &EdgeKey) -> bool {
        self.marks(key).z.is_some()
    }

    pub fn sampled_edges(&self) -> usize {
        self.marks.len()
    }

    /// Number of edges whose (X, Y, Z) marks have been sampled.
    pub fn checked_counts(&self) -> (usize, usize, usize) {
        self.marks.values().fold((0, 0, 0), |(a, b, c), m| {
            (a + m.x.is_some() as usize, b + m.y.is_some() as usize, c + m.z.is_some() as usize)
        })
    }
}

/// The `X`-open cluster of `v`, cut off once it holds `cap` vertices.
pub fn initial_cluster(graph: &ImplicitGraph, v: &Word, field: &mut CoupledField, cap: usize) -> (IndexSet<Word>, bool) {
    let v = graph.vertex(v);
    let mut a: IndexSet<Word> = IndexSet::new();
    a.insert(v);
    if a.len() >= cap {
        return (a, true);
    }
    let mut head = 0;
    while head < a.len() {
        let x = a[head].clone();
        head += 1;
        let nx = graph.neighbors(&x);
        for (s, u) in nx.iter().enumerate() {
            if *u == x || a.contains(u) {
                continue;
            }
            if field.x(&graph.edge_key_with(&x, &nx, s)) {
                a.insert(u.clone());
                if a.len() >= cap {
                    return (a, true);
                }
            }
        }
    }
    (a, false)
}

/// The vertices added when the checked edge into `u` is eps-open.
///
/// Case 1: `u` and everything joined to it by `X`-open paths inside
/// `B(u, r)` that avoid `A`. Case 2: every `z` of the ball outside `A`
/// whose smallest edge `e_z` into `A` has `Z = 1`, together with its
/// `X`-open paths avoiding `A`. Only `e_z` is eps1-sampled for each `z`.
pub fn grow_step(
    graph: &ImplicitGraph,
    a: &IndexSet<Word>,
    u: &Word,
    field: &mut CoupledField,
    r: usize,
) -> Result<IndexSet<Word>> {
    let ball = bfs_ball(graph, u, r)?;
    let mut v: IndexSet<Word> = IndexSet::new();
    let spread = |start: usize, v: &mut IndexSet<Word>, field: &mut CoupledField| {
        let mut queue = vec![start];
        while let Some(i) = queue.pop() {
            for (&j, &e) in ball.slots(i).iter().zip(ball.slot_edges(i)) {
                if j == NONE || e == NONE {
                    continue;
                }
                let y = ball.vertex(j as usize);
                if a.contains(y) || v.contains(y) {
                    continue;
                }
                if field.x(&ball.edge_key(e as usize)) {
                    v.insert(y.clone());
                    queue.push(j as usize);
                }
            }
        }
    };
    if !a.contains(u) {
        v.insert(u.clone());
        spread(0, &mut v, field);
    }
    for i in 0..ball.len() {
        let z = ball.vertex(i);
        if a.contains(z) || v.contains(z) {
            continue;
        }
        let nz = graph.neighbors(z);
        let e_z = (0..nz.len())
            .filter(|&s| nz[s] != *z && a.contains(&nz[s]))
            .map(|s| graph.edge_key_with(z, &nz, s))
            .min();
        if let Some(e_z) = e_z {
            if field.z(&e_z) {
                v.insert(z.clone());
                spread(i, &mut v, field);
            }
        }
    }
    Ok(v)
}

/// Checks that each vertex of `v`, in insertion order, has an already
/// accepted neighbour joined to it by an edge with a sampled open mark.
fn witnessed(graph: &ImplicitGraph, a: &IndexSet<Word>, v: &IndexSet<Word>, field: &CoupledField) -> bool {
    v.iter().enumerate().all(|(i, w)| {
        let nw = graph.neighbors(w);
        (0..nw.len()).any(|s| {
            let y = &nw[s];
            let accepted = a.contains(y) || v.get_index_of(y).is_some_and(|k| k < i);
            accepted && y != w && field.marks(&graph.edge_key_with(w, &nw, s)).any_open()
        })
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopCause {
    /// `|A_t| <= 2t / (lambda d)`.
    TauStop,
    /// `A` reached the survival cap `M`.
    SurvivalCap,
    /// No unchecked nice edge remains.
    FrontierEmpty,
    /// Step budget exhausted; inconclusive.
    StepCap,
}

impl StopCause {
    pub fn as_str(&self) -> &'static str {
        match self {
            StopCause::TauStop => "tau_stop",
            StopCause::SurvivalCap => "survival_cap",
            StopCause::FrontierEmpty => "frontier_empty",
            StopCause::StepCap => "step_cap",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExplorationParams {
    pub p: f64,
    pub eps: f64,
    pub eps1: f64,
    /// Radius of the growth balls and of the niceness condition.
    pub r_n: usize,
    /// Spectral gap used for `alpha = lambda / 2` and the stopping rule.
    pub lambda: f64,
    /// Survival cap `M`.
    pub cap: usize,
    /// Defaults to `M d + 1`, enough for every edge incident to `A` to be checked.
    pub step_cap: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplorationTrace {
    /// `|A_t|` for `t = 0, 1, ...`.
    pub sizes: Vec<usize>,
    /// Checked eps-closed edges after step `t` (`t = 0, 1, ...`).
    pub z_counts: Vec<usize>,
    /// `xi_t = |A_{t+1}| - |A_t|`.
    pub xi: Vec<usize>,
    pub stop: StopCause,
    /// Centres whose exit distributions could not be translated from the template.
    pub direct_exit_computations: usize,
}

impl ExplorationTrace {
    pub fn steps(&self) -> usize {
        self.xi.len()
    }

    pub fn survived(&self) -> bool {
        self.stop == StopCause::SurvivalCap
    }

    pub fn mean_xi(&self) -> Option<f64> {
        (!self.xi.is_empty()).then(|| self.xi.iter().sum::<usize>() as f64 / self.xi.len() as f64)
    }
}

pub fn run_exploration(graph: &ImplicitGraph, v: &Word, params: &ExplorationParams, seed: u64) -> Result<ExplorationTrace> {
    let ExplorationParams {
        p,
        eps,
        eps1,
        r_n,
        lambda,
        cap,
        step_cap,
    } = *params;
    for (name, x) in [("p", p), ("eps", eps), ("eps1", eps1)] {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::Precondition(format!("{name} = {x} is not a probability")));
        }
    }
    if r_n == 0 || cap == 0 {
        return Err(Error::Precondition("r_n and M must be >= 1".into()));
    }
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::Precondition(format!("lambda = {lambda} outside (0, 1)")));
    }
    let mut field = CoupledField::new(seed, p, eps, eps1);
    let d = graph.degree();
    let step_cap = step_cap.unwrap_or(cap * d + 1);
    let (mut a, truncated) = initial_cluster(graph, v, &mut field, cap);
    let mut trace = ExplorationTrace {
        sizes: vec![a.len()],
        z_counts: vec![0],
        xi: Vec::new(),
        stop: StopCause::SurvivalCap,
        direct_exit_computations: 0,
    };
    if truncated {
        return Ok(trace);
    }
    let mut oracle = ExitOracle::new(graph, r_n)?;
    let alpha = lambda / 2.0;
    let tau_slope = 2.0 / (lambda * d as f64);
    let mut frontier: VecDeque<(Word, usize)> = a.iter().flat_map(|x| (0..d).map(move |s| (x.clone(), s))).collect();
    let mut closed = 0;
    let mut t = 0;
    let stop = loop {
        if t >= step_cap {
            break StopCause::StepCap;
        }
        // A non-nice edge stays non-nice as A grows, so it is dropped for good.
        let mut next = None;
        while let Some((x, s)) = frontier.pop_front() {
            let nx = graph.neighbors(&x);
            let u = nx[s].clone();
            if u == x {
                continue;
            }
            let key = graph.edge_key_with(&x, &nx, s);
            if field.eps_checked(&key) {
                continue;
            }
            if oracle.is_nice(&a, &u, alpha, r_n)? {
                next = Some((u, key));
                break;
            }
        }
        let Some((u, key)) = next else {
            break StopCause::FrontierEmpty;
        };
        t += 1;
        let added = if field.y(&key) {
            let v_t = grow_step(graph, &a, &u, &mut field, r_n)?;
            assert!(witnessed(graph, &a, &v_t, &field), "added vertex without an open connection");
            v_t
        } else {
            closed += 1;
            IndexSet::new()
        };
        for w in &added {
            a.insert(w.clone());
            frontier.extend((0..d).map(|s| (w.clone(), s)));
        }
        trace.sizes.push(a.len());
        trace.xi.push(added.len());
        trace.z_counts.push(closed);
        debug_assert!(closed <= t);
        if a.len() >= cap {
            break StopCause::SurvivalCap;
        }
        if a.len() as f64 <= tau_slope * t as f64 {
            break StopCause::TauStop;
        }
    };
    trace.stop = stop;
    trace.direct_exit_computations = oracle.direct_computations();
    Ok(trace)
}

/// Outcome counts of independent exploration runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalSummary {
    pub runs: usize,
    pub survived: usize,
    pub tau_stops: usize,
    pub frontier_empty: usize,
    pub step_caps: usize,
    /// Mean `xi_t` over all steps of all runs.
    pub mean_xi: Option<f64>,
}

impl SurvivalSummary {
    pub fn frequency(&self) -> f64 {
        self.survived as f64 / self.runs as f64
    }
}

/// Runs `runs` explorations from the root with seeds derived from `master_seed`.
pub fn survival_runs(
    graph: &ImplicitGraph,
    params: &ExplorationParams,
    runs: usize,
    master_seed: u64,
) -> Result<(SurvivalSummary, Vec<ExplorationTrace>)> {
    let traces = (0..runs as u64)
        .into_par_iter()
        .map(|k| run_exploration(graph, &graph.root(), params, derive_seed(master_seed, k)))
        .collect::<Result<Vec<_>>>()?;
    let count = |c: StopCause| traces.iter().filter(|t| t.stop == c).count();
    let steps: usize = traces.iter().map(|t| t.steps()).sum();
    let xi: usize = traces.iter().flat_map(|t| &t.xi).sum();
    let summary = SurvivalSummary {
        runs,
        survived: count(StopCause::SurvivalCap),
        tau_stops: count(StopCause::TauStop),
        frontier_empty: count(StopCause::FrontierEmpty),
        step_caps: count(StopCause::StepCap),
        mean_xi: (steps > 0).then(|| xi as f64 / steps as f64),
    };
    Ok((summary, traces))
}

/// Shape of the drift lower bound, `eps1 lambda^2 delta r_n`, without the
/// unknown constant factor.
pub fn drift_reference(eps1: f64, lambda: f64, delta: f64, r_n: usize) -> f64 {
    eps1 * lambda * lambda * delta * r_n as f64
}

/// Sphere-reaching probability `h_{r_n}(p)` on `graph`, a lower proxy for
/// the probability of an infinite cluster.
pub fn delta_hat(graph: &ImplicitGraph, p: f64, r_n: usize, trials: usize, master_seed: u64) -> Result<f64> {
    let ball = bfs_ball(graph, &graph.root(), r_n)?;
    Ok(reach_prob_ball(&ball, p, r_n, trials, master_seed)?.value)
}

/// Horizon of the return-probability fit used for `lambda`, per family.
pub fn default_spectral_tmax(kind: FamilyKind) -> usize {
    match kind {
        FamilyKind::Tree => 30,
        FamilyKind::FreeProduct => 40,
        FamilyKind::ModifiedGrandparent => 16,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LocalityConfig {
    /// Radius `R` of the crossing estimator `h_R(p) = theta*`.
    pub estimator_radius: usize,
    pub theta_star: f64,
    pub trials: usize,
    pub master_seed: u64,
    /// Largest radius tried when measuring `r_n`; defaults to `n + 2`
    /// (`n/2 + 2` for modified grandparent graphs).
    pub rmax: Option<usize>,
    /// Return-probability horizon for `lambda`; defaults per family.
    pub spectral_tmax: Option<usize>,
}

impl LocalityConfig {
    pub fn new(master_seed: u64) -> Self {
        LocalityConfig {
            estimator_radius: 8,
            theta_star: 0.3,
            trials: 20_000,
            master_seed,
            rmax: None,
            spectral_tmax: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalityRow {
    pub n: u32,
    pub r_n: usize,
    pub r_n_lower_bound: bool,
    /// Small end of the spectral gap band of `G_n`.
    pub lambda_hat: f64,
    pub lambda_sq_r_n: f64,
    pub pc_n: f64,
    pub se_n: f64,
    pub pc_g: f64,
    pub se_g: f64,
    pub abs_diff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendCheck {
    pub ok: bool,
    /// Pairs `(n, n')` with `n < n'` where the gap grew by more than
    /// twice the combined standard error.
    pub violations: Vec<(u32, u32)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalityReport {
    pub family: String,
    pub theta_star: f64,
    pub estimator_radius: usize,
    pub rows: Vec<LocalityRow>,
    /// Absent for a single row.
    pub trend: Option<TrendCheck>,
}

/// `|pc(G_n) - pc(G)|` may not grow between any `n < n'` by more than
/// `2 sqrt(se_n^2 + se_n'^2)`. The base estimate is shared by every row, so
/// only the quotient errors enter.
pub fn trend_check(rows: &[LocalityRow]) -> Option<TrendCheck> {
    if rows.len() < 2 {
        return None;
    }
    let mut violations = Vec::new();
    for (i, a) in rows.iter().enumerate() {
        for b in &rows[i + 1..] {
            let tol = 2.0 * (a.se_n.powi(2) + b.se_n.powi(2)).sqrt();
            if b.abs_diff > a.abs_diff + tol {
                violations.push((a.n, b.n));
            }
        }
    }
    Some(TrendCheck {
        ok: violations.is_empty(),
        violations,
    })
}

/// Default cap for the `r_n` search: comfortably above the expected radius.
fn default_rmax(kind: FamilyKind, n: u32) -> usize {
    match kind {
        FamilyKind::ModifiedGrandparent => n as usize / 2 + 2,
        _ => n as usize + 2,
    }
}

pub fn locality_experiment(family: &FamilyDescriptor, n_list: &[u32], cfg: &LocalityConfig) -> Result<LocalityReport> {
    if n_list.is_empty() || n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Precondition("n_list must be nonempty and increasing".into()));
    }
    let base = family.base().build()?;
    let r_est = cfg.estimator_radius;
    let ball_g = bfs_ball(&base, &base.root(), r_est)?;
    let pc_g = pc_estimate_ball(&ball_g, &base.label(), &[r_est], cfg.theta_star, cfg.trials, cfg.master_seed)?.estimate();
    let tmax = cfg.spectral_tmax.unwrap_or_else(|| default_spectral_tmax(family.family));
    let mut rows = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let row = (|| -> Result<LocalityRow> {
            let g_n = family.with_quotient(n).build()?;
            let rmax = cfg.rmax.unwrap_or_else(|| default_rmax(family.family, n));
            let lr = local_radius(&g_n, &base, rmax)?;
            let est = spectral_estimate(&g_n, tmax)?;
            let ball = bfs_ball(&g_n, &g_n.root(), r_est)?;
            let pc = pc_estimate_ball(&ball, &g_n.label(), &[r_est], cfg.theta_star, cfg.trials, cfg.master_seed)?.estimate();
            let lambda = est.lambda_pessimistic;
            Ok(LocalityRow {
                n,
                r_n: lr.radius,
                r_n_lower_bound: lr.lower_bound,
                lambda_hat: lambda,
                lambda_sq_r_n: lambda * lambda * lr.radius as f64,
                pc_n: pc.p_hat,
                se_n: pc.stderr,
                pc_g: pc_g.p_hat,
                se_g: pc_g.stderr,
                abs_diff: (pc.p_hat - pc_g.p_hat).abs(),
            })
        })();
        match row {
            Ok(r) => rows.push(r),
            Err(cause) => {
                return Err(Error::PartialLocality {
                    rows,
                    cause: Box::new(cause),
                })
            }
        }
    }
    Ok(LocalityReport {
        family: base.label(),
        theta_star: cfg.theta_star,
        estimator_radius: r_est,
        trend: trend_check(&rows),
        rows,
    })
}
