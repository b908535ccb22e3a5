//! Bernoulli bond percolation on explicit balls.
//!
//! Edge `e` is open in trial `i` iff `U(seed_i, hash(e)) < p`, where
//! `seed_i` is derived from the master seed and the trial index and `U` is a
//! keyed uniform. Every trial is therefore reproducible on its own, the same
//! edge gets the same variate in every ball and every graph that contains
//! it, and all estimates are pathwise monotone in `p`.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use bitvec::vec::BitVec;
use rayon::prelude::*;

use crate::ball::{bfs_ball, Ball, NONE};
use crate::error::{Error, Result};
use crate::graph::{ImplicitGraph, SphereClass};
use crate::group::Word;
use crate::rng::{derive_seed, keyed_uniform};

/// Largest edge count accepted by the exact enumerator.
pub const EXACT_MAX_EDGES: usize = 20;

/// Bisection tolerance of the crossing estimator.
pub const BISECTION_TOL: f64 = 0.002;

/// Half-width of the finite difference used for the crossing slope.
const SLOPE_STEP: f64 = 0.01;

#[inline]
pub fn trial_seed(master_seed: u64, trial: u64) -> u64 {
    derive_seed(master_seed, trial)
}

#[inline]
pub fn edge_uniform(trial_seed: u64, edge_hash: u64) -> f64 {
    keyed_uniform(trial_seed, edge_hash)
}

#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<u32>,
    size: Vec<u32>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n as u32).collect(),
            size: vec![1; n],
        }
    }

    pub fn reset(&mut self) {
        for (i, p) in self.parent.iter_mut().enumerate() {
            *p = i as u32;
        }
        self.size.iter_mut().for_each(|s| *s = 1);
    }

    pub fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let gp = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = gp;
            x = gp;
        }
        x
    }

    pub fn union(&mut self, a: u32, b: u32) -> bool {
        let (mut a, mut b) = (self.find(a), self.find(b));
        if a == b {
            return false;
        }
        if self.size[a as usize] < self.size[b as usize] {
            std::mem::swap(&mut a, &mut b);
        }
        self.parent[b as usize] = a;
        self.size[a as usize] += self.size[b as usize];
        true
    }
}

/// Open-edge set of one trial, indexed like [`Ball::edges`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PercSample {
    pub open: BitVec,
    pub master_seed: u64,
    pub trial: u64,
}

pub fn sample_percolation(ball: &Ball, p: f64, master_seed: u64, trial: u64) -> PercSample {
    let seed = trial_seed(master_seed, trial);
    let open = ball.edges().iter().map(|e| edge_uniform(seed, e.hash) < p).collect();
    PercSample {
        open,
        master_seed,
        trial,
    }
}

/// A Monte Carlo proportion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
    pub trials: usize,
}

impl Estimate {
    pub fn from_count(hits: u64, trials: usize) -> Self {
        let v = hits as f64 / trials as f64;
        Estimate {
            value: v,
            stderr: (v * (1.0 - v) / trials as f64).sqrt(),
            trials,
        }
    }
}

/// `b_R(x, root)` for every `x` on the outer sphere of the ball.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectionEstimate {
    pub vertices: Vec<Word>,
    pub estimates: Vec<Estimate>,
    pub trials: usize,
}

fn connect_counts(ball: &Ball, p: f64, trials: usize, master_seed: u64) -> Vec<u64> {
    let sphere = ball.sphere(ball.radius());
    let zero = || (UnionFind::new(ball.len()), vec![0u64; sphere.len()]);
    let (_, counts) = (0..trials as u64)
        .into_par_iter()
        .fold(zero, |(mut uf, mut counts), t| {
            let seed = trial_seed(master_seed, t);
            uf.reset();
            for e in ball.edges() {
                if edge_uniform(seed, e.hash) < p {
                    uf.union(e.a, e.b);
                }
            }
            let root = uf.find(0);
            for (k, x) in sphere.clone().enumerate() {
                if uf.find(x as u32) == root {
                    counts[k] += 1;
                }
            }
            (uf, counts)
        })
        .reduce(zero, |(uf, mut a), (_, b)| {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
            (uf, a)
        });
    counts
}

pub fn connection_prob(ball: &Ball, p: f64, trials: usize, master_seed: u64) -> Result<ConnectionEstimate> {
    if trials == 0 {
        return Err(Error::Precondition("trials must be >= 1".into()));
    }
    let counts = connect_counts(ball, p, trials, master_seed);
    let sphere = ball.sphere(ball.radius());
    Ok(ConnectionEstimate {
        vertices: ball.vertices()[sphere].to_vec(),
        estimates: counts.iter().map(|&c| Estimate::from_count(c, trials)).collect(),
        trials,
    })
}

/// Exact `b_R(x, root)` by summing over all `2^|E|` configurations.
pub fn connection_prob_exact(ball: &Ball, p: f64) -> Result<Vec<f64>> {
    let m = ball.num_edges();
    if m > EXACT_MAX_EDGES {
        return Err(Error::Precondition(format!(
            "exact enumeration needs at most {EXACT_MAX_EDGES} edges, ball has {m}"
        )));
    }
    let sphere = ball.sphere(ball.radius());
    let mut out = vec![0.0; sphere.len()];
    let mut uf = UnionFind::new(ball.len());
    for mask in 0u32..(1u32 << m) {
        uf.reset();
        let k = mask.count_ones() as i32;
        let w = p.powi(k) * (1.0 - p).powi(m as i32 - k);
        for (i, e) in ball.edges().iter().enumerate() {
            if mask >> i & 1 == 1 {
                uf.union(e.a, e.b);
            }
        }
        let root = uf.find(0);
        for (k, x) in sphere.clone().enumerate() {
            if uf.find(x as u32) == root {
                out[k] += w;
            }
        }
    }
    Ok(out)
}

/// Extreme ratios `b(x)/b(y)` over the outer sphere with delta-method errors.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectionRatioReport {
    pub p: f64,
    pub radius: usize,
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
    /// `min_ratio + 3 sigma >= p`.
    pub lower_ok: bool,
    /// `max_ratio - 3 sigma <= 1/p`.
    pub upper_ok: bool,
    /// Some sphere vertex was never connected to the root.
    pub zero_flag: bool,
    /// Mean estimate per class.
    pub class_means: Vec<(SphereClass, f64)>,
}

impl ConnectionRatioReport {
    pub fn holds(&self) -> bool {
        self.lower_ok && self.upper_ok && !self.zero_flag
    }
}

pub fn connection_ratio_report(
    ball: &Ball,
    p: f64,
    trials: usize,
    master_seed: u64,
    classes: &[SphereClass],
) -> Result<ConnectionRatioReport> {
    let est = connection_prob(ball, p, trials, master_seed)?;
    if classes.len() != est.estimates.len() {
        return Err(Error::Precondition("one class per sphere vertex".into()));
    }
    let (mut hi, mut lo) = (est.estimates[0], est.estimates[0]);
    for e in &est.estimates {
        if e.value > hi.value {
            hi = *e;
        }
        if e.value < lo.value {
            lo = *e;
        }
    }
    let zero_flag = lo.value == 0.0;
    let max_ratio = if zero_flag { f64::INFINITY } else { hi.value / lo.value };
    let rel = ((hi.stderr / hi.value).powi(2) + (lo.stderr / lo.value).powi(2)).sqrt();
    let sigma_max = max_ratio * rel;
    let min_ratio = 1.0 / max_ratio;
    let sigma_min = min_ratio * rel;
    let mut class_means: Vec<(SphereClass, f64, usize)> = Vec::new();
    for (e, &c) in est.estimates.iter().zip(classes) {
        match class_means.iter_mut().find(|x| x.0 == c) {
            Some(x) => {
                x.1 += e.value;
                x.2 += 1;
            }
            None => class_means.push((c, e.value, 1)),
        }
    }
    class_means.sort_by_key(|x| x.0);
    Ok(ConnectionRatioReport {
        p,
        radius: ball.radius(),
        min_ratio,
        max_ratio,
        sigma_min,
        sigma_max,
        lower_ok: min_ratio + 3.0 * sigma_min >= p,
        upper_ok: max_ratio - 3.0 * sigma_max <= 1.0 / p,
        zero_flag,
        class_means: class_means.into_iter().map(|(c, s, k)| (c, s / k as f64)).collect(),
    })
}

/// Per-thread scratch for the reach searches, reset by generation stamps.
struct Scratch {
    stamp: Vec<u32>,
    best: Vec<f64>,
    generation: u32,
    queue: Vec<u32>,
    heap: BinaryHeap<Reverse<(u64, u32)>>,
}

impl Scratch {
    fn new(n: usize) -> Self {
        Scratch {
            stamp: vec![0; n],
            best: vec![f64::INFINITY; n],
            generation: 0,
            queue: Vec::new(),
            heap: BinaryHeap::new(),
        }
    }

    fn next_generation(&mut self) {
        self.generation = self.generation.wrapping_add(1);
        if self.generation == 0 {
            self.stamp.iter_mut().for_each(|s| *s = 0);
            self.generation = 1;
        }
        self.queue.clear();
        self.heap.clear();
    }

    fn seen(&self, v: u32) -> bool {
        self.stamp[v as usize] == self.generation
    }
}

fn check_reach_ball(ball: &Ball, n: usize) -> Result<()> {
    if n == 0 || n > ball.radius() {
        return Err(Error::Precondition(format!(
            "reach radius {n} must be in 1..={}",
            ball.radius()
        )));
    }
    Ok(())
}

/// Whether the root reaches the sphere of radius `n` through open edges of
/// `B(root, n)`. Edges are sampled only when the search reaches them.
fn reach_once(ball: &Ball, n: usize, p: f64, seed: u64, s: &mut Scratch) -> bool {
    let limit = ball.sphere(n).end as u32;
    s.next_generation();
    s.stamp[0] = s.generation;
    s.queue.push(0);
    let mut head = 0;
    while head < s.queue.len() {
        let v = s.queue[head];
        head += 1;
        if ball.level(v as usize) == n {
            return true;
        }
        for (&w, &e) in ball.slots(v as usize).iter().zip(ball.slot_edges(v as usize)) {
            if w == NONE || w >= limit || e == NONE || s.seen(w) {
                continue;
            }
            if edge_uniform(seed, ball.edges()[e as usize].hash) < p {
                s.stamp[w as usize] = s.generation;
                s.queue.push(w);
            }
        }
    }
    false
}

/// Smallest `p` at which the root reaches the sphere of radius `n`:
/// the minimum over paths of the largest edge variate on the path.
fn reach_threshold(ball: &Ball, n: usize, seed: u64, s: &mut Scratch) -> f64 {
    let limit = ball.sphere(n).end as u32;
    s.next_generation();
    s.stamp[0] = s.generation;
    s.best[0] = 0.0;
    s.heap.push(Reverse((0f64.to_bits(), 0)));
    while let Some(Reverse((bits, v))) = s.heap.pop() {
        let t = f64::from_bits(bits);
        if t > s.best[v as usize] {
            continue;
        }
        if ball.level(v as usize) == n {
            return t;
        }
        for (&w, &e) in ball.slots(v as usize).iter().zip(ball.slot_edges(v as usize)) {
            if w == NONE || w >= limit || e == NONE {
                continue;
            }
            let c = t.max(edge_uniform(seed, ball.edges()[e as usize].hash));
            if !s.seen(w) || c < s.best[w as usize] {
                s.stamp[w as usize] = s.generation;
                s.best[w as usize] = c;
                s.heap.push(Reverse((c.to_bits(), w)));
            }
        }
    }
    f64::INFINITY
}

/// Per-trial reach thresholds for radius `n`, in trial order.
pub fn reach_thresholds(ball: &Ball, n: usize, trials: usize, master_seed: u64) -> Result<Vec<f64>> {
    check_reach_ball(ball, n)?;
    Ok((0..trials as u64)
        .into_par_iter()
        .map_init(
            || Scratch::new(ball.len()),
            |s, t| reach_threshold(ball, n, trial_seed(master_seed, t), s),
        )
        .collect())
}

/// Monte Carlo `h_n(p)` on a prebuilt ball of radius at least `n`.
pub fn reach_prob_ball(ball: &Ball, p: f64, n: usize, trials: usize, master_seed: u64) -> Result<Estimate> {
    check_reach_ball(ball, n)?;
    if trials == 0 {
        return Err(Error::Precondition("trials must be >= 1".into()));
    }
    let hits: u64 = (0..trials as u64)
        .into_par_iter()
        .map_init(
            || Scratch::new(ball.len()),
            |s, t| reach_once(ball, n, p, trial_seed(master_seed, t), s) as u64,
        )
        .sum();
    Ok(Estimate::from_count(hits, trials))
}

/// Monte Carlo `h_n(p) = P_p[root <-> sphere(n) inside B(root, n)]`.
pub fn reach_prob(graph: &ImplicitGraph, p: f64, n: usize, trials: usize, master_seed: u64) -> Result<Estimate> {
    let ball = bfs_ball(graph, &graph.root(), n)?;
    reach_prob_ball(&ball, p, n, trials, master_seed)
}

/// Exact `h_n(p)` on `T_d`.
pub fn tree_reach_exact(d: usize, p: f64, n: usize) -> f64 {
    assert!(d >= 2 && n >= 1, "tree recursion needs d >= 2 and n >= 1");
    let mut q = p;
    for _ in 1..n {
        q = p * (1.0 - (1.0 - q).powi(d as i32 - 1));
    }
    1.0 - (1.0 - q).powi(d as i32)
}

/// Solves `h(p) = theta` by bisection on `[0, 1]` for nondecreasing `h`.
pub fn bisect(h: impl Fn(f64) -> f64, theta: f64, tol: f64) -> Result<f64> {
    let (h_low, h_high) = (h(0.0), h(1.0));
    if !(theta > 0.0 && theta < 1.0) || h_high < theta || h_low >= theta {
        return Err(Error::NonBracketing { theta, h_low, h_high });
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if h(mid) < theta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Crossing of the exact tree curve `h_n` with `theta`.
pub fn tree_pc_oracle(d: usize, n: usize, theta: f64, tol: f64) -> Result<f64> {
    bisect(|p| tree_reach_exact(d, p, n), theta, tol)
}

/// Crossing estimate at one radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PcPoint {
    pub n: usize,
    pub p_hat: f64,
    pub stderr: f64,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcReport {
    pub graph: String,
    pub theta_star: f64,
    pub points: Vec<PcPoint>,
}

impl PcReport {
    /// The crossing at the largest radius.
    pub fn estimate(&self) -> PcPoint {
        *self.points.last().expect("at least one radius")
    }
}

/// Empirical `h_n` from sorted reach thresholds.
pub fn empirical_h(sorted: &[f64], p: f64) -> f64 {
    sorted.partition_point(|&t| t < p) as f64 / sorted.len() as f64
}

/// Crossing and delta-method standard error from per-trial thresholds.
pub fn crossing_from_thresholds(thresholds: &[f64], theta: f64) -> Result<(f64, f64)> {
    let mut sorted = thresholds.to_vec();
    sorted.sort_by(f64::total_cmp);
    let h = |p: f64| empirical_h(&sorted, p);
    let p_hat = bisect(h, theta, BISECTION_TOL)?;
    let slope = (h(p_hat + SLOPE_STEP) - h(p_hat - SLOPE_STEP)) / (2.0 * SLOPE_STEP);
    let se = (theta * (1.0 - theta) / sorted.len() as f64).sqrt();
    let stderr = if slope > 0.0 { se / slope } else { f64::INFINITY };
    Ok((p_hat, stderr))
}

/// Solves `h_n(p) = theta` for every `n` in `n_list` on one ball of radius
/// `max(n_list)`, using the same trials for every radius.
pub fn pc_estimate(graph: &ImplicitGraph, n_list: &[usize], theta: f64, trials: usize, master_seed: u64) -> Result<PcReport> {
    if n_list.is_empty() || n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Precondition("n_list must be nonempty and increasing".into()));
    }
    if trials == 0 {
        return Err(Error::Precondition("trials must be >= 1".into()));
    }
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::NonBracketing {
            theta,
            h_low: 0.0,
            h_high: 1.0,
        });
    }
    let ball = bfs_ball(graph, &graph.root(), *n_list.last().unwrap())?;
    pc_estimate_ball(&ball, &graph.label(), n_list, theta, trials, master_seed)
}

pub fn pc_estimate_ball(
    ball: &Ball,
    label: &str,
    n_list: &[usize],
    theta: f64,
    trials: usize,
    master_seed: u64,
) -> Result<PcReport> {
    let mut points = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let th = reach_thresholds(ball, n, trials, master_seed)?;
        let (p_hat, stderr) = crossing_from_thresholds(&th, theta)?;
        points.push(PcPoint {
            n,
            p_hat,
            stderr,
            trials,
        });
    }
    Ok(PcReport {
        graph: label.to_string(),
        theta_star: theta,
        points,
    })
}
