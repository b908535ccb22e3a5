//! Simple random walk computations on balls: exit measures, return
//! probabilities, spectral radius estimates and nice-edge certification.

use std::collections::{HashMap, HashSet};

use indexmap::IndexSet;
use nalgebra::{DMatrix, DVector};

use crate::ball::{bfs_ball, Ball, NONE};
use crate::error::{Error, Result};
use crate::graph::{ImplicitGraph, SphereClass};
use crate::group::{CosetContext, Word};

/// Above this many transient states the exit measure is found iteratively.
pub const DENSE_LIMIT: usize = 2000;
const MAX_ITERATIONS: usize = 1_000_000;
const RESIDUAL_TOL: f64 = 1e-12;

/// First-hitting distribution of the sphere of radius `radius` around `center`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExitDistribution {
    pub center: Word,
    pub radius: usize,
    pub vertices: Vec<Word>,
    pub mu: Vec<f64>,
}

impl ExitDistribution {
    pub fn total(&self) -> f64 {
        self.mu.iter().sum()
    }

    pub fn get(&self, w: &Word) -> Option<f64> {
        self.vertices.iter().position(|v| v == w).map(|i| self.mu[i])
    }
}

/// Exit distribution of the walk started at the ball's root, absorbed on
/// its outer sphere. Steps are uniform over the `d` neighbour slots.
pub fn harmonic_measure(ball: &Ball) -> Result<ExitDistribution> {
    let r = ball.radius();
    if r == 0 {
        return Err(Error::Precondition("exit measure needs radius >= 1".into()));
    }
    let t = ball.sphere(r).start;
    let d = ball.degree() as f64;
    let g = if t <= DENSE_LIMIT {
        green_dense(ball, t)?
    } else {
        green_iterative(ball, t)?
    };
    let residual = green_residual(ball, t, &g);
    if residual.is_nan() || residual > RESIDUAL_TOL {
        return Err(Error::SolverDiverged {
            residual,
            iterations: 0,
        });
    }
    let sphere = ball.sphere(r);
    let mut mu = vec![0.0; sphere.len()];
    for (u, &gu) in g.iter().enumerate() {
        for &v in ball.slots(u) {
            if v != NONE && v as usize >= sphere.start {
                mu[v as usize - sphere.start] += gu / d;
            }
        }
    }
    let total: f64 = mu.iter().sum();
    if (total - 1.0).abs() > 1e-10 {
        return Err(Error::SolverDiverged {
            residual: (total - 1.0).abs(),
            iterations: 0,
        });
    }
    Ok(ExitDistribution {
        center: ball.root().clone(),
        radius: r,
        vertices: ball.vertices()[sphere].to_vec(),
        mu,
    })
}

/// Expected visits `g` to each transient state: `g = e_root + g Q`.
fn green_dense(ball: &Ball, t: usize) -> Result<Vec<f64>> {
    let d = ball.degree() as f64;
    let mut m = DMatrix::<f64>::identity(t, t);
    for u in 0..t {
        for &v in ball.slots(u) {
            if v != NONE && (v as usize) < t {
                m[(v as usize, u)] -= 1.0 / d;
            }
        }
    }
    let mut rhs = DVector::<f64>::zeros(t);
    rhs[0] = 1.0;
    let sol = m.lu().solve(&rhs).ok_or(Error::SolverDiverged {
        residual: f64::INFINITY,
        iterations: 0,
    })?;
    Ok(sol.iter().copied().collect())
}

/// Jacobi iteration on the same system, pushing mass level by level.
fn green_iterative(ball: &Ball, t: usize) -> Result<Vec<f64>> {
    let d = ball.degree() as f64;
    let mut g = vec![0.0; t];
    g[0] = 1.0;
    let mut next = vec![0.0; t];
    for it in 1..=MAX_ITERATIONS {
        next.iter_mut().for_each(|x| *x = 0.0);
        next[0] = 1.0;
        for (u, &gu) in g.iter().enumerate() {
            if gu == 0.0 {
                continue;
            }
            let share = gu / d;
            for &v in ball.slots(u) {
                if v != NONE && (v as usize) < t {
                    next[v as usize] += share;
                }
            }
        }
        let scale = next.iter().fold(1.0f64, |a, &b| a.max(b));
        let delta = g.iter().zip(&next).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
        std::mem::swap(&mut g, &mut next);
        if delta <= 1e-15 * scale {
            return Ok(g);
        }
        if it == MAX_ITERATIONS {
            return Err(Error::SolverDiverged {
                residual: delta,
                iterations: it,
            });
        }
    }
    unreachable!()
}

fn green_residual(ball: &Ball, t: usize, g: &[f64]) -> f64 {
    let d = ball.degree() as f64;
    let mut r: Vec<f64> = g.to_vec();
    r[0] -= 1.0;
    for (u, &gu) in g.iter().enumerate() {
        for &v in ball.slots(u) {
            if v != NONE && (v as usize) < t {
                r[v as usize] -= gu / d;
            }
        }
    }
    r.iter().fold(0.0f64, |a, x| a.max(x.abs()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassStats {
    pub class: SphereClass,
    pub count: usize,
    pub min: f64,
    pub max: f64,
}

/// Extreme ratios `mu(x)/mu(y)` over sphere pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioReport {
    /// `max mu / min mu`; infinite when some vertex has zero mass.
    pub global_ratio: f64,
    pub zero_mass: bool,
    pub classes: Vec<ClassStats>,
}

impl RatioReport {
    /// Largest ratio between two vertices of the same class.
    pub fn within_class_max(&self) -> f64 {
        self.classes.iter().map(|c| ratio(c.max, c.min)).fold(1.0, f64::max)
    }

    /// Largest `mu(x)/mu(y)` with `x` in class `a` and `y` in class `b`.
    pub fn pair_ratio(&self, a: SphereClass, b: SphereClass) -> Option<f64> {
        let ca = self.classes.iter().find(|c| c.class == a)?;
        let cb = self.classes.iter().find(|c| c.class == b)?;
        Some(ratio(ca.max, cb.min))
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        f64::INFINITY
    }
}

pub fn ratio_report(dist: &ExitDistribution, classes: &[SphereClass]) -> RatioReport {
    assert_eq!(dist.mu.len(), classes.len(), "one class label per sphere vertex");
    let mut stats: Vec<ClassStats> = Vec::new();
    for (&m, &c) in dist.mu.iter().zip(classes) {
        match stats.iter_mut().find(|s| s.class == c) {
            Some(s) => {
                s.count += 1;
                s.min = s.min.min(m);
                s.max = s.max.max(m);
            }
            None => stats.push(ClassStats {
                class: c,
                count: 1,
                min: m,
                max: m,
            }),
        }
    }
    stats.sort_by_key(|s| s.class);
    let min = dist.mu.iter().copied().fold(f64::INFINITY, f64::min);
    let max = dist.mu.iter().copied().fold(0.0, f64::max);
    RatioReport {
        global_ratio: ratio(max, min),
        zero_mass: min <= 0.0,
        classes: stats,
    }
}

/// Exit distribution around the root of `graph` with class labels attached.
pub fn root_exit_report(graph: &ImplicitGraph, radius: usize) -> Result<(ExitDistribution, Vec<SphereClass>, RatioReport)> {
    let ball = bfs_ball(graph, &graph.root(), radius)?;
    let dist = harmonic_measure(&ball)?;
    let classes: Vec<SphereClass> = dist.vertices.iter().map(|v| graph.sphere_class(v)).collect();
    let report = ratio_report(&dist, &classes);
    Ok((dist, classes, report))
}

/// `p^s(o, o)` for `s = 0..=tmax`, by pushing the walk distribution forward
/// on `B(o, ceil(tmax/2))`. Mass that cannot come back by time `tmax` is dropped.
pub fn return_probabilities(graph: &ImplicitGraph, tmax: usize) -> Result<Vec<f64>> {
    let ball = bfs_ball(graph, &graph.root(), tmax.div_ceil(2))?;
    let d = ball.degree() as f64;
    let mut dist = vec![0.0; ball.len()];
    dist[0] = 1.0;
    let mut next = vec![0.0; ball.len()];
    let mut out = vec![1.0];
    for s in 0..tmax {
        let reach = s.min(tmax - s).min(ball.radius());
        let live = ball.sphere(reach).end;
        let reach_next = (s + 1).min(tmax - s - 1).min(ball.radius());
        let live_next = ball.sphere(reach_next).end;
        next.iter_mut().for_each(|x| *x = 0.0);
        for u in 0..live {
            let m = dist[u];
            if m == 0.0 {
                continue;
            }
            let share = m / d;
            for &v in ball.slots(u) {
                if v != NONE && (v as usize) < live_next {
                    next[v as usize] += share;
                }
            }
        }
        std::mem::swap(&mut dist, &mut next);
        out.push(dist[0]);
    }
    Ok(out)
}

pub fn return_probability(graph: &ImplicitGraph, t: usize) -> Result<f64> {
    Ok(return_probabilities(graph, t)?[t])
}

/// Distribution of the walk from the root after exactly `t` steps, on `B(o, t)`.
pub fn walk_distribution(graph: &ImplicitGraph, t: usize) -> Result<(Ball, Vec<f64>)> {
    let ball = bfs_ball(graph, &graph.root(), t)?;
    let d = ball.degree() as f64;
    let mut dist = vec![0.0; ball.len()];
    dist[0] = 1.0;
    for s in 0..t {
        let mut next = vec![0.0; ball.len()];
        for u in ball.sphere(0).start..ball.sphere(s).end {
            let share = dist[u] / d;
            if share == 0.0 {
                continue;
            }
            for &v in ball.slots(u) {
                if v != NONE {
                    next[v as usize] += share;
                }
            }
        }
        dist = next;
    }
    Ok((ball, dist))
}

/// Spectral radius estimate from even return probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralEstimate {
    pub graph: String,
    pub tmax: usize,
    /// `p^s(o, o)` for `s = 0..=tmax`.
    pub returns: Vec<f64>,
    /// `(2t, p^{2t}(o,o)^{1/(2t)})` for `t >= 1`.
    pub roots: Vec<(usize, f64)>,
    /// `p^{tmax}(o,o)^{1/tmax}`, a certified lower bound on the spectral radius.
    pub rho_hat: f64,
    /// Fit of `log p^{2t} = 2t log rho + C` over the last ten even times.
    pub rho_linear: f64,
    /// Fit of `log p^{2t} = 2t log rho + gamma log(2t) + C` over the same times.
    pub rho_free: f64,
    pub rho_lo: f64,
    pub rho_hi: f64,
    /// `1 - rho_hat`, an upper bound on the spectral gap for transitive graphs.
    pub lambda_hat: f64,
    /// `1 - rho_hi`, the small end of the gap band.
    pub lambda_pessimistic: f64,
}

const FIT_POINTS: usize = 10;

pub fn spectral_estimate(graph: &ImplicitGraph, tmax: usize) -> Result<SpectralEstimate> {
    if tmax < 2 || tmax % 2 == 1 {
        return Err(Error::Precondition(format!("tmax must be even and >= 2, got {tmax}")));
    }
    let returns = return_probabilities(graph, tmax)?;
    let roots: Vec<(usize, f64)> = (1..=tmax / 2)
        .map(|t| (2 * t, returns[2 * t].powf(1.0 / (2 * t) as f64)))
        .collect();
    let rho_hat = roots.last().unwrap().1;
    let pts: Vec<(f64, f64)> = roots
        .iter()
        .rev()
        .take(FIT_POINTS)
        .map(|&(s, _)| (s as f64, returns[s].ln()))
        .collect();
    let (rho_linear, rho_free) = if pts.len() >= 3 {
        let y = DVector::from_iterator(pts.len(), pts.iter().map(|p| p.1));
        let lin = DMatrix::from_fn(pts.len(), 2, |i, j| if j == 0 { 1.0 } else { pts[i].0 });
        let free = DMatrix::from_fn(pts.len(), 3, |i, j| match j {
            0 => 1.0,
            1 => pts[i].0,
            _ => pts[i].0.ln(),
        });
        let slope = |x: DMatrix<f64>| -> Result<f64> {
            let beta = x.svd(true, true).solve(&y, 1e-14).map_err(|msg| {
                log::error!("least squares fit failed: {msg}");
                Error::SolverDiverged {
                    residual: f64::NAN,
                    iterations: 0,
                }
            })?;
            Ok(beta[1].exp())
        };
        (slope(lin)?, slope(free)?)
    } else {
        (rho_hat, rho_hat)
    };
    let rho_lo = rho_hat.max(rho_linear).min(1.0);
    let rho_hi = rho_free.max(rho_lo).min(1.0);
    Ok(SpectralEstimate {
        graph: graph.label(),
        tmax,
        returns,
        roots,
        rho_hat,
        rho_linear,
        rho_free,
        rho_lo,
        rho_hi,
        lambda_hat: 1.0 - rho_hat,
        lambda_pessimistic: 1.0 - rho_hi,
    })
}

/// `|p_quot^j(o,o) - sum_k p_base^j(o, R^k)|` with `R` the subgroup generator.
pub fn quotient_identity_check(base: &ImplicitGraph, quot: &ImplicitGraph, ctx: &CosetContext, j: usize) -> Result<f64> {
    if base.is_quotient() || quot.cover() != *base || quot.coset_context() != Some(ctx) {
        return Err(Error::Precondition("quotient must fold the given base by the given context".into()));
    }
    let lhs = return_probability(quot, j)?;
    let (ball, dist) = walk_distribution(base, j)?;
    let g = base.group();
    let step = ctx.generator().len();
    let kmax = (j / step + 1) as i64;
    let mut rhs = 0.0;
    for k in -kmax..=kmax {
        let w = g.power(ctx.generator(), k);
        if let Some(i) = ball.index_of(&w) {
            rhs += dist[i];
        }
    }
    Ok((lhs - rhs).abs())
}

/// Exit distributions `mu_j^{(u)}` for `j = 1..=jmax` around arbitrary
/// vertices, obtained by translating one template computed at the root of
/// the covering Cayley graph.
///
/// On a quotient the translated template is used only if the covering map
/// `z -> [u z]` is injective on `B(o, jmax)`; otherwise the distributions
/// are computed directly at `u`.
pub struct ExitOracle {
    graph: ImplicitGraph,
    jmax: usize,
    template_words: Vec<Word>,
    /// Per `j`: (template vertex index, mass).
    templates: Vec<Vec<(u32, f64)>>,
    cache: HashMap<Word, Vec<Vec<(Word, f64)>>>,
    direct: usize,
}

impl ExitOracle {
    pub fn new(graph: &ImplicitGraph, jmax: usize) -> Result<Self> {
        if jmax == 0 {
            return Err(Error::Precondition("jmax must be >= 1".into()));
        }
        let cover = graph.cover();
        let big = bfs_ball(&cover, &cover.root(), jmax)?;
        let mut templates = Vec::with_capacity(jmax);
        for j in 1..=jmax {
            let dist = harmonic_measure(&big.truncate(j))?;
            let start = big.sphere(j).start;
            templates.push(dist.mu.iter().enumerate().map(|(i, &m)| ((start + i) as u32, m)).collect());
        }
        Ok(ExitOracle {
            graph: graph.clone(),
            jmax,
            template_words: big.vertices().to_vec(),
            templates,
            cache: HashMap::new(),
            direct: 0,
        })
    }

    pub fn graph(&self) -> &ImplicitGraph {
        &self.graph
    }

    pub fn jmax(&self) -> usize {
        self.jmax
    }

    /// Number of centres whose distributions had to be computed directly.
    pub fn direct_computations(&self) -> usize {
        self.direct
    }

    /// `mu_j^{(u)}` for `j = 1..=jmax` (index `j - 1`).
    pub fn exits(&mut self, u: &Word) -> Result<&[Vec<(Word, f64)>]> {
        if !self.cache.contains_key(u) {
            let dists = self.compute(u)?;
            self.cache.insert(u.clone(), dists);
        }
        Ok(&self.cache[u])
    }

    fn compute(&mut self, u: &Word) -> Result<Vec<Vec<(Word, f64)>>> {
        let g = &self.graph;
        let mapped: Vec<Word> = self.template_words.iter().map(|z| g.translate(u, z)).collect();
        let injective = !g.is_quotient() || mapped.iter().collect::<HashSet<_>>().len() == mapped.len();
        if injective {
            return Ok(self
                .templates
                .iter()
                .map(|t| t.iter().map(|&(i, m)| (mapped[i as usize].clone(), m)).collect())
                .collect());
        }
        self.direct += 1;
        let big = bfs_ball(g, u, self.jmax)?;
        (1..=self.jmax)
            .map(|j| {
                let dist = harmonic_measure(&big.truncate(j))?;
                Ok(dist.vertices.into_iter().zip(dist.mu).collect())
            })
            .collect()
    }

    /// Exit mass of `mu_j^{(u)}` landing outside `a`.
    pub fn escape_mass(&mut self, a: &IndexSet<Word>, u: &Word, j: usize) -> Result<f64> {
        if j == 0 || j > self.jmax {
            return Err(Error::Precondition(format!("j = {j} outside 1..={}", self.jmax)));
        }
        Ok(self.exits(u)?[j - 1].iter().filter(|(y, _)| !a.contains(y)).map(|(_, m)| m).sum())
    }

    /// `P[X_1 = u through one given slot, X_{tau_j} not in A | X_0 = x]`.
    pub fn beta(&mut self, a: &IndexSet<Word>, x: &Word, u: &Word, j: usize) -> Result<f64> {
        if !a.contains(x) {
            return Err(Error::Precondition(format!("{x} is not in A")));
        }
        if !self.graph.neighbors(x).contains(u) {
            return Err(Error::Precondition(format!("{u} is not adjacent to {x}")));
        }
        Ok(self.escape_mass(a, u, j)? / self.graph.degree() as f64)
    }

    /// True when the edge into `u` has `beta >= alpha` for every `j <= n`.
    pub fn is_nice(&mut self, a: &IndexSet<Word>, u: &Word, alpha: f64, n: usize) -> Result<bool> {
        let d = self.graph.degree() as f64;
        for j in 1..=n {
            if self.escape_mass(a, u, j)? / d < alpha {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

/// One-off evaluation of `beta_{(x,u,j)}`.
pub fn nice_beta(graph: &ImplicitGraph, a: &IndexSet<Word>, x: &Word, u: &Word, j: usize) -> Result<f64> {
    ExitOracle::new(graph, j)?.beta(a, x, u, j)
}

/// Directed edges `(x, u)` with `x` in `A` (counted per neighbour slot) that
/// are `(alpha, A, nmax)`-nice.
pub fn nice_edge_count(graph: &ImplicitGraph, a: &IndexSet<Word>, alpha: f64, nmax: usize) -> Result<usize> {
    let mut oracle = ExitOracle::new(graph, nmax)?;
    nice_edge_count_with(&mut oracle, a, alpha, nmax)
}

pub fn nice_edge_count_with(oracle: &mut ExitOracle, a: &IndexSet<Word>, alpha: f64, nmax: usize) -> Result<usize> {
    if a.is_empty() {
        return Err(Error::Precondition("A must be nonempty".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Precondition(format!("alpha = {alpha} outside (0, 1)")));
    }
    if nmax == 0 || nmax > oracle.jmax() {
        return Err(Error::Precondition(format!("nmax = {nmax} outside 1..={}", oracle.jmax())));
    }
    let graph = oracle.graph().clone();
    let mut count = 0;
    for x in a {
        for u in graph.neighbors(x) {
            if oracle.is_nice(a, &u, alpha, nmax)? {
                count += 1;
            }
        }
    }
    Ok(count)
}
