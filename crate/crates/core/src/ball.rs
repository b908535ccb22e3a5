//! Explicit balls, rooted-ball isomorphism and the local agreement radius.

use std::collections::HashMap;
use std::ops::Range;

use crate::error::{Error, Result};
use crate::graph::{EdgeKey, HalfEdge, ImplicitGraph};
use crate::group::Word;

/// Marker for "no vertex" / "no edge" in slot tables.
pub const NONE: u32 = u32::MAX;

pub const DEFAULT_VERTEX_CAP: usize = 2_000_000;

/// Step budget of the isomorphism search.
pub const DEFAULT_ISO_STEPS: u64 = 10_000_000;

/// An edge of a ball between `a` (through slot `a_slot`) and `b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BallEdge {
    pub a: u32,
    pub a_slot: u32,
    pub b: u32,
    pub b_slot: u32,
    /// [`EdgeKey::stable_hash`] of the edge.
    pub hash: u64,
}

/// Induced subgraph on `B(root, radius)`, vertices in BFS order so each
/// sphere is a contiguous index range.
#[derive(Debug, Clone)]
pub struct Ball {
    root: Word,
    radius: usize,
    degree: usize,
    vertices: Vec<Word>,
    index: HashMap<Word, u32>,
    level: Vec<u32>,
    level_start: Vec<usize>,
    slots: Vec<u32>,
    slot_edge: Vec<u32>,
    edges: Vec<BallEdge>,
    self_loops: usize,
}

pub fn bfs_ball(graph: &ImplicitGraph, root: &Word, radius: usize) -> Result<Ball> {
    bfs_ball_capped(graph, root, radius, DEFAULT_VERTEX_CAP)
}

pub fn bfs_ball_capped(graph: &ImplicitGraph, root: &Word, radius: usize, cap: usize) -> Result<Ball> {
    let d = graph.degree();
    let root = graph.vertex(root);
    let mut vertices = vec![root.clone()];
    let mut index = HashMap::new();
    index.insert(root.clone(), 0u32);
    let mut level = vec![0u32];
    let mut slots = Vec::new();
    let mut i = 0;
    while i < vertices.len() {
        let li = level[i] as usize;
        for w in graph.neighbors(&vertices[i]) {
            let j = match index.get(&w) {
                Some(&j) => j,
                None if li < radius => {
                    if vertices.len() >= cap {
                        return Err(Error::BallTooLarge { radius, cap });
                    }
                    let j = vertices.len() as u32;
                    index.insert(w.clone(), j);
                    vertices.push(w);
                    level.push(li as u32 + 1);
                    j
                }
                None => NONE,
            };
            slots.push(j);
        }
        i += 1;
    }
    let mut level_start = vec![0usize; radius + 2];
    for &l in &level {
        level_start[l as usize + 1] += 1;
    }
    for j in 1..level_start.len() {
        level_start[j] += level_start[j - 1];
    }

    let n = vertices.len();
    let mut slot_edge = vec![NONE; n * d];
    let mut edges = Vec::new();
    let mut self_loops = 0;
    for i in 0..n {
        for s in 0..d {
            let j = slots[i * d + s];
            if j == NONE || slot_edge[i * d + s] != NONE {
                continue;
            }
            if j as usize == i {
                self_loops += 1;
                continue;
            }
            let k = slots[i * d..i * d + s].iter().filter(|&&x| x == j).count();
            let t = (0..d)
                .filter(|&t| slots[j as usize * d + t] == i as u32)
                .nth(k)
                .expect("neighbour relation is symmetric");
            let key = EdgeKey::new(
                HalfEdge {
                    vertex: vertices[i].clone(),
                    slot: s as u32,
                },
                HalfEdge {
                    vertex: vertices[j as usize].clone(),
                    slot: t as u32,
                },
            );
            let e = edges.len() as u32;
            slot_edge[i * d + s] = e;
            slot_edge[j as usize * d + t] = e;
            edges.push(BallEdge {
                a: i as u32,
                a_slot: s as u32,
                b: j,
                b_slot: t as u32,
                hash: key.stable_hash(),
            });
        }
    }
    if self_loops > 0 {
        log::warn!("{self_loops} self-loop slots in B({root}, {radius}); excluded from the edge set");
    }
    Ok(Ball {
        root,
        radius,
        degree: d,
        vertices,
        index,
        level,
        level_start,
        slots,
        slot_edge,
        edges,
        self_loops,
    })
}

impl Ball {
    pub fn root(&self) -> &Word {
        &self.root
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    /// Degree of the underlying graph (slots per vertex).
    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn vertices(&self) -> &[Word] {
        &self.vertices
    }

    pub fn vertex(&self, i: usize) -> &Word {
        &self.vertices[i]
    }

    pub fn index_of(&self, w: &Word) -> Option<usize> {
        self.index.get(w).map(|&i| i as usize)
    }

    pub fn level(&self, i: usize) -> usize {
        self.level[i] as usize
    }

    /// Index range of the vertices at distance exactly `j` from the root.
    pub fn sphere(&self, j: usize) -> Range<usize> {
        if j > self.radius {
            return self.len()..self.len();
        }
        self.level_start[j]..self.level_start[j + 1]
    }

    pub fn level_sizes(&self) -> Vec<usize> {
        (0..=self.radius).map(|j| self.sphere(j).len()).collect()
    }

    /// Neighbour indices of vertex `i` by slot; [`NONE`] outside the ball.
    pub fn slots(&self, i: usize) -> &[u32] {
        &self.slots[i * self.degree..(i + 1) * self.degree]
    }

    /// Edge index used by each slot of `i`; [`NONE`] outside the ball or for a self-loop.
    pub fn slot_edges(&self, i: usize) -> &[u32] {
        &self.slot_edge[i * self.degree..(i + 1) * self.degree]
    }

    pub fn edges(&self) -> &[BallEdge] {
        &self.edges
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn self_loop_slots(&self) -> usize {
        self.self_loops
    }

    pub fn edge_key(&self, e: usize) -> EdgeKey {
        let be = &self.edges[e];
        EdgeKey::new(
            HalfEdge {
                vertex: self.vertices[be.a as usize].clone(),
                slot: be.a_slot,
            },
            HalfEdge {
                vertex: self.vertices[be.b as usize].clone(),
                slot: be.b_slot,
            },
        )
    }

    /// Per level `j`: (edges with both ends on level `j`, edges between levels `j` and `j-1`).
    pub fn level_edge_counts(&self) -> Vec<(usize, usize)> {
        let mut out = vec![(0, 0); self.radius + 1];
        for e in &self.edges {
            let (la, lb) = (self.level[e.a as usize], self.level[e.b as usize]);
            if la == lb {
                out[la as usize].0 += 1;
            } else {
                out[la.max(lb) as usize].1 += 1;
            }
        }
        out
    }

    /// The sub-ball of radius `r <= radius`.
    pub fn truncate(&self, r: usize) -> Ball {
        assert!(r <= self.radius, "cannot truncate radius {} to {r}", self.radius);
        let cut = self.level_start[r + 1];
        let d = self.degree;
        let mut remap = vec![NONE; self.edges.len()];
        let mut edges = Vec::new();
        for (k, e) in self.edges.iter().enumerate() {
            if (e.a as usize) < cut && (e.b as usize) < cut {
                remap[k] = edges.len() as u32;
                edges.push(*e);
            }
        }
        let slots: Vec<u32> = self.slots[..cut * d]
            .iter()
            .map(|&j| if j != NONE && (j as usize) < cut { j } else { NONE })
            .collect();
        let slot_edge = self.slot_edge[..cut * d]
            .iter()
            .map(|&e| if e == NONE { NONE } else { remap[e as usize] })
            .collect();
        let vertices = self.vertices[..cut].to_vec();
        let self_loops = (0..cut)
            .map(|i| slots[i * d..(i + 1) * d].iter().filter(|&&j| j == i as u32).count())
            .sum();
        Ball {
            root: self.root.clone(),
            radius: r,
            degree: d,
            index: vertices.iter().enumerate().map(|(i, w)| (w.clone(), i as u32)).collect(),
            vertices,
            level: self.level[..cut].to_vec(),
            level_start: self.level_start[..r + 2].to_vec(),
            slots,
            slot_edge,
            edges,
            self_loops,
        }
    }

    /// Sorted `(neighbour, multiplicity)` lists without self-loops, and the
    /// self-loop slot count of each vertex.
    fn multi_adjacency(&self) -> (Vec<Vec<(u32, u32)>>, Vec<u32>) {
        let mut adj = Vec::with_capacity(self.len());
        let mut loops = Vec::with_capacity(self.len());
        for i in 0..self.len() {
            let mut ns: Vec<u32> = self.slots(i).iter().copied().filter(|&j| j != NONE).collect();
            ns.sort_unstable();
            let mut list: Vec<(u32, u32)> = Vec::new();
            let mut l = 0;
            for j in ns {
                if j == i as u32 {
                    l += 1;
                } else if let Some(last) = list.last_mut().filter(|x| x.0 == j) {
                    last.1 += 1;
                } else {
                    list.push((j, 1));
                }
            }
            adj.push(list);
            loops.push(l);
        }
        (adj, loops)
    }

    /// Level vertex counts and level edge counts.
    pub fn fingerprint(&self) -> (Vec<usize>, Vec<(usize, usize)>) {
        (self.level_sizes(), self.level_edge_counts())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct IsoOptions {
    pub fast_path: bool,
    pub max_steps: u64,
}

impl Default for IsoOptions {
    fn default() -> Self {
        IsoOptions {
            fast_path: true,
            max_steps: DEFAULT_ISO_STEPS,
        }
    }
}

/// Decides whether a root-preserving isomorphism exists. Returns
/// [`Error::Undecided`] when the step budget runs out.
pub fn rooted_isomorphic(b1: &Ball, b2: &Ball) -> Result<bool> {
    rooted_isomorphic_with(b1, b2, IsoOptions::default())
}

pub fn rooted_isomorphic_with(b1: &Ball, b2: &Ball, opts: IsoOptions) -> Result<bool> {
    if b1.radius != b2.radius {
        return Err(Error::Precondition(format!(
            "isomorphism test needs equal radii, got {} and {}",
            b1.radius, b2.radius
        )));
    }
    if opts.fast_path && b1.fingerprint() != b2.fingerprint() {
        return Ok(false);
    }
    if b1.len() != b2.len() {
        return Ok(false);
    }
    let (adj1, loops1) = b1.multi_adjacency();
    let (adj2, loops2) = b2.multi_adjacency();
    let (c1, c2) = refine_colors(b1, &adj1, &loops1, b2, &adj2, &loops2);
    let mut h1 = c1.clone();
    let mut h2 = c2.clone();
    h1.sort_unstable();
    h2.sort_unstable();
    if h1 != h2 {
        return Ok(false);
    }
    backtrack(&adj1, &adj2, &c1, &c2, b1.radius, opts.max_steps)
}

/// Joint colour refinement of both balls, starting from (level, in-ball
/// degree, self-loops). Equal final colours are necessary for any
/// isomorphism to match two vertices.
fn refine_colors(
    b1: &Ball,
    adj1: &[Vec<(u32, u32)>],
    loops1: &[u32],
    b2: &Ball,
    adj2: &[Vec<(u32, u32)>],
    loops2: &[u32],
) -> (Vec<u32>, Vec<u32>) {
    let mut table: HashMap<(u32, u32, u32), u32> = HashMap::new();
    let mut init = |b: &Ball, adj: &[Vec<(u32, u32)>], loops: &[u32]| -> Vec<u32> {
        (0..b.len())
            .map(|i| {
                let deg: u32 = adj[i].iter().map(|x| x.1).sum();
                let key = (b.level[i], deg, loops[i]);
                let next = table.len() as u32;
                *table.entry(key).or_insert(next)
            })
            .collect()
    };
    let mut c1 = init(b1, adj1, loops1);
    let mut c2 = init(b2, adj2, loops2);
    let mut classes = table.len();
    loop {
        let mut table: HashMap<(u32, Vec<(u32, u32)>), u32> = HashMap::new();
        let mut step = |c: &[u32], adj: &[Vec<(u32, u32)>]| -> Vec<u32> {
            (0..c.len())
                .map(|i| {
                    let mut sig: Vec<(u32, u32)> = adj[i].iter().map(|&(j, m)| (c[j as usize], m)).collect();
                    sig.sort_unstable();
                    let next = table.len() as u32;
                    *table.entry((c[i], sig)).or_insert(next)
                })
                .collect()
        };
        let n1 = step(&c1, adj1);
        let n2 = step(&c2, adj2);
        let now = table.len();
        c1 = n1;
        c2 = n2;
        if now == classes {
            return (c1, c2);
        }
        classes = now;
    }
}

fn multiplicity(adj: &[(u32, u32)], j: u32) -> u32 {
    adj.binary_search_by_key(&j, |x| x.0).map(|k| adj[k].1).unwrap_or(0)
}

/// Depth-first matching in BFS order of the first ball. Each vertex is
/// matched among the unused neighbours of its parent's image that carry the
/// same colour and agree on multiplicities with every matched neighbour.
fn backtrack(
    adj1: &[Vec<(u32, u32)>],
    adj2: &[Vec<(u32, u32)>],
    c1: &[u32],
    c2: &[u32],
    radius: usize,
    max_steps: u64,
) -> Result<bool> {
    let n = adj1.len();
    if n == 1 {
        return Ok(true);
    }
    let parent: Vec<u32> = (0..n)
        .map(|v| adj1[v].iter().map(|x| x.0).filter(|&u| (u as usize) < v).min().unwrap_or(NONE))
        .collect();
    let mut f = vec![NONE; n];
    let mut used = vec![false; n];
    f[0] = 0;
    used[0] = true;
    let candidates = |v: usize, f: &[u32], used: &[bool]| -> Vec<u32> {
        let p = parent[v];
        adj2[f[p as usize] as usize]
            .iter()
            .map(|x| x.0)
            .filter(|&w| !used[w as usize] && c2[w as usize] == c1[v])
            .collect()
    };
    let consistent = |v: usize, w: u32, f: &[u32], used: &[bool]| -> bool {
        let mut mapped1 = 0;
        for &(x, m) in &adj1[v] {
            if (x as usize) < v {
                if multiplicity(&adj2[w as usize], f[x as usize]) != m {
                    return false;
                }
                mapped1 += m;
            }
        }
        let mapped2: u32 = adj2[w as usize].iter().filter(|x| used[x.0 as usize]).map(|x| x.1).sum();
        mapped1 == mapped2
    };
    let mut cands: Vec<Vec<u32>> = vec![Vec::new(); n];
    let mut pos = vec![0usize; n];
    let mut v = 1;
    cands[1] = candidates(1, &f, &used);
    let mut steps = 0u64;
    loop {
        steps += 1;
        if steps > max_steps {
            return Err(Error::Undecided { radius, steps });
        }
        if pos[v] < cands[v].len() {
            let w = cands[v][pos[v]];
            pos[v] += 1;
            if consistent(v, w, &f, &used) {
                f[v] = w;
                used[w as usize] = true;
                v += 1;
                if v == n {
                    return Ok(true);
                }
                cands[v] = candidates(v, &f, &used);
                pos[v] = 0;
            }
        } else {
            v -= 1;
            if v == 0 {
                return Ok(false);
            }
            used[f[v] as usize] = false;
            f[v] = NONE;
        }
    }
}

/// Largest agreeing radius, flagged when it only reaches the search cap.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LocalRadius {
    pub radius: usize,
    pub lower_bound: bool,
}

/// Largest `r <= rmax` with `B_{g1}(root, r)` and `B_{g2}(root, r)` rooted isomorphic.
pub fn local_radius(g1: &ImplicitGraph, g2: &ImplicitGraph, rmax: usize) -> Result<LocalRadius> {
    let big1 = bfs_ball(g1, &g1.root(), rmax)?;
    let big2 = bfs_ball(g2, &g2.root(), rmax)?;
    let mut agree = Vec::with_capacity(rmax + 1);
    for r in 0..=rmax {
        agree.push(rooted_isomorphic(&big1.truncate(r), &big2.truncate(r))?);
    }
    let first_fail = agree.iter().position(|&a| !a);
    if let Some(k) = first_fail {
        assert!(
            agree[k..].iter().all(|&a| !a),
            "ball agreement is not monotone in the radius: {agree:?}"
        );
        assert!(k > 0, "radius-0 balls always agree");
        Ok(LocalRadius {
            radius: k - 1,
            lower_bound: false,
        })
    } else {
        Ok(LocalRadius {
            radius: rmax,
            lower_bound: true,
        })
    }
}
