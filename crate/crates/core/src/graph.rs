//! Implicit transitive graphs given by a neighbour oracle.
//!
//! Every graph here is a right Cayley graph of a free product of cyclic
//! groups (possibly with an enlarged generating set), optionally folded by
//! the left action of `<r^n>`. Vertices are normal-form [`Word`]s; in a
//! quotient they are orbit canonical forms.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::{CosetContext, FreeProduct, Letter, Word};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    /// `T_d` as the Cayley graph of `d` copies of `Z_2`.
    Tree,
    /// Cayley graph of a free product with all non-identity letters as generators.
    FreeProduct,
    /// `T_d` plus an edge between every pair of vertices at tree distance 2.
    ModifiedGrandparent,
}

/// Structural class of a vertex on a sphere around the root.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SphereClass {
    Uniform,
    /// Modified grandparent graph: odd tree distance from the root.
    OddTree,
    /// Modified grandparent graph: even tree distance from the root.
    EvenTree,
    /// Free product: factor of the last letter of the vertex word.
    LastFactor(u16),
    Unclassified,
}

impl fmt::Display for SphereClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SphereClass::Uniform => f.write_str("uniform"),
            SphereClass::OddTree => f.write_str("odd"),
            SphereClass::EvenTree => f.write_str("even"),
            SphereClass::LastFactor(k) => write!(f, "last{k}"),
            SphereClass::Unclassified => f.write_str("unclassified"),
        }
    }
}

/// One endpoint of an edge: a vertex and the neighbour slot the edge uses.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct HalfEdge {
    pub vertex: Word,
    pub slot: u32,
}

/// Identity of an undirected edge, with the two half-edges in sorted order.
///
/// In a multigraph the `k`-th copy of `u` in the neighbour list of `v` is
/// paired with the `k`-th copy of `v` in the neighbour list of `u`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EdgeKey {
    pub lo: HalfEdge,
    pub hi: HalfEdge,
}

impl EdgeKey {
    pub fn new(a: HalfEdge, b: HalfEdge) -> Self {
        if a <= b {
            EdgeKey { lo: a, hi: b }
        } else {
            EdgeKey { lo: b, hi: a }
        }
    }

    pub fn is_loop(&self) -> bool {
        self.lo.vertex == self.hi.vertex
    }

    /// Stable 64-bit hash, identical on every graph that produces this key.
    pub fn stable_hash(&self) -> u64 {
        let mut bytes = self.lo.vertex.to_bytes();
        bytes.extend_from_slice(&self.lo.slot.to_le_bytes());
        bytes.extend(self.hi.vertex.to_bytes());
        bytes.extend_from_slice(&self.hi.slot.to_le_bytes());
        rng::stable_hash(&bytes)
    }
}

impl fmt::Display for EdgeKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}-{}#{}", self.lo.vertex, self.lo.slot, self.hi.vertex, self.hi.slot)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImplicitGraph {
    kind: FamilyKind,
    group: FreeProduct,
    gens: Vec<Word>,
    quotient: Option<CosetContext>,
}

impl ImplicitGraph {
    /// Right Cayley graph of a free product with every non-identity letter as
    /// a generator.
    pub fn free_product(orders: &[u16]) -> Result<Self> {
        let group = FreeProduct::from_orders(orders)?;
        if orders.len() < 2 {
            return Err(Error::InvalidGraph(format!(
                "a single factor Z_{} gives a finite graph",
                orders.first().copied().unwrap_or(0)
            )));
        }
        if orders == [2, 2] {
            log::warn!("Z2*Z2 is the bi-infinite line, which is amenable");
        }
        let gens = group.generators().into_iter().map(|l| Word::from_letters_unchecked(vec![l])).collect();
        let kind = if orders.iter().all(|&o| o == 2) && orders.len() >= 3 {
            FamilyKind::Tree
        } else {
            FamilyKind::FreeProduct
        };
        Ok(ImplicitGraph {
            kind,
            group,
            gens,
            quotient: None,
        })
    }

    /// The `d`-regular tree.
    pub fn tree(d: usize) -> Result<Self> {
        if d < 3 {
            return Err(Error::InvalidGraph(format!("tree degree {d} < 3")));
        }
        Self::free_product(&vec![2; d])
    }

    /// Folds the graph by the left action of `<r^n>`.
    pub fn quotient(&self, ctx: CosetContext) -> Result<Self> {
        if self.quotient.is_some() {
            return Err(Error::InvalidGraph("graph is already a quotient".into()));
        }
        if ctx.group() != &self.group {
            return Err(Error::InvalidGraph("coset context uses a different group".into()));
        }
        Ok(ImplicitGraph {
            quotient: Some(ctx),
            ..self.clone()
        })
    }

    /// Adds edges between vertices at tree distance 2. Accepts `T_d` or a
    /// quotient of `T_d`.
    pub fn modified_grandparent(base: &ImplicitGraph) -> Result<Self> {
        if base.kind != FamilyKind::Tree {
            return Err(Error::InvalidGraph(format!(
                "modified grandparent needs a tree base, got {:?}",
                base.kind
            )));
        }
        let d = base.group.num_factors() as u16;
        let mut gens: Vec<Word> = (0..d).map(|i| Word::from_letters_unchecked(vec![Letter::new(i, 1)])).collect();
        for i in 0..d {
            for j in 0..d {
                if i != j {
                    gens.push(Word::from_letters_unchecked(vec![Letter::new(i, 1), Letter::new(j, 1)]));
                }
            }
        }
        Ok(ImplicitGraph {
            kind: FamilyKind::ModifiedGrandparent,
            group: base.group.clone(),
            gens,
            quotient: base.quotient.clone(),
        })
    }

    pub fn kind(&self) -> FamilyKind {
        self.kind
    }

    pub fn group(&self) -> &FreeProduct {
        &self.group
    }

    pub fn generators(&self) -> &[Word] {
        &self.gens
    }

    pub fn coset_context(&self) -> Option<&CosetContext> {
        self.quotient.as_ref()
    }

    pub fn is_quotient(&self) -> bool {
        self.quotient.is_some()
    }

    /// The unfolded Cayley graph this graph is a quotient of (itself if it is
    /// not a quotient).
    pub fn cover(&self) -> ImplicitGraph {
        ImplicitGraph {
            quotient: None,
            ..self.clone()
        }
    }

    pub fn degree(&self) -> usize {
        self.gens.len()
    }

    pub fn root(&self) -> Word {
        Word::identity()
    }

    /// Tree degree for tree-based families.
    pub fn tree_degree(&self) -> Option<usize> {
        match self.kind {
            FamilyKind::Tree | FamilyKind::ModifiedGrandparent => Some(self.group.num_factors()),
            FamilyKind::FreeProduct => None,
        }
    }

    /// Vertex representing the coset of `w` (identity map on Cayley graphs).
    pub fn vertex(&self, w: &Word) -> Word {
        match &self.quotient {
            Some(ctx) => ctx.canonical(w),
            None => w.clone(),
        }
    }

    /// Neighbour multiset of `v` in generator order.
    pub fn neighbors(&self, v: &Word) -> Vec<Word> {
        self.gens.iter().map(|g| self.vertex(&self.group.multiply(v, g))).collect()
    }

    /// Left translation `v -> g v`. An automorphism on Cayley graphs; on a
    /// quotient it is only the covering map composed with translation.
    pub fn translate(&self, g: &Word, v: &Word) -> Word {
        self.vertex(&self.group.multiply(g, v))
    }

    /// Key of the edge leaving `v` through neighbour slot `slot`.
    pub fn edge_key(&self, v: &Word, slot: usize) -> EdgeKey {
        let nv = self.neighbors(v);
        self.edge_key_with(v, &nv, slot)
    }

    /// As [`Self::edge_key`] with the neighbour list of `v` already computed.
    pub fn edge_key_with(&self, v: &Word, nv: &[Word], slot: usize) -> EdgeKey {
        let u = &nv[slot];
        let k = nv[..slot].iter().filter(|w| *w == u).count();
        let back = if u == v {
            slot
        } else {
            let nu = self.neighbors(u);
            nu.iter()
                .enumerate()
                .filter(|(_, w)| *w == v)
                .nth(k)
                .map(|(i, _)| i)
                .expect("neighbour relation is symmetric")
        };
        EdgeKey::new(
            HalfEdge {
                vertex: v.clone(),
                slot: slot as u32,
            },
            HalfEdge {
                vertex: u.clone(),
                slot: back as u32,
            },
        )
    }

    pub fn sphere_class(&self, v: &Word) -> SphereClass {
        match self.kind {
            FamilyKind::Tree => SphereClass::Uniform,
            FamilyKind::ModifiedGrandparent => {
                if v.len() % 2 == 1 {
                    SphereClass::OddTree
                } else {
                    SphereClass::EvenTree
                }
            }
            FamilyKind::FreeProduct => match v.last() {
                Some(l) => SphereClass::LastFactor(l.factor),
                None => SphereClass::Unclassified,
            },
        }
    }

    pub fn label(&self) -> String {
        let base = match self.kind {
            FamilyKind::Tree => format!("T{}", self.group.num_factors()),
            FamilyKind::FreeProduct => self
                .group
                .orders()
                .iter()
                .map(|o| format!("Z{o}"))
                .collect::<Vec<_>>()
                .join("*"),
            FamilyKind::ModifiedGrandparent => format!("MG(T{})", self.group.num_factors()),
        };
        match &self.quotient {
            Some(ctx) => format!("{base}/<({})^{}>", ctx.relator(), ctx.index()),
            None => base,
        }
    }
}

/// Structured description of a graph family, as used in experiment configs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FamilyDescriptor {
    pub family: FamilyKind,
    /// Factor orders. For trees and modified grandparent graphs, `d` copies of 2.
    pub orders: Vec<u16>,
    /// Relator `r` as (factor, element) letters. Defaults per family.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relator: Option<Vec<Letter>>,
    /// Quotient index `n`; absent for the unfolded graph.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quotient_n: Option<u32>,
}

impl FamilyDescriptor {
    /// Parses `t3`, `tree:4`, `z2z3`, `free:2,3,3`, `mgp:3`.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let bad = || Error::InvalidGraph(format!("unknown family {s:?}"));
        let (family, orders) = if let Some(d) = s.strip_prefix("tree:") {
            (FamilyKind::Tree, vec![2; d.parse::<usize>().map_err(|_| bad())?])
        } else if let Some(d) = s.strip_prefix("mgp:") {
            (FamilyKind::ModifiedGrandparent, vec![2; d.parse::<usize>().map_err(|_| bad())?])
        } else if let Some(list) = s.strip_prefix("free:") {
            let orders = list
                .split(',')
                .map(|t| t.trim().parse::<u16>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| bad())?;
            (FamilyKind::FreeProduct, orders)
        } else if let Some(d) = s.strip_prefix('t') {
            (FamilyKind::Tree, vec![2; d.parse::<usize>().map_err(|_| bad())?])
        } else if s == "z2z3" {
            (FamilyKind::FreeProduct, vec![2, 3])
        } else {
            return Err(bad());
        };
        let family = if family == FamilyKind::FreeProduct && orders.len() >= 3 && orders.iter().all(|&o| o == 2) {
            FamilyKind::Tree
        } else {
            family
        };
        Ok(FamilyDescriptor {
            family,
            orders,
            relator: None,
            quotient_n: None,
        })
    }

    pub fn with_quotient(&self, n: u32) -> Self {
        FamilyDescriptor {
            quotient_n: Some(n),
            ..self.clone()
        }
    }

    pub fn base(&self) -> Self {
        FamilyDescriptor {
            quotient_n: None,
            ..self.clone()
        }
    }

    /// Relator word and exponent for quotient index `n`.
    ///
    /// Tree-based families default to `r = a_1 a_2` with exponent `n + 1`;
    /// other free products to `r = ab` (first letters of the first two
    /// factors) with exponent `n`. An explicit relator always uses exponent `n`.
    pub fn relator_power(&self, n: u32) -> (Vec<Letter>, u32) {
        match &self.relator {
            Some(r) => (r.clone(), n),
            None => {
                let r = vec![Letter::new(0, 1), Letter::new(1, 1)];
                match self.family {
                    FamilyKind::Tree | FamilyKind::ModifiedGrandparent => (r, n + 1),
                    FamilyKind::FreeProduct => (r, n),
                }
            }
        }
    }

    pub fn build(&self) -> Result<ImplicitGraph> {
        let cayley = match self.family {
            FamilyKind::Tree => {
                if self.orders.iter().any(|&o| o != 2) {
                    return Err(Error::InvalidGraph("tree family needs order-2 factors".into()));
                }
                ImplicitGraph::tree(self.orders.len())?
            }
            FamilyKind::FreeProduct => ImplicitGraph::free_product(&self.orders)?,
            FamilyKind::ModifiedGrandparent => {
                if self.orders.iter().any(|&o| o != 2) {
                    return Err(Error::InvalidGraph("modified grandparent needs order-2 factors".into()));
                }
                ImplicitGraph::modified_grandparent(&ImplicitGraph::tree(self.orders.len())?)?
            }
        };
        match self.quotient_n {
            None => Ok(cayley),
            Some(n) => {
                let (letters, exp) = self.relator_power(n);
                let r = cayley.group().word(&letters)?;
                if !cayley.group().is_normal(&Word::from_letters_unchecked(letters.clone())) {
                    return Err(Error::NotNormal(format!("relator {letters:?}")));
                }
                let ctx = CosetContext::new(cayley.group(), r, exp)?;
                cayley.quotient(ctx)
            }
        }
    }
}
