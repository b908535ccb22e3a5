#![allow(dead_code)]

use indexmap::IndexSet;
use pclocal::graph::{FamilyDescriptor, ImplicitGraph};
use pclocal::group::Word;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn fam(s: &str) -> ImplicitGraph {
    FamilyDescriptor::parse(s).unwrap().build().unwrap()
}

pub fn quot(s: &str, n: u32) -> ImplicitGraph {
    FamilyDescriptor::parse(s).unwrap().with_quotient(n).build().unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Endpoint of a random walk of length `len` from the root.
pub fn random_vertex(g: &ImplicitGraph, len: usize, rng: &mut ChaCha8Rng) -> Word {
    let mut v = g.root();
    for _ in 0..len {
        let nv = g.neighbors(&v);
        v = nv[rng.gen_range(0..nv.len())].clone();
    }
    v
}

/// Connected vertex set of size `size` grown from the root by attaching
/// random neighbours of random members.
pub fn random_connected_set(g: &ImplicitGraph, size: usize, rng: &mut ChaCha8Rng) -> IndexSet<Word> {
    let mut a = IndexSet::new();
    a.insert(g.root());
    while a.len() < size {
        let x = a[rng.gen_range(0..a.len())].clone();
        let nx = g.neighbors(&x);
        let u = nx.choose(rng).unwrap();
        if *u != x {
            a.insert(u.clone());
        }
    }
    a
}
