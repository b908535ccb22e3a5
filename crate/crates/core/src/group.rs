//! Normal-form arithmetic in free products of finite cyclic groups.
//!
//! An element of `Z_{k_1} * ... * Z_{k_m}` is written uniquely as an
//! alternating sequence of non-identity letters, one factor per letter and no
//! two neighbouring letters from the same factor. [`Word`] stores that normal
//! form; [`FreeProduct`] knows the factor orders and does the reduction.
//!
//! [`CosetContext`] canonicalizes the orbit `{R^k w : k in Z}` of a word under
//! left multiplication by a fixed infinite-order element `R = r^n`. Those
//! orbits are the vertices of the quotient graphs built in [`crate::graph`].

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One letter of a normal form: a non-identity element of one cyclic factor.
///
/// Field order matters: the derived `Ord` is (factor, element), which is the
/// tie-break used by coset canonical forms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Letter {
    pub factor: u16,
    pub elem: u16,
}

impl Letter {
    pub const fn new(factor: u16, elem: u16) -> Self {
        Letter { factor, elem }
    }
}

/// A group element in alternating normal form. The empty word is the identity.
///
/// Words order by length first and then lexicographically by letter.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Word(Vec<Letter>);

impl Word {
    pub fn identity() -> Self {
        Word(Vec::new())
    }

    /// Wraps letters without reducing them. Use [`FreeProduct::word`] for
    /// untrusted input.
    pub fn from_letters_unchecked(letters: Vec<Letter>) -> Self {
        Word(letters)
    }

    pub fn letters(&self) -> &[Letter] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn first(&self) -> Option<Letter> {
        self.0.first().copied()
    }

    pub fn last(&self) -> Option<Letter> {
        self.0.last().copied()
    }

    /// Vertex-key serialization: `u32` letter count then `(u16 factor, u16
    /// element)` per letter, all little-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + 4 * self.0.len());
        out.extend_from_slice(&(self.0.len() as u32).to_le_bytes());
        for l in &self.0 {
            out.extend_from_slice(&l.factor.to_le_bytes());
            out.extend_from_slice(&l.elem.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 {
            return Err(Error::NotNormal("truncated length prefix".into()));
        }
        let n = u32::from_le_bytes(bytes[..4].try_into().unwrap()) as usize;
        if bytes.len() != 4 + 4 * n {
            return Err(Error::NotNormal(format!(
                "expected {} bytes for {n} letters, got {}",
                4 + 4 * n,
                bytes.len()
            )));
        }
        let letters = bytes[4..]
            .chunks_exact(4)
            .map(|c| Letter {
                factor: u16::from_le_bytes([c[0], c[1]]),
                elem: u16::from_le_bytes([c[2], c[3]]),
            })
            .collect();
        Ok(Word(letters))
    }

    pub fn to_hex(&self) -> String {
        self.to_bytes().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn from_hex(s: &str) -> Result<Self> {
        if !s.len().is_multiple_of(2) {
            return Err(Error::NotNormal(format!("odd-length hex key {s:?}")));
        }
        let bytes = (0..s.len())
            .step_by(2)
            .map(|i| u8::from_str_radix(&s[i..i + 2], 16))
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::NotNormal(format!("bad hex key {s:?}: {e}")))?;
        Word::from_bytes(&bytes)
    }

    /// Parses a letter list such as `"0:1,1:2"` (factor:element pairs).
    pub fn parse_letters(s: &str) -> Result<Vec<Letter>> {
        s.split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(|t| {
                let (f, e) = t
                    .split_once(':')
                    .ok_or_else(|| Error::NotNormal(format!("letter {t:?} is not factor:element")))?;
                let factor = f.trim().parse().map_err(|_| Error::NotNormal(format!("bad factor in {t:?}")))?;
                let elem = e.trim().parse().map_err(|_| Error::NotNormal(format!("bad element in {t:?}")))?;
                Ok(Letter { factor, elem })
            })
            .collect()
    }
}

impl Ord for Word {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.len().cmp(&other.0.len()).then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for Word {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("ε");
        }
        for l in &self.0 {
            if l.factor < 26 {
                write!(f, "{}", (b'a' + l.factor as u8) as char)?;
            } else {
                write!(f, "g{}", l.factor)?;
            }
            if l.elem > 1 {
                write!(f, "^{}", l.elem)?;
            }
        }
        Ok(())
    }
}

/// A cyclic factor `Z_order`. Its Cayley graph on all non-identity elements is
/// the complete graph on `order` vertices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactorSpec {
    pub order: u16,
}

impl FactorSpec {
    pub fn new(order: u16) -> Result<Self> {
        if order < 2 {
            return Err(Error::InvalidGroup(format!("factor order {order} < 2")));
        }
        Ok(FactorSpec { order })
    }
}

/// Free product of finite cyclic groups.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FreeProduct {
    orders: Vec<u16>,
}

impl FreeProduct {
    pub fn new(factors: &[FactorSpec]) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::InvalidGroup("no factors".into()));
        }
        for f in factors {
            FactorSpec::new(f.order)?;
        }
        Ok(FreeProduct {
            orders: factors.iter().map(|f| f.order).collect(),
        })
    }

    pub fn from_orders(orders: &[u16]) -> Result<Self> {
        let specs = orders.iter().map(|&o| FactorSpec::new(o)).collect::<Result<Vec<_>>>()?;
        Self::new(&specs)
    }

    pub fn orders(&self) -> &[u16] {
        &self.orders
    }

    pub fn num_factors(&self) -> usize {
        self.orders.len()
    }

    /// All non-identity letters, factor-major, element ascending.
    pub fn generators(&self) -> Vec<Letter> {
        self.orders
            .iter()
            .enumerate()
            .flat_map(|(f, &o)| (1..o).map(move |e| Letter::new(f as u16, e)))
            .collect()
    }

    pub fn letter_inverse(&self, l: Letter) -> Letter {
        let o = self.orders[l.factor as usize];
        Letter::new(l.factor, o - l.elem)
    }

    pub fn is_normal(&self, w: &Word) -> bool {
        let ok_letters = w.0.iter().all(|l| {
            (l.factor as usize) < self.orders.len() && l.elem != 0 && l.elem < self.orders[l.factor as usize]
        });
        ok_letters && w.0.windows(2).all(|p| p[0].factor != p[1].factor)
    }

    /// Reduces an arbitrary letter sequence to normal form.
    pub fn word(&self, letters: &[Letter]) -> Result<Word> {
        let mut out = Word::identity();
        for &l in letters {
            let o = *self
                .orders
                .get(l.factor as usize)
                .ok_or_else(|| Error::NotNormal(format!("factor {} out of range", l.factor)))?;
            let e = l.elem % o;
            if e != 0 {
                self.push_letter(&mut out.0, Letter::new(l.factor, e));
            }
        }
        Ok(out)
    }

    fn push_letter(&self, letters: &mut Vec<Letter>, l: Letter) {
        match letters.last_mut() {
            Some(last) if last.factor == l.factor => {
                let o = self.orders[l.factor as usize];
                let e = (last.elem + l.elem) % o;
                if e == 0 {
                    letters.pop();
                } else {
                    last.elem = e;
                }
            }
            _ => letters.push(l),
        }
    }

    /// Normal form of `a * b`. Reduction only happens at the junction.
    pub fn multiply(&self, a: &Word, b: &Word) -> Word {
        let mut out = Vec::with_capacity(a.len() + b.len());
        out.extend_from_slice(&a.0);
        let mut rest = 0;
        for (i, &l) in b.0.iter().enumerate() {
            rest = i + 1;
            match out.last().copied() {
                Some(last) if last.factor == l.factor => {
                    let o = self.orders[l.factor as usize];
                    let e = (last.elem + l.elem) % o;
                    out.pop();
                    if e != 0 {
                        out.push(Letter::new(l.factor, e));
                        break;
                    }
                }
                _ => {
                    rest = i;
                    break;
                }
            }
        }
        out.extend_from_slice(&b.0[rest..]);
        Word(out)
    }

    pub fn mul_letter(&self, w: &Word, l: Letter) -> Word {
        let mut out = w.0.clone();
        self.push_letter(&mut out, l);
        Word(out)
    }

    pub fn inverse(&self, w: &Word) -> Word {
        Word(w.0.iter().rev().map(|&l| self.letter_inverse(l)).collect())
    }

    pub fn power(&self, r: &Word, k: i64) -> Word {
        let base = if k < 0 { self.inverse(r) } else { r.clone() };
        let mut acc = Word::identity();
        for _ in 0..k.unsigned_abs() {
            acc = self.multiply(&acc, &base);
        }
        acc
    }
}

/// Quotient data for the subgroup `<r^n>`: vertices of the quotient are the
/// orbits `{r^{nk} w}` of the left action.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CosetContext {
    group: FreeProduct,
    r: Word,
    n: u32,
    rn: Word,
    rn_inv: Word,
}

/// Range of exponents checked for strict length growth at construction.
const GROWTH_CHECK: i64 = 10;

impl CosetContext {
    pub fn new(group: &FreeProduct, r: Word, n: u32) -> Result<Self> {
        if !group.is_normal(&r) {
            return Err(Error::NotNormal(format!("relator {r}")));
        }
        if n == 0 {
            return Err(Error::InvalidCoset("quotient index must be >= 1".into()));
        }
        if r.len() < 2 {
            return Err(Error::InvalidCoset(format!("relator {r} has finite order")));
        }
        if r.first().unwrap().factor == r.last().unwrap().factor {
            return Err(Error::InvalidCoset(format!("relator {r} is not cyclically reduced")));
        }
        let mut prev = 0;
        for k in 1..=GROWTH_CHECK {
            let len = group.power(&r, k).len();
            if len <= prev {
                return Err(Error::InvalidCoset(format!("|{r}^{k}| = {len} does not grow")));
            }
            prev = len;
        }
        let rn = group.power(&r, n as i64);
        if rn.is_empty() {
            return Err(Error::InvalidCoset(format!("{r}^{n} is trivial")));
        }
        let rn_inv = group.inverse(&rn);
        Ok(CosetContext {
            group: group.clone(),
            r,
            n,
            rn,
            rn_inv,
        })
    }

    pub fn group(&self) -> &FreeProduct {
        &self.group
    }

    pub fn relator(&self) -> &Word {
        &self.r
    }

    pub fn index(&self) -> u32 {
        self.n
    }

    /// The subgroup generator `r^n`.
    pub fn generator(&self) -> &Word {
        &self.rn
    }

    /// Minimal representative of `{r^{nk} w : k in Z}` in (length, letters)
    /// order.
    ///
    /// `r` is cyclically reduced, so `|R^k| = |k||R|` for `R = r^n` and
    /// `|R^k w| >= |k||R| - |w|`. Exponents beyond `2|w|/|R| + 1` therefore
    /// cannot beat `w` itself. Within that range a direction is abandoned as
    /// soon as a multiplication stops interacting with the front of the word:
    /// from then on every further step adds exactly `|R|` letters.
    pub fn canonical(&self, w: &Word) -> Word {
        let kmax = 2 * w.len() / self.rn.len() + 1;
        let mut best = w.clone();
        for step in [&self.rn, &self.rn_inv] {
            let mut cur = w.clone();
            for _ in 0..kmax {
                let next = self.group.multiply(step, &cur);
                let interacted = next.len() < cur.len() + step.len();
                if next < best {
                    best = next.clone();
                }
                if !interacted {
                    break;
                }
                cur = next;
            }
        }
        best
    }
}
