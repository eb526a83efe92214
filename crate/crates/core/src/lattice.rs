//! The pair lattice on which the two-walker dynamics lives.
//!
//! Sites are ordered walker pairs `(x1, x2)` with `1 ≤ x1 < x2 ≤ s`. The two
//! walkers are hard-core: a pair with `x1 == x2` cannot be constructed.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};

/// Chain length and impurity positions.
///
/// Link `a` (between sites `a` and `a+1`) carries `σ₁`, link `b` carries `σ₃`,
/// every other link carries the identity. With `free` set, every link carries
/// the identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct ChainConfig {
    s: usize,
    a: usize,
    b: usize,
    free: bool,
}

impl ChainConfig {
    /// Validates `1 < a < b < s` and `s ≥ 4`.
    pub fn new(s: usize, a: usize, b: usize, free: bool) -> Result<Self> {
        if s < 4 {
            return Err(Error::InvalidConfig(format!("chain length s = {s} must be at least 4")));
        }
        if !(1 < a && a < b && b < s) {
            return Err(Error::InvalidConfig(format!(
                "impurity positions must satisfy 1 < a < b < s, got a = {a}, b = {b}, s = {s}"
            )));
        }
        Ok(Self { s, a, b, free })
    }

    pub fn interacting(s: usize, a: usize, b: usize) -> Result<Self> {
        Self::new(s, a, b, false)
    }

    pub fn s(&self) -> usize {
        self.s
    }

    pub fn a(&self) -> usize {
        self.a
    }

    pub fn b(&self) -> usize {
        self.b
    }

    pub fn is_free(&self) -> bool {
        self.free
    }

    /// Same chain and impurity positions with every gate set to the identity.
    pub fn to_free(self) -> Self {
        Self { free: true, ..self }
    }

    pub fn to_interacting(self) -> Self {
        Self { free: false, ..self }
    }

    /// Number of pair sites, `s(s-1)/2`.
    pub fn num_sites(&self) -> usize {
        self.s * (self.s - 1) / 2
    }

    pub fn contains(&self, p: PairState) -> bool {
        p.x2 <= self.s
    }

    /// Checks that `p` lies on this chain's lattice.
    pub fn check_site(&self, p: PairState) -> Result<()> {
        if self.contains(p) {
            Ok(())
        } else {
            Err(Error::InvalidSite { site: p, s: self.s })
        }
    }
}

/// Positions of the two walkers, `1 ≤ x1 < x2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct PairState {
    x1: usize,
    x2: usize,
}

impl PairState {
    pub fn new(x1: usize, x2: usize) -> Result<Self> {
        if x1 >= 1 && x1 < x2 {
            Ok(Self { x1, x2 })
        } else {
            Err(Error::InvalidArgument(format!(
                "pair ({x1},{x2}) violates 1 <= x1 < x2"
            )))
        }
    }

    pub fn x1(&self) -> usize {
        self.x1
    }

    pub fn x2(&self) -> usize {
        self.x2
    }

    /// The initial configuration: walkers on the first two sites.
    pub const fn origin() -> Self {
        Self { x1: 1, x2: 2 }
    }
}

impl fmt::Display for PairState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.x1, self.x2)
    }
}

impl FromStr for PairState {
    type Err = Error;

    /// Accepts `x1,x2`, optionally wrapped in parentheses.
    fn from_str(s: &str) -> Result<Self> {
        let inner = s.trim().trim_start_matches('(').trim_end_matches(')');
        let (l, r) = inner
            .split_once(',')
            .ok_or_else(|| Error::InvalidArgument(format!("expected `x1,x2`, got `{s}`")))?;
        let parse = |v: &str| {
            v.trim()
                .parse::<usize>()
                .map_err(|e| Error::InvalidArgument(format!("bad coordinate `{v}`: {e}")))
        };
        PairState::new(parse(l)?, parse(r)?)
    }
}

/// Dense lexicographic indexing of the pair lattice.
///
/// Index 0 is `(1,2)`, then `(1,3)`, …, `(1,s)`, `(2,3)`, … up to `(s-1,s)`
/// at index `s(s-1)/2 - 1`. This ordering is stable and shared by every
/// matrix, amplitude vector and output file in the crate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SiteIndexing {
    s: usize,
    sites: Vec<PairState>,
}

impl SiteIndexing {
    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn chain_length(&self) -> usize {
        self.s
    }

    /// Dense index of `p`, or `None` if it is off the lattice.
    pub fn index_of(&self, p: PairState) -> Option<usize> {
        if p.x2 > self.s {
            return None;
        }
        // Rows x1 = 1..x1-1 hold (s-1) + (s-2) + ... entries.
        let before = (p.x1 - 1) * self.s - (p.x1 - 1) * p.x1 / 2;
        Some(before + (p.x2 - p.x1 - 1))
    }

    pub fn site(&self, index: usize) -> PairState {
        self.sites[index]
    }

    pub fn sites(&self) -> &[PairState] {
        &self.sites
    }
}

/// Enumerates every pair site of the chain in lexicographic order.
pub fn enumerate_sites(config: &ChainConfig) -> SiteIndexing {
    let s = config.s();
    let sites = (1..s)
        .flat_map(|x1| ((x1 + 1)..=s).map(move |x2| PairState { x1, x2 }))
        .collect();
    SiteIndexing { s, sites }
}

/// Lattice neighbours of `p`: one walker moves by one site, order is kept.
///
/// Moves that would make the walkers collide or leave `1..=s` are dropped.
/// The result lists `x1-1`, `x1+1`, `x2-1`, `x2+1` moves in that order.
pub fn neighbours(p: PairState, config: &ChainConfig) -> Vec<PairState> {
    let s = config.s();
    let PairState { x1, x2 } = p;
    let mut out = Vec::with_capacity(4);
    if x1 > 1 {
        out.push(PairState { x1: x1 - 1, x2 });
    }
    if x1 + 1 < x2 {
        out.push(PairState { x1: x1 + 1, x2 });
    }
    if x2 - 1 > x1 {
        out.push(PairState { x1, x2: x2 - 1 });
    }
    if x2 < s {
        out.push(PairState { x1, x2: x2 + 1 });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn cfg(s: usize) -> ChainConfig {
        ChainConfig::interacting(s, 2, 3).unwrap()
    }

    fn p(x1: usize, x2: usize) -> PairState {
        PairState::new(x1, x2).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(ChainConfig::interacting(7, 4, 5).is_ok());
        assert!(ChainConfig::interacting(7, 1, 5).is_err());
        assert!(ChainConfig::interacting(7, 5, 5).is_err());
        assert!(ChainConfig::interacting(7, 5, 4).is_err());
        assert!(ChainConfig::interacting(7, 3, 7).is_err());
        assert!(ChainConfig::interacting(3, 2, 2).is_err());
        assert!(ChainConfig::new(4, 2, 3, true).is_ok());
    }

    #[test]
    fn pair_state_rejects_collisions() {
        assert!(PairState::new(3, 3).is_err());
        assert!(PairState::new(4, 3).is_err());
        assert!(PairState::new(0, 3).is_err());
        assert_eq!("(12,13)".parse::<PairState>().unwrap(), p(12, 13));
        assert_eq!(" 2, 5".parse::<PairState>().unwrap(), p(2, 5));
        assert!("2;5".parse::<PairState>().is_err());
    }

    #[test]
    fn site_counts() {
        assert_eq!(enumerate_sites(&cfg(7)).len(), 21);
        assert_eq!(enumerate_sites(&ChainConfig::interacting(25, 11, 13).unwrap()).len(), 300);
    }

    #[test]
    fn s4_enumeration_is_lexicographic() {
        let idx = enumerate_sites(&cfg(4));
        assert_eq!(
            idx.sites(),
            &[p(1, 2), p(1, 3), p(1, 4), p(2, 3), p(2, 4), p(3, 4)]
        );
    }

    #[test]
    fn neighbour_examples() {
        let c = cfg(7);
        assert_eq!(neighbours(p(1, 2), &c), vec![p(1, 3)]);
        let interior: HashSet<_> = neighbours(p(3, 5), &c).into_iter().collect();
        assert_eq!(interior, [p(2, 5), p(4, 5), p(3, 4), p(3, 6)].into_iter().collect());
        assert_eq!(neighbours(p(6, 7), &c), vec![p(5, 7)]);
    }

    #[test]
    fn off_lattice_index() {
        let idx = enumerate_sites(&cfg(5));
        assert_eq!(idx.index_of(p(2, 6)), None);
        assert!(!cfg(5).contains(p(2, 6)));
        assert!(cfg(5).check_site(p(2, 6)).is_err());
    }

    proptest! {
        #[test]
        fn indexing_is_a_bijection(s in 4usize..40) {
            let idx = enumerate_sites(&cfg(s));
            prop_assert_eq!(idx.len(), s * (s - 1) / 2);
            for (i, &q) in idx.sites().iter().enumerate() {
                prop_assert!(q.x1() < q.x2() && q.x2() <= s);
                prop_assert_eq!(idx.index_of(q), Some(i));
            }
        }

        #[test]
        fn neighbour_relation_is_symmetric(s in 4usize..30) {
            let c = cfg(s);
            let idx = enumerate_sites(&c);
            let mut directed = 0usize;
            let mut undirected = HashSet::new();
            for &q in idx.sites() {
                for n in neighbours(q, &c) {
                    prop_assert!(n.x1() < n.x2() && n.x2() <= s);
                    prop_assert!(neighbours(n, &c).contains(&q));
                    directed += 1;
                    undirected.insert(if q < n { (q, n) } else { (n, q) });
                }
            }
            prop_assert_eq!(directed, 2 * undirected.len());
        }
    }
}
