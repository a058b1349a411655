//! Permutations and ordered interval partitions of {1..n}.
//!
//! Indices are 0-based internally. `Permutation::images()[i]` is σ(i+1)−1.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap on permutation enumeration.
pub const PERMUTATION_CAP: usize = 10;

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Permutation {
    images: Vec<usize>,
}

impl Permutation {
    /// Builds a permutation from 0-based images.
    pub fn new(images: Vec<usize>) -> Result<Self> {
        let n = images.len();
        if n == 0 {
            return Err(Error::domain("permutation of an empty set"));
        }
        let mut seen = vec![false; n];
        for &v in &images {
            if v >= n || seen[v] {
                return Err(Error::domain(format!("not a bijection: {images:?}")));
            }
            seen[v] = true;
        }
        Ok(Self { images })
    }

    /// Builds a permutation from 1-based images, in one-line notation.
    pub fn from_one_based(images: &[usize]) -> Result<Self> {
        if images.iter().any(|&v| v == 0) {
            return Err(Error::domain("1-based images must be positive"));
        }
        Self::new(images.iter().map(|&v| v - 1).collect())
    }

    pub fn identity(n: usize) -> Self {
        Self { images: (0..n).collect() }
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn images(&self) -> &[usize] {
        &self.images
    }

    #[inline]
    pub fn apply(&self, i: usize) -> usize {
        self.images[i]
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.len()];
        for (i, &v) in self.images.iter().enumerate() {
            inv[v] = i;
        }
        Self { images: inv }
    }

    /// Pairs (α, β), α < β, with σ(β) < σ(α). Lexicographic in (α, β).
    pub fn inversions(&self) -> Vec<(usize, usize)> {
        let n = self.len();
        let mut out = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                if self.images[b] < self.images[a] {
                    out.push((a, b));
                }
            }
        }
        out
    }

    pub fn inversion_count(&self) -> usize {
        self.inversions().len()
    }

    pub fn sign(&self) -> i32 {
        if self.inversion_count() % 2 == 0 {
            1
        } else {
            -1
        }
    }

    /// Composition (self ∘ other)(i) = self(other(i)).
    pub fn compose(&self, other: &Self) -> Self {
        assert_eq!(self.len(), other.len());
        Self { images: other.images.iter().map(|&i| self.images[i]).collect() }
    }
}

/// Inversion set of σ, 0-based pairs.
pub fn inversions(sigma: &Permutation) -> Vec<(usize, usize)> {
    sigma.inversions()
}

/// Lexicographic iterator over S_n.
#[derive(Clone, Debug)]
pub struct Permutations {
    next: Option<Vec<usize>>,
}

impl Iterator for Permutations {
    type Item = Permutation;

    fn next(&mut self) -> Option<Permutation> {
        let cur = self.next.take()?;
        let mut nxt = cur.clone();
        if next_lexicographic(&mut nxt) {
            self.next = Some(nxt);
        }
        Some(Permutation { images: cur })
    }
}

fn next_lexicographic(p: &mut [usize]) -> bool {
    let n = p.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

pub fn permutations(n: usize) -> Result<Permutations> {
    permutations_capped(n, PERMUTATION_CAP)
}

pub fn permutations_capped(n: usize, cap: usize) -> Result<Permutations> {
    if n == 0 {
        return Err(Error::domain("n must be at least 1"));
    }
    if n > cap {
        return Err(Error::Budget { what: "permutation enumeration", requested: n, cap });
    }
    Ok(Permutations { next: Some((0..n).collect()) })
}

/// All of S_n collected, for hot loops that iterate many times.
pub fn all_permutations(n: usize) -> Result<Vec<Permutation>> {
    Ok(permutations(n)?.collect())
}

/// An ordered partition of {0..n} into consecutive intervals, stored as
/// (start, len) per block.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OrderedPartition {
    n: usize,
    blocks: Vec<(usize, usize)>,
}

impl OrderedPartition {
    /// From the block sizes, e.g. `[2, 1]` is {{1,2},{3}}.
    pub fn from_composition(sizes: &[usize]) -> Result<Self> {
        if sizes.is_empty() || sizes.iter().any(|&s| s == 0) {
            return Err(Error::domain(format!("invalid composition {sizes:?}")));
        }
        let mut blocks = Vec::with_capacity(sizes.len());
        let mut start = 0;
        for &s in sizes {
            blocks.push((start, s));
            start += s;
        }
        Ok(Self { n: start, blocks })
    }

    pub fn singletons(n: usize) -> Self {
        Self { n, blocks: (0..n).map(|i| (i, 1)).collect() }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn blocks(&self) -> &[(usize, usize)] {
        &self.blocks
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.1).collect()
    }

    pub fn block_range(&self, j: usize) -> std::ops::Range<usize> {
        let (s, l) = self.blocks[j];
        s..s + l
    }

    /// Index of the block holding element `i`.
    pub fn block_of(&self, i: usize) -> usize {
        self.blocks.partition_point(|&(s, l)| s + l <= i)
    }

    /// 1-based element lists, for display.
    pub fn to_sets(&self) -> Vec<Vec<usize>> {
        (0..self.num_blocks()).map(|j| self.block_range(j).map(|i| i + 1).collect()).collect()
    }
}

/// All 2^(n−1) ordered partitions, compositions in lexicographic order.
pub fn ordered_partitions(n: usize) -> Result<Vec<OrderedPartition>> {
    if n == 0 {
        return Err(Error::domain("n must be at least 1"));
    }
    let mut out = Vec::with_capacity(1 << (n - 1));
    let mut cur = Vec::new();
    compositions(n, &mut cur, &mut out);
    Ok(out)
}

fn compositions(rest: usize, cur: &mut Vec<usize>, out: &mut Vec<OrderedPartition>) {
    if rest == 0 {
        out.push(OrderedPartition::from_composition(cur).expect("nonempty composition"));
        return;
    }
    for s in 1..=rest {
        cur.push(s);
        compositions(rest - s, cur, out);
        cur.pop();
    }
}

pub fn factorial(n: usize) -> u64 {
    (1..=n as u64).product()
}
