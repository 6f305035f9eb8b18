use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

/// A declared name. Ordering follows declaration rank, then spelling.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Symbol {
    rank: u32,
    name: Arc<str>,
}

impl Symbol {
    pub fn new(rank: u32, name: &str) -> Self {
        Symbol { rank, name: Arc::from(name) }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn rank(&self) -> u32 {
        self.rank
    }
}

impl fmt::Debug for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Class {
    Scalar,
    Matrix,
}

/// Derivative counts per independent variable, in declaration order.
/// Trailing zeros are never stored, so equal indices compare equal.
#[derive(Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MultiIndex(Vec<u16>);

impl MultiIndex {
    pub fn zero() -> Self {
        MultiIndex(Vec::new())
    }

    pub fn from_counts(counts: &[u16]) -> Self {
        let mut v = counts.to_vec();
        while v.last() == Some(&0) {
            v.pop();
        }
        MultiIndex(v)
    }

    pub fn unit(pos: usize) -> Self {
        MultiIndex::zero().incremented(pos)
    }

    pub fn counts(&self) -> &[u16] {
        &self.0
    }

    pub fn count(&self, pos: usize) -> u16 {
        self.0.get(pos).copied().unwrap_or(0)
    }

    pub fn order(&self) -> u32 {
        self.0.iter().map(|&c| u32::from(c)).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_empty()
    }

    pub fn incremented(&self, pos: usize) -> Self {
        let mut v = self.0.clone();
        if v.len() <= pos {
            v.resize(pos + 1, 0);
        }
        v[pos] += 1;
        MultiIndex(v)
    }

    pub fn plus(&self, other: &MultiIndex) -> Self {
        let n = self.0.len().max(other.0.len());
        let v: Vec<u16> = (0..n).map(|i| self.count(i) + other.count(i)).collect();
        MultiIndex::from_counts(&v)
    }

    /// Componentwise `self >= other`.
    pub fn dominates(&self, other: &MultiIndex) -> bool {
        (0..other.0.len()).all(|i| self.count(i) >= other.count(i))
    }

    pub fn minus(&self, other: &MultiIndex) -> Option<Self> {
        if !self.dominates(other) {
            return None;
        }
        let v: Vec<u16> = (0..self.0.len()).map(|i| self.count(i) - other.count(i)).collect();
        Some(MultiIndex::from_counts(&v))
    }

    /// Componentwise maximum.
    pub fn join(&self, other: &MultiIndex) -> Self {
        let n = self.0.len().max(other.0.len());
        let v: Vec<u16> = (0..n).map(|i| self.count(i).max(other.count(i))).collect();
        MultiIndex::from_counts(&v)
    }

    /// Variable positions, each repeated by its count.
    pub fn steps(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for (i, &c) in self.0.iter().enumerate() {
            for _ in 0..c {
                out.push(i);
            }
        }
        out
    }
}

impl fmt::Debug for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trailing_zeros_are_trimmed() {
        assert_eq!(MultiIndex::from_counts(&[1, 0, 0]), MultiIndex::unit(0));
        assert!(MultiIndex::from_counts(&[0, 0]).is_zero());
    }

    #[test]
    fn domination_and_difference() {
        let a = MultiIndex::from_counts(&[2, 1]);
        let b = MultiIndex::from_counts(&[1, 1]);
        assert!(a.dominates(&b));
        assert!(!b.dominates(&a));
        assert_eq!(a.minus(&b), Some(MultiIndex::unit(0)));
        assert_eq!(a.join(&MultiIndex::from_counts(&[0, 3])), MultiIndex::from_counts(&[2, 3]));
        assert_eq!(a.steps(), alloc::vec![0, 0, 1]);
    }
}
