//! The dyadic lattice on `[0, 1)`.
//!
//! An interval is encoded by `(level, index)` and stands for
//! `[index * 2^-level, (index + 1) * 2^-level)`. The `Plus` child of an
//! interval is its left half and the `Minus` child its right half. Selector
//! intervals `S_I` descend through `Minus` children, i.e. opposite to the
//! `Plus` direction; that is what keeps the selector family pairwise disjoint.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

/// Deepest level supported; indices stay within `u64`.
pub const MAX_LEVEL: u32 = 62;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DyadicInterval {
    level: u32,
    index: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum IntervalClass {
    Plus,
    Minus,
    Root,
}

/// Which child the selector descent follows. `Standard` is the convention
/// used throughout; `Flipped` exists to demonstrate that descending in the
/// `Plus` direction breaks disjointness.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    Standard,
    Flipped,
}

impl DyadicInterval {
    pub const ROOT: DyadicInterval = DyadicInterval { level: 0, index: 0 };

    pub fn new(level: u32, index: u64) -> Result<Self> {
        if level > MAX_LEVEL {
            return Err(LabError::Range(format!("level {level} exceeds cap {MAX_LEVEL}")));
        }
        if index >= 1u64 << level {
            return Err(LabError::Range(format!("index {index} out of range at level {level}")));
        }
        Ok(DyadicInterval { level, index })
    }

    /// Unchecked constructor for internal loops where the bounds are known.
    pub(crate) const fn at(level: u32, index: u64) -> Self {
        DyadicInterval { level, index }
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn index(&self) -> u64 {
        self.index
    }

    /// `|I| = 2^-level`, exact.
    pub fn measure(&self) -> f64 {
        2f64.powi(-(self.level as i32))
    }

    pub fn left_endpoint(&self) -> f64 {
        self.index as f64 * self.measure()
    }

    /// `(plus, minus)` = (left half, right half).
    pub fn children(&self) -> (DyadicInterval, DyadicInterval) {
        debug_assert!(self.level < MAX_LEVEL);
        let l = self.level + 1;
        (DyadicInterval::at(l, 2 * self.index), DyadicInterval::at(l, 2 * self.index + 1))
    }

    pub fn plus_child(&self) -> DyadicInterval {
        self.children().0
    }

    pub fn minus_child(&self) -> DyadicInterval {
        self.children().1
    }

    pub fn parent(&self) -> Option<DyadicInterval> {
        (self.level > 0).then(|| DyadicInterval::at(self.level - 1, self.index / 2))
    }

    pub fn class(&self) -> IntervalClass {
        if self.level == 0 {
            IntervalClass::Root
        } else if self.index % 2 == 0 {
            IntervalClass::Plus
        } else {
            IntervalClass::Minus
        }
    }

    /// The ancestor (or self) at `level`.
    pub fn ancestor_at(&self, level: u32) -> Option<DyadicInterval> {
        (level <= self.level).then(|| DyadicInterval::at(level, self.index >> (self.level - level)))
    }

    /// Ancestors from the root down to and including `self`.
    pub fn ancestors(&self) -> impl Iterator<Item = DyadicInterval> + '_ {
        (0..=self.level).map(move |l| DyadicInterval::at(l, self.index >> (self.level - l)))
    }

    pub fn contains(&self, other: &DyadicInterval) -> bool {
        other.level >= self.level && other.index >> (other.level - self.level) == self.index
    }

    pub fn is_disjoint(&self, other: &DyadicInterval) -> bool {
        !self.contains(other) && !other.contains(self)
    }

    /// Range of indices of the level-`level` intervals inside `self`.
    pub fn cell_range(&self, level: u32) -> std::ops::Range<u64> {
        debug_assert!(level >= self.level);
        let shift = level - self.level;
        (self.index << shift)..((self.index + 1) << shift)
    }
}

impl fmt::Display for DyadicInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.level, self.index)
    }
}

impl FromStr for DyadicInterval {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        let (l, k) = s
            .split_once(':')
            .ok_or_else(|| LabError::Parse(format!("interval `{s}` is not of the form n:k")))?;
        let level = l.trim().parse().map_err(|e| LabError::Parse(format!("`{s}`: {e}")))?;
        let index = k.trim().parse().map_err(|e| LabError::Parse(format!("`{s}`: {e}")))?;
        DyadicInterval::new(level, index)
    }
}

/// The two halves of `interval`: `(plus, minus)`.
pub fn children(interval: DyadicInterval) -> (DyadicInterval, DyadicInterval) {
    interval.children()
}

/// All intervals contained in `k` with level at most `max_level`, level-major
/// then index-minor.
pub fn descendants(k: DyadicInterval, max_level: u32) -> Result<Vec<DyadicInterval>> {
    if max_level < k.level {
        return Err(LabError::EmptyRange { level: k.level, max_level });
    }
    if max_level > MAX_LEVEL {
        return Err(LabError::Range(format!("level {max_level} exceeds cap {MAX_LEVEL}")));
    }
    let count = (1usize << (max_level - k.level + 1)) - 1;
    let mut out = Vec::with_capacity(count);
    for level in k.level..=max_level {
        out.extend(k.cell_range(level).map(|i| DyadicInterval::at(level, i)));
    }
    Ok(out)
}

/// Plus-class intervals (left children) of levels `1..=max_level`.
pub fn plus_class(max_level: u32) -> Vec<DyadicInterval> {
    let mut out = Vec::with_capacity((1usize << max_level).saturating_sub(1));
    for level in 1..=max_level {
        out.extend((0..1u64 << (level - 1)).map(|j| DyadicInterval::at(level, 2 * j)));
    }
    out
}

/// Plus-class intervals of level `1..=max_level` contained in `k` (including
/// `k` itself when it is a plus interval).
pub fn plus_class_within(k: DyadicInterval, max_level: u32) -> Vec<DyadicInterval> {
    let mut out = Vec::new();
    for level in k.level.max(1)..=max_level {
        out.extend(
            k.cell_range(level)
                .filter(|i| i % 2 == 0)
                .map(|i| DyadicInterval::at(level, i)),
        );
    }
    out
}

/// The selector interval `S_I`: the level-`n+1` descendant of `interval`
/// reached by repeatedly taking the `Minus` child.
pub fn s_interval(interval: DyadicInterval, n: u32) -> Result<DyadicInterval> {
    s_interval_oriented(interval, n, Orientation::Standard)
}

pub fn s_interval_oriented(
    interval: DyadicInterval,
    n: u32,
    orientation: Orientation,
) -> Result<DyadicInterval> {
    if interval.level > n {
        return Err(LabError::Precondition(format!(
            "selector needs level <= {n}, got interval {interval}"
        )));
    }
    if n + 1 > MAX_LEVEL {
        return Err(LabError::Range(format!("level {} exceeds cap {MAX_LEVEL}", n + 1)));
    }
    let shift = n + 1 - interval.level;
    let index = match orientation {
        Orientation::Standard => ((interval.index + 1) << shift) - 1,
        Orientation::Flipped => interval.index << shift,
    };
    Ok(DyadicInterval::at(n + 1, index))
}

/// Two plus-class intervals that received the same selector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelectorCollision {
    pub first: DyadicInterval,
    pub second: DyadicInterval,
    pub selector: DyadicInterval,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DisjointnessReport {
    pub n: u32,
    pub selectors: usize,
    pub collision: Option<SelectorCollision>,
}

impl DisjointnessReport {
    pub fn is_disjoint(&self) -> bool {
        self.collision.is_none()
    }
}

/// Exhaustive check that `{S_I : I plus-class, level <= n}` are pairwise
/// distinct. They all have length `2^-(n+1)`, so distinct means disjoint.
pub fn verify_s_disjoint(n: u32) -> DisjointnessReport {
    verify_s_disjoint_oriented(n, Orientation::Standard)
}

pub fn verify_s_disjoint_oriented(n: u32, orientation: Orientation) -> DisjointnessReport {
    let mut seen: HashMap<u64, DyadicInterval> = HashMap::new();
    let plus = plus_class(n);
    for &interval in &plus {
        let s = s_interval_oriented(interval, n, orientation).expect("plus interval within range");
        if let Some(&first) = seen.get(&s.index) {
            return DisjointnessReport {
                n,
                selectors: plus.len(),
                collision: Some(SelectorCollision { first, second: interval, selector: s }),
            };
        }
        seen.insert(s.index, interval);
    }
    DisjointnessReport { n, selectors: plus.len(), collision: None }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn iv(l: u32, k: u64) -> DyadicInterval {
        DyadicInterval::new(l, k).unwrap()
    }

    #[test]
    fn children_examples() {
        assert_eq!(children(DyadicInterval::ROOT), (iv(1, 0), iv(1, 1)));
        assert_eq!(children(iv(3, 5)), (iv(4, 10), iv(4, 11)));
        let (p, m) = children(iv(3, 5));
        assert_eq!(p.parent(), Some(iv(3, 5)));
        assert_eq!(m.parent(), Some(iv(3, 5)));
    }

    #[test]
    fn descendants_examples() {
        assert_eq!(
            descendants(DyadicInterval::ROOT, 1).unwrap(),
            vec![iv(0, 0), iv(1, 0), iv(1, 1)]
        );
        let d = descendants(iv(1, 1), 3).unwrap();
        assert_eq!(d.len(), 7);
        for i in &d {
            assert!(i.left_endpoint() >= 0.5);
            assert!(i.left_endpoint() + i.measure() <= 1.0);
        }
        assert_eq!(descendants(DyadicInterval::ROOT, 10).unwrap().len(), 2047);
        assert!(matches!(
            descendants(iv(3, 1), 2),
            Err(LabError::EmptyRange { level: 3, max_level: 2 })
        ));
    }

    #[test]
    fn plus_class_examples() {
        assert_eq!(plus_class(1), vec![iv(1, 0)]);
        assert_eq!(plus_class(2), vec![iv(1, 0), iv(2, 0), iv(2, 2)]);
        assert_eq!(plus_class(5).len(), 31);
    }

    #[test]
    fn s_interval_examples() {
        assert_eq!(s_interval(DyadicInterval::ROOT, 2).unwrap(), iv(3, 7));
        assert_eq!(s_interval(iv(1, 0), 1).unwrap(), iv(2, 1));
        assert!(matches!(s_interval(iv(4, 0), 3), Err(LabError::Precondition(_))));
    }

    #[test]
    fn selector_stays_inside() {
        for n in 1..=20 {
            for i in plus_class(n).into_iter().step_by(97) {
                assert!(i.contains(&s_interval(i, n).unwrap()));
            }
        }
    }

    #[test]
    fn selectors_disjoint_small_cases() {
        let r1 = verify_s_disjoint(1);
        assert!(r1.is_disjoint());
        assert_eq!(r1.selectors, 1);
        let r3 = verify_s_disjoint(3);
        assert!(r3.is_disjoint());
        assert_eq!(r3.selectors, 7);
    }

    #[test]
    fn flipped_orientation_collides_at_two() {
        let r = verify_s_disjoint_oriented(2, Orientation::Flipped);
        let c = r.collision.expect("collision");
        assert_eq!(c.first, iv(1, 0));
        assert_eq!(c.second, iv(2, 0));
        assert_eq!(c.selector, iv(3, 0));
    }

    #[test]
    fn class_partition_counts() {
        for n in 0..=20u32 {
            let all = (1u64 << (n + 1)) - 1;
            let plus = plus_class(n).len() as u64;
            let mut minus = 0u64;
            let mut root = 0u64;
            for level in 0..=n {
                for k in 0..1u64 << level {
                    match DyadicInterval::at(level, k).class() {
                        IntervalClass::Minus => minus += 1,
                        IntervalClass::Root => root += 1,
                        IntervalClass::Plus => {}
                    }
                }
            }
            assert_eq!(root, 1);
            assert_eq!(plus, minus);
            assert_eq!(all, root + plus + minus);
        }
    }

    #[test]
    fn levels_tile_unit_interval() {
        for n in 0..=20u32 {
            let total: f64 = (0..1u64 << n).map(|k| DyadicInterval::at(n, k).measure()).sum();
            assert_eq!(total, 1.0);
        }
    }

    #[test]
    fn display_roundtrip() {
        let i = iv(3, 5);
        assert_eq!(i.to_string(), "3:5");
        assert_eq!("3:5".parse::<DyadicInterval>().unwrap(), i);
        assert!("3:9".parse::<DyadicInterval>().is_err());
        assert!("x".parse::<DyadicInterval>().is_err());
    }

    proptest! {
        #[test]
        fn parent_of_child_is_self(level in 0u32..40, raw in any::<u64>()) {
            let i = DyadicInterval::at(level, raw % (1u64 << level));
            let (p, m) = i.children();
            prop_assert_eq!(p.parent(), Some(i));
            prop_assert_eq!(m.parent(), Some(i));
            prop_assert_eq!(p.class(), IntervalClass::Plus);
            prop_assert_eq!(m.class(), IntervalClass::Minus);
            prop_assert!(i.contains(&p) && i.contains(&m) && p.is_disjoint(&m));
        }

        #[test]
        fn selector_is_rightmost_descendant(level in 1u32..20, extra in 0u32..20, raw in any::<u64>()) {
            let i = DyadicInterval::at(level, raw % (1u64 << level));
            let n = level + extra;
            let s = s_interval(i, n).unwrap();
            let mut walk = i;
            while walk.level() < n + 1 {
                walk = walk.minus_child();
            }
            prop_assert_eq!(s, walk);
        }
    }
}
