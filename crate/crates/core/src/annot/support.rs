use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Histogram of a scalar label on a regular bin grid, together with the
/// set of bins that count as support.
///
/// Bin `b` covers `[origin + b * bin_width, origin + (b + 1) * bin_width)`.
/// A bin is occupied when it holds at least `max(1, min_count)` values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinnedSupport {
    origin: f64,
    bin_width: f64,
    min_count: u64,
    counts: Vec<u64>,
    occupancy: Vec<bool>,
}

impl BinnedSupport {
    pub fn empty(bin_width: f64, min_count: u64) -> Self {
        BinnedSupport {
            origin: 0.0,
            bin_width,
            min_count,
            counts: Vec::new(),
            occupancy: Vec::new(),
        }
    }

    /// Builds a support from precomputed bin counts.
    pub fn from_counts(origin: f64, bin_width: f64, counts: Vec<u64>, min_count: u64) -> Self {
        let threshold = min_count.max(1);
        let occupancy = counts.iter().map(|&c| c >= threshold).collect();
        BinnedSupport {
            origin,
            bin_width,
            min_count,
            counts,
            occupancy,
        }
    }

    pub fn origin(&self) -> f64 {
        self.origin
    }

    pub fn bin_width(&self) -> f64 {
        self.bin_width
    }

    pub fn min_count(&self) -> u64 {
        self.min_count
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn occupancy(&self) -> &[bool] {
        &self.occupancy
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn occupied_bins(&self) -> usize {
        self.occupancy.iter().filter(|&&o| o).count()
    }

    pub fn is_empty(&self) -> bool {
        self.occupied_bins() == 0
    }

    /// Lebesgue measure of the support.
    pub fn measure(&self) -> f64 {
        self.bin_width * self.occupied_bins() as f64
    }

    /// Lower edges of the occupied bins.
    pub fn occupied_edges(&self) -> impl Iterator<Item = f64> + '_ {
        self.occupancy
            .iter()
            .enumerate()
            .filter(|(_, &o)| o)
            .map(|(b, _)| self.origin + b as f64 * self.bin_width)
    }

    pub fn bin_of(&self, value: f64) -> Option<usize> {
        if self.counts.is_empty() {
            return None;
        }
        let b = ((value - self.origin) / self.bin_width).floor();
        (b >= 0.0 && (b as usize) < self.counts.len()).then_some(b as usize)
    }

    /// Whether `value` falls in an occupied bin.
    pub fn contains(&self, value: f64) -> bool {
        self.bin_of(value).is_some_and(|b| self.occupancy[b])
    }

    /// Normalized counts, all zero when the histogram is empty.
    pub fn probabilities(&self) -> Vec<f64> {
        let total = self.total();
        self.counts
            .iter()
            .map(|&c| if total == 0 { 0.0 } else { c as f64 / total as f64 })
            .collect()
    }

    /// Offset of this grid's bin 0 on `other`'s grid, if the grids align.
    fn offset_from(&self, other: &BinnedSupport) -> Result<i64> {
        if (self.bin_width - other.bin_width).abs() > 1e-12 * self.bin_width.max(other.bin_width) {
            return Err(Error::GridMismatch(format!(
                "bin widths {} and {}",
                self.bin_width, other.bin_width
            )));
        }
        let steps = (self.origin - other.origin) / self.bin_width;
        let rounded = steps.round();
        if (steps - rounded).abs() > 1e-9 {
            return Err(Error::GridMismatch(format!(
                "origins {} and {} are not on a common grid of width {}",
                self.origin, other.origin, self.bin_width
            )));
        }
        Ok(rounded as i64)
    }
}

/// Bins `values` on a grid of width `bin_width` anchored at
/// `floor(min / bin_width) * bin_width`.
pub fn estimate_support(values: &[f64], bin_width: f64, min_count: u64) -> BinnedSupport {
    assert!(bin_width > 0.0, "bin width must be positive");
    let finite = values.iter().copied().filter(|v| v.is_finite());
    let Some(min) = finite.clone().reduce(f64::min) else {
        return BinnedSupport::empty(bin_width, min_count);
    };
    let origin = (min / bin_width).floor() * bin_width;
    let mut counts: Vec<u64> = Vec::new();
    for v in finite {
        let b = ((v - origin) / bin_width).floor() as usize;
        if b >= counts.len() {
            counts.resize(b + 1, 0);
        }
        counts[b] += 1;
    }
    BinnedSupport::from_counts(origin, bin_width, counts, min_count)
}

/// Signed support overlap `I * |A xor B| / |A or B|` of reference `a` and
/// candidate `b`, where `I = -1` when `b`'s support is a nonempty strict
/// subset of `a`'s and `+1` otherwise.
///
/// 0 means identical supports, 1 disjoint supports, and values in (-1, 0)
/// mean `b` is strictly contained in `a`.
pub fn overlap_index(a: &BinnedSupport, b: &BinnedSupport) -> Result<f64> {
    match (a.is_empty(), b.is_empty()) {
        (true, true) => return Err(Error::UndefinedOverlap),
        (false, true) | (true, false) => return Ok(1.0),
        _ => {}
    }
    let shift = b.offset_from(a)?;
    let lo = 0i64.min(shift);
    let hi = (a.occupancy.len() as i64).max(shift + b.occupancy.len() as i64);
    let at = |s: &BinnedSupport, off: i64, i: i64| {
        let k = i - off;
        k >= 0 && (k as usize) < s.occupancy.len() && s.occupancy[k as usize]
    };
    let (mut delta, mut union, mut b_outside_a) = (0u64, 0u64, false);
    for i in lo..hi {
        let (ia, ib) = (at(a, 0, i), at(b, shift, i));
        if ia || ib {
            union += 1;
        }
        if ia != ib {
            delta += 1;
        }
        if ib && !ia {
            b_outside_a = true;
        }
    }
    let strict_subset = !b_outside_a && delta > 0;
    let sign = if strict_subset { -1.0 } else { 1.0 };
    Ok(sign * delta as f64 / union as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn interval(lo: i32, hi: i32) -> BinnedSupport {
        let values: Vec<f64> = (lo..hi).map(f64::from).collect();
        estimate_support(&values, 1.0, 1)
    }

    /// Interval-arithmetic oracle for unions of half-open integer intervals
    /// `[a0, a1)` and `[b0, b1)` with `a` non-empty and `b` non-empty.
    fn interval_oracle(a: (i32, i32), b: (i32, i32)) -> f64 {
        let len = |(x, y): (i32, i32)| (y - x).max(0) as f64;
        let inter = len((a.0.max(b.0), a.1.min(b.1)));
        let union = len(a) + len(b) - inter;
        let delta = union - inter;
        let strict = b.0 >= a.0 && b.1 <= a.1 && len(b) < len(a);
        let sign = if strict { -1.0 } else { 1.0 };
        sign * delta / union
    }

    #[test]
    fn counting_example() {
        let s = estimate_support(&[1.0, 2.0, 2.0, 9.0], 1.0, 1);
        let occupied: Vec<f64> = s.occupied_edges().collect();
        assert_eq!(occupied, vec![1.0, 2.0, 9.0]);
        assert_eq!(s.measure(), 3.0);
        assert_eq!(s.counts()[1], 2);
    }

    #[test]
    fn empty_values() {
        let s = estimate_support(&[], 1.0, 1);
        assert_eq!(s.measure(), 0.0);
        assert!(s.is_empty());
        assert!(!s.contains(0.0));
    }

    #[test]
    fn min_count_suppresses_sparse_bins() {
        let s = estimate_support(&[1.0, 2.0, 2.0, 9.0], 1.0, 2);
        assert_eq!(s.occupied_edges().collect::<Vec<_>>(), vec![2.0]);
        // min_count 0 behaves like 1
        let s0 = estimate_support(&[1.0, 2.0], 1.0, 0);
        assert_eq!(s0.occupied_bins(), 2);
    }

    #[test]
    fn overlap_examples() {
        let a = interval(0, 10);
        assert_eq!(overlap_index(&a, &a).unwrap(), 0.0);
        assert_eq!(overlap_index(&interval(0, 11), &interval(20, 31)).unwrap(), 1.0);
        let v = overlap_index(&a, &interval(2, 8)).unwrap();
        assert!((v - -0.4).abs() < 1e-12);
        assert!((v - interval_oracle((0, 10), (2, 8))).abs() < 1e-12);
        let v = overlap_index(&a, &interval(5, 15)).unwrap();
        assert!((v - 10.0 / 15.0).abs() < 1e-12);
        assert!((v - interval_oracle((0, 10), (5, 15))).abs() < 1e-12);
    }

    #[test]
    fn empty_cases() {
        let e = BinnedSupport::empty(1.0, 1);
        assert!(matches!(overlap_index(&e, &e), Err(Error::UndefinedOverlap)));
        assert_eq!(overlap_index(&interval(0, 3), &e).unwrap(), 1.0);
        assert_eq!(overlap_index(&e, &interval(0, 3)).unwrap(), 1.0);
    }

    #[test]
    fn misaligned_grids_are_rejected() {
        let a = estimate_support(&[0.0, 1.0], 1.0, 1);
        let b = estimate_support(&[0.5, 1.5], 0.5, 1);
        assert!(matches!(overlap_index(&a, &b), Err(Error::GridMismatch(_))));
        let c = BinnedSupport::from_counts(0.25, 1.0, vec![1], 1);
        assert!(matches!(overlap_index(&a, &c), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn uniform_brightness_hits_every_value() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let values: Vec<f64> = (0..10_000).map(|_| rng.random_range(100..=255) as f64).collect();
        // Oracle: enumerate the 156 admissible integers and check each was drawn.
        let all_hit = (100..=255).all(|v| values.contains(&(v as f64)));
        assert!(all_hit);
        assert_eq!(estimate_support(&values, 1.0, 1).measure(), 156.0);
    }

    proptest! {
        #[test]
        fn matches_interval_oracle(a0 in -20i32..20, al in 1i32..20, b0 in -20i32..20, bl in 1i32..20) {
            let a = (a0, a0 + al);
            let b = (b0, b0 + bl);
            let v = overlap_index(&interval(a.0, a.1), &interval(b.0, b.1)).unwrap();
            prop_assert!((v - interval_oracle(a, b)).abs() < 1e-12);
        }

        #[test]
        fn magnitude_is_symmetric(xs in prop::collection::vec(0i32..40, 1..30), ys in prop::collection::vec(0i32..40, 1..30)) {
            let a = estimate_support(&xs.iter().map(|&v| v as f64).collect::<Vec<_>>(), 1.0, 1);
            let b = estimate_support(&ys.iter().map(|&v| v as f64).collect::<Vec<_>>(), 1.0, 1);
            let ab = overlap_index(&a, &b).unwrap();
            let ba = overlap_index(&b, &a).unwrap();
            prop_assert!((ab.abs() - ba.abs()).abs() < 1e-12);
            prop_assert!((-1.0..=1.0).contains(&ab));
            prop_assert_eq!(ab == 0.0, a.occupied_edges().eq(b.occupied_edges()));
        }

        #[test]
        fn permutation_invariant_and_monotone(mut xs in prop::collection::vec(-50.0f64..50.0, 0..60), extra in prop::collection::vec(-50.0f64..50.0, 0..20)) {
            let s = estimate_support(&xs, 1.0, 1);
            let mut rev = xs.clone();
            rev.reverse();
            prop_assert_eq!(s.occupied_edges().collect::<Vec<_>>(), estimate_support(&rev, 1.0, 1).occupied_edges().collect::<Vec<_>>());
            xs.extend(extra);
            let grown = estimate_support(&xs, 1.0, 1);
            for e in s.occupied_edges() {
                prop_assert!(grown.contains(e));
            }
        }
    }
}
