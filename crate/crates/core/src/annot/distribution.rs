use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::support::{estimate_support, overlap_index, BinnedSupport};
use super::{Annotation, LABELS};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelEntry {
    pub class: u8,
    pub label: u8,
    pub support: BinnedSupport,
}

/// Per-class, per-label histograms and supports (labels 2..=6).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelDistribution {
    pub bin_width: f64,
    pub n: usize,
    entries: Vec<LabelEntry>,
}

impl LabelDistribution {
    pub fn new(bin_width: f64) -> Self {
        LabelDistribution {
            bin_width,
            n: 0,
            entries: Vec::new(),
        }
    }

    /// Histograms every attributable label of `annotations`, conditioned on class.
    pub fn from_annotations(annotations: &[Annotation], bin_width: f64, min_count: u64) -> Self {
        let mut classes: Vec<u8> = annotations.iter().map(|a| a.class).collect();
        classes.sort_unstable();
        classes.dedup();
        let mut dist = LabelDistribution::new(bin_width);
        dist.n = annotations.len();
        for &k in &classes {
            for &j in &LABELS {
                let values: Vec<f64> = annotations
                    .iter()
                    .filter(|a| a.class == k)
                    .map(|a| a.label(j) as f64)
                    .collect();
                dist.insert(k, j, estimate_support(&values, bin_width, min_count));
            }
        }
        dist
    }

    pub fn insert(&mut self, class: u8, label: u8, support: BinnedSupport) {
        match self
            .entries
            .iter_mut()
            .find(|e| e.class == class && e.label == label)
        {
            Some(e) => e.support = support,
            None => {
                self.entries.push(LabelEntry {
                    class,
                    label,
                    support,
                });
                self.entries.sort_by_key(|e| (e.class, e.label));
            }
        }
    }

    /// Merges the entries of `other` into `self`, replacing duplicates.
    pub fn absorb(&mut self, other: LabelDistribution) {
        self.n += other.n;
        for e in other.entries {
            self.insert(e.class, e.label, e.support);
        }
    }

    pub fn get(&self, class: u8, label: u8) -> Option<&BinnedSupport> {
        self.entries
            .iter()
            .find(|e| e.class == class && e.label == label)
            .map(|e| &e.support)
    }

    pub fn classes(&self) -> Vec<u8> {
        let mut c: Vec<u8> = self.entries.iter().map(|e| e.class).collect();
        c.dedup();
        c
    }

    pub fn has_class(&self, class: u8) -> bool {
        self.entries.iter().any(|e| e.class == class)
    }

    pub fn entries(&self) -> &[LabelEntry] {
        &self.entries
    }

    /// Whether every attributable label of `ann` falls in an occupied bin of
    /// its class-conditional support.
    pub fn covers(&self, ann: &Annotation) -> Result<bool> {
        if !self.has_class(ann.class) {
            return Err(Error::MissingClass(ann.class));
        }
        Ok(LABELS.iter().all(|&j| {
            self.get(ann.class, j)
                .is_some_and(|s| s.contains(ann.label(j) as f64))
        }))
    }

    /// CSV with one row per (class, label): `class,label,bin_origin,bin_width`
    /// followed by one column per bin count.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("class,label,bin_origin,bin_width,counts...\n");
        for e in &self.entries {
            let _ = write!(
                out,
                "{},{},{},{}",
                e.class,
                e.label,
                e.support.origin(),
                e.support.bin_width()
            );
            for c in e.support.counts() {
                let _ = write!(out, ",{c}");
            }
            out.push('\n');
        }
        out
    }

    /// Parses [`to_csv`](Self::to_csv) output. Supports are rebuilt with
    /// `min_count` since the CSV carries counts only.
    pub fn from_csv(text: &str, min_count: u64) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.starts_with("class,label,bin_origin,bin_width") => {}
            _ => return Err(Error::format("label distribution csv", "missing header")),
        }
        let mut dist: Option<LabelDistribution> = None;
        let mut n_by_class = std::collections::BTreeMap::new();
        for (row, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let bad = |what: &str| Error::format("label distribution csv", format!("row {}: {what}", row + 1));
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() < 4 {
                return Err(bad("expected at least 4 columns"));
            }
            let class: u8 = fields[0].parse().map_err(|_| bad("class"))?;
            let label: u8 = fields[1].parse().map_err(|_| bad("label"))?;
            let origin: f64 = fields[2].parse().map_err(|_| bad("bin_origin"))?;
            let width: f64 = fields[3].parse().map_err(|_| bad("bin_width"))?;
            let counts = fields[4..]
                .iter()
                .map(|c| c.parse::<u64>().map_err(|_| bad("count")))
                .collect::<Result<Vec<_>>>()?;
            if label == LABELS[0] {
                n_by_class.insert(class, counts.iter().sum::<u64>() as usize);
            }
            dist.get_or_insert_with(|| LabelDistribution::new(width))
                .insert(class, label, BinnedSupport::from_counts(origin, width, counts, min_count));
        }
        let mut dist = dist.unwrap_or_else(|| LabelDistribution::new(1.0));
        dist.n = n_by_class.values().sum();
        Ok(dist)
    }
}

/// Overlap indices of one class, labels 2..=6 in order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverlapRow {
    pub class: u8,
    pub values: [f64; 5],
}

/// Table of per-class, per-label overlap indices with their grand mean.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverlapReport {
    pub rows: Vec<OverlapRow>,
    pub mean: f64,
}

impl OverlapReport {
    /// Overlap of `candidate` against `reference` for each of `classes`.
    pub fn compute(
        reference: &LabelDistribution,
        candidate: &LabelDistribution,
        classes: &[u8],
    ) -> Result<Self> {
        let rows = classes
            .iter()
            .map(|&k| {
                Ok(OverlapRow {
                    class: k,
                    values: per_label_overlap(reference, candidate, k)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let all: Vec<f64> = rows.iter().flat_map(|r| r.values).collect();
        let mean = if all.is_empty() {
            0.0
        } else {
            all.iter().sum::<f64>() / all.len() as f64
        };
        Ok(OverlapReport { rows, mean })
    }
}

/// `V^j = overlap_index(reference[k, j], candidate[k, j])` for `j` in 2..=6.
pub fn per_label_overlap(
    reference: &LabelDistribution,
    candidate: &LabelDistribution,
    class: u8,
) -> Result<[f64; 5]> {
    let mut out = [0.0; 5];
    for (slot, &j) in out.iter_mut().zip(LABELS.iter()) {
        let r = reference.get(class, j).ok_or(Error::MissingClass(class))?;
        let c = candidate.get(class, j).ok_or(Error::MissingClass(class))?;
        *slot = overlap_index(r, c)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annot::{sample_expected, ExpectationSpec, IntRange};

    fn box_grid(class: u8, lo: i32, hi: i32, bright: (i32, i32)) -> Vec<Annotation> {
        // Every (left, side, brightness) combination in the given ranges, so
        // each label's support is an exact interval.
        let mut out = Vec::new();
        for left in lo..=hi {
            for b in bright.0..=bright.1 {
                out.push(Annotation::new(class, left, left, 10, b));
            }
        }
        out
    }

    #[test]
    fn identical_distributions_have_zero_overlap() {
        let anns = sample_expected(&ExpectationSpec::for_canvas(64), 5, 2000).unwrap();
        let d = LabelDistribution::from_annotations(&anns, 1.0, 1);
        for k in [0, 1] {
            assert_eq!(per_label_overlap(&d, &d, k).unwrap(), [0.0; 5]);
        }
        let report = OverlapReport::compute(&d, &d, &[0, 1]).unwrap();
        assert_eq!(report.mean, 0.0);
    }

    #[test]
    fn nested_supports_are_negative() {
        let outer = LabelDistribution::from_annotations(&box_grid(0, 0, 40, (100, 200)), 1.0, 1);
        let inner = LabelDistribution::from_annotations(&box_grid(0, 10, 20, (120, 150)), 1.0, 1);
        let v = per_label_overlap(&outer, &inner, 0).unwrap();
        // left/top: [0,40] vs [10,20] -> -(41-11)/41, right/bottom shifted by 10, same ratio.
        let pos = -(41.0 - 11.0) / 41.0;
        let bright = -(101.0 - 31.0) / 101.0;
        let expected = [pos, pos, pos, pos, bright];
        for (a, b) in v.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12, "{v:?}");
            assert!(*a < 0.0);
        }
    }

    #[test]
    fn missing_class_is_reported() {
        let a = LabelDistribution::from_annotations(&box_grid(0, 0, 5, (100, 101)), 1.0, 1);
        assert!(matches!(per_label_overlap(&a, &a, 1), Err(Error::MissingClass(1))));
        let ann = Annotation::new(1, 0, 0, 10, 100);
        assert!(matches!(a.covers(&ann), Err(Error::MissingClass(1))));
    }

    #[test]
    fn biased_vs_expected_is_partial_overlap() {
        use crate::dataset::BiasSpec;
        use crate::rng::{rng_for, Stream};
        let spec = ExpectationSpec::default();
        let expected = sample_expected(&spec, 11, 10_000).unwrap();
        let bias = BiasSpec::default();
        let mut rng = rng_for(11, Stream::Collected, 0);
        let biased: Vec<Annotation> = (0..10_000)
            .map(|i| bias.sample(spec.canvas, (i % 2) as u8, &mut rng))
            .collect();
        let ps = LabelDistribution::from_annotations(&biased, 1.0, 1);
        let pt = LabelDistribution::from_annotations(&expected, 1.0, 1);
        let report = OverlapReport::compute(&ps, &pt, &[0, 1]).unwrap();
        for row in &report.rows {
            for v in row.values {
                assert!(v > 0.4 && v < 1.0, "{report:?}");
            }
        }
        assert!((report.mean - 0.57).abs() <= 0.1, "mean {}", report.mean);
        // brightness: [200,255] inside [100,255] -> 100/156
        assert!((report.rows[0].values[4] - 100.0 / 156.0).abs() < 1e-9);
        let _ = IntRange::new(0, 0);
    }

    #[test]
    fn csv_round_trip() {
        let anns = sample_expected(&ExpectationSpec::for_canvas(32), 8, 300).unwrap();
        let d = LabelDistribution::from_annotations(&anns, 1.0, 1);
        let back = LabelDistribution::from_csv(&d.to_csv(), 1).unwrap();
        assert_eq!(back, d);
        let json = serde_json::to_string(&d).unwrap();
        assert_eq!(serde_json::from_str::<LabelDistribution>(&json).unwrap(), d);
        assert!(LabelDistribution::from_csv("nope\n", 1).is_err());
    }
}
