//! Exact Shapley attribution of detector scores to the five attributable
//! labels, and the marginal representation estimate built from the signs
//! of those attributions.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::annot::{
    estimate_support, sample_expected, Annotation, ExpectationSpec, LabelDistribution, OverlapReport, LABELS,
};
use crate::detector::max_softmax;
use crate::nn::Model;
use crate::render::Simulator;
use crate::rng::{derive_seed, rng_for, Stream};
use crate::{Error, Result};

pub const FEATURES: usize = 5;
pub const COALITIONS: usize = 1 << FEATURES;

/// How absent features are filled in: each coalition is averaged over
/// `background` draws from `source`, with the class kept from the
/// explained annotation and the composite projected to validity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskingPolicy {
    pub background: usize,
    pub source: ExpectationSpec,
}

impl MaskingPolicy {
    pub fn new(source: ExpectationSpec) -> Self {
        MaskingPolicy { background: 8, source }
    }

    pub fn validate(&self) -> Result<()> {
        if self.background == 0 {
            return Err(Error::Spec("masking policy needs at least one background draw".into()));
        }
        self.source.validate()
    }

    /// The background annotations used for every explained sample.
    pub fn backgrounds(&self, seed: u64) -> Result<Vec<Annotation>> {
        sample_expected(&self.source, derive_seed(seed, Stream::Background, 0), self.background)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributionRecord {
    pub index: usize,
    pub base: f64,
    /// One value per label 2..=6.
    pub phi: [f64; FEATURES],
    pub score: f64,
}

impl AttributionRecord {
    pub fn additivity_gap(&self) -> f64 {
        (self.score - self.base - self.phi.iter().sum::<f64>()).abs()
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

/// Shapley values of a 5-player game given by `v[mask]`, where bit `j` of
/// `mask` means feature `j` is present. Returns `(v(empty), phi)`.
pub fn shapley_from_game(v: &[f64; COALITIONS]) -> (f64, [f64; FEATURES]) {
    let n = FEATURES;
    let weight: Vec<f64> = (0..n)
        .map(|s| factorial(s) * factorial(n - s - 1) / factorial(n))
        .collect();
    let mut phi = [0.0; FEATURES];
    for (j, p) in phi.iter_mut().enumerate() {
        let bit = 1 << j;
        for mask in 0..COALITIONS {
            if mask & bit == 0 {
                *p += weight[(mask as u32).count_ones() as usize] * (v[mask | bit] - v[mask]);
            }
        }
    }
    (v[0], phi)
}

/// Composite for one coalition: features in `mask` from `ann`, the rest
/// from `background`, class from `ann`.
pub fn composite(ann: &Annotation, background: &Annotation, mask: usize, policy: &MaskingPolicy) -> Annotation {
    let mut c = *background;
    c.class = ann.class;
    for (j, &label) in LABELS.iter().enumerate() {
        if mask & (1 << j) != 0 {
            c.set_label(label, ann.label(label));
        }
    }
    c.project_valid(policy.source.canvas)
}

fn coalition_name(mask: usize) -> String {
    let parts: Vec<String> = LABELS
        .iter()
        .enumerate()
        .filter(|(j, _)| mask & (1 << j) != 0)
        .map(|(_, l)| format!("y{l}"))
        .collect();
    format!("{{{}}}", parts.join(","))
}

fn explain<F>(value_fn: &mut F, ann: &Annotation, backgrounds: &[Annotation], policy: &MaskingPolicy, index: usize) -> Result<AttributionRecord>
where
    F: FnMut(&[Annotation]) -> Result<Vec<f64>>,
{
    // Identical composites are evaluated once.
    let mut unique: Vec<Annotation> = Vec::new();
    let mut slot: HashMap<Annotation, usize> = HashMap::new();
    let mut ids = Vec::with_capacity(COALITIONS * backgrounds.len());
    for mask in 0..COALITIONS {
        for bg in backgrounds {
            let c = composite(ann, bg, mask, policy);
            let id = *slot.entry(c).or_insert_with(|| {
                unique.push(c);
                unique.len() - 1
            });
            ids.push(id);
        }
    }
    let values = value_fn(&unique).map_err(|e| {
        // attribute the failure to the first coalition that needs the
        // offending composite, when the error names a sample
        let coalition = match &e {
            Error::Sample { index, .. } => ids
                .iter()
                .position(|id| id == index)
                .map_or_else(|| "?".into(), |p| coalition_name(p / backgrounds.len())),
            _ => "{}".into(),
        };
        Error::Coalition {
            coalition,
            source: Box::new(e),
        }
    })?;
    if values.len() != unique.len() {
        return Err(Error::Dimension(format!(
            "value function returned {} values for {} inputs",
            values.len(),
            unique.len()
        )));
    }
    let b = backgrounds.len() as f64;
    let mut v = [0.0; COALITIONS];
    for (mask, vm) in v.iter_mut().enumerate() {
        *vm = ids[mask * backgrounds.len()..(mask + 1) * backgrounds.len()]
            .iter()
            .map(|&id| values[id])
            .sum::<f64>()
            / b;
    }
    let (base, phi) = shapley_from_game(&v);
    Ok(AttributionRecord {
        index,
        base,
        phi,
        score: v[COALITIONS - 1],
    })
}

/// Exact Shapley values of `value_fn` at `ann`. `value_fn` maps a batch of
/// valid annotations to one value each.
pub fn shapley_exact<F>(mut value_fn: F, ann: &Annotation, policy: &MaskingPolicy, seed: u64) -> Result<AttributionRecord>
where
    F: FnMut(&[Annotation]) -> Result<Vec<f64>>,
{
    policy.validate()?;
    ann.validate(policy.source.canvas)?;
    let backgrounds = policy.backgrounds(seed)?;
    explain(&mut value_fn, ann, &backgrounds, policy, 0)
}

/// Scores of clean renders of `anns` at temperature `t`.
pub fn detector_values(model: &Model, sim: &Simulator, anns: &[Annotation], t: f64) -> Result<Vec<f64>> {
    Ok(crate::detector::logits(model, anns, sim)?
        .iter()
        .map(|z| max_softmax(z, t))
        .collect())
}

/// Attributes the detector score of every annotation in `testset`. Records
/// carry the position in `testset` as their index.
pub fn attribute_testset(
    model: &Model,
    t: f64,
    testset: &[Annotation],
    policy: &MaskingPolicy,
    seed: u64,
) -> Result<Vec<AttributionRecord>> {
    policy.validate()?;
    let sim = Simulator::clean(policy.source.canvas);
    let backgrounds = policy.backgrounds(seed)?;
    testset
        .par_iter()
        .enumerate()
        .map(|(i, ann)| {
            ann.validate(policy.source.canvas).map_err(|e| Error::Sample {
                index: i,
                source: Box::new(e),
            })?;
            let mut f = |batch: &[Annotation]| detector_values(model, &sim, batch, t);
            explain(&mut f, ann, &backgrounds, policy, i)
        })
        .collect()
}

/// Picks up to `count` indices, split across classes in proportion to
/// their frequency (largest remainder), returned in ascending order.
pub fn select_stratified(annotations: &[Annotation], count: usize, seed: u64) -> Vec<usize> {
    if count >= annotations.len() {
        return (0..annotations.len()).collect();
    }
    let mut classes: Vec<u8> = annotations.iter().map(|a| a.class).collect();
    classes.sort_unstable();
    classes.dedup();
    let groups: Vec<Vec<usize>> = classes
        .iter()
        .map(|&k| (0..annotations.len()).filter(|&i| annotations[i].class == k).collect())
        .collect();
    let n = annotations.len() as f64;
    let exact: Vec<f64> = groups.iter().map(|g| g.len() as f64 * count as f64 / n).collect();
    let mut quota: Vec<usize> = exact.iter().map(|q| q.floor() as usize).collect();
    let mut order: Vec<usize> = (0..groups.len()).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())));
    let mut left = count - quota.iter().sum::<usize>();
    for &g in order.iter().cycle().take(groups.len() * 2) {
        if left == 0 {
            break;
        }
        if quota[g] < groups[g].len() {
            quota[g] += 1;
            left -= 1;
        }
    }
    let mut picked = Vec::with_capacity(count);
    for (g, (mut members, q)) in groups.into_iter().zip(quota).enumerate() {
        members.shuffle(&mut rng_for(seed, Stream::Split, 1 + g as u64));
        picked.extend_from_slice(&members[..q]);
    }
    picked.sort_unstable();
    picked
}

/// Marginal representation P⁺: per class and label, the histogram of label
/// values whose attribution is non-negative.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Representation {
    pub distribution: LabelDistribution,
    /// `(class, label)` pairs without a single non-negative attribution.
    pub empty: Vec<(u8, u8)>,
}

/// Builds P⁺ for `classes` from `records`, whose indices point into
/// `annotations`.
pub fn marginal_representation(
    records: &[AttributionRecord],
    annotations: &[Annotation],
    classes: &[u8],
    bin_width: f64,
) -> Result<Representation> {
    let mut rep = Representation {
        distribution: LabelDistribution::new(bin_width),
        empty: Vec::new(),
    };
    for &k in classes {
        let of_class: Vec<&AttributionRecord> = records
            .iter()
            .filter(|r| annotations.get(r.index).is_some_and(|a| a.class == k))
            .collect();
        if of_class.is_empty() {
            return Err(Error::MissingClass(k));
        }
        rep.distribution.n += of_class.len();
        for (j, &label) in LABELS.iter().enumerate() {
            let values: Vec<f64> = of_class
                .iter()
                .filter(|r| r.phi[j] >= 0.0)
                .map(|r| annotations[r.index].label(label) as f64)
                .collect();
            if values.is_empty() {
                rep.empty.push((k, label));
            }
            rep.distribution.insert(k, label, estimate_support(&values, bin_width, 1));
        }
    }
    Ok(rep)
}

/// Overlap of an estimated representation against the collected supports.
pub fn audit_overlap(estimate: &LabelDistribution, collected: &LabelDistribution, classes: &[u8]) -> Result<OverlapReport> {
    OverlapReport::compute(collected, estimate, classes)
}
