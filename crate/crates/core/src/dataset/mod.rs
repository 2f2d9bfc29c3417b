//! Datasets: the biased "collected" set, the simulated test set, and the
//! directory container both are stored in.
//!
//! A collected set only exposes its class labels. The annotations it was
//! generated from are kept in a `truth.csv` sidecar for benchmarking; the
//! audit pipeline never reads them.

mod import;
mod io;

pub use import::{import_drawing_corpus, ImportOutcome};
pub use io::SCHEMA_VERSION;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::annot::{sample_expected, Annotation, Canvas, ExpectationSpec, IntRange, MAX_BRIGHTNESS};
use crate::render::{auto_label, render, GrayImage, RenderStyle};
use crate::rng::{derive_seed, rng_for, Rng, Stream};
use crate::{Error, Result};

/// How the collected set deviates from the expectation: a narrower band of
/// sizes and brightness, with shapes kept near the canvas centre.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasSpec {
    pub size_range: IntRange,
    pub brightness_range: IntRange,
    /// Largest offset of the box centre from the canvas centre, per axis.
    pub center_slack: i32,
    pub style: RenderStyle,
}

impl Default for BiasSpec {
    /// Large (90..=120 px on a 128 px canvas), bright (200..=255), centred
    /// within 24 px, hand-drawn.
    fn default() -> Self {
        BiasSpec {
            size_range: IntRange::new(90, 120),
            brightness_range: IntRange::new(200, 255),
            center_slack: 24,
            style: RenderStyle::handdrawn(),
        }
    }
}

impl BiasSpec {
    /// The default bias with sizes and slack rescaled to a `side`-pixel canvas.
    pub fn for_canvas(side: usize) -> Self {
        let base = BiasSpec::default();
        BiasSpec {
            size_range: base.size_range.scaled(side),
            center_slack: (base.center_slack as f64 * side as f64 / 128.0).round() as i32,
            ..base
        }
    }

    pub fn validate(&self, canvas: Canvas) -> Result<()> {
        let s = self.size_range;
        if s.min < 1 || s.min > s.max || s.max as usize > canvas.min_side() {
            return Err(Error::Spec(format!(
                "bias size range {}..={} does not fit a {}x{} canvas",
                s.min, s.max, canvas.width, canvas.height
            )));
        }
        let b = self.brightness_range;
        if b.min < 1 || b.min > b.max || b.max > MAX_BRIGHTNESS {
            return Err(Error::Spec(format!(
                "bias brightness range {}..={} outside 1..=255",
                b.min, b.max
            )));
        }
        if self.center_slack < 0 {
            return Err(Error::Spec("center slack must be non-negative".into()));
        }
        self.style.validate()
    }

    pub fn sample(&self, canvas: Canvas, class: u8, rng: &mut Rng) -> Annotation {
        let side = self.size_range.sample(rng);
        let (w, h) = (canvas.width as i32, canvas.height as i32);
        let slack = self.center_slack;
        let dx = rng.random_range(-slack..=slack);
        let dy = rng.random_range(-slack..=slack);
        let left = ((w - side) / 2 + dx).clamp(0, w - side);
        let top = ((h - side) / 2 + dy).clamp(0, h - side);
        let brightness = self.brightness_range.sample(rng);
        Annotation::new(class, left, top, side, brightness)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Collected,
    Test,
    Imported,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub schema_version: u32,
    pub kind: DatasetKind,
    pub canvas: Canvas,
    pub seed: u64,
    pub style: RenderStyle,
    pub n: usize,
    /// Which of the six label fields are trusted, `y1..y6`.
    pub label_mask: [bool; 6],
}

pub const CLASS_ONLY: [bool; 6] = [true, false, false, false, false, false];
pub const ALL_LABELS: [bool; 6] = [true; 6];

/// Images with their labels. Untrusted label fields are stored as `-1`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub meta: DatasetMeta,
    pub images: Vec<GrayImage>,
    pub labels: Vec<[i32; 6]>,
    /// Labels recovered by [`auto_label`], when computed.
    pub auto_labels: Option<Vec<Annotation>>,
    /// Generating annotations of a collected set. Saved to a sidecar and
    /// never reloaded by [`Dataset::load`]; see [`Dataset::load_truth`].
    pub truth: Option<Vec<Annotation>>,
}

impl Dataset {
    pub fn empty(meta: DatasetMeta) -> Self {
        Dataset {
            meta,
            images: Vec::new(),
            labels: Vec::new(),
            auto_labels: None,
            truth: None,
        }
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn class(&self, i: usize) -> u8 {
        self.labels[i][0] as u8
    }

    pub fn classes(&self) -> Vec<u8> {
        self.labels.iter().map(|l| l[0] as u8).collect()
    }

    /// The full trusted annotation of sample `i`, if every field is trusted.
    pub fn annotation(&self, i: usize) -> Option<Annotation> {
        if self.meta.label_mask != ALL_LABELS {
            return None;
        }
        let l = self.labels[i];
        Some(Annotation {
            class: l[0] as u8,
            left: l[1],
            top: l[2],
            right: l[3],
            bottom: l[4],
            brightness: l[5],
        })
    }

    pub fn annotations(&self) -> Option<Vec<Annotation>> {
        (0..self.len()).map(|i| self.annotation(i)).collect()
    }

    /// Runs the auto-labeler over every image and stores the result.
    pub fn compute_auto_labels(&mut self) -> Result<&[Annotation]> {
        let classes = self.classes();
        let labels = self
            .images
            .par_iter()
            .zip(classes.par_iter())
            .enumerate()
            .map(|(i, (img, &k))| {
                auto_label(img, k).map_err(|e| Error::Sample {
                    index: i,
                    source: Box::new(e),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self.auto_labels.insert(labels))
    }

    pub fn without_truth(&self) -> Dataset {
        Dataset {
            truth: None,
            ..self.clone()
        }
    }

    pub(crate) fn check(&self) -> Result<()> {
        let n = self.meta.n;
        if self.images.len() != n || self.labels.len() != n {
            return Err(Error::format(
                "dataset",
                format!(
                    "meta says {n} samples, found {} images and {} labels",
                    self.images.len(),
                    self.labels.len()
                ),
            ));
        }
        for (i, img) in self.images.iter().enumerate() {
            if img.canvas() != self.meta.canvas {
                return Err(Error::Dimension(format!("image {i} is {}x{}", img.width, img.height)));
            }
        }
        if self.meta.label_mask == ALL_LABELS {
            for i in 0..n {
                let a = self.annotation(i).expect("all labels trusted");
                if !a.is_valid(self.meta.canvas) {
                    return Err(Error::format("labels", format!("row {i} violates annotation invariants")));
                }
            }
        }
        Ok(())
    }
}

/// Generates the biased collected set: classes alternate, annotations come
/// from `bias`, images are rendered in the bias style. Only classes are
/// exposed as labels.
pub fn gen_collected(bias: &BiasSpec, canvas: Canvas, n: usize, seed: u64) -> Result<Dataset> {
    bias.validate(canvas)?;
    let meta = DatasetMeta {
        schema_version: SCHEMA_VERSION,
        kind: DatasetKind::Collected,
        canvas,
        seed,
        style: bias.style,
        n,
        label_mask: CLASS_ONLY,
    };
    let truth: Vec<Annotation> = (0..n)
        .map(|i| {
            let mut rng = rng_for(seed, Stream::Collected, i as u64);
            bias.sample(canvas, (i % 2) as u8, &mut rng)
        })
        .collect();
    let images = render_all(&truth, canvas, &bias.style, seed)?;
    Ok(Dataset {
        meta,
        images,
        labels: truth
            .iter()
            .map(|a| [a.class as i32, -1, -1, -1, -1, -1])
            .collect(),
        auto_labels: None,
        truth: Some(truth),
    })
}

/// Generates the simulated test set from the expectation, rendered clean,
/// with every label trusted. Classes are assigned round-robin over
/// `spec.classes` so the set stays balanced.
pub fn gen_test(spec: &ExpectationSpec, m: usize, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    let style = RenderStyle::clean();
    let meta = DatasetMeta {
        schema_version: SCHEMA_VERSION,
        kind: DatasetKind::Test,
        canvas: spec.canvas,
        seed,
        style,
        n: m,
        label_mask: ALL_LABELS,
    };
    if m == 0 {
        return Ok(Dataset::empty(meta));
    }
    let mut anns = sample_expected(spec, seed, m)?;
    for (i, a) in anns.iter_mut().enumerate() {
        a.class = spec.classes[i % spec.classes.len()];
    }
    let images = render_all(&anns, spec.canvas, &style, seed)?;
    Ok(Dataset {
        meta,
        images,
        labels: anns.iter().map(|a| a.labels()).collect(),
        auto_labels: None,
        truth: None,
    })
}

fn render_all(anns: &[Annotation], canvas: Canvas, style: &RenderStyle, seed: u64) -> Result<Vec<GrayImage>> {
    anns.par_iter()
        .enumerate()
        .map(|(i, a)| {
            render(a, canvas, style, derive_seed(seed, Stream::Style, i as u64)).map_err(|e| Error::Sample {
                index: i,
                source: Box::new(e),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_sets_have_valid_meta() {
        let c = gen_collected(&BiasSpec::default(), Canvas::square(128), 0, 1).unwrap();
        assert_eq!(c.len(), 0);
        assert_eq!(c.meta.n, 0);
        c.check().unwrap();
        let t = gen_test(&ExpectationSpec::default(), 0, 1).unwrap();
        assert!(t.is_empty());
        t.check().unwrap();
    }

    #[test]
    fn classes_are_balanced() {
        let c = gen_collected(&BiasSpec::for_canvas(32), Canvas::square(32), 101, 3).unwrap();
        let ones = c.classes().iter().filter(|&&k| k == 1).count();
        assert!((101 - 2 * ones as i64).abs() <= 1);
        let t = gen_test(&ExpectationSpec::for_canvas(32), 77, 3).unwrap();
        let ones = t.classes().iter().filter(|&&k| k == 1).count();
        assert!((77 - 2 * ones as i64).abs() <= 1);
    }

    #[test]
    fn collected_set_exposes_only_classes() {
        let c = gen_collected(&BiasSpec::for_canvas(64), Canvas::square(64), 10, 3).unwrap();
        assert!(c.annotation(0).is_none());
        assert!(c.labels.iter().all(|l| l[1..].iter().all(|&v| v == -1)));
        assert_eq!(c.truth.as_ref().unwrap().len(), 10);
    }

    #[test]
    fn auto_labels_of_collected_set_stay_in_the_bias_band() {
        let bias = BiasSpec::default();
        let mut c = gen_collected(&bias, Canvas::square(128), 1000, 21).unwrap();
        let truth = c.truth.clone().unwrap();
        let labels = c.compute_auto_labels().unwrap().to_vec();
        for (lab, t) in labels.iter().zip(&truth) {
            assert!((88..=122).contains(&lab.size()), "{lab:?} from {t:?}");
            assert!((196..=255).contains(&lab.brightness), "{lab:?} from {t:?}");
            assert!((lab.size() - t.size()).abs() <= 4);
        }
    }

    #[test]
    fn test_set_is_deterministic() {
        let spec = ExpectationSpec::for_canvas(32);
        let a = gen_test(&spec, 50, 9).unwrap();
        let b = gen_test(&spec, 50, 9).unwrap();
        assert_eq!(a, b);
        let c = gen_test(&spec, 50, 10).unwrap();
        assert_ne!(a.images, c.images);
    }

    #[test]
    fn incompatible_bias_is_rejected() {
        let bias = BiasSpec::default();
        assert!(matches!(
            gen_collected(&bias, Canvas::square(64), 10, 0),
            Err(Error::Spec(_))
        ));
    }

    #[test]
    fn test_set_labels_match_expectation_ranges() {
        let spec = ExpectationSpec::default();
        let t = gen_test(&spec, 2000, 4).unwrap();
        for a in t.annotations().unwrap() {
            assert!(spec.size_range.contains(a.size()));
            assert!(spec.brightness_range.contains(a.brightness));
        }
    }
}
