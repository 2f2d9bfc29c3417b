//! The annotation space and everything measured on it.
//!
//! An [`Annotation`] is the six-field label of a shape image: class, a square
//! bounding box given by its top-left and bottom-right (exclusive) corners,
//! and mean stroke brightness. An [`ExpectationSpec`] declares which
//! annotations a dataset is expected to cover; [`sample_expected`] draws from
//! it. Coverage is compared through binned supports ([`BinnedSupport`]) and
//! the signed overlap index ([`overlap_index`]).

mod distribution;
mod support;

pub use distribution::{per_label_overlap, LabelDistribution, OverlapReport, OverlapRow};
pub use support::{estimate_support, overlap_index, BinnedSupport};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::rng::{rng_for, Stream};
use crate::{Error, Result};

/// Attributable label ids, in order: left, top, right, bottom, brightness.
pub const LABELS: [u8; 5] = [2, 3, 4, 5, 6];

pub const MAX_BRIGHTNESS: i32 = 255;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Canvas {
    pub width: usize,
    pub height: usize,
}

impl Canvas {
    pub const fn square(side: usize) -> Self {
        Canvas {
            width: side,
            height: side,
        }
    }

    pub fn min_side(&self) -> usize {
        self.width.min(self.height)
    }

    pub fn pixels(&self) -> usize {
        self.width * self.height
    }
}

/// Inclusive integer interval.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IntRange {
    pub min: i32,
    pub max: i32,
}

impl IntRange {
    pub const fn new(min: i32, max: i32) -> Self {
        IntRange { min, max }
    }

    pub fn contains(&self, v: i32) -> bool {
        self.min <= v && v <= self.max
    }

    pub fn len(&self) -> usize {
        (self.max - self.min + 1).max(0) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.max < self.min
    }

    pub fn sample(&self, rng: &mut impl rand::Rng) -> i32 {
        rng.random_range(self.min..=self.max)
    }

    /// Rescales the interval from a 128-pixel reference canvas to `side`.
    pub(crate) fn scaled(&self, side: usize) -> IntRange {
        let f = side as f64 / 128.0;
        IntRange::new(
            ((self.min as f64 * f).round() as i32).max(1),
            ((self.max as f64 * f).round() as i32).max(1),
        )
    }
}

/// The six-field label `(class, left, top, right, bottom, brightness)`.
///
/// `right` and `bottom` are exclusive pixel edges, so a single pixel at
/// `(x, y)` has the box `(x, y, x + 1, y + 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Annotation {
    pub class: u8,
    pub left: i32,
    pub top: i32,
    pub right: i32,
    pub bottom: i32,
    pub brightness: i32,
}

impl Annotation {
    pub fn new(class: u8, left: i32, top: i32, side: i32, brightness: i32) -> Self {
        Annotation {
            class,
            left,
            top,
            right: left + side,
            bottom: top + side,
            brightness,
        }
    }

    /// Side length of the bounding box.
    pub fn size(&self) -> i32 {
        self.right - self.left
    }

    /// Label `j` for `j` in 1..=6.
    pub fn label(&self, j: u8) -> i32 {
        match j {
            1 => self.class as i32,
            2 => self.left,
            3 => self.top,
            4 => self.right,
            5 => self.bottom,
            6 => self.brightness,
            _ => panic!("label id {j} out of range 1..=6"),
        }
    }

    pub fn set_label(&mut self, j: u8, v: i32) {
        match j {
            1 => self.class = v as u8,
            2 => self.left = v,
            3 => self.top = v,
            4 => self.right = v,
            5 => self.bottom = v,
            6 => self.brightness = v,
            _ => panic!("label id {j} out of range 1..=6"),
        }
    }

    pub fn labels(&self) -> [i32; 6] {
        [
            self.class as i32,
            self.left,
            self.top,
            self.right,
            self.bottom,
            self.brightness,
        ]
    }

    pub fn is_valid(&self, canvas: Canvas) -> bool {
        0 <= self.left
            && self.left < self.right
            && self.right <= canvas.width as i32
            && 0 <= self.top
            && self.top < self.bottom
            && self.bottom <= canvas.height as i32
            && self.right - self.left == self.bottom - self.top
            && (1..=MAX_BRIGHTNESS).contains(&self.brightness)
    }

    pub fn validate(&self, canvas: Canvas) -> Result<()> {
        if self.is_valid(canvas) {
            Ok(())
        } else {
            Err(Error::RenderDomain {
                annotation: format!("{self:?}"),
                width: canvas.width,
                height: canvas.height,
            })
        }
    }

    /// Maps an arbitrary composite onto the nearest valid annotation:
    /// corners are ordered per axis and clamped to the canvas, the longer
    /// side is shrunk toward the top-left corner until the box is square,
    /// and brightness is clamped to `1..=255`. Idempotent.
    pub fn project_valid(&self, canvas: Canvas) -> Annotation {
        let (w, h) = (canvas.width as i32, canvas.height as i32);
        let axis = |a: i32, b: i32, limit: i32| {
            let lo = a.min(b).clamp(0, limit);
            let hi = a.max(b).clamp(0, limit);
            if lo < hi {
                (lo, hi)
            } else if hi < limit {
                (lo, hi + 1)
            } else {
                (lo - 1, hi)
            }
        };
        let (left, right) = axis(self.left, self.right, w);
        let (top, bottom) = axis(self.top, self.bottom, h);
        let side = (right - left).min(bottom - top);
        Annotation {
            class: self.class,
            left,
            top,
            right: left + side,
            bottom: top + side,
            brightness: self.brightness.clamp(1, MAX_BRIGHTNESS),
        }
    }
}

/// Declared expectation over annotations: uniform class, uniform side
/// length, uniform placement of the box on the canvas, uniform brightness.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpectationSpec {
    pub canvas: Canvas,
    pub size_range: IntRange,
    pub brightness_range: IntRange,
    pub classes: Vec<u8>,
}

impl Default for ExpectationSpec {
    /// Shapes of side 30..=120 px anywhere on a 128 px canvas, brightness
    /// 100..=255, both classes.
    fn default() -> Self {
        ExpectationSpec {
            canvas: Canvas::square(128),
            size_range: IntRange::new(30, 120),
            brightness_range: IntRange::new(100, 255),
            classes: vec![0, 1],
        }
    }
}

impl ExpectationSpec {
    /// The default expectation with sizes rescaled to a `side`-pixel canvas.
    pub fn for_canvas(side: usize) -> Self {
        let base = ExpectationSpec::default();
        ExpectationSpec {
            canvas: Canvas::square(side),
            size_range: base.size_range.scaled(side),
            ..base
        }
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.size_range;
        if s.min <= 0 || s.min > s.max || s.max as usize > self.canvas.min_side() {
            return Err(Error::Spec(format!(
                "size range {}..={} must satisfy 0 < min <= max <= {}",
                s.min,
                s.max,
                self.canvas.min_side()
            )));
        }
        let b = self.brightness_range;
        if b.min < 1 || b.min > b.max || b.max > MAX_BRIGHTNESS {
            return Err(Error::Spec(format!(
                "brightness range {}..={} must satisfy 1 <= min <= max <= 255",
                b.min, b.max
            )));
        }
        if self.classes.is_empty() {
            return Err(Error::Spec("class set is empty".into()));
        }
        Ok(())
    }
}

/// Draws `count` annotations from the expectation. Deterministic in `seed`.
pub fn sample_expected(spec: &ExpectationSpec, seed: u64, count: usize) -> Result<Vec<Annotation>> {
    spec.validate()?;
    if count == 0 {
        return Err(Error::Spec("sample count must be positive".into()));
    }
    let mut rng = rng_for(seed, Stream::Expected, 0);
    let (w, h) = (spec.canvas.width as i32, spec.canvas.height as i32);
    Ok((0..count)
        .map(|_| {
            let class = spec.classes[rng.random_range(0..spec.classes.len())];
            let side = spec.size_range.sample(&mut rng);
            let left = rng.random_range(0..=w - side);
            let top = rng.random_range(0..=h - side);
            let brightness = spec.brightness_range.sample(&mut rng);
            Annotation::new(class, left, top, side, brightness)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn degenerate_ranges_force_values() {
        let spec = ExpectationSpec {
            size_range: IntRange::new(64, 64),
            brightness_range: IntRange::new(200, 200),
            ..ExpectationSpec::default()
        };
        for a in sample_expected(&spec, 99, 500).unwrap() {
            assert_eq!(a.size(), 64);
            assert_eq!(a.brightness, 200);
        }
    }

    #[test]
    fn default_spec_covers_declared_ranges() {
        let anns = sample_expected(&ExpectationSpec::default(), 1, 10_000).unwrap();
        let sizes: Vec<i32> = anns.iter().map(|a| a.size()).collect();
        let bright: Vec<i32> = anns.iter().map(|a| a.brightness).collect();
        assert_eq!(sizes.iter().min(), Some(&30));
        assert_eq!(sizes.iter().max(), Some(&120));
        assert_eq!(bright.iter().min(), Some(&100));
        assert_eq!(bright.iter().max(), Some(&255));
    }

    #[test]
    fn size_mean_matches_uniform_mean() {
        // Mean of U{30,120} is (30 + 120) / 2.
        let expected = (30.0 + 120.0) / 2.0;
        let anns = sample_expected(&ExpectationSpec::default(), 2024, 10_000).unwrap();
        let mean = anns.iter().map(|a| a.size() as f64).sum::<f64>() / anns.len() as f64;
        assert!((mean - expected).abs() <= 1.5, "mean {mean}");
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut spec = ExpectationSpec::default();
        spec.size_range = IntRange::new(0, 10);
        assert!(matches!(sample_expected(&spec, 0, 1), Err(Error::Spec(_))));
        spec = ExpectationSpec::default();
        spec.size_range = IntRange::new(30, 129);
        assert!(spec.validate().is_err());
        spec = ExpectationSpec::default();
        spec.brightness_range = IntRange::new(0, 255);
        assert!(spec.validate().is_err());
        spec = ExpectationSpec::default();
        spec.classes.clear();
        assert!(spec.validate().is_err());
        assert!(sample_expected(&ExpectationSpec::default(), 0, 0).is_err());
    }

    #[test]
    fn scaled_canvas_defaults() {
        let spec = ExpectationSpec::for_canvas(64);
        assert_eq!(spec.size_range, IntRange::new(15, 60));
        assert_eq!(spec.brightness_range, IntRange::new(100, 255));
        spec.validate().unwrap();
    }

    #[test]
    fn projection_examples() {
        let c = Canvas::square(64);
        let a = Annotation {
            class: 1,
            left: 40,
            top: 5,
            right: 10,
            bottom: 70,
            brightness: 300,
        };
        let p = a.project_valid(c);
        assert!(p.is_valid(c));
        assert_eq!((p.left, p.top, p.right, p.bottom, p.brightness), (10, 5, 40, 35, 255));
        let degenerate = Annotation {
            class: 0,
            left: 64,
            top: 3,
            right: 64,
            bottom: 3,
            brightness: 0,
        };
        assert!(degenerate.project_valid(c).is_valid(c));
    }

    proptest! {
        #[test]
        fn sampled_annotations_are_valid(
            seed in any::<u64>(),
            side in 8usize..160,
            smin in 1i32..40,
            sspan in 0i32..40,
            bmin in 1i32..200,
            bspan in 0i32..55,
        ) {
            let smax = (smin + sspan).min(side as i32);
            prop_assume!(smin <= smax);
            let spec = ExpectationSpec {
                canvas: Canvas::square(side),
                size_range: IntRange::new(smin, smax),
                brightness_range: IntRange::new(bmin, bmin + bspan),
                classes: vec![0, 1],
            };
            for a in sample_expected(&spec, seed, 64).unwrap() {
                prop_assert!(a.is_valid(spec.canvas), "{:?}", a);
            }
        }

        #[test]
        fn projection_is_valid_and_idempotent(
            l in -20i32..90, t in -20i32..90, r in -20i32..90, b in -20i32..90, br in -50i32..400,
        ) {
            let c = Canvas::square(64);
            let a = Annotation { class: 0, left: l, top: t, right: r, bottom: b, brightness: br };
            let p = a.project_valid(c);
            prop_assert!(p.is_valid(c), "{:?} -> {:?}", a, p);
            prop_assert_eq!(p.project_valid(c), p);
        }
    }
}
