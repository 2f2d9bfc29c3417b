//! The parametric simulator and its inverse, the auto-labeler.
//!
//! [`render`] draws the outline of a circle inscribed in the annotation's
//! bounding box (class 0) or of the box itself (class 1) with uniform
//! intensity and no antialiasing. The hand-drawn style perturbs the stroke
//! path and adds pixel noise; it produces the synthetic "collected" corpus.
//! [`auto_label`] recovers an annotation from the extent and mean intensity
//! of the foreground.

mod export;
mod handdrawn;
mod raster;

pub use export::{contact_sheet_svg, write_pgm};
pub(crate) use raster::polyline as raster_polyline;

use serde::{Deserialize, Serialize};

use crate::annot::{Annotation, Canvas};
use crate::rng::{rng_for, Stream};
use crate::{Error, Result};

pub const CIRCLE: u8 = 0;
pub const SQUARE: u8 = 1;

/// Row-major 8-bit grayscale image.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize) -> Self {
        GrayImage {
            width,
            height,
            pixels: vec![0; width * height],
        }
    }

    pub fn from_pixels(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::Dimension(format!(
                "{} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        Ok(GrayImage {
            width,
            height,
            pixels,
        })
    }

    pub fn canvas(&self) -> Canvas {
        Canvas {
            width: self.width,
            height: self.height,
        }
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    /// Writes `v` at `(x, y)` if the point is on the canvas.
    pub(crate) fn put(&mut self, x: i64, y: i64, v: u8) {
        if x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height {
            self.pixels[y as usize * self.width + x as usize] = v;
        }
    }

    pub fn foreground(&self) -> impl Iterator<Item = (usize, usize, u8)> + '_ {
        self.pixels
            .iter()
            .enumerate()
            .filter(|(_, &p)| p != 0)
            .map(|(i, &p)| (i % self.width, i / self.width, p))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RenderKind {
    Clean,
    Handdrawn,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenderStyle {
    pub kind: RenderKind,
    pub stroke_thickness: u32,
    /// Maximum path displacement in pixels (hand-drawn only).
    pub jitter_amplitude: f64,
    pub wobble_wavelength: f64,
    /// Standard deviation of the stroke-pixel intensity noise.
    pub noise_std: f64,
}

impl RenderStyle {
    pub fn clean() -> Self {
        RenderStyle {
            kind: RenderKind::Clean,
            stroke_thickness: 2,
            jitter_amplitude: 0.0,
            wobble_wavelength: 16.0,
            noise_std: 0.0,
        }
    }

    pub fn handdrawn() -> Self {
        RenderStyle {
            kind: RenderKind::Handdrawn,
            jitter_amplitude: 1.0,
            noise_std: 4.0,
            ..RenderStyle::clean()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.stroke_thickness < 1 {
            return Err(Error::Spec("stroke thickness must be at least 1".into()));
        }
        if !(self.jitter_amplitude >= 0.0 && self.noise_std >= 0.0 && self.wobble_wavelength > 0.0) {
            return Err(Error::Spec(
                "jitter amplitude and noise must be non-negative, wavelength positive".into(),
            ));
        }
        Ok(())
    }
}

impl Default for RenderStyle {
    fn default() -> Self {
        RenderStyle::clean()
    }
}

/// Renders the outline described by `ann` on an empty canvas.
pub fn render(ann: &Annotation, canvas: Canvas, style: &RenderStyle, seed: u64) -> Result<GrayImage> {
    ann.validate(canvas)?;
    style.validate()?;
    let mut img = GrayImage::new(canvas.width, canvas.height);
    let value = ann.brightness as u8;
    let t = style.stroke_thickness as i64;
    let perturbed = style.kind == RenderKind::Handdrawn;
    let mut rng = rng_for(seed, Stream::Style, 0);
    if perturbed && style.jitter_amplitude > 0.0 {
        handdrawn::stroke(&mut img, ann, style, value, &mut rng);
    } else {
        match ann.class {
            CIRCLE => raster::circle(&mut img, ann, t, value),
            _ => raster::square(&mut img, ann, t, value),
        }
    }
    if perturbed && style.noise_std > 0.0 {
        handdrawn::add_noise(&mut img, style.noise_std, &mut rng);
    }
    Ok(img)
}

/// A canvas plus a style: the simulator `G` used by the detector.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Simulator {
    pub canvas: Canvas,
    pub style: RenderStyle,
}

impl Simulator {
    pub fn clean(canvas: Canvas) -> Self {
        Simulator {
            canvas,
            style: RenderStyle::clean(),
        }
    }

    pub fn render(&self, ann: &Annotation, seed: u64) -> Result<GrayImage> {
        render(ann, self.canvas, &self.style, seed)
    }
}

/// Labels a shape image: tight foreground extent squared up by growing the
/// shorter side symmetrically (shifted back inside the canvas if needed),
/// and rounded mean foreground intensity. The class is supplied.
pub fn auto_label(img: &GrayImage, class: u8) -> Result<Annotation> {
    let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
    let (mut sum, mut n) = (0u64, 0u64);
    for (x, y, p) in img.foreground() {
        x0 = x0.min(x);
        y0 = y0.min(y);
        x1 = x1.max(x + 1);
        y1 = y1.max(y + 1);
        sum += p as u64;
        n += 1;
    }
    if n == 0 {
        return Err(Error::NoForeground);
    }
    let square_up = |lo: usize, hi: usize, side: usize, limit: usize| -> (i32, i32) {
        let grow = side - (hi - lo);
        let mut lo = lo as i64 - (grow / 2) as i64;
        let mut hi = hi as i64 + (grow - grow / 2) as i64;
        if lo < 0 {
            hi -= lo;
            lo = 0;
        }
        if hi > limit as i64 {
            lo -= hi - limit as i64;
            hi = limit as i64;
        }
        (lo as i32, hi as i32)
    };
    let side = (x1 - x0).max(y1 - y0);
    let (left, right) = square_up(x0, x1, side, img.width);
    let (top, bottom) = square_up(y0, y1, side, img.height);
    Ok(Annotation {
        class,
        left,
        top,
        right,
        bottom,
        brightness: ((sum as f64 / n as f64).round() as i32).clamp(1, 255),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annot::{sample_expected, ExpectationSpec};
    use proptest::prelude::*;

    #[test]
    fn clean_square_is_two_pixel_outline() {
        let canvas = Canvas::square(128);
        let ann = Annotation::new(SQUARE, 32, 32, 64, 200);
        let img = render(&ann, canvas, &RenderStyle::clean(), 0).unwrap();
        for y in 0..128 {
            for x in 0..128 {
                let inside = (32..96).contains(&x) && (32..96).contains(&y);
                let band = inside
                    && (x < 34 || x >= 94 || y < 34 || y >= 94);
                let p = img.get(x, y);
                assert_eq!(p, if band { 200 } else { 0 }, "pixel ({x},{y})");
            }
        }
    }

    #[test]
    fn handdrawn_without_perturbation_equals_clean() {
        let canvas = Canvas::square(64);
        let style = RenderStyle {
            kind: RenderKind::Handdrawn,
            jitter_amplitude: 0.0,
            noise_std: 0.0,
            ..RenderStyle::clean()
        };
        for ann in sample_expected(&ExpectationSpec::for_canvas(64), 4, 50).unwrap() {
            let a = render(&ann, canvas, &style, 17).unwrap();
            let b = render(&ann, canvas, &RenderStyle::clean(), 17).unwrap();
            assert_eq!(a, b);
        }
    }

    /// Scan-line oracle for the full-canvas circle: the rasterized ring must
    /// touch every canvas edge and no foreground may fall outside the box.
    #[test]
    fn full_canvas_circle_extent() {
        let canvas = Canvas::square(128);
        let ann = Annotation::new(CIRCLE, 0, 0, 128, 255);
        let img = render(&ann, canvas, &RenderStyle::clean(), 0).unwrap();
        let xs: Vec<usize> = img.foreground().map(|(x, _, _)| x).collect();
        let ys: Vec<usize> = img.foreground().map(|(_, y, _)| y).collect();
        assert_eq!((*xs.iter().min().unwrap(), *xs.iter().max().unwrap()), (0, 127));
        assert_eq!((*ys.iter().min().unwrap(), *ys.iter().max().unwrap()), (0, 127));
        let lab = auto_label(&img, CIRCLE).unwrap();
        for (a, b) in lab.labels().iter().zip(ann.labels()) {
            assert!((a - b).abs() <= 1);
        }
        assert_eq!(lab.brightness, 255);
        // Oracle: four-fold symmetry of the rasterized midpoint circle.
        for (x, y, _) in img.foreground() {
            assert_ne!(img.get(127 - x, y), 0);
            assert_ne!(img.get(x, 127 - y), 0);
            assert_ne!(img.get(y, x), 0);
        }
    }

    #[test]
    fn single_pixel_label() {
        let mut img = GrayImage::new(16, 16);
        img.put(5, 7, 200);
        let a = auto_label(&img, 1).unwrap();
        assert_eq!((a.left, a.top, a.right, a.bottom, a.brightness), (5, 7, 6, 8, 200));
        assert_eq!(a.class, 1);
    }

    #[test]
    fn empty_image_has_no_foreground() {
        assert!(matches!(auto_label(&GrayImage::new(8, 8), 0), Err(Error::NoForeground)));
    }

    #[test]
    fn labeler_squares_up_against_edges() {
        let mut img = GrayImage::new(10, 10);
        // 2 wide, 6 tall, hugging the left edge
        for y in 2..8 {
            img.put(0, y, 50);
            img.put(1, y, 50);
        }
        let a = auto_label(&img, 0).unwrap();
        assert!(a.is_valid(img.canvas()), "{a:?}");
        assert_eq!((a.left, a.right, a.top, a.bottom), (0, 6, 2, 8));
    }

    #[test]
    fn out_of_canvas_annotation_is_rejected() {
        let ann = Annotation::new(0, 100, 100, 40, 200);
        let err = render(&ann, Canvas::square(128), &RenderStyle::clean(), 0).unwrap_err();
        assert!(matches!(err, Error::RenderDomain { .. }));
    }

    #[test]
    fn round_trip_over_sampled_annotations() {
        let spec = ExpectationSpec::default();
        for ann in sample_expected(&spec, 77, 1000).unwrap() {
            let img = render(&ann, spec.canvas, &RenderStyle::clean(), 0).unwrap();
            let lab = auto_label(&img, ann.class).unwrap();
            for j in 2..=5 {
                assert!((lab.label(j) - ann.label(j)).abs() <= 1, "{ann:?} -> {lab:?}");
            }
            assert_eq!(lab.brightness, ann.brightness);
        }
    }

    #[test]
    fn handdrawn_is_deterministic_and_labelable() {
        let canvas = Canvas::square(64);
        let style = RenderStyle::handdrawn();
        for ann in sample_expected(&ExpectationSpec::for_canvas(64), 9, 40).unwrap() {
            let a = render(&ann, canvas, &style, 123).unwrap();
            assert_eq!(a, render(&ann, canvas, &style, 123).unwrap());
            let lab = auto_label(&a, ann.class).unwrap();
            assert!((lab.brightness - ann.brightness).abs() <= 3, "{ann:?} {lab:?}");
        }
    }

    proptest! {
        #[test]
        fn clean_round_trip(seed in any::<u64>()) {
            let spec = ExpectationSpec::for_canvas(64);
            let ann = sample_expected(&spec, seed, 1).unwrap()[0];
            let img = render(&ann, spec.canvas, &RenderStyle::clean(), seed).unwrap();
            let lab = auto_label(&img, ann.class).unwrap();
            for j in 2..=5 {
                prop_assert!((lab.label(j) - ann.label(j)).abs() <= 1);
            }
            prop_assert_eq!(lab.brightness, ann.brightness);
        }

        #[test]
        fn strokes_stay_near_the_box(seed in any::<u64>(), handdrawn in any::<bool>()) {
            let spec = ExpectationSpec::for_canvas(64);
            let ann = sample_expected(&spec, seed, 1).unwrap()[0];
            let style = if handdrawn { RenderStyle::handdrawn() } else { RenderStyle::clean() };
            let img = render(&ann, spec.canvas, &style, seed).unwrap();
            let margin = style.stroke_thickness as i32 + style.jitter_amplitude.ceil() as i32;
            for (x, y, _) in img.foreground() {
                let (x, y) = (x as i32, y as i32);
                prop_assert!(x >= ann.left - margin && x < ann.right + margin);
                prop_assert!(y >= ann.top - margin && y < ann.bottom + margin);
            }
        }
    }
}
