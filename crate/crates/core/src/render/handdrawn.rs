//! Hand-drawn look: a wobbling stroke path plus intensity noise.
//!
//! The stroke centreline runs half a stroke inside the bounding box. Each
//! path vertex is displaced along the local outward normal by the sum of
//! two sinusoids of random phase plus a small per-vertex jitter, scaled to
//! the style's jitter amplitude and clamped to it.

use std::f64::consts::TAU;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use super::{GrayImage, RenderStyle, CIRCLE};
use crate::annot::Annotation;
use crate::rng::Rng;

const VERTEX_SPACING: f64 = 2.0;

pub(super) fn stroke(img: &mut GrayImage, ann: &Annotation, style: &RenderStyle, v: u8, rng: &mut Rng) {
    let t = style.stroke_thickness as f64;
    let path = if ann.class == CIRCLE {
        circle_path(ann, t, rng)
    } else {
        square_path(ann, t)
    };
    let amp = style.jitter_amplitude;
    let wave = style.wobble_wavelength;
    let (p1, p2) = (rng.random_range(0.0..TAU), rng.random_range(0.0..TAU));
    let mut arc = 0.0;
    let mut prev: Option<(f64, f64)> = None;
    let displaced: Vec<(f64, f64)> = path
        .iter()
        .map(|&(x, y, nx, ny)| {
            if let Some((px, py)) = prev {
                arc += ((x - px).powi(2) + (y - py).powi(2)).sqrt();
            }
            prev = Some((x, y));
            let w = 0.6 * (TAU * arc / wave + p1).sin()
                + 0.3 * (TAU * arc / (0.43 * wave) + p2).sin()
                + rng.random_range(-0.25..0.25);
            let d = amp * w.clamp(-1.0, 1.0);
            (x + d * nx, y + d * ny)
        })
        .collect();
    super::raster::polyline(img, &displaced, style.stroke_thickness, v);
}

/// Closed circle path with vertices `(x, y, normal_x, normal_y)`, starting
/// at a random angle.
fn circle_path(ann: &Annotation, t: f64, rng: &mut Rng) -> Vec<(f64, f64, f64, f64)> {
    let side = ann.size() as f64;
    let (cx, cy) = (ann.left as f64 + side / 2.0, ann.top as f64 + side / 2.0);
    let rho = (side / 2.0 - t / 2.0).max(0.0);
    let n = ((TAU * rho / VERTEX_SPACING).ceil() as usize).max(12);
    let start = rng.random_range(0.0..TAU);
    (0..=n)
        .map(|i| {
            let a = start + TAU * i as f64 / n as f64;
            let (s, c) = a.sin_cos();
            (cx + rho * c, cy + rho * s, c, s)
        })
        .collect()
}

fn square_path(ann: &Annotation, t: f64) -> Vec<(f64, f64, f64, f64)> {
    let h = t / 2.0;
    let (l, tp) = (ann.left as f64 + h, ann.top as f64 + h);
    let (r, b) = (ann.right as f64 - h, ann.bottom as f64 - h);
    // corners clockwise with the outward normal of the edge leaving each corner
    let corners = [
        ((l, tp), (0.0, -1.0)),
        ((r, tp), (1.0, 0.0)),
        ((r, b), (0.0, 1.0)),
        ((l, b), (-1.0, 0.0)),
    ];
    let mut out = Vec::new();
    for i in 0..4 {
        let ((x0, y0), (nx, ny)) = corners[i];
        let ((x1, y1), _) = corners[(i + 1) % 4];
        let len = ((x1 - x0).powi(2) + (y1 - y0).powi(2)).sqrt();
        let n = ((len / VERTEX_SPACING).ceil() as usize).max(1);
        for k in 0..n {
            let f = k as f64 / n as f64;
            out.push((x0 + f * (x1 - x0), y0 + f * (y1 - y0), nx, ny));
        }
    }
    let first = out[0];
    out.push(first);
    out
}

/// Gaussian intensity noise on foreground pixels, clipped to `1..=255` so
/// the foreground mask is unchanged.
pub(super) fn add_noise(img: &mut GrayImage, std: f64, rng: &mut Rng) {
    let normal = Normal::new(0.0, std).expect("finite non-negative std");
    for p in img.pixels.iter_mut().filter(|p| **p != 0) {
        let v = *p as f64 + normal.sample(rng);
        *p = v.round().clamp(1.0, 255.0) as u8;
    }
}
