//! Exact, non-antialiased outlines.

use super::GrayImage;
use crate::annot::Annotation;

/// Axis-aligned square outline made of four bars of width `t`, flush with
/// the inside of the bounding box.
pub(super) fn square(img: &mut GrayImage, ann: &Annotation, t: i64, v: u8) {
    let (l, tp, r, b) = (
        ann.left as i64,
        ann.top as i64,
        ann.right as i64,
        ann.bottom as i64,
    );
    let t = t.min(r - l);
    for y in tp..b {
        for x in l..r {
            if x < l + t || x >= r - t || y < tp + t || y >= b - t {
                img.put(x, y, v);
            }
        }
    }
}

/// Midpoint circle inscribed in the bounding box, thickened inward by
/// drawing `t` concentric rings one pixel apart.
///
/// Works in doubled coordinates so that boxes of even side (whose centre
/// falls between pixels) are handled exactly: pixel `i` has doubled centre
/// `2i + 1`, the circle centre is `2 * left + side`, and the outermost ring
/// has doubled radius `side - 1`. Every offset shares the radius' parity.
pub(super) fn circle(img: &mut GrayImage, ann: &Annotation, t: i64, v: u8) {
    let side = ann.size() as i64;
    let cx = 2 * ann.left as i64 + side;
    let cy = 2 * ann.top as i64 + side;
    let mut plot = |dx: i64, dy: i64| {
        img.put((cx + dx - 1).div_euclid(2), (cy + dy - 1).div_euclid(2), v);
    };
    for ring in 0..t {
        let r = side - 1 - 2 * ring;
        if r < 0 {
            break;
        }
        for (dx, dy) in octant(r) {
            for (sx, sy) in [(1, 1), (1, -1), (-1, 1), (-1, -1)] {
                plot(sx * dx, sy * dy);
                plot(sx * dy, sy * dx);
            }
        }
    }
}

/// First-octant offsets `(dx, dy)`, `0 <= dx <= dy`, of a circle with
/// doubled radius `r`. For each column the row nearest the true circle is
/// chosen among values of the right parity, which is the midpoint rule.
fn octant(r: i64) -> Vec<(i64, i64)> {
    let parity = r & 1;
    let rr = r * r;
    let mut out = Vec::new();
    let mut dx = parity;
    loop {
        let target = rr - dx * dx;
        if target < 0 {
            break;
        }
        let mut lo = isqrt(target);
        if (lo & 1) != parity {
            lo -= 1;
        }
        let hi = lo + 2;
        let dy = if lo < 0 || (hi * hi - target).abs() < (target - lo * lo).abs() {
            hi
        } else {
            lo
        };
        if dy < dx {
            break;
        }
        out.push((dx, dy));
        dx += 2;
    }
    if out.is_empty() {
        out.push((parity, parity));
    }
    out
}

const SAMPLE_STEP: f64 = 0.25;

/// Strokes a polyline with a square brush of side `t`.
pub(crate) fn polyline(img: &mut GrayImage, points: &[(f64, f64)], t: u32, v: u8) {
    if let [(x, y)] = points {
        stamp(img, *x, *y, t, v);
    }
    for seg in points.windows(2) {
        let ((x0, y0), (x1, y1)) = (seg[0], seg[1]);
        let len = ((x1 - x0).powi(2) + (y1 - y0).powi(2)).sqrt();
        let steps = (len / SAMPLE_STEP).ceil().max(1.0) as usize;
        for s in 0..=steps {
            let f = s as f64 / steps as f64;
            stamp(img, x0 + f * (x1 - x0), y0 + f * (y1 - y0), t, v);
        }
    }
}

/// Square brush of side `t` centred on `(x, y)`.
fn stamp(img: &mut GrayImage, x: f64, y: f64, t: u32, v: u8) {
    let half = t as f64 / 2.0;
    let x0 = (x - half).round() as i64;
    let y0 = (y - half).round() as i64;
    for dy in 0..t as i64 {
        for dx in 0..t as i64 {
            img.put(x0 + dx, y0 + dy, v);
        }
    }
}

fn isqrt(n: i64) -> i64 {
    let mut x = (n as f64).sqrt() as i64;
    while x * x > n {
        x -= 1;
    }
    while (x + 1) * (x + 1) <= n {
        x += 1;
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn octant_points_lie_near_the_circle() {
        for r in 0..200 {
            for (dx, dy) in octant(r) {
                assert_eq!(dx & 1, r & 1);
                assert_eq!(dy & 1, r & 1);
                let d = ((dx * dx + dy * dy) as f64).sqrt();
                assert!((d - r as f64).abs() <= 1.5, "r={r} ({dx},{dy})");
            }
        }
    }

    #[test]
    fn tiny_circles_fill_their_box() {
        for side in 1..6 {
            let mut img = GrayImage::new(8, 8);
            let ann = Annotation::new(0, 1, 1, side, 9);
            circle(&mut img, &ann, 2, 9);
            let xs: Vec<usize> = img.foreground().map(|(x, _, _)| x).collect();
            assert_eq!(*xs.iter().min().unwrap(), 1);
            assert_eq!(*xs.iter().max().unwrap(), side as usize);
        }
    }
}
