use std::fmt::Write as _;
use std::path::Path;

use super::GrayImage;
use crate::{Error, Result};

/// Binary PGM (P5).
pub fn write_pgm(img: &GrayImage, path: &Path) -> Result<()> {
    let mut bytes = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    bytes.extend_from_slice(&img.pixels);
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Grid of images as an SVG document, each foreground run drawn as a rect.
pub fn contact_sheet_svg(images: &[&GrayImage], columns: usize, scale: f64) -> String {
    let columns = columns.max(1);
    let (w, h) = images
        .first()
        .map(|i| (i.width, i.height))
        .unwrap_or((0, 0));
    let rows = images.len().div_ceil(columns);
    let gap = 4.0;
    let cell_w = w as f64 * scale + gap;
    let cell_h = h as f64 * scale + gap;
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\">\n<rect width=\"100%\" height=\"100%\" fill=\"#202020\"/>\n",
        columns as f64 * cell_w + gap,
        rows as f64 * cell_h + gap
    );
    for (i, img) in images.iter().enumerate() {
        let ox = gap + (i % columns) as f64 * cell_w;
        let oy = gap + (i / columns) as f64 * cell_h;
        let _ = writeln!(
            svg,
            "<rect x=\"{ox}\" y=\"{oy}\" width=\"{}\" height=\"{}\" fill=\"#000\"/>",
            img.width as f64 * scale,
            img.height as f64 * scale
        );
        for y in 0..img.height {
            let mut x = 0;
            while x < img.width {
                let v = img.get(x, y);
                let start = x;
                while x < img.width && img.get(x, y) == v {
                    x += 1;
                }
                if v != 0 {
                    let _ = writeln!(
                        svg,
                        "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{scale}\" fill=\"rgb({v},{v},{v})\"/>",
                        ox + start as f64 * scale,
                        oy + y as f64 * scale,
                        (x - start) as f64 * scale
                    );
                }
            }
        }
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_header_and_payload() {
        let mut img = GrayImage::new(3, 2);
        img.put(1, 1, 7);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.pgm");
        write_pgm(&img, &p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        assert!(bytes.starts_with(b"P5\n3 2\n255\n"));
        assert_eq!(&bytes[bytes.len() - 6..], &[0, 0, 0, 0, 7, 0]);
    }

    #[test]
    fn contact_sheet_has_one_run_per_segment() {
        let mut img = GrayImage::new(4, 1);
        img.put(1, 0, 9);
        img.put(2, 0, 9);
        let svg = contact_sheet_svg(&[&img, &img], 2, 1.0);
        assert_eq!(svg.matches("rgb(9,9,9)").count(), 2);
        assert!(svg.starts_with("<svg"));
    }
}
