//! Import of newline-delimited drawing records:
//! `{"word": "circle", "drawing": [[[x0, x1, ...], [y0, y1, ...]], ...]}`.
//!
//! Coordinates are on a 256-unit grid (the layout of the public simplified
//! drawing exports) and are scaled onto the canvas. Only the class is trusted.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use super::{Dataset, DatasetKind, DatasetMeta, CLASS_ONLY, SCHEMA_VERSION};
use crate::annot::Canvas;
use crate::render::{GrayImage, RenderKind, RenderStyle};
use crate::{Error, Result};

const SOURCE_GRID: f64 = 256.0;

#[derive(Deserialize)]
struct Record {
    word: String,
    drawing: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug)]
pub struct ImportOutcome {
    pub dataset: Dataset,
    /// Records dropped because they contained no stroke points.
    pub skipped: usize,
}

pub fn import_drawing_corpus(
    path: &Path,
    class_map: &BTreeMap<String, u8>,
    canvas: Canvas,
    stroke_thickness: u32,
) -> Result<ImportOutcome> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let style = RenderStyle {
        kind: RenderKind::Handdrawn,
        stroke_thickness,
        jitter_amplitude: 0.0,
        noise_std: 0.0,
        ..RenderStyle::clean()
    };
    let mut images = Vec::new();
    let mut labels = Vec::new();
    let mut skipped = 0;
    for (line_no, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let rec: Record = serde_json::from_str(line)
            .map_err(|e| Error::format(format!("record on line {}", line_no + 1), e.to_string()))?;
        let class = *class_map
            .get(&rec.word)
            .ok_or_else(|| Error::ClassMapping(rec.word.clone()))?;
        let strokes: Vec<Vec<(f64, f64)>> = rec
            .drawing
            .iter()
            .filter(|s| s.len() >= 2)
            .map(|s| {
                s[0].iter()
                    .zip(&s[1])
                    .map(|(&x, &y)| {
                        (
                            x * canvas.width as f64 / SOURCE_GRID,
                            y * canvas.height as f64 / SOURCE_GRID,
                        )
                    })
                    .collect::<Vec<_>>()
            })
            .filter(|pts| !pts.is_empty())
            .collect();
        if strokes.is_empty() {
            skipped += 1;
            continue;
        }
        let mut img = GrayImage::new(canvas.width, canvas.height);
        for s in &strokes {
            crate::render::raster_polyline(&mut img, s, stroke_thickness, 255);
        }
        images.push(img);
        labels.push([class as i32, -1, -1, -1, -1, -1]);
    }
    if skipped > 0 {
        log::warn!("skipped {skipped} records without strokes in {}", path.display());
    }
    let meta = DatasetMeta {
        schema_version: SCHEMA_VERSION,
        kind: DatasetKind::Imported,
        canvas,
        seed: 0,
        style,
        n: images.len(),
        label_mask: CLASS_ONLY,
    };
    Ok(ImportOutcome {
        dataset: Dataset {
            meta,
            images,
            labels,
            auto_labels: None,
            truth: None,
        },
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn classes() -> BTreeMap<String, u8> {
        [("circle".to_string(), 0), ("square".to_string(), 1)].into_iter().collect()
    }

    const SQUARE: &str = r#"{"word":"square","drawing":[[[40,200,200,40,40],[40,40,200,200,40]]]}"#;

    #[test]
    fn imports_and_skips_empty_records() {
        let tmp = tempfile::tempdir().unwrap();
        let p = tmp.path().join("d.ndjson");
        let empty = r#"{"word":"circle","drawing":[]}"#;
        std::fs::write(&p, [SQUARE, SQUARE, empty, SQUARE].join("\n")).unwrap();
        let out = import_drawing_corpus(&p, &classes(), Canvas::square(64), 2).unwrap();
        assert_eq!(out.dataset.len(), 3);
        assert_eq!(out.skipped, 1);
        assert!(out.dataset.classes().iter().all(|&k| k == 1));
        let lab = crate::render::auto_label(&out.dataset.images[0], 1).unwrap();
        assert!((lab.size() - 41).abs() <= 2, "{lab:?}");

        let dir = tmp.path().join("ds");
        out.dataset.save(&dir).unwrap();
        assert_eq!(Dataset::load(&dir).unwrap(), out.dataset);
    }

    #[test]
    fn unknown_word_is_a_mapping_error() {
        let tmp = tempfile::tempdir().unwrap();
        let p = tmp.path().join("d.ndjson");
        std::fs::write(&p, r#"{"word":"triangle","drawing":[[[0,1],[0,1]]]}"#).unwrap();
        assert!(matches!(
            import_drawing_corpus(&p, &classes(), Canvas::square(64), 2),
            Err(Error::ClassMapping(w)) if w == "triangle"
        ));
    }
}
