//! Directory container:
//!
//! ```text
//! meta.json        schema version, canvas, seed, style, N, label mask
//! images.u8        N * H * W raw bytes, row-major, no header
//! labels.csv       index,y1,y2,y3,y4,y5,y6   (-1 = untrusted)
//! autolabels.csv   same columns, present once auto-labels are computed
//! truth.csv        generating annotations of a collected set (benchmark only)
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{Dataset, DatasetMeta};
use crate::annot::Annotation;
use crate::render::GrayImage;
use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

const META: &str = "meta.json";
const IMAGES: &str = "images.u8";
const LABELS: &str = "labels.csv";
const AUTO_LABELS: &str = "autolabels.csv";
const TRUTH: &str = "truth.csv";
const HEADER: &str = "index,y1,y2,y3,y4,y5,y6";

impl Dataset {
    pub fn save(&self, dir: &Path) -> Result<()> {
        self.check()?;
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let write = |name: &str, bytes: &[u8]| {
            let p = dir.join(name);
            fs::write(&p, bytes).map_err(|e| Error::io(p, e))
        };
        write(META, serde_json::to_string_pretty(&self.meta)?.as_bytes())?;
        let mut payload = Vec::with_capacity(self.len() * self.meta.canvas.pixels());
        for img in &self.images {
            payload.extend_from_slice(&img.pixels);
        }
        write(IMAGES, &payload)?;
        write(LABELS, label_csv(self.labels.iter().copied()).as_bytes())?;
        if let Some(auto) = &self.auto_labels {
            write(AUTO_LABELS, label_csv(auto.iter().map(|a| a.labels())).as_bytes())?;
        }
        if let Some(truth) = &self.truth {
            write(TRUTH, label_csv(truth.iter().map(|a| a.labels())).as_bytes())?;
        }
        Ok(())
    }

    /// Loads a container written by [`save`](Self::save). `truth.csv` is
    /// deliberately not read.
    pub fn load(dir: &Path) -> Result<Dataset> {
        let read = |name: &str| {
            let p = dir.join(name);
            fs::read(&p).map_err(|e| Error::io(p, e))
        };
        let meta_bytes = read(META)?;
        let raw: serde_json::Value = serde_json::from_slice(&meta_bytes)
            .map_err(|e| Error::format(META, e.to_string()))?;
        let version = raw
            .get("schema_version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| Error::format(META, "missing schema_version"))?;
        if version != SCHEMA_VERSION as u64 {
            return Err(Error::SchemaVersion {
                found: version as u32,
                expected: SCHEMA_VERSION,
            });
        }
        let meta: DatasetMeta =
            serde_json::from_value(raw).map_err(|e| Error::format(META, e.to_string()))?;

        let payload = read(IMAGES)?;
        let per_image = meta.canvas.pixels();
        let expected = meta.n * per_image;
        if payload.len() != expected {
            return Err(Error::format(
                IMAGES,
                format!("expected {expected} bytes, found {}", payload.len()),
            ));
        }
        let images = payload
            .chunks_exact(per_image.max(1))
            .take(meta.n)
            .map(|c| GrayImage::from_pixels(meta.canvas.width, meta.canvas.height, c.to_vec()))
            .collect::<Result<Vec<_>>>()?;

        let labels = parse_label_csv(LABELS, &String::from_utf8_lossy(&read(LABELS)?), meta.n)?;
        let auto_path = dir.join(AUTO_LABELS);
        let auto_labels = if auto_path.exists() {
            let rows = parse_label_csv(AUTO_LABELS, &String::from_utf8_lossy(&read(AUTO_LABELS)?), meta.n)?;
            Some(rows.into_iter().map(annotation_from_row).collect())
        } else {
            None
        };
        let ds = Dataset {
            meta,
            images,
            labels,
            auto_labels,
            truth: None,
        };
        ds.check()?;
        Ok(ds)
    }

    /// Reads the generating annotations of a collected set. For evaluation
    /// harnesses only.
    pub fn load_truth(dir: &Path) -> Result<Vec<Annotation>> {
        let p = dir.join(TRUTH);
        let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
        let n = text.lines().skip(1).filter(|l| !l.trim().is_empty()).count();
        Ok(parse_label_csv(TRUTH, &text, n)?
            .into_iter()
            .map(annotation_from_row)
            .collect())
    }
}

fn annotation_from_row(r: [i32; 6]) -> Annotation {
    Annotation {
        class: r[0] as u8,
        left: r[1],
        top: r[2],
        right: r[3],
        bottom: r[4],
        brightness: r[5],
    }
}

fn label_csv(rows: impl Iterator<Item = [i32; 6]>) -> String {
    let mut out = String::from(HEADER);
    out.push('\n');
    for (i, r) in rows.enumerate() {
        let _ = writeln!(out, "{i},{},{},{},{},{},{}", r[0], r[1], r[2], r[3], r[4], r[5]);
    }
    out
}

fn parse_label_csv(section: &str, text: &str, n: usize) -> Result<Vec<[i32; 6]>> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(HEADER) {
        return Err(Error::format(section, format!("expected header {HEADER:?}")));
    }
    let rows = lines
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, line)| {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 7 || fields[0].parse::<usize>().ok() != Some(i) {
                return Err(Error::format(section, format!("row {i}: {line:?}")));
            }
            let mut r = [0i32; 6];
            for (slot, f) in r.iter_mut().zip(&fields[1..]) {
                *slot = f
                    .parse()
                    .map_err(|_| Error::format(section, format!("row {i}: bad value {f:?}")))?;
            }
            Ok(r)
        })
        .collect::<Result<Vec<_>>>()?;
    if rows.len() != n {
        return Err(Error::format(
            section,
            format!("expected {n} rows, found {}", rows.len()),
        ));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annot::{Canvas, ExpectationSpec};
    use crate::dataset::{gen_collected, gen_test, BiasSpec};

    fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
        let mut files: Vec<_> = fs::read_dir(dir)
            .unwrap()
            .map(|e| e.unwrap().path())
            .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
            .collect();
        files.sort();
        files
    }

    #[test]
    fn round_trip_is_exact() {
        let tmp = tempfile::tempdir().unwrap();
        let t = gen_test(&ExpectationSpec::for_canvas(32), 40, 1).unwrap();
        t.save(&tmp.path().join("t")).unwrap();
        assert_eq!(Dataset::load(&tmp.path().join("t")).unwrap(), t);

        let mut c = gen_collected(&BiasSpec::for_canvas(32), Canvas::square(32), 30, 2).unwrap();
        c.compute_auto_labels().unwrap();
        c.save(&tmp.path().join("c")).unwrap();
        let back = Dataset::load(&tmp.path().join("c")).unwrap();
        assert_eq!(back, c.without_truth());
        assert_eq!(Dataset::load_truth(&tmp.path().join("c")).unwrap(), c.truth.clone().unwrap());
        back.save(&tmp.path().join("c2")).unwrap();
        let mut a = dir_bytes(&tmp.path().join("c"));
        a.retain(|(n, _)| n != TRUTH);
        assert_eq!(a, dir_bytes(&tmp.path().join("c2")));
    }

    #[test]
    fn truncated_payload_reports_byte_counts() {
        let tmp = tempfile::tempdir().unwrap();
        let t = gen_test(&ExpectationSpec::for_canvas(32), 3, 1).unwrap();
        t.save(tmp.path()).unwrap();
        let p = tmp.path().join(IMAGES);
        let bytes = fs::read(&p).unwrap();
        fs::write(&p, &bytes[..bytes.len() - 5]).unwrap();
        match Dataset::load(tmp.path()) {
            Err(Error::Format { section, detail }) => {
                assert_eq!(section, IMAGES);
                assert!(detail.contains("3072") && detail.contains("3067"), "{detail}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_schema_version_is_rejected() {
        let tmp = tempfile::tempdir().unwrap();
        gen_test(&ExpectationSpec::for_canvas(32), 2, 1).unwrap().save(tmp.path()).unwrap();
        let p = tmp.path().join(META);
        let text = fs::read_to_string(&p).unwrap().replace("\"schema_version\": 1", "\"schema_version\": 7");
        fs::write(&p, text).unwrap();
        assert!(matches!(
            Dataset::load(tmp.path()),
            Err(Error::SchemaVersion { found: 7, expected: 1 })
        ));
    }

    #[test]
    fn malformed_labels_name_the_section() {
        let tmp = tempfile::tempdir().unwrap();
        gen_test(&ExpectationSpec::for_canvas(32), 2, 1).unwrap().save(tmp.path()).unwrap();
        fs::write(tmp.path().join(LABELS), "index,y1,y2,y3,y4,y5,y6\n0,1,2\n").unwrap();
        match Dataset::load(tmp.path()) {
            Err(Error::Format { section, .. }) => assert_eq!(section, LABELS),
            other => panic!("unexpected {other:?}"),
        }
    }
}
