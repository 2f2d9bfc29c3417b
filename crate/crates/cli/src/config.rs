//! Run configuration: profile presets, JSON file layering and `--set`
//! overrides.

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use expecta_core::detector::default_grid;
use expecta_core::nn::{TrainConfig, PRESETS, PRESET_WIDTHS};
use expecta_core::{BiasSpec, ExpectationSpec};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Paper,
    Desk,
    Ci,
}

impl Profile {
    fn parse(s: &str) -> Result<Self, CliError> {
        <Profile as ValueEnum>::from_str(s, true).map_err(|_| CliError::Config(format!("unknown profile {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemperatureGrid {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl TemperatureGrid {
    pub fn values(&self) -> Vec<f64> {
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize;
        (0..=n).map(|i| self.start + self.step * i as f64).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegularizationConfig {
    pub dropout: f32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub profile: Profile,
    pub seed: u64,
    pub canvas: usize,
    pub expectation: ExpectationSpec,
    pub bias: BiasSpec,
    /// Collected training set size N.
    pub n_collected: usize,
    /// Separate collected validation set for model selection.
    pub n_validation: usize,
    /// Simulated test set size M.
    pub n_test: usize,
    /// Test samples explained by attribution.
    pub n_attr: usize,
    pub archs: Vec<String>,
    pub widths: [usize; 4],
    pub train: TrainConfig,
    pub temperature_grid: TemperatureGrid,
    pub target_score: f64,
    /// Background draws per coalition.
    pub background: usize,
    pub repeats: usize,
    pub bin_width: f64,
    pub regularization: RegularizationConfig,
    #[serde(skip)]
    pub out_dir: PathBuf,
}

impl RunConfig {
    pub fn preset(profile: Profile) -> Self {
        let (canvas, n, nv, m, ma, archs, widths, repeats): (usize, usize, usize, usize, usize, &[&str], [usize; 4], usize) =
            match profile {
                Profile::Paper => (
                    128,
                    50_000,
                    10_000,
                    10_000,
                    512,
                    &["VGG05", "VGG07", "VGG09", "VGG11", "VGG13"],
                    PRESET_WIDTHS,
                    5,
                ),
                Profile::Desk => (64, 10_000, 2_000, 2_000, 512, &["VGG05", "VGG13"], PRESET_WIDTHS, 3),
                Profile::Ci => (32, 1_000, 200, 200, 64, &["VGG05", "VGG13"], [8, 16, 32, 64], 1),
            };
        let grid = default_grid();
        RunConfig {
            profile,
            seed: 0,
            canvas,
            expectation: ExpectationSpec::for_canvas(canvas),
            bias: BiasSpec::for_canvas(canvas),
            n_collected: n,
            n_validation: nv,
            n_test: m,
            n_attr: ma,
            archs: archs.iter().map(|s| s.to_string()).collect(),
            widths,
            train: TrainConfig::default(),
            temperature_grid: TemperatureGrid {
                start: grid[0],
                stop: *grid.last().expect("nonempty grid"),
                step: grid[1] - grid[0],
            },
            target_score: 0.7,
            background: 8,
            repeats,
            bin_width: 1.0,
            regularization: RegularizationConfig { dropout: 0.5 },
            out_dir: PathBuf::from("runs"),
        }
    }

    /// Resolves profile defaults, then the config file, then `overrides`
    /// (`path=value` pairs over the JSON field names).
    pub fn resolve(
        file: Option<&Path>,
        profile: Option<Profile>,
        seed: Option<u64>,
        out: Option<&Path>,
        overrides: &[String],
    ) -> Result<Self, CliError> {
        let mut user = match file {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", p.display())))?;
                let v: Value = serde_json::from_str(&text)
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                if !v.is_object() {
                    return Err(CliError::Config(format!("{}: top level must be an object", p.display())));
                }
                v
            }
            None => Value::Object(Default::default()),
        };
        for o in overrides {
            let (path, raw) = o
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("override {o:?} is not path=value")))?;
            let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            set_path(&mut user, path, value)?;
        }
        if let Some(s) = seed {
            user["seed"] = Value::from(s);
        }
        let profile = match profile {
            Some(p) => p,
            None => match user.get("profile") {
                Some(Value::String(s)) => Profile::parse(s)?,
                Some(_) => return Err(CliError::Config("profile must be a string".into())),
                None => Profile::Desk,
            },
        };
        user["profile"] = serde_json::to_value(profile).expect("profile serializes");

        let base = RunConfig::preset(profile);
        let mut merged = serde_json::to_value(&base).expect("config serializes");
        if let Some(c) = user.get("canvas").and_then(Value::as_u64) {
            let c = c as usize;
            if user.get("expectation").is_none() {
                merged["expectation"] = serde_json::to_value(ExpectationSpec::for_canvas(c)).expect("serializes");
            }
            if user.get("bias").is_none() {
                merged["bias"] = serde_json::to_value(BiasSpec::for_canvas(c)).expect("serializes");
            }
        }
        merge(&mut merged, user);
        let mut cfg: RunConfig =
            serde_json::from_value(merged).map_err(|e| CliError::Config(format!("invalid config: {e}")))?;
        cfg.out_dir = out.map_or(base.out_dir, Path::to_path_buf);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.canvas < 16 || self.canvas % 16 != 0 {
            return bad(format!("canvas {} must be a positive multiple of 16", self.canvas));
        }
        if self.expectation.canvas.width != self.canvas || self.expectation.canvas.height != self.canvas {
            return bad("expectation canvas differs from canvas".into());
        }
        if self.n_collected == 0 || self.n_validation == 0 || self.n_test == 0 || self.n_attr == 0 {
            return bad("dataset sizes must be positive".into());
        }
        if self.n_attr > self.n_test {
            return bad(format!("n_attr {} exceeds n_test {}", self.n_attr, self.n_test));
        }
        if self.archs.is_empty() {
            return bad("at least one architecture is required".into());
        }
        for a in &self.archs {
            if !PRESETS.iter().any(|(n, _)| n.eq_ignore_ascii_case(a)) {
                return bad(format!("unknown architecture preset {a:?}"));
            }
        }
        if self.widths.contains(&0) {
            return bad("stage widths must be positive".into());
        }
        if self.repeats == 0 || self.background == 0 {
            return bad("repeats and background must be positive".into());
        }
        let g = &self.temperature_grid;
        if !(g.start > 0.0 && g.step > 0.0 && g.stop >= g.start) {
            return bad("temperature grid needs 0 < start <= stop and step > 0".into());
        }
        if !(self.target_score > 0.0 && self.target_score <= 1.0) {
            return bad("target_score must lie in (0, 1]".into());
        }
        if !(self.bin_width > 0.0) {
            return bad("bin_width must be positive".into());
        }
        if !(0.0..1.0).contains(&self.regularization.dropout) {
            return bad("dropout must lie in [0, 1)".into());
        }
        self.expectation.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.bias
            .validate(self.expectation.canvas)
            .map_err(|e| CliError::Config(e.to_string()))?;
        self.train.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, first 12 hex digits. The output
    /// directory is not part of the hash.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex12(&Sha256::digest(bytes))
    }
}

pub(crate) fn hex12(digest: &[u8]) -> String {
    digest.iter().take(6).map(|b| format!("{b:02x}")).collect()
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

fn set_path(root: &mut Value, path: &str, value: Value) -> Result<(), CliError> {
    let mut cur = root;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(CliError::Config(format!("bad override path {path:?}")));
        }
        if !cur.is_object() {
            *cur = Value::Object(Default::default());
        }
        let obj = cur.as_object_mut().expect("object");
        if i == parts.len() - 1 {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        cur = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profiles_match_their_sizes() {
        let p = RunConfig::preset(Profile::Paper);
        assert_eq!((p.canvas, p.n_collected, p.n_test), (128, 50_000, 10_000));
        let d = RunConfig::preset(Profile::Desk);
        assert_eq!((d.canvas, d.n_collected, d.n_test, d.n_attr), (64, 10_000, 2_000, 512));
        let c = RunConfig::preset(Profile::Ci);
        assert_eq!((c.canvas, c.n_collected, c.n_test, c.n_attr), (32, 1_000, 200, 64));
        for p in [p, d, c] {
            p.validate().unwrap();
        }
    }

    #[test]
    fn grid_round_trips() {
        let g = RunConfig::preset(Profile::Desk).temperature_grid.values();
        assert_eq!(g, default_grid());
    }

    #[test]
    fn layering_order() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("cfg.json");
        std::fs::write(&f, r#"{"profile": "ci", "seed": 3, "train": {"epochs": 2}}"#).unwrap();
        let c = RunConfig::resolve(Some(&f), None, None, None, &[]).unwrap();
        assert_eq!((c.profile, c.seed, c.train.epochs, c.train.batch_size), (Profile::Ci, 3, 2, 64));
        let c = RunConfig::resolve(Some(&f), Some(Profile::Desk), Some(9), None, &["train.learning_rate=0.01".into()])
            .unwrap();
        assert_eq!((c.profile, c.seed, c.canvas, c.train.learning_rate), (Profile::Desk, 9, 64, 0.01));
    }

    #[test]
    fn canvas_override_rescales_specs() {
        let c = RunConfig::resolve(None, Some(Profile::Desk), None, None, &["canvas=32".into()]).unwrap();
        assert_eq!(c.expectation, ExpectationSpec::for_canvas(32));
        assert_eq!(c.bias, BiasSpec::for_canvas(32));
    }

    #[test]
    fn rejects_bad_configs() {
        for o in ["archs=[\"VGG99\"]", "n_attr=5000", "typo=1", "canvas=40", "noequals"] {
            let r = RunConfig::resolve(None, Some(Profile::Desk), None, None, &[o.into()]);
            assert!(matches!(r, Err(CliError::Config(_))), "{o}");
        }
    }

    #[test]
    fn hash_ignores_output_dir_but_not_seed() {
        let a = RunConfig::preset(Profile::Ci);
        let mut b = a.clone();
        b.out_dir = "elsewhere".into();
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 12);
    }
}
