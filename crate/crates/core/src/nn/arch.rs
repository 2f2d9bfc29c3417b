use serde::{Deserialize, Serialize};

use crate::annot::Canvas;
use crate::{Error, Result};

/// A VGG stage: `convs` 3x3 convolutions of `width` channels, then a 2x2 max-pool.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Stage {
    pub convs: usize,
    pub width: usize,
}

/// Network layout: VGG stages, then flatten (+ dropout) and one dense layer
/// to the class logits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchConfig {
    pub name: String,
    pub stages: Vec<Stage>,
    /// Batch-norm after every convolution.
    pub batch_norm: bool,
    /// Dropout rate on the flattened features.
    pub dropout: f32,
    pub input: Canvas,
    pub classes: usize,
}

/// Convolutions per stage for each preset. The number in a preset's name
/// counts conv layers plus the dense head.
pub const PRESETS: [(&str, [usize; 4]); 5] = [
    ("VGG05", [1, 1, 1, 1]),
    ("VGG07", [1, 1, 2, 2]),
    ("VGG09", [2, 2, 2, 2]),
    ("VGG11", [2, 2, 3, 3]),
    ("VGG13", [3, 3, 3, 3]),
];

/// Channel widths of the four preset stages.
pub const PRESET_WIDTHS: [usize; 4] = [16, 32, 64, 128];

impl ArchConfig {
    pub fn preset(name: &str, input: Canvas) -> Result<Self> {
        Self::preset_with_widths(name, input, PRESET_WIDTHS)
    }

    pub fn preset_with_widths(name: &str, input: Canvas, widths: [usize; 4]) -> Result<Self> {
        let (_, convs) = PRESETS
            .iter()
            .find(|(n, _)| n.eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::Spec(format!("unknown architecture preset {name:?}")))?;
        let arch = ArchConfig {
            name: name.to_ascii_uppercase(),
            stages: convs
                .iter()
                .zip(widths)
                .map(|(&convs, width)| Stage { convs, width })
                .collect(),
            batch_norm: false,
            dropout: 0.0,
            input,
            classes: 2,
        };
        arch.validate()?;
        Ok(arch)
    }

    pub fn with_batch_norm(mut self, on: bool) -> Self {
        self.batch_norm = on;
        self
    }

    pub fn with_dropout(mut self, rate: f32) -> Self {
        self.dropout = rate;
        self
    }

    /// Convolutions plus the dense head.
    pub fn layer_count(&self) -> usize {
        self.stages.iter().map(|s| s.convs).sum::<usize>() + 1
    }

    /// Spatial size after all pooling stages.
    pub fn feature_map(&self) -> (usize, usize) {
        let mut hw = (self.input.height, self.input.width);
        for _ in &self.stages {
            hw = (hw.0 / 2, hw.1 / 2);
        }
        hw
    }

    pub fn validate(&self) -> Result<()> {
        if self.stages.is_empty() || self.stages.iter().any(|s| s.convs == 0 || s.width == 0) {
            return Err(Error::Spec(format!("{}: every stage needs convolutions and positive width", self.name)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Spec(format!("{}: dropout {} outside [0, 1)", self.name, self.dropout)));
        }
        if self.classes < 2 {
            return Err(Error::Spec("at least two classes are required".into()));
        }
        let (h, w) = self.feature_map();
        if h == 0 || w == 0 {
            return Err(Error::Spec(format!(
                "{}: a {}x{} input is too small for {} pooling stages",
                self.name,
                self.input.width,
                self.input.height,
                self.stages.len()
            )));
        }
        if let Some((_, convs)) = PRESETS.iter().find(|(n, _)| *n == self.name) {
            let expected: usize = convs.iter().sum::<usize>() + 1;
            let digits: usize = self.name[3..].parse().unwrap_or(0);
            if self.layer_count() != expected || expected != digits {
                return Err(Error::Spec(format!(
                    "{} must have {digits} layers, has {}",
                    self.name,
                    self.layer_count()
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_layer_counts_match_names() {
        for (name, _) in PRESETS {
            let a = ArchConfig::preset(name, Canvas::square(64)).unwrap();
            assert_eq!(a.layer_count(), name[3..].parse::<usize>().unwrap());
        }
    }

    #[test]
    fn vgg05_layout() {
        let a = ArchConfig::preset("vgg05", Canvas::square(64)).unwrap();
        assert_eq!(a.name, "VGG05");
        let widths: Vec<usize> = a.stages.iter().map(|s| s.width).collect();
        assert_eq!(widths, vec![16, 32, 64, 128]);
        assert_eq!(a.feature_map(), (4, 4));
    }

    #[test]
    fn invalid_configs() {
        assert!(ArchConfig::preset("VGG16", Canvas::square(64)).is_err());
        assert!(ArchConfig::preset("VGG05", Canvas::square(8)).is_err());
        let mut a = ArchConfig::preset("VGG05", Canvas::square(64)).unwrap();
        a.dropout = 1.0;
        assert!(a.validate().is_err());
        a.dropout = 0.0;
        a.stages.push(Stage { convs: 1, width: 8 });
        assert!(a.validate().is_err());
    }
}
