//! Fixtures shared by the benchmarks.

use expecta_core::annot::Canvas;
use expecta_core::{sample_expected, Annotation, ArchConfig, ExpectationSpec, Model};

/// `n` annotations drawn from the scaled default expectation.
pub fn annotations(side: usize, n: usize) -> Vec<Annotation> {
    sample_expected(&ExpectationSpec::for_canvas(side), 1, n).expect("valid default spec")
}

/// Untrained preset model on a square canvas.
pub fn model(preset: &str, side: usize) -> Model {
    let arch = ArchConfig::preset(preset, Canvas::square(side)).expect("known preset");
    Model::new(&arch, 1).expect("valid arch")
}
