//! Max-softmax outlier scoring of simulated test annotations, temperature
//! search, the outlier/familiar partition and AUROC.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::annot::{Annotation, LabelDistribution};
use crate::nn::{softmax, Model};
use crate::render::{GrayImage, Simulator};
use crate::{Error, Result};

/// Default target mean score of the temperature search.
pub const DEFAULT_TARGET: f64 = 0.7;

const RENDER_CHUNK: usize = 256;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub annotation: Annotation,
    pub logits: Vec<f64>,
    pub temperature: f64,
    pub score: f64,
}

impl ScoreRecord {
    pub fn from_logits(annotation: Annotation, logits: Vec<f64>, temperature: f64) -> Self {
        let score = max_softmax(&logits, temperature);
        ScoreRecord {
            annotation,
            logits,
            temperature,
            score,
        }
    }

    /// Same record at another temperature.
    pub fn at(&self, temperature: f64) -> Self {
        Self::from_logits(self.annotation, self.logits.clone(), temperature)
    }
}

/// Largest class probability of `softmax(logits / t)`.
pub fn max_softmax(logits: &[f64], t: f64) -> f64 {
    softmax(logits.iter().copied(), t)
        .into_iter()
        .fold(0.0, f64::max)
}

/// The temperature grid `1.0, 1.25, ..., 20.0`.
pub fn default_grid() -> Vec<f64> {
    (0..=76).map(|i| 1.0 + 0.25 * i as f64).collect()
}

/// Renders `annotations` with the simulator and returns the model's logits,
/// one row per annotation. Render failures carry the sample index.
pub fn logits(model: &Model, annotations: &[Annotation], sim: &Simulator) -> Result<Vec<Vec<f64>>> {
    let k = model.net.classes();
    let mut out = Vec::with_capacity(annotations.len());
    for (c, chunk) in annotations.chunks(RENDER_CHUNK).enumerate() {
        let images: Vec<GrayImage> = chunk
            .par_iter()
            .enumerate()
            .map(|(i, a)| {
                sim.render(a, 0).map_err(|e| Error::Sample {
                    index: c * RENDER_CHUNK + i,
                    source: Box::new(e),
                })
            })
            .collect::<Result<_>>()?;
        let refs: Vec<&GrayImage> = images.iter().collect();
        let flat = model.logits(&refs)?;
        out.extend(flat.chunks_exact(k).map(|r| r.iter().map(|&v| v as f64).collect::<Vec<_>>()));
    }
    Ok(out)
}

/// Scores every annotation at temperature `t`.
pub fn score(model: &Model, annotations: &[Annotation], sim: &Simulator, t: f64) -> Result<Vec<ScoreRecord>> {
    check_temperature(t)?;
    let rows = logits(model, annotations, sim)?;
    Ok(annotations
        .iter()
        .zip(rows)
        .map(|(a, z)| ScoreRecord::from_logits(*a, z, t))
        .collect())
}

fn check_temperature(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::Spec(format!("temperature must be positive, got {t}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub temperature: f64,
    pub mean: f64,
    pub variance: f64,
    pub objective: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub t_star: f64,
    pub target: f64,
    pub grid: Vec<GridPoint>,
}

impl CalibrationResult {
    pub fn best(&self) -> &GridPoint {
        self.grid
            .iter()
            .find(|g| g.temperature == self.t_star)
            .expect("t_star is a grid point")
    }

    pub fn point(&self, temperature: f64) -> Option<&GridPoint> {
        self.grid.iter().find(|g| g.temperature == temperature)
    }
}

/// Mean and population variance.
pub fn mean_variance(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var)
}

/// Grid search of `(mean - target)^2 - variance` over cached logits; ties
/// go to the smallest temperature.
pub fn calibrate_from_logits(logits: &[Vec<f64>], target: f64, grid: &[f64]) -> Result<CalibrationResult> {
    if logits.is_empty() {
        return Err(Error::Empty("calibration test set"));
    }
    if grid.is_empty() {
        return Err(Error::Spec("temperature grid is empty".into()));
    }
    let mut temps = grid.to_vec();
    for &t in &temps {
        check_temperature(t)?;
    }
    temps.sort_by(f64::total_cmp);
    temps.dedup();
    let points: Vec<GridPoint> = temps
        .iter()
        .map(|&t| {
            let scores: Vec<f64> = logits.iter().map(|z| max_softmax(z, t)).collect();
            let (mean, variance) = mean_variance(&scores);
            GridPoint {
                temperature: t,
                mean,
                variance,
                objective: (mean - target).powi(2) - variance,
            }
        })
        .collect();
    let mut best = 0;
    for (i, p) in points.iter().enumerate() {
        if p.objective < points[best].objective {
            best = i;
        }
    }
    Ok(CalibrationResult {
        t_star: points[best].temperature,
        target,
        grid: points,
    })
}

pub fn calibrate_temperature(
    model: &Model,
    annotations: &[Annotation],
    sim: &Simulator,
    target: f64,
    grid: &[f64],
) -> Result<CalibrationResult> {
    if annotations.is_empty() {
        return Err(Error::Empty("calibration test set"));
    }
    calibrate_from_logits(&logits(model, annotations, sim)?, target, grid)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutlierPartition {
    pub outliers: Vec<usize>,
    pub familiar: Vec<usize>,
    pub rule: String,
}

impl OutlierPartition {
    /// Familiar flag per test index.
    pub fn flags(&self) -> Vec<bool> {
        let mut f = vec![false; self.outliers.len() + self.familiar.len()];
        for &i in &self.familiar {
            f[i] = true;
        }
        f
    }
}

/// An annotation is familiar when every attributable label lies in an
/// occupied bin of the collected support of its class. A support without
/// any entries makes every annotation an outlier.
pub fn partition_outliers(annotations: &[Annotation], support: &LabelDistribution) -> Result<OutlierPartition> {
    let mut p = OutlierPartition {
        outliers: Vec::new(),
        familiar: Vec::new(),
        rule: "all labels 2..6 inside occupied class-conditional bins".into(),
    };
    let empty = support.entries().is_empty();
    for (i, a) in annotations.iter().enumerate() {
        if !empty && support.covers(a)? {
            p.familiar.push(i);
        } else {
            p.outliers.push(i);
        }
    }
    Ok(p)
}

/// Probability that a random familiar sample outscores a random outlier,
/// ties counting one half. Computed from average ranks.
pub fn auroc(scores: &[f64], familiar: &[bool]) -> Result<f64> {
    if scores.len() != familiar.len() {
        return Err(Error::Dimension(format!(
            "{} scores but {} labels",
            scores.len(),
            familiar.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Spec("AUROC scores contain NaN".into()));
    }
    let n_pos = familiar.iter().filter(|&&f| f).count();
    let n_neg = familiar.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Spec("AUROC needs both familiar and outlier samples".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += order[i..=j].iter().filter(|&&k| familiar[k]).count() as f64 * avg;
        i = j + 1;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}
