use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::arch::ArchConfig;
use super::network::{softmax_cross_entropy, Network, Workspace};
use crate::dataset::Dataset;
use crate::render::GrayImage;
use crate::rng::{rng_for, Stream};
use crate::{Error, Result};

/// Losses above this are treated as divergence.
pub const DIVERGENCE_LOSS: f64 = 1e3;

const INFER_CHUNK: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    /// Share of the training set held out for validation when no separate
    /// validation set is given.
    pub validation_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 5,
            batch_size: 64,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
            validation_fraction: 0.2,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || !(self.learning_rate >= 0.0) {
            return Err(Error::Spec(
                "epochs and batch size must be positive, learning rate non-negative".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::Spec("validation fraction must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// A trained classifier: f32 network plus provenance.
#[derive(Clone, Debug)]
pub struct Model {
    pub net: Network<f32>,
    pub epochs_seen: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub val_accuracy: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochStats>,
    pub best_epoch: usize,
}

impl History {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,loss,val_acc\n");
        for e in &self.epochs {
            out.push_str(&format!("{},{:.6},{:.6}\n", e.epoch, e.loss, e.val_accuracy));
        }
        out
    }

    pub fn best_accuracy(&self) -> f64 {
        self.epochs
            .iter()
            .find(|e| e.epoch == self.best_epoch)
            .map_or(0.0, |e| e.val_accuracy)
    }
}

pub(crate) fn normalize_into(img: &GrayImage, out: &mut Vec<f32>) {
    out.extend(img.pixels.iter().map(|&p| p as f32 / 255.0));
}

impl Model {
    pub fn new(arch: &ArchConfig, seed: u64) -> Result<Self> {
        Ok(Model {
            net: Network::new(arch, seed)?,
            epochs_seen: 0,
            seed,
        })
    }

    pub fn arch(&self) -> &ArchConfig {
        &self.net.arch
    }

    /// Inference logits, `images.len() x classes` row-major. Chunks run in
    /// parallel on the current rayon pool; each chunk is computed
    /// independently so the result does not depend on the thread count.
    pub fn logits(&self, images: &[&GrayImage]) -> Result<Vec<f32>> {
        let canvas = self.net.arch.input;
        if let Some(bad) = images.iter().find(|i| i.canvas() != canvas) {
            return Err(Error::Dimension(format!(
                "model expects {}x{} images, got {}x{}",
                canvas.width, canvas.height, bad.width, bad.height
            )));
        }
        let chunks: Vec<Vec<f32>> = images
            .par_chunks(INFER_CHUNK)
            .map(|chunk| {
                let mut x = Vec::with_capacity(chunk.len() * self.net.input_len());
                for img in chunk {
                    normalize_into(img, &mut x);
                }
                self.net.infer(&x, chunk.len())
            })
            .collect::<Result<_>>()?;
        Ok(chunks.concat())
    }

    /// Arg-max class of every image, ties toward the lower index.
    pub fn predict(&self, images: &[&GrayImage]) -> Result<Vec<u8>> {
        let k = self.net.classes();
        Ok(self
            .logits(images)?
            .chunks_exact(k)
            .map(|row| argmax(row) as u8)
            .collect())
    }
}

pub(crate) fn argmax(row: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Fraction of samples whose predicted class equals the trusted class label.
pub fn evaluate(model: &Model, dataset: &Dataset) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::Empty("evaluation dataset"));
    }
    let refs: Vec<&GrayImage> = dataset.images.iter().collect();
    accuracy(model, &refs, &dataset.classes())
}

fn accuracy(model: &Model, images: &[&GrayImage], classes: &[u8]) -> Result<f64> {
    let pred = model.predict(images)?;
    let hits = pred.iter().zip(classes).filter(|(p, y)| p == y).count();
    Ok(hits as f64 / classes.len() as f64)
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }

    fn update(&mut self, params: &mut [f32], grads: &[f32], mask: &[bool], cfg: &TrainConfig) {
        self.step += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.step);
        let c2 = 1.0 - cfg.beta2.powi(self.step);
        for i in 0..params.len() {
            if !mask[i] {
                continue;
            }
            let g = grads[i] as f64;
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * g;
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * g * g;
            let step = cfg.learning_rate * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + cfg.epsilon);
            params[i] -= step as f32;
        }
    }
}

/// Trains on `train_set`, holding out `cfg.validation_fraction` of it
/// (chosen by a seeded shuffle) for model selection.
pub fn train(train_set: &Dataset, arch: &ArchConfig, cfg: &TrainConfig) -> Result<(Model, History)> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    order.shuffle(&mut rng_for(cfg.seed, Stream::Split, 0));
    let n_val = ((train_set.len() as f64) * cfg.validation_fraction).round() as usize;
    let n_val = n_val.min(train_set.len() - 1);
    let (val_idx, train_idx) = order.split_at(n_val);
    fit(train_set, train_idx, train_set, val_idx, arch, cfg)
}

/// Trains on all of `train_set` and selects the epoch with the best
/// accuracy on `val_set`.
pub fn train_with_validation(
    train_set: &Dataset,
    val_set: &Dataset,
    arch: &ArchConfig,
    cfg: &TrainConfig,
) -> Result<(Model, History)> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let train_idx: Vec<usize> = (0..train_set.len()).collect();
    let val_idx: Vec<usize> = (0..val_set.len()).collect();
    fit(train_set, &train_idx, val_set, &val_idx, arch, cfg)
}

fn fit(
    train_set: &Dataset,
    train_idx: &[usize],
    val_set: &Dataset,
    val_idx: &[usize],
    arch: &ArchConfig,
    cfg: &TrainConfig,
) -> Result<(Model, History)> {
    if train_set.meta.canvas != arch.input {
        return Err(Error::Dimension(format!(
            "architecture input {}x{} does not match dataset canvas {}x{}",
            arch.input.width, arch.input.height, train_set.meta.canvas.width, train_set.meta.canvas.height
        )));
    }
    let mut model = Model::new(arch, cfg.seed)?;
    let classes = arch.classes;
    let mask = model.net.trainable_mask();
    let mut adam = Adam::new(model.net.param_count());
    let mut grads = vec![0.0f32; model.net.param_count()];
    let mut ws = Workspace::new();
    let mut dropout_rng = rng_for(cfg.seed, Stream::Dropout, 0);
    let val_images: Vec<&GrayImage> = val_idx.iter().map(|&i| &val_set.images[i]).collect();
    let val_labels: Vec<u8> = val_idx.iter().map(|&i| val_set.class(i)).collect();

    let mut history = History::default();
    let mut best: Option<(f64, Vec<f32>)> = None;
    let mut order = train_idx.to_vec();
    let mut x = Vec::new();
    let mut y = Vec::new();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng_for(cfg.seed, Stream::Shuffle, epoch as u64));
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for (batch_no, chunk) in order.chunks(cfg.batch_size).enumerate() {
            x.clear();
            y.clear();
            for &i in chunk {
                normalize_into(&train_set.images[i], &mut x);
                y.push(train_set.class(i));
            }
            let logits = model.net.forward_train(&x, chunk.len(), &mut ws, &mut dropout_rng);
            let (loss, dlogits) = softmax_cross_entropy(logits, &y, classes);
            if !loss.is_finite() || loss > DIVERGENCE_LOSS {
                return Err(Error::Diverged {
                    epoch,
                    batch: batch_no,
                    loss,
                });
            }
            grads.fill(0.0);
            model.net.backward(&mut ws, &dlogits, &mut grads, chunk.len());
            model.net.update_running_stats(&ws, Network::<f32>::default_momentum());
            adam.update(&mut model.net.params, &grads, &mask, cfg);
            loss_sum += loss * chunk.len() as f64;
            seen += chunk.len();
        }
        model.epochs_seen = epoch;
        let val_accuracy = if val_images.is_empty() {
            f64::NAN
        } else {
            accuracy(&model, &val_images, &val_labels)?
        };
        let loss = loss_sum / seen as f64;
        log::info!("{} epoch {epoch}: loss {loss:.4}, val acc {val_accuracy:.4}", arch.name);
        history.epochs.push(EpochStats {
            epoch,
            loss,
            val_accuracy,
        });
        let improved = best.as_ref().is_none_or(|(b, _)| val_accuracy > *b || b.is_nan());
        if improved {
            best = Some((val_accuracy, model.net.params.clone()));
            history.best_epoch = epoch;
        }
    }
    if let Some((_, params)) = best {
        model.net.params = params;
    }
    Ok((model, history))
}

#[cfg(test)]
pub(crate) fn adam_step_for_test(params: &mut [f32], grads: &[f32], cfg: &TrainConfig) {
    let mask = vec![true; params.len()];
    Adam::new(params.len()).update(params, grads, &mask, cfg);
}
