use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::arch::ArchConfig;
use super::layers::{
    pool_backward, pool_forward, relu_backward, relu_forward, BatchNorm, Cache, Conv, Dense, Layer, Shape,
    BN_MOMENTUM,
};
use super::scalar::Scalar;
use crate::rng::{rng_for, Rng, Stream};
use crate::{Error, Result};

/// One named tensor inside the flat parameter vector.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    /// Buffers such as batch-norm running statistics are not trained.
    pub trainable: bool,
}

impl ParamEntry {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A VGG-style network whose parameters live in one flat vector, laid out
/// as described by the manifest.
#[derive(Clone, Debug)]
pub struct Network<S> {
    pub arch: ArchConfig,
    layers: Vec<Layer>,
    manifest: Vec<ParamEntry>,
    pub params: Vec<S>,
}

/// Activations and caches of a training step.
#[derive(Debug, Default)]
pub struct Workspace<S> {
    acts: Vec<Vec<S>>,
    caches: Vec<Cache<S>>,
    col: Vec<S>,
    dcol: Vec<S>,
    grad_a: Vec<S>,
    grad_b: Vec<S>,
}

impl<S> Workspace<S> {
    pub fn new() -> Self {
        Workspace {
            acts: Vec::new(),
            caches: Vec::new(),
            col: Vec::new(),
            dcol: Vec::new(),
            grad_a: Vec::new(),
            grad_b: Vec::new(),
        }
    }
}

struct Builder {
    layers: Vec<Layer>,
    manifest: Vec<ParamEntry>,
    len: usize,
}

impl Builder {
    fn alloc(&mut self, name: String, shape: Vec<usize>, trainable: bool) -> usize {
        let offset = self.len;
        let e = ParamEntry {
            name,
            shape,
            offset,
            trainable,
        };
        self.len += e.len();
        self.manifest.push(e);
        offset
    }
}

impl<S: Scalar> Network<S> {
    /// Builds the layer graph with all parameters zero (batch-norm scales
    /// and running variances are one).
    pub fn zeros(arch: &ArchConfig) -> Result<Self> {
        arch.validate()?;
        let mut b = Builder {
            layers: Vec::new(),
            manifest: Vec::new(),
            len: 0,
        };
        let mut shape = Shape {
            c: 1,
            h: arch.input.height,
            w: arch.input.width,
        };
        let mut conv_no = 0;
        for (si, stage) in arch.stages.iter().enumerate() {
            for ci in 0..stage.convs {
                conv_no += 1;
                let tag = format!("stage{}.conv{}", si + 1, ci + 1);
                let weight = b.alloc(format!("{tag}.weight"), vec![stage.width, shape.c, 3, 3], true);
                let bias = b.alloc(format!("{tag}.bias"), vec![stage.width], true);
                b.layers.push(Layer::Conv(Conv {
                    input: shape,
                    c_out: stage.width,
                    weight,
                    bias,
                }));
                shape.c = stage.width;
                if arch.batch_norm {
                    let gamma = b.alloc(format!("{tag}.bn.gamma"), vec![shape.c], true);
                    let beta = b.alloc(format!("{tag}.bn.beta"), vec![shape.c], true);
                    let running_mean = b.alloc(format!("{tag}.bn.running_mean"), vec![shape.c], false);
                    let running_var = b.alloc(format!("{tag}.bn.running_var"), vec![shape.c], false);
                    b.layers.push(Layer::BatchNorm(BatchNorm {
                        shape,
                        gamma,
                        beta,
                        running_mean,
                        running_var,
                    }));
                }
                b.layers.push(Layer::Relu(shape.len()));
            }
            b.layers.push(Layer::MaxPool(shape));
            shape.h /= 2;
            shape.w /= 2;
        }
        debug_assert_eq!(conv_no + 1, arch.layer_count());
        let features = shape.len();
        if arch.dropout > 0.0 {
            b.layers.push(Layer::Dropout {
                len: features,
                rate: arch.dropout,
            });
        }
        let weight = b.alloc("head.weight".into(), vec![arch.classes, features], true);
        let bias = b.alloc("head.bias".into(), vec![arch.classes], true);
        b.layers.push(Layer::Dense(Dense {
            inputs: features,
            outputs: arch.classes,
            weight,
            bias,
        }));
        let mut params = vec![S::ZERO; b.len];
        for e in &b.manifest {
            if e.name.ends_with("gamma") || e.name.ends_with("running_var") {
                params[e.offset..e.offset + e.len()].fill(S::ONE);
            }
        }
        Ok(Network {
            arch: arch.clone(),
            layers: b.layers,
            manifest: b.manifest,
            params,
        })
    }

    /// He-normal weights, zero biases.
    pub fn new(arch: &ArchConfig, seed: u64) -> Result<Self> {
        let mut net = Self::zeros(arch)?;
        let mut rng = rng_for(seed, Stream::Init, 0);
        for e in &net.manifest {
            if !e.name.ends_with(".weight") {
                continue;
            }
            let fan_in: usize = e.shape[1..].iter().product();
            let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
            for p in &mut net.params[e.offset..e.offset + e.len()] {
                *p = S::from_f64(normal.sample(&mut rng));
            }
        }
        Ok(net)
    }

    pub fn manifest(&self) -> &[ParamEntry] {
        &self.manifest
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn trainable_count(&self) -> usize {
        self.manifest.iter().filter(|e| e.trainable).map(|e| e.len()).sum()
    }

    pub fn input_len(&self) -> usize {
        self.arch.input.pixels()
    }

    pub fn classes(&self) -> usize {
        self.arch.classes
    }

    /// Inference-mode logits (`batch x classes`, row-major): batch-norm uses
    /// running statistics and dropout is off.
    pub fn infer(&self, x: &[S], batch: usize) -> Result<Vec<S>> {
        if x.len() != batch * self.input_len() {
            return Err(Error::Dimension(format!(
                "expected {batch} inputs of {} values, got {} values",
                self.input_len(),
                x.len()
            )));
        }
        let p = &self.params;
        let mut a = x.to_vec();
        let mut b = Vec::new();
        let mut col = Vec::new();
        for layer in &self.layers {
            b.resize(batch * layer.out_len(), S::ZERO);
            match layer {
                Layer::Conv(c) => c.forward(p, &a, &mut b, batch, &mut col),
                Layer::BatchNorm(n) => n.forward_infer(p, &a, &mut b, batch),
                Layer::Relu(_) => relu_forward(&a, &mut b),
                Layer::MaxPool(s) => pool_forward(*s, &a, &mut b, batch, None),
                Layer::Dropout { .. } => b.copy_from_slice(&a),
                Layer::Dense(d) => d.forward(p, &a, &mut b, batch),
            }
            std::mem::swap(&mut a, &mut b);
        }
        Ok(a)
    }

    /// Training-mode forward pass; returns the logits. Batch statistics and
    /// dropout masks are kept in `ws` for [`backward`](Self::backward).
    pub fn forward_train<'w>(&self, x: &[S], batch: usize, ws: &'w mut Workspace<S>, rng: &mut Rng) -> &'w [S] {
        assert_eq!(x.len(), batch * self.input_len(), "input size");
        let p = &self.params;
        let n = self.layers.len();
        ws.acts.resize_with(n + 1, Vec::new);
        ws.caches.resize_with(n, Cache::default);
        ws.acts[0].clear();
        ws.acts[0].extend_from_slice(x);
        for (i, layer) in self.layers.iter().enumerate() {
            let (before, after) = ws.acts.split_at_mut(i + 1);
            let (input, out) = (&before[i], &mut after[0]);
            out.resize(batch * layer.out_len(), S::ZERO);
            let cache = &mut ws.caches[i];
            match layer {
                Layer::Conv(c) => c.forward(p, input, out, batch, &mut ws.col),
                Layer::BatchNorm(bn) => bn.forward_train(p, input, out, batch, cache),
                Layer::Relu(_) => relu_forward(input, out),
                Layer::MaxPool(s) => pool_forward(*s, input, out, batch, Some(&mut cache.argmax)),
                Layer::Dropout { rate, .. } => {
                    let keep = S::from_f64(1.0 / (1.0 - *rate as f64));
                    cache.mask.clear();
                    cache.mask.extend(
                        (0..input.len()).map(|_| if rng.random::<f32>() < *rate { S::ZERO } else { keep }),
                    );
                    for ((o, &v), &m) in out.iter_mut().zip(input.iter()).zip(&cache.mask) {
                        *o = v * m;
                    }
                }
                Layer::Dense(d) => d.forward(p, input, out, batch),
            }
        }
        &ws.acts[n]
    }

    /// Accumulates parameter gradients into `grads` given the gradient of
    /// the loss with respect to the logits of the last training forward pass.
    pub fn backward(&self, ws: &mut Workspace<S>, dlogits: &[S], grads: &mut [S], batch: usize) {
        assert_eq!(grads.len(), self.params.len());
        let p = &self.params;
        let Workspace {
            acts,
            caches,
            col,
            dcol,
            grad_a,
            grad_b,
        } = ws;
        grad_a.clear();
        grad_a.extend_from_slice(dlogits);
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let need_dx = i > 0;
            grad_b.resize(batch * layer.in_len(), S::ZERO);
            let dx = need_dx.then_some(&mut grad_b[..]);
            match layer {
                Layer::Conv(c) => c.backward(p, &acts[i], grad_a, dx, grads, batch, col, dcol),
                Layer::BatchNorm(bn) => bn.backward(p, grad_a, grad_b, grads, batch, &caches[i]),
                Layer::Relu(_) => relu_backward(&acts[i + 1], grad_a, grad_b),
                Layer::MaxPool(_) => pool_backward(grad_a, grad_b, &caches[i].argmax),
                Layer::Dropout { .. } => {
                    for ((d, &g), &m) in grad_b.iter_mut().zip(grad_a.iter()).zip(&caches[i].mask) {
                        *d = g * m;
                    }
                }
                Layer::Dense(d) => d.backward(p, &acts[i], grad_a, dx, grads, batch),
            }
            std::mem::swap(grad_a, grad_b);
        }
    }

    /// Folds the batch statistics of the last training pass into the
    /// running averages. `momentum = 1` replaces them outright.
    pub fn update_running_stats(&mut self, ws: &Workspace<S>, momentum: f64) {
        for (layer, cache) in self.layers.iter().zip(&ws.caches) {
            if let Layer::BatchNorm(bn) = layer {
                for c in 0..bn.shape.c {
                    let m = &mut self.params[bn.running_mean + c];
                    *m = S::from_f64((1.0 - momentum) * m.to_f64() + momentum * cache.batch_mean[c]);
                    let v = &mut self.params[bn.running_var + c];
                    *v = S::from_f64((1.0 - momentum) * v.to_f64() + momentum * cache.batch_var[c]);
                }
            }
        }
    }

    pub fn default_momentum() -> f64 {
        BN_MOMENTUM
    }

    /// Per-parameter flag: true for trainable entries.
    pub fn trainable_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.params.len()];
        for e in self.manifest.iter().filter(|e| e.trainable) {
            mask[e.offset..e.offset + e.len()].fill(true);
        }
        mask
    }

    /// Converts parameters to another precision.
    pub fn cast<T: Scalar>(&self) -> Network<T> {
        Network {
            arch: self.arch.clone(),
            layers: self.layers.clone(),
            manifest: self.manifest.clone(),
            params: self.params.iter().map(|p| T::from_f64(p.to_f64())).collect(),
        }
    }
}

/// Mean softmax cross-entropy over the batch (accumulated in f64) and its
/// gradient with respect to the logits.
pub fn softmax_cross_entropy<S: Scalar>(logits: &[S], labels: &[u8], classes: usize) -> (f64, Vec<S>) {
    let batch = labels.len();
    let mut grad = vec![S::ZERO; logits.len()];
    let mut loss = 0.0;
    for (s, &y) in labels.iter().enumerate() {
        let row = &logits[s * classes..(s + 1) * classes];
        let probs = softmax(row.iter().map(|v| v.to_f64()), 1.0);
        loss -= probs[y as usize].max(f64::MIN_POSITIVE).ln();
        for (k, p) in probs.iter().enumerate() {
            let t = if k == y as usize { 1.0 } else { 0.0 };
            grad[s * classes + k] = S::from_f64((p - t) / batch as f64);
        }
    }
    (loss / batch as f64, grad)
}

/// Temperature-scaled softmax with max-subtraction.
pub fn softmax(logits: impl IntoIterator<Item = f64>, temperature: f64) -> Vec<f64> {
    let z: Vec<f64> = logits.into_iter().map(|v| v / temperature).collect();
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = e.iter().sum();
    e.into_iter().map(|v| v / sum).collect()
}
