//! Layer kernels. Activations are NCHW, one contiguous block per sample.

use serde::{Deserialize, Serialize};

use super::scalar::{gemm, Scalar};

pub(crate) const BN_EPS: f64 = 1e-5;
pub(crate) const BN_MOMENTUM: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shape {
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub fn len(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn hw(&self) -> usize {
        self.h * self.w
    }
}

/// 3x3 convolution, stride 1, zero padding 1. Weights `[c_out, c_in * 9]`.
#[derive(Clone, Debug)]
pub struct Conv {
    pub input: Shape,
    pub c_out: usize,
    pub weight: usize,
    pub bias: usize,
}

#[derive(Clone, Debug)]
pub struct BatchNorm {
    pub shape: Shape,
    pub gamma: usize,
    pub beta: usize,
    pub running_mean: usize,
    pub running_var: usize,
}

#[derive(Clone, Debug)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weight: usize,
    pub bias: usize,
}

#[derive(Clone, Debug)]
pub enum Layer {
    Conv(Conv),
    BatchNorm(BatchNorm),
    Relu(usize),
    MaxPool(Shape),
    Dropout { len: usize, rate: f32 },
    Dense(Dense),
}

/// Per-layer state kept from the training forward pass for backprop.
#[derive(Clone, Debug, Default)]
pub struct Cache<S> {
    pub xhat: Vec<S>,
    pub inv_std: Vec<f64>,
    pub batch_mean: Vec<f64>,
    pub batch_var: Vec<f64>,
    pub argmax: Vec<u32>,
    pub mask: Vec<S>,
}

impl Layer {
    pub fn out_len(&self) -> usize {
        match self {
            Layer::Conv(c) => c.c_out * c.input.hw(),
            Layer::BatchNorm(b) => b.shape.len(),
            Layer::Relu(n) => *n,
            Layer::MaxPool(s) => s.c * (s.h / 2) * (s.w / 2),
            Layer::Dropout { len, .. } => *len,
            Layer::Dense(d) => d.outputs,
        }
    }

    pub fn in_len(&self) -> usize {
        match self {
            Layer::Conv(c) => c.input.len(),
            Layer::BatchNorm(b) => b.shape.len(),
            Layer::Relu(n) => *n,
            Layer::MaxPool(s) => s.len(),
            Layer::Dropout { len, .. } => *len,
            Layer::Dense(d) => d.inputs,
        }
    }
}

/// Unrolls 3x3 padded patches of one `c x h x w` sample into `col`, shaped
/// `[c * 9, h * w]`.
pub(crate) fn im2col<S: Scalar>(x: &[S], s: Shape, col: &mut [S]) {
    let (h, w, hw) = (s.h, s.w, s.hw());
    for c in 0..s.c {
        let src = &x[c * hw..(c + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut col[(c * 9 + ky * 3 + kx) * hw..][..hw];
                for y in 0..h {
                    let dst = &mut row[y * w..(y + 1) * w];
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        dst.fill(S::ZERO);
                        continue;
                    }
                    let line = &src[sy as usize * w..(sy as usize + 1) * w];
                    match kx {
                        0 => {
                            dst[0] = S::ZERO;
                            dst[1..].copy_from_slice(&line[..w - 1]);
                        }
                        1 => dst.copy_from_slice(line),
                        _ => {
                            dst[..w - 1].copy_from_slice(&line[1..]);
                            dst[w - 1] = S::ZERO;
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulates `col` back into `dx`.
pub(crate) fn col2im<S: Scalar>(col: &[S], s: Shape, dx: &mut [S]) {
    let (h, w, hw) = (s.h, s.w, s.hw());
    for c in 0..s.c {
        let dst = &mut dx[c * hw..(c + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &col[(c * 9 + ky * 3 + kx) * hw..][..hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src = &row[y * w..(y + 1) * w];
                    let line = &mut dst[sy as usize * w..(sy as usize + 1) * w];
                    match kx {
                        0 => line[..w - 1].iter_mut().zip(&src[1..]).for_each(|(d, &v)| *d += v),
                        1 => line.iter_mut().zip(src).for_each(|(d, &v)| *d += v),
                        _ => line[1..].iter_mut().zip(&src[..w - 1]).for_each(|(d, &v)| *d += v),
                    }
                }
            }
        }
    }
}

impl Conv {
    pub fn k(&self) -> usize {
        self.input.c * 9
    }

    pub fn forward<S: Scalar>(&self, p: &[S], x: &[S], y: &mut [S], batch: usize, col: &mut Vec<S>) {
        let (k, hw) = (self.k(), self.input.hw());
        let w = &p[self.weight..self.weight + self.c_out * k];
        let b = &p[self.bias..self.bias + self.c_out];
        col.resize(k * hw, S::ZERO);
        for s in 0..batch {
            let xs = &x[s * self.input.len()..(s + 1) * self.input.len()];
            let ys = &mut y[s * self.c_out * hw..(s + 1) * self.c_out * hw];
            im2col(xs, self.input, col);
            gemm(false, false, self.c_out, hw, k, S::ONE, w, col, S::ZERO, ys);
            for (o, &bv) in ys.chunks_exact_mut(hw).zip(b) {
                o.iter_mut().for_each(|v| *v += bv);
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn backward<S: Scalar>(
        &self,
        p: &[S],
        x: &[S],
        dy: &[S],
        dx: Option<&mut [S]>,
        g: &mut [S],
        batch: usize,
        col: &mut Vec<S>,
        dcol: &mut Vec<S>,
    ) {
        let (k, hw) = (self.k(), self.input.hw());
        let w = &p[self.weight..self.weight + self.c_out * k];
        col.resize(k * hw, S::ZERO);
        let mut dx = dx;
        if let Some(d) = dx.as_deref_mut() {
            d.fill(S::ZERO);
            dcol.resize(k * hw, S::ZERO);
        }
        for s in 0..batch {
            let xs = &x[s * self.input.len()..(s + 1) * self.input.len()];
            let dys = &dy[s * self.c_out * hw..(s + 1) * self.c_out * hw];
            im2col(xs, self.input, col);
            {
                let gw = &mut g[self.weight..self.weight + self.c_out * k];
                gemm(false, true, self.c_out, k, hw, S::ONE, dys, col, S::ONE, gw);
            }
            let gb = &mut g[self.bias..self.bias + self.c_out];
            for (gbv, o) in gb.iter_mut().zip(dys.chunks_exact(hw)) {
                let sum: f64 = o.iter().map(|v| v.to_f64()).sum();
                *gbv += S::from_f64(sum);
            }
            if let Some(d) = dx.as_deref_mut() {
                gemm(true, false, k, hw, self.c_out, S::ONE, w, dys, S::ZERO, dcol);
                col2im(dcol, self.input, &mut d[s * self.input.len()..(s + 1) * self.input.len()]);
            }
        }
    }
}

impl BatchNorm {
    pub fn forward_train<S: Scalar>(&self, p: &[S], x: &[S], y: &mut [S], batch: usize, cache: &mut Cache<S>) {
        let (c_n, hw) = (self.shape.c, self.shape.hw());
        let n = (batch * hw) as f64;
        cache.xhat.resize(x.len(), S::ZERO);
        cache.inv_std.resize(c_n, 0.0);
        cache.batch_mean.resize(c_n, 0.0);
        cache.batch_var.resize(c_n, 0.0);
        for c in 0..c_n {
            let plane = |s: usize| s * c_n * hw + c * hw..s * c_n * hw + (c + 1) * hw;
            let mut sum = 0.0;
            for s in 0..batch {
                sum += x[plane(s)].iter().map(|v| v.to_f64()).sum::<f64>();
            }
            let mean = sum / n;
            let mut sq = 0.0;
            for s in 0..batch {
                sq += x[plane(s)].iter().map(|v| (v.to_f64() - mean).powi(2)).sum::<f64>();
            }
            let var = sq / n;
            let inv = 1.0 / (var + BN_EPS).sqrt();
            cache.batch_mean[c] = mean;
            cache.batch_var[c] = var;
            cache.inv_std[c] = inv;
            let (gamma, beta) = (p[self.gamma + c], p[self.beta + c]);
            for s in 0..batch {
                let r = plane(s);
                for i in r {
                    let xh = S::from_f64((x[i].to_f64() - mean) * inv);
                    cache.xhat[i] = xh;
                    y[i] = gamma * xh + beta;
                }
            }
        }
    }

    pub fn forward_infer<S: Scalar>(&self, p: &[S], x: &[S], y: &mut [S], batch: usize) {
        let (c_n, hw) = (self.shape.c, self.shape.hw());
        for c in 0..c_n {
            let mean = p[self.running_mean + c];
            let inv = S::from_f64(1.0 / (p[self.running_var + c].to_f64() + BN_EPS).sqrt());
            let scale = p[self.gamma + c] * inv;
            let shift = p[self.beta + c] - mean * scale;
            for s in 0..batch {
                let off = s * c_n * hw + c * hw;
                for i in off..off + hw {
                    y[i] = x[i] * scale + shift;
                }
            }
        }
    }

    pub fn backward<S: Scalar>(&self, p: &[S], dy: &[S], dx: &mut [S], g: &mut [S], batch: usize, cache: &Cache<S>) {
        let (c_n, hw) = (self.shape.c, self.shape.hw());
        let n = (batch * hw) as f64;
        for c in 0..c_n {
            let plane = |s: usize| s * c_n * hw + c * hw..s * c_n * hw + (c + 1) * hw;
            let (mut dgamma, mut dbeta) = (0.0, 0.0);
            for s in 0..batch {
                for i in plane(s) {
                    dgamma += dy[i].to_f64() * cache.xhat[i].to_f64();
                    dbeta += dy[i].to_f64();
                }
            }
            g[self.gamma + c] += S::from_f64(dgamma);
            g[self.beta + c] += S::from_f64(dbeta);
            let k = p[self.gamma + c].to_f64() * cache.inv_std[c] / n;
            for s in 0..batch {
                for i in plane(s) {
                    let v = k * (n * dy[i].to_f64() - dbeta - cache.xhat[i].to_f64() * dgamma);
                    dx[i] = S::from_f64(v);
                }
            }
        }
    }
}

pub(crate) fn relu_forward<S: Scalar>(x: &[S], y: &mut [S]) {
    for (o, &v) in y.iter_mut().zip(x) {
        *o = if v > S::ZERO { v } else { S::ZERO };
    }
}

pub(crate) fn relu_backward<S: Scalar>(y: &[S], dy: &[S], dx: &mut [S]) {
    for ((d, &g), &o) in dx.iter_mut().zip(dy).zip(y) {
        *d = if o > S::ZERO { g } else { S::ZERO };
    }
}

/// 2x2 max-pool, stride 2. When `argmax` is given, records the input index
/// of each selected element (first maximum wins).
pub(crate) fn pool_forward<S: Scalar>(s: Shape, x: &[S], y: &mut [S], batch: usize, mut argmax: Option<&mut Vec<u32>>) {
    let (oh, ow) = (s.h / 2, s.w / 2);
    if let Some(a) = argmax.as_deref_mut() {
        a.resize(batch * s.c * oh * ow, 0);
    }
    let mut o = 0;
    for plane in 0..batch * s.c {
        let base = plane * s.hw();
        for oy in 0..oh {
            for ox in 0..ow {
                let i0 = base + 2 * oy * s.w + 2 * ox;
                let mut best = i0;
                for i in [i0 + 1, i0 + s.w, i0 + s.w + 1] {
                    if x[i] > x[best] {
                        best = i;
                    }
                }
                y[o] = x[best];
                if let Some(a) = argmax.as_deref_mut() {
                    a[o] = best as u32;
                }
                o += 1;
            }
        }
    }
}

pub(crate) fn pool_backward<S: Scalar>(dy: &[S], dx: &mut [S], argmax: &[u32]) {
    dx.fill(S::ZERO);
    for (&g, &i) in dy.iter().zip(argmax) {
        dx[i as usize] += g;
    }
}

impl Dense {
    pub fn forward<S: Scalar>(&self, p: &[S], x: &[S], y: &mut [S], batch: usize) {
        let w = &p[self.weight..self.weight + self.outputs * self.inputs];
        gemm(false, true, batch, self.outputs, self.inputs, S::ONE, x, w, S::ZERO, y);
        let b = &p[self.bias..self.bias + self.outputs];
        for row in y.chunks_exact_mut(self.outputs).take(batch) {
            row.iter_mut().zip(b).for_each(|(v, &bv)| *v += bv);
        }
    }

    pub fn backward<S: Scalar>(&self, p: &[S], x: &[S], dy: &[S], dx: Option<&mut [S]>, g: &mut [S], batch: usize) {
        let (i_n, o_n) = (self.inputs, self.outputs);
        gemm(true, false, o_n, i_n, batch, S::ONE, dy, x, S::ONE, &mut g[self.weight..self.weight + o_n * i_n]);
        for row in dy.chunks_exact(o_n).take(batch) {
            for (gb, &v) in g[self.bias..self.bias + o_n].iter_mut().zip(row) {
                *gb += v;
            }
        }
        if let Some(d) = dx {
            let w = &p[self.weight..self.weight + o_n * i_n];
            gemm(false, false, batch, i_n, o_n, S::ONE, dy, w, S::ZERO, d);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        // <im2col(x), c> == <x, col2im(c)>
        let s = Shape { c: 2, h: 5, w: 4 };
        let x: Vec<f64> = (0..s.len()).map(|i| (i as f64 * 0.7).sin()).collect();
        let c: Vec<f64> = (0..s.c * 9 * s.hw()).map(|i| (i as f64 * 0.3).cos()).collect();
        let mut col = vec![0.0; c.len()];
        im2col(&x, s, &mut col);
        let mut back = vec![0.0; s.len()];
        col2im(&c, s, &mut back);
        let lhs: f64 = col.iter().zip(&c).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn pooling_picks_maxima() {
        let s = Shape { c: 1, h: 2, w: 4 };
        let x = [1.0f32, 5.0, 2.0, 2.0, 3.0, 4.0, 9.0, 0.0];
        let mut y = [0.0; 2];
        let mut am = Vec::new();
        pool_forward(s, &x, &mut y, 1, Some(&mut am));
        assert_eq!(y, [5.0, 9.0]);
        assert_eq!(am, vec![1, 6]);
        let mut dx = [0.0; 8];
        pool_backward(&[1.0, 2.0], &mut dx, &am);
        assert_eq!(dx, [0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 2.0, 0.0]);
    }
}
