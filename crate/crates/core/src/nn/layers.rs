//! Parameter-free layers and the noise-modulated normalization.

use rand::Rng;

use super::init::normal;
use super::params::{Grads, ParamId, ParamStore};
use super::tensor::Tensor;

pub const NORM_EPS: f64 = 1e-5;

pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| if v > 0.0 { v } else { 0.0 })
}

/// Gradient of ReLU given its *input*.
pub fn relu_backward(x: &Tensor, gy: &Tensor) -> Tensor {
    Tensor {
        data: x
            .data
            .iter()
            .zip(&gy.data)
            .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
            .collect(),
        ..gy.clone()
    }
}

/// Gradient of tanh given its *output*.
pub fn tanh_backward(y: &Tensor, gy: &Tensor) -> Tensor {
    Tensor {
        data: y
            .data
            .iter()
            .zip(&gy.data)
            .map(|(&v, &g)| g * (1.0 - v * v))
            .collect(),
        ..gy.clone()
    }
}

pub fn upsample_nearest(x: &Tensor, fh: usize, fw: usize) -> Tensor {
    if fh == 1 && fw == 1 {
        return x.clone();
    }
    let (h, w) = (x.h * fh, x.w * fw);
    let mut out = Tensor::zeros(x.c, h, w);
    for c in 0..x.c {
        for y in 0..h {
            let src = &x.data[(c * x.h + y / fh) * x.w..(c * x.h + y / fh + 1) * x.w];
            let dst = &mut out.data[(c * h + y) * w..(c * h + y + 1) * w];
            for (xx, d) in dst.iter_mut().enumerate() {
                *d = src[xx / fw];
            }
        }
    }
    out
}

pub fn upsample_nearest_backward(gy: &Tensor, fh: usize, fw: usize) -> Tensor {
    if fh == 1 && fw == 1 {
        return gy.clone();
    }
    let (h, w) = (gy.h / fh, gy.w / fw);
    let mut out = Tensor::zeros(gy.c, h, w);
    for c in 0..gy.c {
        for y in 0..gy.h {
            for x in 0..gy.w {
                let i = out.idx(c, y / fh, x / fw);
                out.data[i] += gy.at(c, y, x);
            }
        }
    }
    out
}

/// 2x2 average pooling, stride 2; a trailing odd row or column is dropped.
pub fn avg_pool2(x: &Tensor) -> Tensor {
    let (h, w) = (x.h / 2, x.w / 2);
    let mut out = Tensor::zeros(x.c, h, w);
    for c in 0..x.c {
        for y in 0..h {
            for xx in 0..w {
                let s = x.at(c, 2 * y, 2 * xx)
                    + x.at(c, 2 * y, 2 * xx + 1)
                    + x.at(c, 2 * y + 1, 2 * xx)
                    + x.at(c, 2 * y + 1, 2 * xx + 1);
                let i = out.idx(c, y, xx);
                out.data[i] = 0.25 * s;
            }
        }
    }
    out
}

pub fn avg_pool2_backward(gy: &Tensor, in_h: usize, in_w: usize) -> Tensor {
    let mut out = Tensor::zeros(gy.c, in_h, in_w);
    for c in 0..gy.c {
        for y in 0..gy.h {
            for x in 0..gy.w {
                let g = 0.25 * gy.at(c, y, x);
                for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                    let i = out.idx(c, 2 * y + dy, 2 * x + dx);
                    out.data[i] += g;
                }
            }
        }
    }
    out
}

/// Non-overlapping max pooling with window = stride = `(ph, pw)`. Partial
/// windows at the bottom/right edge are kept (ceil mode), so the output is
/// `ceil(h / ph) x ceil(w / pw)`.
pub fn max_pool(x: &Tensor, ph: usize, pw: usize) -> Tensor {
    let (h, w) = (x.h.div_ceil(ph), x.w.div_ceil(pw));
    let mut out = Tensor::zeros(x.c, h, w);
    for c in 0..x.c {
        for y in 0..h {
            for xx in 0..w {
                let mut m = f64::NEG_INFINITY;
                for sy in y * ph..((y + 1) * ph).min(x.h) {
                    for sx in xx * pw..((xx + 1) * pw).min(x.w) {
                        m = m.max(x.at(c, sy, sx));
                    }
                }
                let i = out.idx(c, y, xx);
                out.data[i] = m;
            }
        }
    }
    out
}

/// Routes each output gradient to the maxima of its window; exact ties share
/// the gradient equally.
pub fn max_pool_backward(x: &Tensor, y: &Tensor, gy: &Tensor, ph: usize, pw: usize) -> Tensor {
    let mut out = Tensor::zeros(x.c, x.h, x.w);
    for c in 0..x.c {
        for oy in 0..y.h {
            for ox in 0..y.w {
                let m = y.at(c, oy, ox);
                let rows = oy * ph..((oy + 1) * ph).min(x.h);
                let cols = ox * pw..((ox + 1) * pw).min(x.w);
                let mut ties = 0usize;
                for sy in rows.clone() {
                    for sx in cols.clone() {
                        if x.at(c, sy, sx) == m {
                            ties += 1;
                        }
                    }
                }
                let g = gy.at(c, oy, ox) / ties as f64;
                for sy in rows.clone() {
                    for sx in cols.clone() {
                        if x.at(c, sy, sx) == m {
                            let i = out.idx(c, sy, sx);
                            out.data[i] += g;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Normalizes each `(channel, column)` over the image height.
///
/// Statistics never mix columns, so a change in one column cannot reach
/// another through this layer.
pub fn column_norm(x: &Tensor) -> (Tensor, Vec<f64>) {
    let (c, h, w) = x.shape();
    let mut xhat = Tensor::zeros(c, h, w);
    let mut inv_std = vec![0.0; c * w];
    let n = h as f64;
    for ch in 0..c {
        for col in 0..w {
            let mut mean = 0.0;
            for y in 0..h {
                mean += x.at(ch, y, col);
            }
            mean /= n;
            let mut var = 0.0;
            for y in 0..h {
                let d = x.at(ch, y, col) - mean;
                var += d * d;
            }
            var /= n;
            let inv = 1.0 / (var + NORM_EPS).sqrt();
            inv_std[ch * w + col] = inv;
            for y in 0..h {
                let i = x.idx(ch, y, col);
                xhat.data[i] = (x.data[i] - mean) * inv;
            }
        }
    }
    (xhat, inv_std)
}

pub fn column_norm_backward(xhat: &Tensor, inv_std: &[f64], g: &Tensor) -> Tensor {
    let (c, h, w) = xhat.shape();
    let mut out = Tensor::zeros(c, h, w);
    let n = h as f64;
    for ch in 0..c {
        for col in 0..w {
            let mut mean_g = 0.0;
            let mut mean_gx = 0.0;
            for y in 0..h {
                let i = xhat.idx(ch, y, col);
                mean_g += g.data[i];
                mean_gx += g.data[i] * xhat.data[i];
            }
            mean_g /= n;
            mean_gx /= n;
            let inv = inv_std[ch * w + col];
            for y in 0..h {
                let i = xhat.idx(ch, y, col);
                out.data[i] = inv * (g.data[i] - mean_g - xhat.data[i] * mean_gx);
            }
        }
    }
    out
}

/// Per-channel scale and shift. When `cond_dim > 0` both are affine
/// functions of a conditioning vector (`gain = b_g + W_g z`,
/// `shift = b_s + W_s z`); otherwise they are plain learned vectors.
#[derive(Debug, Clone)]
pub struct Modulation {
    pub gain_bias: ParamId,
    pub shift_bias: ParamId,
    pub gain_weight: Option<ParamId>,
    pub shift_weight: Option<ParamId>,
    pub channels: usize,
    pub cond_dim: usize,
}

/// Cache of a normalize-then-modulate pass.
pub struct ModNormCache {
    xhat: Tensor,
    inv_std: Vec<f64>,
    gain: Vec<f64>,
    cond: Vec<f64>,
}

impl Modulation {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        channels: usize,
        cond_dim: usize,
        rng: &mut R,
    ) -> Self {
        let gain_bias = store.add(
            format!("{name}.gain_bias"),
            vec![channels],
            vec![1.0; channels],
        );
        let shift_bias = store.add(
            format!("{name}.shift_bias"),
            vec![channels],
            vec![0.0; channels],
        );
        let (gain_weight, shift_weight) = if cond_dim > 0 {
            // Small random maps so the noise chunk modulates from the first step.
            let std = 0.1 / (cond_dim as f64).sqrt();
            let g = store.add(
                format!("{name}.gain_weight"),
                vec![channels, cond_dim],
                normal(channels * cond_dim, std, rng),
            );
            let s = store.add(
                format!("{name}.shift_weight"),
                vec![channels, cond_dim],
                normal(channels * cond_dim, std, rng),
            );
            (Some(g), Some(s))
        } else {
            (None, None)
        };
        Self {
            gain_bias,
            shift_bias,
            gain_weight,
            shift_weight,
            channels,
            cond_dim,
        }
    }

    fn affine(
        &self,
        store: &ParamStore,
        bias: ParamId,
        weight: Option<ParamId>,
        z: &[f64],
    ) -> Vec<f64> {
        let mut out = store.get(bias).to_vec();
        if let Some(w) = weight {
            let w = store.get(w);
            for (c, o) in out.iter_mut().enumerate() {
                *o += w[c * self.cond_dim..(c + 1) * self.cond_dim]
                    .iter()
                    .zip(z)
                    .map(|(a, b)| a * b)
                    .sum::<f64>();
            }
        }
        out
    }

    fn coefficients(&self, store: &ParamStore, z: &[f64]) -> (Vec<f64>, Vec<f64>) {
        assert_eq!(z.len(), self.cond_dim, "conditioning vector length");
        (
            self.affine(store, self.gain_bias, self.gain_weight, z),
            self.affine(store, self.shift_bias, self.shift_weight, z),
        )
    }

    /// Column normalization followed by the modulation.
    pub fn forward(&self, store: &ParamStore, x: &Tensor, z: &[f64]) -> (Tensor, ModNormCache) {
        assert_eq!(x.c, self.channels, "modulation channels");
        let (xhat, inv_std) = column_norm(x);
        let (gain, shift) = self.coefficients(store, z);
        let plane = x.plane();
        let mut y = xhat.clone();
        for c in 0..x.c {
            for v in &mut y.data[c * plane..(c + 1) * plane] {
                *v = gain[c] * *v + shift[c];
            }
        }
        let cache = ModNormCache {
            xhat,
            inv_std,
            gain,
            cond: z.to_vec(),
        };
        (y, cache)
    }

    pub fn backward(&self, cache: &ModNormCache, gy: &Tensor, grads: &mut Grads) -> Tensor {
        let plane = gy.plane();
        let mut g_gain = vec![0.0; self.channels];
        let mut g_shift = vec![0.0; self.channels];
        let mut g_xhat = gy.clone();
        for c in 0..self.channels {
            let gs = &gy.data[c * plane..(c + 1) * plane];
            let xs = &cache.xhat.data[c * plane..(c + 1) * plane];
            g_gain[c] = gs.iter().zip(xs).map(|(a, b)| a * b).sum();
            g_shift[c] = gs.iter().sum();
            for v in &mut g_xhat.data[c * plane..(c + 1) * plane] {
                *v *= cache.gain[c];
            }
        }
        let dim = self.cond_dim;
        for (bias, weight, g) in [
            (self.gain_bias, self.gain_weight, &g_gain),
            (self.shift_bias, self.shift_weight, &g_shift),
        ] {
            for (d, s) in grads.get_mut(bias).iter_mut().zip(g) {
                *d += s;
            }
            if let Some(w) = weight {
                let gw = grads.get_mut(w);
                for c in 0..self.channels {
                    for j in 0..dim {
                        gw[c * dim + j] += g[c] * cache.cond[j];
                    }
                }
            }
        }
        column_norm_backward(&cache.xhat, &cache.inv_std, &g_xhat)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(c: usize, h: usize, w: usize) -> Tensor {
        Tensor::from_vec(
            c,
            h,
            w,
            (0..c * h * w)
                .map(|i| ((i * 7919) % 23) as f64 * 0.1 - 1.0)
                .collect(),
        )
    }

    #[test]
    fn max_pool_ceil_mode_shapes() {
        let x = ramp(2, 5, 7);
        let y = max_pool(&x, 2, 2);
        assert_eq!(y.shape(), (2, 3, 4));
        let y = max_pool(&x, 2, 1);
        assert_eq!(y.shape(), (2, 3, 7));
    }

    #[test]
    fn max_pool_ties_share_gradient() {
        let x = Tensor::from_vec(1, 2, 2, vec![1.0, 1.0, 0.0, 1.0]);
        let y = max_pool(&x, 2, 2);
        let g = Tensor::from_vec(1, 1, 1, vec![3.0]);
        let gx = max_pool_backward(&x, &y, &g, 2, 2);
        assert_eq!(gx.data, vec![1.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn avg_pool_floor_shapes() {
        let x = ramp(1, 5, 9);
        assert_eq!(avg_pool2(&x).shape(), (1, 2, 4));
    }

    #[test]
    fn upsample_backward_sums_copies() {
        let x = ramp(2, 2, 3);
        let y = upsample_nearest(&x, 2, 1);
        assert_eq!(y.shape(), (2, 4, 3));
        let g = upsample_nearest_backward(&Tensor::from_vec(2, 4, 3, vec![1.0; 24]), 2, 1);
        assert!(g.data.iter().all(|&v| v == 2.0));
    }

    #[test]
    fn column_norm_zero_mean_unit_var_per_column() {
        let x = ramp(3, 8, 5);
        let (xhat, _) = column_norm(&x);
        for c in 0..3 {
            for col in 0..5 {
                let vals: Vec<f64> = (0..8).map(|y| xhat.at(c, y, col)).collect();
                let m = vals.iter().sum::<f64>() / 8.0;
                let v = vals.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / 8.0;
                assert!(m.abs() < 1e-12);
                assert!(v < 1.0 + 1e-9 && v > 0.99);
            }
        }
    }

    #[test]
    fn column_norm_is_column_local() {
        let x = ramp(2, 6, 5);
        let mut x2 = x.clone();
        for y in 0..6 {
            let i = x2.idx(1, y, 2);
            x2.data[i] += 3.0 * y as f64;
        }
        let (a, _) = column_norm(&x);
        let (b, _) = column_norm(&x2);
        for c in 0..2 {
            for y in 0..6 {
                for col in [0, 1, 3, 4] {
                    assert_eq!(a.at(c, y, col).to_bits(), b.at(c, y, col).to_bits());
                }
            }
        }
    }
}
