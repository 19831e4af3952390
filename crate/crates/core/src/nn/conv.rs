//! Stride-1 "same" convolution lowered to a single GEMM per call.

use rand::Rng;

use super::init::orthogonal;
use super::params::{Grads, ParamId, ParamStore};
use super::tensor::Tensor;

/// Square odd-sized kernel, zero padding `k / 2`, unit stride.
///
/// Weights are stored as a `cout x (cin * k * k)` matrix whose column index
/// is `(ci * k + ky) * k + kx`.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
}

pub struct ConvCache {
    cols: Vec<f64>,
    h: usize,
    w: usize,
}

impl Conv2d {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        cin: usize,
        cout: usize,
        k: usize,
        rng: &mut R,
    ) -> Self {
        assert!(k % 2 == 1, "kernel size must be odd");
        let fan_in = cin * k * k;
        let weight = store.add(
            format!("{name}.weight"),
            vec![cout, cin, k, k],
            orthogonal(cout, fan_in, rng),
        );
        let bias = store.add(format!("{name}.bias"), vec![cout], vec![0.0; cout]);
        Self {
            weight,
            bias,
            cin,
            cout,
            k,
        }
    }

    /// Horizontal (and vertical) reach of the kernel on each side.
    pub fn radius(&self) -> usize {
        self.k / 2
    }

    fn fan_in(&self) -> usize {
        self.cin * self.k * self.k
    }

    fn im2col(&self, x: &Tensor) -> Vec<f64> {
        if self.k == 1 {
            return x.data.clone();
        }
        let (h, w, k) = (x.h, x.w, self.k);
        let p = w * h;
        let pad = (k / 2) as isize;
        let mut cols = vec![0.0; self.fan_in() * p];
        for ci in 0..self.cin {
            let src = x.channel(ci);
            for ky in 0..k {
                for kx in 0..k {
                    let row = (ci * k + ky) * k + kx;
                    let dst = &mut cols[row * p..(row + 1) * p];
                    let dx = kx as isize - pad;
                    let x_lo = (-dx).max(0) as usize;
                    let x_hi = (w as isize - dx).min(w as isize).max(0) as usize;
                    for y in 0..h {
                        let sy = y as isize + ky as isize - pad;
                        if sy < 0 || sy >= h as isize || x_lo >= x_hi {
                            continue;
                        }
                        let srow = &src[sy as usize * w..(sy as usize + 1) * w];
                        let sx0 = (x_lo as isize + dx) as usize;
                        dst[y * w + x_lo..y * w + x_hi]
                            .copy_from_slice(&srow[sx0..sx0 + (x_hi - x_lo)]);
                    }
                }
            }
        }
        cols
    }

    fn col2im(&self, cols: &[f64], h: usize, w: usize) -> Tensor {
        if self.k == 1 {
            return Tensor::from_vec(self.cin, h, w, cols.to_vec());
        }
        let k = self.k;
        let p = w * h;
        let pad = (k / 2) as isize;
        let mut out = Tensor::zeros(self.cin, h, w);
        for ci in 0..self.cin {
            let plane = &mut out.data[ci * p..(ci + 1) * p];
            for ky in 0..k {
                for kx in 0..k {
                    let row = (ci * k + ky) * k + kx;
                    let src = &cols[row * p..(row + 1) * p];
                    let dx = kx as isize - pad;
                    let x_lo = (-dx).max(0) as usize;
                    let x_hi = (w as isize - dx).min(w as isize).max(0) as usize;
                    for y in 0..h {
                        let sy = y as isize + ky as isize - pad;
                        if sy < 0 || sy >= h as isize || x_lo >= x_hi {
                            continue;
                        }
                        let sx0 = (x_lo as isize + dx) as usize;
                        let drow = &mut plane
                            [sy as usize * w + sx0..sy as usize * w + sx0 + (x_hi - x_lo)];
                        for (d, s) in drow.iter_mut().zip(&src[y * w + x_lo..y * w + x_hi]) {
                            *d += s;
                        }
                    }
                }
            }
        }
        out
    }

    fn apply(&self, store: &ParamStore, cols: &[f64], h: usize, w: usize) -> Tensor {
        let p = h * w;
        let kdim = self.fan_in();
        let weight = store.get(self.weight);
        let bias = store.get(self.bias);
        let mut out = Tensor::zeros(self.cout, h, w);
        if p > 0 {
            // SAFETY: all three buffers are dense row-major with the strides given.
            unsafe {
                matrixmultiply::dgemm(
                    self.cout,
                    kdim,
                    p,
                    1.0,
                    weight.as_ptr(),
                    kdim as isize,
                    1,
                    cols.as_ptr(),
                    p as isize,
                    1,
                    0.0,
                    out.data.as_mut_ptr(),
                    p as isize,
                    1,
                );
            }
        }
        for (co, &b) in bias.iter().enumerate() {
            for v in &mut out.data[co * p..(co + 1) * p] {
                *v += b;
            }
        }
        out
    }

    pub fn forward(&self, store: &ParamStore, x: &Tensor) -> Tensor {
        assert_eq!(x.c, self.cin, "conv input channels");
        let cols = self.im2col(x);
        self.apply(store, &cols, x.h, x.w)
    }

    pub fn forward_cached(&self, store: &ParamStore, x: &Tensor) -> (Tensor, ConvCache) {
        assert_eq!(x.c, self.cin, "conv input channels");
        let cols = self.im2col(x);
        let y = self.apply(store, &cols, x.h, x.w);
        (
            y,
            ConvCache {
                cols,
                h: x.h,
                w: x.w,
            },
        )
    }

    /// Accumulates weight and bias gradients and returns the input gradient.
    pub fn backward(
        &self,
        store: &ParamStore,
        cache: &ConvCache,
        gy: &Tensor,
        grads: &mut Grads,
    ) -> Tensor {
        let (h, w) = (cache.h, cache.w);
        let p = h * w;
        let kdim = self.fan_in();
        assert_eq!(gy.shape(), (self.cout, h, w), "conv output gradient shape");
        if p == 0 {
            return Tensor::zeros(self.cin, h, w);
        }
        {
            let gb = grads.get_mut(self.bias);
            for (co, g) in gb.iter_mut().enumerate() {
                *g += gy.data[co * p..(co + 1) * p].iter().sum::<f64>();
            }
        }
        let gw = grads.get_mut(self.weight);
        // SAFETY: dense buffers; gy is cout x p, cols is kdim x p, gw is cout x kdim.
        unsafe {
            matrixmultiply::dgemm(
                self.cout,
                p,
                kdim,
                1.0,
                gy.data.as_ptr(),
                p as isize,
                1,
                cache.cols.as_ptr(),
                1,
                p as isize,
                1.0,
                gw.as_mut_ptr(),
                kdim as isize,
                1,
            );
        }
        self.backward_input(store, cache, gy)
    }

    /// Input gradient only; leaves parameter gradients untouched.
    pub fn backward_input(&self, store: &ParamStore, cache: &ConvCache, gy: &Tensor) -> Tensor {
        let (h, w) = (cache.h, cache.w);
        let p = h * w;
        let kdim = self.fan_in();
        if p == 0 {
            return Tensor::zeros(self.cin, h, w);
        }
        let weight = store.get(self.weight);
        let mut gcols = vec![0.0; kdim * p];
        // SAFETY: weight read transposed (kdim x cout), gy is cout x p.
        unsafe {
            matrixmultiply::dgemm(
                kdim,
                self.cout,
                p,
                1.0,
                weight.as_ptr(),
                1,
                kdim as isize,
                gy.data.as_ptr(),
                p as isize,
                1,
                0.0,
                gcols.as_mut_ptr(),
                p as isize,
                1,
            );
        }
        self.col2im(&gcols, h, w)
    }
}
