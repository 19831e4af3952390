//! Fully convolutional patch critic and the hinge losses.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::image::WordImage;
use crate::nn::{
    avg_pool2, avg_pool2_backward, relu, relu_backward, Conv2d, ConvCache, Grads, ParamStore,
    Tensor,
};
use crate::noise::rng_from_seed;
use crate::shape::ModelShape;

const N_BLOCKS: usize = 4;

/// Total downsampling of the critic; also its narrowest accepted width.
pub const STRIDE: usize = 1 << N_BLOCKS;

#[derive(Debug, Clone)]
struct DiscBlock {
    /// The first block sees raw pixels and skips the leading ReLU.
    first: bool,
    conv1: Conv2d,
    conv2: Conv2d,
    skip: Conv2d,
}

struct BlockCache {
    input: Tensor,
    c1: ConvCache,
    h1: Tensor,
    c2: ConvCache,
    c2_hw: (usize, usize),
    sk: ConvCache,
}

pub struct DiscTrace {
    blocks: Vec<BlockCache>,
    feat: Tensor,
    head: ConvCache,
    in_hw: (usize, usize),
}

/// Mean critic score and the per-position scores it averages.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchScores {
    pub score: f64,
    /// Row-major `rows x cols` patch scores.
    pub patches: Vec<f64>,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone)]
pub struct Discriminator {
    shape: ModelShape,
    img_height: usize,
    params: ParamStore,
    blocks: Vec<DiscBlock>,
    head: Conv2d,
}

impl Discriminator {
    pub fn new(shape: &ModelShape, seed: u64) -> Result<Self> {
        shape.validate()?;
        let mut rng = rng_from_seed(seed);
        let mut params = ParamStore::new();
        let mut cin = 1;
        let mut blocks = Vec::with_capacity(N_BLOCKS);
        for (k, &cout) in shape.disc_channels().iter().enumerate() {
            let name = format!("D.block{}", k + 1);
            blocks.push(DiscBlock {
                first: k == 0,
                conv1: Conv2d::new(
                    &mut params,
                    &format!("{name}.conv1"),
                    cin,
                    cout,
                    3,
                    &mut rng,
                ),
                conv2: Conv2d::new(
                    &mut params,
                    &format!("{name}.conv2"),
                    cout,
                    cout,
                    3,
                    &mut rng,
                ),
                skip: Conv2d::new(&mut params, &format!("{name}.skip"), cin, cout, 1, &mut rng),
            });
            cin = cout;
        }
        let head = Conv2d::new(&mut params, "D.head", cin, 1, 1, &mut rng);
        if shape.img_height < (1 << N_BLOCKS) {
            return Err(Error::ShapeConfig(format!(
                "image height {} is below the critic's stride {}",
                shape.img_height,
                1 << N_BLOCKS
            )));
        }
        Ok(Self {
            shape: shape.clone(),
            img_height: shape.img_height,
            params,
            blocks,
            head,
        })
    }

    pub fn shape(&self) -> &ModelShape {
        &self.shape
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// Product of the per-block downsampling strides.
    pub fn stride(&self) -> usize {
        1 << self.blocks.len()
    }

    /// Narrowest accepted image: one patch column.
    pub fn min_width(&self) -> usize {
        self.stride()
    }

    fn check(&self, image: &WordImage) -> Result<()> {
        if image.height != self.img_height {
            return Err(Error::HeightMismatch {
                height: image.height,
                expected: self.img_height,
            });
        }
        if image.width < self.min_width() {
            return Err(Error::WidthTooSmall {
                width: image.width,
                min: self.min_width(),
            });
        }
        Ok(())
    }

    pub fn score(&self, image: &WordImage) -> Result<PatchScores> {
        Ok(self.forward(image)?.0)
    }

    pub fn forward(&self, image: &WordImage) -> Result<(PatchScores, DiscTrace)> {
        self.check(image)?;
        let mut x = Tensor::from_vec(1, image.height, image.width, image.pixels.clone());
        let mut caches = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let a = if b.first { x.clone() } else { relu(&x) };
            let (h1, c1) = b.conv1.forward_cached(&self.params, &a);
            let (h2, c2) = b.conv2.forward_cached(&self.params, &relu(&h1));
            let (s, sk) = b.skip.forward_cached(&self.params, &x);
            let c2_hw = (h2.h, h2.w);
            let y = avg_pool2(&h2).add(&avg_pool2(&s));
            caches.push(BlockCache {
                input: x,
                c1,
                h1,
                c2,
                c2_hw,
                sk,
            });
            x = y;
        }
        let (map, head) = self.head.forward_cached(&self.params, &relu(&x));
        let scores = PatchScores {
            score: mean(&map.data),
            patches: map.data.clone(),
            rows: map.h,
            cols: map.w,
        };
        let trace = DiscTrace {
            blocks: caches,
            feat: x,
            head,
            in_hw: (image.height, image.width),
        };
        Ok((scores, trace))
    }

    /// Backpropagates `d_score` (dL/dscore) and returns dL/dpixels. Parameter
    /// gradients are accumulated into `grads` when given.
    pub fn backward(
        &self,
        trace: &DiscTrace,
        d_score: f64,
        mut grads: Option<&mut Grads>,
    ) -> Vec<f64> {
        let (h, w) = (trace.feat.h, trace.feat.w);
        let n = (h * w) as f64;
        let g_map = Tensor::from_vec(1, h, w, vec![d_score / n; h * w]);
        let g = backward_conv(
            &self.head,
            &self.params,
            &trace.head,
            &g_map,
            grads.as_deref_mut(),
        );
        let mut g = relu_backward(&trace.feat, &g);
        for (b, c) in self.blocks.iter().zip(&trace.blocks).rev() {
            let g2 = avg_pool2_backward(&g, c.c2_hw.0, c.c2_hw.1);
            let gs = backward_conv(&b.skip, &self.params, &c.sk, &g2, grads.as_deref_mut());
            let g1 = backward_conv(&b.conv2, &self.params, &c.c2, &g2, grads.as_deref_mut());
            let g1 = relu_backward(&c.h1, &g1);
            let ga = backward_conv(&b.conv1, &self.params, &c.c1, &g1, grads.as_deref_mut());
            let mut gx = if b.first {
                ga
            } else {
                relu_backward(&c.input, &ga)
            };
            gx.add_assign(&gs);
            g = gx;
        }
        debug_assert_eq!((g.h, g.w), trace.in_hw);
        g.data
    }

    /// Input columns that can influence patch column `col`.
    pub fn patch_receptive_field(&self, col: usize, width: usize) -> Range<usize> {
        let (mut lo, mut hi) = (col as isize, col as isize + 1);
        for b in self.blocks.iter().rev() {
            // average pool: output j reads [2j, 2j + 2)
            lo *= 2;
            hi *= 2;
            let reach = (b.conv1.radius() + b.conv2.radius()) as isize;
            lo -= reach;
            hi += reach;
        }
        lo.max(0) as usize..hi.min(width as isize) as usize
    }
}

pub(crate) fn backward_conv(
    conv: &Conv2d,
    store: &ParamStore,
    cache: &ConvCache,
    gy: &Tensor,
    grads: Option<&mut Grads>,
) -> Tensor {
    match grads {
        Some(g) => conv.backward(store, cache, gy, g),
        None => conv.backward_input(store, cache, gy),
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// `mean(max(0, 1 - real)) + mean(max(0, 1 + fake))`.
pub fn hinge_d_loss(real_scores: &[f64], fake_scores: &[f64]) -> Result<f64> {
    let (r, f) = hinge_d_terms(real_scores, fake_scores)?;
    Ok(r + f)
}

/// The real and fake halves of [`hinge_d_loss`].
pub fn hinge_d_terms(real_scores: &[f64], fake_scores: &[f64]) -> Result<(f64, f64)> {
    if real_scores.is_empty() || fake_scores.is_empty() {
        return Err(Error::EmptyInput);
    }
    let real =
        real_scores.iter().map(|s| (1.0 - s).max(0.0)).sum::<f64>() / real_scores.len() as f64;
    let fake =
        fake_scores.iter().map(|s| (1.0 + s).max(0.0)).sum::<f64>() / fake_scores.len() as f64;
    Ok((real, fake))
}

/// Derivatives of [`hinge_d_loss`] with respect to each score.
pub fn hinge_d_grads(real_scores: &[f64], fake_scores: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let nr = real_scores.len() as f64;
    let nf = fake_scores.len() as f64;
    (
        real_scores
            .iter()
            .map(|&s| if 1.0 - s > 0.0 { -1.0 / nr } else { 0.0 })
            .collect(),
        fake_scores
            .iter()
            .map(|&s| if 1.0 + s > 0.0 { 1.0 / nf } else { 0.0 })
            .collect(),
    )
}

/// Generator side of the hinge objective: `-mean(fake)`.
pub fn hinge_g_loss(fake_scores: &[f64]) -> Result<f64> {
    if fake_scores.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(-mean(fake_scores))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hinge_table() {
        assert_eq!(hinge_d_loss(&[1.0], &[-1.0]).unwrap(), 0.0);
        assert_eq!(hinge_d_loss(&[0.0], &[0.0]).unwrap(), 2.0);
        assert_eq!(hinge_d_loss(&[2.0, 0.5], &[-3.0, 1.0]).unwrap(), 1.25);
        assert_eq!(hinge_g_loss(&[0.0]).unwrap(), 0.0);
        assert_eq!(hinge_g_loss(&[1.0, 3.0]).unwrap(), -2.0);
        assert!(hinge_d_loss(&[], &[1.0]).is_err());
        assert!(hinge_g_loss(&[]).is_err());
    }

    #[test]
    fn patch_map_scales_with_width() {
        let d = Discriminator::new(&ModelShape::desk(), 3).unwrap();
        assert_eq!(d.stride(), 16);
        let a = d.score(&WordImage::filled(32, 64, 0.3)).unwrap();
        let b = d.score(&WordImage::filled(32, 128, 0.3)).unwrap();
        assert_eq!(a.cols * 2, b.cols);
        assert_eq!(a.rows, b.rows);
        let m = a.patches.iter().sum::<f64>() / a.patches.len() as f64;
        assert_eq!(a.score, m);
    }

    #[test]
    fn too_narrow_is_rejected() {
        let d = Discriminator::new(&ModelShape::desk(), 3).unwrap();
        assert!(matches!(
            d.score(&WordImage::filled(32, 15, 0.0)),
            Err(Error::WidthTooSmall { width: 15, min: 16 })
        ));
        assert!(matches!(
            d.score(&WordImage::filled(16, 64, 0.0)),
            Err(Error::HeightMismatch { .. })
        ));
    }
}
