//! Convolution-only text recognizer.
//!
//! Six 3x3 convolutions with ReLU and five max pools reduce the image
//! height to one row; a per-column linear head scores every class for each
//! horizontal window. There is no recurrent or attention head, so each
//! window sees only its convolutional receptive field.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::alphabet::Alphabet;
use crate::ctc::{ctc_loss_and_grad, FrameLogits};
use crate::discriminator::backward_conv;
use crate::error::{Error, Result};
use crate::image::WordImage;
use crate::nn::{
    max_pool, max_pool_backward, relu, relu_backward, Conv2d, ConvCache, Grads, ParamStore, Tensor,
};
use crate::noise::rng_from_seed;

/// Pool after each of the first five convolutions, as `(height, width)`:
/// two 2x2 then three height-only pools. Height shrinks by 32, width by 4.
pub const POOLS: [(usize, usize); 5] = [(2, 2), (2, 2), (2, 1), (2, 1), (2, 1)];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecognizerConfig {
    /// Output channels of the six convolutions.
    pub channels: [usize; 6],
}

impl Default for RecognizerConfig {
    fn default() -> Self {
        Self {
            channels: [8, 16, 32, 32, 64, 64],
        }
    }
}

impl RecognizerConfig {
    pub fn scaled(&self, factor: usize) -> Self {
        Self {
            channels: self.channels.map(|c| c * factor.max(1)),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Recognizer {
    img_height: usize,
    config: RecognizerConfig,
    classes: usize,
    params: ParamStore,
    convs: Vec<Conv2d>,
    head: Conv2d,
}

struct LayerCache {
    conv: ConvCache,
    pre: Tensor,
    act: Tensor,
    pooled: Option<Tensor>,
}

pub struct RecTrace {
    layers: Vec<LayerCache>,
    head: ConvCache,
    in_hw: (usize, usize),
}

impl Recognizer {
    pub fn new(
        img_height: usize,
        config: RecognizerConfig,
        alphabet: &Alphabet,
        seed: u64,
    ) -> Result<Self> {
        let final_h = POOLS.iter().fold(img_height, |h, &(ph, _)| h.div_ceil(ph));
        if img_height == 0 || final_h != 1 {
            return Err(Error::ShapeConfig(format!(
                "recognizer pools reduce height {img_height} to {final_h}, need 1"
            )));
        }
        if config.channels.contains(&0) {
            return Err(Error::ShapeConfig(
                "recognizer channels must be positive".into(),
            ));
        }
        let mut rng = rng_from_seed(seed);
        let mut params = ParamStore::new();
        let mut cin = 1;
        let mut convs = Vec::with_capacity(6);
        for (i, &cout) in config.channels.iter().enumerate() {
            convs.push(Conv2d::new(
                &mut params,
                &format!("R.conv{}", i + 1),
                cin,
                cout,
                3,
                &mut rng,
            ));
            cin = cout;
        }
        let classes = alphabet.num_classes();
        let head = Conv2d::new(&mut params, "R.head", cin, classes, 1, &mut rng);
        Ok(Self {
            img_height,
            config,
            classes,
            params,
            convs,
            head,
        })
    }

    pub fn config(&self) -> &RecognizerConfig {
        &self.config
    }

    pub fn img_height(&self) -> usize {
        self.img_height
    }

    pub fn num_classes(&self) -> usize {
        self.classes
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn horizontal_stride(&self) -> usize {
        POOLS.iter().map(|p| p.1).product()
    }

    pub fn min_width(&self) -> usize {
        self.horizontal_stride()
    }

    /// Windows produced for an input of `width` pixels.
    pub fn frames_for_width(&self, width: usize) -> usize {
        POOLS.iter().fold(width, |w, &(_, pw)| w.div_ceil(pw))
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

    pub fn recognize(&self, image: &WordImage) -> Result<FrameLogits> {
        Ok(self.forward(image)?.0)
    }

    pub fn forward(&self, image: &WordImage) -> Result<(FrameLogits, RecTrace)> {
        self.check(image)?;
        let mut x = Tensor::from_vec(1, image.height, image.width, image.pixels.clone());
        let mut layers = Vec::with_capacity(self.convs.len());
        for (i, conv) in self.convs.iter().enumerate() {
            let (pre, cache) = conv.forward_cached(&self.params, &x);
            let act = relu(&pre);
            let pooled = POOLS.get(i).map(|&(ph, pw)| max_pool(&act, ph, pw));
            x = pooled.clone().unwrap_or_else(|| act.clone());
            layers.push(LayerCache {
                conv: cache,
                pre,
                act,
                pooled,
            });
        }
        let (out, head) = self.head.forward_cached(&self.params, &x);
        debug_assert_eq!(out.h, 1);
        let frames = out.w;
        let mut scores = vec![0.0; frames * self.classes];
        for k in 0..self.classes {
            for t in 0..frames {
                scores[t * self.classes + k] = out.at(k, 0, t);
            }
        }
        let mut logits = FrameLogits::new(scores, frames, self.classes);
        logits.input_width = image.width;
        Ok((
            logits,
            RecTrace {
                layers,
                head,
                in_hw: (image.height, image.width),
            },
        ))
    }

    /// Backpropagates `d loss / d scores` and returns `d loss / d pixels`.
    pub fn backward(
        &self,
        trace: &RecTrace,
        grad_scores: &[f64],
        mut grads: Option<&mut Grads>,
    ) -> Vec<f64> {
        let frames = grad_scores.len() / self.classes;
        let mut g = Tensor::zeros(self.classes, 1, frames);
        for t in 0..frames {
            for k in 0..self.classes {
                g.data[k * frames + t] = grad_scores[t * self.classes + k];
            }
        }
        let mut g = backward_conv(
            &self.head,
            &self.params,
            &trace.head,
            &g,
            grads.as_deref_mut(),
        );
        for (i, (conv, c)) in self.convs.iter().zip(&trace.layers).enumerate().rev() {
            if let (Some(pooled), Some(&(ph, pw))) = (&c.pooled, POOLS.get(i)) {
                g = max_pool_backward(&c.act, pooled, &g, ph, pw);
            }
            let gp = relu_backward(&c.pre, &g);
            g = backward_conv(conv, &self.params, &c.conv, &gp, grads.as_deref_mut());
        }
        debug_assert_eq!((g.h, g.w), trace.in_hw);
        g.data
    }

    /// CTC loss of `target` on `image` and its gradient with respect to the
    /// pixels. Parameter gradients are accumulated when `grads` is given.
    pub fn loss_and_image_gradient(
        &self,
        image: &WordImage,
        target: &[usize],
        grads: Option<&mut Grads>,
    ) -> Result<(f64, Vec<f64>)> {
        let (logits, trace) = self.forward(image)?;
        let (loss, g) = ctc_loss_and_grad(&logits, target)?;
        Ok((loss, self.backward(&trace, &g, grads)))
    }

    /// Input columns that can influence window `t`.
    pub fn frame_receptive_field(&self, t: usize, width: usize) -> Range<usize> {
        let (mut lo, mut hi) = (t as isize, t as isize + 1);
        for (i, conv) in self.convs.iter().enumerate().rev() {
            if let Some(&(_, pw)) = POOLS.get(i) {
                lo *= pw as isize;
                hi *= pw as isize;
            }
            lo -= conv.radius() as isize;
            hi += conv.radius() as isize;
        }
        lo.max(0) as usize..hi.min(width as isize) as usize
    }
}

/// `d ctc / d pixels` for a single image.
pub fn recognizer_image_gradient(
    image: &WordImage,
    target: &[usize],
    recognizer: &Recognizer,
) -> Result<Vec<f64>> {
    Ok(recognizer.loss_and_image_gradient(image, target, None)?.1)
}
