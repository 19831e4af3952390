//! Character-conditional, fully convolutional word generator.
//!
//! A word of `n` characters selects `n` filters from a per-character bank,
//! projects each onto the style vector `z1`, and lays the results side by
//! side as a `seed_channels x seed_spatial x seed_spatial*n` seed. Residual
//! blocks then upsample to `img_height x char_width*n`. Blocks only see
//! their own noise chunk, never the characters, so all class information
//! enters through the seed.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::alphabet::Alphabet;
use crate::error::{Error, Result};
use crate::image::WordImage;
use crate::nn::{
    init, relu, relu_backward, tanh_backward, upsample_nearest, upsample_nearest_backward, Conv2d,
    ConvCache, Grads, ModNormCache, Modulation, ParamId, ParamStore, Tensor,
};
use crate::noise::{rng_from_seed, NoiseBundle};
use crate::shape::ModelShape;

/// How generator blocks are normalized.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormMode {
    /// Scale and shift are affine functions of the block's noise chunk.
    #[default]
    Conditional,
    /// Scale and shift are free parameters; noise chunks z2..z4 are unused.
    Plain,
}

#[derive(Debug, Clone)]
struct GenBlock {
    up: (usize, usize),
    norm1: Modulation,
    conv1: Conv2d,
    norm2: Modulation,
    conv2: Conv2d,
    skip: Conv2d,
}

struct BlockCache {
    n1: ModNormCache,
    m1: Tensor,
    c1: ConvCache,
    n2: ModNormCache,
    m2: Tensor,
    c2: ConvCache,
    sk: ConvCache,
    in_shape: (usize, usize, usize),
}

/// Everything [`Generator::backward`] needs from a forward pass.
pub struct GenTrace {
    classes: Vec<usize>,
    z1: Vec<f64>,
    blocks: Vec<BlockCache>,
    out_norm: ModNormCache,
    out_pre: Tensor,
    out_conv: ConvCache,
    out: Tensor,
}

/// Images of a batch plus a width-padded copy and its validity mask.
#[derive(Debug, Clone)]
pub struct GeneratedBatch {
    pub images: Vec<WordImage>,
    pub max_width: usize,
    /// `batch x img_height x max_width`, padded with paper white (+1).
    pub padded: Vec<f64>,
    /// `batch x max_width`; true where the column belongs to the word.
    pub mask: Vec<Vec<bool>>,
}

#[derive(Debug, Clone)]
pub struct Generator {
    shape: ModelShape,
    alphabet: Alphabet,
    norm_mode: NormMode,
    params: ParamStore,
    filters: Vec<ParamId>,
    blocks: Vec<GenBlock>,
    out_norm: Modulation,
    out_conv: Conv2d,
}

impl Generator {
    pub fn new(
        shape: ModelShape,
        alphabet: Alphabet,
        norm_mode: NormMode,
        seed: u64,
    ) -> Result<Self> {
        shape.validate()?;
        let mut rng = rng_from_seed(seed);
        let mut params = ParamStore::new();
        let filters = (0..alphabet.len())
            .map(|i| {
                params.add(
                    format!("G.filter.{i}"),
                    vec![shape.filter_rows, shape.filter_cols],
                    init::orthogonal(shape.filter_rows, shape.filter_cols, &mut rng),
                )
            })
            .collect();
        let cond_dim = match norm_mode {
            NormMode::Conditional => shape.noise_chunk_dim,
            NormMode::Plain => 0,
        };
        let mut cin = shape.seed_channels;
        let mut blocks = Vec::with_capacity(shape.n_gen_blocks);
        for (k, (&cout, &up)) in shape
            .gen_channels()
            .iter()
            .zip(&shape.per_block_upsample)
            .enumerate()
        {
            let name = format!("G.block{}", k + 1);
            blocks.push(GenBlock {
                up,
                norm1: Modulation::new(
                    &mut params,
                    &format!("{name}.norm1"),
                    cin,
                    cond_dim,
                    &mut rng,
                ),
                conv1: Conv2d::new(
                    &mut params,
                    &format!("{name}.conv1"),
                    cin,
                    cout,
                    3,
                    &mut rng,
                ),
                norm2: Modulation::new(
                    &mut params,
                    &format!("{name}.norm2"),
                    cout,
                    cond_dim,
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
        let out_norm = Modulation::new(&mut params, "G.out_norm", cin, 0, &mut rng);
        let out_conv = Conv2d::new(&mut params, "G.out_conv", cin, 1, 3, &mut rng);
        Ok(Self {
            shape,
            alphabet,
            norm_mode,
            params,
            filters,
            blocks,
            out_norm,
            out_conv,
        })
    }

    pub fn shape(&self) -> &ModelShape {
        &self.shape
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn norm_mode(&self) -> NormMode {
        self.norm_mode
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.count()
    }

    pub fn filter_id(&self, class: usize) -> ParamId {
        self.filters[class]
    }

    fn check_noise(&self, noise: &NoiseBundle) -> Result<()> {
        if noise
            .z
            .iter()
            .any(|c| c.len() != self.shape.noise_chunk_dim)
        {
            return Err(Error::ShapeMismatch(format!(
                "noise chunks must have length {}",
                self.shape.noise_chunk_dim
            )));
        }
        Ok(())
    }

    /// Projects each character's filter onto `z1` and reshapes the stacked
    /// rows into the spatial seed. Characters occupy consecutive blocks of
    /// `seed_spatial` columns, in order.
    pub fn assemble_seed(&self, text: &str, z1: &[f64]) -> Result<Tensor> {
        let classes = self.alphabet.encode(text)?;
        if z1.len() != self.shape.filter_rows {
            return Err(Error::ShapeMismatch(format!(
                "z1 has length {}, expected {}",
                z1.len(),
                self.shape.filter_rows
            )));
        }
        Ok(self.seed_from_classes(&classes, z1))
    }

    fn seed_from_classes(&self, classes: &[usize], z1: &[f64]) -> Tensor {
        let s = self.shape.seed_spatial;
        let cols = self.shape.filter_cols;
        let n = classes.len();
        let mut seed = Tensor::zeros(self.shape.seed_channels, s, s * n);
        let mut row = vec![0.0; cols];
        for (i, &cls) in classes.iter().enumerate() {
            let f = self.params.get(self.filters[cls]);
            row.iter_mut().for_each(|v| *v = 0.0);
            for (r, &zr) in z1.iter().enumerate() {
                for (acc, &fv) in row.iter_mut().zip(&f[r * cols..(r + 1) * cols]) {
                    *acc += zr * fv;
                }
            }
            for c in 0..self.shape.seed_channels {
                for y in 0..s {
                    for x in 0..s {
                        let idx = seed.idx(c, y, s * i + x);
                        seed.data[idx] = row[(c * s + y) * s + x];
                    }
                }
            }
        }
        seed
    }

    fn block_noise<'a>(&self, noise: &'a NoiseBundle, k: usize) -> &'a [f64] {
        match self.norm_mode {
            NormMode::Conditional => &noise.z[k + 1],
            NormMode::Plain => &[],
        }
    }

    pub fn generate(&self, text: &str, noise: &NoiseBundle) -> Result<WordImage> {
        Ok(self.forward(text, noise)?.0)
    }

    /// Forward pass that keeps the activations needed for backpropagation.
    pub fn forward(&self, text: &str, noise: &NoiseBundle) -> Result<(WordImage, GenTrace)> {
        self.check_noise(noise)?;
        let classes = self.alphabet.encode(text)?;
        let mut x = self.seed_from_classes(&classes, noise.z1());
        let mut caches = Vec::with_capacity(self.blocks.len());
        for (k, b) in self.blocks.iter().enumerate() {
            let z = self.block_noise(noise, k);
            let in_shape = x.shape();
            let (m1, n1) = b.norm1.forward(&self.params, &x, z);
            let u1 = upsample_nearest(&relu(&m1), b.up.0, b.up.1);
            let (h1, c1) = b.conv1.forward_cached(&self.params, &u1);
            let (m2, n2) = b.norm2.forward(&self.params, &h1, z);
            let (h2, c2) = b.conv2.forward_cached(&self.params, &relu(&m2));
            let (s, sk) = b
                .skip
                .forward_cached(&self.params, &upsample_nearest(&x, b.up.0, b.up.1));
            x = h2.add(&s);
            caches.push(BlockCache {
                n1,
                m1,
                c1,
                n2,
                m2,
                c2,
                sk,
                in_shape,
            });
        }
        let (out_pre, out_norm) = self.out_norm.forward(&self.params, &x, &[]);
        let (logits, out_conv) = self.out_conv.forward_cached(&self.params, &relu(&out_pre));
        let out = logits.map(f64::tanh);
        let image = WordImage::new(out.h, out.w, out.data.clone()).with_chars(classes.len());
        let trace = GenTrace {
            classes,
            z1: noise.z1().to_vec(),
            blocks: caches,
            out_norm,
            out_pre,
            out_conv,
            out,
        };
        Ok((image, trace))
    }

    /// Backpropagates `grad_image` (same layout as the generated pixels) into
    /// the generator's parameter gradients.
    pub fn backward(&self, trace: &GenTrace, grad_image: &[f64], grads: &mut Grads) {
        let out = &trace.out;
        assert_eq!(grad_image.len(), out.data.len(), "image gradient size");
        let gy = Tensor::from_vec(1, out.h, out.w, grad_image.to_vec());
        let g = tanh_backward(out, &gy);
        let g = self
            .out_conv
            .backward(&self.params, &trace.out_conv, &g, grads);
        let g = relu_backward(&trace.out_pre, &g);
        let mut g = self.out_norm.backward(&trace.out_norm, &g, grads);
        for (b, c) in self.blocks.iter().zip(&trace.blocks).rev() {
            let (up_h, up_w) = b.up;
            let g_skip = b.skip.backward(&self.params, &c.sk, &g, grads);
            let mut gx = upsample_nearest_backward(&g_skip, up_h, up_w);
            let g2 = b.conv2.backward(&self.params, &c.c2, &g, grads);
            let g2 = relu_backward(&c.m2, &g2);
            let g1 = b.norm2.backward(&c.n2, &g2, grads);
            let g1 = b.conv1.backward(&self.params, &c.c1, &g1, grads);
            let g1 = upsample_nearest_backward(&g1, up_h, up_w);
            let g1 = relu_backward(&c.m1, &g1);
            gx.add_assign(&b.norm1.backward(&c.n1, &g1, grads));
            debug_assert_eq!(gx.shape(), c.in_shape);
            g = gx;
        }
        // Seed gradient back into the selected filters.
        let s = self.shape.seed_spatial;
        let cols = self.shape.filter_cols;
        let mut grow = vec![0.0; cols];
        for (i, &cls) in trace.classes.iter().enumerate() {
            for c in 0..self.shape.seed_channels {
                for y in 0..s {
                    for x in 0..s {
                        grow[(c * s + y) * s + x] = g.at(c, y, s * i + x);
                    }
                }
            }
            let gf = grads.get_mut(self.filters[cls]);
            for (r, &zr) in trace.z1.iter().enumerate() {
                for (d, &gv) in gf[r * cols..(r + 1) * cols].iter_mut().zip(&grow) {
                    *d += zr * gv;
                }
            }
        }
    }

    /// Generates each word independently; results are bit-identical to
    /// per-word [`Generator::generate`] calls.
    pub fn generate_batch(&self, texts: &[&str], noise: &[NoiseBundle]) -> Result<GeneratedBatch> {
        if texts.len() != noise.len() {
            return Err(Error::LengthMismatch {
                left: texts.len(),
                right: noise.len(),
            });
        }
        let images = texts
            .iter()
            .zip(noise)
            .map(|(t, z)| self.generate(t, z))
            .collect::<Result<Vec<_>>>()?;
        let max_width = images.iter().map(|i| i.width).max().unwrap_or(0);
        let h = self.shape.img_height;
        let mut padded = vec![1.0; images.len() * h * max_width];
        let mut mask = Vec::with_capacity(images.len());
        for (b, img) in images.iter().enumerate() {
            for y in 0..h {
                let dst = (b * h + y) * max_width;
                padded[dst..dst + img.width]
                    .copy_from_slice(&img.pixels[y * img.width..(y + 1) * img.width]);
            }
            mask.push((0..max_width).map(|x| x < img.width).collect());
        }
        Ok(GeneratedBatch {
            images,
            max_width,
            padded,
            mask,
        })
    }

    /// Renders `text` along the straight line from style `a` to style `b`.
    pub fn interpolate_styles(
        &self,
        text: &str,
        a: &NoiseBundle,
        b: &NoiseBundle,
        steps: usize,
    ) -> Result<Vec<WordImage>> {
        if steps < 2 {
            return Err(Error::Config(format!(
                "interpolation needs at least 2 steps, got {steps}"
            )));
        }
        (0..steps)
            .map(|t| {
                let frac = t as f64 / (steps - 1) as f64;
                self.generate(text, &NoiseBundle::lerp(a, b, frac))
            })
            .collect()
    }

    /// Output columns that can change when character `index` of an
    /// `n_chars`-long word changes, derived from the upsampling factors and
    /// kernel radii. Normalization is per column and adds no spread.
    pub fn affected_columns(&self, n_chars: usize, index: usize) -> Range<usize> {
        assert!(index < n_chars);
        let s = self.shape.seed_spatial as isize;
        let (mut lo, mut hi) = (s * index as isize, s * (index as isize + 1));
        for b in &self.blocks {
            let f = b.up.1 as isize;
            let reach = (b.conv1.radius() + b.conv2.radius()) as isize;
            let skip_reach = b.skip.radius() as isize;
            lo = (lo * f - reach).min(lo * f - skip_reach);
            hi = (hi * f + reach).max(hi * f + skip_reach);
        }
        let r = self.out_conv.radius() as isize;
        let width = self.shape.image_width(n_chars) as isize;
        (lo - r).max(0) as usize..(hi + r).min(width) as usize
    }

    /// Columns each character's patch reaches beyond its own
    /// `char_width`-wide slot, on either side.
    pub fn receptive_overlap(&self) -> usize {
        // Any interior character of a long enough word shows the full spread.
        let band = self.affected_columns(5, 2);
        2 * self.shape.char_width - band.start
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::sample_noise;

    fn desk() -> Generator {
        Generator::new(
            ModelShape::desk(),
            Alphabet::lowercase(),
            NormMode::Conditional,
            1,
        )
        .unwrap()
    }

    #[test]
    fn width_is_sixteen_per_character() {
        let g = desk();
        let z = &sample_noise(0, 1, g.shape())[0];
        let img = g.generate("meet", z).unwrap();
        assert_eq!((img.height, img.width), (32, 64));
        assert!(img.pixels.iter().all(|v| (-1.0..=1.0).contains(v)));
        let long = g.generate("supercalifragilisticexpialidocious", z).unwrap();
        assert_eq!(long.width, 544);
    }

    #[test]
    fn zero_z1_gives_zero_seed() {
        let g = desk();
        let seed = g.assemble_seed("a", &[0.0; 16]).unwrap();
        assert_eq!(seed.shape(), (32, 4, 4));
        assert!(seed.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn swapping_filters_swaps_seed_blocks() {
        let mut g = desk();
        let z = &sample_noise(4, 1, g.shape())[0];
        let ba = g.assemble_seed("ba", z.z1()).unwrap();
        let fa = g.params().get(g.filter_id(0)).to_vec();
        let fb = g.params().get(g.filter_id(1)).to_vec();
        let (ia, ib) = (g.filter_id(0), g.filter_id(1));
        g.params_mut().get_mut(ia).copy_from_slice(&fb);
        g.params_mut().get_mut(ib).copy_from_slice(&fa);
        let ab_swapped = g.assemble_seed("ab", z.z1()).unwrap();
        assert_eq!(ba, ab_swapped);
    }

    #[test]
    fn rejects_unknown_characters_and_bad_noise() {
        let g = desk();
        let z = &sample_noise(0, 1, g.shape())[0];
        assert!(matches!(
            g.generate("ab3", z),
            Err(Error::UnknownCharacter {
                position: 2,
                ch: '3'
            })
        ));
        let short = NoiseBundle::zeros(3);
        assert!(matches!(
            g.generate("ab", &short),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn invalid_shape_is_a_config_error() {
        let mut s = ModelShape::desk();
        s.filter_cols = 100;
        assert!(matches!(
            Generator::new(s, Alphabet::lowercase(), NormMode::Conditional, 0),
            Err(Error::ShapeConfig(_))
        ));
    }

    #[test]
    fn batch_pads_to_widest_word() {
        let g = desk();
        let z = sample_noise(2, 2, g.shape());
        let batch = g.generate_batch(&["meet", "a"], &z).unwrap();
        assert_eq!(batch.max_width, 64);
        assert_eq!(batch.images[0].width, 64);
        assert_eq!(batch.images[1].width, 16);
        assert_eq!(batch.mask[1].iter().filter(|&&m| m).count(), 16);
        assert_eq!(batch.images[1], g.generate("a", &z[1]).unwrap());
        assert!(matches!(
            g.generate_batch(&["a"], &z),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn interpolation_endpoints_and_midpoint() {
        let g = desk();
        let z = sample_noise(3, 2, g.shape());
        let two = g.interpolate_styles("ab", &z[0], &z[1], 2).unwrap();
        assert_eq!(two[0], g.generate("ab", &z[0]).unwrap());
        assert_eq!(two[1], g.generate("ab", &z[1]).unwrap());
        let same = g.interpolate_styles("ab", &z[0], &z[0], 3).unwrap();
        assert!(same.iter().all(|img| *img == same[0]));
        let five = g.interpolate_styles("ab", &z[0], &z[1], 5).unwrap();
        let mid = NoiseBundle::lerp(&z[0], &z[1], 0.5);
        assert_eq!(five[2], g.generate("ab", &mid).unwrap());
        assert!(g.interpolate_styles("ab", &z[0], &z[1], 1).is_err());
    }

    #[test]
    fn plain_mode_ignores_block_noise() {
        let g = Generator::new(
            ModelShape::desk(),
            Alphabet::lowercase(),
            NormMode::Plain,
            1,
        )
        .unwrap();
        let mut z = sample_noise(5, 1, g.shape()).remove(0);
        let a = g.generate("cab", &z).unwrap();
        z.z[2][0] += 1.0;
        assert_eq!(a, g.generate("cab", &z).unwrap());
    }

    #[test]
    fn band_spreads_beyond_own_patch() {
        let g = desk();
        let band = g.affected_columns(5, 2);
        assert!(band.start < 32 && band.end > 48);
        assert!(g.receptive_overlap() > 0);
        assert_eq!(g.affected_columns(1, 0), 0..16);
    }
}
