//! Model geometry shared by the generator, discriminator and data pipeline.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Spatial and channel geometry of the generator, and by extension of every
/// image flowing through the system.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelShape {
    pub img_height: usize,
    pub char_width: usize,
    pub filter_rows: usize,
    pub filter_cols: usize,
    pub seed_channels: usize,
    pub seed_spatial: usize,
    pub noise_chunk_dim: usize,
    pub n_gen_blocks: usize,
    /// `(height_factor, width_factor)` of each generator block.
    pub per_block_upsample: Vec<(usize, usize)>,
}

impl ModelShape {
    /// Full-size geometry: 32x8192 filters reshaped to 512x4x4n, 32x16n output.
    pub fn full() -> Self {
        Self {
            img_height: 32,
            char_width: 16,
            filter_rows: 32,
            filter_cols: 8192,
            seed_channels: 512,
            seed_spatial: 4,
            noise_chunk_dim: 32,
            n_gen_blocks: 3,
            per_block_upsample: vec![(2, 2), (2, 2), (2, 1)],
        }
    }

    /// Channel-reduced geometry with the same spatial contract; trains on a CPU.
    pub fn desk() -> Self {
        Self {
            img_height: 32,
            char_width: 16,
            filter_rows: 16,
            filter_cols: 512,
            seed_channels: 32,
            seed_spatial: 4,
            noise_chunk_dim: 16,
            n_gen_blocks: 3,
            per_block_upsample: vec![(2, 2), (2, 2), (2, 1)],
        }
    }

    /// 16x8n images from an 8-channel seed. Used for finite-difference checks.
    pub fn tiny() -> Self {
        Self {
            img_height: 16,
            char_width: 8,
            filter_rows: 4,
            filter_cols: 32,
            seed_channels: 8,
            seed_spatial: 2,
            noise_chunk_dim: 4,
            n_gen_blocks: 3,
            per_block_upsample: vec![(2, 2), (2, 2), (2, 1)],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::ShapeConfig(msg));
        let dims = [
            ("img_height", self.img_height),
            ("char_width", self.char_width),
            ("filter_rows", self.filter_rows),
            ("filter_cols", self.filter_cols),
            ("seed_channels", self.seed_channels),
            ("seed_spatial", self.seed_spatial),
            ("noise_chunk_dim", self.noise_chunk_dim),
            ("n_gen_blocks", self.n_gen_blocks),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return fail(format!("{name} must be positive"));
        }
        if self.per_block_upsample.len() != self.n_gen_blocks {
            return fail(format!(
                "{} upsample factors for {} blocks",
                self.per_block_upsample.len(),
                self.n_gen_blocks
            ));
        }
        if self
            .per_block_upsample
            .iter()
            .any(|&(h, w)| h == 0 || w == 0)
        {
            return fail("upsample factors must be positive".into());
        }
        let (hf, wf) = self.upsample_product();
        if self.img_height != self.seed_spatial * hf {
            return fail(format!(
                "img_height {} != seed_spatial {} x height factors {hf}",
                self.img_height, self.seed_spatial
            ));
        }
        if self.char_width != self.seed_spatial * wf {
            return fail(format!(
                "char_width {} != seed_spatial {} x width factors {wf}",
                self.char_width, self.seed_spatial
            ));
        }
        if self.filter_cols != self.seed_channels * self.seed_spatial * self.seed_spatial {
            return fail(format!(
                "filter_cols {} != seed_channels {} x seed_spatial^2 {}",
                self.filter_cols,
                self.seed_channels,
                self.seed_spatial * self.seed_spatial
            ));
        }
        if self.filter_rows != self.noise_chunk_dim {
            return fail(format!(
                "filter_rows {} != noise_chunk_dim {}",
                self.filter_rows, self.noise_chunk_dim
            ));
        }
        if !self.seed_channels.is_multiple_of(1 << self.n_gen_blocks) {
            return fail(format!(
                "seed_channels {} cannot be halved {} times",
                self.seed_channels, self.n_gen_blocks
            ));
        }
        Ok(())
    }

    pub fn upsample_product(&self) -> (usize, usize) {
        self.per_block_upsample
            .iter()
            .fold((1, 1), |(h, w), &(fh, fw)| (h * fh, w * fw))
    }

    /// Output channels of each generator block; halves per block.
    pub fn gen_channels(&self) -> Vec<usize> {
        (1..=self.n_gen_blocks)
            .map(|k| self.seed_channels >> k)
            .collect()
    }

    /// Output channels of the four discriminator blocks: the generator
    /// pyramid read backwards, ending at `seed_channels`.
    pub fn disc_channels(&self) -> Vec<usize> {
        let mut ch: Vec<usize> = self.gen_channels().into_iter().rev().collect();
        ch.push(self.seed_channels);
        ch
    }

    pub fn image_width(&self, n_chars: usize) -> usize {
        self.char_width * n_chars
    }
}
