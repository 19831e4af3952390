//! Geometric resampling of word images.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::image::WordImage;
use crate::noise::rng_from_seed;

/// Background value after normalization.
pub const BACKGROUND: f64 = 1.0;

/// Bilinear resize with pixel-centre alignment.
pub fn resize_bilinear(img: &WordImage, height: usize, width: usize) -> WordImage {
    assert!(height > 0 && width > 0, "empty target size");
    if img.height == height && img.width == width {
        return img.clone();
    }
    let sy = img.height as f64 / height as f64;
    let sx = img.width as f64 / width as f64;
    let mut out = Vec::with_capacity(height * width);
    for y in 0..height {
        let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (img.height - 1) as f64);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(img.height - 1);
        let ty = fy - y0 as f64;
        for x in 0..width {
            let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (img.width - 1) as f64);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(img.width - 1);
            let tx = fx - x0 as f64;
            let top = img.at(y0, x0) * (1.0 - tx) + img.at(y0, x1) * tx;
            let bot = img.at(y1, x0) * (1.0 - tx) + img.at(y1, x1) * tx;
            out.push(top * (1.0 - ty) + bot * ty);
        }
    }
    WordImage::new(height, width, out).with_chars(img.n_chars)
}

/// Extends narrow images on the right with background.
pub fn pad_to_width(img: &WordImage, min_width: usize) -> WordImage {
    if img.width >= min_width {
        return img.clone();
    }
    let mut out = WordImage::filled(img.height, min_width, BACKGROUND).with_chars(img.n_chars);
    for y in 0..img.height {
        for x in 0..img.width {
            *out.at_mut(y, x) = img.at(y, x);
        }
    }
    out
}

/// Width after scaling to `height` with the aspect ratio kept.
pub fn aspect_width(src_h: usize, src_w: usize, height: usize) -> usize {
    ((src_w as f64 * height as f64 / src_h as f64).round() as usize).max(1)
}

/// Bounds for one random affine map. Angles in degrees, translation in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AffineRanges {
    pub rotation: f64,
    pub shear: f64,
    pub scale: (f64, f64),
    pub translate: (f64, f64),
}

impl AffineRanges {
    pub fn identity() -> Self {
        Self {
            rotation: 0.0,
            shear: 0.0,
            scale: (1.0, 1.0),
            translate: (0.0, 0.0),
        }
    }

    /// Mild distortions suitable for word crops.
    pub fn mild() -> Self {
        Self {
            rotation: 3.0,
            shear: 10.0,
            scale: (0.9, 1.1),
            translate: (2.0, 1.0),
        }
    }
}

impl Default for AffineRanges {
    fn default() -> Self {
        Self::mild()
    }
}

fn uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// Applies one random affine map about the image centre. Uncovered pixels
/// take the background value.
pub fn affine_augment(img: &WordImage, seed: u64, ranges: &AffineRanges) -> WordImage {
    let mut rng = rng_from_seed(seed);
    let rot = uniform(&mut rng, -ranges.rotation, ranges.rotation).to_radians();
    let shear = uniform(&mut rng, -ranges.shear, ranges.shear).to_radians();
    let scale = uniform(&mut rng, ranges.scale.0, ranges.scale.1);
    let tx = uniform(&mut rng, -ranges.translate.0, ranges.translate.0);
    let ty = uniform(&mut rng, -ranges.translate.1, ranges.translate.1);

    // forward map A = R * Sh * S
    let (s, c) = rot.sin_cos();
    let k = shear.tan();
    let a = [
        [c * scale, (c * k - s) * scale],
        [s * scale, (s * k + c) * scale],
    ];
    if a == [[1.0, 0.0], [0.0, 1.0]] && tx == 0.0 && ty == 0.0 {
        return img.clone();
    }
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    let inv = [
        [a[1][1] / det, -a[0][1] / det],
        [-a[1][0] / det, a[0][0] / det],
    ];
    let cx = (img.width as f64 - 1.0) / 2.0;
    let cy = (img.height as f64 - 1.0) / 2.0;
    let mut out = Vec::with_capacity(img.pixels.len());
    for y in 0..img.height {
        for x in 0..img.width {
            let dx = x as f64 - cx - tx;
            let dy = y as f64 - cy - ty;
            let sx = inv[0][0] * dx + inv[0][1] * dy + cx;
            let sy = inv[1][0] * dx + inv[1][1] * dy + cy;
            out.push(sample(img, sx, sy));
        }
    }
    WordImage::new(img.height, img.width, out).with_chars(img.n_chars)
}

fn sample(img: &WordImage, x: f64, y: f64) -> f64 {
    let x0 = x.floor();
    let y0 = y.floor();
    let tx = x - x0;
    let ty = y - y0;
    let px = |xi: f64, yi: f64| {
        if xi < 0.0 || yi < 0.0 || xi >= img.width as f64 || yi >= img.height as f64 {
            BACKGROUND
        } else {
            img.at(yi as usize, xi as usize)
        }
    };
    let top = px(x0, y0) * (1.0 - tx) + px(x0 + 1.0, y0) * tx;
    let bot = px(x0, y0 + 1.0) * (1.0 - tx) + px(x0 + 1.0, y0 + 1.0) * tx;
    top * (1.0 - ty) + bot * ty
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(h: usize, w: usize) -> WordImage {
        WordImage::new(
            h,
            w,
            (0..h * w).map(|i| (i % 7) as f64 / 3.5 - 1.0).collect(),
        )
    }

    #[test]
    fn halving_keeps_aspect() {
        let img = ramp(64, 128);
        let w = aspect_width(64, 128, 32);
        let out = resize_bilinear(&img, 32, w);
        assert_eq!((out.height, out.width), (32, 64));
    }

    #[test]
    fn resize_same_size_is_identity() {
        let img = ramp(32, 40);
        assert_eq!(resize_bilinear(&img, 32, 40), img);
    }

    #[test]
    fn constant_image_stays_constant() {
        let img = WordImage::filled(20, 30, -0.25);
        let out = resize_bilinear(&img, 32, 47);
        assert!(out.pixels.iter().all(|&v| (v + 0.25).abs() < 1e-15));
    }

    #[test]
    fn identity_ranges_are_exact() {
        let img = ramp(32, 48);
        assert_eq!(affine_augment(&img, 5, &AffineRanges::identity()), img);
    }

    #[test]
    fn shear_keeps_shape_and_changes_content() {
        let img = ramp(32, 48);
        let r = AffineRanges {
            shear: 5.0,
            ..AffineRanges::identity()
        };
        let a = affine_augment(&img, 9, &r);
        assert_eq!((a.height, a.width), (32, 48));
        assert_ne!(a, img);
        assert_eq!(a, affine_augment(&img, 9, &r));
    }

    #[test]
    fn translation_fills_with_background() {
        let img = WordImage::filled(8, 8, -1.0);
        let r = AffineRanges {
            translate: (20.0, 0.0),
            ..AffineRanges::identity()
        };
        let out = affine_augment(&img, 1, &r);
        assert!(out.pixels.iter().any(|&v| v > -1.0));
        assert!(out.pixels.iter().all(|&v| (-1.0..=BACKGROUND).contains(&v)));
    }
}
