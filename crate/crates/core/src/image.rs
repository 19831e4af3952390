//! Grayscale word images in the [-1, 1] range and their 8-bit PNG form.

use std::path::Path;

use image::{GrayImage, Luma};

use crate::error::{Error, Result};

/// Row-major single-channel image. Values are nominally in [-1, 1] with +1
/// as paper white.
#[derive(Debug, Clone, PartialEq)]
pub struct WordImage {
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<f64>,
    /// Characters rendered in the image, 0 when unknown (real data).
    pub n_chars: usize,
}

impl WordImage {
    pub fn new(height: usize, width: usize, pixels: Vec<f64>) -> Self {
        assert_eq!(pixels.len(), height * width, "pixel buffer size");
        Self {
            height,
            width,
            pixels,
            n_chars: 0,
        }
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        Self::new(height, width, vec![value; height * width])
    }

    pub fn with_chars(mut self, n_chars: usize) -> Self {
        self.n_chars = n_chars;
        self
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn at_mut(&mut self, y: usize, x: usize) -> &mut f64 {
        &mut self.pixels[y * self.width + x]
    }

    pub fn column(&self, x: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.height).map(move |y| self.at(y, x))
    }

    /// Horizontal concatenation of images with equal height.
    pub fn hconcat(parts: &[&WordImage]) -> WordImage {
        let height = parts.first().map_or(0, |p| p.height);
        assert!(parts.iter().all(|p| p.height == height));
        let width = parts.iter().map(|p| p.width).sum();
        let mut out = WordImage::filled(height, width, 0.0);
        let mut x0 = 0;
        for p in parts {
            for y in 0..height {
                out.pixels[y * width + x0..y * width + x0 + p.width]
                    .copy_from_slice(&p.pixels[y * p.width..(y + 1) * p.width]);
            }
            x0 += p.width;
        }
        out.n_chars = parts.iter().map(|p| p.n_chars).sum();
        out
    }

    pub fn flip_horizontal(&self) -> WordImage {
        let mut out = self.clone();
        for y in 0..self.height {
            out.pixels[y * self.width..(y + 1) * self.width].reverse();
        }
        out
    }

    pub fn to_gray8(&self) -> GrayImage {
        GrayImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            Luma([to_byte(self.at(y as usize, x as usize))])
        })
    }

    pub fn from_gray8(img: &GrayImage) -> WordImage {
        let (w, h) = img.dimensions();
        let pixels = img.pixels().map(|p| from_byte(p.0[0])).collect();
        WordImage::new(h as usize, w as usize, pixels)
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        self.to_gray8()
            .save_with_format(path, image::ImageFormat::Png)
            .map_err(|e| Error::UnreadableImage {
                path: path.to_path_buf(),
                reason: e.to_string(),
            })
    }

    pub fn load_png(path: impl AsRef<Path>) -> Result<WordImage> {
        let path = path.as_ref();
        let img = image::open(path).map_err(|e| Error::UnreadableImage {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        Ok(WordImage::from_gray8(&img.to_luma8()))
    }
}

/// [-1, 1] to [0, 255], clamped and rounded.
pub fn to_byte(v: f64) -> u8 {
    ((v.clamp(-1.0, 1.0) + 1.0) * 127.5).round() as u8
}

/// [0, 255] to [-1, 1].
pub fn from_byte(b: u8) -> f64 {
    b as f64 / 127.5 - 1.0
}

/// A real image paired with its transcript.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub image: WordImage,
    pub transcript: String,
    pub source_id: String,
}

/// A real image with no transcript. There is deliberately no field to carry
/// one: unlabeled data cannot leak labels into training.
#[derive(Debug, Clone, PartialEq)]
pub struct UnlabeledSample {
    pub image: WordImage,
    pub source_id: String,
}

impl LabeledSample {
    pub fn unlabeled(&self) -> UnlabeledSample {
        UnlabeledSample {
            image: self.image.clone(),
            source_id: self.source_id.clone(),
        }
    }
}

/// Lays images out on a grid: one row per entry of `rows`, cells left aligned,
/// separated by `gap` white pixels.
pub fn compose_sheet(rows: &[Vec<WordImage>], gap: usize) -> WordImage {
    let row_h = rows
        .iter()
        .flat_map(|r| r.iter().map(|i| i.height))
        .max()
        .unwrap_or(0);
    let width = rows
        .iter()
        .map(|r| r.iter().map(|i| i.width + gap).sum::<usize>() + gap)
        .max()
        .unwrap_or(0);
    let height = rows.len() * (row_h + gap) + gap;
    let mut sheet = WordImage::filled(height, width.max(1), 1.0);
    for (r, row) in rows.iter().enumerate() {
        let y0 = gap + r * (row_h + gap);
        let mut x0 = gap;
        for img in row {
            for y in 0..img.height {
                for x in 0..img.width {
                    *sheet.at_mut(y0 + y, x0 + x) = img.at(y, x);
                }
            }
            x0 += img.width + gap;
        }
    }
    sheet
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn byte_mapping_endpoints() {
        assert_eq!(to_byte(-1.0), 0);
        assert_eq!(to_byte(1.0), 255);
        assert_eq!(to_byte(7.0), 255);
        assert_eq!(from_byte(0), -1.0);
        assert_eq!(from_byte(255), 1.0);
        for b in 0..=255u8 {
            assert_eq!(to_byte(from_byte(b)), b);
        }
    }

    #[test]
    fn png_roundtrip_through_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.png");
        let img = WordImage::new(2, 3, vec![-1.0, 0.0, 1.0, 0.5, -0.5, 1.0]);
        img.save_png(&path).unwrap();
        let back = WordImage::load_png(&path).unwrap();
        assert_eq!((back.height, back.width), (2, 3));
        for (a, b) in img.pixels.iter().zip(&back.pixels) {
            assert!((a - b).abs() <= 1.0 / 127.5);
        }
    }

    #[test]
    fn hconcat_and_flip() {
        let a = WordImage::new(1, 2, vec![1.0, 2.0]);
        let b = WordImage::new(1, 1, vec![3.0]);
        let c = WordImage::hconcat(&[&a, &b]);
        assert_eq!(c.pixels, vec![1.0, 2.0, 3.0]);
        assert_eq!(c.flip_horizontal().pixels, vec![3.0, 2.0, 1.0]);
    }

    #[test]
    fn sheet_has_grid_geometry() {
        let cell = WordImage::filled(4, 8, -1.0);
        let sheet = compose_sheet(&[vec![cell.clone(), cell.clone()], vec![cell]], 2);
        assert_eq!(sheet.height, 2 * (4 + 2) + 2);
        assert_eq!(sheet.width, 2 * (8 + 2) + 2);
    }
}
