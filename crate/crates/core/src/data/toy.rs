//! Procedural handwriting-like corpus.
//!
//! Every character owns a fixed stroke template (a smooth spline through a
//! few control points). Each rendered word jitters stroke thickness, slant,
//! baseline, glyph width and ink darkness.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;

use super::manifest::{DatasetManifest, ManifestEntry, Split};
use crate::alphabet::Alphabet;
use crate::error::{Error, Result};
use crate::image::{from_byte, WordImage};
use crate::noise::{derive_seed, rng_from_seed, SeededRng};

const GLYPH_SEED: u64 = 0x6c79_7068;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ToyCorpusConfig {
    pub n_samples: usize,
    pub seed: u64,
    pub img_height: usize,
    pub char_width: usize,
}

type Point = (f64, f64);

/// Control points in the unit square, fixed per character.
fn glyph_template(ch: char) -> Vec<Point> {
    let mut rng = rng_from_seed(derive_seed(GLYPH_SEED, &[ch as u64]));
    let n = rng.random_range(4..=6);
    (0..n)
        .map(|i| {
            let base = i as f64 / (n - 1) as f64;
            let x = (base + rng.random_range(-0.25..0.25)).clamp(0.0, 1.0);
            (x, rng.random::<f64>())
        })
        .collect()
}

fn catmull_rom(p0: Point, p1: Point, p2: Point, p3: Point, t: f64) -> Point {
    let t2 = t * t;
    let t3 = t2 * t;
    let f = |a: f64, b: f64, c: f64, d: f64| {
        0.5 * (2.0 * b
            + (-a + c) * t
            + (2.0 * a - 5.0 * b + 4.0 * c - d) * t2
            + (-a + 3.0 * b - 3.0 * c + d) * t3)
    };
    (f(p0.0, p1.0, p2.0, p3.0), f(p0.1, p1.1, p2.1, p3.1))
}

fn stamp(ink: &mut [f64], h: usize, w: usize, (px, py): Point, radius: f64) {
    let reach = radius + 1.0;
    let y_lo = (py - reach).floor().max(0.0) as usize;
    let y_hi = ((py + reach).ceil().max(0.0) as usize).min(h.saturating_sub(1));
    let x_lo = (px - reach).floor().max(0.0) as usize;
    let x_hi = ((px + reach).ceil().max(0.0) as usize).min(w.saturating_sub(1));
    for y in y_lo..=y_hi {
        for x in x_lo..=x_hi {
            let d = ((x as f64 - px).powi(2) + (y as f64 - py).powi(2)).sqrt();
            let cov = (radius + 0.5 - d).clamp(0.0, 1.0);
            let cell = &mut ink[y * w + x];
            if cov > *cell {
                *cell = cov;
            }
        }
    }
}

/// Renders `text` at height `img_height`, about `char_width` pixels per
/// character. Returns 8-bit grey levels, row-major.
fn render(
    text: &str,
    img_height: usize,
    char_width: usize,
    rng: &mut SeededRng,
) -> (usize, Vec<u8>) {
    let radius = rng.random_range(0.6..1.3);
    let slant = rng.random_range(-0.35..0.35);
    let h = img_height as f64;
    let baseline = rng.random_range(-0.06..0.06) * h;
    let glyph_h = rng.random_range(0.5..0.65) * h;
    let darkness = rng.random_range(0.75..1.0);
    let bottom = (h + glyph_h) / 2.0 + baseline;

    let widths: Vec<f64> = text
        .chars()
        .map(|_| char_width as f64 * rng.random_range(0.85..1.15))
        .collect();
    let width = (widths.iter().sum::<f64>().round() as usize).max(1);
    let mut ink = vec![0.0; img_height * width];

    let mut x0 = 0.0;
    for (ch, cw) in text.chars().zip(&widths) {
        let pts: Vec<Point> = glyph_template(ch)
            .into_iter()
            .map(|(u, v)| {
                let u = (u + rng.random_range(-0.04..0.04)).clamp(0.0, 1.0);
                let v = (v + rng.random_range(-0.04..0.04)).clamp(0.0, 1.0);
                let y = bottom - glyph_h * (0.05 + 0.9 * v);
                let x = x0 + cw * (0.15 + 0.7 * u) + slant * (bottom - y);
                (x, y)
            })
            .collect();
        for i in 0..pts.len() - 1 {
            let p0 = pts[i.saturating_sub(1)];
            let p1 = pts[i];
            let p2 = pts[i + 1];
            let p3 = pts[(i + 2).min(pts.len() - 1)];
            let len = ((p2.0 - p1.0).powi(2) + (p2.1 - p1.1).powi(2)).sqrt();
            let steps = (len / 0.3).ceil() as usize + 1;
            for s in 0..=steps {
                let q = catmull_rom(p0, p1, p2, p3, s as f64 / steps as f64);
                stamp(&mut ink, img_height, width, q, radius);
            }
        }
        x0 += cw;
    }
    let bytes = ink
        .iter()
        .map(|&c| (255.0 * (1.0 - c * darkness)).round() as u8)
        .collect();
    (width, bytes)
}

/// Renders one word with its own per-sample jitter.
pub fn render_word(text: &str, img_height: usize, char_width: usize, seed: u64) -> WordImage {
    let mut rng = rng_from_seed(seed);
    let (width, bytes) = render(text, img_height, char_width, &mut rng);
    WordImage::new(
        img_height,
        width,
        bytes.into_iter().map(from_byte).collect(),
    )
    .with_chars(text.chars().count())
}

fn split_of(i: usize, n: usize) -> Split {
    let n_train = n * 8 / 10;
    let n_val = n / 10;
    if i < n_train {
        Split::Train
    } else if i < n_train + n_val {
        Split::Val
    } else {
        Split::Test
    }
}

/// Writes `images/NNNNN.png` plus `manifest.tsv` under `out_dir`. The first
/// 80% of rows are train, the next 10% val, the rest test.
pub fn make_toy_corpus(
    alphabet: &Alphabet,
    lexicon: &[String],
    config: &ToyCorpusConfig,
    out_dir: &Path,
) -> Result<DatasetManifest> {
    if lexicon.is_empty() {
        return Err(Error::Config("toy corpus needs a non-empty lexicon".into()));
    }
    for w in lexicon {
        alphabet.check(w)?;
    }
    let img_dir = out_dir.join("images");
    fs::create_dir_all(&img_dir).map_err(|e| Error::io(&img_dir, e))?;
    let mut word_rng = rng_from_seed(derive_seed(config.seed, &[0]));
    let mut entries = Vec::with_capacity(config.n_samples);
    for i in 0..config.n_samples {
        let word = &lexicon[word_rng.random_range(0..lexicon.len())];
        let img = render_word(
            word,
            config.img_height,
            config.char_width,
            derive_seed(config.seed, &[1, i as u64]),
        );
        let rel = PathBuf::from("images").join(format!("{i:05}.png"));
        img.save_png(out_dir.join(&rel))?;
        entries.push(ManifestEntry {
            image_path: rel,
            transcript: Some(word.clone()),
            split: split_of(i, config.n_samples),
        });
    }
    let manifest = DatasetManifest {
        entries,
        root: out_dir.to_path_buf(),
    };
    manifest.save(out_dir.join("manifest.tsv"))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_counts() {
        let count = |n, s| (0..n).filter(|&i| split_of(i, n) == s).count();
        assert_eq!(
            (
                count(100, Split::Train),
                count(100, Split::Val),
                count(100, Split::Test)
            ),
            (80, 10, 10)
        );
        assert_eq!(
            (
                count(2000, Split::Train),
                count(2000, Split::Val),
                count(2000, Split::Test)
            ),
            (1600, 200, 200)
        );
    }

    #[test]
    fn rendering_has_ink_and_expected_size() {
        let img = render_word("abcde", 32, 16, 4);
        assert_eq!(img.height, 32);
        assert!((img.width as i64 - 80).abs() <= 12);
        assert!(img.pixels.iter().any(|&v| v < -0.3));
        assert!(img.pixels.iter().filter(|&&v| v == 1.0).count() > img.pixels.len() / 2);
        assert_eq!(img, render_word("abcde", 32, 16, 4));
        assert_ne!(img, render_word("abcde", 32, 16, 5));
    }

    #[test]
    fn glyphs_differ_between_characters() {
        assert_ne!(glyph_template('a'), glyph_template('b'));
        assert_eq!(glyph_template('a'), glyph_template('a'));
    }
}
