//! Dataset ingestion, preprocessing and the procedural toy corpus.

mod lexicon;
mod manifest;
mod toy;
mod transform;

pub use lexicon::{load_lexicon, random_lexicon};
pub use manifest::{DatasetManifest, ManifestEntry, Split};
pub use toy::{make_toy_corpus, render_word, ToyCorpusConfig};
pub use transform::{
    affine_augment, aspect_width, pad_to_width, resize_bilinear, AffineRanges, BACKGROUND,
};

use crate::alphabet::Alphabet;
use crate::error::Result;
use crate::image::{LabeledSample, UnlabeledSample, WordImage};

#[derive(Debug, Clone, PartialEq)]
pub enum Sample {
    Labeled(LabeledSample),
    Unlabeled(UnlabeledSample),
}

impl Sample {
    pub fn image(&self) -> &WordImage {
        match self {
            Sample::Labeled(s) => &s.image,
            Sample::Unlabeled(s) => &s.image,
        }
    }
}

/// Target geometry for ingested images.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Geometry {
    pub img_height: usize,
    pub char_width: usize,
}

/// Scales to `img_height`. With `width` set the horizontal size is forced,
/// otherwise the aspect ratio is kept.
pub fn conform(img: &WordImage, img_height: usize, width: Option<usize>) -> WordImage {
    let w = width.unwrap_or_else(|| aspect_width(img.height, img.width, img_height));
    resize_bilinear(img, img_height, w)
}

/// Loads every manifest entry. Labeled entries are validated against the
/// alphabet; with `supervised_rescale` their width becomes
/// `char_width * len(transcript)`.
pub fn ingest(
    manifest: &DatasetManifest,
    alphabet: &Alphabet,
    geometry: Geometry,
    supervised_rescale: bool,
) -> Result<Vec<Sample>> {
    let mut out = Vec::with_capacity(manifest.len());
    for entry in &manifest.entries {
        let path = manifest.resolve(entry);
        let raw = WordImage::load_png(&path)?;
        let source_id = entry.image_path.display().to_string();
        match &entry.transcript {
            Some(text) => {
                let n = alphabet.encode(text)?.len();
                let width = supervised_rescale.then_some(geometry.char_width * n);
                out.push(Sample::Labeled(LabeledSample {
                    image: conform(&raw, geometry.img_height, width).with_chars(n),
                    transcript: text.clone(),
                    source_id,
                }));
            }
            None => out.push(Sample::Unlabeled(UnlabeledSample {
                image: conform(&raw, geometry.img_height, None),
                source_id,
            })),
        }
    }
    Ok(out)
}

/// Labeled entries only; unlabeled rows are skipped.
pub fn ingest_labeled(
    manifest: &DatasetManifest,
    alphabet: &Alphabet,
    geometry: Geometry,
    supervised_rescale: bool,
) -> Result<Vec<LabeledSample>> {
    Ok(ingest(manifest, alphabet, geometry, supervised_rescale)?
        .into_iter()
        .filter_map(|s| match s {
            Sample::Labeled(l) => Some(l),
            Sample::Unlabeled(_) => None,
        })
        .collect())
}

/// Loads every entry as unlabeled pixels. The transcript column is never
/// looked at, whatever it contains.
pub fn ingest_unlabeled(
    manifest: &DatasetManifest,
    img_height: usize,
) -> Result<Vec<UnlabeledSample>> {
    manifest
        .entries
        .iter()
        .map(|entry| {
            let raw = WordImage::load_png(manifest.resolve(entry))?;
            Ok(UnlabeledSample {
                image: conform(&raw, img_height, None),
                source_id: entry.image_path.display().to_string(),
            })
        })
        .collect()
}
