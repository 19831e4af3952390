//! Three-player optimization: recognizer, critic and generator.
//!
//! Every step updates R on labeled real words, then D on real (labeled and
//! unlabeled) against generated words, then G through the combined image
//! gradient. Randomness for step `k` is derived from `(seed, k)` alone, so a
//! run resumed from a checkpoint continues exactly like an uninterrupted one.

mod ablation;
mod htr;
mod run;

pub use ablation::{run_alpha_ablation, AblationCell, AblationReport};
pub use htr::{
    evaluate, run_htr_experiment, synthesize_pool, write_htr_table, ArmResult, EvalReport, HtrData,
};
pub use run::{run_training, sheet_noise, sheet_words, style_sheet, write_metrics, METRICS_HEADER};

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::alphabet::Alphabet;
use crate::checkpoint::{
    discriminator_checkpoint, discriminator_meta, generator_checkpoint, generator_meta,
    recognizer_checkpoint, recognizer_meta, restore_discriminator, restore_generator,
    restore_recognizer, Checkpoint,
};
use crate::config::{Objective, TrainConfig};
use crate::ctc::required_frames;
use crate::data::{
    ingest_labeled, ingest_unlabeled, load_lexicon, pad_to_width, DatasetManifest, Geometry, Split,
};
use crate::discriminator::{hinge_d_grads, hinge_d_terms, hinge_g_loss, Discriminator};
use crate::error::{Error, Result};
use crate::generator::{GenTrace, Generator};
use crate::grad_balance::{combine_generator_gradient, moments};
use crate::image::{LabeledSample, UnlabeledSample, WordImage};
use crate::nn::Adam;
use crate::noise::{derive_seed, rng_from_seed, NoiseBundle};
use crate::recognizer::Recognizer;

// Stream tags for derived seeds.
pub(crate) const STREAM_INIT: u64 = 1;
pub(crate) const STREAM_BATCH: u64 = 2;
pub(crate) const STREAM_TEXT: u64 = 3;
pub(crate) const STREAM_NOISE: u64 = 4;
pub(crate) const STREAM_SHEET: u64 = 5;
pub(crate) const STREAM_HTR: u64 = 6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepLosses {
    pub step: u64,
    pub loss_d_real: f64,
    pub loss_d_fake: f64,
    pub loss_g: f64,
    pub loss_r: f64,
    /// `sigma(grad_D) / sigma(grad_R)` over the fake batch, when defined.
    pub sigma_ratio: Option<f64>,
}

impl StepLosses {
    /// Bitwise equality, so NaN-free histories can be compared exactly.
    pub fn bits(&self) -> [u64; 6] {
        [
            self.step,
            self.loss_d_real.to_bits(),
            self.loss_d_fake.to_bits(),
            self.loss_g.to_bits(),
            self.loss_r.to_bits(),
            self.sigma_ratio.map_or(u64::MAX, f64::to_bits),
        ]
    }
}

#[derive(Debug, Clone)]
pub struct TrainState {
    pub step: u64,
    pub alphabet: Alphabet,
    pub generator: Generator,
    pub discriminator: Discriminator,
    pub recognizer: Recognizer,
    pub opt_g: Adam,
    pub opt_d: Adam,
    pub opt_r: Adam,
    pub history: Vec<StepLosses>,
}

impl TrainState {
    /// Freshly initialized networks and optimizers.
    pub fn new(config: &TrainConfig) -> Result<Self> {
        let alphabet = config.alphabet()?;
        let shape = config.model_shape();
        let init = |k| derive_seed(config.seed, &[STREAM_INIT, k]);
        let generator = Generator::new(shape.clone(), alphabet.clone(), config.norm_mode, init(0))?;
        let discriminator = Discriminator::new(&shape, init(1))?;
        let recognizer = Recognizer::new(
            shape.img_height,
            config.recognizer.clone(),
            &alphabet,
            init(2),
        )?;
        Ok(Self {
            step: 0,
            opt_g: Adam::new(config.optim.g, generator.params()),
            opt_d: Adam::new(config.optim.d, discriminator.params()),
            opt_r: Adam::new(config.optim.r, recognizer.params()),
            alphabet,
            generator,
            discriminator,
            recognizer,
            history: Vec::new(),
        })
    }

    /// Writes `G`, `D`, `R` and `history.json` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        generator_checkpoint(&self.generator, Some(&self.opt_g), self.step).save(dir.join("G"))?;
        discriminator_checkpoint(
            &self.discriminator,
            &self.alphabet,
            Some(&self.opt_d),
            self.step,
        )
        .save(dir.join("D"))?;
        recognizer_checkpoint(
            &self.recognizer,
            &self.alphabet,
            Some(&self.opt_r),
            self.step,
        )
        .save(dir.join("R"))?;
        let hist = serde_json::to_string(&self.history).expect("history serializes");
        let p = dir.join("history.json");
        fs::write(&p, hist).map_err(|e| Error::io(&p, e))
    }

    /// Restores a state written by [`TrainState::save`]. The stored alphabet
    /// and architectures must match `config`; learning rates come from
    /// `config`.
    pub fn load(dir: &Path, config: &TrainConfig) -> Result<Self> {
        let fresh = Self::new(config)?;
        let g = Checkpoint::load(dir.join("G"))?;
        let d = Checkpoint::load(dir.join("D"))?;
        let r = Checkpoint::load(dir.join("R"))?;
        g.ensure_matches(&fresh.alphabet, &generator_meta(&fresh.generator))?;
        d.ensure_matches(&fresh.alphabet, &discriminator_meta(&fresh.discriminator))?;
        r.ensure_matches(&fresh.alphabet, &recognizer_meta(&fresh.recognizer))?;
        if g.step != d.step || g.step != r.step {
            return Err(Error::Checkpoint(format!(
                "{}: networks saved at different steps",
                dir.display()
            )));
        }
        let (generator, opt_g) = restore_generator(&g)?;
        let (discriminator, opt_d) = restore_discriminator(&d)?;
        let (recognizer, opt_r) = restore_recognizer(&r)?;
        let with_lr = |opt: Option<Adam>, cfg| {
            opt.map(|mut o| {
                o.config = cfg;
                o
            })
            .ok_or_else(|| Error::Checkpoint(format!("{}: optimizer state missing", dir.display())))
        };
        let p = dir.join("history.json");
        let history: Vec<StepLosses> = match fs::read_to_string(&p) {
            Ok(text) => serde_json::from_str(&text)
                .map_err(|e| Error::Checkpoint(format!("{}: {e}", p.display())))?,
            Err(_) => Vec::new(),
        };
        Ok(Self {
            step: g.step,
            alphabet: fresh.alphabet,
            generator,
            discriminator,
            recognizer,
            opt_g: with_lr(opt_g, config.optim.g)?,
            opt_d: with_lr(opt_d, config.optim.d)?,
            opt_r: with_lr(opt_r, config.optim.r)?,
            history,
        })
    }
}

/// Training data: labeled training split, unlabeled pool, fake-text lexicon.
#[derive(Debug, Clone)]
pub struct Datasets {
    pub labeled: Vec<LabeledSample>,
    pub unlabeled: Vec<UnlabeledSample>,
    pub lexicon: Vec<String>,
}

impl Datasets {
    /// Loads the manifests named in `config`. Images narrower than the
    /// critic's minimum width are padded with background.
    pub fn load(config: &TrainConfig) -> Result<Self> {
        let alphabet = config.alphabet()?;
        let shape = config.model_shape();
        let geometry = Geometry {
            img_height: shape.img_height,
            char_width: shape.char_width,
        };
        let manifest = DatasetManifest::load(&config.manifest)?;
        manifest.check_paths()?;
        let labeled = ingest_labeled(
            &manifest.split(Split::Train),
            &alphabet,
            geometry,
            config.supervised_rescale,
        )?;
        if labeled.is_empty() {
            return Err(Error::Manifest(format!(
                "{} has no labeled training rows",
                config.manifest.display()
            )));
        }
        let unlabeled = match &config.unlabeled_manifest {
            Some(path) => {
                let m = DatasetManifest::load(path)?;
                m.check_paths()?;
                ingest_unlabeled(&m, shape.img_height)?
            }
            None => Vec::new(),
        };
        let lexicon = match &config.lexicon_path {
            Some(p) => load_lexicon(p, &alphabet, config.max_word_len)?,
            None => {
                let mut seen = std::collections::BTreeSet::new();
                labeled
                    .iter()
                    .map(|s| s.transcript.clone())
                    .filter(|t| t.chars().count() <= config.max_word_len && seen.insert(t.clone()))
                    .collect()
            }
        };
        Self::new(labeled, unlabeled, lexicon, config)
    }

    /// Assembles datasets from memory, applying the same padding and
    /// lexicon filtering as [`Datasets::load`].
    pub fn new(
        labeled: Vec<LabeledSample>,
        unlabeled: Vec<UnlabeledSample>,
        lexicon: Vec<String>,
        config: &TrainConfig,
    ) -> Result<Self> {
        let shape = config.model_shape();
        let min_w = crate::discriminator::STRIDE;
        let labeled = labeled
            .into_iter()
            .map(|mut s| {
                s.image = pad_to_width(&s.image, min_w);
                s
            })
            .collect();
        let unlabeled = unlabeled
            .into_iter()
            .map(|mut s| {
                s.image = pad_to_width(&s.image, min_w);
                s
            })
            .collect();
        // generated words must be wide enough for the critic
        let lexicon: Vec<String> = lexicon
            .into_iter()
            .filter(|w| shape.image_width(w.chars().count()) >= min_w)
            .collect();
        if lexicon.is_empty() {
            return Err(Error::Config(
                "no usable fake-text words in the lexicon".into(),
            ));
        }
        Ok(Self {
            labeled,
            unlabeled,
            lexicon,
        })
    }
}

/// Uniform word sampler whose batches share one word length.
#[derive(Debug, Clone)]
pub struct TextSampler {
    words: Vec<String>,
    by_len: BTreeMap<usize, Vec<usize>>,
}

impl TextSampler {
    pub fn new(words: &[String]) -> Self {
        let mut by_len: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, w) in words.iter().enumerate() {
            by_len.entry(w.chars().count()).or_default().push(i);
        }
        Self {
            words: words.to_vec(),
            by_len,
        }
    }

    /// The first word is uniform over the lexicon; the rest are uniform over
    /// words of the same length.
    pub fn sample<R: Rng>(&self, rng: &mut R, n: usize) -> Vec<String> {
        let first = rng.random_range(0..self.words.len());
        let group = &self.by_len[&self.words[first].chars().count()];
        let mut out = vec![self.words[first].clone()];
        for _ in 1..n {
            out.push(self.words[group[rng.random_range(0..group.len())]].clone());
        }
        out
    }
}

/// Indices for one batch: without replacement when the pool is big enough.
pub(crate) fn batch_indices<R: Rng>(rng: &mut R, pool: usize, n: usize) -> Vec<usize> {
    if pool >= n {
        sample(rng, pool, n).into_vec()
    } else {
        (0..n).map(|_| rng.random_range(0..pool)).collect()
    }
}

/// Inputs of one optimization step.
#[derive(Debug, Clone)]
pub struct StepBatch {
    pub labeled: Vec<usize>,
    pub unlabeled: Vec<usize>,
    pub fake_texts: Vec<String>,
    pub noise: Vec<NoiseBundle>,
}

/// Draws the batch for step `step` (zero based) from streams derived from
/// `(seed, step)`.
pub fn draw_batch(
    step: u64,
    config: &TrainConfig,
    data: &Datasets,
    sampler: &TextSampler,
) -> StepBatch {
    let b = config.batch_size;
    let mut rng = rng_from_seed(derive_seed(config.seed, &[STREAM_BATCH, step]));
    let labeled = batch_indices(&mut rng, data.labeled.len(), b);
    let unlabeled = if data.unlabeled.is_empty() {
        Vec::new()
    } else {
        batch_indices(&mut rng, data.unlabeled.len(), b)
    };
    let mut trng = rng_from_seed(derive_seed(config.seed, &[STREAM_TEXT, step]));
    let fake_texts = sampler.sample(&mut trng, b);
    let mut nrng = rng_from_seed(derive_seed(config.seed, &[STREAM_NOISE, step]));
    let dim = config.model_shape().noise_chunk_dim;
    let noise = (0..b).map(|_| NoiseBundle::draw(&mut nrng, dim)).collect();
    StepBatch {
        labeled,
        unlabeled,
        fake_texts,
        noise,
    }
}

/// One CTC step of the recognizer on labeled real words. Returns the mean loss.
pub fn update_recognizer(
    recognizer: &mut Recognizer,
    opt: &mut Adam,
    alphabet: &Alphabet,
    labeled: &[&LabeledSample],
) -> Result<f64> {
    let mut grads = recognizer.params().zero_grads();
    let mut total = 0.0;
    let mut used = 0usize;
    for s in labeled {
        let target = alphabet.encode(&s.transcript)?;
        if required_frames(&target) > recognizer.frames_for_width(s.image.width) {
            log::warn!(
                "{}: transcript does not fit the image width, skipped",
                s.source_id
            );
            continue;
        }
        let (loss, _) = recognizer.loss_and_image_gradient(&s.image, &target, Some(&mut grads))?;
        total += loss;
        used += 1;
    }
    if used == 0 {
        return Err(Error::EmptyInput);
    }
    grads.scale(1.0 / used as f64);
    opt.step(recognizer.params_mut(), &grads);
    Ok(total / used as f64)
}

/// One hinge step of the critic. Returns the real and fake loss terms.
pub fn update_discriminator(
    discriminator: &mut Discriminator,
    opt: &mut Adam,
    real: &[&WordImage],
    fake: &[&WordImage],
) -> Result<(f64, f64)> {
    let forward = |imgs: &[&WordImage]| -> Result<Vec<_>> {
        imgs.iter().map(|i| discriminator.forward(i)).collect()
    };
    let real_out = forward(real)?;
    let fake_out = forward(fake)?;
    let real_scores: Vec<f64> = real_out.iter().map(|(s, _)| s.score).collect();
    let fake_scores: Vec<f64> = fake_out.iter().map(|(s, _)| s.score).collect();
    let terms = hinge_d_terms(&real_scores, &fake_scores)?;
    let (gr, gf) = hinge_d_grads(&real_scores, &fake_scores);
    let mut grads = discriminator.params().zero_grads();
    for ((_, trace), g) in real_out.iter().zip(&gr).chain(fake_out.iter().zip(&gf)) {
        if *g != 0.0 {
            discriminator.backward(trace, *g, Some(&mut grads));
        }
    }
    opt.step(discriminator.params_mut(), &grads);
    Ok(terms)
}

/// Per-sample image gradients of the generator's two objectives.
pub struct FakeGradients {
    pub scores: Vec<f64>,
    /// `d(-mean D(fake)) / d image`, flattened over the batch.
    pub grad_d: Vec<f64>,
    /// `d mean ctc(fake) / d image`, flattened; zero for skipped samples.
    pub grad_r: Vec<f64>,
}

/// Image gradients of the critic and recognizer terms on generated words.
/// Neither network is modified.
pub fn fake_gradients(
    discriminator: &Discriminator,
    recognizer: &Recognizer,
    alphabet: &Alphabet,
    texts: &[String],
    images: &[&WordImage],
) -> Result<FakeGradients> {
    let b = images.len() as f64;
    let mut scores = Vec::with_capacity(images.len());
    let mut grad_d = Vec::new();
    let mut grad_r = Vec::new();
    for (text, img) in texts.iter().zip(images) {
        let (s, trace) = discriminator.forward(img)?;
        scores.push(s.score);
        grad_d.extend(discriminator.backward(&trace, -1.0 / b, None));
        let target = alphabet.encode(text)?;
        if required_frames(&target) > recognizer.frames_for_width(img.width) {
            log::warn!("fake word {text:?} does not fit its width; recognizer term skipped");
            grad_r.extend(std::iter::repeat_n(0.0, img.pixels.len()));
            continue;
        }
        let (_, g) = recognizer.loss_and_image_gradient(img, &target, None)?;
        grad_r.extend(g.into_iter().map(|v| v / b));
    }
    Ok(FakeGradients {
        scores,
        grad_d,
        grad_r,
    })
}

/// One step of the generator through the combined image gradient. Returns
/// the generator hinge loss and the gradient spread ratio.
#[allow(clippy::too_many_arguments)]
pub fn update_generator(
    generator: &mut Generator,
    opt: &mut Adam,
    discriminator: &Discriminator,
    recognizer: &Recognizer,
    texts: &[String],
    fakes: &[(WordImage, GenTrace)],
    config: &TrainConfig,
) -> Result<(f64, Option<f64>)> {
    let images: Vec<&WordImage> = fakes.iter().map(|(i, _)| i).collect();
    let fg = fake_gradients(
        discriminator,
        recognizer,
        generator.alphabet(),
        texts,
        &images,
    )?;
    let (_, sd_d) = moments(&fg.grad_d);
    let (_, sd_r) = moments(&fg.grad_r);
    let ratio = (sd_r > 0.0).then(|| sd_d / sd_r);
    let combined = match config.objective {
        Objective::DOnly => fg.grad_d.clone(),
        Objective::ROnly => fg.grad_r.clone(),
        Objective::Joint => match combine_generator_gradient(&fg.grad_d, &fg.grad_r, &config.gb) {
            Ok(g) => g,
            Err(Error::DegenerateGradient) => {
                log::warn!("recognizer gradient is constant; using the critic term alone");
                fg.grad_d.clone()
            }
            Err(e) => return Err(e),
        },
    };
    let mut grads = generator.params().zero_grads();
    let mut offset = 0;
    for (img, trace) in fakes {
        let n = img.pixels.len();
        generator.backward(trace, &combined[offset..offset + n], &mut grads);
        offset += n;
    }
    opt.step(generator.params_mut(), &grads);
    Ok((hinge_g_loss(&fg.scores)?, ratio))
}

fn ensure_finite(step: u64, what: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite {
            step,
            what: what.to_string(),
        })
    }
}

/// One full step: R, then D, then G. The unlabeled batch may be empty.
pub fn train_step(
    state: &mut TrainState,
    labeled: &[&LabeledSample],
    unlabeled: &[&UnlabeledSample],
    fake_texts: &[String],
    noise: &[NoiseBundle],
    config: &TrainConfig,
) -> Result<StepLosses> {
    if labeled.is_empty() || fake_texts.is_empty() {
        return Err(Error::EmptyInput);
    }
    if fake_texts.len() != noise.len() {
        return Err(Error::LengthMismatch {
            left: fake_texts.len(),
            right: noise.len(),
        });
    }
    let step = state.step + 1;
    let loss_r = update_recognizer(
        &mut state.recognizer,
        &mut state.opt_r,
        &state.alphabet,
        labeled,
    )?;

    let fakes = fake_texts
        .iter()
        .zip(noise)
        .map(|(t, z)| state.generator.forward(t, z))
        .collect::<Result<Vec<_>>>()?;
    let real: Vec<&WordImage> = labeled
        .iter()
        .map(|s| &s.image)
        .chain(unlabeled.iter().map(|s| &s.image))
        .collect();
    let fake_imgs: Vec<&WordImage> = fakes.iter().map(|(i, _)| i).collect();
    let (loss_d_real, loss_d_fake) = update_discriminator(
        &mut state.discriminator,
        &mut state.opt_d,
        &real,
        &fake_imgs,
    )?;

    let (loss_g, sigma_ratio) = update_generator(
        &mut state.generator,
        &mut state.opt_g,
        &state.discriminator,
        &state.recognizer,
        fake_texts,
        &fakes,
        config,
    )?;

    for (what, v) in [
        ("loss_r", loss_r),
        ("loss_d_real", loss_d_real),
        ("loss_d_fake", loss_d_fake),
        ("loss_g", loss_g),
    ] {
        ensure_finite(step, what, v)?;
    }
    let losses = StepLosses {
        step,
        loss_d_real,
        loss_d_fake,
        loss_g,
        loss_r,
        sigma_ratio,
    };
    state.step = step;
    state.history.push(losses);
    Ok(losses)
}

/// Draws and runs the next step of `state`.
pub fn advance(
    state: &mut TrainState,
    config: &TrainConfig,
    data: &Datasets,
    sampler: &TextSampler,
) -> Result<StepLosses> {
    let batch = draw_batch(state.step, config, data, sampler);
    let labeled: Vec<&LabeledSample> = batch.labeled.iter().map(|&i| &data.labeled[i]).collect();
    let unlabeled: Vec<&UnlabeledSample> = batch
        .unlabeled
        .iter()
        .map(|&i| &data.unlabeled[i])
        .collect();
    train_step(
        state,
        &labeled,
        &unlabeled,
        &batch.fake_texts,
        &batch.noise,
        config,
    )
}
