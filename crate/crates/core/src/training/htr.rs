//! Recognizer training arms for measuring the value of generated data.

use std::fs;
use std::path::Path;

use rand::Rng;

use super::{batch_indices, update_recognizer, STREAM_HTR};
use crate::alphabet::Alphabet;
use crate::config::{Arm, HtrConfig, TrainConfig};
use crate::ctc::greedy_decode;
use crate::data::{affine_augment, ingest_labeled, AffineRanges, DatasetManifest, Geometry, Split};
use crate::error::{Error, Result};
use crate::generator::Generator;
use crate::image::LabeledSample;
use crate::metrics::{ned, wer};
use crate::nn::Adam;
use crate::noise::{derive_seed, rng_from_seed, NoiseBundle};
use crate::recognizer::Recognizer;

/// Labeled train, validation and test words.
#[derive(Debug, Clone)]
pub struct HtrData {
    pub train: Vec<LabeledSample>,
    pub val: Vec<LabeledSample>,
    pub test: Vec<LabeledSample>,
}

impl HtrData {
    pub fn load(config: &TrainConfig) -> Result<Self> {
        let alphabet = config.alphabet()?;
        let shape = config.model_shape();
        let geometry = Geometry {
            img_height: shape.img_height,
            char_width: shape.char_width,
        };
        let manifest = DatasetManifest::load(&config.manifest)?;
        manifest.check_paths()?;
        // evaluation images keep their aspect ratio: their transcripts are unknown to the model
        let part = |s, rescale| ingest_labeled(&manifest.split(s), &alphabet, geometry, rescale);
        let data = Self {
            train: part(Split::Train, config.supervised_rescale)?,
            val: part(Split::Val, false)?,
            test: part(Split::Test, false)?,
        };
        if data.train.is_empty() || data.val.is_empty() || data.test.is_empty() {
            return Err(Error::Manifest(format!(
                "{} needs labeled train, val and test rows",
                config.manifest.display()
            )));
        }
        Ok(data)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub wer: f64,
    pub ned: f64,
    pub predictions: Vec<String>,
}

/// Greedy transcription of every sample, scored against its transcript.
pub fn evaluate(
    recognizer: &Recognizer,
    alphabet: &Alphabet,
    samples: &[LabeledSample],
) -> Result<EvalReport> {
    let predictions = samples
        .iter()
        .map(|s| Ok(greedy_decode(&recognizer.recognize(&s.image)?, alphabet)))
        .collect::<Result<Vec<_>>>()?;
    let truths: Vec<&str> = samples.iter().map(|s| s.transcript.as_str()).collect();
    Ok(EvalReport {
        wer: wer(&predictions, &truths)?,
        ned: ned(&predictions, &truths)?,
        predictions,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArmResult {
    pub arm: Arm,
    pub wer: f64,
    pub ned: f64,
    pub val_wer: f64,
    pub val_ned: f64,
    /// Step of the selected model within the arm's last training phase.
    pub best_step: u64,
    pub pool_size: usize,
}

struct Trained {
    recognizer: Recognizer,
    val: EvalReport,
    best_step: u64,
}

struct ArmRun<'a> {
    alphabet: &'a Alphabet,
    htr: &'a HtrConfig,
    val: &'a [LabeledSample],
    seed: u64,
}

impl ArmRun<'_> {
    /// Trains from `init` on `pool`, keeping the parameters with the best
    /// validation (WER, then NED). The starting point is a candidate too.
    fn train(
        &self,
        init: &Recognizer,
        pool: &[LabeledSample],
        augment: Option<&AffineRanges>,
        steps: u64,
        phase: u64,
    ) -> Result<Trained> {
        let mut r = init.clone();
        let mut opt = Adam::new(self.htr.optim, r.params());
        let mut best = Trained {
            val: evaluate(&r, self.alphabet, self.val)?,
            recognizer: r.clone(),
            best_step: 0,
        };
        let seed = |tag: u64, k: u64| derive_seed(self.seed, &[STREAM_HTR, phase, tag, k]);
        for k in 0..steps {
            let mut rng = rng_from_seed(seed(1, k));
            let idx = batch_indices(&mut rng, pool.len(), self.htr.batch_size);
            match augment {
                None => {
                    let batch: Vec<&LabeledSample> = idx.iter().map(|&i| &pool[i]).collect();
                    update_recognizer(&mut r, &mut opt, self.alphabet, &batch)?;
                }
                Some(ranges) => {
                    let mut coin = rng_from_seed(seed(2, k));
                    let owned: Vec<LabeledSample> = idx
                        .iter()
                        .enumerate()
                        .map(|(j, &i)| {
                            let mut s = pool[i].clone();
                            if coin.random::<f64>() < self.htr.affine_prob {
                                s.image = affine_augment(
                                    &s.image,
                                    derive_seed(seed(3, k), &[j as u64]),
                                    ranges,
                                );
                            }
                            s
                        })
                        .collect();
                    let batch: Vec<&LabeledSample> = owned.iter().collect();
                    update_recognizer(&mut r, &mut opt, self.alphabet, &batch)?;
                }
            }
            let done = k + 1;
            if done % self.htr.eval_every == 0 || done == steps {
                let val = evaluate(&r, self.alphabet, self.val)?;
                if (val.wer, val.ned) < (best.val.wer, best.val.ned) {
                    best = Trained {
                        recognizer: r.clone(),
                        val,
                        best_step: done,
                    };
                }
            }
        }
        Ok(best)
    }
}

/// `count` generated words, texts uniform over `lexicon`.
pub fn synthesize_pool(
    generator: &Generator,
    lexicon: &[String],
    count: usize,
    seed: u64,
) -> Result<Vec<LabeledSample>> {
    if count > 0 && lexicon.is_empty() {
        return Err(Error::Config(
            "synthetic data needs a non-empty lexicon".into(),
        ));
    }
    let mut trng = rng_from_seed(derive_seed(seed, &[STREAM_HTR, 90]));
    let mut nrng = rng_from_seed(derive_seed(seed, &[STREAM_HTR, 91]));
    let dim = generator.shape().noise_chunk_dim;
    (0..count)
        .map(|i| {
            let text = &lexicon[trng.random_range(0..lexicon.len())];
            let z = NoiseBundle::draw(&mut nrng, dim);
            Ok(LabeledSample {
                image: generator.generate(text, &z)?,
                transcript: text.clone(),
                source_id: format!("synthetic/{i}"),
            })
        })
        .collect()
}

/// Trains one recognizer per arm and reports test WER/NED of the model
/// selected on validation. Every arm starts from the same initialization
/// and batch streams, so arms differ only in their training pools.
pub fn run_htr_experiment(
    arms: &[Arm],
    config: &TrainConfig,
    data: &HtrData,
    lexicon: &[String],
    generator: Option<&Generator>,
) -> Result<Vec<ArmResult>> {
    let alphabet = config.alphabet()?;
    let htr = &config.htr;
    if arms.iter().any(|a| a.needs_generator()) {
        let g = generator.ok_or_else(|| {
            Error::MissingCheckpoint("synthetic arms need htr.generator_checkpoint".into())
        })?;
        if g.alphabet() != &alphabet {
            return Err(Error::Checkpoint(
                "generator alphabet differs from the configured alphabet".into(),
            ));
        }
    }
    let run = ArmRun {
        alphabet: &alphabet,
        htr,
        val: &data.val,
        seed: config.seed,
    };
    let init = Recognizer::new(
        config.model_shape().img_height,
        htr.recognizer.clone(),
        &alphabet,
        derive_seed(config.seed, &[STREAM_HTR, 0]),
    )?;
    let mixed_pool = || -> Result<Vec<LabeledSample>> {
        let g = generator.expect("checked above");
        let mut pool = data.train.clone();
        pool.extend(synthesize_pool(
            g,
            lexicon,
            htr.synthetic_count,
            config.seed,
        )?);
        Ok(pool)
    };
    let mut mixed: Option<(Trained, usize)> = None;
    let mut results = Vec::with_capacity(arms.len());
    for &arm in arms {
        log::info!("training recognizer arm {arm}");
        let (trained, pool_size) = match arm {
            Arm::Real => (
                run.train(&init, &data.train, None, htr.steps, 1)?,
                data.train.len(),
            ),
            Arm::RealAffine => (
                run.train(&init, &data.train, Some(&htr.affine), htr.steps, 1)?,
                data.train.len(),
            ),
            Arm::RealSynthetic | Arm::RealSyntheticFinetune => {
                if mixed.is_none() {
                    let pool = mixed_pool()?;
                    mixed = Some((run.train(&init, &pool, None, htr.steps, 1)?, pool.len()));
                }
                let (base, size) = mixed.as_ref().expect("just set");
                if arm == Arm::RealSynthetic {
                    (
                        Trained {
                            recognizer: base.recognizer.clone(),
                            val: base.val.clone(),
                            best_step: base.best_step,
                        },
                        *size,
                    )
                } else {
                    (
                        run.train(&base.recognizer, &data.train, None, htr.finetune_steps, 2)?,
                        data.train.len(),
                    )
                }
            }
        };
        let test = evaluate(&trained.recognizer, &alphabet, &data.test)?;
        results.push(ArmResult {
            arm,
            wer: test.wer,
            ned: test.ned,
            val_wer: trained.val.wer,
            val_ned: trained.val.ned,
            best_step: trained.best_step,
            pool_size,
        });
    }
    Ok(results)
}

pub fn write_htr_table(path: &Path, results: &[ArmResult]) -> Result<()> {
    let mut text = String::from("arm,wer,ned,val_wer,val_ned,best_step,train_pool\n");
    for r in results {
        text.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.arm, r.wer, r.ned, r.val_wer, r.val_ned, r.best_step, r.pool_size
        ));
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
