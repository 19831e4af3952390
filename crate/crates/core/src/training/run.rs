use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::Path;

use super::{advance, Datasets, StepLosses, TextSampler, TrainState, STREAM_SHEET};
use crate::config::TrainConfig;
use crate::error::{Error, Result};
use crate::generator::Generator;
use crate::image::{compose_sheet, WordImage};
use crate::noise::{derive_seed, sample_noise, NoiseBundle};

pub const METRICS_HEADER: &str = "step,loss_d_real,loss_d_fake,loss_g,loss_r,sigma_ratio";

fn metrics_row(l: &StepLosses) -> String {
    format!(
        "{},{},{},{},{},{}",
        l.step,
        l.loss_d_real,
        l.loss_d_fake,
        l.loss_g,
        l.loss_r,
        l.sigma_ratio.map(|v| v.to_string()).unwrap_or_default()
    )
}

pub fn write_metrics(path: &Path, history: &[StepLosses]) -> Result<()> {
    let mut text = String::from(METRICS_HEADER);
    text.push('\n');
    for l in history {
        text.push_str(&metrics_row(l));
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Column words of every sample sheet.
pub fn sheet_words(config: &TrainConfig, lexicon: &[String]) -> Vec<String> {
    if !config.sheet.words.is_empty() {
        return config.sheet.words.clone();
    }
    let mut out: Vec<String> = Vec::new();
    for w in lexicon {
        if !out.contains(w) {
            out.push(w.clone());
        }
        if out.len() == config.sheet.n_words {
            break;
        }
    }
    out
}

/// Row styles of every sample sheet; depends only on the seed and shape.
pub fn sheet_noise(config: &TrainConfig) -> Vec<NoiseBundle> {
    sample_noise(
        derive_seed(config.seed, &[STREAM_SHEET]),
        config.sheet.styles,
        &config.model_shape(),
    )
}

/// One row per style, one column per word.
pub fn style_sheet(
    generator: &Generator,
    words: &[String],
    styles: &[NoiseBundle],
) -> Result<WordImage> {
    let rows = styles
        .iter()
        .map(|z| {
            words
                .iter()
                .map(|w| generator.generate(w, z))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(compose_sheet(&rows, 4))
}

fn mkdir(p: &Path) -> Result<()> {
    fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

/// Runs `config.steps` steps. Writes `config.toml`, `metrics.csv`,
/// `ckpt/step_N/{G,D,R}` and `samples/step_N.png` under `config.out_dir`.
pub fn run_training(config: &TrainConfig, data: &Datasets) -> Result<TrainState> {
    config.validate()?;
    let out = &config.out_dir;
    let ckpt = out.join("ckpt");
    let samples = out.join("samples");
    mkdir(&ckpt)?;
    mkdir(&samples)?;
    let cfg_path = out.join("config.toml");
    fs::write(&cfg_path, config.to_toml()).map_err(|e| Error::io(&cfg_path, e))?;

    let words = sheet_words(config, &data.lexicon);
    let styles = sheet_noise(config);
    let save_sheet = |state: &TrainState| -> Result<()> {
        if words.is_empty() {
            return Ok(());
        }
        style_sheet(&state.generator, &words, &styles)?
            .save_png(samples.join(format!("step_{}.png", state.step)))
    };

    let mut state = match &config.resume_from {
        Some(dir) => {
            let s = TrainState::load(dir, config)?;
            log::info!("resumed from {} at step {}", dir.display(), s.step);
            s
        }
        None => {
            let s = TrainState::new(config)?;
            s.save(&ckpt.join("step_0"))?;
            save_sheet(&s)?;
            s
        }
    };
    let metrics_path = out.join("metrics.csv");
    write_metrics(&metrics_path, &state.history)?;
    let mut metrics = OpenOptions::new()
        .append(true)
        .open(&metrics_path)
        .map_err(|e| Error::io(&metrics_path, e))?;

    let sampler = TextSampler::new(&data.lexicon);
    while state.step < config.steps {
        let losses = match advance(&mut state, config, data, &sampler) {
            Ok(l) => l,
            Err(e @ Error::NonFinite { .. }) => {
                let dir = ckpt.join(format!("abort_step_{}", state.step + 1));
                log::error!("{e}; saving diagnostic snapshot to {}", dir.display());
                state.save(&dir)?;
                return Err(e);
            }
            Err(e) => return Err(e),
        };
        writeln!(metrics, "{}", metrics_row(&losses)).map_err(|e| Error::io(&metrics_path, e))?;
        let step = state.step;
        if step % 50 == 0 {
            log::info!(
                "step {step}: d_real {:.4} d_fake {:.4} g {:.4} r {:.4}",
                losses.loss_d_real,
                losses.loss_d_fake,
                losses.loss_g,
                losses.loss_r
            );
        }
        if step % config.checkpoint_every == 0 || step == config.steps {
            state.save(&ckpt.join(format!("step_{step}")))?;
        }
        if step % config.sample_every == 0 || step == config.steps {
            save_sheet(&state)?;
        }
    }
    Ok(state)
}
