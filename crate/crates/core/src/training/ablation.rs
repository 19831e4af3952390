//! Sweep over gradient-balancing settings with a shared sample grid.

use std::fs;
use std::path::PathBuf;

use super::run_htr_experiment;
use super::{
    run_training, sheet_noise, sheet_words, style_sheet, write_htr_table, Datasets, HtrData,
    StepLosses,
};
use crate::config::{Arm, Objective, TrainConfig};
use crate::error::{Error, Result};
use crate::generator::Generator;
use crate::grad_balance::BalanceMode;
use crate::noise::NoiseBundle;

#[derive(Debug, Clone, PartialEq)]
pub struct AblationCell {
    pub name: String,
    pub objective: Objective,
    pub mode: Option<BalanceMode>,
    pub alpha: Option<f64>,
    /// Name of the cell whose trained generator this cell reports. Differs
    /// from `name` only for `mode = none`, where alpha has no effect.
    pub trained_as: String,
    pub sheet: PathBuf,
    pub wer: f64,
    pub ned: f64,
    pub final_losses: Option<StepLosses>,
}

#[derive(Debug, Clone)]
pub struct AblationReport {
    pub cells: Vec<AblationCell>,
    /// Column words shared by every sheet.
    pub words: Vec<String>,
    /// Row styles shared by every sheet.
    pub styles: Vec<NoiseBundle>,
    pub table: PathBuf,
}

struct Plan {
    name: String,
    objective: Objective,
    mode: Option<BalanceMode>,
    alpha: Option<f64>,
}

fn plan(config: &TrainConfig) -> Vec<Plan> {
    let ab = &config.ablation;
    let mut cells = Vec::new();
    if ab.extremes {
        cells.push(Plan {
            name: "r_only".into(),
            objective: Objective::ROnly,
            mode: None,
            alpha: None,
        });
    }
    for &mode in &ab.modes {
        for &alpha in &ab.alphas {
            cells.push(Plan {
                name: format!("{mode}_alpha{alpha}"),
                objective: Objective::Joint,
                mode: Some(mode),
                alpha: Some(alpha),
            });
        }
    }
    if ab.extremes {
        cells.push(Plan {
            name: "d_only".into(),
            objective: Objective::DOnly,
            mode: None,
            alpha: None,
        });
    }
    cells
}

/// Trains one generator per (mode, alpha) cell plus the recognizer-only and
/// critic-only extremes, renders each with the same words and styles, and
/// scores each by a recognizer trained on real plus its generated words.
pub fn run_alpha_ablation(
    config: &TrainConfig,
    data: &Datasets,
    htr_data: &HtrData,
) -> Result<AblationReport> {
    config.validate()?;
    let root = config.out_dir.join("ablation");
    let sheets = root.join("sheets");
    fs::create_dir_all(&sheets).map_err(|e| Error::io(&sheets, e))?;
    let words = sheet_words(config, &data.lexicon);
    let styles = sheet_noise(config);

    let mut none_run: Option<(String, Generator, Option<StepLosses>)> = None;
    let mut cells = Vec::new();
    for p in plan(config) {
        let mut cfg = config.clone();
        cfg.steps = config.ablation.steps;
        cfg.checkpoint_every = cfg.steps.max(1);
        cfg.sample_every = cfg.steps.max(1);
        cfg.resume_from = None;
        cfg.out_dir = root.join(&p.name);
        cfg.objective = p.objective;
        if let (Some(mode), Some(alpha)) = (p.mode, p.alpha) {
            cfg.gb.mode = mode;
            cfg.gb.alpha = alpha;
        }
        cfg.htr.steps = config.ablation.htr_steps;
        cfg.htr.synthetic_count = config.ablation.synthetic_count;

        let reuse = p.mode == Some(BalanceMode::None) && none_run.is_some();
        let (trained_as, generator, last) = if reuse {
            let (n, g, l) = none_run.as_ref().expect("checked");
            (n.clone(), g.clone(), *l)
        } else {
            log::info!("ablation cell {}", p.name);
            let state = run_training(&cfg, data)?;
            let out = (
                p.name.clone(),
                state.generator,
                state.history.last().copied(),
            );
            if p.mode == Some(BalanceMode::None) {
                none_run = Some(out.clone());
            }
            out
        };

        let sheet = sheets.join(format!("{}.png", p.name));
        style_sheet(&generator, &words, &styles)?.save_png(&sheet)?;
        let htr = run_htr_experiment(
            &[Arm::RealSynthetic],
            &cfg,
            htr_data,
            &data.lexicon,
            Some(&generator),
        )?;
        fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))?;
        write_htr_table(&cfg.out_dir.join("htr.csv"), &htr)?;
        cells.push(AblationCell {
            name: p.name,
            objective: p.objective,
            mode: p.mode,
            alpha: p.alpha,
            trained_as,
            sheet,
            wer: htr[0].wer,
            ned: htr[0].ned,
            final_losses: last,
        });
    }

    let table = root.join("ablation.csv");
    let mut text = String::from("cell,objective,mode,alpha,trained_as,wer,ned,sheet\n");
    for c in &cells {
        text.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            c.name,
            c.objective,
            c.mode.map(|m| m.to_string()).unwrap_or_default(),
            c.alpha.map(|a| a.to_string()).unwrap_or_default(),
            c.trained_as,
            c.wer,
            c.ned,
            c.sheet.display()
        ));
    }
    fs::write(&table, text).map_err(|e| Error::io(&table, e))?;
    Ok(AblationReport {
        cells,
        words,
        styles,
        table,
    })
}
