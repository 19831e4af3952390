//! Run configuration, read from TOML with dotted-key overrides.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::alphabet::Alphabet;
use crate::data::AffineRanges;
use crate::error::{Error, Result};
use crate::generator::NormMode;
use crate::grad_balance::{BalanceMode, GradBalanceConfig};
use crate::nn::AdamConfig;
use crate::recognizer::RecognizerConfig;
use crate::shape::ModelShape;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    Full,
    #[default]
    Desk,
    Tiny,
}

impl Profile {
    pub fn shape(self) -> ModelShape {
        match self {
            Profile::Full => ModelShape::full(),
            Profile::Desk => ModelShape::desk(),
            Profile::Tiny => ModelShape::tiny(),
        }
    }
}

/// Which image gradients drive the generator.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Critic plus (balanced) recognizer gradient.
    #[default]
    Joint,
    /// Recognizer gradient only.
    ROnly,
    /// Critic gradient only.
    DOnly,
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Objective::Joint => "joint",
            Objective::ROnly => "r_only",
            Objective::DOnly => "d_only",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Arm {
    #[serde(rename = "real")]
    Real,
    #[serde(rename = "real+affine")]
    RealAffine,
    #[serde(rename = "real+synthetic")]
    RealSynthetic,
    #[serde(rename = "real+synthetic->finetune")]
    RealSyntheticFinetune,
}

impl Arm {
    pub const ALL: [Arm; 4] = [
        Arm::Real,
        Arm::RealAffine,
        Arm::RealSynthetic,
        Arm::RealSyntheticFinetune,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Arm::Real => "real",
            Arm::RealAffine => "real+affine",
            Arm::RealSynthetic => "real+synthetic",
            Arm::RealSyntheticFinetune => "real+synthetic->finetune",
        }
    }

    pub fn needs_generator(self) -> bool {
        matches!(self, Arm::RealSynthetic | Arm::RealSyntheticFinetune)
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Arm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Arm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown arm {s:?}")))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimConfig {
    pub g: AdamConfig,
    pub d: AdamConfig,
    pub r: AdamConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SheetConfig {
    /// Column words; empty means the first distinct lexicon words.
    pub words: Vec<String>,
    pub n_words: usize,
    pub styles: usize,
}

impl Default for SheetConfig {
    fn default() -> Self {
        Self {
            words: Vec::new(),
            n_words: 4,
            styles: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HtrConfig {
    pub arms: Vec<Arm>,
    pub steps: u64,
    pub finetune_steps: u64,
    pub batch_size: usize,
    pub eval_every: u64,
    pub optim: AdamConfig,
    pub recognizer: RecognizerConfig,
    /// Generated words added to the training pool of the synthetic arms.
    pub synthetic_count: usize,
    /// Probability that a real sample is distorted in the affine arm.
    pub affine_prob: f64,
    pub affine: AffineRanges,
    pub generator_checkpoint: Option<PathBuf>,
}

impl Default for HtrConfig {
    fn default() -> Self {
        Self {
            arms: Arm::ALL.to_vec(),
            steps: 600,
            finetune_steps: 200,
            batch_size: 16,
            eval_every: 100,
            optim: AdamConfig {
                lr: 1e-3,
                beta1: 0.9,
                ..AdamConfig::default()
            },
            recognizer: RecognizerConfig::default(),
            synthetic_count: 1000,
            affine_prob: 0.5,
            affine: AffineRanges::mild(),
            generator_checkpoint: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationConfig {
    pub modes: Vec<BalanceMode>,
    pub alphas: Vec<f64>,
    /// Also train the recognizer-only and critic-only generators.
    pub extremes: bool,
    pub steps: u64,
    pub htr_steps: u64,
    pub synthetic_count: usize,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            modes: vec![BalanceMode::None, BalanceMode::Full, BalanceMode::StdOnly],
            alphas: vec![10.0, 1.0, 0.1],
            extremes: true,
            steps: 300,
            htr_steps: 300,
            synthetic_count: 400,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    pub steps: u64,
    pub batch_size: usize,
    pub checkpoint_every: u64,
    pub sample_every: u64,
    pub out_dir: PathBuf,
    /// A `ckpt/step_N` directory to continue from.
    pub resume_from: Option<PathBuf>,
    pub alphabet: String,
    pub profile: Profile,
    /// Overrides the profile geometry when set.
    pub shape: Option<ModelShape>,
    pub norm_mode: NormMode,
    pub objective: Objective,
    pub manifest: PathBuf,
    pub unlabeled_manifest: Option<PathBuf>,
    /// Word list for fake texts; defaults to the training transcripts.
    pub lexicon_path: Option<PathBuf>,
    pub max_word_len: usize,
    pub supervised_rescale: bool,
    pub recognizer: RecognizerConfig,
    pub gb: GradBalanceConfig,
    pub optim: OptimConfig,
    pub sheet: SheetConfig,
    pub htr: HtrConfig,
    pub ablation: AblationConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            steps: 2000,
            batch_size: 8,
            checkpoint_every: 500,
            sample_every: 500,
            out_dir: PathBuf::from("runs/default"),
            resume_from: None,
            alphabet: "abcdefghijklmnopqrstuvwxyz".into(),
            profile: Profile::Desk,
            shape: None,
            norm_mode: NormMode::Conditional,
            objective: Objective::Joint,
            manifest: PathBuf::from("data/manifest.tsv"),
            unlabeled_manifest: None,
            lexicon_path: None,
            max_word_len: 10,
            supervised_rescale: true,
            recognizer: RecognizerConfig::default(),
            gb: GradBalanceConfig::default(),
            optim: OptimConfig::default(),
            sheet: SheetConfig::default(),
            htr: HtrConfig::default(),
            ablation: AblationConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn model_shape(&self) -> ModelShape {
        self.shape.clone().unwrap_or_else(|| self.profile.shape())
    }

    pub fn alphabet(&self) -> Result<Alphabet> {
        Alphabet::new(&self.alphabet)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        self.model_shape().validate()?;
        self.alphabet()?;
        self.gb.validate()?;
        if self.batch_size == 0 || self.htr.batch_size == 0 {
            return fail("batch_size must be at least 1");
        }
        if self.checkpoint_every == 0 || self.sample_every == 0 || self.htr.eval_every == 0 {
            return fail("checkpoint_every, sample_every and htr.eval_every must be positive");
        }
        if self.max_word_len == 0 {
            return fail("max_word_len must be positive");
        }
        for (name, o) in [
            ("optim.g", &self.optim.g),
            ("optim.d", &self.optim.d),
            ("optim.r", &self.optim.r),
            ("htr.optim", &self.htr.optim),
        ] {
            if !(o.lr > 0.0 && o.lr.is_finite()) {
                return Err(Error::Config(format!("{name}.lr must be positive")));
            }
            if !(0.0..1.0).contains(&o.beta1) || !(0.0..1.0).contains(&o.beta2) || o.eps <= 0.0 {
                return Err(Error::Config(format!("{name} has invalid moment settings")));
            }
        }
        if !(0.0..=1.0).contains(&self.htr.affine_prob) {
            return fail("htr.affine_prob must lie in [0, 1]");
        }
        if self.ablation.alphas.iter().any(|a| a.is_nan() || *a <= 0.0) {
            return fail("ablation.alphas must be positive");
        }
        if self.sheet.styles == 0 {
            return fail("sheet.styles must be positive");
        }
        Ok(())
    }

    /// Parses TOML text, applies `key=value` overrides, and validates.
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table =
            toml::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: TrainConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>, overrides: &[String]) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml_str(&text, overrides)
    }

    /// Every key with defaults filled in.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// Sets a dotted key such as `gb.alpha=0.1`. The value is read as a TOML
/// literal when possible and as a bare string otherwise.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {assignment:?} is not key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("bad override key {key:?}")));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override {key:?}: {p} is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}
