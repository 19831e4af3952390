//! Versioned binary container for network parameters and optimizer slots.
//!
//! Layout: 8-byte magic, little-endian `u64` header length, a JSON header,
//! then every tensor as little-endian `f64` in header order. Optimizer
//! moments follow the parameters when present.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::alphabet::Alphabet;
use crate::discriminator::Discriminator;
use crate::error::{Error, Result};
use crate::generator::{Generator, NormMode};
use crate::nn::{Adam, AdamConfig, Param};
use crate::recognizer::{Recognizer, RecognizerConfig};
use crate::shape::ModelShape;

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"WGANCKPT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetKind {
    Generator,
    Discriminator,
    Recognizer,
}

/// Architecture description stored next to the weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NetMeta {
    Generator {
        shape: ModelShape,
        norm_mode: NormMode,
    },
    Discriminator {
        shape: ModelShape,
    },
    Recognizer {
        img_height: usize,
        config: RecognizerConfig,
    },
}

impl NetMeta {
    pub fn kind(&self) -> NetKind {
        match self {
            NetMeta::Generator { .. } => NetKind::Generator,
            NetMeta::Discriminator { .. } => NetKind::Discriminator,
            NetMeta::Recognizer { .. } => NetKind::Recognizer,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TensorHeader {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct OptimHeader {
    config: AdamConfig,
    t: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    version: u32,
    alphabet: Alphabet,
    step: u64,
    meta: NetMeta,
    tensors: Vec<TensorHeader>,
    optimizer: Option<OptimHeader>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub alphabet: Alphabet,
    pub step: u64,
    pub meta: NetMeta,
    pub params: Vec<Param>,
    pub optimizer: Option<Adam>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            version: FORMAT_VERSION,
            alphabet: self.alphabet.clone(),
            step: self.step,
            meta: self.meta.clone(),
            tensors: self
                .params
                .iter()
                .map(|p| TensorHeader {
                    name: p.name.clone(),
                    shape: p.shape.clone(),
                })
                .collect(),
            optimizer: self.optimizer.as_ref().map(|o| OptimHeader {
                config: o.config,
                t: o.t,
            }),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        let mut put = |v: &[f64]| {
            for x in v {
                out.extend_from_slice(&x.to_le_bytes());
            }
        };
        for p in &self.params {
            put(&p.data);
        }
        if let Some(o) = &self.optimizer {
            o.m.iter().for_each(|m| put(m));
            o.v.iter().for_each(|v| put(v));
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let body = bytes
            .get(16..16 + hlen)
            .ok_or_else(|| bad("truncated header"))?;
        let header: Header = serde_json::from_slice(body)
            .map_err(|e| Error::Checkpoint(format!("bad header: {e}")))?;
        if header.version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "format version {} is not supported (expected {FORMAT_VERSION})",
                header.version
            )));
        }
        let mut cursor = 16 + hlen;
        let mut take = |n: usize| -> Result<Vec<f64>> {
            let end = cursor + 8 * n;
            let raw = bytes
                .get(cursor..end)
                .ok_or_else(|| bad("truncated tensor data"))?;
            cursor = end;
            Ok(raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect())
        };
        let mut params = Vec::with_capacity(header.tensors.len());
        for t in &header.tensors {
            let n = t.shape.iter().product();
            params.push(Param {
                name: t.name.clone(),
                shape: t.shape.clone(),
                data: take(n)?,
            });
        }
        let optimizer = match header.optimizer {
            None => None,
            Some(o) => {
                let sizes: Vec<usize> = params.iter().map(|p| p.data.len()).collect();
                let m = sizes.iter().map(|&n| take(n)).collect::<Result<Vec<_>>>()?;
                let v = sizes.iter().map(|&n| take(n)).collect::<Result<Vec<_>>>()?;
                Some(Adam {
                    config: o.config,
                    m,
                    v,
                    t: o.t,
                })
            }
        };
        if cursor != bytes.len() {
            return Err(bad("trailing bytes after tensor data"));
        }
        Ok(Self {
            alphabet: header.alphabet,
            step: header.step,
            meta: header.meta,
            params,
            optimizer,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.is_file() {
            return Err(Error::MissingCheckpoint(path.display().to_string()));
        }
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Fails unless the stored alphabet and architecture equal the expected ones.
    pub fn ensure_matches(&self, alphabet: &Alphabet, meta: &NetMeta) -> Result<()> {
        if &self.alphabet != alphabet {
            return Err(Error::Checkpoint(format!(
                "alphabet mismatch: checkpoint has {:?}, expected {:?}",
                self.alphabet.as_string(),
                alphabet.as_string()
            )));
        }
        if &self.meta != meta {
            return Err(Error::Checkpoint(format!(
                "architecture mismatch: checkpoint has {:?}, expected {:?}",
                self.meta, meta
            )));
        }
        Ok(())
    }

    fn expect_kind(&self, kind: NetKind) -> Result<()> {
        if self.meta.kind() != kind {
            return Err(Error::Checkpoint(format!(
                "expected a {kind:?} checkpoint, found {:?}",
                self.meta.kind()
            )));
        }
        Ok(())
    }

    fn restore_optimizer(&self, n_params: usize) -> Result<Option<Adam>> {
        match &self.optimizer {
            Some(o) if o.m.len() != n_params => {
                Err(Error::Checkpoint("optimizer slot count mismatch".into()))
            }
            other => Ok(other.clone()),
        }
    }
}

pub fn generator_meta(g: &Generator) -> NetMeta {
    NetMeta::Generator {
        shape: g.shape().clone(),
        norm_mode: g.norm_mode(),
    }
}

pub fn discriminator_meta(d: &Discriminator) -> NetMeta {
    NetMeta::Discriminator {
        shape: d.shape().clone(),
    }
}

pub fn recognizer_meta(r: &Recognizer) -> NetMeta {
    NetMeta::Recognizer {
        img_height: r.img_height(),
        config: r.config().clone(),
    }
}

pub fn generator_checkpoint(g: &Generator, optimizer: Option<&Adam>, step: u64) -> Checkpoint {
    Checkpoint {
        alphabet: g.alphabet().clone(),
        step,
        meta: generator_meta(g),
        params: g.params().params().to_vec(),
        optimizer: optimizer.cloned(),
    }
}

pub fn discriminator_checkpoint(
    d: &Discriminator,
    alphabet: &Alphabet,
    optimizer: Option<&Adam>,
    step: u64,
) -> Checkpoint {
    Checkpoint {
        alphabet: alphabet.clone(),
        step,
        meta: discriminator_meta(d),
        params: d.params().params().to_vec(),
        optimizer: optimizer.cloned(),
    }
}

pub fn recognizer_checkpoint(
    r: &Recognizer,
    alphabet: &Alphabet,
    optimizer: Option<&Adam>,
    step: u64,
) -> Checkpoint {
    Checkpoint {
        alphabet: alphabet.clone(),
        step,
        meta: recognizer_meta(r),
        params: r.params().params().to_vec(),
        optimizer: optimizer.cloned(),
    }
}

pub fn restore_generator(ckpt: &Checkpoint) -> Result<(Generator, Option<Adam>)> {
    ckpt.expect_kind(NetKind::Generator)?;
    let NetMeta::Generator { shape, norm_mode } = &ckpt.meta else {
        unreachable!()
    };
    let mut g = Generator::new(shape.clone(), ckpt.alphabet.clone(), *norm_mode, 0)?;
    g.params_mut().load_from(&ckpt.params)?;
    let opt = ckpt.restore_optimizer(g.params().params().len())?;
    Ok((g, opt))
}

pub fn restore_discriminator(ckpt: &Checkpoint) -> Result<(Discriminator, Option<Adam>)> {
    ckpt.expect_kind(NetKind::Discriminator)?;
    let NetMeta::Discriminator { shape } = &ckpt.meta else {
        unreachable!()
    };
    let mut d = Discriminator::new(shape, 0)?;
    d.params_mut().load_from(&ckpt.params)?;
    let opt = ckpt.restore_optimizer(d.params().params().len())?;
    Ok((d, opt))
}

pub fn restore_recognizer(ckpt: &Checkpoint) -> Result<(Recognizer, Option<Adam>)> {
    ckpt.expect_kind(NetKind::Recognizer)?;
    let NetMeta::Recognizer { img_height, config } = &ckpt.meta else {
        unreachable!()
    };
    let mut r = Recognizer::new(*img_height, config.clone(), &ckpt.alphabet, 0)?;
    r.params_mut().load_from(&ckpt.params)?;
    let opt = ckpt.restore_optimizer(r.params().params().len())?;
    Ok((r, opt))
}

pub fn load_generator(path: impl AsRef<Path>) -> Result<Generator> {
    Ok(restore_generator(&Checkpoint::load(path)?)?.0)
}

pub fn load_recognizer(path: impl AsRef<Path>) -> Result<(Recognizer, Alphabet)> {
    let ckpt = Checkpoint::load(path)?;
    let (r, _) = restore_recognizer(&ckpt)?;
    Ok((r, ckpt.alphabet))
}
