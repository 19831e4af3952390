//! Tab-separated dataset manifests: `path<TAB>transcript<TAB>split`.
//!
//! An empty transcript marks an unlabeled image. Relative paths are resolved
//! against the manifest's directory.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Manifest(format!("unknown split {other:?}"))),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    /// Path as written in the manifest.
    pub image_path: PathBuf,
    pub transcript: Option<String>,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    /// Directory relative paths are resolved against.
    pub root: PathBuf,
}

impl DatasetManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| {
            Error::Manifest(format!("cannot read manifest {}: {e}", path.display()))
        })?;
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, root)
    }

    pub fn parse(text: &str, root: PathBuf) -> Result<Self> {
        let mut entries = Vec::new();
        let mut seen = HashSet::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(Error::Manifest(format!(
                    "line {}: expected 3 tab-separated fields, found {}",
                    lineno + 1,
                    fields.len()
                )));
            }
            let split: Split = fields[2]
                .trim()
                .parse()
                .map_err(|e: Error| Error::Manifest(format!("line {}: {e}", lineno + 1)))?;
            let image_path = PathBuf::from(fields[0]);
            if !seen.insert(image_path.clone()) {
                return Err(Error::Manifest(format!(
                    "line {}: {} listed twice",
                    lineno + 1,
                    image_path.display()
                )));
            }
            let transcript = (!fields[1].is_empty()).then(|| fields[1].to_string());
            entries.push(ManifestEntry {
                image_path,
                transcript,
                split,
            });
        }
        Ok(Self { entries, root })
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&format!(
                "{}\t{}\t{}\n",
                e.image_path.display(),
                e.transcript.as_deref().unwrap_or(""),
                e.split
            ));
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }

    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        if entry.image_path.is_absolute() {
            entry.image_path.clone()
        } else {
            self.root.join(&entry.image_path)
        }
    }

    pub fn split(&self, split: Split) -> DatasetManifest {
        DatasetManifest {
            entries: self
                .entries
                .iter()
                .filter(|e| e.split == split)
                .cloned()
                .collect(),
            root: self.root.clone(),
        }
    }

    pub fn count(&self, split: Split) -> usize {
        self.entries.iter().filter(|e| e.split == split).count()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Fails with the first listed image that does not exist.
    pub fn check_paths(&self) -> Result<()> {
        for e in &self.entries {
            let p = self.resolve(e);
            if !p.is_file() {
                return Err(Error::UnreadableImage {
                    path: p,
                    reason: "no such file".into(),
                });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_labeled_and_unlabeled_rows() {
        let m = DatasetManifest::parse(
            "a.png\tmeet\ttrain\nb.png\t\tval\n# c\n\n",
            PathBuf::from("/data"),
        )
        .unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.entries[0].transcript.as_deref(), Some("meet"));
        assert_eq!(m.entries[1].transcript, None);
        assert_eq!(m.entries[1].split, Split::Val);
        assert_eq!(m.resolve(&m.entries[0]), PathBuf::from("/data/a.png"));
        assert_eq!(
            DatasetManifest::parse(&m.to_tsv(), m.root.clone()).unwrap(),
            m
        );
    }

    #[test]
    fn rejects_malformed_rows() {
        assert!(DatasetManifest::parse("a.png\tmeet\n", PathBuf::new()).is_err());
        assert!(DatasetManifest::parse("a.png\tmeet\tdev\n", PathBuf::new()).is_err());
        assert!(
            DatasetManifest::parse("a.png\tx\ttrain\na.png\ty\ttest\n", PathBuf::new()).is_err()
        );
    }
}
