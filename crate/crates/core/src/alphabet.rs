//! Ordered symbol set with a trailing CTC blank class.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Ordered set of unique characters. Class `i < len()` is `chars[i]`; the
/// blank is always the last class, `len()`.
#[derive(Clone, PartialEq, Eq)]
pub struct Alphabet {
    chars: Vec<char>,
    index: HashMap<char, usize>,
}

impl Alphabet {
    pub fn new(symbols: &str) -> Result<Self> {
        let chars: Vec<char> = symbols.chars().collect();
        if chars.is_empty() {
            return Err(Error::Alphabet("alphabet is empty".into()));
        }
        let mut index = HashMap::with_capacity(chars.len());
        for (i, &c) in chars.iter().enumerate() {
            if index.insert(c, i).is_some() {
                return Err(Error::Alphabet(format!("duplicate symbol {c:?}")));
            }
        }
        Ok(Self { chars, index })
    }

    /// Lowercase English letters.
    pub fn lowercase() -> Self {
        Self::new("abcdefghijklmnopqrstuvwxyz").expect("static alphabet")
    }

    pub fn len(&self) -> usize {
        self.chars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }

    pub fn blank_index(&self) -> usize {
        self.chars.len()
    }

    /// Recognizer output classes: every symbol plus the blank.
    pub fn num_classes(&self) -> usize {
        self.chars.len() + 1
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    pub fn as_string(&self) -> String {
        self.chars.iter().collect()
    }

    pub fn index_of(&self, c: char) -> Option<usize> {
        self.index.get(&c).copied()
    }

    pub fn char_at(&self, i: usize) -> Option<char> {
        self.chars.get(i).copied()
    }

    pub fn contains(&self, c: char) -> bool {
        self.index.contains_key(&c)
    }

    /// Maps a non-empty string to class indices.
    pub fn encode(&self, text: &str) -> Result<Vec<usize>> {
        if text.is_empty() {
            return Err(Error::EmptyText);
        }
        text.chars()
            .enumerate()
            .map(|(position, ch)| {
                self.index_of(ch)
                    .ok_or(Error::UnknownCharacter { position, ch })
            })
            .collect()
    }

    /// Maps class indices back to a string, skipping the blank and anything
    /// out of range.
    pub fn decode(&self, indices: &[usize]) -> String {
        indices.iter().filter_map(|&i| self.char_at(i)).collect()
    }

    /// Validates a transcript without allocating the index vector.
    pub fn check(&self, text: &str) -> Result<()> {
        if text.is_empty() {
            return Err(Error::EmptyText);
        }
        match text.chars().enumerate().find(|(_, c)| !self.contains(*c)) {
            Some((position, ch)) => Err(Error::UnknownCharacter { position, ch }),
            None => Ok(()),
        }
    }
}

/// Free-function form of [`Alphabet::encode`].
pub fn encode_transcript(text: &str, alphabet: &Alphabet) -> Result<Vec<usize>> {
    alphabet.encode(text)
}

impl fmt::Debug for Alphabet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Alphabet({:?})", self.as_string())
    }
}

impl Serialize for Alphabet {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.as_string())
    }
}

impl<'de> Deserialize<'de> for Alphabet {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Alphabet::new(&s).map_err(serde::de::Error::custom)
    }
}
