use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use rand::Rng;

use crate::alphabet::Alphabet;
use crate::error::{Error, Result};
use crate::noise::rng_from_seed;

/// Reads one word per line. Words longer than `max_len` or using symbols
/// outside the alphabet are dropped.
pub fn load_lexicon(
    path: impl AsRef<Path>,
    alphabet: &Alphabet,
    max_len: usize,
) -> Result<Vec<String>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut words = Vec::new();
    let mut dropped = 0usize;
    for line in text.lines() {
        let w = line.trim();
        if w.is_empty() {
            continue;
        }
        if w.chars().count() > max_len || alphabet.check(w).is_err() {
            dropped += 1;
            continue;
        }
        words.push(w.to_string());
    }
    if dropped > 0 {
        log::warn!("{}: dropped {dropped} lexicon words", path.display());
    }
    if words.is_empty() {
        return Err(Error::Config(format!(
            "lexicon {} has no usable words",
            path.display()
        )));
    }
    Ok(words)
}

/// Distinct random words over the alphabet, lengths in `min_len..=max_len`.
/// Returns fewer than `count` words only if the space is exhausted.
pub fn random_lexicon(
    alphabet: &Alphabet,
    count: usize,
    min_len: usize,
    max_len: usize,
    seed: u64,
) -> Vec<String> {
    assert!(min_len >= 1 && min_len <= max_len, "bad length range");
    let chars = alphabet.chars();
    let mut rng = rng_from_seed(seed);
    let mut seen = BTreeSet::new();
    let mut words = Vec::with_capacity(count);
    let mut attempts = 0;
    while words.len() < count && attempts < count * 50 + 100 {
        attempts += 1;
        let len = rng.random_range(min_len..=max_len);
        let w: String = (0..len)
            .map(|_| chars[rng.random_range(0..chars.len())])
            .collect();
        if seen.insert(w.clone()) {
            words.push(w);
        }
    }
    words
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_words_stay_in_alphabet() {
        let a = Alphabet::new("abcde").unwrap();
        let words = random_lexicon(&a, 40, 2, 6, 3);
        assert_eq!(words.len(), 40);
        assert!(words
            .iter()
            .all(|w| a.check(w).is_ok() && (2..=6).contains(&w.len())));
        assert_eq!(words, random_lexicon(&a, 40, 2, 6, 3));
    }

    #[test]
    fn loading_filters_words() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("lex.txt");
        fs::write(&p, "ab\nabcdeabcde\nxyz\n\ncab\n").unwrap();
        let a = Alphabet::new("abcde").unwrap();
        assert_eq!(load_lexicon(&p, &a, 6).unwrap(), vec!["ab", "cab"]);
        fs::write(&p, "zzz\n").unwrap();
        assert!(load_lexicon(&p, &a, 6).is_err());
    }
}
