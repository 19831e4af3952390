//! Recognition metrics.

use crate::error::{Error, Result};

/// Levenshtein distance over Unicode scalar values with unit costs.
pub fn edit_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

fn check_lengths(predictions: &[impl AsRef<str>], truths: &[impl AsRef<str>]) -> Result<()> {
    if predictions.len() != truths.len() {
        return Err(Error::LengthMismatch {
            left: predictions.len(),
            right: truths.len(),
        });
    }
    if truths.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(())
}

/// Fraction of words whose prediction is not exactly the truth.
pub fn wer(predictions: &[impl AsRef<str>], truths: &[impl AsRef<str>]) -> Result<f64> {
    check_lengths(predictions, truths)?;
    let wrong = predictions
        .iter()
        .zip(truths)
        .filter(|(p, t)| p.as_ref() != t.as_ref())
        .count();
    Ok(wrong as f64 / truths.len() as f64)
}

/// Edit distance divided by the truth length, for one word.
pub fn normalized_distance(prediction: &str, truth: &str) -> Option<f64> {
    let n = truth.chars().count();
    (n > 0).then(|| edit_distance(prediction, truth) as f64 / n as f64)
}

/// Mean over words of the length-normalized edit distance.
pub fn ned(predictions: &[impl AsRef<str>], truths: &[impl AsRef<str>]) -> Result<f64> {
    check_lengths(predictions, truths)?;
    let mut total = 0.0;
    for (index, (p, t)) in predictions.iter().zip(truths).enumerate() {
        total += normalized_distance(p.as_ref(), t.as_ref()).ok_or(Error::EmptyTruth { index })?;
    }
    Ok(total / truths.len() as f64)
}
