//! Connectionist temporal classification: log-space forward-backward loss,
//! its gradient with respect to the raw frame scores, and greedy decoding.

use crate::alphabet::Alphabet;
use crate::error::{Error, Result};

/// Per-window class scores, `frames x classes` row-major. The last class is
/// the blank.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameLogits {
    pub scores: Vec<f64>,
    pub frames: usize,
    pub classes: usize,
    pub input_width: usize,
}

impl FrameLogits {
    pub fn new(scores: Vec<f64>, frames: usize, classes: usize) -> Self {
        assert_eq!(scores.len(), frames * classes, "logit buffer size");
        Self {
            scores,
            frames,
            classes,
            input_width: 0,
        }
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.scores[t * self.classes..(t + 1) * self.classes]
    }

    pub fn blank(&self) -> usize {
        self.classes - 1
    }

    /// Row-wise log-softmax.
    pub fn log_probs(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.scores.len());
        for t in 0..self.frames {
            let row = self.frame(t);
            let lse = log_sum_exp(row.iter().copied());
            out.extend(row.iter().map(|v| v - lse));
        }
        out
    }
}

fn log_sum_exp(vals: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = vals.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + vals.map(|v| (v - m).exp()).sum::<f64>().ln()
}

#[inline]
fn lse2(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Minimum number of frames that can emit `target`: one per label plus a
/// separating blank between equal neighbours.
pub fn required_frames(target: &[usize]) -> usize {
    target.len() + target.windows(2).filter(|w| w[0] == w[1]).count()
}

fn check_target(logits: &FrameLogits, target: &[usize]) -> Result<()> {
    if target.is_empty() {
        return Err(Error::EmptyTarget);
    }
    if let Some(&bad) = target.iter().find(|&&k| k >= logits.blank()) {
        return Err(Error::ShapeMismatch(format!(
            "target class {bad} is not a non-blank class of {}",
            logits.classes
        )));
    }
    let required = required_frames(target);
    if logits.frames < required {
        return Err(Error::InfeasibleTarget {
            frames: logits.frames,
            required,
        });
    }
    Ok(())
}

/// Negative log-likelihood of `target` under all alignments.
pub fn ctc_loss(logits: &FrameLogits, target: &[usize]) -> Result<f64> {
    check_target(logits, target)?;
    let lp = logits.log_probs();
    let ext = extend(target, logits.blank());
    let alpha = forward(&lp, logits.frames, logits.classes, &ext);
    Ok(-final_log_prob(&alpha, logits.frames, ext.len()))
}

/// Loss and `d loss / d scores`, same layout as `logits.scores`.
pub fn ctc_loss_and_grad(logits: &FrameLogits, target: &[usize]) -> Result<(f64, Vec<f64>)> {
    check_target(logits, target)?;
    let (t_len, c) = (logits.frames, logits.classes);
    let lp = logits.log_probs();
    let ext = extend(target, logits.blank());
    let s_len = ext.len();
    let alpha = forward(&lp, t_len, c, &ext);
    let beta = backward(&lp, t_len, c, &ext);
    let log_p = final_log_prob(&alpha, t_len, s_len);

    let mut grad = vec![0.0; t_len * c];
    let mut occ = vec![f64::NEG_INFINITY; c];
    for t in 0..t_len {
        occ.iter_mut().for_each(|v| *v = f64::NEG_INFINITY);
        for (s, &k) in ext.iter().enumerate() {
            let g = alpha[t * s_len + s] + beta[t * s_len + s] - lp[t * c + k];
            occ[k] = lse2(occ[k], g);
        }
        for k in 0..c {
            grad[t * c + k] = lp[t * c + k].exp() - (occ[k] - log_p).exp();
        }
    }
    Ok((-log_p, grad))
}

/// `blank, l1, blank, l2, ..., lL, blank`.
fn extend(target: &[usize], blank: usize) -> Vec<usize> {
    let mut ext = Vec::with_capacity(2 * target.len() + 1);
    ext.push(blank);
    for &k in target {
        ext.push(k);
        ext.push(blank);
    }
    ext
}

/// `alpha[t][s]`: log-probability of the prefixes ending in state `s` at
/// frame `t`, emission at `t` included.
fn forward(lp: &[f64], t_len: usize, c: usize, ext: &[usize]) -> Vec<f64> {
    let s_len = ext.len();
    let mut a = vec![f64::NEG_INFINITY; t_len * s_len];
    a[0] = lp[ext[0]];
    if s_len > 1 {
        a[1] = lp[ext[1]];
    }
    for t in 1..t_len {
        for s in 0..s_len {
            let prev = &a[(t - 1) * s_len..t * s_len];
            let mut v = prev[s];
            if s >= 1 {
                v = lse2(v, prev[s - 1]);
            }
            if s >= 2 && ext[s] != ext[s - 2] {
                v = lse2(v, prev[s - 2]);
            }
            a[t * s_len + s] = v + lp[t * c + ext[s]];
        }
    }
    a
}

/// `beta[t][s]`: log-probability of the suffixes starting in state `s` at
/// frame `t`, emission at `t` included.
fn backward(lp: &[f64], t_len: usize, c: usize, ext: &[usize]) -> Vec<f64> {
    let s_len = ext.len();
    let mut b = vec![f64::NEG_INFINITY; t_len * s_len];
    let last = (t_len - 1) * s_len;
    b[last + s_len - 1] = lp[(t_len - 1) * c + ext[s_len - 1]];
    if s_len > 1 {
        b[last + s_len - 2] = lp[(t_len - 1) * c + ext[s_len - 2]];
    }
    for t in (0..t_len - 1).rev() {
        for s in 0..s_len {
            let next = &b[(t + 1) * s_len..(t + 2) * s_len];
            let mut v = next[s];
            if s + 1 < s_len {
                v = lse2(v, next[s + 1]);
            }
            if s + 2 < s_len && ext[s] != ext[s + 2] {
                v = lse2(v, next[s + 2]);
            }
            b[t * s_len + s] = v + lp[t * c + ext[s]];
        }
    }
    b
}

fn final_log_prob(alpha: &[f64], t_len: usize, s_len: usize) -> f64 {
    let last = &alpha[(t_len - 1) * s_len..t_len * s_len];
    if s_len > 1 {
        lse2(last[s_len - 1], last[s_len - 2])
    } else {
        last[0]
    }
}

/// Best-path decoding: per-frame argmax, merge repeats, drop blanks.
pub fn greedy_decode(logits: &FrameLogits, alphabet: &Alphabet) -> String {
    greedy_path(logits)
        .into_iter()
        .filter_map(|k| alphabet.char_at(k))
        .collect()
}

/// Collapsed best-path class sequence (blanks removed).
pub fn greedy_path(logits: &FrameLogits) -> Vec<usize> {
    let blank = logits.blank();
    let mut out = Vec::new();
    let mut prev = None;
    for t in 0..logits.frames {
        let row = logits.frame(t);
        // first maximum wins ties
        let best = (0..row.len()).fold(0, |b, k| if row[k] > row[b] { k } else { b });
        if Some(best) != prev && best != blank {
            out.push(best);
        }
        prev = Some(best);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_hot_frames(path: &[usize], classes: usize) -> FrameLogits {
        let mut scores = vec![0.0; path.len() * classes];
        for (t, &k) in path.iter().enumerate() {
            scores[t * classes + k] = 10.0;
        }
        FrameLogits::new(scores, path.len(), classes)
    }

    #[test]
    fn single_frame_uniform() {
        let l = FrameLogits::new(vec![0.0, 0.0], 1, 2);
        let loss = ctc_loss(&l, &[0]).unwrap();
        assert!((loss - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn repeated_label_needs_separating_blank() {
        let l = FrameLogits::new(vec![0.0; 6], 2, 3);
        assert!(matches!(
            ctc_loss(&l, &[0, 0]),
            Err(Error::InfeasibleTarget {
                frames: 2,
                required: 3
            })
        ));
        assert!(matches!(ctc_loss(&l, &[]), Err(Error::EmptyTarget)));
        assert!(matches!(ctc_loss(&l, &[2]), Err(Error::ShapeMismatch(_))));
        assert_eq!(required_frames(&[1, 1, 2, 2, 2]), 8);
    }

    #[test]
    fn greedy_collapse_rules() {
        let a = Alphabet::new("ab").unwrap();
        // classes: a=0, b=1, blank=2
        assert_eq!(greedy_decode(&one_hot_frames(&[0, 0, 2, 1], 3), &a), "ab");
        assert_eq!(greedy_decode(&one_hot_frames(&[2, 2, 2], 3), &a), "");
        assert_eq!(greedy_decode(&one_hot_frames(&[0, 2, 0], 3), &a), "aa");
    }

    #[test]
    fn gradient_rows_sum_to_zero() {
        let scores: Vec<f64> = (0..20).map(|i| (i as f64 * 0.7).sin()).collect();
        let l = FrameLogits::new(scores, 5, 4);
        let (_, g) = ctc_loss_and_grad(&l, &[0, 2]).unwrap();
        for t in 0..5 {
            let s: f64 = g[t * 4..(t + 1) * 4].iter().sum();
            assert!(s.abs() < 1e-12);
        }
    }
}
