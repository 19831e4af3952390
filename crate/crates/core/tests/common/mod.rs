#![allow(dead_code)]

use rand::Rng;
use wordgan::nn::{ParamId, ParamStore};
use wordgan::noise::rng_from_seed;

pub const FD_STEP: f64 = 1e-5;

/// Norm-wise relative error between two gradient vectors.
pub fn rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic
        .iter()
        .zip(numeric)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let na: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nb: f64 = numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
    diff / na.max(nb).max(1e-300)
}

/// Central difference of `f` along coordinate `i` of `x`.
pub fn central_diff(x: &mut [f64], i: usize, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    let orig = x[i];
    x[i] = orig + FD_STEP;
    let up = f(x);
    x[i] = orig - FD_STEP;
    let down = f(x);
    x[i] = orig;
    (up - down) / (2.0 * FD_STEP)
}

/// Picks up to `per_param` coordinates from every parameter tensor.
pub fn sample_coords(store: &ParamStore, per_param: usize, seed: u64) -> Vec<(ParamId, usize)> {
    let mut rng = rng_from_seed(seed);
    let mut out = Vec::new();
    for (i, p) in store.params().iter().enumerate() {
        let id = store.find(&p.name).unwrap();
        assert_eq!(format!("{id:?}"), format!("ParamId({i})"));
        let n = p.data.len();
        if n <= per_param {
            out.extend((0..n).map(|j| (id, j)));
        } else {
            out.extend((0..per_param).map(|_| (id, rng.random_range(0..n))));
        }
    }
    out
}

/// Central difference with respect to one stored parameter.
pub fn param_diff<S>(
    state: &mut S,
    store: impl Fn(&mut S) -> &mut ParamStore,
    id: ParamId,
    j: usize,
    f: impl Fn(&S) -> f64,
) -> f64 {
    let orig = store(state).get(id)[j];
    store(state).get_mut(id)[j] = orig + FD_STEP;
    let up = f(state);
    store(state).get_mut(id)[j] = orig - FD_STEP;
    let down = f(state);
    store(state).get_mut(id)[j] = orig;
    (up - down) / (2.0 * FD_STEP)
}

pub fn random_vec(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng_from_seed(seed);
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Adds small noise to every parameter so no bias sits exactly at a ReLU
/// kink (zero-initialized biases otherwise produce exact zeros).
pub fn jitter(store: &mut ParamStore, seed: u64) {
    let mut rng = rng_from_seed(seed);
    for p in store.params_mut() {
        for v in &mut p.data {
            *v += rng.random_range(-0.05..0.05);
        }
    }
}

/// Probability of `target` under per-frame softmax of `scores` (frames x
/// classes, blank last), summed over every class path that collapses to it.
pub fn ctc_brute_force_prob(
    scores: &[f64],
    frames: usize,
    classes: usize,
    target: &[usize],
) -> f64 {
    let blank = classes - 1;
    let probs: Vec<f64> = scores
        .chunks(classes)
        .flat_map(|row| {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = row.iter().map(|v| (v - m).exp()).collect();
            let s: f64 = e.iter().sum();
            e.into_iter().map(move |v| v / s)
        })
        .collect();
    let mut path = vec![0usize; frames];
    let mut total = 0.0;
    loop {
        let mut collapsed = Vec::new();
        let mut prev = None;
        for &k in &path {
            if Some(k) != prev && k != blank {
                collapsed.push(k);
            }
            prev = Some(k);
        }
        if collapsed == target {
            total += path
                .iter()
                .enumerate()
                .map(|(t, &k)| probs[t * classes + k])
                .product::<f64>();
        }
        // odometer increment
        let mut i = 0;
        loop {
            if i == frames {
                return total;
            }
            path[i] += 1;
            if path[i] < classes {
                break;
            }
            path[i] = 0;
            i += 1;
        }
    }
}

/// Shortest edit script by breadth-first search over (i, j) prefix states,
/// expanding insert, delete, substitute and match moves.
pub fn edit_distance_search(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut seen = vec![vec![false; b.len() + 1]; a.len() + 1];
    let mut frontier = vec![(0usize, 0usize)];
    seen[0][0] = true;
    let mut cost = 0;
    loop {
        // free matches first so each frontier holds states of equal cost
        let mut closed = Vec::new();
        while let Some((i, j)) = frontier.pop() {
            closed.push((i, j));
            if i < a.len() && j < b.len() && a[i] == b[j] && !seen[i + 1][j + 1] {
                seen[i + 1][j + 1] = true;
                frontier.push((i + 1, j + 1));
            }
        }
        if seen[a.len()][b.len()] {
            return cost;
        }
        let mut next = Vec::new();
        for (i, j) in closed {
            for (ni, nj) in [(i + 1, j), (i, j + 1), (i + 1, j + 1)] {
                if ni <= a.len() && nj <= b.len() && !seen[ni][nj] {
                    seen[ni][nj] = true;
                    next.push((ni, nj));
                }
            }
        }
        frontier = next;
        cost += 1;
    }
}

pub fn random_string(rng: &mut impl Rng, symbols: &[char], max_len: usize) -> String {
    let n = rng.random_range(0..=max_len);
    (0..n)
        .map(|_| symbols[rng.random_range(0..symbols.len())])
        .collect()
}

pub const TOY_ALPHABET: &str = "abcde";

/// Renders a toy corpus of `n` words over [`TOY_ALPHABET`] into `dir`.
pub fn toy_corpus(dir: &std::path::Path, n: usize, seed: u64) -> wordgan::data::DatasetManifest {
    use wordgan::data::{make_toy_corpus, random_lexicon, ToyCorpusConfig};
    let alphabet = wordgan::Alphabet::new(TOY_ALPHABET).unwrap();
    let lexicon = random_lexicon(&alphabet, 200, 2, 6, seed);
    let cfg = ToyCorpusConfig {
        n_samples: n,
        seed,
        img_height: 32,
        char_width: 16,
    };
    make_toy_corpus(&alphabet, &lexicon, &cfg, dir).unwrap()
}

/// Desk-profile training config over a corpus written by [`toy_corpus`].
pub fn toy_config(corpus: &std::path::Path, out: &std::path::Path) -> wordgan::config::TrainConfig {
    wordgan::config::TrainConfig {
        alphabet: TOY_ALPHABET.into(),
        manifest: corpus.join("manifest.tsv"),
        out_dir: out.to_path_buf(),
        batch_size: 4,
        steps: 4,
        checkpoint_every: 2,
        sample_every: 2,
        ..Default::default()
    }
}

pub mod gradcheck {
    //! Finite-difference comparisons on tiny networks. Each function returns
    //! `(label, relative error)` pairs.

    use super::*;
    use wordgan::ctc::{ctc_loss, ctc_loss_and_grad, FrameLogits};
    use wordgan::discriminator::Discriminator;
    use wordgan::recognizer::{Recognizer, RecognizerConfig};
    use wordgan::{sample_noise, Alphabet, Generator, ModelShape, NormMode, WordImage};

    pub fn generator(mode: NormMode) -> Vec<(String, f64)> {
        let mut g =
            Generator::new(ModelShape::tiny(), Alphabet::new("abc").unwrap(), mode, 11).unwrap();
        jitter(g.params_mut(), 1);
        let z = sample_noise(3, 1, g.shape()).remove(0);
        let text = "abab";
        let (img, trace) = g.forward(text, &z).unwrap();
        let w = random_vec(img.pixels.len(), 99);
        let loss = |g: &Generator| {
            let img = g.generate(text, &z).unwrap();
            img.pixels.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>()
        };
        let mut grads = g.params().zero_grads();
        g.backward(&trace, &w, &mut grads);
        let coords = sample_coords(g.params(), 12, 5);
        let analytic: Vec<f64> = coords.iter().map(|&(id, j)| grads.get(id)[j]).collect();
        let numeric: Vec<f64> = coords
            .iter()
            .map(|&(id, j)| param_diff(&mut g, |g| g.params_mut(), id, j, loss))
            .collect();
        // the filter for 'c' is never selected
        let unused_zero = grads.get(g.filter_id(2)).iter().all(|&v| v == 0.0);
        vec![
            (format!("G {mode:?} params"), rel_error(&analytic, &numeric)),
            (
                format!("G {mode:?} unused filter grad"),
                if unused_zero { 0.0 } else { f64::INFINITY },
            ),
        ]
    }

    pub fn discriminator() -> Vec<(String, f64)> {
        let mut d = Discriminator::new(&ModelShape::tiny(), 4).unwrap();
        jitter(d.params_mut(), 2);
        let img = WordImage::new(16, 32, random_vec(16 * 32, 8));
        let (_, trace) = d.forward(&img).unwrap();
        let mut grads = d.params().zero_grads();
        let gimg = d.backward(&trace, 1.0, Some(&mut grads));
        let mut pixels = img.pixels.clone();
        let numeric: Vec<f64> = (0..pixels.len())
            .map(|i| {
                central_diff(&mut pixels, i, |p| {
                    d.score(&WordImage::new(16, 32, p.to_vec())).unwrap().score
                })
            })
            .collect();
        let image_err = rel_error(&gimg, &numeric);
        let coords = sample_coords(d.params(), 12, 6);
        let analytic: Vec<f64> = coords.iter().map(|&(id, j)| grads.get(id)[j]).collect();
        let numeric: Vec<f64> = coords
            .iter()
            .map(|&(id, j)| {
                param_diff(
                    &mut d,
                    |d| d.params_mut(),
                    id,
                    j,
                    |d| d.score(&img).unwrap().score,
                )
            })
            .collect();
        vec![
            ("D image".into(), image_err),
            ("D params".into(), rel_error(&analytic, &numeric)),
        ]
    }

    pub fn recognizer() -> Vec<(String, f64)> {
        let alphabet = Alphabet::new("ab").unwrap();
        let cfg = RecognizerConfig {
            channels: [2, 3, 4, 4, 5, 5],
        };
        let mut r = Recognizer::new(16, cfg, &alphabet, 7).unwrap();
        jitter(r.params_mut(), 3);
        let img = WordImage::new(16, 16, random_vec(256, 12));
        let target = [0, 1];
        let mut grads = r.params().zero_grads();
        let (_, gimg) = r
            .loss_and_image_gradient(&img, &target, Some(&mut grads))
            .unwrap();
        let loss = |r: &Recognizer, px: &[f64]| {
            ctc_loss(
                &r.recognize(&WordImage::new(16, 16, px.to_vec())).unwrap(),
                &target,
            )
            .unwrap()
        };
        let mut pixels = img.pixels.clone();
        let numeric: Vec<f64> = (0..pixels.len())
            .map(|i| central_diff(&mut pixels, i, |p| loss(&r, p)))
            .collect();
        let image_err = rel_error(&gimg, &numeric);
        let coords = sample_coords(r.params(), 12, 3);
        let analytic: Vec<f64> = coords.iter().map(|&(id, j)| grads.get(id)[j]).collect();
        let numeric: Vec<f64> = coords
            .iter()
            .map(|&(id, j)| param_diff(&mut r, |r| r.params_mut(), id, j, |r| loss(r, &img.pixels)))
            .collect();
        vec![
            ("R image".into(), image_err),
            ("R params".into(), rel_error(&analytic, &numeric)),
        ]
    }

    pub fn ctc_logits() -> f64 {
        let scores: Vec<f64> = random_vec(6 * 4, 21).iter().map(|v| 3.0 * v).collect();
        let target = [1, 1, 0];
        let logits = FrameLogits::new(scores.clone(), 6, 4);
        let (_, g) = ctc_loss_and_grad(&logits, &target).unwrap();
        let mut s = scores;
        let numeric: Vec<f64> = (0..s.len())
            .map(|i| {
                central_diff(&mut s, i, |v| {
                    ctc_loss(&FrameLogits::new(v.to_vec(), 6, 4), &target).unwrap()
                })
            })
            .collect();
        rel_error(&g, &numeric)
    }
}
