//! Manifest ingestion and the procedural toy corpus.

mod common;

use std::fs;
use std::path::Path;

use common::*;
use wordgan::data::{
    ingest, ingest_labeled, ingest_unlabeled, load_lexicon, DatasetManifest, Geometry, Sample,
    Split,
};
use wordgan::{Alphabet, Error, ErrorClass, WordImage};

const GEOMETRY: Geometry = Geometry {
    img_height: 32,
    char_width: 16,
};

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for sub in ["", "images"] {
        let d = dir.join(sub);
        let mut names: Vec<_> = fs::read_dir(&d)
            .unwrap()
            .map(|e| e.unwrap().path())
            .filter(|p| p.is_file())
            .collect();
        names.sort();
        out.extend(names.into_iter().map(|p| {
            (
                p.display()
                    .to_string()
                    .replace(&dir.display().to_string(), ""),
                fs::read(&p).unwrap(),
            )
        }));
    }
    out
}

#[test]
fn toy_corpus_splits_and_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b, c) = (
        tmp.path().join("a"),
        tmp.path().join("b"),
        tmp.path().join("c"),
    );
    let m = toy_corpus(&a, 100, 3);
    assert_eq!(
        (
            m.count(Split::Train),
            m.count(Split::Val),
            m.count(Split::Test)
        ),
        (80, 10, 10)
    );
    assert_eq!(m.len(), 100);
    m.check_paths().unwrap();
    let loaded = DatasetManifest::load(a.join("manifest.tsv")).unwrap();
    assert_eq!(loaded.entries, m.entries);
    toy_corpus(&b, 100, 3);
    assert_eq!(files(&a), files(&b));
    toy_corpus(&c, 100, 4);
    assert_ne!(files(&a), files(&c));
    let alphabet = Alphabet::new(TOY_ALPHABET).unwrap();
    for e in &m.entries {
        alphabet.check(e.transcript.as_deref().unwrap()).unwrap();
    }
}

#[test]
fn ingestion_scales_to_height_and_keeps_aspect() {
    let tmp = tempfile::tempdir().unwrap();
    WordImage::filled(64, 128, -0.2)
        .save_png(tmp.path().join("big.png"))
        .unwrap();
    WordImage::filled(40, 100, 0.6)
        .save_png(tmp.path().join("meet.png"))
        .unwrap();
    let tsv = "big.png\t\ttrain\nmeet.png\tmeet\ttrain\n";
    fs::write(tmp.path().join("m.tsv"), tsv).unwrap();
    let m = DatasetManifest::load(tmp.path().join("m.tsv")).unwrap();
    let alphabet = Alphabet::lowercase();

    let samples = ingest(&m, &alphabet, GEOMETRY, true).unwrap();
    match &samples[0] {
        Sample::Unlabeled(s) => assert_eq!((s.image.height, s.image.width), (32, 64)),
        other => panic!("expected unlabeled, got {other:?}"),
    }
    match &samples[1] {
        Sample::Labeled(s) => {
            assert_eq!((s.image.height, s.image.width), (32, 64));
            assert_eq!(s.transcript, "meet");
        }
        other => panic!("expected labeled, got {other:?}"),
    }
    let plain = ingest_labeled(&m, &alphabet, GEOMETRY, false).unwrap();
    assert_eq!(plain.len(), 1);
    assert_eq!(plain[0].image.width, 80);
    // grey levels survive the 8-bit round trip and the resize
    assert!(plain[0].image.pixels.iter().all(|v| (v - 0.6).abs() < 0.01));
}

#[test]
fn unlabeled_ingestion_ignores_transcripts() {
    let tmp = tempfile::tempdir().unwrap();
    WordImage::filled(32, 48, 0.0)
        .save_png(tmp.path().join("x.png"))
        .unwrap();
    fs::write(
        tmp.path().join("m.tsv"),
        "x.png\t@@ not even an alphabet ##\ttrain\n",
    )
    .unwrap();
    let m = DatasetManifest::load(tmp.path().join("m.tsv")).unwrap();
    let u = ingest_unlabeled(&m, 32).unwrap();
    assert_eq!(u.len(), 1);
    assert_eq!(u[0].image.width, 48);
    // the same row is rejected when read as a label
    let err = ingest_labeled(&m, &Alphabet::lowercase(), GEOMETRY, true).unwrap_err();
    assert!(matches!(
        err,
        Error::UnknownCharacter {
            position: 0,
            ch: '@'
        }
    ));
    assert_eq!(err.class(), ErrorClass::Data);
}

#[test]
fn missing_images_and_bad_rows_are_data_errors() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("m.tsv"), "nope.png\tab\ttest\n").unwrap();
    let m = DatasetManifest::load(tmp.path().join("m.tsv")).unwrap();
    let err = m.check_paths().unwrap_err();
    assert!(matches!(err, Error::UnreadableImage { .. }));
    assert_eq!(err.class(), ErrorClass::Data);

    for bad in [
        "a.png\tab\n",
        "a.png\tab\tholdout\n",
        "a.png\tab\ttrain\na.png\tcd\ttest\n",
    ] {
        let err = DatasetManifest::parse(bad, tmp.path().into()).unwrap_err();
        assert!(matches!(err, Error::Manifest(_)), "{bad:?}: {err}");
    }
    let err = DatasetManifest::load(tmp.path().join("absent.tsv")).unwrap_err();
    assert!(err.to_string().contains("absent.tsv"));
}

#[test]
fn lexicon_file_is_filtered() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path().join("lex.txt");
    fs::write(&p, "abc\n\nabz\nabcdeabcde\nde\n").unwrap();
    let lex = load_lexicon(&p, &Alphabet::new(TOY_ALPHABET).unwrap(), 6).unwrap();
    assert_eq!(lex, ["abc", "de"]);
    fs::write(&p, "zzz\n").unwrap();
    assert_eq!(
        load_lexicon(&p, &Alphabet::new(TOY_ALPHABET).unwrap(), 6)
            .unwrap_err()
            .class(),
        ErrorClass::Config
    );
}
