use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn wordgan(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wordgan"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const CONFIG: &str = r#"
alphabet = "abcde"
manifest = "corpus/manifest.tsv"
out_dir = "run"
steps = 2
batch_size = 2
checkpoint_every = 1
sample_every = 2

[htr]
steps = 4
eval_every = 2
batch_size = 4
finetune_steps = 2
synthetic_count = 6

[ablation]
modes = ["none"]
alphas = [1.0]
extremes = false
steps = 1
htr_steps = 2
synthetic_count = 2
"#;

/// A 50-word corpus plus config, and a trained two-step run.
fn workspace() -> tempfile::TempDir {
    let tmp = tempfile::tempdir().unwrap();
    let o = wordgan(
        tmp.path(),
        &[
            "toy-corpus",
            "--out",
            "corpus",
            "--n",
            "50",
            "--seed",
            "2",
            "--max-len",
            "5",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    fs::write(tmp.path().join("cfg.toml"), CONFIG).unwrap();
    let o = wordgan(tmp.path(), &["train", "--config", "cfg.toml"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    tmp
}

#[test]
fn help_and_usage_errors() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&wordgan(tmp.path(), &["--help"])), 0);
    assert_eq!(code(&wordgan(tmp.path(), &["--version"])), 0);
    assert_eq!(code(&wordgan(tmp.path(), &["frobnicate"])), 1);
    assert_eq!(code(&wordgan(tmp.path(), &["train"])), 1);
    let o = wordgan(tmp.path(), &["train", "--config", "missing.toml"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("missing.toml"));
}

#[test]
fn toy_corpus_writes_split_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let o = wordgan(tmp.path(), &["toy-corpus", "--out", "c", "--n", "50"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("train 40, val 5, test 5"));
    let manifest = fs::read_to_string(tmp.path().join("c/manifest.tsv")).unwrap();
    assert_eq!(manifest.lines().count(), 50);
    assert!(tmp.path().join("c/images/00049.png").is_file());
    assert!(tmp.path().join("c/lexicon.txt").is_file());
}

#[test]
fn train_writes_checkpoints_and_dumps_config() {
    let tmp = workspace();
    let run = tmp.path().join("run");
    for f in [
        "config.toml",
        "metrics.csv",
        "ckpt/step_0/G",
        "ckpt/step_2/R",
        "samples/step_2.png",
    ] {
        assert!(run.join(f).is_file(), "{f} missing");
    }
    let o = wordgan(
        tmp.path(),
        &[
            "train", "--config", "cfg.toml", "--set", "seed=9", "--steps", "1", "--out", "run9",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("# effective config"));
    assert!(out.contains("seed = 9"));
    assert!(out.contains("steps = 1"));

    let o = wordgan(
        tmp.path(),
        &["train", "--config", "cfg.toml", "--set", "gb.alpha=-1"],
    );
    assert_eq!(code(&o), 1);
    let o = wordgan(
        tmp.path(),
        &["train", "--config", "cfg.toml", "--set", "no_such_key=1"],
    );
    assert_eq!(code(&o), 1);

    let o = wordgan(
        tmp.path(),
        &[
            "train",
            "--config",
            "cfg.toml",
            "--steps",
            "3",
            "--out",
            "run",
            "--resume",
            "run/ckpt/step_2",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(
        fs::read_to_string(run.join("metrics.csv"))
            .unwrap()
            .lines()
            .count(),
        4
    );
}

#[test]
fn synth_renders_words_and_rejects_bad_input() {
    let tmp = workspace();
    fs::write(tmp.path().join("words.txt"), "abc\nde\n").unwrap();
    let o = wordgan(
        tmp.path(),
        &[
            "synth",
            "--ckpt",
            "run/ckpt/step_2/G",
            "--words",
            "words.txt",
            "--out",
            "s",
            "--styles",
            "3",
            "--sheet",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let pngs = fs::read_dir(tmp.path().join("s")).unwrap().count();
    assert_eq!(pngs, 2 * 3 + 1);

    let o = wordgan(
        tmp.path(),
        &[
            "synth",
            "--ckpt",
            "run/ckpt/step_2/G",
            "--words",
            "words.txt",
            "--out",
            "i",
            "--interpolate",
            "1..5",
            "--steps",
            "4",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(fs::read_dir(tmp.path().join("i")).unwrap().count(), 2);

    fs::write(tmp.path().join("bad.txt"), "abc\nabz\n").unwrap();
    let o = wordgan(
        tmp.path(),
        &[
            "synth",
            "--ckpt",
            "run/ckpt/step_2/G",
            "--words",
            "bad.txt",
            "--out",
            "b",
        ],
    );
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("\"abz\""));
    assert!(stderr(&o).contains("position 2"));

    fs::write(tmp.path().join("empty.txt"), "\n").unwrap();
    let o = wordgan(
        tmp.path(),
        &[
            "synth",
            "--ckpt",
            "run/ckpt/step_2/G",
            "--words",
            "empty.txt",
            "--out",
            "e",
        ],
    );
    assert_eq!(code(&o), 2);

    let o = wordgan(
        tmp.path(),
        &[
            "synth",
            "--ckpt",
            "run/ckpt/step_9/G",
            "--words",
            "words.txt",
            "--out",
            "m",
        ],
    );
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("missing checkpoint"));
}

#[test]
fn eval_writes_one_row_per_word() {
    let tmp = workspace();
    let o = wordgan(
        tmp.path(),
        &[
            "eval",
            "--ckpt",
            "run/ckpt/step_2/R",
            "--manifest",
            "corpus/manifest.tsv",
            "--out",
            "ev.csv",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("WER"));
    let text = fs::read_to_string(tmp.path().join("ev.csv")).unwrap();
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    assert_eq!(
        reader.headers().unwrap().iter().collect::<Vec<_>>(),
        ["source", "truth", "prediction", "distance", "ned"]
    );
    assert_eq!(reader.records().count(), 5);
    assert!(text.lines().last().unwrap().starts_with("# summary: n=5"));

    fs::write(
        tmp.path().join("corpus/unl.tsv"),
        "images/00000.png\t\ttest\n",
    )
    .unwrap();
    let o = wordgan(
        tmp.path(),
        &[
            "eval",
            "--ckpt",
            "run/ckpt/step_2/R",
            "--manifest",
            "corpus/unl.tsv",
            "--out",
            "u.csv",
        ],
    );
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("unlabeled"));
}

#[test]
fn experiments_write_tables() {
    let tmp = workspace();
    let o = wordgan(
        tmp.path(),
        &[
            "htr-experiment",
            "--config",
            "cfg.toml",
            "--arms",
            "real,real+synthetic",
        ],
    );
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(stderr(&o).contains("missing checkpoint"));

    let o = wordgan(
        tmp.path(),
        &[
            "htr-experiment",
            "--config",
            "cfg.toml",
            "--generator",
            "run/ckpt/step_2/G",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let table = fs::read_to_string(tmp.path().join("run/htr.csv")).unwrap();
    assert_eq!(table.lines().count(), 5);
    assert!(table.contains("real+synthetic->finetune,"));

    let o = wordgan(
        tmp.path(),
        &["ablate-alpha", "--config", "cfg.toml", "--out", "abl"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(tmp
        .path()
        .join("abl/ablation/sheets/none_alpha1.png")
        .is_file());
    assert_eq!(
        fs::read_to_string(tmp.path().join("abl/ablation/ablation.csv"))
            .unwrap()
            .lines()
            .count(),
        2
    );
}
