//! `wordgan`: toy corpora, training, synthesis, evaluation and experiments.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use wordgan::checkpoint::{load_generator, load_recognizer};
use wordgan::config::{Arm, TrainConfig};
use wordgan::data::{
    conform, load_lexicon, make_toy_corpus, random_lexicon, DatasetManifest, Split, ToyCorpusConfig,
};
use wordgan::image::compose_sheet;
use wordgan::metrics::{edit_distance, normalized_distance};
use wordgan::training::{
    evaluate, run_alpha_ablation, run_htr_experiment, run_training, write_htr_table, Datasets,
    HtrData,
};
use wordgan::{sample_noise, Alphabet, ErrorClass, LabeledSample, WordImage};

#[derive(Parser)]
#[command(
    name = "wordgan",
    version,
    about = "Handwritten word synthesis and recognition"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a procedural handwriting corpus with a train/val/test manifest.
    ToyCorpus(ToyArgs),
    /// Train generator, critic and recognizer.
    Train(TrainArgs),
    /// Render words with a trained generator.
    Synth(SynthArgs),
    /// Score a recognizer checkpoint on a labeled manifest split.
    Eval(EvalArgs),
    /// Train recognizers on real, augmented and synthetic data.
    HtrExperiment(HtrArgs),
    /// Sweep gradient-balancing settings.
    AblateAlpha(ConfigArgs),
}

#[derive(Args, Serialize)]
struct ToyArgs {
    #[arg(long, default_value = "abcde")]
    alphabet: String,
    /// One word per line; random words over the alphabet when omitted.
    #[arg(long)]
    lexicon: Option<PathBuf>,
    #[arg(long, default_value_t = 300)]
    lexicon_size: usize,
    #[arg(long, default_value_t = 2)]
    min_len: usize,
    #[arg(long, default_value_t = 7)]
    max_len: usize,
    #[arg(long, default_value_t = 2000)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 32)]
    img_height: usize,
    #[arg(long, default_value_t = 16)]
    char_width: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct ConfigArgs {
    #[arg(long)]
    config: PathBuf,
    /// Override a config key, e.g. `--set gb.alpha=0.1`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct TrainArgs {
    #[command(flatten)]
    common: ConfigArgs,
    #[arg(long)]
    steps: Option<u64>,
    /// A `ckpt/step_N` directory to continue from.
    #[arg(long)]
    resume: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct HtrArgs {
    #[command(flatten)]
    common: ConfigArgs,
    /// Generator checkpoint for the synthetic arms.
    #[arg(long)]
    generator: Option<PathBuf>,
    /// Comma-separated arms, e.g. `real,real+affine`.
    #[arg(long, value_delimiter = ',')]
    arms: Vec<String>,
}

#[derive(Args, Serialize)]
struct SynthArgs {
    /// Generator checkpoint file.
    #[arg(long)]
    ckpt: PathBuf,
    /// One word per line.
    #[arg(long)]
    words: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 2)]
    styles: usize,
    #[arg(long)]
    out: PathBuf,
    /// Also write all words and styles as one grid image.
    #[arg(long)]
    sheet: bool,
    /// Interpolate between two style seeds, written `A..B`.
    #[arg(long, value_name = "A..B")]
    interpolate: Option<String>,
    /// Rows of each interpolation sheet.
    #[arg(long, default_value_t = 8)]
    steps: usize,
}

#[derive(Args, Serialize)]
struct EvalArgs {
    /// Recognizer checkpoint file.
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value = "test")]
    split: String,
    /// Per-sample CSV; defaults to `eval.csv` next to the checkpoint.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// One-line diagnostic plus exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<wordgan::Error> for Failure {
    fn from(e: wordgan::Error) -> Self {
        let code = match e.class() {
            ErrorClass::Config => 1,
            ErrorClass::Data => 2,
            ErrorClass::Numerical => 3,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn data_error(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> Failure {
    data_error(format!("{}: {e}", path.display()))
}

type CliResult<T = ()> = std::result::Result<T, Failure>;

fn print_effective(what: &str, body: &str) {
    println!("# effective {what}");
    print!("{body}");
    if !body.ends_with('\n') {
        println!();
    }
}

fn dump<T: Serialize>(args: &T) -> String {
    toml::to_string(args).unwrap_or_default()
}

fn load_config(args: &ConfigArgs) -> CliResult<TrainConfig> {
    let mut cfg = TrainConfig::load(&args.config, &args.overrides)?;
    if let Some(out) = &args.out {
        cfg.out_dir = out.clone();
    }
    Ok(cfg)
}

fn read_words(path: &Path) -> CliResult<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    let words: Vec<String> = text
        .lines()
        .map(str::trim)
        .filter(|w| !w.is_empty())
        .map(String::from)
        .collect();
    if words.is_empty() {
        return Err(data_error(format!("{}: no words", path.display())));
    }
    Ok(words)
}

fn cmd_toy(args: &ToyArgs) -> CliResult {
    print_effective("arguments", &dump(args));
    let alphabet = Alphabet::new(&args.alphabet)?;
    let lexicon = match &args.lexicon {
        Some(p) => load_lexicon(p, &alphabet, args.max_len)?,
        None => random_lexicon(
            &alphabet,
            args.lexicon_size,
            args.min_len,
            args.max_len,
            args.seed,
        ),
    };
    let cfg = ToyCorpusConfig {
        n_samples: args.n,
        seed: args.seed,
        img_height: args.img_height,
        char_width: args.char_width,
    };
    let m = make_toy_corpus(&alphabet, &lexicon, &cfg, &args.out)?;
    let lex_path = args.out.join("lexicon.txt");
    fs::write(&lex_path, lexicon.join("\n") + "\n").map_err(|e| io_error(&lex_path, e))?;
    println!(
        "wrote {} images to {} (train {}, val {}, test {})",
        m.len(),
        args.out.display(),
        m.count(Split::Train),
        m.count(Split::Val),
        m.count(Split::Test)
    );
    Ok(())
}

fn cmd_train(args: &TrainArgs) -> CliResult {
    let mut cfg = load_config(&args.common)?;
    if let Some(s) = args.steps {
        cfg.steps = s;
    }
    if let Some(r) = &args.resume {
        cfg.resume_from = Some(r.clone());
    }
    print_effective("config", &cfg.to_toml());
    let data = Datasets::load(&cfg)?;
    let state = run_training(&cfg, &data)?;
    match state.history.last() {
        Some(l) => println!(
            "finished step {}: loss_d_real {:.4} loss_d_fake {:.4} loss_g {:.4} loss_r {:.4}",
            l.step, l.loss_d_real, l.loss_d_fake, l.loss_g, l.loss_r
        ),
        None => println!("no steps run; initial checkpoint written"),
    }
    println!("outputs in {}", cfg.out_dir.display());
    Ok(())
}

fn parse_interpolation(range: &str) -> CliResult<(u64, u64)> {
    let bad = || Failure {
        code: 1,
        message: format!("--interpolate expects A..B with integer seeds, got {range:?}"),
    };
    let (a, b) = range.split_once("..").ok_or_else(bad)?;
    Ok((
        a.trim().parse().map_err(|_| bad())?,
        b.trim().parse().map_err(|_| bad())?,
    ))
}

fn file_stem(word: &str) -> String {
    word.chars()
        .map(|c| if c.is_alphanumeric() { c } else { '_' })
        .collect()
}

fn cmd_synth(args: &SynthArgs) -> CliResult {
    print_effective("arguments", &dump(args));
    let g = load_generator(&args.ckpt)?;
    let words = read_words(&args.words)?;
    for w in &words {
        g.alphabet()
            .check(w)
            .map_err(|e| data_error(format!("word {w:?}: {e}")))?;
    }
    fs::create_dir_all(&args.out).map_err(|e| io_error(&args.out, e))?;
    let save =
        |img: &WordImage, name: String| img.save_png(args.out.join(name)).map_err(Failure::from);

    if let Some(range) = &args.interpolate {
        let (a, b) = parse_interpolation(range)?;
        let za = sample_noise(a, 1, g.shape()).remove(0);
        let zb = sample_noise(b, 1, g.shape()).remove(0);
        for (i, w) in words.iter().enumerate() {
            let rows: Vec<Vec<WordImage>> = g
                .interpolate_styles(w, &za, &zb, args.steps)?
                .into_iter()
                .map(|img| vec![img])
                .collect();
            save(
                &compose_sheet(&rows, 4),
                format!("interp_{i:03}_{}.png", file_stem(w)),
            )?;
        }
        println!(
            "wrote {} interpolation sheets to {}",
            words.len(),
            args.out.display()
        );
        return Ok(());
    }

    let styles = sample_noise(args.seed, args.styles, g.shape());
    let mut grid = vec![Vec::with_capacity(words.len()); styles.len()];
    for (i, w) in words.iter().enumerate() {
        for (s, z) in styles.iter().enumerate() {
            let img = g.generate(w, z)?;
            save(&img, format!("{i:03}_{}_style{s}.png", file_stem(w)))?;
            grid[s].push(img);
        }
    }
    if args.sheet {
        save(&compose_sheet(&grid, 4), "sheet.png".into())?;
    }
    println!(
        "wrote {} images to {}",
        words.len() * styles.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_eval(args: &EvalArgs) -> CliResult {
    print_effective("arguments", &dump(args));
    let (r, alphabet) = load_recognizer(&args.ckpt)?;
    let split: Split = args.split.parse()?;
    let manifest = DatasetManifest::load(&args.manifest)?.split(split);
    if manifest.is_empty() {
        return Err(data_error(format!(
            "{}: no {split} rows",
            args.manifest.display()
        )));
    }
    let mut samples = Vec::with_capacity(manifest.len());
    for e in &manifest.entries {
        let Some(truth) = &e.transcript else {
            return Err(data_error(format!(
                "{}: refusing unlabeled row {}",
                args.manifest.display(),
                e.image_path.display()
            )));
        };
        alphabet.check(truth)?;
        let raw = WordImage::load_png(manifest.resolve(e))?;
        samples.push(LabeledSample {
            image: conform(&raw, r.img_height(), None),
            transcript: truth.clone(),
            source_id: e.image_path.display().to_string(),
        });
    }
    let report = evaluate(&r, &alphabet, &samples)?;
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| args.ckpt.with_file_name("eval.csv"));
    let mut w = csv::Writer::from_path(&out).map_err(|e| io_error(&out, e))?;
    w.write_record(["source", "truth", "prediction", "distance", "ned"])
        .map_err(|e| io_error(&out, e))?;
    for (s, p) in samples.iter().zip(&report.predictions) {
        let d = edit_distance(p, &s.transcript);
        let n = normalized_distance(p, &s.transcript).unwrap_or(f64::NAN);
        w.write_record([
            &s.source_id,
            &s.transcript,
            p,
            &d.to_string(),
            &n.to_string(),
        ])
        .map_err(|e| io_error(&out, e))?;
    }
    w.flush().map_err(|e| io_error(&out, e))?;
    drop(w);
    let summary = format!(
        "# summary: n={} wer={} ned={}\n",
        samples.len(),
        report.wer,
        report.ned
    );
    let mut text = fs::read_to_string(&out).map_err(|e| io_error(&out, e))?;
    text.push_str(&summary);
    fs::write(&out, text).map_err(|e| io_error(&out, e))?;
    println!(
        "WER {:.4}  NED {:.4}  ({} words)",
        report.wer,
        report.ned,
        samples.len()
    );
    println!("per-sample results in {}", out.display());
    Ok(())
}

fn cmd_htr(args: &HtrArgs) -> CliResult {
    let mut cfg = load_config(&args.common)?;
    if let Some(g) = &args.generator {
        cfg.htr.generator_checkpoint = Some(g.clone());
    }
    if !args.arms.is_empty() {
        cfg.htr.arms = args
            .arms
            .iter()
            .map(|a| a.trim().parse::<Arm>())
            .collect::<wordgan::Result<_>>()?;
    }
    print_effective("config", &cfg.to_toml());
    let data = Datasets::load(&cfg)?;
    let htr = HtrData::load(&cfg)?;
    let generator = match &cfg.htr.generator_checkpoint {
        Some(p) if cfg.htr.arms.iter().any(|a| a.needs_generator()) => Some(load_generator(p)?),
        _ => None,
    };
    let results = run_htr_experiment(&cfg.htr.arms, &cfg, &htr, &data.lexicon, generator.as_ref())?;
    fs::create_dir_all(&cfg.out_dir).map_err(|e| io_error(&cfg.out_dir, e))?;
    let table = cfg.out_dir.join("htr.csv");
    write_htr_table(&table, &results)?;
    println!("{:<28} {:>8} {:>8}", "arm", "WER", "NED");
    for r in &results {
        println!("{:<28} {:>8.4} {:>8.4}", r.arm.name(), r.wer, r.ned);
    }
    println!("table written to {}", table.display());
    Ok(())
}

fn cmd_ablate(args: &ConfigArgs) -> CliResult {
    let cfg = load_config(args)?;
    print_effective("config", &cfg.to_toml());
    let data = Datasets::load(&cfg)?;
    let htr = HtrData::load(&cfg)?;
    let report = run_alpha_ablation(&cfg, &data, &htr)?;
    println!("{:<20} {:>8} {:>8}  sheet", "cell", "WER", "NED");
    for c in &report.cells {
        println!(
            "{:<20} {:>8.4} {:>8.4}  {}",
            c.name,
            c.wer,
            c.ned,
            c.sheet.display()
        );
    }
    println!("table written to {}", report.table.display());
    Ok(())
}

fn run(cli: Cli) -> CliResult {
    match &cli.command {
        Command::ToyCorpus(a) => cmd_toy(a),
        Command::Train(a) => cmd_train(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Eval(a) => cmd_eval(a),
        Command::HtrExperiment(a) => cmd_htr(a),
        Command::AblateAlpha(a) => cmd_ablate(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
