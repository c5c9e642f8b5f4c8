//! `disfl`: generate corpora, train, tag, clean, evaluate and inspect.

use std::fs;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use disfluency::corpus::{
    label_frequencies, read_corpus, tag_counts, write_corpus, write_jsonl, Corpus, Speaker, Token,
};
use disfluency::metrics::{evaluate, ConstantTagger, EvalReport, MetricsError, RmMatch};
use disfluency::nn::{Hyperparams, Model, NnError};
use disfluency::synthgen::{generate_corpus, phenomenon_rates, GeneratorConfig, Preset};
use disfluency::tagset::{clean_with_tags, sanitize_tags, Tag};
use disfluency::trainer::{train_with_progress, TrainConfig, TrainError};

#[derive(Parser)]
#[command(name = "disfl", version, about = "Incremental disfluency detection toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic disfluent dialogue corpus.
    Generate(GenerateArgs),
    /// Train a tagger.
    Train(TrainArgs),
    /// Tag a corpus, or a token stream from stdin. Tags are the raw
    /// predictions and need not resolve into structures.
    Tag(TagArgs),
    /// Remove predicted disfluencies from a corpus.
    Clean(CleanArgs),
    /// Score a tagger on a gold corpus.
    Eval(EvalArgs),
    /// Print label and phenomenon statistics of a corpus.
    Inspect(InspectArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// JSON generator configuration.
    #[arg(long, conflicts_with_all = ["preset", "dialogues", "p_hesitation", "p_correction", "p_restart", "seed"])]
    config: Option<PathBuf>,
    /// hesitations, pp-restarts, cl-restarts, corrections or mixed.
    #[arg(long, conflicts_with_all = ["p_hesitation", "p_correction", "p_restart"])]
    preset: Option<String>,
    #[arg(long)]
    dialogues: Option<usize>,
    #[arg(long)]
    p_hesitation: Option<f64>,
    #[arg(long)]
    p_correction: Option<f64>,
    #[arg(long)]
    p_restart: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, or a `.jsonl` file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    dev: PathBuf,
    /// JSON hyperparameters; missing fields take their defaults.
    #[arg(long)]
    hyper: Option<PathBuf>,
    /// JSON training configuration; missing fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Model file to write.
    #[arg(long)]
    out: PathBuf,
    /// Training report; defaults to the model path with `.report.json`.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Seeds both initialization and shuffling.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    lr_decay: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    /// Cap on the global L2 norm of each batch gradient.
    #[arg(long)]
    clip_norm: Option<f64>,
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct TagArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long = "in", required_unless_present = "stream", conflicts_with = "stream")]
    input: Option<PathBuf>,
    #[arg(long, required_unless_present = "stream", conflicts_with = "stream")]
    out: Option<PathBuf>,
    /// Read one `word|POS` token per line from stdin and print its tag at
    /// once; a blank line ends the utterance.
    #[arg(long)]
    stream: bool,
}

#[derive(Args)]
struct CleanArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long, required_unless_present = "baseline", conflicts_with = "baseline")]
    model: Option<PathBuf>,
    /// Score a constant-fluent tagger instead of a model.
    #[arg(long, value_parser = ["fluent"])]
    baseline: Option<String>,
    #[arg(long)]
    test: PathBuf,
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, default_value = "rm-only", value_parser = ["rm-only", "strict"])]
    rm_match: String,
}

#[derive(Args)]
struct InspectArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Also print per-phenomenon turn percentages and corpus size.
    #[arg(long)]
    stats: bool,
}

enum Failure {
    Usage(String),
    Data(String),
    Numeric(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Numeric(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Numeric(m) => m,
        }
    }
}

fn data(e: impl std::fmt::Display) -> Failure {
    Failure::Data(e.to_string())
}

impl From<NnError> for Failure {
    fn from(e: NnError) -> Self {
        match e {
            NnError::NonFinite { .. } => Failure::Numeric(e.to_string()),
            other => data(other),
        }
    }
}

impl From<MetricsError> for Failure {
    fn from(e: MetricsError) -> Self {
        match e {
            MetricsError::Model(n) => n.into(),
            other => data(other),
        }
    }
}

impl From<TrainError> for Failure {
    fn from(e: TrainError) -> Self {
        if e.is_numeric() {
            Failure::Numeric(e.to_string())
        } else {
            data(e)
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = fs::read_to_string(path).map_err(|e| data(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| data(format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| data(format!("{}: {e}", path.display())))
}

fn load_corpus(path: &Path) -> Result<Corpus, Failure> {
    read_corpus(path).map_err(data)
}

/// Writes a directory corpus, or bare JSONL when `path` ends in `.jsonl`.
fn save_corpus(corpus: &Corpus, path: &Path) -> Result<(), Failure> {
    if path.extension().is_some_and(|e| e == "jsonl") {
        let file = fs::File::create(path).map_err(|e| data(format!("{}: {e}", path.display())))?;
        let mut w = io::BufWriter::new(file);
        write_jsonl(&corpus.dialogues, &mut w)
            .and_then(|_| w.flush())
            .map_err(|e| data(format!("{}: {e}", path.display())))
    } else {
        write_corpus(corpus, path).map_err(data)
    }
}

fn load_model(path: &Path) -> Result<Model, Failure> {
    Model::load(path).map_err(data)
}

fn generate(args: GenerateArgs) -> Result<(), Failure> {
    let cfg = if let Some(path) = &args.config {
        read_json::<GeneratorConfig>(path)?
    } else {
        let n = args.dialogues.unwrap_or(GeneratorConfig::default().n_dialogues);
        let seed = args.seed.unwrap_or(0);
        let mut cfg = match &args.preset {
            Some(name) => Preset::parse(name).map_err(|e| Failure::Usage(e.to_string()))?.config(n, seed),
            None => GeneratorConfig {
                n_dialogues: n,
                seed,
                ..GeneratorConfig::default()
            },
        };
        if let Some(p) = args.p_hesitation {
            cfg.p_hesitation = p;
        }
        if let Some(p) = args.p_correction {
            cfg.p_correction = p;
        }
        if let Some(p) = args.p_restart {
            cfg.p_restart = p;
        }
        cfg
    };
    let corpus = generate_corpus(&cfg).map_err(|e| Failure::Usage(e.to_string()))?;
    save_corpus(&corpus, &args.out)?;
    println!(
        "wrote {} dialogues ({} tokens) to {} [seed {}, config {}]",
        corpus.dialogues.len(),
        corpus.num_tokens(),
        args.out.display(),
        cfg.seed,
        &cfg.hash()[..12]
    );
    Ok(())
}

fn train(args: TrainArgs) -> Result<(), Failure> {
    let train = load_corpus(&args.train)?;
    let dev = load_corpus(&args.dev)?;
    let mut hyper: Hyperparams = match &args.hyper {
        Some(p) => read_json(p)?,
        None => Hyperparams::default(),
    };
    let mut config: TrainConfig = match &args.config {
        Some(p) => read_json(p)?,
        None => TrainConfig::default(),
    };
    if let Some(s) = args.seed {
        hyper.seed = s;
        config.seed = s;
    }
    if let Some(v) = args.epochs {
        config.max_epochs = v;
    }
    if let Some(v) = args.lr {
        config.learning_rate = v;
    }
    if let Some(v) = args.lr_decay {
        config.lr_decay = v;
    }
    if let Some(v) = args.batch_size {
        config.batch_size = v;
    }
    if let Some(v) = args.patience {
        config.patience = v;
    }
    if args.clip_norm.is_some() {
        config.clip_norm = args.clip_norm;
    }
    let quiet = args.quiet;
    let (model, report) = train_with_progress(&train, &dev, &hyper, &config, |e| {
        if !quiet {
            eprintln!(
                "epoch {:>3}  lr {:.5}  loss {:.4} (main {:.4}, lm {:.4}, reg {:.4})  dev F_e {:.4} F_rm {:.4} F_rps {:.4}{}",
                e.epoch,
                e.learning_rate,
                e.loss.total,
                e.loss.main,
                e.loss.lm,
                e.loss.reg,
                e.dev.f_e,
                e.dev.f_rm,
                e.dev.f_rps,
                if e.improved { "  *" } else { "" }
            );
        }
    })?;
    model.save(&args.out).map_err(data)?;
    let report_path = args.report.unwrap_or_else(|| {
        let mut p = args.out.clone().into_os_string();
        p.push(".report.json");
        PathBuf::from(p)
    });
    let mut json = serde_json::to_string_pretty(&report).expect("report serializes");
    json.push('\n');
    write_text(&report_path, &json)?;
    println!(
        "best epoch {} (dev F_rm {:.4}), stopped by {:?}; model {} [seed {}]",
        report.best_epoch,
        report.best_dev_f_rm,
        report.stop_reason,
        args.out.display(),
        report.config.seed
    );
    Ok(())
}

fn tag_stream(model: &Model) -> Result<(), Failure> {
    let stdin = io::stdin();
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let mut session = model.open_session();
    for (n, line) in stdin.lock().lines().enumerate() {
        let line = line.map_err(data)?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        let reply = match fields.as_slice() {
            [] => {
                session.end_utterance()?;
                String::new()
            }
            [tok] => {
                let token = Token::parse_combined(tok)
                    .ok_or_else(|| data(format!("line {}: expected word|POS, got {tok:?}", n + 1)))?;
                model.feed(&mut session, &token)?.tag.render()
            }
            _ => return Err(data(format!("line {}: expected one token per line", n + 1))),
        };
        writeln!(out, "{reply}").and_then(|_| out.flush()).map_err(data)?;
    }
    session.close();
    Ok(())
}

fn tag(args: TagArgs) -> Result<(), Failure> {
    let model = load_model(&args.model)?;
    if args.stream {
        return tag_stream(&model);
    }
    let (input, out) = match (args.input, args.out) {
        (Some(i), Some(o)) => (i, o),
        _ => return Err(Failure::Usage("--in and --out are required without --stream".into())),
    };
    let mut corpus = load_corpus(&input)?;
    let tags = model.tag_corpus(&corpus)?;
    let mut it = tags.into_iter();
    for utt in corpus.dialogues.iter_mut().flat_map(|d| d.utterances.iter_mut()) {
        for (tok, tag) in utt.tokens.iter_mut().zip(it.next().expect("one tag row per utterance")) {
            tok.tag = Some(tag);
        }
    }
    corpus.meta.name = format!("{}-tagged", corpus.meta.name);
    save_corpus(&corpus, &out)?;
    println!("tagged {} tokens into {}", corpus.num_tokens(), out.display());
    Ok(())
}

fn clean(args: CleanArgs) -> Result<(), Failure> {
    let model = load_model(&args.model)?;
    let mut corpus = load_corpus(&args.input)?;
    let tags = model.tag_corpus(&corpus)?;
    let mut it = tags.into_iter();
    let mut dropped = 0;
    for utt in corpus.dialogues.iter_mut().flat_map(|d| d.utterances.iter_mut()) {
        let (valid, n) = sanitize_tags(&it.next().expect("one tag row per utterance"));
        dropped += n;
        let mut tokens = clean_with_tags(&utt.tokens, &valid).expect("sanitized tags resolve");
        for t in &mut tokens {
            t.tag = Some(Tag::Fluent);
        }
        utt.tokens = tokens;
    }
    corpus.meta.name = format!("{}-clean", corpus.meta.name);
    save_corpus(&corpus, &args.out)?;
    println!(
        "cleaned corpus written to {} ({} tokens, {} unresolvable tags ignored)",
        args.out.display(),
        corpus.num_tokens(),
        dropped
    );
    Ok(())
}

fn eval(args: EvalArgs) -> Result<(), Failure> {
    let corpus = load_corpus(&args.test)?;
    let mode = RmMatch::parse(&args.rm_match).expect("validated by clap");
    let report: EvalReport = match &args.model {
        Some(path) => evaluate(&load_model(path)?, &corpus, mode)?,
        None => evaluate(&ConstantTagger(Tag::Fluent), &corpus, mode)?,
    };
    if let Some(path) = &args.report {
        let mut json = serde_json::to_string_pretty(&report).expect("report serializes");
        json.push('\n');
        write_text(path, &json)?;
    }
    print!("{}", report.table());
    Ok(())
}

fn inspect(args: InspectArgs) -> Result<(), Failure> {
    let corpus = load_corpus(&args.input)?;
    if let Some(i) = corpus.utterances().position(|u| !u.is_tagged()) {
        return Err(data(format!("utterance {i} has no gold tags")));
    }
    let counts = tag_counts(&corpus);
    let total: u64 = counts.iter().sum();
    println!("{:<32} {:<24} {:>10} {:>8}", "label type", "label", "frequency", "share");
    for (kind, label, n) in label_frequencies(&counts) {
        let share = if total == 0 { 0.0 } else { n as f64 / total as f64 };
        println!("{kind:<32} {label:<24} {n:>10} {:>7.2}%", 100.0 * share);
    }
    if args.stats {
        let user_turns = corpus
            .utterances()
            .filter(|u| u.speaker == Speaker::Usr)
            .count();
        println!();
        println!(
            "{} dialogues, {} utterances ({} user), {} tokens",
            corpus.dialogues.len(),
            corpus.utterances().count(),
            user_turns,
            total
        );
        println!("{:<16} {:>8}", "phenomenon", "turns");
        for (ph, rate) in phenomenon_rates(&corpus) {
            let name = serde_json::to_value(ph).expect("serializes");
            println!("{:<16} {:>7.2}%", name.as_str().unwrap_or_default(), 100.0 * rate);
        }
        println!();
        println!("{:<28} {:>10}", "tag", "frequency");
        for tag in Tag::all() {
            if counts[tag.index()] > 0 {
                println!("{:<28} {:>10}", tag.render(), counts[tag.index()]);
            }
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Generate(a) => generate(a),
        Command::Train(a) => train(a),
        Command::Tag(a) => tag(a),
        Command::Clean(a) => clean(a),
        Command::Eval(a) => eval(a),
        Command::Inspect(a) => inspect(a),
    }
}

fn main() -> ExitCode {
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
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

