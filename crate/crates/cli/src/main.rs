use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, CommandFactory, Parser, Subcommand};
use motif2vec::corpus::{read_songs_jsonl, write_songs_jsonl, CorpusError};
use motif2vec::encoding::{gloss, read_token_file, token_size, write_token_file, TokenSequence, Vocabulary};
use motif2vec::evaluation::{run_evaluation, NoteSource};
use motif2vec::measures::{realize, Measure};
use motif2vec::pipeline::{encode_corpus, run_pipeline, training_echo, write_json, ConfigError, PipelineConfig};
use motif2vec::sgns::{load_model, save_model, MODEL_FORMAT_VERSION};
use motif2vec::similarity::{nearest_among, Candidates};
use motif2vec::{load_corpus, train, Duration};

fn version() -> &'static str {
    Box::leak(format!("{} (model format {MODEL_FORMAT_VERSION})", env!("CARGO_PKG_VERSION")).into_boxed_str())
}

/// Motif embeddings for monophonic folksongs.
#[derive(Parser)]
#[command(name = "motif2vec", version = version())]
struct Cli {
    /// More log output (repeat for debug)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse kern files into a JSONL song corpus
    Ingest {
        #[arg(long)]
        root: PathBuf,
        #[arg(long, default_value = "*.krn")]
        glob: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Interval-encode a song corpus and merge multi-words
    Encode {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_parser = clap::value_parser!(u8).range(2..=3))]
        mw_size: u8,
        /// Defaults to 10 for size 2 and 5 for size 3
        #[arg(long)]
        min_count: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train skip-gram embeddings on a token file
    Train {
        #[arg(long)]
        tokens: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigFlag,
        #[command(flatten)]
        train: TrainFlags,
    },
    /// Nearest neighbours of a token by cosine similarity
    Query {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        token: String,
        #[arg(long, default_value_t = 10)]
        k: usize,
        /// Only return tokens spanning as many intervals as the query
        #[arg(long)]
        same_size: bool,
    },
    /// Melodic distance between two token sequences
    Simdist {
        #[arg(long)]
        measure: Measure,
        /// Space-separated tokens, e.g. "21 30_00"
        #[arg(long)]
        a: String,
        #[arg(long)]
        b: String,
        /// First pitch of both realizations
        #[arg(long, default_value_t = 60)]
        anchor: i32,
        /// Length of every note, in quarter notes
        #[arg(long, default_value = "1")]
        duration: String,
    },
    /// Run the substitution experiment on a trained model
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        tokens: PathBuf,
        /// Song corpus supplying anchor pitches and durations
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        report: PathBuf,
        #[command(flatten)]
        config: ConfigFlag,
        #[command(flatten)]
        eval: EvalFlags,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Ingest, encode, train and evaluate from one configuration file
    Pipeline {
        #[command(flatten)]
        config: ConfigFlag,
        #[arg(long)]
        root: Option<PathBuf>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Comma-separated multi-word sizes
        #[arg(long)]
        mw_size: Option<String>,
        #[command(flatten)]
        train: TrainFlags,
        #[command(flatten)]
        eval: EvalFlags,
        /// Extra `key=value` overrides
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
}

#[derive(Args)]
struct ConfigFlag {
    /// Flat `key = value` configuration file
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct TrainFlags {
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    negatives: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr_start: Option<f64>,
    #[arg(long)]
    lr_end: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    noise_power: Option<f64>,
    /// Drop tokens rarer than this before training
    #[arg(long)]
    train_min_count: Option<u64>,
    /// Frequent-token subsampling threshold; 0 disables
    #[arg(long)]
    subsample: Option<f64>,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct EvalFlags {
    #[arg(long)]
    segments: Option<usize>,
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    tatum: Option<String>,
    #[arg(long)]
    close_rank: Option<usize>,
    /// Which multi-word of a segment to replace: first or random
    #[arg(long)]
    occurrence: Option<String>,
}

/// Bad input from the user rather than bad data; exits with status 1.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

struct Overrides {
    config: PipelineConfig,
    base: PathBuf,
}

impl Overrides {
    fn load(flag: &ConfigFlag) -> Result<Self> {
        let config = match &flag.config {
            Some(path) => PipelineConfig::load(path)?,
            None => PipelineConfig::default(),
        };
        Ok(Overrides {
            config,
            base: PathBuf::from("."),
        })
    }

    fn set<T: ToString>(&mut self, key: &str, value: &Option<T>) -> Result<()> {
        if let Some(v) = value {
            self.config.set(key, &v.to_string(), &self.base)?;
        }
        Ok(())
    }

    fn train(&mut self, f: &TrainFlags) -> Result<()> {
        self.set("dim", &f.dim)?;
        self.set("window", &f.window)?;
        self.set("negatives", &f.negatives)?;
        self.set("epochs", &f.epochs)?;
        self.set("lr_start", &f.lr_start)?;
        self.set("lr_end", &f.lr_end)?;
        self.set("seed", &f.seed)?;
        self.set("noise_power", &f.noise_power)?;
        self.set("train_min_count", &f.train_min_count)?;
        self.set("subsample", &f.subsample)?;
        self.set("workers", &f.workers)
    }

    fn eval(&mut self, f: &EvalFlags) -> Result<()> {
        self.set("segments", &f.segments)?;
        self.set("h", &f.h)?;
        self.set("tatum", &f.tatum)?;
        self.set("close_rank", &f.close_rank)?;
        self.set("occurrence", &f.occurrence)
    }

    fn finish(self) -> Result<PipelineConfig> {
        self.config.validate()?;
        Ok(self.config)
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn parse_tokens(id: &str, text: &str) -> TokenSequence {
    TokenSequence::new(id, text.split_whitespace().map(str::to_owned).collect())
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Ingest { root, glob, out } => {
            let corpus = load_corpus(&root, &glob)?;
            for skip in &corpus.skipped {
                log::warn!("skipped {}: {}", skip.path.display(), skip.reason);
            }
            let mut w = create(&out)?;
            write_songs_jsonl(&corpus.songs, &mut w)
                .and_then(|_| w.flush())
                .with_context(|| format!("cannot write {}", out.display()))?;
            eprintln!(
                "{} songs from {} files written to {} ({} files skipped)",
                corpus.songs.len(),
                corpus.source_manifest.len(),
                out.display(),
                corpus.skipped.len()
            );
        }
        Command::Encode {
            input,
            mw_size,
            min_count,
            out,
        } => {
            let n = mw_size as usize;
            let songs = read_songs_jsonl(&input)?;
            let min_count = min_count.unwrap_or(PipelineConfig::default().min_count(n));
            if min_count == 0 {
                return Err(usage("--min-count must be at least 1"));
            }
            let (tokens, vocab) = encode_corpus(&songs, n, min_count);
            let mut w = create(&out)?;
            write_token_file(&tokens, &mut w)
                .and_then(|_| w.flush())
                .with_context(|| format!("cannot write {}", out.display()))?;
            eprintln!("{} songs encoded, {} multi-words of size {n}", tokens.len(), vocab.len());
        }
        Command::Train {
            tokens,
            out,
            config,
            train: flags,
        } => {
            let mut o = Overrides::load(&config)?;
            o.train(&flags)?;
            let config = o.finish()?;
            let corpus = read_token_file(&tokens)?;
            let n = corpus
                .iter()
                .flat_map(|s| s.tokens.iter())
                .map(|t| token_size(t))
                .max()
                .unwrap_or(1);
            let vocab = Vocabulary::from_sequences(&corpus, 1, n);
            let model = train(&corpus, &vocab, &config.train).with_context(|| format!("training on {}", tokens.display()))?;
            save_model(&model, &out)?;
            eprintln!("{} vectors of dimension {} written to {}", model.len(), model.dim(), out.display());
        }
        Command::Query {
            model,
            token,
            k,
            same_size,
        } => {
            if k == 0 {
                return Err(usage("--k must be at least 1"));
            }
            let model = load_model(&model)?;
            let candidates = if same_size {
                Candidates::Size(token_size(&token))
            } else {
                Candidates::All
            };
            let list = nearest_among(&model, &token, k, candidates)?;
            let stdout = std::io::stdout();
            let mut out = stdout.lock();
            for (rank, (t, cos)) in list.neighbors.iter().enumerate() {
                writeln!(out, "{}\t{t}\t{cos:.6}\t{}", rank + 1, gloss(t))?;
            }
        }
        Command::Simdist {
            measure,
            a,
            b,
            anchor,
            duration,
        } => {
            let duration: Duration = motif2vec::corpus::parse_duration(&duration).map_err(usage)?;
            let (a, b) = (parse_tokens("a", &a), parse_tokens("b", &b));
            let tatum = Duration::new(1, 1) / Duration::from_integer(*duration.denom() as u32);
            let ra = realize(&a, anchor, &vec![duration; a.note_count()], tatum)?;
            let rb = realize(&b, anchor, &vec![duration; b.note_count()], tatum)?;
            println!("{:.6}", measure.between(&ra, &rb)?);
        }
        Command::Evaluate {
            model,
            tokens,
            corpus,
            report,
            config,
            eval,
            seed,
            workers,
        } => {
            let mut o = Overrides::load(&config)?;
            o.eval(&eval)?;
            o.set("seed", &seed)?;
            o.set("workers", &workers)?;
            let config = o.finish()?;
            let model = load_model(&model)?;
            let segments = read_token_file(&tokens)?;
            let notes = match corpus {
                Some(path) => NoteSource::from_songs(&read_songs_jsonl(&path)?),
                None => NoteSource::default(),
            };
            let mut result = run_evaluation(&segments, &model, &notes, &config.eval_config())?;
            result.settings.training = training_echo(&model.config);
            write_json(&result, &report)?;
            print!("{}", result.table);
        }
        Command::Pipeline {
            config,
            root,
            out_dir,
            mw_size,
            train: train_flags,
            eval,
            overrides,
        } => {
            if config.config.is_none() {
                return Err(usage("pipeline needs --config"));
            }
            let mut o = Overrides::load(&config)?;
            o.set("root", &root.map(|p| p.display().to_string()))?;
            o.set("out_dir", &out_dir.map(|p| p.display().to_string()))?;
            o.set("mw_size", &mw_size)?;
            o.train(&train_flags)?;
            o.eval(&eval)?;
            for kv in &overrides {
                let Some((k, v)) = kv.split_once('=') else {
                    bail!(usage(format!("--set expects KEY=VALUE, got '{kv}'")));
                };
                o.set(k.trim(), &Some(v.trim()))?;
            }
            let config = o.finish()?;
            let output = run_pipeline(&config)?;
            print!("{}", output.report.table);
            eprintln!("report written to {}", output.report_path.display());
        }
    }
    Ok(())
}

/// 1 for problems with the invocation or configuration, 2 for everything
/// else (unreadable or malformed inputs, failed stages).
fn exit_status(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<Usage>() {
            return 1;
        }
        if let Some(c) = cause.downcast_ref::<ConfigError>() {
            return if matches!(c, ConfigError::Io { .. }) { 2 } else { 1 };
        }
        if let Some(CorpusError::BadGlob(..)) = cause.downcast_ref::<CorpusError>() {
            return 1;
        }
    }
    2
}

/// The error chain joined by `: `, skipping causes a wrapper already quotes.
fn describe(err: &anyhow::Error) -> String {
    let mut text = String::new();
    for cause in err.chain() {
        let part = cause.to_string();
        if text.contains(&part) {
            continue;
        }
        if !text.is_empty() {
            text.push_str(": ");
        }
        text.push_str(&part);
    }
    text
}

fn subcommand_help(args: &[String]) -> Option<String> {
    let mut cmd = Cli::command();
    let name = args.iter().skip(1).find(|a| !a.starts_with('-'))?;
    let sub = cmd.find_subcommand_mut(name)?;
    Some(sub.render_help().to_string())
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let _ = e.print();
            if let Some(help) = subcommand_help(&args) {
                eprintln!("\n{help}");
            }
            return ExitCode::from(1);
        }
    };

    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", describe(&err));
            let status = exit_status(&err);
            if status == 1 {
                eprintln!("run with --help for usage");
            }
            ExitCode::from(status)
        }
    }
}
