//! End-to-end driver: kern directory → interval tokens → multi-word
//! corpora → embeddings → evaluation report, configured from a flat
//! `key = value` file.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{load_corpus, parse_duration, write_songs_jsonl, CorpusError};
use crate::encoding::{
    apply_multiwords, build_multiword_vocab, default_min_count, encode_song, write_token_file,
    EncodingError, TokenSequence, Vocabulary,
};
use crate::evaluation::{
    render_table, run_evaluation, EvalConfig, EvalError, EvalReport, NoteSource, Occurrence,
    VariantOptions,
};
use crate::kern::{Duration, Song};
use crate::sgns::{save_model, train, ModelFileError, TrainConfig, TrainError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: expected key = value")]
    Syntax { line: usize },
    #[error("unknown configuration key '{0}'")]
    UnknownKey(String),
    #[error("bad value for '{key}': {reason}")]
    BadValue { key: String, reason: String },
    #[error("missing required key '{0}'")]
    Missing(&'static str),
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("multi-word size {0}: {1}")]
    Train(usize, TrainError),
    #[error("multi-word size {0}: {1}")]
    Eval(usize, EvalError),
    #[error(transparent)]
    Model(#[from] ModelFileError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("no song has two or more notes")]
    NothingToEncode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub root: Option<PathBuf>,
    pub glob: String,
    pub out_dir: PathBuf,
    pub mw_sizes: Vec<usize>,
    pub min_count_2: u64,
    pub min_count_3: u64,
    pub train: TrainConfig,
    pub h: f64,
    pub segments: usize,
    pub tatum: Duration,
    pub close_rank: usize,
    pub occurrence: Occurrence,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            root: None,
            glob: "*.krn".into(),
            out_dir: PathBuf::from("out"),
            mw_sizes: vec![2, 3],
            min_count_2: default_min_count(2) as u64,
            min_count_3: default_min_count(3) as u64,
            train: TrainConfig::default(),
            h: 0.2,
            segments: 2000,
            tatum: crate::measures::default_tatum(),
            close_rank: 2,
            occurrence: Occurrence::First,
        }
    }
}

pub const CONFIG_KEYS: &[&str] = &[
    "root",
    "glob",
    "out_dir",
    "mw_size",
    "min_count_2",
    "min_count_3",
    "dim",
    "window",
    "negatives",
    "epochs",
    "lr_start",
    "lr_end",
    "seed",
    "noise_power",
    "train_min_count",
    "subsample",
    "workers",
    "h",
    "segments",
    "tatum",
    "close_rank",
    "occurrence",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::BadValue {
        key: key.into(),
        reason: e.to_string(),
    })
}

impl PipelineConfig {
    /// Parses `key = value` lines; `#` starts a comment. Relative paths are
    /// resolved against `base`.
    pub fn parse_str(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let mut config = PipelineConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or(ConfigError::Syntax { line: i + 1 })?;
            config.set(key.trim(), value.trim(), base)?;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse_str(&text, base)
    }

    pub fn set(&mut self, key: &str, value: &str, base: &Path) -> Result<(), ConfigError> {
        let bad = |reason: &str| ConfigError::BadValue {
            key: key.into(),
            reason: reason.into(),
        };
        let t = &mut self.train;
        match key {
            "root" => self.root = Some(base.join(value)),
            "glob" => self.glob = value.into(),
            "out_dir" => self.out_dir = base.join(value),
            "mw_size" => {
                self.mw_sizes = value
                    .split(',')
                    .map(|v| parse::<usize>(key, v.trim()))
                    .collect::<Result<_, _>>()?;
            }
            "min_count_2" => self.min_count_2 = parse(key, value)?,
            "min_count_3" => self.min_count_3 = parse(key, value)?,
            "dim" => t.dim = parse(key, value)?,
            "window" => t.window = parse(key, value)?,
            "negatives" => t.negatives = parse(key, value)?,
            "epochs" => t.epochs = parse(key, value)?,
            "lr_start" => t.lr_start = parse(key, value)?,
            "lr_end" => t.lr_end = parse(key, value)?,
            "seed" => t.seed = parse(key, value)?,
            "noise_power" => t.noise_power = parse(key, value)?,
            "train_min_count" => t.min_count = parse(key, value)?,
            "subsample" => {
                let v: f64 = parse(key, value)?;
                t.subsample = (v > 0.0).then_some(v);
            }
            "workers" => t.workers = parse(key, value)?,
            "h" => self.h = parse(key, value)?,
            "segments" => self.segments = parse(key, value)?,
            "tatum" => self.tatum = parse_duration(value).map_err(|e| bad(&e))?,
            "close_rank" => self.close_rank = parse(key, value)?,
            "occurrence" => {
                self.occurrence = match value {
                    "first" => Occurrence::First,
                    "random" => Occurrence::Random,
                    _ => return Err(bad("expected 'first' or 'random'")),
                }
            }
            other => return Err(ConfigError::UnknownKey(other.into())),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |key: &str, reason: &str| {
            Err(ConfigError::BadValue {
                key: key.into(),
                reason: reason.into(),
            })
        };
        if self.mw_sizes.is_empty() || self.mw_sizes.iter().any(|n| !(2..=3).contains(n)) {
            return bad("mw_size", "sizes must be 2 or 3");
        }
        if self.min_count_2 == 0 || self.min_count_3 == 0 {
            return bad("min_count", "must be at least 1");
        }
        if !self.h.is_finite() {
            return bad("h", "must be finite");
        }
        if self.close_rank < 1 {
            return bad("close_rank", "must be at least 1");
        }
        if let Err(TrainError::InvalidConfig(reason)) = self.train.validate() {
            return bad("training", &reason);
        }
        Ok(())
    }

    pub fn min_count(&self, n: usize) -> u64 {
        if n == 3 {
            self.min_count_3
        } else {
            self.min_count_2
        }
    }

    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            n_segments: self.segments,
            variants: VariantOptions {
                h: self.h,
                close_rank: self.close_rank,
                occurrence: self.occurrence,
            },
            seed: self.train.seed,
            tatum: self.tatum,
            workers: self.train.workers,
        }
    }
}

/// Training hyperparameters as report metadata.
pub fn training_echo(config: &TrainConfig) -> BTreeMap<String, String> {
    let mut m = BTreeMap::new();
    m.insert("dim".into(), config.dim.to_string());
    m.insert("window".into(), config.window.to_string());
    m.insert("negatives".into(), config.negatives.to_string());
    m.insert("epochs".into(), config.epochs.to_string());
    m.insert("lr_start".into(), config.lr_start.to_string());
    m.insert("lr_end".into(), config.lr_end.to_string());
    m.insert("seed".into(), config.seed.to_string());
    m.insert("noise_power".into(), config.noise_power.to_string());
    m.insert("min_count".into(), config.min_count.to_string());
    m.insert(
        "subsample".into(),
        config
            .subsample
            .map_or_else(|| "off".into(), |t| t.to_string()),
    );
    m
}

/// Interval-encodes songs, builds the size-`n` multi-word vocabulary and
/// substitutes it. Songs with fewer than two notes are dropped.
pub fn encode_corpus(songs: &[Song], n: usize, min_count: u64) -> (Vec<TokenSequence>, Vocabulary) {
    let plain: Vec<TokenSequence> = songs
        .iter()
        .filter_map(|s| match encode_song(s) {
            Ok(t) => Some(t),
            Err(EncodingError::TooShort(id)) => {
                log::warn!("song '{id}' has fewer than two notes, skipped");
                None
            }
            Err(e) => unreachable!("{e}"),
        })
        .collect();
    let vocab = build_multiword_vocab(&plain, n, min_count);
    let substituted = plain.iter().map(|s| apply_multiwords(s, &vocab)).collect();
    (substituted, vocab)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub reports: Vec<EvalReport>,
    pub table: String,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub report: PipelineReport,
    pub report_path: PathBuf,
    pub model_paths: Vec<PathBuf>,
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), PipelineError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| io_err(path)(io::Error::other(e)))?;
    out.write_all(b"\n")
        .and_then(|_| out.flush())
        .map_err(io_err(path))
}

pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineOutput, PipelineError> {
    config.validate()?;
    let root = config.root.as_deref().ok_or(ConfigError::Missing("root"))?;
    let out_dir = &config.out_dir;
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;

    let corpus = load_corpus(root, &config.glob)?;
    log::info!(
        "ingested {} songs from {} files ({} skipped)",
        corpus.songs.len(),
        corpus.source_manifest.len(),
        corpus.skipped.len()
    );
    let corpus_path = out_dir.join("corpus.jsonl");
    let file = fs::File::create(&corpus_path).map_err(io_err(&corpus_path))?;
    write_songs_jsonl(&corpus.songs, BufWriter::new(file)).map_err(io_err(&corpus_path))?;

    let notes = NoteSource::from_songs(&corpus.songs);
    let mut reports = Vec::new();
    let mut model_paths = Vec::new();
    for &n in &config.mw_sizes {
        let (tokens, mw_vocab) = encode_corpus(&corpus.songs, n, config.min_count(n));
        if tokens.is_empty() {
            return Err(PipelineError::NothingToEncode);
        }
        log::info!("size {n}: {} multi-words kept", mw_vocab.len());
        let tokens_path = out_dir.join(format!("tokens_mw{n}.txt"));
        let file = fs::File::create(&tokens_path).map_err(io_err(&tokens_path))?;
        write_token_file(&tokens, BufWriter::new(file)).map_err(io_err(&tokens_path))?;

        let vocab = Vocabulary::from_sequences(&tokens, 1, n);
        let model =
            train(&tokens, &vocab, &config.train).map_err(|e| PipelineError::Train(n, e))?;
        let model_path = out_dir.join(format!("model_mw{n}.m2v"));
        save_model(&model, &model_path)?;
        model_paths.push(model_path);

        let mut report = run_evaluation(&tokens, &model, &notes, &config.eval_config())
            .map_err(|e| PipelineError::Eval(n, e))?;
        report.settings.training = training_echo(&config.train);
        reports.push(report);
    }

    let rows: Vec<_> = reports.iter().flat_map(|r| r.distances.clone()).collect();
    let report = PipelineReport {
        table: render_table(&rows),
        reports,
    };
    let report_path = out_dir.join("report.json");
    write_json(&report, &report_path)?;
    Ok(PipelineOutput {
        report,
        report_path,
        model_paths,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flat_config() {
        let text = "# experiment\nroot = kern\nmw_size = 3\ndim = 20 # small\nh=0.3\ntatum = 1/8\nsubsample = 0\n";
        let c = PipelineConfig::parse_str(text, Path::new("/data")).unwrap();
        assert_eq!(c.root, Some(PathBuf::from("/data/kern")));
        assert_eq!(c.mw_sizes, vec![3]);
        assert_eq!(c.train.dim, 20);
        assert_eq!(c.h, 0.3);
        assert_eq!(c.tatum, Duration::new(1, 8));
        assert_eq!(c.train.subsample, None);
        assert_eq!(c.train.window, 5);
    }

    #[test]
    fn rejects_bad_config() {
        let base = Path::new(".");
        assert!(matches!(
            PipelineConfig::parse_str("colour = red\n", base),
            Err(ConfigError::UnknownKey(k)) if k == "colour"
        ));
        assert!(matches!(
            PipelineConfig::parse_str("dim 20\n", base),
            Err(ConfigError::Syntax { line: 1 })
        ));
        assert!(matches!(
            PipelineConfig::parse_str("dim = many\n", base),
            Err(ConfigError::BadValue { .. })
        ));
        assert!(matches!(
            PipelineConfig::parse_str("mw_size = 4\n", base),
            Err(ConfigError::BadValue { .. })
        ));
        assert!(matches!(
            PipelineConfig::parse_str("window = 0\n", base),
            Err(ConfigError::BadValue { .. })
        ));
    }

    #[test]
    fn every_documented_key_is_accepted() {
        let sample = |k: &str| match k {
            "mw_size" => "2",
            "tatum" => "1/4",
            "occurrence" => "first",
            "lr_start" => "0.025",
            "lr_end" => "0.0001",
            "h" | "noise_power" | "subsample" => "0.5",
            _ => "3",
        };
        for key in CONFIG_KEYS {
            let mut c = PipelineConfig::default();
            c.set(key, sample(key), Path::new(".")).unwrap();
        }
    }
}
