//! Interval tokens and multi-word motifs.
//!
//! An interval token is the absolute semitone distance followed by a
//! direction flag (`1` up, `0` down); a repeated note is `00`. Multi-words
//! join adjacent interval tokens with `_`, so `30_00_21` is a minor third
//! down, a repetition and a major second up.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::kern::Song;

pub const MULTIWORD_SEPARATOR: char = '_';

/// Default occurrence floor for multi-words of size `n`.
pub fn default_min_count(n: usize) -> usize {
    match n {
        2 => 10,
        3 => 5,
        _ => 1,
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EncodingError {
    #[error("bad interval token '{0}'")]
    BadToken(String),
    #[error("song '{0}' has fewer than two notes")]
    TooShort(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IntervalToken(String);

impl IntervalToken {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn semitones(&self) -> i32 {
        decode_interval(&self.0).expect("IntervalToken is always well formed")
    }
}

impl fmt::Display for IntervalToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::str::FromStr for IntervalToken {
    type Err = EncodingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        decode_interval(s).map(|_| IntervalToken(s.to_owned()))
    }
}

pub fn format_interval(delta: i32) -> IntervalToken {
    debug_assert!(delta.abs() <= 127, "interval {delta} outside MIDI range");
    let text = match delta {
        0 => "00".to_owned(),
        d if d > 0 => format!("{d}1"),
        d => format!("{}0", -d),
    };
    IntervalToken(text)
}

pub fn decode_interval(token: &str) -> Result<i32, EncodingError> {
    let bad = || EncodingError::BadToken(token.to_owned());
    if token == "00" {
        return Ok(0);
    }
    if token.len() < 2 || !token.bytes().all(|b| b.is_ascii_digit()) {
        return Err(bad());
    }
    let (digits, flag) = token.split_at(token.len() - 1);
    // canonical form only: no leading zeros, no signed zero
    if digits.starts_with('0') {
        return Err(bad());
    }
    let magnitude: i32 = digits.parse().map_err(|_| bad())?;
    match flag {
        "1" => Ok(magnitude),
        "0" => Ok(-magnitude),
        _ => Err(bad()),
    }
}

/// A motif of two or three adjacent intervals.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MultiWord {
    parts: Vec<IntervalToken>,
}

impl MultiWord {
    pub fn new(parts: Vec<IntervalToken>) -> Option<Self> {
        (2..=3)
            .contains(&parts.len())
            .then_some(MultiWord { parts })
    }

    pub fn parts(&self) -> &[IntervalToken] {
        &self.parts
    }

    pub fn text(&self) -> String {
        join_tokens(self.parts.iter().map(IntervalToken::as_str))
    }
}

impl std::str::FromStr for MultiWord {
    type Err = EncodingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts = s
            .split(MULTIWORD_SEPARATOR)
            .map(str::parse)
            .collect::<Result<Vec<IntervalToken>, _>>()?;
        MultiWord::new(parts).ok_or_else(|| EncodingError::BadToken(s.to_owned()))
    }
}

fn join_tokens<'a>(parts: impl IntoIterator<Item = &'a str>) -> String {
    let mut out = String::new();
    for (i, p) in parts.into_iter().enumerate() {
        if i > 0 {
            out.push(MULTIWORD_SEPARATOR);
        }
        out.push_str(p);
    }
    out
}

/// Number of intervals a token stands for (1 for a plain interval).
pub fn token_size(token: &str) -> usize {
    token.split(MULTIWORD_SEPARATOR).count()
}

/// Signed intervals of a plain or multi-word token.
pub fn decode_token(token: &str) -> Result<Vec<i32>, EncodingError> {
    token
        .split(MULTIWORD_SEPARATOR)
        .map(decode_interval)
        .collect()
}

/// Human-readable signed intervals, e.g. `-3 0 +2`.
pub fn gloss(token: &str) -> String {
    match decode_token(token) {
        Ok(iv) => iv
            .iter()
            .map(|d| {
                if *d > 0 {
                    format!("+{d}")
                } else {
                    d.to_string()
                }
            })
            .collect::<Vec<_>>()
            .join(" "),
        Err(_) => "?".into(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    pub song_id: String,
    pub tokens: Vec<String>,
}

impl TokenSequence {
    pub fn new(song_id: impl Into<String>, tokens: Vec<String>) -> Self {
        TokenSequence {
            song_id: song_id.into(),
            tokens,
        }
    }

    /// Flattens multi-words back to the signed interval sequence.
    pub fn intervals(&self) -> Result<Vec<i32>, EncodingError> {
        let mut out = Vec::with_capacity(self.tokens.len());
        for t in &self.tokens {
            out.extend(decode_token(t)?);
        }
        Ok(out)
    }

    pub fn note_count(&self) -> usize {
        1 + self.tokens.iter().map(|t| token_size(t)).sum::<usize>()
    }

    pub fn has_multiword(&self) -> bool {
        self.tokens.iter().any(|t| token_size(t) > 1)
    }
}

pub fn encode_song(song: &Song) -> Result<TokenSequence, EncodingError> {
    if song.events.len() < 2 {
        return Err(EncodingError::TooShort(song.id.clone()));
    }
    let tokens = song
        .events
        .windows(2)
        .map(|w| format_interval(w[1].midi_pitch as i32 - w[0].midi_pitch as i32).0)
        .collect();
    Ok(TokenSequence::new(song.id.clone(), tokens))
}

/// Token ↔ id table with occurrence counts. Ids are assigned by descending
/// count, ties by token text, so construction is order independent.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Vocabulary {
    tokens: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, usize>,
    n: usize,
}

impl Vocabulary {
    pub fn from_counts(counts: HashMap<String, u64>, min_count: u64, n: usize) -> Self {
        let mut entries: Vec<(String, u64)> = counts
            .into_iter()
            .filter(|(_, c)| *c >= min_count)
            .collect();
        entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Self::from_entries(entries, n)
    }

    /// Builds a vocabulary keeping the given id order.
    pub fn from_entries(entries: Vec<(String, u64)>, n: usize) -> Self {
        let index = entries
            .iter()
            .enumerate()
            .map(|(i, (t, _))| (t.clone(), i))
            .collect();
        let (tokens, counts) = entries.into_iter().unzip();
        Vocabulary {
            tokens,
            counts,
            index,
            n,
        }
    }

    /// Counts every token of `corpus`, e.g. a substituted corpus for training.
    pub fn from_sequences(corpus: &[TokenSequence], min_count: u64, n: usize) -> Self {
        let mut counts: HashMap<String, u64> = HashMap::new();
        for seq in corpus {
            for t in &seq.tokens {
                *counts.entry(t.clone()).or_default() += 1;
            }
        }
        Self::from_counts(counts, min_count, n)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Multi-word size this vocabulary was built for; 0 for plain intervals.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn count(&self, id: usize) -> u64 {
        self.counts[id]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &str, u64)> {
        self.tokens
            .iter()
            .zip(&self.counts)
            .enumerate()
            .map(|(i, (t, c))| (i, t.as_str(), *c))
    }
}

/// Counts every run of `n` adjacent interval tokens inside each song and
/// keeps runs seen at least `min_count` times.
pub fn build_multiword_vocab(corpus: &[TokenSequence], n: usize, min_count: u64) -> Vocabulary {
    assert!((2..=3).contains(&n), "multi-word size must be 2 or 3");
    assert!(min_count >= 1, "min_count must be at least 1");
    let mut counts: HashMap<String, u64> = HashMap::new();
    for seq in corpus {
        for run in seq.tokens.windows(n) {
            let key = join_tokens(run.iter().map(String::as_str));
            *counts.entry(key).or_default() += 1;
        }
    }
    Vocabulary::from_counts(counts, min_count, n)
}

/// Greedy left-to-right, non-overlapping substitution of multi-words.
pub fn apply_multiwords(seq: &TokenSequence, vocab: &Vocabulary) -> TokenSequence {
    let n = vocab.n();
    if vocab.is_empty() || n < 2 {
        return seq.clone();
    }
    let tokens = &seq.tokens;
    let mut out = Vec::with_capacity(tokens.len());
    let mut i = 0;
    while i < tokens.len() {
        if i + n <= tokens.len() {
            let candidate = join_tokens(tokens[i..i + n].iter().map(String::as_str));
            if vocab.contains(&candidate) {
                out.push(candidate);
                i += n;
                continue;
            }
        }
        out.push(tokens[i].clone());
        i += 1;
    }
    TokenSequence::new(seq.song_id.clone(), out)
}

#[derive(Debug, Error)]
pub enum TokenFileError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: {reason}")]
    BadLine {
        path: PathBuf,
        line: usize,
        reason: String,
    },
}

/// Writes the token corpus: one song per line, id first, space separated.
pub fn write_token_file<W: Write>(corpus: &[TokenSequence], mut out: W) -> io::Result<()> {
    for seq in corpus {
        out.write_all(seq.song_id.as_bytes())?;
        for t in &seq.tokens {
            out.write_all(b" ")?;
            out.write_all(t.as_bytes())?;
        }
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn read_token_file(path: &Path) -> Result<Vec<TokenSequence>, TokenFileError> {
    let file = fs::File::open(path).map_err(|source| TokenFileError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut corpus = Vec::new();
    for (i, line) in io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| TokenFileError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut fields = line.split_whitespace();
        let Some(id) = fields.next() else { continue };
        let tokens: Vec<String> = fields.map(str::to_owned).collect();
        let bad = |reason: String| TokenFileError::BadLine {
            path: path.to_path_buf(),
            line: i + 1,
            reason,
        };
        if tokens.is_empty() {
            return Err(bad(format!("song '{id}' has no tokens")));
        }
        for t in &tokens {
            decode_token(t).map_err(|e| bad(e.to_string()))?;
        }
        corpus.push(TokenSequence::new(id, tokens));
    }
    Ok(corpus)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kern::{Duration, NoteEvent};
    use proptest::prelude::*;

    fn song(pitches: &[u8]) -> Song {
        Song {
            id: "s".into(),
            events: pitches
                .iter()
                .map(|&p| NoteEvent {
                    midi_pitch: p,
                    duration: Duration::from_integer(1),
                })
                .collect(),
        }
    }

    fn seq(tokens: &[&str]) -> TokenSequence {
        TokenSequence::new("s", tokens.iter().map(|t| t.to_string()).collect())
    }

    #[test]
    fn interval_strings() {
        assert_eq!(format_interval(2).as_str(), "21");
        assert_eq!(format_interval(-3).as_str(), "30");
        assert_eq!(format_interval(0).as_str(), "00");
        assert_eq!(format_interval(-11).as_str(), "110");
        assert_eq!(format_interval(12).as_str(), "121");
    }

    #[test]
    fn decoding() {
        assert_eq!(decode_interval("110"), Ok(-11));
        assert_eq!(decode_interval("21"), Ok(2));
        assert_eq!(decode_interval("00"), Ok(0));
        for bad in ["", "1", "01", "012", "2x", "32", "-21", "21_30"] {
            assert!(decode_interval(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn round_trip_brute_force() {
        for d in -24..=24 {
            assert_eq!(decode_interval(format_interval(d).as_str()), Ok(d));
        }
    }

    #[test]
    fn multiword_parse() {
        let mw: MultiWord = "30_00_21".parse().unwrap();
        assert_eq!(mw.parts().len(), 3);
        assert_eq!(mw.text(), "30_00_21");
        assert!("21".parse::<MultiWord>().is_err());
        assert!("21_21_21_21".parse::<MultiWord>().is_err());
        assert_eq!(gloss("30_00_21"), "-3 0 +2");
    }

    #[test]
    fn encode() {
        assert_eq!(
            encode_song(&song(&[60, 62, 59, 59])).unwrap().tokens,
            ["21", "30", "00"]
        );
        assert_eq!(encode_song(&song(&[60, 60])).unwrap().tokens, ["00"]);
        assert_eq!(
            encode_song(&song(&[60])),
            Err(EncodingError::TooShort("s".into()))
        );
    }

    #[test]
    fn vocab_threshold_boundary() {
        let mut corpus = Vec::new();
        for _ in 0..12 {
            corpus.push(seq(&["21", "00"]));
        }
        for _ in 0..9 {
            corpus.push(seq(&["30", "21"]));
        }
        let v = build_multiword_vocab(&corpus, 2, 10);
        assert_eq!(v.tokens(), ["21_00"]);
        assert_eq!(v.count(0), 12);
        assert_eq!(v.n(), 2);
    }

    #[test]
    fn vocab_size_three() {
        let v = build_multiword_vocab(&[seq(&["30", "00", "21"])], 3, 1);
        assert_eq!(v.tokens(), ["30_00_21"]);
        assert!(build_multiword_vocab(&[], 2, 1).is_empty());
    }

    #[test]
    fn windows_stay_inside_songs() {
        let corpus = [seq(&["21"]), seq(&["30"])];
        assert!(build_multiword_vocab(&corpus, 2, 1).is_empty());
    }

    #[test]
    fn substitution() {
        let v = Vocabulary::from_entries(vec![("30_00".into(), 10)], 2);
        assert_eq!(
            apply_multiwords(&seq(&["30", "00", "21", "50"]), &v).tokens,
            ["30_00", "21", "50"]
        );
        let v = Vocabulary::from_entries(vec![("21_21".into(), 10)], 2);
        let out = apply_multiwords(&seq(&["21", "21", "21"]), &v);
        assert_eq!(out.tokens, ["21_21", "21"]);
        assert_eq!(out.intervals().unwrap(), vec![2, 2, 2]);
        let empty = Vocabulary::default();
        let s = seq(&["21", "30"]);
        assert_eq!(apply_multiwords(&s, &empty), s);
    }

    #[test]
    fn token_file_round_trip() {
        let corpus = vec![
            seq(&["21_00", "30"]),
            TokenSequence::new("b/c", vec!["00".into()]),
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.txt");
        let mut buf = Vec::new();
        write_token_file(&corpus, &mut buf).unwrap();
        assert_eq!(String::from_utf8_lossy(&buf), "s 21_00 30\nb/c 00\n");
        fs::write(&path, &buf).unwrap();
        assert_eq!(read_token_file(&path).unwrap(), corpus);
        fs::write(&path, "s 21 3x\n").unwrap();
        assert!(matches!(
            read_token_file(&path),
            Err(TokenFileError::BadLine { line: 1, .. })
        ));
    }

    fn interval_corpus() -> impl Strategy<Value = Vec<TokenSequence>> {
        let song = prop::collection::vec(-4i32..=4, 1..30).prop_map(|iv| {
            TokenSequence::new("s", iv.into_iter().map(|d| format_interval(d).0).collect())
        });
        prop::collection::vec(song, 1..12)
    }

    proptest! {
        #[test]
        fn round_trip_wide(d in -60i32..=60) {
            prop_assert_eq!(decode_interval(format_interval(d).as_str()), Ok(d));
        }

        #[test]
        fn substitution_preserves_intervals(corpus in interval_corpus(), n in 2usize..=3, min in 1u64..4) {
            let vocab = build_multiword_vocab(&corpus, n, min);
            for s in &corpus {
                let out = apply_multiwords(s, &vocab);
                prop_assert_eq!(out.intervals().unwrap(), s.intervals().unwrap());
                let subs = out.tokens.iter().filter(|t| token_size(t) == n).count();
                prop_assert_eq!(out.tokens.len(), s.tokens.len() - (n - 1) * subs);
            }
        }

        #[test]
        fn raising_min_count_never_adds(corpus in interval_corpus(), n in 2usize..=3, min in 1u64..5) {
            let low = build_multiword_vocab(&corpus, n, min);
            let high = build_multiword_vocab(&corpus, n, min + 1);
            prop_assert!(high.tokens().iter().all(|t| low.contains(t)));
            prop_assert!(low.iter().all(|(_, _, c)| c >= min));
        }
    }
}
