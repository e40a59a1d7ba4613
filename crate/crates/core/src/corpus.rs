//! Song corpora: loading kern directories and the line-delimited JSON
//! interchange file written by `ingest`.

use std::collections::HashSet;
use std::fs;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use walkdir::WalkDir;

use crate::kern::{parse_kern, Duration, NoteEvent, Song};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("invalid glob pattern '{0}'")]
    BadGlob(String),
    #[error("no songs could be parsed under {0}")]
    EmptyCorpus(PathBuf),
    #[error("{path}:{line}: {reason}")]
    BadRecord {
        path: PathBuf,
        line: usize,
        reason: String,
    },
}

/// A file that was found but could not be parsed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkippedFile {
    pub path: PathBuf,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub songs: Vec<Song>,
    pub source_manifest: Vec<(PathBuf, usize)>,
    pub skipped: Vec<SkippedFile>,
}

fn song_id_for(relative: &Path, index: usize, movements: usize) -> String {
    let stem = relative.with_extension("");
    let mut id: String = stem
        .components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/");
    id = id.split_whitespace().collect::<Vec<_>>().join("_");
    if movements > 1 {
        id.push_str(&format!("#{}", index + 1));
    }
    id
}

/// Loads every file under `root` whose file name matches `pattern`.
/// Files are visited in lexicographic path order; unparseable files are
/// recorded in [`Corpus::skipped`].
pub fn load_corpus(root: &Path, pattern: &str) -> Result<Corpus, CorpusError> {
    let matcher = glob::Pattern::new(pattern).map_err(|_| CorpusError::BadGlob(pattern.into()))?;
    if !root.is_dir() {
        return Err(CorpusError::Io {
            path: root.to_path_buf(),
            source: io::Error::new(io::ErrorKind::NotFound, "corpus root is not a directory"),
        });
    }

    let mut paths = Vec::new();
    for entry in WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|e| CorpusError::Io {
            path: e.path().unwrap_or(root).to_path_buf(),
            source: e.into(),
        })?;
        if entry.file_type().is_file() && matcher.matches(&entry.file_name().to_string_lossy()) {
            paths.push(entry.into_path());
        }
    }
    paths.sort();

    let mut corpus = Corpus::default();
    let mut seen = HashSet::new();
    for path in paths {
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) => {
                warn!("{}: {e}", path.display());
                corpus.skipped.push(SkippedFile {
                    path,
                    reason: e.to_string(),
                });
                continue;
            }
        };
        match parse_kern(&text) {
            Ok(songs) => {
                let relative = path.strip_prefix(root).unwrap_or(&path).to_path_buf();
                let movements = songs.len();
                for (i, mut song) in songs.into_iter().enumerate() {
                    let base = song_id_for(&relative, i, movements);
                    let mut id = base.clone();
                    let mut dup = 1;
                    while !seen.insert(id.clone()) {
                        dup += 1;
                        id = format!("{base}~{dup}");
                    }
                    song.id = id;
                    corpus.songs.push(song);
                }
                corpus.source_manifest.push((path, movements));
            }
            Err(e) => {
                warn!("skipping {}: {e}", path.display());
                corpus.skipped.push(SkippedFile {
                    path,
                    reason: e.to_string(),
                });
            }
        }
    }

    if corpus.songs.is_empty() {
        return Err(CorpusError::EmptyCorpus(root.to_path_buf()));
    }
    Ok(corpus)
}

/// One line of the `ingest` output file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SongRecord {
    pub id: String,
    pub pitches: Vec<u8>,
    pub durations: Vec<String>,
}

impl From<&Song> for SongRecord {
    fn from(song: &Song) -> Self {
        SongRecord {
            id: song.id.clone(),
            pitches: song.pitches(),
            durations: song
                .events
                .iter()
                .map(|e| format!("{}/{}", e.duration.numer(), e.duration.denom()))
                .collect(),
        }
    }
}

impl SongRecord {
    pub fn to_song(&self) -> Result<Song, String> {
        if self.pitches.len() != self.durations.len() {
            return Err(format!(
                "{} pitches but {} durations",
                self.pitches.len(),
                self.durations.len()
            ));
        }
        if self.pitches.is_empty() {
            return Err("song has no notes".into());
        }
        let events = self
            .pitches
            .iter()
            .zip(&self.durations)
            .map(|(&p, d)| {
                if p > 127 {
                    return Err(format!("pitch {p} outside MIDI range"));
                }
                let duration = parse_duration(d)?;
                Ok(NoteEvent {
                    midi_pitch: p,
                    duration,
                })
            })
            .collect::<Result<Vec<_>, String>>()?;
        Ok(Song {
            id: self.id.clone(),
            events,
        })
    }
}

/// Parses `"num/den"` (or a bare integer) into a positive duration.
pub fn parse_duration(text: &str) -> Result<Duration, String> {
    let (n, d) = text.split_once('/').unwrap_or((text, "1"));
    let n: u32 = n
        .trim()
        .parse()
        .map_err(|_| format!("bad duration '{text}'"))?;
    let d: u32 = d
        .trim()
        .parse()
        .map_err(|_| format!("bad duration '{text}'"))?;
    if n == 0 || d == 0 {
        return Err(format!("duration '{text}' must be positive"));
    }
    Ok(Duration::new(n, d))
}

pub fn write_songs_jsonl<W: Write>(songs: &[Song], mut out: W) -> io::Result<()> {
    for song in songs {
        let line = serde_json::to_string(&SongRecord::from(song)).map_err(io::Error::other)?;
        out.write_all(line.as_bytes())?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn read_songs_jsonl(path: &Path) -> Result<Vec<Song>, CorpusError> {
    let file = fs::File::open(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut songs = Vec::new();
    for (i, line) in io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |reason: String| CorpusError::BadRecord {
            path: path.to_path_buf(),
            line: i + 1,
            reason,
        };
        let record: SongRecord = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        songs.push(record.to_song().map_err(bad)?);
    }
    Ok(songs)
}

#[cfg(test)]
mod tests {
    use super::*;

    const VALID: &str = "**kern\n4c\n4d\n4e\n*-\n";

    fn write(dir: &Path, name: &str, text: &str) {
        fs::write(dir.join(name), text).unwrap();
    }

    #[test]
    fn three_valid_files() {
        let dir = tempfile::tempdir().unwrap();
        for name in ["b.krn", "a.krn", "c.krn"] {
            write(dir.path(), name, VALID);
        }
        write(dir.path(), "notes.txt", "not kern");
        let corpus = load_corpus(dir.path(), "*.krn").unwrap();
        assert_eq!(corpus.songs.len(), 3);
        assert_eq!(corpus.source_manifest.len(), 3);
        let ids: Vec<_> = corpus.songs.iter().map(|s| s.id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
    }

    #[test]
    fn malformed_file_is_skipped() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "a.krn", VALID);
        write(dir.path(), "b.krn", "**kern\n4z\n*-\n");
        write(dir.path(), "c.krn", VALID);
        let corpus = load_corpus(dir.path(), "*.krn").unwrap();
        assert_eq!(corpus.songs.len(), 2);
        assert_eq!(corpus.skipped.len(), 1);
        assert!(corpus.skipped[0].path.ends_with("b.krn"));
    }

    #[test]
    fn empty_directory() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_corpus(dir.path(), "*.krn"),
            Err(CorpusError::EmptyCorpus(_))
        ));
    }

    #[test]
    fn nested_and_multi_movement_ids() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir(dir.path().join("sub")).unwrap();
        write(
            &dir.path().join("sub"),
            "two songs.krn",
            "**kern\n4c\n*-\n**kern\n4d\n*-\n",
        );
        let corpus = load_corpus(dir.path(), "*.krn").unwrap();
        let ids: Vec<_> = corpus.songs.iter().map(|s| s.id.as_str()).collect();
        assert_eq!(ids, ["sub/two_songs#1", "sub/two_songs#2"]);
    }

    #[test]
    fn jsonl_round_trip() {
        let songs = parse_kern("**kern\n4.c\n8d\n[4e\n4e]\n*-\n").unwrap();
        let mut buf = Vec::new();
        write_songs_jsonl(&songs, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "{\"id\":\"0\",\"pitches\":[60,62,64],\"durations\":[\"3/2\",\"1/2\",\"2/1\"]}\n"
        );
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        fs::write(&path, text).unwrap();
        assert_eq!(read_songs_jsonl(&path).unwrap(), songs);
    }
}
