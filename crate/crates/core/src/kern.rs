//! Reader for the monophonic subset of Humdrum `**kern`.
//!
//! Only the first `**kern` spine of each movement is read. Rests, barlines,
//! null tokens and grace notes are dropped, tied notes are merged into one
//! event, and chords collapse onto their first note.

use log::warn;
use num_rational::Ratio;
use thiserror::Error;

/// Note length in quarter notes.
pub type Duration = Ratio<u32>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum KernError {
    #[error("malformed kern at line {line}: {reason}")]
    MalformedKern { line: usize, reason: String },
    #[error("no notes in kern spine starting at line {line}")]
    EmptySpine { line: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NoteEvent {
    pub midi_pitch: u8,
    pub duration: Duration,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Song {
    pub id: String,
    pub events: Vec<NoteEvent>,
}

impl Song {
    pub fn pitches(&self) -> Vec<u8> {
        self.events.iter().map(|e| e.midi_pitch).collect()
    }

    pub fn durations(&self) -> Vec<Duration> {
        self.events.iter().map(|e| e.duration).collect()
    }
}

/// Pitch letter and octave count as they appear in a kern token,
/// e.g. `cc#` is `('c', 2, +1)`.
fn pitch_to_midi(letter: char, repeats: u32, alteration: i32) -> Option<i32> {
    let class = match letter.to_ascii_lowercase() {
        'c' => 0,
        'd' => 2,
        'e' => 4,
        'f' => 5,
        'g' => 7,
        'a' => 9,
        'b' => 11,
        _ => return None,
    };
    let octave_shift = repeats as i32 - 1;
    let base = if letter.is_ascii_lowercase() {
        60 + 12 * octave_shift
    } else {
        48 - 12 * octave_shift
    };
    Some(base + class + alteration)
}

/// Reciprocal duration (`4` = quarter, `0` = breve, `00` = longa,
/// `3%2` = rational reciprocal) with augmentation dots.
fn reciprocal_to_quarters(digits: &str, dots: u32) -> Option<Duration> {
    let base = match digits {
        "000" => Duration::from_integer(32),
        "00" => Duration::from_integer(16),
        "0" => Duration::from_integer(8),
        _ => {
            let (num, den) = match digits.split_once('%') {
                Some((n, d)) => (n.parse::<u32>().ok()?, d.parse::<u32>().ok()?),
                None => (digits.parse::<u32>().ok()?, 1),
            };
            if num == 0 || den == 0 {
                return None;
            }
            Duration::new(4 * den, num)
        }
    };
    // each dot adds half of the previous addition
    let mut total = base;
    let mut add = base;
    for _ in 0..dots {
        add /= 2;
        total += add;
    }
    Some(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Tie {
    None,
    Start,
    Continue,
    End,
}

#[derive(Debug, PartialEq, Eq)]
enum Parsed {
    Note { event: NoteEvent, tie: Tie },
    Rest,
    Grace,
}

fn parse_note_token(token: &str, line: usize) -> Result<Parsed, KernError> {
    let malformed = |reason: String| KernError::MalformedKern { line, reason };

    if token.contains(['q', 'Q']) {
        return Ok(Parsed::Grace);
    }

    let mut digits = String::new();
    let mut dots = 0u32;
    let mut letter: Option<char> = None;
    let mut repeats = 0u32;
    let mut alteration = 0i32;
    let mut rest = false;
    let mut tie = Tie::None;

    for ch in token.chars() {
        match ch {
            '0'..='9' | '%' => digits.push(ch),
            '.' => dots += 1,
            'a'..='g' | 'A'..='G' => match letter {
                None => {
                    letter = Some(ch);
                    repeats = 1;
                }
                Some(l) if l == ch => repeats += 1,
                Some(l) => {
                    return Err(malformed(format!(
                        "mixed pitch letters '{l}' and '{ch}' in token '{token}'"
                    )))
                }
            },
            '#' => alteration += 1,
            '-' => alteration -= 1,
            'n' => {}
            'r' => rest = true,
            '[' => tie = Tie::Start,
            '_' => tie = Tie::Continue,
            ']' => tie = Tie::End,
            // articulation, phrasing, beaming, stems and editorial marks
            _ => {}
        }
    }

    if rest {
        return Ok(Parsed::Rest);
    }
    let Some(letter) = letter else {
        return Err(malformed(format!("no pitch in token '{token}'")));
    };
    if digits.is_empty() {
        return Err(malformed(format!("no duration in token '{token}'")));
    }
    let duration = reciprocal_to_quarters(&digits, dots)
        .ok_or_else(|| malformed(format!("bad duration '{digits}' in token '{token}'")))?;
    let midi = pitch_to_midi(letter, repeats, alteration)
        .ok_or_else(|| malformed(format!("bad pitch in token '{token}'")))?;
    let midi_pitch = u8::try_from(midi)
        .ok()
        .filter(|p| *p <= 127)
        .ok_or_else(|| malformed(format!("pitch {midi} outside MIDI range in '{token}'")))?;

    Ok(Parsed::Note {
        event: NoteEvent {
            midi_pitch,
            duration,
        },
        tie,
    })
}

/// Accumulates the events of one movement.
struct SpineReader {
    start_line: usize,
    column: usize,
    events: Vec<NoteEvent>,
    tied: Option<NoteEvent>,
    warned_chord: bool,
}

impl SpineReader {
    fn push(&mut self, event: NoteEvent, tie: Tie) {
        match (tie, self.tied.take()) {
            (Tie::Start, pending) => {
                if let Some(p) = pending {
                    self.events.push(p);
                }
                self.tied = Some(event);
            }
            (Tie::Continue, Some(mut p)) => {
                p.duration += event.duration;
                self.tied = Some(p);
            }
            (Tie::End, Some(mut p)) => {
                p.duration += event.duration;
                self.events.push(p);
            }
            (Tie::Continue, None) => self.tied = Some(event),
            (Tie::End, None) | (Tie::None, None) => self.events.push(event),
            (Tie::None, Some(p)) => {
                self.events.push(p);
                self.events.push(event);
            }
        }
    }

    fn finish(mut self, index: usize) -> Result<Song, KernError> {
        if let Some(p) = self.tied.take() {
            self.events.push(p);
        }
        if self.events.is_empty() {
            return Err(KernError::EmptySpine {
                line: self.start_line,
            });
        }
        Ok(Song {
            id: index.to_string(),
            events: self.events,
        })
    }
}

/// Parses every `**kern` movement in `text`. Song ids are the movement
/// index (`"0"`, `"1"`, ...); [`crate::corpus::load_corpus`] replaces them
/// with file-based ids.
pub fn parse_kern(text: &str) -> Result<Vec<Song>, KernError> {
    let mut songs = Vec::new();
    let mut current: Option<SpineReader> = None;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('!') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();

        let Some(reader) = current.as_mut() else {
            if line.starts_with("**") {
                let column = fields.iter().position(|f| *f == "**kern");
                match column {
                    Some(column) => {
                        let kern_spines = fields.iter().filter(|f| **f == "**kern").count();
                        if kern_spines > 1 {
                            warn!(
                                "line {line_no}: {kern_spines} kern spines, reading the first only"
                            );
                        }
                        current = Some(SpineReader {
                            start_line: line_no,
                            column,
                            events: Vec::new(),
                            tied: None,
                            warned_chord: false,
                        });
                    }
                    None => {
                        warn!("line {line_no}: exclusive interpretation without **kern skipped")
                    }
                }
            }
            continue;
        };

        let Some(field) = fields.get(reader.column).copied() else {
            return Err(KernError::MalformedKern {
                line: line_no,
                reason: format!("missing spine column {}", reader.column + 1),
            });
        };

        if line.starts_with('*') {
            if field == "*-" {
                let reader = current.take().expect("open movement");
                songs.push(reader.finish(songs.len())?);
            }
            continue;
        }
        if field.starts_with('=') || field == "." || field.starts_with('!') {
            continue;
        }

        let mut subtokens = field.split(' ').filter(|s| !s.is_empty());
        let Some(first) = subtokens.next() else {
            continue;
        };
        if subtokens.next().is_some() && !reader.warned_chord {
            warn!("line {line_no}: chord in kern spine, keeping the first note");
            reader.warned_chord = true;
        }
        match parse_note_token(first, line_no)? {
            Parsed::Note { event, tie } => reader.push(event, tie),
            Parsed::Rest | Parsed::Grace => {}
        }
    }

    // a movement without a terminator still counts
    if let Some(reader) = current.take() {
        songs.push(reader.finish(songs.len())?);
    }
    if songs.is_empty() {
        return Err(KernError::MalformedKern {
            line: 1,
            reason: "no **kern spine declaration".into(),
        });
    }
    Ok(songs)
}
