//! Regenerates the synthetic part of the bundled kern fixture corpus.
//!
//! Each melody is a single four-bar phrase from one of ten tune families.
//! A family is a melodic habit (rising steps, falling thirds, a leap up
//! filled by a step down, ...) given as weighted moves in scale degrees
//! plus the register its phrases start in. Inner notes are now and then
//! bent to a neighbouring degree.
//!
//! Usage: cargo run -p motif2vec --example make_fixtures -- <out_dir> [count] [seed]

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MAJOR: [i32; 7] = [0, 2, 4, 5, 7, 9, 11];
const PC_NAMES: [(char, &str); 12] = [
    ('c', ""),
    ('c', "#"),
    ('d', ""),
    ('d', "#"),
    ('e', ""),
    ('f', ""),
    ('f', "#"),
    ('g', ""),
    ('g', "#"),
    ('a', ""),
    ('a', "#"),
    ('b', ""),
];
const KEYS: [(i32, &str); 6] = [(60, ""), (67, "f#"), (62, "f#c#"), (65, "b-"), (58, "b-e-"), (64, "f#c#g#d#")];

// bar rhythms in sixteenths, each summing to a 4/4 bar
const RHYTHMS: [&[u32]; 8] = [
    &[4, 4, 4, 4],
    &[8, 4, 4],
    &[4, 4, 8],
    &[6, 2, 4, 4],
    &[2, 2, 4, 4, 4],
    &[4, 2, 2, 8],
    &[4, 4, 2, 2, 4],
    &[6, 2, 6, 2],
];

type Family = (&'static [(i32, u32)], (i32, i32));

const FAMILIES: [Family; 10] = [
    (&[(1, 6), (0, 1)], (-3, 0)),
    (&[(-1, 6), (0, 1)], (7, 10)),
    (&[(2, 5), (1, 1)], (-4, -2)),
    (&[(-2, 5), (-1, 1)], (9, 11)),
    (&[(0, 3), (1, 3)], (-2, 1)),
    (&[(0, 3), (-1, 3)], (6, 9)),
    (&[(3, 1), (-1, 1)], (-3, 0)),
    (&[(-3, 1), (1, 1)], (7, 10)),
    (&[(0, 6), (1, 1), (-1, 1)], (2, 5)),
    (&[(4, 1), (-2, 1), (-1, 1)], (0, 3)),
];
const BARS: usize = 4;
// chance that an inner note is bent to a neighbouring degree
const VARIATION: f64 = 0.15;

fn degree_to_midi(tonic: i32, degree: i32) -> i32 {
    let octave = degree.div_euclid(7);
    tonic + 12 * octave + MAJOR[degree.rem_euclid(7) as usize]
}

fn kern_pitch(midi: i32) -> String {
    let (letter, acc) = PC_NAMES[midi.rem_euclid(12) as usize];
    let octave = midi.div_euclid(12) - 1;
    let name = if octave >= 4 {
        letter.to_string().repeat((octave - 3) as usize)
    } else {
        letter.to_ascii_uppercase().to_string().repeat((4 - octave) as usize)
    };
    format!("{name}{acc}")
}

fn kern_duration(sixteenths: u32) -> &'static str {
    match sixteenths {
        2 => "8",
        3 => "8.",
        4 => "4",
        6 => "4.",
        8 => "2",
        12 => "2.",
        16 => "1",
        _ => unreachable!("unsupported length {sixteenths}"),
    }
}

fn next_degree(rng: &mut ChaCha8Rng, moves: &[(i32, u32)], degree: i32) -> i32 {
    let total: u32 = moves.iter().map(|m| m.1).sum();
    let mut pick = rng.random_range(0..total);
    let mut step = 0;
    for (m, w) in moves {
        if pick < *w {
            step = *m;
            break;
        }
        pick -= w;
    }
    let next = degree + step;
    // stay within roughly a twelfth around the tonic
    if !(-4..=11).contains(&next) {
        degree - step
    } else {
        next
    }
}

/// Bars of (length in sixteenths, scale degree).
fn phrase(rng: &mut ChaCha8Rng, (moves, start): Family) -> Vec<Vec<(u32, i32)>> {
    let mut degree = rng.random_range(start.0..=start.1);
    let mut first = true;
    (0..BARS)
        .map(|_| {
            RHYTHMS[rng.random_range(0..RHYTHMS.len())]
                .iter()
                .map(|&len| {
                    let mut sung = degree;
                    if !first && rng.random_bool(VARIATION) {
                        sung += if rng.random_bool(0.5) { 1 } else { -1 };
                    }
                    first = false;
                    degree = next_degree(rng, moves, degree);
                    (len, sung)
                })
                .collect()
        })
        .collect()
}

fn song(index: usize, rng: &mut ChaCha8Rng) -> String {
    let family = rng.random_range(0..FAMILIES.len());
    let (tonic, key_sig) = KEYS[rng.random_range(0..KEYS.len())];

    let mut out = String::new();
    let _ = writeln!(out, "!!!OTL: Synthetic melody {:03}", index + 1);
    let _ = writeln!(out, "!!!ONB: generated fixture, family {}", family + 1);
    out.push_str("**kern\n*M4/4\n");
    let _ = writeln!(out, "*k[{key_sig}]");

    let bars = phrase(rng, FAMILIES[family]);
    for (b, bar) in bars.iter().enumerate() {
        let _ = writeln!(out, "={}", b + 1);
        for (i, &(len, degree)) in bar.iter().enumerate() {
            let pitch = kern_pitch(degree_to_midi(tonic, degree));
            if len == 8 && rng.random_bool(0.1) {
                let _ = writeln!(out, "[4{pitch}\n4{pitch}]");
            } else if len == 4 && b + 1 < BARS && i > 0 && rng.random_bool(0.03) {
                out.push_str("4r\n");
            } else {
                let _ = writeln!(out, "{}{pitch}", kern_duration(len));
            }
        }
    }
    out.push_str("==\n*-\n");
    out
}

fn main() {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().expect("usage: make_fixtures <out_dir> [count] [seed]"));
    let count: usize = args.next().map_or(800, |c| c.parse().expect("count"));
    let seed: u64 = args.next().map_or(20240521, |s| s.parse().expect("seed"));
    fs::create_dir_all(&dir).expect("create output directory");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..count {
        let path = dir.join(format!("syn{:03}.krn", i + 1));
        fs::write(&path, song(i, &mut rng)).expect("write fixture");
    }
    println!("wrote {count} melodies to {}", dir.display());
}
