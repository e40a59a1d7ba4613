//! Segment-level melodic distances.
//!
//! * `diffint`: mean absolute difference of two interval sequences.
//! * `citydist`: city-block (L1) distance of two MIDI pitch sequences.
//! * `corrdist`: one minus the Pearson correlation of two duration-weighted
//!   pitch series, where every note is repeated once per tatum it lasts.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoding::{EncodingError, TokenSequence};
use crate::kern::Duration;

/// Sixteenth-note grid, in quarter notes.
pub fn default_tatum() -> Duration {
    Duration::new(1, 4)
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MeasureError {
    #[error("sequences differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("empty sequence")]
    Empty,
    #[error("duration {duration} is not a multiple of the tatum {tatum}")]
    NonDivisibleDuration { duration: Duration, tatum: Duration },
    #[error("expected {expected} durations, got {got}")]
    DurationCount { expected: usize, got: usize },
    #[error("pitch {0} leaves the MIDI range")]
    PitchOutOfRange(i32),
    #[error(transparent)]
    Token(#[from] EncodingError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Measure {
    Diffint,
    Citydist,
    Corrdist,
}

impl Measure {
    pub const ALL: [Measure; 3] = [Measure::Diffint, Measure::Citydist, Measure::Corrdist];

    pub fn name(self) -> &'static str {
        match self {
            Measure::Diffint => "diffint",
            Measure::Citydist => "citydist",
            Measure::Corrdist => "corrdist",
        }
    }

    pub fn between(
        self,
        a: &SegmentRealization,
        b: &SegmentRealization,
    ) -> Result<f64, MeasureError> {
        match self {
            Measure::Diffint => diffint(&a.intervals, &b.intervals),
            Measure::Citydist => citydist(&a.pitches, &b.pitches),
            Measure::Corrdist => corrdist(&a.weighted_series, &b.weighted_series),
        }
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Measure {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "diffint" => Ok(Measure::Diffint),
            "citydist" => Ok(Measure::Citydist),
            "corrdist" => Ok(Measure::Corrdist),
            other => Err(format!(
                "unknown measure '{other}' (expected diffint, citydist or corrdist)"
            )),
        }
    }
}

/// A token sequence turned back into notes.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentRealization {
    pub intervals: Vec<i32>,
    pub pitches: Vec<i32>,
    pub weighted_series: Vec<i32>,
}

pub fn realize(
    tokens: &TokenSequence,
    anchor_pitch: i32,
    durations: &[Duration],
    tatum: Duration,
) -> Result<SegmentRealization, MeasureError> {
    let intervals = tokens.intervals()?;
    if durations.len() != intervals.len() + 1 {
        return Err(MeasureError::DurationCount {
            expected: intervals.len() + 1,
            got: durations.len(),
        });
    }
    let mut pitches = Vec::with_capacity(durations.len());
    let mut p = anchor_pitch;
    pitches.push(p);
    for d in &intervals {
        p += d;
        if !(0..=127).contains(&p) {
            return Err(MeasureError::PitchOutOfRange(p));
        }
        pitches.push(p);
    }
    let mut weighted_series = Vec::new();
    for (&pitch, &dur) in pitches.iter().zip(durations) {
        let ticks = dur / tatum;
        if !ticks.is_integer() || ticks.to_integer() == 0 {
            return Err(MeasureError::NonDivisibleDuration {
                duration: dur,
                tatum,
            });
        }
        weighted_series.extend(std::iter::repeat_n(pitch, ticks.to_integer() as usize));
    }
    Ok(SegmentRealization {
        intervals,
        pitches,
        weighted_series,
    })
}

fn check_lengths<T>(a: &[T], b: &[T]) -> Result<(), MeasureError> {
    if a.len() != b.len() {
        return Err(MeasureError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(MeasureError::Empty);
    }
    Ok(())
}

pub fn diffint(a: &[i32], b: &[i32]) -> Result<f64, MeasureError> {
    check_lengths(a, b)?;
    let total: i64 = a.iter().zip(b).map(|(x, y)| (x - y).abs() as i64).sum();
    Ok(total as f64 / a.len() as f64)
}

pub fn citydist(p: &[i32], q: &[i32]) -> Result<f64, MeasureError> {
    check_lengths(p, q)?;
    Ok(p.iter()
        .zip(q)
        .map(|(x, y)| (x - y).abs() as i64)
        .sum::<i64>() as f64)
}

/// `1 − r` for the Pearson correlation `r`. A constant series has no
/// correlation: two equal constant series are at distance 0, any other
/// pairing involving a constant series at distance 1.
pub fn corrdist<T: Copy + Into<f64>>(x: &[T], y: &[T]) -> Result<f64, MeasureError> {
    check_lengths(x, y)?;
    let xs: Vec<f64> = x.iter().map(|&v| v.into()).collect();
    let ys: Vec<f64> = y.iter().map(|&v| v.into()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in xs.iter().zip(&ys) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(if sxx == 0.0 && syy == 0.0 && xs == ys {
            0.0
        } else {
            1.0
        });
    }
    let r = (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0);
    Ok(1.0 - r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tokens(t: &[&str]) -> TokenSequence {
        TokenSequence::new("s", t.iter().map(|s| s.to_string()).collect())
    }

    #[test]
    fn realize_examples() {
        let q = Duration::from_integer(1);
        let r = realize(&tokens(&["21", "30"]), 60, &[q, q, q], default_tatum()).unwrap();
        assert_eq!(r.pitches, vec![60, 62, 59]);
        assert_eq!(r.intervals, vec![2, -3]);
        assert_eq!(r.weighted_series.len(), 12);
        assert_eq!(&r.weighted_series[..5], &[60, 60, 60, 60, 62]);

        let single = realize(&tokens(&[]), 60, &[q], Duration::from_integer(1)).unwrap();
        assert_eq!(single.pitches, vec![60]);
        assert_eq!(single.weighted_series, vec![60]);

        let err = realize(&tokens(&[]), 60, &[Duration::new(1, 3)], default_tatum());
        assert!(matches!(
            err,
            Err(MeasureError::NonDivisibleDuration { .. })
        ));
        let err = realize(&tokens(&["21"]), 60, &[q], default_tatum());
        assert_eq!(
            err,
            Err(MeasureError::DurationCount {
                expected: 2,
                got: 1
            })
        );
    }

    #[test]
    fn realize_flattens_multiwords() {
        let q = Duration::from_integer(1);
        let r = realize(&tokens(&["21_30", "00"]), 60, &[q; 4], q).unwrap();
        assert_eq!(r.pitches, vec![60, 62, 59, 59]);
    }

    #[test]
    fn diffint_examples() {
        assert_eq!(diffint(&[1, 2], &[1, 2]), Ok(0.0));
        assert_eq!(diffint(&[2, -3], &[2, -1]), Ok(1.0));
        assert_eq!(diffint(&[5], &[-5]), Ok(10.0));
        assert_eq!(
            diffint(&[1], &[1, 2]),
            Err(MeasureError::LengthMismatch(1, 2))
        );
        assert_eq!(diffint(&[], &[]), Err(MeasureError::Empty));
    }

    #[test]
    fn citydist_examples() {
        assert_eq!(citydist(&[60, 62], &[60, 62]), Ok(0.0));
        assert_eq!(citydist(&[60, 62, 64], &[60, 63, 64]), Ok(1.0));
        assert_eq!(citydist(&[60, 60], &[62, 58]), Ok(4.0));
    }

    #[test]
    fn corrdist_examples() {
        let x = [60, 62, 64, 62];
        assert!(corrdist(&x, &x).unwrap().abs() < 1e-12);
        let neg: Vec<i32> = x.iter().map(|v| 130 - v).collect();
        assert!((corrdist(&x, &neg).unwrap() - 2.0).abs() < 1e-12);
        // y = 1.5x - 30, so r = 1 regardless of scale
        assert!(corrdist(&x, &[60, 63, 66, 63]).unwrap().abs() < 1e-12);
        assert_eq!(corrdist(&[60, 60], &[60, 60]), Ok(0.0));
        assert_eq!(corrdist(&[60, 60], &[62, 62]), Ok(1.0));
        assert_eq!(corrdist(&[60, 60], &[60, 62]), Ok(1.0));
    }

    #[test]
    fn corrdist_against_textbook_formula() {
        // r = (nΣxy − ΣxΣy) / sqrt((nΣx² − (Σx)²)(nΣy² − (Σy)²))
        let x = [60.0, 62.0, 64.0, 65.0, 67.0, 65.0, 64.0, 62.0];
        let y = [60.0, 60.0, 62.0, 64.0, 64.0, 65.0, 62.0, 60.0];
        let n = x.len() as f64;
        let sx: f64 = x.iter().sum();
        let sy: f64 = y.iter().sum();
        let sxy: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        let sxx: f64 = x.iter().map(|a| a * a).sum();
        let syy: f64 = y.iter().map(|a| a * a).sum();
        let r = (n * sxy - sx * sy) / ((n * sxx - sx * sx) * (n * syy - sy * sy)).sqrt();
        assert!((corrdist(&x, &y).unwrap() - (1.0 - r)).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn metric_properties(a in prop::collection::vec(-12i32..12, 1..20), seed in prop::collection::vec(-12i32..12, 40)) {
            let b: Vec<i32> = seed[..a.len()].to_vec();
            let c: Vec<i32> = seed[20..20 + a.len()].to_vec();
            for f in [diffint, citydist] {
                prop_assert_eq!(f(&a, &a).unwrap(), 0.0);
                prop_assert_eq!(f(&a, &b).unwrap(), f(&b, &a).unwrap());
                prop_assert!(f(&a, &c).unwrap() <= f(&a, &b).unwrap() + f(&b, &c).unwrap() + 1e-12);
            }
            prop_assert_eq!(corrdist(&a, &b).unwrap(), corrdist(&b, &a).unwrap());
            prop_assert!(corrdist(&a, &a).unwrap().abs() < 1e-12);
        }

        #[test]
        fn corrdist_affine_invariance(x in prop::collection::vec(40.0f64..90.0, 2..30), y in prop::collection::vec(40.0f64..90.0, 30), alpha in 0.1f64..10.0, beta in -50.0f64..50.0) {
            let y = &y[..x.len()];
            prop_assume!(x.iter().any(|v| *v != x[0]) && y.iter().any(|v| *v != y[0]));
            let ay: Vec<f64> = y.iter().map(|v| alpha * v + beta).collect();
            prop_assert!((corrdist(&x, &ay).unwrap() - corrdist(&x, y).unwrap()).abs() < 1e-9);
        }

        #[test]
        fn transposition(p in prop::collection::vec(40i32..80, 1..20), q in prop::collection::vec(40i32..80, 20), k in -20i32..20) {
            let q = &q[..p.len()];
            let pk: Vec<i32> = p.iter().map(|v| v + k).collect();
            let qk: Vec<i32> = q.iter().map(|v| v + k).collect();
            prop_assert_eq!(citydist(&pk, &qk).unwrap(), citydist(&p, q).unwrap());
        }
    }
}
