//! Cosine similarity and exact neighbour queries over input vectors.

use rand::seq::IndexedRandom;
use rand::Rng;
use thiserror::Error;

use crate::encoding::token_size;
use crate::sgns::EmbeddingModel;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimilarityError {
    #[error("zero-length vector")]
    ZeroVector,
    #[error("vectors have different dimensions ({0} vs {1})")]
    DimensionMismatch(usize, usize),
    #[error("token '{0}' is not in the model vocabulary")]
    UnknownToken(String),
    #[error("no token has cosine below {h} with '{token}'")]
    NoUnrelatedFound { token: String, h: f64 },
}

fn norm(a: &[f32]) -> f64 {
    a.iter().map(|&x| x as f64 * x as f64).sum::<f64>().sqrt()
}

fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

pub fn cosine(a: &[f32], b: &[f32]) -> Result<f64, SimilarityError> {
    if a.len() != b.len() {
        return Err(SimilarityError::DimensionMismatch(a.len(), b.len()));
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(SimilarityError::ZeroVector);
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeighborList {
    pub query: String,
    /// Descending by score, ties by ascending token id.
    pub neighbors: Vec<(String, f64)>,
}

/// Restricts which vocabulary entries a query may return.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Candidates {
    #[default]
    All,
    /// Only tokens standing for exactly this many intervals.
    Size(usize),
}

impl Candidates {
    fn admits(self, token: &str) -> bool {
        match self {
            Candidates::All => true,
            Candidates::Size(n) => token_size(token) == n,
        }
    }
}

/// Cosine of `token` against every admissible other token, in id order.
/// Tokens with zero vectors are left out.
fn scores(
    model: &EmbeddingModel,
    token: &str,
    candidates: Candidates,
) -> Result<(usize, Vec<(usize, f64)>), SimilarityError> {
    let qid = model
        .vocab
        .id(token)
        .ok_or_else(|| SimilarityError::UnknownToken(token.to_owned()))?;
    let q = model.input_row(qid);
    let qn = norm(q);
    if qn == 0.0 {
        return Err(SimilarityError::ZeroVector);
    }
    let mut out = Vec::with_capacity(model.len());
    for (id, t, _) in model.vocab.iter() {
        if id == qid || !candidates.admits(t) {
            continue;
        }
        let v = model.input_row(id);
        let vn = norm(v);
        if vn == 0.0 {
            continue;
        }
        out.push((id, (dot(q, v) / (qn * vn)).clamp(-1.0, 1.0)));
    }
    Ok((qid, out))
}

pub fn nearest(
    model: &EmbeddingModel,
    token: &str,
    k: usize,
) -> Result<NeighborList, SimilarityError> {
    nearest_among(model, token, k, Candidates::All)
}

/// Exact top-`k` by cosine over the admissible tokens other than the query.
pub fn nearest_among(
    model: &EmbeddingModel,
    token: &str,
    k: usize,
    candidates: Candidates,
) -> Result<NeighborList, SimilarityError> {
    let (_, mut scored) = scores(model, token, candidates)?;
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.truncate(k);
    Ok(NeighborList {
        query: token.to_owned(),
        neighbors: scored
            .into_iter()
            .map(|(id, s)| (model.vocab.token(id).to_owned(), s))
            .collect(),
    })
}

/// Uniform choice among admissible tokens whose cosine with `token` is
/// below `h`.
pub fn pick_unrelated<R: Rng + ?Sized>(
    model: &EmbeddingModel,
    token: &str,
    h: f64,
    candidates: Candidates,
    rng: &mut R,
) -> Result<String, SimilarityError> {
    let (_, scored) = scores(model, token, candidates)?;
    let pool: Vec<usize> = scored
        .into_iter()
        .filter(|(_, s)| *s < h)
        .map(|(id, _)| id)
        .collect();
    pool.choose(rng)
        .map(|&id| model.vocab.token(id).to_owned())
        .ok_or_else(|| SimilarityError::NoUnrelatedFound {
            token: token.to_owned(),
            h,
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::Vocabulary;
    use crate::sgns::TrainConfig;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model(rows: &[(&str, [f32; 2])]) -> EmbeddingModel {
        let vocab =
            Vocabulary::from_entries(rows.iter().map(|(t, _)| (t.to_string(), 1)).collect(), 2);
        let mut m = EmbeddingModel::with_vocab(
            vocab,
            TrainConfig {
                dim: 2,
                ..Default::default()
            },
        );
        m.input_vectors = rows.iter().flat_map(|(_, v)| *v).collect();
        m
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine(&[1.0, 0.0], &[1.0, 0.0]), Ok(1.0));
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]), Ok(0.0));
        let c = cosine(&[1.0, 1.0], &[1.0, 0.0]).unwrap();
        assert!((c - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-8);
        assert_eq!(
            cosine(&[0.0, 0.0], &[1.0, 0.0]),
            Err(SimilarityError::ZeroVector)
        );
        assert_eq!(
            cosine(&[1.0], &[1.0, 0.0]),
            Err(SimilarityError::DimensionMismatch(1, 2))
        );
    }

    #[test]
    fn nearest_sorted_with_tie_break() {
        let m = model(&[
            ("21_21", [1.0, 0.0]),
            ("10_10", [0.0, 1.0]),
            ("21_10", [1.0, 1.0]),
            ("30_30", [2.0, 0.0]),
            ("50", [1.0, 0.1]),
            ("70_70", [3.0, 0.0]),
        ]);
        let all = nearest(&m, "21_21", 10).unwrap();
        let names: Vec<_> = all.neighbors.iter().map(|(t, _)| t.as_str()).collect();
        // "30_30" and "70_70" tie at 1.0, lower id first
        assert_eq!(names, ["30_30", "70_70", "50", "21_10", "10_10"]);
        let sized = nearest_among(&m, "21_21", 2, Candidates::Size(2)).unwrap();
        assert_eq!(sized.neighbors.len(), 2);
        assert!(sized.neighbors.iter().all(|(t, _)| token_size(t) == 2));
        assert_eq!(
            nearest(&m, "99", 1),
            Err(SimilarityError::UnknownToken("99".into()))
        );
    }

    #[test]
    fn unrelated_threshold() {
        let m = model(&[
            ("21_21", [1.0, 0.0]),
            ("10_10", [0.0, 1.0]),
            ("30_30", [1.0, 0.05]),
        ]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let t = pick_unrelated(&m, "21_21", 1.0, Candidates::All, &mut rng).unwrap();
            assert_ne!(t, "21_21");
        }
        assert_eq!(
            pick_unrelated(&m, "21_21", 0.2, Candidates::All, &mut rng).unwrap(),
            "10_10"
        );
        assert!(matches!(
            pick_unrelated(&m, "21_21", -1.0, Candidates::All, &mut rng),
            Err(SimilarityError::NoUnrelatedFound { .. })
        ));
    }

    fn vec_strategy() -> impl Strategy<Value = Vec<f32>> {
        prop::collection::vec(-10f32..10.0, 6)
            .prop_filter("non-zero", |v| v.iter().any(|x| x.abs() > 1e-3))
    }

    proptest! {
        #[test]
        fn cosine_properties(a in vec_strategy(), b in vec_strategy(), scale in 0.01f32..100.0) {
            prop_assert!((cosine(&a, &a).unwrap() - 1.0).abs() < 1e-9);
            let ab = cosine(&a, &b).unwrap();
            prop_assert!((ab - cosine(&b, &a).unwrap()).abs() < 1e-12);
            prop_assert!((-1.0..=1.0).contains(&ab));
            let scaled: Vec<f32> = a.iter().map(|x| x * scale).collect();
            prop_assert!((cosine(&scaled, &b).unwrap() - ab).abs() < 1e-5);
        }

        #[test]
        fn nearest_matches_exhaustive_scan(rows in prop::collection::vec(vec_strategy(), 3..15), q in 0usize..3) {
            let vocab = Vocabulary::from_entries((0..rows.len()).map(|i| (format!("{}1", i + 1), 1)).collect(), 0);
            let mut m = EmbeddingModel::with_vocab(vocab, TrainConfig { dim: 6, ..Default::default() });
            m.input_vectors = rows.iter().flatten().copied().collect();
            let token = m.vocab.token(q).to_owned();
            let got = nearest(&m, &token, 1).unwrap();
            let mut best: Option<(usize, f64)> = None;
            for (id, row) in rows.iter().enumerate() {
                if id == q { continue; }
                let c = cosine(&rows[q], row).unwrap();
                if best.is_none_or(|(_, b)| c > b) {
                    best = Some((id, c));
                }
            }
            let (id, score) = best.unwrap();
            prop_assert_eq!(&got.neighbors[0].0, m.vocab.token(id));
            prop_assert!((got.neighbors[0].1 - score).abs() < 1e-12);
            let full = nearest(&m, &token, rows.len() - 1).unwrap();
            prop_assert_eq!(full.neighbors.len(), rows.len() - 1);
            prop_assert!(full.neighbors.windows(2).all(|w| w[0].1 >= w[1].1));
        }
    }
}
