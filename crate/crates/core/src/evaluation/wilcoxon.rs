//! Two-sided Wilcoxon rank-sum (Mann-Whitney U) test.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

/// Largest combined sample size for which the exact null distribution is
/// enumerated (tie-free samples only).
pub const EXACT_MAX_TOTAL: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PValueMethod {
    Exact,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankSumTest {
    /// Mann-Whitney U of the first sample.
    pub statistic: f64,
    pub p_value: f64,
    pub method: PValueMethod,
}

/// Ranks of the pooled sample, tied values sharing their mean rank.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let rank = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

/// Number of ways to pick `m` of the ranks `1..=total` for each possible
/// value of U (rank sum minus its minimum).
fn u_distribution(m: usize, total: usize) -> Vec<f64> {
    let max_u = m * (total - m);
    // ways[k][s]: subsets of size k with rank sum offset s
    let max_sum = m * total;
    let mut ways = vec![vec![0f64; max_sum + 1]; m + 1];
    ways[0][0] = 1.0;
    for r in 1..=total {
        for k in (1..=m.min(r)).rev() {
            for s in (r..=max_sum).rev() {
                ways[k][s] += ways[k - 1][s - r];
            }
        }
    }
    let min_sum = m * (m + 1) / 2;
    (0..=max_u).map(|u| ways[m][u + min_sum]).collect()
}

pub fn wilcoxon_rank_sum(a: &[f64], b: &[f64]) -> RankSumTest {
    assert!(
        !a.is_empty() && !b.is_empty(),
        "both samples need at least one value"
    );
    let (na, nb) = (a.len(), b.len());
    let total = na + nb;
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = midranks(&pooled);
    let rank_sum_a: f64 = ranks[..na].iter().sum();
    let u = rank_sum_a - (na * (na + 1)) as f64 / 2.0;

    let mut sorted = pooled.clone();
    sorted.sort_by(f64::total_cmp);
    let tie_groups: Vec<usize> = sorted.chunk_by(|x, y| x == y).map(<[f64]>::len).collect();
    let has_ties = tie_groups.iter().any(|&t| t > 1);

    if total <= EXACT_MAX_TOTAL && !has_ties {
        let dist = u_distribution(na, total);
        let all: f64 = dist.iter().sum();
        let u_int = u.round() as usize;
        let lower: f64 = dist[..=u_int].iter().sum::<f64>() / all;
        let upper: f64 = dist[u_int..].iter().sum::<f64>() / all;
        return RankSumTest {
            statistic: u,
            p_value: (2.0 * lower.min(upper)).min(1.0),
            method: PValueMethod::Exact,
        };
    }

    let (naf, nbf, nf) = (na as f64, nb as f64, total as f64);
    let mean = naf * nbf / 2.0;
    let tie_term: f64 = tie_groups.iter().map(|&t| (t * t * t - t) as f64).sum();
    let variance = naf * nbf / 12.0 * ((nf + 1.0) - tie_term / (nf * (nf - 1.0)));
    let p_value = if variance <= 0.0 {
        1.0
    } else {
        let z = ((u - mean).abs() - 0.5).max(0.0) / variance.sqrt();
        erfc(z / std::f64::consts::SQRT_2).min(1.0)
    };
    RankSumTest {
        statistic: u,
        p_value,
        method: PValueMethod::Normal,
    }
}
