use rand::Rng;

/// A (center, context) id pair drawn from one song.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TrainingPair {
    pub center: usize,
    pub context: usize,
}

/// Pairs for the center at position `t` using a fixed reach `span`.
pub fn pairs_for_center(ids: &[usize], t: usize, span: usize, out: &mut Vec<TrainingPair>) {
    let lo = t.saturating_sub(span);
    let hi = (t + span).min(ids.len().saturating_sub(1));
    for c in lo..=hi {
        if c != t {
            out.push(TrainingPair {
                center: ids[t],
                context: ids[c],
            });
        }
    }
}

/// Skip-gram pairs with a dynamic window: each center draws its reach
/// uniformly from `1..=window`.
pub fn generate_pairs<R: Rng + ?Sized>(
    ids: &[usize],
    window: usize,
    rng: &mut R,
) -> Vec<TrainingPair> {
    assert!(window >= 1);
    let mut out = Vec::new();
    for t in 0..ids.len() {
        let span = rng.random_range(1..=window);
        pairs_for_center(ids, t, span, &mut out);
    }
    out
}
