use rand::Rng;

const MAX_RESAMPLES: usize = 8;

/// Cumulative unigram noise distribution, `count^power` normalised.
#[derive(Debug, Clone)]
pub struct NoiseTable {
    cumulative: Vec<f64>,
}

impl NoiseTable {
    pub fn new(counts: &[u64], power: f64) -> Self {
        assert!(!counts.is_empty(), "noise table needs at least one token");
        let mut acc = 0.0;
        let mut cumulative: Vec<f64> = counts
            .iter()
            .map(|&c| {
                acc += (c as f64).powf(power);
                acc
            })
            .collect();
        let total = acc;
        for c in &mut cumulative {
            *c /= total;
        }
        *cumulative.last_mut().unwrap() = 1.0;
        NoiseTable { cumulative }
    }

    pub fn len(&self) -> usize {
        self.cumulative.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cumulative.is_empty()
    }

    pub fn probability(&self, id: usize) -> f64 {
        let prev = if id == 0 {
            0.0
        } else {
            self.cumulative[id - 1]
        };
        self.cumulative[id] - prev
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        self.cumulative
            .partition_point(|&c| c <= u)
            .min(self.cumulative.len() - 1)
    }
}

/// Draws a noise id, retrying a few times when it collides with the
/// positive context.
pub fn sample_negative<R: Rng + ?Sized>(table: &NoiseTable, rng: &mut R, positive: usize) -> usize {
    let mut id = table.draw(rng);
    for _ in 0..MAX_RESAMPLES {
        if id != positive {
            break;
        }
        id = table.draw(rng);
    }
    id
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn frequency_of_zero(counts: &[u64], draws: usize) -> f64 {
        let table = NoiseTable::new(counts, 0.75);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let hits = (0..draws).filter(|_| table.draw(&mut rng) == 0).count();
        hits as f64 / draws as f64
    }

    #[test]
    fn single_token() {
        let table = NoiseTable::new(&[3], 0.75);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            assert_eq!(sample_negative(&table, &mut rng, 0), 0);
        }
    }

    #[test]
    fn symmetric_counts() {
        let f = frequency_of_zero(&[1, 1], 100_000);
        assert!((f - 0.5).abs() < 0.01, "{f}");
    }

    #[test]
    fn smoothed_frequencies() {
        let expected = 8f64.powf(0.75) / (8f64.powf(0.75) + 1.0);
        assert!((expected - 0.8262).abs() < 1e-4);
        let table = NoiseTable::new(&[8, 1], 0.75);
        assert!((table.probability(0) - expected).abs() < 1e-12);
        let f = frequency_of_zero(&[8, 1], 100_000);
        assert!((f - expected).abs() < 0.01, "{f}");
    }

    #[test]
    fn avoids_positive_when_possible() {
        let table = NoiseTable::new(&[1000, 1], 0.75);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let collisions = (0..10_000)
            .filter(|_| sample_negative(&table, &mut rng, 0) == 0)
            .count();
        // a collision survives only when the first draw and all 8 retries hit id 0
        let p0 = table.probability(0);
        let expected = p0.powi(9) * 10_000.0;
        assert!((collisions as f64 - expected).abs() < 0.05 * 10_000.0);
    }
}
