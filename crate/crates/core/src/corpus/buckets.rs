use serde::{Deserialize, Serialize};

use super::vocab::{TokenId, Vocab, NUM_SPECIALS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Bucket {
    High,
    Medium,
    Low,
}

impl Bucket {
    pub const ALL: [Bucket; 3] = [Bucket::High, Bucket::Medium, Bucket::Low];

    pub fn name(self) -> &'static str {
        match self {
            Bucket::High => "high",
            Bucket::Medium => "medium",
            Bucket::Low => "low",
        }
    }
}

/// High/Medium/Low class of every vocabulary entry by training count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrequencyBuckets {
    assignment: Vec<Bucket>,
    pub cutoff_low: u64,
    pub cutoff_high: u64,
}

impl FrequencyBuckets {
    /// Bucket of `id`. Specials, UNK and out-of-vocabulary ids are Low.
    pub fn bucket(&self, id: TokenId) -> Bucket {
        self.assignment.get(id as usize).copied().unwrap_or(Bucket::Low)
    }

    /// Number of non-special types per bucket, in [`Bucket::ALL`] order.
    pub fn populations(&self) -> [usize; 3] {
        let mut pop = [0; 3];
        for b in &self.assignment[NUM_SPECIALS.min(self.assignment.len())..] {
            pop[*b as usize] += 1;
        }
        pop
    }
}

/// Assigns Low when `count < cutoff_low`, High when `count >= cutoff_high`,
/// Medium otherwise. Cutoffs are swapped if given in the wrong order.
pub fn bucketize(vocab: &Vocab, cutoff_low: u64, cutoff_high: u64) -> FrequencyBuckets {
    let (lo, hi) = if cutoff_low <= cutoff_high { (cutoff_low, cutoff_high) } else { (cutoff_high, cutoff_low) };
    let assignment = (0..vocab.len() as TokenId)
        .map(|id| {
            if Vocab::is_special(id) {
                return Bucket::Low;
            }
            let c = vocab.count(id);
            if c < lo {
                Bucket::Low
            } else if c >= hi {
                Bucket::High
            } else {
                Bucket::Medium
            }
        })
        .collect();
    FrequencyBuckets { assignment, cutoff_low: lo, cutoff_high: hi }
}

/// Percentile cutoffs over non-special type counts: types at or below the
/// 33rd-percentile count are Low, types above the 67th-percentile count are High.
pub fn default_cutoffs(vocab: &Vocab) -> (u64, u64) {
    let mut counts: Vec<u64> = vocab.regular_ids().map(|id| vocab.count(id)).collect();
    if counts.is_empty() {
        return (1, 1);
    }
    counts.sort_unstable();
    let nearest_rank = |p: f64| {
        let rank = ((p * counts.len() as f64).ceil() as usize).clamp(1, counts.len());
        counts[rank - 1]
    };
    (nearest_rank(0.33) + 1, nearest_rank(0.67) + 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab_with(counts: &[(&str, usize)]) -> Vocab {
        let mut v = Vocab::new();
        for &(tok, n) in counts {
            for _ in 0..n {
                v.observe(tok);
            }
        }
        v
    }

    #[test]
    fn thresholds_apply() {
        let v = vocab_with(&[("a", 100), ("b", 10), ("c", 1)]);
        let b = bucketize(&v, 5, 50);
        assert_eq!(b.bucket(v.id("a")), Bucket::High);
        assert_eq!(b.bucket(v.id("b")), Bucket::Medium);
        assert_eq!(b.bucket(v.id("c")), Bucket::Low);
        assert_eq!(b.bucket(super::super::UNK), Bucket::Low);
    }

    #[test]
    fn unit_cutoffs_make_everything_high() {
        let v = vocab_with(&[("a", 100), ("b", 10), ("c", 1)]);
        let b = bucketize(&v, 1, 1);
        assert_eq!(b.populations(), [3, 0, 0]);
    }

    #[test]
    fn default_cutoffs_split_in_thirds() {
        let counts: Vec<(String, usize)> = (1..=9).map(|i| (format!("t{i}"), i)).collect();
        let v = vocab_with(&counts.iter().map(|(t, n)| (t.as_str(), *n)).collect::<Vec<_>>());
        // counts 1..=9: 33rd percentile = 3, 67th = 7
        assert_eq!(default_cutoffs(&v), (4, 8));
        let b = bucketize(&v, 4, 8);
        assert_eq!(b.populations(), [2, 4, 3]);
    }
}
