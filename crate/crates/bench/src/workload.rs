//! Workload generation: key distributions, operation mix, prefill.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use nvset_core::substrate::harness::OpKind;

#[derive(Debug, thiserror::Error)]
pub enum WorkloadError {
    #[error("key range must be at least 2, got {0}")]
    KeyRange(i64),
    #[error("operation percentages sum to {0}, not 100")]
    MixSum(u32),
    #[error("zipf exponent must be nonnegative, got {0}")]
    NegativeTheta(f64),
    #[error("unknown distribution {0:?} (expected uniform or zipf:<theta>)")]
    BadDist(String),
    #[error("prefill requested twice")]
    DoublePrefill,
}

/// Key distribution over [1, K].
#[derive(Clone, Debug)]
pub enum Dist {
    Uniform,
    /// P(rank r) proportional to r^-theta, via a cumulative table.
    Zipf { name: String, cdf: Vec<f64> },
}

impl Dist {
    pub fn parse(text: &str, key_range: i64) -> Result<Dist, WorkloadError> {
        if text == "uniform" {
            return Ok(Dist::Uniform);
        }
        let Some(theta_text) = text.strip_prefix("zipf:") else {
            return Err(WorkloadError::BadDist(text.to_string()));
        };
        let theta: f64 = theta_text
            .parse()
            .map_err(|_| WorkloadError::BadDist(text.to_string()))?;
        if theta < 0.0 {
            return Err(WorkloadError::NegativeTheta(theta));
        }
        let mut weights = Vec::with_capacity(key_range as usize);
        for r in 1..=key_range {
            weights.push((r as f64).powf(-theta));
        }
        let total: f64 = weights.iter().sum();
        let mut cdf = Vec::with_capacity(weights.len());
        let mut acc = 0.0;
        for w in &weights {
            acc += w / total;
            cdf.push(acc);
        }
        *cdf.last_mut().unwrap() = 1.0;
        Ok(Dist::Zipf {
            name: text.to_string(),
            cdf,
        })
    }

    pub fn name(&self) -> &str {
        match self {
            Dist::Uniform => "uniform",
            Dist::Zipf { name, .. } => name,
        }
    }

    fn sample(&self, key_range: i64, rng: &mut ChaCha8Rng) -> i64 {
        match self {
            Dist::Uniform => rng.gen_range(1..=key_range),
            Dist::Zipf { cdf, .. } => {
                let u: f64 = rng.gen();
                cdf.partition_point(|&c| c <= u) as i64 + 1
            }
        }
    }

    #[cfg(test)]
    fn cdf(&self) -> &[f64] {
        match self {
            Dist::Uniform => &[],
            Dist::Zipf { cdf, .. } => cdf,
        }
    }
}

/// Operation percentages; must sum to 100.
#[derive(Clone, Copy, Debug)]
pub struct Mix {
    pub search_pct: u32,
    pub insert_pct: u32,
    pub remove_pct: u32,
}

impl Mix {
    fn validate(self) -> Result<Self, WorkloadError> {
        let sum = self.search_pct + self.insert_pct + self.remove_pct;
        if sum != 100 {
            return Err(WorkloadError::MixSum(sum));
        }
        Ok(self)
    }
}

/// A validated workload: key range, distribution, and op mix.
#[derive(Clone, Debug)]
pub struct Workload {
    pub key_range: i64,
    pub dist: Dist,
    pub mix: Mix,
    prefilled: bool,
}

impl Workload {
    pub fn new(key_range: i64, dist: Dist, mix: Mix) -> Result<Workload, WorkloadError> {
        if key_range < 2 {
            return Err(WorkloadError::KeyRange(key_range));
        }
        Ok(Workload {
            key_range,
            dist,
            mix: mix.validate()?,
            prefilled: false,
        })
    }

    /// Distinct random keys (with values) filling the set to half the key
    /// range. Callable once per workload instance.
    pub fn prefill(&mut self, rng: &mut ChaCha8Rng) -> Result<Vec<(i64, u64)>, WorkloadError> {
        if self.prefilled {
            return Err(WorkloadError::DoublePrefill);
        }
        self.prefilled = true;
        let take = (self.key_range / 2) as usize;
        let mut all: Vec<i64> = (1..=self.key_range).collect();
        let (picked, _) = all.partial_shuffle(rng, take);
        let mut items: Vec<(i64, u64)> = picked
            .iter()
            .map(|&k| (k, rng.gen_range(1..1_000_000)))
            .collect();
        items.sort_unstable_by_key(|&(k, _)| k);
        Ok(items)
    }

    pub fn sample_key(&self, rng: &mut ChaCha8Rng) -> i64 {
        self.dist.sample(self.key_range, rng)
    }

    /// Next operation under the mix: kind, key, and an insert value.
    pub fn sample_op(&self, rng: &mut ChaCha8Rng) -> (OpKind, i64, u64) {
        let roll = rng.gen_range(0..100u32);
        let kind = if roll < self.mix.search_pct {
            OpKind::Contains
        } else if roll < self.mix.search_pct + self.mix.insert_pct {
            OpKind::Insert
        } else {
            OpKind::Remove
        };
        let key = self.sample_key(rng);
        let value = rng.gen_range(1..1_000_000);
        (kind, key, value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn mix(s: u32, i: u32, r: u32) -> Mix {
        Mix {
            search_pct: s,
            insert_pct: i,
            remove_pct: r,
        }
    }

    #[test]
    fn uniform_frequencies_stay_within_five_sigma() {
        let w = Workload::new(100, Dist::Uniform, mix(100, 0, 0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 1_000_000usize;
        let mut counts = vec![0u64; 101];
        for _ in 0..n {
            counts[w.sample_key(&mut rng) as usize] += 1;
        }
        let expect = n as f64 / 100.0;
        let sigma = (n as f64 * 0.01 * 0.99).sqrt();
        for k in 1..=100 {
            let dev = (counts[k] as f64 - expect).abs();
            assert!(dev <= 5.0 * sigma, "key {k}: count {} off by {dev}", counts[k]);
        }
    }

    #[test]
    fn zipf_two_keys_theta_one_splits_two_to_one() {
        let d = Dist::parse("zipf:1", 2).unwrap();
        let cdf = d.cdf();
        assert!((cdf[0] - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(cdf[1], 1.0);
    }

    #[test]
    fn zipf_zero_theta_is_uniform() {
        let d = Dist::parse("zipf:0", 10).unwrap();
        for (i, &c) in d.cdf().iter().enumerate() {
            assert!((c - (i + 1) as f64 / 10.0).abs() < 1e-12, "rank {i}");
        }
    }

    #[test]
    fn zipf_skews_toward_low_ranks() {
        let d = Dist::parse("zipf:0.99", 50).unwrap();
        let w = Workload::new(50, d, mix(100, 0, 0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut first = 0u64;
        let n = 100_000;
        for _ in 0..n {
            if w.sample_key(&mut rng) == 1 {
                first += 1;
            }
        }
        // Rank 1 carries ~22% of the mass at theta=0.99, K=50; uniform
        // would give 2%.
        assert!(first > n / 10, "rank-1 count {first} of {n}");
    }

    #[test]
    fn prefill_is_half_distinct_sorted_and_single_shot() {
        let mut w = Workload::new(100, Dist::Uniform, mix(100, 0, 0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let items = w.prefill(&mut rng).unwrap();
        assert_eq!(items.len(), 50);
        for pair in items.windows(2) {
            assert!(pair[0].0 < pair[1].0);
        }
        assert!(items.iter().all(|&(k, _)| (1..=100).contains(&k)));
        assert!(matches!(
            w.prefill(&mut rng),
            Err(WorkloadError::DoublePrefill)
        ));
    }

    #[test]
    fn tiny_key_range_prefills_one_key() {
        let mut w = Workload::new(2, Dist::Uniform, mix(100, 0, 0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(w.prefill(&mut rng).unwrap().len(), 1);
    }

    #[test]
    fn config_errors_are_loud() {
        assert!(matches!(
            Workload::new(1, Dist::Uniform, mix(100, 0, 0)),
            Err(WorkloadError::KeyRange(1))
        ));
        assert!(matches!(
            Workload::new(10, Dist::Uniform, mix(90, 9, 0)),
            Err(WorkloadError::MixSum(99))
        ));
        assert!(matches!(
            Dist::parse("zipf:-0.5", 10),
            Err(WorkloadError::NegativeTheta(_))
        ));
        assert!(matches!(
            Dist::parse("pareto", 10),
            Err(WorkloadError::BadDist(_))
        ));
    }

    #[test]
    fn mix_sampling_matches_percentages_roughly() {
        let w = Workload::new(64, Dist::Uniform, mix(60, 20, 20)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut searches = 0;
        for _ in 0..10_000 {
            if matches!(w.sample_op(&mut rng).0, OpKind::Contains) {
                searches += 1;
            }
        }
        assert!((5_500..6_500).contains(&searches), "{searches}");
    }
}
