//! Survey-style sample sizing and seeded sampling without replacement.
//!
//! Sampling draws from a ChaCha8 stream seeded with `seed` (expanded through
//! `SeedableRng::seed_from_u64`) and runs a partial Fisher-Yates shuffle with
//! Lemire's widening-multiply range reduction, so a given seed selects the
//! same records on every platform.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::{CorpusError, SnippetRecord};

pub const DEFAULT_RESPONSE_PROPORTION: f64 = 0.5;

/// Conventional rounded critical values, as printed in survey tables.
const TABULATED_Z: &[(f64, f64)] = &[
    (0.80, 1.28),
    (0.85, 1.44),
    (0.90, 1.645),
    (0.95, 1.96),
    (0.98, 2.33),
    (0.99, 2.576),
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleSpec {
    pub population_size: u64,
    pub confidence: f64,
    pub margin_of_error: f64,
    pub response_proportion: f64,
    pub seed: u64,
}

impl SampleSpec {
    pub fn new(population_size: u64, confidence: f64, margin_of_error: f64, seed: u64) -> Self {
        SampleSpec {
            population_size,
            confidence,
            margin_of_error,
            response_proportion: DEFAULT_RESPONSE_PROPORTION,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.population_size == 0 {
            return Err(CorpusError::InvalidSpec("population_size must be positive".into()));
        }
        for (name, v) in [
            ("confidence", self.confidence),
            ("margin_of_error", self.margin_of_error),
            ("response_proportion", self.response_proportion),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(CorpusError::InvalidSpec(format!("{name} must lie in (0, 1), got {v}")));
            }
        }
        Ok(())
    }

    pub fn sample_size(&self) -> Result<u64, CorpusError> {
        sample_size(
            self.population_size,
            self.confidence,
            self.margin_of_error,
            self.response_proportion,
        )
    }
}

/// Two-tailed standard normal critical value for `confidence`.
///
/// Common levels use the rounded table values (1.96 at 95%); anything else is
/// computed from the inverse normal CDF.
pub fn critical_value(confidence: f64) -> f64 {
    if let Some(&(_, z)) = TABULATED_Z
        .iter()
        .find(|(level, _)| (level - confidence).abs() < 1e-12)
    {
        return z;
    }
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    normal.inverse_cdf(1.0 - (1.0 - confidence) / 2.0)
}

/// Required sample size with finite population correction, rounded up.
///
/// `n = ceil( (z²·p(1−p)/e²) / (1 + z²·p(1−p)/(e²·N)) )`, never more than `N`.
pub fn sample_size(
    population_size: u64,
    confidence: f64,
    margin_of_error: f64,
    response_proportion: f64,
) -> Result<u64, CorpusError> {
    SampleSpec {
        population_size,
        confidence,
        margin_of_error,
        response_proportion,
        seed: 0,
    }
    .validate()?;
    let z = critical_value(confidence);
    let p = response_proportion;
    let infinite = z * z * p * (1.0 - p) / (margin_of_error * margin_of_error);
    let corrected = infinite / (1.0 + infinite / population_size as f64);
    // absorb float noise so an exact integer is not bumped to the next one
    let n = (corrected - 1e-9).ceil().max(1.0) as u64;
    Ok(n.min(population_size))
}

/// Uniform integer in `0..bound` (Lemire, unbiased).
fn bounded(rng: &mut ChaCha8Rng, bound: u64) -> u64 {
    debug_assert!(bound > 0);
    let threshold = bound.wrapping_neg() % bound;
    loop {
        let m = (rng.next_u64() as u128) * (bound as u128);
        if (m as u64) >= threshold {
            return (m >> 64) as u64;
        }
    }
}

/// Indices of a uniform `k`-subset of `0..n`, ascending.
fn choose_indices(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = i + bounded(&mut rng, (n - i) as u64) as usize;
        pool.swap(i, j);
    }
    let mut chosen = pool[..k].to_vec();
    chosen.sort_unstable();
    chosen
}

/// Draws a seeded sample of `max(computed size, override)` records, kept in corpus order.
pub fn draw_sample(
    records: &[SnippetRecord],
    spec: &SampleSpec,
    override_count: Option<usize>,
) -> Result<Vec<SnippetRecord>, CorpusError> {
    if records.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    if spec.population_size != records.len() as u64 {
        return Err(CorpusError::PopulationMismatch {
            spec: spec.population_size,
            actual: records.len(),
        });
    }
    let computed = spec.sample_size()? as usize;
    if let Some(requested) = override_count {
        if requested > records.len() {
            return Err(CorpusError::OverrideExceedsPopulation {
                requested,
                population: records.len(),
            });
        }
    }
    let k = computed.max(override_count.unwrap_or(0));
    Ok(choose_indices(records.len(), k, spec.seed)
        .into_iter()
        .map(|i| records[i].clone())
        .collect())
}
