//! Greedy token-matching similarity over token embeddings.
//!
//! Each reference token is matched to its most similar candidate token and
//! vice versa; the means of those maxima are recall and precision. There is
//! no idf weighting and no baseline rescaling.

use std::io::Write;

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SimilarityError {
    #[error("vector dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("zero vector")]
    ZeroVector,
    #[error("{0} side has no tokens")]
    EmptySide(&'static str),
    #[error("{tokens} tokens but {vectors} vectors")]
    CountMismatch { tokens: usize, vectors: usize },
    #[error("no scores to summarise")]
    EmptyInput,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl SimilarityScore {
    pub fn from_precision_recall(precision: f64, recall: f64) -> Self {
        let sum = precision + recall;
        let f1 = if sum != 0.0 {
            2.0 * precision * recall / sum
        } else {
            0.0
        };
        SimilarityScore {
            precision,
            recall,
            f1,
        }
    }

    pub fn has_negative(&self) -> bool {
        self.precision < 0.0 || self.recall < 0.0 || self.f1 < 0.0
    }
}

/// Lowercased alphanumeric runs. Everything else separates tokens and is dropped.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64, SimilarityError> {
    if u.len() != v.len() {
        return Err(SimilarityError::DimensionMismatch(u.len(), v.len()));
    }
    let nu = norm(u);
    let nv = norm(v);
    if nu == 0.0 || nv == 0.0 {
        return Err(SimilarityError::ZeroVector);
    }
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

fn norm(u: &[f64]) -> f64 {
    dot(u, u).sqrt()
}

/// Tokens with one embedding each. Vectors are stored unit-normalised.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenEmbeddingSet {
    tokens: Vec<String>,
    vectors: Vec<Vec<f64>>,
    unit: Vec<Vec<f64>>,
}

impl TokenEmbeddingSet {
    pub fn new(tokens: Vec<String>, vectors: Vec<Vec<f64>>) -> Result<Self, SimilarityError> {
        if tokens.len() != vectors.len() {
            return Err(SimilarityError::CountMismatch {
                tokens: tokens.len(),
                vectors: vectors.len(),
            });
        }
        if tokens.is_empty() {
            return Err(SimilarityError::EmptySide("embedding"));
        }
        let dim = vectors[0].len();
        let mut unit = Vec::with_capacity(vectors.len());
        for v in &vectors {
            if v.len() != dim {
                return Err(SimilarityError::DimensionMismatch(dim, v.len()));
            }
            let n = norm(v);
            if n == 0.0 || !n.is_finite() {
                return Err(SimilarityError::ZeroVector);
            }
            unit.push(v.iter().map(|x| x / n).collect());
        }
        Ok(TokenEmbeddingSet {
            tokens,
            vectors,
            unit,
        })
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    pub fn dim(&self) -> usize {
        self.vectors[0].len()
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Precision, recall and F1 of `candidate` against `reference`.
pub fn bertscore(
    candidate: &TokenEmbeddingSet,
    reference: &TokenEmbeddingSet,
) -> Result<SimilarityScore, SimilarityError> {
    if candidate.is_empty() {
        return Err(SimilarityError::EmptySide("candidate"));
    }
    if reference.is_empty() {
        return Err(SimilarityError::EmptySide("reference"));
    }
    if candidate.dim() != reference.dim() {
        return Err(SimilarityError::DimensionMismatch(candidate.dim(), reference.dim()));
    }
    // sim[i][j] = cos(candidate_i, reference_j)
    let sim: Vec<Vec<f64>> = candidate
        .unit
        .iter()
        .map(|c| {
            reference
                .unit
                .iter()
                .map(|r| dot(c, r).clamp(-1.0, 1.0))
                .collect()
        })
        .collect();
    let precision = sim
        .iter()
        .map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .sum::<f64>()
        / candidate.len() as f64;
    let recall = (0..reference.len())
        .map(|j| sim.iter().map(|row| row[j]).fold(f64::NEG_INFINITY, f64::max))
        .sum::<f64>()
        / reference.len() as f64;
    Ok(SimilarityScore::from_precision_recall(precision, recall))
}

pub const HISTOGRAM_BUCKETS: usize = 20;
pub const BUCKET_WIDTH: f64 = 0.05;

/// Summary of a set of F1 scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreDistribution {
    pub count: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    /// Twenty buckets of width 0.05 over [0, 1]; the last one includes 1.0.
    pub histogram: Vec<usize>,
    /// Scores below 0 fall outside the histogram and are counted here.
    pub below_zero: usize,
    pub any_negative_component: bool,
}

impl ScoreDistribution {
    /// Mean rounded to four decimals.
    pub fn mean_4dp(&self) -> f64 {
        (self.mean * 10_000.0).round() / 10_000.0
    }

    pub fn bucket_bounds(index: usize) -> (f64, f64) {
        let lo = index as f64 * BUCKET_WIDTH;
        (lo, lo + BUCKET_WIDTH)
    }
}

fn bucket_of(f1: f64) -> Option<usize> {
    if !(0.0..=1.0).contains(&f1) {
        return None;
    }
    // exact multiples of the width land in the upper bucket
    let idx = (f1 * 20.0 + 1e-9).floor() as usize;
    Some(idx.min(HISTOGRAM_BUCKETS - 1))
}

pub fn score_distribution(scores: &[SimilarityScore]) -> Result<ScoreDistribution, SimilarityError> {
    if scores.is_empty() {
        return Err(SimilarityError::EmptyInput);
    }
    let mut histogram = vec![0; HISTOGRAM_BUCKETS];
    let mut below_zero = 0;
    let mut sum = 0.0;
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for s in scores {
        sum += s.f1;
        min = min.min(s.f1);
        max = max.max(s.f1);
        match bucket_of(s.f1) {
            Some(i) => histogram[i] += 1,
            None => below_zero += 1,
        }
    }
    Ok(ScoreDistribution {
        count: scores.len(),
        mean: sum / scores.len() as f64,
        min,
        max,
        histogram,
        below_zero,
        any_negative_component: scores.iter().any(SimilarityScore::has_negative),
    })
}

/// One row of the scores file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub snippet_id: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub divergent: bool,
}

/// Writes `snippet_id,precision,recall,f1,divergent` CSV.
pub fn write_scores_csv<W: Write>(rows: &[ScoreRow], writer: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(vectors: Vec<Vec<f64>>) -> TokenEmbeddingSet {
        let tokens = (0..vectors.len()).map(|i| format!("t{i}")).collect();
        TokenEmbeddingSet::new(tokens, vectors).unwrap()
    }

    /// Pairwise cosines straight from the formula, maxima taken by enumeration.
    fn brute_force(c: &[Vec<f64>], r: &[Vec<f64>]) -> (f64, f64, f64) {
        let cos = |u: &Vec<f64>, v: &Vec<f64>| {
            let d: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
            let nu: f64 = u.iter().map(|a| a * a).sum::<f64>().sqrt();
            let nv: f64 = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            d / (nu * nv)
        };
        let mut p = 0.0;
        for u in c {
            let mut best = f64::NEG_INFINITY;
            for v in r {
                best = best.max(cos(u, v));
            }
            p += best;
        }
        let mut rec = 0.0;
        for v in r {
            let mut best = f64::NEG_INFINITY;
            for u in c {
                best = best.max(cos(u, v));
            }
            rec += best;
        }
        let p = p / c.len() as f64;
        let rec = rec / r.len() as f64;
        let f = if p + rec != 0.0 { 2.0 * p * rec / (p + rec) } else { 0.0 };
        (p, rec, f)
    }

    #[test]
    fn tokenizer_rules() {
        assert_eq!(tokenize("Loading and using Audio."), ["loading", "and", "using", "audio"]);
        assert!(tokenize("").is_empty());
        assert_eq!(
            tokenize("createNode factory function"),
            ["createnode", "factory", "function"]
        );
        assert_eq!(tokenize("PIXI's loader, (v2)!"), ["pixi", "s", "loader", "v2"]);
        assert!(tokenize("... -- !!").is_empty());
    }

    #[test]
    fn cosine_values() {
        assert_eq!(cosine(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        let c = cosine(&[1.0, 1.0], &[1.0, 0.0]).unwrap();
        assert!((c - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-9);
        assert!((c - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert_eq!(
            cosine(&[1.0], &[1.0, 0.0]),
            Err(SimilarityError::DimensionMismatch(1, 2))
        );
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 0.0]), Err(SimilarityError::ZeroVector));
    }

    #[test]
    fn construction_rejects_bad_sets() {
        assert!(matches!(
            TokenEmbeddingSet::new(vec![], vec![]),
            Err(SimilarityError::EmptySide(_))
        ));
        assert!(matches!(
            TokenEmbeddingSet::new(vec!["a".into()], vec![vec![0.0, 0.0]]),
            Err(SimilarityError::ZeroVector)
        ));
        assert!(matches!(
            TokenEmbeddingSet::new(vec!["a".into(), "b".into()], vec![vec![1.0], vec![1.0, 0.0]]),
            Err(SimilarityError::DimensionMismatch(1, 2))
        ));
        assert!(matches!(
            TokenEmbeddingSet::new(vec!["a".into()], vec![]),
            Err(SimilarityError::CountMismatch { .. })
        ));
    }

    #[test]
    fn identity_scores_one() {
        let a = set(vec![vec![1.0, 2.0], vec![-1.0, 0.5], vec![0.3, 0.3]]);
        let s = bertscore(&a, &a).unwrap();
        assert!((s.f1 - 1.0).abs() < 1e-12);
        assert!((s.precision - 1.0).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_vocabularies_score_zero() {
        let a = set(vec![vec![1.0, 0.0, 0.0, 0.0], vec![0.0, 1.0, 0.0, 0.0]]);
        let b = set(vec![vec![0.0, 0.0, 1.0, 0.0], vec![0.0, 0.0, 0.0, 1.0]]);
        let s = bertscore(&a, &b).unwrap();
        assert_eq!((s.precision, s.recall, s.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn three_vs_four_hand_built() {
        let cand = vec![vec![1.0, 0.0], vec![1.0, 1.0], vec![0.0, 2.0]];
        let refr = vec![vec![2.0, 1.0], vec![-1.0, 1.0], vec![1.0, -1.0], vec![0.5, 0.5]];
        let s = bertscore(&set(cand.clone()), &set(refr.clone())).unwrap();
        let (p, r, f) = brute_force(&cand, &refr);
        assert!((s.precision - p).abs() < 1e-12);
        assert!((s.recall - r).abs() < 1e-12);
        assert!((s.f1 - f).abs() < 1e-12);
    }

    #[test]
    fn distribution_examples() {
        let one = score_distribution(&[SimilarityScore::from_precision_recall(1.0, 1.0)]).unwrap();
        assert_eq!(one.mean, 1.0);
        assert_eq!(one.histogram.iter().filter(|&&c| c > 0).count(), 1);
        assert_eq!(one.histogram[19], 1);

        let two = score_distribution(&[
            SimilarityScore::from_precision_recall(0.0, 0.0),
            SimilarityScore::from_precision_recall(1.0, 1.0),
        ])
        .unwrap();
        assert_eq!(two.mean, 0.5);
        assert_eq!(two.histogram[0], 1);
        assert_eq!(two.histogram[19], 1);
        assert_eq!(two.histogram.iter().sum::<usize>(), 2);

        assert_eq!(score_distribution(&[]), Err(SimilarityError::EmptyInput));
    }

    #[test]
    fn buckets_are_half_open() {
        assert_eq!(bucket_of(0.05), Some(1));
        assert_eq!(bucket_of(0.0499999), Some(0));
        assert_eq!(bucket_of(0.95), Some(19));
        assert_eq!(bucket_of(0.9), Some(18));
        assert_eq!(bucket_of(-0.1), None);
    }

    #[test]
    fn mean_of_synthetic_400() {
        // 200 scores at 0.6173 and 200 at 0.8173 average to 0.7173
        let mut scores = Vec::new();
        for i in 0..400 {
            let f1 = if i % 2 == 0 { 0.6173 } else { 0.8173 };
            scores.push(SimilarityScore { precision: f1, recall: f1, f1 });
        }
        let d = score_distribution(&scores).unwrap();
        assert_eq!(d.mean_4dp(), 0.7173);
    }

    #[test]
    fn csv_layout() {
        let mut buf = Vec::new();
        write_scores_csv(
            &[ScoreRow {
                snippet_id: "a".into(),
                precision: 0.5,
                recall: 1.0,
                f1: 0.6666666666666666,
                divergent: true,
            }],
            &mut buf,
        )
        .unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "snippet_id,precision,recall,f1,divergent\na,0.5,1.0,0.6666666666666666,true\n"
        );
    }

    fn vectors(max_len: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
        prop::collection::vec(
            prop::collection::vec(-1.0f64..1.0, 3).prop_filter("non-zero", |v| {
                v.iter().map(|x| x * x).sum::<f64>() > 1e-6
            }),
            1..=max_len,
        )
    }

    proptest! {
        #[test]
        fn matches_brute_force(c in vectors(8), r in vectors(8)) {
            let s = bertscore(&set(c.clone()), &set(r.clone())).unwrap();
            let (p, rec, f) = brute_force(&c, &r);
            prop_assert!((s.precision - p).abs() < 1e-12);
            prop_assert!((s.recall - rec).abs() < 1e-12);
            prop_assert!((s.f1 - f).abs() < 1e-12);
        }

        #[test]
        fn swap_symmetry(c in vectors(8), r in vectors(8)) {
            let ab = bertscore(&set(c.clone()), &set(r.clone())).unwrap();
            let ba = bertscore(&set(r), &set(c)).unwrap();
            prop_assert!((ab.precision - ba.recall).abs() < 1e-15);
            prop_assert!((ab.recall - ba.precision).abs() < 1e-15);
        }

        #[test]
        fn appending_a_reference_token_never_lowers_recall(c in vectors(8), r in vectors(8), pick in any::<prop::sample::Index>()) {
            let before = bertscore(&set(c.clone()), &set(r.clone())).unwrap();
            let mut extended = c;
            extended.push(r[pick.index(r.len())].clone());
            let after = bertscore(&set(extended), &set(r)).unwrap();
            prop_assert!(after.recall >= before.recall - 1e-12);
        }

        #[test]
        fn nonnegative_embeddings_stay_in_unit_interval(
            c in prop::collection::vec(prop::collection::vec(0.01f64..1.0, 4), 1..6),
            r in prop::collection::vec(prop::collection::vec(0.01f64..1.0, 4), 1..6),
        ) {
            let s = bertscore(&set(c), &set(r)).unwrap();
            for v in [s.precision, s.recall, s.f1] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
    }
}
