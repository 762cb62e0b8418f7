//! Epistemic-uncertainty scoring.
//!
//! A document embedding is pushed through the model's vocabulary projection
//! to get a token distribution `p`. Its uncertainty is
//! `U_k = sum over the k most probable tokens t of (ln IDF(t) - p(t))`
//! with `IDF(t) = N / max(df(t), 1)`, so a model that confidently predicts
//! common domain terms scores low and one that spreads mass over rare or
//! unseen terms scores high. The entropy of `p` is provided as a baseline.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const DEFAULT_TOP_K: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pooling {
    Mean,
    LastToken,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub model: String,
    pub pooling: Pooling,
}

/// Row-major `count x dim` document embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    ids: Vec<String>,
    dim: usize,
    data: Vec<f32>,
    index: BTreeMap<String, usize>,
    pub provenance: Option<Provenance>,
}

impl EmbeddingSet {
    pub fn new(ids: Vec<String>, dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Shape("embedding dimension is 0".into()));
        }
        if data.len() != ids.len() * dim {
            return Err(Error::Shape(alloc::format!(
                "{} values for {} ids of dim {}",
                data.len(),
                ids.len(),
                dim
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("embeddings"));
        }
        let mut index = BTreeMap::new();
        for (i, id) in ids.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(Error::DuplicateId(id.clone()));
            }
        }
        Ok(Self {
            ids,
            dim,
            data,
            index,
            provenance: None,
        })
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = Some(provenance);
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn get(&self, id: &str) -> Option<&[f32]> {
        self.index.get(id).map(|&i| self.row(i))
    }

    /// Error listing every id in `ids` that has no row.
    pub fn check_coverage<'a>(&self, ids: impl IntoIterator<Item = &'a str>) -> Result<()> {
        let missing: Vec<String> = ids
            .into_iter()
            .filter(|id| !self.index.contains_key(*id))
            .map(String::from)
            .collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Error::Coverage {
                what: "embedding",
                ids: missing,
            })
        }
    }
}

/// Vocabulary head: `V x D` weights plus a length-`V` bias.
#[derive(Debug, Clone, PartialEq)]
pub struct VocabProjection {
    vocab_size: usize,
    dim: usize,
    weights: Vec<f32>,
    bias: Vec<f32>,
    /// Token strings indexed by token id (may be empty when unknown).
    pub vocab: Vec<String>,
}

impl VocabProjection {
    pub fn new(vocab_size: usize, dim: usize, weights: Vec<f32>, bias: Vec<f32>) -> Result<Self> {
        if vocab_size == 0 || dim == 0 {
            return Err(Error::Shape("projection has an empty axis".into()));
        }
        if weights.len() != vocab_size * dim || bias.len() != vocab_size {
            return Err(Error::Shape(alloc::format!(
                "projection {vocab_size}x{dim} given {} weights and {} biases",
                weights.len(),
                bias.len()
            )));
        }
        if weights.iter().chain(&bias).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("projection"));
        }
        Ok(Self {
            vocab_size,
            dim,
            weights,
            bias,
            vocab: Vec::new(),
        })
    }

    pub fn with_vocab(mut self, vocab: Vec<String>) -> Result<Self> {
        if vocab.len() != self.vocab_size {
            return Err(Error::Shape(alloc::format!(
                "vocab has {} entries, projection {}",
                vocab.len(),
                self.vocab_size
            )));
        }
        self.vocab = vocab;
        Ok(self)
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self) -> &[f32] {
        &self.weights
    }

    pub fn bias(&self) -> &[f32] {
        &self.bias
    }

    /// `W e + b`, accumulated in f64.
    pub fn logits(&self, embedding: &[f32]) -> Result<Vec<f64>> {
        if embedding.len() != self.dim {
            return Err(Error::Shape(alloc::format!(
                "embedding dim {} vs projection dim {}",
                embedding.len(),
                self.dim
            )));
        }
        Ok(self
            .weights
            .chunks_exact(self.dim)
            .zip(&self.bias)
            .map(|(row, &b)| {
                row.iter()
                    .zip(embedding)
                    .map(|(&w, &e)| w as f64 * e as f64)
                    .sum::<f64>()
                    + b as f64
            })
            .collect())
    }
}

/// Per-token document frequencies under the model tokenizer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VocabStats {
    pub df: Vec<u32>,
    pub n_docs: u32,
}

impl VocabStats {
    pub fn new(df: Vec<u32>, n_docs: u32) -> Result<Self> {
        if let Some(bad) = df.iter().position(|&d| d > n_docs) {
            return Err(Error::Shape(alloc::format!(
                "token {bad} has df {} > N = {n_docs}",
                df[bad]
            )));
        }
        Ok(Self { df, n_docs })
    }

    /// `ln(N / max(df, 1))`.
    pub fn log_idf(&self, token: usize) -> f64 {
        let df = self.df[token].max(1) as f64;
        libm::log(self.n_docs as f64 / df)
    }
}

/// Softmax of `W e + b` with max-shift stabilization.
pub fn token_distribution(proj: &VocabProjection, embedding: &[f32]) -> Result<Vec<f64>> {
    let logits = proj.logits(embedding)?;
    softmax(logits)
}

pub fn softmax(mut logits: Vec<f64>) -> Result<Vec<f64>> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::NonFinite("logits"));
    }
    let mut total = 0.0;
    for l in logits.iter_mut() {
        *l = libm::exp(*l - max);
        total += *l;
    }
    for l in logits.iter_mut() {
        *l /= total;
    }
    if logits.iter().any(|p| !p.is_finite()) {
        return Err(Error::NonFinite("token distribution"));
    }
    Ok(logits)
}

/// Probability descending, then token id ascending.
fn by_probability(probs: &[f64]) -> impl Fn(&usize, &usize) -> Ordering + '_ {
    move |&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b))
}

/// Ids of the `k` most probable tokens, most probable first.
pub fn top_k_tokens(probs: &[f64], k: usize) -> Result<Vec<usize>> {
    if k > probs.len() {
        return Err(Error::TopKBound {
            k,
            vocab: probs.len(),
        });
    }
    let mut ids: Vec<usize> = (0..probs.len()).collect();
    let cmp = by_probability(probs);
    if k > 0 && k < ids.len() {
        ids.select_nth_unstable_by(k - 1, &cmp);
    }
    ids.truncate(k);
    ids.sort_unstable_by(&cmp);
    Ok(ids)
}

/// `sum over top-k tokens of (ln IDF(t) - p(t))`.
pub fn eu_score(probs: &[f64], stats: &VocabStats, k: usize) -> Result<f64> {
    if stats.df.len() != probs.len() {
        return Err(Error::Shape(alloc::format!(
            "vocab stats cover {} tokens, distribution has {}",
            stats.df.len(),
            probs.len()
        )));
    }
    Ok(top_k_tokens(probs, k)?
        .into_iter()
        .map(|t| stats.log_idf(t) - probs[t])
        .sum())
}

/// Shannon entropy in nats, with `0 ln 0 = 0`.
pub fn entropy_score(probs: &[f64]) -> f64 {
    -probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * libm::log(p))
        .sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    #[default]
    #[serde(rename = "topk-idf")]
    TopKIdf,
    Entropy,
}

impl Estimator {
    pub fn name(self) -> &'static str {
        match self {
            Estimator::TopKIdf => "topk-idf",
            Estimator::Entropy => "entropy",
        }
    }
}

/// How many tokens enter the uncertainty sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TopK {
    /// At most this many; clamped to the vocabulary size.
    Fixed(usize),
    /// `ceil(fraction * V)` tokens.
    VocabFraction { vocab_fraction: f64 },
}

impl Default for TopK {
    fn default() -> Self {
        TopK::Fixed(DEFAULT_TOP_K)
    }
}

impl TopK {
    pub fn resolve(self, vocab_size: usize) -> usize {
        let k = match self {
            TopK::Fixed(k) => k,
            TopK::VocabFraction { vocab_fraction } => {
                libm::ceil(vocab_fraction * vocab_size as f64) as usize
            }
        };
        k.clamp(1, vocab_size.max(1))
    }

    pub fn validate(self) -> Result<()> {
        match self {
            TopK::Fixed(0) => Err(Error::param("k_eu", "must be >= 1")),
            TopK::VocabFraction { vocab_fraction }
                if !(vocab_fraction > 0.0 && vocab_fraction <= 1.0) =>
            {
                Err(Error::param("k_eu", "vocab_fraction must lie in (0, 1]"))
            }
            _ => Ok(()),
        }
    }
}

/// Per-document uncertainty over a candidate set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EuScores {
    /// `(doc id, score)` in candidate order.
    pub scores: Vec<(String, f64)>,
    pub k: usize,
    pub estimator: Estimator,
    pub iteration: usize,
    pub mean: f64,
}

impl EuScores {
    pub fn lookup(&self) -> BTreeMap<&str, f64> {
        self.scores.iter().map(|(id, s)| (id.as_str(), *s)).collect()
    }

    /// Mean over the subset of ids accepted by `keep`.
    pub fn mean_where(&self, mut keep: impl FnMut(&str) -> bool) -> Option<f64> {
        let (sum, n) = self
            .scores
            .iter()
            .filter(|(id, _)| keep(id))
            .fold((0.0, 0usize), |(s, n), (_, x)| (s + x, n + 1));
        (n > 0).then(|| sum / n as f64)
    }
}

/// Score one embedding.
pub fn score_embedding(
    embedding: &[f32],
    proj: &VocabProjection,
    stats: &VocabStats,
    k: usize,
    estimator: Estimator,
) -> Result<f64> {
    let probs = token_distribution(proj, embedding)?;
    match estimator {
        Estimator::TopKIdf => eu_score(&probs, stats, k),
        Estimator::Entropy => Ok(entropy_score(&probs)),
    }
}

/// Score every id in `candidates`. Documents are processed one at a time so
/// memory stays at a single `V`-length distribution.
pub fn score_corpus<'a>(
    candidates: impl IntoIterator<Item = &'a str> + Clone,
    emb: &EmbeddingSet,
    proj: &VocabProjection,
    stats: &VocabStats,
    top_k: TopK,
    estimator: Estimator,
    iteration: usize,
) -> Result<EuScores> {
    emb.check_coverage(candidates.clone())?;
    if proj.dim() != emb.dim() {
        return Err(Error::Shape(alloc::format!(
            "embedding dim {} vs projection dim {}",
            emb.dim(),
            proj.dim()
        )));
    }
    if stats.df.len() != proj.vocab_size() {
        return Err(Error::Shape(alloc::format!(
            "vocab stats cover {} tokens, projection {}",
            stats.df.len(),
            proj.vocab_size()
        )));
    }
    let k = top_k.resolve(proj.vocab_size());
    let mut scores = Vec::new();
    for id in candidates {
        let row = emb.get(id).expect("coverage checked");
        let s = score_embedding(row, proj, stats, k, estimator)?;
        scores.push((String::from(id), s));
    }
    let mean = if scores.is_empty() {
        0.0
    } else {
        scores.iter().map(|(_, s)| s).sum::<f64>() / scores.len() as f64
    };
    Ok(EuScores {
        scores,
        k,
        estimator,
        iteration,
        mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn zero_projection(v: usize, d: usize) -> VocabProjection {
        VocabProjection::new(v, d, vec![0.0; v * d], vec![0.0; v]).unwrap()
    }

    #[test]
    fn zero_head_is_uniform() {
        let p = token_distribution(&zero_projection(5, 3), &[0.3, -1.0, 2.0]).unwrap();
        assert!(p.iter().all(|&x| (x - 0.2).abs() < 1e-15));
    }

    #[test]
    fn single_bias_closed_form() {
        let (v, c) = (6usize, 1.7f64);
        let mut bias = vec![0.0f32; v];
        bias[0] = c as f32;
        let proj = VocabProjection::new(v, 2, vec![0.0; v * 2], bias).unwrap();
        let p = token_distribution(&proj, &[1.0, 1.0]).unwrap();
        let c = c as f32 as f64;
        let expected = libm::exp(c) / (libm::exp(c) + (v - 1) as f64);
        assert!((p[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn softmax_shift_invariant() {
        let a = softmax(vec![0.1, 2.0, -3.0, 0.5]).unwrap();
        let b = softmax(vec![100.1, 102.0, 97.0, 100.5]).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn dim_mismatch() {
        assert!(matches!(
            token_distribution(&zero_projection(3, 2), &[1.0]),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn confident_ubiquitous_token_gives_minus_one() {
        let stats = VocabStats::new(vec![4, 1, 1], 4).unwrap();
        let u = eu_score(&[1.0, 0.0, 0.0], &stats, 1).unwrap();
        assert!((u + 1.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_rare_tokens() {
        let stats = VocabStats::new(vec![1; 4], 4).unwrap();
        let u = eu_score(&[0.25; 4], &stats, 2).unwrap();
        let expected = 2.0 * (libm::log(4.0) - 0.25);
        assert!((u - expected).abs() < 1e-12);
        assert!((u - 2.2726).abs() < 1e-4);
    }

    #[test]
    fn top_k_ties_prefer_lower_ids() {
        let p = [0.2, 0.3, 0.2, 0.3];
        assert_eq!(top_k_tokens(&p, 3).unwrap(), vec![1, 3, 0]);
        assert_eq!(
            top_k_tokens(&p, 5).unwrap_err(),
            Error::TopKBound { k: 5, vocab: 4 }
        );
    }

    #[test]
    fn absent_tokens_get_max_idf() {
        let stats = VocabStats::new(vec![0, 10], 10).unwrap();
        assert!((stats.log_idf(0) - libm::log(10.0)).abs() < 1e-12);
        assert_eq!(stats.log_idf(1), 0.0);
        assert!(VocabStats::new(vec![11], 10).is_err());
    }

    #[test]
    fn entropy_cases() {
        assert!((entropy_score(&[0.25; 4]) - libm::log(4.0)).abs() < 1e-12);
        assert_eq!(entropy_score(&[0.0, 1.0, 0.0]), 0.0);
        assert!((entropy_score(&[0.5, 0.5, 0.0]) - libm::log(2.0)).abs() < 1e-12);
    }

    #[test]
    fn top_k_resolution() {
        assert_eq!(TopK::Fixed(1000).resolve(500), 500);
        assert_eq!(TopK::Fixed(1000).resolve(32000), 1000);
        assert_eq!(TopK::VocabFraction { vocab_fraction: 0.03 }.resolve(1200), 36);
        assert!(TopK::Fixed(0).validate().is_err());
    }

    #[test]
    fn corpus_scoring_coverage_and_determinism() {
        let emb = EmbeddingSet::new(
            vec!["a".into(), "b".into()],
            2,
            vec![0.5, -0.5, 0.5, -0.5],
        )
        .unwrap();
        let proj = VocabProjection::new(3, 2, vec![1.0, 0.0, 0.0, 1.0, 0.5, 0.5], vec![0.0; 3])
            .unwrap();
        let stats = VocabStats::new(vec![1, 2, 3], 3).unwrap();
        let s = score_corpus(["a", "b"], &emb, &proj, &stats, TopK::Fixed(2), Estimator::TopKIdf, 1)
            .unwrap();
        assert_eq!(s.scores[0].1, s.scores[1].1);
        assert_eq!(s.mean, s.scores[0].1);

        let uniform = zero_projection(3, 2);
        let s = score_corpus(["a"], &emb, &uniform, &stats, TopK::Fixed(2), Estimator::Entropy, 1)
            .unwrap();
        assert!((s.mean - libm::log(3.0)).abs() < 1e-12);

        let err = score_corpus(["a", "zz"], &emb, &proj, &stats, TopK::Fixed(2), Estimator::TopKIdf, 1)
            .unwrap_err();
        assert_eq!(
            err,
            Error::Coverage {
                what: "embedding",
                ids: vec!["zz".into()]
            }
        );
    }
}
