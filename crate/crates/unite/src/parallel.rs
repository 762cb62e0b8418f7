//! Document-parallel versions of the per-document core kernels. Results are
//! collected in document order, so output does not depend on thread count.

use rayon::prelude::*;
use unite_core::corpus::Corpus;
use unite_core::eu::{score_embedding, EmbeddingSet, Estimator, EuScores, TopK, VocabProjection, VocabStats};
use unite_core::lexical::{InvertedIndex, KnnParams};
use unite_core::{Error, Result};

use crate::error::CliError;

pub const THREADS_ENV: &str = "UNITE_THREADS";

/// Size the global pool from `UNITE_THREADS` when it is set.
pub fn init_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n >= 1)
        .ok_or_else(|| CliError::Validation(format!("{THREADS_ENV}={raw:?} must be a positive integer")))?;
    // a second call in the same process keeps the first pool
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// `D_k` for every document, in corpus order.
pub fn all_distances(index: &InvertedIndex, corpus: &Corpus, knn: &KnnParams) -> Result<Vec<f64>> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    // validates k against the corpus size before fanning out
    let first = index.knn_distance_at(corpus, 0, knn)?;
    let rest: Vec<f64> = (1..corpus.len())
        .into_par_iter()
        .map(|i| index.knn_distance_at(corpus, i, knn))
        .collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(corpus.len());
    out.push(first);
    out.extend(rest);
    Ok(out)
}

/// Parallel counterpart of `unite_core::eu::score_corpus`, with identical
/// output.
pub fn score_corpus(
    candidates: &[String],
    emb: &EmbeddingSet,
    proj: &VocabProjection,
    stats: &VocabStats,
    top_k: TopK,
    estimator: Estimator,
    iteration: usize,
) -> Result<EuScores> {
    emb.check_coverage(candidates.iter().map(String::as_str))?;
    if proj.dim() != emb.dim() {
        return Err(Error::Shape(format!(
            "embedding dim {} vs projection dim {}",
            emb.dim(),
            proj.dim()
        )));
    }
    if stats.df.len() != proj.vocab_size() {
        return Err(Error::Shape(format!(
            "vocab stats cover {} tokens, projection {}",
            stats.df.len(),
            proj.vocab_size()
        )));
    }
    let k = top_k.resolve(proj.vocab_size());
    let values: Vec<f64> = candidates
        .par_iter()
        .map(|id| score_embedding(emb.get(id).expect("coverage checked"), proj, stats, k, estimator))
        .collect::<Result<_>>()?;
    let mean = if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    };
    Ok(EuScores {
        scores: candidates.iter().cloned().zip(values).collect(),
        k,
        estimator,
        iteration,
        mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use unite_core::corpus::{build_lexicon, RawDocument};
    use unite_core::lexical::Bm25Params;
    use unite_core::tokenizer::TokenizerConfig;

    #[test]
    fn matches_sequential_kernels() {
        let records: Vec<RawDocument> = (0..40)
            .map(|i| RawDocument {
                id: format!("d{i}"),
                title: None,
                text: (0..8).map(|j| format!("w{}", (i * 3 + j * 5) % 17)).collect::<Vec<_>>().join(" "),
            })
            .collect();
        let corpus = Corpus::from_records(records, TokenizerConfig::default()).unwrap();
        let lex = build_lexicon(&corpus).unwrap();
        let index = InvertedIndex::build(&corpus, &lex, Bm25Params::default()).unwrap();
        let knn = KnnParams::default();
        assert_eq!(
            all_distances(&index, &corpus, &knn).unwrap(),
            index.all_distances(&corpus, &knn).unwrap()
        );

        let ids: Vec<String> = (0..30).map(|i| format!("e{i}")).collect();
        let data: Vec<f32> = (0..30 * 3).map(|i| ((i * 7) % 11) as f32 / 5.0 - 1.0).collect();
        let emb = EmbeddingSet::new(ids.clone(), 3, data).unwrap();
        let w: Vec<f32> = (0..12 * 3).map(|i| ((i * 5) % 9) as f32 / 4.0 - 1.0).collect();
        let proj = VocabProjection::new(12, 3, w, vec![0.1; 12]).unwrap();
        let stats = VocabStats::new((0..12).map(|t| t % 30).collect(), 30).unwrap();
        let seq = unite_core::eu::score_corpus(
            ids.iter().map(String::as_str),
            &emb,
            &proj,
            &stats,
            TopK::Fixed(5),
            Estimator::TopKIdf,
            2,
        )
        .unwrap();
        let par = score_corpus(&ids, &emb, &proj, &stats, TopK::Fixed(5), Estimator::TopKIdf, 2).unwrap();
        assert_eq!(par, seq);
    }
}
