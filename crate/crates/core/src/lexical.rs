//! BM25 inverted index and document-as-query nearest-neighbour distances.
//!
//! Scoring uses Robertson tf saturation with the non-negative Lucene idf
//! `ln(1 + (N - df + 0.5) / (df + 0.5))`. The lexical k-NN distance of a
//! document is `1 / (eps + s_k)` where `s_k` is the BM25 score of its k-th
//! best neighbour when the document itself is issued as the query.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Lexicon};
use crate::{Error, Result};

pub const DEFAULT_K1: f64 = 0.9;
pub const DEFAULT_B: f64 = 0.4;
pub const DEFAULT_EPSILON: f64 = 1e-6;
pub const DEFAULT_QUERY_CAP: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self {
            k1: DEFAULT_K1,
            b: DEFAULT_B,
        }
    }
}

impl Bm25Params {
    pub fn validate(&self) -> Result<()> {
        if !(self.k1 > 0.0 && self.k1.is_finite()) {
            return Err(Error::param("k1", "must be > 0"));
        }
        if !(0.0..=1.0).contains(&self.b) {
            return Err(Error::param("b", "must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Settings for document-as-query k-NN distances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KnnParams {
    pub k: usize,
    /// Maximum number of distinct query terms, chosen by tf·idf.
    pub query_cap: usize,
    pub epsilon: f64,
}

impl Default for KnnParams {
    fn default() -> Self {
        Self {
            k: 3,
            query_cap: DEFAULT_QUERY_CAP,
            epsilon: DEFAULT_EPSILON,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Posting {
    pub doc: u32,
    pub tf: u32,
}

/// Immutable BM25 index over a corpus.
#[derive(Debug, Clone)]
pub struct InvertedIndex {
    postings: Vec<Vec<Posting>>,
    idf: Vec<f64>,
    doc_len: Vec<u32>,
    doc_ids: Vec<String>,
    doc_index: BTreeMap<String, usize>,
    term_ids: BTreeMap<String, u32>,
    avgdl: f64,
    params: Bm25Params,
    tokenizer_hash: u64,
}

/// A ranked neighbour of a query document.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub ordinal: usize,
    pub score: f64,
}

impl InvertedIndex {
    pub fn build(corpus: &Corpus, lexicon: &Lexicon, params: Bm25Params) -> Result<Self> {
        params.validate()?;
        if corpus.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let corpus_hash = corpus.tokenizer().fingerprint();
        if corpus_hash != lexicon.tokenizer_hash {
            return Err(Error::TokenizerMismatch {
                corpus: corpus_hash,
                lexicon: lexicon.tokenizer_hash,
            });
        }
        if lexicon.n_docs != corpus.len() || lexicon.terms.len() != corpus.terms().len() {
            return Err(Error::Shape(alloc::format!(
                "lexicon covers {} docs / {} terms, corpus has {} / {}",
                lexicon.n_docs,
                lexicon.terms.len(),
                corpus.len(),
                corpus.terms().len()
            )));
        }

        let n_terms = lexicon.terms.len();
        let mut postings: Vec<Vec<Posting>> = alloc::vec![Vec::new(); n_terms];
        let mut doc_len = Vec::with_capacity(corpus.len());
        let mut tf_scratch: BTreeMap<u32, u32> = BTreeMap::new();
        for (ordinal, doc) in corpus.docs().iter().enumerate() {
            tf_scratch.clear();
            for &t in &doc.tokens {
                *tf_scratch.entry(t).or_insert(0) += 1;
            }
            for (&t, &tf) in &tf_scratch {
                postings[t as usize].push(Posting {
                    doc: ordinal as u32,
                    tf,
                });
            }
            doc_len.push(doc.tokens.len() as u32);
        }

        let n = lexicon.n_docs as f64;
        let idf = lexicon.df.iter().map(|&df| bm25_idf(n, df as f64)).collect();
        Ok(Self {
            postings,
            idf,
            doc_len,
            doc_ids: corpus.ids().map(String::from).collect(),
            doc_index: corpus.ids().enumerate().map(|(i, id)| (String::from(id), i)).collect(),
            term_ids: corpus
                .terms()
                .iter()
                .enumerate()
                .map(|(i, t)| (t.clone(), i as u32))
                .collect(),
            avgdl: lexicon.avgdl,
            params,
            tokenizer_hash: lexicon.tokenizer_hash,
        })
    }

    pub fn n_docs(&self) -> usize {
        self.doc_len.len()
    }

    pub fn n_terms(&self) -> usize {
        self.postings.len()
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn tokenizer_hash(&self) -> u64 {
        self.tokenizer_hash
    }

    pub fn avgdl(&self) -> f64 {
        self.avgdl
    }

    pub fn doc_len(&self, ordinal: usize) -> u32 {
        self.doc_len[ordinal]
    }

    pub fn doc_id(&self, ordinal: usize) -> &str {
        &self.doc_ids[ordinal]
    }

    pub fn ordinal(&self, id: &str) -> Option<usize> {
        self.doc_index.get(id).copied()
    }

    pub fn postings(&self, term: u32) -> &[Posting] {
        &self.postings[term as usize]
    }

    pub fn idf(&self, term: u32) -> f64 {
        self.idf[term as usize]
    }

    pub fn term_id(&self, term: &str) -> Option<u32> {
        self.term_ids.get(term).copied()
    }

    fn tf(&self, term: u32, ordinal: usize) -> u32 {
        let list = &self.postings[term as usize];
        match list.binary_search_by_key(&(ordinal as u32), |p| p.doc) {
            Ok(i) => list[i].tf,
            Err(_) => 0,
        }
    }

    #[inline]
    fn term_weight(&self, idf: f64, tf: u32, ordinal: usize) -> f64 {
        let tf = tf as f64;
        let Bm25Params { k1, b } = self.params;
        let len_ratio = if self.avgdl > 0.0 {
            self.doc_len[ordinal] as f64 / self.avgdl
        } else {
            1.0
        };
        idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * len_ratio))
    }

    /// BM25 of `doc` for term strings; terms outside the lexicon score 0.
    pub fn bm25_score(&self, query_terms: &[&str], doc: &str) -> Result<f64> {
        let ordinal = self
            .ordinal(doc)
            .ok_or_else(|| Error::NotFound(String::from(doc)))?;
        let ids: Vec<u32> = query_terms.iter().filter_map(|t| self.term_id(t)).collect();
        Ok(self.score_ordinal(&ids, ordinal))
    }

    /// BM25 of the document at `ordinal` for a query of term ids.
    pub fn score_ordinal(&self, query: &[u32], ordinal: usize) -> f64 {
        let mut score = 0.0;
        for &t in query {
            let tf = self.tf(t, ordinal);
            if tf > 0 {
                score += self.term_weight(self.idf[t as usize], tf, ordinal);
            }
        }
        score
    }

    /// Distinct terms of the document at `ordinal`, ordered by tf·idf
    /// descending (ties: lower term id), truncated to `cap`.
    pub fn document_query(&self, tokens: &[u32], cap: usize) -> Vec<u32> {
        let mut tf: BTreeMap<u32, u32> = BTreeMap::new();
        for &t in tokens {
            *tf.entry(t).or_insert(0) += 1;
        }
        let mut weighted: Vec<(u32, f64)> = tf
            .into_iter()
            .map(|(t, c)| (t, c as f64 * self.idf[t as usize]))
            .collect();
        weighted.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        weighted.truncate(cap);
        weighted.into_iter().map(|(t, _)| t).collect()
    }

    /// Score every other document against `query`, term at a time, and rank
    /// by score descending with lower ordinal first on ties.
    pub fn rank_others(&self, query: &[u32], exclude: usize) -> Vec<Neighbor> {
        let mut acc = alloc::vec![0.0f64; self.n_docs()];
        for &t in query {
            let idf = self.idf[t as usize];
            for p in &self.postings[t as usize] {
                let ord = p.doc as usize;
                acc[ord] += self.term_weight(idf, p.tf, ord);
            }
        }
        let mut ranked: Vec<Neighbor> = acc
            .into_iter()
            .enumerate()
            .filter(|(i, _)| *i != exclude)
            .map(|(ordinal, score)| Neighbor { ordinal, score })
            .collect();
        ranked.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.ordinal.cmp(&b.ordinal)));
        ranked
    }

    /// Ranked neighbours of the document at `ordinal` (self excluded).
    pub fn neighbors(&self, corpus: &Corpus, ordinal: usize, query_cap: usize) -> Vec<Neighbor> {
        let query = self.document_query(&corpus.docs()[ordinal].tokens, query_cap);
        self.rank_others(&query, ordinal)
    }

    /// Lexical k-NN distance of the document at `ordinal`.
    pub fn knn_distance_at(&self, corpus: &Corpus, ordinal: usize, knn: &KnnParams) -> Result<f64> {
        check_knn(self.n_docs(), knn)?;
        let ranked = self.neighbors(corpus, ordinal, knn.query_cap);
        Ok(distance_from_score(ranked[knn.k - 1].score, knn.epsilon))
    }

    pub fn knn_distance(&self, corpus: &Corpus, doc: &str, knn: &KnnParams) -> Result<f64> {
        let ordinal = self
            .ordinal(doc)
            .ok_or_else(|| Error::NotFound(String::from(doc)))?;
        self.knn_distance_at(corpus, ordinal, knn)
    }

    /// Distances for every document, in corpus order.
    pub fn all_distances(&self, corpus: &Corpus, knn: &KnnParams) -> Result<Vec<f64>> {
        check_knn(self.n_docs(), knn)?;
        (0..self.n_docs())
            .map(|i| self.knn_distance_at(corpus, i, knn))
            .collect()
    }

    /// Median k-NN distance for each `k` in `ks`, over all documents or an
    /// evenly spaced sample of `sample` of them.
    pub fn distance_profile(
        &self,
        corpus: &Corpus,
        ks: &[usize],
        sample: Option<usize>,
        query_cap: usize,
        epsilon: f64,
    ) -> Result<Vec<(usize, f64)>> {
        let Some(&k_max) = ks.last() else {
            return Err(Error::EmptyInput);
        };
        if ks.windows(2).any(|w| w[0] >= w[1]) || ks[0] == 0 {
            return Err(Error::param("ks", "must be positive and strictly ascending"));
        }
        check_knn(
            self.n_docs(),
            &KnnParams {
                k: k_max,
                query_cap,
                epsilon,
            },
        )?;
        let ordinals = sample_ordinals(self.n_docs(), sample);
        let mut per_k: Vec<Vec<f64>> = alloc::vec![Vec::with_capacity(ordinals.len()); ks.len()];
        for &ord in &ordinals {
            let ranked = self.neighbors(corpus, ord, query_cap);
            for (slot, &k) in ks.iter().enumerate() {
                per_k[slot].push(distance_from_score(ranked[k - 1].score, epsilon));
            }
        }
        Ok(ks
            .iter()
            .zip(per_k)
            .map(|(&k, d)| (k, crate::stats::median(&d).unwrap_or(0.0)))
            .collect())
    }
}

pub fn bm25_idf(n_docs: f64, df: f64) -> f64 {
    libm::log(1.0 + (n_docs - df + 0.5) / (df + 0.5))
}

pub fn distance_from_score(score: f64, epsilon: f64) -> f64 {
    1.0 / (epsilon + score)
}

fn check_knn(n_docs: usize, knn: &KnnParams) -> Result<()> {
    if knn.k == 0 {
        return Err(Error::param("k", "must be >= 1"));
    }
    if knn.query_cap == 0 {
        return Err(Error::param("query_cap", "must be >= 1"));
    }
    if !(knn.epsilon > 0.0) {
        return Err(Error::param("epsilon", "must be > 0"));
    }
    if n_docs <= knn.k {
        return Err(Error::InsufficientCorpus {
            docs: n_docs,
            k: knn.k,
        });
    }
    Ok(())
}

fn sample_ordinals(n: usize, sample: Option<usize>) -> Vec<usize> {
    match sample {
        Some(m) if m > 0 && m < n => (0..m).map(|i| i * n / m).collect(),
        _ => (0..n).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_lexicon, RawDocument};
    use crate::tokenizer::TokenizerConfig;
    use alloc::string::ToString;
    use alloc::vec;

    fn corpus(texts: &[&str]) -> Corpus {
        let recs = texts
            .iter()
            .enumerate()
            .map(|(i, t)| RawDocument {
                id: alloc::format!("d{}", i + 1),
                title: None,
                text: t.to_string(),
            })
            .collect();
        Corpus::from_records(recs, TokenizerConfig::default()).unwrap()
    }

    fn index(c: &Corpus, params: Bm25Params) -> InvertedIndex {
        InvertedIndex::build(c, &build_lexicon(c).unwrap(), params).unwrap()
    }

    #[test]
    fn toy_postings() {
        let c = corpus(&["cat sat", "dog sat", "cat cat"]);
        let idx = index(&c, Bm25Params::default());
        assert_eq!(idx.n_terms(), 3);
        assert_eq!((0..3).map(|i| idx.doc_len(i)).collect::<Vec<_>>(), [2, 2, 2]);
        let cat = idx.term_id("cat").unwrap();
        assert_eq!(
            idx.postings(cat),
            &[Posting { doc: 0, tf: 1 }, Posting { doc: 2, tf: 2 }]
        );
    }

    #[test]
    fn toy_score_by_hand() {
        let c = corpus(&["cat sat", "dog sat", "cat cat"]);
        let idx = index(&c, Bm25Params::default());
        let expected = libm::log(1.6) * 2.0 * 1.9 / 2.9;
        let got = idx.bm25_score(&["cat"], "d3").unwrap();
        assert!((got - expected).abs() < 1e-6, "{got} vs {expected}");
        assert!((got - 0.6158).abs() < 1e-3);
        assert_eq!(idx.bm25_score(&["zebra"], "d3").unwrap(), 0.0);
        assert!(idx.bm25_score(&["cat", "sat"], "d1").unwrap() > 0.0);
        assert_eq!(
            idx.bm25_score(&["cat"], "nope").unwrap_err(),
            Error::NotFound("nope".into())
        );
    }

    #[test]
    fn b_zero_ignores_length() {
        let c = corpus(&["cat", "cat dog bird fish", "owl"]);
        let idx = index(&c, Bm25Params { k1: 0.9, b: 0.0 });
        let a = idx.bm25_score(&["cat"], "d1").unwrap();
        let b = idx.bm25_score(&["cat"], "d2").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn tokenizer_mismatch_detected() {
        let c = corpus(&["cat sat", "dog"]);
        let mut lex = build_lexicon(&c).unwrap();
        lex.tokenizer_hash ^= 1;
        assert!(matches!(
            InvertedIndex::build(&c, &lex, Bm25Params::default()),
            Err(Error::TokenizerMismatch { .. })
        ));
    }

    #[test]
    fn isolated_doc_has_max_distance() {
        let c = corpus(&["cat sat", "cat sat mat", "sat mat", "cat mat", "zebra"]);
        let idx = index(&c, Bm25Params::default());
        let knn = KnnParams { k: 3, ..Default::default() };
        let d = idx.knn_distance(&c, "d5", &knn).unwrap();
        assert_eq!(d, 1.0 / 1e-6);
    }

    #[test]
    fn identical_docs_share_distance() {
        let c = corpus(&["flu shot", "flu shot", "flu shot", "flu shot"]);
        let idx = index(&c, Bm25Params::default());
        let knn = KnnParams { k: 2, ..Default::default() };
        let d = idx.all_distances(&c, &knn).unwrap();
        assert!(d.iter().all(|&x| x == d[0]));
        let prof = idx.distance_profile(&c, &[1], None, 64, 1e-6).unwrap();
        assert_eq!(prof, vec![(1, d[0])]);
    }

    #[test]
    fn insufficient_corpus() {
        let c = corpus(&["cat", "dog", "owl"]);
        let idx = index(&c, Bm25Params::default());
        let knn = KnnParams { k: 3, ..Default::default() };
        assert_eq!(
            idx.knn_distance(&c, "d1", &knn).unwrap_err(),
            Error::InsufficientCorpus { docs: 3, k: 3 }
        );
    }

    #[test]
    fn query_cap_keeps_heaviest_terms() {
        let c = corpus(&["cat cat cat dog owl", "dog owl", "owl"]);
        let idx = index(&c, Bm25Params::default());
        let q = idx.document_query(&c.docs()[0].tokens, 1);
        assert_eq!(q, vec![idx.term_id("cat").unwrap()]);
    }

    #[test]
    fn profile_rejects_unsorted_ks() {
        let c = corpus(&["cat", "dog", "owl", "bee"]);
        let idx = index(&c, Bm25Params::default());
        assert!(idx.distance_profile(&c, &[2, 1], None, 64, 1e-6).is_err());
        assert_eq!(
            idx.distance_profile(&c, &[], None, 64, 1e-6).unwrap_err(),
            Error::EmptyInput
        );
    }
}
