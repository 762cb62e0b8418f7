//! Documents, the corpus term dictionary, and lexical term statistics.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::tokenizer::{tokenize, TokenizerConfig};
use crate::{Error, Result};

/// One input record before tokenization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawDocument {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub id: String,
    pub title: Option<String>,
    pub text: String,
    /// Lexical term ids of `title + " " + text`, in text order.
    pub tokens: Vec<u32>,
}

/// A tokenized corpus. Term ids are assigned in order of first occurrence,
/// so re-ingesting the same records always yields the same ids.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    docs: Vec<Document>,
    terms: Vec<String>,
    term_ids: BTreeMap<String, u32>,
    doc_index: BTreeMap<String, usize>,
    tokenizer: TokenizerConfig,
}

impl Corpus {
    /// Tokenize `records` in order. Rejects empty input, empty ids and
    /// duplicate ids.
    pub fn from_records(records: Vec<RawDocument>, tokenizer: TokenizerConfig) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut corpus = Corpus {
            docs: Vec::with_capacity(records.len()),
            terms: Vec::new(),
            term_ids: BTreeMap::new(),
            doc_index: BTreeMap::new(),
            tokenizer,
        };
        for (pos, rec) in records.into_iter().enumerate() {
            if rec.id.is_empty() {
                return Err(Error::EmptyId(pos));
            }
            if corpus.doc_index.contains_key(&rec.id) {
                return Err(Error::DuplicateId(rec.id));
            }
            let joined;
            let source = match &rec.title {
                Some(title) => {
                    joined = alloc::format!("{title} {}", rec.text);
                    joined.as_str()
                }
                None => rec.text.as_str(),
            };
            let tokens = tokenize(source, &corpus.tokenizer)
                .into_iter()
                .map(|t| corpus.intern(t))
                .collect();
            corpus.doc_index.insert(rec.id.clone(), corpus.docs.len());
            corpus.docs.push(Document {
                id: rec.id,
                title: rec.title,
                text: rec.text,
                tokens,
            });
        }
        Ok(corpus)
    }

    fn intern(&mut self, term: String) -> u32 {
        if let Some(&id) = self.term_ids.get(&term) {
            return id;
        }
        let id = self.terms.len() as u32;
        self.term_ids.insert(term.clone(), id);
        self.terms.push(term);
        id
    }

    /// Keep only documents whose ordinal passes `keep`. The term dictionary
    /// is shared with the parent so term ids stay comparable.
    pub fn retain_ordinals(&self, mut keep: impl FnMut(usize) -> bool) -> Corpus {
        let docs: Vec<Document> = self
            .docs
            .iter()
            .enumerate()
            .filter(|(i, _)| keep(*i))
            .map(|(_, d)| d.clone())
            .collect();
        let doc_index = docs
            .iter()
            .enumerate()
            .map(|(i, d)| (d.id.clone(), i))
            .collect();
        Corpus {
            docs,
            terms: self.terms.clone(),
            term_ids: self.term_ids.clone(),
            doc_index,
            tokenizer: self.tokenizer.clone(),
        }
    }

    pub fn docs(&self) -> &[Document] {
        &self.docs
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn ordinal(&self, id: &str) -> Option<usize> {
        self.doc_index.get(id).copied()
    }

    pub fn get(&self, id: &str) -> Option<&Document> {
        self.ordinal(id).map(|i| &self.docs[i])
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.docs.iter().map(|d| d.id.as_str())
    }

    pub fn term(&self, id: u32) -> Option<&str> {
        self.terms.get(id as usize).map(String::as_str)
    }

    pub fn term_id(&self, term: &str) -> Option<u32> {
        self.term_ids.get(term).copied()
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn tokenizer(&self) -> &TokenizerConfig {
        &self.tokenizer
    }
}

/// Term statistics for BM25 and outlier filtering.
#[derive(Debug, Clone, PartialEq)]
pub struct Lexicon {
    /// Term strings indexed by term id.
    pub terms: Vec<String>,
    /// Document frequency per term id.
    pub df: Vec<u32>,
    pub n_docs: usize,
    pub avgdl: f64,
    pub tokenizer_hash: u64,
}

impl Lexicon {
    pub fn df_of(&self, term: &str) -> Option<u32> {
        self.terms
            .iter()
            .position(|t| t == term)
            .map(|i| self.df[i])
    }
}

/// Document frequencies, corpus size and mean document length.
///
/// Terms that only occur in documents dropped from a filtered corpus keep
/// their id but get `df = 0`.
pub fn build_lexicon(corpus: &Corpus) -> Result<Lexicon> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut df = alloc::vec![0u32; corpus.terms.len()];
    let mut last_seen = alloc::vec![usize::MAX; corpus.terms.len()];
    let mut total_len = 0usize;
    for (ordinal, doc) in corpus.docs.iter().enumerate() {
        total_len += doc.tokens.len();
        for &t in &doc.tokens {
            let t = t as usize;
            if last_seen[t] != ordinal {
                last_seen[t] = ordinal;
                df[t] += 1;
            }
        }
    }
    Ok(Lexicon {
        terms: corpus.terms.clone(),
        df,
        n_docs: corpus.len(),
        avgdl: total_len as f64 / corpus.len() as f64,
        tokenizer_hash: corpus.tokenizer.fingerprint(),
    })
}
