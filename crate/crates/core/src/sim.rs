//! Desk-scale synthetic world for exercising the full loop.
//!
//! Topic documents draw tokens from Zipf distributions over a shared
//! vocabulary, each topic with its own rank order. Outliers draw from
//! private token blocks no other document uses. The toy model embeds a
//! document as a normalized random projection of its tf-idf vector and
//! predicts tokens through a trainable `V x D` head, which doubles as the
//! vocabulary projection for EU scoring. One topic starts with a weakened
//! head so its documents look uncertain until the model trains on them.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::au_filter::{filter_corpus, FilterReport};
use crate::control::{run_loop, LoopConfig, LoopError, ModelProvider, RunReport};
use crate::corpus::{build_lexicon, Corpus, RawDocument};
use crate::eu::{EmbeddingSet, Pooling, Provenance, VocabProjection, VocabStats};
use crate::kmeans::{kmeans_cluster, ClusterModel};
use crate::lexical::{Bm25Params, InvertedIndex, KnnParams};
use crate::sampler::Selection;
use crate::stats::gini;
use crate::tokenizer::TokenizerConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub topics: usize,
    pub docs_per_topic: usize,
    /// Shared topic vocabulary size.
    pub vocab_size: usize,
    pub zipf_exponent: f64,
    pub tokens_per_doc: usize,
    /// Outlier count as a fraction of the topic documents.
    pub outlier_fraction: f64,
    pub dim: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            topics: 3,
            docs_per_topic: 100,
            vocab_size: 600,
            zipf_exponent: 1.0,
            tokens_per_doc: 40,
            outlier_fraction: 0.05,
            dim: 64,
            seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.topics == 0 || self.docs_per_topic == 0 || self.tokens_per_doc == 0 || self.dim == 0
        {
            return Err(Error::param("synth", "counts must be >= 1"));
        }
        if self.vocab_size < 2 {
            return Err(Error::param("vocab_size", "must be >= 2"));
        }
        if !(0.0..1.0).contains(&self.outlier_fraction) {
            return Err(Error::param("outlier_fraction", "must lie in [0, 1)"));
        }
        if !(self.zipf_exponent >= 0.0 && self.zipf_exponent.is_finite()) {
            return Err(Error::param("zipf_exponent", "must be finite and >= 0"));
        }
        Ok(())
    }

    pub fn outlier_count(&self) -> usize {
        libm::round(self.outlier_fraction * (self.topics * self.docs_per_topic) as f64) as usize
    }
}

/// Settings of the toy trainable model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimModelConfig {
    pub learning_rate: f64,
    /// Gradient steps over the selection per provider update.
    pub epochs: usize,
    /// Training targets per document: its highest tf-idf tokens.
    pub top_terms: usize,
    /// Norm of each head row at initialization.
    pub init_scale: f64,
    /// Topic whose own tokens start with a weakened head.
    pub deficient_topic: Option<usize>,
    /// Multiplier applied to the deficient topic's head rows.
    pub deficiency: f64,
}

impl Default for SimModelConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            epochs: 10,
            top_terms: 10,
            init_scale: 4.0,
            deficient_topic: Some(0),
            deficiency: 0.1,
        }
    }
}

/// Lexical and clustering settings used by [`run_sim`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimPipeline {
    pub clusters: usize,
    pub kmeans_max_iter: usize,
    pub bm25: Bm25Params,
    pub query_cap: usize,
}

impl Default for SimPipeline {
    fn default() -> Self {
        Self {
            clusters: 3,
            kmeans_max_iter: 100,
            bm25: Bm25Params::default(),
            query_cap: crate::lexical::DEFAULT_QUERY_CAP,
        }
    }
}

/// Loop settings scaled to the synthetic corpus size.
pub fn sim_loop_config(seed: u64) -> LoopConfig {
    LoopConfig {
        batch_size: 20,
        max_iterations: 10,
        max_budget: 200,
        k_eu: crate::eu::TopK::VocabFraction {
            vocab_fraction: 0.03,
        },
        seed,
        ..LoopConfig::default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Label {
    Topic(usize),
    Outlier,
}

/// A generated corpus with ground truth and the model vocabulary.
#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub corpus: Corpus,
    /// Ground truth per document, in corpus order.
    pub labels: Vec<Label>,
    /// Model vocabulary: topic tokens then outlier tokens.
    pub vocab: Vec<String>,
    /// Model token ids per document, in corpus order.
    pub doc_tokens: Vec<Vec<u32>>,
    /// Per topic, vocabulary ids ordered from most to least probable.
    pub topic_ranks: Vec<Vec<u32>>,
    /// Zipf probability of each rank, shared by all topics.
    pub rank_probs: Vec<f64>,
    pub config: SynthConfig,
}

impl SynthCorpus {
    /// Probability of each shared-vocabulary token under `topic`.
    pub fn topic_distribution(&self, topic: usize) -> Vec<f64> {
        let mut p = alloc::vec![0.0; self.config.vocab_size];
        for (rank, &tok) in self.topic_ranks[topic].iter().enumerate() {
            p[tok as usize] = self.rank_probs[rank];
        }
        p
    }

    /// Tokens that rank high for `topic` and for no other topic.
    pub fn own_tokens(&self, topic: usize) -> Vec<u32> {
        let head = (self.config.vocab_size / (2 * self.config.topics)).max(1);
        let mut elsewhere = alloc::collections::BTreeSet::new();
        for (j, ranks) in self.topic_ranks.iter().enumerate() {
            if j != topic {
                elsewhere.extend(ranks[..head].iter().copied());
            }
        }
        self.topic_ranks[topic][..head]
            .iter()
            .copied()
            .filter(|t| !elsewhere.contains(t))
            .collect()
    }

    /// Model-vocabulary document frequencies over the whole corpus.
    pub fn vocab_stats(&self) -> VocabStats {
        let mut df = alloc::vec![0u32; self.vocab.len()];
        for toks in &self.doc_tokens {
            let mut seen = alloc::collections::BTreeSet::new();
            for &t in toks {
                if seen.insert(t) {
                    df[t as usize] += 1;
                }
            }
        }
        VocabStats {
            df,
            n_docs: self.doc_tokens.len() as u32,
        }
    }
}

fn zipf_probs(n: usize, s: f64) -> Vec<f64> {
    let raw: Vec<f64> = (1..=n).map(|r| libm::pow(r as f64, -s)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / total).collect()
}

fn sample_index(cdf: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u = rng.gen::<f64>() * cdf[cdf.len() - 1];
    cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
}

/// Deterministic synthetic corpus.
pub fn generate_corpus(cfg: &SynthConfig) -> Result<SynthCorpus> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let v = cfg.vocab_size;
    let rank_probs = zipf_probs(v, cfg.zipf_exponent);
    let mut cdf = Vec::with_capacity(v);
    let mut acc = 0.0;
    for p in &rank_probs {
        acc += p;
        cdf.push(acc);
    }

    let topic_ranks: Vec<Vec<u32>> = (0..cfg.topics)
        .map(|_| {
            let mut perm: Vec<u32> = (0..v as u32).collect();
            for i in (1..v).rev() {
                let j = rng.gen_range(0..=i);
                perm.swap(i, j);
            }
            perm
        })
        .collect();

    let mut docs: Vec<(Label, Vec<u32>)> = Vec::new();
    for (topic, ranks) in topic_ranks.iter().enumerate() {
        for _ in 0..cfg.docs_per_topic {
            let toks = (0..cfg.tokens_per_doc)
                .map(|_| ranks[sample_index(&cdf, &mut rng)])
                .collect();
            docs.push((Label::Topic(topic), toks));
        }
    }
    // each outlier owns a block of `tokens_per_doc` tokens
    let n_out = cfg.outlier_count();
    let block = cfg.tokens_per_doc as u32;
    for o in 0..n_out as u32 {
        let base = v as u32 + o * block;
        let toks = (0..cfg.tokens_per_doc)
            .map(|_| base + rng.gen_range(0..block))
            .collect();
        docs.push((Label::Outlier, toks));
    }
    for i in (1..docs.len()).rev() {
        let j = rng.gen_range(0..=i);
        docs.swap(i, j);
    }

    let mut vocab: Vec<String> = (0..v).map(|i| alloc::format!("w{i:04}")).collect();
    vocab.extend((0..n_out * cfg.tokens_per_doc).map(|i| alloc::format!("z{i:05}")));

    let records = docs
        .iter()
        .enumerate()
        .map(|(i, (_, toks))| {
            let mut text = String::new();
            for (j, &t) in toks.iter().enumerate() {
                if j > 0 {
                    text.push(' ');
                }
                text.push_str(&vocab[t as usize]);
            }
            RawDocument {
                id: alloc::format!("doc{i:05}"),
                title: None,
                text,
            }
        })
        .collect();
    let corpus = Corpus::from_records(records, TokenizerConfig::default())?;
    let (labels, doc_tokens) = docs.into_iter().unzip();
    Ok(SynthCorpus {
        corpus,
        labels,
        vocab,
        doc_tokens,
        topic_ranks,
        rank_probs,
        config: cfg.clone(),
    })
}

/// Toy retriever: fixed tf-idf random-projection embedder and a trainable
/// vocabulary head.
#[derive(Debug, Clone, PartialEq)]
pub struct SimModel {
    /// `D x V` embedder, unit-norm rows.
    pub embedder: Vec<f64>,
    /// Smoothed idf used for tf-idf vectors.
    pub idf: Vec<f64>,
    /// `V x D` head.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub vocab_size: usize,
    pub dim: usize,
    pub top_terms: usize,
}

impl SimModel {
    /// Initialize against `world`: each head row is the scaled embedder
    /// column of its token, weakened for the deficient topic's own tokens.
    pub fn init(world: &SynthCorpus, cfg: &SimModelConfig) -> Result<Self> {
        if cfg.top_terms == 0 {
            return Err(Error::param("top_terms", "must be >= 1"));
        }
        let v = world.vocab.len();
        let d = world.config.dim;
        let mut rng = ChaCha8Rng::seed_from_u64(world.config.seed ^ 0x005e_ed0f_e4b3_dde5);
        let mut embedder: Vec<f64> = (0..d * v).map(|_| gaussian(&mut rng)).collect();
        for row in embedder.chunks_exact_mut(v) {
            let norm = libm::sqrt(row.iter().map(|x| x * x).sum::<f64>());
            row.iter_mut().for_each(|x| *x /= norm);
        }

        let stats = world.vocab_stats();
        let n = stats.n_docs as f64;
        let idf = stats
            .df
            .iter()
            .map(|&df| libm::log((1.0 + n) / (1.0 + df as f64)) + 1.0)
            .collect();

        let mut weights = alloc::vec![0.0; v * d];
        for t in 0..v {
            let col: Vec<f64> = (0..d).map(|i| embedder[i * v + t]).collect();
            let norm = libm::sqrt(col.iter().map(|x| x * x).sum::<f64>());
            for i in 0..d {
                weights[t * d + i] = cfg.init_scale * col[i] / norm;
            }
        }
        if let Some(topic) = cfg.deficient_topic {
            if topic >= world.config.topics {
                return Err(Error::param("deficient_topic", "no such topic"));
            }
            for t in world.own_tokens(topic) {
                let t = t as usize;
                weights[t * d..(t + 1) * d]
                    .iter_mut()
                    .for_each(|w| *w *= cfg.deficiency);
            }
        }
        Ok(Self {
            embedder,
            idf,
            weights,
            bias: alloc::vec![0.0; v],
            vocab_size: v,
            dim: d,
            top_terms: cfg.top_terms,
        })
    }

    fn tfidf(&self, tokens: &[u32]) -> BTreeMap<u32, f64> {
        let mut x: BTreeMap<u32, f64> = BTreeMap::new();
        for &t in tokens {
            *x.entry(t).or_insert(0.0) += 1.0;
        }
        for (t, w) in x.iter_mut() {
            *w *= self.idf[*t as usize];
        }
        x
    }

    /// Unit-norm embedding of a token list.
    pub fn embed(&self, id: &str, tokens: &[u32]) -> Result<Vec<f64>> {
        if let Some(&bad) = tokens.iter().find(|&&t| t as usize >= self.vocab_size) {
            return Err(Error::param("tokens", alloc::format!("token {bad} outside vocabulary")));
        }
        let x = self.tfidf(tokens);
        let mut e = alloc::vec![0.0; self.dim];
        for (i, ei) in e.iter_mut().enumerate() {
            let row = &self.embedder[i * self.vocab_size..(i + 1) * self.vocab_size];
            *ei = x.iter().map(|(&t, &w)| row[t as usize] * w).sum();
        }
        let norm = libm::sqrt(e.iter().map(|x| x * x).sum::<f64>());
        if !(norm > 0.0) {
            return Err(Error::ZeroVector(String::from(id)));
        }
        e.iter_mut().for_each(|x| *x /= norm);
        Ok(e)
    }

    /// The document's `top_terms` highest tf-idf tokens (ties: lower id).
    pub fn top_terms(&self, tokens: &[u32]) -> Vec<u32> {
        let mut x: Vec<(u32, f64)> = self.tfidf(tokens).into_iter().collect();
        x.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        x.truncate(self.top_terms);
        x.into_iter().map(|(t, _)| t).collect()
    }

    pub fn log_probs(&self, e: &[f64]) -> Vec<f64> {
        let logits: Vec<f64> = self
            .weights
            .chunks_exact(self.dim)
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(e).map(|(w, x)| w * x).sum::<f64>() + b)
            .collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + libm::log(logits.iter().map(|l| libm::exp(l - max)).sum::<f64>());
        logits.into_iter().map(|l| l - lse).collect()
    }

    /// Training objective: sum over documents of the log-probability of
    /// each of its top terms.
    pub fn objective(&self, docs: &[(&str, &[u32])]) -> Result<f64> {
        let mut total = 0.0;
        for (id, toks) in docs {
            let e = self.embed(id, toks)?;
            let lp = self.log_probs(&e);
            total += self.top_terms(toks).iter().map(|&t| lp[t as usize]).sum::<f64>();
        }
        Ok(total)
    }

    /// Gradient of [`SimModel::objective`] with respect to the head weights
    /// and bias.
    pub fn gradient(&self, docs: &[(&str, &[u32])]) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut gw = alloc::vec![0.0; self.weights.len()];
        let mut gb = alloc::vec![0.0; self.bias.len()];
        for (id, toks) in docs {
            let e = self.embed(id, toks)?;
            let lp = self.log_probs(&e);
            let targets = self.top_terms(toks);
            let m = targets.len() as f64;
            // d/dlogit_v of sum_t log p(t) = count_t(v) - m * p(v)
            let mut coef: Vec<f64> = lp.iter().map(|l| -m * libm::exp(*l)).collect();
            for &t in &targets {
                coef[t as usize] += 1.0;
            }
            for (v, &c) in coef.iter().enumerate() {
                gb[v] += c;
                for (g, &x) in gw[v * self.dim..(v + 1) * self.dim].iter_mut().zip(&e) {
                    *g += c * x;
                }
            }
        }
        Ok((gw, gb))
    }

    pub fn projection(&self, vocab: &[String]) -> Result<VocabProjection> {
        VocabProjection::new(
            self.vocab_size,
            self.dim,
            self.weights.iter().map(|&w| w as f32).collect(),
            self.bias.iter().map(|&b| b as f32).collect(),
        )?
        .with_vocab(vocab.to_vec())
    }
}

/// Embedding of one document under `model`.
pub fn sim_embed(model: &SimModel, id: &str, tokens: &[u32]) -> Result<Vec<f64>> {
    model.embed(id, tokens)
}

/// One gradient-ascent step on the top-term log-likelihood of `docs`.
pub fn sim_train(model: &SimModel, docs: &[(&str, &[u32])], learning_rate: f64) -> Result<SimModel> {
    if !(learning_rate >= 0.0 && learning_rate.is_finite()) {
        return Err(Error::param("learning_rate", "must be finite and >= 0"));
    }
    if docs.is_empty() {
        return Err(Error::param("docs", "training set is empty"));
    }
    let mut next = model.clone();
    if learning_rate == 0.0 {
        return Ok(next);
    }
    let (gw, gb) = model.gradient(docs)?;
    for (w, g) in next.weights.iter_mut().zip(gw) {
        *w += learning_rate * g;
    }
    for (b, g) in next.bias.iter_mut().zip(gb) {
        *b += learning_rate * g;
    }
    Ok(next)
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen::<f64>();
    libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(core::f64::consts::TAU * u2)
}

/// In-process [`ModelProvider`] backed by a [`SimModel`].
#[derive(Debug, Clone)]
pub struct SimProvider<'w> {
    pub model: SimModel,
    world: &'w SynthCorpus,
    embeddings: EmbeddingSet,
    projection: VocabProjection,
    learning_rate: f64,
    epochs: usize,
    ordinal: BTreeMap<String, usize>,
}

impl<'w> SimProvider<'w> {
    pub fn new(
        world: &'w SynthCorpus,
        model: SimModel,
        learning_rate: f64,
        epochs: usize,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(world.corpus.len() * model.dim);
        for (doc, toks) in world.corpus.docs().iter().zip(&world.doc_tokens) {
            data.extend(model.embed(&doc.id, toks)?.into_iter().map(|x| x as f32));
        }
        let ids: Vec<String> = world.corpus.ids().map(String::from).collect();
        let embeddings = EmbeddingSet::new(ids.clone(), model.dim, data)?.with_provenance(Provenance {
            model: String::from("sim-tfidf-projection"),
            pooling: Pooling::Mean,
        });
        let projection = model.projection(&world.vocab)?;
        Ok(Self {
            model,
            world,
            embeddings,
            projection,
            learning_rate,
            epochs,
            ordinal: ids.into_iter().enumerate().map(|(i, id)| (id, i)).collect(),
        })
    }

    pub fn train_on(&mut self, ids: &[&str]) -> Result<()> {
        let docs: Vec<(&str, &[u32])> = ids
            .iter()
            .map(|id| {
                let i = *self
                    .ordinal
                    .get(*id)
                    .ok_or_else(|| Error::NotFound(String::from(*id)))?;
                Ok((*id, self.world.doc_tokens[i].as_slice()))
            })
            .collect::<Result<_>>()?;
        for _ in 0..self.epochs {
            self.model = sim_train(&self.model, &docs, self.learning_rate)?;
        }
        self.projection = self.model.projection(&self.world.vocab)?;
        Ok(())
    }
}

impl ModelProvider for SimProvider<'_> {
    fn embeddings(&self) -> &EmbeddingSet {
        &self.embeddings
    }

    fn projection(&self) -> &VocabProjection {
        &self.projection
    }

    fn update(&mut self, _iteration: usize, selection: &[Selection]) -> core::result::Result<(), String> {
        if selection.is_empty() {
            return Ok(());
        }
        let ids: Vec<&str> = selection.iter().map(|s| s.doc_id.as_str()).collect();
        self.train_on(&ids).map_err(|e| alloc::format!("{e}"))
    }
}

/// Everything [`run_sim`] needs.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub synth: SynthConfig,
    pub model: SimModelConfig,
    pub pipeline: SimPipeline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimMetrics {
    pub documents: usize,
    pub outliers: usize,
    pub filter_precision: f64,
    pub filter_recall: f64,
    pub removal_ratio: f64,
    /// Raw domain-mean EU per round.
    pub eu_trajectory: Vec<f64>,
    /// Per round, cumulative picks per cluster.
    pub cluster_counts: Vec<Vec<usize>>,
    /// Per round, Gini coefficient of `cluster_counts`.
    pub gini: Vec<f64>,
    /// Per round, picks per topic (outliers in the last slot).
    pub topic_counts: Vec<Vec<usize>>,
    pub cluster_sizes: Vec<usize>,
}

/// Everything produced by a simulated run.
#[derive(Debug, Clone)]
pub struct SimOutcome {
    pub report: RunReport,
    pub metrics: SimMetrics,
    pub filter: FilterReport,
    pub clusters: ClusterModel,
}

/// Generated corpus, filtered corpus and clusters, before the loop runs.
#[derive(Debug, Clone)]
pub struct SimSetup {
    pub world: SynthCorpus,
    pub filtered: Corpus,
    pub filter: FilterReport,
    pub clusters: ClusterModel,
    pub stats: VocabStats,
    pub model: SimModel,
}

/// Generate, filter and cluster.
pub fn prepare_sim(cfg: &SimConfig, loop_cfg: &LoopConfig) -> Result<SimSetup> {
    loop_cfg.validate()?;
    let world = generate_corpus(&cfg.synth)?;
    let lexicon = build_lexicon(&world.corpus)?;
    let index = InvertedIndex::build(&world.corpus, &lexicon, cfg.pipeline.bm25)?;
    let knn = KnnParams {
        k: loop_cfg.k_nn,
        query_cap: cfg.pipeline.query_cap,
        ..KnnParams::default()
    };
    let distances = index.all_distances(&world.corpus, &knn)?;
    let (filtered, filter) = filter_corpus(
        &world.corpus,
        |id| world.corpus.ordinal(id).map(|i| distances[i]),
        loop_cfg.z_thr,
    )?;
    let model = SimModel::init(&world, &cfg.model)?;
    let provider = SimProvider::new(&world, model.clone(), cfg.model.learning_rate, 1)?;
    let kept: Vec<String> = filtered.ids().map(String::from).collect();
    let clusters = kmeans_cluster(
        provider.embeddings(),
        Some(&kept),
        cfg.pipeline.clusters.min(kept.len()),
        loop_cfg.seed,
        cfg.pipeline.kmeans_max_iter,
    )?;
    let stats = world.vocab_stats();
    Ok(SimSetup {
        world,
        filtered,
        filter,
        clusters,
        stats,
        model,
    })
}

/// Run the full pipeline on a synthetic world.
pub fn run_sim(cfg: &SimConfig, loop_cfg: &LoopConfig) -> core::result::Result<SimOutcome, LoopError> {
    let setup = prepare_sim(cfg, loop_cfg)?;
    let mut provider = SimProvider::new(
        &setup.world,
        setup.model.clone(),
        cfg.model.learning_rate,
        cfg.model.epochs,
    )?;
    let report = run_loop(&setup.clusters, &setup.stats, &mut provider, loop_cfg)?;
    let metrics = sim_metrics(&setup, &report);
    Ok(SimOutcome {
        report,
        metrics,
        filter: setup.filter,
        clusters: setup.clusters,
    })
}

/// Mean EU of every cluster before and after one [`sim_train`] step on all
/// documents of `cluster`, as `(before, after)` pairs.
pub fn cluster_eu_shift(
    setup: &SimSetup,
    cluster: usize,
    learning_rate: f64,
    loop_cfg: &LoopConfig,
) -> Result<Vec<(f64, f64)>> {
    let clusters = &setup.clusters;
    if cluster >= clusters.k() {
        return Err(Error::param("cluster", alloc::format!("no cluster {cluster}")));
    }
    let mut provider = SimProvider::new(&setup.world, setup.model.clone(), learning_rate, 1)?;
    let means = |p: &SimProvider| -> Result<Vec<f64>> {
        let scores = crate::eu::score_corpus(
            clusters.ids.iter().map(String::as_str),
            p.embeddings(),
            p.projection(),
            &setup.stats,
            loop_cfg.k_eu,
            loop_cfg.estimator,
            0,
        )?;
        let mut sum = alloc::vec![0.0; clusters.k()];
        for ((_, u), &c) in scores.scores.iter().zip(&clusters.labels) {
            sum[c] += u;
        }
        Ok(sum
            .iter()
            .zip(&clusters.sizes)
            .map(|(s, &n)| if n == 0 { 0.0 } else { s / n as f64 })
            .collect())
    };
    let before = means(&provider)?;
    let members: Vec<&str> = clusters
        .ids
        .iter()
        .zip(&clusters.labels)
        .filter(|(_, &c)| c == cluster)
        .map(|(id, _)| id.as_str())
        .collect();
    provider.train_on(&members)?;
    let after = means(&provider)?;
    Ok(before.into_iter().zip(after).collect())
}

fn sim_metrics(setup: &SimSetup, report: &RunReport) -> SimMetrics {
    let world = &setup.world;
    let outlier_ids: alloc::collections::BTreeSet<&str> = world
        .corpus
        .ids()
        .zip(&world.labels)
        .filter(|(_, l)| **l == Label::Outlier)
        .map(|(id, _)| id)
        .collect();
    let removed = &setup.filter.removed;
    let hits = removed.iter().filter(|r| outlier_ids.contains(r.id.as_str())).count();
    let precision = if removed.is_empty() { 1.0 } else { hits as f64 / removed.len() as f64 };
    let recall = if outlier_ids.is_empty() { 1.0 } else { hits as f64 / outlier_ids.len() as f64 };

    let topics = world.config.topics;
    let mut cum = alloc::vec![0usize; setup.clusters.k()];
    let mut cluster_counts = Vec::new();
    let mut gini_per_round = Vec::new();
    let mut topic_counts = Vec::new();
    for round in &report.selections {
        let mut per_topic = alloc::vec![0usize; topics + 1];
        for s in round {
            cum[s.cluster] += 1;
            let i = world.corpus.ordinal(&s.doc_id).expect("selected from corpus");
            match world.labels[i] {
                Label::Topic(t) => per_topic[t] += 1,
                Label::Outlier => per_topic[topics] += 1,
            }
        }
        let as_f: Vec<f64> = cum.iter().map(|&c| c as f64).collect();
        gini_per_round.push(gini(&as_f));
        cluster_counts.push(cum.clone());
        topic_counts.push(per_topic);
    }
    SimMetrics {
        documents: world.corpus.len(),
        outliers: outlier_ids.len(),
        filter_precision: precision,
        filter_recall: recall,
        removal_ratio: setup.filter.removal_ratio,
        eu_trajectory: report.trace.rows.iter().map(|r| r.raw_mean_eu).collect(),
        cluster_counts,
        gini: gini_per_round,
        topic_counts,
        cluster_sizes: setup.clusters.sizes.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> SynthConfig {
        SynthConfig {
            topics: 2,
            docs_per_topic: 20,
            vocab_size: 50,
            tokens_per_doc: 12,
            dim: 8,
            outlier_fraction: 0.1,
            seed: 3,
            ..Default::default()
        }
    }

    #[test]
    fn sizes_and_labels() {
        let w = generate_corpus(&SynthConfig::default()).unwrap();
        assert_eq!(w.corpus.len(), 315);
        assert_eq!(w.labels.iter().filter(|l| **l == Label::Outlier).count(), 15);
        let none = generate_corpus(&SynthConfig { outlier_fraction: 0.0, ..tiny() }).unwrap();
        assert!(none.labels.iter().all(|l| *l != Label::Outlier));
    }

    #[test]
    fn outliers_share_no_terms_with_topics() {
        let w = generate_corpus(&tiny()).unwrap();
        let v = w.config.vocab_size as u32;
        for (toks, label) in w.doc_tokens.iter().zip(&w.labels) {
            match label {
                Label::Outlier => assert!(toks.iter().all(|&t| t >= v)),
                Label::Topic(_) => assert!(toks.iter().all(|&t| t < v)),
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_corpus(&tiny()).unwrap();
        let b = generate_corpus(&tiny()).unwrap();
        assert_eq!(a.corpus, b.corpus);
        assert_eq!(a.doc_tokens, b.doc_tokens);
    }

    #[test]
    fn embeddings_are_unit_and_repeatable() {
        let w = generate_corpus(&tiny()).unwrap();
        let m = SimModel::init(&w, &SimModelConfig::default()).unwrap();
        let e1 = sim_embed(&m, "a", &w.doc_tokens[0]).unwrap();
        let e2 = sim_embed(&m, "b", &w.doc_tokens[0]).unwrap();
        assert_eq!(e1, e2);
        let norm: f64 = e1.iter().map(|x| x * x).sum();
        assert!((libm::sqrt(norm) - 1.0).abs() < 1e-9);
        assert_eq!(sim_embed(&m, "e", &[]).unwrap_err(), Error::ZeroVector("e".into()));
    }

    #[test]
    fn zero_rate_changes_nothing() {
        let w = generate_corpus(&tiny()).unwrap();
        let m = SimModel::init(&w, &SimModelConfig::default()).unwrap();
        let docs = [("d", w.doc_tokens[0].as_slice())];
        assert_eq!(sim_train(&m, &docs, 0.0).unwrap(), m);
        assert!(sim_train(&m, &docs, -1.0).is_err());
    }

    #[test]
    fn zero_rate_run_is_flat_and_budget_stops() {
        let cfg = SimConfig {
            synth: tiny(),
            model: SimModelConfig {
                learning_rate: 0.0,
                ..Default::default()
            },
            pipeline: SimPipeline {
                clusters: 2,
                ..Default::default()
            },
        };
        let lc = LoopConfig {
            batch_size: 4,
            max_iterations: 5,
            max_budget: 20,
            ..sim_loop_config(1)
        };
        let out = run_sim(&cfg, &lc).unwrap();
        let eu = &out.metrics.eu_trajectory;
        assert_eq!(eu.len(), 5);
        assert!(eu.iter().all(|&x| x == eu[0]));
        assert_eq!(out.report.stop_reason, crate::control::StopReason::Budget);
        assert_eq!(out.report.total_sampled, 20);
    }

    #[test]
    fn small_step_increases_objective() {
        let w = generate_corpus(&tiny()).unwrap();
        let m = SimModel::init(&w, &SimModelConfig::default()).unwrap();
        let docs: Vec<(&str, &[u32])> =
            w.doc_tokens[..5].iter().map(|t| ("d", t.as_slice())).collect();
        let before = m.objective(&docs).unwrap();
        let after = sim_train(&m, &docs, 1e-3).unwrap().objective(&docs).unwrap();
        assert!(after > before, "{after} <= {before}");
    }
}
