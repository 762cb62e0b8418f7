//! Cluster-balanced selection.
//!
//! Each round splits the batch across clusters with weights
//! `w_i = |C_i| / (P_i + eps)`, where `P_i` counts earlier picks from the
//! cluster, so clusters that were already sampled heavily give way to the
//! rest. Inside a cluster documents are picked greedily by
//! `lambda * z(EU) + (1 - lambda) * z(psi)`, with `psi` the negated maximum
//! cosine similarity to documents already picked in this round.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::eu::{EmbeddingSet, EuScores};
use crate::kmeans::ClusterModel;
use crate::{Error, Result};

pub const PENALTY_EPSILON: f64 = 1e-6;
pub const DEFAULT_LAMBDA: f64 = 0.5;

/// Per-cluster weights. With `penalty` off this is plain size-proportional
/// allocation.
pub fn cluster_weights(sizes: &[usize], picked: &[usize], penalty: bool) -> Vec<f64> {
    sizes
        .iter()
        .zip(picked)
        .map(|(&s, &p)| {
            if penalty {
                s as f64 / (p as f64 + PENALTY_EPSILON)
            } else {
                s as f64
            }
        })
        .collect()
}

/// Real-valued quotas `n * w_i / sum_j w_j`.
pub fn quotas(weights: &[f64], n: usize) -> Vec<f64> {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        let m = weights.len().max(1) as f64;
        return weights.iter().map(|_| n as f64 / m).collect();
    }
    weights.iter().map(|&w| n as f64 * w / total).collect()
}

/// Integer split of `n` proportional to `weights` by largest remainder
/// (ties: lower index).
fn largest_remainder(weights: &[f64], n: usize) -> Vec<usize> {
    let q = quotas(weights, n);
    let mut out: Vec<usize> = q.iter().map(|&x| libm::floor(x) as usize).collect();
    let assigned: usize = out.iter().sum();
    let mut order: Vec<usize> = (0..q.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = q[a] - libm::floor(q[a]);
        let rb = q[b] - libm::floor(q[b]);
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().cycle().take(n.saturating_sub(assigned)) {
        out[i] += 1;
    }
    out
}

/// Per-cluster budgets summing to `min(n, sum(available))` with
/// `n_i <= available_i`. Shortfall from capped clusters is re-split among
/// clusters with spare candidates using the same weights.
pub fn allocate_budget(
    sizes: &[usize],
    picked: &[usize],
    n: usize,
    available: &[usize],
    penalty: bool,
) -> Result<Vec<usize>> {
    if sizes.len() != picked.len() || sizes.len() != available.len() {
        return Err(Error::Shape(alloc::format!(
            "sizes {}, picked {}, available {}",
            sizes.len(),
            picked.len(),
            available.len()
        )));
    }
    let total_available: usize = available.iter().sum();
    if total_available <= n {
        return Ok(available.to_vec());
    }
    let weights = cluster_weights(sizes, picked, penalty);
    let mut budget = largest_remainder(&weights, n);
    loop {
        let mut shortfall = 0;
        for (b, &a) in budget.iter_mut().zip(available) {
            if *b > a {
                shortfall += *b - a;
                *b = a;
            }
        }
        if shortfall == 0 {
            return Ok(budget);
        }
        let open: Vec<usize> = (0..budget.len()).filter(|&i| budget[i] < available[i]).collect();
        let open_weights: Vec<f64> = open.iter().map(|&i| weights[i]).collect();
        let extra = largest_remainder(&open_weights, shortfall);
        for (&i, e) in open.iter().zip(extra) {
            budget[i] += e;
        }
    }
}

/// `(x - mean) / std` with the population std; all zeros when the spread is
/// zero up to rounding.
pub fn zscore_normalize(values: &[f64]) -> Result<Vec<f64>> {
    let mean = crate::stats::mean(values).ok_or(Error::EmptyInput)?;
    let std = crate::stats::std_dev(values).unwrap_or(0.0);
    if std <= 1e-12 * mean.abs().max(1.0) {
        return Ok(alloc::vec![0.0; values.len()]);
    }
    Ok(values.iter().map(|x| (x - mean) / std).collect())
}

pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x as f64, y as f64);
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (libm::sqrt(na) * libm::sqrt(nb))
    }
}

/// One document picked inside a cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pick {
    pub doc_id: String,
    pub eu: f64,
    /// Raw diversity term `-max cos` against earlier picks (0 for the first).
    pub psi: f64,
    pub joint_score: f64,
}

/// Greedy MMR selection of `n` documents from `candidates`.
///
/// EU is z-normalized once over the candidates; the diversity term is
/// recomputed and re-normalized over the remaining candidates each step.
/// Ties go to the higher normalized EU, then the lexicographically smaller id.
pub fn select_within_cluster(
    candidates: &[&str],
    eu: &BTreeMap<&str, f64>,
    emb: &EmbeddingSet,
    n: usize,
    lambda: f64,
) -> Result<Vec<Pick>> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::param("lambda", "must lie in [0, 1]"));
    }
    if n > candidates.len() {
        return Err(Error::param(
            "n_i",
            alloc::format!("{n} exceeds {} candidates", candidates.len()),
        ));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    emb.check_coverage(candidates.iter().copied())?;
    let missing: Vec<String> = candidates
        .iter()
        .filter(|id| !eu.contains_key(*id))
        .map(|id| String::from(*id))
        .collect();
    if !missing.is_empty() {
        return Err(Error::Coverage {
            what: "EU score",
            ids: missing,
        });
    }

    let raw_eu: Vec<f64> = candidates.iter().map(|id| eu[id]).collect();
    let eu_hat = zscore_normalize(&raw_eu)?;
    let rows: Vec<&[f32]> = candidates.iter().map(|id| emb.get(id).expect("covered")).collect();

    let mut remaining: Vec<usize> = (0..candidates.len()).collect();
    // running max cosine to the selected set, per candidate
    let mut max_sim: Vec<f64> = alloc::vec![f64::NEG_INFINITY; candidates.len()];
    let mut picks = Vec::with_capacity(n);
    for step in 0..n {
        let psi: Vec<f64> = remaining
            .iter()
            .map(|&i| if step == 0 { 0.0 } else { -max_sim[i] })
            .collect();
        let psi_hat = zscore_normalize(&psi)?;
        let mut best: Option<(usize, f64)> = None;
        for (slot, &i) in remaining.iter().enumerate() {
            let score = lambda * eu_hat[i] + (1.0 - lambda) * psi_hat[slot];
            let better = match best {
                None => true,
                Some((b, bs)) => {
                    let j = remaining[b];
                    score > bs
                        || (score == bs
                            && (eu_hat[i] > eu_hat[j]
                                || (eu_hat[i] == eu_hat[j] && candidates[i] < candidates[j])))
                }
            };
            if better {
                best = Some((slot, score));
            }
        }
        let (slot, score) = best.expect("remaining nonempty");
        let chosen = remaining.remove(slot);
        picks.push(Pick {
            doc_id: String::from(candidates[chosen]),
            eu: raw_eu[chosen],
            psi: psi[slot],
            joint_score: score,
        });
        for &i in &remaining {
            max_sim[i] = max_sim[i].max(cosine(rows[i], rows[chosen]));
        }
    }
    Ok(picks)
}

/// A pick annotated with its round and cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub iteration: usize,
    pub doc_id: String,
    pub cluster: usize,
    pub eu: f64,
    pub psi: f64,
    pub joint_score: f64,
    /// 0-based position within the cluster's picks for this round.
    pub rank: usize,
}

/// Accumulated picks across rounds.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SamplerState {
    /// Picks per cluster so far.
    pub picked: Vec<usize>,
    pub selected: BTreeSet<String>,
    /// Completed rounds.
    pub iteration: usize,
}

impl SamplerState {
    pub fn new(clusters: usize) -> Self {
        Self {
            picked: alloc::vec![0; clusters],
            selected: BTreeSet::new(),
            iteration: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleParams {
    pub n: usize,
    pub lambda: f64,
    /// Apply the resampling penalty; off means size-proportional budgets.
    pub penalty: bool,
}

/// One sampling round over the unselected documents of `clusters`.
///
/// Returns [`Error::Exhausted`] when nothing is left to pick.
pub fn sample_iteration(
    state: &SamplerState,
    clusters: &ClusterModel,
    eu: &EuScores,
    emb: &EmbeddingSet,
    params: SampleParams,
) -> Result<(Vec<Selection>, SamplerState)> {
    if params.n == 0 {
        return Err(Error::param("n", "must be >= 1"));
    }
    if state.picked.len() != clusters.k() {
        return Err(Error::Shape(alloc::format!(
            "state tracks {} clusters, model has {}",
            state.picked.len(),
            clusters.k()
        )));
    }
    let mut per_cluster: Vec<Vec<&str>> = alloc::vec![Vec::new(); clusters.k()];
    for (id, &c) in clusters.ids.iter().zip(&clusters.labels) {
        if !state.selected.contains(id) {
            per_cluster[c].push(id.as_str());
        }
    }
    let available: Vec<usize> = per_cluster.iter().map(Vec::len).collect();
    if available.iter().all(|&a| a == 0) {
        return Err(Error::Exhausted);
    }
    let budgets = allocate_budget(
        &clusters.sizes,
        &state.picked,
        params.n,
        &available,
        params.penalty,
    )?;

    let lookup = eu.lookup();
    let iteration = state.iteration + 1;
    let mut next = state.clone();
    next.iteration = iteration;
    let mut out = Vec::new();
    for (c, (cands, &budget)) in per_cluster.iter().zip(&budgets).enumerate() {
        let picks = select_within_cluster(cands, &lookup, emb, budget, params.lambda)?;
        next.picked[c] += picks.len();
        for (rank, p) in picks.into_iter().enumerate() {
            next.selected.insert(p.doc_id.clone());
            out.push(Selection {
                iteration,
                doc_id: p.doc_id,
                cluster: c,
                eu: p.eu,
                psi: p.psi,
                joint_score: p.joint_score,
                rank,
            });
        }
    }
    Ok((out, next))
}
