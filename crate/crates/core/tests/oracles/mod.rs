//! Brute-force reference implementations. Written from the definitions
//! without reusing any library algorithm, so library bugs cannot cancel out.
#![allow(dead_code)]

use std::collections::BTreeMap;

/// Documents as term-string lists; term ids are first-occurrence order.
pub struct NaiveCorpus {
    pub docs: Vec<Vec<String>>,
    pub term_ids: BTreeMap<String, u32>,
    df: BTreeMap<String, usize>,
    pub k1: f64,
    pub b: f64,
}

impl NaiveCorpus {
    pub fn new(docs: Vec<Vec<String>>, k1: f64, b: f64) -> Self {
        let mut term_ids = BTreeMap::new();
        for d in &docs {
            for t in d {
                let next = term_ids.len() as u32;
                term_ids.entry(t.clone()).or_insert(next);
            }
        }
        let mut df = BTreeMap::new();
        for term in term_ids.keys() {
            let n = docs.iter().filter(|d| d.iter().any(|t| t == term)).count();
            df.insert(term.clone(), n);
        }
        Self { docs, term_ids, df, k1, b }
    }

    pub fn df(&self, term: &str) -> usize {
        self.df.get(term).copied().unwrap_or(0)
    }

    pub fn idf(&self, term: &str) -> f64 {
        let n = self.docs.len() as f64;
        let df = self.df(term) as f64;
        libm::log(1.0 + (n - df + 0.5) / (df + 0.5))
    }

    pub fn avgdl(&self) -> f64 {
        let total: usize = self.docs.iter().map(Vec::len).sum();
        total as f64 / self.docs.len() as f64
    }

    /// BM25 of document `j`, summing over `query` entries in order.
    pub fn bm25(&self, query: &[String], j: usize) -> f64 {
        let avgdl = self.avgdl();
        let len_ratio = if avgdl > 0.0 { self.docs[j].len() as f64 / avgdl } else { 1.0 };
        let mut s = 0.0;
        for q in query {
            let tf = self.docs[j].iter().filter(|t| *t == q).count() as f64;
            if tf > 0.0 {
                s += self.idf(q) * tf * (self.k1 + 1.0) / (tf + self.k1 * (1.0 - self.b + self.b * len_ratio));
            }
        }
        s
    }

    /// Top `cap` distinct terms of document `i` by tf * idf, ties to the
    /// lower term id.
    pub fn doc_query(&self, i: usize, cap: usize) -> Vec<String> {
        let mut tf: BTreeMap<&str, usize> = BTreeMap::new();
        for t in &self.docs[i] {
            *tf.entry(t).or_default() += 1;
        }
        let mut w: Vec<(u32, String, f64)> = tf
            .into_iter()
            .map(|(t, c)| (self.term_ids[t], t.to_string(), c as f64 * self.idf(t)))
            .collect();
        w.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)));
        w.into_iter().take(cap).map(|x| x.1).collect()
    }

    /// Every other document scored against document `i`'s query, best first
    /// (ties to the lower ordinal).
    pub fn ranked(&self, i: usize, cap: usize) -> Vec<(usize, f64)> {
        let q = self.doc_query(i, cap);
        let mut all: Vec<(usize, f64)> = (0..self.docs.len())
            .filter(|&j| j != i)
            .map(|j| (j, self.bm25(&q, j)))
            .collect();
        all.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        all
    }

    pub fn knn_distance(&self, i: usize, k: usize, cap: usize, eps: f64) -> f64 {
        1.0 / (eps + self.ranked(i, cap)[k - 1].1)
    }
}

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 { s[n / 2] } else { (s[n / 2 - 1] + s[n / 2]) / 2.0 }
}

/// EU by ranking the full vocabulary.
pub fn eu_full_sort(probs: &[f64], df: &[u32], n_docs: u32, k: usize) -> f64 {
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    let mut u = 0.0;
    for &t in order.iter().take(k) {
        // same log routine as the library so the comparison can be exact
        let idf = n_docs as f64 / df[t].max(1) as f64;
        u += libm::log(idf) - probs[t];
    }
    u
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.iter().map(|x| x / z).collect()
}

/// Largest-remainder split with iterative capping, written as a loop over
/// unit increments.
pub fn allocate(sizes: &[usize], picked: &[usize], n: usize, avail: &[usize], penalty: bool) -> Vec<usize> {
    let total: usize = avail.iter().sum();
    if total <= n {
        return avail.to_vec();
    }
    let w: Vec<f64> = sizes
        .iter()
        .zip(picked)
        .map(|(&s, &p)| if penalty { s as f64 / (p as f64 + 1e-6) } else { s as f64 })
        .collect();
    let mut out = vec![0usize; sizes.len()];
    let mut open: Vec<usize> = (0..sizes.len()).collect();
    let mut left = n;
    while left > 0 {
        let split = hamilton(&open.iter().map(|&i| w[i]).collect::<Vec<_>>(), left);
        let mut over = 0;
        for (slot, &i) in open.iter().enumerate() {
            let room = avail[i] - out[i];
            let give = split[slot].min(room);
            out[i] += give;
            over += split[slot] - give;
        }
        left = over;
        open.retain(|&i| out[i] < avail[i]);
    }
    out
}

/// Hamilton apportionment: floors, then leftover seats by remainder
/// (ties to lower index).
pub fn hamilton(w: &[f64], n: usize) -> Vec<usize> {
    let total: f64 = w.iter().sum();
    let q: Vec<f64> = if total > 0.0 {
        w.iter().map(|x| n as f64 * x / total).collect()
    } else {
        vec![n as f64 / w.len() as f64; w.len()]
    };
    let mut out: Vec<usize> = q.iter().map(|x| x.floor() as usize).collect();
    let mut rem: Vec<(usize, f64)> = q.iter().enumerate().map(|(i, x)| (i, x - x.floor())).collect();
    rem.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut left = n - out.iter().sum::<usize>();
    let mut idx = 0;
    while left > 0 {
        out[rem[idx % rem.len()].0] += 1;
        idx += 1;
        left -= 1;
    }
    out
}

pub fn zscores(v: &[f64]) -> Vec<f64> {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let sd = var.sqrt();
    if sd <= 1e-12 * mean.abs().max(1.0) {
        return vec![0.0; v.len()];
    }
    v.iter().map(|x| (x - mean) / sd).collect()
}

pub fn cos(a: &[f32], b: &[f32]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum();
    let na: f64 = a.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 { 0.0 } else { dot / (na * nb) }
}

/// Greedy MMR recomputing every diversity term from scratch each step.
pub fn mmr(ids: &[String], eu: &[f64], rows: &[Vec<f32>], n: usize, lambda: f64) -> Vec<String> {
    let eu_hat = zscores(eu);
    let mut chosen: Vec<usize> = Vec::new();
    for _ in 0..n {
        let rest: Vec<usize> = (0..ids.len()).filter(|i| !chosen.contains(i)).collect();
        let psi: Vec<f64> = rest
            .iter()
            .map(|&i| {
                if chosen.is_empty() {
                    0.0
                } else {
                    -chosen.iter().map(|&s| cos(&rows[i], &rows[s])).fold(f64::NEG_INFINITY, f64::max)
                }
            })
            .collect();
        let psi_hat = zscores(&psi);
        let mut best = 0;
        for slot in 1..rest.len() {
            let (i, j) = (rest[slot], rest[best]);
            let si = lambda * eu_hat[i] + (1.0 - lambda) * psi_hat[slot];
            let sj = lambda * eu_hat[j] + (1.0 - lambda) * psi_hat[best];
            let better = si > sj
                || (si == sj && (eu_hat[i] > eu_hat[j] || (eu_hat[i] == eu_hat[j] && ids[i] < ids[j])));
            if better {
                best = slot;
            }
        }
        chosen.push(rest[best]);
    }
    chosen.into_iter().map(|i| ids[i].clone()).collect()
}

/// Gini coefficient via the mean absolute difference over all pairs.
pub fn gini(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    if mean == 0.0 {
        return 0.0;
    }
    let mut s = 0.0;
    for a in x {
        for b in x {
            s += (a - b).abs();
        }
    }
    s / (2.0 * n * n * mean)
}
