//! Seeded k-means (k-means++ init, Lloyd iterations, Euclidean metric).

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::eu::EmbeddingSet;
use crate::{Error, Result};

/// Convergence threshold on the largest centroid move.
pub const SHIFT_TOLERANCE: f64 = 1e-6;

/// Static cluster assignment over a fixed document set.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    /// `k x dim`, row-major.
    pub centroids: Vec<f64>,
    pub dim: usize,
    /// Document ids in assignment order.
    pub ids: Vec<String>,
    pub labels: Vec<usize>,
    pub sizes: Vec<usize>,
    index: BTreeMap<String, usize>,
}

impl ClusterModel {
    /// Build from explicit labels; centroids are left empty.
    pub fn from_assignment(ids: Vec<String>, labels: Vec<usize>, k: usize) -> Result<Self> {
        if ids.len() != labels.len() {
            return Err(Error::Shape(alloc::format!(
                "{} ids, {} labels",
                ids.len(),
                labels.len()
            )));
        }
        let mut sizes = alloc::vec![0usize; k];
        for &l in &labels {
            if l >= k {
                return Err(Error::param("cluster", alloc::format!("label {l} >= k = {k}")));
            }
            sizes[l] += 1;
        }
        let mut index = BTreeMap::new();
        for (i, id) in ids.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(Error::DuplicateId(id.clone()));
            }
        }
        Ok(Self {
            centroids: Vec::new(),
            dim: 0,
            ids,
            labels,
            sizes,
            index,
        })
    }

    pub fn k(&self) -> usize {
        self.sizes.len()
    }

    pub fn cluster_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).map(|&i| self.labels[i])
    }

    pub fn centroid(&self, c: usize) -> &[f64] {
        &self.centroids[c * self.dim..(c + 1) * self.dim]
    }

    /// Sum of squared distances from each row to its centroid.
    pub fn distortion(&self, emb: &EmbeddingSet) -> f64 {
        self.ids
            .iter()
            .zip(&self.labels)
            .map(|(id, &c)| sq_dist(emb.get(id).expect("clustered id"), self.centroid(c)))
            .sum()
    }
}

fn sq_dist(row: &[f32], centroid: &[f64]) -> f64 {
    row.iter()
        .zip(centroid)
        .map(|(&x, &c)| {
            let d = x as f64 - c;
            d * d
        })
        .sum()
}

/// Cluster the rows of `emb` whose ids are listed in `ids` (all rows when
/// `ids` is `None`).
///
/// Deterministic given the inputs and `seed`. A cluster that loses all its
/// members is re-seeded at the point farthest from its own centroid.
pub fn kmeans_cluster(
    emb: &EmbeddingSet,
    ids: Option<&[String]>,
    k: usize,
    seed: u64,
    max_iter: usize,
) -> Result<ClusterModel> {
    let ids: Vec<String> = match ids {
        Some(ids) => {
            emb.check_coverage(ids.iter().map(String::as_str))?;
            ids.to_vec()
        }
        None => emb.ids().to_vec(),
    };
    let n = ids.len();
    if k == 0 {
        return Err(Error::param("clusters", "must be >= 1"));
    }
    if k > n {
        return Err(Error::param(
            "clusters",
            alloc::format!("k = {k} exceeds {n} documents"),
        ));
    }
    let dim = emb.dim();
    let rows: Vec<&[f32]> = ids.iter().map(|id| emb.get(id).expect("covered")).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus_init(&rows, k, dim, &mut rng);
    let mut labels = alloc::vec![0usize; n];

    for _ in 0..max_iter.max(1) {
        assign(&rows, &centroids, dim, &mut labels);

        let mut sums = alloc::vec![0.0f64; k * dim];
        let mut counts = alloc::vec![0usize; k];
        for (row, &c) in rows.iter().zip(&labels) {
            counts[c] += 1;
            for (s, &x) in sums[c * dim..(c + 1) * dim].iter_mut().zip(*row) {
                *s += x as f64;
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                // farthest point from its current centroid, lowest index on ties
                let Some(far) = (0..n)
                    .filter(|&i| counts[labels[i]] > 1)
                    .map(|i| (i, sq_dist(rows[i], &centroids[labels[i] * dim..(labels[i] + 1) * dim])))
                    .fold(None, |best: Option<(usize, f64)>, cur| match best {
                        Some(b) if b.1 >= cur.1 => Some(b),
                        _ => Some(cur),
                    })
                    .map(|(i, _)| i)
                else {
                    continue;
                };
                let old = labels[far];
                counts[old] -= 1;
                for (s, &x) in sums[old * dim..(old + 1) * dim].iter_mut().zip(rows[far]) {
                    *s -= x as f64;
                }
                labels[far] = c;
                counts[c] = 1;
                for (s, &x) in sums[c * dim..(c + 1) * dim].iter_mut().zip(rows[far]) {
                    *s = x as f64;
                }
            }
        }

        let mut max_shift: f64 = 0.0;
        for c in 0..k {
            if counts[c] == 0 {
                continue;
            }
            let inv = 1.0 / counts[c] as f64;
            let mut shift = 0.0;
            for j in 0..dim {
                let new = sums[c * dim + j] * inv;
                let d = new - centroids[c * dim + j];
                shift += d * d;
                centroids[c * dim + j] = new;
            }
            max_shift = max_shift.max(libm::sqrt(shift));
        }
        if max_shift < SHIFT_TOLERANCE {
            break;
        }
    }
    assign(&rows, &centroids, dim, &mut labels);

    let mut sizes = alloc::vec![0usize; k];
    for &l in &labels {
        sizes[l] += 1;
    }
    let index = ids.iter().enumerate().map(|(i, id)| (id.clone(), i)).collect();
    Ok(ClusterModel {
        centroids,
        dim,
        ids,
        labels,
        sizes,
        index,
    })
}

fn assign(rows: &[&[f32]], centroids: &[f64], dim: usize, labels: &mut [usize]) {
    let k = centroids.len() / dim;
    for (row, label) in rows.iter().zip(labels.iter_mut()) {
        let mut best = (0, f64::INFINITY);
        for c in 0..k {
            let d = sq_dist(row, &centroids[c * dim..(c + 1) * dim]);
            if d < best.1 {
                best = (c, d);
            }
        }
        *label = best.0;
    }
}

fn plus_plus_init(rows: &[&[f32]], k: usize, dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = rows.len();
    let mut chosen = Vec::with_capacity(k);
    chosen.push(rng.gen_range(0..n));
    let mut nearest: Vec<f64> = rows
        .iter()
        .map(|r| sq_dist_rows(r, rows[chosen[0]]))
        .collect();
    while chosen.len() < k {
        let total: f64 = nearest.iter().sum();
        let next = if total > 0.0 {
            let target = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &d) in nearest.iter().enumerate() {
                acc += d;
                if d > 0.0 && acc > target {
                    pick = Some(i);
                    break;
                }
            }
            // rounding can leave target just above the last partial sum
            pick.unwrap_or_else(|| nearest.iter().rposition(|&d| d > 0.0).expect("total > 0"))
        } else {
            (0..n).find(|i| !chosen.contains(i)).expect("k <= n")
        };
        chosen.push(next);
        for (d, r) in nearest.iter_mut().zip(rows) {
            *d = d.min(sq_dist_rows(r, rows[next]));
        }
    }
    let mut centroids = Vec::with_capacity(k * dim);
    for &i in &chosen {
        centroids.extend(rows[i].iter().map(|&x| x as f64));
    }
    centroids
}

fn sq_dist_rows(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum()
}
