//! Aleatoric-uncertainty filtering: robust z-scores over lexical k-NN
//! distances, dropping documents above a threshold.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::stats::median;
use crate::{Error, Result};

pub const DEFAULT_Z_THRESHOLD: f64 = 1.5;

/// Scale that makes MAD consistent with the standard deviation of a normal.
const MAD_SCALE: f64 = 0.6745;
/// Same, for the mean absolute deviation (sqrt(pi / 2)).
const MEAN_AD_SCALE: f64 = 1.253314;

/// Robust z-scores `0.6745 * (x - median) / MAD`.
///
/// When MAD is zero the mean absolute deviation is used instead; when both
/// vanish every score is zero.
pub fn modified_zscore(values: &[f64]) -> Result<Vec<f64>> {
    Ok(robust_center(values)?.scores(values))
}

#[derive(Debug, Clone, Copy)]
struct RobustCenter {
    median: f64,
    mad: f64,
    mean_ad: f64,
}

impl RobustCenter {
    fn scores(&self, values: &[f64]) -> Vec<f64> {
        values
            .iter()
            .map(|&x| {
                let dev = x - self.median;
                if self.mad > 0.0 {
                    MAD_SCALE * dev / self.mad
                } else if self.mean_ad > 0.0 {
                    dev / (MEAN_AD_SCALE * self.mean_ad)
                } else {
                    0.0
                }
            })
            .collect()
    }
}

fn robust_center(values: &[f64]) -> Result<RobustCenter> {
    let med = median(values).ok_or(Error::EmptyInput)?;
    let abs_dev: Vec<f64> = values.iter().map(|x| libm::fabs(x - med)).collect();
    let mad = median(&abs_dev).unwrap_or(0.0);
    let mean_ad = abs_dev.iter().sum::<f64>() / abs_dev.len() as f64;
    Ok(RobustCenter {
        median: med,
        mad,
        mean_ad,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemovedDoc {
    pub id: String,
    pub z: f64,
}

/// Outcome of one filtering pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    /// Kept ids in corpus order.
    pub kept: Vec<String>,
    /// Removed ids, highest z first.
    pub removed: Vec<RemovedDoc>,
    pub removal_ratio: f64,
    pub z_thr: f64,
    pub median: f64,
    pub mad: f64,
}

/// Keep the documents whose modified z-score is at most `z_thr`.
///
/// `distance` is queried once per document id and must return a value for
/// every id.
pub fn filter_corpus(
    corpus: &Corpus,
    mut distance: impl FnMut(&str) -> Option<f64>,
    z_thr: f64,
) -> Result<(Corpus, FilterReport)> {
    if !(z_thr > 0.0) {
        return Err(Error::param("z_thr", "must be > 0"));
    }
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut values = Vec::with_capacity(corpus.len());
    let mut missing = Vec::new();
    for id in corpus.ids() {
        match distance(id) {
            Some(d) if d.is_finite() => values.push(d),
            Some(_) => return Err(Error::NonFinite("k-NN distances")),
            None => missing.push(String::from(id)),
        }
    }
    if !missing.is_empty() {
        return Err(Error::Coverage {
            what: "k-NN distance",
            ids: missing,
        });
    }

    let center = robust_center(&values)?;
    let z = center.scores(&values);
    let keep: Vec<bool> = z.iter().map(|&zi| zi <= z_thr).collect();

    let mut removed: Vec<(usize, RemovedDoc)> = corpus
        .ids()
        .zip(&z)
        .enumerate()
        .filter(|(i, _)| !keep[*i])
        .map(|(i, (id, &z))| (i, RemovedDoc { id: String::from(id), z }))
        .collect();
    removed.sort_by(|a, b| b.1.z.total_cmp(&a.1.z).then(a.1.id.cmp(&b.1.id)));

    let filtered = corpus.retain_ordinals(|i| keep[i]);
    let report = FilterReport {
        kept: filtered.ids().map(String::from).collect(),
        removal_ratio: removed.len() as f64 / corpus.len() as f64,
        removed: removed.into_iter().map(|(_, r)| r).collect(),
        z_thr,
        median: center.median,
        mad: center.mad,
    };
    Ok((filtered, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::RawDocument;
    use alloc::collections::BTreeMap;
    use alloc::string::ToString;
    use alloc::vec;

    #[test]
    fn zscore_by_hand() {
        let z = modified_zscore(&[1.0, 2.0, 3.0, 4.0, 100.0]).unwrap();
        assert!((z[4] - 65.4265).abs() < 1e-9);
        assert!((z[0] + 1.349).abs() < 1e-9);
        assert_eq!(z[2], 0.0);
    }

    #[test]
    fn constant_values_score_zero() {
        assert_eq!(modified_zscore(&[4.0; 5]).unwrap(), vec![0.0; 5]);
        assert_eq!(modified_zscore(&[]).unwrap_err(), Error::EmptyInput);
    }

    #[test]
    fn mad_zero_falls_back_to_mean_ad() {
        let m = 2.0;
        let z = modified_zscore(&[m, m, m, m, m + 1.0]).unwrap();
        // mean |dev| = 0.2
        assert!((z[4] - 1.0 / (1.253314 * 0.2)).abs() < 1e-12);
        assert!(z[4] > 0.0);
        let z = modified_zscore(&[m, m, m, m, m - 1.0]).unwrap();
        assert!(z[4] < 0.0);
    }

    fn corpus(n: usize) -> Corpus {
        let recs = (0..n)
            .map(|i| RawDocument {
                id: alloc::format!("d{i}"),
                title: None,
                text: "flu shot".to_string(),
            })
            .collect();
        Corpus::from_records(recs, Default::default()).unwrap()
    }

    #[test]
    fn disjoint_doc_is_the_only_removal() {
        let c = corpus(6);
        let mut dist: BTreeMap<&str, f64> = c.ids().map(|id| (id, 0.8)).collect();
        dist.insert("d3", 1e6);
        let (kept, report) = filter_corpus(&c, |id| dist.get(id).copied(), 1.5).unwrap();
        assert_eq!(kept.len(), 5);
        assert_eq!(report.removed.len(), 1);
        assert_eq!(report.removed[0].id, "d3");
        assert!((report.removal_ratio - 1.0 / 6.0).abs() < 1e-12);
        assert!(kept.get("d3").is_none());
    }

    #[test]
    fn identical_and_vacuous_threshold_keep_all() {
        let c = corpus(4);
        let (kept, report) = filter_corpus(&c, |_| Some(3.0), 1.5).unwrap();
        assert_eq!(kept.len(), 4);
        assert!(report.removed.is_empty());

        let mut v = 0.0;
        let (kept, _) = filter_corpus(
            &c,
            |_| {
                v += 1.0;
                Some(v * v * v)
            },
            f64::INFINITY,
        )
        .unwrap();
        assert_eq!(kept.len(), 4);
    }

    #[test]
    fn missing_distance_is_a_coverage_error() {
        let c = corpus(3);
        let err = filter_corpus(&c, |id| (id != "d1").then_some(1.0), 1.5).unwrap_err();
        assert_eq!(
            err,
            Error::Coverage {
                what: "k-NN distance",
                ids: vec!["d1".into()]
            }
        );
    }
}
