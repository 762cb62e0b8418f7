//! The iterative score / stop / sample / update loop.
//!
//! Each round scores EU for the filtered corpus under the current model,
//! smooths the domain mean with an EMA, stops at the first upturn of the
//! smoothed curve (after a warm-up), otherwise samples a batch and hands it
//! to the model provider for training.

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::eu::{score_corpus, EmbeddingSet, Estimator, TopK, VocabProjection, VocabStats};
use crate::kmeans::ClusterModel;
use crate::sampler::{sample_iteration, SampleParams, SamplerState, Selection};
use crate::{Error, Result};

/// Which documents the domain-average EU is taken over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EuScope {
    /// Every document of the filtered corpus.
    #[default]
    All,
    /// Only documents not yet selected.
    Unsampled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LoopConfig {
    pub batch_size: usize,
    pub max_iterations: usize,
    pub max_budget: usize,
    pub alpha: f64,
    pub lambda: f64,
    pub k_eu: TopK,
    pub z_thr: f64,
    pub k_nn: usize,
    pub min_iterations: usize,
    pub seed: u64,
    pub penalty: bool,
    pub estimator: Estimator,
    pub eu_scope: EuScope,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            batch_size: 500,
            max_iterations: 10,
            max_budget: 5000,
            alpha: 0.4,
            lambda: 0.5,
            k_eu: TopK::Fixed(1000),
            z_thr: 1.5,
            k_nn: 3,
            min_iterations: 2,
            seed: 0,
            penalty: true,
            estimator: Estimator::TopKIdf,
            eu_scope: EuScope::All,
        }
    }
}

impl LoopConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::param("alpha", "must lie in (0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::param("lambda", "must lie in [0, 1]"));
        }
        if self.batch_size == 0 {
            return Err(Error::param("batch_size", "must be >= 1"));
        }
        if self.max_iterations == 0 {
            return Err(Error::param("max_iterations", "must be >= 1"));
        }
        if self.max_budget == 0 {
            return Err(Error::param("max_budget", "must be >= 1"));
        }
        if self.batch_size.saturating_mul(self.max_iterations) < self.max_budget {
            return Err(Error::param(
                "max_budget",
                alloc::format!(
                    "{} exceeds batch_size * max_iterations = {}",
                    self.max_budget,
                    self.batch_size * self.max_iterations
                ),
            ));
        }
        if !(self.z_thr > 0.0) {
            return Err(Error::param("z_thr", "must be > 0"));
        }
        if self.k_nn == 0 {
            return Err(Error::param("k_nn", "must be >= 1"));
        }
        self.k_eu.validate()
    }
}

/// `alpha * x + (1 - alpha) * prev`, or `x` for the first observation.
pub fn ema_update(prev: Option<f64>, x: f64, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::param("alpha", "must lie in (0, 1]"));
    }
    Ok(match prev {
        None => x,
        // exact when x == p, so flat traces stay flat
        Some(p) => p + alpha * (x - p),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Plateau,
    Budget,
    Exhausted,
    Aborted,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::Plateau => "plateau",
            StopReason::Budget => "budget",
            StopReason::Exhausted => "exhausted",
            StopReason::Aborted => "aborted",
        }
    }
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    /// 1-based round.
    pub iteration: usize,
    pub raw_mean_eu: f64,
    pub ema_eu: f64,
    pub n_sampled: usize,
    pub cum_budget: usize,
    pub stopped: bool,
    pub reason: Option<StopReason>,
}

/// Per-round EU means and their EMA.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EuTrace {
    pub rows: Vec<TraceRow>,
}

impl EuTrace {
    /// Append a raw mean, computing its EMA.
    pub fn push(&mut self, raw: f64, alpha: f64) -> Result<&mut TraceRow> {
        let prev = self.rows.last().map(|r| r.ema_eu);
        let ema = ema_update(prev, raw, alpha)?;
        let cum = self.rows.last().map_or(0, |r| r.cum_budget);
        self.rows.push(TraceRow {
            iteration: self.rows.len() + 1,
            raw_mean_eu: raw,
            ema_eu: ema,
            n_sampled: 0,
            cum_budget: cum,
            stopped: false,
            reason: None,
        });
        Ok(self.rows.last_mut().expect("just pushed"))
    }

    /// Build a trace from raw means.
    pub fn from_raw(raw: &[f64], alpha: f64) -> Result<Self> {
        let mut t = EuTrace::default();
        for &x in raw {
            t.push(x, alpha)?;
        }
        Ok(t)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn ema(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.ema_eu).collect()
    }

    /// 1-based round with the smallest EMA (earliest on ties).
    pub fn best_iteration(&self) -> Option<usize> {
        self.rows
            .iter()
            .fold(None, |best: Option<&TraceRow>, r| match best {
                Some(b) if b.ema_eu <= r.ema_eu => Some(b),
                _ => Some(r),
            })
            .map(|r| r.iteration)
    }
}

/// Stop decision after the latest trace row.
///
/// Plateau: past `min_iters` rounds and the EMA rose since the previous
/// round. Budget: fewer than `batch` documents of budget remain.
pub fn should_stop(
    trace: &EuTrace,
    min_iters: usize,
    budget_left: usize,
    batch: usize,
) -> (bool, Option<StopReason>) {
    let t = trace.len();
    if t > min_iters && t >= 2 {
        let ema = &trace.rows;
        if ema[t - 1].ema_eu > ema[t - 2].ema_eu {
            return (true, Some(StopReason::Plateau));
        }
    }
    if budget_left < batch {
        return (true, Some(StopReason::Budget));
    }
    (false, None)
}

/// Source of model states. `update` trains on one round's picks and
/// advances to the next state.
pub trait ModelProvider {
    fn embeddings(&self) -> &EmbeddingSet;
    fn projection(&self) -> &VocabProjection;
    fn update(&mut self, iteration: usize, selection: &[Selection]) -> core::result::Result<(), String>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub trace: EuTrace,
    /// Picks grouped by round, in pick order.
    pub selections: Vec<Vec<Selection>>,
    pub stop_reason: StopReason,
    /// Round whose EMA is lowest.
    pub best_iteration: Option<usize>,
    /// Number of training updates behind the best round's model state.
    pub best_model_updates: Option<usize>,
    /// Number of training updates applied in total.
    pub last_model_updates: usize,
    pub total_sampled: usize,
    pub config: LoopConfig,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LoopError {
    /// The provider failed; the report covers rounds completed so far.
    Provider { message: String, partial: Box<RunReport> },
    Core(Error),
}

impl fmt::Display for LoopError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LoopError::Provider { message, .. } => write!(f, "model provider failed: {message}"),
            LoopError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for LoopError {}

impl From<Error> for LoopError {
    fn from(e: Error) -> Self {
        LoopError::Core(e)
    }
}

/// Run the sampling loop over the documents of `clusters` (the filtered
/// corpus).
pub fn run_loop<P: ModelProvider + ?Sized>(
    clusters: &ClusterModel,
    stats: &VocabStats,
    provider: &mut P,
    cfg: &LoopConfig,
) -> core::result::Result<RunReport, LoopError> {
    cfg.validate()?;
    let ids: Vec<&str> = clusters.ids.iter().map(String::as_str).collect();
    let mut state = SamplerState::new(clusters.k());
    let mut trace = EuTrace::default();
    let mut selections: Vec<Vec<Selection>> = Vec::new();
    let mut reason = StopReason::Budget;

    let finish = |trace: EuTrace, selections: Vec<Vec<Selection>>, reason, error| {
        let best = trace.best_iteration();
        let total = selections.iter().map(Vec::len).sum();
        RunReport {
            best_model_updates: best.map(|b| b - 1),
            last_model_updates: selections.len(),
            best_iteration: best,
            trace,
            selections,
            stop_reason: reason,
            total_sampled: total,
            config: cfg.clone(),
            error,
        }
    };

    for t in 1..=cfg.max_iterations {
        let scores = score_corpus(
            ids.iter().copied(),
            provider.embeddings(),
            provider.projection(),
            stats,
            cfg.k_eu,
            cfg.estimator,
            t,
        )?;
        let mean = match cfg.eu_scope {
            EuScope::All => scores.mean,
            EuScope::Unsampled => scores
                .mean_where(|id| !state.selected.contains(id))
                .unwrap_or(scores.mean),
        };
        trace.push(mean, cfg.alpha)?;
        let cum = trace.rows.last().map_or(0, |r| r.cum_budget);
        let budget_left = cfg.max_budget.saturating_sub(cum);
        let (stop, why) = should_stop(&trace, cfg.min_iterations, budget_left, cfg.batch_size);
        if stop {
            reason = why.expect("stop carries a reason");
            break;
        }

        let n = cfg.batch_size.min(budget_left);
        let params = SampleParams {
            n,
            lambda: cfg.lambda,
            penalty: cfg.penalty,
        };
        let (picked, next) = match sample_iteration(&state, clusters, &scores, provider.embeddings(), params) {
            Ok(x) => x,
            Err(Error::Exhausted) => {
                reason = StopReason::Exhausted;
                break;
            }
            Err(e) => return Err(e.into()),
        };
        state = next;
        let row = trace.rows.last_mut().expect("pushed");
        row.n_sampled = picked.len();
        row.cum_budget += picked.len();
        let partial = picked.len() < n;

        if let Err(message) = provider.update(t, &picked) {
            selections.push(picked);
            let row = trace.rows.last_mut().expect("pushed");
            row.stopped = true;
            row.reason = Some(StopReason::Aborted);
            let report = finish(trace, selections, StopReason::Aborted, Some(message.clone()));
            return Err(LoopError::Provider {
                message,
                partial: Box::new(report),
            });
        }
        selections.push(picked);
        if partial {
            reason = StopReason::Exhausted;
            break;
        }
    }

    if let Some(row) = trace.rows.last_mut() {
        row.stopped = true;
        row.reason = Some(reason);
    }
    Ok(finish(trace, selections, reason, None))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn ema_cases() {
        assert_eq!(ema_update(None, 10.0, 0.4).unwrap(), 10.0);
        assert!((ema_update(Some(10.0), 8.0, 0.4).unwrap() - 9.2).abs() < 1e-12);
        assert_eq!(ema_update(Some(3.0), 7.0, 1.0).unwrap(), 7.0);
        assert!(ema_update(None, 1.0, 0.0).is_err());
        assert!(ema_update(None, 1.0, 1.5).is_err());
    }

    #[test]
    fn hand_computed_upturn() {
        let raw = [10.0, 8.0, 8.5, 9.0];
        let expected = [10.0, 9.2, 8.92, 8.952];
        let mut trace = EuTrace::default();
        for (t, (&x, &e)) in raw.iter().zip(&expected).enumerate() {
            trace.push(x, 0.4).unwrap();
            assert!((trace.rows[t].ema_eu - e).abs() < 1e-12);
            let (stop, reason) = should_stop(&trace, 2, 5000, 500);
            if t + 1 < 4 {
                assert!(!stop, "stopped early at {}", t + 1);
            } else {
                assert_eq!(reason, Some(StopReason::Plateau));
            }
        }
        assert_eq!(trace.best_iteration(), Some(3));
    }

    #[test]
    fn warm_up_blocks_plateau() {
        let trace = EuTrace::from_raw(&[1.0, 5.0], 0.4).unwrap();
        assert_eq!(should_stop(&trace, 2, 100, 10), (false, None));
        assert_eq!(should_stop(&trace, 1, 100, 10), (true, Some(StopReason::Plateau)));
    }

    #[test]
    fn decreasing_trace_stops_only_on_budget() {
        let trace = EuTrace::from_raw(&[9.0, 8.0, 7.0, 6.0, 5.0], 0.4).unwrap();
        assert_eq!(should_stop(&trace, 2, 500, 500), (false, None));
        assert_eq!(should_stop(&trace, 2, 499, 500), (true, Some(StopReason::Budget)));
    }

    #[test]
    fn config_validation() {
        assert!(LoopConfig::default().validate().is_ok());
        let bad = LoopConfig { alpha: 1.5, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = LoopConfig { max_budget: 6000, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = LoopConfig { lambda: -0.1, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    /// Fixed model state with a flat EU landscape.
    struct Static {
        emb: EmbeddingSet,
        proj: VocabProjection,
        updates: usize,
        fail_at: Option<usize>,
    }

    impl ModelProvider for Static {
        fn embeddings(&self) -> &EmbeddingSet {
            &self.emb
        }
        fn projection(&self) -> &VocabProjection {
            &self.proj
        }
        fn update(&mut self, iteration: usize, _: &[Selection]) -> core::result::Result<(), String> {
            if self.fail_at == Some(iteration) {
                return Err("trainer crashed".into());
            }
            self.updates += 1;
            Ok(())
        }
    }

    fn fixture(n: usize, fail_at: Option<usize>) -> (ClusterModel, VocabStats, Static) {
        let ids: Vec<String> = (0..n).map(|i| alloc::format!("d{i:03}")).collect();
        let data: Vec<f32> = (0..n).flat_map(|i| [1.0, (i % 3) as f32]).collect();
        let emb = EmbeddingSet::new(ids.clone(), 2, data).unwrap();
        let proj = VocabProjection::new(4, 2, vec![0.0; 8], vec![0.0; 4]).unwrap();
        let labels = (0..n).map(|i| i % 2).collect();
        let clusters = ClusterModel::from_assignment(ids, labels, 2).unwrap();
        let stats = VocabStats::new(vec![1, 2, 3, 4], n as u32).unwrap();
        (clusters, stats, Static { emb, proj, updates: 0, fail_at })
    }

    fn small_cfg() -> LoopConfig {
        LoopConfig {
            batch_size: 4,
            max_iterations: 5,
            max_budget: 20,
            k_eu: TopK::Fixed(2),
            ..Default::default()
        }
    }

    #[test]
    fn flat_trace_runs_to_budget() {
        let (clusters, stats, mut p) = fixture(40, None);
        let report = run_loop(&clusters, &stats, &mut p, &small_cfg()).unwrap();
        assert_eq!(report.stop_reason, StopReason::Budget);
        assert_eq!(report.total_sampled, 20);
        assert_eq!(p.updates, 5);
        let ema = report.trace.ema();
        assert!(ema.iter().all(|&e| e == ema[0]));
        assert_eq!(report.trace.len(), 5);
        assert!(report.trace.rows.last().unwrap().stopped);
    }

    #[test]
    fn small_pool_exhausts() {
        let (clusters, stats, mut p) = fixture(10, None);
        let report = run_loop(&clusters, &stats, &mut p, &small_cfg()).unwrap();
        assert_eq!(report.stop_reason, StopReason::Exhausted);
        assert_eq!(report.total_sampled, 10);
        let sizes: Vec<usize> = report.selections.iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![4, 4, 2]);
    }

    #[test]
    fn provider_failure_keeps_partial_report() {
        let (clusters, stats, mut p) = fixture(40, Some(2));
        match run_loop(&clusters, &stats, &mut p, &small_cfg()) {
            Err(LoopError::Provider { message, partial }) => {
                assert_eq!(message, "trainer crashed");
                assert_eq!(partial.selections.len(), 2);
                assert_eq!(partial.stop_reason, StopReason::Aborted);
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
