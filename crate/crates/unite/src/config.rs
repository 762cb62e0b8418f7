//! Run configuration: defaults, then a JSON file, then command-line flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use unite_core::control::{EuScope, LoopConfig};
use unite_core::eu::{Estimator, TopK};
use unite_core::lexical::{Bm25Params, KnnParams, DEFAULT_EPSILON, DEFAULT_QUERY_CAP};
use unite_core::sim::{sim_loop_config, SimConfig, SimModelConfig, SimPipeline, SynthConfig};
use unite_core::tokenizer::TokenizerConfig;

use crate::error::CliError;

pub const DEFAULT_CLUSTERS: usize = 25;

/// Everything a stage needs. Unknown keys are rejected at every level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub corpus: Option<PathBuf>,
    pub state_dir: Option<PathBuf>,
    pub output_dir: PathBuf,
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
    pub k1: f64,
    pub b: f64,
    pub epsilon: f64,
    pub query_cap: usize,
    pub clusters: usize,
    pub kmeans_max_iter: usize,
    /// Shell command run after each round; `{selection}`, `{state_dir}` and
    /// `{iteration}` are substituted.
    pub update_command: Option<String>,
    pub profile_ks: Vec<usize>,
    pub profile_sample: Option<usize>,
    pub tokenizer: TokenizerConfig,
    pub sim: SimSection,
}

/// Settings for `simulate`. The loop defaults are scaled to the synthetic
/// corpus rather than taken from the top level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSection {
    pub synth: SynthConfig,
    pub model: SimModelConfig,
    pub pipeline: SimPipeline,
    #[serde(rename = "loop")]
    pub loop_config: LoopConfig,
}

impl Default for SimSection {
    fn default() -> Self {
        let synth = SynthConfig::default();
        let loop_config = sim_loop_config(synth.seed);
        Self {
            synth,
            model: SimModelConfig::default(),
            pipeline: SimPipeline::default(),
            loop_config,
        }
    }
}

impl SimSection {
    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            synth: self.synth.clone(),
            model: self.model.clone(),
            pipeline: self.pipeline.clone(),
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        let lc = LoopConfig::default();
        let bm25 = Bm25Params::default();
        Self {
            corpus: None,
            state_dir: None,
            output_dir: PathBuf::from("out"),
            batch_size: lc.batch_size,
            max_iterations: lc.max_iterations,
            max_budget: lc.max_budget,
            alpha: lc.alpha,
            lambda: lc.lambda,
            k_eu: lc.k_eu,
            z_thr: lc.z_thr,
            k_nn: lc.k_nn,
            min_iterations: lc.min_iterations,
            seed: lc.seed,
            penalty: lc.penalty,
            estimator: lc.estimator,
            eu_scope: lc.eu_scope,
            k1: bm25.k1,
            b: bm25.b,
            epsilon: DEFAULT_EPSILON,
            query_cap: DEFAULT_QUERY_CAP,
            clusters: DEFAULT_CLUSTERS,
            kmeans_max_iter: 100,
            update_command: None,
            profile_ks: vec![1, 2, 3, 5, 10, 20],
            profile_sample: None,
            tokenizer: TokenizerConfig::default(),
            sim: SimSection::default(),
        }
    }
}

/// Values given on the command line. `None` leaves the config untouched.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub corpus: Option<PathBuf>,
    pub state_dir: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub batch_size: Option<usize>,
    pub max_iterations: Option<usize>,
    pub max_budget: Option<usize>,
    pub alpha: Option<f64>,
    pub lambda: Option<f64>,
    pub k_eu: Option<TopK>,
    pub z_thr: Option<f64>,
    pub k_nn: Option<usize>,
    pub min_iterations: Option<usize>,
    pub seed: Option<u64>,
    pub penalty: Option<bool>,
    pub estimator: Option<Estimator>,
    pub eu_scope: Option<EuScope>,
    pub k1: Option<f64>,
    pub b: Option<f64>,
    pub query_cap: Option<usize>,
    pub clusters: Option<usize>,
    pub update_command: Option<String>,
}

/// Which loop settings the flags apply to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Main,
    Sim,
}

fn set<T: Clone>(slot: &mut T, value: &Option<T>) {
    if let Some(v) = value {
        *slot = v.clone();
    }
}

impl Overrides {
    fn apply_loop(&self, lc: &mut LoopConfig) {
        set(&mut lc.batch_size, &self.batch_size);
        set(&mut lc.max_iterations, &self.max_iterations);
        set(&mut lc.max_budget, &self.max_budget);
        set(&mut lc.alpha, &self.alpha);
        set(&mut lc.lambda, &self.lambda);
        set(&mut lc.k_eu, &self.k_eu);
        set(&mut lc.z_thr, &self.z_thr);
        set(&mut lc.k_nn, &self.k_nn);
        set(&mut lc.min_iterations, &self.min_iterations);
        set(&mut lc.seed, &self.seed);
        set(&mut lc.penalty, &self.penalty);
        set(&mut lc.estimator, &self.estimator);
        set(&mut lc.eu_scope, &self.eu_scope);
    }
}

/// Recursively overlay `patch` onto `base`. Objects merge key by key; any
/// other value replaces.
fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

impl RunConfig {
    /// Parse a config document over the defaults. Blank input means defaults.
    pub fn from_json_str(text: &str) -> Result<Self, CliError> {
        if text.trim().is_empty() {
            return Ok(Self::default());
        }
        let patch: Value =
            serde_json::from_str(text).map_err(|e| CliError::Validation(format!("config is not valid JSON: {e}")))?;
        if !patch.is_object() {
            return Err(CliError::Validation("config must be a JSON object".into()));
        }
        let mut merged = serde_json::to_value(Self::default()).expect("defaults serialize");
        merge(&mut merged, patch);
        serde_path_to_error::deserialize(merged).map_err(|e| {
            let path = e.path().to_string();
            CliError::Validation(format!("config key `{path}`: {}", e.inner()))
        })
    }

    /// Load `path`, or the defaults when no path is given. A missing file is
    /// an error unless `allow_defaults` is set.
    pub fn load(path: Option<&Path>, allow_defaults: bool) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        match std::fs::read_to_string(path) {
            Ok(text) => Self::from_json_str(&text),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound && allow_defaults => Ok(Self::default()),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(CliError::Validation(format!(
                "config file {} not found (pass --defaults to fall back to defaults)",
                path.display()
            ))),
            Err(e) => Err(CliError::Validation(format!("cannot read config {}: {e}", path.display()))),
        }
    }

    pub fn apply(&mut self, o: &Overrides, target: Target) {
        set(&mut self.corpus, &o.corpus.clone().map(Some));
        set(&mut self.state_dir, &o.state_dir.clone().map(Some));
        set(&mut self.output_dir, &o.output_dir);
        set(&mut self.update_command, &o.update_command.clone().map(Some));
        match target {
            Target::Main => {
                let mut lc = self.loop_config();
                o.apply_loop(&mut lc);
                self.set_loop_config(lc);
                set(&mut self.k1, &o.k1);
                set(&mut self.b, &o.b);
                set(&mut self.query_cap, &o.query_cap);
                set(&mut self.clusters, &o.clusters);
            }
            Target::Sim => {
                let sim = &mut self.sim;
                o.apply_loop(&mut sim.loop_config);
                set(&mut sim.synth.seed, &o.seed);
                set(&mut sim.pipeline.bm25.k1, &o.k1);
                set(&mut sim.pipeline.bm25.b, &o.b);
                set(&mut sim.pipeline.query_cap, &o.query_cap);
                set(&mut sim.pipeline.clusters, &o.clusters);
            }
        }
    }

    pub fn loop_config(&self) -> LoopConfig {
        LoopConfig {
            batch_size: self.batch_size,
            max_iterations: self.max_iterations,
            max_budget: self.max_budget,
            alpha: self.alpha,
            lambda: self.lambda,
            k_eu: self.k_eu,
            z_thr: self.z_thr,
            k_nn: self.k_nn,
            min_iterations: self.min_iterations,
            seed: self.seed,
            penalty: self.penalty,
            estimator: self.estimator,
            eu_scope: self.eu_scope,
        }
    }

    fn set_loop_config(&mut self, lc: LoopConfig) {
        self.batch_size = lc.batch_size;
        self.max_iterations = lc.max_iterations;
        self.max_budget = lc.max_budget;
        self.alpha = lc.alpha;
        self.lambda = lc.lambda;
        self.k_eu = lc.k_eu;
        self.z_thr = lc.z_thr;
        self.k_nn = lc.k_nn;
        self.min_iterations = lc.min_iterations;
        self.seed = lc.seed;
        self.penalty = lc.penalty;
        self.estimator = lc.estimator;
        self.eu_scope = lc.eu_scope;
    }

    pub fn bm25(&self) -> Bm25Params {
        Bm25Params { k1: self.k1, b: self.b }
    }

    pub fn knn(&self) -> KnnParams {
        KnnParams {
            k: self.k_nn,
            query_cap: self.query_cap,
            epsilon: self.epsilon,
        }
    }

    /// Range-check every value, naming the first offending key.
    pub fn validate(&self) -> Result<(), CliError> {
        let named = |scope: &str, e: unite_core::Error| CliError::Validation(format!("{scope}{e}"));
        self.loop_config().validate().map_err(|e| named("", e))?;
        self.bm25().validate().map_err(|e| named("", e))?;
        check(self.epsilon > 0.0 && self.epsilon.is_finite(), "epsilon", "must be > 0")?;
        check(self.query_cap >= 1, "query_cap", "must be >= 1")?;
        check(self.clusters >= 1, "clusters", "must be >= 1")?;
        check(self.kmeans_max_iter >= 1, "kmeans_max_iter", "must be >= 1")?;
        check(
            !self.profile_ks.is_empty()
                && self.profile_ks[0] >= 1
                && self.profile_ks.windows(2).all(|w| w[0] < w[1]),
            "profile_ks",
            "must be positive and strictly ascending",
        )?;
        check(self.profile_sample != Some(0), "profile_sample", "must be >= 1")?;
        check(self.tokenizer.min_len >= 1, "tokenizer.min_len", "must be >= 1")?;

        let sim = &self.sim;
        sim.synth.validate().map_err(|e| named("sim.synth: ", e))?;
        sim.loop_config.validate().map_err(|e| named("sim.loop: ", e))?;
        sim.pipeline.bm25.validate().map_err(|e| named("sim.pipeline: ", e))?;
        check(sim.pipeline.clusters >= 1, "sim.pipeline.clusters", "must be >= 1")?;
        check(sim.pipeline.query_cap >= 1, "sim.pipeline.query_cap", "must be >= 1")?;
        check(sim.pipeline.kmeans_max_iter >= 1, "sim.pipeline.kmeans_max_iter", "must be >= 1")?;
        let m = &sim.model;
        check(
            m.learning_rate >= 0.0 && m.learning_rate.is_finite(),
            "sim.model.learning_rate",
            "must be finite and >= 0",
        )?;
        check(m.epochs >= 1, "sim.model.epochs", "must be >= 1")?;
        check(m.top_terms >= 1, "sim.model.top_terms", "must be >= 1")?;
        check(m.init_scale > 0.0 && m.init_scale.is_finite(), "sim.model.init_scale", "must be > 0")?;
        check(
            m.deficiency > 0.0 && m.deficiency.is_finite(),
            "sim.model.deficiency",
            "must be > 0",
        )?;
        check(
            m.deficient_topic.is_none_or(|t| t < sim.synth.topics),
            "sim.model.deficient_topic",
            "must name an existing topic",
        )?;
        Ok(())
    }

    /// The corpus path, which must exist.
    pub fn require_corpus(&self) -> Result<&Path, CliError> {
        let path = self
            .corpus
            .as_deref()
            .ok_or_else(|| CliError::Validation("corpus: no path given (set `corpus` or pass --corpus)".into()))?;
        if !path.is_file() {
            return Err(CliError::Validation(format!("corpus: {} is not a file", path.display())));
        }
        Ok(path)
    }

    /// The state directory, which must exist.
    pub fn require_state_dir(&self) -> Result<&Path, CliError> {
        let path = self.state_dir.as_deref().ok_or_else(|| {
            CliError::Validation("state_dir: no path given (set `state_dir` or pass --state-dir)".into())
        })?;
        if !path.is_dir() {
            return Err(CliError::Validation(format!(
                "state_dir: {} is not a directory",
                path.display()
            )));
        }
        Ok(path)
    }
}

fn check(ok: bool, key: &str, reason: &str) -> Result<(), CliError> {
    if ok {
        Ok(())
    } else {
        Err(CliError::Validation(format!("invalid parameter {key}: {reason}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        for text in ["", "  \n", "{}"] {
            let cfg = RunConfig::from_json_str(text).unwrap();
            assert_eq!(cfg, RunConfig::default());
            assert_eq!(
                (cfg.batch_size, cfg.max_iterations, cfg.alpha, cfg.lambda, cfg.z_thr, cfg.k_nn),
                (500, 10, 0.4, 0.5, 1.5, 3)
            );
            assert_eq!(cfg.k_eu, TopK::Fixed(1000));
            cfg.validate().unwrap();
        }
    }

    #[test]
    fn unknown_and_mistyped_keys_are_named() {
        let err = RunConfig::from_json_str(r#"{"zthr": 2.0}"#).unwrap_err().to_string();
        assert!(err.contains("zthr"), "{err}");
        let err = RunConfig::from_json_str(r#"{"sim": {"loop": {"alpah": 1}}}"#).unwrap_err().to_string();
        assert!(err.contains("sim.loop") && err.contains("alpah"), "{err}");
        let err = RunConfig::from_json_str(r#"{"batch_size": "ten"}"#).unwrap_err().to_string();
        assert!(err.contains("batch_size"), "{err}");
        assert!(RunConfig::from_json_str("[1]").is_err());
    }

    #[test]
    fn nested_sections_merge_over_their_own_defaults() {
        let cfg = RunConfig::from_json_str(r#"{"sim": {"loop": {"batch_size": 30}}, "k_eu": {"vocab_fraction": 0.1}}"#)
            .unwrap();
        let expected = LoopConfig { batch_size: 30, ..sim_loop_config(7) };
        assert_eq!(cfg.sim.loop_config, expected);
        assert_eq!(cfg.k_eu, TopK::VocabFraction { vocab_fraction: 0.1 });
    }

    #[test]
    fn flags_override_file_values() {
        let mut cfg = RunConfig::from_json_str(r#"{"z_thr": 1.5, "seed": 3}"#).unwrap();
        let o = Overrides { z_thr: Some(2.0), ..Overrides::default() };
        cfg.apply(&o, Target::Main);
        assert_eq!(cfg.z_thr, 2.0);
        assert_eq!(cfg.seed, 3);

        let o = Overrides { seed: Some(9), batch_size: Some(10), ..Overrides::default() };
        cfg.apply(&o, Target::Sim);
        assert_eq!((cfg.sim.synth.seed, cfg.sim.loop_config.seed, cfg.sim.loop_config.batch_size), (9, 9, 10));
        assert_eq!(cfg.seed, 3);
    }

    #[test]
    fn out_of_range_alpha_is_a_validation_error() {
        let mut cfg = RunConfig::default();
        cfg.apply(&Overrides { alpha: Some(1.5), ..Overrides::default() }, Target::Main);
        let err = cfg.validate().unwrap_err();
        assert_eq!(err.exit_code(), crate::error::exit::VALIDATION);
        assert!(err.to_string().contains("alpha"));
    }

    #[test]
    fn missing_file_needs_defaults_flag() {
        let p = Path::new("/nonexistent/unite.json");
        assert!(RunConfig::load(Some(p), false).is_err());
        assert_eq!(RunConfig::load(Some(p), true).unwrap(), RunConfig::default());
    }

    #[test]
    fn echo_round_trips() {
        let cfg = RunConfig::default();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(RunConfig::from_json_str(&text).unwrap(), cfg);
    }
}
