//! One function per subcommand. Each reads its inputs, writes its outputs
//! atomically into the output directory and finishes with a manifest.

use std::path::{Path, PathBuf};

use serde::Serialize;
use unite_core::au_filter::{filter_corpus, FilterReport};
use unite_core::control::{run_loop, LoopError, RunReport};
use unite_core::corpus::{build_lexicon, Corpus};
use unite_core::eu::EmbeddingSet;
use unite_core::kmeans::{kmeans_cluster, ClusterModel};
use unite_core::lexical::InvertedIndex;
use unite_core::sampler::{sample_iteration, SampleParams, SamplerState, Selection};
use unite_core::sim::run_sim;

use crate::config::RunConfig;
use crate::error::{CliError, FormatError};
use crate::formats::*;
use crate::fsio::StageWriter;
use crate::parallel;
use crate::provider::{load_state, state_paths, FileProvider, ModelState};
use crate::report::{render_summary, render_svg};

pub const FILTER_REPORT: &str = "filter_report.json";
pub const CLUSTERS: &str = "clusters.tsv";
pub const EU_SCORES: &str = "eu_scores.tsv";
pub const SAMPLER_STATE: &str = "sampler_state.json";
pub const TRACE: &str = "trace.csv";
pub const RUN_REPORT: &str = "run_report.json";
pub const SELECTION: &str = "selection.jsonl";
pub const SIM_METRICS: &str = "sim_metrics.json";

fn log(stage: &str, msg: impl std::fmt::Display) {
    eprintln!("unite {stage}: {msg}");
}

fn load_corpus(cfg: &RunConfig, w: &mut StageWriter) -> Result<Corpus, CliError> {
    let path = cfg.require_corpus()?;
    w.input(path)?;
    let records = read_corpus(path)?;
    Corpus::from_records(records, cfg.tokenizer.clone()).map_err(|e| FormatError::core(path, e).into())
}

fn build_index(cfg: &RunConfig, corpus: &Corpus) -> Result<InvertedIndex, CliError> {
    let lexicon = build_lexicon(corpus)?;
    Ok(InvertedIndex::build(corpus, &lexicon, cfg.bm25())?)
}

fn load_model_state(cfg: &RunConfig, w: &mut StageWriter) -> Result<(PathBuf, ModelState), CliError> {
    let dir = cfg.require_state_dir()?.to_path_buf();
    let state = load_state(&dir)?;
    for p in state_paths(&dir) {
        w.input(&p)?;
    }
    Ok((dir, state))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = read_string(path)?;
    serde_json::from_str(&text).map_err(|e| FormatError::invalid(path, e.to_string()).into())
}

/// Ids of the filtered corpus when `filter_report.json` sits in the output
/// directory, otherwise every embedded document.
fn candidate_ids(stage: &str, w: &mut StageWriter, emb: &EmbeddingSet) -> Result<Vec<String>, CliError> {
    let path = w.path(FILTER_REPORT);
    if path.is_file() {
        w.input(&path)?;
        let report: FilterReport = read_json(&path)?;
        log(stage, format_args!("using {} kept documents from {}", report.kept.len(), path.display()));
        Ok(report.kept)
    } else {
        log(stage, format_args!("no {FILTER_REPORT}; using all {} embedded documents", emb.len()));
        Ok(emb.ids().to_vec())
    }
}

pub fn ingest(cfg: &RunConfig) -> Result<(), CliError> {
    #[derive(Serialize)]
    struct IngestSummary<'a> {
        documents: usize,
        terms: usize,
        tokens: usize,
        empty_documents: usize,
        tokenizer: &'a unite_core::tokenizer::TokenizerConfig,
        tokenizer_fingerprint: String,
    }
    let mut w = StageWriter::new(&cfg.output_dir, "ingest");
    let corpus = load_corpus(cfg, &mut w)?;
    let summary = IngestSummary {
        documents: corpus.len(),
        terms: corpus.terms().len(),
        tokens: corpus.docs().iter().map(|d| d.tokens.len()).sum(),
        empty_documents: corpus.docs().iter().filter(|d| d.tokens.is_empty()).count(),
        tokenizer: corpus.tokenizer(),
        tokenizer_fingerprint: format!("{:016x}", corpus.tokenizer().fingerprint()),
    };
    log(
        "ingest",
        format_args!("{} documents, {} terms", summary.documents, summary.terms),
    );
    w.write_json("ingest.json", &summary)?;
    w.finish(cfg)?;
    Ok(())
}

pub fn index(cfg: &RunConfig) -> Result<(), CliError> {
    let mut w = StageWriter::new(&cfg.output_dir, "index");
    let corpus = load_corpus(cfg, &mut w)?;
    let lexicon = build_lexicon(&corpus)?;
    InvertedIndex::build(&corpus, &lexicon, cfg.bm25())?;
    log(
        "index",
        format_args!("{} documents, {} terms, avgdl {:.2}", lexicon.n_docs, lexicon.terms.len(), lexicon.avgdl),
    );
    w.write("lexicon.tsv", lexicon_tsv(&lexicon).as_bytes())?;
    w.finish(cfg)?;
    Ok(())
}

pub fn knn(cfg: &RunConfig) -> Result<(), CliError> {
    let mut w = StageWriter::new(&cfg.output_dir, "knn");
    let corpus = load_corpus(cfg, &mut w)?;
    let index = build_index(cfg, &corpus)?;
    let distances = parallel::all_distances(&index, &corpus, &cfg.knn())?;
    let header = DistanceHeader {
        k: cfg.k_nn,
        k1: cfg.k1,
        b: cfg.b,
        epsilon: cfg.epsilon,
        query_cap: cfg.query_cap,
    };
    log("knn", format_args!("{} distances at k={}", distances.len(), cfg.k_nn));
    w.write(
        "distances.tsv",
        distances_tsv(&header, corpus.ids().zip(distances.iter().copied())).as_bytes(),
    )?;
    w.finish(cfg)?;
    Ok(())
}

pub fn knn_profile(cfg: &RunConfig) -> Result<(), CliError> {
    let mut w = StageWriter::new(&cfg.output_dir, "knn-profile");
    let corpus = load_corpus(cfg, &mut w)?;
    let index = build_index(cfg, &corpus)?;
    let profile = index.distance_profile(
        &corpus,
        &cfg.profile_ks,
        cfg.profile_sample,
        cfg.query_cap,
        cfg.epsilon,
    )?;
    log("knn-profile", format_args!("{} values of k", profile.len()));
    w.write("profile.tsv", profile_tsv(&profile).as_bytes())?;
    w.finish(cfg)?;
    Ok(())
}

fn run_filter(cfg: &RunConfig, corpus: &Corpus) -> Result<(Corpus, FilterReport), CliError> {
    let index = build_index(cfg, corpus)?;
    let distances = parallel::all_distances(&index, corpus, &cfg.knn())?;
    Ok(filter_corpus(
        corpus,
        |id| corpus.ordinal(id).map(|i| distances[i]),
        cfg.z_thr,
    )?)
}

pub fn au_filter(cfg: &RunConfig) -> Result<(), CliError> {
    let mut w = StageWriter::new(&cfg.output_dir, "au-filter");
    let corpus = load_corpus(cfg, &mut w)?;
    let (_, report) = run_filter(cfg, &corpus)?;
    log(
        "au-filter",
        format_args!(
            "removed {} of {} documents ({:.2}%) at z_thr={}",
            report.removed.len(),
            corpus.len(),
            100.0 * report.removal_ratio,
            cfg.z_thr
        ),
    );
    w.write_json(FILTER_REPORT, &report)?;
    w.finish(cfg)?;
    Ok(())
}

/// Shapes found by `export-check`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExportSummary {
    pub embeddings: usize,
    pub dim: usize,
    pub vocab_size: usize,
    pub vocab_tokens: bool,
    pub df_documents: u32,
}

pub fn export_check(cfg: &RunConfig) -> Result<ExportSummary, CliError> {
    let mut w = StageWriter::new(&cfg.output_dir, "export-check");
    let (_, state) = load_model_state(cfg, &mut w)?;
    let summary = ExportSummary {
        embeddings: state.embeddings.len(),
        dim: state.embeddings.dim(),
        vocab_size: state.projection.vocab_size(),
        vocab_tokens: !state.projection.vocab.is_empty(),
        df_documents: state.stats.n_docs,
    };
    println!(
        "ok: {} embeddings of dim {}, vocabulary {}{}, df over {} documents",
        summary.embeddings,
        summary.dim,
        summary.vocab_size,
        if summary.vocab_tokens { " with tokens" } else { "" },
        summary.df_documents
    );
    w.write_json("export_check.json", &summary)?;
    w.finish(cfg)?;
    Ok(summary)
}

/// Round number for a stand-alone `eu` or `sample` call, from the sampler
/// state in the output directory.
fn read_sampler_state(w: &mut StageWriter) -> Result<Option<SamplerState>, CliError> {
    let path = w.path(SAMPLER_STATE);
    if !path.is_file() {
        return Ok(None);
    }
    w.input(&path)?;
    read_json(&path).map(Some)
}

pub fn eu(cfg: &RunConfig) -> Result<(), CliError> {
    let mut w = StageWriter::new(&cfg.output_dir, "eu");
    let (_, state) = load_model_state(cfg, &mut w)?;
    let ids = candidate_ids("eu", &mut w, &state.embeddings)?;
    let iteration = read_sampler_state(&mut w)?.map_or(1, |s| s.iteration + 1);
    let scores = parallel::score_corpus(
        &ids,
        &state.embeddings,
        &state.projection,
        &state.stats,
        cfg.k_eu,
        cfg.estimator,
        iteration,
    )?;
    log(
        "eu",
        format_args!("{} documents, k={}, mean {}", scores.scores.len(), scores.k, scores.mean),
    );
    w.write(EU_SCORES, eu_scores_tsv(&scores).as_bytes())?;
    w.finish(cfg)?;
    Ok(())
}

fn cluster_ids(cfg: &RunConfig, emb: &EmbeddingSet, ids: &[String]) -> Result<ClusterModel, CliError> {
    Ok(kmeans_cluster(emb, Some(ids), cfg.clusters, cfg.seed, cfg.kmeans_max_iter)?)
}

pub fn cluster(cfg: &RunConfig) -> Result<(), CliError> {
    let mut w = StageWriter::new(&cfg.output_dir, "cluster");
    let (_, state) = load_model_state(cfg, &mut w)?;
    let ids = candidate_ids("cluster", &mut w, &state.embeddings)?;
    let model = cluster_ids(cfg, &state.embeddings, &ids)?;
    log(
        "cluster",
        format_args!("K={} sizes {:?}", model.k(), model.sizes),
    );
    w.write(CLUSTERS, clusters_tsv(&model.ids, &model.labels).as_bytes())?;
    w.finish(cfg)?;
    Ok(())
}

fn require_output(w: &mut StageWriter, name: &str, producer: &str) -> Result<PathBuf, CliError> {
    let path = w.path(name);
    if !path.is_file() {
        return Err(CliError::Data(format!(
            "{} not found; run `unite {producer}` first",
            path.display()
        )));
    }
    w.input(&path)?;
    Ok(path)
}

pub fn sample(cfg: &RunConfig) -> Result<Vec<Selection>, CliError> {
    let mut w = StageWriter::new(&cfg.output_dir, "sample");
    let (_, state) = load_model_state(cfg, &mut w)?;
    let clusters_path = require_output(&mut w, CLUSTERS, "cluster")?;
    let scores_path = require_output(&mut w, EU_SCORES, "eu")?;
    let (ids, labels) = parse_clusters(&clusters_path, &read_string(&clusters_path)?)?;
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let clusters = ClusterModel::from_assignment(ids, labels, k).map_err(|e| FormatError::core(&clusters_path, e))?;
    let scores = parse_eu_scores(&scores_path, &read_string(&scores_path)?)?;
    let sampler = read_sampler_state(&mut w)?.unwrap_or_else(|| SamplerState::new(k));

    let left = cfg.max_budget.saturating_sub(sampler.selected.len());
    if left == 0 {
        return Err(CliError::Data(format!(
            "budget of {} documents already spent",
            cfg.max_budget
        )));
    }
    let params = SampleParams {
        n: cfg.batch_size.min(left),
        lambda: cfg.lambda,
        penalty: cfg.penalty,
    };
    let (picks, next) = sample_iteration(&sampler, &clusters, &scores, &state.embeddings, params)?;
    log(
        "sample",
        format_args!("round {}: {} documents", next.iteration, picks.len()),
    );
    w.write(
        &FileProvider::selection_file_name(next.iteration),
        selection_jsonl(&picks).as_bytes(),
    )?;
    w.write_json(SAMPLER_STATE, &next)?;
    w.finish(cfg)?;
    Ok(picks)
}

/// `run_report.json`: the loop report plus the configuration echo.
#[derive(Serialize)]
struct ReportFile<'a> {
    #[serde(flatten)]
    report: &'a RunReport,
    run_config: &'a RunConfig,
}

fn write_run_outputs(w: &mut StageWriter, cfg: &RunConfig, report: &RunReport) -> Result<(), CliError> {
    w.write(TRACE, trace_csv(&report.trace.rows).as_bytes())?;
    let all: Vec<Selection> = report.selections.iter().flatten().cloned().collect();
    w.write(SELECTION, selection_jsonl(&all).as_bytes())?;
    w.write_json(RUN_REPORT, &ReportFile { report, run_config: cfg })?;
    Ok(())
}

pub fn run_full_loop(cfg: &RunConfig) -> Result<RunReport, CliError> {
    let mut w = StageWriter::new(&cfg.output_dir, "loop");
    let corpus = load_corpus(cfg, &mut w)?;
    let (state_dir, state) = load_model_state(cfg, &mut w)?;
    let (_, filter) = run_filter(cfg, &corpus)?;
    log(
        "loop",
        format_args!("filter kept {} of {} documents", filter.kept.len(), corpus.len()),
    );
    w.write_json(FILTER_REPORT, &filter)?;
    state.embeddings.check_coverage(filter.kept.iter().map(String::as_str))?;
    let clusters = cluster_ids(cfg, &state.embeddings, &filter.kept)?;
    w.write(CLUSTERS, clusters_tsv(&clusters.ids, &clusters.labels).as_bytes())?;

    let mut provider = FileProvider::new(
        &state_dir,
        w.dir(),
        cfg.update_command.clone(),
        &state,
        filter.kept.clone(),
    );
    if cfg.update_command.is_none() {
        log("loop", "no update_command; the model state stays fixed");
    }
    let outcome = run_loop(&clusters, &state.stats, &mut provider, &cfg.loop_config());
    for name in provider.selection_files().to_vec() {
        w.output_written(&name)?;
    }
    match outcome {
        Ok(report) => {
            log(
                "loop",
                format_args!(
                    "stopped after {} rounds ({}), {} documents sampled",
                    report.trace.len(),
                    report.stop_reason,
                    report.total_sampled
                ),
            );
            write_run_outputs(&mut w, cfg, &report)?;
            w.finish(cfg)?;
            Ok(report)
        }
        Err(LoopError::Provider { message, partial }) => {
            write_run_outputs(&mut w, cfg, &partial)?;
            w.finish(cfg)?;
            Err(CliError::Provider(message))
        }
        Err(LoopError::Core(e)) => Err(e.into()),
    }
}

pub fn simulate(cfg: &RunConfig) -> Result<(), CliError> {
    let mut w = StageWriter::new(&cfg.output_dir, "simulate");
    let outcome = run_sim(&cfg.sim.sim_config(), &cfg.sim.loop_config)?;
    let report = &outcome.report;
    log(
        "simulate",
        format_args!(
            "{} rounds ({}), filter precision {:.3} recall {:.3}",
            report.trace.len(),
            report.stop_reason,
            outcome.metrics.filter_precision,
            outcome.metrics.filter_recall
        ),
    );
    w.write_json(FILTER_REPORT, &outcome.filter)?;
    w.write(
        CLUSTERS,
        clusters_tsv(&outcome.clusters.ids, &outcome.clusters.labels).as_bytes(),
    )?;
    write_run_outputs(&mut w, cfg, report)?;
    w.write_json(SIM_METRICS, &outcome.metrics)?;
    w.finish(cfg)?;
    Ok(())
}

pub fn report(cfg: &RunConfig, trace: Option<&Path>) -> Result<(), CliError> {
    let mut w = StageWriter::new(&cfg.output_dir, "report");
    let path = trace.map(Path::to_path_buf).unwrap_or_else(|| w.path(TRACE));
    if !path.is_file() {
        return Err(CliError::Validation(format!("trace: {} is not a file", path.display())));
    }
    w.input(&path)?;
    let rows = parse_trace(&path, &read_string(&path)?)?;
    let summary = render_summary(&rows);
    print!("{summary}");
    w.write("trace.svg", render_svg(&rows).as_bytes())?;
    w.write("summary.txt", summary.as_bytes())?;
    w.finish(cfg)?;
    Ok(())
}
