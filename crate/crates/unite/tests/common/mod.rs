#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use unite_core::control::ModelProvider;
use unite_core::corpus::RawDocument;
use unite_core::sim::{generate_corpus, SimModel, SimModelConfig, SimProvider, SynthConfig};
use unite::formats::{corpus_jsonl, vocab_df_tsv, write_emb, write_prj};
use unite::fsio::write_atomic;
use unite::provider::{EMB_FILE, PRJ_FILE, VOCAB_DF_FILE};

pub fn unite(args: &[&str]) -> Output {
    unite_env(args, &[])
}

pub fn unite_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_unite"));
    cmd.args(args).env_remove("UNITE_THREADS");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A simulator corpus written as `corpus.jsonl`, plus a state directory
/// holding the simulator model's embeddings, projection and statistics.
pub struct Fixture {
    pub dir: tempfile::TempDir,
    pub corpus: PathBuf,
    pub state: PathBuf,
    pub out: PathBuf,
}

pub fn fixture(topics: usize, docs_per_topic: usize) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SynthConfig {
        topics,
        docs_per_topic,
        vocab_size: 300,
        dim: 16,
        seed: 3,
        ..SynthConfig::default()
    };
    let world = generate_corpus(&cfg).unwrap();
    let records: Vec<RawDocument> = world
        .corpus
        .docs()
        .iter()
        .map(|d| RawDocument { id: d.id.clone(), title: None, text: d.text.clone() })
        .collect();
    let corpus = dir.path().join("corpus.jsonl");
    write_atomic(&corpus, corpus_jsonl(&records).as_bytes()).unwrap();

    let model = SimModel::init(&world, &SimModelConfig::default()).unwrap();
    let provider = SimProvider::new(&world, model, 0.1, 1).unwrap();
    let state = dir.path().join("state");
    write_emb(&state.join(EMB_FILE), provider.embeddings()).unwrap();
    write_prj(&state.join(PRJ_FILE), provider.projection()).unwrap();
    write_atomic(&state.join(VOCAB_DF_FILE), vocab_df_tsv(&world.vocab_stats()).as_bytes()).unwrap();
    let out = dir.path().join("out");
    Fixture { dir, corpus, state, out }
}
