//! Line-oriented text artifacts: JSON lines, TSV and CSV.

use std::fmt::Write as _;
use std::path::Path;

use unite_core::control::{StopReason, TraceRow};
use unite_core::corpus::{Lexicon, RawDocument};
use unite_core::eu::{Estimator, EuScores, VocabStats};
use unite_core::sampler::Selection;

use super::{parse_field, parse_finite, parse_header, read_string, split_row};
use crate::error::FormatError;

/// Numbered non-blank lines, 1-based.
fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty())
}

pub fn parse_corpus(path: &Path, text: &str) -> Result<Vec<RawDocument>, FormatError> {
    let mut docs = Vec::new();
    for (line, raw) in data_lines(text) {
        let doc: RawDocument = serde_json::from_str(raw).map_err(|e| FormatError::line(path, line, e.to_string()))?;
        if doc.id.contains(['\t', '\n', '\r']) {
            return Err(FormatError::line(path, line, "id contains a tab or line break"));
        }
        docs.push(doc);
    }
    Ok(docs)
}

pub fn read_corpus(path: &Path) -> Result<Vec<RawDocument>, FormatError> {
    parse_corpus(path, &read_string(path)?)
}

pub fn corpus_jsonl(docs: &[RawDocument]) -> String {
    json_lines(docs)
}

fn json_lines<T: serde::Serialize>(items: &[T]) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("plain data serializes"));
        out.push('\n');
    }
    out
}

pub fn lexicon_tsv(lex: &Lexicon) -> String {
    let mut out = format!("N={}\tAVGDL={}\n", lex.n_docs, lex.avgdl);
    for (id, (term, df)) in lex.terms.iter().zip(&lex.df).enumerate() {
        let _ = writeln!(out, "{term}\t{id}\t{df}");
    }
    out
}

/// The contents of `lexicon.tsv`.
#[derive(Debug, Clone, PartialEq)]
pub struct LexiconTable {
    pub n_docs: usize,
    pub avgdl: f64,
    /// `(term, df)` indexed by term id.
    pub terms: Vec<(String, u32)>,
}

pub fn parse_lexicon(path: &Path, text: &str) -> Result<LexiconTable, FormatError> {
    let mut lines = data_lines(text);
    let header = parse_header(path, lines.next().map(|l| l.1), &["N", "AVGDL"])?;
    let n_docs = parse_field(path, 1, "N", header[0])?;
    let avgdl = parse_finite(path, 1, "AVGDL", header[1])?;
    let mut terms = Vec::new();
    for (line, raw) in lines {
        let f = split_row(path, line, raw, 3)?;
        let id: usize = parse_field(path, line, "term_id", f[1])?;
        if id != terms.len() {
            return Err(FormatError::line(path, line, format!("term_id {id} out of order")));
        }
        terms.push((f[0].to_string(), parse_field(path, line, "df", f[2])?));
    }
    Ok(LexiconTable { n_docs, avgdl, terms })
}

/// Parameters recorded in the `distances.tsv` header.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceHeader {
    pub k: usize,
    pub k1: f64,
    pub b: f64,
    pub epsilon: f64,
    pub query_cap: usize,
}

pub fn distances_tsv<'a>(header: &DistanceHeader, rows: impl IntoIterator<Item = (&'a str, f64)>) -> String {
    let mut out = format!(
        "k={}\tk1={}\tb={}\tepsilon={}\tquery_cap={}\n",
        header.k, header.k1, header.b, header.epsilon, header.query_cap
    );
    for (id, d) in rows {
        let _ = writeln!(out, "{id}\t{d}");
    }
    out
}

pub fn parse_distances(path: &Path, text: &str) -> Result<(DistanceHeader, Vec<(String, f64)>), FormatError> {
    let mut lines = data_lines(text);
    let h = parse_header(path, lines.next().map(|l| l.1), &["k", "k1", "b", "epsilon", "query_cap"])?;
    let header = DistanceHeader {
        k: parse_field(path, 1, "k", h[0])?,
        k1: parse_finite(path, 1, "k1", h[1])?,
        b: parse_finite(path, 1, "b", h[2])?,
        epsilon: parse_finite(path, 1, "epsilon", h[3])?,
        query_cap: parse_field(path, 1, "query_cap", h[4])?,
    };
    let rows = id_value_rows(path, lines, "D_k")?;
    Ok((header, rows))
}

fn id_value_rows<'a>(
    path: &Path,
    lines: impl Iterator<Item = (usize, &'a str)>,
    what: &str,
) -> Result<Vec<(String, f64)>, FormatError> {
    lines
        .map(|(line, raw)| {
            let f = split_row(path, line, raw, 2)?;
            Ok((f[0].to_string(), parse_finite(path, line, what, f[1])?))
        })
        .collect()
}

pub fn profile_tsv(profile: &[(usize, f64)]) -> String {
    let mut out = String::from("k\tmedian_Dk\n");
    for (k, m) in profile {
        let _ = writeln!(out, "{k}\t{m}");
    }
    out
}

pub fn parse_profile(path: &Path, text: &str) -> Result<Vec<(usize, f64)>, FormatError> {
    let mut lines = data_lines(text);
    match lines.next() {
        Some((_, "k\tmedian_Dk")) => {}
        _ => return Err(FormatError::line(path, 1, "header must be `k\\tmedian_Dk`")),
    }
    lines
        .map(|(line, raw)| {
            let f = split_row(path, line, raw, 2)?;
            Ok((parse_field(path, line, "k", f[0])?, parse_finite(path, line, "median_Dk", f[1])?))
        })
        .collect()
}

pub fn vocab_df_tsv(stats: &VocabStats) -> String {
    let mut out = format!("N={}\n", stats.n_docs);
    for (t, df) in stats.df.iter().enumerate() {
        let _ = writeln!(out, "{t}\t{df}");
    }
    out
}

pub fn parse_vocab_df(path: &Path, text: &str) -> Result<VocabStats, FormatError> {
    let mut lines = data_lines(text);
    let h = parse_header(path, lines.next().map(|l| l.1), &["N"])?;
    let n_docs: u32 = parse_field(path, 1, "N", h[0])?;
    let mut df = Vec::new();
    for (line, raw) in lines {
        let f = split_row(path, line, raw, 2)?;
        let t: usize = parse_field(path, line, "token_id", f[0])?;
        if t != df.len() {
            return Err(FormatError::line(path, line, format!("token_id {t} out of order")));
        }
        let d: u32 = parse_field(path, line, "df", f[1])?;
        if d > n_docs {
            return Err(FormatError::line(path, line, format!("df {d} exceeds N={n_docs}")));
        }
        df.push(d);
    }
    VocabStats::new(df, n_docs).map_err(|e| FormatError::core(path, e))
}

pub fn read_vocab_df(path: &Path) -> Result<VocabStats, FormatError> {
    parse_vocab_df(path, &read_string(path)?)
}

fn escape_token(token: &str) -> String {
    let mut out = String::with_capacity(token.len());
    for c in token.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

fn unescape_token(raw: &str) -> Option<String> {
    let mut out = String::with_capacity(raw.len());
    let mut chars = raw.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        out.push(match chars.next()? {
            '\\' => '\\',
            't' => '\t',
            'n' => '\n',
            'r' => '\r',
            _ => return None,
        });
    }
    Some(out)
}

/// `token_id\ttoken` rows. Backslash, tab and line breaks inside tokens are
/// written as `\\`, `\t`, `\n` and `\r`.
pub fn vocab_tsv(vocab: &[String]) -> String {
    let mut out = String::new();
    for (t, token) in vocab.iter().enumerate() {
        let _ = writeln!(out, "{t}\t{}", escape_token(token));
    }
    out
}

pub fn parse_vocab(path: &Path, text: &str) -> Result<Vec<String>, FormatError> {
    let mut vocab = Vec::new();
    // tokens may be whitespace, so only fully empty lines are skipped
    for (i, raw) in text.split('\n').enumerate() {
        if raw.is_empty() {
            continue;
        }
        let line = i + 1;
        let (id, token) = raw
            .split_once('\t')
            .ok_or_else(|| FormatError::line(path, line, "expected `token_id\\ttoken`"))?;
        let t: usize = parse_field(path, line, "token_id", id)?;
        if t != vocab.len() {
            return Err(FormatError::line(path, line, format!("token_id {t} out of order")));
        }
        vocab.push(unescape_token(token).ok_or_else(|| FormatError::line(path, line, "bad escape in token"))?);
    }
    Ok(vocab)
}

pub fn read_vocab(path: &Path) -> Result<Vec<String>, FormatError> {
    parse_vocab(path, &read_string(path)?)
}

pub fn eu_scores_tsv(scores: &EuScores) -> String {
    let mut out = format!(
        "k={}\testimator={}\titeration={}\n",
        scores.k,
        scores.estimator.name(),
        scores.iteration
    );
    for (id, u) in &scores.scores {
        let _ = writeln!(out, "{id}\t{u}");
    }
    out
}

pub fn parse_eu_scores(path: &Path, text: &str) -> Result<EuScores, FormatError> {
    let mut lines = data_lines(text);
    let h = parse_header(path, lines.next().map(|l| l.1), &["k", "estimator", "iteration"])?;
    let estimator = match h[1] {
        "topk-idf" => Estimator::TopKIdf,
        "entropy" => Estimator::Entropy,
        other => return Err(FormatError::line(path, 1, format!("unknown estimator `{other}`"))),
    };
    let scores = id_value_rows(path, lines, "U_k")?;
    let mean = if scores.is_empty() {
        0.0
    } else {
        scores.iter().map(|s| s.1).sum::<f64>() / scores.len() as f64
    };
    Ok(EuScores {
        k: parse_field(path, 1, "k", h[0])?,
        estimator,
        iteration: parse_field(path, 1, "iteration", h[2])?,
        scores,
        mean,
    })
}

pub fn clusters_tsv(ids: &[String], labels: &[usize]) -> String {
    let mut out = String::new();
    for (id, c) in ids.iter().zip(labels) {
        let _ = writeln!(out, "{id}\t{c}");
    }
    out
}

pub fn parse_clusters(path: &Path, text: &str) -> Result<(Vec<String>, Vec<usize>), FormatError> {
    let mut ids = Vec::new();
    let mut labels = Vec::new();
    for (line, raw) in data_lines(text) {
        let f = split_row(path, line, raw, 2)?;
        ids.push(f[0].to_string());
        labels.push(parse_field(path, line, "cluster", f[1])?);
    }
    Ok((ids, labels))
}

pub fn selection_jsonl(picks: &[Selection]) -> String {
    json_lines(picks)
}

pub fn parse_selection(path: &Path, text: &str) -> Result<Vec<Selection>, FormatError> {
    data_lines(text)
        .map(|(line, raw)| serde_json::from_str(raw).map_err(|e| FormatError::line(path, line, e.to_string())))
        .collect()
}

pub const TRACE_HEADER: &str = "iter,raw_mean_eu,ema_eu,n_sampled,cum_budget,stopped,reason";

pub fn trace_csv(rows: &[TraceRow]) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.iteration,
            r.raw_mean_eu,
            r.ema_eu,
            r.n_sampled,
            r.cum_budget,
            r.stopped,
            r.reason.map(StopReason::as_str).unwrap_or("")
        );
    }
    out
}

pub fn parse_trace(path: &Path, text: &str) -> Result<Vec<TraceRow>, FormatError> {
    let mut lines = data_lines(text);
    if lines.next().map(|l| l.1) != Some(TRACE_HEADER) {
        return Err(FormatError::line(path, 1, format!("header must be `{TRACE_HEADER}`")));
    }
    lines
        .map(|(line, raw)| {
            let f: Vec<&str> = raw.split(',').collect();
            if f.len() != 7 {
                return Err(FormatError::line(path, line, format!("expected 7 fields, found {}", f.len())));
            }
            let reason = match f[6] {
                "" => None,
                "plateau" => Some(StopReason::Plateau),
                "budget" => Some(StopReason::Budget),
                "exhausted" => Some(StopReason::Exhausted),
                "aborted" => Some(StopReason::Aborted),
                other => return Err(FormatError::line(path, line, format!("unknown reason `{other}`"))),
            };
            Ok(TraceRow {
                iteration: parse_field(path, line, "iter", f[0])?,
                raw_mean_eu: parse_field(path, line, "raw_mean_eu", f[1])?,
                ema_eu: parse_field(path, line, "ema_eu", f[2])?,
                n_sampled: parse_field(path, line, "n_sampled", f[3])?,
                cum_budget: parse_field(path, line, "cum_budget", f[4])?,
                stopped: parse_field(path, line, "stopped", f[5])?,
                reason,
            })
        })
        .collect()
}
