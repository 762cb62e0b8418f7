//! Little-endian binary embedding (`.emb`) and projection (`.prj`) files.

use std::path::{Path, PathBuf};

use unite_core::eu::{EmbeddingSet, VocabProjection};

use super::{read_bytes, read_string, tables};
use crate::error::FormatError;
use crate::fsio::write_atomic;

pub const EMB_MAGIC: &[u8; 8] = b"UNITEEMB";
pub const EMB_VERSION: u32 = 1;
pub const PRJ_MAGIC: &[u8; 8] = b"UNITEPRJ";
const EMB_HEADER: usize = 8 + 3 * 4;
const PRJ_HEADER: usize = 8 + 2 * 4;

/// The `.ids` file next to an `.emb` file.
pub fn ids_path(emb: &Path) -> PathBuf {
    emb.with_extension("ids")
}

/// The `vocab.tsv` file next to a `.prj` file.
pub fn vocab_path(prj: &Path) -> PathBuf {
    prj.with_file_name("vocab.tsv")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmbHeader {
    pub version: u32,
    pub count: u32,
    pub dim: u32,
}

fn u32_at(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
}

fn f32s(bytes: &[u8]) -> Vec<f32> {
    bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect()
}

fn push_f32s(out: &mut Vec<u8>, values: &[f32]) {
    out.reserve(values.len() * 4);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn check_len(path: &Path, actual: usize, header: usize, floats: u64) -> Result<(), FormatError> {
    let expected = floats
        .checked_mul(4)
        .and_then(|b| b.checked_add(header as u64))
        .ok_or_else(|| FormatError::invalid(path, "declared shape overflows"))?;
    if actual as u64 != expected {
        return Err(FormatError::invalid(
            path,
            format!("file is {actual} bytes, header implies {expected}"),
        ));
    }
    Ok(())
}

fn to_u32(path: &Path, what: &str, n: usize) -> Result<u32, FormatError> {
    u32::try_from(n).map_err(|_| FormatError::invalid(path, format!("{what} {n} does not fit in u32")))
}

pub fn parse_emb_header(path: &Path, bytes: &[u8]) -> Result<EmbHeader, FormatError> {
    if bytes.len() < EMB_HEADER || &bytes[..8] != EMB_MAGIC {
        return Err(FormatError::Magic {
            path: path.to_path_buf(),
            expected: "UNITEEMB",
        });
    }
    let header = EmbHeader {
        version: u32_at(bytes, 8),
        count: u32_at(bytes, 12),
        dim: u32_at(bytes, 16),
    };
    if header.version != EMB_VERSION {
        return Err(FormatError::Version {
            path: path.to_path_buf(),
            version: header.version,
        });
    }
    if header.dim == 0 {
        return Err(FormatError::invalid(path, "dim is 0"));
    }
    check_len(path, bytes.len(), EMB_HEADER, header.count as u64 * header.dim as u64)?;
    Ok(header)
}

pub fn encode_emb(emb: &EmbeddingSet) -> Vec<u8> {
    let mut out = Vec::with_capacity(EMB_HEADER + emb.data().len() * 4);
    out.extend_from_slice(EMB_MAGIC);
    out.extend_from_slice(&EMB_VERSION.to_le_bytes());
    out.extend_from_slice(&(emb.len() as u32).to_le_bytes());
    out.extend_from_slice(&(emb.dim() as u32).to_le_bytes());
    push_f32s(&mut out, emb.data());
    out
}

pub fn encode_ids(ids: &[String]) -> String {
    let mut out = String::new();
    for id in ids {
        out.push_str(id);
        out.push('\n');
    }
    out
}

/// Decode an `.emb` payload given the text of its `.ids` file.
pub fn decode_emb(path: &Path, bytes: &[u8], ids_text: &str) -> Result<EmbeddingSet, FormatError> {
    let header = parse_emb_header(path, bytes)?;
    let data = f32s(&bytes[EMB_HEADER..]);
    let dim = header.dim as usize;
    if let Some(at) = data.iter().position(|x| !x.is_finite()) {
        return Err(FormatError::invalid(
            path,
            format!("non-finite value at row {}, column {}", at / dim, at % dim),
        ));
    }
    let ids: Vec<String> = ids_text.lines().map(String::from).collect();
    let ids_file = ids_path(path);
    if ids.len() != header.count as usize {
        return Err(FormatError::invalid(
            &ids_file,
            format!("{} ids for {} embedding rows", ids.len(), header.count),
        ));
    }
    if let Some(i) = ids.iter().position(String::is_empty) {
        return Err(FormatError::line(&ids_file, i + 1, "empty id"));
    }
    EmbeddingSet::new(ids, dim, data).map_err(|e| FormatError::core(&ids_file, e))
}

pub fn read_emb(path: &Path) -> Result<EmbeddingSet, FormatError> {
    let bytes = read_bytes(path)?;
    let ids = read_string(&ids_path(path))?;
    decode_emb(path, &bytes, &ids)
}

/// Write `emb` to `path` and its ids to the sibling `.ids` file.
pub fn write_emb(path: &Path, emb: &EmbeddingSet) -> Result<(), FormatError> {
    if let Some(id) = emb.ids().iter().find(|id| id.contains(['\n', '\r'])) {
        return Err(FormatError::invalid(path, format!("id {id:?} contains a line break")));
    }
    write_atomic(path, &encode_emb(emb))?;
    write_atomic(&ids_path(path), encode_ids(emb.ids()).as_bytes())
}

pub fn encode_prj(proj: &VocabProjection) -> Vec<u8> {
    let mut out = Vec::with_capacity(PRJ_HEADER + (proj.weights().len() + proj.bias().len()) * 4);
    out.extend_from_slice(PRJ_MAGIC);
    out.extend_from_slice(&(proj.vocab_size() as u32).to_le_bytes());
    out.extend_from_slice(&(proj.dim() as u32).to_le_bytes());
    push_f32s(&mut out, proj.weights());
    push_f32s(&mut out, proj.bias());
    out
}

pub fn decode_prj(path: &Path, bytes: &[u8]) -> Result<VocabProjection, FormatError> {
    if bytes.len() < PRJ_HEADER || &bytes[..8] != PRJ_MAGIC {
        return Err(FormatError::Magic {
            path: path.to_path_buf(),
            expected: "UNITEPRJ",
        });
    }
    let v = u32_at(bytes, 8) as usize;
    let d = u32_at(bytes, 12) as usize;
    if v == 0 || d == 0 {
        return Err(FormatError::invalid(path, format!("empty shape V={v} D={d}")));
    }
    check_len(path, bytes.len(), PRJ_HEADER, v as u64 * d as u64 + v as u64)?;
    let values = f32s(&bytes[PRJ_HEADER..]);
    let (weights, bias) = values.split_at(v * d);
    if let Some(at) = weights.iter().position(|x| !x.is_finite()) {
        return Err(FormatError::invalid(
            path,
            format!("non-finite weight at token {}, column {}", at / d, at % d),
        ));
    }
    if let Some(t) = bias.iter().position(|x| !x.is_finite()) {
        return Err(FormatError::invalid(path, format!("non-finite bias at token {t}")));
    }
    VocabProjection::new(v, d, weights.to_vec(), bias.to_vec()).map_err(|e| FormatError::core(path, e))
}

/// Read a projection and, when present, the sibling `vocab.tsv`.
pub fn read_prj(path: &Path) -> Result<VocabProjection, FormatError> {
    let proj = decode_prj(path, &read_bytes(path)?)?;
    let vocab_file = vocab_path(path);
    if !vocab_file.exists() {
        return Ok(proj);
    }
    let vocab = tables::read_vocab(&vocab_file)?;
    proj.with_vocab(vocab).map_err(|e| FormatError::core(&vocab_file, e))
}

/// Write `proj`, plus the sibling `vocab.tsv` when it carries token strings.
pub fn write_prj(path: &Path, proj: &VocabProjection) -> Result<(), FormatError> {
    to_u32(path, "vocabulary size", proj.vocab_size())?;
    write_atomic(path, &encode_prj(proj))?;
    if !proj.vocab.is_empty() {
        write_atomic(&vocab_path(path), tables::vocab_tsv(&proj.vocab).as_bytes())?;
    }
    Ok(())
}
