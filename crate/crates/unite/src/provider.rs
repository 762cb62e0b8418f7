//! Model states exchanged through files in a state directory.

use std::path::{Path, PathBuf};
use std::process::Command;

use unite_core::control::ModelProvider;
use unite_core::eu::{EmbeddingSet, VocabProjection, VocabStats};
use unite_core::sampler::Selection;

use crate::error::{CliError, FormatError};
use crate::formats::{ids_path, read_emb, read_prj, read_vocab_df, selection_jsonl, vocab_path};
use crate::fsio::write_atomic;

pub const EMB_FILE: &str = "embeddings.emb";
pub const IDS_FILE: &str = "embeddings.ids";
pub const PRJ_FILE: &str = "projection.prj";
pub const VOCAB_FILE: &str = "vocab.tsv";
pub const VOCAB_DF_FILE: &str = "vocab_df.tsv";

/// Files a state directory must hold. `vocab.tsv` is optional.
pub const REQUIRED_STATE_FILES: [&str; 4] = [EMB_FILE, IDS_FILE, PRJ_FILE, VOCAB_DF_FILE];

pub fn missing_state_files(dir: &Path) -> Vec<String> {
    REQUIRED_STATE_FILES
        .iter()
        .filter(|f| !dir.join(f).is_file())
        .map(|f| f.to_string())
        .collect()
}

pub fn require_state_files(dir: &Path) -> Result<(), CliError> {
    let files = missing_state_files(dir);
    if files.is_empty() {
        Ok(())
    } else {
        Err(CliError::MissingState {
            dir: dir.to_path_buf(),
            files,
        })
    }
}

/// One model state plus the domain statistics, cross-checked for shape.
#[derive(Debug, Clone)]
pub struct ModelState {
    pub embeddings: EmbeddingSet,
    pub projection: VocabProjection,
    pub stats: VocabStats,
}

/// Paths of the state files that exist, for manifests.
pub fn state_paths(dir: &Path) -> Vec<PathBuf> {
    let emb = dir.join(EMB_FILE);
    let prj = dir.join(PRJ_FILE);
    [emb.clone(), ids_path(&emb), prj.clone(), vocab_path(&prj), dir.join(VOCAB_DF_FILE)]
        .into_iter()
        .filter(|p| p.is_file())
        .collect()
}

fn load_model(dir: &Path) -> Result<(EmbeddingSet, VocabProjection), FormatError> {
    let emb_path = dir.join(EMB_FILE);
    let prj_path = dir.join(PRJ_FILE);
    let embeddings = read_emb(&emb_path)?;
    let projection = read_prj(&prj_path)?;
    if embeddings.dim() != projection.dim() {
        return Err(FormatError::invalid(
            &prj_path,
            format!(
                "projection dim {} does not match embedding dim {}",
                projection.dim(),
                embeddings.dim()
            ),
        ));
    }
    Ok((embeddings, projection))
}

/// Load and cross-check every file of a state directory.
pub fn load_state(dir: &Path) -> Result<ModelState, CliError> {
    require_state_files(dir)?;
    let (embeddings, projection) = load_model(dir)?;
    let df_path = dir.join(VOCAB_DF_FILE);
    let stats = read_vocab_df(&df_path)?;
    if stats.df.len() != projection.vocab_size() {
        return Err(FormatError::invalid(
            &df_path,
            format!(
                "{} tokens, projection has {}",
                stats.df.len(),
                projection.vocab_size()
            ),
        )
        .into());
    }
    Ok(ModelState {
        embeddings,
        projection,
        stats,
    })
}

/// Quote `s` for `sh`.
fn shell_quote(s: &str) -> String {
    format!("'{}'", s.replace('\'', r"'\''"))
}

/// Provider backed by a state directory. After each round it writes the
/// picks to `selection_iter<t>.jsonl`, runs the update command (if any) and
/// reloads the embeddings and projection. Without a command the state never
/// changes.
#[derive(Debug)]
pub struct FileProvider {
    state_dir: PathBuf,
    output_dir: PathBuf,
    command: Option<String>,
    embeddings: EmbeddingSet,
    projection: VocabProjection,
    required: Vec<String>,
    written: Vec<String>,
}

impl FileProvider {
    /// `required` ids must be covered by every reloaded embedding set.
    pub fn new(
        state_dir: &Path,
        output_dir: &Path,
        command: Option<String>,
        state: &ModelState,
        required: Vec<String>,
    ) -> Self {
        Self {
            state_dir: state_dir.to_path_buf(),
            output_dir: output_dir.to_path_buf(),
            command,
            embeddings: state.embeddings.clone(),
            projection: state.projection.clone(),
            required,
            written: Vec::new(),
        }
    }

    /// Names of the selection files written so far.
    pub fn selection_files(&self) -> &[String] {
        &self.written
    }

    pub fn selection_file_name(iteration: usize) -> String {
        format!("selection_iter{iteration}.jsonl")
    }

    /// Substitute the placeholders of an update command.
    pub fn render_command(template: &str, selection: &Path, state_dir: &Path, iteration: usize) -> String {
        template
            .replace("{selection}", &shell_quote(&selection.display().to_string()))
            .replace("{state_dir}", &shell_quote(&state_dir.display().to_string()))
            .replace("{iteration}", &iteration.to_string())
    }

    fn run_update(&mut self, iteration: usize, selection: &Path) -> Result<(), String> {
        let Some(template) = &self.command else {
            return Ok(());
        };
        let cmd = Self::render_command(template, selection, &self.state_dir, iteration);
        eprintln!("unite loop: round {iteration}: running update command");
        let status = Command::new("sh")
            .arg("-c")
            .arg(&cmd)
            .status()
            .map_err(|e| format!("cannot start update command: {e}"))?;
        if !status.success() {
            return Err(format!("update command failed ({status}) in round {iteration}"));
        }
        let missing = missing_state_files(&self.state_dir);
        if !missing.is_empty() {
            return Err(format!("state files missing after update: {}", missing.join(", ")));
        }
        let (emb, proj) = load_model(&self.state_dir).map_err(|e| e.to_string())?;
        if proj.vocab_size() != self.projection.vocab_size() {
            return Err(format!(
                "vocabulary size changed from {} to {}",
                self.projection.vocab_size(),
                proj.vocab_size()
            ));
        }
        emb.check_coverage(self.required.iter().map(String::as_str))
            .map_err(|e| e.to_string())?;
        self.embeddings = emb;
        self.projection = proj;
        Ok(())
    }
}

impl ModelProvider for FileProvider {
    fn embeddings(&self) -> &EmbeddingSet {
        &self.embeddings
    }

    fn projection(&self) -> &VocabProjection {
        &self.projection
    }

    fn update(&mut self, iteration: usize, selection: &[Selection]) -> Result<(), String> {
        let name = Self::selection_file_name(iteration);
        let path = self.output_dir.join(&name);
        write_atomic(&path, selection_jsonl(selection).as_bytes()).map_err(|e| e.to_string())?;
        self.written.push(name);
        let absolute = std::path::absolute(&path).unwrap_or(path);
        self.run_update(iteration, &absolute)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn placeholders_are_quoted() {
        let cmd = FileProvider::render_command(
            "train --sel {selection} --out {state_dir} --it {iteration}",
            Path::new("/tmp/it's here.jsonl"),
            Path::new("/s"),
            3,
        );
        assert_eq!(cmd, r"train --sel '/tmp/it'\''s here.jsonl' --out '/s' --it 3");
    }

    #[test]
    fn missing_files_are_listed() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join(PRJ_FILE), b"").unwrap();
        assert_eq!(
            missing_state_files(dir.path()),
            vec!["embeddings.emb", "embeddings.ids", "vocab_df.tsv"]
        );
    }
}
