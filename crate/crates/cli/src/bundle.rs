//! A trained model on disk: `model.bin` plus what it takes to featurize a
//! tweet for it, described by `predictor.json`.
//!
//! ```text
//! <model_dir>/<name>/predictor.json
//! <model_dir>/<name>/model.bin
//! <model_dir>/<name>/vocab.json   (sparse models)
//! <model_dir>/<name>/cbow.bin     (softmax over CBOW, LSTM)
//! ```

use std::path::{Path, PathBuf};

use edsa_core::classifiers::{ModelKind, SentimentModel};
use edsa_core::ensemble::{Featurizer, ModelPredictor};
use edsa_core::vectorize::{CbowModel, ExternalEmbeddings, Vocabulary, WeightScheme};
use edsa_core::PipelineSpec;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::output;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeaturizerKind {
    Sparse,
    Mean,
    Sequence,
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleMeta {
    pub config_hash: String,
    pub name: String,
    pub kind: ModelKind,
    pub pipeline: PipelineSpec,
    pub featurizer: FeaturizerKind,
    pub scheme: Option<WeightScheme>,
    pub max_len: Option<usize>,
    pub embeddings: Option<PathBuf>,
    /// Hash of the vocabulary the model was trained against; checked on load.
    pub vocab_hash: Option<String>,
}

pub fn cbow_hash(cbow: &CbowModel) -> String {
    edsa_core::seed::sha256_hex(cbow.vocab().join("\n").as_bytes())
}

/// Write `p` under `dir`; returns the files written.
pub fn save(
    p: &ModelPredictor,
    kind: ModelKind,
    dir: &Path,
    config_hash: &str,
    embeddings: Option<&Path>,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut files = Vec::new();
    let (featurizer, scheme, max_len, vocab_hash) = match &p.featurizer {
        Featurizer::Sparse { vocab, scheme } => {
            let path = dir.join("vocab.json");
            output::write_json(&path, vocab)?;
            files.push(path);
            (FeaturizerKind::Sparse, Some(*scheme), None, Some(vocab.hash()))
        }
        Featurizer::MeanEmbedding(cbow) => {
            let path = dir.join("cbow.bin");
            cbow.save(&path)?;
            files.push(path);
            (FeaturizerKind::Mean, None, None, Some(cbow_hash(cbow)))
        }
        Featurizer::Sequence { cbow, max_len } => {
            let path = dir.join("cbow.bin");
            cbow.save(&path)?;
            files.push(path);
            (FeaturizerKind::Sequence, None, Some(*max_len), Some(cbow_hash(cbow)))
        }
        Featurizer::External(_) => (FeaturizerKind::External, None, None, None),
    };
    let model_path = dir.join("model.bin");
    p.model.save(&model_path, vocab_hash.as_deref())?;
    files.push(model_path);
    let meta = BundleMeta {
        config_hash: config_hash.to_string(),
        name: p.name.clone(),
        kind,
        pipeline: p.pipeline,
        featurizer,
        scheme,
        max_len,
        embeddings: embeddings.map(Path::to_path_buf),
        vocab_hash,
    };
    let meta_path = dir.join("predictor.json");
    output::write_json(&meta_path, &meta)?;
    files.push(meta_path);
    Ok(files)
}

pub fn load(dir: &Path) -> Result<ModelPredictor> {
    let meta_path = dir.join("predictor.json");
    if !meta_path.exists() {
        return Err(CliError::MissingInput(format!(
            "no trained model at {} (run `edsa train` first)",
            dir.display()
        )));
    }
    let text = std::fs::read_to_string(&meta_path).map_err(|e| CliError::io(&meta_path, e))?;
    let meta: BundleMeta = serde_json::from_str(&text)?;
    let featurizer = match meta.featurizer {
        FeaturizerKind::Sparse => {
            let path = dir.join("vocab.json");
            let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
            let vocab: Vocabulary = serde_json::from_str(&text)?;
            let scheme = meta
                .scheme
                .ok_or_else(|| CliError::Config(format!("{}: sparse model without a scheme", meta_path.display())))?;
            Featurizer::Sparse { vocab, scheme }
        }
        FeaturizerKind::Mean => Featurizer::MeanEmbedding(CbowModel::load(dir.join("cbow.bin"))?),
        FeaturizerKind::Sequence => Featurizer::Sequence {
            cbow: CbowModel::load(dir.join("cbow.bin"))?,
            max_len: meta.max_len.unwrap_or(edsa_core::classifiers::LstmConfig::default().max_len),
        },
        FeaturizerKind::External => {
            let path = meta.embeddings.as_ref().ok_or_else(|| {
                CliError::Config(format!("{}: external featurizer without embeddings", meta_path.display()))
            })?;
            Featurizer::External(ExternalEmbeddings::load(path)?)
        }
    };
    // The hash is recomputed from what was loaded, so a swapped vocabulary
    // file is caught here.
    let supplied = match &featurizer {
        Featurizer::Sparse { vocab, .. } => Some(vocab.hash()),
        Featurizer::MeanEmbedding(cbow) | Featurizer::Sequence { cbow, .. } => Some(cbow_hash(cbow)),
        Featurizer::External(_) => None,
    };
    let model = SentimentModel::load(dir.join("model.bin"), supplied.as_deref())?;
    if model.kind() != meta.kind {
        return Err(CliError::Config(format!(
            "{}: describes a {} model but model.bin holds {}",
            meta_path.display(),
            meta.kind,
            model.kind()
        )));
    }
    Ok(ModelPredictor {
        name: meta.name,
        pipeline: meta.pipeline,
        featurizer,
        model,
    })
}
