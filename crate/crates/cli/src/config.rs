//! TOML configuration. Every key is optional and falls back to the module
//! default; unknown keys are rejected. Command-line flags are applied on top.

use std::path::{Path, PathBuf};

use edsa_core::classifiers::ModelKind;
use edsa_core::ensemble::TrainConfig;
use edsa_core::events::{DetectConfig, EventMethod};
use edsa_core::vectorize::WeightScheme;
use edsa_core::PipelineKind;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// File name of the Sentiment140 training split, looked up under the data
/// root for the named datasets.
pub const SENTIMENT140: &str = "training.1600000.processed.noemoticon.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Root seed; every module derives its own from it.
    pub seed: u64,
    /// Worker cap; 0 uses every core.
    pub threads: usize,
    /// `c1`, `c2`, `c3`, or a path to a CSV or NDJSON dump.
    pub dataset: String,
    pub paths: Paths,
    pub ingest: IngestConfig,
    pub preprocess: PreprocessConfig,
    pub vectorize: VectorizeConfig,
    pub detect: DetectConfig,
    pub train: TrainConfig,
    pub evaluate: EvaluateConfig,
    pub ensemble: EnsembleConfig,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            seed: 42,
            threads: 0,
            dataset: "c1".into(),
            paths: Paths::default(),
            ingest: IngestConfig::default(),
            preprocess: PreprocessConfig::default(),
            vectorize: VectorizeConfig::default(),
            detect: DetectConfig::default(),
            train: TrainConfig::default(),
            evaluate: EvaluateConfig::default(),
            ensemble: EnsembleConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Root for the named datasets and relative input paths. `EDSA_DATA_DIR`
    /// takes precedence.
    pub data_dir: Option<PathBuf>,
    /// Source CSV for `c1`..`c3`; defaults to the Sentiment140 file under
    /// the data root.
    pub corpus: Option<PathBuf>,
    /// Per-tweet vectors for the softmax head (`<id> <v1> ... <vd>` lines).
    pub embeddings: Option<PathBuf>,
    /// Trained model bundles; defaults to `<report_dir>/models`.
    pub model_dir: Option<PathBuf>,
    /// Where artifacts are written; defaults to `out`.
    pub report_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestConfig {
    /// Read at most this many CSV rows.
    pub limit: Option<usize>,
    pub c1_size: usize,
    pub c2_size: usize,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig {
            limit: None,
            c1_size: 20_000,
            c2_size: 500_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub pipeline: PipelineKind,
    /// Overrides the pipeline's lemmatization step.
    pub lemmatize: Option<bool>,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            pipeline: PipelineKind::Ct,
            lemmatize: None,
        }
    }
}

/// The vocabulary and matrix follow `train.pipeline` and `train.min_df`, so
/// what `vectorize` writes is what `train` fits on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VectorizeConfig {
    pub scheme: WeightScheme,
    /// Also train CBOW embeddings (with `train.cbow`).
    pub cbow: bool,
}

impl Default for VectorizeConfig {
    fn default() -> Self {
        VectorizeConfig {
            scheme: WeightScheme::TfIdf,
            cbow: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    pub folds: usize,
    pub models: Vec<ModelKind>,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        EvaluateConfig {
            folds: edsa_core::evaluation::DEFAULT_FOLDS,
            models: ModelKind::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleConfig {
    pub methods: Vec<EventMethod>,
    /// Voters: trained model names (`nb`, `lr`, ...) loaded from the model
    /// directory, `lexicon`, or `hash:<salt>`.
    pub models: Vec<String>,
    pub lexicon_positive: Vec<String>,
    pub lexicon_negative: Vec<String>,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        let words = |w: &[&str]| w.iter().map(|s| s.to_string()).collect();
        EnsembleConfig {
            methods: EventMethod::ALL.to_vec(),
            models: ModelKind::ALL.iter().map(|k| k.as_str().to_string()).collect(),
            lexicon_positive: words(&[
                "good", "great", "love", "happy", "awesome", "nice", "fun", "best", "thanks", "yay", "cool",
                "excited", "glad", "beautiful", "amazing", "lol",
            ]),
            lexicon_negative: words(&[
                "bad", "sad", "hate", "awful", "sick", "miss", "tired", "worst", "ugh", "sorry", "bored", "hurt",
                "sucks", "lost", "cry", "not_good",
            ]),
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.message().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => CliError::MissingInput(format!("config file {} not found", path.display())),
            _ => CliError::io(path, e),
        })?;
        Self::from_toml(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Hash over everything that can change an artifact. The worker count
    /// and output location are left out: they must not.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.threads = 0;
        c.paths.report_dir = None;
        let json = serde_json::to_string(&c).expect("config serializes");
        edsa_core::seed::sha256_hex(json.as_bytes())
    }

    pub fn data_root(&self) -> PathBuf {
        match std::env::var_os("EDSA_DATA_DIR") {
            Some(dir) if !dir.is_empty() => PathBuf::from(dir),
            _ => self.paths.data_dir.clone().unwrap_or_else(|| PathBuf::from(".")),
        }
    }

    /// Relative input paths are taken from the data root.
    pub fn input_path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() || p.exists() {
            p.to_path_buf()
        } else {
            self.data_root().join(p)
        }
    }

    pub fn report_dir(&self) -> PathBuf {
        self.paths.report_dir.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    pub fn model_dir(&self) -> PathBuf {
        self.paths.model_dir.clone().unwrap_or_else(|| self.report_dir().join("models"))
    }
}
