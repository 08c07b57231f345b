//! Run configuration shared by the command-line front end and the examples.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::backend::{
    build_backend, BackendDescriptor, BackendKind, InferenceBackend, MODEL_DIR_ENV,
};
use crate::error::{Error, Result};
use crate::fusion::CollapseMode;
use crate::policy::PolicyConfig;
use crate::prompt::{PromptConfig, PromptEngine};
use crate::sim::SimConfig;
use crate::vocab::{load_targets, load_vocabulary, DescriptionVocabulary, TargetLists};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackendConfig {
    pub kind: BackendKind,
    /// Falls back to `PEACE_MODEL_DIR` for the portable-graph backend.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model_dir: Option<PathBuf>,
    /// Mock noise seed; defaults to the run seed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            kind: BackendKind::Mock,
            model_dir: None,
            seed: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub backend: BackendConfig,
    pub prompt: PromptConfig,
    pub policy: PolicyConfig,
    pub sim: SimConfig,
    pub collapse: CollapseMode,
    /// Binarization threshold for mIoU.
    pub tau: f64,
    /// Vocabulary file; the built-in vocabulary when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vocabulary: Option<PathBuf>,
    /// Target list file; the vocabulary's own targets when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub targets: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            backend: BackendConfig::default(),
            prompt: PromptConfig::default(),
            policy: PolicyConfig::default(),
            sim: SimConfig::default(),
            collapse: CollapseMode::Sum,
            tau: crate::metrics::DEFAULT_TAU,
            vocabulary: None,
            targets: None,
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::schema(origin, &e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn validate(&self) -> Result<()> {
        self.prompt.validate()?;
        self.policy.validate()?;
        self.sim.validate()?;
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::Validation(format!(
                "tau must lie in (0, 1), got {}",
                self.tau
            )));
        }
        Ok(())
    }

    /// Backend descriptor with the model directory resolved from the environment.
    pub fn descriptor(&self) -> BackendDescriptor {
        match self.backend.kind {
            BackendKind::Mock => BackendDescriptor::mock(self.backend.seed.unwrap_or(self.seed)),
            BackendKind::PortableGraph => {
                let dir = self
                    .backend
                    .model_dir
                    .clone()
                    .or_else(|| std::env::var_os(MODEL_DIR_ENV).map(PathBuf::from));
                let mut d = BackendDescriptor::portable_graph(dir.clone().unwrap_or_default());
                d.model_dir = dir;
                d
            }
        }
    }

    pub fn build_backend(&self) -> Result<Box<dyn InferenceBackend>> {
        build_backend(&self.descriptor())
    }

    /// Prompt engine with its vocabulary embedded by `backend`.
    pub fn build_engine(&self, backend: &dyn InferenceBackend) -> Result<PromptEngine> {
        let vocab = match &self.vocabulary {
            Some(p) => load_vocabulary(p, backend)?,
            None => {
                let mut v = DescriptionVocabulary::builtin();
                v.embed(backend)?;
                v
            }
        };
        let targets = match (&self.targets, &self.vocabulary) {
            (Some(p), _) => load_targets(p)?,
            (None, Some(p)) => load_targets(p)?,
            (None, None) => TargetLists::builtin(),
        };
        PromptEngine::new(vocab, targets, self.prompt.clone())
    }
}
