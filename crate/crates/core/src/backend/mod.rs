//! Embedding, captioning and prompt-conditioned segmentation models.
//!
//! Two implementations sit behind [`InferenceBackend`]:
//!
//! * [`mock::MockBackend`]: seeded, model-free, driven by scene annotations.
//! * `graph::GraphBackend`: exported ONNX graphs plus a CLIP BPE token table
//!   (behind the `onnx` cargo feature).
//!
//! Backends are immutable after construction and may be shared across threads.

pub mod manifest;
pub mod mock;
pub mod table;
pub mod tokenizer;

#[cfg(feature = "onnx")]
pub mod graph;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingVector;
use crate::error::{Error, Result};
use crate::scene::Scene;

/// Environment variable pointing at exported model assets.
pub const MODEL_DIR_ENV: &str = "PEACE_MODEL_DIR";

/// Raw, unbounded per-pixel scores for one prompt.
#[derive(Clone, Debug, PartialEq)]
pub struct LogitMap {
    pub width: u32,
    pub height: u32,
    /// Row-major, `width * height` values.
    pub values: Vec<f32>,
}

impl LogitMap {
    pub fn new(width: u32, height: u32, values: Vec<f32>) -> Result<Self> {
        if values.len() != width as usize * height as usize {
            return Err(Error::Contract(format!(
                "logit map {width}x{height} needs {} values, got {}",
                width as usize * height as usize,
                values.len()
            )));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn filled(width: u32, height: u32, value: f32) -> Self {
        Self {
            width,
            height,
            values: vec![value; width as usize * height as usize],
        }
    }

    pub fn at(&self, x: u32, y: u32) -> f32 {
        self.values[(y * self.width + x) as usize]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Mock,
    PortableGraph,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendDescriptor {
    pub kind: BackendKind,
    #[serde(default = "default_embed_dim")]
    pub embed_dim: usize,
    /// Segmentation output (width, height).
    #[serde(default = "default_mock_resolution")]
    pub seg_resolution: (u32, u32),
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

fn default_embed_dim() -> usize {
    512
}

fn default_mock_resolution() -> (u32, u32) {
    (64, 64)
}

/// Native decoder resolution of exported CLIPSeg graphs.
pub const GRAPH_SEG_RESOLUTION: (u32, u32) = (352, 352);

impl BackendDescriptor {
    pub fn mock(seed: u64) -> Self {
        Self {
            kind: BackendKind::Mock,
            embed_dim: default_embed_dim(),
            seg_resolution: default_mock_resolution(),
            model_dir: None,
            seed: Some(seed),
        }
    }

    pub fn portable_graph(model_dir: impl Into<PathBuf>) -> Self {
        Self {
            kind: BackendKind::PortableGraph,
            embed_dim: default_embed_dim(),
            seg_resolution: GRAPH_SEG_RESOLUTION,
            model_dir: Some(model_dir.into()),
            seed: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 {
            return Err(Error::Validation("embed_dim must be positive".into()));
        }
        if self.seg_resolution.0 == 0 || self.seg_resolution.1 == 0 {
            return Err(Error::Validation("seg_resolution must be positive".into()));
        }
        match self.kind {
            BackendKind::Mock if self.seed.is_none() => {
                Err(Error::Validation("mock backend requires a seed".into()))
            }
            BackendKind::PortableGraph => match &self.model_dir {
                None => Err(Error::Validation(format!(
                    "portable_graph backend requires model_dir (or {MODEL_DIR_ENV})"
                ))),
                Some(dir) if !dir.join(manifest::MANIFEST_FILE).is_file() => Err(Error::Backend(
                    format!("no {} in {}", manifest::MANIFEST_FILE, dir.display()),
                )),
                Some(_) => Ok(()),
            },
            _ => Ok(()),
        }
    }
}

pub trait InferenceBackend: Send + Sync {
    fn descriptor(&self) -> &BackendDescriptor;

    /// Unit-norm text embedding. Over-long text is truncated and flagged.
    fn embed_text(&self, text: &str) -> Result<EmbeddingVector>;

    /// Unit-norm image embedding.
    fn embed_image(&self, scene: &Scene) -> Result<EmbeddingVector>;

    /// Logits for `prompt` at the descriptor's `seg_resolution`.
    fn segment(&self, scene: &Scene, prompt: &str) -> Result<LogitMap>;

    /// Short scene caption, when the backend has a captioner.
    fn caption(&self, scene: &Scene) -> Result<Option<String>>;
}

/// Builds the backend a descriptor asks for.
pub fn build_backend(descriptor: &BackendDescriptor) -> Result<Box<dyn InferenceBackend>> {
    descriptor.validate()?;
    match descriptor.kind {
        BackendKind::Mock => {
            let mut cfg = mock::MockConfig::with_seed(descriptor.seed.unwrap_or_default());
            cfg.embed_dim = descriptor.embed_dim;
            cfg.seg_resolution = descriptor.seg_resolution;
            Ok(Box::new(mock::MockBackend::new(cfg)))
        }
        #[cfg(feature = "onnx")]
        BackendKind::PortableGraph => Ok(Box::new(graph::GraphBackend::load(descriptor)?)),
        #[cfg(not(feature = "onnx"))]
        BackendKind::PortableGraph => Err(Error::Backend(
            "portable_graph backend requires building with the `onnx` feature".into(),
        )),
    }
}

pub(crate) fn check_prompt(prompt: &str) -> Result<()> {
    if prompt.trim().is_empty() {
        return Err(Error::Input("empty prompt".into()));
    }
    Ok(())
}
