//! Backend running exported ONNX graphs with `tract`.
//!
//! Expects a model directory holding a [`ExportManifest`], three graphs
//! (text encoder, image encoder, segmenter) and the BPE merges file. Inputs
//! are bound by tensor name: names containing `pixel` receive the image,
//! names containing `mask` an attention mask, anything else the token ids.

use std::path::{Path, PathBuf};

use image::imageops::FilterType;
use tract_onnx::prelude::*;

use super::manifest::{ExportManifest, GraphEntry};
use super::table::EmbeddingTable;
use super::tokenizer::{BpeTokenizer, TokenizedText, CONTEXT_LENGTH};
use super::{check_prompt, BackendDescriptor, InferenceBackend, LogitMap};
use crate::embedding::EmbeddingVector;
use crate::error::{Error, Result};
use crate::scene::Scene;

type Plan = TypedRunnableModel<TypedModel>;

pub struct GraphBackend {
    descriptor: BackendDescriptor,
    manifest: ExportManifest,
    tokenizer: BpeTokenizer,
    text: Plan,
    image: Plan,
    segmenter: Plan,
    table: Option<EmbeddingTable>,
}

fn backend_err(context: &str, e: impl std::fmt::Display) -> Error {
    Error::Backend(format!("{context}: {e}"))
}

fn load_plan(dir: &Path, entry: &GraphEntry) -> Result<Plan> {
    let path: PathBuf = dir.join(&entry.file);
    tract_onnx::onnx()
        .model_for_path(&path)
        .and_then(|m| m.into_optimized())
        .and_then(|m| m.into_runnable())
        .map_err(|e| backend_err(&path.display().to_string(), e))
}

impl GraphBackend {
    /// Loads and optimizes all graphs. Failures surface here, never per call.
    pub fn load(descriptor: &BackendDescriptor) -> Result<Self> {
        let dir = descriptor
            .model_dir
            .clone()
            .ok_or_else(|| Error::Backend("portable_graph backend needs model_dir".into()))?;
        let manifest = ExportManifest::load(&dir)?;
        manifest.verify(&dir)?;
        let tokenizer = BpeTokenizer::from_file(dir.join(&manifest.token_table.file))?;
        let table = manifest
            .embedding_table
            .as_ref()
            .map(|t| EmbeddingTable::read(dir.join(t)))
            .transpose()?;
        let mut descriptor = descriptor.clone();
        descriptor.embed_dim = manifest.embed_dim;
        descriptor.seg_resolution = (manifest.seg_size, manifest.seg_size);
        Ok(Self {
            text: load_plan(&dir, &manifest.text_encoder)?,
            image: load_plan(&dir, &manifest.image_encoder)?,
            segmenter: load_plan(&dir, &manifest.segmenter)?,
            descriptor,
            manifest,
            tokenizer,
            table,
        })
    }

    fn pixels(&self, scene: &Scene, size: u32) -> Tensor {
        let resized = image::imageops::resize(&scene.image, size, size, FilterType::CatmullRom);
        let (mean, std) = (self.manifest.pixel_mean, self.manifest.pixel_std);
        let s = size as usize;
        tract_ndarray::Array4::<f32>::from_shape_fn((1, 3, s, s), |(_, c, y, x)| {
            let v = f32::from(resized.get_pixel(x as u32, y as u32).0[c]) / 255.0;
            (v - mean[c]) / std[c]
        })
        .into()
    }

    fn ids(tokens: &TokenizedText) -> (Tensor, Tensor) {
        let ids = tract_ndarray::Array2::from_shape_vec((1, CONTEXT_LENGTH), tokens.ids.clone())
            .expect("context length");
        let mask = tract_ndarray::Array2::from_shape_fn((1, CONTEXT_LENGTH), |(_, i)| {
            i64::from(i <= tokens.eot_index)
        });
        (ids.into(), mask.into())
    }

    fn run(
        plan: &Plan,
        pixels: Option<Tensor>,
        tokens: Option<&TokenizedText>,
        context: &str,
    ) -> Result<Tensor> {
        let model = plan.model();
        let (ids, mask) = tokens.map(Self::ids).unzip();
        let mut inputs: TVec<TValue> = tvec![];
        for outlet in model.input_outlets().map_err(|e| backend_err(context, e))? {
            let name = model.node(outlet.node).name.to_lowercase();
            let tensor = if name.contains("pixel") {
                pixels.clone()
            } else if name.contains("mask") {
                mask.clone()
            } else {
                ids.clone()
            }
            .ok_or_else(|| Error::Backend(format!("{context}: cannot bind input '{name}'")))?;
            inputs.push(tensor.into_tvalue());
        }
        let mut out = plan.run(inputs).map_err(|e| backend_err(context, e))?;
        Ok(out.remove(0).into_tensor())
    }

    fn to_embedding(t: Tensor, context: &str) -> Result<EmbeddingVector> {
        let view = t
            .to_array_view::<f32>()
            .map_err(|e| backend_err(context, e))?;
        EmbeddingVector::normalized(view.iter().copied().collect())
    }
}

impl InferenceBackend for GraphBackend {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn embed_text(&self, text: &str) -> Result<EmbeddingVector> {
        check_prompt(text)?;
        if let Some(table) = &self.table {
            if let Some(i) = table.words.iter().position(|w| w == text) {
                return EmbeddingVector::normalized(table.rows[i].clone());
            }
        }
        let tokens = self.tokenizer.tokenize(text);
        if tokens.truncated {
            log::warn!("text exceeds {CONTEXT_LENGTH} tokens and was truncated: {text:?}");
        }
        let out = Self::run(&self.text, None, Some(&tokens), "text encoder")?;
        Ok(Self::to_embedding(out, "text encoder")?.with_truncated(tokens.truncated))
    }

    fn embed_image(&self, scene: &Scene) -> Result<EmbeddingVector> {
        scene.ensure_nonempty()?;
        let px = self.pixels(scene, self.manifest.image_size);
        let out = Self::run(&self.image, Some(px), None, "image encoder")?;
        Self::to_embedding(out, "image encoder")
    }

    fn segment(&self, scene: &Scene, prompt: &str) -> Result<LogitMap> {
        check_prompt(prompt)?;
        scene.ensure_nonempty()?;
        let size = self.manifest.seg_size;
        let tokens = self.tokenizer.tokenize(prompt);
        let px = self.pixels(scene, size);
        let out = Self::run(&self.segmenter, Some(px), Some(&tokens), "segmenter")?;
        let view = out
            .to_array_view::<f32>()
            .map_err(|e| backend_err("segmenter", e))?;
        LogitMap::new(size, size, view.iter().copied().collect())
    }

    fn caption(&self, _scene: &Scene) -> Result<Option<String>> {
        Ok(None)
    }
}
