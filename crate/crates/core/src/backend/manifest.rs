//! Sidecar manifest describing exported graphs and the token table.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::tokenizer::sha256_file;
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphEntry {
    pub file: String,
    /// Input tensor names, in the order the backend feeds them.
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TokenTableEntry {
    pub file: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExportManifest {
    /// Checkpoint identifier the graphs were exported from.
    pub variant: String,
    pub embed_dim: usize,
    /// Side of the square image-encoder input.
    #[serde(default = "default_image_size")]
    pub image_size: u32,
    /// Side of the square segmentation input and output.
    #[serde(default = "default_seg_size")]
    pub seg_size: u32,
    #[serde(default = "default_mean")]
    pub pixel_mean: [f32; 3],
    #[serde(default = "default_std")]
    pub pixel_std: [f32; 3],
    pub text_encoder: GraphEntry,
    pub image_encoder: GraphEntry,
    pub segmenter: GraphEntry,
    pub token_table: TokenTableEntry,
    /// Optional precomputed vocabulary embeddings (`PEAC` table).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding_table: Option<String>,
    /// Free-form tool → version record.
    #[serde(default)]
    pub tools: BTreeMap<String, String>,
}

fn default_image_size() -> u32 {
    224
}
fn default_seg_size() -> u32 {
    352
}
fn default_mean() -> [f32; 3] {
    [0.481_454_66, 0.457_827_5, 0.408_210_73]
}
fn default_std() -> [f32; 3] {
    [0.268_629_54, 0.261_302_6, 0.275_777_1]
}

impl ExportManifest {
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let path = dir.as_ref().join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::schema(&path, &e))
    }

    /// Checks that every referenced file exists and the token table hash matches.
    pub fn verify(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        for g in [&self.text_encoder, &self.image_encoder, &self.segmenter] {
            if !dir.join(&g.file).is_file() {
                return Err(Error::Backend(format!("missing graph file {}", g.file)));
            }
            if g.inputs.is_empty() || g.outputs.is_empty() {
                return Err(Error::Backend(format!(
                    "{}: tensor names not declared",
                    g.file
                )));
            }
        }
        let table = dir.join(&self.token_table.file);
        if !table.is_file() {
            return Err(Error::Backend(format!(
                "missing token table {}",
                self.token_table.file
            )));
        }
        let actual = sha256_file(&table)?;
        if !actual.eq_ignore_ascii_case(&self.token_table.sha256) {
            return Err(Error::Backend(format!(
                "token table hash mismatch: manifest {}, file {actual}",
                self.token_table.sha256
            )));
        }
        if let Some(t) = &self.embedding_table {
            if !dir.join(t).is_file() {
                return Err(Error::Backend(format!("missing embedding table {t}")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph(name: &str) -> GraphEntry {
        GraphEntry {
            file: format!("{name}.onnx"),
            inputs: vec!["input".into()],
            outputs: vec!["output".into()],
        }
    }

    #[test]
    fn verify_checks_files_and_hash() {
        let dir = tempfile::tempdir().unwrap();
        for n in ["text", "image", "seg"] {
            std::fs::write(dir.path().join(format!("{n}.onnx")), b"x").unwrap();
        }
        std::fs::write(dir.path().join("bpe.txt"), "#v\n").unwrap();
        let mut m = ExportManifest {
            variant: "test".into(),
            embed_dim: 512,
            image_size: 224,
            seg_size: 352,
            pixel_mean: default_mean(),
            pixel_std: default_std(),
            text_encoder: graph("text"),
            image_encoder: graph("image"),
            segmenter: graph("seg"),
            token_table: TokenTableEntry {
                file: "bpe.txt".into(),
                sha256: sha256_file(dir.path().join("bpe.txt")).unwrap(),
            },
            embedding_table: None,
            tools: BTreeMap::new(),
        };
        m.verify(dir.path()).unwrap();

        std::fs::write(
            dir.path().join(MANIFEST_FILE),
            serde_json::to_string(&m).unwrap(),
        )
        .unwrap();
        assert_eq!(ExportManifest::load(dir.path()).unwrap(), m);

        m.token_table.sha256 = "00".repeat(32);
        assert!(matches!(m.verify(dir.path()), Err(Error::Backend(_))));
        m.segmenter.file = "absent.onnx".into();
        assert!(m.verify(dir.path()).is_err());
    }
}
