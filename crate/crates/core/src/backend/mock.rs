//! Deterministic, weight-free stand-in for a CLIP/CLIPSeg stack.
//!
//! Text embeddings are seeded pseudo-random unit vectors keyed by the text.
//! An annotated image embeds as the sum of its planted words' text vectors
//! plus seeded noise, so for every role the planted word wins the cosine
//! argmax by a wide margin.
//!
//! Segmentation reads the annotation's label grid. Each pixel gets the
//! affinity between its class and the class named in the prompt (+2 exact,
//! +0.5 related, −2 otherwise) plus Gaussian noise. When the prompt's
//! decoration words disagree with the frame's planted words, a smooth
//! per-prompt bias field is added with amplitude proportional to the fraction
//! of planted words missing from the prompt. That term is what makes prompt
//! wording matter in simulation.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

use super::{check_prompt, BackendDescriptor, InferenceBackend, LogitMap};
use crate::embedding::EmbeddingVector;
use crate::error::Result;
use crate::scene::{classify_color, nearest, LabelGrid, Scene, PALETTE, VOID};
use crate::vocab::Role;

/// Pairs of class words the mock treats as visually related.
pub const DEFAULT_RELATED: &[(&str, &str)] = &[
    ("grass", "open-field"),
    ("grass", "vegetation"),
    ("grass", "garden"),
    ("dirt", "open-field"),
    ("garden", "vegetation"),
    ("tree", "vegetation"),
    ("tree", "garden"),
    ("sidewalk", "road"),
    ("building", "house"),
    ("road", "car"),
];

#[derive(Clone, Debug, PartialEq)]
pub struct AffinityTable {
    pub related: Vec<(String, String)>,
    pub matching: f32,
    pub related_logit: f32,
    pub other: f32,
}

impl Default for AffinityTable {
    fn default() -> Self {
        Self {
            related: DEFAULT_RELATED
                .iter()
                .map(|(a, b)| (a.to_string(), b.to_string()))
                .collect(),
            matching: 2.0,
            related_logit: 0.5,
            other: -2.0,
        }
    }
}

impl AffinityTable {
    /// Logit contribution for a pixel of class `label` under a prompt naming `prompt_class`.
    pub fn affinity(&self, label: Option<&str>, prompt_class: Option<&str>) -> f32 {
        match (label, prompt_class) {
            (Some(l), Some(p)) if l == p => self.matching,
            (Some(l), Some(p))
                if self
                    .related
                    .iter()
                    .any(|(a, b)| (a == l && b == p) || (a == p && b == l)) =>
            {
                self.related_logit
            }
            _ => self.other,
        }
    }

    /// Every class word the table can recognise in a prompt.
    pub fn known_classes(&self) -> BTreeSet<String> {
        PALETTE
            .iter()
            .map(|(n, _)| n.to_string())
            .chain(
                self.related
                    .iter()
                    .flat_map(|(a, b)| [a.clone(), b.clone()]),
            )
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MockConfig {
    pub seed: u64,
    pub embed_dim: usize,
    pub seg_resolution: (u32, u32),
    /// Relative weight of the per-image noise vector in image embeddings.
    pub embed_noise: f32,
    /// Std-dev of per-pixel logit noise.
    pub seg_noise: f32,
    /// Peak bias amplitude when no planted word appears in the prompt.
    pub mismatch_gain: f32,
    /// Lattice cells per side of the bias field.
    pub bias_cells: u32,
    pub affinity: AffinityTable,
}

impl MockConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            embed_dim: 512,
            seg_resolution: (64, 64),
            embed_noise: 0.25,
            seg_noise: 0.25,
            mismatch_gain: 4.0,
            bias_cells: 3,
            affinity: AffinityTable::default(),
        }
    }
}

pub struct MockBackend {
    cfg: MockConfig,
    descriptor: BackendDescriptor,
    known_classes: BTreeSet<String>,
}

impl MockBackend {
    pub fn new(cfg: MockConfig) -> Self {
        let mut descriptor = BackendDescriptor::mock(cfg.seed);
        descriptor.embed_dim = cfg.embed_dim;
        descriptor.seg_resolution = cfg.seg_resolution;
        let known_classes = cfg.affinity.known_classes();
        Self {
            cfg,
            descriptor,
            known_classes,
        }
    }

    pub fn config(&self) -> &MockConfig {
        &self.cfg
    }

    fn rng(&self, domain: &str, parts: &[&[u8]]) -> ChaCha8Rng {
        let mut h = Sha256::new();
        h.update(self.cfg.seed.to_le_bytes());
        h.update((domain.len() as u64).to_le_bytes());
        h.update(domain.as_bytes());
        for p in parts {
            h.update((p.len() as u64).to_le_bytes());
            h.update(p);
        }
        ChaCha8Rng::from_seed(h.finalize().into())
    }

    fn gaussian_vector(&self, rng: &mut ChaCha8Rng) -> Vec<f32> {
        (0..self.cfg.embed_dim)
            .map(|_| rng.sample::<f32, _>(StandardNormal))
            .collect()
    }

    /// Digest identifying a frame's pixels and annotation tags.
    fn scene_digest(scene: &Scene) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(scene.image.width().to_le_bytes());
        h.update(scene.image.height().to_le_bytes());
        h.update(scene.image.as_raw());
        if let Some(tags) = scene.tags() {
            for (role, word) in tags {
                h.update(role.as_str().as_bytes());
                h.update([0]);
                h.update(word.as_bytes());
                h.update([0]);
            }
        }
        h.finalize().into()
    }

    /// Class ids at segmentation resolution: annotation labels when present,
    /// otherwise nearest-palette classification of the pixels.
    fn labels_for(&self, scene: &Scene) -> LabelGrid {
        let (w, h) = self.cfg.seg_resolution;
        if let Some(labels) = scene.annotation.as_ref().and_then(|a| a.labels.as_ref()) {
            return labels.resized(w, h);
        }
        let classes: Vec<String> = PALETTE.iter().map(|(n, _)| n.to_string()).collect();
        let img = &scene.image;
        let mut ids = Vec::with_capacity(w as usize * h as usize);
        for y in 0..h {
            let sy = nearest(y, h, img.height());
            for x in 0..w {
                let sx = nearest(x, w, img.width());
                let class = classify_color(img.get_pixel(sx, sy).0);
                ids.push(classes.iter().position(|c| c == class).unwrap() as u16);
            }
        }
        LabelGrid::new(w, h, classes, ids).expect("sized above")
    }

    /// Fraction of the frame's planted words that appear in the prompt.
    pub fn context_match(scene: &Scene, prompt: &str) -> f32 {
        let Some(tags) = scene.tags().filter(|t| !t.is_empty()) else {
            return 1.0;
        };
        let prompt_tokens = tokens(prompt);
        let hits = tags
            .values()
            .filter(|w| {
                let wt = tokens(w);
                !wt.is_empty() && wt.iter().all(|t| prompt_tokens.contains(t))
            })
            .count();
        hits as f32 / tags.len() as f32
    }

    /// First prompt token naming a known class.
    fn prompt_class(&self, prompt: &str) -> Option<String> {
        tokens(prompt)
            .into_iter()
            .find(|t| self.known_classes.contains(t))
    }

    /// Smooth field in [-1, 1]: bilinear interpolation of a seeded lattice.
    fn bias_field(&self, rng: &mut ChaCha8Rng, w: u32, h: u32) -> Vec<f32> {
        let cells = self.cfg.bias_cells.max(1) as usize;
        let lattice: Vec<f32> = (0..(cells + 1) * (cells + 1))
            .map(|_| rng.gen_range(-1.0f32..=1.0))
            .collect();
        let at = |i: usize, j: usize| lattice[j * (cells + 1) + i];
        let mut out = Vec::with_capacity(w as usize * h as usize);
        for y in 0..h {
            let fy = (y as f32 + 0.5) / h as f32 * cells as f32;
            let j = (fy.floor() as usize).min(cells - 1);
            let ty = fy - j as f32;
            for x in 0..w {
                let fx = (x as f32 + 0.5) / w as f32 * cells as f32;
                let i = (fx.floor() as usize).min(cells - 1);
                let tx = fx - i as f32;
                let top = at(i, j) * (1.0 - tx) + at(i + 1, j) * tx;
                let bottom = at(i, j + 1) * (1.0 - tx) + at(i + 1, j + 1) * tx;
                out.push(top * (1.0 - ty) + bottom * ty);
            }
        }
        out
    }
}

/// Lower-case word tokens; hyphens stay inside words.
pub fn tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !(c.is_alphanumeric() || c == '-'))
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

impl InferenceBackend for MockBackend {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn embed_text(&self, text: &str) -> Result<EmbeddingVector> {
        check_prompt(text)?;
        let mut rng = self.rng("text", &[text.as_bytes()]);
        EmbeddingVector::normalized(self.gaussian_vector(&mut rng))
    }

    fn embed_image(&self, scene: &Scene) -> Result<EmbeddingVector> {
        scene.ensure_nonempty()?;
        let digest = Self::scene_digest(scene);
        let mut rng = self.rng("image", &[&digest]);
        let noise = self.gaussian_vector(&mut rng);
        let planted: Vec<&String> = scene
            .tags()
            .map(|t| t.values().collect())
            .unwrap_or_default();
        if planted.is_empty() {
            return EmbeddingVector::normalized(noise);
        }
        // Noise vector has expected norm 1 after this scaling.
        let scale = self.cfg.embed_noise / (self.cfg.embed_dim as f32).sqrt();
        let mut acc: Vec<f32> = noise.iter().map(|n| n * scale).collect();
        for word in planted {
            let e = self.embed_text(word)?;
            for (a, v) in acc.iter_mut().zip(e.values()) {
                *a += v;
            }
        }
        EmbeddingVector::normalized(acc)
    }

    fn segment(&self, scene: &Scene, prompt: &str) -> Result<LogitMap> {
        check_prompt(prompt)?;
        scene.ensure_nonempty()?;
        let (w, h) = self.cfg.seg_resolution;
        let labels = self.labels_for(scene);
        let class = self.prompt_class(prompt);
        let digest = Self::scene_digest(scene);
        let mut rng = self.rng("segment", &[&digest, prompt.as_bytes()]);

        let mismatch = 1.0 - Self::context_match(scene, prompt);
        let bias = if mismatch > 0.0 && self.cfg.mismatch_gain != 0.0 {
            Some(self.bias_field(&mut rng, w, h))
        } else {
            None
        };

        let per_class: Vec<f32> = (0..labels.classes.len())
            .map(|id| {
                self.cfg
                    .affinity
                    .affinity(labels.class_name(id as u16), class.as_deref())
            })
            .collect();
        let void = self.cfg.affinity.affinity(None, class.as_deref());
        let mut values = Vec::with_capacity(w as usize * h as usize);
        for (i, &id) in labels.ids.iter().enumerate() {
            let mut logit = if id == VOID {
                void
            } else {
                per_class[id as usize]
            };
            logit += self.cfg.seg_noise * rng.sample::<f32, _>(StandardNormal);
            if let Some(b) = &bias {
                logit += mismatch * self.cfg.mismatch_gain * b[i];
            }
            values.push(logit);
        }
        LogitMap::new(w, h, values)
    }

    fn caption(&self, scene: &Scene) -> Result<Option<String>> {
        let Some(ann) = &scene.annotation else {
            return Ok(None);
        };
        let Some(majority) = ann.majority() else {
            return Ok(None);
        };
        Ok(Some(match ann.tags.get(&Role::Environment) {
            Some(env) => format!("an aerial scene of mostly {majority}, {env}"),
            None => format!("an aerial scene of mostly {majority}"),
        }))
    }
}
