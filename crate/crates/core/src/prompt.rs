//! Per-frame prompt engineering.
//!
//! For every enabled description type the word whose text embedding is most
//! cosine-similar to the frame's image embedding is chosen, then each target
//! class is wrapped in the template `A {resolution} {frame} of {class} in
//! {environment}.`. Positives come first, negatives after, all sharing one
//! selection.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::backend::InferenceBackend;
use crate::embedding::{cosine_similarity, EmbeddingVector};
use crate::error::{Error, Result};
use crate::scene::Scene;
use crate::vocab::{DescriptionVocabulary, Role, TargetLists};

/// Baseline wording used by the original CLIP/CLIPSeg evaluations.
pub const DEFAULT_TEMPLATE: &str = "A photo of {}.";
/// Hand-tuned static aerial wording.
pub const DOVESEI_TEMPLATE: &str =
    "Aerial view, drone footage photo of {}, shade, shadows, low resolution.";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptMode {
    Default,
    Dovesei,
    Peace,
}

impl PromptMode {
    pub const ALL: [PromptMode; 3] = [PromptMode::Default, PromptMode::Dovesei, PromptMode::Peace];

    pub fn as_str(self) -> &'static str {
        match self {
            PromptMode::Default => "default",
            PromptMode::Dovesei => "dovesei",
            PromptMode::Peace => "peace",
        }
    }
}

impl fmt::Display for PromptMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for PromptMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "default" => Ok(PromptMode::Default),
            "dovesei" => Ok(PromptMode::Dovesei),
            "peace" => Ok(PromptMode::Peace),
            other => Err(Error::Validation(format!(
                "unknown prompt mode '{other}' (expected default, dovesei or peace)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PromptConfig {
    pub mode: PromptMode,
    /// Regenerate prompts every `cadence` frames.
    pub cadence: u32,
    /// Number of environment words kept in the template.
    pub env_top_k: usize,
    /// Score words against `"word, caption"` instead of the bare word.
    pub caption_fusion: bool,
    /// Collapse the engineered template to the baseline `A photo of {}.`.
    pub plain_template: bool,
}

impl Default for PromptConfig {
    fn default() -> Self {
        Self {
            mode: PromptMode::Peace,
            cadence: 10,
            env_top_k: 1,
            caption_fusion: false,
            plain_template: false,
        }
    }
}

impl PromptConfig {
    pub fn with_mode(mode: PromptMode) -> Self {
        Self {
            mode,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.cadence == 0 {
            return Err(Error::Validation(
                "prompt.cadence must be at least 1".into(),
            ));
        }
        if self.env_top_k == 0 {
            return Err(Error::Validation(
                "prompt.env_top_k must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredWord {
    pub word: String,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoleChoice {
    pub role: Role,
    /// Best first. One entry except for the environment role with top-k > 1.
    pub words: Vec<ScoredWord>,
}

/// Chosen word(s) per enabled description type, in vocabulary order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WordSelection {
    pub choices: Vec<RoleChoice>,
}

impl WordSelection {
    pub fn get(&self, role: &Role) -> Option<&RoleChoice> {
        self.choices.iter().find(|c| &c.role == role)
    }

    pub fn best(&self, role: &Role) -> Option<&str> {
        self.get(role)
            .and_then(|c| c.words.first())
            .map(|w| w.word.as_str())
    }

    /// Convenience constructor for hand-built selections.
    pub fn from_words(resolution: &str, frame: &str, environment: &[&str]) -> Self {
        let one = |role: Role, w: &str| RoleChoice {
            role,
            words: vec![ScoredWord {
                word: w.to_string(),
                score: 1.0,
            }],
        };
        Self {
            choices: vec![
                one(Role::Resolution, resolution),
                one(Role::Frame, frame),
                RoleChoice {
                    role: Role::Environment,
                    words: environment
                        .iter()
                        .map(|w| ScoredWord {
                            word: w.to_string(),
                            score: 1.0,
                        })
                        .collect(),
                },
            ],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EngineeredPrompt {
    pub text: String,
    pub class_word: String,
    pub polarity: Polarity,
}

/// All prompts for one frame: `x` positives followed by `y` negatives.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PromptSet {
    pub mode: PromptMode,
    pub prompts: Vec<EngineeredPrompt>,
    pub x: usize,
    pub y: usize,
    /// Absent for the static modes.
    pub selection: Option<WordSelection>,
    pub frame_index: u64,
}

impl PromptSet {
    pub fn len(&self) -> usize {
        self.prompts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prompts.is_empty()
    }

    pub fn texts(&self) -> impl Iterator<Item = &str> {
        self.prompts.iter().map(|p| p.text.as_str())
    }
}

/// Index of the best-scoring candidate; ties keep the earlier index.
fn argmax(scores: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &s) in scores.iter().enumerate() {
        if best.is_none_or(|b| s > scores[b]) {
            best = Some(i);
        }
    }
    best
}

fn score_type(image: &EmbeddingVector, embeddings: &[EmbeddingVector]) -> Result<Vec<f64>> {
    embeddings
        .iter()
        .map(|e| cosine_similarity(image, e))
        .collect()
}

fn choose(role: &Role, words: &[String], scores: &[f64], env_top_k: usize) -> RoleChoice {
    let keep = if *role == Role::Environment {
        env_top_k.max(1)
    } else {
        1
    };
    let mut order: Vec<usize> = (0..words.len()).collect();
    if keep == 1 {
        order = argmax(scores).into_iter().collect();
    } else {
        // stable: equal scores keep file order
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
        order.truncate(keep);
    }
    RoleChoice {
        role: role.clone(),
        words: order
            .into_iter()
            .map(|i| ScoredWord {
                word: words[i].clone(),
                score: scores[i],
            })
            .collect(),
    }
}

/// Best word per enabled type by cosine similarity to `image_embedding`.
pub fn select_words(
    image_embedding: &EmbeddingVector,
    vocab: &DescriptionVocabulary,
    env_top_k: usize,
) -> Result<WordSelection> {
    let mut choices = Vec::new();
    for t in vocab.types.iter().filter(|t| t.enabled) {
        if !t.is_embedded() {
            return Err(Error::Contract(format!(
                "role '{}' has not been embedded",
                t.role
            )));
        }
        let scores = score_type(image_embedding, &t.embeddings)?;
        choices.push(choose(&t.role, &t.words, &scores, env_top_k));
    }
    Ok(WordSelection { choices })
}

/// Like [`select_words`], scoring each word as `"word, caption"`.
pub fn select_words_with_caption(
    image_embedding: &EmbeddingVector,
    vocab: &DescriptionVocabulary,
    caption: &str,
    backend: &dyn InferenceBackend,
    env_top_k: usize,
) -> Result<WordSelection> {
    let mut choices = Vec::new();
    for t in vocab.types.iter().filter(|t| t.enabled) {
        let embeddings = t
            .words
            .iter()
            .map(|w| backend.embed_text(&format!("{w}, {caption}")))
            .collect::<Result<Vec<_>>>()?;
        let scores = score_type(image_embedding, &embeddings)?;
        choices.push(choose(&t.role, &t.words, &scores, env_top_k));
    }
    Ok(WordSelection { choices })
}

fn fill(template: &str, class_word: &str) -> String {
    template.replacen("{}", class_word, 1)
}

/// Instantiates the engineered template for one class word.
///
/// Words of enabled roles outside the template follow the environment words.
pub fn build_prompt(
    selection: &WordSelection,
    class_word: &str,
    polarity: Polarity,
) -> Result<EngineeredPrompt> {
    if class_word.trim().is_empty() {
        return Err(Error::Validation("empty class word".into()));
    }
    let slot = |role: Role| {
        selection
            .best(&role)
            .ok_or_else(|| Error::Contract(format!("selection lacks role '{role}'")))
    };
    let resolution = slot(Role::Resolution)?;
    let frame = slot(Role::Frame)?;
    slot(Role::Environment)?;
    let environment = selection.get(&Role::Environment).into_iter();
    let extra = selection
        .choices
        .iter()
        .filter(|c| !Role::TEMPLATE.contains(&c.role));
    let ordered: Vec<&str> = environment
        .chain(extra)
        .flat_map(|c| c.words.iter().map(|w| w.word.as_str()))
        .collect();
    Ok(EngineeredPrompt {
        text: format!(
            "A {resolution} {frame} of {class_word} in {}.",
            ordered.join(", ")
        ),
        class_word: class_word.to_string(),
        polarity,
    })
}

/// A fixed-template prompt (baseline or static aerial wording).
pub fn static_prompt(
    mode: PromptMode,
    class_word: &str,
    polarity: Polarity,
) -> Result<EngineeredPrompt> {
    if class_word.trim().is_empty() {
        return Err(Error::Validation("empty class word".into()));
    }
    let template = match mode {
        PromptMode::Default => DEFAULT_TEMPLATE,
        PromptMode::Dovesei => DOVESEI_TEMPLATE,
        PromptMode::Peace => {
            return Err(Error::Contract(
                "peace prompts need a word selection".into(),
            ))
        }
    };
    Ok(EngineeredPrompt {
        text: fill(template, class_word),
        class_word: class_word.to_string(),
        polarity,
    })
}

/// Vocabulary, targets and settings needed to turn frames into prompt sets.
#[derive(Clone, Debug)]
pub struct PromptEngine {
    pub vocab: DescriptionVocabulary,
    pub targets: TargetLists,
    pub config: PromptConfig,
}

impl PromptEngine {
    pub fn new(
        vocab: DescriptionVocabulary,
        targets: TargetLists,
        config: PromptConfig,
    ) -> Result<Self> {
        config.validate()?;
        targets.validate()?;
        Ok(Self {
            vocab,
            targets,
            config,
        })
    }

    /// Word selection for one frame (peace mode only).
    pub fn select(&self, scene: &Scene, backend: &dyn InferenceBackend) -> Result<WordSelection> {
        let image = backend.embed_image(scene)?;
        if self.config.caption_fusion {
            if let Some(caption) = backend.caption(scene)? {
                return select_words_with_caption(
                    &image,
                    &self.vocab,
                    &caption,
                    backend,
                    self.config.env_top_k,
                );
            }
        }
        select_words(&image, &self.vocab, self.config.env_top_k)
    }

    /// Builds the full prompt set for a frame.
    pub fn generate(
        &self,
        scene: &Scene,
        backend: &dyn InferenceBackend,
        frame_index: u64,
    ) -> Result<PromptSet> {
        let mode = self.config.mode;
        let selection = match mode {
            PromptMode::Peace if !self.config.plain_template => Some(self.select(scene, backend)?),
            _ => None,
        };
        let make = |class: &String, polarity| match (&selection, mode) {
            (Some(sel), _) => build_prompt(sel, class, polarity),
            (None, PromptMode::Peace) => static_prompt(PromptMode::Default, class, polarity),
            (None, m) => static_prompt(m, class, polarity),
        };
        let mut prompts = Vec::with_capacity(self.targets.x() + self.targets.y());
        for c in &self.targets.positives {
            prompts.push(make(c, Polarity::Positive)?);
        }
        for c in &self.targets.negatives {
            prompts.push(make(c, Polarity::Negative)?);
        }
        Ok(PromptSet {
            mode,
            prompts,
            x: self.targets.x(),
            y: self.targets.y(),
            selection,
            frame_index,
        })
    }

    /// Reuses `cache` unless the cadence is due, the machine state changed, or
    /// there is no cache yet. Returns the set and whether it was regenerated.
    pub fn maybe_regenerate(
        &self,
        cache: Option<&PromptSet>,
        scene: &Scene,
        backend: &dyn InferenceBackend,
        frame_index: u64,
        state_changed: bool,
    ) -> Result<(PromptSet, bool)> {
        let due = frame_index.is_multiple_of(u64::from(self.config.cadence));
        match cache {
            Some(c) if !due && !state_changed => {
                let mut c = c.clone();
                c.frame_index = frame_index;
                Ok((c, false))
            }
            _ => Ok((self.generate(scene, backend, frame_index)?, true)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::mock::{MockBackend, MockConfig};
    use crate::scene::Annotation;
    use crate::vocab::DescriptionType;
    use image::RgbImage;

    fn backend() -> MockBackend {
        MockBackend::new(MockConfig::with_seed(11))
    }

    fn vocab(b: &MockBackend) -> DescriptionVocabulary {
        let mut v = DescriptionVocabulary::builtin();
        v.embed(b).unwrap();
        v
    }

    fn scene(res: &str, frame: &str, env: &str) -> Scene {
        Scene::annotated(
            RgbImage::from_pixel(4, 4, image::Rgb([1, 2, 3])),
            Annotation::with_tags([
                (Role::Resolution, res),
                (Role::Frame, frame),
                (Role::Environment, env),
            ]),
        )
    }

    #[test]
    fn planted_words_selected_and_match_exhaustive_oracle() {
        let b = backend();
        let v = vocab(&b);
        let s = scene("blurred", "artwork", "heat");
        let img = b.embed_image(&s).unwrap();
        let sel = select_words(&img, &v, 1).unwrap();
        assert_eq!(sel.best(&Role::Resolution), Some("blurred"));
        assert_eq!(sel.best(&Role::Frame), Some("artwork"));
        assert_eq!(sel.best(&Role::Environment), Some("heat"));
        // Exhaustive scoring by direct dot products of freshly embedded words.
        for role in Role::TEMPLATE {
            let t = v.get(&role).unwrap();
            let mut best = (String::new(), f64::MIN);
            for w in &t.words {
                let e = b.embed_text(w).unwrap();
                let dot: f64 = e
                    .values()
                    .iter()
                    .zip(img.values())
                    .map(|(a, c)| f64::from(*a) * f64::from(*c))
                    .sum();
                if dot > best.1 {
                    best = (w.clone(), dot);
                }
            }
            assert_eq!(sel.best(&role), Some(best.0.as_str()));
        }
        // disabled roles are skipped
        assert!(sel.get(&Role::Aerial).is_none());
    }

    #[test]
    fn singleton_type_selects_its_word() {
        let b = backend();
        let mut v = DescriptionVocabulary {
            types: vec![DescriptionType::new(
                Role::Environment,
                vec!["sunny".into()],
            )],
            class_slot_marker: "{}".into(),
        };
        v.embed(&b).unwrap();
        let img = b.embed_image(&scene("sharp", "map", "dark")).unwrap();
        let sel = select_words(&img, &v, 1).unwrap();
        let c = sel.get(&Role::Environment).unwrap();
        assert_eq!(c.words[0].word, "sunny");
        let expected = cosine_similarity(&img, &v.types[0].embeddings[0]).unwrap();
        assert_eq!(c.words[0].score, expected);
    }

    #[test]
    fn ties_go_to_earlier_word() {
        let b = backend();
        let e = b.embed_text("twin").unwrap();
        let mut t = DescriptionType::new(Role::Frame, vec!["first".into(), "second".into()]);
        t.embeddings = vec![e.clone(), e.clone()];
        let v = DescriptionVocabulary {
            types: vec![t],
            class_slot_marker: "{}".into(),
        };
        let sel = select_words(&e, &v, 1).unwrap();
        assert_eq!(sel.best(&Role::Frame), Some("first"));
    }

    #[test]
    fn environment_top_k_descending() {
        let b = backend();
        let v = vocab(&b);
        let img = b.embed_image(&scene("rendered", "image", "sunny")).unwrap();
        let sel = select_words(&img, &v, 3).unwrap();
        let env = sel.get(&Role::Environment).unwrap();
        assert_eq!(env.words.len(), 3);
        assert_eq!(env.words[0].word, "sunny");
        assert!(env.words.windows(2).all(|w| w[0].score >= w[1].score));
        assert_eq!(sel.get(&Role::Frame).unwrap().words.len(), 1);
    }

    #[test]
    fn unembedded_vocabulary_rejected() {
        let b = backend();
        let v = DescriptionVocabulary::builtin();
        let img = b.embed_text("x").unwrap();
        assert!(matches!(select_words(&img, &v, 1), Err(Error::Contract(_))));
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let b = backend();
        let v = vocab(&b);
        let img = EmbeddingVector::from_raw(vec![1.0, 0.0]);
        assert!(matches!(
            select_words(&img, &v, 1),
            Err(Error::Computation(_))
        ));
    }

    #[test]
    fn template_instantiation() {
        let sel = WordSelection::from_words("rendered", "image", &["sunny"]);
        let p = build_prompt(&sel, "grass", Polarity::Positive).unwrap();
        assert_eq!(p.text, "A rendered image of grass in sunny.");

        let sel = WordSelection::from_words("blurred", "artwork", &["heat", "heat-map", "piece"]);
        let p = build_prompt(&sel, "dirt", Polarity::Positive).unwrap();
        assert_eq!(
            p.text,
            "A blurred artwork of dirt in heat, heat-map, piece."
        );

        let neg = build_prompt(&sel, "water", Polarity::Negative).unwrap();
        assert_eq!(neg.polarity, Polarity::Negative);
        assert_eq!(
            neg.text,
            "A blurred artwork of water in heat, heat-map, piece."
        );

        assert!(matches!(
            build_prompt(&sel, " ", Polarity::Positive),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn extra_roles_follow_environment() {
        let mut sel = WordSelection::from_words("sharp", "photo", &["sunny"]);
        sel.choices.insert(
            0,
            RoleChoice {
                role: Role::Aerial,
                words: vec![ScoredWord {
                    word: "overhead".into(),
                    score: 0.3,
                }],
            },
        );
        let p = build_prompt(&sel, "grass", Polarity::Positive).unwrap();
        assert_eq!(p.text, "A sharp photo of grass in sunny, overhead.");
    }

    #[test]
    fn static_modes() {
        assert_eq!(
            static_prompt(PromptMode::Default, "grass", Polarity::Positive)
                .unwrap()
                .text,
            "A photo of grass."
        );
        assert_eq!(
            static_prompt(PromptMode::Dovesei, "grass", Polarity::Positive)
                .unwrap()
                .text,
            "Aerial view, drone footage photo of grass, shade, shadows, low resolution."
        );
        assert!(static_prompt(PromptMode::Peace, "grass", Polarity::Positive).is_err());
    }

    fn engine(b: &MockBackend, mode: PromptMode, targets: TargetLists) -> PromptEngine {
        PromptEngine::new(vocab(b), targets, PromptConfig::with_mode(mode)).unwrap()
    }

    #[test]
    fn prompt_set_ordering_and_counts() {
        let b = backend();
        let e = engine(&b, PromptMode::Peace, TargetLists::builtin());
        let s = scene("sharp", "photo", "snow");
        let set = e.generate(&s, &b, 0).unwrap();
        assert_eq!((set.len(), set.x, set.y), (13, 6, 7));
        assert!(set.prompts[..6]
            .iter()
            .all(|p| p.polarity == Polarity::Positive));
        assert!(set.prompts[6..]
            .iter()
            .all(|p| p.polarity == Polarity::Negative));
        assert_eq!(set.prompts[0].text, "A sharp photo of grass in snow.");

        let pos_only = engine(
            &b,
            PromptMode::Peace,
            TargetLists::builtin().positives_only(),
        );
        let set2 = pos_only.generate(&s, &b, 0).unwrap();
        assert_eq!(set2.prompts[..], set.prompts[..6]);
        assert_eq!(set2.y, 0);

        let again = e.generate(&s, &b, 5).unwrap();
        assert_eq!(again.prompts, set.prompts);
        assert_eq!(again.selection, set.selection);
        assert_eq!(again.frame_index, 5);
    }

    #[test]
    fn plain_template_reduces_to_baseline() {
        let b = backend();
        let mut e = engine(&b, PromptMode::Peace, TargetLists::builtin());
        e.config.plain_template = true;
        let set = e.generate(&scene("sharp", "photo", "snow"), &b, 0).unwrap();
        assert_eq!(set.prompts[0].text, "A photo of grass.");
        assert!(set.selection.is_none());
    }

    #[test]
    fn caption_fusion_path_runs() {
        let b = backend();
        let mut e = engine(&b, PromptMode::Peace, TargetLists::builtin());
        e.config.caption_fusion = true;
        let mut s = scene("sharp", "photo", "snow");
        s.annotation.as_mut().unwrap().majority_class = Some("grass".into());
        let set = e.generate(&s, &b, 0).unwrap();
        assert_eq!(set.len(), 13);
        assert!(set.prompts.iter().all(|p| p.text.starts_with("A ")));
    }

    #[test]
    fn cadence_and_forced_refresh() {
        let b = backend();
        let mut e = engine(&b, PromptMode::Peace, TargetLists::builtin());
        let s = scene("sharp", "photo", "snow");
        let run = |e: &PromptEngine, frames: u64, force_at: Option<u64>| {
            let mut cache: Option<PromptSet> = None;
            let mut regenerated = Vec::new();
            for f in 0..frames {
                let (set, r) = e
                    .maybe_regenerate(cache.as_ref(), &s, &b, f, force_at == Some(f))
                    .unwrap();
                assert_eq!(set.frame_index, f);
                if r {
                    regenerated.push(f);
                }
                cache = Some(set);
            }
            regenerated
        };
        e.config.cadence = 10;
        assert_eq!(run(&e, 10, None), vec![0]);
        assert_eq!(run(&e, 10, Some(4)), vec![0, 4]);
        e.config.cadence = 1;
        assert_eq!(run(&e, 5, None), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn config_validation() {
        let c = PromptConfig {
            cadence: 0,
            ..PromptConfig::default()
        };
        assert!(c.validate().is_err());
        assert_eq!("peace".parse::<PromptMode>().unwrap(), PromptMode::Peace);
        assert!("fancy".parse::<PromptMode>().is_err());
        let parsed: PromptConfig =
            serde_json::from_str(r#"{"mode":"dovesei","cadence":3}"#).unwrap();
        assert_eq!(parsed.mode, PromptMode::Dovesei);
        assert_eq!(parsed.env_top_k, 1);
        assert!(serde_json::from_str::<PromptConfig>(r#"{"cadance":3}"#).is_err());
    }
}
