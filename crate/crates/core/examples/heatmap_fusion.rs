//! Fuse positive and negative segmentations into a safety heatmap and
//! write it as a 16-bit PGM.
//!
//! cargo run --example heatmap_fusion -- [out.pgm]

use std::collections::BTreeMap;

use peace::backend::mock::{MockBackend, MockConfig};
use peace::fusion::{fuse_pipeline, CollapseMode};
use peace::metrics::{binarize, iou, BinaryMask, DEFAULT_TAU};
use peace::prompt::{PromptConfig, PromptEngine, PromptMode};
use peace::sim::synth;
use peace::vocab::{DescriptionVocabulary, Role, TargetLists};

fn main() -> peace::Result<()> {
    let out = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "heatmap.pgm".into());
    let backend = MockBackend::new(MockConfig::with_seed(2));
    let mut vocab = DescriptionVocabulary::builtin();
    vocab.embed(&backend)?;
    let targets = TargetLists::builtin();
    let engine = PromptEngine::new(
        vocab,
        targets.clone(),
        PromptConfig::with_mode(PromptMode::Peace),
    )?;

    let tags = BTreeMap::from([
        (Role::Resolution, "low-resolution".to_string()),
        (Role::Frame, "photo".to_string()),
        (Role::Environment, "sunny".to_string()),
    ]);
    let scene = synth::labeled_scene(11, 64, &tags);
    let labels = scene
        .annotation
        .as_ref()
        .and_then(|a| a.labels.clone())
        .expect("labelled");
    let gt = BinaryMask::from_labels(&labels, targets.positives.iter().map(String::as_str));

    let prompts = engine.generate(&scene, &backend, 0)?;
    for collapse in [CollapseMode::Sum, CollapseMode::Max] {
        let heatmap = fuse_pipeline(&scene, &prompts, &backend, collapse)?;
        let score = iou(&binarize(&heatmap, DEFAULT_TAU)?, &gt)?;
        println!(
            "{collapse:?}: mean {:.3}, IoU vs safe labels {score:.3}",
            heatmap.mean()
        );
        if collapse == CollapseMode::Sum {
            std::fs::write(&out, heatmap.to_pgm()).expect("write heatmap");
        }
    }
    println!("wrote {out}");
    Ok(())
}
