//! Prompt sets for one tagged frame under each prompt mode.
//!
//! cargo run --example prompt_generation

use std::collections::BTreeMap;

use peace::backend::mock::{MockBackend, MockConfig};
use peace::prompt::{PromptConfig, PromptEngine, PromptMode};
use peace::sim::synth;
use peace::vocab::{DescriptionVocabulary, Role, TargetLists};

fn main() -> peace::Result<()> {
    let backend = MockBackend::new(MockConfig::with_seed(1));
    let mut vocab = DescriptionVocabulary::builtin();
    vocab.embed(&backend)?;

    let tags = BTreeMap::from([
        (Role::Resolution, "grainy".to_string()),
        (Role::Frame, "screenshot".to_string()),
        (Role::Environment, "foggy".to_string()),
    ]);
    let scene = synth::labeled_scene(7, 64, &tags);

    for mode in PromptMode::ALL {
        let engine = PromptEngine::new(
            vocab.clone(),
            TargetLists::builtin(),
            PromptConfig::with_mode(mode),
        )?;
        let set = engine.generate(&scene, &backend, 0)?;
        println!("== {mode}");
        if let Some(sel) = &set.selection {
            for c in &sel.choices {
                println!(
                    "  {:<12} {} ({:.3})",
                    c.role.as_str(),
                    c.words[0].word,
                    c.words[0].score
                );
            }
        }
        for text in set.texts().take(3) {
            println!("  {text}");
        }
    }
    Ok(())
}
