//! mIoU of each prompt mode on a synthetic labelled suite, with and
//! without negative prompts, sharp and blurred.
//!
//! cargo run --release --example miou_eval -- [count]

use peace::backend::mock::{MockBackend, MockConfig};
use peace::fusion::CollapseMode;
use peace::metrics::{
    blur_scene, suite_miou, synthetic_suite, AggregateReport, MiouEntry, BLUR_SIGMA, DEFAULT_TAU,
};
use peace::prompt::{PromptConfig, PromptEngine, PromptMode};
use peace::vocab::{DescriptionVocabulary, TargetLists};

fn main() -> peace::Result<()> {
    let count = std::env::args()
        .nth(1)
        .map_or(30, |a| a.parse().expect("integer count"));
    let backend = MockBackend::new(MockConfig::with_seed(5));
    let mut vocab = DescriptionVocabulary::builtin();
    vocab.embed(&backend)?;
    let sharp = synthetic_suite(&vocab, count, 64, 1);
    let blurred: Vec<_> = sharp.iter().map(|s| blur_scene(s, BLUR_SIGMA)).collect();

    let mut entries = Vec::new();
    for mode in PromptMode::ALL {
        let full = PromptEngine::new(
            vocab.clone(),
            TargetLists::builtin(),
            PromptConfig::with_mode(mode),
        )?;
        let mut pos_only = full.clone();
        pos_only.targets = pos_only.targets.positives_only();
        for (name, scenes) in [("sharp", &sharp), ("blurred", &blurred)] {
            for (suffix, engine) in [("", &full), (", positives only", &pos_only)] {
                entries.push(MiouEntry {
                    dataset: format!("{name}{suffix}"),
                    mode,
                    value: suite_miou(scenes, &backend, engine, CollapseMode::Sum, DEFAULT_TAU)?,
                });
            }
        }
    }
    print!(
        "{}",
        AggregateReport::new(1, Vec::new(), entries).to_table()
    );
    Ok(())
}
