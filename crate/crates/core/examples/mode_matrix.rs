//! Paired comparison of the three prompt modes on domain-shift worlds.
//!
//! cargo run --release --example mode_matrix -- [worlds] [starts]

use peace::backend::mock::{MockBackend, MockConfig};
use peace::fusion::CollapseMode;
use peace::metrics::AggregateReport;
use peace::policy::PolicyConfig;
use peace::prompt::{PromptConfig, PromptEngine, PromptMode};
use peace::sim::{run_matrix, synth, SimConfig};
use peace::vocab::{DescriptionVocabulary, TargetLists};

fn main() -> peace::Result<()> {
    let mut args = std::env::args()
        .skip(1)
        .map(|a| a.parse::<usize>().expect("integer argument"));
    let n_worlds = args.next().unwrap_or(2);
    let starts = args.next().unwrap_or(2);

    let spec = synth::DomainShiftSpec {
        wrong_fraction: 0.5,
        ..Default::default()
    };
    let worlds: Vec<_> = (0..n_worlds as u64)
        .map(|s| synth::domain_shift_world(s, &spec).world)
        .collect();
    let backend = MockBackend::new(MockConfig::with_seed(4));
    let mut vocab = DescriptionVocabulary::builtin();
    vocab.embed(&backend)?;
    let engine = PromptEngine::new(vocab, TargetLists::builtin(), PromptConfig::default())?;

    let result = run_matrix(
        &worlds,
        &backend,
        &engine,
        &PolicyConfig::default(),
        &SimConfig::default(),
        CollapseMode::Sum,
        &PromptMode::ALL,
        starts,
        9,
    )?;
    print!(
        "{}",
        AggregateReport::new(result.seed, result.summaries, Vec::new()).to_table()
    );
    Ok(())
}
