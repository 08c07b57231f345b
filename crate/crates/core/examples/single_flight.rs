//! One simulated descent over a road world with a few grass patches.
//!
//! cargo run --release --example single_flight

use peace::backend::mock::{MockBackend, MockConfig};
use peace::fusion::CollapseMode;
use peace::policy::PolicyConfig;
use peace::prompt::{PromptConfig, PromptEngine, PromptMode};
use peace::sim::{run_episode, synth, EpisodeSetup, SimConfig};
use peace::vocab::{DescriptionVocabulary, TargetLists};

fn main() -> peace::Result<()> {
    let world = synth::disks(
        "patches",
        300,
        300,
        1.0,
        "road",
        &[
            synth::Disk {
                cx: 190.0,
                cy: 120.0,
                r: 18.0,
                class: "grass".into(),
            },
            synth::Disk {
                cx: 80.0,
                cy: 220.0,
                r: 14.0,
                class: "garden".into(),
            },
        ],
    );
    let backend = MockBackend::new(MockConfig::with_seed(3));
    let mut vocab = DescriptionVocabulary::builtin();
    vocab.embed(&backend)?;
    let engine = PromptEngine::new(
        vocab,
        TargetLists::builtin(),
        PromptConfig::with_mode(PromptMode::Peace),
    )?;
    let setup = EpisodeSetup {
        world: &world,
        backend: &backend,
        engine: &engine,
        policy: &PolicyConfig::default(),
        sim: &SimConfig::default(),
        collapse: CollapseMode::Sum,
    };
    let ep = run_episode(&setup, (150.0, 150.0), 42)?;
    let r = &ep.result;
    let end = r.path.last().expect("path has the start pose");
    println!(
        "{}: {} after {:.1} s, {:.1} m flown, ended at ({:.1}, {:.1}, {:.1} m)",
        r.reason.as_str(),
        if r.success { "success" } else { "failure" },
        r.elapsed_s,
        r.horizontal_distance_m,
        end.x,
        end.y,
        end.altitude
    );
    let mut last = None;
    for row in &ep.trace {
        if last != Some(row.state) {
            println!(
                "  t={:>6.1}s alt={:>5.1} {}",
                row.t, row.altitude, row.state
            );
            last = Some(row.state);
        }
    }
    Ok(())
}
