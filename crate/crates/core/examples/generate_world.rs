//! Write a domain-shift world (ortho PNG, label PNG, manifest) and print
//! its tiles.
//!
//! cargo run --example generate_world -- <out-dir> [seed]

use peace::sim::{synth, World};

fn main() -> peace::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = args.next().unwrap_or_else(|| "world".into());
    let seed = args.next().map_or(0, |s| s.parse().expect("integer seed"));

    let spec = synth::DomainShiftSpec {
        wrong_fraction: 0.5,
        ..Default::default()
    };
    let generated = synth::domain_shift_world(seed, &spec);
    generated.world.save(&dir)?;

    let world = World::load(&dir)?;
    println!(
        "{} ({:.0} x {:.0} m)",
        world.name,
        world.width_m(),
        world.height_m()
    );
    for (i, zone) in world.zones.iter().enumerate() {
        let env = zone.tags.values().cloned().collect::<Vec<_>>().join(", ");
        println!("  tile {i} at ({}, {}): {env}", zone.x, zone.y);
    }
    println!(
        "static prompt wrong on {} tiles",
        generated.static_wrong_tiles
    );
    Ok(())
}
