//! Acceptance gate. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any fails.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::time::{Duration, Instant};

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use peace::backend::mock::{MockBackend, MockConfig};
use peace::backend::{InferenceBackend, LogitMap, MODEL_DIR_ENV};
use peace::cli::{self, CommonArgs, EvalOptions, WorldKind};
use peace::embedding::EmbeddingVector;
use peace::fusion::{
    drop_negatives, fuse_stack, softmax_fuse, CollapseMode, LogitStack, SafetyHeatmap,
};
use peace::metrics::{self, iou, miou, BinaryMask};
use peace::policy::{LandingPolicy, LandingTarget, MachineState, Observation, PolicyConfig};
use peace::prompt::{select_words, PromptConfig, PromptEngine, PromptMode};
use peace::scene::Annotation;
use peace::sim::{
    self, run_episode, run_matrix, start_grid, synth, EndReason, EpisodeSetup, SimConfig,
};
use peace::vocab::{DescriptionType, DescriptionVocabulary, Role, TargetLists};

const UNITY_TOL: f64 = 1e-6;
const SHIFT_TOL: f64 = 1e-9;
const BRUTE_TOL: f64 = 1e-9;
const IOU_TOL: f64 = 1e-12;
const RECOVERY_MIN: f64 = 0.95;
const SHIFT_GAIN_MIN: f64 = 1.30;
const DOMAIN_SHIFT_SEEDS: u64 = 50;
const FUZZ_STEPS: usize = 10_000;

type Outcome = Result<String, String>;
type Criterion = (&'static str, Duration, fn() -> Outcome);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn mock(seed: u64) -> MockBackend {
    MockBackend::new(MockConfig::with_seed(seed))
}

fn embedded_vocab(b: &dyn InferenceBackend) -> DescriptionVocabulary {
    let mut v = DescriptionVocabulary::builtin();
    v.embed(b).expect("builtin vocabulary embeds");
    v
}

fn engine(b: &dyn InferenceBackend, mode: PromptMode) -> PromptEngine {
    PromptEngine::new(
        embedded_vocab(b),
        TargetLists::builtin(),
        PromptConfig::with_mode(mode),
    )
    .expect("builtin engine")
}

fn random_stack(rng: &mut ChaCha8Rng, k: usize, w: u32, h: u32) -> LogitStack {
    let channels = (0..k)
        .map(|_| {
            let v = (0..w * h).map(|_| rng.gen_range(-8.0f32..8.0)).collect();
            LogitMap::new(w, h, v).unwrap()
        })
        .collect();
    LogitStack::new(channels).unwrap()
}

fn fusion_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst_unity: f64 = 0.0;
    for k in [1usize, 2, 5, 13] {
        for _ in 0..20 {
            let stack = random_stack(&mut rng, k, 24, 16);
            let fused = softmax_fuse(&stack).map_err(|e| e.to_string())?;
            for p in 0..(24 * 16) as usize {
                let s: f64 = fused.channels.iter().map(|c| c[p]).sum();
                worst_unity = worst_unity.max((s - 1.0).abs());
            }
            for x in 1..=k {
                let pos = drop_negatives(&fused, x, k - x).map_err(|e| e.to_string())?;
                let bits = |c: &[Vec<f64>]| -> Vec<Vec<u64>> {
                    c.iter()
                        .map(|ch| ch.iter().map(|v| v.to_bits()).collect())
                        .collect()
                };
                check(bits(&pos.channels) == bits(&fused.channels[..x]), || {
                    format!("slice mismatch at K={k}, X={x}")
                })?;
            }
        }
    }
    check(worst_unity <= UNITY_TOL, || {
        format!("partition of unity off by {worst_unity:e}")
    })?;

    let mut worst_shift: f64 = 0.0;
    for _ in 0..50 {
        let k = rng.gen_range(2..=13);
        let stack = random_stack(&mut rng, k, 8, 8);
        let shifted = LogitStack::new(
            stack
                .channels
                .iter()
                .map(|m| {
                    let v = m
                        .values
                        .iter()
                        .enumerate()
                        .map(|(i, &l)| l + (i % 7) as f32 * 3.0 - 9.0)
                        .collect();
                    LogitMap::new(8, 8, v).unwrap()
                })
                .collect(),
        )
        .unwrap();
        let a = softmax_fuse(&stack).unwrap();
        let b = softmax_fuse(&shifted).unwrap();
        for (ca, cb) in a.channels.iter().zip(&b.channels) {
            for (va, vb) in ca.iter().zip(cb) {
                worst_shift = worst_shift.max((va - vb).abs());
            }
        }
    }
    check(worst_shift <= SHIFT_TOL, || {
        format!("shift changed output by {worst_shift:e}")
    })?;

    // independent oracle: plain exponentials on a 2x2 map
    let mut worst_brute: f64 = 0.0;
    for _ in 0..200 {
        let k = rng.gen_range(1..=6);
        let x = rng.gen_range(1..=k);
        let stack = random_stack(&mut rng, k, 2, 2);
        for mode in [CollapseMode::Sum, CollapseMode::Max] {
            let hm = fuse_stack(&stack, x, k - x, mode).unwrap();
            for p in 0..4usize {
                let e: Vec<f64> = stack
                    .channels
                    .iter()
                    .map(|c| f64::from(c.values[p]).exp())
                    .collect();
                let z: f64 = e.iter().sum();
                let probs: Vec<f64> = e.iter().map(|v| v / z).collect();
                let want = match mode {
                    CollapseMode::Sum => probs[..x].iter().sum::<f64>(),
                    CollapseMode::Max => probs[..x].iter().cloned().fold(f64::MIN, f64::max),
                };
                worst_brute = worst_brute.max((hm.values[p] - want).abs());
            }
        }
    }
    check(worst_brute <= BRUTE_TOL, || {
        format!("brute-force oracle off by {worst_brute:e}")
    })?;
    Ok(format!(
        "unity {worst_unity:.1e}, shift {worst_shift:.1e}, brute {worst_brute:.1e}, slices bit-exact"
    ))
}

fn prompt_selection() -> Outcome {
    let b = mock(21);
    let vocab = embedded_vocab(&b);
    let scenes = metrics::synthetic_suite(&vocab, 200, 32, 77);
    let mut hits: BTreeMap<Role, usize> = BTreeMap::new();
    let mut scale_ok = true;
    for scene in &scenes {
        let img = b.embed_image(scene).map_err(|e| e.to_string())?;
        let sel = select_words(&img, &vocab, 1).map_err(|e| e.to_string())?;
        for (role, word) in scene.tags().expect("suite scenes are tagged") {
            if sel.best(role) == Some(word.as_str()) {
                *hits.entry(role.clone()).or_default() += 1;
            }
        }
        let scaled = select_words(&img.scaled(37.5), &vocab, 1).map_err(|e| e.to_string())?;
        let tiny = select_words(&img.scaled(1e-3), &vocab, 1).map_err(|e| e.to_string())?;
        let names = |s: &peace::prompt::WordSelection| -> Vec<Option<String>> {
            Role::TEMPLATE
                .iter()
                .map(|r| s.best(r).map(str::to_owned))
                .collect()
        };
        scale_ok &= names(&scaled) == names(&sel) && names(&tiny) == names(&sel);
    }
    let mut detail = Vec::new();
    for role in Role::TEMPLATE {
        let rate = hits.get(&role).copied().unwrap_or(0) as f64 / scenes.len() as f64;
        detail.push(format!("{}={:.3}", role.as_str(), rate));
        check(rate >= RECOVERY_MIN, || {
            format!("{} recovered {rate:.3}", role.as_str())
        })?;
    }
    check(scale_ok, || {
        "selection changed under positive scaling".into()
    })?;

    // ties: identical embeddings at several indices resolve to the lowest
    let dim = 8;
    let unit = |i: usize| {
        let mut v = vec![0.0f32; dim];
        v[i] = 1.0;
        EmbeddingVector::normalized(v).unwrap()
    };
    let tied = |words: &[&str], embs: Vec<EmbeddingVector>, role: Role| {
        let mut t = DescriptionType::new(role, words.iter().map(|w| w.to_string()).collect());
        t.embeddings = embs;
        t
    };
    let mut vocab = DescriptionVocabulary::builtin();
    vocab.types = vec![
        tied(
            &["a", "b", "c"],
            vec![unit(1), unit(0), unit(0)],
            Role::Resolution,
        ),
        tied(&["d", "e"], vec![unit(0), unit(0)], Role::Frame),
        tied(
            &["f", "g", "h"],
            vec![unit(2), unit(0), unit(0)],
            Role::Environment,
        ),
    ];
    let sel = select_words(&unit(0), &vocab, 1).map_err(|e| e.to_string())?;
    let got: Vec<_> = Role::TEMPLATE
        .iter()
        .map(|r| sel.best(r).unwrap_or(""))
        .collect();
    check(got == ["b", "d", "g"], || {
        format!("ties resolved to {got:?}")
    })?;
    Ok(format!(
        "{} images, {}, scale-invariant, ties to lowest index",
        scenes.len(),
        detail.join(" ")
    ))
}

fn template_fidelity() -> Outcome {
    let b = mock(3);
    let tags = BTreeMap::from([
        (Role::Resolution, "grainy".to_string()),
        (Role::Frame, "map".to_string()),
        (Role::Environment, "rainy".to_string()),
    ]);
    let scene = synth::labeled_scene(5, 32, &tags);
    let targets = TargetLists::builtin();
    let classes: Vec<&String> = targets.positives.iter().chain(&targets.negatives).collect();
    let grammar = regex::Regex::new(r"^A (\S+) (\S+) of (\S+) in (\S+(?:, \S+)*)\.$").unwrap();
    for mode in PromptMode::ALL {
        let set = engine(&b, mode)
            .generate(&scene, &b, 0)
            .map_err(|e| e.to_string())?;
        check(set.len() == classes.len(), || {
            format!("{mode}: {} prompts", set.len())
        })?;
        for (p, class) in set.prompts.iter().zip(&classes) {
            let ok = match mode {
                PromptMode::Default => p.text == format!("A photo of {class}."),
                PromptMode::Dovesei => {
                    p.text == format!("Aerial view, drone footage photo of {class}, shade, shadows, low resolution.")
                }
                PromptMode::Peace => grammar
                    .captures(&p.text)
                    .is_some_and(|c| &c[3] == class.as_str()),
            };
            check(ok, || format!("{mode}: unexpected prompt {:?}", p.text))?;
        }
    }
    let mut top3 = engine(&b, PromptMode::Peace);
    top3.config.env_top_k = 3;
    let set = top3.generate(&scene, &b, 0).map_err(|e| e.to_string())?;
    check(
        set.texts()
            .all(|t| grammar.is_match(t) && t.matches(", ").count() == 2),
        || "top-3 environment breaks the grammar".into(),
    )?;
    Ok("default, dovesei exact; peace matches grammar (k=1 and k=3)".into())
}

fn legal_edges() -> BTreeSet<(MachineState, MachineState)> {
    use MachineState::*;
    [
        (Searching, Aiming),
        (Aiming, Searching),
        (Aiming, Landing),
        (Landing, Waiting),
        (Waiting, Landing),
        (Waiting, Climbing),
        (Climbing, Restarting),
        (Restarting, Searching),
    ]
    .into_iter()
    .collect()
}

fn scripted(target: Option<(u32, u32)>, center: f64, altitude: f64, t: f64) -> Observation {
    Observation {
        target: target.map(|p| LandingTarget {
            pixel: p,
            confidence: 0.9,
            clearance_px: 6.0,
        }),
        center_value: center,
        altitude_m: altitude,
        t_s: t,
        dt_s: 0.5,
        meters_per_px: 1.0,
        image_size: (64, 64),
    }
}

fn state_machine() -> Outcome {
    use MachineState::*;
    let cfg = PolicyConfig::default();
    let edges = legal_edges();

    // scripted reachability of every state and edge
    let mut seen_edges = BTreeSet::new();
    let mut seen_states = BTreeSet::from([Searching]);
    let mut p = LandingPolicy::new(cfg.clone(), 1).map_err(|e| e.to_string())?;
    let mut t = 0.0;
    let alt = 100.0;
    let mut script: Vec<Observation> = Vec::new();
    script.push(scripted(Some((40, 40)), 0.2, alt, t)); // Searching -> Aiming
    script.push(scripted(None, 0.2, alt, t)); // Aiming -> Searching
    script.push(scripted(Some((32, 32)), 1.0, alt, t)); // Searching -> Aiming
    for _ in 0..cfg.aim_hold_frames {
        script.push(scripted(Some((32, 32)), 1.0, alt, t)); // -> Landing
    }
    script.push(scripted(Some((32, 32)), 0.1, 60.0, t)); // Landing -> Waiting
    script.push(scripted(Some((32, 32)), 0.9, 60.0, t)); // Waiting -> Landing
    script.push(scripted(Some((32, 32)), 0.1, 50.0, t)); // Landing -> Waiting
    for _ in 0..=((cfg.wait_timeout_s / 0.5) as usize + 1) {
        t += 0.5;
        script.push(scripted(None, 0.1, 50.0, t)); // -> Climbing
    }
    for _ in 0..40 {
        script.push(scripted(None, 0.1, 100.0, t)); // Climbing -> Restarting -> ... -> Searching
    }
    for obs in &script {
        let from = p.state();
        let out = p.step(obs).map_err(|e| e.to_string())?;
        if out.state != from {
            seen_edges.insert((from, out.state));
        }
        seen_states.insert(out.state);
    }
    check(seen_states.len() == MachineState::ALL.len(), || {
        format!("reached only {seen_states:?}")
    })?;
    check(seen_edges == edges, || {
        format!("edges exercised {seen_edges:?}")
    })?;

    // fuzzed observations
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut p = LandingPolicy::new(cfg.clone(), 2).map_err(|e| e.to_string())?;
    let mut alt = 100.0f64;
    let mut t = 0.0;
    let mut illegal = 0;
    let mut out_of_bounds = 0;
    let mut fuzz_states = BTreeSet::new();
    for _ in 0..FUZZ_STEPS {
        let target = rng.gen_bool(0.6).then(|| {
            if rng.gen_bool(0.5) {
                (32, 32)
            } else {
                (rng.gen_range(0..64), rng.gen_range(0..64))
            }
        });
        let center = if rng.gen_bool(0.7) {
            rng.gen_range(0.5..1.0)
        } else {
            rng.gen_range(0.0..0.5)
        };
        let obs = scripted(target, center, alt, t);
        let from = p.state();
        let out = p.step(&obs).map_err(|e| e.to_string())?;
        if out.state != from && !edges.contains(&(from, out.state)) {
            illegal += 1;
        }
        let c = out.command;
        if c.vx.hypot(c.vy) > cfg.v_max_h + 1e-9 || c.vz.abs() > cfg.v_max_z + 1e-9 {
            out_of_bounds += 1;
        }
        fuzz_states.insert(out.state);
        alt = (alt - c.vz * 0.5).clamp(15.0, 100.0);
        t += 0.5;
    }
    check(illegal == 0, || format!("{illegal} illegal transitions"))?;
    check(out_of_bounds == 0, || {
        format!("{out_of_bounds} commands out of bounds")
    })?;

    // liveness on pure grass from a 5x5 grid
    let world = synth::uniform("grass", 400, 400, 1.0, "grass");
    let b = mock(8);
    let e = engine(&b, PromptMode::Peace);
    let sim_cfg = SimConfig::default();
    let setup = EpisodeSetup {
        world: &world,
        backend: &b,
        engine: &e,
        policy: &cfg,
        sim: &sim_cfg,
        collapse: CollapseMode::Sum,
    };
    // pure descent from the start altitude to the success altitude
    let lower_bound = (sim::START_ALTITUDE_M - sim::SUCCESS_ALTITUDE_M) / cfg.v_max_z;
    let mut worst: f64 = 0.0;
    for (i, start) in start_grid(&world, 5, 5, 60.0).into_iter().enumerate() {
        let ep = run_episode(&setup, start, i as u64).map_err(|e| e.to_string())?;
        let r = &ep.result;
        check(r.success, || {
            format!("start {start:?}: {}", r.reason.as_str())
        })?;
        check(
            r.elapsed_s < sim::TIMEOUT_S && r.elapsed_s < 3.0 * lower_bound,
            || format!("start {start:?}: {:.1} s", r.elapsed_s),
        )?;
        worst = worst.max(r.elapsed_s);
    }
    Ok(format!(
        "all 6 states and 8 edges reached; {FUZZ_STEPS} fuzz steps, 0 illegal, 0 out of bounds, {} states visited; 25/25 landed, slowest {worst:.1} s < {:.0} s",
        fuzz_states.len(),
        3.0 * lower_bound
    ))
}

fn protocol_constants() -> Outcome {
    check(sim::START_ALTITUDE_M == 100.0, || "start altitude".into())?;
    check(sim::SUCCESS_ALTITUDE_M == 20.0, || {
        "success altitude".into()
    })?;
    check(sim::TIMEOUT_S == 1200.0, || "timeout".into())?;
    let d = SimConfig::default();
    check(d.start_altitude_m == 100.0 && d.timeout_s == 1200.0, || {
        "sim defaults".into()
    })?;
    check(PolicyConfig::default().success_altitude_m == 20.0, || {
        "policy default".into()
    })?;
    let over = SimConfig {
        timeout_s: 1500.0,
        ..SimConfig::default()
    };
    check(over.validate().is_err(), || {
        "timeout above 1200 s accepted".into()
    })?;

    let b = mock(4);
    let pol = PolicyConfig::default();
    let fly = |world: &sim::World, e: &PromptEngine| {
        let setup = EpisodeSetup {
            world,
            backend: &b,
            engine: e,
            policy: &pol,
            sim: &d,
            collapse: CollapseMode::Sum,
        };
        run_episode(&setup, (150.0, 150.0), 1).unwrap()
    };
    let grass = synth::uniform("grass", 300, 300, 1.0, "grass");
    let ep = fly(&grass, &engine(&b, PromptMode::Peace));
    let r = &ep.result;
    let last = r.path.last().unwrap();
    check(r.path[0].altitude == 100.0, || {
        "first pose not at 100 m".into()
    })?;
    check(r.success && r.reason == EndReason::ReachedOverSafe, || {
        format!("grass: {:?}", r.reason)
    })?;
    check(
        last.altitude <= 20.0 && grass.is_safe_at(last.x, last.y),
        || "ended above 20 m".into(),
    )?;
    check(ep.trace.iter().all(|row| row.altitude > 20.0), || {
        "controller ran below 20 m".into()
    })?;

    // a blind engine (no negatives, heatmap ≡ 1) descends onto water: not a success
    let water = synth::uniform("water", 300, 300, 1.0, "water");
    let mut blind = engine(&b, PromptMode::Peace);
    blind.targets = blind.targets.positives_only();
    let ep = fly(&water, &blind);
    check(
        !ep.result.success && ep.result.reason == EndReason::ReachedOverUnsafe,
        || format!("water landing: {:?}", ep.result.reason),
    )?;

    let ep = fly(&water, &engine(&b, PromptMode::Default));
    check(
        ep.result.reason == EndReason::Timeout && ep.result.elapsed_s == 1200.0,
        || format!("water: {:?} at {}", ep.result.reason, ep.result.elapsed_s),
    )?;
    check(ep.trace.iter().all(|row| row.t < 1200.0), || {
        "ticked past 1200 s".into()
    })?;
    Ok("start 100 m, success only at <= 20 m over safe ground, hard stop at 1200 s".into())
}

fn domain_shift() -> Outcome {
    let spec = synth::DomainShiftSpec {
        wrong_fraction: 0.5,
        ..Default::default()
    };
    let tiles = (spec.tiles * spec.tiles) as usize;
    let generated: Vec<_> = (0..DOMAIN_SHIFT_SEEDS)
        .map(|s| synth::domain_shift_world(s, &spec))
        .collect();
    // oracle: the static environment word is wrong on at least half the tiles
    for g in &generated {
        let wrong = g
            .world
            .zones
            .iter()
            .filter(|z| {
                z.tags.get(&Role::Environment).map(String::as_str)
                    != Some(synth::STATIC_ENVIRONMENT_WORD)
            })
            .count();
        check(wrong == g.static_wrong_tiles && 2 * wrong >= tiles, || {
            format!(
                "{}: static word wrong on {wrong}/{tiles} tiles",
                g.world.name
            )
        })?;
    }
    let worlds: Vec<_> = generated.into_iter().map(|g| g.world).collect();
    let b = mock(2024);
    let e = engine(&b, PromptMode::Peace);
    let m = run_matrix(
        &worlds,
        &b,
        &e,
        &PolicyConfig::default(),
        &SimConfig::default(),
        CollapseMode::Sum,
        &[PromptMode::Dovesei, PromptMode::Peace],
        1,
        7,
    )
    .map_err(|e| e.to_string())?;
    let s = |mode| m.summary(mode).map_or(0, |s| s.successes);
    let (stat, peace) = (s(PromptMode::Dovesei), s(PromptMode::Peace));
    check(peace >= stat, || format!("peace {peace} < dovesei {stat}"))?;
    check(peace as f64 >= SHIFT_GAIN_MIN * stat as f64, || {
        format!("peace {peace} vs dovesei {stat}: below +30%")
    })?;
    Ok(format!(
        "{DOMAIN_SHIFT_SEEDS} paired worlds: peace {peace}/{DOMAIN_SHIFT_SEEDS}, dovesei {stat}/{DOMAIN_SHIFT_SEEDS} ({:+.0}%)",
        if stat == 0 { f64::INFINITY } else { 100.0 * (peace as f64 / stat as f64 - 1.0) }
    ))
}

fn miou_harness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    let mut pairs = Vec::new();
    let mut oracle_sum = 0.0;
    for _ in 0..200 {
        let density = rng.gen_range(0.0..1.0);
        let a: Vec<bool> = (0..256).map(|_| rng.gen_bool(density)).collect();
        let b: Vec<bool> = (0..256).map(|_| rng.gen_bool(density)).collect();
        let (mut inter, mut union) = (0u32, 0u32);
        for i in 0..256 {
            inter += u32::from(a[i] && b[i]);
            union += u32::from(a[i] || b[i]);
        }
        let want = if union == 0 {
            1.0
        } else {
            f64::from(inter) / f64::from(union)
        };
        let got = iou(
            &BinaryMask::new(16, 16, a.clone()).unwrap(),
            &BinaryMask::new(16, 16, b.clone()).unwrap(),
        )
        .map_err(|e| e.to_string())?;
        worst = worst.max((got - want).abs());
        oracle_sum += want;
        let heat = a.iter().map(|&v| if v { 0.9 } else { 0.1 }).collect();
        pairs.push((
            SafetyHeatmap::new(16, 16, heat).unwrap(),
            BinaryMask::new(16, 16, b).unwrap(),
        ));
    }
    let m = miou(&pairs, metrics::DEFAULT_TAU).map_err(|e| e.to_string())?;
    worst = worst.max((m - oracle_sum / 200.0).abs());
    check(worst <= IOU_TOL, || format!("oracle mismatch {worst:e}"))?;

    let b = mock(31);
    let vocab = embedded_vocab(&b);
    let suite = metrics::synthetic_suite(&vocab, 40, 64, 3);
    let mut detail = Vec::new();
    for mode in PromptMode::ALL {
        let full = engine(&b, mode);
        let mut pos = full.clone();
        pos.targets = pos.targets.positives_only();
        let with_neg =
            metrics::suite_miou(&suite, &b, &full, CollapseMode::Sum, metrics::DEFAULT_TAU)
                .map_err(|e| e.to_string())?;
        let pos_only =
            metrics::suite_miou(&suite, &b, &pos, CollapseMode::Sum, metrics::DEFAULT_TAU)
                .map_err(|e| e.to_string())?;
        check(with_neg >= pos_only, || {
            format!("{mode}: {with_neg:.4} < {pos_only:.4}")
        })?;
        detail.push(format!("{mode} {with_neg:.3} vs {pos_only:.3}"));
    }
    Ok(format!(
        "oracle max diff {worst:.1e}; pos+neg vs pos-only: {}",
        detail.join(", ")
    ))
}

fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn run_all_commands(root: &Path) -> Result<(), String> {
    let err = |e: peace::Error| e.to_string();
    let world = root.join("world");
    cli::cmd_gen_world(WorldKind::Disks, 4, 160, 1.0, 1.0, &world).map_err(err)?;
    let shift = root.join("shift");
    cli::cmd_gen_world(WorldKind::DomainShift, 4, 320, 1.0, 0.5, &shift).map_err(err)?;
    let config = root.join("config.json");
    std::fs::write(&config, r#"{"sim": {"timeout_s": 240}}"#).unwrap();
    let common = CommonArgs {
        config: Some(config),
        seed: Some(11),
        ..CommonArgs::default()
    };
    let cfg = common.resolve().map_err(err)?;
    cli::cmd_segment(&cfg, &world.join("ortho.png"), &root.join("segment")).map_err(err)?;
    cli::cmd_matrix(
        &cfg,
        &[world.clone(), shift],
        &PromptMode::ALL,
        1,
        &root.join("matrix"),
    )
    .map_err(err)?;
    cli::cmd_matrix(&cfg, &[world], &[PromptMode::Peace], 2, &root.join("fly")).map_err(err)?;
    let opts = EvalOptions {
        modes: PromptMode::ALL.to_vec(),
        count: 6,
        size: 32,
        blur: true,
        positives_only: true,
        runs: Some(root.join("matrix")),
    };
    cli::cmd_eval(&cfg, &opts, &root.join("eval")).map_err(err)?;

    let text = cli::cmd_prompt(&cfg, &root.join("world/ortho.png"), false).map_err(err)?;
    std::fs::write(root.join("prompt.txt"), text).unwrap();
    let json = cli::cmd_prompt(&cfg, &root.join("world/ortho.png"), true).map_err(err)?;
    std::fs::write(root.join("prompt.json"), json).unwrap();
    Ok(())
}

fn determinism() -> Outcome {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    run_all_commands(a.path())?;
    run_all_commands(b.path())?;
    let (ta, tb) = (tree(a.path()), tree(b.path()));
    check(ta.keys().eq(tb.keys()), || "different file sets".into())?;
    let differing: Vec<&String> = ta
        .iter()
        .filter(|(k, v)| tb[*k] != **v)
        .map(|(k, _)| k)
        .collect();
    check(differing.is_empty(), || {
        format!("differing artifacts: {differing:?}")
    })?;
    // the seed is recorded in every metadata file
    let mut missing = Vec::new();
    for (name, bytes) in &ta {
        // world manifests have a fixed schema; the top-level config.json is an input
        let json =
            name.ends_with(".json") && !name.ends_with("/world.json") && name != "config.json";
        let has_seed = String::from_utf8_lossy(bytes).contains("seed");
        if (json || name == "prompt.txt") && !has_seed {
            missing.push(name.clone());
        }
    }
    check(missing.is_empty(), || format!("no seed in {missing:?}"))?;
    Ok(format!(
        "{} artifacts byte-identical across reruns",
        ta.len()
    ))
}

fn real_model_smoke() -> Outcome {
    let Some(dir) = std::env::var_os(MODEL_DIR_ENV) else {
        return Ok(format!("SKIP ({MODEL_DIR_ENV} unset)"));
    };
    if !cfg!(feature = "onnx") {
        return Ok("SKIP (built without the onnx feature)".into());
    }
    let desc = peace::backend::BackendDescriptor::portable_graph(dir);
    let backend = peace::backend::build_backend(&desc).map_err(|e| e.to_string())?;
    // fixture: textured grass on the left half, asphalt on the right
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let img = RgbImage::from_fn(352, 352, |x, _| {
        let n: i16 = rng.gen_range(-18..18);
        let c = |v: i16| (v + n).clamp(0, 255) as u8;
        if x < 176 {
            Rgb([c(70), c(130), c(45)])
        } else {
            Rgb([c(95), c(95), c(100)])
        }
    });
    let scene = peace::scene::Scene::annotated(img, Annotation::default());
    let m = backend
        .segment(&scene, "A photo of grass")
        .map_err(|e| e.to_string())?;
    let (w, h) = (m.width, m.height);
    let (mut grass, mut road) = (0.0f64, 0.0f64);
    for y in 0..h {
        for x in 0..w {
            let p = 1.0 / (1.0 + (-f64::from(m.at(x, y))).exp());
            if x < w / 2 {
                grass += p;
            } else {
                road += p;
            }
        }
    }
    check(grass > road, || {
        format!("grass mean {grass} <= road mean {road}")
    })?;
    Ok(format!(
        "grass region mean exceeds road region ({grass:.1} > {road:.1})"
    ))
}

fn main() {
    let criteria: [Criterion; 9] = [
        (
            "fusion invariants",
            Duration::from_secs(5),
            fusion_invariants,
        ),
        (
            "prompt selection",
            Duration::from_secs(10),
            prompt_selection,
        ),
        (
            "template fidelity",
            Duration::from_secs(10),
            template_fidelity,
        ),
        ("state machine", Duration::from_secs(60), state_machine),
        (
            "protocol constants",
            Duration::from_secs(120),
            protocol_constants,
        ),
        (
            "domain-shift direction of effect",
            Duration::from_secs(300),
            domain_shift,
        ),
        ("mIoU harness", Duration::from_secs(60), miou_harness),
        ("determinism", Duration::from_secs(300), determinism),
        (
            "real-model smoke",
            Duration::from_secs(600),
            real_model_smoke,
        ),
    ];
    let mut failed = 0;
    for (name, budget, run) in criteria {
        let start = Instant::now();
        let outcome = run();
        let took = start.elapsed();
        let outcome = match outcome {
            Ok(d) if took > budget => Err(format!("{d}; took {took:.1?}, budget {budget:?}")),
            other => other,
        };
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail} [{:.1} s]", took.as_secs_f64()),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why} [{:.1} s]", took.as_secs_f64());
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
