//! Command-line front end: `peace <subcommand>`.
//!
//! Exit codes: 0 on success, 2 for input and configuration errors, 3 for
//! backend failures.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::backend::{BackendKind, InferenceBackend};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::fusion::{fuse_pipeline, CollapseMode};
use crate::metrics::{self, AggregateReport, MiouEntry, PlotPath};
use crate::prompt::{PromptMode, PromptSet};
use crate::scene::Scene;
use crate::sim::{self, synth, EpisodeResult, MatrixResult, World};

#[derive(Debug, Parser)]
#[command(
    name = "peace",
    version,
    about = "Prompt engineering and safe-landing simulation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every pipeline command. Flags override the config file.
#[derive(Clone, Debug, Default, Args)]
pub struct CommonArgs {
    /// JSON run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// default, dovesei or peace.
    #[arg(long)]
    pub mode: Option<PromptMode>,
    #[arg(long, value_parser = parse_backend)]
    pub backend: Option<BackendKind>,
    /// Model directory for the portable-graph backend (else PEACE_MODEL_DIR).
    #[arg(long)]
    pub model_dir: Option<PathBuf>,
    /// sum or max.
    #[arg(long, value_parser = parse_collapse)]
    pub collapse: Option<CollapseMode>,
    #[arg(long)]
    pub vocabulary: Option<PathBuf>,
    #[arg(long)]
    pub targets: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the prompt set generated for one image.
    Prompt {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        image: PathBuf,
        /// Print JSON instead of text.
        #[arg(long)]
        json: bool,
    },
    /// Write the safety heatmap of one image as 16-bit PGM plus a JSON sidecar.
    Segment {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        image: PathBuf,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Fly one mode over one world from seeded start points.
    Fly {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        world: PathBuf,
        #[arg(long, default_value_t = 1)]
        starts: usize,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Paired comparison of several modes over several worlds.
    Matrix {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, required = true)]
        world: Vec<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "default,dovesei,peace")]
        modes: Vec<PromptMode>,
        #[arg(long, default_value_t = 10)]
        starts: usize,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// mIoU over a synthetic labelled suite, optionally merged with flight results.
    Eval {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_delimiter = ',', default_value = "default,dovesei,peace")]
        modes: Vec<PromptMode>,
        #[arg(long, default_value_t = 20)]
        count: usize,
        #[arg(long, default_value_t = 64)]
        size: u32,
        /// Also score a blurred copy of the suite.
        #[arg(long)]
        blur: bool,
        /// Also score with the negative prompts removed.
        #[arg(long)]
        positives_only: bool,
        /// Output directory of an earlier `fly` or `matrix` run.
        #[arg(long)]
        runs: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Write a synthetic world directory.
    GenWorld {
        #[arg(long, value_enum)]
        kind: WorldKind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Side length in pixels (ignored for domain-shift).
        #[arg(long, default_value_t = 300)]
        size: u32,
        #[arg(long, default_value_t = 1.0)]
        meters_per_pixel: f64,
        /// Share of domain-shift tiles whose environment differs from the static prompt.
        #[arg(long, default_value_t = 1.0)]
        wrong_fraction: f64,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum WorldKind {
    Grass,
    Water,
    Disks,
    DomainShift,
}

fn parse_backend(s: &str) -> std::result::Result<BackendKind, String> {
    match s {
        "mock" => Ok(BackendKind::Mock),
        "portable_graph" | "portable-graph" => Ok(BackendKind::PortableGraph),
        _ => Err(format!(
            "unknown backend '{s}' (expected mock or portable_graph)"
        )),
    }
}

fn parse_collapse(s: &str) -> std::result::Result<CollapseMode, String> {
    match s {
        "sum" => Ok(CollapseMode::Sum),
        "max" => Ok(CollapseMode::Max),
        _ => Err(format!("unknown collapse '{s}' (expected sum or max)")),
    }
}

impl CommonArgs {
    /// Config file (or defaults) with the flags applied, validated.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(m) = self.mode {
            cfg.prompt.mode = m;
        }
        if let Some(b) = self.backend {
            cfg.backend.kind = b;
        }
        if let Some(d) = &self.model_dir {
            cfg.backend.model_dir = Some(d.clone());
        }
        if let Some(c) = self.collapse {
            cfg.collapse = c;
        }
        if let Some(v) = &self.vocabulary {
            cfg.vocabulary = Some(v.clone());
        }
        if let Some(t) = &self.targets {
            cfg.targets = Some(t.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parses `std::env::args`, runs the command and returns the exit code.
pub fn main() -> i32 {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(out) => {
            print!("{out}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Runs one command and returns what it would print.
pub fn run(command: Command) -> Result<String> {
    match command {
        Command::Prompt {
            common,
            image,
            json,
        } => cmd_prompt(&common.resolve()?, &image, json),
        Command::Segment {
            common,
            image,
            out_dir,
        } => cmd_segment(&common.resolve()?, &image, &out_dir),
        Command::Fly {
            common,
            world,
            starts,
            out_dir,
        } => {
            let cfg = common.resolve()?;
            let modes = [cfg.prompt.mode];
            cmd_matrix(&cfg, &[world], &modes, starts, &out_dir)
        }
        Command::Matrix {
            common,
            world,
            modes,
            starts,
            out_dir,
        } => cmd_matrix(&common.resolve()?, &world, &modes, starts, &out_dir),
        Command::Eval {
            common,
            modes,
            count,
            size,
            blur,
            positives_only,
            runs,
            out_dir,
        } => {
            let opts = EvalOptions {
                modes,
                count,
                size,
                blur,
                positives_only,
                runs,
            };
            cmd_eval(&common.resolve()?, &opts, &out_dir)
        }
        Command::GenWorld {
            kind,
            seed,
            size,
            meters_per_pixel,
            wrong_fraction,
            out_dir,
        } => cmd_gen_world(kind, seed, size, meters_per_pixel, wrong_fraction, &out_dir),
    }
}

/// Writes through a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("output serializes") + "\n"
}

fn backend_and_engine(
    cfg: &RunConfig,
) -> Result<(Box<dyn InferenceBackend>, crate::prompt::PromptEngine)> {
    let backend = cfg.build_backend()?;
    let engine = cfg.build_engine(backend.as_ref())?;
    Ok((backend, engine))
}

/// Text rendering of a prompt set.
pub fn render_prompt_set(set: &PromptSet, seed: u64) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "mode: {}", set.mode);
    let _ = writeln!(out, "seed: {seed}");
    if let Some(sel) = &set.selection {
        out.push_str("selection:\n");
        for c in &sel.choices {
            let words: Vec<String> = c
                .words
                .iter()
                .map(|w| format!("{} ({:.4})", w.word, w.score))
                .collect();
            let _ = writeln!(out, "  {}: {}", c.role.as_str(), words.join(", "));
        }
    }
    let _ = writeln!(out, "positives ({}):", set.x);
    for p in &set.prompts[..set.x] {
        let _ = writeln!(out, "  {}", p.text);
    }
    let _ = writeln!(out, "negatives ({}):", set.y);
    for p in &set.prompts[set.x..] {
        let _ = writeln!(out, "  {}", p.text);
    }
    out
}

#[derive(Serialize)]
struct PromptOutput<'a> {
    seed: u64,
    image: String,
    prompt_set: &'a PromptSet,
}

pub fn cmd_prompt(cfg: &RunConfig, image: &Path, json: bool) -> Result<String> {
    let scene = Scene::load(image)?;
    let (backend, engine) = backend_and_engine(cfg)?;
    let set = engine.generate(&scene, backend.as_ref(), 0)?;
    Ok(if json {
        to_json(&PromptOutput {
            seed: cfg.seed,
            image: file_name(image),
            prompt_set: &set,
        })
    } else {
        render_prompt_set(&set, cfg.seed)
    })
}

/// JSON written next to a heatmap PGM.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeatmapSidecar {
    pub seed: u64,
    pub mode: PromptMode,
    pub collapse: CollapseMode,
    pub backend: BackendKind,
    pub image: String,
    pub width: u32,
    pub height: u32,
    pub max_value: u16,
    pub x: usize,
    pub y: usize,
    pub prompts: Vec<String>,
    pub mean: f64,
}

pub fn cmd_segment(cfg: &RunConfig, image: &Path, out_dir: &Path) -> Result<String> {
    let scene = Scene::load(image)?;
    let (backend, engine) = backend_and_engine(cfg)?;
    let set = engine.generate(&scene, backend.as_ref(), 0)?;
    let heatmap = fuse_pipeline(&scene, &set, backend.as_ref(), cfg.collapse)?;
    let stem = image
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "frame".into());
    let sidecar = HeatmapSidecar {
        seed: cfg.seed,
        mode: set.mode,
        collapse: cfg.collapse,
        backend: cfg.backend.kind,
        image: file_name(image),
        width: heatmap.width,
        height: heatmap.height,
        max_value: u16::MAX,
        x: set.x,
        y: set.y,
        prompts: set.texts().map(str::to_owned).collect(),
        mean: heatmap.mean(),
    };
    let pgm = out_dir.join(format!("{stem}.heatmap.pgm"));
    write_atomic(&pgm, &heatmap.to_pgm())?;
    write_atomic(
        &out_dir.join(format!("{stem}.heatmap.json")),
        to_json(&sidecar).as_bytes(),
    )?;
    Ok(format!("{}\n", pgm.display()))
}

/// Per-episode result file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeFile {
    /// Run seed; `result.seed` is the derived per-cell seed.
    pub run_seed: u64,
    pub world_index: usize,
    pub start_index: usize,
    pub start: (f64, f64),
    pub result: EpisodeResult,
}

fn episode_stem(world: &str, mode: PromptMode, start: usize) -> String {
    let safe: String = world
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("{safe}_{mode}_{start:03}")
}

/// Writes episode files, the report and one path plot per world.
pub fn write_matrix_outputs(
    cfg: &RunConfig,
    worlds: &[World],
    result: &MatrixResult,
    out_dir: &Path,
) -> Result<AggregateReport> {
    let episodes_dir = out_dir.join("episodes");
    for m in &result.episodes {
        let r = &m.episode.result;
        let stem = episode_stem(&worlds[m.world_index].name, r.mode, m.start_index);
        let file = EpisodeFile {
            run_seed: result.seed,
            world_index: m.world_index,
            start_index: m.start_index,
            start: m.start,
            result: r.clone(),
        };
        write_atomic(
            &episodes_dir.join(format!("{stem}.json")),
            to_json(&file).as_bytes(),
        )?;
        write_atomic(
            &episodes_dir.join(format!("{stem}.csv")),
            sim::trace_csv(&m.episode.trace).as_bytes(),
        )?;
        write_atomic(
            &episodes_dir.join(format!("{stem}.jsonl")),
            sim::trace_jsonl(&m.episode.trace).as_bytes(),
        )?;
    }
    for (wi, world) in worlds.iter().enumerate() {
        let paths: Vec<PlotPath<'_>> = result
            .episodes
            .iter()
            .filter(|m| m.world_index == wi)
            .map(|m| PlotPath {
                mode: m.episode.result.mode,
                path: &m.episode.result.path,
                success: m.episode.result.success,
            })
            .collect();
        let name = format!("paths_{wi:02}.svg");
        write_atomic(
            &out_dir.join(name),
            metrics::path_plot_svg(world, &paths).as_bytes(),
        )?;
    }
    let report = AggregateReport::new(result.seed, result.summaries.clone(), Vec::new());
    write_atomic(&out_dir.join("report.json"), report.to_json().as_bytes())?;
    write_atomic(&out_dir.join("report.txt"), report.to_table().as_bytes())?;
    write_atomic(&out_dir.join("config.json"), to_json(cfg).as_bytes())?;
    Ok(report)
}

pub fn cmd_matrix(
    cfg: &RunConfig,
    world_paths: &[PathBuf],
    modes: &[PromptMode],
    starts: usize,
    out_dir: &Path,
) -> Result<String> {
    let worlds = world_paths
        .iter()
        .map(World::load)
        .collect::<Result<Vec<_>>>()?;
    let (backend, engine) = backend_and_engine(cfg)?;
    let result = sim::run_matrix(
        &worlds,
        backend.as_ref(),
        &engine,
        &cfg.policy,
        &cfg.sim,
        cfg.collapse,
        modes,
        starts,
        cfg.seed,
    )?;
    let report = write_matrix_outputs(cfg, &worlds, &result, out_dir)?;
    Ok(report.to_table())
}

#[derive(Clone, Debug)]
pub struct EvalOptions {
    pub modes: Vec<PromptMode>,
    pub count: usize,
    pub size: u32,
    pub blur: bool,
    pub positives_only: bool,
    pub runs: Option<PathBuf>,
}

/// Episode results under `<dir>/episodes/*.json`, in file-name order.
pub fn read_episode_files(dir: &Path) -> Result<Vec<EpisodeFile>> {
    let episodes = dir.join("episodes");
    let entries = std::fs::read_dir(&episodes).map_err(|e| Error::io(&episodes, e))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str(&text).map_err(|e| Error::schema(p, &e))
        })
        .collect()
}

pub fn cmd_eval(cfg: &RunConfig, opts: &EvalOptions, out_dir: &Path) -> Result<String> {
    if opts.count == 0 {
        return Err(Error::Validation("eval needs --count of at least 1".into()));
    }
    if opts.size < 8 {
        return Err(Error::Validation("eval needs --size of at least 8".into()));
    }
    let (backend, engine) = backend_and_engine(cfg)?;
    let suite = metrics::synthetic_suite(&engine.vocab, opts.count, opts.size, cfg.seed);
    let mut datasets = vec![("synthetic".to_string(), suite.clone())];
    if opts.blur {
        let blurred = suite
            .iter()
            .map(|s| metrics::blur_scene(s, metrics::BLUR_SIGMA))
            .collect();
        datasets.push(("synthetic-blurred".to_string(), blurred));
    }
    let mut miou = Vec::new();
    for &mode in &opts.modes {
        let mut e = engine.clone();
        e.config.mode = mode;
        let mut variants = vec![("", e.clone())];
        if opts.positives_only {
            let mut p = e.clone();
            p.targets = p.targets.positives_only();
            variants.push(("-positives-only", p));
        }
        for (name, scenes) in &datasets {
            for (suffix, eng) in &variants {
                miou.push(MiouEntry {
                    dataset: format!("{name}{suffix}"),
                    mode,
                    value: metrics::suite_miou(
                        scenes,
                        backend.as_ref(),
                        eng,
                        cfg.collapse,
                        cfg.tau,
                    )?,
                });
            }
        }
    }
    let modes = match &opts.runs {
        Some(dir) => {
            let files = read_episode_files(dir)?;
            sim::aggregate(files.iter().map(|f| &f.result))
        }
        None => Vec::new(),
    };
    let report = AggregateReport::new(cfg.seed, modes, miou);
    write_atomic(&out_dir.join("eval.json"), report.to_json().as_bytes())?;
    write_atomic(&out_dir.join("eval.txt"), report.to_table().as_bytes())?;
    Ok(report.to_table())
}

/// Metadata written beside a generated world.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenWorldInfo {
    pub seed: u64,
    pub kind: String,
    pub world: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tile_words: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub static_wrong_tiles: Option<usize>,
}

/// Builds a synthetic world of the given kind.
pub fn generate_world(
    kind: WorldKind,
    seed: u64,
    size: u32,
    meters_per_pixel: f64,
    wrong_fraction: f64,
) -> Result<(World, GenWorldInfo)> {
    if kind != WorldKind::DomainShift && size < 16 {
        return Err(Error::Validation(
            "world size must be at least 16 px".into(),
        ));
    }
    if !(meters_per_pixel.is_finite() && meters_per_pixel > 0.0) {
        return Err(Error::Validation(
            "meters_per_pixel must be positive".into(),
        ));
    }
    if !(0.0..=1.0).contains(&wrong_fraction) {
        return Err(Error::Validation(
            "wrong_fraction must lie in [0, 1]".into(),
        ));
    }
    let mut info = GenWorldInfo {
        seed,
        kind: kind
            .to_possible_value()
            .map(|v| v.get_name().to_string())
            .unwrap_or_default(),
        world: String::new(),
        tile_words: None,
        static_wrong_tiles: None,
    };
    let world = match kind {
        WorldKind::Grass => synth::uniform(
            &format!("grass-{seed}"),
            size,
            size,
            meters_per_pixel,
            "grass",
        ),
        WorldKind::Water => synth::uniform(
            &format!("water-{seed}"),
            size,
            size,
            meters_per_pixel,
            "water",
        ),
        WorldKind::Disks => {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let s = f64::from(size);
            let disks: Vec<synth::Disk> = (0..4)
                .map(|_| {
                    let r = rng.gen_range(s / 20.0..s / 10.0);
                    synth::Disk {
                        cx: rng.gen_range(r..s - r),
                        cy: rng.gen_range(r..s - r),
                        r,
                        class: "grass".into(),
                    }
                })
                .collect();
            synth::disks(
                &format!("disks-{seed}"),
                size,
                size,
                meters_per_pixel,
                "road",
                &disks,
            )
        }
        WorldKind::DomainShift => {
            let spec = synth::DomainShiftSpec {
                meters_per_pixel,
                wrong_fraction,
                ..synth::DomainShiftSpec::default()
            };
            let d = synth::domain_shift_world(seed, &spec);
            info.tile_words = Some(d.tile_words);
            info.static_wrong_tiles = Some(d.static_wrong_tiles);
            d.world
        }
    };
    info.world = world.name.clone();
    Ok((world, info))
}

pub fn cmd_gen_world(
    kind: WorldKind,
    seed: u64,
    size: u32,
    meters_per_pixel: f64,
    wrong_fraction: f64,
    out_dir: &Path,
) -> Result<String> {
    let (world, info) = generate_world(kind, seed, size, meters_per_pixel, wrong_fraction)?;
    world.save(out_dir)?;
    write_atomic(&out_dir.join("generator.json"), to_json(&info).as_bytes())?;
    Ok(format!("{}\n", out_dir.display()))
}
