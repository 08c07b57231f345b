//! Segmentation quality, aggregate tables and path plots.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::Cursor;

use base64::Engine as _;
use image::RgbImage;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backend::InferenceBackend;
use crate::error::{Error, Result};
use crate::fusion::{fuse_pipeline, CollapseMode, SafetyHeatmap};
use crate::policy::MachineState;
use crate::prompt::{PromptEngine, PromptMode};
use crate::scene::{LabelGrid, Scene, VOID};
use crate::sim::{synth, ModeSummary, UavPose, World};
use crate::vocab::{DescriptionVocabulary, Role};

pub const REPORT_VERSION: u32 = 1;
pub const DEFAULT_TAU: f64 = 0.5;
/// Gaussian blur applied by [`blur_scene`], pixels.
pub const BLUR_SIGMA: f32 = 1.5;

pub const ROW_SUCCESSES: &str = "Total Successful SLZ selections";
pub const ROW_DISTANCE: &str = "Average Horizontal Distance (m)";
pub const ROW_TIME: &str = "Average Time Spent (s)";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMask {
    pub width: u32,
    pub height: u32,
    pub bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: u32, height: u32, bits: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 || bits.len() != width as usize * height as usize {
            return Err(Error::Contract(format!(
                "mask {width}x{height} with {} bits",
                bits.len()
            )));
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    /// Pixels whose class is in `safe`; void pixels are never safe.
    pub fn from_labels<'a>(labels: &LabelGrid, safe: impl IntoIterator<Item = &'a str>) -> Self {
        let safe: BTreeSet<&str> = safe.into_iter().collect();
        let bits = labels
            .ids
            .iter()
            .map(|&id| id != VOID && labels.class_name(id).is_some_and(|c| safe.contains(c)))
            .collect();
        Self {
            width: labels.width,
            height: labels.height,
            bits,
        }
    }

    /// Nearest-neighbour resample.
    pub fn resized(&self, width: u32, height: u32) -> Self {
        let labels = LabelGrid {
            width: self.width,
            height: self.height,
            classes: vec!["safe".into()],
            ids: self
                .bits
                .iter()
                .map(|&b| if b { 0 } else { VOID })
                .collect(),
        }
        .resized(width, height);
        Self {
            width,
            height,
            bits: labels.ids.iter().map(|&id| id == 0).collect(),
        }
    }
}

/// `value ≥ tau` is safe.
pub fn binarize(heatmap: &SafetyHeatmap, tau: f64) -> Result<BinaryMask> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::Contract(format!("tau {tau} outside (0, 1)")));
    }
    BinaryMask::new(
        heatmap.width,
        heatmap.height,
        heatmap.values.iter().map(|&v| v >= tau).collect(),
    )
}

/// Intersection over union; 1.0 when both masks are empty.
pub fn iou(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    if (pred.width, pred.height) != (gt.width, gt.height) {
        return Err(Error::Contract(format!(
            "mask sizes differ: {}x{} vs {}x{}",
            pred.width, pred.height, gt.width, gt.height
        )));
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (&p, &g) in pred.bits.iter().zip(&gt.bits) {
        inter += usize::from(p && g);
        union += usize::from(p || g);
    }
    Ok(if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    })
}

/// Unweighted mean IoU; each ground-truth mask is resampled to its heatmap.
pub fn miou(pairs: &[(SafetyHeatmap, BinaryMask)], tau: f64) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Contract("mIoU over zero pairs".into()));
    }
    let mut total = 0.0;
    for (heatmap, gt) in pairs {
        let gt = gt.resized(heatmap.width, heatmap.height);
        total += iou(&binarize(heatmap, tau)?, &gt)?;
    }
    Ok(total / pairs.len() as f64)
}

/// Gaussian-blurred copy of `scene` whose planted resolution word becomes `blurred`.
pub fn blur_scene(scene: &Scene, sigma: f32) -> Scene {
    let mut out = scene.clone();
    out.image = image::imageops::blur(&scene.image, sigma);
    if let Some(a) = out.annotation.as_mut() {
        a.tags.insert(Role::Resolution, "blurred".into());
    }
    out
}

/// `count` labelled frames whose planted tags are drawn from the enabled
/// template roles of `vocab`.
pub fn synthetic_suite(
    vocab: &DescriptionVocabulary,
    count: usize,
    size: u32,
    seed: u64,
) -> Vec<Scene> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let mut tags = BTreeMap::new();
            for t in vocab
                .types
                .iter()
                .filter(|t| t.enabled && Role::TEMPLATE.contains(&t.role))
            {
                if let Some(w) = t.words.choose(&mut rng) {
                    tags.insert(t.role.clone(), w.clone());
                }
            }
            synth::labeled_scene(rng.gen(), size, &tags)
        })
        .collect()
}

/// mIoU of fused heatmaps against the positive-class masks of labelled scenes.
pub fn suite_miou(
    scenes: &[Scene],
    backend: &dyn InferenceBackend,
    engine: &PromptEngine,
    collapse: CollapseMode,
    tau: f64,
) -> Result<f64> {
    let safe: Vec<&str> = engine
        .targets
        .positives
        .iter()
        .map(String::as_str)
        .collect();
    let mut pairs = Vec::with_capacity(scenes.len());
    for (i, scene) in scenes.iter().enumerate() {
        let labels = scene
            .annotation
            .as_ref()
            .and_then(|a| a.labels.as_ref())
            .ok_or_else(|| Error::Input(format!("suite scene {i} has no labels")))?;
        let prompts = engine.generate(scene, backend, i as u64)?;
        let heatmap = fuse_pipeline(scene, &prompts, backend, collapse)?;
        pairs.push((
            heatmap,
            BinaryMask::from_labels(labels, safe.iter().copied()),
        ));
    }
    miou(&pairs, tau)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MiouEntry {
    pub dataset: String,
    pub mode: PromptMode,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub version: u32,
    pub seed: u64,
    pub modes: Vec<ModeSummary>,
    #[serde(default)]
    pub miou: Vec<MiouEntry>,
}

impl AggregateReport {
    pub fn new(seed: u64, mut modes: Vec<ModeSummary>, mut miou: Vec<MiouEntry>) -> Self {
        let order = |m: PromptMode| PromptMode::ALL.iter().position(|&x| x == m);
        modes.sort_by_key(|s| order(s.mode));
        miou.sort_by(|a, b| {
            a.dataset
                .cmp(&b.dataset)
                .then(order(a.mode).cmp(&order(b.mode)))
        });
        Self {
            version: REPORT_VERSION,
            seed,
            modes,
            miou,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// Fixed-width table: flight rows, then one mIoU row per dataset.
    /// Columns are the modes present, in the order default, dovesei, peace.
    pub fn to_table(&self) -> String {
        let mut modes: Vec<PromptMode> = self.modes.iter().map(|s| s.mode).collect();
        for e in &self.miou {
            if !modes.contains(&e.mode) {
                modes.push(e.mode);
            }
        }
        modes.sort_by_key(|m| PromptMode::ALL.iter().position(|x| x == m));

        let mut rows: Vec<(String, Vec<String>)> = Vec::new();
        if !self.modes.is_empty() {
            let cell = |m: PromptMode, f: &dyn Fn(&ModeSummary) -> String| {
                self.modes
                    .iter()
                    .find(|s| s.mode == m)
                    .map_or_else(|| "-".to_string(), f)
            };
            rows.push((
                ROW_SUCCESSES.into(),
                modes
                    .iter()
                    .map(|&m| cell(m, &|s| s.successes.to_string()))
                    .collect(),
            ));
            rows.push((
                ROW_DISTANCE.into(),
                modes
                    .iter()
                    .map(|&m| cell(m, &|s| format!("{:.2}", s.mean_distance_m)))
                    .collect(),
            ));
            rows.push((
                ROW_TIME.into(),
                modes
                    .iter()
                    .map(|&m| cell(m, &|s| format!("{:.2}", s.mean_time_s)))
                    .collect(),
            ));
        }
        let datasets: BTreeSet<&str> = self.miou.iter().map(|e| e.dataset.as_str()).collect();
        for d in datasets {
            let cells = modes
                .iter()
                .map(|&m| {
                    self.miou
                        .iter()
                        .find(|e| e.dataset == d && e.mode == m)
                        .map_or_else(|| "-".to_string(), |e| format!("{:.4}", e.value))
                })
                .collect();
            rows.push((format!("mIoU ({d})"), cells));
        }

        let label_w = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
        let col_w = rows
            .iter()
            .flat_map(|r| r.1.iter().map(String::len))
            .chain(modes.iter().map(|m| m.as_str().len()))
            .max()
            .unwrap_or(0);
        let mut out = String::new();
        let _ = write!(out, "{:label_w$}", "");
        for m in &modes {
            let _ = write!(out, "  {:>col_w$}", m.as_str());
        }
        out.push('\n');
        for (label, cells) in rows {
            let _ = write!(out, "{label:label_w$}");
            for c in cells {
                let _ = write!(out, "  {c:>col_w$}");
            }
            out.push('\n');
        }
        out
    }
}

/// One flight path to draw.
#[derive(Clone, Debug)]
pub struct PlotPath<'a> {
    pub mode: PromptMode,
    pub path: &'a [UavPose],
    pub success: bool,
}

fn mode_color(mode: PromptMode) -> &'static str {
    match mode {
        PromptMode::Default => "#1f77b4",
        PromptMode::Dovesei => "#ff7f0e",
        PromptMode::Peace => "#2ca02c",
    }
}

fn star(cx: f64, cy: f64, r: f64) -> String {
    let mut pts = String::new();
    for i in 0..10 {
        let rad = if i % 2 == 0 { r } else { r * 0.45 };
        let a = std::f64::consts::PI * (f64::from(i) / 5.0) - std::f64::consts::FRAC_PI_2;
        let _ = write!(pts, "{:.2},{:.2} ", cx + rad * a.cos(), cy + rad * a.sin());
    }
    pts.pop();
    pts
}

fn png_base64(image: &RgbImage) -> String {
    let mut buf = Cursor::new(Vec::new());
    image
        .write_to(&mut buf, image::ImageFormat::Png)
        .expect("in-memory PNG encoding");
    base64::engine::general_purpose::STANDARD.encode(buf.into_inner())
}

/// SVG of the world orthophoto with one polyline per flight and a star where
/// each flight ended (filled for successes, hollow otherwise). Coordinates
/// are world pixels.
pub fn path_plot_svg(world: &World, paths: &[PlotPath<'_>]) -> String {
    let (w, h) = (world.ortho.width(), world.ortho.height());
    let mpp = world.meters_per_pixel;
    let r = f64::from(w.max(h)) / 80.0 + 2.0;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(
        out,
        r#"<image width="{w}" height="{h}" href="data:image/png;base64,{}"/>"#,
        png_base64(&world.ortho)
    );
    for p in paths {
        if p.path.is_empty() {
            continue;
        }
        let color = mode_color(p.mode);
        let pts: Vec<String> = p
            .path
            .iter()
            .map(|q| format!("{:.2},{:.2}", q.x / mpp, q.y / mpp))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline class="{}" fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            p.mode,
            pts.join(" ")
        );
        let end = p.path.last().expect("non-empty");
        let fill = if p.success { color } else { "none" };
        let _ = writeln!(
            out,
            r#"<polygon class="end {}" fill="{fill}" stroke="{color}" points="{}"/>"#,
            p.mode,
            star(end.x / mpp, end.y / mpp, r)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// A row read back from a trace CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceCsvRow {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub altitude: f64,
    pub state: MachineState,
    pub heatmap_center: f64,
}

/// Parses `t,x,y,altitude,state,heatmap_center` traces.
pub fn read_trace_csv(text: &str) -> Result<Vec<TraceCsvRow>> {
    let mut lines = text.lines().enumerate();
    let header = lines.next().map(|(_, l)| l.trim());
    if header != Some("t,x,y,altitude,state,heatmap_center") {
        return Err(Error::Input(format!("unexpected trace header {header:?}")));
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |m: &str| Error::Input(format!("trace line {}: {m}", i + 1));
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != 6 {
            return Err(bad("expected 6 fields"));
        }
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| bad(&format!("bad number {s:?}")))
        };
        let state = MachineState::ALL
            .into_iter()
            .find(|s| s.as_str() == f[4])
            .ok_or_else(|| bad(&format!("unknown state {:?}", f[4])))?;
        rows.push(TraceCsvRow {
            t: num(f[0])?,
            x: num(f[1])?,
            y: num(f[2])?,
            altitude: num(f[3])?,
            state,
            heatmap_center: num(f[5])?,
        });
    }
    Ok(rows)
}
