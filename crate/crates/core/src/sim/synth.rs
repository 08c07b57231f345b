//! Synthetic worlds: flat fields, disks of classes, and tiled suites whose
//! planted environment word changes from tile to tile.
//!
//! Geometry arguments are in pixels.

use std::collections::BTreeMap;

use image::{Rgb, RgbImage};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::world::{ClassInfo, World, Zone};
use crate::scene::{palette_color, Annotation, LabelGrid, Scene, PALETTE};
use crate::vocab::{Role, TargetLists};

/// Environment word baked into the static aerial prompt.
pub const STATIC_ENVIRONMENT_WORD: &str = "shade";

/// Every palette class, safe when it is a built-in positive target.
pub fn default_class_table() -> Vec<ClassInfo> {
    let positives = TargetLists::builtin().positives;
    PALETTE
        .iter()
        .map(|(name, _)| ClassInfo {
            name: name.to_string(),
            safe: positives.iter().any(|p| p == name),
        })
        .collect()
}

fn class_id(table: &[ClassInfo], name: &str) -> u16 {
    table
        .iter()
        .position(|c| c.name == name)
        .unwrap_or_else(|| panic!("class {name} not in table")) as u16
}

/// Small position-keyed brightness jitter so frames are not flat colour.
fn texture(x: u32, y: u32) -> i16 {
    let mut h = (x.wrapping_mul(0x9E37_79B1)) ^ (y.wrapping_mul(0x85EB_CA77));
    h ^= h >> 15;
    h = h.wrapping_mul(0x2C1B_3C6D);
    h ^= h >> 12;
    (h % 17) as i16 - 8
}

fn render(ids: &[u16], width: u32, height: u32, table: &[ClassInfo]) -> RgbImage {
    RgbImage::from_fn(width, height, |x, y| {
        let class = &table[ids[(y * width + x) as usize] as usize].name;
        let base = palette_color(class).unwrap_or([128, 128, 128]);
        let j = texture(x, y);
        Rgb(base.map(|c| (i16::from(c) + j).clamp(0, 255) as u8))
    })
}

fn build(name: &str, ids: Vec<u16>, width: u32, height: u32, mpp: f64) -> World {
    let table = default_class_table();
    let ortho = render(&ids, width, height, &table);
    World::new(name, ortho, ids, mpp, table).expect("synthetic world is consistent")
}

/// A world covered by one class.
pub fn uniform(name: &str, width: u32, height: u32, meters_per_pixel: f64, class: &str) -> World {
    let id = class_id(&default_class_table(), class);
    build(
        name,
        vec![id; (width * height) as usize],
        width,
        height,
        meters_per_pixel,
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Disk {
    pub cx: f64,
    pub cy: f64,
    pub r: f64,
    pub class: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
    pub class: String,
}

fn paint_disk(ids: &mut [u16], width: u32, height: u32, d: &Disk, id: u16) {
    let y0 = (d.cy - d.r).floor().max(0.0) as u32;
    let y1 = ((d.cy + d.r).ceil().max(0.0) as u32).min(height);
    let x0 = (d.cx - d.r).floor().max(0.0) as u32;
    let x1 = ((d.cx + d.r).ceil().max(0.0) as u32).min(width);
    for y in y0..y1 {
        for x in x0..x1 {
            let (px, py) = (f64::from(x) + 0.5, f64::from(y) + 0.5);
            if (px - d.cx).hypot(py - d.cy) <= d.r {
                ids[(y * width + x) as usize] = id;
            }
        }
    }
}

fn paint_rect(ids: &mut [u16], width: u32, height: u32, r: &Rect, id: u16) {
    for y in r.y..(r.y + r.height).min(height) {
        for x in r.x..(r.x + r.width).min(width) {
            ids[(y * width + x) as usize] = id;
        }
    }
}

/// Background class with disks painted in order.
pub fn disks(
    name: &str,
    width: u32,
    height: u32,
    meters_per_pixel: f64,
    background: &str,
    disks: &[Disk],
) -> World {
    shapes(
        name,
        width,
        height,
        meters_per_pixel,
        background,
        disks,
        &[],
    )
}

/// Background class, then rectangles, then disks.
pub fn shapes(
    name: &str,
    width: u32,
    height: u32,
    meters_per_pixel: f64,
    background: &str,
    disks: &[Disk],
    rects: &[Rect],
) -> World {
    let table = default_class_table();
    let mut ids = vec![class_id(&table, background); (width * height) as usize];
    for r in rects {
        paint_rect(&mut ids, width, height, r, class_id(&table, &r.class));
    }
    for d in disks {
        paint_disk(&mut ids, width, height, d, class_id(&table, &d.class));
    }
    build(name, ids, width, height, meters_per_pixel)
}

/// Parameters of the tiled domain-shift world.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DomainShiftSpec {
    /// Tiles per side.
    pub tiles: u32,
    pub tile_px: u32,
    pub meters_per_pixel: f64,
    /// Fraction of tiles whose environment word differs from the static prompt's.
    pub wrong_fraction: f64,
    pub disks_per_tile: u32,
    pub disk_radius_px: (f64, f64),
    pub rects_per_tile: u32,
}

impl Default for DomainShiftSpec {
    fn default() -> Self {
        Self {
            tiles: 2,
            tile_px: 160,
            meters_per_pixel: 1.0,
            wrong_fraction: 1.0,
            disks_per_tile: 3,
            disk_radius_px: (7.0, 12.0),
            rects_per_tile: 4,
        }
    }
}

/// A domain-shift world together with the ground truth the suite needs.
#[derive(Clone, Debug)]
pub struct DomainShiftWorld {
    pub world: World,
    /// Planted environment word per tile, row-major.
    pub tile_words: Vec<String>,
    /// Tiles where the static prompt's environment word is wrong.
    pub static_wrong_tiles: usize,
}

/// Negative-class background per tile with scattered safe disks and
/// obstacle rectangles. Each tile plants `frame = image` and its own
/// environment word.
pub fn domain_shift_world(seed: u64, spec: &DomainShiftSpec) -> DomainShiftWorld {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_tiles = (spec.tiles * spec.tiles) as usize;
    let wrong =
        ((spec.wrong_fraction.clamp(0.0, 1.0) * n_tiles as f64).round() as usize).min(n_tiles);
    let others: Vec<&str> = [
        "sunny", "rainy", "foggy", "snow", "bright", "dark", "cloudy", "heat",
    ]
    .to_vec();
    let mut tile_words: Vec<String> = (0..n_tiles)
        .map(|i| {
            if i < wrong {
                others.choose(&mut rng).expect("non-empty").to_string()
            } else {
                STATIC_ENVIRONMENT_WORD.to_string()
            }
        })
        .collect();
    tile_words.shuffle(&mut rng);

    let size = spec.tiles * spec.tile_px;
    let backgrounds = ["water", "road", "building"];
    let safe = ["grass", "open-field", "garden"];
    let obstacles = ["building", "house", "tree", "car", "water"];
    let table = default_class_table();
    let mut ids = vec![0u16; (size * size) as usize];
    let mut zones = Vec::with_capacity(n_tiles);
    for ty in 0..spec.tiles {
        for tx in 0..spec.tiles {
            let (ox, oy) = (tx * spec.tile_px, ty * spec.tile_px);
            let bg = class_id(&table, backgrounds.choose(&mut rng).expect("non-empty"));
            for y in oy..oy + spec.tile_px {
                for x in ox..ox + spec.tile_px {
                    ids[(y * size + x) as usize] = bg;
                }
            }
            let t = f64::from(spec.tile_px);
            for _ in 0..spec.rects_per_tile {
                let w = rng.gen_range(8..=24u32);
                let h = rng.gen_range(8..=24u32);
                let r = Rect {
                    x: ox + rng.gen_range(0..spec.tile_px - w),
                    y: oy + rng.gen_range(0..spec.tile_px - h),
                    width: w,
                    height: h,
                    class: obstacles.choose(&mut rng).expect("non-empty").to_string(),
                };
                paint_rect(&mut ids, size, size, &r, class_id(&table, &r.class));
            }
            for _ in 0..spec.disks_per_tile {
                let r = rng.gen_range(spec.disk_radius_px.0..=spec.disk_radius_px.1);
                let d = Disk {
                    cx: f64::from(ox) + rng.gen_range(r..t - r),
                    cy: f64::from(oy) + rng.gen_range(r..t - r),
                    r,
                    class: safe.choose(&mut rng).expect("non-empty").to_string(),
                };
                paint_disk(&mut ids, size, size, &d, class_id(&table, &d.class));
            }
            let word = &tile_words[(ty * spec.tiles + tx) as usize];
            zones.push(Zone {
                x: ox,
                y: oy,
                width: spec.tile_px,
                height: spec.tile_px,
                tags: BTreeMap::from([
                    (Role::Frame, "image".to_string()),
                    (Role::Environment, word.clone()),
                ]),
            });
        }
    }
    let mut world = build(
        &format!("domain-shift-{seed}"),
        ids,
        size,
        size,
        spec.meters_per_pixel,
    );
    world.zones = zones;
    let static_wrong_tiles = tile_words
        .iter()
        .filter(|w| *w != STATIC_ENVIRONMENT_WORD)
        .count();
    DomainShiftWorld {
        world,
        tile_words,
        static_wrong_tiles,
    }
}

/// A single labelled frame for segmentation-quality suites: a background
/// class with a few disks and rectangles, tagged with `tags`.
pub fn labeled_scene(seed: u64, size: u32, tags: &BTreeMap<Role, String>) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let table = default_class_table();
    let all: Vec<&str> = table.iter().map(|c| c.name.as_str()).collect();
    let bg = *all.choose(&mut rng).expect("non-empty");
    let mut ids = vec![class_id(&table, bg); (size * size) as usize];
    let s = f64::from(size);
    for _ in 0..rng.gen_range(2..=4) {
        let w = rng.gen_range(size / 8..=size / 3);
        let h = rng.gen_range(size / 8..=size / 3);
        let r = Rect {
            x: rng.gen_range(0..size - w),
            y: rng.gen_range(0..size - h),
            width: w,
            height: h,
            class: all.choose(&mut rng).expect("non-empty").to_string(),
        };
        paint_rect(&mut ids, size, size, &r, class_id(&table, &r.class));
    }
    for _ in 0..rng.gen_range(1..=3) {
        let r = rng.gen_range(s / 10.0..s / 5.0);
        let d = Disk {
            cx: rng.gen_range(r..s - r),
            cy: rng.gen_range(r..s - r),
            r,
            class: all.choose(&mut rng).expect("non-empty").to_string(),
        };
        paint_disk(&mut ids, size, size, &d, class_id(&table, &d.class));
    }
    let image = render(&ids, size, size, &table);
    let classes = table.iter().map(|c| c.name.clone()).collect();
    let labels = LabelGrid::new(size, size, classes, ids).expect("sized above");
    Scene::annotated(
        image,
        Annotation {
            tags: tags.clone(),
            labels: Some(labels),
            majority_class: None,
        },
    )
}
