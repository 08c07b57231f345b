//! Flat satellite-tile worlds and their on-disk form.
//!
//! A world directory holds `world.json`, an RGB orthophoto and a
//! palette-indexed label PNG whose indices are rows of the class table.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{palette_color, LabelGrid};
use crate::vocab::Role;

pub const WORLD_MANIFEST: &str = "world.json";
pub const WORLD_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassInfo {
    pub name: String,
    pub safe: bool,
}

/// Axis-aligned pixel rectangle whose frames carry `tags`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Zone {
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
    pub tags: BTreeMap<Role, String>,
}

impl Zone {
    pub fn contains_px(&self, px: f64, py: f64) -> bool {
        px >= f64::from(self.x)
            && py >= f64::from(self.y)
            && px < f64::from(self.x) + f64::from(self.width)
            && py < f64::from(self.y) + f64::from(self.height)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct World {
    pub name: String,
    pub ortho: RgbImage,
    pub labels: LabelGrid,
    pub meters_per_pixel: f64,
    /// Row `i` describes label id `i`.
    pub class_table: Vec<ClassInfo>,
    /// First matching zone wins; `default_tags` apply elsewhere.
    pub zones: Vec<Zone>,
    pub default_tags: BTreeMap<Role, String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WorldManifest {
    version: u32,
    name: String,
    meters_per_pixel: f64,
    ortho: PathBuf,
    labels: PathBuf,
    class_table: Vec<ClassInfo>,
    #[serde(default)]
    zones: Vec<Zone>,
    #[serde(default)]
    default_tags: BTreeMap<Role, String>,
}

impl World {
    /// Builds a world whose label grid names come from `class_table`.
    pub fn new(
        name: impl Into<String>,
        ortho: RgbImage,
        ids: Vec<u16>,
        meters_per_pixel: f64,
        class_table: Vec<ClassInfo>,
    ) -> Result<Self> {
        let classes = class_table.iter().map(|c| c.name.clone()).collect();
        let labels = LabelGrid::new(ortho.width(), ortho.height(), classes, ids)?;
        let world = Self {
            name: name.into(),
            ortho,
            labels,
            meters_per_pixel,
            class_table,
            zones: Vec::new(),
            default_tags: BTreeMap::new(),
        };
        world.validate()?;
        Ok(world)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Validation(format!("world {}: {m}", self.name)));
        if !(self.meters_per_pixel > 0.0 && self.meters_per_pixel.is_finite()) {
            return bad(format!(
                "meters_per_pixel must be positive, got {}",
                self.meters_per_pixel
            ));
        }
        if self.ortho.width() == 0 || self.ortho.height() == 0 {
            return bad("empty orthophoto".into());
        }
        if (self.ortho.width(), self.ortho.height()) != (self.labels.width, self.labels.height) {
            return bad(format!(
                "orthophoto {}x{} and labels {}x{} differ",
                self.ortho.width(),
                self.ortho.height(),
                self.labels.width,
                self.labels.height
            ));
        }
        if self.class_table.is_empty() || self.class_table.len() > 256 {
            return bad("class table needs 1 to 256 entries".into());
        }
        if let Some(&id) = self
            .labels
            .ids
            .iter()
            .find(|&&id| id as usize >= self.class_table.len())
        {
            return bad(format!("label id {id} has no class table entry"));
        }
        for z in &self.zones {
            if z.x + z.width > self.ortho.width() || z.y + z.height > self.ortho.height() {
                return bad(format!("zone at ({}, {}) leaves the map", z.x, z.y));
            }
        }
        Ok(())
    }

    pub fn width_m(&self) -> f64 {
        f64::from(self.ortho.width()) * self.meters_per_pixel
    }

    pub fn height_m(&self) -> f64 {
        f64::from(self.ortho.height()) * self.meters_per_pixel
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= 0.0 && y >= 0.0 && x < self.width_m() && y < self.height_m()
    }

    /// Pixel under a world point, if inside the map.
    pub fn pixel_at(&self, x: f64, y: f64) -> Option<(u32, u32)> {
        if !self.contains(x, y) {
            return None;
        }
        let px = ((x / self.meters_per_pixel) as u32).min(self.ortho.width() - 1);
        let py = ((y / self.meters_per_pixel) as u32).min(self.ortho.height() - 1);
        Some((px, py))
    }

    pub fn class_at(&self, x: f64, y: f64) -> Option<&ClassInfo> {
        let (px, py) = self.pixel_at(x, y)?;
        self.class_table.get(self.labels.id_at(px, py) as usize)
    }

    /// Whether the ground under `(x, y)` is a safe class.
    pub fn is_safe_at(&self, x: f64, y: f64) -> bool {
        self.class_at(x, y).is_some_and(|c| c.safe)
    }

    pub fn tags_at(&self, x: f64, y: f64) -> &BTreeMap<Role, String> {
        let (px, py) = (x / self.meters_per_pixel, y / self.meters_per_pixel);
        self.zones
            .iter()
            .find(|z| z.contains_px(px, py))
            .map_or(&self.default_tags, |z| &z.tags)
    }

    pub fn safe_classes(&self) -> impl Iterator<Item = &str> {
        self.class_table
            .iter()
            .filter(|c| c.safe)
            .map(|c| c.name.as_str())
    }

    /// Writes `world.json`, `ortho.png` and `labels.png` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let ortho_path = dir.join("ortho.png");
        self.ortho
            .save_with_format(&ortho_path, image::ImageFormat::Png)
            .map_err(|e| Error::Image(format!("{}: {e}", ortho_path.display())))?;
        self.write_label_png(&dir.join("labels.png"))?;
        let manifest = WorldManifest {
            version: WORLD_FORMAT_VERSION,
            name: self.name.clone(),
            meters_per_pixel: self.meters_per_pixel,
            ortho: "ortho.png".into(),
            labels: "labels.png".into(),
            class_table: self.class_table.clone(),
            zones: self.zones.clone(),
            default_tags: self.default_tags.clone(),
        };
        let path = dir.join(WORLD_MANIFEST);
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
    }

    /// Loads a world from a directory or directly from its `world.json`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let manifest_path = if path.is_dir() {
            path.join(WORLD_MANIFEST)
        } else {
            path.to_path_buf()
        };
        let dir = manifest_path.parent().unwrap_or(Path::new("."));
        let text =
            std::fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
        let m: WorldManifest =
            serde_json::from_str(&text).map_err(|e| Error::schema(&manifest_path, &e))?;
        if m.version != WORLD_FORMAT_VERSION {
            return Err(Error::Validation(format!(
                "{}: unsupported world version {}",
                manifest_path.display(),
                m.version
            )));
        }
        let ortho_path = dir.join(&m.ortho);
        let ortho = image::open(&ortho_path)
            .map_err(|e| Error::Input(format!("{}: {e}", ortho_path.display())))?
            .to_rgb8();
        let (w, h, ids) = read_label_png(&dir.join(&m.labels))?;
        if (w, h) != (ortho.width(), ortho.height()) {
            return Err(Error::Validation(format!(
                "{}: labels {w}x{h} do not match orthophoto {}x{}",
                manifest_path.display(),
                ortho.width(),
                ortho.height()
            )));
        }
        let mut world = World::new(m.name, ortho, ids, m.meters_per_pixel, m.class_table)?;
        world.zones = m.zones;
        world.default_tags = m.default_tags;
        world.validate()?;
        Ok(world)
    }

    fn write_label_png(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut enc =
            png::Encoder::new(BufWriter::new(file), self.labels.width, self.labels.height);
        enc.set_color(png::ColorType::Indexed);
        enc.set_depth(png::BitDepth::Eight);
        let palette: Vec<u8> = self
            .class_table
            .iter()
            .enumerate()
            .flat_map(|(i, c)| palette_color(&c.name).unwrap_or([(i * 37 % 256) as u8; 3]))
            .collect();
        enc.set_palette(palette);
        let data: Vec<u8> = self.labels.ids.iter().map(|&id| id as u8).collect();
        let codec = |e: png::EncodingError| Error::Image(format!("{}: {e}", path.display()));
        enc.write_header()
            .map_err(codec)?
            .write_image_data(&data)
            .map_err(codec)
    }
}

fn read_label_png(path: &Path) -> Result<(u32, u32, Vec<u16>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut dec = png::Decoder::new(BufReader::new(file));
    dec.set_transformations(png::Transformations::IDENTITY);
    let codec = |e: png::DecodingError| Error::Image(format!("{}: {e}", path.display()));
    let mut reader = dec.read_info().map_err(codec)?;
    let mut buf = vec![0; reader.output_buffer_size()];
    let info = reader.next_frame(&mut buf).map_err(codec)?;
    if info.color_type != png::ColorType::Indexed || info.bit_depth != png::BitDepth::Eight {
        return Err(Error::Input(format!(
            "{}: label image must be 8-bit palette-indexed, got {:?} {:?}",
            path.display(),
            info.color_type,
            info.bit_depth
        )));
    }
    let (w, h) = (info.width, info.height);
    let mut ids = Vec::with_capacity(w as usize * h as usize);
    for row in buf[..info.buffer_size()].chunks(info.line_size) {
        ids.extend(row[..w as usize].iter().map(|&b| u16::from(b)));
    }
    Ok((w, h, ids))
}
