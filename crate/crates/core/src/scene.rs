//! Camera frames and the synthetic ground truth that may travel with them.
//!
//! Real frames carry only pixels. Frames rendered by the simulator or loaded
//! with a sidecar file also carry an [`Annotation`]: the description words
//! planted for the frame and a per-pixel class grid. The mock backend reads
//! annotations; the graph backend ignores them.

use std::collections::BTreeMap;
use std::path::Path;

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vocab::Role;

/// Class id for pixels with no ground truth (outside the world, for instance).
pub const VOID: u16 = u16::MAX;

/// Per-pixel class ids with a name table.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelGrid {
    pub width: u32,
    pub height: u32,
    /// Index `i` names class id `i`.
    pub classes: Vec<String>,
    pub ids: Vec<u16>,
}

impl LabelGrid {
    pub fn new(width: u32, height: u32, classes: Vec<String>, ids: Vec<u16>) -> Result<Self> {
        if ids.len() != (width as usize) * (height as usize) {
            return Err(Error::Input(format!(
                "label grid {width}x{height} needs {} ids, got {}",
                width as usize * height as usize,
                ids.len()
            )));
        }
        Ok(Self {
            width,
            height,
            classes,
            ids,
        })
    }

    pub fn filled(width: u32, height: u32, classes: Vec<String>, id: u16) -> Self {
        Self {
            width,
            height,
            classes,
            ids: vec![id; width as usize * height as usize],
        }
    }

    pub fn id_at(&self, x: u32, y: u32) -> u16 {
        self.ids[(y * self.width + x) as usize]
    }

    pub fn class_at(&self, x: u32, y: u32) -> Option<&str> {
        self.class_name(self.id_at(x, y))
    }

    pub fn class_name(&self, id: u16) -> Option<&str> {
        self.classes.get(id as usize).map(String::as_str)
    }

    pub fn class_id(&self, name: &str) -> Option<u16> {
        self.classes
            .iter()
            .position(|c| c == name)
            .map(|i| i as u16)
    }

    /// Nearest-neighbour resample to `width`×`height`.
    pub fn resized(&self, width: u32, height: u32) -> Self {
        if width == self.width && height == self.height {
            return self.clone();
        }
        let mut ids = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            let sy = nearest(y, height, self.height);
            for x in 0..width {
                let sx = nearest(x, width, self.width);
                ids.push(self.id_at(sx, sy));
            }
        }
        Self {
            width,
            height,
            classes: self.classes.clone(),
            ids,
        }
    }

    /// Most frequent non-void class; ties go to the lower id.
    pub fn majority_class(&self) -> Option<&str> {
        let mut counts = vec![0usize; self.classes.len()];
        for &id in &self.ids {
            if let Some(c) = counts.get_mut(id as usize) {
                *c += 1;
            }
        }
        let (best, &n) = counts
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))?;
        (n > 0).then(|| self.classes[best].as_str())
    }
}

/// Source index for output index `i` when resampling `dst` cells onto `src`.
pub(crate) fn nearest(i: u32, dst: u32, src: u32) -> u32 {
    let s = ((f64::from(i) + 0.5) * f64::from(src) / f64::from(dst)).floor() as u32;
    s.min(src - 1)
}

/// Synthetic ground truth attached to a frame.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Annotation {
    /// Planted description word per role.
    pub tags: BTreeMap<Role, String>,
    pub labels: Option<LabelGrid>,
    /// Overrides the majority computed from `labels`.
    pub majority_class: Option<String>,
}

impl Annotation {
    pub fn with_tags<I, S>(tags: I) -> Self
    where
        I: IntoIterator<Item = (Role, S)>,
        S: Into<String>,
    {
        Self {
            tags: tags.into_iter().map(|(r, w)| (r, w.into())).collect(),
            ..Self::default()
        }
    }

    pub fn majority(&self) -> Option<&str> {
        self.majority_class
            .as_deref()
            .or_else(|| self.labels.as_ref().and_then(LabelGrid::majority_class))
    }
}

/// One camera frame.
#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub image: RgbImage,
    pub annotation: Option<Annotation>,
}

impl Scene {
    pub fn new(image: RgbImage) -> Self {
        Self {
            image,
            annotation: None,
        }
    }

    pub fn annotated(image: RgbImage, annotation: Annotation) -> Self {
        Self {
            image,
            annotation: Some(annotation),
        }
    }

    pub fn tags(&self) -> Option<&BTreeMap<Role, String>> {
        self.annotation.as_ref().map(|a| &a.tags)
    }

    pub fn ensure_nonempty(&self) -> Result<()> {
        if self.image.width() == 0 || self.image.height() == 0 {
            return Err(Error::Input("zero-sized image".into()));
        }
        Ok(())
    }

    /// Loads a PNG/JPEG frame plus an optional `<stem>.tags.json` sidecar.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let image = image::open(path)
            .map_err(|e| Error::Input(format!("{}: {e}", path.display())))?
            .to_rgb8();
        let sidecar = sidecar_path(path);
        let annotation = if sidecar.exists() {
            let text = std::fs::read_to_string(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
            let file: SidecarFile =
                serde_json::from_str(&text).map_err(|e| Error::schema(&sidecar, &e))?;
            Some(Annotation {
                tags: file.tags,
                labels: None,
                majority_class: file.majority_class,
            })
        } else {
            None
        };
        let scene = Self { image, annotation };
        scene.ensure_nonempty()?;
        Ok(scene)
    }
}

/// `frame.png` → `frame.tags.json`.
pub fn sidecar_path(image_path: &Path) -> std::path::PathBuf {
    let stem = image_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    image_path.with_file_name(format!("{stem}.tags.json"))
}

/// Sidecar schema for annotated frames on disk.
#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SidecarFile {
    #[serde(default)]
    pub tags: BTreeMap<Role, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub majority_class: Option<String>,
}

/// Reference colour for each class the synthetic worlds know about.
pub const PALETTE: &[(&str, [u8; 3])] = &[
    ("grass", [86, 160, 52]),
    ("open-field", [160, 196, 96]),
    ("garden", [58, 122, 44]),
    ("dirt", [142, 104, 62]),
    ("sidewalk", [196, 196, 188]),
    ("road", [64, 64, 70]),
    ("building", [168, 62, 52]),
    ("house", [204, 126, 92]),
    ("water", [34, 92, 196]),
    ("tree", [22, 78, 30]),
    ("car", [222, 214, 40]),
    ("person", [226, 20, 196]),
];

pub fn palette_color(class: &str) -> Option<[u8; 3]> {
    PALETTE.iter().find(|(n, _)| *n == class).map(|(_, c)| *c)
}

/// Nearest palette class for an RGB value.
pub fn classify_color(rgb: [u8; 3]) -> &'static str {
    PALETTE
        .iter()
        .min_by_key(|(_, c)| {
            c.iter()
                .zip(rgb)
                .map(|(&a, b)| {
                    let d = i32::from(a) - i32::from(b);
                    d * d
                })
                .sum::<i32>()
        })
        .map(|(n, _)| *n)
        .expect("palette is non-empty")
}
