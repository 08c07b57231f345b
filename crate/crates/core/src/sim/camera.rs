//! Orthographic downward camera over a [`World`].

use image::{Rgb, RgbImage};

use super::world::World;
use super::UavPose;
use crate::scene::{Annotation, LabelGrid, Scene, VOID};

/// Fill colour for ground outside the map.
pub const BORDER_COLOR: [u8; 3] = [0, 0, 0];

/// Ground side length seen from `altitude_m` with a square field of view.
pub fn footprint_side(altitude_m: f64, fov_deg: f64) -> f64 {
    2.0 * altitude_m * (fov_deg.to_radians() / 2.0).tan()
}

#[derive(Clone, Debug, PartialEq)]
pub struct CameraView {
    /// Frame annotated with the zone tags under the vehicle and cropped labels.
    pub scene: Scene,
    pub footprint_m: f64,
    /// Some of the footprint lies outside the map.
    pub partial: bool,
}

impl CameraView {
    pub fn meters_per_px(&self) -> f64 {
        self.footprint_m / f64::from(self.scene.image.width())
    }
}

/// Renders the square footprint centred on the vehicle at `resolution`²
/// pixels by nearest-neighbour sampling.
pub fn camera_view(world: &World, pose: &UavPose, fov_deg: f64, resolution: u32) -> CameraView {
    let side = footprint_side(pose.altitude.max(1e-6), fov_deg);
    let step = side / f64::from(resolution);
    let (x0, y0) = (pose.x - side / 2.0, pose.y - side / 2.0);
    let mut image = RgbImage::new(resolution, resolution);
    let mut ids = Vec::with_capacity((resolution * resolution) as usize);
    let mut partial = false;
    for j in 0..resolution {
        let wy = y0 + (f64::from(j) + 0.5) * step;
        for i in 0..resolution {
            let wx = x0 + (f64::from(i) + 0.5) * step;
            match world.pixel_at(wx, wy) {
                Some((px, py)) => {
                    image.put_pixel(i, j, *world.ortho.get_pixel(px, py));
                    ids.push(world.labels.id_at(px, py));
                }
                None => {
                    partial = true;
                    image.put_pixel(i, j, Rgb(BORDER_COLOR));
                    ids.push(VOID);
                }
            }
        }
    }
    let labels = LabelGrid::new(resolution, resolution, world.labels.classes.clone(), ids)
        .expect("sized above");
    let annotation = Annotation {
        tags: world.tags_at(pose.x, pose.y).clone(),
        labels: Some(labels),
        majority_class: None,
    };
    CameraView {
        scene: Scene::annotated(image, annotation),
        footprint_m: side,
        partial,
    }
}
