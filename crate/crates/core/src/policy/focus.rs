//! State-dependent circular masking of the heatmap.

use serde::{Deserialize, Serialize};

use crate::fusion::SafetyHeatmap;

/// Circle centred on the image, radius as a fraction of half the shorter side.
/// A fraction of 1.0 or more keeps the whole frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FocusMask {
    pub radius_fraction: f64,
}

impl FocusMask {
    pub fn new(radius_fraction: f64) -> Option<Self> {
        (radius_fraction > 0.0 && radius_fraction.is_finite()).then_some(Self { radius_fraction })
    }

    pub fn is_full_frame(&self) -> bool {
        self.radius_fraction >= 1.0
    }

    pub fn radius_px(&self, width: u32, height: u32) -> f64 {
        self.radius_fraction * f64::from(width.min(height)) / 2.0
    }

    /// Whether the centre of pixel `(x, y)` lies inside the circle.
    pub fn contains(&self, width: u32, height: u32, x: u32, y: u32) -> bool {
        if self.is_full_frame() {
            return true;
        }
        let (cx, cy) = (f64::from(width) / 2.0, f64::from(height) / 2.0);
        let (px, py) = (f64::from(x) + 0.5, f64::from(y) + 0.5);
        (px - cx).hypot(py - cy) <= self.radius_px(width, height)
    }

    /// Zeroes every pixel outside the circle.
    pub fn apply(&self, heatmap: &SafetyHeatmap) -> SafetyHeatmap {
        let mut out = heatmap.clone();
        if self.is_full_frame() {
            return out;
        }
        for y in 0..heatmap.height {
            for x in 0..heatmap.width {
                if !self.contains(heatmap.width, heatmap.height, x, y) {
                    out.set(x, y, 0.0);
                }
            }
        }
        out
    }
}
