//! Landing-spot choice from a safety heatmap via a Euclidean distance transform.

use serde::{Deserialize, Serialize};

use crate::fusion::SafetyHeatmap;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LandingTarget {
    /// Pixel column and row in the heatmap.
    pub pixel: (u32, u32),
    /// Heatmap value at `pixel`.
    pub confidence: f64,
    /// Distance in pixels to the nearest unsafe pixel or the image border.
    pub clearance_px: f64,
}

/// Squared distance from every cell to the nearest `true` cell.
///
/// Separable lower-envelope algorithm (Felzenszwalb & Huttenlocher), linear
/// in the number of cells. Cells with no feature anywhere get `f64::INFINITY`.
pub fn squared_edt(features: &[bool], width: usize, height: usize) -> Vec<f64> {
    assert_eq!(features.len(), width * height);
    let mut grid: Vec<f64> = features
        .iter()
        .map(|&f| if f { 0.0 } else { f64::INFINITY })
        .collect();
    let mut buf = Vec::new();
    for x in 0..width {
        buf.clear();
        buf.extend((0..height).map(|y| grid[y * width + x]));
        let out = edt_1d(&buf);
        for (y, v) in out.into_iter().enumerate() {
            grid[y * width + x] = v;
        }
    }
    for y in 0..height {
        let row = edt_1d(&grid[y * width..(y + 1) * width]);
        grid[y * width..(y + 1) * width].copy_from_slice(&row);
    }
    grid
}

/// One-dimensional squared distance transform of a sampled function.
fn edt_1d(f: &[f64]) -> Vec<f64> {
    let n = f.len();
    let mut d = vec![f64::INFINITY; n];
    let finite: Vec<usize> = (0..n).filter(|&q| f[q].is_finite()).collect();
    let Some(&first) = finite.first() else {
        return d;
    };
    // parabola vertices and the boundaries between them
    let mut v = vec![first; n];
    let mut z = vec![f64::INFINITY; n + 1];
    z[0] = f64::NEG_INFINITY;
    let mut k = 0usize;
    let intersect = |q: usize, p: usize| {
        ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64))
    };
    for &q in &finite[1..] {
        let mut s = intersect(q, v[k]);
        while s <= z[k] {
            k -= 1;
            s = intersect(q, v[k]);
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    let mut k = 0;
    for (q, out) in d.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let dq = q as f64 - v[k] as f64;
        *out = dq * dq + f[v[k]];
    }
    d
}

/// Distance from every pixel to the nearest pixel below `threshold`, treating
/// everything outside the image as unsafe.
pub fn clearance_map(heatmap: &SafetyHeatmap, threshold: f64) -> Vec<f64> {
    let (w, h) = (heatmap.width as usize, heatmap.height as usize);
    let (pw, ph) = (w + 2, h + 2);
    let mut unsafe_ = vec![true; pw * ph];
    for y in 0..h {
        for x in 0..w {
            unsafe_[(y + 1) * pw + x + 1] = heatmap.values[y * w + x] < threshold;
        }
    }
    let sq = squared_edt(&unsafe_, pw, ph);
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            out.push(sq[(y + 1) * pw + x + 1].sqrt());
        }
    }
    out
}

/// Picks the safe pixel with the most clearance, preferring the image centre
/// on ties. `min_clearance_px` is the safety radius converted to pixels.
pub fn select_target(
    heatmap: &SafetyHeatmap,
    threshold: f64,
    min_clearance_px: f64,
) -> Option<LandingTarget> {
    let clearance = clearance_map(heatmap, threshold);
    let (w, h) = (heatmap.width, heatmap.height);
    let (cx, cy) = (f64::from(w) / 2.0, f64::from(h) / 2.0);
    let mut best: Option<(f64, f64, usize)> = None;
    for (i, &c) in clearance.iter().enumerate() {
        if heatmap.values[i] < threshold || c < min_clearance_px || c == 0.0 {
            continue;
        }
        let (x, y) = ((i % w as usize) as f64 + 0.5, (i / w as usize) as f64 + 0.5);
        let centre_dist = (x - cx).hypot(y - cy);
        let better = match best {
            None => true,
            Some((bc, bd, _)) => c > bc || (c == bc && centre_dist < bd),
        };
        if better {
            best = Some((c, centre_dist, i));
        }
    }
    best.map(|(c, _, i)| LandingTarget {
        pixel: ((i % w as usize) as u32, (i / w as usize) as u32),
        confidence: heatmap.values[i],
        clearance_px: c,
    })
}
