//! Fusing per-prompt segmentations into a single safety heatmap.
//!
//! One logit channel per prompt, softmax across channels at every pixel,
//! negative channels dropped, and the remaining positive probabilities
//! collapsed into one value per pixel.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backend::{InferenceBackend, LogitMap};
use crate::error::{Error, Result};
use crate::prompt::PromptSet;
use crate::scene::Scene;

/// Raw logits, one channel per prompt, in prompt order.
#[derive(Clone, Debug, PartialEq)]
pub struct LogitStack {
    pub width: u32,
    pub height: u32,
    pub channels: Vec<LogitMap>,
}

impl LogitStack {
    pub fn new(channels: Vec<LogitMap>) -> Result<Self> {
        let first = channels
            .first()
            .ok_or_else(|| Error::Contract("logit stack needs at least one channel".into()))?;
        let (width, height) = (first.width, first.height);
        if let Some(i) = channels
            .iter()
            .position(|c| c.width != width || c.height != height)
        {
            return Err(Error::Contract(format!(
                "channel {i} is {}x{}, expected {width}x{height}",
                channels[i].width, channels[i].height
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
        })
    }

    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }

    fn pixels(&self) -> usize {
        self.width as usize * self.height as usize
    }
}

/// Per-pixel probabilities across channels.
#[derive(Clone, Debug, PartialEq)]
pub struct FusedStack {
    pub width: u32,
    pub height: u32,
    pub channels: Vec<Vec<f64>>,
}

/// The first `x` channels of a [`FusedStack`].
#[derive(Clone, Debug, PartialEq)]
pub struct PositiveChannels {
    pub width: u32,
    pub height: u32,
    pub channels: Vec<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CollapseMode {
    /// Probability that a pixel belongs to any positive class.
    #[default]
    Sum,
    /// Strongest single positive class.
    Max,
}

/// Which prompts produced a heatmap.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub prompts: Vec<String>,
    pub x: usize,
    pub y: usize,
    pub frame_index: u64,
}

impl Provenance {
    pub fn of(set: &PromptSet) -> Self {
        Self {
            prompts: set.texts().map(str::to_string).collect(),
            x: set.x,
            y: set.y,
            frame_index: set.frame_index,
        }
    }
}

/// Per-pixel probability of safe ground, row-major, values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SafetyHeatmap {
    pub width: u32,
    pub height: u32,
    pub values: Vec<f64>,
    pub provenance: Option<Provenance>,
}

impl SafetyHeatmap {
    pub fn new(width: u32, height: u32, values: Vec<f64>) -> Result<Self> {
        if values.len() != width as usize * height as usize {
            return Err(Error::Contract(format!(
                "heatmap {width}x{height} needs {} values, got {}",
                width as usize * height as usize,
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Contract(format!("heatmap value {v} outside [0, 1]")));
        }
        Ok(Self {
            width,
            height,
            values,
            provenance: None,
        })
    }

    pub fn filled(width: u32, height: u32, value: f64) -> Self {
        Self {
            width,
            height,
            values: vec![value; width as usize * height as usize],
            provenance: None,
        }
    }

    pub fn at(&self, x: u32, y: u32) -> f64 {
        self.values[(y * self.width + x) as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, v: f64) {
        self.values[(y * self.width + x) as usize] = v;
    }

    /// Value at the pixel containing the image centre.
    pub fn center_value(&self) -> f64 {
        self.at(self.width / 2, self.height / 2)
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len().max(1) as f64
    }

    /// Nearest-neighbour resample.
    pub fn resized(&self, width: u32, height: u32) -> Self {
        if (width, height) == (self.width, self.height) {
            return self.clone();
        }
        let mut values = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            let sy = crate::scene::nearest(y, height, self.height);
            for x in 0..width {
                values.push(self.at(crate::scene::nearest(x, width, self.width), sy));
            }
        }
        Self {
            width,
            height,
            values,
            provenance: self.provenance.clone(),
        }
    }

    /// Binary 16-bit portable graymap (`P5`, maxval 65535, big-endian samples).
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n65535\n", self.width, self.height).into_bytes();
        out.reserve(self.values.len() * 2);
        for v in &self.values {
            let q = (v.clamp(0.0, 1.0) * 65535.0).round() as u16;
            out.extend_from_slice(&q.to_be_bytes());
        }
        out
    }

    /// Parses a 16-bit `P5` graymap written by [`SafetyHeatmap::to_pgm`].
    pub fn from_pgm(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Input(format!("pgm: {m}"));
        let mut fields = Vec::new();
        let mut pos = 0;
        while fields.len() < 4 {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(bad("truncated header"));
            }
            fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("header"))?);
        }
        pos += 1;
        if fields[0] != "P5" || fields[3] != "65535" {
            return Err(bad("expected 16-bit P5"));
        }
        let w: u32 = fields[1].parse().map_err(|_| bad("width"))?;
        let h: u32 = fields[2].parse().map_err(|_| bad("height"))?;
        let data = bytes.get(pos..).ok_or_else(|| bad("missing data"))?;
        if data.len() != w as usize * h as usize * 2 {
            return Err(bad("data length"));
        }
        let values = data
            .chunks_exact(2)
            .map(|c| f64::from(u16::from_be_bytes([c[0], c[1]])) / 65535.0)
            .collect();
        Self::new(w, h, values)
    }
}

fn with_prompt(err: Error, index: usize, prompt: &str) -> Error {
    let ctx = |m: String| format!("prompt #{index} {prompt:?}: {m}");
    match err {
        Error::Backend(m) => Error::Backend(ctx(m)),
        Error::Input(m) => Error::Input(ctx(m)),
        Error::Computation(m) => Error::Computation(ctx(m)),
        Error::Contract(m) => Error::Contract(ctx(m)),
        Error::Validation(m) => Error::Validation(ctx(m)),
        other => other,
    }
}

/// One `segment` call per prompt. Calls may run concurrently; channel order
/// always follows prompt order.
pub fn segment_all(
    scene: &Scene,
    prompts: &PromptSet,
    backend: &dyn InferenceBackend,
) -> Result<LogitStack> {
    if prompts.is_empty() {
        return Err(Error::Contract("empty prompt set".into()));
    }
    let channels = prompts
        .prompts
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            backend
                .segment(scene, &p.text)
                .map_err(|e| with_prompt(e, i, &p.text))
        })
        .collect::<Result<Vec<_>>>()?;
    LogitStack::new(channels)
}

/// Softmax across channels at every pixel, stabilised by the per-pixel max.
pub fn softmax_fuse(stack: &LogitStack) -> Result<FusedStack> {
    if stack.is_empty() {
        return Err(Error::Contract("softmax over zero channels".into()));
    }
    let k = stack.len();
    let n = stack.pixels();
    let mut channels = vec![vec![0.0f64; n]; k];
    let mut exps = vec![0.0f64; k];
    #[allow(clippy::needless_range_loop)]
    for p in 0..n {
        let mut max = f64::NEG_INFINITY;
        for (c, ch) in stack.channels.iter().enumerate() {
            let v = f64::from(ch.values[p]);
            if !v.is_finite() {
                return Err(Error::Computation(format!(
                    "non-finite logit {v} at pixel ({}, {}) in channel {c}",
                    p % stack.width as usize,
                    p / stack.width as usize
                )));
            }
            max = max.max(v);
        }
        let mut total = 0.0;
        for (c, ch) in stack.channels.iter().enumerate() {
            exps[c] = (f64::from(ch.values[p]) - max).exp();
            total += exps[c];
        }
        for c in 0..k {
            channels[c][p] = exps[c] / total;
        }
    }
    Ok(FusedStack {
        width: stack.width,
        height: stack.height,
        channels,
    })
}

/// Keeps the first `x` channels unchanged; no renormalisation.
pub fn drop_negatives(fused: &FusedStack, x: usize, y: usize) -> Result<PositiveChannels> {
    if x + y != fused.channels.len() {
        return Err(Error::Contract(format!(
            "x + y = {} but the stack has {} channels",
            x + y,
            fused.channels.len()
        )));
    }
    if x == 0 {
        return Err(Error::Contract("no positive channels".into()));
    }
    Ok(PositiveChannels {
        width: fused.width,
        height: fused.height,
        channels: fused.channels[..x].to_vec(),
    })
}

/// Reduces positive channels to one value per pixel.
pub fn collapse(positive: &PositiveChannels, mode: CollapseMode) -> SafetyHeatmap {
    let n = positive.width as usize * positive.height as usize;
    let values = (0..n)
        .map(|p| {
            let it = positive.channels.iter().map(|c| c[p]);
            let v = match mode {
                CollapseMode::Sum => it.sum::<f64>(),
                CollapseMode::Max => it.fold(0.0, f64::max),
            };
            v.clamp(0.0, 1.0)
        })
        .collect();
    SafetyHeatmap {
        width: positive.width,
        height: positive.height,
        values,
        provenance: None,
    }
}

/// Heatmap from an existing logit stack (softmax, drop negatives, collapse).
pub fn fuse_stack(
    stack: &LogitStack,
    x: usize,
    y: usize,
    mode: CollapseMode,
) -> Result<SafetyHeatmap> {
    let fused = softmax_fuse(stack)?;
    let positive = drop_negatives(&fused, x, y)?;
    Ok(collapse(&positive, mode))
}

/// Segment every prompt and fuse the result.
pub fn fuse_pipeline(
    scene: &Scene,
    prompts: &PromptSet,
    backend: &dyn InferenceBackend,
    mode: CollapseMode,
) -> Result<SafetyHeatmap> {
    let stack = segment_all(scene, prompts, backend)?;
    let mut heatmap = fuse_stack(&stack, prompts.x, prompts.y, mode)?;
    heatmap.provenance = Some(Provenance::of(prompts));
    Ok(heatmap)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stack(width: u32, height: u32, channels: &[&[f32]]) -> LogitStack {
        LogitStack::new(
            channels
                .iter()
                .map(|c| LogitMap::new(width, height, c.to_vec()).unwrap())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn equal_logits_split_evenly() {
        let f = softmax_fuse(&stack(2, 1, &[&[3.0, -1.0], &[3.0, -1.0]])).unwrap();
        for ch in &f.channels {
            assert_eq!(ch, &vec![0.5, 0.5]);
        }
    }

    #[test]
    fn hand_softmax_of_two_one_zero() {
        // e²/(e²+e+1), e/(e²+e+1), 1/(e²+e+1)
        let f = softmax_fuse(&stack(1, 1, &[&[2.0], &[1.0], &[0.0]])).unwrap();
        let got: Vec<f64> = f.channels.iter().map(|c| c[0]).collect();
        for (g, want) in got.iter().zip([0.6652, 0.2447, 0.0900]) {
            assert!((g - want).abs() < 1e-3, "{g} vs {want}");
        }
        let heat = collapse(&drop_negatives(&f, 2, 1).unwrap(), CollapseMode::Sum);
        assert!((heat.values[0] - 0.9100).abs() < 1e-3);
        let heat = collapse(&drop_negatives(&f, 2, 1).unwrap(), CollapseMode::Max);
        assert!((heat.values[0] - 0.6652).abs() < 1e-3);
    }

    #[test]
    fn single_channel_is_all_ones() {
        let f = softmax_fuse(&stack(2, 2, &[&[-5.0, 0.0, 3.0, 100.0]])).unwrap();
        let heat = collapse(&drop_negatives(&f, 1, 0).unwrap(), CollapseMode::Sum);
        assert_eq!(heat.values, vec![1.0; 4]);
    }

    #[test]
    fn huge_logits_do_not_overflow() {
        let f = softmax_fuse(&stack(1, 1, &[&[1000.0], &[999.0]])).unwrap();
        assert!((f.channels[0][0] + f.channels[1][0] - 1.0).abs() < 1e-12);
        assert!(f.channels[0][0] > f.channels[1][0]);
    }

    #[test]
    fn non_finite_named() {
        let err = softmax_fuse(&stack(2, 1, &[&[0.0, 0.0], &[0.0, f32::NAN]])).unwrap_err();
        match err {
            Error::Computation(m) => {
                assert!(m.contains("(1, 0)") && m.contains("channel 1"), "{m}");
            }
            other => panic!("{other}"),
        }
        assert!(softmax_fuse(&stack(1, 1, &[&[f32::INFINITY]])).is_err());
    }

    #[test]
    fn drop_negatives_contract() {
        let f = softmax_fuse(&stack(1, 1, &[&[1.0], &[2.0], &[3.0]])).unwrap();
        let p = drop_negatives(&f, 2, 1).unwrap();
        assert_eq!(p.channels, f.channels[..2].to_vec());
        assert!(matches!(drop_negatives(&f, 2, 2), Err(Error::Contract(_))));
        assert_eq!(drop_negatives(&f, 3, 0).unwrap().channels, f.channels);
    }

    #[test]
    fn mismatched_channels_rejected() {
        let r = LogitStack::new(vec![
            LogitMap::filled(2, 2, 0.0),
            LogitMap::filled(2, 3, 0.0),
        ]);
        assert!(matches!(r, Err(Error::Contract(_))));
        assert!(LogitStack::new(vec![]).is_err());
    }

    #[test]
    fn pgm_round_trip_and_header() {
        let h = SafetyHeatmap::new(3, 2, vec![0.0, 0.25, 0.5, 0.75, 1.0, 0.1]).unwrap();
        let bytes = h.to_pgm();
        assert!(bytes.starts_with(b"P5\n3 2\n65535\n"));
        assert_eq!(bytes.len(), 13 + 12);
        assert_eq!(&bytes[13..15], &[0, 0]);
        assert_eq!(&bytes[21..23], &[0xff, 0xff]);
        let back = SafetyHeatmap::from_pgm(&bytes).unwrap();
        for (a, b) in back.values.iter().zip(&h.values) {
            assert!((a - b).abs() <= 0.5 / 65535.0 + 1e-12);
        }
    }

    #[test]
    fn heatmap_range_checked() {
        assert!(SafetyHeatmap::new(1, 1, vec![1.5]).is_err());
        assert!(SafetyHeatmap::new(1, 2, vec![0.5]).is_err());
    }
}
