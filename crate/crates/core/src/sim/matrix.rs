//! Paired comparison of prompt modes over worlds and start positions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::episode::{run_episode, Episode, EpisodeResult, EpisodeSetup};
use super::world::World;
use super::SimConfig;
use crate::backend::InferenceBackend;
use crate::error::{Error, Result};
use crate::fusion::CollapseMode;
use crate::policy::PolicyConfig;
use crate::prompt::{PromptEngine, PromptMode};

/// Seed shared by every mode for one (world, start) cell.
pub fn paired_seed(seed: u64, world_index: usize, start_index: usize) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update((world_index as u64).to_le_bytes());
    h.update((start_index as u64).to_le_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

/// `n` seeded start points in the central half of the world.
pub fn start_positions(world: &World, n: usize, seed: u64) -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (world.width_m(), world.height_m());
    (0..n)
        .map(|_| {
            (
                rng.gen_range(0.25 * w..0.75 * w),
                rng.gen_range(0.25 * h..0.75 * h),
            )
        })
        .collect()
}

/// Evenly spaced `rows`×`cols` starts, cell centres of the world inset by `margin_m`.
pub fn start_grid(world: &World, rows: usize, cols: usize, margin_m: f64) -> Vec<(f64, f64)> {
    let (w, h) = (
        world.width_m() - 2.0 * margin_m,
        world.height_m() - 2.0 * margin_m,
    );
    let mut out = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            out.push((
                margin_m + w * (c as f64 + 0.5) / cols as f64,
                margin_m + h * (r as f64 + 0.5) / rows as f64,
            ));
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct MatrixEpisode {
    pub world_index: usize,
    pub start_index: usize,
    pub start: (f64, f64),
    pub episode: Episode,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeSummary {
    pub mode: PromptMode,
    pub episodes: usize,
    pub successes: usize,
    /// Means over all episodes, successful or not.
    pub mean_distance_m: f64,
    pub mean_time_s: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MatrixResult {
    pub seed: u64,
    pub episodes: Vec<MatrixEpisode>,
    /// One entry per mode, in `PromptMode::ALL` order.
    pub summaries: Vec<ModeSummary>,
}

impl MatrixResult {
    pub fn summary(&self, mode: PromptMode) -> Option<&ModeSummary> {
        self.summaries.iter().find(|s| s.mode == mode)
    }
}

/// Per-mode counts and means, modes in `PromptMode::ALL` order.
pub fn aggregate<'a>(results: impl IntoIterator<Item = &'a EpisodeResult>) -> Vec<ModeSummary> {
    let results: Vec<&EpisodeResult> = results.into_iter().collect();
    PromptMode::ALL
        .iter()
        .filter_map(|&mode| {
            let of_mode: Vec<&&EpisodeResult> = results.iter().filter(|r| r.mode == mode).collect();
            if of_mode.is_empty() {
                return None;
            }
            let n = of_mode.len() as f64;
            Some(ModeSummary {
                mode,
                episodes: of_mode.len(),
                successes: of_mode.iter().filter(|r| r.success).count(),
                mean_distance_m: of_mode.iter().map(|r| r.horizontal_distance_m).sum::<f64>() / n,
                mean_time_s: of_mode.iter().map(|r| r.elapsed_s).sum::<f64>() / n,
            })
        })
        .collect()
}

/// Flies every (world, start, mode) cell. Within a (world, start) cell every
/// mode gets the same start point and seed. Episodes run in parallel; the
/// output order is world, then start, then mode.
#[allow(clippy::too_many_arguments)]
pub fn run_matrix(
    worlds: &[World],
    backend: &dyn InferenceBackend,
    engine: &PromptEngine,
    policy: &PolicyConfig,
    sim: &SimConfig,
    collapse: CollapseMode,
    modes: &[PromptMode],
    n_starts: usize,
    seed: u64,
) -> Result<MatrixResult> {
    if n_starts == 0 {
        return Err(Error::Validation("matrix needs at least one start".into()));
    }
    if modes.is_empty() {
        return Err(Error::Validation("matrix needs at least one mode".into()));
    }
    let engines: Vec<PromptEngine> = modes
        .iter()
        .map(|&m| {
            let mut e = engine.clone();
            e.config.mode = m;
            e
        })
        .collect();
    let mut jobs = Vec::new();
    for (wi, world) in worlds.iter().enumerate() {
        let starts = start_positions(world, n_starts, paired_seed(seed, wi, usize::MAX));
        for (si, &start) in starts.iter().enumerate() {
            for mi in 0..modes.len() {
                jobs.push((wi, si, start, mi));
            }
        }
    }
    let episodes = jobs
        .into_par_iter()
        .map(|(wi, si, start, mi)| {
            let setup = EpisodeSetup {
                world: &worlds[wi],
                backend,
                engine: &engines[mi],
                policy,
                sim,
                collapse,
            };
            let episode = run_episode(&setup, start, paired_seed(seed, wi, si))?;
            Ok(MatrixEpisode {
                world_index: wi,
                start_index: si,
                start,
                episode,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let summaries = aggregate(episodes.iter().map(|e| &e.episode.result));
    Ok(MatrixResult {
        seed,
        episodes,
        summaries,
    })
}
