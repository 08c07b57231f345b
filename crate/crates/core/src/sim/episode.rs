//! One flight from the start altitude to landing, timeout or leaving the map.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::camera::camera_view;
use super::world::World;
use super::{kinematics_step, Drift, SimConfig, UavPose};
use crate::backend::InferenceBackend;
use crate::error::{Error, Result};
use crate::fusion::{fuse_pipeline, CollapseMode};
use crate::policy::{
    LandingPolicy, LandingTarget, MachineState, Observation, PolicyConfig, VelocityCommand,
};
use crate::prompt::{PromptEngine, PromptMode, PromptSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EndReason {
    #[serde(rename = "reached_20m_over_safe")]
    ReachedOverSafe,
    /// Reached the success altitude above ground that is not safe.
    #[serde(rename = "reached_20m_over_unsafe")]
    ReachedOverUnsafe,
    #[serde(rename = "timeout")]
    Timeout,
    #[serde(rename = "left_world")]
    LeftWorld,
}

impl EndReason {
    pub fn as_str(self) -> &'static str {
        match self {
            EndReason::ReachedOverSafe => "reached_20m_over_safe",
            EndReason::ReachedOverUnsafe => "reached_20m_over_unsafe",
            EndReason::Timeout => "timeout",
            EndReason::LeftWorld => "left_world",
        }
    }
}

/// Prompts in force from `frame` onwards.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub frame: u64,
    pub prompts: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub world: String,
    pub mode: PromptMode,
    pub seed: u64,
    pub success: bool,
    pub reason: EndReason,
    pub horizontal_distance_m: f64,
    pub elapsed_s: f64,
    pub final_state: MachineState,
    pub path: Vec<UavPose>,
    pub prompts_used: Vec<PromptRecord>,
}

/// Per-tick record; `state` is the state after the controller step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub altitude: f64,
    pub state: MachineState,
    pub heatmap_center: f64,
    pub command: VelocityCommand,
    pub target: Option<LandingTarget>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    pub result: EpisodeResult,
    pub trace: Vec<TraceRow>,
}

/// Shared, read-only inputs of a flight.
#[derive(Clone, Copy)]
pub struct EpisodeSetup<'a> {
    pub world: &'a World,
    pub backend: &'a dyn InferenceBackend,
    pub engine: &'a PromptEngine,
    pub policy: &'a PolicyConfig,
    pub sim: &'a SimConfig,
    pub collapse: CollapseMode,
}

fn path_length(path: &[UavPose]) -> f64 {
    path.windows(2)
        .map(|w| (w[1].x - w[0].x).hypot(w[1].y - w[0].y))
        .sum()
}

/// Flies from `start` at the configured start altitude.
///
/// Each tick renders the camera, refreshes prompts when due or when the
/// controller changed state, fuses a heatmap, steps the controller and
/// integrates its command.
pub fn run_episode(setup: &EpisodeSetup<'_>, start: (f64, f64), seed: u64) -> Result<Episode> {
    let EpisodeSetup {
        world,
        backend,
        engine,
        policy: policy_cfg,
        sim,
        collapse,
    } = *setup;
    sim.validate()?;
    if !world.contains(start.0, start.1) {
        return Err(Error::Input(format!(
            "start ({}, {}) lies outside world {}",
            start.0, start.1, world.name
        )));
    }
    let dt = sim.dt();
    let mut policy = LandingPolicy::new(policy_cfg.clone(), seed)?;
    let mut drift = Drift::new(
        sim.drift_std_mps,
        ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_D81F),
    );
    let mut pose = UavPose {
        x: start.0,
        y: start.1,
        altitude: sim.start_altitude_m,
        t: 0.0,
    };
    let mut path = vec![pose];
    let mut trace = Vec::new();
    let mut prompts_used: Vec<PromptRecord> = Vec::new();
    let mut cache: Option<PromptSet> = None;
    let mut prev_state = policy.state();
    let mut frame: u64 = 0;

    let reason = loop {
        if pose.altitude <= policy_cfg.success_altitude_m {
            break if world.is_safe_at(pose.x, pose.y) {
                EndReason::ReachedOverSafe
            } else {
                EndReason::ReachedOverUnsafe
            };
        }
        if pose.t >= sim.timeout_s {
            break EndReason::Timeout;
        }

        let view = camera_view(world, &pose, sim.fov_deg, sim.camera_resolution);
        let state_changed = policy.state() != prev_state;
        prev_state = policy.state();
        let (prompts, regenerated) =
            engine.maybe_regenerate(cache.as_ref(), &view.scene, backend, frame, state_changed)?;
        if regenerated {
            let texts: Vec<String> = prompts.texts().map(str::to_owned).collect();
            if prompts_used.last().is_none_or(|r| r.prompts != texts) {
                prompts_used.push(PromptRecord {
                    frame,
                    prompts: texts,
                });
            }
        }
        let heatmap = fuse_pipeline(&view.scene, &prompts, backend, collapse)?;
        let mpp = view.footprint_m / f64::from(heatmap.width);
        let obs = Observation::from_heatmap(
            &heatmap,
            policy.state(),
            policy_cfg,
            pose.altitude,
            pose.t,
            dt,
            mpp,
        );
        let out = policy.step(&obs)?;
        trace.push(TraceRow {
            t: pose.t,
            x: pose.x,
            y: pose.y,
            altitude: pose.altitude,
            state: out.state,
            heatmap_center: obs.center_value,
            command: out.command,
            target: obs.target,
        });
        cache = Some(prompts);

        frame += 1;
        let mut next = kinematics_step(&pose, &out.command, dt);
        // re-derive time from the tick count so it never accumulates error
        next.t = frame as f64 * dt;
        drift.apply(&mut next, dt);
        if !world.contains(next.x, next.y) {
            next.x = next.x.clamp(0.0, world.width_m() - 1e-9);
            next.y = next.y.clamp(0.0, world.height_m() - 1e-9);
            path.push(next);
            pose = next;
            break EndReason::LeftWorld;
        }
        pose = next;
        path.push(pose);
    };

    let result = EpisodeResult {
        world: world.name.clone(),
        mode: engine.config.mode,
        seed,
        success: reason == EndReason::ReachedOverSafe,
        reason,
        horizontal_distance_m: path_length(&path),
        elapsed_s: pose.t.min(sim.timeout_s),
        final_state: policy.state(),
        path,
        prompts_used,
    };
    Ok(Episode { result, trace })
}

/// `t,x,y,altitude,state,heatmap_center` rows with a header line.
pub fn trace_csv(trace: &[TraceRow]) -> String {
    let mut out = String::from("t,x,y,altitude,state,heatmap_center\n");
    for r in trace {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.t, r.x, r.y, r.altitude, r.state, r.heatmap_center
        );
    }
    out
}

#[derive(Serialize)]
struct EventLine<'a> {
    t: f64,
    state: MachineState,
    pose: [f64; 3],
    command: &'a VelocityCommand,
    target: &'a Option<LandingTarget>,
    heatmap_center: f64,
}

/// One JSON object per tick.
pub fn trace_jsonl(trace: &[TraceRow]) -> String {
    let mut out = String::new();
    for r in trace {
        let line = EventLine {
            t: r.t,
            state: r.state,
            pose: [r.x, r.y, r.altitude],
            command: &r.command,
            target: &r.target,
            heatmap_center: r.heatmap_center,
        };
        out.push_str(&serde_json::to_string(&line).expect("event serializes"));
        out.push('\n');
    }
    out
}
