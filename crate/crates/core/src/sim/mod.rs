//! Simulated flights over flat satellite-tile worlds.

mod camera;
mod episode;
mod matrix;
pub mod synth;
mod world;

pub use camera::{camera_view, footprint_side, CameraView, BORDER_COLOR};
pub use episode::{
    run_episode, trace_csv, trace_jsonl, EndReason, Episode, EpisodeResult, EpisodeSetup,
    PromptRecord, TraceRow,
};
pub use matrix::{
    aggregate, paired_seed, run_matrix, start_grid, start_positions, MatrixEpisode, MatrixResult,
    ModeSummary,
};
pub use world::{ClassInfo, World, Zone, WORLD_FORMAT_VERSION, WORLD_MANIFEST};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::VelocityCommand;

/// Flights start here.
pub const START_ALTITUDE_M: f64 = 100.0;
/// Reaching this altitude ends a flight; success depends on the ground below.
pub const SUCCESS_ALTITUDE_M: f64 = 20.0;
/// Hard limit on simulated flight time.
pub const TIMEOUT_S: f64 = 1200.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UavPose {
    pub x: f64,
    pub y: f64,
    pub altitude: f64,
    pub t: f64,
}

/// Euler step; `vz` is positive downwards and altitude never goes below 0.
pub fn kinematics_step(pose: &UavPose, cmd: &VelocityCommand, dt_s: f64) -> UavPose {
    UavPose {
        x: pose.x + cmd.vx * dt_s,
        y: pose.y + cmd.vy * dt_s,
        altitude: (pose.altitude - cmd.vz * dt_s).max(0.0),
        t: pose.t + dt_s,
    }
}

/// Seeded horizontal position-hold error.
#[derive(Clone, Debug)]
pub struct Drift {
    pub std_mps: f64,
    rng: ChaCha8Rng,
}

impl Drift {
    pub fn new(std_mps: f64, rng: ChaCha8Rng) -> Self {
        Self { std_mps, rng }
    }

    pub fn apply(&mut self, pose: &mut UavPose, dt_s: f64) {
        if self.std_mps > 0.0 {
            pose.x += self.std_mps * dt_s * self.rng.sample::<f64, _>(StandardNormal);
            pose.y += self.std_mps * dt_s * self.rng.sample::<f64, _>(StandardNormal);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub fov_deg: f64,
    /// Camera frames are `camera_resolution`² pixels.
    pub camera_resolution: u32,
    pub control_hz: f64,
    pub start_altitude_m: f64,
    pub timeout_s: f64,
    /// Standard deviation of horizontal drift, m/s. Zero disables drift.
    pub drift_std_mps: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            fov_deg: 60.0,
            camera_resolution: 64,
            control_hz: 2.0,
            start_altitude_m: START_ALTITUDE_M,
            timeout_s: TIMEOUT_S,
            drift_std_mps: 0.0,
        }
    }
}

impl SimConfig {
    pub fn dt(&self) -> f64 {
        1.0 / self.control_hz
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Validation(format!("sim: {m}")));
        if !(self.fov_deg > 0.0 && self.fov_deg < 180.0) {
            return bad("fov_deg must lie in (0, 180)");
        }
        if self.camera_resolution < 8 {
            return bad("camera_resolution must be at least 8");
        }
        if !(self.control_hz > 0.0 && self.control_hz.is_finite()) {
            return bad("control_hz must be positive");
        }
        if !(self.timeout_s > 0.0 && self.timeout_s <= TIMEOUT_S) {
            return bad("timeout_s must lie in (0, 1200]");
        }
        if self.start_altitude_m.is_nan()
            || self.start_altitude_m <= 0.0
            || self.drift_std_mps < 0.0
        {
            return bad("start_altitude_m must be positive and drift_std_mps non-negative");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn pose() -> UavPose {
        UavPose {
            x: 3.0,
            y: 4.0,
            altitude: 50.0,
            t: 1.0,
        }
    }

    #[test]
    fn zero_command_holds_position() {
        let p = kinematics_step(&pose(), &VelocityCommand::ZERO, 0.5);
        assert_eq!((p.x, p.y, p.altitude, p.t), (3.0, 4.0, 50.0, 1.5));
    }

    #[test]
    fn integrates_velocity() {
        let p = kinematics_step(
            &pose(),
            &VelocityCommand {
                vx: 2.0,
                vy: -1.0,
                vz: 0.0,
            },
            0.5,
        );
        assert_eq!((p.x, p.y), (4.0, 3.5));
    }

    #[test]
    fn altitude_floor() {
        let low = UavPose {
            altitude: 0.1,
            ..pose()
        };
        let p = kinematics_step(
            &low,
            &VelocityCommand {
                vx: 0.0,
                vy: 0.0,
                vz: 1.0,
            },
            0.5,
        );
        assert_eq!(p.altitude, 0.0);
    }

    #[test]
    fn drift_is_seeded_and_off_by_default() {
        let mut p = pose();
        Drift::new(0.0, ChaCha8Rng::seed_from_u64(1)).apply(&mut p, 0.5);
        assert_eq!(p, pose());
        let (mut a, mut b) = (pose(), pose());
        Drift::new(0.3, ChaCha8Rng::seed_from_u64(1)).apply(&mut a, 0.5);
        Drift::new(0.3, ChaCha8Rng::seed_from_u64(1)).apply(&mut b, 0.5);
        assert_eq!(a, b);
        assert_ne!(a, pose());
    }

    #[test]
    fn config_validation() {
        assert!(SimConfig::default().validate().is_ok());
        let c = SimConfig {
            timeout_s: 1500.0,
            ..SimConfig::default()
        };
        assert!(c.validate().is_err());
        assert!(serde_json::from_str::<SimConfig>(r#"{"fps": 3}"#).is_err());
    }
}
