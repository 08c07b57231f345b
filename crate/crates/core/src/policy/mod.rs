//! Six-state safe-landing controller.
//!
//! | State      | Behaviour                                                  |
//! |------------|------------------------------------------------------------|
//! | Searching  | sweep at the safe altitude until a landing spot appears    |
//! | Aiming     | centre the spot under the vehicle                          |
//! | Landing    | descend, correcting horizontally; stop if the centre turns unsafe |
//! | Waiting    | hover until the centre is safe again or the wait times out |
//! | Climbing   | return to the safe altitude                                |
//! | Restarting | fly one camera footprint in a seeded random direction      |
//!
//! The controller has no odometry: sweep and restart progress are tracked by
//! integrating its own commands.

mod focus;
mod target;

pub use focus::FocusMask;
pub use target::{clearance_map, select_target, squared_edt, LandingTarget};

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::SafetyHeatmap;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MachineState {
    Searching,
    Aiming,
    Landing,
    Waiting,
    Climbing,
    Restarting,
}

impl MachineState {
    pub const ALL: [MachineState; 6] = [
        MachineState::Searching,
        MachineState::Aiming,
        MachineState::Landing,
        MachineState::Waiting,
        MachineState::Climbing,
        MachineState::Restarting,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MachineState::Searching => "searching",
            MachineState::Aiming => "aiming",
            MachineState::Landing => "landing",
            MachineState::Waiting => "waiting",
            MachineState::Climbing => "climbing",
            MachineState::Restarting => "restarting",
        }
    }

    /// Whether the controller may move from `self` to `to` in one step.
    pub fn can_transition(self, to: MachineState) -> bool {
        use MachineState::*;
        self == to
            || matches!(
                (self, to),
                (Searching, Aiming)
                    | (Aiming, Landing)
                    | (Aiming, Searching)
                    | (Landing, Waiting)
                    | (Waiting, Landing)
                    | (Waiting, Climbing)
                    | (Climbing, Restarting)
                    | (Restarting, Searching)
            )
    }
}

impl fmt::Display for MachineState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Velocity in the vehicle frame; `vz` is positive downwards.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VelocityCommand {
    pub vx: f64,
    pub vy: f64,
    pub vz: f64,
}

impl VelocityCommand {
    pub const ZERO: Self = Self {
        vx: 0.0,
        vy: 0.0,
        vz: 0.0,
    };

    pub fn horizontal_speed(&self) -> f64 {
        self.vx.hypot(self.vy)
    }

    /// Scales the horizontal part down to `max_h` and clamps `vz` to `±max_z`.
    pub fn limited(self, max_h: f64, max_z: f64) -> Self {
        let h = self.horizontal_speed();
        let k = if h > max_h && h > 0.0 { max_h / h } else { 1.0 };
        Self {
            vx: self.vx * k,
            vy: self.vy * k,
            vz: self.vz.clamp(-max_z, max_z),
        }
    }
}

/// Focus radius (fraction of half the shorter image side) per state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FocusRadii {
    pub searching: f64,
    pub aiming: f64,
    pub landing: f64,
    pub waiting: f64,
    pub climbing: f64,
    pub restarting: f64,
}

impl Default for FocusRadii {
    fn default() -> Self {
        Self {
            searching: 1.0,
            aiming: 0.5,
            landing: 0.25,
            waiting: 0.25,
            climbing: 1.0,
            restarting: 1.0,
        }
    }
}

impl FocusRadii {
    pub fn for_state(&self, state: MachineState) -> f64 {
        match state {
            MachineState::Searching => self.searching,
            MachineState::Aiming => self.aiming,
            MachineState::Landing => self.landing,
            MachineState::Waiting => self.waiting,
            MachineState::Climbing => self.climbing,
            MachineState::Restarting => self.restarting,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicyConfig {
    /// Heatmap value at or above which a pixel counts as safe.
    pub tau_safe: f64,
    /// Required clearance around a landing spot, metres.
    pub safety_radius_m: f64,
    /// Alignment tolerance as a fraction of the image width.
    pub aim_epsilon_fraction: f64,
    /// Consecutive aligned frames needed before descending.
    pub aim_hold_frames: u32,
    pub wait_timeout_s: f64,
    pub safe_altitude_m: f64,
    pub success_altitude_m: f64,
    pub v_max_h: f64,
    pub v_max_z: f64,
    /// Proportional gain from horizontal offset (m) to speed (m/s).
    pub approach_gain: f64,
    /// Side of the square swept while searching, metres.
    pub sweep_extent_m: f64,
    pub focus: FocusRadii,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            tau_safe: 0.5,
            safety_radius_m: 1.5,
            aim_epsilon_fraction: 0.05,
            aim_hold_frames: 5,
            wait_timeout_s: 10.0,
            safe_altitude_m: 100.0,
            success_altitude_m: 20.0,
            v_max_h: 5.0,
            v_max_z: 2.0,
            approach_gain: 0.8,
            sweep_extent_m: 160.0,
            focus: FocusRadii::default(),
        }
    }
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Validation(format!("policy: {m}")));
        if !(self.tau_safe > 0.0 && self.tau_safe < 1.0) {
            return bad("tau_safe must lie in (0, 1)");
        }
        if !(self.success_altitude_m > 0.0 && self.success_altitude_m < self.safe_altitude_m) {
            return bad("need 0 < success_altitude_m < safe_altitude_m");
        }
        if !(self.v_max_h > 0.0 && self.v_max_z > 0.0) {
            return bad("velocity limits must be positive");
        }
        if self.safety_radius_m < 0.0 || self.wait_timeout_s < 0.0 || self.sweep_extent_m < 0.0 {
            return bad("radii, extents and timeouts must be non-negative");
        }
        if self.aim_epsilon_fraction.is_nan()
            || self.aim_epsilon_fraction <= 0.0
            || self.approach_gain <= 0.0
        {
            return bad("aim_epsilon_fraction and approach_gain must be positive");
        }
        let f = &self.focus;
        for r in [
            f.searching,
            f.aiming,
            f.landing,
            f.waiting,
            f.climbing,
            f.restarting,
        ] {
            if !(r > 0.0 && r <= 1.0) {
                return bad("focus radii must lie in (0, 1]");
            }
        }
        Ok(())
    }
}

/// Masks `heatmap` to the focus circle of `state`.
pub fn apply_focus(
    heatmap: &SafetyHeatmap,
    state: MachineState,
    cfg: &PolicyConfig,
) -> SafetyHeatmap {
    FocusMask::new(cfg.focus.for_state(state))
        .expect("validated radius")
        .apply(heatmap)
}

/// What the controller sees on one control tick.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub target: Option<LandingTarget>,
    /// Focused heatmap value at the image centre.
    pub center_value: f64,
    pub altitude_m: f64,
    pub t_s: f64,
    pub dt_s: f64,
    /// Ground sampling distance of the heatmap.
    pub meters_per_px: f64,
    pub image_size: (u32, u32),
}

impl Observation {
    /// Focus, then choose a target with the safety radius converted to pixels.
    pub fn from_heatmap(
        heatmap: &SafetyHeatmap,
        state: MachineState,
        cfg: &PolicyConfig,
        altitude_m: f64,
        t_s: f64,
        dt_s: f64,
        meters_per_px: f64,
    ) -> Self {
        let focused = apply_focus(heatmap, state, cfg);
        let min_clearance = cfg.safety_radius_m / meters_per_px;
        Self {
            target: select_target(&focused, cfg.tau_safe, min_clearance),
            center_value: focused.center_value(),
            altitude_m,
            t_s,
            dt_s,
            meters_per_px,
            image_size: (heatmap.width, heatmap.height),
        }
    }

    fn footprint_m(&self) -> f64 {
        f64::from(self.image_size.0) * self.meters_per_px
    }

    /// Horizontal offset of the target from the image centre, in pixels.
    fn target_offset_px(&self, t: &LandingTarget) -> (f64, f64) {
        (
            f64::from(t.pixel.0) + 0.5 - f64::from(self.image_size.0) / 2.0,
            f64::from(t.pixel.1) + 0.5 - f64::from(self.image_size.1) / 2.0,
        )
    }

    fn validate(&self) -> Result<()> {
        let finite = [
            self.center_value,
            self.altitude_m,
            self.t_s,
            self.dt_s,
            self.meters_per_px,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite || self.dt_s <= 0.0 || self.meters_per_px <= 0.0 {
            return Err(Error::Contract(format!("invalid observation {self:?}")));
        }
        if self.image_size.0 == 0 || self.image_size.1 == 0 {
            return Err(Error::Contract("observation without an image".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum PolicyEvent {
    Transition {
        from: MachineState,
        to: MachineState,
    },
    /// Descended to the success altitude while in `Landing`.
    Success,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub state: MachineState,
    pub command: VelocityCommand,
    pub events: Vec<PolicyEvent>,
}

/// Boustrophedon sweep of a square around the point where searching began.
#[derive(Clone, Debug)]
struct Sweep {
    waypoints: Vec<(f64, f64)>,
    index: usize,
    forward: bool,
    position: (f64, f64),
}

impl Sweep {
    fn new(extent: f64, stride: f64) -> Self {
        let half = extent / 2.0;
        let stride = stride.max(1e-3);
        let rows = (extent / stride).floor() as usize + 1;
        let mut waypoints = Vec::with_capacity(rows * 2);
        for k in 0..rows {
            let y = (-half + k as f64 * stride).min(half);
            let (a, b) = if k % 2 == 0 {
                (-half, half)
            } else {
                (half, -half)
            };
            waypoints.push((a, y));
            waypoints.push((b, y));
        }
        Self {
            waypoints,
            index: 0,
            forward: true,
            position: (0.0, 0.0),
        }
    }

    fn advance(&mut self) {
        let last = self.waypoints.len() - 1;
        if last == 0 {
            return;
        }
        match (self.forward, self.index) {
            (true, i) if i == last => {
                self.forward = false;
                self.index -= 1;
            }
            (false, 0) => {
                self.forward = true;
                self.index = 1;
            }
            (true, _) => self.index += 1,
            (false, _) => self.index -= 1,
        }
    }

    fn command(&mut self, v_max: f64, dt: f64) -> VelocityCommand {
        for _ in 0..2 {
            let wp = self.waypoints[self.index];
            let d = (wp.0 - self.position.0, wp.1 - self.position.1);
            let dist = d.0.hypot(d.1);
            if dist < 1e-6 {
                self.advance();
                continue;
            }
            let speed = (dist / dt).min(v_max);
            let v = (d.0 / dist * speed, d.1 / dist * speed);
            self.position.0 += v.0 * dt;
            self.position.1 += v.1 * dt;
            return VelocityCommand {
                vx: v.0,
                vy: v.1,
                vz: 0.0,
            };
        }
        VelocityCommand::ZERO
    }
}

#[derive(Clone, Debug)]
struct Restart {
    direction: (f64, f64),
    remaining_m: f64,
}

/// The controller for one episode.
#[derive(Clone, Debug)]
pub struct LandingPolicy {
    cfg: PolicyConfig,
    state: MachineState,
    aligned_frames: u32,
    wait_started_s: Option<f64>,
    sweep: Option<Sweep>,
    restart: Option<Restart>,
    rng: ChaCha8Rng,
}

impl LandingPolicy {
    pub fn new(cfg: PolicyConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            state: MachineState::Searching,
            aligned_frames: 0,
            wait_started_s: None,
            sweep: None,
            restart: None,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn state(&self) -> MachineState {
        self.state
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.cfg
    }

    fn approach(&self, obs: &Observation, t: &LandingTarget) -> VelocityCommand {
        let (du, dv) = obs.target_offset_px(t);
        let (dx, dy) = (du * obs.meters_per_px, dv * obs.meters_per_px);
        let dist = dx.hypot(dy);
        if dist == 0.0 {
            return VelocityCommand::ZERO;
        }
        // never overshoot within one tick
        let speed = (self.cfg.approach_gain * dist)
            .min(dist / obs.dt_s)
            .min(self.cfg.v_max_h);
        VelocityCommand {
            vx: dx / dist * speed,
            vy: dy / dist * speed,
            vz: 0.0,
        }
    }

    fn enter(&mut self, to: MachineState, obs: &Observation) {
        match to {
            MachineState::Searching => self.sweep = None,
            MachineState::Aiming => self.aligned_frames = 0,
            MachineState::Waiting => self.wait_started_s = Some(obs.t_s),
            MachineState::Restarting => {
                let angle = self.rng.gen_range(0.0..std::f64::consts::TAU);
                // footprint at the safe altitude, scaled from the current one
                let footprint =
                    obs.footprint_m() * self.cfg.safe_altitude_m / obs.altitude_m.max(1e-6);
                self.restart = Some(Restart {
                    direction: (angle.cos(), angle.sin()),
                    remaining_m: footprint,
                });
            }
            MachineState::Landing | MachineState::Climbing => {}
        }
    }

    /// Advances the controller by one tick.
    pub fn step(&mut self, obs: &Observation) -> Result<StepOutcome> {
        use MachineState::*;
        obs.validate()?;
        let cfg = self.cfg.clone();
        let from = self.state;
        let mut events = Vec::new();
        let aim_epsilon_px = cfg.aim_epsilon_fraction * f64::from(obs.image_size.0);

        let (to, command) = match from {
            Searching => match &obs.target {
                Some(t) => (Aiming, self.approach(obs, t)),
                None => {
                    let stride = obs.footprint_m() / 2.0;
                    let sweep = self
                        .sweep
                        .get_or_insert_with(|| Sweep::new(cfg.sweep_extent_m, stride));
                    (Searching, sweep.command(cfg.v_max_h, obs.dt_s))
                }
            },
            Aiming => match &obs.target {
                None => (Searching, VelocityCommand::ZERO),
                Some(t) => {
                    let (du, dv) = obs.target_offset_px(t);
                    if du.hypot(dv) <= aim_epsilon_px {
                        self.aligned_frames += 1;
                    } else {
                        self.aligned_frames = 0;
                    }
                    let next = if self.aligned_frames >= cfg.aim_hold_frames {
                        Landing
                    } else {
                        Aiming
                    };
                    (next, self.approach(obs, t))
                }
            },
            Landing => {
                if obs.altitude_m <= cfg.success_altitude_m {
                    events.push(PolicyEvent::Success);
                    (Landing, VelocityCommand::ZERO)
                } else if obs.center_value < cfg.tau_safe {
                    (Waiting, VelocityCommand::ZERO)
                } else {
                    let mut c = obs
                        .target
                        .as_ref()
                        .map_or(VelocityCommand::ZERO, |t| self.approach(obs, t));
                    c.vz = cfg.v_max_z;
                    (Landing, c)
                }
            }
            Waiting => {
                let waited = obs.t_s - self.wait_started_s.unwrap_or(obs.t_s);
                if obs.center_value >= cfg.tau_safe {
                    (Landing, VelocityCommand::ZERO)
                } else if waited >= cfg.wait_timeout_s {
                    (Climbing, VelocityCommand::ZERO)
                } else {
                    (Waiting, VelocityCommand::ZERO)
                }
            }
            Climbing => {
                if obs.altitude_m >= cfg.safe_altitude_m - 1e-9 {
                    (Restarting, VelocityCommand::ZERO)
                } else {
                    let climb =
                        ((cfg.safe_altitude_m - obs.altitude_m) / obs.dt_s).min(cfg.v_max_z);
                    (
                        Climbing,
                        VelocityCommand {
                            vz: -climb,
                            ..VelocityCommand::ZERO
                        },
                    )
                }
            }
            Restarting => {
                let r = self.restart.as_mut().expect("set on entry");
                if r.remaining_m <= 1e-9 {
                    (Searching, VelocityCommand::ZERO)
                } else {
                    let speed = cfg.v_max_h.min(r.remaining_m / obs.dt_s);
                    r.remaining_m -= speed * obs.dt_s;
                    (
                        Restarting,
                        VelocityCommand {
                            vx: r.direction.0 * speed,
                            vy: r.direction.1 * speed,
                            vz: 0.0,
                        },
                    )
                }
            }
        };

        if !from.can_transition(to) {
            return Err(Error::Contract(format!(
                "illegal transition {from} -> {to}"
            )));
        }
        if to != from {
            events.push(PolicyEvent::Transition { from, to });
            self.enter(to, obs);
            self.state = to;
        }
        Ok(StepOutcome {
            state: self.state,
            command: command.limited(cfg.v_max_h, cfg.v_max_z),
            events,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(target: Option<(u32, u32)>, center: f64, altitude: f64, t: f64) -> Observation {
        Observation {
            target: target.map(|p| LandingTarget {
                pixel: p,
                confidence: 0.9,
                clearance_px: 5.0,
            }),
            center_value: center,
            altitude_m: altitude,
            t_s: t,
            dt_s: 0.5,
            meters_per_px: 1.0,
            image_size: (64, 64),
        }
    }

    fn policy() -> LandingPolicy {
        LandingPolicy::new(PolicyConfig::default(), 1).unwrap()
    }

    #[test]
    fn searching_with_target_aims_toward_it() {
        let mut p = policy();
        let out = p.step(&obs(Some((50, 32)), 0.0, 100.0, 0.0)).unwrap();
        assert_eq!(out.state, MachineState::Aiming);
        assert!(out.command.vx > 0.0);
        assert!(out.command.vy.abs() < 0.05 * out.command.vx);
        assert_eq!(out.command.vz, 0.0);
        assert_eq!(
            out.events,
            vec![PolicyEvent::Transition {
                from: MachineState::Searching,
                to: MachineState::Aiming
            }]
        );
    }

    #[test]
    fn searching_without_target_sweeps() {
        let mut p = policy();
        let out = p.step(&obs(None, 0.0, 100.0, 0.0)).unwrap();
        assert_eq!(out.state, MachineState::Searching);
        assert!(out.command.horizontal_speed() > 0.0);
        assert!((out.command.horizontal_speed() - 5.0).abs() < 1e-9);
    }

    fn drive_to_landing(p: &mut LandingPolicy) {
        p.step(&obs(Some((32, 32)), 1.0, 100.0, 0.0)).unwrap();
        for i in 0..5 {
            p.step(&obs(Some((32, 32)), 1.0, 100.0, 0.5 * f64::from(i + 1)))
                .unwrap();
        }
        assert_eq!(p.state(), MachineState::Landing);
    }

    #[test]
    fn aiming_needs_consecutive_aligned_frames() {
        let mut p = policy();
        p.step(&obs(Some((32, 32)), 1.0, 100.0, 0.0)).unwrap();
        for i in 0..4 {
            assert_eq!(
                p.step(&obs(Some((32, 32)), 1.0, 100.0, f64::from(i)))
                    .unwrap()
                    .state,
                MachineState::Aiming
            );
        }
        // misaligned frame resets the count
        p.step(&obs(Some((60, 32)), 1.0, 100.0, 5.0)).unwrap();
        for i in 0..4 {
            assert_eq!(
                p.step(&obs(Some((32, 32)), 1.0, 100.0, 6.0 + f64::from(i)))
                    .unwrap()
                    .state,
                MachineState::Aiming
            );
        }
        assert_eq!(
            p.step(&obs(Some((32, 32)), 1.0, 100.0, 11.0))
                .unwrap()
                .state,
            MachineState::Landing
        );
    }

    #[test]
    fn aiming_loses_target() {
        let mut p = policy();
        p.step(&obs(Some((40, 40)), 1.0, 100.0, 0.0)).unwrap();
        let out = p.step(&obs(None, 0.0, 100.0, 0.5)).unwrap();
        assert_eq!(out.state, MachineState::Searching);
    }

    #[test]
    fn landing_descends_and_succeeds() {
        let mut p = policy();
        drive_to_landing(&mut p);
        let out = p.step(&obs(Some((32, 32)), 0.9, 80.0, 3.0)).unwrap();
        assert_eq!(out.state, MachineState::Landing);
        assert_eq!(out.command.vz, 2.0);
        let out = p.step(&obs(Some((32, 32)), 0.9, 20.0, 40.0)).unwrap();
        assert!(out.events.contains(&PolicyEvent::Success));
    }

    #[test]
    fn landing_obstacle_waits() {
        let mut p = policy();
        drive_to_landing(&mut p);
        let out = p.step(&obs(Some((32, 32)), 0.1, 60.0, 3.0)).unwrap();
        assert_eq!(out.state, MachineState::Waiting);
        assert_eq!(out.command, VelocityCommand::ZERO);
    }

    #[test]
    fn waiting_recovers_or_times_out() {
        let mut p = policy();
        drive_to_landing(&mut p);
        p.step(&obs(None, 0.1, 60.0, 10.0)).unwrap();
        assert_eq!(
            p.step(&obs(None, 0.8, 60.0, 10.5)).unwrap().state,
            MachineState::Landing
        );

        p.step(&obs(None, 0.1, 60.0, 20.0)).unwrap();
        assert_eq!(p.state(), MachineState::Waiting);
        assert_eq!(
            p.step(&obs(None, 0.1, 60.0, 29.5)).unwrap().state,
            MachineState::Waiting
        );
        let out = p.step(&obs(None, 0.1, 60.0, 30.0)).unwrap();
        assert_eq!(out.state, MachineState::Climbing);
        let out = p.step(&obs(None, 0.1, 60.0, 30.5)).unwrap();
        assert!(out.command.vz < 0.0, "climbing ascends");
        let out = p.step(&obs(None, 0.1, 100.0, 60.0)).unwrap();
        assert_eq!(out.state, MachineState::Restarting);
    }

    #[test]
    fn restarting_travels_one_footprint_then_searches() {
        let mut p = policy();
        drive_to_landing(&mut p);
        p.step(&obs(None, 0.1, 60.0, 10.0)).unwrap();
        p.step(&obs(None, 0.1, 60.0, 30.0)).unwrap();
        p.step(&obs(None, 0.1, 100.0, 60.0)).unwrap();
        assert_eq!(p.state(), MachineState::Restarting);
        let mut travelled = 0.0;
        let mut t = 60.0;
        while p.state() == MachineState::Restarting {
            t += 0.5;
            let out = p.step(&obs(None, 0.0, 100.0, t)).unwrap();
            travelled += out.command.horizontal_speed() * 0.5;
            assert!(t < 200.0);
        }
        assert_eq!(p.state(), MachineState::Searching);
        assert!((travelled - 64.0).abs() < 1e-6, "{travelled}");
    }

    #[test]
    fn sweep_stays_bounded_and_covers_extent() {
        let mut s = Sweep::new(100.0, 25.0);
        let (mut x, mut y) = (0.0f64, 0.0f64);
        let (mut min_y, mut max_y) = (0.0f64, 0.0f64);
        for _ in 0..4000 {
            let c = s.command(5.0, 0.5);
            x += c.vx * 0.5;
            y += c.vy * 0.5;
            assert!(x.abs() <= 50.0 + 1e-9 && y.abs() <= 50.0 + 1e-9);
            min_y = min_y.min(y);
            max_y = max_y.max(y);
        }
        assert!(min_y <= -50.0 + 1e-9 && max_y >= 50.0 - 1e-9);
    }

    #[test]
    fn invalid_observation_rejected() {
        let mut p = policy();
        let mut o = obs(None, 0.0, 100.0, 0.0);
        o.altitude_m = f64::NAN;
        assert!(matches!(p.step(&o), Err(Error::Contract(_))));
    }

    #[test]
    fn config_validation() {
        let mut c = PolicyConfig::default();
        assert!(c.validate().is_ok());
        c.success_altitude_m = 120.0;
        assert!(c.validate().is_err());
        let c = PolicyConfig {
            tau_safe: 1.0,
            ..PolicyConfig::default()
        };
        assert!(c.validate().is_err());
        let c: PolicyConfig = serde_json::from_str(r#"{"tau_safe":0.6}"#).unwrap();
        assert_eq!(c.tau_safe, 0.6);
        assert_eq!(c.safe_altitude_m, 100.0);
    }

    #[test]
    fn limited_caps_both_axes() {
        let c = VelocityCommand {
            vx: 30.0,
            vy: 40.0,
            vz: -9.0,
        }
        .limited(5.0, 2.0);
        assert!((c.horizontal_speed() - 5.0).abs() < 1e-12);
        assert_eq!(c.vz, -2.0);
    }

    #[test]
    fn focus_per_state() {
        let cfg = PolicyConfig::default();
        let h = SafetyHeatmap::filled(64, 64, 1.0);
        assert_eq!(apply_focus(&h, MachineState::Searching, &cfg), h);
        let landing = apply_focus(&h, MachineState::Landing, &cfg);
        let aiming = apply_focus(&h, MachineState::Aiming, &cfg);
        let count = |m: &SafetyHeatmap| m.values.iter().filter(|v| **v > 0.0).count();
        assert!(count(&landing) < count(&aiming));
        assert!(count(&aiming) < count(&h));
    }
}
