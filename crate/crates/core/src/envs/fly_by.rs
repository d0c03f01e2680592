//! Fly By: a constant-speed aircraft steers through a stream of waypoints.
//!
//! Action `steer` = [turn_rate, pitch_rate] in [-1, 1]. Observation is the
//! offset to each of the next two waypoints in the body frame, divided by the
//! diagonal of the flight volume.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, PI};

use rand::Rng;

use crate::env::{AgentRng, EnvDefinition, Environment, TickOutcome};
use crate::geometry::Vec3;
use crate::protocol::{PartSpec, PartValues, SpaceSpec};
use crate::sensors::Pose3;

pub const NAME: &str = "fly_by";
pub const PHYSICS_DT: f64 = 1.0 / 60.0;
pub const MAX_EPISODE_STEPS: u32 = 1000;

pub const SPEED: f64 = 5.0;
/// 90°/s.
pub const MAX_TURN_RATE: f64 = FRAC_PI_2;
/// ±60°.
pub const PITCH_LIMIT: f64 = FRAC_PI_3;
pub const CAPTURE_RADIUS: f64 = 2.0;
pub const VOLUME_MIN: Vec3 = Vec3::new(-30.0, 0.0, -30.0);
pub const VOLUME_MAX: Vec3 = Vec3::new(30.0, 30.0, 30.0);
/// Waypoints keep this far from the volume faces.
pub const WAYPOINT_MARGIN: f64 = 5.0;
/// Successive waypoints are at least this far apart.
pub const WAYPOINT_SPACING: f64 = 10.0;

pub const CAPTURE_REWARD: f64 = 1.0;
pub const EXIT_PENALTY: f64 = -1.0;
pub const TICK_PENALTY: f64 = -0.001;

#[derive(Debug, Clone, PartialEq)]
pub struct FlyByState {
    pub position: Vec3,
    pub yaw: f64,
    pub pitch: f64,
    /// Next waypoint first.
    pub waypoints: [Vec3; 2],
}

impl FlyByState {
    pub fn pose(&self) -> Pose3 {
        Pose3::new(self.position, self.yaw, self.pitch)
    }
}

pub struct FlyBy {
    def: EnvDefinition,
    diagonal: f64,
}

impl Default for FlyBy {
    fn default() -> Self {
        Self::new()
    }
}

pub fn inside_volume(p: Vec3) -> bool {
    (0..3).all(|i| p[i] >= VOLUME_MIN[i] && p[i] <= VOLUME_MAX[i])
}

impl FlyBy {
    pub fn new() -> Self {
        let def = EnvDefinition {
            name: NAME.into(),
            obs_space: SpaceSpec::new(vec![PartSpec::boxed("waypoints", &[6], -1.0, 1.0).unwrap()]).unwrap(),
            action_space: SpaceSpec::new(vec![PartSpec::boxed("steer", &[2], -1.0, 1.0).unwrap()]).unwrap(),
            physics_dt: PHYSICS_DT,
            max_episode_steps: MAX_EPISODE_STEPS,
        };
        Self { def, diagonal: (VOLUME_MAX - VOLUME_MIN).norm() }
    }

    fn sample_inner(rng: &mut AgentRng, margin: f64) -> Vec3 {
        let lo = VOLUME_MIN.add_scalar(margin);
        let hi = VOLUME_MAX.add_scalar(-margin);
        Vec3::new(rng.gen_range(lo.x..hi.x), rng.gen_range(lo.y..hi.y), rng.gen_range(lo.z..hi.z))
    }

    /// A waypoint inside the volume (with margin), well separated from `after`.
    pub fn sample_waypoint(after: Vec3, rng: &mut AgentRng) -> Vec3 {
        loop {
            let p = Self::sample_inner(rng, WAYPOINT_MARGIN);
            if (p - after).norm() >= WAYPOINT_SPACING {
                return p;
            }
        }
    }
}

impl Environment for FlyBy {
    type State = FlyByState;
    type Action = [f64; 2];

    fn definition(&self) -> &EnvDefinition {
        &self.def
    }

    fn parse_action(&self, action: &PartValues) -> [f64; 2] {
        let a = action.box_values("steer").expect("validated action has `steer`");
        [a[0], a[1]]
    }

    fn reset(&self, rng: &mut AgentRng) -> FlyByState {
        let position = Self::sample_inner(rng, 10.0);
        let yaw = rng.gen_range(-PI..PI);
        let first = Self::sample_waypoint(position, rng);
        let second = Self::sample_waypoint(first, rng);
        FlyByState { position, yaw, pitch: 0.0, waypoints: [first, second] }
    }

    fn tick(&self, s: &mut FlyByState, action: &[f64; 2], rng: &mut AgentRng) -> TickOutcome {
        s.yaw += action[0] * MAX_TURN_RATE * PHYSICS_DT;
        s.pitch = (s.pitch + action[1] * MAX_TURN_RATE * PHYSICS_DT).clamp(-PITCH_LIMIT, PITCH_LIMIT);
        let (forward, _, _) = s.pose().basis();
        s.position += forward * (SPEED * PHYSICS_DT);
        if !inside_volume(s.position) {
            return TickOutcome { reward: EXIT_PENALTY + TICK_PENALTY, terminal: true };
        }
        if (s.waypoints[0] - s.position).norm() < CAPTURE_RADIUS {
            let next = Self::sample_waypoint(s.waypoints[1], rng);
            s.waypoints = [s.waypoints[1], next];
            return TickOutcome { reward: CAPTURE_REWARD + TICK_PENALTY, terminal: false };
        }
        TickOutcome { reward: TICK_PENALTY, terminal: false }
    }

    fn observe(&self, s: &FlyByState, out: &mut Vec<f64>) {
        let pose = s.pose();
        for wp in &s.waypoints {
            let body = pose.to_body(wp - s.position) / self.diagonal;
            out.extend(body.iter().map(|c| c.clamp(-1.0, 1.0)));
        }
    }
}
