//! Jumper: a biped hops along a chain of randomly placed platforms.
//!
//! Mixed action: `move` = [turn_rate, forward_throttle] (box) and `jump`
//! (discrete, 2). Observation: a downward-tilted cone of 24 depth rays, the
//! body-frame offset to the next platform over 20 m, and a grounded flag.

use std::f64::consts::{FRAC_PI_3, FRAC_PI_6, PI};

use rand::Rng;

use crate::env::{AgentRng, EnvDefinition, Environment, TickOutcome};
use crate::geometry::{Primitive3, Vec3};
use crate::protocol::{PartSpec, PartValues, SpaceSpec};
use crate::sensors::{Pose3, RaySensor3D};

pub const NAME: &str = "jumper";
pub const PHYSICS_DT: f64 = 1.0 / 60.0;
pub const MAX_EPISODE_STEPS: u32 = 1000;

pub const GRAVITY: f64 = 9.8;
pub const JUMP_SPEED: f64 = 5.0;
pub const RUN_SPEED: f64 = 4.0;
/// 180°/s.
pub const TURN_RATE: f64 = PI;
/// Height of the body center above the feet; `position` is the body center.
pub const BODY_HEIGHT: f64 = 1.0;
pub const FALL_LIMIT: f64 = -5.0;
pub const PLATFORM_HALF: f64 = 1.0;
pub const PLATFORM_THICKNESS: f64 = 0.5;
pub const MIN_GAP: f64 = 2.0;
pub const MAX_GAP: f64 = 4.0;
pub const MAX_RISE: f64 = 0.5;

pub const SENSOR_AZIMUTH: usize = 6;
pub const SENSOR_ELEVATION: usize = 4;
pub const SENSOR_HALF_ANGLE: f64 = FRAC_PI_3;
pub const SENSOR_RANGE: f64 = 15.0;
/// The cone looks this far below the horizon.
pub const SENSOR_PITCH: f64 = -FRAC_PI_6;
pub const TARGET_SCALE: f64 = 20.0;

pub const LANDING_REWARD: f64 = 1.0;
pub const FALL_PENALTY: f64 = -1.0;
pub const TICK_PENALTY: f64 = -0.002;

/// A square platform described by the center of its top face.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Platform {
    pub top_center: Vec3,
}

impl Platform {
    pub fn aabb(&self) -> Primitive3 {
        let c = self.top_center;
        Primitive3::aabb(
            Vec3::new(c.x - PLATFORM_HALF, c.y - PLATFORM_THICKNESS, c.z - PLATFORM_HALF),
            Vec3::new(c.x + PLATFORM_HALF, c.y, c.z + PLATFORM_HALF),
        )
    }

    pub fn covers(&self, x: f64, z: f64) -> bool {
        (x - self.top_center.x).abs() <= PLATFORM_HALF && (z - self.top_center.z).abs() <= PLATFORM_HALF
    }

    fn overlaps(&self, other: &Platform) -> bool {
        (self.top_center.x - other.top_center.x).abs() < 2.0 * PLATFORM_HALF
            && (self.top_center.z - other.top_center.z).abs() < 2.0 * PLATFORM_HALF
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JumperState {
    pub position: Vec3,
    pub velocity: Vec3,
    pub heading: f64,
    pub grounded: bool,
    /// `platforms[0]` is the last platform reached, `platforms[1]` the next target.
    pub platforms: [Platform; 2],
}

impl JumperState {
    pub const NEXT: usize = 1;

    pub fn next_platform(&self) -> &Platform {
        &self.platforms[Self::NEXT]
    }

    fn feet(&self) -> f64 {
        self.position.y - BODY_HEIGHT
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumperAction {
    pub turn: f64,
    pub throttle: f64,
    pub jump: bool,
}

pub struct Jumper {
    def: EnvDefinition,
    sensor: RaySensor3D,
}

impl Default for Jumper {
    fn default() -> Self {
        Self::new()
    }
}

impl Jumper {
    pub fn new() -> Self {
        let def = EnvDefinition {
            name: NAME.into(),
            obs_space: SpaceSpec::new(vec![
                PartSpec::boxed("rays", &[SENSOR_AZIMUTH * SENSOR_ELEVATION], 0.0, 1.0).unwrap(),
                PartSpec::boxed("target", &[3], -1.0, 1.0).unwrap(),
                PartSpec::boxed("grounded", &[1], 0.0, 1.0).unwrap(),
            ])
            .unwrap(),
            action_space: SpaceSpec::new(vec![
                PartSpec::boxed("move", &[2], -1.0, 1.0).unwrap(),
                PartSpec::discrete("jump", 2).unwrap(),
            ])
            .unwrap(),
            physics_dt: PHYSICS_DT,
            max_episode_steps: MAX_EPISODE_STEPS,
        };
        let sensor = RaySensor3D::new(SENSOR_AZIMUTH, SENSOR_ELEVATION, SENSOR_HALF_ANGLE, SENSOR_RANGE);
        Self { def, sensor }
    }

    /// Next platform in the chain: planar distance U(2, 4) m, height change U(-0.5, 0.5) m,
    /// footprint disjoint from `from`.
    pub fn next_platform(from: &Platform, rng: &mut AgentRng) -> Platform {
        loop {
            let distance = rng.gen_range(MIN_GAP..MAX_GAP);
            let angle = rng.gen_range(-PI..PI);
            let rise = rng.gen_range(-MAX_RISE..MAX_RISE);
            let (s, c) = libm::sincos(angle);
            let candidate =
                Platform { top_center: from.top_center + Vec3::new(distance * c, rise, distance * s) };
            if !candidate.overlaps(from) {
                return candidate;
            }
        }
    }

    fn standing_on(state: &JumperState) -> Option<usize> {
        let feet = state.feet();
        state
            .platforms
            .iter()
            .rposition(|p| (p.top_center.y - feet).abs() < 1e-9 && p.covers(state.position.x, state.position.z))
    }
}

impl Environment for Jumper {
    type State = JumperState;
    type Action = JumperAction;

    fn definition(&self) -> &EnvDefinition {
        &self.def
    }

    fn parse_action(&self, action: &PartValues) -> JumperAction {
        let m = action.box_values("move").expect("validated action has `move`");
        let jump = action.discrete_value("jump").expect("validated action has `jump`");
        JumperAction { turn: m[0], throttle: m[1], jump: jump == 1 }
    }

    fn reset(&self, rng: &mut AgentRng) -> JumperState {
        let start = Platform { top_center: Vec3::zeros() };
        let heading = rng.gen_range(-PI..PI);
        let next = Self::next_platform(&start, rng);
        JumperState {
            position: Vec3::new(0.0, BODY_HEIGHT, 0.0),
            velocity: Vec3::zeros(),
            heading,
            grounded: true,
            platforms: [start, next],
        }
    }

    fn tick(&self, s: &mut JumperState, a: &JumperAction, rng: &mut AgentRng) -> TickOutcome {
        s.heading += a.turn * TURN_RATE * PHYSICS_DT;
        if s.grounded {
            let (sin, cos) = libm::sincos(s.heading);
            let speed = a.throttle * RUN_SPEED;
            s.velocity = Vec3::new(cos * speed, 0.0, sin * speed);
            if a.jump {
                s.velocity.y = JUMP_SPEED;
                s.grounded = false;
            }
        }
        if !s.grounded {
            s.velocity.y -= GRAVITY * PHYSICS_DT;
        }
        let feet_before = s.feet();
        s.position += s.velocity * PHYSICS_DT;

        if s.grounded {
            if Self::standing_on(s).is_none() {
                // Walked off an edge.
                s.grounded = false;
            }
        } else if s.velocity.y <= 0.0 {
            let feet_after = s.feet();
            let landed = s.platforms.iter().rposition(|p| {
                let top = p.top_center.y;
                feet_before >= top && feet_after <= top && p.covers(s.position.x, s.position.z)
            });
            if let Some(index) = landed {
                s.position.y = s.platforms[index].top_center.y + BODY_HEIGHT;
                s.velocity.y = 0.0;
                s.grounded = true;
                if index == JumperState::NEXT {
                    let reached = s.platforms[JumperState::NEXT];
                    s.platforms = [reached, Self::next_platform(&reached, rng)];
                    return TickOutcome { reward: LANDING_REWARD, terminal: false };
                }
            }
        }

        if s.position.y < FALL_LIMIT {
            return TickOutcome { reward: FALL_PENALTY, terminal: true };
        }
        TickOutcome { reward: TICK_PENALTY, terminal: false }
    }

    fn observe(&self, s: &JumperState, out: &mut Vec<f64>) {
        let world = [s.platforms[0].aabb(), s.platforms[1].aabb()];
        self.sensor.sense_into(&Pose3::new(s.position, s.heading, SENSOR_PITCH), &world, out);
        let level = Pose3::new(s.position, s.heading, 0.0);
        let target = level.to_body(s.next_platform().top_center - s.position) / TARGET_SCALE;
        out.extend(target.iter().map(|c| c.clamp(-1.0, 1.0)));
        out.push(if s.grounded { 1.0 } else { 0.0 });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::agent_rng;

    const IDLE: JumperAction = JumperAction { turn: 0.0, throttle: 0.0, jump: false };
    const HOP: JumperAction = JumperAction { turn: 0.0, throttle: 0.0, jump: true };

    #[test]
    fn stationary_grounded_agent_pays_step_penalty() {
        let env = Jumper::new();
        let mut rng = agent_rng(3, 0);
        let mut s = env.reset(&mut rng);
        let before = s.clone();
        let out = env.tick(&mut s, &IDLE, &mut rng);
        assert_eq!(out, TickOutcome { reward: TICK_PENALTY, terminal: false });
        assert_eq!(s, before);
    }

    #[test]
    fn jump_input_is_ignored_while_airborne() {
        let env = Jumper::new();
        let mut rng = agent_rng(3, 0);
        let mut s = env.reset(&mut rng);
        env.tick(&mut s, &HOP, &mut rng);
        assert!(!s.grounded);
        let mut with_jump = s.clone();
        let mut without = s.clone();
        let mut r1 = rng.clone();
        let mut r2 = rng.clone();
        env.tick(&mut with_jump, &HOP, &mut r1);
        env.tick(&mut without, &IDLE, &mut r2);
        assert_eq!(with_jump, without);
    }

    #[test]
    fn apex_matches_ballistic_closed_form() {
        let env = Jumper::new();
        let mut rng = agent_rng(3, 0);
        let mut s = env.reset(&mut rng);
        let launch = s.position.y;
        env.tick(&mut s, &HOP, &mut rng);
        let mut apex = s.position.y;
        while !s.grounded {
            env.tick(&mut s, &IDLE, &mut rng);
            apex = apex.max(s.position.y);
        }
        let closed_form = JUMP_SPEED * JUMP_SPEED / (2.0 * GRAVITY);
        assert!((closed_form - 1.2755).abs() < 1e-3);
        assert!(((apex - launch) - closed_form).abs() <= 2.0 * GRAVITY * PHYSICS_DT);
        // Lands back on the start platform.
        assert_eq!(s.position.y, launch);
    }

    #[test]
    fn airborne_vertical_velocity_drops_by_g_dt() {
        let env = Jumper::new();
        let mut rng = agent_rng(9, 0);
        let mut s = env.reset(&mut rng);
        env.tick(&mut s, &HOP, &mut rng);
        for _ in 0..20 {
            let vy = s.velocity.y;
            env.tick(&mut s, &IDLE, &mut rng);
            if s.grounded {
                break;
            }
            assert_eq!(s.velocity.y, vy - GRAVITY * PHYSICS_DT);
        }
    }

    #[test]
    fn walking_off_the_edge_falls_and_terminates() {
        let env = Jumper::new();
        let mut rng = agent_rng(3, 0);
        let mut s = env.reset(&mut rng);
        // Put the next platform far away so the walk cannot land on it.
        s.platforms[1] = Platform { top_center: Vec3::new(100.0, 0.0, 100.0) };
        s.heading = 0.0;
        let run = JumperAction { turn: 0.0, throttle: 1.0, jump: false };
        let mut terminal_reward = None;
        for _ in 0..400 {
            let out = env.tick(&mut s, &run, &mut rng);
            if out.terminal {
                terminal_reward = Some(out.reward);
                break;
            }
        }
        assert_eq!(terminal_reward, Some(FALL_PENALTY));
        assert!(s.position.y < FALL_LIMIT);
    }

    #[test]
    fn landing_on_next_platform_extends_chain() {
        let env = Jumper::new();
        let mut rng = agent_rng(3, 0);
        let mut s = env.reset(&mut rng);
        let next = Platform { top_center: Vec3::new(0.0, -0.3, 0.0) };
        // Hover just above the next platform, falling.
        s.platforms = [Platform { top_center: Vec3::new(-5.0, 0.0, 0.0) }, next];
        s.position = Vec3::new(0.0, next.top_center.y + BODY_HEIGHT + 0.01, 0.0);
        s.velocity = Vec3::new(0.0, -1.0, 0.0);
        s.grounded = false;
        let out = env.tick(&mut s, &IDLE, &mut rng);
        assert_eq!(out, TickOutcome { reward: LANDING_REWARD, terminal: false });
        assert!(s.grounded);
        assert_eq!(s.platforms[0], next);
        assert_ne!(s.platforms[1], next);
    }

    #[test]
    fn observation_layout() {
        let env = Jumper::new();
        let mut rng = agent_rng(3, 0);
        let s = env.reset(&mut rng);
        let obs = env.observation(&s);
        assert_eq!(env.definition().obs_space.flat_width(), 28);
        env.definition().obs_space.validate(&obs).unwrap();
        assert_eq!(obs.box_values("grounded").unwrap(), &[1.0]);
        // Some downward rays see the start platform below the body center.
        assert!(obs.box_values("rays").unwrap().iter().any(|&r| r < 1.0));
    }
}
