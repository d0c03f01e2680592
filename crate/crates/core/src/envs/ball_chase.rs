//! Ball Chase: a 2D agent collects fruit in a walled arena with pillars.
//!
//! Action `move` is a box[2] velocity direction. Observation is a full circle
//! of 32 depth rays followed by the unit vector to the fruit and the fruit
//! distance as a fraction of the arena diagonal.

use rand::Rng;

use crate::env::{AgentRng, EnvDefinition, Environment, TickOutcome};
use crate::geometry::{Primitive2, Vec2};
use crate::protocol::{PartSpec, PartValues, SpaceSpec};
use crate::sensors::{Pose2, RaySensor2D};

pub const NAME: &str = "ball_chase";
pub const PHYSICS_DT: f64 = 1.0 / 60.0;
pub const MAX_EPISODE_STEPS: u32 = 1000;

pub const ARENA_HALF: f64 = 8.0;
pub const MAX_SPEED: f64 = 4.0;
pub const AGENT_RADIUS: f64 = 0.25;
pub const COLLECT_RADIUS: f64 = 0.5;
pub const SPAWN_CLEARANCE: f64 = 1.0;
pub const N_RAYS: usize = 32;
pub const RAY_RANGE: f64 = 12.0;

pub const FRUIT_REWARD: f64 = 1.0;
pub const WALL_PENALTY: f64 = -1.0;
pub const TICK_PENALTY: f64 = -0.005;

#[derive(Debug, Clone, PartialEq)]
pub struct BallChaseState {
    pub position: Vec2,
    pub velocity: Vec2,
    pub fruit: Vec2,
}

pub struct BallChase {
    def: EnvDefinition,
    walls: Vec<Primitive2>,
    sensor: RaySensor2D,
    diagonal: f64,
}

impl Default for BallChase {
    fn default() -> Self {
        Self::new()
    }
}

impl BallChase {
    pub fn new() -> Self {
        let h = ARENA_HALF;
        let corners = [Vec2::new(-h, -h), Vec2::new(h, -h), Vec2::new(h, h), Vec2::new(-h, h)];
        let mut walls: Vec<Primitive2> =
            (0..4).map(|i| Primitive2::segment(corners[i], corners[(i + 1) % 4])).collect();
        for (x, y) in [(-4.0, -4.0), (4.0, -4.0), (4.0, 4.0), (-4.0, 4.0)] {
            walls.push(Primitive2::block(Vec2::new(x, y), Vec2::new(1.0, 1.0)));
        }
        let def = EnvDefinition {
            name: NAME.into(),
            obs_space: SpaceSpec::new(vec![
                PartSpec::boxed("rays", &[N_RAYS], 0.0, 1.0).unwrap(),
                PartSpec::boxed("fruit", &[3], -1.0, 1.0).unwrap(),
            ])
            .unwrap(),
            action_space: SpaceSpec::new(vec![PartSpec::boxed("move", &[2], -1.0, 1.0).unwrap()]).unwrap(),
            physics_dt: PHYSICS_DT,
            max_episode_steps: MAX_EPISODE_STEPS,
        };
        Self { def, walls, sensor: RaySensor2D::circle(N_RAYS, RAY_RANGE), diagonal: 2.0 * h * 2f64.sqrt() }
    }

    pub fn walls(&self) -> &[Primitive2] {
        &self.walls
    }

    pub fn wall_distance(&self, p: Vec2) -> f64 {
        self.walls.iter().map(|w| w.distance_to(p)).fold(f64::INFINITY, f64::min)
    }

    fn sample_clear_point(&self, rng: &mut AgentRng, avoid: Option<Vec2>) -> Vec2 {
        loop {
            let p = Vec2::new(rng.gen_range(-ARENA_HALF..ARENA_HALF), rng.gen_range(-ARENA_HALF..ARENA_HALF));
            if self.wall_distance(p) < SPAWN_CLEARANCE {
                continue;
            }
            if avoid.is_some_and(|a| (p - a).norm() < SPAWN_CLEARANCE) {
                continue;
            }
            return p;
        }
    }

    /// New fruit position at least 1 m from every wall and from the agent.
    pub fn spawn_fruit(&self, agent: Vec2, rng: &mut AgentRng) -> Vec2 {
        self.sample_clear_point(rng, Some(agent))
    }
}

impl Environment for BallChase {
    type State = BallChaseState;
    type Action = Vec2;

    fn definition(&self) -> &EnvDefinition {
        &self.def
    }

    fn parse_action(&self, action: &PartValues) -> Vec2 {
        let m = action.box_values("move").expect("validated action has `move`");
        Vec2::new(m[0], m[1])
    }

    fn reset(&self, rng: &mut AgentRng) -> BallChaseState {
        let position = self.sample_clear_point(rng, None);
        let fruit = self.spawn_fruit(position, rng);
        BallChaseState { position, velocity: Vec2::zeros(), fruit }
    }

    fn tick(&self, s: &mut BallChaseState, action: &Vec2, rng: &mut AgentRng) -> TickOutcome {
        s.velocity = action * MAX_SPEED;
        s.position += s.velocity * PHYSICS_DT;
        if self.wall_distance(s.position) <= AGENT_RADIUS {
            return TickOutcome { reward: WALL_PENALTY, terminal: true };
        }
        if (s.fruit - s.position).norm() < COLLECT_RADIUS {
            s.fruit = self.spawn_fruit(s.position, rng);
            return TickOutcome { reward: FRUIT_REWARD, terminal: false };
        }
        TickOutcome { reward: TICK_PENALTY, terminal: false }
    }

    fn observe(&self, s: &BallChaseState, out: &mut Vec<f64>) {
        self.sensor.sense_into(&Pose2::new(s.position, 0.0), &self.walls, out);
        let to_fruit = s.fruit - s.position;
        let dist = to_fruit.norm();
        let unit = if dist > 0.0 { to_fruit / dist } else { Vec2::zeros() };
        out.extend_from_slice(&[unit.x, unit.y, (dist / self.diagonal).min(1.0)]);
    }
}
