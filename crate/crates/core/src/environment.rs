//! The episodic hummingbird simulation.
//!
//! A point-mass bird with a sphere collision proxy flies over the island
//! under thrust, yaw torque, gravity and linear drag, integrated with
//! semi-implicit Euler. Flowers are spheres at blossom height above their
//! base point; the bird collects a flower when its beak point enters the
//! collect radius of a flower that still holds nectar.
//!
//! Observation layout (24 slots):
//!
//! | slots  | content                                                      |
//! |--------|--------------------------------------------------------------|
//! | 0..9   | ray distances, `direction * 3 + tag`; directions forward, up, down; tags flower, obstacle, terrain |
//! | 9..12  | beak-to-nearest-flower vector in the bird frame              |
//! | 12..15 | velocity in the bird frame                                   |
//! | 15..19 | orientation quaternion `(w, x, y, z)`                        |
//! | 19..22 | terrain normal below the bird (zero when off the island)     |
//! | 22     | spawn radius normalised to [0, 1]                            |
//! | 23     | congestion                                                   |

use std::io::Write;
use std::ops::Range;
use std::sync::Arc;

use nalgebra::{Unit, UnitQuaternion};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::placement::{EpisodeMetrics, Layout, LayoutParams};
use crate::terrain::{nearest_sphere, sample_valid_position, Heightmap, Obstacle, Vec3};

pub const OBS_DIM: usize = 24;
pub const ACTION_DIM: usize = 4;

pub const RAY_SLOTS: Range<usize> = 0..9;
pub const FLOWER_VECTOR_SLOTS: Range<usize> = 9..12;
pub const VELOCITY_SLOTS: Range<usize> = 12..15;
pub const ROTATION_SLOTS: Range<usize> = 15..19;
pub const NORMAL_SLOTS: Range<usize> = 19..22;
pub const PARAM_SLOTS: Range<usize> = 22..24;

pub type Observation = [f64; OBS_DIM];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicsConfig {
    pub dt: f64,
    pub mass: f64,
    /// Net downward acceleration left after the wings' passive lift; 0 is a
    /// bird that holds altitude when idle.
    pub gravity: f64,
    /// Linear drag, 1/s.
    pub drag: f64,
    /// Multiplier from the thrust action to force before clamping.
    pub thrust_gain: f64,
    pub thrust_max: f64,
    pub torque_max: f64,
    /// Yaw acceleration per unit of clamped torque, rad/s^2.
    pub torque_gain: f64,
    pub yaw_damping: f64,
    pub bird_radius: f64,
    /// Beak distance ahead of the body centre.
    pub beak_offset: f64,
    /// Absolute height the bird cannot climb above.
    pub ceiling: f64,
    /// Falling below this height ends the episode.
    pub kill_plane: f64,
}

impl Default for PhysicsConfig {
    fn default() -> Self {
        Self {
            dt: 0.02,
            mass: 1.0,
            gravity: 0.0,
            drag: 2.0,
            thrust_gain: 6.0,
            thrust_max: 6.0,
            torque_max: 1.0,
            torque_gain: 8.0,
            yaw_damping: 4.0,
            bird_radius: 0.15,
            beak_offset: 0.1,
            ceiling: 10.0,
            kill_plane: -10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    /// Per-step base reward (a small time penalty).
    pub base: f64,
    /// Weight of the spawn-radius term.
    pub alpha: f64,
    /// Weight of the congestion-deviation term.
    pub beta: f64,
    /// Collision penalty magnitude.
    pub gamma: f64,
    /// Reward per nectar unit collected.
    pub delta: f64,
    pub c_target: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            base: -0.001,
            alpha: 0.01,
            beta: 0.05,
            gamma: 0.5,
            delta: 1.0,
            c_target: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub physics: PhysicsConfig,
    pub reward: RewardConfig,
    pub max_episode_steps: usize,
    pub nectar_capacity: f64,
    pub collect_radius: f64,
    /// Blossom height above the flower's base point.
    pub flower_height: f64,
    /// Sphere radius flowers present to rays.
    pub flower_probe_radius: f64,
    pub ray_range: f64,
    /// Horizontal radius around the island centre where the bird spawns.
    pub spawn_radius: f64,
    /// Spawn height above the terrain.
    pub spawn_height: f64,
    pub spawn_clearance: f64,
    pub spawn_max_slope_deg: f64,
    pub spawn_attempts: usize,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            physics: PhysicsConfig::default(),
            reward: RewardConfig::default(),
            max_episode_steps: 3000,
            nectar_capacity: 1.0,
            collect_radius: 0.5,
            flower_height: 0.5,
            flower_probe_radius: 0.3,
            ray_range: 10.0,
            spawn_radius: 3.0,
            spawn_height: 1.0,
            spawn_clearance: 0.5,
            spawn_max_slope_deg: 45.0,
            spawn_attempts: 64,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        let p = &self.physics;
        let positive = [
            ("physics.dt", p.dt),
            ("physics.mass", p.mass),
            ("physics.thrust_max", p.thrust_max),
            ("physics.bird_radius", p.bird_radius),
            ("nectar_capacity", self.nectar_capacity),
            ("collect_radius", self.collect_radius),
            ("flower_probe_radius", self.flower_probe_radius),
            ("ray_range", self.ray_range),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("env.{name} must be positive, got {v}")));
            }
        }
        if self.max_episode_steps == 0 || self.spawn_attempts == 0 {
            return Err(Error::Config("env step and attempt limits must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BirdState {
    pub position: Vec3,
    pub velocity: Vec3,
    pub orientation: UnitQuaternion<f64>,
    pub yaw_rate: f64,
}

impl BirdState {
    pub fn forward(&self) -> Vec3 {
        self.orientation * Vec3::z()
    }

    pub fn beak(&self, offset: f64) -> Vec3 {
        self.position + self.forward() * offset
    }

    pub fn to_local(&self, v: &Vec3) -> Vec3 {
        self.orientation.inverse_transform_vector(v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Flower {
    /// Blossom centre.
    pub position: Vec3,
    pub nectar: f64,
    pub collect_radius: f64,
}

impl Flower {
    pub fn has_nectar(&self) -> bool {
        self.nectar > 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Action {
    pub thrust: [f64; 3],
    pub yaw_torque: f64,
}

impl Action {
    pub fn from_slice(a: &[f64]) -> Result<Self> {
        if a.len() != ACTION_DIM {
            return Err(Error::DimensionMismatch {
                expected: ACTION_DIM,
                actual: a.len(),
            });
        }
        Ok(Self {
            thrust: [a[0], a[1], a[2]],
            yaw_torque: a[3],
        })
    }

    /// Thrust force in the bird frame after gain and magnitude clamping.
    pub fn clamped_thrust(&self, p: &PhysicsConfig) -> Vec3 {
        let f = Vec3::from(self.thrust) * p.thrust_gain;
        let norm = f.norm();
        if norm > p.thrust_max {
            f * (p.thrust_max / norm)
        } else if norm.is_finite() {
            f
        } else {
            Vec3::zeros()
        }
    }

    pub fn clamped_torque(&self, p: &PhysicsConfig) -> f64 {
        if self.yaw_torque.is_nan() {
            0.0
        } else {
            self.yaw_torque.clamp(-p.torque_max, p.torque_max)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StepEvents {
    pub nectar_collected: usize,
    pub collided: bool,
    pub fell_off: bool,
    pub episode_done: bool,
}

/// Per-step record kept for episode metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepTrace {
    pub reward: f64,
    pub nectar_collected: usize,
    pub collided: bool,
}

#[derive(Debug, Clone)]
pub struct EnvState {
    pub bird: BirdState,
    pub flowers: Vec<Flower>,
    pub obstacles: Vec<Obstacle>,
    pub terrain: Arc<Heightmap>,
    pub params: LayoutParams,
    /// Observed radius, normalised over the configured range.
    pub r_norm: f64,
    pub step_count: usize,
    pub max_steps: usize,
    pub in_contact: bool,
    pub done: bool,
    pub spawn: Vec3,
    pub nectar_collected: f64,
    pub trace: Vec<StepTrace>,
}

impl EnvState {
    pub fn nectar_remaining(&self) -> f64 {
        self.flowers.iter().map(|f| f.nectar).sum()
    }

    pub fn all_collected(&self) -> bool {
        self.flowers.iter().all(|f| !f.has_nectar())
    }

    pub fn metrics(&self) -> Result<EpisodeMetrics> {
        episode_metrics(&self.trace, self.max_steps)
    }
}

/// Hover point `spawn_height` above a valid ground spot within
/// `spawn_radius` of `center`. This is the draw `reset` makes, so calling it
/// on a clone of the spawn generator previews the next start position.
pub fn sample_bird_spawn<R: Rng + ?Sized>(
    terrain: &Heightmap,
    obstacles: &[Obstacle],
    center: &Vec3,
    rng: &mut R,
    cfg: &EnvConfig,
) -> Result<Vec3> {
    let ground = sample_valid_position(
        terrain,
        obstacles,
        center,
        cfg.spawn_radius,
        cfg.spawn_max_slope_deg.to_radians(),
        cfg.spawn_clearance + cfg.spawn_height,
        rng,
        cfg.spawn_attempts,
    )
    .ok_or_else(|| Error::NoValidSpawn(format!("bird spawn within {} of the centre", cfg.spawn_radius)))?;
    Ok(ground + Vec3::y() * cfg.spawn_height)
}

/// Places the bird at a random valid spot around the layout centre with
/// zero velocity and identity orientation, and refills every flower.
pub fn reset<R: Rng + ?Sized>(
    terrain: Arc<Heightmap>,
    obstacles: Vec<Obstacle>,
    layout: &Layout,
    spawn_rng: &mut R,
    cfg: &EnvConfig,
) -> Result<EnvState> {
    if layout.is_empty() {
        return Err(Error::Empty("flower layout"));
    }
    let spawn = sample_bird_spawn(&terrain, &obstacles, &Vec3::from(layout.center), spawn_rng, cfg)?;

    let flowers = layout
        .flowers
        .iter()
        .map(|&base| Flower {
            position: Vec3::from(base) + Vec3::y() * cfg.flower_height,
            nectar: cfg.nectar_capacity,
            collect_radius: cfg.collect_radius,
        })
        .collect();

    Ok(EnvState {
        bird: BirdState {
            position: spawn,
            velocity: Vec3::zeros(),
            orientation: UnitQuaternion::identity(),
            yaw_rate: 0.0,
        },
        flowers,
        obstacles,
        terrain,
        params: layout.params,
        r_norm: layout.r_norm,
        step_count: 0,
        max_steps: cfg.max_episode_steps,
        in_contact: false,
        done: false,
        spawn,
        nectar_collected: 0.0,
        trace: Vec::new(),
    })
}

/// `R_base - alpha * r_norm - beta * |c - c*| - gamma [collided] + delta * nectar`.
pub fn compute_reward(events: &StepEvents, r_norm: f64, c: f64, cfg: &RewardConfig) -> f64 {
    let radius_term = -r_norm;
    let congestion_term = -(c - cfg.c_target).abs();
    let collision = if events.collided { -cfg.gamma } else { 0.0 };
    let nectar = cfg.delta * events.nectar_collected as f64;
    cfg.base + cfg.alpha * radius_term + cfg.beta * congestion_term + collision + nectar
}

/// Pushes the bird out of terrain and obstacles, removing the inward
/// velocity component. Returns whether any contact occurred.
fn resolve_contacts(bird: &mut BirdState, terrain: &Heightmap, obstacles: &[Obstacle], radius: f64) -> bool {
    let mut contact = false;
    let p = bird.position;
    if terrain.contains(p.x, p.z) {
        let h = terrain.height_at(p.x, p.z).unwrap_or(f64::NEG_INFINITY);
        if p.y - radius < h {
            bird.position.y = h + radius;
            let n = terrain.surface_normal(p.x, p.z).unwrap_or_else(|_| Vec3::y());
            let vn = bird.velocity.dot(&n);
            if vn < 0.0 {
                bird.velocity -= n * vn;
            }
            contact = true;
        }
    }
    for o in obstacles {
        let c = o.center();
        let offset = bird.position - c;
        let reach = o.radius + radius;
        let dist = offset.norm();
        if dist < reach {
            let n = if dist > 1e-12 { offset / dist } else { Vec3::y() };
            bird.position = c + n * reach;
            let vn = bird.velocity.dot(&n);
            if vn < 0.0 {
                bird.velocity -= n * vn;
            }
            contact = true;
        }
    }
    contact
}

/// Advances the episode by one physics step and returns the reward and
/// events for that step.
pub fn step(state: &mut EnvState, action: &Action, cfg: &EnvConfig) -> Result<(f64, StepEvents)> {
    if state.done {
        return Err(Error::TerminalState);
    }
    let p = &cfg.physics;
    let dt = p.dt;
    let bird = &mut state.bird;

    let force = bird.orientation * action.clamped_thrust(p);
    let accel = force / p.mass - Vec3::y() * p.gravity - bird.velocity * p.drag;
    bird.velocity += accel * dt;
    bird.position += bird.velocity * dt;

    let torque = action.clamped_torque(p);
    bird.yaw_rate += (torque * p.torque_gain - p.yaw_damping * bird.yaw_rate) * dt;
    let turn = UnitQuaternion::from_axis_angle(&Vec3::y_axis(), bird.yaw_rate * dt);
    bird.orientation = Unit::new_normalize((bird.orientation * turn).into_inner());

    if bird.position.y > p.ceiling {
        bird.position.y = p.ceiling;
        bird.velocity.y = bird.velocity.y.min(0.0);
    }

    let contact = resolve_contacts(bird, &state.terrain, &state.obstacles, p.bird_radius);
    let collided = contact && !state.in_contact;
    state.in_contact = contact;

    let beak = bird.beak(p.beak_offset);
    let fell_off = bird.position.y < p.kill_plane;

    let mut nectar_collected = 0;
    for flower in state.flowers.iter_mut().filter(|f| f.has_nectar()) {
        if (flower.position - beak).norm() <= flower.collect_radius {
            state.nectar_collected += flower.nectar;
            flower.nectar = 0.0;
            nectar_collected += 1;
        }
    }

    state.step_count += 1;
    let done = fell_off || state.all_collected() || state.step_count >= state.max_steps;
    state.done = done;

    let events = StepEvents {
        nectar_collected,
        collided,
        fell_off,
        episode_done: done,
    };
    let reward = compute_reward(&events, state.r_norm, state.params.c, &cfg.reward);
    state.trace.push(StepTrace {
        reward,
        nectar_collected,
        collided,
    });
    Ok((reward, events))
}

/// Nearest flower that still holds nectar, with the vector to it.
/// Returns `(-1, 0)` when every flower is empty.
pub fn nearest_flower(position: &Vec3, flowers: &[Flower]) -> (isize, Vec3) {
    let mut best: Option<(usize, f64)> = None;
    for (i, f) in flowers.iter().enumerate().filter(|(_, f)| f.has_nectar()) {
        let d = (f.position - position).norm_squared();
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((i, d));
        }
    }
    match best {
        Some((i, _)) => (i as isize, flowers[i].position - position),
        None => (-1, Vec3::zeros()),
    }
}

/// Nine normalised ray distances: for each of forward, up and down, the
/// nearest flower, obstacle and terrain hit independently, divided by the
/// ray range; 1.0 when that tag is not hit within range.
pub fn ray_perception(state: &EnvState, cfg: &EnvConfig) -> [f64; 9] {
    let range = cfg.ray_range;
    let origin = state.bird.position;
    let directions = [state.bird.forward(), Vec3::y(), -Vec3::y()];
    let flowers: Vec<(Vec3, f64)> = state
        .flowers
        .iter()
        .filter(|f| f.has_nectar())
        .map(|f| (f.position, cfg.flower_probe_radius))
        .collect();
    let obstacles: Vec<(Vec3, f64)> = state.obstacles.iter().map(|o| (o.center(), o.radius)).collect();

    let mut out = [1.0; 9];
    for (d, dir) in directions.iter().enumerate() {
        let hits = [
            nearest_sphere(&origin, dir, range, flowers.iter().map(|(c, r)| (c, *r))),
            nearest_sphere(&origin, dir, range, obstacles.iter().map(|(c, r)| (c, *r))),
            state.terrain.ray_distance(&origin, dir, range),
        ];
        for (tag, hit) in hits.into_iter().enumerate() {
            if let Some(dist) = hit {
                out[d * 3 + tag] = (dist / range).min(1.0);
            }
        }
    }
    out
}

pub fn build_observation(state: &EnvState, cfg: &EnvConfig) -> Observation {
    let bird = &state.bird;
    let mut obs = [0.0; OBS_DIM];
    obs[RAY_SLOTS].copy_from_slice(&ray_perception(state, cfg));

    let beak = bird.beak(cfg.physics.beak_offset);
    let (_, to_flower) = nearest_flower(&beak, &state.flowers);
    obs[FLOWER_VECTOR_SLOTS].copy_from_slice(bird.to_local(&to_flower).as_slice());
    obs[VELOCITY_SLOTS].copy_from_slice(bird.to_local(&bird.velocity).as_slice());

    let q = bird.orientation.quaternion();
    obs[ROTATION_SLOTS].copy_from_slice(&[q.w, q.i, q.j, q.k]);

    let p = bird.position;
    if let Ok(n) = state.terrain.surface_normal(p.x, p.z) {
        obs[NORMAL_SLOTS].copy_from_slice(n.as_slice());
    }
    obs[PARAM_SLOTS.start] = state.r_norm;
    obs[PARAM_SLOTS.start + 1] = state.params.c;
    obs
}

/// Distance the beak closed on flower `target` during a step, given the
/// beak position before it. Zero when there is no target.
pub fn approach_progress(state: &EnvState, target: isize, beak_before: &Vec3, cfg: &EnvConfig) -> f64 {
    let Ok(i) = usize::try_from(target) else {
        return 0.0;
    };
    let goal = state.flowers[i].position;
    (goal - beak_before).norm() - (goal - state.bird.beak(cfg.physics.beak_offset)).norm()
}

/// Feedback metrics for a finished episode.
pub fn episode_metrics(trace: &[StepTrace], max_steps: usize) -> Result<EpisodeMetrics> {
    if trace.is_empty() {
        return Err(Error::Empty("episode trace"));
    }
    let total: f64 = trace.iter().map(|t| t.reward).sum();
    Ok(EpisodeMetrics {
        avg_reward: total / trace.len() as f64,
        nectar: trace.iter().map(|t| t.nectar_collected).sum(),
        first_flower_step: trace.iter().position(|t| t.nectar_collected > 0).unwrap_or(max_steps),
        collisions: trace.iter().filter(|t| t.collided).count(),
        steps: trace.len(),
    })
}

/// Observation groups that can be masked out for ablations. Masked slots
/// are forced to zero so the vector keeps its shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    #[default]
    Full,
    NoNormals,
    NoRays,
    NoParams,
}

impl Ablation {
    pub const ALL: [Ablation; 4] = [Ablation::Full, Ablation::NoNormals, Ablation::NoRays, Ablation::NoParams];

    pub fn masked_slots(self) -> Range<usize> {
        match self {
            Ablation::Full => 0..0,
            Ablation::NoNormals => NORMAL_SLOTS,
            Ablation::NoRays => RAY_SLOTS,
            Ablation::NoParams => PARAM_SLOTS,
        }
    }

    pub fn apply(self, obs: &mut [f64]) {
        obs[self.masked_slots()].fill(0.0);
    }

    pub fn name(self) -> &'static str {
        match self {
            Ablation::Full => "full",
            Ablation::NoNormals => "no_normals",
            Ablation::NoRays => "no_rays",
            Ablation::NoParams => "no_params",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown ablation variant `{s}`")))
    }
}

/// One line of a trajectory dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub episode: usize,
    pub step: usize,
    pub position: [f64; 3],
    pub velocity: [f64; 3],
    pub yaw_rate: f64,
    pub action: Action,
    pub reward: f64,
    pub events: StepEvents,
    pub observation: Vec<f64>,
}

impl StepRecord {
    pub fn capture(episode: usize, state: &EnvState, action: Action, reward: f64, events: StepEvents, obs: &[f64]) -> Self {
        Self {
            episode,
            step: state.step_count,
            position: state.bird.position.into(),
            velocity: state.bird.velocity.into(),
            yaw_rate: state.bird.yaw_rate,
            action,
            reward,
            events,
            observation: obs.to_vec(),
        }
    }
}

/// Line-delimited JSON writer for step records.
pub struct TrajectoryWriter<W: Write> {
    out: W,
}

impl<W: Write> TrajectoryWriter<W> {
    pub fn new(out: W) -> Self {
        Self { out }
    }

    pub fn write(&mut self, record: &StepRecord) -> Result<()> {
        serde_json::to_writer(&mut self.out, record)?;
        self.out.write_all(b"\n")?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}
