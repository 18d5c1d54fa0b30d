//! The island generator: flower layouts driven by spawn radius `r` and
//! congestion `c`, per-flower placement penalties, and the between-episode
//! hill-climbing controller with penalty gating.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::terrain::{sample_valid_position, Heightmap, Obstacle, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayoutParams {
    /// Spawn radius in world units.
    pub r: f64,
    /// Congestion in [0, 1].
    pub c: f64,
}

impl LayoutParams {
    pub fn new(r: f64, c: f64) -> Self {
        Self { r, c }
    }

    pub fn clipped(self, cfg: &PlacementConfig) -> Self {
        Self {
            r: self.r.clamp(cfg.r_min, cfg.r_max),
            c: self.c.clamp(0.0, 1.0),
        }
    }

    pub fn in_range(&self, cfg: &PlacementConfig) -> bool {
        (cfg.r_min..=cfg.r_max).contains(&self.r) && (0.0..=1.0).contains(&self.c)
    }

    /// `r` mapped linearly onto [0, 1] over the configured range.
    pub fn r_normalized(&self, cfg: &PlacementConfig) -> f64 {
        if cfg.r_max > cfg.r_min {
            ((self.r - cfg.r_min) / (cfg.r_max - cfg.r_min)).clamp(0.0, 1.0)
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlacementConfig {
    pub r_min: f64,
    pub r_max: f64,
    /// Flowers per unit of `c * r^2`.
    pub count_scale: f64,
    pub n_min: usize,
    pub n_max: usize,
    /// Target spacing at `c = 1`.
    pub spacing_min: f64,
    /// Target spacing at `c = 0`.
    pub spacing_max: f64,
    pub overlap_weight: f64,
    pub tilt_weight: f64,
    pub spacing_weight: f64,
    /// Tilt threshold for the penalty, degrees.
    pub max_tilt_deg: f64,
    /// Flower footprint radius used by the overlap indicator.
    pub footprint: f64,
    /// Hard slope limit for spawning, degrees.
    pub spawn_max_slope_deg: f64,
    pub spawn_clearance: f64,
    pub max_attempts: usize,
}

impl Default for PlacementConfig {
    fn default() -> Self {
        Self {
            r_min: 3.0,
            r_max: 12.0,
            count_scale: 0.2,
            n_min: 3,
            n_max: 30,
            spacing_min: 1.0,
            spacing_max: 4.0,
            overlap_weight: 1.0,
            tilt_weight: 1.0,
            spacing_weight: 0.2,
            max_tilt_deg: 15.0,
            footprint: 0.6,
            spawn_max_slope_deg: 35.0,
            spawn_clearance: 0.1,
            max_attempts: 64,
        }
    }
}

impl PlacementConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(format!("placement: {msg}")));
        if !(self.r_min >= 0.0 && self.r_max >= self.r_min) {
            return fail(format!("bad radius range [{}, {}]", self.r_min, self.r_max));
        }
        if self.n_min == 0 || self.n_max < self.n_min {
            return fail(format!("bad flower count range [{}, {}]", self.n_min, self.n_max));
        }
        if self.spacing_weight > 0.0 && self.n_min < 2 {
            return fail("n_min must be >= 2 when spacing_weight > 0".into());
        }
        if [self.overlap_weight, self.tilt_weight, self.spacing_weight]
            .iter()
            .any(|w| !(*w >= 0.0))
        {
            return fail("penalty weights must be nonnegative".into());
        }
        if !(self.max_tilt_deg > 0.0 && self.max_tilt_deg < 90.0) {
            return fail(format!("max_tilt_deg must be in (0, 90), got {}", self.max_tilt_deg));
        }
        if self.max_attempts == 0 {
            return fail("max_attempts must be >= 1".into());
        }
        Ok(())
    }

    pub fn penalty_weights(&self, params: &LayoutParams) -> PenaltyWeights {
        PenaltyWeights {
            overlap: self.overlap_weight,
            tilt: self.tilt_weight,
            spacing: self.spacing_weight,
            max_tilt: self.max_tilt_deg.to_radians(),
            target_spacing: target_spacing(params.c, self),
            footprint: self.footprint,
        }
    }
}

/// Dense layouts (high `c`) aim for tight spacing.
pub fn target_spacing(c: f64, cfg: &PlacementConfig) -> f64 {
    (1.0 - c) * cfg.spacing_max + c * cfg.spacing_min
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyWeights {
    pub overlap: f64,
    pub tilt: f64,
    pub spacing: f64,
    /// Radians.
    pub max_tilt: f64,
    pub target_spacing: f64,
    pub footprint: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub center: [f64; 3],
    pub params: LayoutParams,
    /// `r` normalised over the configured range, as the solver observes it.
    pub r_norm: f64,
    /// Flower base points on the terrain surface.
    pub flowers: Vec<[f64; 3]>,
    /// Count requested by the congestion law; more than `flowers.len()`
    /// when some draws were rejected.
    pub requested: usize,
}

impl Layout {
    pub fn len(&self) -> usize {
        self.flowers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flowers.is_empty()
    }

    pub fn is_short(&self) -> bool {
        self.flowers.len() < self.requested
    }

    pub fn flower(&self, i: usize) -> Vec3 {
        Vec3::from(self.flowers[i])
    }
}

pub fn flower_count(params: &LayoutParams, cfg: &PlacementConfig) -> usize {
    let raw = (cfg.count_scale * params.c * params.r * params.r).round();
    (raw.max(0.0) as usize).clamp(cfg.n_min, cfg.n_max)
}

pub fn spawn_layout<R: Rng + ?Sized>(
    hm: &Heightmap,
    obstacles: &[Obstacle],
    params: &LayoutParams,
    center: &Vec3,
    rng: &mut R,
    cfg: &PlacementConfig,
) -> Result<Layout> {
    let params = params.clipped(cfg);
    let requested = flower_count(&params, cfg);
    let max_slope = cfg.spawn_max_slope_deg.to_radians();
    let flowers: Vec<[f64; 3]> = (0..requested)
        .filter_map(|_| {
            sample_valid_position(
                hm,
                obstacles,
                center,
                params.r,
                max_slope,
                cfg.spawn_clearance,
                rng,
                cfg.max_attempts,
            )
        })
        .map(Into::into)
        .collect();
    if flowers.is_empty() {
        return Err(Error::NoValidSpawn(format!(
            "no flower could be placed within r = {} of ({:.2}, {:.2})",
            params.r, center.x, center.z
        )));
    }
    if flowers.len() < requested {
        log::debug!("layout short: placed {} of {requested} flowers", flowers.len());
    }
    Ok(Layout {
        center: (*center).into(),
        params,
        r_norm: params.r_normalized(cfg),
        flowers,
        requested,
    })
}

/// Per-flower terms of the placement penalty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyBreakdown {
    pub overlap: bool,
    pub tilted: bool,
    /// Distance to the nearest other flower; `None` for singleton layouts.
    pub nearest: Option<f64>,
    pub penalty: f64,
}

/// Distance from flower `i` to its nearest neighbour in the layout.
pub fn nearest_neighbor_distance(layout: &Layout, i: usize) -> Option<f64> {
    let p = layout.flower(i);
    (0..layout.len())
        .filter(|&j| j != i)
        .map(|j| (layout.flower(j) - p).norm())
        .min_by(f64::total_cmp)
}

pub fn penalty_breakdown(
    i: usize,
    layout: &Layout,
    hm: &Heightmap,
    obstacles: &[Obstacle],
    w: &PenaltyWeights,
) -> Result<PenaltyBreakdown> {
    if i >= layout.len() {
        return Err(Error::DimensionMismatch {
            expected: layout.len(),
            actual: i,
        });
    }
    let p = layout.flower(i);
    let overlap = obstacles.iter().any(|o| (p - o.center()).norm() < o.radius + w.footprint);
    let tilted = hm.slope_angle(p.x, p.z)? > w.max_tilt;
    let nearest = nearest_neighbor_distance(layout, i);

    let spacing = match nearest {
        Some(d) => (d - w.target_spacing).abs(),
        None if w.spacing > 0.0 => return Err(Error::SingletonLayout),
        None => 0.0,
    };
    let indicator = |b: bool| if b { 1.0 } else { 0.0 };
    let penalty = w.overlap * indicator(overlap) + w.tilt * indicator(tilted) + w.spacing * spacing;
    Ok(PenaltyBreakdown {
        overlap,
        tilted,
        nearest,
        penalty,
    })
}

pub fn placement_penalty(i: usize, layout: &Layout, hm: &Heightmap, obstacles: &[Obstacle], w: &PenaltyWeights) -> Result<f64> {
    Ok(penalty_breakdown(i, layout, hm, obstacles, w)?.penalty)
}

pub fn total_penalty(layout: &Layout, hm: &Heightmap, obstacles: &[Obstacle], w: &PenaltyWeights) -> Result<f64> {
    (0..layout.len()).try_fold(0.0, |acc, i| Ok(acc + placement_penalty(i, layout, hm, obstacles, w)?))
}

/// JSON export of a layout with its per-flower penalty terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutReport {
    pub center: [f64; 3],
    pub params: LayoutParams,
    pub requested: usize,
    pub target_spacing: f64,
    pub flowers: Vec<FlowerReport>,
    pub total_penalty: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowerReport {
    pub position: [f64; 3],
    #[serde(flatten)]
    pub breakdown: PenaltyBreakdown,
}

pub fn layout_report(layout: &Layout, hm: &Heightmap, obstacles: &[Obstacle], w: &PenaltyWeights) -> Result<LayoutReport> {
    let flowers = (0..layout.len())
        .map(|i| {
            Ok(FlowerReport {
                position: layout.flowers[i],
                breakdown: penalty_breakdown(i, layout, hm, obstacles, w)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let total_penalty = flowers.iter().map(|f| f.breakdown.penalty).sum();
    Ok(LayoutReport {
        center: layout.center,
        params: layout.params,
        requested: layout.requested,
        target_spacing: w.target_spacing,
        flowers,
        total_penalty,
    })
}

/// Solver feedback for one finished episode.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    /// m1: mean reward per step.
    pub avg_reward: f64,
    /// m2: nectar units collected.
    pub nectar: usize,
    /// m3: step index of the first collection, or the step limit.
    pub first_flower_step: usize,
    /// m4: collision incidents.
    pub collisions: usize,
    pub steps: usize,
}

/// Scales that map raw metrics onto comparable, roughly unit ranges.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricScales {
    pub nectar: f64,
    pub steps: f64,
    pub collisions: f64,
}

impl EpisodeMetrics {
    /// `[m1, m2, m3, m4]` normalised; m1 is passed through clamped to
    /// [-1, 1], the rest divided by their scale and capped at 1.
    pub fn normalized(&self, s: &MetricScales) -> [f64; 4] {
        let ratio = |v: f64, scale: f64| if scale > 0.0 { (v / scale).min(1.0) } else { 0.0 };
        [
            self.avg_reward.clamp(-1.0, 1.0),
            ratio(self.nectar as f64, s.nectar),
            ratio(self.first_flower_step as f64, s.steps),
            ratio(self.collisions as f64, s.collisions),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HillClimbConfig {
    pub step_r: f64,
    pub step_c: f64,
    /// Gate threshold per placed flower.
    pub gate_per_flower: f64,
    pub w_nectar: f64,
    pub w_reward: f64,
    pub w_collisions: f64,
    pub w_penalty: f64,
}

impl Default for HillClimbConfig {
    fn default() -> Self {
        Self {
            step_r: 0.5,
            step_c: 0.05,
            gate_per_flower: 0.5,
            w_nectar: 1.0,
            w_reward: 0.5,
            w_collisions: 0.2,
            w_penalty: 0.1,
        }
    }
}

pub fn hill_climb_score(feedback: &EpisodeMetrics, layout_penalty: f64, cfg: &HillClimbConfig) -> f64 {
    cfg.w_nectar * feedback.nectar as f64 + cfg.w_reward * feedback.avg_reward
        - cfg.w_collisions * feedback.collisions as f64
        - cfg.w_penalty * layout_penalty
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateDecision {
    Accepted,
    RejectedScore,
    Gated,
}

impl GateDecision {
    pub fn as_str(self) -> &'static str {
        match self {
            GateDecision::Accepted => "accepted",
            GateDecision::RejectedScore => "rejected_score",
            GateDecision::Gated => "gated",
        }
    }
}

/// Incumbent of the hill climber: the last accepted parameters and the
/// score they earned (`None` until something is accepted).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HillClimbState {
    pub params: LayoutParams,
    pub score: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HillClimbOutcome {
    pub state: HillClimbState,
    pub decision: GateDecision,
    pub score: f64,
    /// Proposal for the next episode, perturbed from the incumbent.
    pub proposal: LayoutParams,
}

/// One between-episode step of the heuristic island controller.
///
/// `evaluated` are the parameters the finished episode ran with. They
/// replace the incumbent only when their score is at least the incumbent's
/// and the layout penalty is within `gate_per_flower * n_flowers`; otherwise
/// the incumbent is kept. Either way a fresh uniform perturbation of the
/// incumbent is proposed, clipped into range.
#[allow(clippy::too_many_arguments)]
pub fn hill_climb_update<R: Rng + ?Sized>(
    state: &HillClimbState,
    evaluated: &LayoutParams,
    feedback: &EpisodeMetrics,
    layout_penalty: f64,
    n_flowers: usize,
    rng: &mut R,
    cfg: &HillClimbConfig,
    ranges: &PlacementConfig,
) -> HillClimbOutcome {
    let score = hill_climb_score(feedback, layout_penalty, cfg);
    let gate = cfg.gate_per_flower * n_flowers as f64;

    let (next, decision) = if layout_penalty > gate {
        (*state, GateDecision::Gated)
    } else if state.score.is_none_or(|best| score >= best) {
        (
            HillClimbState {
                params: evaluated.clipped(ranges),
                score: Some(score),
            },
            GateDecision::Accepted,
        )
    } else {
        (*state, GateDecision::RejectedScore)
    };

    let proposal = LayoutParams {
        r: next.params.r + rng.random_range(-1.0..=1.0) * cfg.step_r,
        c: next.params.c + rng.random_range(-1.0..=1.0) * cfg.step_c,
    }
    .clipped(ranges);

    HillClimbOutcome {
        state: next,
        decision,
        score,
        proposal,
    }
}

/// Observation for the learned island policy: `capacity` obstacle slots
/// (position relative to the island centre, zero-padded), the bird start
/// relative to the centre, and the previous episode's normalised metrics
/// (zeros when there is no history). Length is `3 * capacity + 7`.
pub fn island_observe(
    obstacles: &[Obstacle],
    center: &Vec3,
    bird_start: &Vec3,
    prev: Option<&EpisodeMetrics>,
    scales: &MetricScales,
    capacity: usize,
) -> Result<Vec<f64>> {
    if obstacles.len() > capacity {
        return Err(Error::ObstacleCapacity {
            count: obstacles.len(),
            capacity,
        });
    }
    let mut obs = vec![0.0; island_obs_dim(capacity)];
    for (slot, o) in obs.chunks_exact_mut(3).zip(obstacles) {
        slot.copy_from_slice((o.center() - center).as_slice());
    }
    let tail = 3 * capacity;
    obs[tail..tail + 3].copy_from_slice((bird_start - center).as_slice());
    if let Some(m) = prev {
        obs[tail + 3..].copy_from_slice(&m.normalized(scales));
    }
    Ok(obs)
}

pub fn island_obs_dim(capacity: usize) -> usize {
    3 * capacity + 7
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IslandRewardWeights {
    pub nectar: f64,
    pub penalty: f64,
    pub collisions: f64,
    pub slow: f64,
}

impl Default for IslandRewardWeights {
    fn default() -> Self {
        Self {
            nectar: 1.0,
            penalty: 0.3,
            collisions: 0.2,
            slow: 0.2,
        }
    }
}

/// Weighted sum over already-normalised terms.
pub fn island_reward_normalized(
    nectar_norm: f64,
    penalty_norm: f64,
    collisions_norm: f64,
    slow_norm: f64,
    w: &IslandRewardWeights,
) -> f64 {
    w.nectar * nectar_norm - w.penalty * penalty_norm - w.collisions * collisions_norm - w.slow * slow_norm
}

/// Island reward from raw feedback. The penalty is normalised per placed
/// flower.
pub fn island_reward(
    feedback: &EpisodeMetrics,
    layout_penalty: f64,
    n_flowers: usize,
    w: &IslandRewardWeights,
    scales: &MetricScales,
) -> f64 {
    let [_, nectar, slow, collisions] = feedback.normalized(scales);
    let penalty = layout_penalty / n_flowers.max(1) as f64;
    island_reward_normalized(nectar, penalty, collisions, slow, w)
}
