use std::sync::Arc;

use rand::Rng;

use crate::environment::{reset, sample_bird_spawn, EnvState};
use crate::error::Result;
use crate::placement::{spawn_layout, total_penalty, Layout, LayoutParams};
use crate::terrain::{generate_heightmap, ring_pool, shuffle_obstacles, Heightmap, Obstacle, Vec3};

use super::config::RunConfig;

/// The static part of a run: terrain, island centre and obstacle pool.
#[derive(Debug, Clone)]
pub struct World {
    pub terrain: Arc<Heightmap>,
    pub center: Vec3,
    pub pool: Vec<Vec3>,
}

/// Everything fixed at the start of one solver episode.
#[derive(Debug, Clone)]
pub struct Episode {
    pub state: EnvState,
    pub layout: Layout,
    pub penalty: f64,
}

impl World {
    pub fn build(cfg: &RunConfig) -> Result<Self> {
        let t = &cfg.terrain;
        let terrain = generate_heightmap(t.seed, (t.grid[0], t.grid[1]), t.cell_size, &t.noise)?;
        let (cx, cz) = terrain.center();
        let center = terrain.project(cx, cz)?;
        let pool = ring_pool(&terrain, &center, &cfg.obstacles.rings, cfg.obstacles.per_ring);
        Ok(Self {
            terrain: Arc::new(terrain),
            center,
            pool,
        })
    }

    pub fn draw_obstacles<R: Rng + ?Sized>(&self, cfg: &RunConfig, rng: &mut R) -> Result<Vec<Obstacle>> {
        shuffle_obstacles(&self.pool, cfg.obstacles.count, &cfg.obstacles.radii, rng)
    }

    /// Places flowers for `params` and resets the bird.
    pub fn begin<R: Rng + ?Sized, S: Rng + ?Sized>(
        &self,
        cfg: &RunConfig,
        obstacles: Vec<Obstacle>,
        params: &LayoutParams,
        layout_rng: &mut R,
        spawn_rng: &mut S,
    ) -> Result<Episode> {
        let (layout, penalty) = self.lay_out(cfg, &obstacles, params, layout_rng)?;
        let state = reset(self.terrain.clone(), obstacles, &layout, spawn_rng, &cfg.env)?;
        Ok(Episode { state, layout, penalty })
    }

    /// Flower layout for `params` and its total placement penalty.
    pub fn lay_out<R: Rng + ?Sized>(
        &self,
        cfg: &RunConfig,
        obstacles: &[Obstacle],
        params: &LayoutParams,
        rng: &mut R,
    ) -> Result<(Layout, f64)> {
        let layout = spawn_layout(&self.terrain, obstacles, params, &self.center, rng, &cfg.placement)?;
        let weights = cfg.placement.penalty_weights(&layout.params);
        let penalty = total_penalty(&layout, &self.terrain, obstacles, &weights)?;
        Ok((layout, penalty))
    }

    /// Bird start drawn from `rng`; on a clone of an env's spawn generator
    /// this previews the start `begin` will produce.
    pub fn spawn_point<R: Rng + ?Sized>(&self, cfg: &RunConfig, obstacles: &[Obstacle], rng: &mut R) -> Result<Vec3> {
        sample_bird_spawn(&self.terrain, obstacles, &self.center, rng, &cfg.env)
    }
}
