//! Island terrain: fractal gradient-noise heightmaps, surface queries,
//! ray casting against terrain and sphere proxies, rejection sampling of
//! valid positions, and obstacle shuffling.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector3;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Number of bisection refinements after the ray march brackets a crossing.
const BISECTION_STEPS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseParams {
    /// Peak contribution of the first octave, in world units.
    pub amplitude: f64,
    /// Spatial frequency of the first octave, in cycles per world unit.
    pub frequency: f64,
    pub octaves: u32,
    /// Amplitude multiplier between successive octaves.
    pub gain: f64,
    /// Frequency multiplier between successive octaves.
    pub lacunarity: f64,
}

impl Default for NoiseParams {
    fn default() -> Self {
        Self {
            amplitude: 1.5,
            frequency: 0.08,
            octaves: 4,
            gain: 0.5,
            lacunarity: 2.0,
        }
    }
}

impl NoiseParams {
    pub fn flat() -> Self {
        Self {
            amplitude: 0.0,
            ..Self::default()
        }
    }

    /// Upper bound on |elevation|: amplitude times the geometric octave sum.
    pub fn elevation_bound(&self) -> f64 {
        let mut total = 0.0;
        let mut scale = 1.0;
        for _ in 0..self.octaves {
            total += scale;
            scale *= self.gain;
        }
        self.amplitude.abs() * total
    }
}

/// Classic 2D gradient noise over a seeded permutation table.
///
/// Gradients are the eight unit vectors at multiples of 45 degrees, which
/// keeps every sample inside [-1, 1].
struct GradientNoise {
    perm: [u8; 512],
}

impl GradientNoise {
    fn new(seed: u64) -> Self {
        let mut table: Vec<u8> = (0..=255).collect();
        table.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut perm = [0u8; 512];
        for (i, slot) in perm.iter_mut().enumerate() {
            *slot = table[i & 255];
        }
        Self { perm }
    }

    fn hash(&self, ix: i64, iz: i64) -> u8 {
        let a = self.perm[(ix & 255) as usize] as usize;
        self.perm[a + (iz & 255) as usize]
    }

    fn corner(&self, ix: i64, iz: i64, dx: f64, dz: f64) -> f64 {
        let angle = f64::from(self.hash(ix, iz) & 7) * (PI / 4.0);
        angle.cos() * dx + angle.sin() * dz
    }

    fn sample(&self, x: f64, z: f64) -> f64 {
        let x0 = x.floor();
        let z0 = z.floor();
        let (ix, iz) = (x0 as i64, z0 as i64);
        let (fx, fz) = (x - x0, z - z0);
        let fade = |t: f64| t * t * t * (t * (t * 6.0 - 15.0) + 10.0);
        let (u, v) = (fade(fx), fade(fz));

        let n00 = self.corner(ix, iz, fx, fz);
        let n10 = self.corner(ix + 1, iz, fx - 1.0, fz);
        let n01 = self.corner(ix, iz + 1, fx, fz - 1.0);
        let n11 = self.corner(ix + 1, iz + 1, fx - 1.0, fz - 1.0);

        let a = n00 + u * (n10 - n00);
        let b = n01 + u * (n11 - n01);
        a + v * (b - a)
    }
}

/// Regular-grid elevation field. Node `(ix, iz)` sits at world
/// `(origin[0] + ix * cell_size, origin[1] + iz * cell_size)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Heightmap {
    nx: usize,
    nz: usize,
    cell_size: f64,
    origin: [f64; 2],
    seed: u64,
    noise: NoiseParams,
    heights: Vec<f64>,
}

pub fn generate_heightmap(seed: u64, grid_dims: (usize, usize), cell_size: f64, noise: &NoiseParams) -> Result<Heightmap> {
    let (nx, nz) = grid_dims;
    if nx < 2 || nz < 2 {
        return Err(Error::InvalidDimensions(format!("grid must be at least 2x2, got {nx}x{nz}")));
    }
    if !(cell_size > 0.0 && cell_size.is_finite()) {
        return Err(Error::InvalidDimensions(format!(
            "cell size must be positive, got {cell_size}"
        )));
    }
    if noise.octaves < 1 {
        return Err(Error::InvalidDimensions("octaves must be >= 1".into()));
    }

    let field = GradientNoise::new(seed);
    let mut heights = Vec::with_capacity(nx * nz);
    for iz in 0..nz {
        for ix in 0..nx {
            let (wx, wz) = (ix as f64 * cell_size, iz as f64 * cell_size);
            let mut total = 0.0;
            let mut amp = noise.amplitude;
            let mut freq = noise.frequency;
            for octave in 0..noise.octaves {
                // Per-octave offset so octaves do not share lattice points.
                let shift = f64::from(octave) * 17.137;
                total += amp * field.sample(wx * freq + shift, wz * freq + shift);
                amp *= noise.gain;
                freq *= noise.lacunarity;
            }
            heights.push(total);
        }
    }

    Ok(Heightmap {
        nx,
        nz,
        cell_size,
        origin: [0.0, 0.0],
        seed,
        noise: *noise,
        heights,
    })
}

impl Heightmap {
    /// Builds a heightmap from explicit elevations (row-major, `z` outer).
    pub fn from_grid(nx: usize, nz: usize, cell_size: f64, heights: Vec<f64>) -> Result<Self> {
        if nx < 2 || nz < 2 {
            return Err(Error::InvalidDimensions(format!("grid must be at least 2x2, got {nx}x{nz}")));
        }
        if !(cell_size > 0.0 && cell_size.is_finite()) {
            return Err(Error::InvalidDimensions(format!(
                "cell size must be positive, got {cell_size}"
            )));
        }
        if heights.len() != nx * nz {
            return Err(Error::DimensionMismatch {
                expected: nx * nz,
                actual: heights.len(),
            });
        }
        if heights.iter().any(|h| !h.is_finite()) {
            return Err(Error::InvalidDimensions("non-finite elevation".into()));
        }
        Ok(Self {
            nx,
            nz,
            cell_size,
            origin: [0.0, 0.0],
            seed: 0,
            noise: NoiseParams::flat(),
            heights,
        })
    }

    pub fn with_origin(mut self, x: f64, z: f64) -> Self {
        self.origin = [x, z];
        self
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.nx, self.nz)
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn origin(&self) -> [f64; 2] {
        self.origin
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn noise(&self) -> &NoiseParams {
        &self.noise
    }

    pub fn heights(&self) -> &[f64] {
        &self.heights
    }

    pub fn node(&self, ix: usize, iz: usize) -> f64 {
        self.heights[iz * self.nx + ix]
    }

    /// Horizontal extent as `(min_x, max_x, min_z, max_z)`.
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        let [x0, z0] = self.origin;
        (
            x0,
            x0 + (self.nx - 1) as f64 * self.cell_size,
            z0,
            z0 + (self.nz - 1) as f64 * self.cell_size,
        )
    }

    pub fn center(&self) -> (f64, f64) {
        let (x0, x1, z0, z1) = self.bounds();
        (0.5 * (x0 + x1), 0.5 * (z0 + z1))
    }

    pub fn contains(&self, x: f64, z: f64) -> bool {
        let (x0, x1, z0, z1) = self.bounds();
        x >= x0 && x <= x1 && z >= z0 && z <= z1
    }

    /// Bilinear interpolation of the four surrounding nodes.
    pub fn height_at(&self, x: f64, z: f64) -> Result<f64> {
        if !self.contains(x, z) {
            return Err(Error::OutOfBounds { x, z });
        }
        Ok(self.interpolate(x, z))
    }

    fn interpolate(&self, x: f64, z: f64) -> f64 {
        let gx = (x - self.origin[0]) / self.cell_size;
        let gz = (z - self.origin[1]) / self.cell_size;
        let ix = (gx.floor() as usize).min(self.nx - 2);
        let iz = (gz.floor() as usize).min(self.nz - 2);
        let tx = gx - ix as f64;
        let tz = gz - iz as f64;

        let h00 = self.node(ix, iz);
        let h10 = self.node(ix + 1, iz);
        let h01 = self.node(ix, iz + 1);
        let h11 = self.node(ix + 1, iz + 1);
        let near = h00 + tx * (h10 - h00);
        let far = h01 + tx * (h11 - h01);
        near + tz * (far - near)
    }

    /// Upward unit normal from central differences of the interpolated
    /// surface, one half-cell either side (one-sided at the borders).
    pub fn surface_normal(&self, x: f64, z: f64) -> Result<Vec3> {
        if !self.contains(x, z) {
            return Err(Error::OutOfBounds { x, z });
        }
        let (x0, x1, z0, z1) = self.bounds();
        let e = 0.5 * self.cell_size;

        let (xa, xb) = ((x - e).max(x0), (x + e).min(x1));
        let (za, zb) = ((z - e).max(z0), (z + e).min(z1));
        let dhdx = (self.interpolate(xb, z) - self.interpolate(xa, z)) / (xb - xa);
        let dhdz = (self.interpolate(x, zb) - self.interpolate(x, za)) / (zb - za);

        Ok(Vec3::new(-dhdx, 1.0, -dhdz).normalize())
    }

    /// Angle between the surface normal and vertical, in radians.
    pub fn slope_angle(&self, x: f64, z: f64) -> Result<f64> {
        Ok(self.surface_normal(x, z)?.y.clamp(-1.0, 1.0).acos())
    }

    /// Position on the surface directly below/above `(x, z)`.
    pub fn project(&self, x: f64, z: f64) -> Result<Vec3> {
        Ok(Vec3::new(x, self.height_at(x, z)?, z))
    }

    /// Ray-march step length.
    pub fn ray_step(&self) -> f64 {
        0.5 * self.cell_size
    }

    fn is_below_surface(&self, p: &Vec3) -> bool {
        self.contains(p.x, p.z) && p.y <= self.interpolate(p.x, p.z)
    }

    /// Distance along the ray to the terrain surface.
    ///
    /// Fixed-step march at half a cell, then bisection on the bracketing
    /// interval. Points off the grid are open air.
    pub fn ray_distance(&self, origin: &Vec3, direction: &Vec3, max_range: f64) -> Option<f64> {
        if self.is_below_surface(origin) {
            return Some(0.0);
        }
        let step = self.ray_step();
        let mut prev = 0.0;
        loop {
            let t = (prev + step).min(max_range);
            if self.is_below_surface(&(origin + direction * t)) {
                let (mut lo, mut hi) = (prev, t);
                for _ in 0..BISECTION_STEPS {
                    let mid = 0.5 * (lo + hi);
                    if self.is_below_surface(&(origin + direction * mid)) {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                return Some(hi);
            }
            if t >= max_range {
                return None;
            }
            prev = t;
        }
    }

    /// Writes the text fixture format:
    ///
    /// ```text
    /// coisland-heightmap v1
    /// dims <nx> <nz>
    /// cell_size <f64>
    /// origin <x> <z>
    /// seed <u64>
    /// noise <amplitude> <frequency> <octaves> <gain> <lacunarity>
    /// <nz rows of nx whitespace-separated elevations, z ascending>
    /// ```
    ///
    /// Floats use Rust's shortest round-trip formatting, so a write/read
    /// cycle is bit-exact.
    pub fn to_text(&self) -> String {
        let n = &self.noise;
        let mut out = String::new();
        let _ = writeln!(out, "coisland-heightmap v1");
        let _ = writeln!(out, "dims {} {}", self.nx, self.nz);
        let _ = writeln!(out, "cell_size {}", self.cell_size);
        let _ = writeln!(out, "origin {} {}", self.origin[0], self.origin[1]);
        let _ = writeln!(out, "seed {}", self.seed);
        let _ = writeln!(
            out,
            "noise {} {} {} {} {}",
            n.amplitude, n.frequency, n.octaves, n.gain, n.lacunarity
        );
        for row in self.heights.chunks(self.nx) {
            let line: Vec<String> = row.iter().map(|h| h.to_string()).collect();
            let _ = writeln!(out, "{}", line.join(" "));
        }
        out
    }

    pub fn from_text(text: &str) -> std::result::Result<Self, String> {
        let mut lines = text.lines();
        let mut next = |key: &str| -> std::result::Result<Vec<String>, String> {
            let line = lines.next().ok_or_else(|| format!("missing `{key}` line"))?;
            let mut parts = line.split_whitespace();
            match parts.next() {
                Some(k) if k == key => Ok(parts.map(str::to_owned).collect()),
                other => Err(format!("expected `{key}`, found {other:?}")),
            }
        };
        let header = next("coisland-heightmap")?;
        if header != ["v1"] {
            return Err(format!("unsupported version {header:?}"));
        }
        fn num<T: std::str::FromStr>(s: Option<&String>) -> std::result::Result<T, String> {
            s.ok_or("missing field")?.parse().map_err(|_| format!("bad number {s:?}"))
        }
        let dims = next("dims")?;
        let (nx, nz): (usize, usize) = (num(dims.first())?, num(dims.get(1))?);
        let cell_size: f64 = num(next("cell_size")?.first())?;
        let origin = next("origin")?;
        let origin = [num(origin.first())?, num(origin.get(1))?];
        let seed: u64 = num(next("seed")?.first())?;
        let nf = next("noise")?;
        let noise = NoiseParams {
            amplitude: num(nf.first())?,
            frequency: num(nf.get(1))?,
            octaves: num(nf.get(2))?,
            gain: num(nf.get(3))?,
            lacunarity: num(nf.get(4))?,
        };

        let heights: Vec<f64> = lines
            .flat_map(str::split_whitespace)
            .map(|s| s.parse::<f64>().map_err(|_| format!("bad elevation {s:?}")))
            .collect::<std::result::Result<_, _>>()?;
        let mut hm = Heightmap::from_grid(nx, nz, cell_size, heights).map_err(|e| e.to_string())?;
        hm.origin = origin;
        hm.seed = seed;
        hm.noise = noise;
        Ok(hm)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_text(&text).map_err(|reason| Error::Format {
            path: path.to_owned(),
            reason,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub center: [f64; 3],
    pub radius: f64,
}

impl Obstacle {
    pub fn center(&self) -> Vec3 {
        Vec3::from(self.center)
    }
}

/// Sphere proxy used for flower ray tests.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphereProbe {
    pub center: Vec3,
    pub radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HitTag {
    Flower,
    Obstacle,
    Terrain,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayHit {
    pub tag: HitTag,
    pub distance: f64,
}

/// Entry distance of a ray into a sphere; zero when the origin is inside,
/// `None` when the sphere is missed or lies behind the origin.
pub fn ray_sphere(origin: &Vec3, direction: &Vec3, center: &Vec3, radius: f64) -> Option<f64> {
    let oc = origin - center;
    let b = oc.dot(direction);
    let c = oc.norm_squared() - radius * radius;
    if c <= 0.0 {
        return Some(0.0);
    }
    let disc = b * b - c;
    if disc < 0.0 || b > 0.0 {
        return None;
    }
    Some(-b - disc.sqrt())
}

/// Nearest hit of any sphere in `spheres` within `max_range`.
pub fn nearest_sphere<'a, I>(origin: &Vec3, direction: &Vec3, max_range: f64, spheres: I) -> Option<f64>
where
    I: IntoIterator<Item = (&'a Vec3, f64)>,
{
    spheres
        .into_iter()
        .filter_map(|(c, r)| ray_sphere(origin, direction, c, r))
        .filter(|&d| d <= max_range)
        .min_by(f64::total_cmp)
}

/// Closest intersection among terrain, obstacles, and flowers.
pub fn raycast(
    hm: &Heightmap,
    obstacles: &[Obstacle],
    flowers: &[SphereProbe],
    origin: &Vec3,
    direction: &Vec3,
    max_range: f64,
) -> Option<RayHit> {
    let obstacle_centers: Vec<Vec3> = obstacles.iter().map(Obstacle::center).collect();
    let candidates = [
        (
            HitTag::Flower,
            nearest_sphere(origin, direction, max_range, flowers.iter().map(|f| (&f.center, f.radius))),
        ),
        (
            HitTag::Obstacle,
            nearest_sphere(
                origin,
                direction,
                max_range,
                obstacle_centers.iter().zip(obstacles.iter().map(|o| o.radius)),
            ),
        ),
        (HitTag::Terrain, hm.ray_distance(origin, direction, max_range)),
    ];
    candidates
        .into_iter()
        .filter_map(|(tag, d)| d.map(|distance| RayHit { tag, distance }))
        .min_by(|a, b| a.distance.total_cmp(&b.distance))
}

/// Whether `p` keeps at least `clearance` from every obstacle surface.
pub fn clear_of_obstacles(p: &Vec3, obstacles: &[Obstacle], clearance: f64) -> bool {
    obstacles.iter().all(|o| (p - o.center()).norm() >= o.radius + clearance)
}

/// Rejection-samples a surface point uniformly from the horizontal disk of
/// `radius` around `center`. Candidates off the grid, steeper than
/// `max_slope` (radians), or within `clearance` of an obstacle are rejected.
#[allow(clippy::too_many_arguments)]
pub fn sample_valid_position<R: Rng + ?Sized>(
    hm: &Heightmap,
    obstacles: &[Obstacle],
    center: &Vec3,
    radius: f64,
    max_slope: f64,
    clearance: f64,
    rng: &mut R,
    max_attempts: usize,
) -> Option<Vec3> {
    for _ in 0..max_attempts {
        let rho = radius * rng.random::<f64>().sqrt();
        let theta = 2.0 * PI * rng.random::<f64>();
        let (x, z) = (center.x + rho * theta.cos(), center.z + rho * theta.sin());
        let Ok(p) = hm.project(x, z) else {
            continue;
        };
        let Ok(slope) = hm.slope_angle(x, z) else {
            continue;
        };
        if slope > max_slope || !clear_of_obstacles(&p, obstacles, clearance) {
            continue;
        }
        return Some(p);
    }
    None
}

/// Picks `k` distinct pool positions without replacement. The `j`-th pick
/// gets `radii[j % radii.len()]`.
pub fn shuffle_obstacles<R: Rng + ?Sized>(pool: &[Vec3], k: usize, radii: &[f64], rng: &mut R) -> Result<Vec<Obstacle>> {
    if k > pool.len() {
        return Err(Error::PoolExhausted {
            requested: k,
            available: pool.len(),
        });
    }
    if k > 0 && radii.is_empty() {
        return Err(Error::Empty("obstacle radii"));
    }
    if let Some(r) = radii.iter().find(|r| !(**r > 0.0)) {
        return Err(Error::Config(format!("obstacle radius must be positive, got {r}")));
    }
    let picks = rand::seq::index::sample(rng, pool.len(), k);
    Ok(picks
        .iter()
        .enumerate()
        .map(|(j, i)| Obstacle {
            center: pool[i].into(),
            radius: radii[j % radii.len()],
        })
        .collect())
}

/// Evenly spaced candidate obstacle sites on rings around `center`,
/// projected onto the surface. Sites off the grid are skipped.
pub fn ring_pool(hm: &Heightmap, center: &Vec3, rings: &[f64], per_ring: usize) -> Vec<Vec3> {
    let mut pool = Vec::new();
    for (k, &radius) in rings.iter().enumerate() {
        // Stagger alternate rings by half a slot.
        let phase = if k % 2 == 0 { 0.0 } else { PI / per_ring.max(1) as f64 };
        for j in 0..per_ring {
            let theta = phase + 2.0 * PI * j as f64 / per_ring as f64;
            let (x, z) = (center.x + radius * theta.cos(), center.z + radius * theta.sin());
            if let Ok(p) = hm.project(x, z) {
                pool.push(p);
            }
        }
    }
    pool
}
