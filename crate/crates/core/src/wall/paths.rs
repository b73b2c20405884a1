//! Brownian paths with generator `Delta` (increments `sqrt(2 dt) N(0, 1)`),
//! stopped on the cube boundary, with the accumulated potential along the way.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{RegularizedWall, Sphere};
use crate::error::{Error, Result};
use crate::grid::{norm, DomainSpec, GridSpec, Point};

/// Paths per random stream.
const CHUNK: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub paths: usize,
    pub dt: f64,
    pub seed: u64,
    pub max_steps: usize,
    /// Stop a path once its accumulated potential drops below this; its
    /// weight `exp(integral)` no longer matters.
    pub kill_below: Option<f64>,
}

impl EnsembleConfig {
    /// `dt = h^2 / (2 dim)` and a cap at `25/lambda`, `lambda` the exit rate
    /// of the cube.
    pub fn for_grid(grid: &GridSpec, domain: &DomainSpec, paths: usize, seed: u64) -> Self {
        let h = grid.spacing();
        let dt = h * h / (2.0 * grid.dim as f64);
        Self::with_dt(grid.dim, domain, paths, dt, seed)
    }

    pub fn with_dt(dim: usize, domain: &DomainSpec, paths: usize, dt: f64, seed: u64) -> Self {
        let a = domain.half_width;
        let lambda = dim as f64 * (std::f64::consts::PI / (2.0 * a)).powi(2);
        Self {
            paths,
            dt,
            seed,
            max_steps: (25.0 / lambda / dt).ceil() as usize,
            kill_below: Some(-60.0),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.paths == 0 || !(self.dt > 0.0) || self.max_steps == 0 {
            return Err(Error::InvalidPotential(format!(
                "ensemble needs paths > 0, dt > 0 and a positive step cap, got {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathStatus {
    Exited,
    /// Stopped by `kill_below`; counts with weight zero.
    Absorbed,
    Capped,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub status: PathStatus,
    /// Interpolated boundary crossing, or the last position.
    pub end: Point,
    /// `int q(B_t) dt` by the trapezoid rule.
    pub integral: f64,
    pub time: f64,
    pub hit_surface: bool,
    pub hit_time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathEnsemble {
    pub start: Point,
    pub seed: u64,
    pub dt: f64,
    pub records: Vec<PathRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FkEstimate {
    pub mean: f64,
    pub stderr: f64,
    /// Paths counted in the mean.
    pub used: usize,
    pub capped: usize,
    pub absorbed: usize,
    pub hit_fraction: f64,
    pub warning: Option<String>,
}

impl PathEnsemble {
    pub fn count(&self, status: PathStatus) -> usize {
        self.records.iter().filter(|r| r.status == status).count()
    }

    /// Mean of `exp(integral) f(B_tau)`; capped paths are left out.
    pub fn estimate(&self, f: impl Fn(&Point) -> f64) -> FkEstimate {
        let mut sum = 0.0;
        let mut sum2 = 0.0;
        let mut used = 0usize;
        for r in &self.records {
            let w = match r.status {
                PathStatus::Exited => r.integral.exp() * f(&r.end),
                PathStatus::Absorbed => 0.0,
                PathStatus::Capped => continue,
            };
            sum += w;
            sum2 += w * w;
            used += 1;
        }
        let capped = self.count(PathStatus::Capped);
        let n = used.max(1) as f64;
        let mean = sum / n;
        let var = if used > 1 { (sum2 - n * mean * mean).max(0.0) / (n - 1.0) } else { 0.0 };
        let warning = (capped * 100 > self.records.len()).then(|| {
            format!("{capped} of {} paths reached the step cap", self.records.len())
        });
        FkEstimate {
            mean,
            stderr: (var / n).sqrt(),
            used,
            capped,
            absorbed: self.count(PathStatus::Absorbed),
            hit_fraction: self.records.iter().filter(|r| r.hit_surface).count() as f64
                / self.records.len().max(1) as f64,
            warning,
        }
    }
}

fn step(x: &Point, dim: usize, scale: f64, rng: &mut ChaCha8Rng) -> Point {
    let mut y = *x;
    for k in y.iter_mut().take(dim) {
        let z: f64 = rng.sample(StandardNormal);
        *k += scale * z;
    }
    y
}

fn lerp(x: &Point, y: &Point, t: f64) -> Point {
    [x[0] + t * (y[0] - x[0]), x[1] + t * (y[1] - x[1]), x[2] + t * (y[2] - x[2])]
}

/// First `t` in `(0, 1]` with `x + t(y - x)` on the cube boundary.
fn cube_exit(x: &Point, y: &Point, a: f64, dim: usize) -> Option<(f64, usize)> {
    let mut best: Option<(f64, usize)> = None;
    for k in 0..dim {
        if y[k].abs() < a {
            continue;
        }
        let wall = a * y[k].signum();
        let t = ((wall - x[k]) / (y[k] - x[k])).clamp(0.0, 1.0);
        if best.is_none_or(|(b, _)| t < b) {
            best = Some((t, k));
        }
    }
    best
}

/// Crossing between two inside points: a Brownian bridge with variance `2 dt`
/// touches a face at distances `d0`, `d1` with probability `exp(-d0 d1 / dt)`.
/// The exit is put at the midpoint of the step, projected on the face.
fn bridge_exit(x: &Point, y: &Point, a: f64, dim: usize, dt: f64, rng: &mut ChaCha8Rng) -> Option<(f64, usize)> {
    for k in 0..dim {
        for side in [-1.0, 1.0] {
            let e = (a - side * x[k]) * (a - side * y[k]) / dt;
            if e < 40.0 && rng.random::<f64>() < (-e).exp() {
                return Some((0.5, k));
            }
        }
    }
    None
}

/// Records the first sign change of the surface distance over a step.
fn crossed(rec: &mut PathRecord, s0: Option<f64>, s1: Option<f64>, t0: f64, dt: f64) {
    if let (Some(s0), Some(s1), false) = (s0, s1, rec.hit_surface) {
        if s0 * s1 <= 0.0 && s0 != s1 {
            rec.hit_surface = true;
            rec.hit_time = Some(t0 + dt * s0 / (s0 - s1));
        }
    }
}

fn chunk_rng(seed: u64, chunk: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk as u64);
    rng
}

/// Runs `cfg.paths` paths from `start`. `surface` only feeds the hit records.
/// Results do not depend on the thread count.
pub fn simulate_paths(
    start: &Point,
    q: impl Fn(&Point) -> f64 + Sync,
    domain: &DomainSpec,
    dim: usize,
    surface: Option<Sphere>,
    cfg: &EnsembleConfig,
) -> Result<PathEnsemble> {
    cfg.validate()?;
    if !(domain.distance_to_boundary(start, dim) > 0.0) {
        return Err(Error::InvalidDomain(format!("start point {start:?} is not inside the cube")));
    }
    let a = domain.half_width;
    let scale = (2.0 * cfg.dt).sqrt();
    let chunks = cfg.paths.div_ceil(CHUNK);
    let records: Vec<Vec<PathRecord>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = chunk_rng(cfg.seed, c);
            let count = CHUNK.min(cfg.paths - c * CHUNK);
            let side = |p: &Point| surface.map(|s| s.signed_distance(p, dim));
            (0..count)
                .map(|_| {
                    let mut x = *start;
                    let mut qx = q(&x);
                    let mut sx = side(&x);
                    let mut rec = PathRecord {
                        status: PathStatus::Capped,
                        end: x,
                        integral: 0.0,
                        time: 0.0,
                        hit_surface: false,
                        hit_time: None,
                    };
                    for _ in 0..cfg.max_steps {
                        let y = step(&x, dim, scale, &mut rng);
                        if let Some((t, k)) = cube_exit(&x, &y, a, dim).or_else(|| bridge_exit(&x, &y, a, dim, cfg.dt, &mut rng)) {
                            let mut e = lerp(&x, &y, t);
                            e[k] = a * e[k].signum();
                            let dt = t * cfg.dt;
                            rec.integral += 0.5 * dt * (qx + q(&e));
                            let t0 = rec.time;
                            crossed(&mut rec, sx, side(&e), t0, dt);
                            rec.time += dt;
                            rec.end = e;
                            rec.status = PathStatus::Exited;
                            break;
                        }
                        let qy = q(&y);
                        let sy = side(&y);
                        rec.integral += 0.5 * cfg.dt * (qx + qy);
                        let t0 = rec.time;
                        crossed(&mut rec, sx, sy, t0, cfg.dt);
                        rec.time += cfg.dt;
                        x = y;
                        qx = qy;
                        sx = sy;
                        rec.end = x;
                        if cfg.kill_below.is_some_and(|k| rec.integral < k) {
                            rec.status = PathStatus::Absorbed;
                            break;
                        }
                    }
                    rec
                })
                .collect()
        })
        .collect();
    Ok(PathEnsemble {
        start: *start,
        seed: cfg.seed,
        dt: cfg.dt,
        records: records.into_iter().flatten().collect(),
    })
}

/// `E[exp(int q) f(B_tau)]` for a pointwise potential.
pub fn feynman_kac(
    x: &Point,
    q: impl Fn(&Point) -> f64 + Sync,
    f: impl Fn(&Point) -> f64,
    domain: &DomainSpec,
    dim: usize,
    cfg: &EnsembleConfig,
) -> Result<FkEstimate> {
    Ok(simulate_paths(x, q, domain, dim, None, cfg)?.estimate(f))
}

/// Feynman-Kac value of the regularized wall problem at `x`.
pub fn feynman_kac_estimate(
    x: &Point,
    wall: &RegularizedWall,
    f: impl Fn(&Point) -> f64,
    domain: &DomainSpec,
    cfg: &EnsembleConfig,
) -> Result<FkEstimate> {
    if wall.spec.energy != 0.0 {
        return Err(Error::InvalidPotential("path estimates need zero energy".into()));
    }
    let ens = simulate_paths(x, |p| wall.value(p), domain, wall.spec.dim, Some(wall.spec.surface), cfg)?;
    Ok(ens.estimate(f))
}

/// Exit times from the ball of radius `r` around the origin, started at the
/// center, with the crossing interpolated along the last step or detected on
/// the bridge between steps.
pub fn exit_times(dim: usize, radius: f64, paths: usize, dt: f64, seed: u64) -> Vec<f64> {
    let scale = (2.0 * dt).sqrt();
    let chunks = paths.div_ceil(CHUNK);
    let out: Vec<Vec<f64>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = chunk_rng(seed, c);
            (0..CHUNK.min(paths - c * CHUNK))
                .map(|_| {
                    let mut x = [0.0; 3];
                    let mut t = 0.0;
                    loop {
                        let y = step(&x, dim, scale, &mut rng);
                        let ry = norm(&y);
                        if ry >= radius {
                            // |x + s(y - x)| = r, smallest root in (0, 1]
                            let d = [y[0] - x[0], y[1] - x[1], y[2] - x[2]];
                            let aa = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
                            let bb = 2.0 * (x[0] * d[0] + x[1] * d[1] + x[2] * d[2]);
                            let cc = norm(&x).powi(2) - radius * radius;
                            let s = (-bb + (bb * bb - 4.0 * aa * cc).max(0.0).sqrt()) / (2.0 * aa);
                            return t + s.clamp(0.0, 1.0) * dt;
                        }
                        // bridge crossing, with the sphere taken as locally flat
                        let e = (radius - norm(&x)) * (radius - ry) / dt;
                        if e < 40.0 && rng.random::<f64>() < (-e).exp() {
                            return t + 0.5 * dt;
                        }
                        x = y;
                        t += dt;
                    }
                })
                .collect()
        })
        .collect();
    out.into_iter().flatten().collect()
}

/// Two-sample Kolmogorov-Smirnov statistic.
pub fn ks_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(|x, y| x.total_cmp(y));
    b.sort_by(|x, y| x.total_cmp(y));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}
