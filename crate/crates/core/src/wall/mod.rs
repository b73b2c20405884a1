//! Potential walls `q = -dist(x, H)^mu c0(x)` around a sphere `H`, their
//! monotone regularizations `q_n`, finite-difference and Feynman-Kac solutions
//! of `(Delta + q_n + E) u = 0`, and the experiments built on them.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::{ForwardOptions, ForwardProblem};
use crate::grid::{norm, DomainSpec, GridSpec, Point, ScalarField};

mod paths;

pub use paths::{
    exit_times, feynman_kac, feynman_kac_estimate, ks_distance, simulate_paths, EnsembleConfig, FkEstimate,
    PathEnsemble, PathRecord, PathStatus,
};


/// `6t^5 - 15t^4 + 10t^3` on `[0, 1]`, constant outside.
pub fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * t * (t * (6.0 * t - 15.0) + 10.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sphere {
    pub center: Point,
    pub radius: f64,
}

impl Sphere {
    /// Positive outside, negative inside.
    pub fn signed_distance(&self, x: &Point, dim: usize) -> f64 {
        let mut d = [0.0; 3];
        for k in 0..dim {
            d[k] = x[k] - self.center[k];
        }
        norm(&d) - self.radius
    }

    pub fn contains(&self, x: &Point, dim: usize) -> bool {
        self.signed_distance(x, dim) < 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WallSpec {
    pub dim: usize,
    pub surface: Sphere,
    /// Wall exponent, below -2 for a proper wall.
    pub mu: f64,
    /// Amplitude near `H`.
    pub c0: f64,
    /// Width of the neighbourhood `V` of `H` carrying the amplitude; `c0(x)`
    /// is constant up to half of it and tapers to zero at its edge. `None`
    /// keeps `c0` constant everywhere.
    pub collar: Option<f64>,
    /// Clamp constant, `0 < c1 < c0`.
    pub c1: f64,
    pub energy: f64,
}

impl WallSpec {
    /// Disk or ball wall with constant amplitude and zero energy.
    pub fn centered(dim: usize, radius: f64, mu: f64, c0: f64, c1: f64) -> Self {
        Self {
            dim,
            surface: Sphere {
                center: [0.0; 3],
                radius,
            },
            mu,
            c0,
            collar: None,
            c1,
            energy: 0.0,
        }
    }

    pub fn with_collar(mut self, width: f64) -> Self {
        self.collar = Some(width);
        self
    }

    pub fn distance(&self, x: &Point) -> f64 {
        self.surface.signed_distance(x, self.dim).abs()
    }

    pub fn amplitude(&self, x: &Point) -> f64 {
        match self.collar {
            None => self.c0,
            Some(v) => self.c0 * (1.0 - smoothstep((2.0 * self.distance(x) - v) / v)),
        }
    }

    /// Raw wall value, `-inf` on `H`.
    pub fn q(&self, x: &Point) -> f64 {
        let c = self.amplitude(x);
        if c == 0.0 {
            return 0.0;
        }
        let d = self.distance(x);
        if d == 0.0 {
            f64::NEG_INFINITY
        } else {
            -c * d.powf(self.mu)
        }
    }

    /// Smallest distance from `H` to the faces of the cube.
    pub fn gap(&self, domain: &DomainSpec) -> f64 {
        (0..self.dim)
            .map(|k| domain.half_width - self.surface.center[k].abs())
            .fold(f64::INFINITY, f64::min)
            - self.surface.radius
    }

    /// Everything except the sign condition on `mu`.
    pub fn validate_geometry(&self, grid: &GridSpec, domain: &DomainSpec) -> Result<()> {
        if self.dim != grid.dim {
            return Err(Error::InvalidPotential(format!(
                "wall dimension {} on a {}-dimensional grid",
                self.dim, grid.dim
            )));
        }
        let h = grid.spacing();
        if !(self.surface.radius > 2.0 * h) {
            return Err(Error::InvalidPotential(format!(
                "wall radius {} does not resolve on spacing {h}",
                self.surface.radius
            )));
        }
        if !(self.gap(domain) > 2.0 * h) {
            return Err(Error::InvalidPotential(format!(
                "wall comes within {:.3e} of the boundary",
                self.gap(domain)
            )));
        }
        if !(self.c0 > 0.0 && self.c1 > 0.0 && self.c1 < self.c0) {
            return Err(Error::InvalidPotential(format!(
                "need 0 < c1 < c0, got c1 = {}, c0 = {}",
                self.c1, self.c0
            )));
        }
        if !(self.mu < 0.0) {
            return Err(Error::InvalidPotential(format!("wall exponent {} must be negative", self.mu)));
        }
        if let Some(v) = self.collar {
            if !(v > 2.0 * h) {
                return Err(Error::InvalidPotential(format!("collar {v} narrower than two cells")));
            }
        }
        Ok(())
    }

    pub fn validate(&self, grid: &GridSpec, domain: &DomainSpec) -> Result<()> {
        if !(self.mu < -2.0) {
            return Err(Error::InvalidPotential(format!(
                "wall exponent {} must be below -2",
                self.mu
            )));
        }
        self.validate_geometry(grid, domain)
    }
}

/// Raw wall on the grid; nodes lying on `H` hold `-f64::MAX`.
pub fn build_wall(spec: &WallSpec, grid: &GridSpec, domain: &DomainSpec) -> Result<ScalarField> {
    spec.validate(grid, domain)?;
    Ok(ScalarField::from_real_fn(*grid, |x| spec.q(x).max(-f64::MAX)))
}

/// `q_n`: equal to `q` beyond `1/n` from `H`, to `max(q, -c1 n^{-mu})` within
/// `1/n - width`, blended by a quintic step in between.
#[derive(Debug, Clone)]
pub struct RegularizedWall {
    pub spec: WallSpec,
    pub n: usize,
    pub width: f64,
    pub field: ScalarField,
}

impl RegularizedWall {
    pub fn clamp(&self) -> f64 {
        -self.spec.c1 * (self.n as f64).powf(-self.spec.mu)
    }

    pub fn value(&self, x: &Point) -> f64 {
        regularized_value(&self.spec, self.n, self.width, x)
    }
}

fn regularized_value(spec: &WallSpec, n: usize, width: f64, x: &Point) -> f64 {
    let q = spec.q(x);
    let d = spec.distance(x);
    let r = 1.0 / n as f64;
    if d > r {
        return q;
    }
    let clamped = q.max(-spec.c1 * (n as f64).powf(-spec.mu));
    if d <= r - width {
        return clamped;
    }
    let s = smoothstep((d - (r - width)) / width);
    (1.0 - s) * clamped + s * q
}

/// Transition width `min(h, 1/(n(n+1)))`; the upper bound keeps `q_{n+1} <= q_n`
/// exact.
pub fn clamp_width(n: usize, h: f64) -> f64 {
    let n = n as f64;
    h.min(1.0 / (n * (n + 1.0)))
}

pub fn regularize(spec: &WallSpec, n: usize, grid: &GridSpec, domain: &DomainSpec) -> Result<RegularizedWall> {
    if n == 0 {
        return Err(Error::InvalidPotential("regularization index starts at 1".into()));
    }
    spec.validate_geometry(grid, domain)?;
    let width = clamp_width(n, grid.spacing());
    let field = ScalarField::from_real_fn(*grid, |x| regularized_value(spec, n, width, x));
    Ok(RegularizedWall {
        spec: *spec,
        n,
        width,
        field,
    })
}

/// `sum_edges |dv|^2 h^{d-2} - sum_nodes (q + E)|v|^2 h^d` over the closed cube,
/// with trapezoid weights on the faces. Nodes where `v` vanishes are skipped
/// so that infinite `q` on `H` is harmless.
pub fn discrete_functional(v: &ScalarField, q: impl Fn(usize) -> f64, energy: f64, domain: &DomainSpec) -> f64 {
    let grid = v.grid;
    let dim = grid.dim;
    let h = grid.spacing();
    let lo = domain.lo_index(&grid);
    let hi = domain.hi_index(&grid);
    let face = |m: usize| m == lo || m == hi;
    let mut grad = 0.0;
    let mut pot = 0.0;
    for i in domain.node_indices(&grid) {
        let m = grid.multi(i);
        let vi = v.values[i];
        for d in 0..dim {
            if m[d] == hi {
                continue;
            }
            let mut mj = m;
            mj[d] += 1;
            let w: f64 = (0..dim).filter(|&e| e != d && face(m[e])).map(|_| 0.5).product();
            grad += w * (v.values[grid.flat(&mj)] - vi).norm_sqr();
        }
        if vi.norm_sqr() > 0.0 {
            let w: f64 = (0..dim).filter(|&e| face(m[e])).map(|_| 0.5).product();
            pot += w * (q(i) + energy) * vi.norm_sqr();
        }
    }
    grad * h.powi(dim as i32 - 2) - pot * h.powi(dim as i32)
}

/// `f` times a cutoff vanishing on the closed inside of `H` and within `delta`
/// outside it, with `delta` a third of the gap to the boundary.
pub fn comparator(spec: &WallSpec, f: impl Fn(&Point) -> f64, grid: &GridSpec, domain: &DomainSpec) -> ScalarField {
    let delta = spec.gap(domain) / 3.0;
    let mut out = ScalarField::zeros(*grid);
    for i in domain.node_indices(grid) {
        let x = grid.point(i);
        let s = spec.surface.signed_distance(&x, spec.dim);
        out.values[i] = C64::new(f(&x) * smoothstep((s - delta) / delta), 0.0);
    }
    out
}

#[derive(Debug, Clone)]
pub struct WallSolve {
    pub n: usize,
    pub u: ScalarField,
    /// `G_n(u_n)`.
    pub functional: f64,
    /// `G(F)` for the comparator, evaluated with the raw wall.
    pub comparator: f64,
    pub iterations: usize,
}

/// Solves `(Delta_h + q_n + E) u = 0` with `u = f` on the boundary and checks
/// `G_n(u_n) <= G(F)`.
pub fn solve_regularized(
    wall: &RegularizedWall,
    domain: &DomainSpec,
    f: impl Fn(&Point) -> f64,
    opts: ForwardOptions,
) -> Result<WallSolve> {
    let grid = wall.field.grid;
    let energy = wall.spec.energy;
    let fp = ForwardProblem::new(&wall.field, domain, energy, opts)?;
    let sol = fp.solve_with(|x| C64::new(f(x), 0.0))?;
    let functional = discrete_functional(&sol.u, |i| wall.field.values[i].re, energy, domain);
    let cf = comparator(&wall.spec, &f, &grid, domain);
    let comparator = discrete_functional(&cf, |i| wall.spec.q(&grid.point(i)), energy, domain);
    if energy == 0.0 && functional > comparator + 1e-8 * comparator.abs().max(1.0) {
        return Err(Error::Solver(format!(
            "discrete energy {functional:.6e} exceeds the comparator bound {comparator:.6e}"
        )));
    }
    Ok(WallSolve {
        n: wall.n,
        u: sol.u,
        functional,
        comparator,
        iterations: sol.iterations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayRow {
    pub n: usize,
    /// `max |u_n|` over nodes inside `H`.
    pub sup_inner: f64,
    /// `max |u_n|` over the remaining cube nodes.
    pub sup_outer: f64,
    pub functional: f64,
    pub comparator: f64,
    /// `exp(-n^p)` with `p = 2(2 + mu)/mu`.
    pub bound_shape: f64,
}

/// Least squares `ln sup_inner = intercept - rate n^p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub exponent: f64,
    pub rate: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayStudy {
    pub rows: Vec<DecayRow>,
    pub fit: Option<DecayFit>,
}

impl DecayStudy {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("n,sup_norm,sup_exterior,G_value,G_comparator,bound_shape\n");
        for r in &self.rows {
            s += &format!(
                "{},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e}\n",
                r.n, r.sup_inner, r.sup_outer, r.functional, r.comparator, r.bound_shape
            );
        }
        s
    }
}

pub fn decay_exponent(mu: f64) -> f64 {
    2.0 * (2.0 + mu) / mu
}

pub fn fit_decay(rows: &[DecayRow], mu: f64) -> Option<DecayFit> {
    let p = decay_exponent(mu);
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.sup_inner > 0.0)
        .map(|r| ((r.n as f64).powf(p), r.sup_inner.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    Some(DecayFit {
        exponent: p,
        rate: -slope,
        intercept: my - slope * mx,
        r_squared: if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) },
    })
}

pub fn interior_decay_study(
    spec: &WallSpec,
    schedule: &[usize],
    f: impl Fn(&Point) -> f64 + Copy,
    grid: &GridSpec,
    domain: &DomainSpec,
    opts: ForwardOptions,
) -> Result<DecayStudy> {
    spec.validate(grid, domain)?;
    let nodes = domain.node_indices(grid);
    let mut rows = Vec::with_capacity(schedule.len());
    for &n in schedule {
        let wall = regularize(spec, n, grid, domain)?;
        let sol = solve_regularized(&wall, domain, f, opts)?;
        let (mut inner, mut outer) = (0.0f64, 0.0f64);
        for &i in &nodes {
            let v = sol.u.values[i].norm();
            if spec.surface.contains(&grid.point(i), spec.dim) {
                inner = inner.max(v);
            } else {
                outer = outer.max(v);
            }
        }
        rows.push(DecayRow {
            n,
            sup_inner: inner,
            sup_outer: outer,
            functional: sol.functional,
            comparator: sol.comparator,
            bound_shape: (-(n as f64).powf(decay_exponent(spec.mu))).exp(),
        });
    }
    let fit = fit_decay(&rows, spec.mu);
    Ok(DecayStudy { rows, fit })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvarianceRow {
    pub n: usize,
    /// `||Lambda_A - Lambda_B|| / ||Lambda_A||` in the spectral norm.
    pub divergence: Option<f64>,
    pub note: Option<String>,
}

fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    m.singular_values().iter().cloned().fold(0.0, f64::max)
}

/// DtN maps of `q_n + q_a` and `q_n + q_b` for each `n`. Exponents in
/// `[-2, 0)` are accepted here so that a mild wall can serve as contrast.
/// Near-eigenvalue failures are recorded in the row and the schedule goes on.
pub fn cauchy_invariance_test(
    spec: &WallSpec,
    qa: &ScalarField,
    qb: &ScalarField,
    schedule: &[usize],
    domain: &DomainSpec,
    opts: ForwardOptions,
) -> Result<Vec<InvarianceRow>> {
    let grid = qa.grid;
    if qb.grid != grid {
        return Err(Error::InvalidPotential("inner potentials live on different grids".into()));
    }
    spec.validate_geometry(&grid, domain)?;
    let h = grid.spacing();
    for (name, q) in [("A", qa), ("B", qb)] {
        if !q.is_real() {
            return Err(Error::InvalidPotential(format!("inner potential {name} must be real")));
        }
        let outside = q
            .values
            .iter()
            .enumerate()
            .any(|(i, v)| v.re != 0.0 && spec.surface.signed_distance(&grid.point(i), spec.dim) > -h);
        if outside {
            return Err(Error::InvalidPotential(format!(
                "inner potential {name} reaches within one cell of the wall"
            )));
        }
    }
    let same = qa.values == qb.values;
    let mut rows = Vec::with_capacity(schedule.len());
    for &n in schedule {
        let wall = regularize(spec, n, &grid, domain)?;
        let total = |q: &ScalarField| {
            let mut t = wall.field.clone();
            for (a, b) in t.values.iter_mut().zip(&q.values) {
                *a += b;
            }
            t
        };
        let la = ForwardProblem::new(&total(qa), domain, spec.energy, opts).and_then(|fp| fp.dtn_matrix());
        let lb = if same {
            None
        } else {
            Some(ForwardProblem::new(&total(qb), domain, spec.energy, opts).and_then(|fp| fp.dtn_matrix()))
        };
        let row = match (la, lb) {
            (Ok(_), None) => InvarianceRow {
                n,
                divergence: Some(0.0),
                note: None,
            },
            (Ok(a), Some(Ok(b))) => InvarianceRow {
                n,
                divergence: Some(spectral_norm(&(&a - &b)) / spectral_norm(&a)),
                note: None,
            },
            (Err(e @ Error::NearEigenvalue { .. }), _) | (_, Some(Err(e @ Error::NearEigenvalue { .. }))) => {
                InvarianceRow {
                    n,
                    divergence: None,
                    note: Some(format!("skipped: {e}")),
                }
            }
            (Err(e), _) | (_, Some(Err(e))) => return Err(e),
        };
        rows.push(row);
    }
    Ok(rows)
}
