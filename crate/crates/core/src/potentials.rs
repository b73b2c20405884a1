//! Potentials conormal to a submanifold: the pointwise distance model, the
//! oscillatory-integral generator on flat patches, smooth bumps, integrability
//! probes and exponent bookkeeping.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{dot, norm, DomainSpec, GridSpec, Point, ScalarField};
use crate::quadrature::gauss_legendre;

pub const DEFAULT_CAP: f64 = 1e3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Submanifold {
    Sphere { center: Point, radius: f64 },
    /// Circle of given radius in the plane through `center` with unit `normal`.
    Circle {
        center: Point,
        radius: f64,
        normal: Point,
    },
    /// `{x'' = 0}` where `x''` are the last `codim` coordinates.
    FlatPatch { codim: usize },
}

impl Submanifold {
    pub fn codim(&self, _dim: usize) -> usize {
        match self {
            Submanifold::Sphere { .. } => 1,
            Submanifold::Circle { .. } => 2,
            Submanifold::FlatPatch { codim } => *codim,
        }
    }

    pub fn distance(&self, p: &Point, dim: usize) -> f64 {
        match self {
            Submanifold::Sphere { center, radius } => {
                let mut v = [0.0; 3];
                for d in 0..dim {
                    v[d] = p[d] - center[d];
                }
                (norm(&v) - radius).abs()
            }
            Submanifold::Circle {
                center,
                radius,
                normal,
            } => {
                let v = [p[0] - center[0], p[1] - center[1], p[2] - center[2]];
                let nn = norm(normal);
                let n = [normal[0] / nn, normal[1] / nn, normal[2] / nn];
                let z = dot(&v, &n);
                let inplane = [v[0] - z * n[0], v[1] - z * n[1], v[2] - z * n[2]];
                let r = norm(&inplane);
                ((r - radius).powi(2) + z * z).sqrt()
            }
            Submanifold::FlatPatch { codim } => {
                let mut s = 0.0;
                for d in dim - codim..dim {
                    s += p[d] * p[d];
                }
                s.sqrt()
            }
        }
    }

    /// Sup-norm extent `max_{x in H} |x_d|` over the axes, `None` if unbounded.
    pub fn extent(&self, dim: usize) -> Option<f64> {
        match self {
            Submanifold::Sphere { center, radius } => Some(
                (0..dim)
                    .map(|d| center[d].abs() + radius)
                    .fold(0.0, f64::max),
            ),
            Submanifold::Circle {
                center, radius, ..
            } => Some((0..3).map(|d| center[d].abs() + radius).fold(0.0, f64::max)),
            Submanifold::FlatPatch { .. } => None,
        }
    }
}

/// Smooth compactly supported window `scale * (1 - s^2)^3`, where
/// `s^2 = sum ((x_d - c_d) / w_d)^2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub center: Point,
    pub widths: Point,
    pub scale: f64,
}

impl Window {
    pub fn eval(&self, p: &Point, dim: usize) -> f64 {
        let mut s2 = 0.0;
        for d in 0..dim {
            let t = (p[d] - self.center[d]) / self.widths[d];
            s2 += t * t;
        }
        if s2 >= 1.0 {
            0.0
        } else {
            self.scale * (1.0 - s2).powi(3)
        }
    }

    pub fn extent(&self, dim: usize) -> f64 {
        (0..dim)
            .map(|d| self.center[d].abs() + self.widths[d])
            .fold(0.0, f64::max)
    }
}

/// `q = a(x) dist(x, H)^{-nu}`, order `mu = nu - k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConormalPotentialSpec {
    pub manifold: Submanifold,
    pub nu: f64,
    pub amplitude: Window,
    #[serde(default = "default_cap")]
    pub cap: f64,
}

fn default_cap() -> f64 {
    DEFAULT_CAP
}

impl ConormalPotentialSpec {
    pub fn codim(&self, dim: usize) -> usize {
        self.manifold.codim(dim)
    }

    pub fn order(&self, dim: usize) -> f64 {
        self.nu - self.codim(dim) as f64
    }
}

/// Lower admissible singularity strength `max(2/3, 1 - k/4)`.
pub fn nu_floor(k: usize) -> f64 {
    f64::max(2.0 / 3.0, 1.0 - k as f64 / 4.0)
}

/// Smooth bump `amplitude * exp(-|x-c|^2 / width^2)` cut off smoothly at
/// `support` so the support is exact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianSpec {
    pub center: Point,
    pub width: f64,
    pub amplitude: f64,
    pub support: f64,
}

impl GaussianSpec {
    pub fn eval(&self, p: &Point, dim: usize) -> f64 {
        let mut r2 = 0.0;
        for d in 0..dim {
            r2 += (p[d] - self.center[d]).powi(2);
        }
        let s2 = r2 / (self.support * self.support);
        if s2 >= 1.0 {
            return 0.0;
        }
        self.amplitude * (-r2 / (self.width * self.width)).exp() * (1.0 - s2).powi(3)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialSpec {
    Zero,
    Conormal(ConormalPotentialSpec),
    Gaussian(GaussianSpec),
    Sum { parts: Vec<PotentialSpec> },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SampleStats {
    /// Nodes where the distance floor or the magnitude cap was engaged.
    pub capped: usize,
}

fn check_inside(extent: f64, domain: &DomainSpec, what: &str) -> Result<()> {
    if extent >= domain.half_width - domain.collar {
        return Err(Error::InvalidPotential(format!(
            "{what} reaches into the boundary collar (extent {extent:.4}, allowed < {:.4})",
            domain.half_width - domain.collar
        )));
    }
    Ok(())
}

impl PotentialSpec {
    pub fn validate(&self, dim: usize, domain: &DomainSpec) -> Result<()> {
        match self {
            PotentialSpec::Zero => Ok(()),
            PotentialSpec::Gaussian(g) => {
                if !(g.width > 0.0 && g.support > 0.0) {
                    return Err(Error::InvalidPotential("width and support must be positive".into()));
                }
                let ext = (0..dim)
                    .map(|d| g.center[d].abs() + g.support)
                    .fold(0.0, f64::max);
                check_inside(ext, domain, "bump support")
            }
            PotentialSpec::Conormal(c) => {
                let k = c.codim(dim);
                if !(c.nu > nu_floor(k) && c.nu < 1.0) {
                    return Err(Error::InvalidPotential(format!(
                        "nu = {} outside ({:.4}, 1) for codimension {k}",
                        c.nu,
                        nu_floor(k)
                    )));
                }
                if !(c.cap > 0.0) {
                    return Err(Error::InvalidPotential("cap must be positive".into()));
                }
                if let Some(e) = c.manifold.extent(dim) {
                    check_inside(e, domain, "submanifold")?;
                }
                check_inside(c.amplitude.extent(dim), domain, "amplitude window")
            }
            PotentialSpec::Sum { parts } => parts.iter().try_for_each(|p| p.validate(dim, domain)),
        }
    }

    /// Pointwise value with distance floor `d_min`; returns whether the floor
    /// or cap was engaged.
    pub fn eval(&self, p: &Point, dim: usize, d_min: f64) -> (f64, bool) {
        match self {
            PotentialSpec::Zero => (0.0, false),
            PotentialSpec::Gaussian(g) => (g.eval(p, dim), false),
            PotentialSpec::Conormal(c) => {
                let a = c.amplitude.eval(p, dim);
                if a == 0.0 {
                    return (0.0, false);
                }
                let d = c.manifold.distance(p, dim);
                let s = d.max(d_min).powf(-c.nu);
                let engaged = d < d_min || s > c.cap;
                (a * s.min(c.cap), engaged)
            }
            PotentialSpec::Sum { parts } => parts.iter().fold((0.0, false), |(v, e), s| {
                let (w, f) = s.eval(p, dim, d_min);
                (v + w, e || f)
            }),
        }
    }

    /// Value with `dist^{-nu}` replaced by its mean over the normal window
    /// `[d - h/2, d + h/2]`. Returns whether the cap was engaged.
    pub fn eval_averaged(&self, p: &Point, dim: usize, h: f64) -> (f64, bool) {
        match self {
            PotentialSpec::Conormal(c) => {
                let a = c.amplitude.eval(p, dim);
                if a == 0.0 {
                    return (0.0, false);
                }
                let d = c.manifold.distance(p, dim);
                let e = 1.0 - c.nu;
                let prim = |t: f64| t.signum() * t.abs().powf(e) / e;
                let s = (prim(d + 0.5 * h) - prim(d - 0.5 * h)) / h;
                (a * s.min(c.cap), s > c.cap)
            }
            PotentialSpec::Sum { parts } => parts.iter().fold((0.0, false), |(v, e), s| {
                let (w, f) = s.eval_averaged(p, dim, h);
                (v + w, e || f)
            }),
            other => other.eval(p, dim, 0.0),
        }
    }
}

/// How singular profiles are turned into nodal values.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    /// Point values with distance floor `h/2`.
    #[default]
    Nodal,
    /// Mean of the distance profile over a normal window of width `h`.
    NormalAverage,
}

/// Samples a potential on the grid with distance floor `h/2`.
pub fn sample_potential(
    spec: &PotentialSpec,
    grid: &GridSpec,
    domain: &DomainSpec,
) -> Result<(ScalarField, SampleStats)> {
    sample_potential_with(spec, grid, domain, Sampling::Nodal)
}

pub fn sample_potential_with(
    spec: &PotentialSpec,
    grid: &GridSpec,
    domain: &DomainSpec,
    sampling: Sampling,
) -> Result<(ScalarField, SampleStats)> {
    spec.validate(grid.dim, domain)?;
    let h = grid.spacing();
    let mut stats = SampleStats::default();
    let mut values = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        let p = grid.point(i);
        let (v, engaged) = match sampling {
            Sampling::Nodal => spec.eval(&p, grid.dim, h / 2.0),
            Sampling::NormalAverage => spec.eval_averaged(&p, grid.dim, h),
        };
        if engaged {
            stats.capped += 1;
        }
        values.push(C64::new(v, 0.0));
    }
    Ok((ScalarField { grid: *grid, values }, stats))
}

/// Transverse profile `int_{R^k} e^{i x''.theta} (1+|theta|^2)^{mu/2} dtheta`
/// at distance `t > 0` from a flat patch, by quadrature between successive
/// half-periods with repeated averaging of the partial sums.
pub fn symbol_profile(mu: f64, codim: usize, t: f64, tol: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::InvalidPotential("profile needs t > 0".into()));
    }
    let (gx, gw) = gauss_legendre(24);
    let half = std::f64::consts::PI / t;
    let integrand = |theta: f64| -> f64 {
        let a = (1.0 + theta * theta).powf(mu / 2.0);
        match codim {
            1 => 2.0 * (t * theta).cos() * a,
            _ => 2.0 * std::f64::consts::PI * bessel_j0(t * theta) * theta * a,
        }
    };
    let panel = |lo: f64, hi: f64| -> f64 {
        let (m, r) = (0.5 * (hi + lo), 0.5 * (hi - lo));
        let mut s = 0.0;
        for (x, w) in gx.iter().zip(&gw) {
            s += w * integrand(m + r * x);
        }
        s * r
    };
    // resolve the non-oscillatory scale theta ~ 1 before the oscillatory panels
    let first = if codim == 1 { 0.5 * half } else { 0.75 * half };
    let mut acc = 0.0;
    let inner_panels = (first.ceil() as usize).clamp(1, 64);
    for j in 0..inner_panels {
        let lo = first * j as f64 / inner_panels as f64;
        acc += panel(lo, lo + first / inner_panels as f64);
    }
    let mut partial = Vec::new();
    partial.push(acc);
    let mut lo = first;
    let max_panels = 4000;
    let levels = 12;
    for _ in 0..max_panels {
        let hi = lo + half;
        acc += panel(lo, hi);
        lo = hi;
        partial.push(acc);
        if partial.len() > levels + 2 {
            let (est, tail) = averaged_limit(&partial[partial.len() - levels - 2..], levels);
            if tail <= tol * est.abs().max(1e-300) {
                return Ok(est);
            }
        }
    }
    let (est, tail) = averaged_limit(&partial[partial.len() - levels - 2..], levels);
    if tail <= tol * est.abs().max(1e-300) {
        Ok(est)
    } else {
        Err(Error::QuadratureNonConvergence {
            tail,
            tol: tol * est.abs(),
        })
    }
}

/// Repeated pairwise averaging of alternating partial sums; returns the
/// limit estimate and the change over the last level.
fn averaged_limit(s: &[f64], levels: usize) -> (f64, f64) {
    let mut row = s.to_vec();
    let mut prev = *row.last().unwrap();
    let mut diff = f64::INFINITY;
    for _ in 0..levels {
        if row.len() < 2 {
            break;
        }
        row = row.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        let cur = *row.last().unwrap();
        diff = (cur - prev).abs();
        prev = cur;
    }
    (prev, diff)
}

/// Bessel function `J_0` by polynomial approximation (absolute error < 1e-7).
pub fn bessel_j0(x: f64) -> f64 {
    let ax = x.abs();
    if ax < 8.0 {
        let y = x * x;
        let num = 57568490574.0
            + y * (-13362590354.0
                + y * (651619640.7 + y * (-11214424.18 + y * (77392.33017 + y * (-184.9052456)))));
        let den = 57568490411.0
            + y * (1029532985.0 + y * (9494680.718 + y * (59272.64853 + y * (267.8532712 + y))));
        num / den
    } else {
        let z = 8.0 / ax;
        let y = z * z;
        let xx = ax - 0.785398164;
        let p = 1.0
            + y * (-0.1098628627e-2
                + y * (0.2734510407e-4 + y * (-0.2073370639e-5 + y * 0.2093887211e-6)));
        let q = -0.1562499995e-1
            + y * (0.1430488765e-3
                + y * (-0.6911147651e-5 + y * (0.7621095161e-6 - y * 0.934935152e-7)));
        (std::f64::consts::FRAC_2_PI / ax).sqrt() * (xx.cos() * p - z * xx.sin() * q)
    }
}

/// Potential generated from the symbol `chi(x) (1+|theta|^2)^{mu/2}` on the
/// flat patch `{x'' = 0}`, with transverse distance floored at `h/2`.
pub fn synth_from_symbol(
    mu: f64,
    codim: usize,
    grid: &GridSpec,
    chi: &Window,
    tol: f64,
) -> Result<ScalarField> {
    if codim != 1 && codim != 2 {
        return Err(Error::InvalidPotential("flat patch codimension must be 1 or 2".into()));
    }
    let patch = Submanifold::FlatPatch { codim };
    let d_min = grid.spacing() / 2.0;
    let mut cache: Vec<(f64, f64)> = Vec::new();
    let mut values = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        let p = grid.point(i);
        let c = chi.eval(&p, grid.dim);
        if c == 0.0 {
            values.push(C64::new(0.0, 0.0));
            continue;
        }
        let t = patch.distance(&p, grid.dim).max(d_min);
        let prof = match cache.iter().find(|(s, _)| (s - t).abs() <= 1e-12 * t) {
            Some(&(_, v)) => v,
            None => {
                let v = symbol_profile(mu, codim, t, tol)?;
                cache.push((t, v));
                v
            }
        };
        values.push(C64::new(c * prof, 0.0));
    }
    Ok(ScalarField { grid: *grid, values })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpProbe {
    pub nodes: Vec<usize>,
    pub integrals: Vec<f64>,
    pub ratios: Vec<f64>,
    pub convergent: bool,
}

/// Discrete `int |q|^p` over grids refined by factors of two starting from
/// `grid`. Convergent when the ratio of successive integrals is within 10% of
/// one with shrinking deviation, or when the increments between levels decay
/// geometrically (rate exponent above `0.05` per halving of `h`).
pub fn lp_integrability_probe(
    spec: &PotentialSpec,
    grid: &GridSpec,
    domain: &DomainSpec,
    p: f64,
    levels: usize,
) -> Result<LpProbe> {
    if levels < 3 {
        return Err(Error::InvalidGrid("integrability probe needs at least 3 levels".into()));
    }
    let mut nodes = Vec::new();
    let mut integrals = Vec::new();
    for l in 0..levels {
        let g = GridSpec::new(grid.dim, grid.half_period, grid.nodes << l)?;
        let (q, _) = sample_potential(spec, &g, domain)?;
        let s: f64 = q.values.iter().map(|v| v.norm().powf(p)).sum::<f64>() * g.cell_volume();
        nodes.push(g.nodes);
        integrals.push(s);
    }
    let ratios: Vec<f64> = integrals.windows(2).map(|w| w[1] / w[0]).collect();
    let dev: Vec<f64> = ratios.iter().map(|r| (r - 1.0).abs()).collect();
    let last = *dev.last().unwrap();
    let shrinking = dev.windows(2).all(|w| w[1] <= w[0] + 1e-12) || last < 1e-3;
    let inc: Vec<f64> = integrals.windows(2).map(|w| w[1] - w[0]).collect();
    let (d0, d1) = (inc[inc.len() - 2], inc[inc.len() - 1]);
    let geometric = d0 * d1 > 0.0 && (d0 / d1).abs().log2() > 0.05;
    Ok(LpProbe {
        nodes,
        integrals,
        ratios,
        convergent: (last < 0.1 && shrinking) || geometric,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentBundle {
    pub p: f64,
    pub r: f64,
}

impl ExponentBundle {
    pub fn dual(&self) -> f64 {
        self.p / (self.p - 1.0)
    }
}

pub fn r_zero(k: usize, nu: f64) -> f64 {
    k as f64 / (2.0 * (1.0 - nu))
}

pub fn p_zero(k: usize, nu: f64) -> f64 {
    2.0 * k as f64 / (k as f64 - nu)
}

/// Checks the Lebesgue exponent discipline against every `(k, nu)` pair.
/// Returns the list of violated inequalities (empty when admissible).
pub fn validate_exponents(pairs: &[(usize, f64)], bundle: &ExponentBundle) -> Vec<String> {
    let mut out = Vec::new();
    let ExponentBundle { p, r } = *bundle;
    if r < 2.0 {
        out.push(format!("r < 2 (r = {r})"));
    }
    for &(k, nu) in pairs {
        let mu = nu - k as f64;
        if !(nu > nu_floor(k) && nu < 1.0) {
            out.push(format!("nu outside (nu0(k), 1) for k = {k}, nu = {nu}"));
            continue;
        }
        let r0 = r_zero(k, nu);
        let p0 = p_zero(k, nu);
        if r >= r0 {
            out.push(format!("r ≥ r₀ (r = {r}, r₀ = {r0:.4}, k = {k}, nu = {nu})"));
        }
        if p <= p0 {
            out.push(format!("p ≤ p₀ (p = {p}, p₀ = {p0:.4}, k = {k}, nu = {nu})"));
        }
        if mu < 0.0 && p <= -(k as f64) / mu {
            out.push(format!("p ≤ -k/mu (p = {p}, -k/mu = {:.4})", -(k as f64) / mu));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> (GridSpec, DomainSpec) {
        let g = GridSpec::new(3, 2.0, 16).unwrap();
        let d = DomainSpec::new(&g, 1.0, 0.1).unwrap();
        (g, d)
    }

    fn sphere_spec(scale: f64, cap: f64) -> PotentialSpec {
        PotentialSpec::Conormal(ConormalPotentialSpec {
            manifold: Submanifold::Sphere {
                center: [0.0; 3],
                radius: 0.25,
            },
            nu: 0.8,
            amplitude: Window {
                center: [0.0; 3],
                widths: [0.8; 3],
                scale,
            },
            cap,
        })
    }

    #[test]
    fn closed_form_values() {
        let s = sphere_spec(1.0, DEFAULT_CAP);
        // amplitude window is not identically one, so compare against the product
        let p = [0.75, 0.0, 0.0];
        let w = (1.0 - (0.75f64 / 0.8).powi(2)).powi(3);
        let (v, e) = s.eval(&p, 3, 1e-3);
        assert!(!e);
        assert!((v - w * 0.5f64.powf(-0.8)).abs() < 1e-12);
        assert!((0.5f64.powf(-0.8) - 1.74110).abs() < 1e-5);
    }

    #[test]
    fn node_on_manifold_hits_cap() {
        let (g, d) = grid();
        // the sphere of radius 0.25 passes through grid nodes (h = 0.25)
        let (q, stats) = sample_potential(&sphere_spec(1.0, 1.5), &g, &d).unwrap();
        let idx = g.flat(&[9, 8, 8]);
        assert!((g.point(idx)[0] - 0.25).abs() < 1e-15);
        assert!((q.values[idx].re - 1.5 * (1.0 - (0.25f64 / 0.8).powi(2)).powi(3)).abs() < 1e-12);
        assert!(stats.capped > 0);
        assert!(q.is_real());
    }

    #[test]
    fn normal_average_preserves_layer_mass() {
        // the window means telescope along a column crossing the plane
        let spec = PotentialSpec::Conormal(ConormalPotentialSpec {
            manifold: Submanifold::FlatPatch { codim: 1 },
            nu: 0.8,
            amplitude: Window {
                center: [0.0; 3],
                widths: [10.0; 3],
                scale: 1.0,
            },
            cap: 1e12,
        });
        let (g, _) = grid();
        let h = g.spacing();
        let column: f64 = (0..g.nodes)
            .map(|k| {
                let p = [0.0, 0.0, g.coord(k)];
                let a = (1.0 - (p[2] / 10.0f64).powi(2)).powi(3);
                h * spec.eval_averaged(&p, 3, h).0 / a
            })
            .sum();
        let prim = |t: f64| t.signum() * t.abs().powf(0.2) / 0.2;
        let lo = g.coord(0) - h / 2.0;
        let hi = g.coord(g.nodes - 1) + h / 2.0;
        assert!((column - (prim(hi) - prim(lo))).abs() < 1e-12);
        // far from the plane the mean is close to the point value
        let (v, _) = spec.eval_averaged(&[0.0, 0.0, 1.0], 3, 1e-3);
        let a = (1.0 - 0.01f64).powi(3);
        assert!((v / a - 1.0).abs() < 1e-6);
    }

    #[test]
    fn zero_amplitude_and_linearity() {
        let (g, d) = grid();
        let (q0, _) = sample_potential(&sphere_spec(0.0, DEFAULT_CAP), &g, &d).unwrap();
        assert_eq!(q0.max_abs(), 0.0);
        let (q1, _) = sample_potential(&sphere_spec(1.0, DEFAULT_CAP), &g, &d).unwrap();
        let (q2, _) = sample_potential(&sphere_spec(2.0, DEFAULT_CAP), &g, &d).unwrap();
        for (a, b) in q1.values.iter().zip(&q2.values) {
            assert_eq!(b.re, 2.0 * a.re);
        }
    }

    #[test]
    fn collar_intersection_rejected() {
        let (g, d) = grid();
        let bad = PotentialSpec::Conormal(ConormalPotentialSpec {
            manifold: Submanifold::Sphere {
                center: [0.0; 3],
                radius: 0.95,
            },
            nu: 0.8,
            amplitude: Window {
                center: [0.0; 3],
                widths: [0.5; 3],
                scale: 1.0,
            },
            cap: DEFAULT_CAP,
        });
        assert!(sample_potential(&bad, &g, &d).is_err());
    }

    #[test]
    fn exponent_examples() {
        let b = ExponentBundle { p: 12.0, r: 2.0 };
        assert!(validate_exponents(&[(1, 0.8)], &b).is_empty());
        assert!((r_zero(1, 0.8) - 2.5).abs() < 1e-12);
        assert!((p_zero(1, 0.8) - 10.0).abs() < 1e-12);
        let v = validate_exponents(&[(1, 0.8)], &ExponentBundle { p: 12.0, r: 3.0 });
        assert_eq!(v.len(), 1);
        assert!(v[0].starts_with("r ≥ r₀"));
        assert!((r_zero(2, 0.7) - 2.0 / 0.6).abs() < 1e-12);
        assert!((p_zero(2, 0.7) - 4.0 / 1.3).abs() < 1e-12);
        assert!(validate_exponents(&[(2, 0.7)], &ExponentBundle { p: 8.0, r: 2.0 }).is_empty());
    }

    #[test]
    fn j0_reference_values() {
        assert!((bessel_j0(0.0) - 1.0).abs() < 1e-8);
        assert!((bessel_j0(2.404825557695773)).abs() < 1e-7);
        assert!((bessel_j0(10.0) - (-0.245_935_764_451_348_3)).abs() < 1e-7);
    }

    /// Independent oracle for the codimension-one profile: the power-law part
    /// `theta^mu` has a closed-form cosine transform, the remainder is
    /// absolutely integrable and summed by brute force.
    fn profile_oracle(mu: f64, t: f64) -> f64 {
        use statrs::function::gamma::gamma;
        let power = 2.0 * gamma(1.0 + mu) * (std::f64::consts::PI * (1.0 + mu) / 2.0).cos()
            * t.powf(-1.0 - mu);
        let rem = |th: f64| 2.0 * (t * th).cos() * ((1.0 + th * th).powf(mu / 2.0) - th.powf(mu));
        // [0, 1] with theta = u^5 to tame theta^mu, then uniform panels
        let (x, w) = gauss_legendre(40);
        let mut s = 0.0;
        for (xi, wi) in x.iter().zip(&w) {
            let u = 0.5 * (xi + 1.0);
            s += 0.5 * wi * rem(u.powi(5)) * 5.0 * u.powi(4);
        }
        let panels = 200_000;
        let top = 2.0e4;
        let width = (top - 1.0) / panels as f64;
        for j in 0..panels {
            let lo = 1.0 + j as f64 * width;
            let (gx, gw) = GL8.with(|g| g.clone());
            for (xi, wi) in gx.iter().zip(&gw) {
                s += 0.5 * width * wi * rem(lo + 0.5 * width * (xi + 1.0));
            }
        }
        power + s
    }

    thread_local! {
        static GL8: (Vec<f64>, Vec<f64>) = gauss_legendre(8);
    }

    #[test]
    fn symbol_profile_matches_oracle_and_exponent() {
        let mu = -0.2;
        for &t in &[0.01, 0.03, 0.1, 0.5] {
            let v = symbol_profile(mu, 1, t, 1e-10).unwrap();
            let o = profile_oracle(mu, t);
            assert!((v - o).abs() < 1e-4 * o.abs(), "t = {t}: {v} vs {o}");
        }
        let ts: [f64; 4] = [0.005, 0.01, 0.02, 0.04];
        let pts: Vec<(f64, f64)> = ts
            .iter()
            .map(|&t| (t.ln(), symbol_profile(mu, 1, t, 1e-10).unwrap().ln()))
            .collect();
        let slope = fit_slope(&pts);
        assert!((slope + 0.8).abs() < 0.05 * 0.8, "slope {slope}");
    }

    fn fit_slope(pts: &[(f64, f64)]) -> f64 {
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        sxy / sxx
    }

    #[test]
    fn heaviside_order_is_bounded_on_the_grid() {
        let g = GridSpec::new(3, 1.0, 16).unwrap();
        let chi = Window {
            center: [0.0; 3],
            widths: [0.6; 3],
            scale: 1.0,
        };
        let q = synth_from_symbol(-1.0, 1, &g, &chi, 1e-9).unwrap();
        assert!(q.values.iter().all(|v| v.re.is_finite()));
        // even symbol of order -1: logarithmic profile 2 K_0(t) ~ -2 ln t
        let t = 0.01;
        let v = symbol_profile(-1.0, 1, t, 1e-10).unwrap();
        let asym = -2.0 * (t / 2.0).ln() - 2.0 * 0.577_215_664_901_532_9;
        assert!((v - asym).abs() < 1e-2 * asym);
        let zero = Window { scale: 0.0, ..chi };
        assert_eq!(synth_from_symbol(-0.2, 1, &g, &zero, 1e-9).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn codim_two_profile_decays_like_power() {
        let mu = -1.3;
        let a = symbol_profile(mu, 2, 0.01, 1e-8).unwrap();
        let b = symbol_profile(mu, 2, 0.02, 1e-8).unwrap();
        let slope = (b / a).ln() / 2f64.ln();
        assert!((slope + 0.7).abs() < 0.05, "slope {slope}");
    }

    #[test]
    fn integrability_dichotomy() {
        let g = GridSpec::new(3, 0.5, 32).unwrap();
        let d = DomainSpec::new(&g, 0.25, 0.05).unwrap();
        let spec = PotentialSpec::Conormal(ConormalPotentialSpec {
            manifold: Submanifold::Sphere {
                center: [0.01, -0.007, 0.003],
                radius: 0.1,
            },
            nu: 0.8,
            amplitude: Window {
                center: [0.0; 3],
                widths: [0.18; 3],
                scale: 1.0,
            },
            cap: DEFAULT_CAP,
        });
        let crit = 1.0 / 0.8;
        for (p, conv) in [(1.1, true), (1.5, false), (0.8 * crit, true), (1.2 * crit, false)] {
            let r = lp_integrability_probe(&spec, &g, &d, p, 4).unwrap();
            assert_eq!(r.convergent, conv, "p = {p}: {r:?}");
        }
        let bump = PotentialSpec::Gaussian(GaussianSpec {
            center: [0.0; 3],
            width: 0.05,
            amplitude: 3.0,
            support: 0.15,
        });
        assert!(lp_integrability_probe(&bump, &g, &d, 4.0, 3).unwrap().convergent);
    }
}
