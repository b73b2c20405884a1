//! Complex frequencies with `rho . rho = 0`, the conjugated Laplacian
//! `Delta + 2 rho . grad` and its FFT inverse on the (optionally Bloch
//! twisted) torus.
//!
//! On the plain periodic lattice `zeta = 0` is always characteristic, so the
//! plain inverse loses surjectivity. [`FaddeevOperator`] works on twisted
//! fields whose modes sit on `zeta + kappa`, with `kappa` chosen to keep the
//! lattice away from the characteristic set; for sources supported inside the
//! box this is an exact inverse of `Delta_rho` on the box.

mod kernel;

pub use kernel::{faddeev_kernel_table, KernelTable};

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{apply_multiplier, dot, norm, DomainSpec, GridSpec, Point, ScalarField};

pub const DEFAULT_EPS_CHAR: f64 = 1e-6;

/// `rho = re + i im` in C^3.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexFrequency {
    pub re: Point,
    pub im: Point,
}

impl ComplexFrequency {
    pub fn new(re: Point, im: Point) -> Result<Self> {
        let r = Self { re, im };
        let a2 = r.abs().powi(2);
        if r.self_dot().norm() >= 1e-10 * a2.max(f64::MIN_POSITIVE) {
            return Err(Error::InvalidFrequency(format!(
                "rho . rho = {} is not zero",
                r.self_dot()
            )));
        }
        Ok(r)
    }

    pub fn abs(&self) -> f64 {
        (dot(&self.re, &self.re) + dot(&self.im, &self.im)).sqrt()
    }

    pub fn self_dot(&self) -> C64 {
        C64::new(
            dot(&self.re, &self.re) - dot(&self.im, &self.im),
            2.0 * dot(&self.re, &self.im),
        )
    }

    /// `rho . x` for real `x`.
    pub fn dot_real(&self, x: &Point) -> C64 {
        C64::new(dot(&self.re, x), dot(&self.im, x))
    }

    pub fn exp_at(&self, x: &Point) -> C64 {
        self.dot_real(x).exp()
    }

    pub fn conj(&self) -> Self {
        Self {
            re: self.re,
            im: [-self.im[0], -self.im[1], -self.im[2]],
        }
    }

    pub fn neg(&self) -> Self {
        Self {
            re: [-self.re[0], -self.re[1], -self.re[2]],
            im: [-self.im[0], -self.im[1], -self.im[2]],
        }
    }

    pub fn component(&self, d: usize) -> C64 {
        C64::new(self.re[d], self.im[d])
    }
}

/// Two null frequencies with `rho1 + rho2 = -i xi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyPair {
    pub rho1: ComplexFrequency,
    pub rho2: ComplexFrequency,
    pub xi: Point,
    pub beta: f64,
}

impl FrequencyPair {
    /// `|rho1 + rho2 + i xi|`.
    pub fn pairing_defect(&self) -> f64 {
        let mut s = 0.0;
        for d in 0..3 {
            let z = self.rho1.component(d) + self.rho2.component(d) + C64::new(0.0, self.xi[d]);
            s += z.norm_sqr();
        }
        s.sqrt()
    }
}

fn cross(a: &Point, b: &Point) -> Point {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Orthonormal frame with `e1 = xi / |xi|`; `e2` is the normalized projection
/// of the x-axis onto `xi^perp` (the y-axis when `xi` is parallel to x).
pub fn frame(xi: &Point) -> Result<[Point; 3]> {
    let n = norm(xi);
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::InvalidFrequency("xi must be nonzero".into()));
    }
    let e1 = [xi[0] / n, xi[1] / n, xi[2] / n];
    let project = |v: Point| {
        let c = dot(&v, &e1);
        [v[0] - c * e1[0], v[1] - c * e1[1], v[2] - c * e1[2]]
    };
    let mut e2 = project([1.0, 0.0, 0.0]);
    if norm(&e2) < 1e-8 {
        e2 = project([0.0, 1.0, 0.0]);
    }
    let m = norm(&e2);
    let e2 = [e2[0] / m, e2[1] / m, e2[2] / m];
    let e3 = cross(&e1, &e2);
    Ok([e1, e2, e3])
}

/// `rho1 = alpha e2 + i(-xi/2 + beta e3)`, `rho2 = -alpha e2 + i(-xi/2 - beta e3)`
/// with `alpha = sqrt(|xi|^2/4 + beta^2)`.
pub fn make_frequency_pair(xi: &Point, beta: f64) -> Result<FrequencyPair> {
    if !(beta >= 0.0) {
        return Err(Error::InvalidFrequency("beta must be nonnegative".into()));
    }
    let [_, e2, e3] = frame(xi)?;
    Ok(pair_in_frame(xi, beta, &e2, &e3))
}

fn pair_in_frame(xi: &Point, beta: f64, e2: &Point, e3: &Point) -> FrequencyPair {
    let alpha = (dot(xi, xi) / 4.0 + beta * beta).sqrt();
    let mut r1 = ComplexFrequency {
        re: [0.0; 3],
        im: [0.0; 3],
    };
    let mut r2 = r1;
    for d in 0..3 {
        r1.re[d] = alpha * e2[d];
        r1.im[d] = -xi[d] / 2.0 + beta * e3[d];
        r2.re[d] = -alpha * e2[d];
        r2.im[d] = -xi[d] / 2.0 - beta * e3[d];
    }
    FrequencyPair {
        rho1: r1,
        rho2: r2,
        xi: *xi,
        beta,
    }
}

/// Pair for `xi = 0`, built in the frame `e1 = x`, `e2 = y`, `e3 = z`.
pub fn zero_xi_pair(beta: f64) -> FrequencyPair {
    pair_in_frame(&[0.0; 3], beta, &[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0])
}

/// Frequency pair whose members have magnitude `rho_abs`.
pub fn pair_with_magnitude(xi: &Point, rho_abs: f64) -> Result<FrequencyPair> {
    let b2 = rho_abs * rho_abs / 2.0 - dot(xi, xi) / 4.0;
    if b2 < 0.0 {
        return Err(Error::InvalidFrequency(format!(
            "|rho| = {rho_abs} is below the minimum |xi|/sqrt(2) for this xi"
        )));
    }
    if norm(xi) == 0.0 {
        return Ok(zero_xi_pair(b2.sqrt()));
    }
    make_frequency_pair(xi, b2.sqrt())
}

/// Symbol `-|zeta|^2 + 2 i rho . zeta` of `Delta + 2 rho . grad`.
pub fn symbol(rho: &ComplexFrequency, zeta: &Point) -> C64 {
    let rz = rho.dot_real(zeta);
    C64::new(-dot(zeta, zeta), 0.0) + C64::new(0.0, 2.0) * rz
}

/// Symbol of the conjugated 7-point Laplacian `e^{-rho.x} Delta_h e^{rho.x}`:
/// `sum_d 4 sinh^2((rho_d + i zeta_d) h / 2) / h^2`.
pub fn fd_symbol(rho: &ComplexFrequency, zeta: &Point, h: f64) -> C64 {
    let mut acc = C64::new(0.0, 0.0);
    for d in 0..3 {
        let s = (C64::new(rho.re[d], rho.im[d] + zeta[d]) * (0.5 * h)).sinh();
        acc += s * s;
    }
    acc * (4.0 / (h * h))
}

pub fn char_threshold(rho: &ComplexFrequency, eps_char: f64) -> f64 {
    eps_char * rho.abs().max(1.0)
}

/// `F^{-1}[F f / p_rho]` on the plain periodic lattice. Modes with
/// `|p_rho| < eps_char * max(1, |rho|)` are zeroed; the returned count is the
/// number of zeroed modes on which `f` actually had content.
pub fn apply_g_rho(f: &ScalarField, rho: &ComplexFrequency, eps_char: f64) -> (ScalarField, usize) {
    let thr = char_threshold(rho, eps_char);
    let grid = &f.grid;
    let mut count = 0;
    let mut out = f.clone();
    crate::fft::forward(&mut out.values, grid.dim, grid.nodes);
    let peak = out.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
    for (i, v) in out.values.iter_mut().enumerate() {
        let p = symbol(rho, &grid.wavevector(i));
        if p.norm() < thr {
            if v.norm() > 1e-12 * peak {
                count += 1;
            }
            *v = C64::new(0.0, 0.0);
        } else {
            *v /= p;
        }
    }
    crate::fft::inverse(&mut out.values, grid.dim, grid.nodes);
    (out, count)
}

/// Applies `Delta + 2 rho . grad` spectrally (with optional twist).
pub fn apply_conjugated_laplacian(f: &ScalarField, rho: &ComplexFrequency, twist: &Point) -> ScalarField {
    let mut out = f.clone();
    apply_multiplier(&mut out.values, &f.grid, twist, |z| symbol(rho, z));
    out
}

fn min_symbol(grid: &GridSpec, twist: &Point, sym: &impl Fn(&Point) -> C64) -> f64 {
    let mut m = f64::INFINITY;
    for i in 0..grid.len() {
        let mut z = grid.wavevector(i);
        for d in 0..grid.dim {
            z[d] += twist[d];
        }
        m = m.min(sym(&z).norm());
    }
    m
}

/// Bloch shift on the grid `(pi / 4L) {0,1,2,3}^n` that maximizes the
/// smallest symbol magnitude over the shifted lattice.
pub fn choose_twist(grid: &GridSpec, rho: &ComplexFrequency) -> (Point, f64) {
    choose_twist_by(grid, |z| symbol(rho, z))
}

/// [`choose_twist`] for an arbitrary symbol.
pub fn choose_twist_by(grid: &GridSpec, sym: impl Fn(&Point) -> C64) -> (Point, f64) {
    let step = std::f64::consts::PI / (4.0 * grid.half_period);
    let mut best = ([0.0; 3], -1.0);
    let n3 = if grid.dim == 3 { 4 } else { 1 };
    for a in 0..4 {
        for b in 0..4 {
            for c in 0..n3 {
                let t = [a as f64 * step, b as f64 * step, c as f64 * step];
                let m = min_symbol(grid, &t, &sym);
                if m > best.1 + 1e-12 {
                    best = (t, m);
                }
            }
        }
    }
    best
}

/// FFT realization of the Faddeev Green operator on twisted fields.
#[derive(Debug, Clone)]
pub struct FaddeevOperator {
    pub grid: GridSpec,
    pub rho: ComplexFrequency,
    pub twist: Point,
    /// Smallest `|p_rho(zeta + kappa)|` over the lattice.
    pub min_symbol: f64,
    inv_symbol: Vec<C64>,
    phase: Vec<C64>,
}

impl FaddeevOperator {
    pub fn new(grid: &GridSpec, rho: &ComplexFrequency) -> Self {
        let (twist, _) = choose_twist(grid, rho);
        Self::with_twist(grid, rho, &twist)
    }

    pub fn with_twist(grid: &GridSpec, rho: &ComplexFrequency, twist: &Point) -> Self {
        Self::with_symbol(grid, rho, twist, |z| symbol(rho, z))
    }

    /// Inverse of the conjugated 7-point Laplacian instead of the spectral one.
    pub fn finite_difference(grid: &GridSpec, rho: &ComplexFrequency) -> Self {
        let h = grid.spacing();
        let (twist, _) = choose_twist_by(grid, |z| fd_symbol(rho, z, h));
        Self::with_symbol(grid, rho, &twist, |z| fd_symbol(rho, z, h))
    }

    pub fn with_symbol(grid: &GridSpec, rho: &ComplexFrequency, twist: &Point, sym: impl Fn(&Point) -> C64) -> Self {
        let mut inv = Vec::with_capacity(grid.len());
        let mut m = f64::INFINITY;
        for i in 0..grid.len() {
            let mut z = grid.wavevector(i);
            for d in 0..grid.dim {
                z[d] += twist[d];
            }
            let p = sym(&z);
            m = m.min(p.norm());
            inv.push(if p.norm() == 0.0 { C64::new(0.0, 0.0) } else { p.inv() });
        }
        let phase = (0..grid.len())
            .map(|i| C64::from_polar(1.0, dot(twist, &grid.point(i))))
            .collect();
        Self {
            grid: *grid,
            rho: *rho,
            twist: *twist,
            min_symbol: m,
            inv_symbol: inv,
            phase,
        }
    }

    pub fn apply_in_place(&self, values: &mut [C64]) {
        for (v, p) in values.iter_mut().zip(&self.phase) {
            *v *= p.conj();
        }
        crate::fft::forward(values, self.grid.dim, self.grid.nodes);
        for (v, s) in values.iter_mut().zip(&self.inv_symbol) {
            *v *= s;
        }
        crate::fft::inverse(values, self.grid.dim, self.grid.nodes);
        for (v, p) in values.iter_mut().zip(&self.phase) {
            *v *= p;
        }
    }

    pub fn apply(&self, f: &ScalarField) -> ScalarField {
        let mut out = f.clone();
        self.apply_in_place(&mut out.values);
        out
    }

    /// L2 adjoint of [`Self::apply_in_place`] (conjugate symbol).
    pub fn apply_adjoint_in_place(&self, values: &mut [C64]) {
        for (v, p) in values.iter_mut().zip(&self.phase) {
            *v *= p.conj();
        }
        crate::fft::forward(values, self.grid.dim, self.grid.nodes);
        for (v, s) in values.iter_mut().zip(&self.inv_symbol) {
            *v *= s.conj();
        }
        crate::fft::inverse(values, self.grid.dim, self.grid.nodes);
        for (v, p) in values.iter_mut().zip(&self.phase) {
            *v *= p;
        }
    }

    /// Spectral `Delta_rho` on twisted fields (the operator being inverted).
    pub fn forward(&self, f: &ScalarField) -> ScalarField {
        apply_conjugated_laplacian(f, &self.rho, &self.twist)
    }

    /// Spectral gradient of a twisted field.
    pub fn gradient(&self, f: &ScalarField) -> Vec<ScalarField> {
        crate::grid::spectral_gradient(f, &self.twist)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormRow {
    pub rho_abs: f64,
    pub norm_est: f64,
    pub char_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormProbe {
    pub rows: Vec<NormRow>,
    pub slope: f64,
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0)
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return f64::NAN;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Random smooth test field: a sum of Gaussian blobs with random centers in
/// the inner half of the cube and random complex weights, cut to the cube.
pub fn random_test_field(grid: &GridSpec, domain: &DomainSpec, rng: &mut ChaCha8Rng) -> ScalarField {
    let a = domain.half_width;
    let blobs: Vec<(Point, f64, C64)> = (0..6)
        .map(|_| {
            let mut c = [0.0; 3];
            for cd in c.iter_mut().take(grid.dim) {
                *cd = rng.random_range(-0.5 * a..0.5 * a);
            }
            let w = rng.random_range(0.08 * a..0.25 * a);
            let z = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            (c, w, z)
        })
        .collect();
    ScalarField::from_fn(*grid, |p| {
        if !domain.contains(p, grid.dim) {
            return C64::new(0.0, 0.0);
        }
        blobs
            .iter()
            .map(|(c, w, z)| {
                let mut r2 = 0.0;
                for d in 0..grid.dim {
                    r2 += (p[d] - c[d]).powi(2);
                }
                z * (-r2 / (w * w)).exp()
            })
            .sum()
    })
}

/// Estimates `||G_rho||` as an operator from `L2(cube)` to `L2(cube)`: each
/// random smooth field is refined by `power_steps` power iterations of
/// `(chi G chi)^* (chi G chi)` and the largest ratio `||chi G f|| / ||f||` over
/// the trials is reported.
pub fn operator_norm_probe(
    grid: &GridSpec,
    domain: &DomainSpec,
    xi: &Point,
    rho_abs: &[f64],
    trials: usize,
    power_steps: usize,
    seed: u64,
) -> Result<NormProbe> {
    if rho_abs.len() < 2 {
        return Err(Error::InvalidFrequency("norm probe needs at least two frequencies".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fields: Vec<ScalarField> = (0..trials)
        .map(|_| random_test_field(grid, domain, &mut rng))
        .collect();
    let inside: Vec<bool> = (0..grid.len())
        .map(|i| domain.contains(&grid.point(i), grid.dim))
        .collect();
    let restrict = |v: &mut [C64]| {
        for (x, &m) in v.iter_mut().zip(&inside) {
            if !m {
                *x = C64::new(0.0, 0.0);
            }
        }
    };
    let l2 = |v: &[C64]| v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    let mut rows = Vec::new();
    for &r in rho_abs {
        let pair = pair_with_magnitude(xi, r)?;
        let op = FaddeevOperator::new(grid, &pair.rho1);
        let thr = char_threshold(&pair.rho1, DEFAULT_EPS_CHAR);
        let count = if op.min_symbol < thr { 1 } else { 0 };
        let mut best: f64 = 0.0;
        for f in &fields {
            let mut x = f.values.clone();
            let mut ratio = 0.0;
            for step in 0..=power_steps {
                let n0 = l2(&x);
                let mut y = x.clone();
                op.apply_in_place(&mut y);
                restrict(&mut y);
                ratio = l2(&y) / n0;
                if step == power_steps {
                    break;
                }
                op.apply_adjoint_in_place(&mut y);
                restrict(&mut y);
                let ny = l2(&y);
                x = y.iter().map(|v| v / ny).collect();
            }
            best = best.max(ratio);
        }
        rows.push(NormRow {
            rho_abs: r,
            norm_est: best,
            char_count: count,
        });
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.rho_abs).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.norm_est).collect();
    Ok(NormProbe {
        slope: loglog_slope(&xs, &ys),
        rows,
    })
}
