//! Exponentially growing solutions `v = e^{rho.x}(1 + psi)` of
//! `(Delta + q) v = 0`, computed through the corrector equation
//! `(I + G_rho M_q) psi = -G_rho q` on the support of `q`.

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::faddeev::{loglog_slope, ComplexFrequency, FaddeevOperator, FrequencyPair};
use crate::grid::boundary::{trace_and_normal, BoundaryQuadrature, CauchyPair, NodalPair};
use crate::grid::{dot, DomainSpec, GridSpec, Point, ScalarField};
use crate::krylov::gmres;

const ZERO: C64 = C64::new(0.0, 0.0);

/// Largest `|Re rho . x|` allowed when materializing `e^{rho.x}`.
pub const EXPONENT_GUARD: f64 = 700.0;

#[derive(Debug, Clone)]
pub struct CgoSolution {
    pub rho: ComplexFrequency,
    pub twist: Point,
    /// Corrector on the whole grid (twisted periodic continuation).
    pub psi: ScalarField,
    pub iterations: usize,
    /// `||(I + G M_q) psi + G q|| / ||G q||` on the support of `q`.
    pub residual: f64,
    /// Measured `||chi G_rho M_q||` on L2 of the support.
    pub kappa_hat: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub restart: usize,
    pub power_steps: usize,
    /// Reject `|rho|` above the grid resolution bound. Only needed when
    /// `e^{rho.x}` is materialized; the corrector itself stays resolved.
    pub check_resolution: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 200,
            restart: 40,
            power_steps: 12,
            check_resolution: true,
        }
    }
}

/// The map `u -> chi_S G_rho (q u)` restricted to the support `S` of `q`.
struct SupportOperator<'a> {
    op: FaddeevOperator,
    q: &'a ScalarField,
    support: Vec<usize>,
}

impl SupportOperator<'_> {
    fn lift(&self, u: &[C64], weight: bool) -> Vec<C64> {
        let mut full = vec![ZERO; self.op.grid.len()];
        for (k, &i) in self.support.iter().enumerate() {
            full[i] = if weight { u[k] * self.q.values[i].re } else { u[k] };
        }
        full
    }

    fn apply(&self, u: &[C64], out: &mut [C64]) {
        let mut full = self.lift(u, true);
        self.op.apply_in_place(&mut full);
        for (o, &i) in out.iter_mut().zip(&self.support) {
            *o = full[i];
        }
    }

    fn apply_adjoint(&self, u: &[C64], out: &mut [C64]) {
        let mut full = self.lift(u, false);
        self.op.apply_adjoint_in_place(&mut full);
        for (o, &i) in out.iter_mut().zip(&self.support) {
            *o = full[i] * self.q.values[i].re;
        }
    }

    /// Power iteration on `T^* T`.
    fn norm_estimate(&self, steps: usize) -> f64 {
        let n = self.support.len();
        let mut x: Vec<C64> = (0..n)
            .map(|k| C64::new(1.0 + 0.3 * ((k as f64 * 0.754_877_666).fract() - 0.5), 0.0))
            .collect();
        let mut y = vec![ZERO; n];
        let mut est = 0.0;
        for _ in 0..steps.max(1) {
            let nx = l2(&x);
            if nx == 0.0 {
                return 0.0;
            }
            x.iter_mut().for_each(|v| *v /= nx);
            self.apply(&x, &mut y);
            est = l2(&y);
            self.apply_adjoint(&y, &mut x);
        }
        est
    }
}

fn l2(v: &[C64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

fn support_of(q: &ScalarField) -> Result<Vec<usize>> {
    if !q.is_real() {
        return Err(Error::InvalidPotential("potential must be real".into()));
    }
    Ok((0..q.grid.len()).filter(|&i| q.values[i].re != 0.0).collect())
}

fn check_resolution(grid: &GridSpec, rho: &ComplexFrequency) -> Result<()> {
    let bound = grid.rho_resolution_bound();
    if rho.abs() > bound * (1.0 + 1e-12) {
        return Err(Error::InvalidFrequency(format!(
            "|rho| = {:.3} exceeds the grid resolution bound {bound:.3}",
            rho.abs()
        )));
    }
    Ok(())
}

/// Solves `(I + G_rho M_q) psi = -G_rho q` by GMRES on the support of `q`,
/// then extends `psi = -G_rho(q (1 + psi))` to the whole grid.
pub fn solve_corrector(q: &ScalarField, rho: &ComplexFrequency, opts: &SolveOptions) -> Result<CgoSolution> {
    let grid = q.grid;
    if opts.check_resolution {
        check_resolution(&grid, rho)?;
    }
    let support = support_of(q)?;
    let op = FaddeevOperator::new(&grid, rho);
    let twist = op.twist;
    if support.is_empty() {
        return Ok(CgoSolution {
            rho: *rho,
            twist,
            psi: ScalarField::zeros(grid),
            iterations: 0,
            residual: 0.0,
            kappa_hat: 0.0,
        });
    }
    let sop = SupportOperator { op, q, support };
    let kappa_hat = sop.norm_estimate(opts.power_steps);
    let n = sop.support.len();
    let ones = vec![C64::new(1.0, 0.0); n];
    let mut b = vec![ZERO; n];
    sop.apply(&ones, &mut b);
    b.iter_mut().for_each(|v| *v = -*v);
    let mut x = vec![ZERO; n];
    let stats = gmres(
        |u, out| {
            sop.apply(u, out);
            for (o, v) in out.iter_mut().zip(u) {
                *o += v;
            }
        },
        &b,
        &mut x,
        opts.tol,
        opts.restart,
        opts.max_iter,
    );
    let residual = support_residual(&sop, &x, &b);
    if !stats.converged || residual > opts.tol * 1.5 {
        return Err(Error::CorrectorNonConvergence {
            iterations: stats.iterations,
            residual,
            kappa: kappa_hat,
        });
    }
    let psi = extend(&sop, &x);
    Ok(CgoSolution {
        rho: *rho,
        twist,
        psi,
        iterations: stats.iterations,
        residual,
        kappa_hat,
    })
}

fn support_residual(sop: &SupportOperator, x: &[C64], b: &[C64]) -> f64 {
    let mut ax = vec![ZERO; x.len()];
    sop.apply(x, &mut ax);
    let r: Vec<C64> = ax.iter().zip(x).zip(b).map(|((a, x), b)| a + x - b).collect();
    let bn = l2(b);
    if bn == 0.0 {
        0.0
    } else {
        l2(&r) / bn
    }
}

fn extend(sop: &SupportOperator, x: &[C64]) -> ScalarField {
    let mut full = sop.lift(&x.iter().map(|v| v + 1.0).collect::<Vec<_>>(), true);
    sop.op.apply_in_place(&mut full);
    full.iter_mut().for_each(|v| *v = -*v);
    ScalarField {
        grid: sop.op.grid,
        values: full,
    }
}

/// Damped fixed-point iteration `u <- (1-w) u - w G_rho(q (1 + u))`, kept as
/// a cross-check of the Krylov path. Converges when `kappa_hat < 1`.
pub fn solve_corrector_fixed_point(
    q: &ScalarField,
    rho: &ComplexFrequency,
    damping: f64,
    opts: &SolveOptions,
) -> Result<CgoSolution> {
    let grid = q.grid;
    if opts.check_resolution {
        check_resolution(&grid, rho)?;
    }
    let support = support_of(q)?;
    let op = FaddeevOperator::new(&grid, rho);
    let twist = op.twist;
    let sop = SupportOperator { op, q, support };
    let n = sop.support.len();
    let kappa_hat = if n == 0 { 0.0 } else { sop.norm_estimate(opts.power_steps) };
    let ones = vec![C64::new(1.0, 0.0); n];
    let mut b = vec![ZERO; n];
    sop.apply(&ones, &mut b);
    b.iter_mut().for_each(|v| *v = -*v);
    let mut x = vec![ZERO; n];
    let mut gx = vec![ZERO; n];
    let mut residual = if n == 0 { 0.0 } else { 1.0 };
    let mut it = 0;
    while residual > opts.tol {
        if it >= opts.max_iter {
            return Err(Error::CorrectorNonConvergence {
                iterations: it,
                residual,
                kappa: kappa_hat,
            });
        }
        sop.apply(&x, &mut gx);
        for k in 0..n {
            x[k] = (1.0 - damping) * x[k] + damping * (b[k] - gx[k]);
        }
        it += 1;
        residual = support_residual(&sop, &x, &b);
    }
    let psi = if n == 0 { ScalarField::zeros(grid) } else { extend(&sop, &x) };
    Ok(CgoSolution {
        rho: *rho,
        twist,
        psi,
        iterations: it,
        residual,
        kappa_hat,
    })
}

/// `v = e^{rho.x}(1 + psi)` on the closed cube, with its boundary traces.
#[derive(Debug, Clone)]
pub struct CgoField {
    /// Values on the cube nodes, zero elsewhere.
    pub values: ScalarField,
    pub nodal: NodalPair,
    pub trace: CauchyPair,
}

pub fn cgo_field(sol: &CgoSolution, quad: &BoundaryQuadrature) -> Result<CgoField> {
    let grid = sol.psi.grid;
    let domain = quad.domain;
    let idx = domain.node_indices(&grid);
    let mut values = ScalarField::zeros(grid);
    for &i in &idx {
        let x = grid.point(i);
        let growth = dot(&sol.rho.re, &x);
        if growth.abs() > EXPONENT_GUARD {
            return Err(Error::Overflow(format!(
                "|Re rho.x| = {growth:.1} at a cube node exceeds {EXPONENT_GUARD}"
            )));
        }
        values.values[i] = sol.rho.exp_at(&x) * (1.0 + sol.psi.values[i]);
    }
    let (nodal, trace) = trace_and_normal(&values, quad)?;
    Ok(CgoField { values, nodal, trace })
}

/// Boundary values of `v` with exact normal derivatives
/// `e^{rho.x}((rho.n)(1 + psi) + d_n psi)`, using the spectral gradient of the
/// twisted corrector instead of a grid difference.
pub fn spectral_nodal_pair(sol: &CgoSolution, quad: &BoundaryQuadrature) -> Result<NodalPair> {
    let index = quad.grid_index.as_ref().ok_or_else(|| {
        Error::InvalidDomain("spectral traces need a grid-aligned boundary quadrature".into())
    })?;
    let grid = sol.psi.grid;
    if quad.grid != Some(grid) {
        return Err(Error::InvalidGrid("corrector and quadrature live on different grids".into()));
    }
    let grad = crate::grid::spectral_gradient(&sol.psi, &sol.twist);
    let mut values = Vec::with_capacity(quad.len());
    let mut normal_derivs = Vec::with_capacity(quad.len());
    for (node, m) in quad.nodes.iter().zip(index) {
        let i = grid.flat(m);
        let growth = dot(&sol.rho.re, &node.pos);
        if growth.abs() > EXPONENT_GUARD {
            return Err(Error::Overflow(format!(
                "|Re rho.x| = {growth:.1} at a boundary node exceeds {EXPONENT_GUARD}"
            )));
        }
        let e = sol.rho.exp_at(&node.pos);
        let psi = sol.psi.values[i];
        let mut rn = C64::new(0.0, 0.0);
        let mut dpsi = C64::new(0.0, 0.0);
        for d in 0..grid.dim {
            rn += C64::new(sol.rho.re[d], sol.rho.im[d]) * node.normal[d];
            dpsi += grad[d].values[i] * node.normal[d];
        }
        values.push(e * (1.0 + psi));
        normal_derivs.push(e * (rn * (1.0 + psi) + dpsi));
    }
    Ok(NodalPair { values, normal_derivs })
}

/// Direct grid Fourier integral `sum q(x) e^{-i xi.x} h^n` over the grid.
pub fn grid_fourier(q: &ScalarField, xi: &Point) -> C64 {
    let g = q.grid;
    (0..g.len())
        .filter(|&i| q.values[i] != ZERO)
        .map(|i| q.values[i] * C64::from_polar(1.0, -dot(xi, &g.point(i))))
        .sum::<C64>()
        * g.cell_volume()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub rho_abs: f64,
    pub psi_l2: f64,
    pub psi_lp: f64,
    pub kappa_hat: f64,
    pub iters: usize,
    /// `|int e^{-i xi.x} q psi|`, the single-potential remainder.
    pub remainder_abs: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayStudy {
    pub rows: Vec<StudyRow>,
    /// Log-log slope of `||psi||_2` against `|rho|`, i.e. `-sigma_hat`.
    pub slope: f64,
}

impl DecayStudy {
    pub fn sigma_hat(&self) -> f64 {
        -self.slope
    }

    pub fn monotone_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].psi_l2 < w[0].psi_l2)
    }
}

/// Corrector norms over a frequency schedule; each pair contributes `rho1`.
pub fn corrector_decay_study(
    q: &ScalarField,
    domain: &DomainSpec,
    pairs: &[FrequencyPair],
    p: f64,
    opts: &SolveOptions,
) -> Result<DecayStudy> {
    if pairs.len() < 3 {
        return Err(Error::InvalidFrequency("decay study needs at least three frequencies".into()));
    }
    let rows: Vec<StudyRow> = pairs
        .par_iter()
        .map(|pair| {
            let rho_abs = pair.rho1.abs();
            match solve_corrector(q, &pair.rho1, opts) {
                Ok(sol) => {
                    let qpsi = product(q, &sol.psi);
                    StudyRow {
                        rho_abs,
                        psi_l2: crate::grid::domain_l2_norm(&sol.psi, domain),
                        psi_lp: crate::grid::domain_lp_norm(&sol.psi, domain, p),
                        kappa_hat: sol.kappa_hat,
                        iters: sol.iterations,
                        remainder_abs: grid_fourier(&qpsi, &pair.xi).norm(),
                        error: None,
                    }
                }
                Err(e) => StudyRow {
                    rho_abs,
                    psi_l2: f64::NAN,
                    psi_lp: f64::NAN,
                    kappa_hat: f64::NAN,
                    iters: 0,
                    remainder_abs: f64::NAN,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    let ok: Vec<&StudyRow> = rows.iter().filter(|r| r.error.is_none()).collect();
    let slope = loglog_slope(
        &ok.iter().map(|r| r.rho_abs).collect::<Vec<_>>(),
        &ok.iter().map(|r| r.psi_l2).collect::<Vec<_>>(),
    );
    Ok(DecayStudy { rows, slope })
}

fn product(a: &ScalarField, b: &ScalarField) -> ScalarField {
    ScalarField {
        grid: a.grid,
        values: a.values.iter().zip(&b.values).map(|(x, y)| x * y).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityRow {
    pub rho_abs: f64,
    /// `R = int e^{-i xi.x}(q1 - q2)(psi1 + psi2 + psi1 psi2)`.
    pub remainder: [f64; 2],
    pub remainder_abs: f64,
    /// `(q1 - q2)^(xi) + R`, the pairing `int (q1 - q2) v1 w2`.
    pub recovered: [f64; 2],
    /// `|(q1 - q2)^(xi) + R|`.
    pub discrepancy: f64,
    pub kappa_hat: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentityCheck {
    pub xi: Point,
    /// Direct grid Fourier value of `q1 - q2` at `xi`.
    pub qhat_direct: [f64; 2],
    pub rows: Vec<IdentityRow>,
}

/// Evaluates the integral identity remainder over a frequency schedule:
/// `psi1` solves with `(q1, rho1)` and `psi2` with `(q2, rho2)`.
pub fn identity_check(
    q1: &ScalarField,
    q2: &ScalarField,
    pairs: &[FrequencyPair],
    opts: &SolveOptions,
) -> Result<IdentityCheck> {
    let Some(first) = pairs.first() else {
        return Err(Error::InvalidFrequency("empty frequency schedule".into()));
    };
    let xi = first.xi;
    if pairs.iter().any(|p| p.xi != xi) {
        return Err(Error::InvalidFrequency("schedule mixes different xi".into()));
    }
    let diff = ScalarField {
        grid: q1.grid,
        values: q1.values.iter().zip(&q2.values).map(|(a, b)| a - b).collect(),
    };
    let direct = grid_fourier(&diff, &xi);
    let rows: Result<Vec<IdentityRow>> = pairs
        .par_iter()
        .map(|pair| {
            let s1 = solve_corrector(q1, &pair.rho1, opts)?;
            let s2 = solve_corrector(q2, &pair.rho2, opts)?;
            let mix = ScalarField {
                grid: diff.grid,
                values: (0..diff.grid.len())
                    .map(|i| {
                        let (a, b) = (s1.psi.values[i], s2.psi.values[i]);
                        diff.values[i] * (a + b + a * b)
                    })
                    .collect(),
            };
            let r = grid_fourier(&mix, &xi);
            let rec = direct + r;
            Ok(IdentityRow {
                rho_abs: pair.rho1.abs(),
                remainder: [r.re, r.im],
                remainder_abs: r.norm(),
                recovered: [rec.re, rec.im],
                discrepancy: rec.norm(),
                kappa_hat: [s1.kappa_hat, s2.kappa_hat],
            })
        })
        .collect();
    Ok(IdentityCheck {
        xi,
        qhat_direct: [direct.re, direct.im],
        rows: rows?,
    })
}

/// Discrete proxies of the solution-space norms: `||v||_p` and `||q v||_{p'}`
/// on the cube, and a `W^{2,r}` proxy of `psi` on the shell of width `3h`
/// inside the boundary (second differences).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MembershipReport {
    pub v_lp: f64,
    pub qv_lp_dual: f64,
    pub psi_w2r_shell: f64,
}

pub fn membership_diagnostics(
    field: &CgoField,
    sol: &CgoSolution,
    q: &ScalarField,
    domain: &DomainSpec,
    p: f64,
    r: f64,
) -> MembershipReport {
    let grid = q.grid;
    let h = grid.spacing();
    let dv = grid.cell_volume();
    let idx = domain.node_indices(&grid);
    let pd = p / (p - 1.0);
    let mut sv = 0.0;
    let mut sqv = 0.0;
    for &i in &idx {
        sv += field.values.values[i].norm().powf(p);
        sqv += (q.values[i] * field.values.values[i]).norm().powf(pd);
    }
    let lo = domain.lo_index(&grid) as i64;
    let hi = domain.hi_index(&grid) as i64;
    let n = grid.nodes as i64;
    let at = |m: [i64; 3]| {
        let w = |k: i64| k.rem_euclid(n) as usize;
        sol.psi.values[grid.flat(&[w(m[0]), w(m[1]), w(m[2])])]
    };
    let mut sw = 0.0;
    for &i in &domain.interior_indices(&grid) {
        let mu = grid.multi(i);
        let m = [mu[0] as i64, mu[1] as i64, mu[2] as i64];
        let depth = (0..grid.dim).map(|d| (m[d] - lo).min(hi - m[d])).min().unwrap_or(0);
        if depth > 3 {
            continue;
        }
        let c = at(m);
        let mut acc = c.norm().powf(r);
        for d in 0..grid.dim {
            let mut mp = m;
            let mut mm = m;
            mp[d] += 1;
            mm[d] -= 1;
            let (up, um) = (at(mp), at(mm));
            acc += ((up - um) / (2.0 * h)).norm().powf(r);
            acc += ((up - 2.0 * c + um) / (h * h)).norm().powf(r);
        }
        sw += acc;
    }
    MembershipReport {
        v_lp: (sv * dv).powf(1.0 / p),
        qv_lp_dual: (sqv * dv).powf(1.0 / pd),
        psi_w2r_shell: (sw * dv).powf(1.0 / r),
    }
}

#[cfg(test)]
mod tests;
