//! Fourier values of `q` over a lattice of `xi`, either from the potential
//! itself (CGO traces computed directly) or from its Cauchy data alone.

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{cgo_trace_from_data, default_sources, qhat_from_boundary, qhat_from_trace, sample_kernel_basis};
use crate::cgo::{grid_fourier, solve_corrector, spectral_nodal_pair, SolveOptions};
use crate::error::{Error, Result};
use crate::faddeev::{make_frequency_pair, zero_xi_pair, FrequencyPair};
use crate::forward::CauchySubspace;
use crate::grid::boundary::BoundaryQuadrature;
use crate::grid::{dot, DomainSpec, GridSpec, Point, ScalarField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Oracle,
    Blind,
}

/// What the reconstruction starts from.
#[derive(Debug, Clone, Copy)]
pub enum Source<'a> {
    /// The potential is known; CGO traces are computed directly.
    Potential(&'a ScalarField),
    /// Only the Cauchy data are known; `truth` is used for error reporting.
    Data {
        cd: &'a CauchySubspace,
        truth: Option<&'a ScalarField>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructOptions {
    pub mode: Mode,
    /// Lattice points per half axis: `xi = xi_step * k`, `|k|_inf <= xi_max`.
    pub xi_max: usize,
    pub xi_step: f64,
    pub betas: Vec<f64>,
    /// Number of kernel sources in blind mode.
    pub kernel_sources: usize,
    pub solve: SolveOptions,
    /// Also synthesize the band-limited field.
    pub field: bool,
}

impl Default for ReconstructOptions {
    fn default() -> Self {
        Self {
            mode: Mode::Oracle,
            xi_max: 3,
            xi_step: 1.0,
            betas: vec![8.0, 16.0, 22.0],
            kernel_sources: 200,
            solve: SolveOptions {
                power_steps: 4,
                ..Default::default()
            },
            field: false,
        }
    }
}

impl ReconstructOptions {
    /// Blind defaults: the boundary basis only carries `e^{rho.x}` traces for
    /// moderate `|rho|`, so the schedule stays low.
    pub fn blind() -> Self {
        Self {
            mode: Mode::Blind,
            betas: vec![2.0, 4.0],
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionRow {
    pub xi: Point,
    pub betas: Vec<f64>,
    pub rho_abs: Vec<f64>,
    /// Recovered value per beta.
    pub qhat: Vec<C64>,
    pub extrapolated: C64,
    pub qhat_true: Option<C64>,
    /// Relative error of the extrapolated value.
    pub rel_err: Option<f64>,
    /// Per beta: contraction estimate (oracle) or decomposition residual (blind).
    pub diag: Vec<f64>,
    /// Largest `|rho1 + rho2 + i xi|` over the schedule.
    pub pairing_defect: f64,
    pub error: Option<String>,
}

impl ReconstructionRow {
    /// Relative error of each raw value against the truth.
    pub fn raw_errors(&self) -> Vec<f64> {
        match self.qhat_true {
            Some(t) => self.qhat.iter().map(|q| (q - t).norm() / t.norm()).collect(),
            None => Vec::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ReconstructionReport {
    pub mode: Mode,
    pub xi_step: f64,
    pub rows: Vec<ReconstructionRow>,
    /// Band-limited field from the recovered values.
    pub field: Option<ScalarField>,
    /// Band-limited field from the true values on the same lattice.
    pub truth_field: Option<ScalarField>,
    /// Normalized inner product of the two fields over the cube.
    pub correlation: Option<f64>,
}

impl ReconstructionReport {
    pub fn median_rel_err(&self) -> Option<f64> {
        let mut e: Vec<f64> = self.rows.iter().filter_map(|r| r.rel_err).collect();
        if e.is_empty() {
            return None;
        }
        e.sort_by(|a, b| a.total_cmp(b));
        Some(e[e.len() / 2])
    }
}

pub fn xi_lattice(xi_max: usize, step: f64) -> Vec<Point> {
    let n = xi_max as i64;
    let mut out = Vec::new();
    for a in -n..=n {
        for b in -n..=n {
            for c in -n..=n {
                out.push([a as f64 * step, b as f64 * step, c as f64 * step]);
            }
        }
    }
    out
}

fn pair_for(xi: &Point, beta: f64) -> Result<FrequencyPair> {
    if dot(xi, xi) == 0.0 {
        Ok(zero_xi_pair(beta))
    } else {
        make_frequency_pair(xi, beta)
    }
}

/// Two-point Richardson extrapolation in `1/|rho|` from the last two rungs.
pub fn extrapolate(rho_abs: &[f64], values: &[C64]) -> C64 {
    match values.len() {
        0 => C64::new(f64::NAN, f64::NAN),
        1 => values[0],
        n => {
            let (r1, r2) = (rho_abs[n - 2], rho_abs[n - 1]);
            (values[n - 1] * r2 - values[n - 2] * r1) / (r2 - r1)
        }
    }
}

pub fn reconstruct(source: Source, quad: &BoundaryQuadrature, opts: &ReconstructOptions) -> Result<ReconstructionReport> {
    let grid = quad
        .grid
        .ok_or_else(|| Error::InvalidDomain("reconstruction needs a grid-aligned quadrature".into()))?;
    if grid.dim != 3 {
        return Err(Error::InvalidGrid("reconstruction runs in three dimensions".into()));
    }
    if opts.betas.is_empty() {
        return Err(Error::InvalidFrequency("empty beta schedule".into()));
    }
    let truth = match source {
        Source::Potential(q) => Some(q),
        Source::Data { truth, .. } => truth,
    };
    match (opts.mode, source) {
        (Mode::Oracle, Source::Data { .. }) => {
            return Err(Error::InvalidPotential("oracle mode needs the potential".into()))
        }
        (Mode::Blind, Source::Potential(_)) => {
            return Err(Error::InvalidPotential("blind mode needs Cauchy data".into()))
        }
        _ => {}
    }
    let sources = match opts.mode {
        Mode::Blind => default_sources(&grid, &quad.domain, opts.kernel_sources),
        Mode::Oracle => Vec::new(),
    };
    let lattice = xi_lattice(opts.xi_max, opts.xi_step);
    let rows: Vec<ReconstructionRow> = lattice
        .par_iter()
        .map(|xi| {
            let mut row = ReconstructionRow {
                xi: *xi,
                betas: opts.betas.clone(),
                rho_abs: Vec::new(),
                qhat: Vec::new(),
                extrapolated: C64::new(f64::NAN, f64::NAN),
                qhat_true: truth.map(|q| grid_fourier(q, xi)),
                rel_err: None,
                diag: Vec::new(),
                pairing_defect: 0.0,
                error: None,
            };
            for &beta in &opts.betas {
                let step = pair_for(xi, beta).and_then(|pair| {
                    let defect = pair.pairing_defect();
                    if defect > 1e-10 {
                        return Err(Error::InvalidFrequency(format!("pairing defect {defect:.2e}")));
                    }
                    let (q, diag) = match source {
                        Source::Potential(q) => {
                            let sol = solve_corrector(q, &pair.rho1, &opts.solve)?;
                            let nodal = spectral_nodal_pair(&sol, quad)?;
                            (qhat_from_boundary(&nodal, &pair.rho2, quad)?, sol.kappa_hat)
                        }
                        Source::Data { cd, .. } => {
                            let kb = sample_kernel_basis(&pair.rho1, &sources, quad)?;
                            let dec = cgo_trace_from_data(cd, &kb, quad)?;
                            // the same functional of the plane-wave trace vanishes
                            // exactly; subtracting it cancels projection bias
                            let q = qhat_from_trace(&dec.trace, &pair.rho2, quad)?
                                - qhat_from_trace(&dec.plane, &pair.rho2, quad)?;
                            (q, dec.residual)
                        }
                    };
                    Ok((pair, defect, q, diag))
                });
                match step {
                    Ok((pair, defect, q, diag)) => {
                        row.rho_abs.push(pair.rho1.abs());
                        row.qhat.push(q);
                        row.diag.push(diag);
                        row.pairing_defect = row.pairing_defect.max(defect);
                    }
                    Err(e) => {
                        row.error = Some(format!("beta = {beta}: {e}"));
                        break;
                    }
                }
            }
            if row.error.is_none() {
                row.extrapolated = extrapolate(&row.rho_abs, &row.qhat);
                row.rel_err = row
                    .qhat_true
                    .map(|t| (row.extrapolated - t).norm() / t.norm().max(f64::MIN_POSITIVE));
            }
            row
        })
        .collect();
    let mut report = ReconstructionReport {
        mode: opts.mode,
        xi_step: opts.xi_step,
        rows,
        field: None,
        truth_field: None,
        correlation: None,
    };
    if opts.field {
        let rec: Vec<(Point, C64)> = report
            .rows
            .iter()
            .map(|r| (r.xi, if r.error.is_none() { r.extrapolated } else { C64::new(0.0, 0.0) }))
            .collect();
        let field = band_limited_field(&rec, opts.xi_step, &grid, &quad.domain);
        if truth.is_some() {
            let tv: Vec<(Point, C64)> = report.rows.iter().map(|r| (r.xi, r.qhat_true.unwrap())).collect();
            let tf = band_limited_field(&tv, opts.xi_step, &grid, &quad.domain);
            report.correlation = Some(correlation(&field, &tf));
            report.truth_field = Some(tf);
        }
        report.field = Some(field);
    }
    Ok(report)
}

/// `sum_xi qhat(xi) e^{i xi.x} (step / 2 pi)^3` on the cube nodes, zero elsewhere.
pub fn band_limited_field(values: &[(Point, C64)], step: f64, grid: &GridSpec, domain: &DomainSpec) -> ScalarField {
    let w = (step / (2.0 * std::f64::consts::PI)).powi(3);
    let mut out = ScalarField::zeros(*grid);
    let idx = domain.node_indices(grid);
    let vals: Vec<C64> = idx
        .par_iter()
        .map(|&i| {
            let x = grid.point(i);
            values
                .iter()
                .map(|(xi, q)| q * C64::from_polar(1.0, dot(xi, &x)))
                .sum::<C64>()
                * w
        })
        .collect();
    for (i, v) in idx.into_iter().zip(vals) {
        out.values[i] = v;
    }
    out
}

/// `Re <a, b> / (|a| |b|)`.
pub fn correlation(a: &ScalarField, b: &ScalarField) -> f64 {
    let ip: C64 = a.values.iter().zip(&b.values).map(|(x, y)| x * y.conj()).sum();
    let n = |f: &ScalarField| f.values.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    let d = n(a) * n(b);
    if d == 0.0 {
        0.0
    } else {
        ip.re / d
    }
}
