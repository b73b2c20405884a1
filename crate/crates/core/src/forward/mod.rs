//! Finite-difference Dirichlet problems `(Delta_h + q + E) u = 0` on the cube,
//! the Dirichlet-to-Neumann matrix in the boundary basis and sampled Cauchy
//! data subspaces.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::boundary::{trace_and_normal_with, BoundaryQuadrature, CauchyPair};
use crate::grid::{DomainSpec, GridSpec, Point, ScalarField};
use crate::krylov::{bicgstab, cg, lanczos_ritz};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForwardOptions {
    /// Relative residual `||r|| / ||b||` for the iterative solves.
    pub tol: f64,
    pub max_iter: usize,
    pub lanczos_steps: usize,
    /// Condition estimates above this are reported as a near eigenvalue.
    pub cond_threshold: f64,
    pub degree: usize,
}

impl Default for ForwardOptions {
    fn default() -> Self {
        Self {
            tol: 1e-11,
            max_iter: 20_000,
            lanczos_steps: 80,
            cond_threshold: 1e8,
            degree: 5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DirichletSolve {
    /// Solution on the closed cube, zero elsewhere on the grid.
    pub u: ScalarField,
    /// Boundary datum in basis coefficients (empty for nodal data).
    pub datum: Vec<C64>,
    pub iterations: usize,
    pub residual: f64,
    pub condition: f64,
}

/// Discrete operator `-(Delta_h + q + E)` on the interior nodes of the cube.
#[derive(Debug, Clone)]
pub struct ForwardProblem {
    pub grid: GridSpec,
    pub domain: DomainSpec,
    pub energy: f64,
    pub quad: BoundaryQuadrature,
    pub opts: ForwardOptions,
    /// Extreme Ritz values of `-(Delta_h + q + E)`.
    pub spectrum: (f64, f64),
    pub condition: f64,
    pub q_hash: String,
    side: usize,
    lo: usize,
    unknown_of: Vec<usize>,
    unknowns: Vec<usize>,
    shift: Vec<f64>,
    potential: Vec<f64>,
    definite: bool,
}

const NONE: usize = usize::MAX;

impl ForwardProblem {
    pub fn new(q: &ScalarField, domain: &DomainSpec, energy: f64, opts: ForwardOptions) -> Result<Self> {
        let grid = q.grid;
        if !q.is_real() {
            return Err(Error::InvalidPotential("potential must be real".into()));
        }
        let quad = BoundaryQuadrature::grid_aligned(&grid, domain, opts.degree)?;
        let side = domain.cells(&grid) + 1;
        let lo = domain.lo_index(&grid);
        let dim = grid.dim;
        let total = side.pow(dim as u32);
        let mut unknown_of = vec![NONE; total];
        let mut unknowns = Vec::new();
        let mut shift = Vec::new();
        for l in 0..total {
            let m = local_multi(l, side, dim);
            if (0..dim).all(|d| m[d] > 0 && m[d] + 1 < side) {
                unknown_of[l] = unknowns.len();
                unknowns.push(l);
                shift.push(q.values[grid.flat(&lift(m, lo, dim))].re + energy);
            }
        }
        let mut hasher = Sha256::new();
        for v in &q.values {
            hasher.update(v.re.to_le_bytes());
        }
        let mut fp = Self {
            grid,
            domain: *domain,
            energy,
            quad,
            opts,
            spectrum: (0.0, 0.0),
            condition: 0.0,
            q_hash: hex::encode(hasher.finalize()),
            side,
            lo,
            unknown_of,
            unknowns,
            shift,
            potential: q.values.iter().map(|v| v.re).collect(),
            definite: true,
        };
        let n = fp.unknowns.len();
        let ritz = lanczos_ritz(|x, y| fp.apply(x, y), n, opts.lanczos_steps);
        let lo_ev = ritz.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi_ev = ritz.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let small = ritz.iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min);
        fp.spectrum = (lo_ev, hi_ev);
        fp.condition = hi_ev.abs().max(lo_ev.abs()) / small;
        fp.definite = lo_ev > 0.0;
        if !(fp.condition < opts.cond_threshold) {
            return Err(Error::NearEigenvalue {
                estimate: fp.condition,
                context: format!("E = {energy}, smallest |Ritz value| {small:.3e}"),
            });
        }
        Ok(fp)
    }

    pub fn basis_len(&self) -> usize {
        self.quad.basis.len()
    }

    fn h2(&self) -> f64 {
        self.grid.spacing().powi(2)
    }

    /// `y = -(Delta_h + q + E) x` with zero boundary values.
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let dim = self.grid.dim;
        let inv_h2 = 1.0 / self.h2();
        let strides = strides(self.side, dim);
        for (k, &l) in self.unknowns.iter().enumerate() {
            let mut acc = 2.0 * dim as f64 * x[k];
            for s in &strides[..dim] {
                for nb in [l + s, l - s] {
                    let u = self.unknown_of[nb];
                    if u != NONE {
                        acc -= x[u];
                    }
                }
            }
            y[k] = acc * inv_h2 - self.shift[k] * x[k];
        }
    }

    fn diagonal(&self) -> Vec<f64> {
        let c = 2.0 * self.grid.dim as f64 / self.h2();
        self.shift
            .iter()
            .map(|s| {
                let d = c - s;
                if d.abs() > 1e-12 * c {
                    d
                } else {
                    c
                }
            })
            .collect()
    }

    /// Solves with prescribed values on the cube boundary nodes (local layout).
    fn solve_local(&self, boundary: &[C64]) -> Result<(ScalarField, usize, f64)> {
        let dim = self.grid.dim;
        let inv_h2 = 1.0 / self.h2();
        let strides = strides(self.side, dim);
        let n = self.unknowns.len();
        let mut b = vec![C64::new(0.0, 0.0); n];
        for (k, &l) in self.unknowns.iter().enumerate() {
            for s in &strides[..dim] {
                for nb in [l + s, l - s] {
                    if self.unknown_of[nb] == NONE {
                        b[k] += boundary[nb] * inv_h2;
                    }
                }
            }
        }
        let diag = self.diagonal();
        let mut iterations = 0;
        let mut parts = [vec![0.0; n], vec![0.0; n]];
        for (part, sol) in parts.iter_mut().enumerate() {
            let rhs: Vec<f64> = b.iter().map(|z| if part == 0 { z.re } else { z.im }).collect();
            if rhs.iter().all(|v| *v == 0.0) {
                continue;
            }
            let stats = if self.definite {
                cg(|x, y| self.apply(x, y), &diag, &rhs, sol, self.opts.tol, self.opts.max_iter)
            } else {
                bicgstab(|x, y| self.apply(x, y), &diag, &rhs, sol, self.opts.tol, self.opts.max_iter)
            };
            iterations += stats.iterations;
            if !stats.converged {
                return Err(Error::Solver(format!(
                    "finite-difference solve stalled at relative residual {:.3e} after {} iterations",
                    stats.residual, stats.iterations
                )));
            }
        }
        let x: Vec<C64> = (0..n).map(|k| C64::new(parts[0][k], parts[1][k])).collect();
        let mut ax = vec![0.0; n];
        let mut r2 = 0.0;
        for part in 0..2 {
            let xs: Vec<f64> = x.iter().map(|z| if part == 0 { z.re } else { z.im }).collect();
            self.apply(&xs, &mut ax);
            for k in 0..n {
                let bk = if part == 0 { b[k].re } else { b[k].im };
                r2 += (ax[k] - bk).powi(2);
            }
        }
        let bn = b.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let residual = if bn == 0.0 { 0.0 } else { r2.sqrt() / bn };
        let mut u = ScalarField::zeros(self.grid);
        for (l, v) in boundary.iter().enumerate() {
            let m = local_multi(l, self.side, dim);
            let value = match self.unknown_of[l] {
                NONE => *v,
                k => x[k],
            };
            u.values[self.grid.flat(&lift(m, self.lo, dim))] = value;
        }
        Ok((u, iterations, residual))
    }

    /// Boundary datum given in basis coefficients. Nodes shared by several
    /// faces take the average of the face values.
    pub fn solve_dirichlet(&self, coefs: &[C64]) -> Result<DirichletSolve> {
        if coefs.len() != self.basis_len() {
            return Err(Error::InvalidDomain(format!(
                "datum has {} coefficients, basis has {}",
                coefs.len(),
                self.basis_len()
            )));
        }
        let nodal = self.quad.synthesize(coefs);
        let boundary = self.scatter_boundary(&nodal);
        let (u, iterations, residual) = self.solve_local(&boundary)?;
        Ok(DirichletSolve {
            u,
            datum: coefs.to_vec(),
            iterations,
            residual,
            condition: self.condition,
        })
    }

    /// Boundary datum given pointwise.
    pub fn solve_with(&self, f: impl Fn(&Point) -> C64) -> Result<DirichletSolve> {
        let dim = self.grid.dim;
        let boundary: Vec<C64> = (0..self.side.pow(dim as u32))
            .map(|l| {
                if self.unknown_of[l] != NONE {
                    return C64::new(0.0, 0.0);
                }
                let m = lift(local_multi(l, self.side, dim), self.lo, dim);
                f(&self.grid.point(self.grid.flat(&m)))
            })
            .collect();
        let (u, iterations, residual) = self.solve_local(&boundary)?;
        Ok(DirichletSolve {
            u,
            datum: Vec::new(),
            iterations,
            residual,
            condition: self.condition,
        })
    }

    fn scatter_boundary(&self, nodal: &[C64]) -> Vec<C64> {
        let dim = self.grid.dim;
        let total = self.side.pow(dim as u32);
        let mut acc = vec![C64::new(0.0, 0.0); total];
        let mut count = vec![0u32; total];
        let index = self.quad.grid_index.as_ref().expect("grid-aligned quadrature");
        let st = strides(self.side, dim);
        for (v, m) in nodal.iter().zip(index) {
            let l: usize = (0..dim).map(|d| (m[d] - self.lo) * st[d]).sum();
            acc[l] += v;
            count[l] += 1;
        }
        for (a, c) in acc.iter_mut().zip(&count) {
            if *c > 1 {
                *a /= *c as f64;
            }
        }
        acc
    }

    /// Cauchy pair of the solution with datum `coefs`.
    pub fn cauchy_pair(&self, coefs: &[C64]) -> Result<CauchyPair> {
        let s = self.solve_dirichlet(coefs)?;
        Ok(trace_and_normal_with(&s.u, &self.quad, |k| self.potential[k] + self.energy)?.1)
    }

    /// Column `j` holds the normal-trace coefficients of the solve with the
    /// `j`-th basis function as datum.
    pub fn dtn_matrix(&self) -> Result<DMatrix<f64>> {
        let m = self.basis_len();
        let cols = self.columns(&(0..m).map(|j| unit(m, j)).collect::<Vec<_>>())?;
        Ok(DMatrix::from_fn(m, m, |i, j| cols[j].neumann[i].re))
    }

    fn columns(&self, data: &[Vec<C64>]) -> Result<Vec<CauchyPair>> {
        data.par_iter()
            .enumerate()
            .map(|(j, d)| {
                self.cauchy_pair(d).map_err(|e| match e {
                    Error::Solver(msg) => Error::Solver(format!("basis solve {j}: {msg}")),
                    other => other,
                })
            })
            .collect()
    }

    /// `C = [I; Lambda]` assembled column by column from the basis solves.
    pub fn cauchy_subspace(&self) -> Result<CauchySubspace> {
        let m = self.basis_len();
        self.cauchy_subspace_for(&(0..m).map(|j| unit(m, j)).collect::<Vec<_>>())
    }

    /// Cauchy data of the solves with the given coefficient data.
    pub fn cauchy_subspace_for(&self, data: &[Vec<C64>]) -> Result<CauchySubspace> {
        let m = self.basis_len();
        let cols = self.columns(data)?;
        let c = DMatrix::from_fn(2 * m, data.len(), |i, j| {
            if i < m {
                cols[j].dirichlet[i].re
            } else {
                cols[j].neumann[i - m].re
            }
        });
        Ok(CauchySubspace {
            c,
            q_hash: self.q_hash.clone(),
            energy: self.energy,
            grid: self.grid,
            degree: self.opts.degree,
        })
    }
}

fn unit(m: usize, j: usize) -> Vec<C64> {
    let mut v = vec![C64::new(0.0, 0.0); m];
    v[j] = C64::new(1.0, 0.0);
    v
}

fn strides(side: usize, dim: usize) -> [usize; 3] {
    if dim == 2 {
        [side, 1, 0]
    } else {
        [side * side, side, 1]
    }
}

fn local_multi(l: usize, side: usize, dim: usize) -> [usize; 3] {
    if dim == 2 {
        [l / side, l % side, 0]
    } else {
        [l / (side * side), (l / side) % side, l % side]
    }
}

fn lift(m: [usize; 3], lo: usize, dim: usize) -> [usize; 3] {
    let mut out = [0; 3];
    for d in 0..dim {
        out[d] = m[d] + lo;
    }
    out
}

/// Sampled Cauchy data `{(f, Lambda f)}` as the columns of a `2M x K` matrix.
#[derive(Debug, Clone)]
pub struct CauchySubspace {
    pub c: DMatrix<f64>,
    pub q_hash: String,
    pub energy: f64,
    pub grid: GridSpec,
    pub degree: usize,
}

impl CauchySubspace {
    pub fn basis_len(&self) -> usize {
        self.c.nrows() / 2
    }

    pub fn singular_values(&self) -> Vec<f64> {
        self.c.clone().singular_values().iter().cloned().collect()
    }

    /// Numerical rank with singular values above `rel` times the largest.
    pub fn rank(&self, rel: f64) -> usize {
        let s = self.singular_values();
        let top = s.iter().cloned().fold(0.0, f64::max);
        s.iter().filter(|v| **v > rel * top).count()
    }
}

pub fn solve_dirichlet(
    q: &ScalarField,
    domain: &DomainSpec,
    energy: f64,
    coefs: &[C64],
    opts: ForwardOptions,
) -> Result<DirichletSolve> {
    ForwardProblem::new(q, domain, energy, opts)?.solve_dirichlet(coefs)
}

pub fn dtn_matrix(q: &ScalarField, domain: &DomainSpec, energy: f64, opts: ForwardOptions) -> Result<DMatrix<f64>> {
    ForwardProblem::new(q, domain, energy, opts)?.dtn_matrix()
}

pub fn cauchy_subspace(
    q: &ScalarField,
    domain: &DomainSpec,
    energy: f64,
    opts: ForwardOptions,
) -> Result<CauchySubspace> {
    ForwardProblem::new(q, domain, energy, opts)?.cauchy_subspace()
}

#[cfg(test)]
mod tests;
