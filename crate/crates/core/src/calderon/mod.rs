//! Recovery of CGO traces and Fourier values of `q` from boundary data.
//!
//! Everything here lives on the same discrete footing as the forward solver:
//! the 7-point Laplacian and the energy flux of [`nodal_trace`]. Exterior
//! Cauchy data are sampled by monopoles of the conjugated 7-point operator,
//! `G(x - y) = e^{rho.(x-y)} g(x - y)` with `Delta_h G = delta_y / h^3`, so the
//! span they produce is exactly what the discrete layer potentials annihilate.

mod layer;
mod reconstruct;

pub use layer::{assemble_a0, jump_relation_check, JumpReport, LayerOperators, LayerPotential};
pub use reconstruct::{
    band_limited_field, correlation, extrapolate, reconstruct, xi_lattice, Mode, ReconstructOptions, ReconstructionReport,
    ReconstructionRow, Source,
};

use nalgebra::{DMatrix, Dyn, SVD};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cgo::EXPONENT_GUARD;
use crate::error::{Error, Result};
use crate::faddeev::{ComplexFrequency, KernelTable};
use crate::forward::CauchySubspace;
use crate::grid::boundary::{nodal_trace, BoundaryQuadrature, CauchyPair, NodalPair};
use crate::grid::{dot, DomainSpec, GridSpec, Point};

/// Smallest allowed source depth below the boundary, in grid steps.
pub const MIN_SOURCE_DEPTH: usize = 4;

/// Relative singular value below which kernel columns are dropped.
pub const TRIM: f64 = 1e-8;

/// Exterior Cauchy data sampled by interior point sources.
///
/// `columns` is the trimmed span of the projected monopole traces. It
/// carries more than `M` independent directions, since projection leaves a
/// small component outside the kernel, so decompositions use the `M`
/// dimensional graph of `exterior_dtn` instead.
#[derive(Debug, Clone)]
pub struct KernelBasis {
    pub rho: ComplexFrequency,
    /// Grid multi-indices of the sources.
    pub sources: Vec<[usize; 3]>,
    /// One stacked `[dirichlet; neumann]` column per source.
    pub raw: DMatrix<C64>,
    /// `U_r S_r` of the raw columns after trimming.
    pub columns: DMatrix<C64>,
    pub singular_values: Vec<f64>,
    /// Exterior Dirichlet-to-Neumann map in the basis: each basis function is
    /// matched on the boundary nodes by a source combination, whose flux is
    /// projected. Its graph is the kernel span used for decompositions.
    pub exterior_dtn: DMatrix<C64>,
    /// Relative weighted misfit of those boundary matches.
    pub fit_residual: f64,
}

impl KernelBasis {
    pub fn basis_len(&self) -> usize {
        self.raw.nrows() / 2
    }

    pub fn rank(&self) -> usize {
        self.columns.ncols()
    }

    /// `[I; exterior_dtn]`.
    pub fn graph(&self) -> DMatrix<C64> {
        graph_of(&self.exterior_dtn)
    }
}

fn graph_of(dtn: &DMatrix<C64>) -> DMatrix<C64> {
    let m = dtn.nrows();
    let mut g = DMatrix::<C64>::zeros(2 * m, m);
    g.view_mut((0, 0), (m, m)).fill_with_identity();
    g.view_mut((m, 0), (m, m)).copy_from(dtn);
    g
}

/// Complex SVD with both factors, checked on probe vectors.
///
/// The library routine occasionally returns wrong factors for matrices with
/// exactly repeated singular values (orthogonal projectors, for one). When the
/// probe fails the factorization is redone on `A W` for a seeded random
/// unitary `W`, which breaks the degeneracy pattern, and `V` is rotated back.
pub fn checked_svd(a: &DMatrix<C64>) -> SVD<C64, Dyn, Dyn> {
    let first = a.clone().svd(true, true);
    if svd_matches(a, &first) {
        return first;
    }
    let n = a.ncols();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for _ in 0..4 {
        let g = DMatrix::<C64>::from_fn(n, n, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let w = g.qr().q();
        let mut out = (a * &w).svd(true, true);
        let vt = out.v_t.take().expect("right vectors");
        out.v_t = Some(vt * w.adjoint());
        if svd_matches(a, &out) {
            return out;
        }
    }
    panic!("complex SVD failed to reproduce a {}x{} matrix", a.nrows(), n);
}

fn svd_matches(a: &DMatrix<C64>, svd: &SVD<C64, Dyn, Dyn>) -> bool {
    let (Some(u), Some(vt)) = (&svd.u, &svd.v_t) else {
        return false;
    };
    let scale = a.norm();
    if scale == 0.0 {
        return true;
    }
    let n = a.ncols();
    let k = svd.singular_values.len();
    let mut good = (u.adjoint() * u - DMatrix::<C64>::identity(k, k)).norm() < 1e-8 * k as f64;
    for p in 0..2 {
        let x = nalgebra::DVector::<C64>::from_fn(n, |i, _| C64::new(((i * 7 + p * 3) as f64).sin(), ((i * 5 + p) as f64).cos()));
        let sv = (vt * &x).component_mul(&svd.singular_values.map(|s| C64::new(s, 0.0)));
        let err = (a * &x - u * sv).norm();
        good &= err <= 1e-10 * scale * x.norm();
    }
    good
}

pub(crate) fn complex(a: &DMatrix<f64>) -> DMatrix<C64> {
    a.map(|v| C64::new(v, 0.0))
}

/// Depth of a node below the cube boundary, in grid steps (0 on the boundary).
fn depth(grid: &GridSpec, domain: &DomainSpec, m: &[usize; 3]) -> Option<usize> {
    let lo = domain.lo_index(grid);
    let hi = domain.hi_index(grid);
    let mut d = usize::MAX;
    for k in 0..grid.dim {
        if m[k] < lo || m[k] > hi {
            return None;
        }
        d = d.min(m[k] - lo).min(hi - m[k]);
    }
    Some(d)
}

/// Source layout: lattices on nested cube shells, densest next to the
/// boundary, topped up with seeded random interior nodes.
pub fn default_sources(grid: &GridSpec, domain: &DomainSpec, count: usize) -> Vec<Point> {
    let lo = domain.lo_index(grid);
    let half = domain.cells(grid) / 2;
    let dim = grid.dim;
    let mut shells = Vec::new();
    let mut d = MIN_SOURCE_DEPTH;
    while d < half {
        shells.push(d);
        d += 3;
    }
    let total_w: f64 = (0..shells.len()).map(|j| 0.5f64.powi(j as i32)).sum();
    let mut picked: Vec<[usize; 3]> = Vec::new();
    for (j, &d) in shells.iter().enumerate() {
        let target = count as f64 * 0.5f64.powi(j as i32) / total_w;
        let side = 2 * (half - d);
        let on_shell = |p: usize| {
            let p = p as i64;
            (p.pow(dim as u32) - (p - 2).max(0).pow(dim as u32)) as f64
        };
        let mut per = 2;
        while per < side + 1 && on_shell(per + 1) <= target {
            per += 1;
        }
        if on_shell(per) > target && per == 2 && j > 0 {
            continue;
        }
        let coord = |k: usize| lo + d + ((k * side) as f64 / (per - 1) as f64).round() as usize;
        let cnt = if dim == 3 { per } else { 1 };
        for a in 0..per {
            for b in 0..per {
                for c in 0..cnt {
                    let idx = [a, b, c];
                    let extreme = (0..dim).any(|k| idx[k] == 0 || idx[k] == per - 1);
                    if !extreme {
                        continue;
                    }
                    let mut m = [0usize; 3];
                    for k in 0..dim {
                        m[k] = coord(idx[k]);
                    }
                    if !picked.contains(&m) {
                        picked.push(m);
                    }
                }
            }
        }
    }
    picked.truncate(count);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut guard = 0;
    while picked.len() < count && guard < 100 * count {
        guard += 1;
        let mut m = [0usize; 3];
        for k in 0..dim {
            m[k] = rng.random_range(lo + MIN_SOURCE_DEPTH..=lo + 2 * half - MIN_SOURCE_DEPTH);
        }
        if !picked.contains(&m) {
            picked.push(m);
        }
    }
    picked
        .iter()
        .map(|m| {
            let mut p = [0.0; 3];
            for k in 0..dim {
                p[k] = grid.coord(m[k]);
            }
            p
        })
        .collect()
}

fn snap(grid: &GridSpec, p: &Point) -> [usize; 3] {
    let h = grid.spacing();
    let mut m = [0usize; 3];
    for d in 0..grid.dim {
        let k = ((p[d] + grid.half_period) / h).round();
        m[d] = k.clamp(0.0, (grid.nodes - 1) as f64) as usize;
    }
    m
}

fn check_growth(rho: &ComplexFrequency, domain: &DomainSpec, dim: usize) -> Result<()> {
    let reach: f64 = (0..dim).map(|d| rho.re[d].abs()).sum::<f64>() * 2.0 * domain.half_width;
    if reach > EXPONENT_GUARD {
        return Err(Error::Overflow(format!(
            "|Re rho| across the cube reaches {reach:.1}, above {EXPONENT_GUARD}"
        )));
    }
    Ok(())
}

/// Traces of the monopoles `G(. - y_i)` for sources snapped to grid nodes.
pub fn sample_kernel_basis(rho: &ComplexFrequency, sources: &[Point], quad: &BoundaryQuadrature) -> Result<KernelBasis> {
    let grid = quad
        .grid
        .ok_or_else(|| Error::InvalidDomain("kernel sampling needs a grid-aligned quadrature".into()))?;
    let domain = quad.domain;
    if sources.is_empty() {
        return Err(Error::DirectSum("no kernel sources".into()));
    }
    check_growth(rho, &domain, grid.dim)?;
    let snapped: Vec<[usize; 3]> = sources.iter().map(|p| snap(&grid, p)).collect();
    for (p, m) in sources.iter().zip(&snapped) {
        match depth(&grid, &domain, m) {
            Some(d) if d >= MIN_SOURCE_DEPTH => {}
            _ => {
                return Err(Error::SourceTooClose(format!(
                    "source {p:?} is less than {MIN_SOURCE_DEPTH} grid steps inside the cube"
                )))
            }
        }
    }
    let table = KernelTable::finite_difference(&grid, rho);
    let m = quad.basis.len();
    let traces: Vec<NodalPair> = {
        use rayon::prelude::*;
        snapped
            .par_iter()
            .map(|y| {
                let yp = grid_point(&grid, y);
                nodal_trace(
                    quad,
                    |i| {
                        let x = grid.multi(i);
                        let mut off = [0i64; 3];
                        let mut z = [0.0; 3];
                        for d in 0..grid.dim {
                            off[d] = x[d] as i64 - y[d] as i64;
                            z[d] = grid.coord(x[d]) - yp[d];
                        }
                        table.at(off) * rho.exp_at(&z)
                    },
                    |_| 0.0,
                )
                .expect("grid-aligned quadrature")
            })
            .collect()
    };
    let nodes = quad.len();
    let count = traces.len();
    let mut raw = DMatrix::<C64>::zeros(2 * m, count);
    for (c, t) in traces.iter().enumerate() {
        raw.set_column(c, &nalgebra::DVector::from_vec(t.project(quad).stacked()));
    }
    let svd = checked_svd(&raw);
    let u = svd.u.as_ref().expect("left vectors");
    let smax = svd.singular_values.max();
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&k| svd.singular_values[k] > TRIM * smax)
        .collect();
    let mut columns = DMatrix::<C64>::zeros(2 * m, keep.len());
    for (j, &k) in keep.iter().enumerate() {
        columns.set_column(j, &(u.column(k) * C64::new(svd.singular_values[k], 0.0)));
    }
    let mut singular_values: Vec<f64> = svd.singular_values.iter().copied().collect();
    singular_values.sort_by(|a, b| b.total_cmp(a));

    // exterior map: monopole combinations matching each basis function on the
    // boundary nodes, weighted by the projection weights
    let sw: Vec<f64> = quad.nodes.iter().map(|n| n.pair_weight.sqrt()).collect();
    let values = DMatrix::from_fn(nodes, count, |r, c| traces[c].values[r] * sw[r]);
    let svd = checked_svd(&values);
    let smax = svd.singular_values.max();
    let pinv = svd.pseudo_inverse(TRIM * smax).expect("singular vectors were computed");
    let basis = quad.basis_matrix();
    let target = DMatrix::from_fn(nodes, m, |r, c| C64::new(basis[(r, c)] * sw[r], 0.0));
    let weights = &pinv * &target;
    let fitted = DMatrix::from_fn(nodes, count, |r, c| traces[c].values[r] * sw[r]) * &weights;
    let fit_residual = (&fitted - &target).norm() / target.norm();
    let flux = DMatrix::from_fn(nodes, count, |r, c| traces[c].normal_derivs[r]) * &weights;
    let mut exterior_dtn = DMatrix::<C64>::zeros(m, m);
    for j in 0..m {
        let col: Vec<C64> = flux.column(j).iter().copied().collect();
        exterior_dtn.set_column(j, &nalgebra::DVector::from_vec(quad.project(&col)));
    }
    Ok(KernelBasis {
        rho: *rho,
        sources: snapped,
        raw,
        columns,
        singular_values,
        exterior_dtn,
        fit_residual,
    })
}

fn grid_point(grid: &GridSpec, m: &[usize; 3]) -> Point {
    let mut p = [0.0; 3];
    for d in 0..grid.dim {
        p[d] = grid.coord(m[d]);
    }
    p
}

/// Discrete trace of the plane wave `e^{rho.x}`.
pub fn plane_wave_trace(rho: &ComplexFrequency, quad: &BoundaryQuadrature) -> Result<(NodalPair, CauchyPair)> {
    let grid = quad
        .grid
        .ok_or_else(|| Error::InvalidDomain("plane-wave traces need a grid-aligned quadrature".into()))?;
    check_growth(rho, &quad.domain, grid.dim)?;
    let nodal = nodal_trace(quad, |i| rho.exp_at(&grid.point(i)), |_| 0.0)?;
    let pair = nodal.project(quad);
    Ok((nodal, pair))
}

/// Splitting of the plane-wave trace into Cauchy data of `(Delta + q)` and
/// exterior data.
#[derive(Debug, Clone)]
pub struct TraceDecomposition {
    /// Component in the span of the Cauchy data: the CGO trace.
    pub trace: CauchyPair,
    /// Component in the kernel span.
    pub exterior: CauchyPair,
    /// The decomposed plane-wave trace.
    pub plane: CauchyPair,
    /// `||[CD | K] x - t|| / ||t||`.
    pub residual: f64,
    /// Smallest over largest singular value of `[CD | K]`.
    pub conditioning: f64,
}

/// Least-squares decomposition of the plane-wave trace over `[CD | K]`,
/// where `K` is the graph of the fitted exterior map.
pub fn cgo_trace_from_data(cd: &CauchySubspace, kb: &KernelBasis, quad: &BoundaryQuadrature) -> Result<TraceDecomposition> {
    let m = quad.basis.len();
    if cd.basis_len() != m || kb.basis_len() != m {
        return Err(Error::DirectSum(format!(
            "basis sizes differ: data {}, kernel {}, quadrature {m}",
            cd.basis_len(),
            kb.basis_len()
        )));
    }
    let (_, plane) = plane_wave_trace(&kb.rho, quad)?;
    decompose(&complex(&cd.c), &kb.graph(), &plane)
}

/// Splits `t = C a + K b` by least squares and returns `C a` and `K b`.
pub fn decompose(c: &DMatrix<C64>, k: &DMatrix<C64>, plane: &CauchyPair) -> Result<TraceDecomposition> {
    let rows = c.nrows();
    let nc = c.ncols();
    let mut a = DMatrix::<C64>::zeros(rows, nc + k.ncols());
    a.view_mut((0, 0), (rows, nc)).copy_from(c);
    a.view_mut((0, nc), (rows, k.ncols())).copy_from(k);
    let t = nalgebra::DVector::from_vec(plane.stacked());
    let svd = checked_svd(&a);
    let s = &svd.singular_values;
    let conditioning = s.min() / s.max();
    if !(conditioning > 1e-6) || a.ncols() > rows {
        return Err(Error::DirectSum(format!(
            "[CD | K] has relative smallest singular value {conditioning:.2e} with {} columns for {rows} rows",
            a.ncols()
        )));
    }
    let x = svd.solve(&t, 0.0).map_err(|e| Error::Solver(e.to_string()))?;
    let xc = x.rows(0, nc).into_owned();
    let xk = x.rows(nc, k.ncols()).into_owned();
    let cv = c * xc;
    let kv = k * xk;
    let residual = (&cv + &kv - &t).norm() / t.norm().max(f64::MIN_POSITIVE);
    Ok(TraceDecomposition {
        trace: CauchyPair::from_stacked(cv.as_slice()),
        exterior: CauchyPair::from_stacked(kv.as_slice()),
        plane: plane.clone(),
        residual,
        conditioning,
    })
}

/// `int_{dOmega} (v d_n e^{rho2.x} - d_n v e^{rho2.x})` by the surface rule.
pub fn qhat_from_boundary(v: &NodalPair, rho2: &ComplexFrequency, quad: &BoundaryQuadrature) -> Result<C64> {
    let mut integrand = Vec::with_capacity(quad.len());
    for (k, node) in quad.nodes.iter().enumerate() {
        let growth = dot(&rho2.re, &node.pos);
        if growth.abs() > EXPONENT_GUARD {
            return Err(Error::Overflow(format!(
                "|Re rho2.x| = {growth:.1} at a boundary node exceeds {EXPONENT_GUARD}"
            )));
        }
        let e = rho2.exp_at(&node.pos);
        let mut rn = C64::new(0.0, 0.0);
        for d in 0..quad.dim {
            rn += C64::new(rho2.re[d], rho2.im[d]) * node.normal[d];
        }
        integrand.push(v.values[k] * rn * e - v.normal_derivs[k] * e);
    }
    Ok(quad.integrate(&integrand))
}

/// [`qhat_from_boundary`] for a trace given in the boundary basis.
pub fn qhat_from_trace(v: &CauchyPair, rho2: &ComplexFrequency, quad: &BoundaryQuadrature) -> Result<C64> {
    let nodal = NodalPair {
        values: quad.synthesize(&v.dirichlet),
        normal_derivs: quad.synthesize(&v.neumann),
    };
    qhat_from_boundary(&nodal, rho2, quad)
}

/// Orthonormal basis of the column span, dropping directions below `rel`.
pub fn orthonormal_span(a: &DMatrix<C64>, rel: f64) -> DMatrix<C64> {
    let svd = checked_svd(a);
    let u = svd.u.expect("left vectors");
    let smax = svd.singular_values.max();
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&k| svd.singular_values[k] > rel * smax)
        .collect();
    DMatrix::from_fn(a.nrows(), keep.len(), |r, c| u[(r, keep[c])])
}

/// Principal angles between two column spans, ascending.
pub fn principal_angles(a: &DMatrix<C64>, b: &DMatrix<C64>) -> Vec<f64> {
    let qa = orthonormal_span(a, 1e-12);
    let qb = orthonormal_span(b, 1e-12);
    let s = checked_svd(&(qa.adjoint() * qb)).singular_values;
    let mut ang: Vec<f64> = s.iter().map(|c| c.clamp(0.0, 1.0).acos()).collect();
    ang.sort_by(|x, y| x.total_cmp(y));
    ang
}

/// `||psi - dtn phi|| / ||(phi, psi)||` for a pair against a graph.
pub fn graph_residual(pair: &CauchyPair, dtn: &DMatrix<C64>) -> f64 {
    let phi = nalgebra::DVector::from_column_slice(&pair.dirichlet);
    let psi = nalgebra::DVector::from_column_slice(&pair.neumann);
    let den = (phi.norm_squared() + psi.norm_squared()).sqrt();
    (psi - dtn * phi).norm() / den.max(f64::MIN_POSITIVE)
}
