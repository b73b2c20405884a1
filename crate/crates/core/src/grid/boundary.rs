//! Boundary of the cube: quadrature nodes, outward normals, the boundary
//! basis and trace extraction.
//!
//! Faces are numbered `2 * axis + side` with `side = 1` for the `+a` face.
//! The basis spans the traces of polynomials of degree at most `p` in each
//! coordinate. Such traces are continuous across edges and corners. There
//! are `(p+1)^n - (p-1)^n` of them: products of the hierarchical shapes
//! `(1-s)/2`, `(1+s)/2` and `(1-s^2) P_{k-2}(s)`, dropping the products that
//! vanish on the boundary. They are orthonormalized in order of increasing
//! degree, so the first `2^n` functions span the multilinear traces. Each
//! quadrature orthonormalizes under its own projection inner product: exact
//! L2 for Gauss rules, face trapezoid weights on grid faces.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use super::{DomainSpec, GridSpec, Point, ScalarField};
use crate::error::{Error, Result};
use crate::quadrature::{equispaced_weights, gauss_on, legendre};

/// Hierarchical 1D shape `k` on `[-1, 1]`.
fn shape(k: usize, s: f64) -> f64 {
    match k {
        0 => 0.5 * (1.0 - s),
        1 => 0.5 * (1.0 + s),
        _ => (1.0 - s * s) * legendre(k - 2, s),
    }
}

fn shape_degree(k: usize) -> usize {
    k.max(1)
}

/// Orthonormal basis of boundary traces of tensor polynomials.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryBasis {
    pub dim: usize,
    pub half_width: f64,
    pub degree: usize,
    raw: Vec<[usize; 3]>,
    /// Upper-triangular map from raw products to orthonormal functions.
    coef: DMatrix<f64>,
}

impl BoundaryBasis {
    pub fn new(dim: usize, half_width: f64, degree: usize) -> Self {
        let p = degree.max(1);
        let mut raw = Vec::new();
        let third = if dim == 3 { p + 1 } else { 1 };
        for i in 0..=p {
            for j in 0..=p {
                for k in 0..third {
                    let idx = [i, j, k];
                    if (0..dim).any(|d| idx[d] < 2) {
                        raw.push(idx);
                    }
                }
            }
        }
        raw.sort_by_key(|idx| ((0..dim).map(|d| shape_degree(idx[d])).sum::<usize>(), *idx));
        let mut basis = Self {
            dim,
            half_width,
            degree: p,
            coef: DMatrix::identity(raw.len(), raw.len()),
            raw,
        };
        // exact Gram matrix of the raw products
        let rule = gauss_on(-half_width, half_width, p + 2);
        let m = basis.raw.len();
        let mut gram = DMatrix::<f64>::zeros(m, m);
        for face in 0..2 * dim {
            let axis = face_axis(face);
            let tang = tangential_axes(dim, face);
            let second: Vec<(f64, f64)> = if dim == 3 { rule.clone() } else { vec![(0.0, 1.0)] };
            for &(s, ws) in &rule {
                for &(t, wt) in &second {
                    let mut pos = [0.0; 3];
                    pos[axis] = face_sign(face) * half_width;
                    pos[tang[0]] = s;
                    if dim == 3 {
                        pos[tang[1]] = t;
                    }
                    let v: Vec<f64> = (0..m).map(|k| basis.eval_raw(k, &pos)).collect();
                    for a in 0..m {
                        if v[a] == 0.0 {
                            continue;
                        }
                        for b in 0..m {
                            gram[(a, b)] += ws * wt * v[a] * v[b];
                        }
                    }
                }
            }
        }
        let chol = gram.cholesky().expect("boundary traces are linearly independent");
        let l = chol.l();
        let inv_lt = l
            .transpose()
            .solve_upper_triangular(&DMatrix::identity(m, m))
            .expect("triangular factor is invertible");
        basis.coef = inv_lt;
        basis
    }

    pub fn faces(&self) -> usize {
        2 * self.dim
    }

    /// Total number of basis functions M.
    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    /// Number of leading functions spanning the multilinear traces.
    pub fn multilinear_len(&self) -> usize {
        1 << self.dim
    }

    fn eval_raw(&self, k: usize, pos: &Point) -> f64 {
        let a = self.half_width;
        (0..self.dim)
            .map(|d| shape(self.raw[k][d], (pos[d] / a).clamp(-1.0, 1.0)))
            .product()
    }

    /// Values of all basis functions at a boundary point.
    pub fn eval_all(&self, pos: &Point) -> Vec<f64> {
        let m = self.len();
        let raw: Vec<f64> = (0..m).map(|k| self.eval_raw(k, pos)).collect();
        (0..m)
            .map(|j| (0..=j).map(|k| raw[k] * self.coef[(k, j)]).sum())
            .collect()
    }

    pub fn eval(&self, j: usize, pos: &Point) -> f64 {
        (0..=j).map(|k| self.eval_raw(k, pos) * self.coef[(k, j)]).sum()
    }
}

pub fn face_axis(face: usize) -> usize {
    face / 2
}

pub fn face_sign(face: usize) -> f64 {
    if face % 2 == 1 {
        1.0
    } else {
        -1.0
    }
}

/// Tangential axes of a face, in increasing order.
pub fn tangential_axes(dim: usize, face: usize) -> [usize; 2] {
    let axis = face_axis(face);
    let mut t = [0usize; 2];
    let mut k = 0;
    for d in 0..dim {
        if d != axis {
            t[k] = d;
            k += 1;
        }
    }
    t
}

#[derive(Debug, Clone)]
pub struct BoundaryNode {
    pub face: usize,
    pub pos: Point,
    pub normal: Point,
    /// Weight for surface integrals.
    pub weight: f64,
    /// Weight of the boundary inner product used for projections. On grid
    /// faces this is the trapezoid weight matching the discrete Green identity.
    pub pair_weight: f64,
    pub tangential: [f64; 2],
}

/// Quadrature on the cube boundary with a least-squares projection onto the
/// boundary basis. Grid-aligned instances also remember the grid multi-index
/// of every node so traces can be read off grid fields.
#[derive(Debug, Clone)]
pub struct BoundaryQuadrature {
    pub dim: usize,
    pub domain: DomainSpec,
    pub basis: BoundaryBasis,
    pub nodes: Vec<BoundaryNode>,
    pub face_ranges: Vec<std::ops::Range<usize>>,
    pub grid_index: Option<Vec<[usize; 3]>>,
    pub grid: Option<GridSpec>,
    /// Basis values, one row per node.
    basis_values: DMatrix<f64>,
    /// Inverse of the discrete Gram matrix `B^T W B`.
    gram_inv: DMatrix<f64>,
}

impl BoundaryQuadrature {
    /// Tensor rule on the grid nodes of every face, exact for polynomials of
    /// degree `2 * degree + 2` per direction when the face has enough nodes.
    pub fn grid_aligned(grid: &GridSpec, domain: &DomainSpec, degree: usize) -> Result<Self> {
        domain.validate(grid)?;
        let dim = grid.dim;
        let cells = domain.cells(grid);
        let lo = domain.lo_index(grid);
        let hi = domain.hi_index(grid);
        let w1 = equispaced_weights(cells + 1, domain.half_width, 2 * degree + 2);
        let h = grid.spacing();
        let trap = |i: usize| if i == 0 || i == cells { 0.5 * h } else { h };
        let mut nodes = Vec::new();
        let mut index = Vec::new();
        let mut ranges = Vec::new();
        for face in 0..2 * dim {
            let start = nodes.len();
            let axis = face_axis(face);
            let sign = face_sign(face);
            let tang = tangential_axes(dim, face);
            let fixed = if sign > 0.0 { hi } else { lo };
            let count_t = if dim == 3 { cells + 1 } else { 1 };
            for i in 0..=cells {
                for k in 0..count_t {
                    let mut m = [0usize; 3];
                    m[axis] = fixed;
                    m[tang[0]] = lo + i;
                    if dim == 3 {
                        m[tang[1]] = lo + k;
                    }
                    let mut pos = [0.0; 3];
                    for d in 0..dim {
                        pos[d] = grid.coord(m[d]);
                    }
                    let mut normal = [0.0; 3];
                    normal[axis] = sign;
                    let weight = if dim == 3 { w1[i] * w1[k] } else { w1[i] };
                    let pair_weight = if dim == 3 { trap(i) * trap(k) } else { trap(i) };
                    let tangential = [pos[tang[0]], if dim == 3 { pos[tang[1]] } else { 0.0 }];
                    nodes.push(BoundaryNode {
                        face,
                        pos,
                        normal,
                        weight,
                        pair_weight,
                        tangential,
                    });
                    index.push(m);
                }
            }
            ranges.push(start..nodes.len());
        }
        let basis = BoundaryBasis::new(dim, domain.half_width, degree);
        Self::assemble(dim, *domain, basis, nodes, ranges, Some(index), Some(*grid))
    }

    /// Composite Gauss–Legendre rule: `panels` panels of `order` points per
    /// tangential direction on every face.
    pub fn gauss(
        dim: usize,
        domain: &DomainSpec,
        degree: usize,
        panels: usize,
        order: usize,
    ) -> Result<Self> {
        let a = domain.half_width;
        let mut rule = Vec::new();
        let width = 2.0 * a / panels as f64;
        for p in 0..panels {
            let lo = -a + p as f64 * width;
            rule.extend(gauss_on(lo, lo + width, order));
        }
        let mut nodes = Vec::new();
        let mut ranges = Vec::new();
        for face in 0..2 * dim {
            let start = nodes.len();
            let axis = face_axis(face);
            let sign = face_sign(face);
            let tang = tangential_axes(dim, face);
            let second: Vec<(f64, f64)> = if dim == 3 {
                rule.clone()
            } else {
                vec![(0.0, 1.0)]
            };
            for &(s, ws) in &rule {
                for &(t, wt) in &second {
                    let mut pos = [0.0; 3];
                    pos[axis] = sign * a;
                    pos[tang[0]] = s;
                    if dim == 3 {
                        pos[tang[1]] = t;
                    }
                    let mut normal = [0.0; 3];
                    normal[axis] = sign;
                    nodes.push(BoundaryNode {
                        face,
                        pos,
                        normal,
                        weight: ws * wt,
                        pair_weight: ws * wt,
                        tangential: [s, t],
                    });
                }
            }
            ranges.push(start..nodes.len());
        }
        let basis = BoundaryBasis::new(dim, a, degree);
        Self::assemble(dim, *domain, basis, nodes, ranges, None, None)
    }

    fn assemble(
        dim: usize,
        domain: DomainSpec,
        basis: BoundaryBasis,
        nodes: Vec<BoundaryNode>,
        face_ranges: Vec<std::ops::Range<usize>>,
        grid_index: Option<Vec<[usize; 3]>>,
        grid: Option<GridSpec>,
    ) -> Result<Self> {
        let mut basis = basis;
        let m = basis.len();
        let mut raw = DMatrix::<f64>::zeros(nodes.len(), m);
        for (i, n) in nodes.iter().enumerate() {
            for k in 0..m {
                raw[(i, k)] = basis.eval_raw(k, &n.pos);
            }
        }
        let mut rw = raw.clone();
        for (i, n) in nodes.iter().enumerate() {
            rw.row_mut(i).scale_mut(n.pair_weight);
        }
        let too_coarse =
            || Error::InvalidDomain("boundary quadrature too coarse for the basis degree".into());
        let chol = (raw.transpose() * rw).cholesky().ok_or_else(too_coarse)?;
        basis.coef = chol
            .l()
            .transpose()
            .solve_upper_triangular(&DMatrix::identity(m, m))
            .ok_or_else(too_coarse)?;
        let b = raw * &basis.coef;
        let mut bw = b.clone();
        for (i, n) in nodes.iter().enumerate() {
            bw.row_mut(i).scale_mut(n.pair_weight);
        }
        let gram_inv = (b.transpose() * bw).try_inverse().ok_or_else(too_coarse)?;
        Ok(Self {
            dim,
            domain,
            basis,
            nodes,
            face_ranges,
            grid_index,
            grid,
            basis_values: b,
            gram_inv,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, values: &[C64]) -> C64 {
        self.nodes
            .iter()
            .zip(values)
            .map(|(n, v)| v * n.weight)
            .sum()
    }

    /// Boundary inner product `sum_i p_i f_i conj(g_i)` used by projections.
    pub fn pairing(&self, f: &[C64], g: &[C64]) -> C64 {
        self.nodes
            .iter()
            .zip(f.iter().zip(g))
            .map(|(n, (a, b))| a * b.conj() * n.pair_weight)
            .sum()
    }

    /// Weighted least-squares projection of nodal values onto the basis.
    pub fn project(&self, values: &[C64]) -> Vec<C64> {
        assert_eq!(values.len(), self.nodes.len());
        let m = self.basis.len();
        let mut rhs = vec![C64::new(0.0, 0.0); m];
        for (i, n) in self.nodes.iter().enumerate() {
            let g = values[i] * n.pair_weight;
            for (j, r) in rhs.iter_mut().enumerate() {
                *r += g * self.basis_values[(i, j)];
            }
        }
        (0..m)
            .map(|l| (0..m).map(|k| rhs[k] * self.gram_inv[(l, k)]).sum())
            .collect()
    }

    /// Nodal values of a basis expansion.
    pub fn synthesize(&self, coefs: &[C64]) -> Vec<C64> {
        assert_eq!(coefs.len(), self.basis.len());
        (0..self.nodes.len())
            .map(|i| {
                coefs
                    .iter()
                    .enumerate()
                    .map(|(j, c)| c * self.basis_values[(i, j)])
                    .sum()
            })
            .collect()
    }

    /// Basis values at the nodes, one row per node.
    pub fn basis_matrix(&self) -> &DMatrix<f64> {
        &self.basis_values
    }

    /// Gram matrix of the basis under the projection inner product.
    pub fn gram(&self) -> DMatrix<f64> {
        let mut bw = self.basis_values.clone();
        for (i, n) in self.nodes.iter().enumerate() {
            bw.row_mut(i).scale_mut(n.pair_weight);
        }
        self.basis_values.transpose() * bw
    }
}

/// Quadrature `sum_i w_i g_i` of nodal boundary values.
pub fn surface_integral(quad: &BoundaryQuadrature, g: &[C64]) -> C64 {
    quad.integrate(g)
}

/// Boundary trace and outward normal derivative, both in the boundary basis.
#[derive(Debug, Clone, PartialEq)]
pub struct CauchyPair {
    pub dirichlet: Vec<C64>,
    pub neumann: Vec<C64>,
}

impl CauchyPair {
    pub fn zeros(m: usize) -> Self {
        Self {
            dirichlet: vec![C64::new(0.0, 0.0); m],
            neumann: vec![C64::new(0.0, 0.0); m],
        }
    }

    /// Stacked `[dirichlet; neumann]` coefficient vector.
    pub fn stacked(&self) -> Vec<C64> {
        let mut v = self.dirichlet.clone();
        v.extend_from_slice(&self.neumann);
        v
    }

    pub fn from_stacked(v: &[C64]) -> Self {
        let m = v.len() / 2;
        Self {
            dirichlet: v[..m].to_vec(),
            neumann: v[m..].to_vec(),
        }
    }

    pub fn scaled(&self, s: C64) -> Self {
        Self {
            dirichlet: self.dirichlet.iter().map(|v| v * s).collect(),
            neumann: self.neumann.iter().map(|v| v * s).collect(),
        }
    }
}

/// Nodal boundary values and outward normal derivatives.
#[derive(Debug, Clone)]
pub struct NodalPair {
    pub values: Vec<C64>,
    pub normal_derivs: Vec<C64>,
}

impl NodalPair {
    pub fn project(&self, quad: &BoundaryQuadrature) -> CauchyPair {
        CauchyPair {
            dirichlet: quad.project(&self.values),
            neumann: quad.project(&self.normal_derivs),
        }
    }
}

/// Restriction to the boundary and the discrete normal flux.
///
/// The flux is the boundary residual of the grid energy
/// `sum_links c h |Du|^2 - sum_nodes w V |u|^2` with trapezoid weights, split
/// per face and divided by the face weight. On a face interior this is
/// `(u_b - u_in)/h - (h/2)(lap_T u + V u)`. For solutions of the interior
/// equations the pairing with any trace equals the energy, so the resulting
/// Dirichlet-to-Neumann map is symmetric.
pub fn trace_and_normal(u: &ScalarField, quad: &BoundaryQuadrature) -> Result<(NodalPair, CauchyPair)> {
    trace_and_normal_with(u, quad, |_| 0.0)
}

/// As [`trace_and_normal`] for `(lap + V) u = 0`, with `shift(flat)` giving `V`.
pub fn trace_and_normal_with(
    u: &ScalarField,
    quad: &BoundaryQuadrature,
    shift: impl Fn(usize) -> f64,
) -> Result<(NodalPair, CauchyPair)> {
    if quad.grid.as_ref() != Some(&u.grid) {
        return Err(Error::InvalidGrid(
            "field and boundary quadrature live on different grids".into(),
        ));
    }
    let nodal = nodal_trace(quad, |i| u.values[i], shift)?;
    let pair = nodal.project(quad);
    Ok((nodal, pair))
}

/// Nodal values and discrete normal flux of the grid function `value(flat)`.
/// Only the boundary nodes and their inward neighbours are read.
pub fn nodal_trace(
    quad: &BoundaryQuadrature,
    value: impl Fn(usize) -> C64,
    shift: impl Fn(usize) -> f64,
) -> Result<NodalPair> {
    let index = quad.grid_index.as_ref().ok_or_else(|| {
        Error::InvalidDomain("trace extraction needs a grid-aligned boundary quadrature".into())
    })?;
    let grid = quad.grid.as_ref().expect("grid-aligned quadrature has a grid");
    if quad.domain.cells(grid) < 2 {
        return Err(Error::InvalidGrid("grid too coarse for the normal flux".into()));
    }
    let dim = grid.dim;
    let h = grid.spacing();
    let lo = quad.domain.lo_index(grid);
    let hi = quad.domain.hi_index(grid);
    let at_end = |m: &[usize; 3], d: usize| m[d] == lo || m[d] == hi;
    let tau = |m: &[usize; 3], d: usize| if at_end(m, d) { 0.5 * h } else { h };
    let mut values = Vec::with_capacity(quad.len());
    let mut dn = Vec::with_capacity(quad.len());
    for (node, m) in quad.nodes.iter().zip(index) {
        let axis = face_axis(node.face);
        let flat = grid.flat(m);
        let ub = value(flat);
        let faces_here = (0..dim).filter(|&d| at_end(m, d)).count() as f64;
        let face_w: f64 = (0..dim).filter(|&d| d != axis).map(|d| tau(m, d)).product();
        let mut inner = *m;
        inner[axis] = if face_sign(node.face) > 0.0 { m[axis] - 1 } else { m[axis] + 1 };
        let mut flux = (ub - value(grid.flat(&inner))) * (face_w / h);
        // links along an axis where the node is at the end are normal links
        // of the other face
        for d in (0..dim).filter(|&d| d != axis && !at_end(m, d)) {
            // faces sharing the links along d through this node
            let share = (0..dim).filter(|&e| e != d && at_end(m, e)).count() as f64;
            let c: f64 = (0..dim).filter(|&e| e != d).map(|e| tau(m, e)).product();
            for step in [-1isize, 1] {
                let k = m[d] as isize + step;
                if k < lo as isize || k > hi as isize {
                    continue;
                }
                let mut nb = *m;
                nb[d] = k as usize;
                flux += (ub - value(grid.flat(&nb))) * (c / (h * share));
            }
        }
        let w: f64 = (0..dim).map(|d| tau(m, d)).product();
        flux -= ub * (w * shift(flat) / faces_here);
        values.push(ub);
        dn.push(flux / face_w);
    }
    Ok(NodalPair {
        values,
        normal_derivs: dn,
    })
}
