//! Discrete single and double layer potentials on the cube.
//!
//! For Cauchy data `(f, g)` the grid distribution `sigma = Delta_h (u 1_cube)`
//! of a solution `u` with that data only involves `f` and the energy flux `g`:
//! on a boundary node `h^2 sigma = -h sum_faces g - (1/2) sum_T (f_b - f_nb) - k f_b`
//! (tangential links, `k` outside neighbours) and `f_b / h^2` on each outside
//! neighbour. Convolving any `sigma` of this form with the conjugated 7-point
//! Green function gives the layer potential `u = -G * sigma`, whose inner
//! trace is `A0 (f, g)`. When `(f, g)` are Cauchy data of a grid harmonic
//! function `-G * sigma` reproduces it inside exactly, and when they are the
//! data of an interior monopole it vanishes inside, so `-A0` is a projection.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rayon::prelude::*;

use super::check_growth;
use crate::error::{Error, Result};
use crate::faddeev::{ComplexFrequency, FaddeevOperator};
use crate::grid::boundary::{face_axis, face_sign, nodal_trace, BoundaryQuadrature, CauchyPair, NodalPair};
use crate::grid::{GridSpec, ScalarField};

const ZERO: C64 = C64::new(0.0, 0.0);

/// Layer potentials for one `rho` on a grid-aligned quadrature.
pub struct LayerPotential<'a> {
    quad: &'a BoundaryQuadrature,
    grid: GridSpec,
    index: &'a [[usize; 3]],
    op: FaddeevOperator,
    /// `e^{rho.x}` on the whole grid.
    grow: Vec<C64>,
    /// Distinct boundary nodes (flat indices).
    boundary: Vec<usize>,
}

impl<'a> LayerPotential<'a> {
    pub fn new(rho: &ComplexFrequency, quad: &'a BoundaryQuadrature) -> Result<Self> {
        let grid = quad
            .grid
            .ok_or_else(|| Error::InvalidDomain("layer potentials need a grid-aligned quadrature".into()))?;
        let index = quad.grid_index.as_deref().expect("grid-aligned quadrature has an index");
        check_growth(rho, &quad.domain, grid.dim)?;
        let reach: f64 = (0..grid.dim).map(|d| rho.re[d].abs()).sum::<f64>() * grid.half_period;
        if reach > crate::cgo::EXPONENT_GUARD {
            return Err(Error::Overflow(format!("e^(rho.x) over the box reaches exponent {reach:.1}")));
        }
        let grow = (0..grid.len()).map(|i| rho.exp_at(&grid.point(i))).collect();
        let mut boundary: Vec<usize> = index.iter().map(|m| grid.flat(m)).collect();
        boundary.sort_unstable();
        boundary.dedup();
        Ok(Self {
            quad,
            grid,
            index,
            op: FaddeevOperator::finite_difference(&grid, rho),
            grow,
            boundary,
        })
    }

    pub fn rho(&self) -> ComplexFrequency {
        self.op.rho
    }

    /// Potential of nodal densities `f` (value jump) and `g` (flux jump).
    pub fn field_nodal(&self, f: &[C64], g: &[C64]) -> ScalarField {
        let grid = &self.grid;
        let h = grid.spacing();
        let h2 = h * h;
        let dim = grid.dim;
        let lo = self.quad.domain.lo_index(grid);
        let hi = self.quad.domain.hi_index(grid);
        let mut fb = vec![ZERO; grid.len()];
        let mut sigma = vec![ZERO; grid.len()];
        for (k, (node, m)) in self.quad.nodes.iter().zip(self.index).enumerate() {
            let flat = grid.flat(m);
            fb[flat] = f[k];
            sigma[flat] -= g[k] / h;
            let axis = face_axis(node.face);
            let mut out = *m;
            out[axis] = if face_sign(node.face) > 0.0 { m[axis] + 1 } else { m[axis] - 1 };
            sigma[grid.flat(&out)] += f[k] / h2;
        }
        for &b in &self.boundary {
            let m = grid.multi(b);
            let at_end = |d: usize| m[d] == lo || m[d] == hi;
            let ends = (0..dim).filter(|&d| at_end(d)).count() as f64;
            let mut st = ZERO;
            for d in (0..dim).filter(|&d| !at_end(d)) {
                for step in [-1isize, 1] {
                    let mut nb = m;
                    nb[d] = (m[d] as isize + step) as usize;
                    st += fb[b] - fb[grid.flat(&nb)];
                }
            }
            sigma[b] += (-0.5 * st - ends * fb[b]) / h2;
        }
        for (s, e) in sigma.iter_mut().zip(&self.grow) {
            *s /= e;
        }
        self.op.apply_in_place(&mut sigma);
        for (s, e) in sigma.iter_mut().zip(&self.grow) {
            *s *= -e;
        }
        ScalarField {
            grid: *grid,
            values: sigma,
        }
    }

    /// Potential of densities given in the boundary basis.
    pub fn field(&self, pair: &CauchyPair) -> ScalarField {
        self.field_nodal(&self.quad.synthesize(&pair.dirichlet), &self.quad.synthesize(&pair.neumann))
    }

    /// Inner trace of the potential, i.e. `A0 (f, g)`.
    pub fn inner_trace(&self, pair: &CauchyPair) -> CauchyPair {
        let u = self.field(pair);
        nodal_trace(self.quad, |i| u.values[i], |_| 0.0)
            .expect("grid-aligned quadrature")
            .project(self.quad)
    }

    /// Values and outward normal derivatives at the boundary, one sided: from
    /// the boundary node and three inner shells, or by cubic extrapolation
    /// from the four outer shells.
    fn shell_trace(&self, u: &ScalarField, outside: bool) -> NodalPair {
        let grid = &self.grid;
        let h = grid.spacing();
        let mut values = Vec::with_capacity(self.quad.len());
        let mut dn = Vec::with_capacity(self.quad.len());
        for (node, m) in self.quad.nodes.iter().zip(self.index) {
            let axis = face_axis(node.face);
            let dir = face_sign(node.face) * if outside { 1.0 } else { -1.0 };
            let at = |k: isize| {
                let mut p = *m;
                p[axis] = (m[axis] as isize + dir as isize * k) as usize;
                u.values[grid.flat(&p)]
            };
            let (u0, u1, u2, u3) = (at(0), at(1), at(2), at(3));
            let ds = if outside {
                let u4 = at(4);
                values.push(4.0 * u1 - 6.0 * u2 + 4.0 * u3 - u4);
                (-13.0 * u1 + 28.5 * u2 - 21.0 * u3 + 5.5 * u4) / (3.0 * h)
            } else {
                values.push(u0);
                (-11.0 * u0 + 18.0 * u1 - 9.0 * u2 + 2.0 * u3) / (6.0 * h)
            };
            dn.push(if outside { ds } else { -ds });
        }
        NodalPair {
            values,
            normal_derivs: dn,
        }
    }
}

/// Inner-trace blocks of the layer potentials and the assembled `A0`.
#[derive(Debug, Clone)]
pub struct LayerOperators {
    pub rho: ComplexFrequency,
    /// Value and flux of the potential with densities `(b_j, 0)`.
    pub double_value: DMatrix<C64>,
    pub double_flux: DMatrix<C64>,
    /// Value and flux of the potential with densities `(0, b_j)`.
    pub single_value: DMatrix<C64>,
    pub single_flux: DMatrix<C64>,
    /// `[[double_value, single_value], [double_flux, single_flux]]`.
    pub a0: DMatrix<C64>,
}

impl LayerOperators {
    pub fn apply(&self, pair: &CauchyPair) -> CauchyPair {
        let v = nalgebra::DVector::from_vec(pair.stacked());
        CauchyPair::from_stacked((&self.a0 * v).as_slice())
    }

    /// `||A0^2 + A0|| / ||A0||` in the Frobenius norm.
    pub fn projector_defect(&self) -> f64 {
        (&self.a0 * &self.a0 + &self.a0).norm() / self.a0.norm()
    }

    /// Orthonormal basis of the range of `-A0` (its `M` leading directions).
    pub fn range(&self) -> DMatrix<C64> {
        let m = self.a0.nrows() / 2;
        let svd = super::checked_svd(&self.a0);
        let order = sorted_indices(&svd.singular_values);
        let u = svd.u.expect("left vectors");
        DMatrix::from_fn(2 * m, m, |r, c| u[(r, order[c])])
    }

    /// Orthonormal basis of the `M` weakest right singular directions of `A0`.
    pub fn kernel(&self) -> DMatrix<C64> {
        let m = self.a0.nrows() / 2;
        let svd = super::checked_svd(&self.a0);
        let order = sorted_indices(&svd.singular_values);
        let vt = svd.v_t.expect("right vectors");
        DMatrix::from_fn(2 * m, m, |r, c| vt[(order[m + c], r)].conj())
    }
}

/// Indices of singular values in decreasing order.
fn sorted_indices(s: &nalgebra::DVector<f64>) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..s.len()).collect();
    idx.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    idx
}

/// `A0` column by column: one grid convolution per basis density.
pub fn assemble_a0(rho: &ComplexFrequency, quad: &BoundaryQuadrature) -> Result<LayerOperators> {
    let lp = LayerPotential::new(rho, quad)?;
    let m = quad.basis.len();
    let cols: Vec<CauchyPair> = (0..2 * m)
        .into_par_iter()
        .map(|j| {
            let mut e = vec![ZERO; 2 * m];
            e[j] = C64::new(1.0, 0.0);
            lp.inner_trace(&CauchyPair::from_stacked(&e))
        })
        .collect();
    let block = |first: usize, neumann: bool| {
        DMatrix::from_fn(m, m, |r, c| {
            let p = &cols[first + c];
            if neumann {
                p.neumann[r]
            } else {
                p.dirichlet[r]
            }
        })
    };
    let double_value = block(0, false);
    let double_flux = block(0, true);
    let single_value = block(m, false);
    let single_flux = block(m, true);
    let mut a0 = DMatrix::<C64>::zeros(2 * m, 2 * m);
    a0.view_mut((0, 0), (m, m)).copy_from(&double_value);
    a0.view_mut((m, 0), (m, m)).copy_from(&double_flux);
    a0.view_mut((0, m), (m, m)).copy_from(&single_value);
    a0.view_mut((m, m), (m, m)).copy_from(&single_flux);
    Ok(LayerOperators {
        rho: *rho,
        double_value,
        double_flux,
        single_value,
        single_flux,
        a0,
    })
}

/// Defects of the jump relations for the potential with densities `(f, g)`,
/// relative to `||(f, g)||` (absolute when the densities vanish).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpReport {
    /// `||[u] - f||` for the outer-minus-inner value jump.
    pub value_jump: f64,
    /// `||[d_n u] - g||`.
    pub flux_jump: f64,
    /// `||T_- u - A0 (f, g)||`.
    pub inner: f64,
    /// `||T_+ u - (f, g) - A0 (f, g)||`.
    pub outer: f64,
}

pub fn jump_relation_check(lp: &LayerPotential, ops: &LayerOperators, pair: &CauchyPair) -> JumpReport {
    let quad = lp.quad;
    let u = lp.field(pair);
    let inner = lp.shell_trace(&u, false).project(quad);
    let outer = lp.shell_trace(&u, true).project(quad);
    let a = ops.apply(pair);
    let norm = |v: &[C64]| v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    let scale = norm(&pair.stacked());
    let scale = if scale > 0.0 { scale } else { 1.0 };
    let diff = |x: &[C64], y: &[C64]| norm(&x.iter().zip(y).map(|(a, b)| a - b).collect::<Vec<_>>());
    let jump_v: Vec<C64> = outer.dirichlet.iter().zip(&inner.dirichlet).map(|(o, i)| o - i).collect();
    let jump_n: Vec<C64> = outer.neumann.iter().zip(&inner.neumann).map(|(o, i)| o - i).collect();
    let shifted: Vec<C64> = pair.stacked().iter().zip(a.stacked()).map(|(p, q)| p + q).collect();
    JumpReport {
        value_jump: diff(&jump_v, &pair.dirichlet) / scale,
        flux_jump: diff(&jump_n, &pair.neumann) / scale,
        inner: diff(&inner.stacked(), &a.stacked()) / scale,
        outer: diff(&outer.stacked(), &shifted) / scale,
    }
}
