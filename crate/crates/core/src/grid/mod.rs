//! Uniform periodic grids on the torus box `[-L, L)^n`, complex scalar fields,
//! spectral differentiation, and the embedded cube domain.
//!
//! Fields are stored lexicographically with the first axis slowest. Spectral
//! operators accept an optional Bloch twist `kappa`: a twisted field satisfies
//! `w(x + 2L e_j) = exp(2 i L kappa_j) w(x)` and its Fourier modes sit on the
//! shifted lattice `zeta + kappa`.

pub mod boundary;
pub mod cache;

pub use boundary::{
    surface_integral, trace_and_normal, BoundaryBasis, BoundaryQuadrature, CauchyPair, NodalPair,
};

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft;

pub type Point = [f64; 3];

pub fn dot(a: &Point, b: &Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn norm(a: &Point) -> f64 {
    dot(a, a).sqrt()
}

/// Discretization of the torus box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dim: usize,
    pub half_period: f64,
    pub nodes: usize,
}

impl GridSpec {
    pub fn new(dim: usize, half_period: f64, nodes: usize) -> Result<Self> {
        let spec = Self {
            dim,
            half_period,
            nodes,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim != 2 && self.dim != 3 {
            return Err(Error::InvalidGrid(format!(
                "dimension must be 2 or 3, got {}",
                self.dim
            )));
        }
        if self.nodes % 2 != 0 {
            return Err(Error::InvalidGrid("N must be even".into()));
        }
        if self.nodes < 16 {
            return Err(Error::InvalidGrid(format!(
                "N must be at least 16, got {}",
                self.nodes
            )));
        }
        if !(self.half_period > 0.0 && self.half_period.is_finite()) {
            return Err(Error::InvalidGrid("L must be positive".into()));
        }
        Ok(())
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_period / self.nodes as f64
    }

    pub fn len(&self) -> usize {
        self.nodes.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    pub fn coord(&self, i: usize) -> f64 {
        -self.half_period + i as f64 * self.spacing()
    }

    /// Angular frequency of FFT bin `m` along one axis.
    pub fn freq(&self, m: usize) -> f64 {
        let n = self.nodes as i64;
        let m = m as i64;
        let signed = if m < n / 2 { m } else { m - n };
        signed as f64 * std::f64::consts::PI / self.half_period
    }

    pub fn flat(&self, idx: &[usize; 3]) -> usize {
        let n = self.nodes;
        if self.dim == 2 {
            idx[0] * n + idx[1]
        } else {
            (idx[0] * n + idx[1]) * n + idx[2]
        }
    }

    pub fn multi(&self, flat: usize) -> [usize; 3] {
        let n = self.nodes;
        if self.dim == 2 {
            [flat / n, flat % n, 0]
        } else {
            [flat / (n * n), (flat / n) % n, flat % n]
        }
    }

    pub fn point(&self, flat: usize) -> Point {
        let m = self.multi(flat);
        let mut p = [0.0; 3];
        for d in 0..self.dim {
            p[d] = self.coord(m[d]);
        }
        p
    }

    /// Dual lattice vector of FFT bin `flat` (unshifted).
    pub fn wavevector(&self, flat: usize) -> Point {
        let m = self.multi(flat);
        let mut z = [0.0; 3];
        for d in 0..self.dim {
            z[d] = self.freq(m[d]);
        }
        z
    }

    /// Resolution bound on |rho| for materializing `exp(rho.x)` on this grid.
    pub fn rho_resolution_bound(&self) -> f64 {
        std::f64::consts::PI * self.nodes as f64 / (8.0 * self.half_period)
    }
}

/// Node coordinates and dual lattice of a grid.
#[derive(Debug, Clone)]
pub struct Grid {
    pub spec: GridSpec,
    pub coords: Vec<f64>,
    pub freqs: Vec<f64>,
}

pub fn build_grid(spec: GridSpec) -> Result<Grid> {
    spec.validate()?;
    Ok(Grid {
        spec,
        coords: (0..spec.nodes).map(|i| spec.coord(i)).collect(),
        freqs: (0..spec.nodes).map(|m| spec.freq(m)).collect(),
    })
}

/// Complex samples on every node of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub grid: GridSpec,
    pub values: Vec<C64>,
}

impl ScalarField {
    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            grid,
            values: vec![C64::new(0.0, 0.0); grid.len()],
        }
    }

    pub fn from_values(grid: GridSpec, values: Vec<C64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::InvalidGrid("non-finite field value".into()));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: GridSpec, f: impl Fn(&Point) -> C64) -> Self {
        let values = (0..grid.len()).map(|i| f(&grid.point(i))).collect();
        Self { grid, values }
    }

    pub fn from_real_fn(grid: GridSpec, f: impl Fn(&Point) -> f64) -> Self {
        Self::from_fn(grid, |p| C64::new(f(p), 0.0))
    }

    pub fn scale(&mut self, s: C64) {
        for v in &mut self.values {
            *v *= s;
        }
    }

    /// Discrete L2 norm with the cell volume as weight.
    pub fn l2_norm(&self) -> f64 {
        (self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.grid.cell_volume()).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn is_real(&self) -> bool {
        self.values.iter().all(|v| v.im == 0.0)
    }
}

/// Applies a Fourier multiplier `symbol(zeta + twist)` to a (twisted) field.
pub fn apply_multiplier(
    values: &mut [C64],
    grid: &GridSpec,
    twist: &Point,
    symbol: impl Fn(&Point) -> C64,
) {
    let twisted = twist.iter().any(|&k| k != 0.0);
    if twisted {
        for (i, v) in values.iter_mut().enumerate() {
            let p = grid.point(i);
            *v *= C64::from_polar(1.0, -dot(twist, &p));
        }
    }
    fft::forward(values, grid.dim, grid.nodes);
    for (i, v) in values.iter_mut().enumerate() {
        let mut z = grid.wavevector(i);
        for d in 0..grid.dim {
            z[d] += twist[d];
        }
        *v *= symbol(&z);
    }
    fft::inverse(values, grid.dim, grid.nodes);
    if twisted {
        for (i, v) in values.iter_mut().enumerate() {
            let p = grid.point(i);
            *v *= C64::from_polar(1.0, dot(twist, &p));
        }
    }
}

/// `F^{-1}[-|zeta|^2 F f]` on the periodic grid.
pub fn spectral_laplacian(f: &ScalarField) -> ScalarField {
    spectral_laplacian_twisted(f, &[0.0; 3])
}

pub fn spectral_laplacian_twisted(f: &ScalarField, twist: &Point) -> ScalarField {
    let mut out = f.clone();
    apply_multiplier(&mut out.values, &f.grid, twist, |z| {
        C64::new(-dot(z, z), 0.0)
    });
    out
}

/// Spectral gradient, one field per axis.
pub fn spectral_gradient(f: &ScalarField, twist: &Point) -> Vec<ScalarField> {
    (0..f.grid.dim)
        .map(|d| {
            let mut out = f.clone();
            apply_multiplier(&mut out.values, &f.grid, twist, |z| C64::new(0.0, z[d]));
            out
        })
        .collect()
}

/// Cube domain `[-a, a]^n` embedded in the torus box, with the collar width of
/// the boundary cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub half_width: f64,
    pub collar: f64,
}

impl DomainSpec {
    /// Largest admissible cube for a grid, with the given collar.
    pub fn for_grid(grid: &GridSpec, collar: f64) -> Result<Self> {
        Self::new(grid, grid.half_period / 2.0, collar)
    }

    pub fn new(grid: &GridSpec, half_width: f64, collar: f64) -> Result<Self> {
        let d = Self { half_width, collar };
        d.validate(grid)?;
        Ok(d)
    }

    pub fn validate(&self, grid: &GridSpec) -> Result<()> {
        let l = grid.half_period;
        if !(self.half_width > 0.0) || self.half_width > l / 2.0 + 1e-12 * l {
            return Err(Error::InvalidDomain(format!(
                "cube half-width a = {} must satisfy 0 < a <= L/2 = {}",
                self.half_width,
                l / 2.0
            )));
        }
        if !(self.collar > 0.0) || self.collar >= self.half_width {
            return Err(Error::InvalidDomain(format!(
                "collar width {} must lie in (0, a)",
                self.collar
            )));
        }
        let h = grid.spacing();
        let cells = 2.0 * self.half_width / h;
        if (cells - cells.round()).abs() > 1e-9 || cells.round() as usize % 2 != 0 {
            return Err(Error::InvalidDomain(format!(
                "cube width 2a = {} must be an even number of grid cells (h = {h})",
                2.0 * self.half_width
            )));
        }
        if (cells.round() as usize) < 8 {
            return Err(Error::InvalidDomain(
                "grid too coarse: the cube must span at least 8 cells".into(),
            ));
        }
        Ok(())
    }

    /// Number of cells across the cube.
    pub fn cells(&self, grid: &GridSpec) -> usize {
        (2.0 * self.half_width / grid.spacing()).round() as usize
    }

    /// Grid index of the face at `-a` along any axis.
    pub fn lo_index(&self, grid: &GridSpec) -> usize {
        grid.nodes / 2 - self.cells(grid) / 2
    }

    pub fn hi_index(&self, grid: &GridSpec) -> usize {
        grid.nodes / 2 + self.cells(grid) / 2
    }

    pub fn contains(&self, p: &Point, dim: usize) -> bool {
        (0..dim).all(|d| p[d].abs() <= self.half_width + 1e-12)
    }

    /// Distance from an interior point to the boundary of the cube.
    pub fn distance_to_boundary(&self, p: &Point, dim: usize) -> f64 {
        (0..dim)
            .map(|d| self.half_width - p[d].abs())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn surface_area(&self, dim: usize) -> f64 {
        let a = self.half_width;
        if dim == 2 {
            8.0 * a
        } else {
            24.0 * a * a
        }
    }

    pub fn volume(&self, dim: usize) -> f64 {
        (2.0 * self.half_width).powi(dim as i32)
    }

    /// Flat indices of all grid nodes in the closed cube.
    pub fn node_indices(&self, grid: &GridSpec) -> Vec<usize> {
        let lo = self.lo_index(grid);
        let hi = self.hi_index(grid);
        (0..grid.len())
            .filter(|&i| {
                let m = grid.multi(i);
                (0..grid.dim).all(|d| m[d] >= lo && m[d] <= hi)
            })
            .collect()
    }

    /// Flat indices of nodes strictly inside the cube.
    pub fn interior_indices(&self, grid: &GridSpec) -> Vec<usize> {
        let lo = self.lo_index(grid);
        let hi = self.hi_index(grid);
        (0..grid.len())
            .filter(|&i| {
                let m = grid.multi(i);
                (0..grid.dim).all(|d| m[d] > lo && m[d] < hi)
            })
            .collect()
    }
}

/// L2 norm over the closed cube only.
pub fn domain_l2_norm(f: &ScalarField, domain: &DomainSpec) -> f64 {
    let idx = domain.node_indices(&f.grid);
    (idx.iter().map(|&i| f.values[i].norm_sqr()).sum::<f64>() * f.grid.cell_volume()).sqrt()
}

/// Discrete Lp norm over the closed cube.
pub fn domain_lp_norm(f: &ScalarField, domain: &DomainSpec, p: f64) -> f64 {
    let idx = domain.node_indices(&f.grid);
    (idx.iter().map(|&i| f.values[i].norm().powf(p)).sum::<f64>() * f.grid.cell_volume())
        .powf(1.0 / p)
}
