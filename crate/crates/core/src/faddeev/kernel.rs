//! Tabulated conjugated kernel `g_rho = F^{-1}[1 / p_rho]` on grid
//! displacements, with the full kernel `G_rho(z) = exp(rho . z) g_rho(z)`.

use num_complex::Complex64 as C64;

use super::{choose_twist, choose_twist_by, fd_symbol, symbol, ComplexFrequency};
use crate::error::{Error, Result};
use crate::grid::{dot, GridSpec, Point, ScalarField};

/// `g_rho` at every grid displacement `m h`, `m` in the FFT band, for the
/// twisted lattice `zeta + kappa`. Normalized so that discrete convolution
/// `sum_y g(x - y) f(y) h^n` reproduces the FFT operator.
#[derive(Debug, Clone)]
pub struct KernelTable {
    pub grid: GridSpec,
    pub rho: ComplexFrequency,
    pub twist: Point,
    values: Vec<C64>,
}

pub fn faddeev_kernel_table(grid: &GridSpec, rho: &ComplexFrequency) -> KernelTable {
    let (twist, _) = choose_twist(grid, rho);
    KernelTable::with_twist(grid, rho, &twist)
}

impl KernelTable {
    pub fn with_twist(grid: &GridSpec, rho: &ComplexFrequency, twist: &Point) -> Self {
        Self::with_symbol(grid, rho, twist, |z| symbol(rho, z))
    }

    /// Kernel of the conjugated 7-point Laplacian: `Delta_h (e^{rho.x} g)`
    /// is the grid delta `1/h^n` at the origin.
    pub fn finite_difference(grid: &GridSpec, rho: &ComplexFrequency) -> Self {
        let h = grid.spacing();
        let (twist, _) = choose_twist_by(grid, |z| fd_symbol(rho, z, h));
        Self::with_symbol(grid, rho, &twist, |z| fd_symbol(rho, z, h))
    }

    pub fn with_symbol(grid: &GridSpec, rho: &ComplexFrequency, twist: &Point, sym: impl Fn(&Point) -> C64) -> Self {
        let mut values: Vec<C64> = (0..grid.len())
            .map(|i| {
                let mut z = grid.wavevector(i);
                for d in 0..grid.dim {
                    z[d] += twist[d];
                }
                let p = sym(&z);
                if p.norm() == 0.0 {
                    C64::new(0.0, 0.0)
                } else {
                    p.inv()
                }
            })
            .collect();
        crate::fft::inverse(&mut values, grid.dim, grid.nodes);
        let scale = 1.0 / grid.cell_volume();
        let h = grid.spacing();
        for (i, v) in values.iter_mut().enumerate() {
            let m = signed(grid, grid.multi(i));
            let mut z = [0.0; 3];
            for d in 0..grid.dim {
                z[d] = m[d] as f64 * h;
            }
            *v *= C64::from_polar(scale, dot(twist, &z));
        }
        Self {
            grid: *grid,
            rho: *rho,
            twist: *twist,
            values,
        }
    }

    /// `g_rho(m h)` for any integer displacement, continued by the twist.
    pub fn at(&self, m: [i64; 3]) -> C64 {
        let n = self.grid.nodes as i64;
        let mut idx = [0usize; 3];
        let mut wrap = [0.0; 3];
        for d in 0..self.grid.dim {
            let r = m[d].rem_euclid(n);
            let s = if r >= n / 2 { r - n } else { r };
            wrap[d] = ((m[d] - s) / n) as f64 * 2.0 * self.grid.half_period;
            idx[d] = r as usize;
        }
        let v = self.values[self.grid.flat(&idx)];
        if wrap.iter().all(|&w| w == 0.0) {
            v
        } else {
            v * C64::from_polar(1.0, dot(&self.twist, &wrap))
        }
    }

    fn check_safe(&self, z: &Point) -> Result<()> {
        let l = self.grid.half_period;
        for d in 0..self.grid.dim {
            if !(z[d].abs() <= l * (1.0 + 1e-12)) {
                return Err(Error::OutsideSafeBox(format!(
                    "separation {:.4} along axis {d} exceeds L = {l}",
                    z[d]
                )));
            }
        }
        Ok(())
    }

    /// Trilinear interpolation of `g_rho` at an arbitrary displacement.
    pub fn eval(&self, z: &Point) -> Result<C64> {
        self.check_safe(z)?;
        let h = self.grid.spacing();
        let dim = self.grid.dim;
        let mut base = [0i64; 3];
        let mut frac = [0.0; 3];
        for d in 0..dim {
            let t = z[d] / h;
            let f = t.floor();
            base[d] = f as i64;
            frac[d] = t - f;
        }
        let corners = 1usize << dim;
        let mut acc = C64::new(0.0, 0.0);
        for c in 0..corners {
            let mut m = base;
            let mut w = 1.0;
            for d in 0..dim {
                if c >> d & 1 == 1 {
                    m[d] += 1;
                    w *= frac[d];
                } else {
                    w *= 1.0 - frac[d];
                }
            }
            if w != 0.0 {
                acc += self.at(m) * w;
            }
        }
        Ok(acc)
    }

    /// Full kernel `G_rho(z) = exp(rho . z) g_rho(z)`.
    pub fn full(&self, z: &Point) -> Result<C64> {
        Ok(self.rho.exp_at(z) * self.eval(z)?)
    }

    /// `g_rho` laid out as a field with the origin at the grid center node.
    pub fn as_field(&self) -> ScalarField {
        let half = (self.grid.nodes / 2) as i64;
        let values = (0..self.grid.len())
            .map(|i| {
                let m = self.grid.multi(i);
                let mut s = [0i64; 3];
                for d in 0..self.grid.dim {
                    s[d] = m[d] as i64 - half;
                }
                self.at(s)
            })
            .collect();
        ScalarField {
            grid: self.grid,
            values,
        }
    }
}

fn signed(grid: &GridSpec, m: [usize; 3]) -> [i64; 3] {
    let n = grid.nodes as i64;
    let mut s = [0i64; 3];
    for d in 0..grid.dim {
        let r = m[d] as i64;
        s[d] = if r >= n / 2 { r - n } else { r };
    }
    s
}
