//! Matrix-free Krylov solvers: restarted complex GMRES, preconditioned CG and
//! BiCGSTAB for real systems, and Lanczos extreme-eigenvalue estimates.

use num_complex::Complex64 as C64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KrylovStats {
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

fn cdot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn cnorm(a: &[C64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Restarted GMRES(m) with modified Gram–Schmidt and Givens rotations.
/// Stops once `||b - A x|| <= tol * ||b||`. `x` holds the initial guess.
pub fn gmres(
    mut apply: impl FnMut(&[C64], &mut [C64]),
    b: &[C64],
    x: &mut [C64],
    tol: f64,
    restart: usize,
    max_iter: usize,
) -> KrylovStats {
    let n = b.len();
    let bnorm = cnorm(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
        return KrylovStats {
            iterations: 0,
            residual: 0.0,
            converged: true,
        };
    }
    let m = restart.max(1);
    let mut total = 0;
    let mut ax = vec![C64::new(0.0, 0.0); n];
    let mut rel;
    loop {
        apply(x, &mut ax);
        let r: Vec<C64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let beta = cnorm(&r);
        rel = beta / bnorm;
        if rel <= tol || total >= max_iter {
            break;
        }
        let mut v: Vec<Vec<C64>> = Vec::with_capacity(m + 1);
        v.push(r.iter().map(|z| z / beta).collect());
        let mut h = vec![vec![C64::new(0.0, 0.0); m]; m + 1];
        let mut cs = vec![0.0f64; m];
        let mut sn = vec![C64::new(0.0, 0.0); m];
        let mut g = vec![C64::new(0.0, 0.0); m + 1];
        g[0] = C64::new(beta, 0.0);
        let mut k_used = 0;
        for k in 0..m {
            let mut w = vec![C64::new(0.0, 0.0); n];
            apply(&v[k], &mut w);
            total += 1;
            for (j, vj) in v.iter().enumerate() {
                let hij = cdot(vj, &w);
                h[j][k] = hij;
                for (wi, vi) in w.iter_mut().zip(vj) {
                    *wi -= hij * vi;
                }
            }
            let wn = cnorm(&w);
            h[k + 1][k] = C64::new(wn, 0.0);
            for j in 0..k {
                let t = h[j][k] * cs[j] + sn[j].conj() * h[j + 1][k];
                h[j + 1][k] = -sn[j] * h[j][k] + h[j + 1][k] * cs[j];
                h[j][k] = t;
            }
            let (c, s) = givens(h[k][k], h[k + 1][k]);
            cs[k] = c;
            sn[k] = s;
            h[k][k] = h[k][k] * c + s.conj() * h[k + 1][k];
            h[k + 1][k] = C64::new(0.0, 0.0);
            g[k + 1] = -s * g[k];
            g[k] *= c;
            k_used = k + 1;
            rel = g[k + 1].norm() / bnorm;
            if rel <= tol || wn == 0.0 || total >= max_iter {
                break;
            }
            v.push(w.iter().map(|z| z / wn).collect());
        }
        let mut y = vec![C64::new(0.0, 0.0); k_used];
        for i in (0..k_used).rev() {
            let mut acc = g[i];
            for j in i + 1..k_used {
                acc -= h[i][j] * y[j];
            }
            y[i] = acc / h[i][i];
        }
        for (j, yj) in y.iter().enumerate() {
            for (xi, vi) in x.iter_mut().zip(&v[j]) {
                *xi += yj * vi;
            }
        }
    }
    KrylovStats {
        iterations: total,
        residual: rel,
        converged: rel <= tol,
    }
}

fn givens(a: C64, b: C64) -> (f64, C64) {
    let an = a.norm();
    let bn = b.norm();
    if bn == 0.0 {
        return (1.0, C64::new(0.0, 0.0));
    }
    if an == 0.0 {
        return (0.0, b / bn);
    }
    let r = (an * an + bn * bn).sqrt();
    let c = an / r;
    let s = (a / an).conj() * b / r;
    (c, s)
}

fn rdot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Jacobi-preconditioned conjugate gradients for a symmetric positive
/// definite operator.
pub fn cg(
    mut apply: impl FnMut(&[f64], &mut [f64]),
    diag: &[f64],
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> KrylovStats {
    let n = b.len();
    let bnorm = rdot(b, b).sqrt();
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return KrylovStats {
            iterations: 0,
            residual: 0.0,
            converged: true,
        };
    }
    let mut ap = vec![0.0; n];
    apply(x, &mut ap);
    let mut r: Vec<f64> = b.iter().zip(&ap).map(|(b, a)| b - a).collect();
    let mut z: Vec<f64> = r.iter().zip(diag).map(|(r, d)| r / d).collect();
    let mut p = z.clone();
    let mut rz = rdot(&r, &z);
    let mut rel = rdot(&r, &r).sqrt() / bnorm;
    let mut it = 0;
    while rel > tol && it < max_iter {
        apply(&p, &mut ap);
        let pap = rdot(&p, &ap);
        if pap <= 0.0 {
            break;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        it += 1;
        rel = rdot(&r, &r).sqrt() / bnorm;
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_new = rdot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    KrylovStats {
        iterations: it,
        residual: rel,
        converged: rel <= tol,
    }
}

/// Jacobi-preconditioned BiCGSTAB for general real operators.
pub fn bicgstab(
    mut apply: impl FnMut(&[f64], &mut [f64]),
    diag: &[f64],
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> KrylovStats {
    let n = b.len();
    let bnorm = rdot(b, b).sqrt();
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return KrylovStats {
            iterations: 0,
            residual: 0.0,
            converged: true,
        };
    }
    let mut tmp = vec![0.0; n];
    apply(x, &mut tmp);
    let mut r: Vec<f64> = b.iter().zip(&tmp).map(|(b, a)| b - a).collect();
    let r0 = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut phat = vec![0.0; n];
    let mut shat = vec![0.0; n];
    let mut t = vec![0.0; n];
    let mut rel = rdot(&r, &r).sqrt() / bnorm;
    let mut it = 0;
    while rel > tol && it < max_iter {
        let rho_new = rdot(&r0, &r);
        if rho_new == 0.0 {
            break;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
            phat[i] = p[i] / diag[i];
        }
        apply(&phat, &mut v);
        alpha = rho / rdot(&r0, &v);
        let mut s = r.clone();
        for i in 0..n {
            s[i] -= alpha * v[i];
        }
        it += 1;
        let sn = rdot(&s, &s).sqrt() / bnorm;
        if sn <= tol {
            for i in 0..n {
                x[i] += alpha * phat[i];
            }
            rel = sn;
            break;
        }
        for i in 0..n {
            shat[i] = s[i] / diag[i];
        }
        apply(&shat, &mut t);
        omega = rdot(&t, &s) / rdot(&t, &t);
        for i in 0..n {
            x[i] += alpha * phat[i] + omega * shat[i];
            r[i] = s[i] - omega * t[i];
        }
        rel = rdot(&r, &r).sqrt() / bnorm;
        if omega == 0.0 {
            break;
        }
    }
    KrylovStats {
        iterations: it,
        residual: rel,
        converged: rel <= tol,
    }
}

/// Extreme eigenvalues of a symmetric operator from `steps` Lanczos steps
/// with full reorthogonalization, started from a fixed deterministic vector.
pub fn lanczos_extremes(apply: impl FnMut(&[f64], &mut [f64]), n: usize, steps: usize) -> (f64, f64) {
    let ev = lanczos_ritz(apply, n, steps);
    let lo = ev.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = ev.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

/// All Ritz values of the Lanczos tridiagonal, unsorted.
pub fn lanczos_ritz(
    mut apply: impl FnMut(&[f64], &mut [f64]),
    n: usize,
    steps: usize,
) -> Vec<f64> {
    let steps = steps.min(n).max(1);
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(steps + 1);
    let mut v: Vec<f64> = (0..n)
        .map(|i| 1.0 + 0.5 * ((i as f64 * 0.618_033_988_75).fract() - 0.5))
        .collect();
    let nv = rdot(&v, &v).sqrt();
    v.iter_mut().for_each(|x| *x /= nv);
    q.push(v);
    let mut alpha = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut w = vec![0.0; n];
    for k in 0..steps {
        apply(&q[k], &mut w);
        let a = rdot(&q[k], &w);
        alpha.push(a);
        for qj in &q {
            let c = rdot(qj, &w);
            for (wi, qi) in w.iter_mut().zip(qj) {
                *wi -= c * qi;
            }
        }
        let b = rdot(&w, &w).sqrt();
        if b < 1e-12 * a.abs().max(1.0) || k + 1 == steps {
            break;
        }
        beta.push(b);
        q.push(w.iter().map(|x| x / b).collect());
    }
    let m = alpha.len();
    let t = nalgebra::DMatrix::from_fn(m, m, |i, j| {
        if i == j {
            alpha[i]
        } else if i + 1 == j {
            beta[i]
        } else if j + 1 == i {
            beta[j]
        } else {
            0.0
        }
    });
    t.symmetric_eigenvalues().iter().cloned().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lap1d(x: &[f64], y: &mut [f64], shift: f64) {
        let n = x.len();
        for i in 0..n {
            let l = if i > 0 { x[i - 1] } else { 0.0 };
            let r = if i + 1 < n { x[i + 1] } else { 0.0 };
            y[i] = 2.0 * x[i] - l - r - shift * x[i];
        }
    }

    #[test]
    fn cg_and_bicgstab_solve_tridiagonal() {
        let n = 50;
        let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).sin()).collect();
        let d = vec![2.0; n];
        let mut x = vec![0.0; n];
        let s = cg(|x, y| lap1d(x, y, 0.0), &d, &b, &mut x, 1e-12, 500);
        assert!(s.converged);
        let mut y = vec![0.0; n];
        lap1d(&x, &mut y, 0.0);
        assert!(y.iter().zip(&b).all(|(a, b)| (a - b).abs() < 1e-9));

        let mut x = vec![0.0; n];
        let conv = |x: &[f64], y: &mut [f64]| {
            for i in 0..x.len() {
                let l = if i > 0 { x[i - 1] } else { 0.0 };
                let r = if i + 1 < x.len() { x[i + 1] } else { 0.0 };
                y[i] = 2.0 * x[i] - 1.3 * l - 0.7 * r;
            }
        };
        let s = bicgstab(conv, &vec![2.0; n], &b, &mut x, 1e-11, 2000);
        assert!(s.converged, "{s:?}");
        conv(&x, &mut y);
        assert!(y.iter().zip(&b).all(|(a, b)| (a - b).abs() < 1e-8));
    }

    #[test]
    fn gmres_solves_complex_nonsymmetric() {
        let n = 40;
        let a = |x: &[C64], y: &mut [C64]| {
            for i in 0..x.len() {
                let l = if i > 0 { x[i - 1] } else { C64::new(0.0, 0.0) };
                y[i] = x[i] * C64::new(3.0, 1.0) + l * C64::new(0.5, -0.7);
            }
        };
        let b: Vec<C64> = (0..n).map(|i| C64::new(1.0, i as f64 * 0.1)).collect();
        let mut x = vec![C64::new(0.0, 0.0); n];
        let s = gmres(a, &b, &mut x, 1e-12, 10, 400);
        assert!(s.converged, "{s:?}");
        let mut y = vec![C64::new(0.0, 0.0); n];
        a(&x, &mut y);
        assert!(y.iter().zip(&b).all(|(a, b)| (a - b).norm() < 1e-10));
    }

    #[test]
    fn lanczos_brackets_spectrum() {
        let n = 30;
        let (lo, hi) = lanczos_extremes(|x, y| lap1d(x, y, 0.0), n, 30);
        let exact = |k: f64| 2.0 - 2.0 * (k * std::f64::consts::PI / (n as f64 + 1.0)).cos();
        assert!((lo - exact(1.0)).abs() < 1e-8);
        assert!((hi - exact(n as f64)).abs() < 1e-8);
    }
}
