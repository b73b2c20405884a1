//! One-dimensional quadrature rules.

use std::f64::consts::PI;

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(order >= 1);
    let mut nodes = vec![0.0; order];
    let mut weights = vec![0.0; order];
    let n = order as f64;
    for i in 0..order.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(order, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(order, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[order - 1 - i] = x;
        weights[i] = w;
        weights[order - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Gauss–Legendre rule mapped to `[lo, hi]`.
pub fn gauss_on(lo: f64, hi: f64, order: usize) -> Vec<(f64, f64)> {
    let (x, w) = gauss_legendre(order);
    let half = 0.5 * (hi - lo);
    let mid = 0.5 * (hi + lo);
    x.iter()
        .zip(&w)
        .map(|(&xi, &wi)| (mid + half * xi, half * wi))
        .collect()
}

/// Weights for `n` equispaced nodes on `[-a, a]` (endpoints included) that
/// integrate polynomials of degree `<= exact` exactly, with minimal Euclidean
/// norm among all such weights. `exact` is capped at `n - 1`.
pub fn equispaced_weights(n: usize, a: f64, exact: usize) -> Vec<f64> {
    assert!(n >= 2);
    let k = exact.min(n - 1) + 1;
    let x: Vec<f64> = (0..n).map(|i| -1.0 + 2.0 * i as f64 / (n - 1) as f64).collect();
    let v = nalgebra::DMatrix::from_fn(k, n, |r, c| legendre(r, x[c]));
    let mut m = nalgebra::DVector::zeros(k);
    m[0] = 2.0;
    let vvt = &v * v.transpose();
    let y = vvt.lu().solve(&m).expect("moment system is nonsingular");
    (v.transpose() * y).iter().map(|w| w * a).collect()
}

/// Legendre polynomial `P_k(x)`.
pub fn legendre(k: usize, x: f64) -> f64 {
    let mut p0 = 1.0;
    if k == 0 {
        return p0;
    }
    let mut p1 = x;
    for j in 1..k {
        let jf = j as f64;
        let p2 = ((2.0 * jf + 1.0) * x * p1 - jf * p0) / (jf + 1.0);
        p0 = p1;
        p1 = p2;
    }
    p1
}

/// `P_k(x / a)` scaled to unit L2 norm on `[-a, a]`.
pub fn legendre_normalized(k: usize, x: f64, a: f64) -> f64 {
    ((2 * k + 1) as f64 / (2.0 * a)).sqrt() * legendre(k, x / a)
}
