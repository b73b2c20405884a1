use super::*;
use crate::faddeev::{pair_with_magnitude, FrequencyPair};
use crate::potentials::{sample_potential, ConormalPotentialSpec, GaussianSpec, PotentialSpec, Submanifold, Window};

fn pipeline() -> (GridSpec, DomainSpec) {
    let g = GridSpec::new(3, 0.25, 48).unwrap();
    let d = DomainSpec::for_grid(&g, 0.02).unwrap();
    (g, d)
}

fn conormal_sphere(scale: f64) -> PotentialSpec {
    PotentialSpec::Conormal(ConormalPotentialSpec {
        manifold: Submanifold::Sphere {
            center: [0.0; 3],
            radius: 0.05,
        },
        nu: 0.8,
        amplitude: Window {
            center: [0.0; 3],
            widths: [0.09; 3],
            scale,
        },
        cap: 1e3,
    })
}

fn gaussian(amplitude: f64, width: f64, support: f64) -> PotentialSpec {
    PotentialSpec::Gaussian(GaussianSpec {
        center: [0.01, -0.02, 0.015],
        width,
        amplitude,
        support,
    })
}

fn schedule(xi: Point, mags: &[f64]) -> Vec<FrequencyPair> {
    mags.iter().map(|&r| pair_with_magnitude(&xi, r).unwrap()).collect()
}

fn smooth_box() -> (GridSpec, DomainSpec) {
    let g = GridSpec::new(3, 1.0, 64).unwrap();
    let d = DomainSpec::for_grid(&g, 0.05).unwrap();
    (g, d)
}

fn sample(spec: &PotentialSpec, g: &GridSpec, d: &DomainSpec) -> ScalarField {
    sample_potential(spec, g, d).unwrap().0
}

/// Twisted lattice Green function by an explicit sum over all modes.
fn dense_green(g: &GridSpec, rho: &ComplexFrequency, twist: &Point, m: [i64; 3]) -> C64 {
    let n = g.nodes;
    let h = g.spacing();
    let step = std::f64::consts::PI / g.half_period;
    let freq = |k: usize| {
        let k = k as i64;
        (if k < n as i64 / 2 { k } else { k - n as i64 }) as f64 * step
    };
    let mut acc = C64::new(0.0, 0.0);
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                let z = [freq(a) + twist[0], freq(b) + twist[1], freq(c) + twist[2]];
                let zz = z[0] * z[0] + z[1] * z[1] + z[2] * z[2];
                let rz = C64::new(rho.re[0], rho.im[0]) * z[0]
                    + C64::new(rho.re[1], rho.im[1]) * z[1]
                    + C64::new(rho.re[2], rho.im[2]) * z[2];
                let p = -zz + 2.0 * C64::i() * rz;
                let arg = h * (z[0] * m[0] as f64 + z[1] * m[1] as f64 + z[2] * m[2] as f64);
                acc += C64::from_polar(1.0, arg) / p;
            }
        }
    }
    acc / (2.0 * g.half_period).powi(3)
}

fn oracle_case() -> (GridSpec, ScalarField, ComplexFrequency) {
    let g = GridSpec::new(3, 1.0, 16).unwrap();
    let d = DomainSpec::for_grid(&g, 0.05).unwrap();
    let q = sample(&gaussian(30.0, 0.2, 0.4), &g, &d);
    let rho = pair_with_magnitude(&[1.0, 0.5, 0.0], 5.0).unwrap().rho1;
    (g, q, rho)
}

#[test]
fn zero_potential_gives_zero_corrector() {
    let (g, d) = pipeline();
    let q = ScalarField::zeros(g);
    let rho = pair_with_magnitude(&[2.0, 0.0, 0.0], 16.0).unwrap().rho1;
    let s = solve_corrector(&q, &rho, &SolveOptions::default()).unwrap();
    assert_eq!(s.iterations, 0);
    assert!(s.psi.values.iter().all(|v| *v == C64::new(0.0, 0.0)));
    let st = corrector_decay_study(&q, &d, &schedule([2.0, 0.0, 0.0], &[8.0, 16.0, 32.0]), 2.0, &SolveOptions::default()).unwrap();
    assert!(st.rows.iter().all(|r| r.psi_l2 == 0.0 && r.psi_lp == 0.0));
}

#[test]
fn matches_dense_direct_solve() {
    let (g, q, rho) = oracle_case();
    let opts = SolveOptions {
        tol: 1e-11,
        ..Default::default()
    };
    let sol = solve_corrector(&q, &rho, &opts).unwrap();
    let supp: Vec<usize> = (0..g.len()).filter(|&i| q.values[i].re != 0.0).collect();
    let n = supp.len();
    let h3 = g.cell_volume();
    let mut cache = std::collections::HashMap::new();
    let mut green = |i: usize, j: usize| {
        let (a, b) = (g.multi(i), g.multi(j));
        let m = [a[0] as i64 - b[0] as i64, a[1] as i64 - b[1] as i64, a[2] as i64 - b[2] as i64];
        *cache.entry(m).or_insert_with(|| dense_green(&g, &rho, &sol.twist, m))
    };
    let mut a = nalgebra::DMatrix::<C64>::zeros(n, n);
    let mut rhs = nalgebra::DVector::<C64>::zeros(n);
    for r in 0..n {
        for c in 0..n {
            let gq = green(supp[r], supp[c]) * h3 * q.values[supp[c]].re;
            a[(r, c)] = gq + if r == c { 1.0 } else { 0.0 };
            rhs[r] -= gq;
        }
    }
    let x = a.lu().solve(&rhs).unwrap();
    let num: f64 = (0..n).map(|k| (sol.psi.values[supp[k]] - x[k]).norm_sqr()).sum::<f64>().sqrt();
    let err = num / x.norm();
    assert!(err < 1e-6, "relative error {err:e}");
    assert!(x.norm() > 1e-3);

    let fp = solve_corrector_fixed_point(&q, &rho, 1.0, &opts).unwrap();
    let diff: f64 = (0..n).map(|k| (fp.psi.values[supp[k]] - x[k]).norm_sqr()).sum::<f64>().sqrt();
    assert!(diff / x.norm() < 1e-6);
    assert!(sol.kappa_hat < 1.0);
}

#[test]
fn spectral_residual_of_conjugated_equation() {
    let (g, q, rho) = oracle_case();
    let d = DomainSpec::for_grid(&g, 0.05).unwrap();
    let opts = SolveOptions::default();
    let sol = solve_corrector(&q, &rho, &opts).unwrap();
    assert!(sol.residual < opts.tol);
    let op = FaddeevOperator::with_twist(&g, &rho, &sol.twist);
    let lhs = op.forward(&sol.psi);
    let mut num = 0.0;
    let mut den = 0.0;
    for i in d.interior_indices(&g) {
        let s = q.values[i] * (1.0 + sol.psi.values[i]);
        num += (lhs.values[i] + s).norm_sqr();
        den += s.norm_sqr();
    }
    assert!(num.sqrt() < 10.0 * opts.tol * den.sqrt(), "{} vs {}", num.sqrt(), den.sqrt());
}

#[test]
fn harmonic_exponential_and_traces() {
    let g = GridSpec::new(3, 1.0, 64).unwrap();
    let d = DomainSpec::for_grid(&g, 0.05).unwrap();
    let quad = BoundaryQuadrature::grid_aligned(&g, &d, 4).unwrap();
    let rho = pair_with_magnitude(&[1.0, 0.0, 0.0], 4.0).unwrap().rho1;
    let sol = solve_corrector(&ScalarField::zeros(g), &rho, &SolveOptions::default()).unwrap();
    let f = cgo_field(&sol, &quad).unwrap();
    // eighth-order central Laplacian at the cube center
    let c = [-205.0 / 72.0, 8.0 / 5.0, -1.0 / 5.0, 8.0 / 315.0, -1.0 / 560.0];
    let h = g.spacing();
    let mid = g.nodes / 2;
    let at = |m: [usize; 3]| f.values.values[g.flat(&m)];
    let centre = at([mid; 3]);
    let mut lap = 3.0 * c[0] * centre;
    for axis in 0..3 {
        for k in 1..5 {
            let mut p = [mid; 3];
            let mut m = [mid; 3];
            p[axis] += k;
            m[axis] -= k;
            lap += c[k] * (at(p) + at(m));
        }
    }
    let rel = (lap / (h * h)).norm() / (rho.abs().powi(2) * centre.norm());
    assert!(rel < 1e-8, "relative Laplacian {rel:e}");

    for (k, node) in quad.nodes.iter().enumerate() {
        let expect = rho.exp_at(&node.pos);
        assert!((f.nodal.values[k] - expect).norm() < 1e-12 * expect.norm());
    }
}

#[test]
fn overflow_guard() {
    let g = GridSpec::new(3, 1.0, 32).unwrap();
    let d = DomainSpec::for_grid(&g, 0.05).unwrap();
    let quad = BoundaryQuadrature::grid_aligned(&g, &d, 2).unwrap();
    let rho = pair_with_magnitude(&[0.0, 0.0, 1.0], 2500.0).unwrap().rho1;
    let sol = CgoSolution {
        rho,
        twist: [0.0; 3],
        psi: ScalarField::zeros(g),
        iterations: 0,
        residual: 0.0,
        kappa_hat: 0.0,
    };
    assert!(matches!(cgo_field(&sol, &quad), Err(Error::Overflow(_))));
}

#[test]
fn corrector_is_linear_to_first_order() {
    let (g, q1, rho) = oracle_case();
    let opts = SolveOptions {
        tol: 1e-12,
        ..Default::default()
    };
    let probe = solve_corrector(&q1, &rho, &opts).unwrap();
    let op = FaddeevOperator::with_twist(&g, &rho, &probe.twist);
    let mut born = op.apply(&q1);
    born.scale(C64::new(-1.0, 0.0));
    let dev = |alpha: f64| {
        let mut qa = q1.clone();
        qa.scale(C64::new(alpha, 0.0));
        let s = solve_corrector(&qa, &rho, &opts).unwrap();
        (0..g.len())
            .map(|i| (s.psi.values[i] - alpha * born.values[i]).norm_sqr())
            .sum::<f64>()
            .sqrt()
    };
    let (e1, e2) = (dev(0.1), dev(0.05));
    let ratio = e1 / e2;
    assert!((ratio - 4.0).abs() < 0.4, "second-order ratio {ratio}");
}

#[test]
fn conormal_contraction_at_rho_32() {
    let (g, d) = pipeline();
    let q = sample(&conormal_sphere(20.0), &g, &d);
    let rho = pair_with_magnitude(&[2.0, 0.0, 0.0], 32.0).unwrap().rho1;
    let s = solve_corrector(&q, &rho, &SolveOptions::default()).unwrap();
    assert!(s.kappa_hat < 0.5, "kappa {}", s.kappa_hat);
    assert!(s.iterations <= 30);
}

#[test]
fn decay_rates() {
    let (g, d) = smooth_box();
    let opts = SolveOptions {
        check_resolution: false,
        ..Default::default()
    };
    let mags = [8.0, 16.0, 32.0, 64.0];
    let q = sample(&gaussian(10.0, 0.2, 0.4), &g, &d);
    let st = corrector_decay_study(&q, &d, &schedule([2.0, 0.0, 0.0], &mags), 2.0, &opts).unwrap();
    assert!(st.sigma_hat() >= 0.8, "smooth slope {}", st.slope);

    let (g, d) = pipeline();
    let q = sample(&conormal_sphere(20.0), &g, &d);
    let st = corrector_decay_study(&q, &d, &schedule([2.0, 0.0, 0.0], &mags), 2.0, &SolveOptions::default()).unwrap();
    assert!(st.sigma_hat() > 0.3, "conormal slope {}", st.slope);
    assert!(st.monotone_decreasing());
}

#[test]
fn identity_remainder() {
    let (g, d) = smooth_box();
    let opts = SolveOptions {
        check_resolution: false,
        ..Default::default()
    };
    let q = sample(&gaussian(10.0, 0.2, 0.4), &g, &d);
    let pairs = schedule([2.0, 0.0, 0.0], &[8.0, 16.0, 32.0, 64.0]);
    let same = identity_check(&q, &q, &pairs[..2], &opts).unwrap();
    assert!(same.rows.iter().all(|r| r.remainder_abs == 0.0 && r.discrepancy == 0.0));

    let zero = ScalarField::zeros(g);
    let chk = identity_check(&q, &zero, &pairs, &opts).unwrap();
    for w in chk.rows.windows(2) {
        assert!(w[0].remainder_abs >= 2.0 * w[1].remainder_abs, "{w:?}");
    }
    let direct = C64::new(chk.qhat_direct[0], chk.qhat_direct[1]);
    let last = chk.rows.last().unwrap();
    let rec = C64::new(last.recovered[0], last.recovered[1]);
    assert!((rec - direct).norm() < 0.05 * direct.norm());
}

#[test]
fn identity_discrepancy_tracks_fourier_difference() {
    let (g, d) = pipeline();
    let q1 = sample(&conormal_sphere(5.0), &g, &d);
    let raw = sample(&gaussian(1.0, 0.06, 0.08), &g, &d);
    let mass = |f: &ScalarField| f.values.iter().map(|v| v.re).sum::<f64>();
    let mut q2 = raw.clone();
    q2.scale(C64::new(mass(&q1) / mass(&raw), 0.0));
    let xi = [12.0, 0.0, 0.0];
    let chk = identity_check(&q1, &q2, &schedule(xi, &[16.0, 32.0, 64.0]), &SolveOptions::default()).unwrap();
    let expect = C64::new(chk.qhat_direct[0], chk.qhat_direct[1]).norm();
    let direct = (grid_fourier(&q1, &xi) - grid_fourier(&q2, &xi)).norm();
    assert!((expect - direct).abs() < 1e-12 * direct.max(1.0));
    let last = chk.rows.last().unwrap().discrepancy;
    assert!((last - expect).abs() < 0.05 * expect, "{last} vs {expect}");
}

proptest::proptest! {
    #![proptest_config(proptest::prelude::ProptestConfig::with_cases(8))]
    #[test]
    fn residual_invariant(amp in 1.0f64..40.0, r in 3.0f64..6.0) {
        let g = GridSpec::new(3, 1.0, 16).unwrap();
        let d = DomainSpec::for_grid(&g, 0.05).unwrap();
        let q = sample(&gaussian(amp, 0.2, 0.4), &g, &d);
        let rho = pair_with_magnitude(&[0.5, 0.0, 1.0], r).unwrap().rho1;
        let opts = SolveOptions::default();
        let s = solve_corrector(&q, &rho, &opts).unwrap();
        proptest::prop_assert!(s.residual < opts.tol);
        proptest::prop_assert!(s.kappa_hat >= 0.0);
    }
}
