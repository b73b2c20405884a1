use super::*;
use crate::potentials::{sample_potential, sample_potential_with, Sampling, ConormalPotentialSpec, GaussianSpec, PotentialSpec, Submanifold, Window};
use proptest::prelude::*;

fn cube(n: usize) -> (GridSpec, DomainSpec) {
    let g = GridSpec::new(3, 0.25, n).unwrap();
    let d = DomainSpec::for_grid(&g, 0.02).unwrap();
    (g, d)
}

fn conormal(scale: f64) -> PotentialSpec {
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

fn bump(amplitude: f64) -> PotentialSpec {
    PotentialSpec::Gaussian(GaussianSpec {
        center: [0.01, -0.02, 0.0],
        width: 0.04,
        amplitude,
        support: 0.08,
    })
}

fn sample(spec: &PotentialSpec, g: &GridSpec, d: &DomainSpec) -> ScalarField {
    sample_potential(spec, g, d).unwrap().0
}

fn problem(q: &ScalarField, d: &DomainSpec, e: f64) -> ForwardProblem {
    ForwardProblem::new(q, d, e, ForwardOptions::default()).unwrap()
}

fn zero_problem(n: usize) -> ForwardProblem {
    let (g, d) = cube(n);
    problem(&ScalarField::zeros(g), &d, 0.0)
}

fn rel_asym(lam: &DMatrix<f64>) -> f64 {
    (lam - lam.transpose()).norm() / lam.norm()
}

#[test]
fn linear_and_quadratic_data_are_reproduced() {
    let fp = zero_problem(24);
    let g = fp.grid;
    for f in [
        (|p: &Point| p[0]) as fn(&Point) -> f64,
        |p: &Point| p[0] * p[0] - p[1] * p[1],
    ] {
        let s = fp.solve_with(|p| C64::new(f(p), 0.0)).unwrap();
        assert!(s.residual < 1e-10);
        let d = fp.domain;
        let mut err: f64 = 0.0;
        for i in 0..g.len() {
            let p = g.point(i);
            if d.contains(&p, 3) {
                err = err.max((s.u.values[i].re - f(&p)).abs());
            }
        }
        assert!(err < 1e-10, "max error {err}");
    }
}

#[test]
fn dtn_maps_linear_trace_to_normal_component() {
    let fp = zero_problem(24);
    let quad = &fp.quad;
    let x1: Vec<C64> = quad.nodes.iter().map(|n| C64::new(n.pos[0], 0.0)).collect();
    let n1: Vec<C64> = quad.nodes.iter().map(|n| C64::new(n.normal[0], 0.0)).collect();
    let c = quad.project(&x1);
    let expect = quad.project(&n1);
    let lam = fp.dtn_matrix().unwrap();
    let m = fp.basis_len();
    for i in 0..m {
        let got: f64 = (0..m).map(|j| lam[(i, j)] * c[j].re).sum();
        assert!((got - expect[i].re).abs() < 1e-6, "row {i}: {got} vs {}", expect[i].re);
    }
}

#[test]
fn dtn_is_symmetric_for_real_potentials() {
    let (g, d) = cube(24);
    let q = sample(&conormal(20.0), &g, &d);
    let fp = problem(&q, &d, 3.0);
    let lam = fp.dtn_matrix().unwrap();
    assert!(rel_asym(&lam) < 1e-4, "asymmetry {}", rel_asym(&lam));
}

#[test]
fn green_reciprocity_for_random_data() {
    let (g, d) = cube(24);
    let q = sample(&bump(200.0), &g, &d);
    let fp = problem(&q, &d, 0.0);
    let quad = &fp.quad;
    let m = fp.basis_len();
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(3);
    let mut random = || -> Vec<C64> {
        (0..m)
            .map(|_| C64::new(rand::Rng::random_range(&mut rng, -1.0..1.0), 0.0))
            .collect()
    };
    for _ in 0..3 {
        let (f, h) = (random(), random());
        let pf = fp.cauchy_pair(&f).unwrap();
        let ph = fp.cauchy_pair(&h).unwrap();
        let lf = quad.synthesize(&pf.neumann);
        let lh = quad.synthesize(&ph.neumann);
        let a = quad.pairing(&lf, &quad.synthesize(&h));
        let b = quad.pairing(&quad.synthesize(&f), &lh);
        assert!((a - b).norm() / a.norm() < 1e-4, "{a} vs {b}");
    }
}

#[test]
fn dtn_shift_is_linear_in_small_constant_potential() {
    let (g, d) = cube(24);
    let zero = problem(&ScalarField::zeros(g), &d, 0.0).dtn_matrix().unwrap();
    let mut shifts = Vec::new();
    for c in [1.0, 2.0, 4.0] {
        let q = ScalarField::from_real_fn(g, |p| if d.contains(p, 3) { -c } else { 0.0 });
        let lam = problem(&q, &d, 0.0).dtn_matrix().unwrap();
        shifts.push((&lam - &zero).norm());
    }
    let r1 = shifts[1] / shifts[0];
    let r2 = shifts[2] / shifts[1];
    assert!((r1 - 2.0).abs() < 0.05 && (r2 - 2.0).abs() < 0.05, "ratios {r1} {r2}");
    // q = -c makes the Dirichlet form larger, so the map increases
    let q = ScalarField::from_real_fn(g, |p| if d.contains(p, 3) { -1.0 } else { 0.0 });
    let lam = problem(&q, &d, 0.0).dtn_matrix().unwrap();
    let diff = &lam - &zero;
    assert!((0..diff.nrows()).all(|i| diff[(i, i)] > 0.0));
}

#[test]
fn cauchy_subspace_is_a_graph_of_full_rank() {
    let fp = zero_problem(24);
    let m = fp.basis_len();
    let cs = fp.cauchy_subspace().unwrap();
    let lam = fp.dtn_matrix().unwrap();
    assert_eq!(cs.c.nrows(), 2 * m);
    let top = cs.c.rows(0, m);
    let bottom = cs.c.rows(m, m);
    assert!((top - DMatrix::<f64>::identity(m, m)).amax() < 1e-12);
    assert!((bottom - &lam * top).amax() < 1e-9 * lam.amax());
    assert_eq!(cs.rank(1e-8), m);
    assert!(cs.c.iter().all(|v| v.is_finite()));
}

#[test]
fn reordering_the_basis_permutes_columns() {
    let fp = zero_problem(24);
    let m = fp.basis_len();
    let order: Vec<usize> = (0..m).rev().collect();
    let data: Vec<Vec<C64>> = order.iter().map(|&j| unit(m, j)).collect();
    let cs = fp.cauchy_subspace().unwrap();
    let perm = fp.cauchy_subspace_for(&data).unwrap();
    for (k, &j) in order.iter().enumerate() {
        assert!((perm.c.column(k) - cs.c.column(j)).amax() < 1e-12);
    }
}

#[test]
fn multilinear_block_converges_at_second_order() {
    let blocks: Vec<DMatrix<f64>> = [24, 48, 96]
        .iter()
        .map(|&n| {
            let fp = zero_problem(n);
            let k = fp.quad.basis.multilinear_len();
            let data: Vec<Vec<C64>> = (0..k).map(|j| unit(fp.basis_len(), j)).collect();
            let cs = fp.cauchy_subspace_for(&data).unwrap();
            let m = fp.basis_len();
            cs.c.view((m, 0), (k, k)).into_owned()
        })
        .collect();
    let e1 = (&blocks[0] - &blocks[1]).norm();
    let e2 = (&blocks[1] - &blocks[2]).norm();
    let order = (e1 / e2).log2();
    assert!(order > 1.8, "order {order} ({e1:.3e}, {e2:.3e})");
}

#[test]
fn conormal_solution_self_converges() {
    // layer on the disk z = 0, |x| < 0.09
    let spec = PotentialSpec::Conormal(ConormalPotentialSpec {
        manifold: Submanifold::FlatPatch { codim: 1 },
        nu: 0.8,
        amplitude: Window {
            center: [0.0; 3],
            widths: [0.09; 3],
            scale: 2.0,
        },
        cap: 1e9,
    });
    let datum = |p: &Point| C64::new(1.0 + p[0] - 0.5 * p[1] * p[2], 0.0);
    let levels = [24, 48, 96, 192];
    let sols: Vec<(GridSpec, ScalarField)> = levels
        .iter()
        .map(|&n| {
            let (g, d) = cube(n);
            let q = sample_potential_with(&spec, &g, &d, Sampling::NormalAverage).unwrap().0;
            (g, problem(&q, &d, 0.0).solve_with(datum).unwrap().u)
        })
        .collect();
    let g0 = sols[0].0;
    let d0 = DomainSpec::for_grid(&g0, 0.02).unwrap();
    let mut diffs = [0.0f64; 3];
    for i in 0..g0.len() {
        if !d0.contains(&g0.point(i), 3) {
            continue;
        }
        let m = g0.multi(i);
        let v: Vec<f64> = sols
            .iter()
            .map(|(g, u)| {
                let r = g.nodes / g0.nodes;
                u.values[g.flat(&[m[0] * r, m[1] * r, m[2] * r])].re
            })
            .collect();
        for k in 0..3 {
            diffs[k] += (v[k] - v[k + 1]).powi(2);
        }
    }
    // least-squares slope of log2 of successive differences
    let y: Vec<f64> = diffs.iter().map(|d| 0.5 * d.log2()).collect();
    let order = -(y[2] - y[0]) / 2.0;
    assert!(order >= 1.0, "order {order} from {diffs:?}");
}

#[test]
fn near_eigenvalue_is_detected() {
    let (g, d) = cube(24);
    let c = d.cells(&g) as f64;
    let h = g.spacing();
    let lambda1 = 3.0 * 4.0 / (h * h) * (std::f64::consts::PI / (2.0 * c)).sin().powi(2);
    let err = ForwardProblem::new(&ScalarField::zeros(g), &d, lambda1, ForwardOptions::default()).unwrap_err();
    assert!(matches!(err, Error::NearEigenvalue { .. }), "{err:?}");
    // away from the spectrum the shifted problem is indefinite but solvable
    let fp = problem(&ScalarField::zeros(g), &d, 1.5 * lambda1);
    let s = fp.solve_with(|p| C64::new(p[0], 0.0)).unwrap();
    assert!(s.residual < 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]
    #[test]
    fn dirichlet_residual_below_tolerance(amp in 10.0f64..300.0, e in -20.0f64..20.0, j in 0usize..98) {
        let (g, d) = cube(32);
        let q = sample(&bump(amp), &g, &d);
        let fp = ForwardProblem::new(&q, &d, e, ForwardOptions { degree: 4, ..Default::default() }).unwrap();
        let s = fp.solve_dirichlet(&unit(fp.basis_len(), j)).unwrap();
        prop_assert!(s.residual < 1e-10);
        prop_assert!(s.u.values.iter().all(|v| v.re.is_finite()));
    }
}
