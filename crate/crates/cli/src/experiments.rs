//! One runner per experiment kind. Each returns its files, plot data and a
//! JSON summary; `run` writes them out.

use nalgebra::DMatrix;
use serde::Serialize;
use serde_json::json;

use clab_core::calderon::{reconstruct, Mode, ReconstructOptions, ReconstructionReport, Source};
use clab_core::cgo::{corrector_decay_study, identity_check};
use clab_core::faddeev::{faddeev_kernel_table, operator_norm_probe, pair_with_magnitude, FrequencyPair};
use clab_core::forward::{cauchy_subspace, CauchySubspace};
use clab_core::grid::boundary::BoundaryQuadrature;
use clab_core::grid::cache::write_field;
use clab_core::grid::{DomainSpec, GridSpec, Point, ScalarField};
use clab_core::potentials::{sample_potential, PotentialSpec};
use clab_core::wall::{
    cauchy_invariance_test, feynman_kac_estimate, interior_decay_study, regularize, solve_regularized,
    EnsembleConfig, WallSpec,
};

use crate::config::{Experiment, ExperimentConfig, InvarianceConfig};
use crate::plot::{error_map, PlotData};
use crate::{sha256_hex, Artifact, Cache, HarnessError, Stages};

type Res<T> = Result<T, HarnessError>;

#[derive(Debug, Default)]
pub struct Outputs {
    pub files: Vec<(String, Vec<u8>)>,
    pub plots: Vec<PlotData>,
    pub summary: serde_json::Value,
    pub cached: Vec<Artifact>,
    /// Items that failed while the rest of the run went on.
    pub failures: Vec<String>,
    pub warnings: Vec<String>,
}

struct Table {
    w: csv::Writer<Vec<u8>>,
}

impl Table {
    fn new(header: &[&str]) -> Self {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header).expect("in-memory write");
        Self { w }
    }

    fn row<I, S>(&mut self, cells: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.w.write_record(cells).expect("in-memory write");
    }

    fn finish(self) -> Vec<u8> {
        self.w.into_inner().expect("in-memory flush")
    }
}

fn num(v: f64) -> String {
    v.to_string()
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn to_json(v: &impl Serialize) -> Vec<u8> {
    serde_json::to_vec(v).expect("serializes")
}

fn potential(cfg: &ExperimentConfig, domain: &DomainSpec) -> Res<ScalarField> {
    let spec = cfg
        .potential
        .as_ref()
        .ok_or_else(|| HarnessError::Validation(format!("potential: required for {}", cfg.experiment.kind())))?;
    sample(spec, &cfg.grid, domain)
}

fn sample(spec: &PotentialSpec, grid: &GridSpec, domain: &DomainSpec) -> Res<ScalarField> {
    Ok(sample_potential(spec, grid, domain)?.0)
}

fn pairs(xi: &Point, rho_abs: &[f64]) -> Res<Vec<FrequencyPair>> {
    rho_abs
        .iter()
        .map(|&r| pair_with_magnitude(xi, r).map_err(HarnessError::from))
        .collect()
}

pub fn dispatch(cfg: &ExperimentConfig, cache: &Cache, stages: &mut Stages) -> Res<Outputs> {
    let domain = cfg.domain_spec()?;
    match &cfg.experiment {
        Experiment::FaddeevProbe {
            xi,
            rho_abs,
            trials,
            power_steps,
            kernel_tables,
        } => faddeev_probe(cfg, cache, stages, &domain, xi, rho_abs, *trials, *power_steps, *kernel_tables),
        Experiment::CgoDecay { xi, rho_abs, p } => cgo_decay(cfg, stages, &domain, xi, rho_abs, *p),
        Experiment::IdentityCheck { xi, rho_abs, q2 } => identity(cfg, stages, &domain, xi, rho_abs, q2.as_ref()),
        Experiment::ForwardDtn { energy } => forward_dtn(cfg, cache, stages, &domain, *energy),
        Experiment::Reconstruct { .. } => reconstruction(cfg, cache, stages, &domain),
        Experiment::WallDemo {
            wall,
            n_list,
            datum,
            invariance,
        } => wall_demo(cfg, stages, &domain, &wall.spec(cfg.grid.dim), n_list, *datum, invariance.as_ref()),
        Experiment::FkCompare { .. } => fk_compare(cfg, stages, &domain),
    }
}

#[allow(clippy::too_many_arguments)]
fn faddeev_probe(
    cfg: &ExperimentConfig,
    cache: &Cache,
    stages: &mut Stages,
    domain: &DomainSpec,
    xi: &Point,
    rho_abs: &[f64],
    trials: usize,
    power_steps: usize,
    kernel_tables: bool,
) -> Res<Outputs> {
    let seed = cfg.seed.expect("validated");
    let probe = stages.time("norm_probe", || {
        operator_norm_probe(&cfg.grid, domain, xi, rho_abs, trials, power_steps, seed)
    })?;
    let mut out = Outputs::default();
    let mut t = Table::new(&["rho_abs", "norm_est", "char_count"]);
    let mut plot = PlotData::new("norm_decay", &["rho_abs", "norm_est"]).comment("L2 operator norm estimates");
    for r in &probe.rows {
        t.row([num(r.rho_abs), num(r.norm_est), r.char_count.to_string()]);
        plot.push(vec![r.rho_abs, r.norm_est]);
        if r.char_count > 0 {
            out.warnings
                .push(format!("|rho| = {}: a lattice point sits near the characteristic set", r.rho_abs));
        }
    }
    out.files.push(("norm_probe.csv".into(), t.finish()));
    out.plots.push(plot);
    if kernel_tables {
        let grid = cfg.grid;
        stages.time("kernel_tables", || -> Res<()> {
            for &r in rho_abs {
                let pair = pair_with_magnitude(xi, r)?;
                let key = Cache::key("kernel", &[&to_json(&grid), &to_json(&pair.rho1)]);
                let (_, art) = cache.get_or_insert(&key, || {
                    let mut bytes = Vec::new();
                    write_field(&mut bytes, &faddeev_kernel_table(&grid, &pair.rho1).as_field())?;
                    Ok(bytes)
                })?;
                out.cached.push(art);
            }
            Ok(())
        })?;
    }
    out.summary = json!({ "slope": probe.slope, "seed": seed });
    Ok(out)
}

fn cgo_decay(
    cfg: &ExperimentConfig,
    stages: &mut Stages,
    domain: &DomainSpec,
    xi: &Point,
    rho_abs: &[f64],
    p: f64,
) -> Res<Outputs> {
    let q = potential(cfg, domain)?;
    let pairs = pairs(xi, rho_abs)?;
    let opts = cfg.solver.corrector();
    let study = stages.time("correctors", || corrector_decay_study(&q, domain, &pairs, p, &opts))?;
    let mut out = Outputs::default();
    let mut t = Table::new(&["rho_abs", "psi_l2", "psi_lp", "kappa_hat", "iters", "remainder_abs", "error"]);
    let mut plot = PlotData::new("corrector_decay", &["rho_abs", "psi_l2", "kappa_hat"]);
    for r in &study.rows {
        t.row([
            num(r.rho_abs),
            num(r.psi_l2),
            num(r.psi_lp),
            num(r.kappa_hat),
            r.iters.to_string(),
            num(r.remainder_abs),
            r.error.clone().unwrap_or_default(),
        ]);
        match &r.error {
            Some(e) => out.failures.push(format!("|rho| = {}: {e}", r.rho_abs)),
            None => plot.push(vec![r.rho_abs, r.psi_l2, r.kappa_hat]),
        }
        if r.kappa_hat >= 1.0 {
            out.warnings
                .push(format!("|rho| = {}: contraction estimate {:.3} is not below 1", r.rho_abs, r.kappa_hat));
        }
    }
    out.files.push(("cgo_decay.csv".into(), t.finish()));
    out.plots.push(plot);
    out.summary = json!({
        "slope": study.slope,
        "sigma_hat": study.sigma_hat(),
        "monotone": study.monotone_decreasing(),
    });
    Ok(out)
}

fn identity(
    cfg: &ExperimentConfig,
    stages: &mut Stages,
    domain: &DomainSpec,
    xi: &Point,
    rho_abs: &[f64],
    q2: Option<&PotentialSpec>,
) -> Res<Outputs> {
    let q1 = potential(cfg, domain)?;
    let q2 = match q2 {
        Some(s) => sample(s, &cfg.grid, domain)?,
        None => ScalarField::zeros(cfg.grid),
    };
    let pairs = pairs(xi, rho_abs)?;
    let opts = cfg.solver.corrector();
    let check = stages.time("identity", || identity_check(&q1, &q2, &pairs, &opts))?;
    let mut t = Table::new(&[
        "rho_abs",
        "remainder_re",
        "remainder_im",
        "remainder_abs",
        "recovered_re",
        "recovered_im",
        "discrepancy",
        "kappa_1",
        "kappa_2",
    ]);
    let mut plot = PlotData::new("identity_remainder", &["rho_abs", "remainder_abs"]);
    for r in &check.rows {
        t.row([
            num(r.rho_abs),
            num(r.remainder[0]),
            num(r.remainder[1]),
            num(r.remainder_abs),
            num(r.recovered[0]),
            num(r.recovered[1]),
            num(r.discrepancy),
            num(r.kappa_hat[0]),
            num(r.kappa_hat[1]),
        ]);
        plot.push(vec![r.rho_abs, r.remainder_abs]);
    }
    Ok(Outputs {
        files: vec![("identity_check.csv".into(), t.finish())],
        plots: vec![plot],
        summary: json!({ "xi": check.xi, "qhat_direct": check.qhat_direct }),
        ..Default::default()
    })
}

fn matrix_bytes(m: &DMatrix<f64>) -> Vec<u8> {
    let mut b = Vec::with_capacity(16 + 8 * m.len());
    b.extend_from_slice(&(m.nrows() as u64).to_le_bytes());
    b.extend_from_slice(&(m.ncols() as u64).to_le_bytes());
    for v in m.iter() {
        b.extend_from_slice(&v.to_le_bytes());
    }
    b
}

fn matrix_from_bytes(b: &[u8]) -> Res<DMatrix<f64>> {
    let bad = || HarnessError::Numerical("corrupt cached matrix".into());
    let word = |i: usize| -> Res<[u8; 8]> { b.get(8 * i..8 * i + 8).and_then(|s| s.try_into().ok()).ok_or_else(bad) };
    let (r, c) = (u64::from_le_bytes(word(0)?) as usize, u64::from_le_bytes(word(1)?) as usize);
    if b.len() != 16 + 8 * r * c {
        return Err(bad());
    }
    let vals: Res<Vec<f64>> = (0..r * c).map(|k| Ok(f64::from_le_bytes(word(2 + k)?))).collect();
    Ok(DMatrix::from_vec(r, c, vals?))
}

/// Cauchy data `[I; Lambda]` of `q`, computed once per potential and solver
/// setting and kept in the cache.
fn cached_cauchy(
    cfg: &ExperimentConfig,
    cache: &Cache,
    stages: &mut Stages,
    q: &ScalarField,
    domain: &DomainSpec,
    energy: f64,
) -> Res<(CauchySubspace, Artifact)> {
    let fwd = cfg.solver.forward();
    let mut qb = Vec::with_capacity(8 * q.values.len());
    for v in &q.values {
        qb.extend_from_slice(&v.re.to_le_bytes());
    }
    let q_hash = sha256_hex(&qb);
    let setting = json!({
        "grid": cfg.grid,
        "domain": [domain.half_width, domain.collar],
        "energy": energy,
        "degree": fwd.degree,
        "tol": fwd.tol,
    });
    let key = Cache::key("cauchy", &[q_hash.as_bytes(), &to_json(&setting)]);
    let (bytes, art) = stages.time("cauchy_data", || {
        cache.get_or_insert(&key, || Ok(matrix_bytes(&cauchy_subspace(q, domain, energy, fwd)?.c)))
    })?;
    let cd = CauchySubspace {
        c: matrix_from_bytes(&bytes)?,
        q_hash,
        energy,
        grid: cfg.grid,
        degree: fwd.degree,
    };
    Ok((cd, art))
}

fn forward_dtn(
    cfg: &ExperimentConfig,
    cache: &Cache,
    stages: &mut Stages,
    domain: &DomainSpec,
    energy: f64,
) -> Res<Outputs> {
    let q = potential(cfg, domain)?;
    let (cd, art) = cached_cauchy(cfg, cache, stages, &q, domain, energy)?;
    let m = cd.basis_len();
    let dtn = cd.c.rows(m, m).into_owned();
    let header: Vec<String> = (0..m).map(|j| format!("col{j}")).collect();
    let mut t = Table::new(&header.iter().map(String::as_str).collect::<Vec<_>>());
    for i in 0..m {
        t.row((0..m).map(|j| num(dtn[(i, j)])));
    }
    let sv: Vec<f64> = dtn.clone().singular_values().iter().cloned().collect();
    let mut plot = PlotData::new("dtn_singular_values", &["index", "sigma"]);
    for (k, s) in sv.iter().enumerate() {
        plot.push(vec![k as f64, *s]);
    }
    let asym = (&dtn - dtn.transpose()).norm() / dtn.norm().max(f64::MIN_POSITIVE);
    let mut out = Outputs {
        files: vec![("dtn.csv".into(), t.finish())],
        plots: vec![plot],
        summary: json!({
            "basis_len": m,
            "q_hash": cd.q_hash,
            "asymmetry": asym,
            "sigma_max": sv.first(),
            "sigma_min": sv.last(),
        }),
        cached: vec![art],
        ..Default::default()
    };
    if asym > 1e-6 {
        out.warnings.push(format!("DtN asymmetry {asym:.2e}"));
    }
    Ok(out)
}

fn reconstruction(cfg: &ExperimentConfig, cache: &Cache, stages: &mut Stages, domain: &DomainSpec) -> Res<Outputs> {
    let Experiment::Reconstruct {
        mode,
        xi_max,
        xi_step,
        betas,
        kernel_sources,
        field,
    } = &cfg.experiment
    else {
        unreachable!()
    };
    let q = potential(cfg, domain)?;
    let base = match mode {
        Mode::Oracle => ReconstructOptions::default(),
        Mode::Blind => ReconstructOptions::blind(),
    };
    let opts = ReconstructOptions {
        mode: *mode,
        xi_max: *xi_max,
        xi_step: *xi_step,
        betas: betas.clone().unwrap_or(base.betas),
        kernel_sources: *kernel_sources,
        solve: cfg.solver.corrector(),
        field: *field,
    };
    let quad = BoundaryQuadrature::grid_aligned(&cfg.grid, domain, cfg.solver.degree)?;
    let mut out = Outputs::default();
    let report = match mode {
        Mode::Oracle => stages.time("reconstruct", || reconstruct(Source::Potential(&q), &quad, &opts))?,
        Mode::Blind => {
            let (cd, art) = cached_cauchy(cfg, cache, stages, &q, domain, 0.0)?;
            out.cached.push(art);
            let src = Source::Data { cd: &cd, truth: Some(&q) };
            stages.time("reconstruct", || reconstruct(src, &quad, &opts))?
        }
    };
    write_report(&report, domain, &mut out);
    Ok(out)
}

fn write_report(report: &ReconstructionReport, domain: &DomainSpec, out: &mut Outputs) {
    let mut t = Table::new(&[
        "xi1", "xi2", "xi3", "beta", "qhat_re", "qhat_im", "qhat_true_re", "qhat_true_im", "rel_err", "diag",
    ]);
    let mut x = Table::new(&["xi1", "xi2", "xi3", "extrap_re", "extrap_im", "rel_err", "pairing_defect", "error"]);
    for row in &report.rows {
        let xi = row.xi.map(num);
        let errs = row.raw_errors();
        for (k, beta) in row.betas.iter().enumerate() {
            let Some(qh) = row.qhat.get(k) else { break };
            let truth = row.qhat_true;
            t.row([
                xi[0].clone(),
                xi[1].clone(),
                xi[2].clone(),
                num(*beta),
                num(qh.re),
                num(qh.im),
                opt(truth.map(|z| z.re)),
                opt(truth.map(|z| z.im)),
                opt(errs.get(k).copied()),
                opt(row.diag.get(k).copied()),
            ]);
        }
        x.row([
            xi[0].clone(),
            xi[1].clone(),
            xi[2].clone(),
            num(row.extrapolated.re),
            num(row.extrapolated.im),
            opt(row.rel_err),
            num(row.pairing_defect),
            row.error.clone().unwrap_or_default(),
        ]);
        if let Some(e) = &row.error {
            out.failures.push(format!("xi = {:?}: {e}", row.xi));
        }
    }
    out.files.push(("reconstruct.csv".into(), t.finish()));
    out.files.push(("reconstruct_extrapolated.csv".into(), x.finish()));
    if let (Some(f), Some(tf)) = (&report.field, &report.truth_field) {
        let diff = ScalarField {
            grid: f.grid,
            values: f.values.iter().zip(&tf.values).map(|(a, b)| a - b).collect(),
        };
        out.plots.push(error_map("field_error", &diff, domain));
        out.plots.push(error_map("field", f, domain));
    }
    out.summary = json!({
        "mode": report.mode,
        "rows": report.rows.len(),
        "median_rel_err": report.median_rel_err(),
        "correlation": report.correlation,
    });
}

fn wall_demo(
    cfg: &ExperimentConfig,
    stages: &mut Stages,
    domain: &DomainSpec,
    spec: &WallSpec,
    n_list: &[usize],
    datum: crate::Datum,
    invariance: Option<&InvarianceConfig>,
) -> Res<Outputs> {
    let f = move |x: &Point| datum.eval(x);
    let opts = cfg.solver.forward();
    let study = stages.time("interior_decay", || {
        interior_decay_study(spec, n_list, f, &cfg.grid, domain, opts)
    })?;
    let mut out = Outputs::default();
    let mut t = Table::new(&["n", "sup_norm", "sup_exterior", "G_value", "G_comparator", "bound_shape"]);
    let mut plot = PlotData::new("interior_decay", &["n", "sup_norm", "bound_shape"])
        .comment(format!("mu = {}, c1 = {}", spec.mu, spec.c1));
    for r in &study.rows {
        t.row([
            r.n.to_string(),
            num(r.sup_inner),
            num(r.sup_outer),
            num(r.functional),
            num(r.comparator),
            num(r.bound_shape),
        ]);
        plot.push(vec![r.n as f64, r.sup_inner, r.bound_shape]);
    }
    out.files.push(("wall_decay.csv".into(), t.finish()));
    out.plots.push(plot);
    let bound = datum.sup_bound(domain.half_width);
    for r in &study.rows {
        if r.sup_outer > bound * (1.0 + 1e-9) {
            out.warnings
                .push(format!("n = {}: exterior sup {:.4} exceeds the datum bound {bound:.4}", r.n, r.sup_outer));
        }
    }
    let mut summary = json!({ "fit": study.fit });
    if let Some(inv) = invariance {
        let zero = PotentialSpec::Zero;
        let qa = sample(inv.a.as_ref().unwrap_or(&zero), &cfg.grid, domain)?;
        let qb = sample(&inv.b, &cfg.grid, domain)?;
        let rows = stages.time("invariance", || {
            cauchy_invariance_test(spec, &qa, &qb, &inv.n_list, domain, opts)
        })?;
        let contrast = match inv.contrast_mu {
            Some(mu) => {
                let mild = WallSpec { mu, ..*spec };
                Some(stages.time("invariance_contrast", || {
                    cauchy_invariance_test(&mild, &qa, &qb, &inv.n_list, domain, opts)
                })?)
            }
            None => None,
        };
        let mut t = Table::new(&["n", "divergence", "contrast_divergence", "note"]);
        for (k, r) in rows.iter().enumerate() {
            let c = contrast.as_ref().and_then(|c| c.get(k));
            let mut note = r.note.clone().unwrap_or_default();
            if let Some(cn) = c.and_then(|c| c.note.as_ref()) {
                note = if note.is_empty() { format!("contrast: {cn}") } else { format!("{note}; contrast: {cn}") };
            }
            t.row([r.n.to_string(), opt(r.divergence), opt(c.and_then(|c| c.divergence)), note.clone()]);
            if r.divergence.is_none() {
                out.failures.push(format!("invariance n = {}: {note}", r.n));
            }
        }
        out.files.push(("wall_invariance.csv".into(), t.finish()));
        summary["invariance_last"] = json!(rows.last().and_then(|r| r.divergence));
        summary["contrast_last"] = json!(contrast.and_then(|c| c.last().and_then(|r| r.divergence)));
    }
    out.summary = summary;
    Ok(out)
}

/// Multilinear interpolation of the real part of `u` at `x`.
pub fn interpolate(u: &ScalarField, x: &Point) -> f64 {
    let g = u.grid;
    let h = g.spacing();
    let mut base = [0usize; 3];
    let mut frac = [0.0; 3];
    for d in 0..g.dim {
        let s = (x[d] + g.half_period) / h;
        let i = (s.floor() as usize).min(g.nodes - 2);
        base[d] = i;
        frac[d] = s - i as f64;
    }
    let mut acc = 0.0;
    for corner in 0..(1usize << g.dim) {
        let mut idx = base;
        let mut w = 1.0;
        for d in 0..g.dim {
            let bit = (corner >> d) & 1;
            idx[d] += bit;
            w *= if bit == 1 { frac[d] } else { 1.0 - frac[d] };
        }
        if w != 0.0 {
            acc += w * u.values[g.flat(&idx)].re;
        }
    }
    acc
}

fn fk_compare(cfg: &ExperimentConfig, stages: &mut Stages, domain: &DomainSpec) -> Res<Outputs> {
    let Experiment::FkCompare {
        wall,
        n,
        points,
        paths,
        dt,
        datum,
        fd_tolerance,
    } = &cfg.experiment
    else {
        unreachable!()
    };
    let grid = cfg.grid;
    let spec = wall.spec(grid.dim);
    let datum = *datum;
    let f = move |x: &Point| datum.eval(x);
    let seed = cfg.seed.expect("validated");
    let ens = match dt {
        Some(dt) => EnsembleConfig::with_dt(grid.dim, domain, *paths, *dt, seed),
        None => EnsembleConfig::for_grid(&grid, domain, *paths, seed),
    };
    let opts = cfg.solver.forward();
    let reg = regularize(&spec, *n, &grid, domain)?;
    let fd = stages.time("fd_solve", || solve_regularized(&reg, domain, f, opts))?;
    let coarse = if *fd_tolerance {
        let g2 = GridSpec::new(grid.dim, grid.half_period, grid.nodes / 2)?;
        let d2 = DomainSpec::new(&g2, domain.half_width, domain.collar)?;
        let r2 = regularize(&spec, *n, &g2, &d2)?;
        Some(stages.time("fd_solve_coarse", || solve_regularized(&r2, &d2, f, opts))?)
    } else {
        None
    };
    let mut out = Outputs::default();
    let mut t = Table::new(&[
        "x1", "x2", "x3", "fk_mean", "fk_stderr", "fd_value", "fd_tol", "z_score", "used", "capped", "absorbed",
        "hit_fraction",
    ]);
    let mut plot = PlotData::new("fk_vs_fd", &["point", "fk_mean", "fk_stderr", "fd_value"]);
    let mut agree = 0;
    for (k, x) in points.iter().enumerate() {
        let est = stages.time("paths", || feynman_kac_estimate(x, &reg, f, domain, &ens))?;
        let fdv = interpolate(&fd.u, x);
        let tol = coarse.as_ref().map(|c| (interpolate(&c.u, x) - fdv).abs());
        let z = (est.mean - fdv).abs() / est.stderr.max(f64::MIN_POSITIVE);
        if (est.mean - fdv).abs() <= 3.0 * est.stderr + tol.unwrap_or(0.0) {
            agree += 1;
        }
        if let Some(w) = &est.warning {
            out.warnings.push(format!("point {x:?}: {w}"));
        }
        t.row([
            num(x[0]),
            num(x[1]),
            num(x[2]),
            num(est.mean),
            num(est.stderr),
            num(fdv),
            opt(tol),
            num(z),
            est.used.to_string(),
            est.capped.to_string(),
            est.absorbed.to_string(),
            num(est.hit_fraction),
        ]);
        plot.push(vec![k as f64, est.mean, est.stderr, fdv]);
    }
    out.files.push(("fk_compare.csv".into(), t.finish()));
    out.plots.push(plot);
    out.summary = json!({
        "points": points.len(),
        "agree_within_3_sigma_plus_fd_tol": agree,
        "dt": ens.dt,
        "seed": seed,
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_round_trip() {
        let m = DMatrix::from_fn(3, 2, |i, j| i as f64 - 0.5 * j as f64);
        assert_eq!(matrix_from_bytes(&matrix_bytes(&m)).unwrap(), m);
        assert!(matrix_from_bytes(&matrix_bytes(&m)[..20]).is_err());
    }

    #[test]
    fn interpolation_is_exact_for_multilinear_fields() {
        let g = GridSpec::new(3, 1.0, 16).unwrap();
        let u = ScalarField::from_real_fn(g, |x| 1.0 + x[0] - 2.0 * x[1] + 0.5 * x[2] + x[0] * x[1]);
        for x in [[0.03, -0.21, 0.4], [0.125, 0.25, -0.5], [-0.9, 0.77, 0.0]] {
            let want = 1.0 + x[0] - 2.0 * x[1] + 0.5 * x[2] + x[0] * x[1];
            assert!((interpolate(&u, &x) - want).abs() < 1e-12);
        }
    }
}
