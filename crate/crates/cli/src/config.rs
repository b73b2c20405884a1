//! JSON experiment configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use clab_core::calderon::Mode;
use clab_core::cgo::SolveOptions;
use clab_core::forward::ForwardOptions;
use clab_core::grid::{DomainSpec, GridSpec, Point};
use clab_core::potentials::{validate_exponents, ExponentBundle, PotentialSpec};
use clab_core::wall::{Sphere, WallSpec};

use crate::HarnessError;

/// Experiment kinds accepted by `run`.
pub const KINDS: [&str; 7] = [
    "faddeev-probe",
    "cgo-decay",
    "identity-check",
    "forward-dtn",
    "reconstruct",
    "wall-demo",
    "fk-compare",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub grid: GridSpec,
    #[serde(default)]
    pub domain: DomainConfig,
    #[serde(default)]
    pub potential: Option<PotentialSpec>,
    #[serde(default)]
    pub exponents: Option<ExponentBundle>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub seed: Option<u64>,
    pub output: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    /// Cube half-width; `L/2` when absent.
    #[serde(default)]
    pub half_width: Option<f64>,
    pub collar: f64,
}

impl Default for DomainConfig {
    fn default() -> Self {
        Self {
            half_width: None,
            collar: 0.02,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub restart: usize,
    pub power_steps: usize,
    pub check_resolution: bool,
    pub forward_tol: f64,
    pub degree: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let s = SolveOptions::default();
        let f = ForwardOptions::default();
        Self {
            tol: s.tol,
            max_iter: s.max_iter,
            restart: s.restart,
            power_steps: 4,
            check_resolution: s.check_resolution,
            forward_tol: f.tol,
            degree: f.degree,
        }
    }
}

impl SolverConfig {
    pub fn corrector(&self) -> SolveOptions {
        SolveOptions {
            tol: self.tol,
            max_iter: self.max_iter,
            restart: self.restart,
            power_steps: self.power_steps,
            check_resolution: self.check_resolution,
        }
    }

    pub fn forward(&self) -> ForwardOptions {
        ForwardOptions {
            tol: self.forward_tol,
            degree: self.degree,
            ..Default::default()
        }
    }
}

/// Boundary datum `offset + slope . x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Datum {
    pub offset: f64,
    #[serde(default)]
    pub slope: Point,
}

impl Default for Datum {
    fn default() -> Self {
        Self {
            offset: 1.0,
            slope: [0.5, 0.0, 0.0],
        }
    }
}

impl Datum {
    pub fn eval(&self, x: &Point) -> f64 {
        self.offset + self.slope[0] * x[0] + self.slope[1] * x[1] + self.slope[2] * x[2]
    }

    pub fn sup_bound(&self, a: f64) -> f64 {
        self.offset.abs() + a * (self.slope[0].abs() + self.slope[1].abs() + self.slope[2].abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WallConfig {
    #[serde(default)]
    pub center: Point,
    pub radius: f64,
    pub mu: f64,
    #[serde(default = "one")]
    pub c0: f64,
    pub c1: f64,
    #[serde(default)]
    pub collar: Option<f64>,
    #[serde(default)]
    pub energy: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for WallConfig {
    fn default() -> Self {
        Self {
            center: [0.0; 3],
            radius: 0.25,
            mu: -3.0,
            c0: 1.0,
            c1: 0.5,
            collar: None,
            energy: 0.0,
        }
    }
}

impl WallConfig {
    pub fn spec(&self, dim: usize) -> WallSpec {
        WallSpec {
            dim,
            surface: Sphere {
                center: self.center,
                radius: self.radius,
            },
            mu: self.mu,
            c0: self.c0,
            collar: self.collar,
            c1: self.c1,
            energy: self.energy,
        }
    }
}

/// Inner potentials for the Cauchy-data comparison; `a` defaults to zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InvarianceConfig {
    #[serde(default)]
    pub a: Option<PotentialSpec>,
    pub b: PotentialSpec,
    pub n_list: Vec<usize>,
    /// Exponent of the mild contrast wall, if any.
    #[serde(default)]
    pub contrast_mu: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Experiment {
    FaddeevProbe {
        xi: Point,
        rho_abs: Vec<f64>,
        #[serde(default = "five")]
        trials: usize,
        #[serde(default)]
        power_steps: usize,
        /// Also build and cache the kernel table for each frequency.
        #[serde(default)]
        kernel_tables: bool,
    },
    CgoDecay {
        xi: Point,
        rho_abs: Vec<f64>,
        #[serde(default = "two")]
        p: f64,
    },
    IdentityCheck {
        xi: Point,
        rho_abs: Vec<f64>,
        /// Second potential, zero when absent.
        #[serde(default)]
        q2: Option<PotentialSpec>,
    },
    ForwardDtn {
        #[serde(default)]
        energy: f64,
    },
    Reconstruct {
        mode: Mode,
        #[serde(default = "three")]
        xi_max: usize,
        #[serde(default = "unit")]
        xi_step: f64,
        #[serde(default)]
        betas: Option<Vec<f64>>,
        #[serde(default = "two_hundred")]
        kernel_sources: usize,
        #[serde(default)]
        field: bool,
    },
    WallDemo {
        #[serde(default)]
        wall: WallConfig,
        n_list: Vec<usize>,
        #[serde(default)]
        datum: Datum,
        #[serde(default)]
        invariance: Option<InvarianceConfig>,
    },
    FkCompare {
        #[serde(default)]
        wall: WallConfig,
        n: usize,
        #[serde(deserialize_with = "padded_points")]
        points: Vec<Point>,
        paths: usize,
        #[serde(default)]
        dt: Option<f64>,
        #[serde(default)]
        datum: Datum,
        /// Estimate the FD error from a solve on half the nodes.
        #[serde(default = "yes")]
        fd_tolerance: bool,
    },
}

/// Points with two or three coordinates, zero-padded to three.
fn padded_points<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Vec<Point>, D::Error> {
    let raw: Vec<Vec<f64>> = Vec::deserialize(d)?;
    raw.into_iter()
        .map(|v| {
            if !(2..=3).contains(&v.len()) {
                return Err(serde::de::Error::custom(format!("point {v:?} needs two or three coordinates")));
            }
            let mut p = [0.0; 3];
            p[..v.len()].copy_from_slice(&v);
            Ok(p)
        })
        .collect()
}

fn five() -> usize {
    5
}
fn two() -> f64 {
    2.0
}
fn three() -> usize {
    3
}
fn unit() -> f64 {
    1.0
}
fn two_hundred() -> usize {
    200
}
fn yes() -> bool {
    true
}

impl Experiment {
    pub fn kind(&self) -> &'static str {
        match self {
            Experiment::FaddeevProbe { .. } => KINDS[0],
            Experiment::CgoDecay { .. } => KINDS[1],
            Experiment::IdentityCheck { .. } => KINDS[2],
            Experiment::ForwardDtn { .. } => KINDS[3],
            Experiment::Reconstruct { .. } => KINDS[4],
            Experiment::WallDemo { .. } => KINDS[5],
            Experiment::FkCompare { .. } => KINDS[6],
        }
    }

    pub fn stochastic(&self) -> bool {
        matches!(self, Experiment::FaddeevProbe { .. } | Experiment::FkCompare { .. })
    }
}

fn conormal_pairs(spec: &PotentialSpec, dim: usize, out: &mut Vec<(usize, f64)>) {
    match spec {
        PotentialSpec::Conormal(c) => out.push((c.codim(dim), c.nu)),
        PotentialSpec::Sum { parts } => parts.iter().for_each(|p| conormal_pairs(p, dim, out)),
        _ => {}
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        serde_json::from_str(text).map_err(|e| {
            let msg = e.to_string();
            if msg.contains("unknown variant") && msg.contains("kind") || msg.contains("expected one of") {
                HarnessError::Validation(format!("{msg}; valid kinds: {}", KINDS.join(", ")))
            } else {
                HarnessError::Validation(format!("config: {msg}"))
            }
        })
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Validation(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// SHA-256 of the canonical JSON serialization.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn domain_spec(&self) -> Result<DomainSpec, HarnessError> {
        let r = match self.domain.half_width {
            Some(a) => DomainSpec::new(&self.grid, a, self.domain.collar),
            None => DomainSpec::for_grid(&self.grid, self.domain.collar),
        };
        r.map_err(|e| HarnessError::Validation(format!("domain: {e}")))
    }

    /// Field-level checks, run before any numerical work.
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |field: &str, msg: String| Err(HarnessError::Validation(format!("{field}: {msg}")));
        if let Err(e) = self.grid.validate() {
            return bad("grid", e.to_string());
        }
        let domain = self.domain_spec()?;
        let dim = self.grid.dim;
        if let Some(p) = &self.potential {
            if let Err(e) = p.validate(dim, &domain) {
                return bad("potential", e.to_string());
            }
            let mut pairs = Vec::new();
            conormal_pairs(p, dim, &mut pairs);
            if !pairs.is_empty() {
                match &self.exponents {
                    None => return bad("exponents", "required for conormal potentials".into()),
                    Some(b) => {
                        let v = validate_exponents(&pairs, b);
                        if !v.is_empty() {
                            return bad("exponents", v.join("; "));
                        }
                    }
                }
            }
        }
        if self.experiment.stochastic() && self.seed.is_none() {
            return bad("seed", format!("mandatory for {}", self.experiment.kind()));
        }
        match &self.experiment {
            Experiment::FaddeevProbe { rho_abs, trials, .. } => {
                if rho_abs.len() < 2 || *trials == 0 {
                    return bad("experiment", "needs two or more |rho| values and at least one trial".into());
                }
            }
            Experiment::CgoDecay { rho_abs, .. } | Experiment::IdentityCheck { rho_abs, .. } => {
                if rho_abs.is_empty() || rho_abs.iter().any(|r| !(*r > 0.0)) {
                    return bad("experiment.rho_abs", "needs positive values".into());
                }
            }
            Experiment::Reconstruct { betas, .. } => {
                if dim != 3 {
                    return bad("grid.dim", "reconstruction runs in three dimensions".into());
                }
                if self.potential.is_none() {
                    return bad("potential", "reconstruction needs a potential".into());
                }
                if betas.as_ref().is_some_and(|b| b.is_empty()) {
                    return bad("experiment.betas", "empty schedule".into());
                }
            }
            Experiment::WallDemo { wall, n_list, .. } => {
                if n_list.is_empty() || n_list.contains(&0) {
                    return bad("experiment.n_list", "needs indices >= 1".into());
                }
                if let Err(e) = wall.spec(dim).validate(&self.grid, &domain) {
                    return bad("experiment.wall", e.to_string());
                }
            }
            Experiment::FkCompare { wall, n, points, paths, .. } => {
                if *n == 0 || *paths == 0 || points.is_empty() {
                    return bad("experiment", "needs n >= 1, paths >= 1 and probe points".into());
                }
                if let Err(e) = wall.spec(dim).validate(&self.grid, &domain) {
                    return bad("experiment.wall", e.to_string());
                }
                if let Some(p) = points.iter().find(|p| !(domain.distance_to_boundary(p, dim) > 0.0)) {
                    return bad("experiment.points", format!("{p:?} is not inside the cube"));
                }
            }
            Experiment::ForwardDtn { .. } => {}
        }
        let out = &self.output;
        std::fs::create_dir_all(out)
            .and_then(|_| {
                let probe = out.join(".clab-write-probe");
                std::fs::write(&probe, b"")?;
                std::fs::remove_file(probe)
            })
            .or_else(|e| bad("output", format!("{} is not writable: {e}", out.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn conormal(exponents: &str, out: &Path) -> String {
        format!(
            r#"{{
                "experiment": {{ "kind": "cgo-decay", "xi": [2, 0, 0], "rho_abs": [8, 16, 32] }},
                "grid": {{ "dim": 3, "half_period": 0.25, "nodes": 16 }},
                "potential": {{
                    "kind": "conormal",
                    "manifold": {{ "kind": "sphere", "center": [0, 0, 0], "radius": 0.05 }},
                    "nu": 0.8,
                    "amplitude": {{ "center": [0, 0, 0], "widths": [0.09, 0.09, 0.09], "scale": 20 }}
                }},
                {exponents}
                "output": {:?}
            }}"#,
            out
        )
    }

    #[test]
    fn exponent_bundle_is_checked() {
        let dir = std::env::temp_dir().join("clab-config-test");
        let ok = ExperimentConfig::from_json(&conormal(r#""exponents": { "p": 12.0, "r": 2.2 },"#, &dir)).unwrap();
        ok.validate().unwrap();
        let low_p = ExperimentConfig::from_json(&conormal(r#""exponents": { "p": 4.0, "r": 2.2 },"#, &dir)).unwrap();
        let err = low_p.validate().unwrap_err().to_string();
        assert!(err.contains("exponents") && err.contains("p"), "{err}");
        let missing = ExperimentConfig::from_json(&conormal("", &dir)).unwrap();
        assert!(missing.validate().unwrap_err().to_string().contains("required"));
    }

    #[test]
    fn defaults_fill_in() {
        let cfg = ExperimentConfig::from_json(
            r#"{ "experiment": { "kind": "wall-demo", "n_list": [4] },
                 "grid": { "dim": 2, "half_period": 1.0, "nodes": 64 }, "output": "x" }"#,
        )
        .unwrap();
        assert_eq!(cfg.domain, DomainConfig::default());
        assert_eq!(cfg.solver, SolverConfig::default());
        let Experiment::WallDemo { wall, datum, .. } = cfg.experiment else { panic!() };
        assert_eq!(wall, WallConfig::default());
        assert_eq!(datum.eval(&[0.2, 0.0, 0.0]), 1.1);
    }

    #[test]
    fn hash_tracks_content() {
        let text = r#"{ "experiment": { "kind": "forward-dtn" }, "grid": { "dim": 3, "half_period": 0.25, "nodes": 16 }, "output": "x" }"#;
        let a = ExperimentConfig::from_json(text).unwrap();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.solver.degree = 3;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn datum_bound_covers_the_cube() {
        let d = Datum { offset: -1.0, slope: [0.5, -2.0, 0.0] };
        let a = 0.4;
        for x in [[a, -a, 0.0], [-a, a, a], [0.1, 0.2, -0.3]] {
            assert!(d.eval(&x).abs() <= d.sup_bound(a) + 1e-15);
        }
    }
}
