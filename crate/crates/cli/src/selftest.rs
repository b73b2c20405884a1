//! Small end-to-end runs of every experiment kind with loose sanity checks.

use std::path::Path;

use serde_json::{json, Value};

use crate::{run, Cache, ExperimentConfig, HarnessError, RunManifest};

/// A small config per experiment kind, without `output`.
pub fn configs() -> Vec<(&'static str, Value)> {
    let bump = |amp: f64, width: f64, support: f64| {
        json!({ "kind": "gaussian", "center": [0.01, -0.02, 0.015], "width": width, "amplitude": amp, "support": support })
    };
    let cube = json!({ "dim": 3, "half_period": 1.0, "nodes": 32 });
    let small = json!({ "dim": 3, "half_period": 0.25, "nodes": 16 });
    let plane = json!({ "dim": 2, "half_period": 1.0, "nodes": 64 });
    vec![
        ("faddeev-probe", json!({
            "experiment": { "kind": "faddeev-probe", "xi": [0.5, 0.0, 0.0], "rho_abs": [8.0, 16.0], "trials": 2 },
            "grid": cube, "domain": { "collar": 0.05 }, "seed": 1,
        })),
        ("cgo-decay", json!({
            "experiment": { "kind": "cgo-decay", "xi": [1.0, 0.0, 0.0], "rho_abs": [8.0, 16.0, 32.0] },
            "grid": cube, "domain": { "collar": 0.05 }, "potential": bump(10.0, 0.2, 0.4),
            "solver": { "check_resolution": false },
        })),
        ("identity-check", json!({
            "experiment": { "kind": "identity-check", "xi": [1.0, 0.0, 0.0], "rho_abs": [8.0, 16.0] },
            "grid": cube, "domain": { "collar": 0.05 }, "potential": bump(10.0, 0.2, 0.4),
            "solver": { "check_resolution": false },
        })),
        ("forward-dtn", json!({
            "experiment": { "kind": "forward-dtn" },
            "grid": small, "potential": bump(50.0, 0.04, 0.08), "solver": { "degree": 2 },
        })),
        ("reconstruct", json!({
            "experiment": { "kind": "reconstruct", "mode": "oracle", "xi_max": 1, "betas": [8.0, 16.0] },
            "grid": small, "potential": bump(50.0, 0.04, 0.08),
        })),
        ("wall-demo", json!({
            "experiment": { "kind": "wall-demo", "n_list": [2, 4, 8] },
            "grid": plane, "domain": { "collar": 0.1 },
        })),
        ("fk-compare", json!({
            "experiment": { "kind": "fk-compare", "n": 4, "points": [[0.125, 0.0, 0.0]], "paths": 2000 },
            "grid": plane, "domain": { "collar": 0.1 }, "seed": 7,
        })),
    ]
}

fn check(kind: &str, m: &RunManifest) -> Result<(), String> {
    if !m.failures.is_empty() {
        return Err(m.failures.join("; "));
    }
    let s = &m.summary;
    let ok = match kind {
        "faddeev-probe" => s["slope"].as_f64().is_some_and(|v| v < 0.0),
        "cgo-decay" => s["monotone"].as_bool() == Some(true),
        "reconstruct" => s["median_rel_err"].as_f64().is_some_and(|v| v < 0.5),
        "fk-compare" => s["agree_within_3_sigma_plus_fd_tol"].as_u64() == Some(1),
        _ => true,
    };
    if ok {
        Ok(())
    } else {
        Err(format!("unexpected summary {s}"))
    }
}

/// One line per kind; an error if any kind failed.
pub fn run_all(dir: &Path) -> Result<Vec<String>, HarnessError> {
    let cache = Cache::new(dir.join("cache"));
    let mut lines = Vec::new();
    let mut failed = 0;
    for (kind, mut v) in configs() {
        v["output"] = json!(dir.join(kind));
        let res = ExperimentConfig::from_json(&v.to_string())
            .and_then(|cfg| run(&cfg, &cache))
            .map_err(|e| e.to_string())
            .and_then(|m| check(kind, &m));
        match res {
            Ok(()) => lines.push(format!("PASS {kind}")),
            Err(e) => {
                failed += 1;
                lines.push(format!("FAIL {kind}: {e}"));
            }
        }
    }
    if failed > 0 {
        for l in &lines {
            eprintln!("{l}");
        }
        return Err(HarnessError::Numerical(format!("{failed} selftest kinds failed")));
    }
    Ok(lines)
}
