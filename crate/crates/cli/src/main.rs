use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use clab::config::{Experiment, ExperimentConfig};
use clab::{Cache, Datum, HarnessError};

#[derive(Parser)]
#[command(name = "clab", version, about = "Numerical experiments for CGO solutions and wall potentials")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Args)]
struct Common {
    /// JSON experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overriding the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Artifact cache directory (default: $CLAB_CACHE_DIR or ~/.cache/clab).
    #[arg(long)]
    cache_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Verb {
    FaddeevProbe {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: Option<u64>,
    },
    CgoDecay {
        #[command(flatten)]
        common: Common,
    },
    IdentityCheck {
        #[command(flatten)]
        common: Common,
    },
    ForwardDtn {
        #[command(flatten)]
        common: Common,
    },
    Reconstruct {
        #[command(flatten)]
        common: Common,
    },
    WallDemo {
        #[command(flatten)]
        common: Common,
        #[arg(long, allow_hyphen_values = true)]
        mu: Option<f64>,
        #[arg(long)]
        c1: Option<f64>,
        /// Comma-separated regularization indices.
        #[arg(long, value_delimiter = ',')]
        n_list: Option<Vec<usize>>,
        /// Boundary datum as `offset,s1,s2[,s3]` for `offset + s.x`.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        f: Option<Vec<f64>>,
    },
    FkCompare {
        #[command(flatten)]
        common: Common,
        /// File with one probe point per line, coordinates separated by
        /// commas or whitespace.
        #[arg(long)]
        points: Option<PathBuf>,
        #[arg(long)]
        paths: Option<usize>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Small end-to-end runs of every experiment kind.
    Selftest {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_datum(v: &[f64]) -> Result<Datum, HarnessError> {
    if !(3..=4).contains(&v.len()) {
        return Err(HarnessError::Validation("--f takes offset,s1,s2[,s3]".into()));
    }
    let mut slope = [0.0; 3];
    slope[..v.len() - 1].copy_from_slice(&v[1..]);
    Ok(Datum { offset: v[0], slope })
}

fn read_points(path: &Path) -> Result<Vec<[f64; 3]>, HarnessError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| HarnessError::Validation(format!("cannot read {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let vals: Result<Vec<f64>, _> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(str::parse)
            .collect();
        match vals {
            Ok(v) if (2..=3).contains(&v.len()) => {
                let mut p = [0.0; 3];
                p[..v.len()].copy_from_slice(&v);
                out.push(p);
            }
            _ => {
                return Err(HarnessError::Validation(format!(
                    "{}:{}: expected two or three numbers",
                    path.display(),
                    k + 1
                )))
            }
        }
    }
    Ok(out)
}

fn load(common: &Common, verb: &str) -> Result<(ExperimentConfig, Cache), HarnessError> {
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if cfg.experiment.kind() != verb {
        return Err(HarnessError::Validation(format!(
            "config describes a {} experiment, not {verb}",
            cfg.experiment.kind()
        )));
    }
    if let Some(o) = &common.out {
        cfg.output = o.clone();
    }
    let cache = common.cache_dir.clone().map(Cache::new).unwrap_or_else(Cache::from_env);
    Ok((cfg, cache))
}

fn execute(cli: Cli) -> Result<(), HarnessError> {
    let (cfg, cache) = match cli.verb {
        Verb::FaddeevProbe { common, seed } => {
            let (mut cfg, cache) = load(&common, "faddeev-probe")?;
            cfg.seed = seed.or(cfg.seed);
            (cfg, cache)
        }
        Verb::CgoDecay { common } => load(&common, "cgo-decay")?,
        Verb::IdentityCheck { common } => load(&common, "identity-check")?,
        Verb::ForwardDtn { common } => load(&common, "forward-dtn")?,
        Verb::Reconstruct { common } => load(&common, "reconstruct")?,
        Verb::WallDemo {
            common,
            mu,
            c1,
            n_list: nl,
            f,
        } => {
            let (mut cfg, cache) = load(&common, "wall-demo")?;
            if let Experiment::WallDemo {
                wall, n_list, datum, ..
            } = &mut cfg.experiment
            {
                wall.mu = mu.unwrap_or(wall.mu);
                wall.c1 = c1.unwrap_or(wall.c1);
                if let Some(nl) = nl {
                    *n_list = nl;
                }
                if let Some(f) = f {
                    *datum = parse_datum(&f)?;
                }
            }
            (cfg, cache)
        }
        Verb::FkCompare {
            common,
            points: pf,
            paths: np,
            dt: step,
            seed,
        } => {
            let (mut cfg, cache) = load(&common, "fk-compare")?;
            cfg.seed = seed.or(cfg.seed);
            if let Experiment::FkCompare { points, paths, dt, .. } = &mut cfg.experiment {
                if let Some(pf) = pf {
                    *points = read_points(&pf)?;
                }
                *paths = np.unwrap_or(*paths);
                *dt = step.or(*dt);
            }
            (cfg, cache)
        }
        Verb::Selftest { out } => {
            let dir = out.unwrap_or_else(|| std::env::temp_dir().join("clab-selftest"));
            let report = clab::selftest::run_all(&dir)?;
            for line in &report {
                println!("{line}");
            }
            return Ok(());
        }
    };
    let manifest = clab::run(&cfg, &cache)?;
    for f in &manifest.failures {
        eprintln!("partial failure: {f}");
    }
    for w in &manifest.warnings {
        eprintln!("warning: {w}");
    }
    println!("{}", serde_json::to_string_pretty(&manifest.summary).expect("summary serializes"));
    println!("outputs in {}", cfg.output.display());
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("clab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
