use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("invalid potential: {0}")]
    InvalidPotential(String),
    #[error("invalid frequency: {0}")]
    InvalidFrequency(String),
    #[error("quadrature did not converge: tail estimate {tail:.3e} above tolerance {tol:.3e}")]
    QuadratureNonConvergence { tail: f64, tol: f64 },
    #[error(
        "corrector did not converge in {iterations} iterations (relative residual {residual:.3e}, \
         contraction estimate {kappa:.3}); |rho| not large enough"
    )]
    CorrectorNonConvergence {
        iterations: usize,
        residual: f64,
        kappa: f64,
    },
    #[error("near Dirichlet eigenvalue: condition estimate {estimate:.3e} ({context})")]
    NearEigenvalue { estimate: f64, context: String },
    #[error("linear solver failed: {0}")]
    Solver(String),
    #[error("overflow guard: {0}")]
    Overflow(String),
    #[error("direct-sum failure ({0}); increase M_K or |rho| resolution")]
    DirectSum(String),
    #[error("kernel source too close to the boundary: {0}")]
    SourceTooClose(String),
    #[error("kernel query outside the safe box: {0}")]
    OutsideSafeBox(String),
    #[error("field cache: {0}")]
    Cache(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
