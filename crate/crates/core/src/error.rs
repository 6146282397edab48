use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grid has {nodes} nodes, above the configured cap of {cap}")]
    MemoryCap { nodes: usize, cap: usize },
    #[error("shape mismatch: expected length {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("potential is not small at the boundary: max |A| = {max:e} on the boundary layer (limit {limit:e})")]
    BoundaryNotSmall { max: f64, limit: f64 },
    #[error("decay fit unstable: {0}")]
    FitUnstable(String),
    #[error("operator '{label}' is not Hermitian: residual {residual:e}")]
    HermiticityViolation { label: String, residual: f64 },
    #[error("negative spectrum: smallest eigenvalue {min:e}")]
    NegativeSpectrum { min: f64 },
    #[error("quadrature not converged: doubling nodes changed the result by {change:e} (relative)")]
    QuadratureNotConverged { change: f64 },
    #[error("shift {z} coincides with a grid value of the symbol")]
    SingularShift { z: num_complex::Complex64 },
    #[error("shift {z} is within the margin of eigenvalue {eigenvalue:e}")]
    NearSpectrum { z: num_complex::Complex64, eigenvalue: f64 },
    #[error("limiting absorption at lambda = {lambda} not converging: {detail}")]
    NotConverging { lambda: f64, detail: String },
    #[error("shell at lambda = {lambda} is exceptional: smallest singular value {sigma_min:e}")]
    ExceptionalShell { lambda: f64, sigma_min: f64 },
    #[error("Cook integrand not decaying over the final quarter of [0, {t_max}]")]
    TailNotDecaying { t_max: f64 },
    #[error("flux obstruction: the mean of A is {flux:e}, so exp(iG) is not periodic")]
    FluxObstruction { flux: f64 },
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short remediation hint for errors a user can act on.
    pub fn hint(&self) -> Option<&'static str> {
        match self {
            Error::TailNotDecaying { .. } => Some("increase L or reduce T"),
            Error::BoundaryNotSmall { .. } => Some("increase L or narrow the potential"),
            Error::MemoryCap { .. } => Some("reduce N or n"),
            Error::HermiticityViolation { .. } => Some("refine the grid; the potential is under-resolved"),
            Error::QuadratureNotConverged { .. } => Some("widen [t_min, t_max] or add nodes"),
            Error::NotConverging { .. } => Some("move lambda away from sparse shells or deepen the padding"),
            Error::ExceptionalShell { .. } => Some("reduce the coupling or drop the shell from the band"),
            Error::FluxObstruction { .. } => Some("use a zero-mean potential for the gauge check"),
            _ => None,
        }
    }
}
