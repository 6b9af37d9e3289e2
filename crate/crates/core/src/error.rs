use std::path::PathBuf;

/// Errors raised by mesh construction, discretisation and the solver.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("mesh motion produced a non-positive triangle area at t = {time} (triangle {triangle})")]
    InvalidMotion { time: f64, triangle: usize },

    #[error("invalid spatial mesh: {0}")]
    InvalidMesh(String),

    #[error("degenerate space-time cell {cell}: volume {volume:e} below tolerance")]
    DegenerateCell { cell: usize, volume: f64 },

    #[error("inconsistent slab topology: facet {facet} has {cells} adjacent cells")]
    InconsistentTopology { facet: usize, cells: usize },

    #[error("unsupported polynomial degree {degree} (supported {min}..={max})")]
    UnsupportedDegree { degree: usize, min: usize, max: usize },

    #[error("degenerate affine map (|det J| = {det:e})")]
    DegenerateMap { det: f64 },

    #[error("singular local block in cell {cell}")]
    SingularLocalBlock { cell: usize },

    #[error("singular global facet system: {0}")]
    SingularGlobal(String),

    #[error("initial-condition projection system is singular")]
    ProjectionSingular,

    #[error("initial velocity is not divergence-free (max |div u0| = {max_div:e})")]
    NotDivergenceFree { max_div: f64 },

    #[error("Picard iteration did not converge in {iterations} iterations (last delta {last_delta:e})")]
    NoConvergence { iterations: usize, last_delta: f64 },

    #[error("slab {slab}: {source}")]
    Slab {
        slab: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error in {path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
