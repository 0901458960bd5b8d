use thiserror::Error;

/// Errors produced by the reduction toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("scheduling parameter {index} = {value} outside [{lo}, {hi}]")]
    OutOfRange {
        index: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("LFT is not well-posed: I - D_vw*Delta is singular at delta = {delta:?}")]
    IllPosed { delta: Vec<f64> },

    #[error("product of two parameter-dependent factors is not affine ({0})")]
    UnsupportedRational(String),

    #[error("singular algebraic loop in interconnection")]
    AlgebraicLoop,

    #[error("system is not stable (spectral abscissa {abscissa:e}){}", at_rho(.rho))]
    Unstable { abscissa: f64, rho: Option<Vec<f64>> },

    #[error("no common Lyapunov matrix over the vertex set (worst residual at vertex {vertex:?})")]
    Infeasible { vertex: Vec<f64> },

    #[error("singular frequency response at omega = {omega}")]
    SingularFrequency { omega: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("no stable candidate found across {starts} starts (best spectral abscissa {best_abscissa:e})")]
    NoStableStart { starts: usize, best_abscissa: f64 },

    #[error("no certifiable gain below {cap:e}: error system not quadratically stable")]
    CertificationFailed { cap: f64 },

    #[error("model serialization: {0}")]
    Serialization(String),
}

fn at_rho(rho: &Option<Vec<f64>>) -> String {
    match rho {
        Some(r) => format!(" at rho = {r:?}"),
        None => String::new(),
    }
}

pub type Result<T> = std::result::Result<T, Error>;
