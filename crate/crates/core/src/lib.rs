//! Order reduction of linear parameter-varying models by fixed-structure
//! synthesis, with certified induced-L2 error bounds.

pub mod analysis;
pub mod bench;
pub mod certify;
pub mod closedloop;
mod error;
pub mod io;
mod linalg;
mod lmi;
pub mod model;
pub mod reduction;
mod scalar;
pub mod testing;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub use model::{AffineMatrix, LftModel, LpvModel, LtiStateSpace, ParameterBox};
pub use reduction::{reduce, ReductionConfig, ReductionReport, StructureMask};

pub type LpvModel64 = model::LpvModel<f64>;
pub type LtiStateSpace64 = model::LtiStateSpace<f64>;
pub type AffineMatrix64 = model::AffineMatrix<f64>;
pub type ParameterBox64 = model::ParameterBox<f64>;
pub type LftModel64 = model::LftModel<f64>;
pub type ReductionConfig64 = reduction::ReductionConfig<f64>;
pub type ReductionReport64 = reduction::ReductionReport<f64>;
