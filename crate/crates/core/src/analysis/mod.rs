//! Linear-systems analysis: stability, Gramians, norms and responses.

mod eig;
mod grid;
mod hinf;
mod lyapunov;
mod response;
mod riccati;
mod simulate;

pub use eig::{eigenvalues, spectral_abscissa};
pub use grid::{grid_worst_hinf, GridWorst};
pub use hinf::{hinf_norm, sigma_at, HinfNorm};
pub use lyapunov::{gramians, lyapunov_residual, solve_lyapunov, Gramians};
pub use riccati::{care, Lqr};
pub use response::{sigma_response, step_response, write_csv, FrequencyGrid, Trajectory};
pub use simulate::simulate;
