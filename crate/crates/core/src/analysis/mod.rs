//! Steady-state machinery: equilibria, DC maps, stability certificates,
//! monotonicity scans, right inverses, the slow/fast decomposition and the
//! empirical gain bound.

mod certificate;
mod gain;
mod monotonicity;
mod steady_state;
mod two_time_scale;

pub use certificate::{envelope_excess, linearization_certificate, CertificateOptions, StabilityCertificate};
pub use gain::{empirical_gain_bound, GainSearchResult, GainTrial, Probe};
pub use monotonicity::{
    grid_nodes, min_sym_jacobian_eigenvalue, monotonicity_raster, monotonicity_scan, write_monotonicity_csv, MonotonicityNode,
    MonotonicityReport, MonotonicityTest, MonotonicityViolation,
};
pub use steady_state::{equilibrium, linear_right_inverse, solve_steady_state, SteadyStateMaps, NEWTON_BUDGET};
pub use two_time_scale::{build_two_time_scale, sp_consistency_check, SpPoint, TwoTimeScale};

use thiserror::Error;

use crate::control::{ControlError, PlantError};
use crate::sets::SetError;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Set(#[from] SetError),
    #[error("Newton did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("matrix is rank deficient (smallest singular value {smin:.3e}, largest {smax:.3e})")]
    RankDeficient { smin: f64, smax: f64 },
    #[error("reference is not reachable inside U: {0}")]
    InfeasibleReference(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// True when every element is at most `(1 + slack)` times its predecessor.
pub fn non_increasing_within(values: &[f64], slack: f64) -> bool {
    values.windows(2).all(|w| w[1] <= w[0] * (1.0 + slack))
}
