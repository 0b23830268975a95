//! Plants, static input maps and the anti-windup PI closed loop.

mod closed_loop;
mod input_map;
mod plant;

pub use closed_loop::{
    closed_loop_rhs, estimate_boundary_distance, run_reference_schedule, simulate_closed_loop, soft_projection_convergence_check,
    AwPiController, ClosedLoopRhs, ClosedLoopRun, ControlError, IntegratorMode, ReferenceStep, Sample, SegmentSummary,
    SimOptions, SoftProjectionPoint, Termination,
};
pub use input_map::{IdentityMap, InputMap, MatrixMap};
pub(crate) use plant::check_len;
pub use plant::{CubicPlant, LtiPlant, Plant, PlantError};
