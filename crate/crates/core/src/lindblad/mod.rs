//! Time-dependent master equation for the truncated transmon and the sampled
//! trajectory it produces.

pub mod state;
mod trajectory;

pub use state::{
    dissipator_apply, gibbs_populations, lindblad_rhs, pauli_rhs, rk4_density, rk4_populations, DensityMatrix,
};
pub use trajectory::{
    initial_populations, simulate, simulate_with, IntegratorDiagnostics, SimulateOptions, Trajectory, TrajectorySample,
};

/// Largest allowed product of escape rate and time step.
pub const MAX_RATE_STEP: f64 = 0.01;
