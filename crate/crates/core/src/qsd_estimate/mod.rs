//! Quasi-stationary law, decay rate and eigenfunction estimates.

mod convergence;
mod decay;
mod fleming_viot;
mod histogram;
mod oracle;

pub use convergence::{
    conditional_convergence, fixed_point_check, phi_probe, ConvergenceReport, ConvergenceRow, FixedPointReport, PhiProbe,
};
pub use decay::{estimate_decay_rate, DecayFit, MIN_POINTS, MIN_SURVIVORS};
pub use fleming_viot::{fleming_viot, initial_ensemble, Ensemble, FvConfig, FvDiagnostics, QsdReport};
pub use histogram::{binned_tv, tv_noise_floor, Binning, Counts, Histogram};
pub use oracle::{
    grid_oracle_kl_1d, grid_oracle_refinement, OracleGrid, OracleRefinement, OracleResult,
    GRID_CONVERGENCE, ORACLE_TOLERANCE,
};
