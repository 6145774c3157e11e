//! Killed Langevin-type dynamics, Lyapunov drift verification and
//! quasi-stationary distribution estimation.
//!
//! The crate is organized bottom-up:
//!
//! - [`potentials`]: potential energies `V`, their domains and assumption validators.
//! - [`processes`]: kinetic Langevin, generalized Langevin and Nosé-Hoover dynamics.
//! - [`killed_sim`]: Euler-Maruyama paths killed on leaving a position domain.
//! - [`lyapunov`]: Lyapunov functions `W = exp(F^delta)` and drift-ratio checks.
//! - [`qsd_estimate`]: Fleming-Viot, survival regression and a 1D grid oracle.
//! - [`runner`]: configuration, scenarios and reproducible output.

pub mod error;
pub mod expr;
pub mod killed_sim;
pub mod lyapunov;
pub mod potentials;
pub mod processes;
pub mod qsd_estimate;
pub mod rng;
pub mod runner;

pub use error::{Error, ErrorClass, Result};
pub use expr::ClosedForm;
pub use potentials::{InteractionSpec, PhiSpec, PotentialKind, PotentialSpec};
pub use processes::{Family, ProcessSpec, State};
pub use runner::{load_config, parse_config, run_scenario, RunConfig, RunOptions, RunResult, Subcommand};
