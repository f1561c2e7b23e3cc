//! Steady-state excitation transport through tight-binding chains coupled to
//! dephasing or thermal environments, and gradient-based search for the site
//! energies that maximize the extracted current.

pub mod chain;
pub mod error;
pub mod experiments;
pub mod gradient;
pub mod linalg;
pub mod liouvillian;
pub mod optimizer;
pub mod oracle;
pub mod steady_state;

pub use chain::{build_hamiltonian, tunneling_energy, ChainSpec, Hamiltonian, Tunneling};
pub use error::{Error, Result};
pub use liouvillian::{assemble, EnvironmentModel, Liouvillian, ThermalRates};
pub use steady_state::{flux, solve_steady_state, steady_state, SteadyState};
pub use gradient::{grad_flux_adjoint, grad_flux_fd, FluxGradient, FluxObjective, GradientMethod};
pub use optimizer::{multi_start, run_optimization, HypergridSampler, OptimizationRun, OptimizerConfig, RunStatus};
pub use oracle::ThreeSiteParams;
pub use experiments::{run, ExperimentConfig, ExperimentKind, ResultBundle};
