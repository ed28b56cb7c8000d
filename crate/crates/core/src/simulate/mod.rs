//! Kinetic Monte Carlo for boxes beyond exact enumeration.

pub mod checks;
pub mod fenwick;
pub mod kmc;
pub mod relaxation;

pub use checks::{empirical_law_check, reversibility_check, EmpiricalLawCheck, ReversibilityCheck};
pub use kmc::{kmc_run, single_particle_gap, write_trajectory_csv, Observer, SimState, Trajectory};
pub use relaxation::{relaxation_estimate, RelaxationEstimate, RelaxationOptions};
