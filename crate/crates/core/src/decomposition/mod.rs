//! Two-halves decomposition of a sector: the count law `gamma` of the first
//! half, its birth-death chain, gradient representations and the derived
//! bounded-constant diagnostics.

pub mod birth_death;
pub mod diagnostics;
pub mod gradient;
pub mod identities;
pub mod split;

pub use birth_death::{birth_death_generator, hardy_lsi_bound, BirthDeathChain, HardyBracket};
pub use diagnostics::{diagnostics_scan, DiagnosticOptions, DiagnosticRow};
pub use gradient::{ab_split, gradient_representation, gradient_table, AbSplit, Branch, GradientTerms};
pub use identities::{conditional_dirichlet, entropy_decomposition, tensor_property};
pub use split::{conditional_expectation, gamma_distribution, SplitSector};
