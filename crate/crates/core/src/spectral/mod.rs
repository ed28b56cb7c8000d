//! Generators, Dirichlet forms, spectral gaps and log-Sobolev estimates.

pub mod chain;
pub mod forms;
pub mod gap;
pub mod generator;
pub mod lsi;

pub use chain::ReversibleChain;
pub use forms::{dirichlet_form, entropy, entropy_weighted, rothaus_slack, variance};
pub use gap::{chain_spectral_gap, spectral_gap, GapResult};
pub use generator::{assemble_generator, SparseGenerator};
pub use lsi::{chain_lsi_constant, lsi_constant, lsi_ratio, LsiOptions, LsiResult};
