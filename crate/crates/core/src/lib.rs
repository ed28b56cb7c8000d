//! Exact equilibria, spectral gaps and log-Sobolev constants for the
//! zero-range process on finite boxes.

pub mod error;
pub mod lattice;
pub mod measure;
pub mod partition;
pub mod rate;
pub mod scaling;
pub mod sector;
pub mod simulate;
pub mod site_law;
pub mod decomposition;
pub mod ensembles;
pub mod spectral;

pub use error::{Error, Result};
pub use lattice::Lattice;
pub use measure::{canonical_measure, DiscreteMeasure};
pub use rate::{RateFamily, RateFunction};
pub use sector::{enumerate_sector, Sector};
pub use site_law::{grand_canonical_site_law, invert_fugacity, SiteLaw};
