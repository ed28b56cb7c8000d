//! Grand-canonical computations: total-count laws, local limit errors,
//! canonical/grand-canonical comparison, and inequality suites.

pub mod comparison;
pub mod count_law;
pub mod identities;
pub mod inequalities;

pub use comparison::{
    ensemble_ratio, ensemble_ratio_sup, equivalence_gap, regime_table, Regime, RegimeOptions, RegimeRow,
};
pub use count_law::{llt_errors, total_count_law, CountLaw, LltErrors};
pub use identities::{density_scan, identity_suite, IdentityReport};
pub use inequalities::{
    certified_mgf, entropy_inequality_check, entropy_inequality_suite, mgf_suite, rothaus_suite,
    InequalityCheck, MgfOptions, MgfReport,
};
