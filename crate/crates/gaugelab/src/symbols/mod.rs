//! Exact jet-level boundary symbol calculus: the factorization recursion,
//! its verification, and the inverse recursion recovering boundary jets of
//! the metric, connection and potential from the symbol table.

pub mod elem;
pub mod factorize;
pub mod jet;
pub mod qc;
pub mod recover;

pub use elem::{SymbolCtx, SymbolElem};
pub use factorize::{factorize, homogeneity_holds, verify_factorization, FactorizationReport, SymbolTable};
pub use jet::{jet_from_json, jet_to_json, BoundaryJet, Series};
pub use qc::{QC, RatMat};
pub use recover::{jets_agree, recover_jet, recover_jet_opts, recover_jet_surface, RecoveryTrace};
