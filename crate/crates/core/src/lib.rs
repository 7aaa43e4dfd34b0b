//! Information cost, discrepancy and correlated sampling for two-party protocols.

pub mod claims;
pub mod corpus;
pub mod discrepancy;
pub mod error;
pub mod extreal;
pub mod info;
pub mod par;
pub mod protocol;
pub mod rng;
pub mod sampling;
pub mod simulation;
pub mod stats;
pub mod table;

pub use error::{Error, Result};
pub use extreal::{ExtReal, ExtSum};
pub use info::{Dist, JointDist, PairDist};
pub use protocol::{ProtocolTree, PublicCoinProtocol};
pub use table::FuncTable;
