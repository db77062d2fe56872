//! Stochastic interaction-round-a-face (IRF) models built from elliptic
//! weights, the symmetric functions attached to them, and the dynamic
//! exclusion processes obtained as degenerations.

pub mod asymptotics;
pub mod error;
pub mod identities;
pub mod observables;
pub mod oracle;
pub mod params;
pub mod samplers;
pub mod special;
pub mod symfun;
pub mod signature;
pub mod suites;
pub mod weights;

pub use error::{IrfError, Result};
pub use special::{C64, FunctionMode};
