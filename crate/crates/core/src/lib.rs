//! Special flows over minimal translations of the two-torus.
//!
//! The crate builds translation vectors `(alpha, alpha')` from continued
//! fraction schedules, assembles a smooth ceiling `phi = phi0 + sum(X_n + Y_n)`,
//! and measures Birkhoff sums, tower flatness, stretch and correlation decay.

pub mod analysis;
pub mod arith;
pub mod birkhoff;
pub mod ceiling;
pub mod error;
pub mod experiment;
pub mod flow;
pub mod pairgen;
pub mod towers;

pub use arith::{cf_convergents, cf_value, dist_to_int, Angle, BigFixed, CFNumber, PrecisionPolicy};
pub use ceiling::{assemble_phi, CeilingSpec, TrigPolynomial};
pub use error::{Error, Result};
pub use flow::FlowPoint;
pub use pairgen::{build_pair, verify_pair, GrowthLaw, YPair};
pub use towers::TowerSpec;
