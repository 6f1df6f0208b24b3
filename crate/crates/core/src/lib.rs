//! Numerical laboratory for backward volume contraction of smooth endomorphisms.
//!
//! The crate evaluates forward orbits and Jacobian-determinant cocycles for a few
//! concrete maps (the doubling circle map, the quadratic family and the Viana skew
//! product), enumerates their preimage trees, estimates hitting-time tails by Monte
//! Carlo and checks that the minimal backward determinant over every `n`-step
//! preimage of a point grows like a submultiplicative schedule `b_n`.
//!
//! All determinant arithmetic happens in natural-log space. A log-determinant of
//! `-inf` marks an orbit that touched the critical set; it is a value, not an error.

pub mod chains;
pub mod dynamics;
pub mod error;
pub mod json;
pub mod preimage;
pub mod rates;
pub mod rng;
pub mod schedules;
pub mod tails;
pub mod verify;

pub use dynamics::{MapSystem, Point, SystemKind};
pub use error::{Error, Result};
pub use preimage::{PreimageLeaf, PreimageTree};
pub use rates::{DecayRegime, Family, RegimeFit};
pub use schedules::{BFamily, BSchedule};
pub use tails::{ExpansionSchedule, Passage, TailEstimate};
