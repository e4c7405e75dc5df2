//! Edge assembly crossover (EAX) for the symmetric Euclidean TSP.
//!
//! The crate is organised bottom-up:
//!
//! - [`instance`]: TSPLIB parsing, the rounded Euclidean distance oracle,
//!   neighbor lists and random uniform instances.
//! - [`tour`]: tour representation, edge-set views and the randomized
//!   nearest-neighbor + 2-opt initializer.
//! - [`ab`]: union graph of two parents, alternating (AB-) cycle tracing,
//!   E-set application and brute-force subtour enumeration.
//! - [`validity`]: portal profiles and the exact portal-only subtour count,
//!   together with the classic sufficient conditions and the mirror test.
//! - [`repair`]: neighborhood-restricted merging of subtours.
//! - [`solver`]: the two-stage generational GA with the vanilla,
//!   only-complete and ratio-based stage-I gates.
//! - [`instrument`]: per-offspring records, AB-cycle type histograms and
//!   optimal-edge gain/loss ledgers.
//!
//! Data-parallel loops (neighbor lists, population init, per-pair offspring
//! generation) run on rayon when the `parallel` feature is enabled and fall
//! back to plain iterators otherwise. Results are identical either way.

pub mod ab;
pub mod instance;
pub mod instrument;
pub mod par;
pub mod repair;
pub mod rng;
pub mod solver;
pub mod tour;
pub mod validity;

pub use ab::{AbCycle, DegreeStructure, ESet, Label, UnionGraph};
pub use instance::{EdgeKey, Instance, InstanceError, Vertex};
pub use instrument::{OffspringRecord, OptEdgeCounts, TypeHistogram};
pub use repair::{repair, RepairOutcome};
pub use solver::{evolve, RatioMask, RunResult, SolverConfig, Variant};
pub use tour::Tour;
pub use validity::{PortalProfile, ValidityVerdict};
