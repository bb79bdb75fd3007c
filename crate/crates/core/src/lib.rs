//! Strong and weak subordination of multivariate Lévy processes.
//!
//! The crate is organised bottom-up:
//!
//! * [`levy`] holds characteristic triplets, subordinator and subordinate
//!   specifications, and the characteristic/Laplace exponents of the
//!   supported families.
//! * [`ordered_time`] evaluates a Lévy process at a vector of (unequal)
//!   times: the ordered-increment exponent and an exact sampler.
//! * [`subordination`] gives the weak-subordination exponent, the closed form
//!   for stacked strong subordination, and exact path simulators for both
//!   operations when the subordinator has finite activity.
//! * [`prm`] simulates Poisson random measures and checks Laplace functionals.
//! * [`verify`] compares empirical characteristic functions against exact
//!   targets and runs the equality-in-law scenarios.
//!
//! Every simulator takes an explicit RNG; [`rng::Streams`] derives
//! independent, reproducible per-replicate streams from a master seed.

pub mod error;
pub mod levy;
pub mod ordered_time;
pub mod prm;
pub mod rng;
pub mod subordination;
pub mod verify;

pub use error::{Error, Result};
pub use levy::{
    exponent_bm, exponent_cpp, kac_stack_exponent, laplace_exponent, validate_triplet, Atom,
    BrownianMotion, CharExponent, CharTriplet, CompoundPoisson, Estimate, JumpMeasure, JumpSampler,
    MonteCarlo, SubordinateSpec, SubordinatorSpec, TripletKind, ValidationReport,
};
pub use num_complex::Complex64;
pub use ordered_time::{
    order_times, sample_subordinate_at, vector_time_cf, vector_time_exponent, OrderedTime,
};
pub use subordination::{
    simulate_strong, simulate_subordinator, simulate_weak, stacked_strong_exponent,
    weak_drift_component, weak_exponent, PathRecord, StackEmbedding, SubordinatorPath,
};
