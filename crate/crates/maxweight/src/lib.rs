//! Analysis and simulation of overloaded parallel-queue systems scheduled
//! by the MaxWeight policy.
//!
//! A system has `Q` parallel queues and a finite set of service vectors.
//! Each time slot the scheduler picks the service vector `S` maximizing
//! `<S, D x>` for the current workload `x` and a positive diagonal weight
//! matrix `D`. When the offered load sits outside the stability region the
//! total backlog grows without bound, but it grows along a single ray.
//! This crate computes that ray, synthesizes the `D` that steers it onto a
//! requested direction, decides when no diagonal weighting can do so, and
//! simulates the slot-by-slot dynamics to confirm the analytical answers.
//!
//! Module map:
//!
//! * [`model`] - validated domain types shared by everything else.
//! * [`lp`] - a small dense two-phase simplex solver; every polytope
//!   question below is answered through it.
//! * [`geometry`] - stability-region membership, service cones, and the
//!   boundary vectors on which neighboring cones meet.
//! * [`eta`] - the growth-ray solver, its brute-force grid oracle, the
//!   fixed-point verifier, and max-min / proportional variants.
//! * [`control`] - weight-matrix synthesis for a target backlog direction,
//!   feasibility verdicts, and the load-space partition each boundary induces.
//! * [`sim`] - deterministic discrete-time simulation with seeded arrival
//!   models and direction/minimality measurements.
//! * [`rng`] - the pinned SplitMix64 generator that keeps runs reproducible.

pub mod control;
pub mod eta;
pub mod geometry;
pub mod lp;
pub mod model;
pub mod rng;
pub mod sim;

pub use control::{
    check_feasibility, classify_rho, feasible_directions, partition_overload, synthesize_d,
    ControlError, FeasibilityReport, FeasibilityVerdict, OverloadPartition,
};
pub use eta::{
    eta_oracle, maxmin_eta, proportional_eta, solve_eta, solve_eta_from, verify_fixed_point,
    EtaError, EtaSolution,
};
pub use geometry::{
    boundary_vector, boundary_vector_with_support, cone_of, is_stabilizable, non_essential,
    relevant_boundaries, stability_margin, BoundaryVector, ConeAssignment, GeometryError,
};
pub use model::{
    validate_system, FairnessTarget, LoadVector, MixtureWeights, ModelError, ServiceSet,
    ServiceVector, SystemSpec, WeightMatrix, WorkloadVector,
};
pub use sim::{
    compare_minimality, maxweight_select, measure_direction, mode_window_stats, run, step,
    ArrivalKind, ArrivalModel, DirectionEstimate, MinimalityReport, Policy, SimError, SimTrace,
};
