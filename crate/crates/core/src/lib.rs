//! Critical branching Lévy processes killed at the origin.
//!
//! The crate simulates the particle system, solves the deterministic limit
//! problems (survival ODE, semilinear half-line PDE, blow-up boundary value
//! problem) and turns Monte Carlo ensembles into tail estimates that can be
//! compared against those limits.

pub mod ensemble;
pub mod estimators;
pub mod levy_motion;
pub mod limit_solvers;
pub mod numerics;
pub mod offspring;
pub mod particle_system;
pub mod rng;
pub mod stats;
pub mod verification;
