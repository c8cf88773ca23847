//! Stochastic sandpiles on the line and on 2D boxes.
//!
//! The crate has two halves that validate each other:
//!
//! * A simulation half: random toppling rules ([`lattice::TopplingRule`]),
//!   an abelian stabilization engine with exit accounting, the
//!   driven-dissipative Markov chain, 2D density/percolation sweeps, and
//!   single-source piles on the integer line.
//! * An analytic half, generic over the scalar type: closed forms and
//!   recurrence solvers for exit probabilities ([`gambler`]) and hole
//!   probabilities ([`holes`]), the exact transition matrix and stationary
//!   distribution of the chain on recurrent states ([`chain`]), and a
//!   brute-force absorption solver in exact rational arithmetic
//!   ([`oracle`]) that anchors everything else on tiny instances.
//!
//! Analytic tables accept any [`Scalar`]; use [`Real`] for fast
//! floating-point tables and [`Exact`] for arbitrary-precision rational
//! ones, where every identity holds with equality instead of tolerance.

pub mod chain;
pub mod error;
pub mod gambler;
pub mod grid2d;
pub mod holes;
pub mod lattice;
pub mod linalg;
pub mod oracle;
pub mod rng;
pub mod scalar;
pub mod single_source;
pub mod stats;

pub use error::{Result, SandpileError};
pub use scalar::Scalar;

/// Floating-point scalar of the default (fast) mode.
pub type Real = f64;
/// Arbitrary-precision rational scalar of the exact mode.
pub type Exact = num_rational::BigRational;

/// Exit-probability table in the default mode.
pub type SgrTableReal = gambler::SgrTable<Real>;
/// Exit-probability table in exact mode.
pub type SgrTableExact = gambler::SgrTable<Exact>;
/// Hole-probability table in the default mode.
pub type HoleTableReal = holes::HoleTable<Real>;
/// Hole-probability table in exact mode.
pub type HoleTableExact = holes::HoleTable<Exact>;
