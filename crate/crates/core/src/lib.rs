//! First-order methods for smooth non-convex optimization with convex smooth
//! inequality constraints over a simple polyhedral set.
//!
//! The main method is the inexact Moreau envelope Lagrangian method
//! ([`imela`]): a projected dual ascent step, an inexact proximal-Lagrangian
//! solve by accelerated projected gradient ([`inner`]), and an averaging step
//! on the proximal center. [`baselines`] provides iPPP, SP-LM and SSG behind
//! the same trace interface, [`kkt`] certifies approximate KKT points and
//! [`fairness`] assembles the fairness-constrained classification benchmark.
//!
//! Everything is generic over [`Scalar`] (`f32` or `f64`); the aliases at the
//! crate root fix `f64`.

pub mod baselines;
pub mod error;
pub mod fairness;
pub mod geometry;
pub mod imela;
pub mod inner;
pub mod kkt;
pub mod linalg;
pub mod nnls;
pub mod problem;
mod scalar;
pub mod test_problems;
pub mod trace;
pub mod tuning;

pub use error::{Error, Result};
pub use geometry::FeasibleSet;
pub use problem::{OracleCounter, ProblemConstants, ProblemInstance, SharedOracle, SmoothOracle};
pub use scalar::Scalar;
pub use trace::{Budget, Method, SolverTrace, TraceRecord};

pub type Problem = ProblemInstance<f64>;
pub type Problem32 = ProblemInstance<f32>;
pub type Set = FeasibleSet<f64>;
pub type Set32 = FeasibleSet<f32>;
pub type Constants = ProblemConstants<f64>;
pub type Trace = SolverTrace<f64>;
pub type Trace32 = SolverTrace<f32>;
pub type Residuals = kkt::KKTResiduals<f64>;
