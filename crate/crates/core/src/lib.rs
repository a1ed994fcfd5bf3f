//! Decentralized stochastic Riemannian diffusion with diminishing step sizes.
//!
//! Agents on a communication graph each hold a local objective on a shared
//! Riemannian manifold. Every round, each agent takes a stochastic Riemannian
//! gradient step along a geodesic and then pulls towards its neighbours in its
//! own tangent space:
//!
//! ```text
//! y_i <- exp_{x_i}(-eta_t * g_i)
//! x_i <- exp_{y_i}(s * sum_j w_ij log_{y_i}(y_j))
//! ```
//!
//! with `eta_t = eta_0 / sqrt(t)`. The crate provides the geometry (Euclidean,
//! sphere, Grassmann), mixing matrices, Fréchet means, test problems with a
//! known optimum, the simulator itself, the theoretical bound calculators, and
//! Monte-Carlo certification suites for the comparison inequalities the bounds
//! rest on.
//!
//! Data-parallel loops (agents within a round, seeds, Monte-Carlo samples) run
//! on rayon when the `parallel` feature is enabled and fall back to plain
//! iterators otherwise. Results are identical either way because every random
//! stream is keyed by `(seed, purpose, agent, iteration)`, never by thread.

// Negated float comparisons are used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod curvature;
pub mod exec;
pub mod frechet;
pub mod manifolds;
pub mod network;
pub mod optimizer;
pub mod problems;
pub mod rng;
pub mod runner;
pub mod suites;

pub use curvature::{GeometryConstants, TheoremConstants};
pub use exec::Exec;
pub use frechet::{frechet_mean, frechet_variance, FrechetOptions, FrechetResult};
pub use manifolds::{Geometry, Manifold, ManifoldError, ManifoldKind, ManifoldSpec, Point, TangentVector};
pub use network::{Graph, MixingMatrix};
pub use optimizer::{Algorithm, IterationRecord, RunConfig, Trace};
pub use problems::{Problem, StochGradOracle};
pub use rng::SeedStream;
