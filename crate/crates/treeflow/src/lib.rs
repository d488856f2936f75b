//! Genealogies of critical branching populations as stochastic flows of
//! monotone maps.
//!
//! The crate covers the full pipeline from a discrete model to its continuum
//! limit and the statistics connecting the two:
//!
//! * [`offspring`] — critical offspring laws solved from per-branching
//!   energies (a Gibbs fixed point) with moments and the size-biased
//!   companion law.
//! * [`tree`] / [`enumerate`] — the Markov chain on generations of the
//!   never-dying tree: exact kernel evaluation, exhaustive enumeration at
//!   small sizes, spine sampling, and progeny tracking of subpopulations.
//! * [`graph`] — the metric space of monotone graphs (nondecreasing planar
//!   curves): exact Hausdorff and rotated metrics, composition, quadratic
//!   variation.
//! * [`embed`] — the planar embedding of a sampled tree as a two-parameter
//!   flow of monotone graphs, and its diffusive rescaling.
//! * [`sde`] — the finite-dimensional limit diffusions (total mass and
//!   subpopulation systems) integrated by Euler steps, used as cross-module
//!   oracles.
//! * [`spde`] — a Brownian-sheet driven integrator producing the limiting
//!   coalescing flow itself: profile, coupled trajectory grid, shocks.
//! * [`diagnostics`] — exact enumeration identities, Kolmogorov–Smirnov and
//!   chi-square harnesses, Hölder/tightness estimators, and the convergence
//!   battery comparing rescaled trees against the sheet flow.
//! * [`config`] / [`export`] / [`stream`] — reproducible runs: one config,
//!   one master seed, derived independent streams, byte-stable artifacts.

// `!(x > 0.0)`-style guards are used on purpose: they reject NaN along with
// the out-of-range sign, which `x <= 0.0` would silently accept.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod diagnostics;
pub mod embed;
pub mod enumerate;
pub mod error;
pub mod export;
pub mod graph;
pub mod guide;
pub mod offspring;
pub mod sde;
pub mod spde;
pub mod stats;
pub mod stream;
pub mod tree;

pub use error::{Error, Result};
pub use graph::{compose, MonotoneGraph, Point};
pub use offspring::{solve_gibbs, EnergySpec, OffspringDistribution};
pub use tree::{sample_chain, sample_chain_from, Generation, GenerationChain};
