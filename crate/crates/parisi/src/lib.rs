//! Zero-temperature Parisi measures of spherical mixed p-spin glasses.
//!
//! For a mixture `xi(x) = sum_j lambda_j x^p_j` the crate classifies the
//! Parisi measure as RS, k-RSB or k-FRSB, builds it explicitly, checks it
//! against the optimality criterion and reports the ground-state energy. An
//! independent convex solver for the Crisanti-Sommers functional serves as a
//! cross-check.
//!
//! The mixture and kernel layers are generic over [`Real`] (`f32` or `f64`).
//! Everything above them works in `f64`.

// Negated comparisons are used on purpose: they reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classifier;
pub mod error;
pub mod hset;
pub mod kernels;
pub mod measure;
pub mod mixture;
pub mod numerics;
pub mod oracle;
pub mod scalar;
pub mod solver;

pub use classifier::{
    classify, phase_scan, two_component_boundaries, BoundaryTable, ClassificationResult, ClassifyOptions,
    PhaseKind, PhaseLabel,
};
pub use error::{Error, Result};
pub use hset::{condition_kappa, Extremal, HSearch, KappaReport, Objective, Pin, TildeVerdict};
pub use kernels::{Chain, HBar, KernelProfile, ZArg};
pub use measure::{verify_parisi, Block, MeasureJson, ParisiMeasure, Segment, Tolerances, VerificationReport};
pub use mixture::MixtureSpec;
pub use oracle::{extract_phase, minimize_cs, OracleOptions, OracleSolution};
pub use scalar::Real;
pub use solver::{ChainKind, ChainSolution, FrsbSolution, RsbSolution, Solver, SolverOptions};

/// Double precision mixture, the type the solver stack uses.
pub type Mixture = MixtureSpec<f64>;
/// Single precision mixture.
pub type Mixture32 = MixtureSpec<f32>;
/// Double precision chain.
pub type Chain64 = Chain<f64>;
