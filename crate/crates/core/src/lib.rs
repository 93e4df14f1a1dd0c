//! Best-feasible-arm identification with top-two Thompson sampling.
//!
//! Arms return a Gaussian reward vector: one objective to maximise and `m`
//! constraint measures that must stay below their thresholds. The crate
//! provides
//!
//! - [`problem`]: instances and the partition of arms into the best feasible
//!   arm, feasible-but-worse arms, and infeasible arms better or worse than it;
//! - [`posterior`]: conjugate Normal beliefs, joint posterior draws and
//!   Monte-Carlo best-feasible probabilities;
//! - [`sampler`]: the top-two sampling rule, its leader-only variant, the
//!   recommendation rule and the selection-probability diagnostic;
//! - [`rates`]: the optimal allocation for a leader share, the posterior
//!   convergence rate, the optimal leader share and analytic
//!   false-evaluation rates;
//! - [`experiments`]: the six benchmark instances with published results;
//! - [`harness`]: reproducible macro-replications and report assembly;
//! - [`report`]: CSV and JSON report I/O.
//!
//! Arm indices are 0-based in the API and 1-based in every file, report
//! and message.

pub mod challenger;
pub mod error;
pub mod experiments;
pub mod harness;
pub mod posterior;
pub mod problem;
pub mod rates;
pub mod report;
pub mod sampler;

pub use error::{Error, Result};
pub use experiments::{build, ExperimentId, ExperimentSpec};
pub use harness::{run_macro, run_once, ExperimentReport, RunResult};
pub use posterior::{PosteriorDraw, PosteriorState};
pub use problem::{classify_arms, classify_arms_lenient, ArmClassification, ProblemInstance};
pub use rates::{gamma_beta, optimal_beta, solve_allocation, AllocationProfile, RateModel};
pub use sampler::{select_arm, Algorithm, Fallback, SamplerConfig};
