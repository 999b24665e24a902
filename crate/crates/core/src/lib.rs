//! Projection proximal-point methods for `min_u ½‖Ku − g‖² + α‖u‖₁`.
//!
//! The outer loop ([`ppp::run_ppp`]) solves a sequence of quadratically
//! regularized subproblems to a relative accuracy `σ`, certified by the
//! `(v, ε)` pair from [`prox::Problem::certificate`], and then projects the
//! current iterate onto a separating hyperplane. The subproblems are solved by
//! damped iterative soft-thresholding or a generalized conditional gradient
//! method ([`inner`]).
//!
//! ```
//! use l1ppp::problems::{make_deconvolution_problem, DeconvSpec};
//! use l1ppp::{run_ppp, InnerMethod, InnerParams, PppParams, Vector};
//!
//! let (problem, _truth) = make_deconvolution_problem(&DeconvSpec::default(), 0)?;
//! let mut params = PppParams::new(InnerParams {
//!     method: InnerMethod::Gcg,
//!     mu: 0.05,
//!     sigma: 0.5,
//!     ..InnerParams::default()
//! });
//! params.total_iter_budget = Some(1000);
//! let out = run_ppp(&problem, &Vector::zeros(problem.dim()), &params)?;
//! assert!(out.trace.status.is_success());
//! assert!(out.trace.total_inner() <= 1000);
//! # Ok::<(), l1ppp::Error>(())
//! ```

// `!(x > 0.0)` is used deliberately so that NaN parameters are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod error;
pub mod inner;
pub mod io;
pub mod operators;
pub mod oracle;
pub mod ppp;
pub mod problems;
pub mod prox;
pub mod trace;

pub use baselines::{ista_run, IstaOutput, IstaParams};
pub use error::{Error, Result};
pub use inner::{solve_subproblem, InnerMethod, InnerParams, SubproblemResult, Termination};
pub use operators::{LinearOperator, NormEstimate, OperatorKind, Vector};
pub use oracle::oracle_solve;
pub use ppp::{project_hyperplane, run_ppp, run_ppp_observed, MuSchedule, OuterStep, PppOutput, PppParams};
pub use prox::{sign_set_projection, soft_threshold, Certificate, Problem};
pub use trace::{RunStatus, SolverTrace, TraceRow};
