//! Projective splitting for monotone inclusions.
//!
//! Solves `0 ∈ T_1 z + … + T_n z` where each `T_i` is maximal monotone
//! and is activated either through its resolvent (a prox step, possibly
//! inexact) or through a forward evaluation when `T_i` is Lipschitz.
//! Each iteration builds a separating affine function from the activation
//! results and projects the current point onto the halfspace it defines.
//!
//! Beyond the solver itself, the crate computes the full set of constants
//! appearing in the method's convergence guarantees and re-checks every
//! guaranteed inequality along the actual trajectory: Fejér monotonicity,
//! separation, summability budgets, ergodic objective-gap and consensus
//! rates, strong-monotonicity rates, and linear contraction. A run is not
//! just a sequence of iterates but a checkable certificate.
//!
//! Modules:
//! - [`space`]: dense vectors and the weighted product space the method
//!   projects in.
//! - [`operators`]: prox-capable and forward-evaluable operator slots, a
//!   small operator library, and relative-error injection for inexact
//!   prox steps.
//! - [`solver`]: the iteration itself, configuration, trace records, and
//!   single-operator reference methods it must reduce to.
//! - [`rates`]: guarantee constants, summability ledgers, and certificate
//!   checks.
//! - [`problems`]: seeded benchmark instance generators with exact
//!   solution oracles.

pub mod linalg;
pub mod operators;
pub mod problems;
pub mod rates;
pub mod solver;
pub mod space;

pub use operators::{
    check_error_conditions, make_affine, make_box_indicator, make_least_squares,
    make_quadratic_gradient, make_scaled_identity, make_soft_threshold, ErrorInjector,
    ErrorMode, OperatorError, OperatorMeta, OperatorSlot,
};
pub use problems::{
    l1_least_squares_reference, make_cocoercive_strong, make_feasibility_from_boxes, make_lasso,
    make_strongly_monotone_affine, make_two_set_feasibility, ProblemError, ProblemInstance,
};
pub use rates::{
    check_alpha_lower_bound, check_bounds, check_ergodic_gap, check_ergodic_gap_single_point,
    check_fejer, check_gradient_upper_bound, check_linear_contraction, check_phi_lower_bound,
    check_separation, check_strong_rate, check_summability, ergodic_averages, BallLipschitz,
    Certificate, CertificateKind, ErgodicAverages, LedgerEntry, ProblemMeta, RateConstants,
    RatesError, SolutionOracle, StrongSlot, SummabilityLedger,
};
pub use solver::{
    n1_extragradient_reference, n1_proximal_point_reference, solve, solve_with_stop,
    BetaSchedule, IterationRecord, RhoSchedule, SolveOutcome, SolveStatus, SolverConfig,
    SolverError,
};
pub use space::{ProductPoint, SpaceError, Vector};
