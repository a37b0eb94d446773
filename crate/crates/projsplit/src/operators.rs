//! Operator slots: the per-operator computations of one iteration.
//!
//! Each operator in the inclusion `0 ∈ T_1 z + … + T_n z` is activated in
//! one of two ways. A backward slot evaluates the resolvent
//! `x = (I + rho T)^{-1}(a)` at `a = z + rho w + e`, where `e` is an
//! optional relative error, and recovers `y = (a - x) / rho` so that
//! `y ∈ T x` exactly. A forward slot evaluates a single-valued Lipschitz
//! operator twice: `x = z - rho (T z - w)`, `y = T x`.
//!
//! The error vector `e` is only admissible when three relative-error
//! conditions hold; [`check_error_conditions`] measures them and
//! [`ErrorInjector`] produces errors that are guaranteed to pass by
//! construction (draw a candidate, activate, re-check, shrink).

use crate::linalg::{LuFactors, Matrix};
use crate::space::Vector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::cell::RefCell;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OperatorError {
    #[error("invalid operator parameter: {0}")]
    InvalidParameter(String),
    #[error("prox evaluation failed: {0}")]
    ProxFailure(String),
    #[error("stepsize {rho} outside the admissible range (0, {limit}) for this slot")]
    StepsizeViolation { rho: f64, limit: f64 },
    #[error(transparent)]
    Space(#[from] crate::space::SpaceError),
}

/// Constants an operator declares about itself. Declared values are
/// guarantees: empirical probes must never exceed them.
#[derive(Debug, Clone, Default, Serialize)]
pub struct OperatorMeta {
    /// Lipschitz modulus of the (single-valued) operator. Required for
    /// forward slots; optional informational metadata for backward slots.
    pub lipschitz: Option<f64>,
    /// Cocoercivity modulus `G`: `<u - v, Tu - Tv> >= ||Tu - Tv||^2 / G`.
    pub cocoercivity: Option<f64>,
    /// Strong monotonicity modulus `mu`:
    /// `<u - v, Tu - Tv> >= mu ||u - v||^2`.
    pub strong_monotonicity: Option<f64>,
}

/// Set-valued maximal monotone operator activated through its resolvent.
pub trait BackwardOperator {
    /// `(I + rho T)^{-1}(input)` for `rho > 0`.
    fn prox(&self, input: &Vector, rho: f64) -> Result<Vector, OperatorError>;

    fn meta(&self) -> &OperatorMeta;

    fn name(&self) -> &'static str;

    /// Violation of `y ∈ T x` when membership is decidable in closed
    /// form; `None` otherwise. Zero means exact membership.
    fn graph_residual(&self, x: &Vector, y: &Vector) -> Option<f64>;

    /// `f(x)` when `T` is the subdifferential of a function `f`.
    fn function_value(&self, _x: &Vector) -> Option<f64> {
        None
    }

    /// Bound on `||g||` over subgradients `g` of `f` taken on the ball of
    /// the given radius, when `f` is Lipschitz there.
    fn gradient_bound_on_ball(&self, _radius: f64, _dim: usize) -> Option<f64> {
        None
    }

    /// Ambient dimension when the operator fixes one.
    fn dim_hint(&self) -> Option<usize> {
        None
    }
}

/// Single-valued Lipschitz monotone operator activated by evaluation.
pub trait ForwardOperator {
    fn apply(&self, x: &Vector) -> Vector;

    fn meta(&self) -> &OperatorMeta;

    fn name(&self) -> &'static str;

    fn lipschitz(&self) -> f64 {
        self.meta()
            .lipschitz
            .expect("forward operators must declare a Lipschitz modulus")
    }

    /// `f(x)` when `T` is the gradient of a function `f`.
    fn function_value(&self, _x: &Vector) -> Option<f64> {
        None
    }

    fn gradient_bound_on_ball(&self, _radius: f64, _dim: usize) -> Option<f64> {
        None
    }

    fn dim_hint(&self) -> Option<usize> {
        None
    }
}

/// One operator of the problem together with its activation style.
pub enum OperatorSlot {
    Backward(Box<dyn BackwardOperator>),
    Forward(Box<dyn ForwardOperator>),
}

impl std::fmt::Debug for OperatorSlot {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OperatorSlot::Backward(op) => write!(f, "Backward({})", op.name()),
            OperatorSlot::Forward(op) => write!(f, "Forward({})", op.name()),
        }
    }
}

impl OperatorSlot {
    pub fn is_backward(&self) -> bool {
        matches!(self, OperatorSlot::Backward(_))
    }

    pub fn is_forward(&self) -> bool {
        matches!(self, OperatorSlot::Forward(_))
    }

    pub fn meta(&self) -> &OperatorMeta {
        match self {
            OperatorSlot::Backward(op) => op.meta(),
            OperatorSlot::Forward(op) => op.meta(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            OperatorSlot::Backward(op) => op.name(),
            OperatorSlot::Forward(op) => op.name(),
        }
    }

    pub fn function_value(&self, x: &Vector) -> Option<f64> {
        match self {
            OperatorSlot::Backward(op) => op.function_value(x),
            OperatorSlot::Forward(op) => op.function_value(x),
        }
    }

    pub fn gradient_bound_on_ball(&self, radius: f64, dim: usize) -> Option<f64> {
        match self {
            OperatorSlot::Backward(op) => op.gradient_bound_on_ball(radius, dim),
            OperatorSlot::Forward(op) => op.gradient_bound_on_ball(radius, dim),
        }
    }

    pub fn dim_hint(&self) -> Option<usize> {
        match self {
            OperatorSlot::Backward(op) => op.dim_hint(),
            OperatorSlot::Forward(op) => op.dim_hint(),
        }
    }

    /// Violation of `y ∈ T x`; for forward slots this is `||T x - y||`.
    pub fn graph_residual(&self, x: &Vector, y: &Vector) -> Option<f64> {
        match self {
            OperatorSlot::Backward(op) => op.graph_residual(x, y),
            OperatorSlot::Forward(op) => Some(op.apply(x).dist(y)),
        }
    }
}

// ---------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------

/// Result of a backward (resolvent) activation: `y ∈ T x` exactly, with
/// `x + rho y = z + rho w + e`.
#[derive(Debug, Clone)]
pub struct BackwardActivation {
    pub x: Vector,
    pub y: Vector,
    pub e: Vector,
}

/// Result of a forward activation: `x = z - rho (T z - w)`, `y = T x`.
/// `t_z` keeps the intermediate `T z` for the residual ledgers.
#[derive(Debug, Clone)]
pub struct ForwardActivation {
    pub x: Vector,
    pub y: Vector,
    pub t_z: Vector,
}

/// Runs one backward activation with error injection. The injector draws
/// a candidate error, re-activates, and shrinks until the relative-error
/// conditions hold, so the returned `e` is always admissible.
pub fn backward_activate(
    op: &dyn BackwardOperator,
    z: &Vector,
    w: &Vector,
    rho: f64,
    injector: &mut ErrorInjector,
) -> Result<BackwardActivation, OperatorError> {
    if !(rho.is_finite() && rho > 0.0) {
        return Err(OperatorError::StepsizeViolation {
            rho,
            limit: f64::INFINITY,
        });
    }
    let base = z.axpy(rho, w);
    let activate = |e: &Vector| -> Result<(Vector, Vector), OperatorError> {
        let input = base.add(e);
        let x = op.prox(&input, rho)?;
        if !x.is_finite() {
            return Err(OperatorError::ProxFailure(format!(
                "{} produced a non-finite point",
                op.name()
            )));
        }
        let y = input.sub(&x).scale(1.0 / rho);
        Ok((x, y))
    };

    let zero = Vector::zeros(z.dim());
    let (x_exact, y_exact) = activate(&zero)?;
    let Some(candidate) = injector.candidate(z, &x_exact) else {
        return Ok(BackwardActivation {
            x: x_exact,
            y: y_exact,
            e: zero,
        });
    };

    let mut e = candidate;
    for _ in 0..=60 {
        let (x, y) = activate(&e)?;
        let check = check_error_conditions(
            z,
            &x,
            &y,
            w,
            rho,
            &e,
            injector.sigma(),
            injector.delta(),
        );
        if check.pass() {
            return Ok(BackwardActivation { x, y, e });
        }
        e = e.scale(0.5);
    }
    Ok(BackwardActivation {
        x: x_exact,
        y: y_exact,
        e: zero,
    })
}

/// Runs one forward activation. Requires `rho < 1 / L` strictly.
pub fn forward_activate(
    op: &dyn ForwardOperator,
    z: &Vector,
    w: &Vector,
    rho: f64,
) -> Result<ForwardActivation, OperatorError> {
    let l = op.lipschitz();
    let limit = 1.0 / l;
    if !(rho.is_finite() && rho > 0.0 && rho * l < 1.0) {
        return Err(OperatorError::StepsizeViolation { rho, limit });
    }
    let t_z = op.apply(z);
    let x = z.axpy(-rho, &t_z.sub(w));
    if !x.is_finite() {
        return Err(OperatorError::ProxFailure(format!(
            "{} produced a non-finite forward point",
            op.name()
        )));
    }
    let y = op.apply(&x);
    Ok(ForwardActivation { x, y, t_z })
}

// ---------------------------------------------------------------------
// Relative-error conditions and injection
// ---------------------------------------------------------------------

/// Slacks of the three relative-error conditions for a backward
/// activation; every slack must be nonnegative for the error to be
/// admissible.
#[derive(Debug, Clone, Copy)]
pub struct ErrorCheck {
    /// `<z - x, e> + sigma ||z - x||^2`.
    pub alignment_slack: f64,
    /// `rho sigma ||y - w||^2 - <e, y - w>`.
    pub residual_slack: f64,
    /// `delta ||z - x||^2 - ||e||^2`.
    pub magnitude_slack: f64,
}

impl ErrorCheck {
    pub fn pass(&self) -> bool {
        self.alignment_slack >= 0.0 && self.residual_slack >= 0.0 && self.magnitude_slack >= 0.0
    }

    pub fn min_slack(&self) -> f64 {
        self.alignment_slack
            .min(self.residual_slack)
            .min(self.magnitude_slack)
    }
}

/// Measures the three relative-error conditions for a backward
/// activation `(x, y)` produced from `(z, w, rho)` with error `e`.
#[allow(clippy::too_many_arguments)]
pub fn check_error_conditions(
    z: &Vector,
    x: &Vector,
    y: &Vector,
    w: &Vector,
    rho: f64,
    e: &Vector,
    sigma: f64,
    delta: f64,
) -> ErrorCheck {
    let zx = z.sub(x);
    let yw = y.sub(w);
    ErrorCheck {
        alignment_slack: zx.dot(e) + sigma * zx.norm_sq(),
        residual_slack: rho * sigma * yw.norm_sq() - e.dot(&yw),
        magnitude_slack: delta * zx.norm_sq() - e.norm_sq(),
    }
}

/// How candidate error directions are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ErrorMode {
    /// No error: exact resolvent evaluations.
    None,
    /// Random direction, oriented to keep a nonnegative alignment with
    /// `z - x` so that shrinking converges even when `sigma = 0`.
    ScaledRandom,
    /// Direction `-(z - x)`: the worst case for the alignment condition.
    AdversarialAligned,
}

/// Draws candidate inexactness vectors for backward activations.
///
/// Candidates are sized from the exact displacement `||z - x||` and the
/// admissible region, then validated post hoc by the activation loop, so
/// the injected error always satisfies the relative-error conditions at
/// the point it actually produced.
#[derive(Debug, Clone)]
pub struct ErrorInjector {
    mode: ErrorMode,
    sigma: f64,
    delta: f64,
    rng: ChaCha8Rng,
}

impl ErrorInjector {
    pub fn new(mode: ErrorMode, sigma: f64, delta: f64, seed: u64) -> Result<Self, OperatorError> {
        if !(0.0..1.0).contains(&sigma) || !sigma.is_finite() {
            return Err(OperatorError::InvalidParameter(format!(
                "sigma must lie in [0, 1), got {sigma}"
            )));
        }
        if !(delta.is_finite() && delta >= 0.0) {
            return Err(OperatorError::InvalidParameter(format!(
                "delta must be nonnegative, got {delta}"
            )));
        }
        Ok(ErrorInjector {
            mode,
            sigma,
            delta,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn none() -> Self {
        ErrorInjector {
            mode: ErrorMode::None,
            sigma: 0.0,
            delta: 0.0,
            rng: ChaCha8Rng::seed_from_u64(0),
        }
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Draws an initial candidate error for an activation whose exact
    /// resolvent point is `x_exact`. Returns `None` when no error should
    /// be injected (mode `None`, zero budget, or zero displacement).
    fn candidate(&mut self, z: &Vector, x_exact: &Vector) -> Option<Vector> {
        if self.mode == ErrorMode::None || self.delta == 0.0 {
            return None;
        }
        let zx = z.sub(x_exact);
        let displacement = zx.norm();
        if displacement == 0.0 {
            return None;
        }
        let direction = match self.mode {
            ErrorMode::None => unreachable!(),
            ErrorMode::ScaledRandom => {
                let g = crate::linalg::gaussian_vector(z.dim(), &mut self.rng);
                let norm = g.norm();
                if norm == 0.0 {
                    return None;
                }
                let unit = g.scale(1.0 / norm);
                // Orient toward z - x so the alignment condition has a
                // strictly positive limit as the candidate shrinks.
                if unit.dot(&zx) < 0.0 {
                    unit.scale(-1.0)
                } else {
                    unit
                }
            }
            ErrorMode::AdversarialAligned => zx.scale(-1.0 / displacement),
        };
        let mut budget = self.delta.sqrt();
        if self.mode == ErrorMode::AdversarialAligned {
            budget = budget.min(self.sigma);
        }
        if budget == 0.0 {
            return None;
        }
        Some(direction.scale(0.9 * budget * displacement))
    }
}

// ---------------------------------------------------------------------
// Operator library
// ---------------------------------------------------------------------

/// Subdifferential of `lambda ||x||_1`; the resolvent is soft
/// thresholding at level `rho * lambda`.
#[derive(Debug, Clone)]
pub struct SoftThreshold {
    lambda: f64,
    meta: OperatorMeta,
}

impl SoftThreshold {
    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

impl BackwardOperator for SoftThreshold {
    fn prox(&self, input: &Vector, rho: f64) -> Result<Vector, OperatorError> {
        let level = rho * self.lambda;
        let out = input
            .as_slice()
            .iter()
            .map(|&a| a.signum() * (a.abs() - level).max(0.0))
            .collect();
        Ok(Vector::new(out)?)
    }

    fn meta(&self) -> &OperatorMeta {
        &self.meta
    }

    fn name(&self) -> &'static str {
        "soft_threshold"
    }

    fn graph_residual(&self, x: &Vector, y: &Vector) -> Option<f64> {
        let lambda = self.lambda;
        let mut worst: f64 = 0.0;
        for (&xi, &yi) in x.as_slice().iter().zip(y.as_slice()) {
            let violation = if xi > 0.0 {
                (yi - lambda).abs()
            } else if xi < 0.0 {
                (yi + lambda).abs()
            } else {
                (yi.abs() - lambda).max(0.0)
            };
            worst = worst.max(violation);
        }
        Some(worst)
    }

    fn function_value(&self, x: &Vector) -> Option<f64> {
        Some(self.lambda * x.as_slice().iter().map(|v| v.abs()).sum::<f64>())
    }

    fn gradient_bound_on_ball(&self, _radius: f64, dim: usize) -> Option<f64> {
        Some(self.lambda * (dim as f64).sqrt())
    }
}

pub fn make_soft_threshold(lambda: f64) -> Result<OperatorSlot, OperatorError> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(OperatorError::InvalidParameter(format!(
            "soft threshold level must be nonnegative, got {lambda}"
        )));
    }
    Ok(OperatorSlot::Backward(Box::new(SoftThreshold {
        lambda,
        meta: OperatorMeta {
            strong_monotonicity: Some(0.0),
            ..OperatorMeta::default()
        },
    })))
}

/// Normal cone of the box `[lo, hi]`; the resolvent is the projection.
#[derive(Debug, Clone)]
pub struct BoxIndicator {
    lo: Vector,
    hi: Vector,
    meta: OperatorMeta,
}

impl BackwardOperator for BoxIndicator {
    fn prox(&self, input: &Vector, _rho: f64) -> Result<Vector, OperatorError> {
        let out = input
            .as_slice()
            .iter()
            .zip(self.lo.as_slice())
            .zip(self.hi.as_slice())
            .map(|((&a, &lo), &hi)| a.clamp(lo, hi))
            .collect();
        Ok(Vector::new(out)?)
    }

    fn meta(&self) -> &OperatorMeta {
        &self.meta
    }

    fn name(&self) -> &'static str {
        "box_indicator"
    }

    fn graph_residual(&self, x: &Vector, y: &Vector) -> Option<f64> {
        let mut worst: f64 = 0.0;
        for ((&xi, &yi), (&lo, &hi)) in x
            .as_slice()
            .iter()
            .zip(y.as_slice())
            .zip(self.lo.as_slice().iter().zip(self.hi.as_slice()))
        {
            worst = worst.max(lo - xi).max(xi - hi);
            let xi_clamped = xi.clamp(lo, hi);
            let cone_violation = if xi_clamped <= lo && xi_clamped >= hi {
                0.0
            } else if xi_clamped <= lo {
                yi.max(0.0)
            } else if xi_clamped >= hi {
                (-yi).max(0.0)
            } else {
                yi.abs()
            };
            worst = worst.max(cone_violation);
        }
        Some(worst)
    }

    fn function_value(&self, x: &Vector) -> Option<f64> {
        let inside = x
            .as_slice()
            .iter()
            .zip(self.lo.as_slice().iter().zip(self.hi.as_slice()))
            .all(|(&xi, (&lo, &hi))| xi >= lo && xi <= hi);
        Some(if inside { 0.0 } else { f64::INFINITY })
    }

    fn dim_hint(&self) -> Option<usize> {
        Some(self.lo.dim())
    }
}

pub fn make_box_indicator(lo: Vector, hi: Vector) -> Result<OperatorSlot, OperatorError> {
    if lo.dim() != hi.dim() {
        return Err(OperatorError::InvalidParameter(format!(
            "box bounds disagree on dimension: {} vs {}",
            lo.dim(),
            hi.dim()
        )));
    }
    if lo
        .as_slice()
        .iter()
        .zip(hi.as_slice())
        .any(|(&l, &h)| l > h)
    {
        return Err(OperatorError::InvalidParameter(
            "box lower bound exceeds upper bound".into(),
        ));
    }
    Ok(OperatorSlot::Backward(Box::new(BoxIndicator {
        lo,
        hi,
        meta: OperatorMeta {
            strong_monotonicity: Some(0.0),
            ..OperatorMeta::default()
        },
    })))
}

/// Monotone affine operator `T x = A x + b` activated through its
/// resolvent: `(I + rho A) x = input - rho b` solved directly. Keeps a
/// small cache of factorizations keyed by stepsize.
pub struct AffineProx {
    a: Matrix,
    b: Vector,
    meta: OperatorMeta,
    cache: RefCell<Vec<(f64, LuFactors)>>,
}

impl std::fmt::Debug for AffineProx {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AffineProx")
            .field("dim", &self.b.dim())
            .finish()
    }
}

impl AffineProx {
    pub(crate) fn with_declared(a: Matrix, b: Vector, meta: OperatorMeta) -> Self {
        AffineProx {
            a,
            b,
            meta,
            cache: RefCell::new(Vec::new()),
        }
    }
}

impl BackwardOperator for AffineProx {
    fn prox(&self, input: &Vector, rho: f64) -> Result<Vector, OperatorError> {
        let rhs = input.axpy(-rho, &self.b);
        let mut cache = self.cache.borrow_mut();
        if let Some((_, factors)) = cache.iter().find(|(r, _)| *r == rho) {
            return factors
                .solve(&rhs)
                .map_err(|e| OperatorError::ProxFailure(e.to_string()));
        }
        let shifted = self.a.scale_all(rho).add_scaled_identity(1.0);
        let factors = crate::linalg::lu_factor(&shifted)
            .map_err(|e| OperatorError::ProxFailure(e.to_string()))?;
        let solution = factors
            .solve(&rhs)
            .map_err(|e| OperatorError::ProxFailure(e.to_string()))?;
        if cache.len() >= 16 {
            cache.clear();
        }
        cache.push((rho, factors));
        Ok(solution)
    }

    fn meta(&self) -> &OperatorMeta {
        &self.meta
    }

    fn name(&self) -> &'static str {
        "affine_prox"
    }

    fn graph_residual(&self, x: &Vector, y: &Vector) -> Option<f64> {
        Some(self.a.matvec(x).add(&self.b).dist(y))
    }

    fn function_value(&self, x: &Vector) -> Option<f64> {
        if self.a.is_symmetric(1e-12) {
            Some(0.5 * x.dot(&self.a.matvec(x)) + self.b.dot(x))
        } else {
            None
        }
    }

    fn gradient_bound_on_ball(&self, radius: f64, _dim: usize) -> Option<f64> {
        self.meta
            .lipschitz
            .map(|l| l * radius + self.b.norm())
    }

    fn dim_hint(&self) -> Option<usize> {
        Some(self.b.dim())
    }
}

pub fn make_affine(a: Matrix, b: Vector) -> Result<OperatorSlot, OperatorError> {
    validate_symmetric_psd("make_affine", &a, &b)?;
    let (l, mu) = symmetric_extremes(&a);
    Ok(OperatorSlot::Backward(Box::new(AffineProx::with_declared(
        a,
        b,
        OperatorMeta {
            lipschitz: Some(l),
            cocoercivity: None,
            strong_monotonicity: Some(mu),
        },
    ))))
}

/// Affine forward operator `T x = A x + b` with declared constants.
/// When `A` is symmetric PSD this is the gradient of the quadratic
/// `x^T A x / 2 + b^T x` and is cocoercive.
#[derive(Debug, Clone)]
pub struct AffineForward {
    a: Matrix,
    b: Vector,
    meta: OperatorMeta,
    symmetric: bool,
}

impl AffineForward {
    pub(crate) fn with_declared(a: Matrix, b: Vector, meta: OperatorMeta) -> Self {
        let symmetric = a.is_symmetric(1e-12);
        AffineForward {
            a,
            b,
            meta,
            symmetric,
        }
    }
}

impl ForwardOperator for AffineForward {
    fn apply(&self, x: &Vector) -> Vector {
        self.a.matvec(x).add(&self.b)
    }

    fn meta(&self) -> &OperatorMeta {
        &self.meta
    }

    fn name(&self) -> &'static str {
        "affine_forward"
    }

    fn function_value(&self, x: &Vector) -> Option<f64> {
        if self.symmetric {
            Some(0.5 * x.dot(&self.a.matvec(x)) + self.b.dot(x))
        } else {
            None
        }
    }

    fn gradient_bound_on_ball(&self, radius: f64, _dim: usize) -> Option<f64> {
        self.meta
            .lipschitz
            .map(|l| l * radius + self.b.norm())
    }

    fn dim_hint(&self) -> Option<usize> {
        Some(self.b.dim())
    }
}

pub fn make_quadratic_gradient(a: Matrix, b: Vector) -> Result<OperatorSlot, OperatorError> {
    validate_symmetric_psd("make_quadratic_gradient", &a, &b)?;
    let (l, mu) = symmetric_extremes(&a);
    Ok(OperatorSlot::Forward(Box::new(AffineForward::with_declared(
        a,
        b,
        OperatorMeta {
            lipschitz: Some(l),
            cocoercivity: Some(l),
            strong_monotonicity: Some(mu),
        },
    ))))
}

/// `T x = c x` with `c > 0`: Lipschitz, cocoercive, and strongly
/// monotone with all three moduli equal to `c`.
#[derive(Debug, Clone)]
pub struct ScaledIdentity {
    c: f64,
    meta: OperatorMeta,
}

impl ForwardOperator for ScaledIdentity {
    fn apply(&self, x: &Vector) -> Vector {
        x.scale(self.c)
    }

    fn meta(&self) -> &OperatorMeta {
        &self.meta
    }

    fn name(&self) -> &'static str {
        "scaled_identity"
    }

    fn function_value(&self, x: &Vector) -> Option<f64> {
        Some(0.5 * self.c * x.norm_sq())
    }

    fn gradient_bound_on_ball(&self, radius: f64, _dim: usize) -> Option<f64> {
        Some(self.c * radius)
    }
}

pub fn make_scaled_identity(c: f64) -> Result<OperatorSlot, OperatorError> {
    if !(c.is_finite() && c > 0.0) {
        return Err(OperatorError::InvalidParameter(format!(
            "scaled identity requires c > 0, got {c}"
        )));
    }
    Ok(OperatorSlot::Forward(Box::new(ScaledIdentity {
        c,
        meta: OperatorMeta {
            lipschitz: Some(c),
            cocoercivity: Some(c),
            strong_monotonicity: Some(c),
        },
    })))
}

/// Gradient of the least-squares objective `x -> ||A x - b||^2 / 2` for a
/// rectangular `A`: `T x = A^T (A x - b)`, evaluated through the cached
/// Gram matrix `A^T A`.
#[derive(Debug, Clone)]
pub struct LeastSquaresGradient {
    a: Matrix,
    b: Vector,
    gram: Matrix,
    atb: Vector,
    meta: OperatorMeta,
}

impl ForwardOperator for LeastSquaresGradient {
    fn apply(&self, x: &Vector) -> Vector {
        self.gram.matvec(x).sub(&self.atb)
    }

    fn meta(&self) -> &OperatorMeta {
        &self.meta
    }

    fn name(&self) -> &'static str {
        "least_squares_gradient"
    }

    fn function_value(&self, x: &Vector) -> Option<f64> {
        Some(0.5 * self.a.matvec(x).sub(&self.b).norm_sq())
    }

    fn gradient_bound_on_ball(&self, radius: f64, _dim: usize) -> Option<f64> {
        self.meta
            .lipschitz
            .map(|l| l * radius + self.atb.norm())
    }

    fn dim_hint(&self) -> Option<usize> {
        Some(self.a.cols())
    }
}

pub fn make_least_squares(a: Matrix, b: Vector) -> Result<OperatorSlot, OperatorError> {
    if a.rows() == 0 || a.cols() == 0 || a.rows() != b.dim() {
        return Err(OperatorError::InvalidParameter(format!(
            "make_least_squares: matrix is {}x{} with target of dimension {}",
            a.rows(),
            a.cols(),
            b.dim()
        )));
    }
    let gram = a.transpose().matmul(&a);
    let atb = a.matvec_t(&b);
    let (l, mu) = symmetric_extremes(&gram);
    Ok(OperatorSlot::Forward(Box::new(LeastSquaresGradient {
        a,
        b,
        gram,
        atb,
        meta: OperatorMeta {
            lipschitz: Some(l),
            cocoercivity: Some(l),
            strong_monotonicity: Some(mu),
        },
    })))
}

fn validate_symmetric_psd(who: &str, a: &Matrix, b: &Vector) -> Result<(), OperatorError> {
    if a.rows() != a.cols() || a.rows() != b.dim() {
        return Err(OperatorError::InvalidParameter(format!(
            "{who}: matrix is {}x{} with offset of dimension {}",
            a.rows(),
            a.cols(),
            b.dim()
        )));
    }
    if !a.is_symmetric(1e-10) {
        return Err(OperatorError::InvalidParameter(format!(
            "{who}: matrix must be symmetric"
        )));
    }
    if !a.psd_probe(64) {
        return Err(OperatorError::InvalidParameter(format!(
            "{who}: matrix must be positive semidefinite"
        )));
    }
    Ok(())
}

/// Largest and smallest eigenvalue estimates for a symmetric PSD matrix,
/// nudged outward/inward so the declared Lipschitz constant is never an
/// underestimate and the declared strong-monotonicity modulus never an
/// overestimate.
fn symmetric_extremes(a: &Matrix) -> (f64, f64) {
    let raw_max = a.spectral_norm_estimate(600, 0x51ce);
    let l = raw_max * (1.0 + 1e-9) + 1e-12;
    let complement = a.scale_all(-1.0).add_scaled_identity(l);
    let raw_gap = complement.spectral_norm_estimate(600, 0xace5);
    let mu = ((l - raw_gap) * (1.0 - 1e-9) - 1e-12).max(0.0);
    (l, mu)
}

// ---------------------------------------------------------------------
// Empirical probes
// ---------------------------------------------------------------------

/// Worst-case ratios measured on random point pairs. Declared constants
/// are guarantees, so each measured quantity must stay on the declared
/// side (up to roundoff slack).
#[derive(Debug, Clone, Copy)]
pub struct SlotProbe {
    /// max of `||Tu - Tv|| / ||u - v||` (forward slots only).
    pub lipschitz_ratio: f64,
    /// min of `<u - v, Tu - Tv> - ||Tu - Tv||^2 / G` when `G` declared.
    pub cocoercivity_gap: f64,
    /// min of `<u - v, Tu - Tv> - mu ||u - v||^2` when `mu` declared.
    pub strong_monotonicity_gap: f64,
    /// min of `<u - v, Tu - Tv>` (monotonicity itself).
    pub monotone_gap: f64,
}

/// Samples random pairs through the slot and measures the declared
/// constants. Backward slots are probed through resolvent graph pairs
/// `(prox(a), (a - prox(a)) / rho)`.
pub fn probe_slot(slot: &OperatorSlot, dim: usize, samples: usize, seed: u64) -> SlotProbe {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let meta = slot.meta();
    let mut probe = SlotProbe {
        lipschitz_ratio: 0.0,
        cocoercivity_gap: f64::INFINITY,
        strong_monotonicity_gap: f64::INFINITY,
        monotone_gap: f64::INFINITY,
    };
    for _ in 0..samples {
        let scale = 10.0f64.powf(rng.random_range(-1.0..1.5));
        let (xu, yu, xv, yv) = match slot {
            OperatorSlot::Forward(op) => {
                let u = crate::linalg::gaussian_vector(dim, &mut rng).scale(scale);
                let v = crate::linalg::gaussian_vector(dim, &mut rng).scale(scale);
                let tu = op.apply(&u);
                let tv = op.apply(&v);
                (u, tu, v, tv)
            }
            OperatorSlot::Backward(op) => {
                let rho = 10.0f64.powf(rng.random_range(-1.0..1.0));
                let au = crate::linalg::gaussian_vector(dim, &mut rng).scale(scale);
                let av = crate::linalg::gaussian_vector(dim, &mut rng).scale(scale);
                let xu = op.prox(&au, rho).expect("probe prox failed");
                let xv = op.prox(&av, rho).expect("probe prox failed");
                let yu = au.sub(&xu).scale(1.0 / rho);
                let yv = av.sub(&xv).scale(1.0 / rho);
                (xu, yu, xv, yv)
            }
        };
        let dx = xu.sub(&xv);
        let dy = yu.sub(&yv);
        let gap = dx.dot(&dy);
        probe.monotone_gap = probe.monotone_gap.min(gap);
        if dx.norm() > 1e-12 {
            probe.lipschitz_ratio = probe.lipschitz_ratio.max(dy.norm() / dx.norm());
        }
        if let Some(g) = meta.cocoercivity {
            probe.cocoercivity_gap = probe.cocoercivity_gap.min(gap - dy.norm_sq() / g);
        }
        if let Some(mu) = meta.strong_monotonicity {
            probe.strong_monotonicity_gap =
                probe.strong_monotonicity_gap.min(gap - mu * dx.norm_sq());
        }
    }
    probe
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{random_orthogonal, symmetric_with_spectrum};
    use proptest::prelude::*;
    use rand::SeedableRng;

    fn v(entries: &[f64]) -> Vector {
        Vector::new(entries.to_vec()).unwrap()
    }

    fn prox_of(slot: &OperatorSlot, input: &Vector, rho: f64) -> Vector {
        match slot {
            OperatorSlot::Backward(op) => op.prox(input, rho).unwrap(),
            _ => panic!("expected a backward slot"),
        }
    }

    #[test]
    fn soft_threshold_prox_matches_hand_values() {
        let slot = make_soft_threshold(1.0).unwrap();
        let got = prox_of(&slot, &v(&[3.0, -0.5, 1.0, -3.0]), 1.0);
        assert_eq!(got.as_slice(), &[2.0, 0.0, 0.0, -2.0]);
        let scaled = prox_of(&slot, &v(&[-3.0]), 2.0);
        assert_eq!(scaled.as_slice(), &[-1.0]);
    }

    #[test]
    fn box_projection_matches_hand_values() {
        let slot = make_box_indicator(v(&[-1.0, -1.0, -1.0]), v(&[2.0, 2.0, 2.0])).unwrap();
        let got = prox_of(&slot, &v(&[3.0, -5.0, 0.5]), 0.7);
        assert_eq!(got.as_slice(), &[2.0, -1.0, 0.5]);
    }

    #[test]
    fn affine_prox_matches_scalar_formula() {
        let a = Matrix::from_rows(vec![vec![2.0]]).unwrap();
        let slot = make_affine(a, v(&[1.0])).unwrap();
        let got = prox_of(&slot, &v(&[4.0]), 0.5);
        assert!((got.as_slice()[0] - 1.75).abs() < 1e-15);
    }

    #[test]
    fn backward_activation_reconstructs_input_exactly() {
        let slot = make_soft_threshold(0.5).unwrap();
        let OperatorSlot::Backward(op) = &slot else {
            unreachable!()
        };
        let z = v(&[2.0, -1.0, 0.2]);
        let w = v(&[0.1, 0.3, -0.2]);
        let rho = 1.7;
        let act = backward_activate(op.as_ref(), &z, &w, rho, &mut ErrorInjector::none()).unwrap();
        let reconstructed = act.x.axpy(rho, &act.y);
        let target = z.axpy(rho, &w);
        assert!(reconstructed.dist(&target) < 1e-12);
        // y is recovered by division, so the closed-form membership check
        // sees at most a rounding-level defect.
        assert!(op.graph_residual(&act.x, &act.y).unwrap() <= 1e-14);
    }

    #[test]
    fn resolvent_fixed_point_on_graph_pairs() {
        let lambda = 0.8;
        let slot = make_soft_threshold(lambda).unwrap();
        let x = v(&[2.0, 0.0, -1.0]);
        let y = v(&[lambda, 0.3 * lambda, -lambda]);
        for rho in [0.25, 1.0, 4.0] {
            let got = prox_of(&slot, &x.axpy(rho, &y), rho);
            assert!(got.dist(&x) < 1e-12, "rho {rho}");
        }

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let q = random_orthogonal(4, &mut rng);
        let a = symmetric_with_spectrum(&q, &[0.0, 0.5, 1.0, 2.0]);
        let b = crate::linalg::gaussian_vector(4, &mut rng);
        let affine = make_affine(a.clone(), b.clone()).unwrap();
        let x = crate::linalg::gaussian_vector(4, &mut rng);
        let y = a.matvec(&x).add(&b);
        let got = prox_of(&affine, &x.axpy(1.3, &y), 1.3);
        assert!(got.dist(&x) < 1e-10);
    }

    #[test]
    fn forward_activation_matches_formula_and_guards_stepsize() {
        let slot = make_scaled_identity(2.0).unwrap();
        let OperatorSlot::Forward(op) = &slot else {
            unreachable!()
        };
        let act = forward_activate(op.as_ref(), &v(&[1.0]), &v(&[0.0]), 0.25).unwrap();
        assert_eq!(act.t_z.as_slice(), &[2.0]);
        assert_eq!(act.x.as_slice(), &[0.5]);
        assert_eq!(act.y.as_slice(), &[1.0]);

        let err = forward_activate(op.as_ref(), &v(&[1.0]), &v(&[0.0]), 0.5).unwrap_err();
        assert!(matches!(err, OperatorError::StepsizeViolation { .. }));
    }

    #[test]
    fn constructors_reject_invalid_parameters() {
        assert!(make_soft_threshold(-1.0).is_err());
        assert!(make_scaled_identity(0.0).is_err());
        assert!(make_box_indicator(v(&[1.0]), v(&[0.0])).is_err());
        assert!(make_box_indicator(v(&[0.0, 0.0]), v(&[1.0])).is_err());

        let skew = Matrix::from_rows(vec![vec![0.0, 1.0], vec![-1.0, 0.0]]).unwrap();
        assert!(make_affine(skew.clone(), v(&[0.0, 0.0])).is_err());
        assert!(make_quadratic_gradient(skew, v(&[0.0, 0.0])).is_err());

        let negative = Matrix::from_rows(vec![vec![-1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!(make_affine(negative, v(&[0.0, 0.0])).is_err());
    }

    #[test]
    fn declared_spectra_are_safe_side_estimates() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let q = random_orthogonal(6, &mut rng);
        let a = symmetric_with_spectrum(&q, &[0.25, 0.5, 0.75, 1.0, 1.5, 2.0]);
        let slot = make_quadratic_gradient(a, Vector::zeros(6)).unwrap();
        let meta = slot.meta();
        let l = meta.lipschitz.unwrap();
        let mu = meta.strong_monotonicity.unwrap();
        assert!(l >= 2.0 && l < 2.0 + 1e-6, "declared L = {l}");
        assert!(mu <= 0.25 && mu > 0.25 - 1e-6, "declared mu = {mu}");
        let probe = probe_slot(&slot, 6, 200, 11);
        assert!(probe.lipschitz_ratio <= l + 1e-8);
        assert!(probe.cocoercivity_gap >= -1e-8);
        assert!(probe.strong_monotonicity_gap >= -1e-8);
        assert!(probe.monotone_gap >= -1e-8);
    }

    #[test]
    fn least_squares_gradient_matches_normal_equations() {
        let a = Matrix::from_rows(vec![
            vec![1.0, 0.0],
            vec![0.0, 2.0],
            vec![1.0, 1.0],
        ])
        .unwrap();
        let b = v(&[1.0, -2.0, 0.5]);
        let slot = make_least_squares(a.clone(), b.clone()).unwrap();
        let OperatorSlot::Forward(op) = &slot else {
            unreachable!()
        };
        let x = v(&[0.3, -0.7]);
        let expect = a.matvec_t(&a.matvec(&x).sub(&b));
        assert!(op.apply(&x).dist(&expect) <= 1e-12);
        let residual = a.matvec(&x).sub(&b);
        assert!((op.function_value(&x).unwrap() - 0.5 * residual.norm_sq()).abs() <= 1e-12);
        assert_eq!(op.dim_hint(), Some(2));

        // Declared L is a safe-side estimate of the top Gram eigenvalue.
        let gram = a.transpose().matmul(&a);
        let top = gram.spectral_norm_estimate(2000, 7);
        let l = op.meta().lipschitz.unwrap();
        assert!(l >= top && l <= top * (1.0 + 1e-6));
        let probe = probe_slot(&slot, 2, 200, 13);
        assert!(probe.lipschitz_ratio <= l + 1e-8);
        assert!(probe.cocoercivity_gap >= -1e-8);
        assert!(probe.monotone_gap >= -1e-8);

        assert!(make_least_squares(Matrix::zeros(3, 2), Vector::zeros(2)).is_err());
    }

    #[test]
    fn zero_error_always_passes_conditions() {
        let z = v(&[1.0, 2.0]);
        let x = v(&[0.5, 1.0]);
        let y = v(&[0.2, -0.3]);
        let w = v(&[0.0, 0.1]);
        let check =
            check_error_conditions(&z, &x, &y, &w, 1.0, &Vector::zeros(2), 0.0, 0.0);
        assert!(check.pass());
        assert_eq!(check.min_slack(), 0.0);
    }

    #[test]
    fn injected_errors_satisfy_conditions_and_are_deterministic() {
        let slot = make_soft_threshold(0.4).unwrap();
        let OperatorSlot::Backward(op) = &slot else {
            unreachable!()
        };
        let z = v(&[2.0, -1.5, 0.7, 0.1]);
        let w = v(&[0.2, 0.0, -0.1, 0.4]);
        let (sigma, delta) = (0.1, 0.05);
        for mode in [ErrorMode::ScaledRandom, ErrorMode::AdversarialAligned] {
            let mut inj = ErrorInjector::new(mode, sigma, delta, 42).unwrap();
            let act = backward_activate(op.as_ref(), &z, &w, 1.3, &mut inj).unwrap();
            assert!(act.e.norm() > 0.0, "expected a nonzero injected error");
            let check =
                check_error_conditions(&z, &act.x, &act.y, &w, 1.3, &act.e, sigma, delta);
            assert!(check.pass(), "mode {mode:?}: {check:?}");

            let mut inj2 = ErrorInjector::new(mode, sigma, delta, 42).unwrap();
            let act2 = backward_activate(op.as_ref(), &z, &w, 1.3, &mut inj2).unwrap();
            assert_eq!(act.e, act2.e, "same seed must reproduce the same error");
        }
    }

    #[test]
    fn zero_budget_injects_exactly_zero() {
        let slot = make_soft_threshold(0.4).unwrap();
        let OperatorSlot::Backward(op) = &slot else {
            unreachable!()
        };
        let mut inj = ErrorInjector::new(ErrorMode::ScaledRandom, 0.0, 0.0, 1).unwrap();
        let act =
            backward_activate(op.as_ref(), &v(&[1.0, 2.0]), &v(&[0.0, 0.0]), 1.0, &mut inj)
                .unwrap();
        assert_eq!(act.e, Vector::zeros(2));
    }

    #[test]
    fn injector_rejects_bad_budgets() {
        assert!(ErrorInjector::new(ErrorMode::ScaledRandom, 1.0, 0.0, 0).is_err());
        assert!(ErrorInjector::new(ErrorMode::ScaledRandom, -0.1, 0.0, 0).is_err());
        assert!(ErrorInjector::new(ErrorMode::ScaledRandom, 0.0, -1.0, 0).is_err());
    }

    proptest! {
        /// Firm nonexpansiveness of library resolvents:
        /// `||Pa - Pb||^2 <= <Pa - Pb, a - b>`.
        #[test]
        fn resolvents_are_firmly_nonexpansive(
            a in proptest::collection::vec(-10.0f64..10.0, 3),
            b in proptest::collection::vec(-10.0f64..10.0, 3),
            rho in 0.1f64..5.0,
            which in 0usize..3,
        ) {
            let slot = match which {
                0 => make_soft_threshold(0.7).unwrap(),
                1 => make_box_indicator(
                    Vector::new(vec![-1.0, 0.0, -2.0]).unwrap(),
                    Vector::new(vec![1.0, 0.5, 2.0]).unwrap(),
                ).unwrap(),
                _ => {
                    let m = Matrix::from_rows(vec![
                        vec![2.0, 1.0, 0.0],
                        vec![1.0, 2.0, 1.0],
                        vec![0.0, 1.0, 2.0],
                    ]).unwrap();
                    make_affine(m, Vector::new(vec![0.3, -0.2, 0.1]).unwrap()).unwrap()
                }
            };
            let av = Vector::new(a).unwrap();
            let bv = Vector::new(b).unwrap();
            let pa = prox_of(&slot, &av, rho);
            let pb = prox_of(&slot, &bv, rho);
            let diff = pa.sub(&pb);
            prop_assert!(diff.norm_sq() <= diff.dot(&av.sub(&bv)) + 1e-9);
        }

        /// If the magnitude condition holds with budget `delta < 1`, the
        /// alignment condition follows for any `sigma >= sqrt(delta)`.
        #[test]
        fn magnitude_budget_implies_alignment_at_sqrt_delta(
            zx in proptest::collection::vec(-5.0f64..5.0, 3),
            dir in proptest::collection::vec(-1.0f64..1.0, 3),
            delta in 0.01f64..0.99,
            fill in 0.0f64..1.0,
        ) {
            let zx = Vector::new(zx).unwrap();
            let dir = Vector::new(dir).unwrap();
            prop_assume!(dir.norm() > 1e-6);
            // Scale the error to use `fill` of the magnitude budget.
            let e = dir.scale(fill * delta.sqrt() * zx.norm() / dir.norm());
            let x = Vector::zeros(3);
            let z = zx.clone();
            let check = check_error_conditions(
                &z, &x, &Vector::zeros(3), &Vector::zeros(3), 1.0, &e,
                delta.sqrt(), delta,
            );
            prop_assert!(check.magnitude_slack >= -1e-12);
            prop_assert!(check.alignment_slack >= -1e-9);
        }
    }
}
