//! The splitting iteration: activate every operator at the current point,
//! assemble the separating affine function, and project.
//!
//! One iteration at `p = (z, w)`:
//! 1. every slot `i` is activated at `(z, w_i)` with stepsize `rho_i`,
//!    producing a graph pair `y_i ∈ T_i x_i`;
//! 2. the pairs define the affine function
//!    `phi(p') = sum_i <z' - x_i, y_i - w'_i>` (with `w'_n` derived),
//!    whose zero sublevel set contains every solution;
//! 3. the squared gradient norm `pi` of `phi` in the weighted metric is
//!    computed; if `pi` vanishes the activation points themselves form a
//!    solution and the run stops;
//! 4. otherwise `p` moves to its relaxed projection onto `{phi <= 0}`:
//!    `p - alpha grad phi` with `alpha = beta phi / pi`.
//!
//! With one operator the iteration collapses to classical methods:
//! [`n1_proximal_point_reference`] and [`n1_extragradient_reference`]
//! implement those directly and the solver must match them step for step.

use crate::operators::{
    backward_activate, forward_activate, ErrorInjector, ErrorMode, OperatorError, OperatorSlot,
};
use crate::space::{ProductPoint, SpaceError, Vector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("slot {slot}: {source}")]
    Operator {
        slot: usize,
        #[source]
        source: OperatorError,
    },
    #[error("non-finite value produced at iteration {0}")]
    NonFinite(usize),
    #[error(transparent)]
    Space(#[from] SpaceError),
}

/// Relaxation sequence `beta_k`, bounded away from 0 and 2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BetaSchedule {
    Constant(f64),
    /// Cycles through the given values; entry `k` is `values[(k-1) % len]`.
    Cycle(Vec<f64>),
}

impl BetaSchedule {
    pub fn at(&self, k: usize) -> f64 {
        debug_assert!(k >= 1);
        match self {
            BetaSchedule::Constant(b) => *b,
            BetaSchedule::Cycle(values) => values[(k - 1) % values.len()],
        }
    }

    pub fn lower(&self) -> f64 {
        match self {
            BetaSchedule::Constant(b) => *b,
            BetaSchedule::Cycle(values) => values.iter().copied().fold(f64::INFINITY, f64::min),
        }
    }

    pub fn upper(&self) -> f64 {
        match self {
            BetaSchedule::Constant(b) => *b,
            BetaSchedule::Cycle(values) => values.iter().copied().fold(0.0, f64::max),
        }
    }

    fn validate(&self) -> Result<(), SolverError> {
        let values: &[f64] = match self {
            BetaSchedule::Constant(b) => std::slice::from_ref(b),
            BetaSchedule::Cycle(values) => values,
        };
        if values.is_empty() {
            return Err(SolverError::Config("empty relaxation cycle".into()));
        }
        for &b in values {
            if !(b.is_finite() && b > 0.0 && b < 2.0) {
                return Err(SolverError::Config(format!(
                    "relaxation values must lie in (0, 2), got {b}"
                )));
            }
        }
        Ok(())
    }
}

/// Stepsize sequence `rho_i^k` for one slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RhoSchedule {
    Constant(f64),
    Cycle(Vec<f64>),
}

impl RhoSchedule {
    pub fn at(&self, k: usize) -> f64 {
        debug_assert!(k >= 1);
        match self {
            RhoSchedule::Constant(r) => *r,
            RhoSchedule::Cycle(values) => values[(k - 1) % values.len()],
        }
    }

    pub fn lower(&self) -> f64 {
        match self {
            RhoSchedule::Constant(r) => *r,
            RhoSchedule::Cycle(values) => values.iter().copied().fold(f64::INFINITY, f64::min),
        }
    }

    pub fn upper(&self) -> f64 {
        match self {
            RhoSchedule::Constant(r) => *r,
            RhoSchedule::Cycle(values) => values.iter().copied().fold(0.0, f64::max),
        }
    }

    fn validate(&self, slot: usize) -> Result<(), SolverError> {
        let values: &[f64] = match self {
            RhoSchedule::Constant(r) => std::slice::from_ref(r),
            RhoSchedule::Cycle(values) => values,
        };
        if values.is_empty() {
            return Err(SolverError::Config(format!(
                "slot {slot}: empty stepsize cycle"
            )));
        }
        for &r in values {
            if !(r.is_finite() && r > 0.0) {
                return Err(SolverError::Config(format!(
                    "slot {slot}: stepsizes must be positive and finite, got {r}"
                )));
            }
        }
        Ok(())
    }
}

/// Full configuration of one solver run.
#[derive(Debug, Clone, Serialize)]
pub struct SolverConfig {
    /// Weight of the primal block in the product metric.
    pub gamma: f64,
    pub beta: BetaSchedule,
    /// One stepsize schedule per operator slot.
    pub rho: Vec<RhoSchedule>,
    /// Relative-error budget for the alignment condition.
    pub sigma: f64,
    /// Relative-error budget for the magnitude condition.
    pub delta: f64,
    /// How inexactness is injected into backward slots.
    pub error_mode: ErrorMode,
    pub max_iters: usize,
    /// The run stops once `pi <= pi_tolerance * max(1, ||p||^2)`.
    pub pi_tolerance: f64,
    /// Seed for error injection.
    pub seed: u64,
    /// Initial primal block; zero when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z1: Option<Vector>,
    /// Initial dual blocks; zero when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub w1: Option<Vec<Vector>>,
}

pub const DEFAULT_PI_TOLERANCE: f64 = 1e-24;
pub const DEFAULT_BACKWARD_RHO: f64 = 1.0;
/// Forward stepsizes default to this fraction of the admissible `1 / L`.
pub const DEFAULT_FORWARD_RHO_FRACTION: f64 = 0.9;

impl SolverConfig {
    /// Defaults: unit metric weight, no relaxation, unit backward
    /// stepsizes, forward stepsizes at 90% of the admissible limit,
    /// exact activations.
    pub fn defaults_for(slots: &[OperatorSlot]) -> Self {
        let rho = slots
            .iter()
            .map(|slot| match slot {
                OperatorSlot::Backward(_) => RhoSchedule::Constant(DEFAULT_BACKWARD_RHO),
                OperatorSlot::Forward(op) => {
                    RhoSchedule::Constant(DEFAULT_FORWARD_RHO_FRACTION / op.lipschitz())
                }
            })
            .collect();
        SolverConfig {
            gamma: 1.0,
            beta: BetaSchedule::Constant(1.0),
            rho,
            sigma: 0.0,
            delta: 0.0,
            error_mode: ErrorMode::ScaledRandom,
            max_iters: 1000,
            pi_tolerance: DEFAULT_PI_TOLERANCE,
            seed: 0,
            z1: None,
            w1: None,
        }
    }

    pub fn validate(&self, slots: &[OperatorSlot]) -> Result<(), SolverError> {
        if slots.is_empty() {
            return Err(SolverError::Config("no operator slots".into()));
        }
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(SolverError::Config(format!(
                "gamma must be positive and finite, got {}",
                self.gamma
            )));
        }
        self.beta.validate()?;
        if self.rho.len() != slots.len() {
            return Err(SolverError::Config(format!(
                "{} stepsize schedules for {} slots",
                self.rho.len(),
                slots.len()
            )));
        }
        for (i, (schedule, slot)) in self.rho.iter().zip(slots).enumerate() {
            schedule.validate(i)?;
            if let OperatorSlot::Forward(op) = slot {
                let limit = 1.0 / op.lipschitz();
                if schedule.upper() >= limit {
                    return Err(SolverError::Config(format!(
                        "slot {i}: forward stepsize {} must stay strictly below 1/L = {limit}",
                        schedule.upper()
                    )));
                }
            }
        }
        if !(self.sigma.is_finite() && (0.0..1.0).contains(&self.sigma)) {
            return Err(SolverError::Config(format!(
                "sigma must lie in [0, 1), got {}",
                self.sigma
            )));
        }
        if !(self.delta.is_finite() && self.delta >= 0.0) {
            return Err(SolverError::Config(format!(
                "delta must be nonnegative, got {}",
                self.delta
            )));
        }
        if !(self.pi_tolerance.is_finite() && self.pi_tolerance >= 0.0) {
            return Err(SolverError::Config(format!(
                "pi_tolerance must be nonnegative, got {}",
                self.pi_tolerance
            )));
        }
        Ok(())
    }

    /// Smallest stepsize ever emitted across slots.
    pub fn rho_lower(&self) -> f64 {
        self.rho.iter().map(RhoSchedule::lower).fold(f64::INFINITY, f64::min)
    }
}

/// Everything one iteration produced. Slot vectors are indexed like the
/// operator list; `u` has one entry per non-terminal slot.
#[derive(Debug, Clone)]
pub struct IterationRecord {
    /// 1-based iteration counter.
    pub k: usize,
    pub p_before: ProductPoint,
    /// The projected point; `None` when the separator vanished and the
    /// run terminated at this iteration.
    pub p_after: Option<ProductPoint>,
    pub x: Vec<Vector>,
    pub y: Vec<Vector>,
    /// Injected inexactness per backward slot.
    pub e: Vec<Option<Vector>>,
    /// Forward evaluation `T_i z` per forward slot (kept for residual
    /// ledgers).
    pub t_z: Vec<Option<Vector>>,
    /// Primal coupling directions `x_i - x_n`.
    pub u: Vec<Vector>,
    /// Dual coupling direction `y_1 + … + y_n`.
    pub v: Vector,
    pub phi: f64,
    pub pi: f64,
    /// Projection step length; `None` on the terminal iteration.
    pub alpha: Option<f64>,
    pub beta: f64,
    /// Stepsize actually used per slot.
    pub rho: Vec<f64>,
}

impl IterationRecord {
    pub fn n_operators(&self) -> usize {
        self.x.len()
    }

    /// Dual block `w_i` of the pre-iteration point (derived for the last
    /// slot).
    pub fn w_before(&self, i: usize) -> Vector {
        self.p_before.w_slot(i)
    }
}

/// Evaluates the separating affine function of this iteration at any
/// point of the product space:
/// `phi(p) = sum_{i<n} <z - x_i, y_i - w_i> + <z - x_n, y_n + sum w_i>`.
pub fn phi_value(record: &IterationRecord, p: &ProductPoint) -> f64 {
    let n = record.n_operators();
    assert_eq!(p.n_operators(), n, "phi_value: operator count mismatch");
    assert_eq!(p.dim(), record.v.dim(), "phi_value: dimension mismatch");
    let z = p.z();
    let mut total = 0.0;
    for i in 0..n {
        let zx = z.sub(&record.x[i]);
        let residual = record.y[i].sub(&p.w_slot(i));
        total += zx.dot(&residual);
    }
    total
}

/// Gradient of the separating function in the weighted metric:
/// `(v / gamma, u_1, …, u_{n-1})`. Its squared weighted norm equals `pi`.
pub fn phi_gradient(record: &IterationRecord) -> ProductPoint {
    let gamma = record.p_before.gamma();
    ProductPoint::new(
        record.v.scale(1.0 / gamma),
        record.u.clone(),
        gamma,
    )
    .expect("gradient blocks share the record's shape")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SolveStatus {
    /// The separator vanished: the activation points form a solution.
    SeparatorVanished,
    MaxIters,
    /// A caller-supplied stop predicate fired.
    Stopped,
}

#[derive(Debug)]
pub struct SolveOutcome {
    pub status: SolveStatus,
    /// Final state: the projected point after the last update, or the
    /// solution assembled from the terminal activation.
    pub final_point: ProductPoint,
    pub records: Vec<IterationRecord>,
    pub iterations: usize,
}

/// Stateful driver exposing the iteration one step at a time.
pub struct Solver<'a> {
    slots: &'a [OperatorSlot],
    config: SolverConfig,
    injectors: Vec<ErrorInjector>,
    p: ProductPoint,
    k: usize,
    solution: Option<ProductPoint>,
}

impl<'a> Solver<'a> {
    pub fn new(slots: &'a [OperatorSlot], config: &SolverConfig) -> Result<Self, SolverError> {
        config.validate(slots)?;
        let dim = resolve_dimension(slots, config)?;
        let n = slots.len();
        let z1 = match &config.z1 {
            Some(z) => {
                if z.dim() != dim {
                    return Err(SolverError::Config(format!(
                        "initial z has dimension {}, slots expect {dim}",
                        z.dim()
                    )));
                }
                z.clone()
            }
            None => Vector::zeros(dim),
        };
        let w1 = match &config.w1 {
            Some(w) => {
                if w.len() != n - 1 || w.iter().any(|wi| wi.dim() != dim) {
                    return Err(SolverError::Config(
                        "initial duals must be n-1 vectors of the ambient dimension".into(),
                    ));
                }
                w.clone()
            }
            None => vec![Vector::zeros(dim); n - 1],
        };
        let p = ProductPoint::new(z1, w1, config.gamma)?;
        let injectors = (0..n)
            .map(|i| match slots[i] {
                OperatorSlot::Backward(_) if config.sigma > 0.0 || config.delta > 0.0 => {
                    ErrorInjector::new(
                        config.error_mode,
                        config.sigma,
                        config.delta,
                        config.seed.wrapping_add(0x9e37_79b9).wrapping_add(i as u64),
                    )
                    .map_err(|source| SolverError::Operator { slot: i, source })
                }
                _ => Ok(ErrorInjector::none()),
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Solver {
            slots,
            config: config.clone(),
            injectors,
            p,
            k: 1,
            solution: None,
        })
    }

    pub fn current(&self) -> &ProductPoint {
        &self.p
    }

    /// Solution found by a vanished separator, if any.
    pub fn solution(&self) -> Option<&ProductPoint> {
        self.solution.as_ref()
    }

    /// Runs one iteration and returns its record.
    pub fn iterate(&mut self) -> Result<IterationRecord, SolverError> {
        if self.solution.is_some() {
            return Err(SolverError::Config(
                "solver already terminated at a solution".into(),
            ));
        }
        let n = self.slots.len();
        let k = self.k;
        let gamma = self.config.gamma;
        let z = self.p.z().clone();

        let mut xs = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        let mut es = Vec::with_capacity(n);
        let mut tzs = Vec::with_capacity(n);
        let mut rhos = Vec::with_capacity(n);
        for (i, slot) in self.slots.iter().enumerate() {
            let rho = self.config.rho[i].at(k);
            let w_i = self.p.w_slot(i);
            match slot {
                OperatorSlot::Backward(op) => {
                    let act =
                        backward_activate(op.as_ref(), &z, &w_i, rho, &mut self.injectors[i])
                            .map_err(|source| SolverError::Operator { slot: i, source })?;
                    xs.push(act.x);
                    ys.push(act.y);
                    es.push(Some(act.e));
                    tzs.push(None);
                }
                OperatorSlot::Forward(op) => {
                    let act = forward_activate(op.as_ref(), &z, &w_i, rho)
                        .map_err(|source| SolverError::Operator { slot: i, source })?;
                    xs.push(act.x);
                    ys.push(act.y);
                    es.push(None);
                    tzs.push(Some(act.t_z));
                }
            }
            if !xs[i].is_finite() || !ys[i].is_finite() {
                return Err(SolverError::NonFinite(k));
            }
            rhos.push(rho);
        }

        let x_last = xs[n - 1].clone();
        let u: Vec<Vector> = xs[..n - 1].iter().map(|xi| xi.sub(&x_last)).collect();
        let mut v = Vector::zeros(z.dim());
        for yi in &ys {
            v = v.add(yi);
        }
        let pi =
            u.iter().map(Vector::norm_sq).sum::<f64>() + v.norm_sq() / gamma;

        let mut phi = z.dot(&v);
        for (wi, ui) in self.p.w().iter().zip(&u) {
            phi += wi.dot(ui);
        }
        for (xi, yi) in xs.iter().zip(&ys) {
            phi -= xi.dot(yi);
        }
        if !pi.is_finite() || !phi.is_finite() {
            return Err(SolverError::NonFinite(k));
        }

        let p_before = self.p.clone();
        let threshold = self.config.pi_tolerance * self.p.gamma_norm_sq().max(1.0);
        if pi <= threshold {
            let solution = ProductPoint::new(x_last, ys[..n - 1].to_vec(), gamma)?;
            self.solution = Some(solution);
            return Ok(IterationRecord {
                k,
                p_before,
                p_after: None,
                x: xs,
                y: ys,
                e: es,
                t_z: tzs,
                u,
                v,
                phi,
                pi,
                alpha: None,
                beta: self.config.beta.at(k),
                rho: rhos,
            });
        }

        let beta = self.config.beta.at(k);
        let alpha = beta * phi / pi;
        if !alpha.is_finite() {
            return Err(SolverError::NonFinite(k));
        }
        let z_next = z.axpy(-alpha / gamma, &v);
        let w_next: Vec<Vector> = self
            .p
            .w()
            .iter()
            .zip(&u)
            .map(|(wi, ui)| wi.axpy(-alpha, ui))
            .collect();
        let p_after = ProductPoint::new(z_next, w_next, gamma)?;
        if !p_after.is_finite() {
            return Err(SolverError::NonFinite(k));
        }
        self.p = p_after.clone();
        self.k += 1;
        Ok(IterationRecord {
            k,
            p_before,
            p_after: Some(p_after),
            x: xs,
            y: ys,
            e: es,
            t_z: tzs,
            u,
            v,
            phi,
            pi,
            alpha: Some(alpha),
            beta,
            rho: rhos,
        })
    }
}

/// Runs until the separator vanishes or `max_iters` is reached.
pub fn solve(slots: &[OperatorSlot], config: &SolverConfig) -> Result<SolveOutcome, SolverError> {
    solve_with_stop(slots, config, |_| false)
}

/// Like [`solve`], additionally stopping when `stop` returns true on the
/// iteration just completed.
pub fn solve_with_stop(
    slots: &[OperatorSlot],
    config: &SolverConfig,
    mut stop: impl FnMut(&IterationRecord) -> bool,
) -> Result<SolveOutcome, SolverError> {
    let mut solver = Solver::new(slots, config)?;
    let mut records = Vec::new();
    for _ in 0..config.max_iters {
        let record = solver.iterate()?;
        let stop_requested = stop(&record);
        records.push(record);
        if let Some(solution) = solver.solution() {
            let iterations = records.len();
            return Ok(SolveOutcome {
                status: SolveStatus::SeparatorVanished,
                final_point: solution.clone(),
                records,
                iterations,
            });
        }
        if stop_requested {
            let iterations = records.len();
            return Ok(SolveOutcome {
                status: SolveStatus::Stopped,
                final_point: solver.current().clone(),
                records,
                iterations,
            });
        }
    }
    let iterations = records.len();
    Ok(SolveOutcome {
        status: SolveStatus::MaxIters,
        final_point: solver.current().clone(),
        records,
        iterations,
    })
}

fn resolve_dimension(slots: &[OperatorSlot], config: &SolverConfig) -> Result<usize, SolverError> {
    let mut dim = config.z1.as_ref().map(Vector::dim);
    for (i, slot) in slots.iter().enumerate() {
        if let Some(d) = slot.dim_hint() {
            match dim {
                None => dim = Some(d),
                Some(existing) if existing != d => {
                    return Err(SolverError::Config(format!(
                        "slot {i} expects dimension {d}, but {existing} was already fixed"
                    )));
                }
                _ => {}
            }
        }
    }
    dim.ok_or_else(|| {
        SolverError::Config(
            "ambient dimension is not determined by the slots; provide an initial point".into(),
        )
    })
}

// ---------------------------------------------------------------------
// Single-operator reference methods
// ---------------------------------------------------------------------

/// Relaxed proximal point method
/// `z_{k+1} = (1 - beta_k) z_k + beta_k prox_{rho_k T}(z_k)`.
/// Returns the trajectory including the initial point.
pub fn n1_proximal_point_reference(
    op: &dyn crate::operators::BackwardOperator,
    z1: &Vector,
    rho: &RhoSchedule,
    beta: &BetaSchedule,
    steps: usize,
) -> Result<Vec<Vector>, SolverError> {
    beta.validate()?;
    rho.validate(0)?;
    let mut trajectory = vec![z1.clone()];
    let mut z = z1.clone();
    for k in 1..=steps {
        let proxed = op
            .prox(&z, rho.at(k))
            .map_err(|source| SolverError::Operator { slot: 0, source })?;
        let b = beta.at(k);
        z = z.scale(1.0 - b).axpy(b, &proxed);
        if !z.is_finite() {
            return Err(SolverError::NonFinite(k));
        }
        trajectory.push(z.clone());
    }
    Ok(trajectory)
}

/// Extragradient method with the projection-derived step:
/// `x_k = z_k - rho_k T z_k`, then
/// `z_{k+1} = z_k - (beta_k rho_k <T z_k, T x_k> / ||T x_k||^2) T x_k`.
/// Stops early (truncating the trajectory) once `T x_k = 0`, which means
/// `x_k` solves the inclusion. Requires `rho_k < 1 / L`.
pub fn n1_extragradient_reference(
    op: &dyn crate::operators::ForwardOperator,
    z1: &Vector,
    rho: &RhoSchedule,
    beta: &BetaSchedule,
    steps: usize,
) -> Result<Vec<Vector>, SolverError> {
    beta.validate()?;
    rho.validate(0)?;
    let limit = 1.0 / op.lipschitz();
    if rho.upper() >= limit {
        return Err(SolverError::Operator {
            slot: 0,
            source: OperatorError::StepsizeViolation {
                rho: rho.upper(),
                limit,
            },
        });
    }
    let mut trajectory = vec![z1.clone()];
    let mut z = z1.clone();
    for k in 1..=steps {
        let r = rho.at(k);
        let t_z = op.apply(&z);
        let x = z.axpy(-r, &t_z);
        let t_x = op.apply(&x);
        let denom = t_x.norm_sq();
        if denom == 0.0 {
            break;
        }
        let step = beta.at(k) * r * t_z.dot(&t_x) / denom;
        z = z.axpy(-step, &t_x);
        if !z.is_finite() {
            return Err(SolverError::NonFinite(k));
        }
        trajectory.push(z.clone());
    }
    Ok(trajectory)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::operators::{
        make_affine, make_scaled_identity, make_soft_threshold, ForwardOperator, OperatorMeta,
    };

    fn v(entries: &[f64]) -> Vector {
        Vector::new(entries.to_vec()).unwrap()
    }

    /// Backward slot for `f(x) = (x - 1)^2 / 2`, i.e. `T x = x - 1`.
    fn shifted_identity_prox() -> OperatorSlot {
        let a = Matrix::from_rows(vec![vec![1.0]]).unwrap();
        make_affine(a, v(&[-1.0])).unwrap()
    }

    #[test]
    fn scalar_backward_run_matches_closed_form() {
        let slots = [shifted_identity_prox()];
        let mut config = SolverConfig::defaults_for(&slots);
        config.max_iters = 10;
        let outcome = solve(&slots, &config).unwrap();
        assert_eq!(outcome.status, SolveStatus::MaxIters);
        let first = &outcome.records[0];
        assert!((first.phi - 0.25).abs() < 1e-15);
        assert!((first.pi - 0.25).abs() < 1e-15);
        assert!((first.alpha.unwrap() - 1.0).abs() < 1e-15);
        // z_{k} = 1 - 2^{1-k} for z_1 = 0.
        for record in &outcome.records {
            let want = 1.0 - (2.0f64).powi(1 - record.k as i32);
            let got = record.p_before.z().as_slice()[0];
            assert!((got - want).abs() < 1e-15, "k = {}", record.k);
        }
        let z_final = outcome.final_point.z().as_slice()[0];
        assert!((z_final - (1.0 - (2.0f64).powi(-10))).abs() < 1e-15);
    }

    #[test]
    fn scalar_forward_step_matches_hand_values() {
        let slots = [make_scaled_identity(2.0).unwrap()];
        let mut config = SolverConfig::defaults_for(&slots);
        config.rho = vec![RhoSchedule::Constant(0.25)];
        config.z1 = Some(v(&[1.0]));
        config.max_iters = 1;
        let outcome = solve(&slots, &config).unwrap();
        let record = &outcome.records[0];
        assert_eq!(record.x[0].as_slice(), &[0.5]);
        assert_eq!(record.y[0].as_slice(), &[1.0]);
        assert!((record.phi - 0.5).abs() < 1e-15);
        assert!((record.pi - 1.0).abs() < 1e-15);
        assert!((record.alpha.unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(outcome.final_point.z().as_slice(), &[0.5]);
    }

    /// Direct transcription of the update equations for a two-operator
    /// problem, kept deliberately independent of the solver internals.
    fn two_slot_transcription(steps: usize) -> Vec<(Vector, Vector)> {
        let lambda = 0.5;
        let rho1 = 1.0;
        let rho2 = 0.5;
        let b = [-1.0, 0.5];
        let mut z = vec![2.0, -3.0];
        let mut w1 = vec![0.25, 0.0];
        let mut states = vec![(v(&z), v(&w1))];
        for _ in 0..steps {
            let soft = |a: f64| a.signum() * (a.abs() - rho1 * lambda).max(0.0);
            let a: Vec<f64> = z.iter().zip(&w1).map(|(zi, wi)| zi + rho1 * wi).collect();
            let x1: Vec<f64> = a.iter().map(|&ai| soft(ai)).collect();
            let y1: Vec<f64> = a.iter().zip(&x1).map(|(ai, xi)| (ai - xi) / rho1).collect();
            // Forward slot: T z = z + b, dual block w2 = -w1.
            let x2: Vec<f64> = z
                .iter()
                .zip(&w1)
                .zip(&b)
                .map(|((zi, w1i), bi)| zi - rho2 * ((zi + bi) - (-w1i)))
                .collect();
            let y2: Vec<f64> = x2.iter().zip(&b).map(|(xi, bi)| xi + bi).collect();
            let u1: Vec<f64> = x1.iter().zip(&x2).map(|(a, b)| a - b).collect();
            let vsum: Vec<f64> = y1.iter().zip(&y2).map(|(a, b)| a + b).collect();
            let pi: f64 = u1.iter().map(|t| t * t).sum::<f64>()
                + vsum.iter().map(|t| t * t).sum::<f64>();
            let phi: f64 = z.iter().zip(&vsum).map(|(a, b)| a * b).sum::<f64>()
                + w1.iter().zip(&u1).map(|(a, b)| a * b).sum::<f64>()
                - x1.iter().zip(&y1).map(|(a, b)| a * b).sum::<f64>()
                - x2.iter().zip(&y2).map(|(a, b)| a * b).sum::<f64>();
            let alpha = phi / pi;
            for (zi, vi) in z.iter_mut().zip(&vsum) {
                *zi -= alpha * vi;
            }
            for (wi, ui) in w1.iter_mut().zip(&u1) {
                *wi -= alpha * ui;
            }
            states.push((v(&z), v(&w1)));
        }
        states
    }

    #[test]
    fn two_slot_run_matches_direct_transcription() {
        let a = Matrix::identity(2);
        let slots = [
            make_soft_threshold(0.5).unwrap(),
            crate::operators::make_quadratic_gradient(a, v(&[-1.0, 0.5])).unwrap(),
        ];
        let mut config = SolverConfig::defaults_for(&slots);
        config.rho = vec![RhoSchedule::Constant(1.0), RhoSchedule::Constant(0.5)];
        config.z1 = Some(v(&[2.0, -3.0]));
        config.w1 = Some(vec![v(&[0.25, 0.0])]);
        config.max_iters = 50;
        let outcome = solve(&slots, &config).unwrap();
        let reference = two_slot_transcription(50);
        assert_eq!(outcome.records.len(), 50);
        for record in &outcome.records {
            let (z_ref, w_ref) = &reference[record.k - 1];
            assert!(
                record.p_before.z().dist(z_ref) <= 1e-12,
                "z deviates at k = {}",
                record.k
            );
            assert!(
                record.p_before.w()[0].dist(w_ref) <= 1e-12,
                "w deviates at k = {}",
                record.k
            );
        }
    }

    #[test]
    fn gradient_norm_identity_and_phi_cross_evaluation() {
        let a = Matrix::identity(2);
        let slots = [
            make_soft_threshold(0.5).unwrap(),
            crate::operators::make_quadratic_gradient(a, v(&[-1.0, 0.5])).unwrap(),
        ];
        let mut config = SolverConfig::defaults_for(&slots);
        config.gamma = 2.5;
        config.z1 = Some(v(&[2.0, -3.0]));
        config.w1 = Some(vec![v(&[0.25, 0.0])]);
        config.max_iters = 25;
        let outcome = solve(&slots, &config).unwrap();
        for record in &outcome.records {
            let grad = phi_gradient(record);
            let scale = 1.0 + record.pi.abs();
            assert!(
                (grad.gamma_norm_sq() - record.pi).abs() <= 1e-10 * scale,
                "gradient norm identity fails at k = {}",
                record.k
            );
            let defining = phi_value(record, &record.p_before);
            assert!(
                (defining - record.phi).abs() <= 1e-10 * (1.0 + record.phi.abs()),
                "phi forms disagree at k = {}: {defining} vs {}",
                record.k,
                record.phi
            );
            if let (Some(alpha), Some(p_after)) = (record.alpha, record.p_after.as_ref()) {
                let projected = record.p_before.axpy(-alpha, &grad).unwrap();
                let dist = projected.gamma_dist_sq(p_after).unwrap().sqrt();
                assert!(
                    dist <= 1e-12 * (1.0 + p_after.gamma_norm()),
                    "update is not the gradient step at k = {}",
                    record.k
                );
            }
        }
    }

    #[test]
    fn separator_vanishes_at_a_solution() {
        // T x = x: unique zero at the origin, and z1 = 0 starts there.
        let a = Matrix::identity(3);
        let slots = [make_affine(a, Vector::zeros(3)).unwrap()];
        let mut config = SolverConfig::defaults_for(&slots);
        config.max_iters = 10;
        let outcome = solve(&slots, &config).unwrap();
        assert_eq!(outcome.status, SolveStatus::SeparatorVanished);
        assert_eq!(outcome.iterations, 1);
        assert_eq!(outcome.records[0].alpha, None);
        assert_eq!(outcome.records[0].p_after, None);
        assert_eq!(outcome.final_point.z(), &Vector::zeros(3));
    }

    #[test]
    fn proximal_point_reference_matches_solver_under_varying_stepsizes() {
        let slots = [shifted_identity_prox()];
        let rho_values: Vec<f64> = (0..100)
            .map(|i| 0.5 + 1.5 * ((i * 2654435761u64 % 1000) as f64 / 1000.0))
            .collect();
        let rho = RhoSchedule::Cycle(rho_values);
        let beta = BetaSchedule::Constant(0.7);
        let mut config = SolverConfig::defaults_for(&slots);
        config.rho = vec![rho.clone()];
        config.beta = beta.clone();
        config.gamma = 2.0;
        config.z1 = Some(v(&[-3.0]));
        config.max_iters = 100;
        // Compare the full trajectory, not just the prefix before the
        // separator norm drops under the default stopping threshold.
        config.pi_tolerance = 0.0;
        let outcome = solve(&slots, &config).unwrap();

        let OperatorSlot::Backward(op) = &slots[0] else {
            unreachable!()
        };
        let reference =
            n1_proximal_point_reference(op.as_ref(), &v(&[-3.0]), &rho, &beta, 100).unwrap();
        // The run may stop before 100 steps, but only by hitting the fixed
        // point exactly; the compared prefix must still be substantial.
        assert!(outcome.records.len() >= 40);
        if outcome.records.len() < 100 {
            assert_eq!(outcome.status, SolveStatus::SeparatorVanished);
            assert_eq!(outcome.records.last().unwrap().pi, 0.0);
        }
        for record in &outcome.records {
            let z_ref = &reference[record.k - 1];
            assert!(
                record.p_before.z().dist(z_ref) <= 1e-12,
                "deviation at k = {}",
                record.k
            );
        }
        assert!(outcome.final_point.z().dist(reference.last().unwrap()) <= 1e-12);
    }

    #[test]
    fn extragradient_reference_matches_solver() {
        let slots = [make_scaled_identity(2.0).unwrap()];
        let rho = RhoSchedule::Constant(0.25);
        let beta = BetaSchedule::Constant(1.0);
        let mut config = SolverConfig::defaults_for(&slots);
        config.rho = vec![rho.clone()];
        config.gamma = 3.0;
        config.z1 = Some(v(&[1.0]));
        config.max_iters = 60;
        config.pi_tolerance = 0.0;
        let outcome = solve(&slots, &config).unwrap();
        let OperatorSlot::Forward(op) = &slots[0] else {
            unreachable!()
        };
        let reference =
            n1_extragradient_reference(op.as_ref(), &v(&[1.0]), &rho, &beta, 60).unwrap();
        for record in &outcome.records {
            if record.k - 1 >= reference.len() {
                break;
            }
            let z_ref = &reference[record.k - 1];
            assert!(
                record.p_before.z().dist(z_ref) <= 1e-12,
                "deviation at k = {}",
                record.k
            );
        }
        // First step is z = 1 -> 0.5 exactly.
        assert!((reference[1].as_slice()[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn configuration_errors_are_reported() {
        let slots = [make_scaled_identity(2.0).unwrap()];
        let mut config = SolverConfig::defaults_for(&slots);
        config.rho = vec![RhoSchedule::Constant(0.5)];
        assert!(matches!(
            solve(&slots, &config),
            Err(SolverError::Config(_))
        ));

        let mut config = SolverConfig::defaults_for(&slots);
        config.gamma = 0.0;
        assert!(solve(&slots, &config).is_err());

        let mut config = SolverConfig::defaults_for(&slots);
        config.beta = BetaSchedule::Constant(2.0);
        assert!(solve(&slots, &config).is_err());

        let mut config = SolverConfig::defaults_for(&slots);
        config.rho = vec![];
        assert!(solve(&slots, &config).is_err());

        // Dimension cannot be resolved without hints or an initial point.
        let soft = [make_soft_threshold(1.0).unwrap()];
        let config = SolverConfig::defaults_for(&soft);
        assert!(matches!(
            solve(&soft, &config),
            Err(SolverError::Config(_))
        ));
    }

    /// An operator that lies about its Lipschitz constant, driving the
    /// iteration to overflow: the solver must fail loudly, not emit NaN.
    struct Liar {
        meta: OperatorMeta,
    }

    impl ForwardOperator for Liar {
        fn apply(&self, x: &Vector) -> Vector {
            x.scale(-3.0e150)
        }

        fn meta(&self) -> &OperatorMeta {
            &self.meta
        }

        fn name(&self) -> &'static str {
            "liar"
        }
    }

    #[test]
    fn divergence_surfaces_as_a_hard_error() {
        let slots = [OperatorSlot::Forward(Box::new(Liar {
            meta: OperatorMeta {
                lipschitz: Some(1.0),
                ..OperatorMeta::default()
            },
        }))];
        let mut config = SolverConfig::defaults_for(&slots);
        config.z1 = Some(v(&[1.0]));
        config.max_iters = 400;
        let err = solve(&slots, &config).unwrap_err();
        assert!(
            matches!(err, SolverError::NonFinite(_)),
            "expected a non-finite error, got {err:?}"
        );
    }
}
