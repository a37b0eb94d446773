//! Guarantee constants and trajectory certificates.
//!
//! Everything the method guarantees about a run takes the form of an
//! inequality along the trajectory. This module computes the constants
//! those inequalities use ([`RateConstants`]), accumulates the
//! square-summable quantities together with their budgets
//! ([`SummabilityLedger`]), and re-checks every guarantee on a recorded
//! trace, reporting each as a [`Certificate`]: Fejér monotonicity of the
//! distance to a known solution, separation of the solution by each
//! iteration's affine function, the projection-step lower bound, the
//! two-sided relation between the separator and the activation gaps,
//! summability budgets, ergodic objective-gap and consensus rates, the
//! strongly monotone distance rate, per-iteration linear contraction,
//! and iterate-norm bounds.
//!
//! All checks are pure functions of an immutable trace plus metadata and
//! may run concurrently over a shared trace. They operate on the full
//! iteration-by-iteration record sequence produced by the solver;
//! thinning a trace invalidates the cumulative checks.

use crate::operators::OperatorSlot;
use crate::solver::{phi_value, IterationRecord, SolverConfig};
use crate::space::{ProductPoint, SpaceError, Vector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RatesError {
    /// A requested constant or check needs metadata the instance did not
    /// declare (an oracle, a modulus, a Lipschitz bound, ...).
    #[error("missing metadata: {0}")]
    MissingMetadata(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    /// The instance structurally does not admit the requested guarantee.
    #[error("not applicable: {0}")]
    NotApplicable(String),
    #[error(transparent)]
    Space(#[from] SpaceError),
}

// Verdict tolerances. Rate-bound residuals are absolute; instances are
// expected to be normalized to a starting distance of order one.
pub const TOL_FEJER: f64 = 1e-9;
pub const TOL_SEPARATION: f64 = 1e-9;
pub const TOL_PHI_LOWER: f64 = 1e-9;
pub const TOL_GRAD_UPPER: f64 = 1e-9;
pub const TOL_ALPHA: f64 = 1e-12;
pub const TOL_SUMMABILITY: f64 = 1e-8;
pub const TOL_RATE: f64 = 1e-8;
pub const TOL_LINEAR: f64 = 1e-12;
pub const TOL_BOUNDS: f64 = 1e-9;

/// A known exact solution of the inclusion: the primal point together
/// with the stored dual components `w_1*, ..., w_{n-1}*` (the last dual
/// is derived as minus their sum, matching the solver's convention).
#[derive(Debug, Clone, Serialize)]
pub struct SolutionOracle {
    pub z_star: Vector,
    pub w_star: Vec<Vector>,
}

impl SolutionOracle {
    /// The solution as a point of the weighted product space.
    pub fn point(&self, gamma: f64) -> Result<ProductPoint, SpaceError> {
        ProductPoint::new(self.z_star.clone(), self.w_star.clone(), gamma)
    }
}

/// Strong monotonicity declaration: modulus and the slot carrying it.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct StrongSlot {
    pub mu: f64,
    pub slot: usize,
}

/// Radius-affine Lipschitz bound for a function on centered balls:
/// `f` is `(slope * r + intercept)`-Lipschitz on `{x : ||x|| <= r}`.
/// Every operator in the library with a Lipschitz objective has a bound
/// of this shape.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BallLipschitz {
    pub slope: f64,
    pub intercept: f64,
}

impl BallLipschitz {
    pub fn at(&self, radius: f64) -> f64 {
        self.slope * radius + self.intercept
    }
}

/// Declared analytic structure of a problem instance: how each slot is
/// activated, the moduli the operators guarantee, and — when a generator
/// can produce them — an exact solution and optimal value.
///
/// Declared moduli are promises, not estimates: probes and certificates
/// treat them as hard bounds.
#[derive(Debug, Clone, Serialize)]
pub struct ProblemMeta {
    pub n: usize,
    /// Slots activated through the resolvent (0-based).
    pub backward: Vec<usize>,
    /// Slots activated by forward evaluation (0-based).
    pub forward: Vec<usize>,
    /// Per-slot Lipschitz modulus of the operator, when declared.
    pub lipschitz: Vec<Option<f64>>,
    /// Per-slot cocoercivity modulus, when declared.
    pub cocoercivity: Vec<Option<f64>>,
    /// Strong monotonicity modulus and its slot, when declared.
    pub strong: Option<StrongSlot>,
    /// Per-slot Lipschitz bound of the objective term on centered balls;
    /// `None` for terms that are not Lipschitz on bounded sets (e.g.
    /// indicator functions).
    pub ball_lipschitz: Vec<Option<BallLipschitz>>,
    /// Known exact solution.
    pub oracle: Option<SolutionOracle>,
    /// Optimal objective value, for optimization instances.
    pub f_star: Option<f64>,
    /// Whether the single-point objective-gap rate may be certified.
    /// Generators set this to `false` when more than one slot encodes a
    /// hard constraint, which that rate cannot accommodate.
    pub single_point_rate_applicable: bool,
}

impl ProblemMeta {
    /// Collects the declared structure of a slot list. The oracle,
    /// optimal value, and strong-monotonicity slot can be refined by the
    /// caller afterwards; strong monotonicity defaults to the slot with
    /// the largest declared positive modulus.
    pub fn from_slots(slots: &[OperatorSlot], dim: usize) -> ProblemMeta {
        let n = slots.len();
        let mut backward = Vec::new();
        let mut forward = Vec::new();
        let mut lipschitz = Vec::with_capacity(n);
        let mut cocoercivity = Vec::with_capacity(n);
        let mut ball_lipschitz = Vec::with_capacity(n);
        let mut strong: Option<StrongSlot> = None;
        for (i, slot) in slots.iter().enumerate() {
            if slot.is_backward() {
                backward.push(i);
            } else {
                forward.push(i);
            }
            let meta = slot.meta();
            lipschitz.push(meta.lipschitz);
            cocoercivity.push(meta.cocoercivity);
            if let Some(mu) = meta.strong_monotonicity {
                if mu > 0.0 && strong.map_or(true, |s| mu > s.mu) {
                    strong = Some(StrongSlot { mu, slot: i });
                }
            }
            // The library's ball bounds are affine in the radius, so two
            // evaluations recover the whole profile.
            let profile = match (
                slot.gradient_bound_on_ball(0.0, dim),
                slot.gradient_bound_on_ball(1.0, dim),
            ) {
                (Some(at0), Some(at1)) => Some(BallLipschitz {
                    slope: at1 - at0,
                    intercept: at0,
                }),
                _ => None,
            };
            ball_lipschitz.push(profile);
        }
        ProblemMeta {
            n,
            backward,
            forward,
            lipschitz,
            cocoercivity,
            strong,
            ball_lipschitz,
            oracle: None,
            f_star: None,
            single_point_rate_applicable: true,
        }
    }

    fn validate(&self) -> Result<(), RatesError> {
        if self.n == 0 {
            return Err(RatesError::InvalidInput("no operator slots".into()));
        }
        let mut seen = vec![false; self.n];
        for &i in self.backward.iter().chain(&self.forward) {
            if i >= self.n || seen[i] {
                return Err(RatesError::InvalidInput(format!(
                    "slot sets must partition 0..{}, slot {i} is out of range or repeated",
                    self.n
                )));
            }
            seen[i] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(RatesError::InvalidInput(
                "slot sets must cover every slot".into(),
            ));
        }
        for (name, list) in [
            ("lipschitz", self.lipschitz.len()),
            ("cocoercivity", self.cocoercivity.len()),
            ("ball_lipschitz", self.ball_lipschitz.len()),
        ] {
            if list != self.n {
                return Err(RatesError::InvalidInput(format!(
                    "{name} has {list} entries for {} slots",
                    self.n
                )));
            }
        }
        if let Some(s) = self.strong {
            if !(s.mu.is_finite() && s.mu > 0.0) || s.slot >= self.n {
                return Err(RatesError::InvalidInput(format!(
                    "strong monotonicity declaration (mu = {}, slot = {}) is invalid",
                    s.mu, s.slot
                )));
            }
        }
        if let Some(oracle) = &self.oracle {
            if oracle.w_star.len() + 1 != self.n {
                return Err(RatesError::InvalidInput(format!(
                    "oracle stores {} dual components for {} slots",
                    oracle.w_star.len(),
                    self.n
                )));
            }
        }
        Ok(())
    }

    fn require_oracle(&self) -> Result<&SolutionOracle, RatesError> {
        self.oracle.as_ref().ok_or_else(|| {
            RatesError::MissingMetadata("a solution oracle (z*, w*) is required".into())
        })
    }
}

/// Every constant appearing in the convergence guarantees, with the raw
/// inputs they are assembled from echoed alongside so a serialized
/// report is self-contained. Entries that need a solution oracle or
/// extra moduli stay `None` when those are absent.
#[derive(Debug, Clone, Serialize)]
pub struct RateConstants {
    pub n: usize,
    pub gamma: f64,
    pub sigma: f64,
    pub delta: f64,
    pub beta_lower: f64,
    pub beta_upper: f64,
    /// Smallest stepsize any slot ever uses.
    pub rho_lower: f64,
    /// Largest stepsize over resolvent slots (0 with none).
    pub rho_upper_backward: f64,
    /// Largest stepsize of the last slot when it is a resolvent slot,
    /// else 0: forward activation of the last slot removes the terms
    /// this factor multiplies.
    pub rho_upper_last: f64,
    /// Largest Lipschitz modulus over forward slots (0 with none).
    pub lipschitz_max: f64,
    pub forward_count: usize,
    pub mu: Option<f64>,
    pub strong_slot: Option<usize>,
    /// Largest cocoercivity modulus over the leading `n - 1` slots
    /// (0 when `n = 1`); `None` if any of those slots lacks one.
    pub cocoercivity_max: Option<f64>,
    /// Distance from the starting point to the oracle solution in the
    /// weighted metric.
    pub d1: Option<f64>,
    /// Weighted norm of the oracle solution.
    pub p_star_norm: Option<f64>,

    /// Coefficient of the gradient-norm upper bound
    /// `||grad phi_k||^2 <= xi1 * sum_i ||z^k - x_i^k||^2`.
    pub xi1: f64,
    /// Coefficient of the separator lower bound
    /// `phi_k(p^k) >= xi2 * sum_i ||z^k - x_i^k||^2`.
    pub xi2: f64,
    /// Budget factor `1 / (beta_lower * (2 - beta_upper))` for the
    /// square-sum of projection steps.
    pub tau: f64,
    /// Guaranteed lower bound `beta_lower * xi2 / xi1` on every
    /// projection step length `alpha_k`.
    pub alpha_lb: f64,
    /// Per-iteration cap factor relating `sum_i ||w_i - y_i||^2` to the
    /// squared projection step.
    pub e1: f64,
    /// Quadratic coefficient of the ergodic objective-gap bound.
    pub e2: f64,
    /// Linear coefficient of the ergodic objective-gap bound.
    pub e3: Option<f64>,
    /// Linear coefficient of the single-point ergodic gap bound.
    pub e4: Option<f64>,
    /// Per-iteration contraction factor under strong monotonicity plus
    /// cocoercivity; always in (0, 1/4].
    pub e5: Option<f64>,
    /// Norm bound on every activation point `x_i^k`.
    pub b_x: Option<f64>,
    /// Norm bound on every activation image `y_i^k`.
    pub b_y: Option<f64>,
    /// Slot whose ergodic average carries the single-point gap bound.
    pub single_point_slot: Option<usize>,
}

impl RateConstants {
    /// Assembles all constants the metadata and configuration allow.
    /// `p1` is the run's starting point; without it (or without an
    /// oracle) the starting-distance-dependent entries stay `None`.
    pub fn compute(
        meta: &ProblemMeta,
        config: &SolverConfig,
        p1: Option<&ProductPoint>,
    ) -> Result<RateConstants, RatesError> {
        meta.validate()?;
        let n = meta.n;
        if config.rho.len() != n {
            return Err(RatesError::InvalidInput(format!(
                "{} stepsize schedules for {n} slots",
                config.rho.len()
            )));
        }
        let gamma = config.gamma;
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(RatesError::InvalidInput(format!(
                "metric weight must be positive and finite, got {gamma}"
            )));
        }
        let sigma = config.sigma;
        let delta = config.delta;
        if !(sigma.is_finite() && (0.0..1.0).contains(&sigma)) || !(delta.is_finite() && delta >= 0.0)
        {
            return Err(RatesError::InvalidInput(format!(
                "error budgets sigma = {sigma}, delta = {delta} are out of range"
            )));
        }
        let beta_lower = config.beta.lower();
        let beta_upper = config.beta.upper();
        if !(beta_lower > 0.0 && beta_upper < 2.0) {
            return Err(RatesError::InvalidInput(format!(
                "relaxation range [{beta_lower}, {beta_upper}] must lie inside (0, 2)"
            )));
        }
        let rho_lower = config.rho_lower();
        if !(rho_lower.is_finite() && rho_lower > 0.0) {
            return Err(RatesError::InvalidInput(format!(
                "stepsizes must be bounded away from zero, lower envelope is {rho_lower}"
            )));
        }
        let rho_upper_backward = meta
            .backward
            .iter()
            .map(|&i| config.rho[i].upper())
            .fold(0.0f64, f64::max);
        let mut lipschitz_max = 0.0f64;
        for &j in &meta.forward {
            let l_j = meta.lipschitz[j].ok_or_else(|| {
                RatesError::MissingMetadata(format!("forward slot {j} lacks a Lipschitz modulus"))
            })?;
            lipschitz_max = lipschitz_max.max(l_j);
        }
        let forward_count = meta.forward.len();

        let n_f = n as f64;
        let xi1 = 2.0
            * n_f
            * (1.0
                + 2.0 / gamma
                    * (lipschitz_max * lipschitz_max * forward_count as f64
                        + (1.0 + delta) / (rho_lower * rho_lower)));

        let mut xi2 = f64::INFINITY;
        if !meta.backward.is_empty() {
            xi2 = xi2.min((1.0 - sigma) / rho_upper_backward);
        }
        for &j in &meta.forward {
            let l_j = meta.lipschitz[j].expect("checked above");
            let branch = 1.0 / config.rho[j].upper() - l_j;
            if branch <= 0.0 {
                return Err(RatesError::InvalidInput(format!(
                    "forward slot {j}: stepsize cap {} must stay strictly below 1/L = {}",
                    config.rho[j].upper(),
                    1.0 / l_j
                )));
            }
            xi2 = xi2.min(branch);
        }
        debug_assert!(xi2.is_finite() && xi2 > 0.0);

        let tau = 1.0 / (beta_lower * (2.0 - beta_upper));
        let alpha_lb = beta_lower * xi2 / xi1;
        let e1 = 2.0 / ((1.0 - sigma) * rho_lower)
            * (1.0 + lipschitz_max * (1.0 + rho_lower * lipschitz_max) / xi2)
            * xi1
            / (beta_lower * beta_lower * xi2);
        let rho_upper_last = if meta.backward.contains(&(n - 1)) {
            config.rho[n - 1].upper()
        } else {
            0.0
        };
        let e2 = xi1 / (2.0 * beta_lower * xi2)
            * (1.0
                + (3.0 + 2.0 * e1) * tau
                + rho_upper_last
                    * tau
                    * (2.0
                        + gamma * e1
                        + gamma * delta * xi1 / (beta_lower * beta_lower * xi2 * xi2)));

        let mut d1 = None;
        let mut p_star_norm = None;
        let mut e3 = None;
        let mut e4 = None;
        let mut b_x = None;
        let mut b_y = None;
        let mut single_point_slot = None;
        if let (Some(oracle), Some(p1)) = (&meta.oracle, p1) {
            if p1.gamma() != gamma {
                return Err(RatesError::InvalidInput(format!(
                    "starting point carries metric weight {}, configuration says {gamma}",
                    p1.gamma()
                )));
            }
            let p_star = oracle.point(gamma)?;
            let d1_sq = p1.gamma_dist_sq(&p_star)?;
            let star_sq = p_star.gamma_norm_sq();
            let d1_val = d1_sq.sqrt();
            let star_val = star_sq.sqrt();
            d1 = Some(d1_val);
            p_star_norm = Some(star_val);
            e3 = Some(2.0 * n_f.sqrt() * star_val * xi1 / (beta_lower * xi2));
            let bx_val = (2.0 * (xi1 / (xi2 * xi2) + 1.0 / gamma) * d1_sq
                + 2.0 / gamma * star_sq)
                .sqrt();
            let by_val = (2.0 * (n_f + e1) * d1_sq + 2.0 * n_f * star_sq).sqrt();
            b_x = Some(bx_val);
            b_y = Some(by_val);
            if meta.single_point_rate_applicable {
                if let Ok((j, lip_sum)) = select_single_point(meta, bx_val) {
                    single_point_slot = Some(j);
                    e4 = Some(
                        e3.unwrap()
                            + 4.0 * xi1 / (beta_lower * xi2)
                                * (lip_sum + n_f * by_val * (1.0 + 2.0 * lipschitz_max * bx_val)),
                    );
                }
            }
        }

        let mut mu = None;
        let mut strong_slot = None;
        let mut cocoercivity_max = None;
        let mut e5 = None;
        if let Some(strong) = meta.strong {
            mu = Some(strong.mu);
            strong_slot = Some(strong.slot);
            let leading: Option<f64> = meta.cocoercivity[..n - 1]
                .iter()
                .try_fold(0.0f64, |acc, g| g.map(|g| acc.max(g)));
            cocoercivity_max = leading;
            if let Some(gbar) = leading {
                let kappa = (1.0 / strong.mu).max(gbar);
                let value = 0.5
                    / ((8.0 * xi1 * xi1 * (1.0 + gamma) * (1.0 + gamma) * kappa * kappa
                        + 2.0 * gamma * xi1)
                        / (beta_lower * beta_lower * xi2 * xi2)
                        + 2.0 * e1);
                e5 = Some(value);
            }
        }

        Ok(RateConstants {
            n,
            gamma,
            sigma,
            delta,
            beta_lower,
            beta_upper,
            rho_lower,
            rho_upper_backward,
            rho_upper_last,
            lipschitz_max,
            forward_count,
            mu,
            strong_slot,
            cocoercivity_max,
            d1,
            p_star_norm,
            xi1,
            xi2,
            tau,
            alpha_lb,
            e1,
            e2,
            e3,
            e4,
            e5,
            b_x,
            b_y,
            single_point_slot,
        })
    }
}

/// Chooses the slot whose ergodic average carries the single-point gap
/// bound, returning it with the summed ball-Lipschitz moduli of the
/// remaining resolvent slots. The rate requires every resolvent slot
/// except possibly one to have a Lipschitz objective on the iterate
/// ball; with a free choice, excluding the largest modulus from the sum
/// gives the tightest constant.
fn select_single_point(meta: &ProblemMeta, radius: f64) -> Result<(usize, f64), RatesError> {
    match meta.backward.len() {
        0 => Ok((meta.forward[0], 0.0)),
        1 => Ok((meta.backward[0], 0.0)),
        _ => {
            let unbounded: Vec<usize> = meta
                .backward
                .iter()
                .copied()
                .filter(|&i| meta.ball_lipschitz[i].is_none())
                .collect();
            match unbounded.len() {
                0 => {
                    let j = meta
                        .backward
                        .iter()
                        .copied()
                        .max_by(|&a, &b| {
                            let ma = meta.ball_lipschitz[a].unwrap().at(radius);
                            let mb = meta.ball_lipschitz[b].unwrap().at(radius);
                            ma.partial_cmp(&mb).expect("ball bounds are finite")
                        })
                        .expect("at least two resolvent slots");
                    let sum = meta
                        .backward
                        .iter()
                        .filter(|&&i| i != j)
                        .map(|&i| meta.ball_lipschitz[i].unwrap().at(radius))
                        .sum();
                    Ok((j, sum))
                }
                1 => {
                    let j = unbounded[0];
                    let sum = meta
                        .backward
                        .iter()
                        .filter(|&&i| i != j)
                        .map(|&i| meta.ball_lipschitz[i].unwrap().at(radius))
                        .sum();
                    Ok((j, sum))
                }
                _ => Err(RatesError::NotApplicable(
                    "more than one resolvent slot lacks a Lipschitz objective on the iterate \
                     ball; the single-point gap rate needs all but one to have one"
                        .into(),
                )),
            }
        }
    }
}

/// Which guarantee a certificate re-checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificateKind {
    /// Distance to the oracle solution never increases, with the
    /// guaranteed per-step decrease.
    Fejer,
    /// Each iteration's affine function is nonpositive at the oracle.
    Separation,
    /// Projection step lengths respect their guaranteed lower bound.
    AlphaLb,
    /// The separator dominates the activation gaps from below.
    PhiLb,
    /// The separator gradient is dominated by the activation gaps.
    GradUb,
    /// All square-sum budgets hold, per iteration and cumulatively.
    Summability,
    /// Ergodic objective gap and consensus shrink at the certified 1/k
    /// rate.
    ErgodicGap,
    /// Uniform averages approach the unique solution at the certified
    /// 1/k squared-distance rate.
    StrongRate,
    /// Per-iteration geometric contraction of the distance to the
    /// unique solution.
    LinearContraction,
    /// Every activation point and image stays inside the certified
    /// norm balls.
    Bounds,
}

impl CertificateKind {
    pub const ALL: [CertificateKind; 10] = [
        CertificateKind::Fejer,
        CertificateKind::Separation,
        CertificateKind::AlphaLb,
        CertificateKind::PhiLb,
        CertificateKind::GradUb,
        CertificateKind::Summability,
        CertificateKind::ErgodicGap,
        CertificateKind::StrongRate,
        CertificateKind::LinearContraction,
        CertificateKind::Bounds,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CertificateKind::Fejer => "fejer",
            CertificateKind::Separation => "separation",
            CertificateKind::AlphaLb => "alpha_lb",
            CertificateKind::PhiLb => "phi_lb",
            CertificateKind::GradUb => "grad_ub",
            CertificateKind::Summability => "summability",
            CertificateKind::ErgodicGap => "ergodic_gap",
            CertificateKind::StrongRate => "strong_rate",
            CertificateKind::LinearContraction => "linear_contraction",
            CertificateKind::Bounds => "bounds",
        }
    }
}

/// Outcome of re-checking one guarantee over a trace. A residual is the
/// slack `bound - value` of one inequality evaluation; the certificate
/// passes when the smallest slack seen stays above `-tolerance`.
#[derive(Debug, Clone, Serialize)]
pub struct Certificate {
    pub kind: CertificateKind,
    pub pass: bool,
    /// Smallest slack across all evaluated inequalities; `None` when the
    /// trace offered nothing to check (vacuous pass).
    pub worst_residual: Option<f64>,
    pub tolerance: f64,
    /// Iteration attaining the worst residual.
    pub worst_iter: Option<usize>,
    /// Number of inequality evaluations aggregated.
    pub checks: usize,
    pub detail: String,
}

/// Fold of inequality slacks into a certificate.
struct Worst {
    residual: Option<f64>,
    iter: Option<usize>,
    checks: usize,
}

impl Worst {
    fn new() -> Self {
        Worst {
            residual: None,
            iter: None,
            checks: 0,
        }
    }

    fn push(&mut self, k: usize, residual: f64) {
        self.checks += 1;
        if self.residual.map_or(true, |r| residual < r) {
            self.residual = Some(residual);
            self.iter = Some(k);
        }
    }

    fn certificate(self, kind: CertificateKind, tolerance: f64, detail: String) -> Certificate {
        Certificate {
            kind,
            pass: self.residual.map_or(true, |r| r >= -tolerance),
            worst_residual: self.residual,
            tolerance,
            worst_iter: self.iter,
            checks: self.checks,
            detail,
        }
    }
}

fn require_trace(trace: &[IterationRecord]) -> Result<&IterationRecord, RatesError> {
    trace
        .first()
        .ok_or_else(|| RatesError::InvalidInput("empty trace".into()))
}

fn oracle_point(meta: &ProblemMeta, trace: &[IterationRecord]) -> Result<ProductPoint, RatesError> {
    let first = require_trace(trace)?;
    if first.n_operators() != meta.n {
        return Err(RatesError::InvalidInput(format!(
            "trace has {} slots, metadata describes {}",
            first.n_operators(),
            meta.n
        )));
    }
    let oracle = meta.require_oracle()?;
    Ok(oracle.point(first.p_before.gamma())?)
}

/// Starting distance of the trace to the oracle, in the weighted metric.
fn trace_d1(trace: &[IterationRecord], p_star: &ProductPoint) -> Result<f64, RatesError> {
    let first = require_trace(trace)?;
    Ok(first.p_before.gamma_dist_sq(p_star)?.sqrt())
}

/// Guards checks that consume starting-point-dependent constants:
/// the constants must have been computed for this very run.
fn ensure_constants_match_trace(constants: &RateConstants, measured_d1: f64) -> Result<(), RatesError> {
    match constants.d1 {
        Some(d1) if (d1 - measured_d1).abs() <= 1e-9 * measured_d1.max(1.0) => Ok(()),
        Some(d1) => Err(RatesError::InvalidInput(format!(
            "constants were computed for starting distance {d1:.6e}, trace starts at \
             {measured_d1:.6e}; recompute the constants for this run"
        ))),
        None => Err(RatesError::MissingMetadata(
            "starting-distance-dependent constants; compute them with the oracle and the \
             actual starting point"
                .into(),
        )),
    }
}

/// Distance to the oracle never increases, and each projection shrinks
/// it by at least the relaxation-weighted squared step.
pub fn check_fejer(trace: &[IterationRecord], meta: &ProblemMeta) -> Result<Certificate, RatesError> {
    let p_star = oracle_point(meta, trace)?;
    let mut worst = Worst::new();
    for record in trace {
        let Some(p_after) = &record.p_after else {
            continue;
        };
        let before = record.p_before.gamma_dist_sq(&p_star)?;
        let after = p_after.gamma_dist_sq(&p_star)?;
        let step = p_after.gamma_dist_sq(&record.p_before)?;
        let guaranteed_drop = record.beta * (2.0 - record.beta) * step;
        worst.push(record.k, before - guaranteed_drop - after);
    }
    let detail = format!(
        "distance recursion over {} projection steps against the oracle solution",
        worst.checks
    );
    Ok(worst.certificate(CertificateKind::Fejer, TOL_FEJER, detail))
}

/// Each iteration's affine function is nonpositive at the oracle, so
/// the halfspace the iterate is projected onto contains the solution.
pub fn check_separation(
    trace: &[IterationRecord],
    meta: &ProblemMeta,
) -> Result<Certificate, RatesError> {
    let p_star = oracle_point(meta, trace)?;
    let mut worst = Worst::new();
    for record in trace {
        worst.push(record.k, -phi_value(record, &p_star));
    }
    let detail = format!("separator evaluated at the oracle on {} iterations", worst.checks);
    Ok(worst.certificate(CertificateKind::Separation, TOL_SEPARATION, detail))
}

/// Projection step lengths stay above the guaranteed floor.
pub fn check_alpha_lower_bound(
    trace: &[IterationRecord],
    constants: &RateConstants,
) -> Result<Certificate, RatesError> {
    require_trace(trace)?;
    let mut worst = Worst::new();
    for record in trace {
        if let Some(alpha) = record.alpha {
            worst.push(record.k, alpha - constants.alpha_lb);
        }
    }
    let detail = format!(
        "step lengths vs floor {:.6e} on {} projections",
        constants.alpha_lb, worst.checks
    );
    Ok(worst.certificate(CertificateKind::AlphaLb, TOL_ALPHA, detail))
}

/// The separator dominates the total squared activation displacement
/// from below, and — in its companion form — dominates the dual
/// residuals of the activations.
pub fn check_phi_lower_bound(
    trace: &[IterationRecord],
    meta: &ProblemMeta,
    constants: &RateConstants,
) -> Result<Certificate, RatesError> {
    let first = require_trace(trace)?;
    if first.n_operators() != meta.n {
        return Err(RatesError::InvalidInput(
            "trace and metadata disagree on the slot count".into(),
        ));
    }
    for &j in &meta.forward {
        if meta.lipschitz[j].is_none() {
            return Err(RatesError::MissingMetadata(format!(
                "forward slot {j} lacks a Lipschitz modulus"
            )));
        }
    }
    let rho_lower = constants.rho_lower;
    let sigma = constants.sigma;
    let mut worst = Worst::new();
    for record in trace {
        let z = record.p_before.z();
        let displacement: f64 = record.x.iter().map(|x| z.sub(x).norm_sq()).sum();
        worst.push(record.k, record.phi - constants.xi2 * displacement);

        let mut dual_residuals = 0.0;
        for &i in &meta.backward {
            let w_i = record.w_before(i);
            dual_residuals += (1.0 - sigma) * rho_lower * record.y[i].sub(&w_i).norm_sq();
        }
        let mut forward_penalty = 0.0;
        for &i in &meta.forward {
            let w_i = record.w_before(i);
            let t_z = record.t_z[i]
                .as_ref()
                .expect("forward slots record their evaluation at z");
            dual_residuals += rho_lower * t_z.sub(&w_i).norm_sq();
            forward_penalty += meta.lipschitz[i].unwrap() * z.sub(&record.x[i]).norm_sq();
        }
        worst.push(record.k, record.phi + forward_penalty - dual_residuals);
    }
    let detail = format!(
        "separator floor and companion dual-residual bound, {} evaluations",
        worst.checks
    );
    Ok(worst.certificate(CertificateKind::PhiLb, TOL_PHI_LOWER, detail))
}

/// The squared separator gradient is dominated by the total squared
/// activation displacement.
pub fn check_gradient_upper_bound(
    trace: &[IterationRecord],
    constants: &RateConstants,
) -> Result<Certificate, RatesError> {
    require_trace(trace)?;
    let mut worst = Worst::new();
    for record in trace {
        let z = record.p_before.z();
        let displacement: f64 = record.x.iter().map(|x| z.sub(x).norm_sq()).sum();
        worst.push(record.k, constants.xi1 * displacement - record.pi);
    }
    let detail = format!("gradient-norm cap on {} iterations", worst.checks);
    Ok(worst.certificate(CertificateKind::GradUb, TOL_GRAD_UPPER, detail))
}

/// One budgeted quantity of the summability ledger.
#[derive(Debug, Clone, Serialize)]
pub struct LedgerEntry {
    /// Stable short name, used for report keys and trace columns.
    pub name: &'static str,
    /// Running sum for cumulative entries, latest value for
    /// per-iteration entries.
    pub value: f64,
    /// Bound currently in force.
    pub cap: f64,
    /// Smallest cap-minus-value slack seen so far.
    pub worst_residual: Option<f64>,
    pub worst_iter: Option<usize>,
}

impl LedgerEntry {
    fn new(name: &'static str, cap: f64) -> Self {
        LedgerEntry {
            name,
            value: 0.0,
            cap,
            worst_residual: None,
            worst_iter: None,
        }
    }

    fn record(&mut self, k: usize) {
        let residual = self.cap - self.value;
        if self.worst_residual.map_or(true, |r| residual < r) {
            self.worst_residual = Some(residual);
            self.worst_iter = Some(k);
        }
    }

    /// Cap-minus-value slack currently in force.
    pub fn residual(&self) -> f64 {
        self.cap - self.value
    }
}

/// Running square-sums the guarantees bound, with their budgets.
/// Cumulative entries accumulate over the run against a fixed budget;
/// per-iteration entries compare each iteration's value against a cap
/// proportional to that iteration's squared projection step.
///
/// The terminal iteration of a finished run (the one whose separator
/// vanished) performs no projection and is outside every budget, so
/// [`SummabilityLedger::update`] ignores it.
#[derive(Debug, Clone, Serialize)]
pub struct SummabilityLedger {
    /// Squared starting distance to the oracle in the weighted metric.
    pub d1_sq: f64,
    /// Projection iterations folded in so far.
    pub iterations: usize,
    /// `sum_t ||z^{t+1} - z^t||^2 <= tau / gamma * d1^2`.
    pub z_steps: LedgerEntry,
    /// `sum_t sum_{i<n} ||w_i^{t+1} - w_i^t||^2 <= tau * d1^2` over the
    /// stored dual components.
    pub w_steps: LedgerEntry,
    /// `sum_t ||p^{t+1} - p^t||^2 <= tau * d1^2` in the weighted metric.
    pub p_steps: LedgerEntry,
    /// `sum_t sum_i ||z^t - x_i^t||^2 <= tau * xi1 / (beta^2 xi2^2) * d1^2`.
    pub prox_gaps: LedgerEntry,
    /// `sum_t sum_i ||w_i^t - y_i^t||^2 <= tau * E1 * d1^2`, including
    /// the derived last dual.
    pub graph_gaps: LedgerEntry,
    /// `sum_t sum_{i forward} ||w_i^t - T_i z^t||^2 <= tau * E1 * d1^2`.
    pub forward_drift: LedgerEntry,
    /// `sum_t phi_t <= tau * xi1 / (beta^2 xi2) * d1^2`.
    pub phi_sum: LedgerEntry,
    /// Per iteration: `sum_i ||z^k - x_i^k||^2` vs its share of the
    /// squared projection step.
    pub prox_gap_per_iter: LedgerEntry,
    /// Per iteration: `sum_i ||w_i^k - y_i^k||^2` vs `E1` times the
    /// squared projection step.
    pub graph_gap_per_iter: LedgerEntry,
    /// Per iteration: `phi_k` vs its share of the squared projection
    /// step.
    pub phi_per_iter: LedgerEntry,
    #[serde(skip)]
    n: usize,
    #[serde(skip)]
    prox_factor: f64,
    #[serde(skip)]
    graph_factor: f64,
    #[serde(skip)]
    phi_factor: f64,
}

impl SummabilityLedger {
    pub fn new(
        constants: &RateConstants,
        p1: &ProductPoint,
        p_star: &ProductPoint,
    ) -> Result<Self, RatesError> {
        let d1_sq = p1.gamma_dist_sq(p_star)?;
        let bl_sq = constants.beta_lower * constants.beta_lower;
        let prox_factor = constants.xi1 / (bl_sq * constants.xi2 * constants.xi2);
        let graph_factor = constants.e1;
        let phi_factor = constants.xi1 / (bl_sq * constants.xi2);
        let tau = constants.tau;
        Ok(SummabilityLedger {
            d1_sq,
            iterations: 0,
            z_steps: LedgerEntry::new("cap_z_steps", tau / constants.gamma * d1_sq),
            w_steps: LedgerEntry::new("cap_w_steps", tau * d1_sq),
            p_steps: LedgerEntry::new("cap_p_steps", tau * d1_sq),
            prox_gaps: LedgerEntry::new("cap_prox_gap_sum", tau * prox_factor * d1_sq),
            graph_gaps: LedgerEntry::new("cap_graph_gap_sum", tau * graph_factor * d1_sq),
            forward_drift: LedgerEntry::new("cap_forward_drift_sum", tau * graph_factor * d1_sq),
            phi_sum: LedgerEntry::new("cap_phi_sum", tau * phi_factor * d1_sq),
            prox_gap_per_iter: LedgerEntry::new("cap_prox_gap_iter", 0.0),
            graph_gap_per_iter: LedgerEntry::new("cap_graph_gap_iter", 0.0),
            phi_per_iter: LedgerEntry::new("cap_phi_iter", 0.0),
            n: constants.n,
            prox_factor,
            graph_factor,
            phi_factor,
        })
    }

    /// Folds one iteration record in. Terminal records (no projection)
    /// contribute nothing.
    pub fn update(&mut self, record: &IterationRecord) -> Result<(), RatesError> {
        if record.n_operators() != self.n {
            return Err(RatesError::InvalidInput(format!(
                "record has {} slots, ledger was built for {}",
                record.n_operators(),
                self.n
            )));
        }
        let Some(p_after) = &record.p_after else {
            return Ok(());
        };
        let k = record.k;
        self.iterations += 1;

        let dz = p_after.z().sub(record.p_before.z()).norm_sq();
        let dw: f64 = p_after
            .w()
            .iter()
            .zip(record.p_before.w())
            .map(|(a, b)| a.sub(b).norm_sq())
            .sum();
        let dp = p_after.gamma_dist_sq(&record.p_before)?;

        let z = record.p_before.z();
        let prox_gap: f64 = record.x.iter().map(|x| z.sub(x).norm_sq()).sum();
        let graph_gap: f64 = (0..record.n_operators())
            .map(|i| record.y[i].sub(&record.w_before(i)).norm_sq())
            .sum();
        let drift: f64 = record
            .t_z
            .iter()
            .enumerate()
            .filter_map(|(i, t_z)| {
                t_z.as_ref()
                    .map(|t_z| t_z.sub(&record.w_before(i)).norm_sq())
            })
            .sum();

        self.z_steps.value += dz;
        self.z_steps.record(k);
        self.w_steps.value += dw;
        self.w_steps.record(k);
        self.p_steps.value += dp;
        self.p_steps.record(k);
        self.prox_gaps.value += prox_gap;
        self.prox_gaps.record(k);
        self.graph_gaps.value += graph_gap;
        self.graph_gaps.record(k);
        self.forward_drift.value += drift;
        self.forward_drift.record(k);
        self.phi_sum.value += record.phi;
        self.phi_sum.record(k);

        self.prox_gap_per_iter.value = prox_gap;
        self.prox_gap_per_iter.cap = self.prox_factor * dp;
        self.prox_gap_per_iter.record(k);
        self.graph_gap_per_iter.value = graph_gap;
        self.graph_gap_per_iter.cap = self.graph_factor * dp;
        self.graph_gap_per_iter.record(k);
        self.phi_per_iter.value = record.phi;
        self.phi_per_iter.cap = self.phi_factor * dp;
        self.phi_per_iter.record(k);
        Ok(())
    }

    pub fn entries(&self) -> [&LedgerEntry; 10] {
        [
            &self.z_steps,
            &self.w_steps,
            &self.p_steps,
            &self.prox_gaps,
            &self.graph_gaps,
            &self.forward_drift,
            &self.phi_sum,
            &self.prox_gap_per_iter,
            &self.graph_gap_per_iter,
            &self.phi_per_iter,
        ]
    }

    pub fn certificate(&self) -> Certificate {
        let mut worst = Worst::new();
        let mut tightest = "none";
        for entry in self.entries() {
            if let (Some(residual), Some(iter)) = (entry.worst_residual, entry.worst_iter) {
                let before = worst.residual;
                worst.push(iter, residual);
                if worst.residual != before {
                    tightest = entry.name;
                }
            }
        }
        let detail = format!(
            "10 budgets over {} projection iterations; tightest: {tightest}",
            self.iterations
        );
        worst.certificate(CertificateKind::Summability, TOL_SUMMABILITY, detail)
    }

    /// Builds a ledger for the trace's own starting point and folds the
    /// whole trace in.
    pub fn scan(
        trace: &[IterationRecord],
        meta: &ProblemMeta,
        constants: &RateConstants,
    ) -> Result<(SummabilityLedger, Certificate), RatesError> {
        let first = require_trace(trace)?;
        let p_star = oracle_point(meta, trace)?;
        let mut ledger = SummabilityLedger::new(constants, &first.p_before, &p_star)?;
        for record in trace {
            ledger.update(record)?;
        }
        let certificate = ledger.certificate();
        Ok((ledger, certificate))
    }
}

/// Convenience wrapper around [`SummabilityLedger::scan`] returning only
/// the certificate.
pub fn check_summability(
    trace: &[IterationRecord],
    meta: &ProblemMeta,
    constants: &RateConstants,
) -> Result<Certificate, RatesError> {
    SummabilityLedger::scan(trace, meta, constants).map(|(_, certificate)| certificate)
}

/// Ergodic averages over the first `k` projection iterations: the
/// step-length-weighted average per slot carries the objective-gap
/// rate, the uniform average carries the strong-monotonicity rate.
#[derive(Debug, Clone)]
pub struct ErgodicAverages {
    pub k: usize,
    pub weighted: Vec<Vector>,
    pub uniform: Vec<Vector>,
    /// Total step-length weight behind the weighted averages.
    pub weight_sum: f64,
}

pub fn ergodic_averages(
    trace: &[IterationRecord],
    k: usize,
) -> Result<ErgodicAverages, RatesError> {
    let first = require_trace(trace)?;
    if k == 0 {
        return Err(RatesError::InvalidInput("k must be at least 1".into()));
    }
    let usable = trace.iter().take_while(|r| r.alpha.is_some()).count();
    if k > usable {
        return Err(RatesError::InvalidInput(format!(
            "averages requested at k = {k}, but only {usable} projection iterations were recorded"
        )));
    }
    let n = first.n_operators();
    let dim = first.v.dim();
    let mut weighted_sums = vec![Vector::zeros(dim); n];
    let mut uniform_sums = vec![Vector::zeros(dim); n];
    let mut weight_sum = 0.0;
    for record in &trace[..k] {
        let alpha = record.alpha.expect("prefix of projection iterations");
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(RatesError::InvalidInput(format!(
                "nonpositive step length {alpha} at iteration {}",
                record.k
            )));
        }
        weight_sum += alpha;
        for i in 0..n {
            weighted_sums[i] = weighted_sums[i].axpy(alpha, &record.x[i]);
            uniform_sums[i] = uniform_sums[i].add(&record.x[i]);
        }
    }
    let weighted = weighted_sums
        .into_iter()
        .map(|s| s.scale(1.0 / weight_sum))
        .collect();
    let uniform = uniform_sums
        .into_iter()
        .map(|s| s.scale(1.0 / k as f64))
        .collect();
    Ok(ErgodicAverages {
        k,
        weighted,
        uniform,
        weight_sum,
    })
}

/// Ergodic objective gap, consensus, and (when the instance admits it)
/// the single-point gap, each checked against its certified 1/k bound
/// at every horizon up to `k_max`.
pub fn check_ergodic_gap(
    trace: &[IterationRecord],
    slots: &[OperatorSlot],
    meta: &ProblemMeta,
    constants: &RateConstants,
    k_max: usize,
) -> Result<Certificate, RatesError> {
    ergodic_gap_impl(trace, slots, meta, constants, k_max, false)
}

/// Like [`check_ergodic_gap`], but fails instead of silently skipping
/// when the single-point variant cannot be certified.
pub fn check_ergodic_gap_single_point(
    trace: &[IterationRecord],
    slots: &[OperatorSlot],
    meta: &ProblemMeta,
    constants: &RateConstants,
    k_max: usize,
) -> Result<Certificate, RatesError> {
    ergodic_gap_impl(trace, slots, meta, constants, k_max, true)
}

fn ergodic_gap_impl(
    trace: &[IterationRecord],
    slots: &[OperatorSlot],
    meta: &ProblemMeta,
    constants: &RateConstants,
    k_max: usize,
    require_single_point: bool,
) -> Result<Certificate, RatesError> {
    let first = require_trace(trace)?;
    if k_max == 0 {
        return Err(RatesError::InvalidInput("k_max must be at least 1".into()));
    }
    if slots.len() != meta.n || first.n_operators() != meta.n {
        return Err(RatesError::InvalidInput(
            "trace, slots, and metadata disagree on the slot count".into(),
        ));
    }
    let p_star = oracle_point(meta, trace)?;
    let d1 = trace_d1(trace, &p_star)?;
    let n = meta.n;
    let dim = first.v.dim();

    let objective = |point: &Vector| -> Option<f64> {
        let mut total = 0.0;
        for slot in slots {
            total += slot.function_value(point)?;
        }
        Some(total)
    };
    let gap_available =
        meta.f_star.is_some() && objective(&first.x[0]).is_some();

    if require_single_point {
        if !meta.single_point_rate_applicable {
            return Err(RatesError::NotApplicable(
                "instance does not admit the single-point objective-gap rate".into(),
            ));
        }
        if meta.f_star.is_none() {
            return Err(RatesError::MissingMetadata(
                "single-point gap rate needs the optimal value".into(),
            ));
        }
        let radius = constants.b_x.ok_or_else(|| {
            RatesError::MissingMetadata(
                "single-point gap rate needs the iterate-ball radius; compute the constants \
                 with the oracle and starting point"
                    .into(),
            )
        })?;
        // Surface the selection error when the structure rules it out.
        select_single_point(meta, radius)?;
    }
    let include_single_point = if require_single_point {
        true
    } else {
        gap_available && meta.single_point_rate_applicable && constants.e4.is_some()
    };
    if include_single_point || !gap_available {
        // e4 and b_x depend on the starting distance; make sure the
        // constants describe this trace. Consensus alone needs no such
        // guard, but a gap check without function values is vacuous.
        if include_single_point {
            ensure_constants_match_trace(constants, d1)?;
        }
    }
    let e4 = constants.e4;
    let j = constants.single_point_slot;
    if include_single_point && (e4.is_none() || j.is_none()) {
        return Err(RatesError::MissingMetadata(
            "single-point gap constant was not computable for this instance".into(),
        ));
    }

    let usable = trace.iter().take_while(|r| r.alpha.is_some()).count();
    let horizon = k_max.min(usable);
    let consensus_bound = |k: f64| 4.0 * d1 / (constants.alpha_lb * k);
    let gap_bound = |k: f64, linear: f64| (constants.e2 * d1 * d1 + linear * d1) / k;

    let mut worst = Worst::new();
    let mut weighted_sums = vec![Vector::zeros(dim); n];
    let mut weight_sum = 0.0;
    let mut parts: Vec<&str> = vec!["consensus"];
    if gap_available {
        parts.push("objective gap");
    }
    if include_single_point {
        parts.push("single-point gap");
    }
    for record in &trace[..horizon] {
        let alpha = record.alpha.expect("prefix of projection iterations");
        weight_sum += alpha;
        for i in 0..n {
            weighted_sums[i] = weighted_sums[i].axpy(alpha, &record.x[i]);
        }
        let k = record.k as f64;
        let averages: Vec<Vector> = weighted_sums
            .iter()
            .map(|s| s.scale(1.0 / weight_sum))
            .collect();
        let mut max_spread = 0.0f64;
        for a in 0..n {
            for b in (a + 1)..n {
                max_spread = max_spread.max(averages[a].dist(&averages[b]));
            }
        }
        worst.push(record.k, consensus_bound(k) - max_spread);
        if gap_available {
            let f_star = meta.f_star.unwrap();
            let mut total = 0.0;
            for (i, avg) in averages.iter().enumerate() {
                total += slots[i]
                    .function_value(avg)
                    .expect("availability probed above");
            }
            if let Some(e3) = constants.e3 {
                worst.push(record.k, gap_bound(k, e3) - (total - f_star));
            }
            if include_single_point {
                let pivot = &averages[j.unwrap()];
                let mut pivot_total = 0.0;
                for slot in slots {
                    pivot_total += slot
                        .function_value(pivot)
                        .expect("availability probed above");
                }
                worst.push(record.k, gap_bound(k, e4.unwrap()) - (pivot_total - f_star));
            }
        }
    }

    // A vanished separator ends the run with an exact solution: every
    // slot's terminal activation point attains the optimal value.
    if k_max >= trace.len() {
        if let Some(last) = trace.last() {
            if last.alpha.is_none() && last.pi == 0.0 && gap_available {
                let f_star = meta.f_star.unwrap();
                for x in &last.x {
                    let total = objective(x).expect("availability probed above");
                    worst.push(last.k, -(total - f_star).abs());
                }
                parts.push("exact terminal value");
            }
        }
    }

    if worst.checks == 0 {
        return Err(RatesError::InvalidInput(
            "no projection iterations to average".into(),
        ));
    }
    let detail = format!(
        "{} over {} horizons",
        parts.join(" + "),
        horizon
    );
    Ok(worst.certificate(CertificateKind::ErgodicGap, TOL_RATE, detail))
}

/// Per-iteration strong-monotonicity separation at the oracle plus the
/// 1/k squared-distance rate of the uniform average of the strongly
/// monotone slot's activation points.
pub fn check_strong_rate(
    trace: &[IterationRecord],
    meta: &ProblemMeta,
    constants: &RateConstants,
    k_max: usize,
) -> Result<Certificate, RatesError> {
    let first = require_trace(trace)?;
    if k_max == 0 {
        return Err(RatesError::InvalidInput("k_max must be at least 1".into()));
    }
    let strong = meta.strong.ok_or_else(|| {
        RatesError::MissingMetadata("a strong monotonicity modulus with its slot is required".into())
    })?;
    let p_star = oracle_point(meta, trace)?;
    let d1 = trace_d1(trace, &p_star)?;
    let z_star = &meta.oracle.as_ref().expect("oracle_point succeeded").z_star;
    if z_star.dim() != first.v.dim() {
        return Err(RatesError::InvalidInput(
            "oracle dimension does not match the trace".into(),
        ));
    }
    let l = strong.slot;
    let mu = strong.mu;

    let mut worst = Worst::new();
    let mut uniform_sum = Vector::zeros(z_star.dim());
    let mut separation_checks = 0usize;
    let mut rate_checks = 0usize;
    let usable = trace.iter().take_while(|r| r.alpha.is_some()).count();
    let horizon = k_max.min(usable);
    for record in trace {
        // Separation sharpened by strong monotonicity holds at every
        // iteration, terminal included.
        let sharpened = -phi_value(record, &p_star) - mu * z_star.sub(&record.x[l]).norm_sq();
        worst.push(record.k, sharpened);
        separation_checks += 1;

        if record.alpha.is_some() && record.k <= horizon {
            uniform_sum = uniform_sum.add(&record.x[l]);
            let k = record.k as f64;
            let average = uniform_sum.scale(1.0 / k);
            let bound =
                constants.xi1 * d1 * d1 / (constants.beta_lower * constants.xi2 * mu * k);
            worst.push(record.k, bound - average.sub(z_star).norm_sq());
            rate_checks += 1;
        }
    }
    let detail = format!(
        "sharpened separation on {separation_checks} iterations, averaged-distance rate on \
         {rate_checks} horizons (slot {l}, mu = {mu:.6e})"
    );
    Ok(worst.certificate(CertificateKind::StrongRate, TOL_RATE, detail))
}

/// Per-iteration geometric contraction of the distance to the unique
/// solution, plus the key inequality behind it: the squared projection
/// step dominates a fixed fraction of the squared distance.
pub fn check_linear_contraction(
    trace: &[IterationRecord],
    meta: &ProblemMeta,
    constants: &RateConstants,
) -> Result<Certificate, RatesError> {
    require_trace(trace)?;
    let e5 = constants.e5.ok_or_else(|| {
        RatesError::MissingMetadata(
            "contraction factor unavailable: needs cocoercivity moduli for all leading slots \
             and a strong monotonicity modulus"
                .into(),
        )
    })?;
    let p_star = oracle_point(meta, trace)?;
    let membership = e5 > 0.0 && e5 <= 0.25;
    let mut worst = Worst::new();
    for record in trace {
        let Some(p_after) = &record.p_after else {
            continue;
        };
        let before = record.p_before.gamma_dist_sq(&p_star)?;
        let after = p_after.gamma_dist_sq(&p_star)?;
        let step = p_after.gamma_dist_sq(&record.p_before)?;
        worst.push(record.k, (1.0 - e5) * before - after);
        worst.push(record.k, step - e5 * before);
    }
    let detail = format!(
        "factor {e5:.6e} in (0, 1/4]: {membership}; contraction and step-domination on {} \
         projections",
        worst.checks / 2
    );
    let mut certificate = worst.certificate(CertificateKind::LinearContraction, TOL_LINEAR, detail);
    if !membership {
        certificate.pass = false;
    }
    Ok(certificate)
}

/// Every activation point and image stays inside the certified norm
/// balls.
pub fn check_bounds(
    trace: &[IterationRecord],
    meta: &ProblemMeta,
    constants: &RateConstants,
) -> Result<Certificate, RatesError> {
    require_trace(trace)?;
    let p_star = oracle_point(meta, trace)?;
    let d1 = trace_d1(trace, &p_star)?;
    ensure_constants_match_trace(constants, d1)?;
    let b_x = constants.b_x.expect("guard above implies presence");
    let b_y = constants.b_y.expect("guard above implies presence");
    let mut worst = Worst::new();
    for record in trace {
        for x in &record.x {
            worst.push(record.k, b_x - x.norm());
        }
        for y in &record.y {
            worst.push(record.k, b_y - y.norm());
        }
    }
    let detail = format!(
        "norm caps B_x = {b_x:.6e}, B_y = {b_y:.6e} on {} activations",
        worst.checks / 2
    );
    Ok(worst.certificate(CertificateKind::Bounds, TOL_BOUNDS, detail))
}
