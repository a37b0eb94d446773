//! Seeded benchmark families with exact solution data.
//!
//! Every generator is a pure function of its parameters and seed. The
//! returned metadata carries moduli that are exact by construction —
//! matrices are assembled from seeded orthogonal factors and prescribed
//! spectra, so Lipschitz, cocoercivity, and strong-monotonicity constants
//! are known values rather than estimates — together with a solution
//! whose per-slot graph residuals certify it to high precision.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::linalg::{
    gaussian_vector, lu_factor, normal_from_conjugate_pairs, orthonormal_columns,
    random_orthogonal, symmetric_with_spectrum, LinalgError, Matrix,
};
use crate::operators::{
    make_box_indicator, make_least_squares, make_soft_threshold, AffineForward, AffineProx,
    OperatorError, OperatorMeta, OperatorSlot,
};
use crate::rates::{ProblemMeta, SolutionOracle, StrongSlot};
use crate::space::{SpaceError, Vector};

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("instance construction failed: {0}")]
    Construction(String),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Space(#[from] SpaceError),
}

/// A ready-to-solve inclusion: the operator slots, the structural
/// metadata the certificate layer consumes (including the known
/// solution), and provenance.
pub struct ProblemInstance {
    pub slots: Vec<OperatorSlot>,
    pub meta: ProblemMeta,
    pub seed: u64,
    pub description: String,
}

impl ProblemInstance {
    /// Ambient dimension, read from the stored solution or, failing
    /// that, from the slots.
    pub fn dim(&self) -> usize {
        self.meta
            .oracle
            .as_ref()
            .map(|o| o.z_star.dim())
            .or_else(|| self.slots.iter().find_map(OperatorSlot::dim_hint))
            .unwrap_or(0)
    }
}

// ---------------------------------------------------------------------
// Shared construction helpers
// ---------------------------------------------------------------------

fn check_dim(name: &str, d: usize) -> Result<(), ProblemError> {
    if d == 0 {
        return Err(ProblemError::InvalidParameter(format!(
            "{name}: dimension must be at least 1"
        )));
    }
    Ok(())
}

fn check_count(name: &str, n: usize) -> Result<(), ProblemError> {
    if n == 0 {
        return Err(ProblemError::InvalidParameter(format!(
            "{name}: need at least one operator"
        )));
    }
    Ok(())
}

fn check_positive(name: &str, what: &str, value: f64) -> Result<(), ProblemError> {
    if !(value.is_finite() && value > 0.0) {
        return Err(ProblemError::InvalidParameter(format!(
            "{name}: {what} must be positive and finite, got {value}"
        )));
    }
    Ok(())
}

/// Evenly spaced eigenvalues with both endpoints stored exactly; a
/// single-eigenvalue spectrum keeps the pinned endpoint.
fn pinned_spectrum(lo: f64, hi: f64, count: usize, pin_hi: bool) -> Vec<f64> {
    if count == 1 {
        return vec![if pin_hi { hi } else { lo }];
    }
    let mut eigs: Vec<f64> = (0..count)
        .map(|j| lo + (hi - lo) * j as f64 / (count - 1) as f64)
        .collect();
    eigs[0] = lo;
    eigs[count - 1] = hi;
    eigs
}

/// Solves `sum_i (A_i z + b_i) = 0` by LU with one step of iterative
/// refinement; returns `z*` together with every slot value `A_i z* + b_i`.
fn affine_solution(
    mats: &[Matrix],
    offs: &[Vector],
) -> Result<(Vector, Vec<Vector>), ProblemError> {
    let d = offs[0].dim();
    let mut total = Matrix::zeros(d, d);
    for m in mats {
        for i in 0..d {
            for j in 0..d {
                total.set(i, j, total.get(i, j) + m.get(i, j));
            }
        }
    }
    let mut total_b = Vector::zeros(d);
    for b in offs {
        total_b = total_b.add(b);
    }
    let factors = lu_factor(&total)?;
    let mut z = factors.solve(&total_b.scale(-1.0))?;
    let residual = total.matvec(&z).add(&total_b);
    let correction = factors.solve(&residual)?;
    z = z.sub(&correction);
    let duals = mats
        .iter()
        .zip(offs)
        .map(|(m, b)| m.matvec(&z).add(b))
        .collect();
    Ok((z, duals))
}

/// Norm of `(z*, w*_1..w*_{n-1})` in the product space at unit weight;
/// instances are rescaled so a start at the origin sits within a radius
/// of 8 of the solution.
fn product_norm(z: &Vector, duals: &[Vector], stored: usize) -> f64 {
    let mut total = z.norm_sq();
    for w in &duals[..stored] {
        total += w.norm_sq();
    }
    total.sqrt()
}

// ---------------------------------------------------------------------
// l1-regularized least squares
// ---------------------------------------------------------------------

/// Reference solution of `min_x ||A x - b||^2 / 2 + lambda * ||x||_1`:
/// proximal gradient at stepsize `1 / L`, stopped once the duality gap
/// falls below `1e-12 * max(1, |objective|)`, then polished by an exact
/// solve on the identified support. Returns the minimizer and the
/// optimal value.
pub fn l1_least_squares_reference(
    a: &Matrix,
    b: &Vector,
    lambda: f64,
    max_iters: usize,
) -> Result<(Vector, f64), ProblemError> {
    if a.rows() == 0 || a.cols() == 0 || a.rows() != b.dim() {
        return Err(ProblemError::InvalidParameter(format!(
            "l1 reference: matrix is {}x{} with target of dimension {}",
            a.rows(),
            a.cols(),
            b.dim()
        )));
    }
    check_positive("l1 reference", "lambda", lambda)?;
    if max_iters == 0 {
        return Err(ProblemError::InvalidParameter(
            "l1 reference: need at least one iteration".into(),
        ));
    }

    let d = a.cols();
    let gram = a.transpose().matmul(&a);
    let atb = a.matvec_t(b);
    let lip = gram.spectral_norm_estimate(600, 0x715a) * (1.0 + 1e-6) + 1e-12;
    let step = 1.0 / lip;

    let mut x = Vector::zeros(d);
    let mut gap_ok = false;
    for _ in 0..max_iters {
        let grad = gram.matvec(&x).sub(&atb);
        let residual = a.matvec(&x).sub(b);
        let objective = 0.5 * residual.norm_sq() + lambda * l1_norm(&x);
        let grad_inf = inf_norm(&grad);
        let theta = if grad_inf > lambda {
            residual.scale(lambda / grad_inf)
        } else {
            residual.clone()
        };
        let dual = -0.5 * theta.norm_sq() - b.dot(&theta);
        if objective - dual <= 1e-12 * objective.abs().max(1.0) {
            gap_ok = true;
            break;
        }
        let entries = x
            .as_slice()
            .iter()
            .zip(grad.as_slice())
            .map(|(&xi, &gi)| shrink(xi - step * gi, step * lambda))
            .collect();
        x = Vector::new(entries).map_err(|_| {
            ProblemError::Construction("l1 reference: iterate left the finite range".into())
        })?;
    }

    match polish_on_support(&gram, &atb, lambda, &x) {
        Some(polished) => x = polished,
        None if gap_ok => {}
        None => {
            return Err(ProblemError::Construction(
                "l1 reference: no duality-gap convergence and no clean support".into(),
            ))
        }
    }
    let fstar = 0.5 * a.matvec(&x).sub(b).norm_sq() + lambda * l1_norm(&x);
    Ok((x, fstar))
}

fn l1_norm(x: &Vector) -> f64 {
    x.as_slice().iter().map(|v| v.abs()).sum()
}

fn inf_norm(x: &Vector) -> f64 {
    x.as_slice().iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

fn shrink(value: f64, threshold: f64) -> f64 {
    if value > threshold {
        value - threshold
    } else if value < -threshold {
        value + threshold
    } else {
        0.0
    }
}

/// Re-solves the first-order conditions exactly on the support of `x`
/// and returns the result when it is a verified minimizer: the solve
/// must preserve every sign and the off-support gradient must stay
/// within the threshold.
fn polish_on_support(gram: &Matrix, atb: &Vector, lambda: f64, x: &Vector) -> Option<Vector> {
    let d = x.dim();
    let support: Vec<usize> = (0..d).filter(|&i| x.as_slice()[i] != 0.0).collect();
    if support.is_empty() {
        return if inf_norm(atb) <= lambda {
            Some(Vector::zeros(d))
        } else {
            None
        };
    }
    let signs: Vec<f64> = support.iter().map(|&i| x.as_slice()[i].signum()).collect();
    let rows: Vec<Vec<f64>> = support
        .iter()
        .map(|&i| support.iter().map(|&j| gram.get(i, j)).collect())
        .collect();
    let sub_gram = Matrix::from_rows(rows).ok()?;
    let rhs = Vector::new(
        support
            .iter()
            .zip(&signs)
            .map(|(&i, s)| atb.as_slice()[i] - lambda * s)
            .collect(),
    )
    .ok()?;
    let factors = lu_factor(&sub_gram).ok()?;
    let mut sol = factors.solve(&rhs).ok()?;
    let refinement = factors
        .solve(&sub_gram.matvec(&sol).sub(&rhs))
        .ok()?;
    sol = sol.sub(&refinement);

    for (value, sign) in sol.as_slice().iter().zip(&signs) {
        if value.signum() != *sign || *value == 0.0 {
            return None;
        }
    }
    let mut full = vec![0.0; d];
    for (&i, &value) in support.iter().zip(sol.as_slice()) {
        full[i] = value;
    }
    let full = Vector::new(full).ok()?;
    let grad = gram.matvec(&full).sub(atb);
    for (i, g) in grad.as_slice().iter().enumerate() {
        if !support.contains(&i) && g.abs() > lambda + 1e-12 {
            return None;
        }
    }
    Some(full)
}

/// `min_z lambda * ||z||_1 + ||A z - b||^2 / 2` as a two-slot inclusion:
/// the subdifferential of the l1 term (resolvent slot) plus the
/// least-squares gradient (forward slot). `A` is `m x d` with singular
/// values prescribed on `[0.3, 1.2]`, and `b` is a noisy image of a
/// sparse point.
pub fn make_lasso(
    d: usize,
    m: usize,
    lambda: f64,
    seed: u64,
) -> Result<ProblemInstance, ProblemError> {
    check_dim("make_lasso", d)?;
    check_dim("make_lasso", m)?;
    check_positive("make_lasso", "lambda", lambda)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rank = d.min(m);
    let singulars = pinned_spectrum(1.2, 0.3, rank, false);
    let u = orthonormal_columns(m, rank, &mut rng);
    let v = orthonormal_columns(d, rank, &mut rng);
    let a = u.scale_cols(&singulars).matmul(&v.transpose());

    let sparsity = (d / 4).max(1);
    let mut coords: Vec<usize> = (0..d).collect();
    coords.shuffle(&mut rng);
    let mut signal = vec![0.0; d];
    for &i in &coords[..sparsity] {
        let magnitude = 0.5 + 0.5 * rng.random::<f64>();
        signal[i] = if rng.random_bool(0.5) {
            magnitude
        } else {
            -magnitude
        };
    }
    let signal = Vector::new(signal).expect("finite by construction");
    let noise = gaussian_vector(m, &mut rng).scale(0.05);
    let b = a.matvec(&signal).add(&noise);

    let (z_star, f_star) = l1_least_squares_reference(&a, &b, lambda, 1_000_000)?;

    let top = singulars[0] * singulars[0];
    let bottom = singulars[rank - 1] * singulars[rank - 1];
    let slots = vec![make_soft_threshold(lambda)?, make_least_squares(a, b)?];
    let w1 = match &slots[1] {
        OperatorSlot::Forward(op) => op.apply(&z_star).scale(-1.0),
        OperatorSlot::Backward(_) => unreachable!("slot 1 is the least-squares gradient"),
    };

    let mut meta = ProblemMeta::from_slots(&slots, d);
    meta.lipschitz[1] = Some(top);
    meta.cocoercivity[1] = Some(top);
    meta.strong = if m >= d {
        Some(StrongSlot {
            mu: bottom,
            slot: 1,
        })
    } else {
        None
    };
    meta.oracle = Some(SolutionOracle {
        z_star,
        w_star: vec![w1],
    });
    meta.f_star = Some(f_star);

    Ok(ProblemInstance {
        slots,
        meta,
        seed,
        description: format!("l1-regularized least squares: d={d}, m={m}, lambda={lambda}"),
    })
}

// ---------------------------------------------------------------------
// Strongly monotone affine inclusions
// ---------------------------------------------------------------------

/// Sum of `n` monotone affine operators `T_i z = A_i z + b_i` whose
/// strong monotonicity is concentrated in the last slot: that slot is a
/// resolvent over a symmetric matrix with smallest eigenvalue exactly
/// `mu`, the remaining slots split between further symmetric resolvents
/// (merely monotone) and non-symmetric forward operators with exactly
/// known operator norms. The solution comes from a direct linear solve.
pub fn make_strongly_monotone_affine(
    d: usize,
    n: usize,
    mu: f64,
    seed: u64,
) -> Result<ProblemInstance, ProblemError> {
    check_dim("make_strongly_monotone_affine", d)?;
    check_count("make_strongly_monotone_affine", n)?;
    check_positive("make_strongly_monotone_affine", "mu", mu)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let strong_slot = n - 1;
    let mut is_forward = vec![false; n];
    for flag in is_forward.iter_mut().take(strong_slot) {
        *flag = rng.random_bool(0.5);
    }
    if n >= 2 && !is_forward.iter().any(|&f| f) {
        is_forward[0] = true;
    }

    let mut mats = Vec::with_capacity(n);
    let mut offs = Vec::with_capacity(n);
    let mut slot_meta = Vec::with_capacity(n);
    for i in 0..n {
        if i == strong_slot {
            let q = random_orthogonal(d, &mut rng);
            let eigs = pinned_spectrum(mu, mu + 1.0, d, false);
            let top = eigs[d - 1];
            mats.push(symmetric_with_spectrum(&q, &eigs));
            slot_meta.push(OperatorMeta {
                lipschitz: Some(top),
                cocoercivity: Some(top),
                strong_monotonicity: Some(mu),
            });
        } else if is_forward[i] {
            let q = random_orthogonal(d, &mut rng);
            let pairs = d / 2;
            let re: Vec<f64> = (0..d.div_ceil(2))
                .map(|_| rng.random_range(0.05..0.8))
                .collect();
            let im: Vec<f64> = (0..pairs).map(|_| rng.random_range(0.0..0.6)).collect();
            let mut top = if d % 2 == 1 { re[re.len() - 1] } else { 0.0 };
            for j in 0..pairs {
                top = top.max(re[j].hypot(im[j]));
            }
            mats.push(normal_from_conjugate_pairs(&q, &re, &im));
            slot_meta.push(OperatorMeta {
                lipschitz: Some(top),
                cocoercivity: None,
                strong_monotonicity: None,
            });
        } else {
            let q = random_orthogonal(d, &mut rng);
            let eigs = pinned_spectrum(0.0, 1.0, d, false);
            let top = eigs[d - 1];
            mats.push(symmetric_with_spectrum(&q, &eigs));
            slot_meta.push(OperatorMeta {
                lipschitz: Some(top),
                cocoercivity: Some(top),
                strong_monotonicity: Some(0.0),
            });
        }
        offs.push(gaussian_vector(d, &mut rng).scale(0.5));
    }

    let (mut z_star, mut duals) = affine_solution(&mats, &offs)?;
    let radius = product_norm(&z_star, &duals, n - 1);
    if radius > 8.0 {
        let c = 8.0 / radius;
        for b in &mut offs {
            *b = b.scale(c);
        }
        z_star = z_star.scale(c);
        for w in &mut duals {
            *w = w.scale(c);
        }
    }

    let mut slots = Vec::with_capacity(n);
    for (i, ((mat, off), meta)) in mats
        .into_iter()
        .zip(offs.into_iter())
        .zip(slot_meta.into_iter())
        .enumerate()
    {
        slots.push(if is_forward[i] {
            OperatorSlot::Forward(Box::new(AffineForward::with_declared(mat, off, meta)))
        } else {
            OperatorSlot::Backward(Box::new(AffineProx::with_declared(mat, off, meta)))
        });
    }

    let mut meta = ProblemMeta::from_slots(&slots, d);
    meta.strong = Some(StrongSlot {
        mu,
        slot: strong_slot,
    });
    meta.oracle = Some(SolutionOracle {
        z_star,
        w_star: duals[..n - 1].to_vec(),
    });

    Ok(ProblemInstance {
        slots,
        meta,
        seed,
        description: format!("strongly monotone affine inclusion: d={d}, n={n}, mu={mu}"),
    })
}

// ---------------------------------------------------------------------
// Cocoercive leading slots with a strongly monotone anchor
// ---------------------------------------------------------------------

/// `n - 1` forward slots that are gradients of convex quadratics (so
/// each is cocoercive with modulus equal to its exactly known top
/// eigenvalue) plus a final resolvent slot that is strongly monotone
/// with modulus exactly `mu`. This is the regime in which the distance
/// to the solution contracts at a fixed linear factor.
pub fn make_cocoercive_strong(
    d: usize,
    n: usize,
    mu: f64,
    seed: u64,
) -> Result<ProblemInstance, ProblemError> {
    check_dim("make_cocoercive_strong", d)?;
    check_count("make_cocoercive_strong", n)?;
    check_positive("make_cocoercive_strong", "mu", mu)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mats = Vec::with_capacity(n);
    let mut offs = Vec::with_capacity(n);
    let mut slot_meta = Vec::with_capacity(n);
    for i in 0..n {
        let q = random_orthogonal(d, &mut rng);
        if i + 1 == n {
            let eigs = pinned_spectrum(mu, mu + 1.0, d, false);
            let top = eigs[d - 1];
            mats.push(symmetric_with_spectrum(&q, &eigs));
            slot_meta.push(OperatorMeta {
                lipschitz: Some(top),
                cocoercivity: Some(top),
                strong_monotonicity: Some(mu),
            });
        } else {
            let top = rng.random_range(0.8..1.6);
            let eigs = pinned_spectrum(0.2, top, d, true);
            mats.push(symmetric_with_spectrum(&q, &eigs));
            slot_meta.push(OperatorMeta {
                lipschitz: Some(top),
                cocoercivity: Some(top),
                strong_monotonicity: Some(if d == 1 { top } else { 0.2 }),
            });
        }
        offs.push(gaussian_vector(d, &mut rng).scale(0.5));
    }

    let (mut z_star, mut duals) = affine_solution(&mats, &offs)?;
    let radius = product_norm(&z_star, &duals, n - 1);
    if radius > 8.0 {
        let c = 8.0 / radius;
        for b in &mut offs {
            *b = b.scale(c);
        }
        z_star = z_star.scale(c);
        for w in &mut duals {
            *w = w.scale(c);
        }
    }

    let mut slots = Vec::with_capacity(n);
    for (i, ((mat, off), meta)) in mats
        .into_iter()
        .zip(offs.into_iter())
        .zip(slot_meta.into_iter())
        .enumerate()
    {
        slots.push(if i + 1 == n {
            OperatorSlot::Backward(Box::new(AffineProx::with_declared(mat, off, meta)))
        } else {
            OperatorSlot::Forward(Box::new(AffineForward::with_declared(mat, off, meta)))
        });
    }

    let f_star = slots
        .iter()
        .map(|slot| slot.function_value(&z_star).expect("symmetric quadratics"))
        .sum();

    let mut meta = ProblemMeta::from_slots(&slots, d);
    meta.strong = Some(StrongSlot { mu, slot: n - 1 });
    meta.oracle = Some(SolutionOracle {
        z_star,
        w_star: duals[..n - 1].to_vec(),
    });
    meta.f_star = Some(f_star);

    Ok(ProblemInstance {
        slots,
        meta,
        seed,
        description: format!("cocoercive slots with a strong anchor: d={d}, n={n}, mu={mu}"),
    })
}

// ---------------------------------------------------------------------
// Two-set feasibility
// ---------------------------------------------------------------------

/// Feasibility for two explicit boxes: both slots are normal-cone
/// resolvents (projections). The boxes must intersect; the midpoint of
/// the intersection is stored as the solution with a zero dual, which
/// lies in the normal cone at any point of the set. Both objective
/// terms are indicators, so no objective-gap data is attached and the
/// single-point rate is marked inapplicable.
pub fn make_feasibility_from_boxes(
    lo1: Vector,
    hi1: Vector,
    lo2: Vector,
    hi2: Vector,
) -> Result<ProblemInstance, ProblemError> {
    let d = lo1.dim();
    if hi1.dim() != d || lo2.dim() != d || hi2.dim() != d {
        return Err(ProblemError::InvalidParameter(
            "feasibility boxes must share one dimension".into(),
        ));
    }
    check_dim("make_feasibility_from_boxes", d)?;
    let mut midpoint = Vec::with_capacity(d);
    for i in 0..d {
        let lo = lo1.as_slice()[i].max(lo2.as_slice()[i]);
        let hi = hi1.as_slice()[i].min(hi2.as_slice()[i]);
        if lo > hi {
            return Err(ProblemError::InvalidParameter(format!(
                "the boxes do not intersect in coordinate {i}: [{lo}, {hi}] is empty"
            )));
        }
        midpoint.push(0.5 * (lo + hi));
    }
    let z_star = Vector::new(midpoint)
        .map_err(|_| ProblemError::InvalidParameter("boxes must be finite".into()))?;

    let slots = vec![
        make_box_indicator(lo1, hi1)?,
        make_box_indicator(lo2, hi2)?,
    ];
    let mut meta = ProblemMeta::from_slots(&slots, d);
    meta.oracle = Some(SolutionOracle {
        z_star,
        w_star: vec![Vector::zeros(d)],
    });
    meta.single_point_rate_applicable = false;

    Ok(ProblemInstance {
        slots,
        meta,
        seed: 0,
        description: format!("two-box feasibility: d={d}"),
    })
}

/// Random overlapping boxes: the first reaches below the origin, the
/// second is shifted so the intersection always has width at least 1/2
/// in every coordinate.
pub fn make_two_set_feasibility(d: usize, seed: u64) -> Result<ProblemInstance, ProblemError> {
    check_dim("make_two_set_feasibility", d)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lo1 = Vec::with_capacity(d);
    let mut hi1 = Vec::with_capacity(d);
    let mut lo2 = Vec::with_capacity(d);
    let mut hi2 = Vec::with_capacity(d);
    for _ in 0..d {
        let a = -1.0 - rng.random::<f64>();
        let b = 0.5 + rng.random::<f64>();
        let overlap = 0.5 + 0.5 * rng.random::<f64>();
        let c = b - overlap;
        let e = c + 1.5 + rng.random::<f64>();
        lo1.push(a);
        hi1.push(b);
        lo2.push(c);
        hi2.push(e);
    }
    let finite = |entries: Vec<f64>| {
        Vector::new(entries).map_err(|_| {
            ProblemError::Construction("box endpoints left the finite range".into())
        })
    };
    let mut instance = make_feasibility_from_boxes(
        finite(lo1)?,
        finite(hi1)?,
        finite(lo2)?,
        finite(hi2)?,
    )?;
    instance.seed = seed;
    instance.description = format!("two-box feasibility: d={d}, seed={seed}");
    Ok(instance)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::probe_slot;
    use crate::rates::RateConstants;
    use crate::solver::{solve, SolverConfig};
    use crate::space::ProductPoint;

    fn v(entries: &[f64]) -> Vector {
        Vector::new(entries.to_vec()).unwrap()
    }

    /// Worst violation of `w_i ∈ T_i z*` over every slot, with the last
    /// dual derived from the stored ones.
    fn membership_residual(instance: &ProblemInstance) -> f64 {
        let oracle = instance.meta.oracle.as_ref().unwrap();
        let n = instance.slots.len();
        let mut last = Vector::zeros(oracle.z_star.dim());
        for w in &oracle.w_star {
            last = last.sub(w);
        }
        let mut worst = 0.0_f64;
        for (i, slot) in instance.slots.iter().enumerate() {
            let w = if i + 1 == n {
                last.clone()
            } else {
                oracle.w_star[i].clone()
            };
            let residual = slot
                .graph_residual(&oracle.z_star, &w)
                .unwrap_or(f64::INFINITY);
            worst = worst.max(residual);
        }
        worst
    }

    fn start_distance(instance: &ProblemInstance) -> f64 {
        let oracle = instance.meta.oracle.as_ref().unwrap();
        product_norm(&oracle.z_star, &oracle.w_star, oracle.w_star.len())
    }

    #[test]
    fn l1_reference_matches_the_scalar_closed_form() {
        let a = Matrix::from_rows(vec![vec![1.0]]).unwrap();
        let b = v(&[1.0]);
        let (z, f) = l1_least_squares_reference(&a, &b, 0.5, 100_000).unwrap();
        assert!((z.as_slice()[0] - 0.5).abs() <= 1e-12, "z = {z:?}");
        assert!((f - 0.375).abs() <= 1e-12, "f = {f}");
    }

    #[test]
    fn l1_reference_returns_zero_above_the_critical_threshold() {
        let a = Matrix::from_rows(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let b = v(&[0.6, -0.3]);
        // lambda >= ||A^T b||_inf, so the origin is optimal.
        let (z, f) = l1_least_squares_reference(&a, &b, 1.0, 100_000).unwrap();
        assert_eq!(z.norm(), 0.0);
        assert_eq!(f, 0.5 * b.norm_sq());
    }

    #[test]
    fn lasso_instance_carries_an_exact_solution() {
        let instance = make_lasso(8, 12, 0.3, 42).unwrap();
        assert!(membership_residual(&instance) <= 1e-10);
        assert!(start_distance(&instance) <= 10.0);

        let meta = &instance.meta;
        assert_eq!(meta.backward, vec![0]);
        assert_eq!(meta.forward, vec![1]);
        let lip = meta.lipschitz[1].unwrap();
        assert!((lip - 1.44).abs() <= 1e-12, "L = {lip}");
        let strong = meta.strong.unwrap();
        assert_eq!(strong.slot, 1);
        assert!((strong.mu - 0.09).abs() <= 1e-12, "mu = {}", strong.mu);

        // The stored optimal value is the objective at the stored point.
        let oracle = meta.oracle.as_ref().unwrap();
        let total: f64 = instance
            .slots
            .iter()
            .map(|slot| slot.function_value(&oracle.z_star).unwrap())
            .sum();
        assert!((total - meta.f_star.unwrap()).abs() <= 1e-12 * total.abs().max(1.0));

        // Declared moduli are safe against an empirical probe.
        let probe = probe_slot(&instance.slots[1], 8, 200, 5);
        assert!(probe.lipschitz_ratio <= lip + 1e-8);
        assert!(probe.cocoercivity_gap >= -1e-8);
        assert!(probe.strong_monotonicity_gap >= -1e-8);
        let probe0 = probe_slot(&instance.slots[0], 8, 200, 6);
        assert!(probe0.monotone_gap >= -1e-8);
    }

    #[test]
    fn lasso_is_a_pure_function_of_its_seed() {
        let one = make_lasso(6, 9, 0.25, 7).unwrap();
        let two = make_lasso(6, 9, 0.25, 7).unwrap();
        let other = make_lasso(6, 9, 0.25, 8).unwrap();
        let (a, b) = (
            one.meta.oracle.as_ref().unwrap(),
            two.meta.oracle.as_ref().unwrap(),
        );
        assert_eq!(a.z_star, b.z_star);
        assert_eq!(a.w_star, b.w_star);
        assert_eq!(one.meta.f_star, two.meta.f_star);
        assert_eq!(one.description, two.description);
        assert_ne!(
            a.z_star,
            other.meta.oracle.as_ref().unwrap().z_star,
            "different seeds should draw different instances"
        );
    }

    #[test]
    fn affine_solution_matches_hand_examples() {
        // (z + 1) + (z - 3) = 0 at z = 1.
        let eye = Matrix::identity(1);
        let (z, duals) = affine_solution(
            &[eye.clone(), eye.clone()],
            &[v(&[1.0]), v(&[-3.0])],
        )
        .unwrap();
        assert_eq!(z.as_slice(), &[1.0]);
        assert_eq!(duals[0].as_slice(), &[2.0]);
        assert_eq!(duals[1].as_slice(), &[-2.0]);

        // z + (2 z + b) = 0 at z = -b / 3.
        let two = Matrix::from_rows(vec![vec![2.0, 0.0], vec![0.0, 2.0]]).unwrap();
        let b = v(&[0.9, -1.5]);
        let (z, _) = affine_solution(
            &[Matrix::identity(2), two],
            &[Vector::zeros(2), b.clone()],
        )
        .unwrap();
        assert!(z.dist(&b.scale(-1.0 / 3.0)) <= 1e-14);
    }

    #[test]
    fn strongly_monotone_instance_solves_its_own_inclusion() {
        let instance = make_strongly_monotone_affine(6, 3, 0.7, 11).unwrap();
        assert!(membership_residual(&instance) <= 1e-12);
        assert!(start_distance(&instance) <= 8.0 + 1e-9);

        let meta = &instance.meta;
        let strong = meta.strong.unwrap();
        assert_eq!(strong.mu, 0.7);
        assert_eq!(strong.slot, 2);
        assert!(!meta.backward.is_empty() && !meta.forward.is_empty());
        for &i in &meta.forward {
            assert!(meta.lipschitz[i].is_some(), "forward slot {i} needs L");
        }
        for (i, slot) in instance.slots.iter().enumerate() {
            let probe = probe_slot(slot, 6, 200, 20 + i as u64);
            if let Some(l) = meta.lipschitz[i] {
                assert!(probe.lipschitz_ratio <= l + 1e-8, "slot {i}");
            }
            assert!(probe.monotone_gap >= -1e-8, "slot {i}");
            assert!(probe.strong_monotonicity_gap >= -1e-8, "slot {i}");
            assert!(probe.cocoercivity_gap >= -1e-8, "slot {i}");
        }

        // The solver actually approaches the stored solution.
        let mut config = SolverConfig::defaults_for(&instance.slots);
        config.max_iters = 400;
        let outcome = solve(&instance.slots, &config).unwrap();
        let oracle = meta.oracle.as_ref().unwrap();
        let final_dist = outcome.final_point.z().dist(&oracle.z_star);
        assert!(
            final_dist <= 0.2 * oracle.z_star.norm().max(1.0),
            "final distance {final_dist}"
        );

        // A single slot degenerates to one strongly monotone resolvent.
        let single = make_strongly_monotone_affine(4, 1, 0.5, 3).unwrap();
        assert!(membership_residual(&single) <= 1e-12);
        assert_eq!(single.meta.backward, vec![0]);
    }

    #[test]
    fn cocoercive_instance_supports_the_contraction_regime() {
        let instance = make_cocoercive_strong(5, 3, 0.9, 17).unwrap();
        assert!(membership_residual(&instance) <= 1e-12);
        assert!(start_distance(&instance) <= 8.0 + 1e-9);

        let meta = &instance.meta;
        assert_eq!(meta.backward, vec![2]);
        assert_eq!(meta.forward, vec![0, 1]);
        for i in 0..meta.n - 1 {
            assert!(meta.cocoercivity[i].is_some(), "leading slot {i}");
            let probe = probe_slot(&instance.slots[i], 5, 100, 30 + i as u64);
            assert!(probe.cocoercivity_gap >= -1e-8, "slot {i}");
        }
        let strong = meta.strong.unwrap();
        assert_eq!((strong.mu, strong.slot), (0.9, 2));

        let config = SolverConfig::defaults_for(&instance.slots);
        let p1 = ProductPoint::new(
            Vector::zeros(5),
            vec![Vector::zeros(5); 2],
            config.gamma,
        )
        .unwrap();
        let constants = RateConstants::compute(meta, &config, Some(&p1)).unwrap();
        let e5 = constants.e5.unwrap();
        assert!(e5 > 0.0 && e5 <= 0.25, "e5 = {e5}");
        assert!(meta.f_star.is_some());
    }

    #[test]
    fn feasibility_instances_expose_the_midpoint_certificate() {
        let boxes = make_feasibility_from_boxes(
            v(&[0.0]),
            v(&[2.0]),
            v(&[1.0]),
            v(&[3.0]),
        )
        .unwrap();
        let oracle = boxes.meta.oracle.as_ref().unwrap();
        assert_eq!(oracle.z_star.as_slice(), &[1.5]);
        assert_eq!(membership_residual(&boxes), 0.0);
        assert!(!boxes.meta.single_point_rate_applicable);
        assert!(boxes.meta.f_star.is_none());

        let empty = make_feasibility_from_boxes(
            v(&[0.0]),
            v(&[1.0]),
            v(&[2.0]),
            v(&[3.0]),
        );
        assert!(matches!(empty, Err(ProblemError::InvalidParameter(_))));

        let random = make_two_set_feasibility(4, 23).unwrap();
        assert_eq!(membership_residual(&random), 0.0);
        assert!(!random.meta.single_point_rate_applicable);
        let again = make_two_set_feasibility(4, 23).unwrap();
        assert_eq!(
            random.meta.oracle.as_ref().unwrap().z_star,
            again.meta.oracle.as_ref().unwrap().z_star
        );
    }

    #[test]
    fn affine_families_are_pure_functions_of_their_seeds() {
        let a = make_strongly_monotone_affine(5, 4, 0.6, 101).unwrap();
        let b = make_strongly_monotone_affine(5, 4, 0.6, 101).unwrap();
        let a_oracle = a.meta.oracle.as_ref().unwrap();
        let b_oracle = b.meta.oracle.as_ref().unwrap();
        assert_eq!(a_oracle.z_star, b_oracle.z_star);
        assert_eq!(a_oracle.w_star, b_oracle.w_star);

        let c = make_cocoercive_strong(4, 2, 1.1, 55).unwrap();
        let d = make_cocoercive_strong(4, 2, 1.1, 55).unwrap();
        assert_eq!(
            c.meta.oracle.as_ref().unwrap().z_star,
            d.meta.oracle.as_ref().unwrap().z_star
        );
        assert_eq!(c.meta.f_star, d.meta.f_star);
    }

    #[test]
    fn generators_reject_bad_parameters() {
        assert!(make_lasso(0, 3, 0.1, 0).is_err());
        assert!(make_lasso(3, 0, 0.1, 0).is_err());
        assert!(make_lasso(3, 3, 0.0, 0).is_err());
        assert!(make_strongly_monotone_affine(0, 2, 0.5, 0).is_err());
        assert!(make_strongly_monotone_affine(2, 0, 0.5, 0).is_err());
        assert!(make_strongly_monotone_affine(2, 2, -1.0, 0).is_err());
        assert!(make_cocoercive_strong(2, 2, 0.0, 0).is_err());
        assert!(make_two_set_feasibility(0, 0).is_err());
        assert!(l1_least_squares_reference(
            &Matrix::identity(2),
            &v(&[1.0, 1.0]),
            0.5,
            0
        )
        .is_err());
    }
}
