//! Dense vectors and the weighted product space the solver projects in.
//!
//! A solver state is a point `p = (z, w_1, …, w_{n-1})` with all blocks in
//! `R^d`. The product space carries the weighted inner product
//! `<p, q> = gamma <z_p, z_q> + sum_i <w_i^p, w_i^q>`; the weight `gamma`
//! trades off primal against dual movement and is fixed per run.
//!
//! Every public operation either returns finite values or fails loudly:
//! NaN or infinity anywhere is an error, never a silently propagated value.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SpaceError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("product points carry different weights: gamma {0} vs {1}")]
    GammaMismatch(f64, f64),
    #[error("weight gamma must be positive and finite, got {0}")]
    InvalidGamma(f64),
    #[error("non-finite value produced in {0}")]
    NonFinite(&'static str),
}

/// Dense vector in `R^d`. Entries are always finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Vector(Vec<f64>);

impl Vector {
    /// Wraps raw entries, rejecting NaN and infinity.
    pub fn new(entries: Vec<f64>) -> Result<Self, SpaceError> {
        if entries.iter().any(|x| !x.is_finite()) {
            return Err(SpaceError::NonFinite("Vector::new"));
        }
        Ok(Vector(entries))
    }

    pub fn zeros(dim: usize) -> Self {
        Vector(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Constructs from entries already known to be finite (debug-checked).
    pub(crate) fn from_raw(entries: Vec<f64>) -> Self {
        debug_assert!(entries.iter().all(|x| x.is_finite()));
        Vector(entries)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    pub fn dot(&self, other: &Vector) -> f64 {
        assert_eq!(self.dim(), other.dim(), "dot: dimension mismatch");
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn add(&self, other: &Vector) -> Vector {
        self.axpy(1.0, other)
    }

    pub fn sub(&self, other: &Vector) -> Vector {
        self.axpy(-1.0, other)
    }

    pub fn scale(&self, alpha: f64) -> Vector {
        Vector(self.0.iter().map(|x| alpha * x).collect())
    }

    /// `self + alpha * other`.
    pub fn axpy(&self, alpha: f64, other: &Vector) -> Vector {
        assert_eq!(self.dim(), other.dim(), "axpy: dimension mismatch");
        Vector(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| a + alpha * b)
                .collect(),
        )
    }

    pub fn dist(&self, other: &Vector) -> f64 {
        self.sub(other).norm()
    }
}

/// Point of the product space: primal block `z` plus `n - 1` dual blocks.
///
/// The trailing dual block `w_n` is never stored; it is defined as
/// `-(w_1 + … + w_{n-1})` and materialized by [`ProductPoint::wn`]. For
/// `n = 1` the empty sum makes `w_n = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductPoint {
    z: Vector,
    w: Vec<Vector>,
    gamma: f64,
}

impl ProductPoint {
    pub fn new(z: Vector, w: Vec<Vector>, gamma: f64) -> Result<Self, SpaceError> {
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(SpaceError::InvalidGamma(gamma));
        }
        for wi in &w {
            if wi.dim() != z.dim() {
                return Err(SpaceError::DimensionMismatch(z.dim(), wi.dim()));
            }
        }
        Ok(ProductPoint { z, w, gamma })
    }

    /// Origin of the product space for an `n`-operator problem in `R^d`.
    pub fn origin(dim: usize, n_operators: usize, gamma: f64) -> Result<Self, SpaceError> {
        assert!(n_operators >= 1, "need at least one operator");
        ProductPoint::new(
            Vector::zeros(dim),
            vec![Vector::zeros(dim); n_operators - 1],
            gamma,
        )
    }

    pub fn z(&self) -> &Vector {
        &self.z
    }

    pub fn w(&self) -> &[Vector] {
        &self.w
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Number of operators `n` (one more than the stored dual blocks).
    pub fn n_operators(&self) -> usize {
        self.w.len() + 1
    }

    pub fn dim(&self) -> usize {
        self.z.dim()
    }

    /// The derived trailing dual block `w_n = -(w_1 + … + w_{n-1})`.
    pub fn wn(&self) -> Vector {
        let mut sum = vec![0.0; self.dim()];
        for wi in &self.w {
            for (s, x) in sum.iter_mut().zip(wi.as_slice()) {
                *s -= x;
            }
        }
        Vector::from_raw(sum)
    }

    /// Dual block for operator slot `i` (0-based); the last slot is derived.
    pub fn w_slot(&self, i: usize) -> Vector {
        assert!(i < self.n_operators());
        if i + 1 == self.n_operators() {
            self.wn()
        } else {
            self.w[i].clone()
        }
    }

    /// Squared norm under the weighted product inner product.
    pub fn gamma_norm_sq(&self) -> f64 {
        let mut total = self.gamma * self.z.norm_sq();
        for wi in &self.w {
            total += wi.norm_sq();
        }
        total
    }

    pub fn gamma_norm(&self) -> f64 {
        self.gamma_norm_sq().sqrt()
    }

    /// Weighted inner product with `other`; shapes and weights must agree.
    pub fn gamma_inner(&self, other: &ProductPoint) -> Result<f64, SpaceError> {
        self.check_compatible(other)?;
        let mut total = self.gamma * self.z.dot(&other.z);
        for (a, b) in self.w.iter().zip(&other.w) {
            total += a.dot(b);
        }
        Ok(total)
    }

    /// `self + alpha * other` in the product space.
    pub fn axpy(&self, alpha: f64, other: &ProductPoint) -> Result<ProductPoint, SpaceError> {
        self.check_compatible(other)?;
        if !alpha.is_finite() {
            return Err(SpaceError::NonFinite("ProductPoint::axpy coefficient"));
        }
        let point = ProductPoint {
            z: self.z.axpy(alpha, &other.z),
            w: self
                .w
                .iter()
                .zip(&other.w)
                .map(|(a, b)| a.axpy(alpha, b))
                .collect(),
            gamma: self.gamma,
        };
        if !point.is_finite() {
            return Err(SpaceError::NonFinite("ProductPoint::axpy"));
        }
        Ok(point)
    }

    pub fn sub(&self, other: &ProductPoint) -> Result<ProductPoint, SpaceError> {
        self.axpy(-1.0, other)
    }

    /// Squared weighted distance to `other`.
    pub fn gamma_dist_sq(&self, other: &ProductPoint) -> Result<f64, SpaceError> {
        Ok(self.sub(other)?.gamma_norm_sq())
    }

    pub fn is_finite(&self) -> bool {
        self.z.is_finite() && self.w.iter().all(Vector::is_finite)
    }

    fn check_compatible(&self, other: &ProductPoint) -> Result<(), SpaceError> {
        if self.dim() != other.dim() {
            return Err(SpaceError::DimensionMismatch(self.dim(), other.dim()));
        }
        if self.w.len() != other.w.len() {
            return Err(SpaceError::DimensionMismatch(self.w.len(), other.w.len()));
        }
        if self.gamma != other.gamma {
            return Err(SpaceError::GammaMismatch(self.gamma, other.gamma));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(entries: &[f64]) -> Vector {
        Vector::new(entries.to_vec()).unwrap()
    }

    #[test]
    fn gamma_norm_sq_weights_primal_block() {
        let p = ProductPoint::new(v(&[3.0, 4.0]), vec![v(&[1.0, 2.0])], 2.0).unwrap();
        assert_eq!(p.gamma_norm_sq(), 2.0 * 25.0 + 5.0);
    }

    #[test]
    fn gamma_inner_matches_blockwise_sum() {
        let p = ProductPoint::new(v(&[1.0, 0.0]), vec![v(&[2.0, -1.0])], 0.5).unwrap();
        let q = ProductPoint::new(v(&[3.0, 5.0]), vec![v(&[1.0, 1.0])], 0.5).unwrap();
        let got = p.gamma_inner(&q).unwrap();
        assert!((got - (0.5 * 3.0 + (2.0 - 1.0))).abs() < 1e-15);
    }

    #[test]
    fn wn_is_negated_sum_and_empty_sum_is_zero() {
        let p = ProductPoint::new(v(&[0.0]), vec![v(&[1.0]), v(&[2.0])], 1.0).unwrap();
        assert_eq!(p.wn(), v(&[-3.0]));
        let single = ProductPoint::new(v(&[7.0]), vec![], 1.0).unwrap();
        assert_eq!(single.wn(), v(&[0.0]));
        assert_eq!(single.w_slot(0), v(&[0.0]));
    }

    #[test]
    fn axpy_combines_blocks() {
        let p = ProductPoint::new(v(&[1.0]), vec![v(&[2.0])], 1.0).unwrap();
        let q = ProductPoint::new(v(&[10.0]), vec![v(&[-4.0])], 1.0).unwrap();
        let r = p.axpy(0.5, &q).unwrap();
        assert_eq!(r.z(), &v(&[6.0]));
        assert_eq!(&r.w()[0], &v(&[0.0]));
    }

    #[test]
    fn rejects_non_finite_entries() {
        assert_eq!(
            Vector::new(vec![1.0, f64::NAN]),
            Err(SpaceError::NonFinite("Vector::new"))
        );
        let p = ProductPoint::new(v(&[1.0]), vec![], 1.0).unwrap();
        let q = ProductPoint::new(v(&[1.0]), vec![], 1.0).unwrap();
        assert!(matches!(
            p.axpy(f64::INFINITY, &q),
            Err(SpaceError::NonFinite(_))
        ));
    }

    #[test]
    fn rejects_shape_gamma_mismatch_and_bad_gamma() {
        let p = ProductPoint::new(v(&[1.0]), vec![v(&[0.0])], 1.0).unwrap();
        let shorter = ProductPoint::new(v(&[1.0]), vec![], 1.0).unwrap();
        assert!(matches!(
            p.gamma_inner(&shorter),
            Err(SpaceError::DimensionMismatch(1, 0))
        ));
        let other_gamma = ProductPoint::new(v(&[1.0]), vec![v(&[0.0])], 2.0).unwrap();
        assert!(matches!(
            p.gamma_inner(&other_gamma),
            Err(SpaceError::GammaMismatch(..))
        ));
        assert!(matches!(
            ProductPoint::new(v(&[1.0]), vec![], -1.0),
            Err(SpaceError::InvalidGamma(_))
        ));
        assert!(matches!(
            ProductPoint::new(v(&[1.0]), vec![v(&[0.0, 1.0])], 1.0),
            Err(SpaceError::DimensionMismatch(1, 2))
        ));
    }

    fn arb_vector(dim: usize) -> impl Strategy<Value = Vector> + Clone {
        proptest::collection::vec(-100.0f64..100.0, dim).prop_map(|e| Vector::new(e).unwrap())
    }

    fn arb_pair() -> impl Strategy<Value = (ProductPoint, ProductPoint)> {
        (1usize..6, 0usize..4, 0.1f64..10.0).prop_flat_map(|(dim, duals, gamma)| {
            let point = (
                arb_vector(dim),
                proptest::collection::vec(arb_vector(dim), duals),
            )
                .prop_map(move |(z, w)| ProductPoint::new(z, w, gamma).unwrap());
            (point.clone(), point)
        })
    }

    proptest! {
        #[test]
        fn cauchy_schwarz_holds((p, q) in arb_pair()) {
            let inner = p.gamma_inner(&q).unwrap();
            let bound = p.gamma_norm() * q.gamma_norm();
            prop_assert!(inner.abs() <= bound + 1e-9 * (1.0 + bound));
        }

        #[test]
        fn norm_expands_by_cosine_rule((p, q) in arb_pair()) {
            let sum = p.axpy(1.0, &q).unwrap();
            let expanded = p.gamma_norm_sq() + 2.0 * p.gamma_inner(&q).unwrap() + q.gamma_norm_sq();
            let scale = 1.0 + p.gamma_norm_sq() + q.gamma_norm_sq();
            prop_assert!((sum.gamma_norm_sq() - expanded).abs() <= 1e-9 * scale);
        }

        #[test]
        fn mean_square_bounds_square_of_sum(
            vs in proptest::collection::vec(arb_vector(4), 1..6)
        ) {
            let mut sum = Vector::zeros(4);
            let mut sq = 0.0;
            for v in &vs {
                sum = sum.add(v);
                sq += v.norm_sq();
            }
            let n = vs.len() as f64;
            prop_assert!(sum.norm_sq() <= n * sq + 1e-9 * (1.0 + n * sq));
        }

        #[test]
        fn axpy_matches_coordinatewise((p, q) in arb_pair(), alpha in -10.0f64..10.0) {
            let r = p.axpy(alpha, &q).unwrap();
            for (rz, (pz, qz)) in r.z().as_slice().iter()
                .zip(p.z().as_slice().iter().zip(q.z().as_slice())) {
                prop_assert!((rz - (pz + alpha * qz)).abs() < 1e-12 * (1.0 + rz.abs()));
            }
        }
    }
}
