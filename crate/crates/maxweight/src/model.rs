//! Validated domain types shared by every other module.
//!
//! Each type checks its own invariants at construction time, so the rest of
//! the crate can assume dimensions agree, loads are strictly positive, weight
//! entries are strictly positive, and service vectors are non-negative with
//! at least one working entry. All values are immutable after construction
//! and safe to share across threads.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Entries closer to zero than this count as zero when computing the support
/// of a fairness target.
pub const SUPPORT_EPS: f64 = 1e-12;

/// Slack allowed on the mixture mass constraint `sum(alpha) <= 1`.
pub const MASS_TOL: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("{what}[{index}] = {value} is not finite")]
    NonFinite {
        what: &'static str,
        index: usize,
        value: f64,
    },
    #[error("{what}[{index}] = {value} must be {requirement}")]
    BadEntry {
        what: &'static str,
        index: usize,
        value: f64,
        requirement: &'static str,
    },
    #[error("service vector {index} is all zero")]
    ZeroServiceVector { index: usize },
    #[error("service set is empty")]
    EmptyServiceSet,
    #[error("service vectors {first} and {second} are duplicates")]
    DuplicateServiceVector { first: usize, second: usize },
    #[error("fairness target sums to {sum}, cannot normalize")]
    UnnormalizableTarget { sum: f64 },
    #[error("mixture mass {sum} exceeds 1")]
    ExcessMixtureMass { sum: f64 },
}

fn check_finite(what: &'static str, values: &[f64]) -> Result<(), ModelError> {
    for (index, &value) in values.iter().enumerate() {
        if !value.is_finite() {
            return Err(ModelError::NonFinite { what, index, value });
        }
    }
    Ok(())
}

/// One service configuration: entry `q` is the number of jobs removable from
/// queue `q` in a single slot when this configuration runs.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(try_from = "Vec<f64>")]
pub struct ServiceVector {
    s: Vec<f64>,
}

impl ServiceVector {
    /// Entries must be finite, non-negative, and not all zero.
    pub fn new(s: Vec<f64>) -> Result<Self, ModelError> {
        check_finite("service", &s)?;
        for (index, &value) in s.iter().enumerate() {
            if value < 0.0 {
                return Err(ModelError::BadEntry {
                    what: "service",
                    index,
                    value,
                    requirement: "non-negative",
                });
            }
        }
        if s.iter().all(|&v| v == 0.0) {
            return Err(ModelError::ZeroServiceVector { index: 0 });
        }
        Ok(Self { s })
    }

    pub fn dim(&self) -> usize {
        self.s.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.s
    }
}

impl TryFrom<Vec<f64>> for ServiceVector {
    type Error = ModelError;
    fn try_from(s: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(s)
    }
}

impl Serialize for ServiceVector {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.s.serialize(serializer)
    }
}

impl std::ops::Index<usize> for ServiceVector {
    type Output = f64;
    fn index(&self, q: usize) -> &f64 {
        &self.s[q]
    }
}

/// The ordered set of service vectors available to the scheduler.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(try_from = "Vec<ServiceVector>")]
pub struct ServiceSet {
    vectors: Vec<ServiceVector>,
}

impl ServiceSet {
    /// At least one vector, all of equal dimension, no exact duplicates.
    pub fn new(vectors: Vec<ServiceVector>) -> Result<Self, ModelError> {
        if vectors.is_empty() {
            return Err(ModelError::EmptyServiceSet);
        }
        let q = vectors[0].dim();
        for v in &vectors {
            if v.dim() != q {
                return Err(ModelError::DimensionMismatch {
                    expected: q,
                    got: v.dim(),
                });
            }
        }
        for i in 0..vectors.len() {
            for j in (i + 1)..vectors.len() {
                if vectors[i] == vectors[j] {
                    return Err(ModelError::DuplicateServiceVector {
                        first: i,
                        second: j,
                    });
                }
            }
        }
        Ok(Self { vectors })
    }

    /// Convenience constructor from plain rows.
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self, ModelError> {
        let vectors = rows
            .iter()
            .map(|r| ServiceVector::new(r.to_vec()))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(vectors)
    }

    /// Number of queues.
    pub fn dim(&self) -> usize {
        self.vectors[0].dim()
    }

    /// Number of service vectors.
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn vectors(&self) -> &[ServiceVector] {
        &self.vectors
    }

    pub fn iter(&self) -> std::slice::Iter<'_, ServiceVector> {
        self.vectors.iter()
    }

    /// Largest single-slot service any vector offers queue `q`.
    pub fn max_service(&self, q: usize) -> f64 {
        self.vectors.iter().map(|s| s[q]).fold(0.0, f64::max)
    }
}

impl TryFrom<Vec<ServiceVector>> for ServiceSet {
    type Error = ModelError;
    fn try_from(vectors: Vec<ServiceVector>) -> Result<Self, Self::Error> {
        Self::new(vectors)
    }
}

impl Serialize for ServiceSet {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.vectors.serialize(serializer)
    }
}

impl std::ops::Index<usize> for ServiceSet {
    type Output = ServiceVector;
    fn index(&self, m: usize) -> &ServiceVector {
        &self.vectors[m]
    }
}

/// Long-run arrival rate per queue; every entry strictly positive and finite.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(try_from = "Vec<f64>")]
pub struct LoadVector {
    rho: Vec<f64>,
}

impl LoadVector {
    pub fn new(rho: Vec<f64>) -> Result<Self, ModelError> {
        check_finite("rho", &rho)?;
        for (index, &value) in rho.iter().enumerate() {
            if value <= 0.0 {
                return Err(ModelError::BadEntry {
                    what: "rho",
                    index,
                    value,
                    requirement: "strictly positive",
                });
            }
        }
        Ok(Self { rho })
    }

    pub fn dim(&self) -> usize {
        self.rho.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.rho
    }
}

impl TryFrom<Vec<f64>> for LoadVector {
    type Error = ModelError;
    fn try_from(rho: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(rho)
    }
}

impl Serialize for LoadVector {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.rho.serialize(serializer)
    }
}

impl std::ops::Index<usize> for LoadVector {
    type Output = f64;
    fn index(&self, q: usize) -> &f64 {
        &self.rho[q]
    }
}

/// Diagonal of the scheduler's weight matrix `D`; strictly positive.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(try_from = "Vec<f64>")]
pub struct WeightMatrix {
    d: Vec<f64>,
}

impl WeightMatrix {
    pub fn new(d: Vec<f64>) -> Result<Self, ModelError> {
        check_finite("d", &d)?;
        for (index, &value) in d.iter().enumerate() {
            if value <= 0.0 {
                return Err(ModelError::BadEntry {
                    what: "d",
                    index,
                    value,
                    requirement: "strictly positive",
                });
            }
        }
        Ok(Self { d })
    }

    /// The identity weighting in `q` dimensions.
    pub fn identity(q: usize) -> Self {
        Self { d: vec![1.0; q] }
    }

    pub fn dim(&self) -> usize {
        self.d.len()
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.d
    }

    /// `<a, D b>` for the diagonal `D`.
    pub fn weighted_dot(&self, a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), self.d.len());
        debug_assert_eq!(b.len(), self.d.len());
        let mut acc = 0.0;
        for q in 0..self.d.len() {
            acc += a[q] * self.d[q] * b[q];
        }
        acc
    }
}

impl TryFrom<Vec<f64>> for WeightMatrix {
    type Error = ModelError;
    fn try_from(d: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(d)
    }
}

impl Serialize for WeightMatrix {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.d.serialize(serializer)
    }
}

impl std::ops::Index<usize> for WeightMatrix {
    type Output = f64;
    fn index(&self, q: usize) -> &f64 {
        &self.d[q]
    }
}

/// Requested backlog proportions. Entries are non-negative and are
/// renormalized to sum to one at construction.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(try_from = "Vec<f64>")]
pub struct FairnessTarget {
    theta: Vec<f64>,
}

impl FairnessTarget {
    pub fn new(theta: Vec<f64>) -> Result<Self, ModelError> {
        check_finite("theta", &theta)?;
        for (index, &value) in theta.iter().enumerate() {
            if value < 0.0 {
                return Err(ModelError::BadEntry {
                    what: "theta",
                    index,
                    value,
                    requirement: "non-negative",
                });
            }
        }
        let sum: f64 = theta.iter().sum();
        if sum <= 0.0 {
            return Err(ModelError::UnnormalizableTarget { sum });
        }
        let theta = theta.iter().map(|v| v / sum).collect::<Vec<_>>();
        debug_assert!((theta.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        Ok(Self { theta })
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.theta
    }

    /// Queues with a strictly positive share.
    pub fn support(&self) -> Vec<usize> {
        (0..self.theta.len())
            .filter(|&q| self.theta[q] > SUPPORT_EPS)
            .collect()
    }
}

impl TryFrom<Vec<f64>> for FairnessTarget {
    type Error = ModelError;
    fn try_from(theta: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(theta)
    }
}

impl Serialize for FairnessTarget {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.theta.serialize(serializer)
    }
}

impl std::ops::Index<usize> for FairnessTarget {
    type Output = f64;
    fn index(&self, q: usize) -> &f64 {
        &self.theta[q]
    }
}

/// Queue backlog at a given slot.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WorkloadVector {
    pub(crate) x: Vec<f64>,
    pub(crate) t: u64,
}

impl WorkloadVector {
    pub fn new(x: Vec<f64>, t: u64) -> Result<Self, ModelError> {
        check_finite("workload", &x)?;
        for (index, &value) in x.iter().enumerate() {
            if value < 0.0 {
                return Err(ModelError::BadEntry {
                    what: "workload",
                    index,
                    value,
                    requirement: "non-negative",
                });
            }
        }
        Ok(Self { x, t })
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    pub fn slot(&self) -> u64 {
        self.t
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.x
    }

    /// Total backlog across queues.
    pub fn total(&self) -> f64 {
        self.x.iter().sum()
    }
}

impl std::ops::Index<usize> for WorkloadVector {
    type Output = f64;
    fn index(&self, q: usize) -> &f64 {
        &self.x[q]
    }
}

/// Convex-combination weights over the service set. The solver side only
/// requires `sum(alpha) <= 1`; fixed points additionally pin the sum to one.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixtureWeights {
    alpha: Vec<f64>,
}

impl MixtureWeights {
    pub fn new(alpha: Vec<f64>) -> Result<Self, ModelError> {
        check_finite("alpha", &alpha)?;
        for (index, &value) in alpha.iter().enumerate() {
            if value < -SUPPORT_EPS {
                return Err(ModelError::BadEntry {
                    what: "alpha",
                    index,
                    value,
                    requirement: "non-negative",
                });
            }
        }
        let sum: f64 = alpha.iter().sum();
        if sum > 1.0 + MASS_TOL {
            return Err(ModelError::ExcessMixtureMass { sum });
        }
        Ok(Self { alpha })
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.alpha
    }

    pub fn sum(&self) -> f64 {
        self.alpha.iter().sum()
    }
}

impl std::ops::Index<usize> for MixtureWeights {
    type Output = f64;
    fn index(&self, m: usize) -> &f64 {
        &self.alpha[m]
    }
}

/// A fully validated system: service set, load, and scheduler weights with
/// one consistent dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    pub service_set: ServiceSet,
    pub rho: LoadVector,
    pub d: WeightMatrix,
}

impl SystemSpec {
    pub fn q(&self) -> usize {
        self.rho.dim()
    }

    pub fn n(&self) -> usize {
        self.service_set.len()
    }
}

/// Bundle individually valid pieces into a [`SystemSpec`], checking that all
/// dimensions agree.
pub fn validate_system(
    service_set: ServiceSet,
    rho: LoadVector,
    d: WeightMatrix,
) -> Result<SystemSpec, ModelError> {
    let q = service_set.dim();
    if rho.dim() != q {
        return Err(ModelError::DimensionMismatch {
            expected: q,
            got: rho.dim(),
        });
    }
    if d.dim() != q {
        return Err(ModelError::DimensionMismatch {
            expected: q,
            got: d.dim(),
        });
    }
    Ok(SystemSpec {
        service_set,
        rho,
        d,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(rows: &[&[f64]]) -> ServiceSet {
        ServiceSet::from_rows(rows).unwrap()
    }

    #[test]
    fn accepts_two_queue_example() {
        let spec = validate_system(
            set(&[&[2.0, 1.0], &[1.0, 1.5], &[1.0, 1.0]]),
            LoadVector::new(vec![1.5, 1.25]).unwrap(),
            WeightMatrix::new(vec![1.0, 1.0]).unwrap(),
        )
        .unwrap();
        assert_eq!(spec.q(), 2);
        assert_eq!(spec.n(), 3);
    }

    #[test]
    fn accepts_weighted_spec() {
        let spec = validate_system(
            set(&[&[4.0, 0.0], &[3.0, 1.0]]),
            LoadVector::new(vec![4.0, 1.0]).unwrap(),
            WeightMatrix::new(vec![1.0, 2.0]).unwrap(),
        )
        .unwrap();
        assert_eq!(spec.n(), 2);
    }

    #[test]
    fn rejects_dimension_mismatch() {
        let err = validate_system(
            set(&[&[1.0, 0.0, 1.0]]),
            LoadVector::new(vec![1.0, 1.0]).unwrap(),
            WeightMatrix::new(vec![1.0, 1.0, 1.0]).unwrap(),
        )
        .unwrap_err();
        assert_eq!(
            err,
            ModelError::DimensionMismatch {
                expected: 3,
                got: 2
            }
        );
    }

    #[test]
    fn rejects_bad_entries() {
        assert!(ServiceVector::new(vec![1.0, -0.5]).is_err());
        assert!(ServiceVector::new(vec![0.0, 0.0]).is_err());
        assert!(ServiceVector::new(vec![f64::NAN, 1.0]).is_err());
        assert!(LoadVector::new(vec![1.0, 0.0]).is_err());
        assert!(LoadVector::new(vec![1.0, f64::INFINITY]).is_err());
        assert!(WeightMatrix::new(vec![0.0]).is_err());
        assert!(WorkloadVector::new(vec![-1.0], 0).is_err());
    }

    #[test]
    fn rejects_duplicate_service_vectors() {
        let err = ServiceSet::from_rows(&[&[1.0, 1.0], &[1.0, 1.0]]).unwrap_err();
        assert_eq!(
            err,
            ModelError::DuplicateServiceVector {
                first: 0,
                second: 1
            }
        );
    }

    #[test]
    fn fairness_target_normalizes() {
        let theta = FairnessTarget::new(vec![2.0, 1.0]).unwrap();
        assert_eq!(theta.as_slice(), &[2.0 / 3.0, 1.0 / 3.0]);
        assert_eq!(theta.support(), vec![0, 1]);
        let theta = FairnessTarget::new(vec![1.0, 0.0]).unwrap();
        assert_eq!(theta.support(), vec![0]);
        assert!(FairnessTarget::new(vec![0.0, 0.0]).is_err());
        assert!(FairnessTarget::new(vec![-0.1, 1.1]).is_err());
    }

    #[test]
    fn mixture_mass_checked() {
        assert!(MixtureWeights::new(vec![0.5, 0.5]).is_ok());
        assert!(MixtureWeights::new(vec![0.2, 0.1]).is_ok());
        assert!(MixtureWeights::new(vec![0.8, 0.3]).is_err());
        assert!(MixtureWeights::new(vec![-0.1, 0.5]).is_err());
    }

    #[test]
    fn spec_serialization_round_trips() {
        let spec = validate_system(
            set(&[&[4.0, 0.0], &[3.0, 1.0]]),
            LoadVector::new(vec![4.0, 1.0]).unwrap(),
            WeightMatrix::new(vec![1.0, 2.0]).unwrap(),
        )
        .unwrap();
        let text = serde_json::to_string(&spec).unwrap();
        let back: SystemSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(spec, back);
    }

    #[test]
    fn deserialization_validates() {
        let bad = r#"{"service_set":[[1.0,-1.0]],"rho":[1.0,1.0],"d":[1.0,1.0]}"#;
        assert!(serde_json::from_str::<SystemSpec>(bad).is_err());
        let bad = r#"{"service_set":[[1.0,1.0]],"rho":[0.0,1.0],"d":[1.0,1.0]}"#;
        assert!(serde_json::from_str::<SystemSpec>(bad).is_err());
    }
}
