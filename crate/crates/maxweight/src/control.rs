//! Steering the growth direction with the weight matrix.
//!
//! A boundary vector `v` for a subset of service cones can be moved onto any
//! direction with the same support: weighting queue `q` by `v_q / theta_q`
//! sends workloads proportional to `theta` to the same argmax tie that `v`
//! sits on. Whether a target direction is *achievable* at a given load is a
//! separate, load-dependent question: the load must decompose as
//! `rho = c theta + sum_{m in subset} alpha_m S_m` with `c > 0` and the
//! mixture genuinely using every subset member. This module answers both
//! questions and classifies loads by which boundary serves them.

use serde::Serialize;
use thiserror::Error;

use crate::eta::EtaSolution;
use crate::geometry::{
    boundary_vector_with_support, is_stabilizable, relevant_boundaries, BoundaryVector,
    GeometryError,
};
use crate::lp::{Lp, Rel};
use crate::model::{
    FairnessTarget, LoadVector, MixtureWeights, ServiceSet, WeightMatrix, SUPPORT_EPS,
};

/// Minimum growth scale `c` in the direction decomposition.
pub const C_MIN: f64 = 1e-9;

/// Minimum mixture weight required on every subset member. A decomposition
/// that needs zero weight on some member belongs to the smaller subset, and
/// subsets below size two offer no boundary to place. The margin must sit
/// well above the simplex solver's feasibility slack (~1e-8 relative) or
/// corner-degenerate loads would slip through.
pub const ALPHA_MIN: f64 = 1e-6;

/// `feasible_directions` enumerates explicitly and refuses beyond this many
/// queues.
pub const MAX_DIRECTION_DIM: usize = 3;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ControlError {
    #[error("boundary vector and target must vanish together; queue {queue} differs")]
    SupportMismatch { queue: usize },
    #[error("direction enumeration supports at most {max} queues, got {q}")]
    DimensionTooLarge { q: usize, max: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FeasibilityVerdict {
    /// A relevant boundary matches the target's support and the load
    /// decomposes across it; the synthesized weights achieve the target.
    Feasible,
    /// Some genuine mixture of service vectors achieves the direction, but
    /// no subset that does carries a usable boundary vector: out of reach
    /// for this scheduler family, though not for schedulers at large.
    InfeasibleNoBoundary,
    /// No mixture of two or more service vectors achieves the direction at
    /// this load at all.
    InfeasibleDirection,
    /// The load is stabilizable; backlog does not grow and no growth
    /// direction applies.
    Stable,
}

/// Outcome of a feasibility check, with the full witness when feasible.
#[derive(Debug, Clone, Serialize)]
pub struct FeasibilityReport {
    pub verdict: FeasibilityVerdict,
    pub subset: Option<Vec<usize>>,
    pub v: Option<BoundaryVector>,
    pub alpha: Option<MixtureWeights>,
    pub eta: Option<Vec<f64>>,
    pub d: Option<WeightMatrix>,
}

impl FeasibilityReport {
    fn bare(verdict: FeasibilityVerdict) -> Self {
        Self {
            verdict,
            subset: None,
            v: None,
            alpha: None,
            eta: None,
            d: None,
        }
    }
}

/// One cell of the overload partition: loads decomposing across `subset`
/// in direction `theta` are served by weights `d`.
#[derive(Debug, Clone, Serialize)]
pub struct PartitionCell {
    pub subset: Vec<usize>,
    pub v: BoundaryVector,
    pub d: WeightMatrix,
    /// The subset's service vectors; the cell is `{c theta + conv(generators)}`
    /// with `c > 0` and strictly interior mixture weights.
    pub generators: Vec<Vec<f64>>,
}

/// The partition of the overload region induced by a fairness target.
#[derive(Debug, Clone, Serialize)]
pub struct OverloadPartition {
    pub theta: FairnessTarget,
    pub service_set: ServiceSet,
    pub cells: Vec<PartitionCell>,
}

/// One achievable-direction cell reported by [`feasible_directions`].
#[derive(Debug, Clone, Serialize)]
pub struct DirectionCell {
    pub subset: Vec<usize>,
    /// Boundary vector of the subset; absent for a singleton service set,
    /// where the scheduler has no choice to make.
    pub v: Option<BoundaryVector>,
    /// Extreme directions, normalized to sum one; the achievable set per
    /// subset is their convex hull.
    pub generators: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FeasibleDirections {
    pub stable: bool,
    pub cells: Vec<DirectionCell>,
}

fn normalize_direction(v: &[f64]) -> Vec<f64> {
    let sum: f64 = v.iter().sum();
    v.iter().map(|x| x / sum).collect()
}

/// Diagonal weights placing the boundary carried by `v` onto `target`:
/// `d_q = v_q / target_q` where `v_q > 0`, one elsewhere, rescaled so the
/// smallest synthesized entry is one. The weights are meaningful up to a
/// positive scalar; the rescaling only fixes a display form.
pub fn synthesize_d(target: &[f64], v: &[f64]) -> Result<WeightMatrix, ControlError> {
    assert_eq!(target.len(), v.len(), "target and boundary dimensions differ");
    for q in 0..target.len() {
        if (v[q] > SUPPORT_EPS) != (target[q] > SUPPORT_EPS) {
            return Err(ControlError::SupportMismatch { queue: q });
        }
    }
    let mut d = vec![1.0; target.len()];
    let mut smallest = f64::INFINITY;
    for q in 0..target.len() {
        if v[q] > SUPPORT_EPS {
            d[q] = v[q] / target[q];
            smallest = smallest.min(d[q]);
        }
    }
    if smallest.is_finite() {
        for q in 0..target.len() {
            if v[q] > SUPPORT_EPS {
                d[q] /= smallest;
            }
        }
    }
    Ok(WeightMatrix::new(d).expect("synthesized weights are positive"))
}

/// Decompose `rho = c theta + sum_{m in subset} alpha_m S_m` with
/// `c >= C_MIN`, `alpha_m >= ALPHA_MIN` on the subset and `sum(alpha) = 1`;
/// queues outside the target's support must be fully covered by service.
/// Returns the full-length mixture and the growth scale.
fn direction_decomposition(
    subset: &[usize],
    theta: &FairnessTarget,
    rho: &LoadVector,
    set: &ServiceSet,
) -> Option<(Vec<f64>, f64)> {
    let q = set.dim();
    let k = subset.len();
    // Variables: shifted weights a'_m = alpha_m - ALPHA_MIN, then c' = c - C_MIN.
    let nv = k + 1;
    let mut lp = Lp::feasibility(nv);
    for queue in 0..q {
        let mut row = vec![0.0; nv];
        for (i, &m) in subset.iter().enumerate() {
            row[i] = set[m][queue];
        }
        let shift: f64 = subset.iter().map(|&m| set[m][queue] * ALPHA_MIN).sum();
        if theta[queue] > SUPPORT_EPS {
            row[k] = theta[queue];
            lp.constraint(&row, Rel::Eq, rho[queue] - shift - C_MIN * theta[queue]);
        } else {
            lp.constraint(&row, Rel::Ge, rho[queue] - shift);
        }
    }
    let mut mass = vec![1.0; nv];
    mass[k] = 0.0;
    lp.constraint(&mass, Rel::Eq, 1.0 - k as f64 * ALPHA_MIN);
    let sol = lp.solve().ok()?;
    let mut alpha = vec![0.0; set.len()];
    for (i, &m) in subset.iter().enumerate() {
        alpha[m] = sol.x[i] + ALPHA_MIN;
    }
    // Squeeze out the solver's pivoting slop so the mass is exactly one.
    let mass: f64 = alpha.iter().sum();
    for a in alpha.iter_mut() {
        *a /= mass;
    }
    let c = sol.x[k] + C_MIN;
    Some((alpha, c))
}

fn all_subsets_of_size_ge2(n: usize) -> Vec<Vec<usize>> {
    let mut subsets: Vec<Vec<usize>> = Vec::new();
    for mask in 0u32..(1u32 << n) {
        if mask.count_ones() >= 2 {
            subsets.push((0..n).filter(|&m| mask & (1 << m) != 0).collect());
        }
    }
    subsets.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    subsets
}

/// Decide whether the target direction is achievable at `rho`, and with
/// which boundary and weights when it is.
pub fn check_feasibility(
    theta: &FairnessTarget,
    rho: &LoadVector,
    set: &ServiceSet,
) -> Result<FeasibilityReport, ControlError> {
    let q = set.dim();
    assert_eq!(theta.dim(), q, "target and service dimensions differ");
    assert_eq!(rho.dim(), q, "load and service dimensions differ");

    if is_stabilizable(rho, set) {
        return Ok(FeasibilityReport::bare(FeasibilityVerdict::Stable));
    }

    let support = theta.support();

    if set.len() == 1 {
        // No scheduling choice exists; the ray is (rho - S)^+ regardless.
        let ray: Vec<f64> = rho
            .as_slice()
            .iter()
            .zip(set[0].as_slice())
            .map(|(r, s)| (r - s).max(0.0))
            .collect();
        let total: f64 = ray.iter().sum();
        let matches = total > 0.0
            && ray
                .iter()
                .zip(theta.as_slice())
                .all(|(r, t)| (r / total - t).abs() <= 1e-9);
        if matches {
            let peak = theta.as_slice().iter().fold(0.0f64, |a, &b| a.max(b));
            let v: Vec<f64> = theta.as_slice().iter().map(|t| t / peak).collect();
            let d = synthesize_d(theta.as_slice(), &v)?;
            return Ok(FeasibilityReport {
                verdict: FeasibilityVerdict::Feasible,
                subset: Some(vec![0]),
                v: Some(BoundaryVector {
                    subset: vec![0],
                    v,
                }),
                alpha: Some(MixtureWeights::new(vec![1.0]).expect("unit mass")),
                eta: Some(ray),
                d: Some(d),
            });
        }
        return Ok(FeasibilityReport::bare(FeasibilityVerdict::InfeasibleDirection));
    }

    for boundary in relevant_boundaries(set)? {
        let Some(matched) = boundary_vector_with_support(&boundary.subset, set, &support) else {
            continue;
        };
        let Some((alpha, c)) = direction_decomposition(&boundary.subset, theta, rho, set) else {
            continue;
        };
        let d = synthesize_d(theta.as_slice(), &matched.v)?;
        let eta: Vec<f64> = theta.as_slice().iter().map(|t| c * t).collect();
        let solution = EtaSolution {
            objective: d.weighted_dot(&eta, &eta),
            eta: eta.clone(),
            alpha: MixtureWeights::new(alpha.clone()).expect("decomposition mixture is valid"),
            kkt_residual: 0.0,
            iterations: 0,
            stable: false,
        };
        debug_assert!(
            crate::eta::verify_fixed_point(&solution, rho, set, &d).ok,
            "feasible witness must be a fixed point"
        );
        return Ok(FeasibilityReport {
            verdict: FeasibilityVerdict::Feasible,
            subset: Some(boundary.subset.clone()),
            v: Some(matched),
            alpha: Some(solution.alpha),
            eta: Some(eta),
            d: Some(d),
        });
    }

    // No boundary serves the target. Distinguish "the direction itself is
    // out of reach" from "reachable, but not by placing a cone boundary".
    for subset in all_subsets_of_size_ge2(set.len()) {
        if direction_decomposition(&subset, theta, rho, set).is_some() {
            return Ok(FeasibilityReport::bare(FeasibilityVerdict::InfeasibleNoBoundary));
        }
    }
    Ok(FeasibilityReport::bare(FeasibilityVerdict::InfeasibleDirection))
}

/// The achievable growth directions at `rho`, described cell by cell.
/// Each relevant boundary contributes the convex hull of the normalized
/// corner rays `(rho - S_m)^+` over its subset.
pub fn feasible_directions(
    rho: &LoadVector,
    set: &ServiceSet,
) -> Result<FeasibleDirections, ControlError> {
    let q = set.dim();
    assert_eq!(rho.dim(), q, "load and service dimensions differ");
    if q > MAX_DIRECTION_DIM {
        return Err(ControlError::DimensionTooLarge {
            q,
            max: MAX_DIRECTION_DIM,
        });
    }
    if is_stabilizable(rho, set) {
        return Ok(FeasibleDirections {
            stable: true,
            cells: Vec::new(),
        });
    }

    let corner_ray = |m: usize| -> Option<Vec<f64>> {
        let ray: Vec<f64> = rho
            .as_slice()
            .iter()
            .zip(set[m].as_slice())
            .map(|(r, s)| (r - s).max(0.0))
            .collect();
        if ray.iter().sum::<f64>() > 0.0 {
            Some(normalize_direction(&ray))
        } else {
            None
        }
    };

    if set.len() == 1 {
        let generators = corner_ray(0).into_iter().collect();
        return Ok(FeasibleDirections {
            stable: false,
            cells: vec![DirectionCell {
                subset: vec![0],
                v: None,
                generators,
            }],
        });
    }

    let mut cells = Vec::new();
    for boundary in relevant_boundaries(set)? {
        let generators: Vec<Vec<f64>> = boundary
            .subset
            .iter()
            .filter_map(|&m| corner_ray(m))
            .collect();
        cells.push(DirectionCell {
            subset: boundary.subset.clone(),
            v: Some(boundary),
            generators,
        });
    }
    Ok(FeasibleDirections {
        stable: false,
        cells,
    })
}

/// The partition of the overload region induced by `theta`: one cell per
/// relevant boundary carrying a vector whose support matches the target's,
/// each with its synthesized weights. Cells may describe empty regions.
pub fn partition_overload(
    theta: &FairnessTarget,
    set: &ServiceSet,
) -> Result<OverloadPartition, ControlError> {
    assert_eq!(theta.dim(), set.dim(), "target and service dimensions differ");
    let support = theta.support();
    let mut cells = Vec::new();
    for boundary in relevant_boundaries(set)? {
        let Some(matched) = boundary_vector_with_support(&boundary.subset, set, &support) else {
            continue;
        };
        let d = synthesize_d(theta.as_slice(), &matched.v)?;
        let generators = boundary
            .subset
            .iter()
            .map(|&m| set[m].as_slice().to_vec())
            .collect();
        cells.push(PartitionCell {
            subset: boundary.subset,
            v: matched,
            d,
            generators,
        });
    }
    Ok(OverloadPartition {
        theta: theta.clone(),
        service_set: set.clone(),
        cells,
    })
}

/// The weights of the unique cell whose decomposition accepts `rho`, if any.
/// Two cells accepting the same load would contradict the partition
/// property, so that case is an assertion failure in debug builds.
pub fn classify_rho(rho: &LoadVector, partition: &OverloadPartition) -> Option<WeightMatrix> {
    assert_eq!(
        rho.dim(),
        partition.service_set.dim(),
        "load and partition dimensions differ"
    );
    let mut matched: Option<&PartitionCell> = None;
    for cell in &partition.cells {
        if direction_decomposition(
            &cell.subset,
            &partition.theta,
            rho,
            &partition.service_set,
        )
        .is_some()
        {
            debug_assert!(
                matched.is_none(),
                "load {:?} classified by two cells",
                rho.as_slice()
            );
            if matched.is_none() {
                matched = Some(cell);
            }
        }
    }
    matched.map(|cell| cell.d.clone())
}
