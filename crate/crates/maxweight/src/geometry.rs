//! Polytope and cone computations for the service geometry.
//!
//! Everything here reduces to small linear programs over the service set:
//! membership of a load in the stability region, detection of service vectors
//! that never matter, the argmax cone a workload falls in, and the boundary
//! vectors on which two or more service cones meet. A subset of service
//! vectors has a *relevant boundary* when some non-negative `v` scores every
//! subset member equally and every outside vector strictly lower; those
//! boundaries are the directions the scheduler can pin with a diagonal
//! reweighting.

use serde::Serialize;
use thiserror::Error;

use crate::lp::{Lp, Rel};
use crate::model::{LoadVector, ServiceSet, WeightMatrix, WorkloadVector};

/// Relative tolerance for score equality comparisons.
pub const TOL_EQ: f64 = 1e-9;

/// Subset enumeration refuses beyond this many service vectors.
pub const MAX_ENUMERATION: usize = 16;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GeometryError {
    #[error("subset enumeration over {n} service vectors exceeds the {max}-vector limit")]
    TooManyVectors { n: usize, max: usize },
}

/// A vector on which the cones of `subset` meet: scores `<v, S_i>` are equal
/// for `i` in `subset` and strictly larger than `<v, S_m>` for every `m`
/// outside. Normalized so the largest component is one.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundaryVector {
    pub subset: Vec<usize>,
    pub v: Vec<f64>,
}

/// The set of service-vector indices attaining the maximum weighted score at
/// a given workload.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConeAssignment {
    pub maximizers: Vec<usize>,
}

/// Scores `<S_m, D x>` for every service vector.
pub(crate) fn service_scores(set: &ServiceSet, d: &WeightMatrix, x: &[f64]) -> Vec<f64> {
    set.iter()
        .map(|s| d.weighted_dot(s.as_slice(), x))
        .collect()
}

/// Whether some convex combination of service vectors dominates `rho`
/// componentwise, i.e. the load is inside the stability region.
pub fn is_stabilizable(rho: &LoadVector, set: &ServiceSet) -> bool {
    let q = set.dim();
    assert_eq!(rho.dim(), q, "load and service dimensions differ");
    let n = set.len();
    let mut lp = Lp::feasibility(n);
    let ones = vec![1.0; n];
    lp.constraint(&ones, Rel::Eq, 1.0);
    for queue in 0..q {
        let row: Vec<f64> = set.iter().map(|s| s[queue]).collect();
        lp.constraint(&row, Rel::Ge, rho[queue]);
    }
    lp.solve().is_ok()
}

/// Signed slack of the best convex combination against `rho`: the largest
/// `t` with `sum_m alpha_m S_m >= rho + t` componentwise. Positive means the
/// load sits strictly inside the stability region, negative strictly outside.
pub fn stability_margin(rho: &LoadVector, set: &ServiceSet) -> f64 {
    let q = set.dim();
    assert_eq!(rho.dim(), q, "load and service dimensions differ");
    let n = set.len();
    // Variables: alpha_0..alpha_{n-1}, t_plus, t_minus with t = t+ - t-.
    let nv = n + 2;
    let mut objective = vec![0.0; nv];
    objective[n] = 1.0;
    objective[n + 1] = -1.0;
    let mut lp = Lp::maximize(&objective);
    let mut mass = vec![0.0; nv];
    mass[..n].copy_from_slice(&vec![1.0; n]);
    lp.constraint(&mass, Rel::Eq, 1.0);
    for queue in 0..q {
        let mut row = vec![0.0; nv];
        for (m, s) in set.iter().enumerate() {
            row[m] = s[queue];
        }
        row[n] = -1.0;
        row[n + 1] = 1.0;
        lp.constraint(&row, Rel::Ge, rho[queue]);
    }
    // Cap |t| so the program stays bounded; loads and services are finite.
    let cap = 1.0
        + rho.as_slice().iter().fold(0.0f64, |a, &v| a.max(v))
        + (0..q).map(|queue| set.max_service(queue)).fold(0.0, f64::max);
    let mut bound = vec![0.0; nv];
    bound[n] = 1.0;
    lp.constraint(&bound, Rel::Le, cap);
    let mut bound = vec![0.0; nv];
    bound[n + 1] = 1.0;
    lp.constraint(&bound, Rel::Le, cap);
    let sol = lp.solve().expect("margin program is always feasible");
    sol.objective
}

/// Indices of service vectors dominated componentwise by a convex combination
/// of the remaining ones; removing them leaves the stability region intact.
pub fn non_essential(set: &ServiceSet) -> Vec<usize> {
    let q = set.dim();
    let n = set.len();
    let mut dominated = Vec::new();
    if n < 2 {
        return dominated;
    }
    for j in 0..n {
        let others: Vec<usize> = (0..n).filter(|&m| m != j).collect();
        let mut lp = Lp::feasibility(others.len());
        lp.constraint(&vec![1.0; others.len()], Rel::Eq, 1.0);
        for queue in 0..q {
            let row: Vec<f64> = others.iter().map(|&m| set[m][queue]).collect();
            lp.constraint(&row, Rel::Ge, set[j][queue]);
        }
        if lp.solve().is_ok() {
            dominated.push(j);
        }
    }
    dominated
}

/// All service-vector indices attaining the maximum of `<S_m, D x>` at `x`,
/// within a relative tolerance. At `x = 0` every index ties.
pub fn cone_of(x: &WorkloadVector, d: &WeightMatrix, set: &ServiceSet) -> ConeAssignment {
    assert_eq!(x.dim(), set.dim(), "workload and service dimensions differ");
    assert_eq!(d.dim(), set.dim(), "weight and service dimensions differ");
    let scores = service_scores(set, d, x.as_slice());
    let best = scores.iter().fold(f64::NEG_INFINITY, |a, &v| a.max(v));
    let scale = scores.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let maximizers = (0..set.len())
        .filter(|&m| scores[m] >= best - TOL_EQ * scale)
        .collect();
    ConeAssignment { maximizers }
}

/// Internal boundary-vector search.
///
/// Finds `v >= 0` (entries in `[0, 1]` up to normalization) with equal scores
/// on `subset` and scores at least a positive margin above every outside
/// vector. Three lexicographic passes keep the representative deterministic:
/// maximize the dominance margin, then the smallest allowed component at half
/// that margin, then total mass. The half-margin relaxation is what lets the
/// representative sit strictly inside the boundary face when the face has
/// interior points; insisting on the full margin can pin components to zero.
fn solve_boundary(
    set: &ServiceSet,
    subset: &[usize],
    allowed: &[bool],
    require_positive: bool,
) -> Option<Vec<f64>> {
    let q = set.dim();
    let n = set.len();
    debug_assert!(subset.len() >= 2);
    debug_assert!(subset.windows(2).all(|w| w[0] < w[1]));
    let lead = subset[0];
    let outside: Vec<usize> = (0..n).filter(|m| !subset.contains(m)).collect();
    let scale_s = set
        .iter()
        .map(|s| s.as_slice().iter().sum::<f64>())
        .fold(1.0, f64::max);
    let tol = TOL_EQ * scale_s;

    // Variable layout: v_0..v_{q-1}, then one extra (margin or min level).
    let nv = q + 1;
    let extra = q;
    let base_rows = |lp: &mut Lp| {
        for queue in 0..q {
            let mut row = vec![0.0; nv];
            row[queue] = 1.0;
            if allowed[queue] {
                lp.constraint(&row, Rel::Le, 1.0);
            } else {
                lp.constraint(&row, Rel::Eq, 0.0);
            }
        }
        for &i in &subset[1..] {
            let mut row = vec![0.0; nv];
            for queue in 0..q {
                row[queue] = set[lead][queue] - set[i][queue];
            }
            lp.constraint(&row, Rel::Eq, 0.0);
        }
    };

    // Pass 1: maximize the dominance margin over outside vectors.
    let margin = if outside.is_empty() {
        None
    } else {
        let mut objective = vec![0.0; nv];
        objective[extra] = 1.0;
        let mut lp = Lp::maximize(&objective);
        base_rows(&mut lp);
        for &m in &outside {
            let mut row = vec![0.0; nv];
            for queue in 0..q {
                row[queue] = set[lead][queue] - set[m][queue];
            }
            row[extra] = -1.0;
            lp.constraint(&row, Rel::Ge, 0.0);
        }
        let sol = lp.solve().ok()?;
        if sol.objective <= tol {
            return None;
        }
        Some(sol.objective / 2.0)
    };

    let dominance_rows = |lp: &mut Lp| {
        if let Some(floor) = margin {
            for &m in &outside {
                let mut row = vec![0.0; nv];
                for queue in 0..q {
                    row[queue] = set[lead][queue] - set[m][queue];
                }
                lp.constraint(&row, Rel::Ge, floor);
            }
        }
    };

    // Pass 2: maximize the smallest allowed component.
    let mut objective = vec![0.0; nv];
    objective[extra] = 1.0;
    let mut lp = Lp::maximize(&objective);
    base_rows(&mut lp);
    dominance_rows(&mut lp);
    for queue in 0..q {
        if allowed[queue] {
            let mut row = vec![0.0; nv];
            row[queue] = 1.0;
            row[extra] = -1.0;
            lp.constraint(&row, Rel::Ge, 0.0);
        }
    }
    let level = lp.solve().ok()?.objective;
    if require_positive && level <= TOL_EQ {
        return None;
    }

    // Pass 3: maximize total mass at that level.
    let mut objective = vec![0.0; nv];
    for queue in 0..q {
        if allowed[queue] {
            objective[queue] = 1.0;
        }
    }
    let mut lp = Lp::maximize(&objective);
    base_rows(&mut lp);
    dominance_rows(&mut lp);
    for queue in 0..q {
        if allowed[queue] {
            let mut row = vec![0.0; nv];
            row[queue] = 1.0;
            row[extra] = -1.0;
            lp.constraint(&row, Rel::Ge, 0.0);
        }
    }
    let mut floor = vec![0.0; nv];
    floor[extra] = 1.0;
    lp.constraint(&floor, Rel::Ge, level - TOL_EQ * level.abs().max(1.0));
    let sol = lp.solve().ok()?;
    let mut v: Vec<f64> = sol.x[..q].to_vec();

    let peak = v.iter().fold(0.0f64, |a, &b| a.max(b));
    if outside.is_empty() && peak <= TOL_EQ {
        // Equalities admit only the zero vector.
        return None;
    }
    if peak <= 0.0 {
        return None;
    }
    for value in &mut v {
        *value /= peak;
        if *value < TOL_EQ {
            *value = 0.0;
        }
    }
    Some(v)
}

/// A boundary vector for `subset` if one exists: `<v, S_i>` equal within
/// tolerance across the subset and strictly above every outside vector.
/// Returns the deterministic representative described in [`solve_boundary`].
pub fn boundary_vector(subset: &[usize], set: &ServiceSet) -> Option<BoundaryVector> {
    let mut subset = subset.to_vec();
    subset.sort_unstable();
    subset.dedup();
    assert!(subset.len() >= 2, "boundary subsets have at least 2 vectors");
    assert!(
        *subset.last().unwrap() < set.len(),
        "subset index out of range"
    );
    let allowed = vec![true; set.dim()];
    let v = solve_boundary(set, &subset, &allowed, false)?;
    Some(BoundaryVector { subset, v })
}

/// Like [`boundary_vector`] but restricted to a support pattern: `v_q = 0`
/// exactly for queues outside `support`, and `v_q` strictly positive on it.
pub fn boundary_vector_with_support(
    subset: &[usize],
    set: &ServiceSet,
    support: &[usize],
) -> Option<BoundaryVector> {
    let mut subset = subset.to_vec();
    subset.sort_unstable();
    subset.dedup();
    assert!(subset.len() >= 2, "boundary subsets have at least 2 vectors");
    let mut allowed = vec![false; set.dim()];
    for &queue in support {
        allowed[queue] = true;
    }
    let v = solve_boundary(set, &subset, &allowed, true)?;
    Some(BoundaryVector { subset, v })
}

/// Every subset of size two or more carrying a boundary vector, in
/// (size, lexicographic) order. There are at most `2^N - (N+1)` candidates;
/// enumeration refuses beyond [`MAX_ENUMERATION`] vectors.
pub fn relevant_boundaries(set: &ServiceSet) -> Result<Vec<BoundaryVector>, GeometryError> {
    let n = set.len();
    if n > MAX_ENUMERATION {
        return Err(GeometryError::TooManyVectors {
            n,
            max: MAX_ENUMERATION,
        });
    }
    let mut subsets: Vec<Vec<usize>> = Vec::new();
    for mask in 0u32..(1u32 << n) {
        if mask.count_ones() >= 2 {
            subsets.push((0..n).filter(|&m| mask & (1 << m) != 0).collect());
        }
    }
    subsets.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    let allowed = vec![true; set.dim()];
    let mut found = Vec::new();
    for subset in subsets {
        if let Some(v) = solve_boundary(set, &subset, &allowed, false) {
            found.push(BoundaryVector { subset, v });
        }
    }
    Ok(found)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ServiceSet;

    fn set(rows: &[&[f64]]) -> ServiceSet {
        ServiceSet::from_rows(rows).unwrap()
    }

    fn load(v: &[f64]) -> LoadVector {
        LoadVector::new(v.to_vec()).unwrap()
    }

    fn check_boundary(b: &BoundaryVector, s: &ServiceSet) {
        let scores: Vec<f64> = s
            .iter()
            .map(|sv| {
                sv.as_slice()
                    .iter()
                    .zip(&b.v)
                    .map(|(a, c)| a * c)
                    .sum::<f64>()
            })
            .collect();
        let scale = scores.iter().fold(1.0f64, |a, &v| a.max(v.abs()));
        let lead = scores[b.subset[0]];
        for &i in &b.subset {
            assert!((scores[i] - lead).abs() <= 1e-7 * scale, "equality broken");
        }
        for m in 0..s.len() {
            if !b.subset.contains(&m) {
                assert!(scores[m] < lead - 1e-10 * scale, "dominance broken");
            }
        }
    }

    #[test]
    fn stabilizable_examples() {
        assert!(is_stabilizable(
            &load(&[1.5, 1.25]),
            &set(&[&[2.0, 1.0], &[1.0, 1.5], &[1.0, 1.0]])
        ));
        assert!(!is_stabilizable(
            &load(&[4.0, 1.0]),
            &set(&[&[4.0, 0.0], &[3.0, 1.0]])
        ));
        // A load equal to one service vector is trivially covered.
        assert!(is_stabilizable(
            &load(&[3.0, 1.0]),
            &set(&[&[4.0, 0.0], &[3.0, 1.0]])
        ));
    }

    #[test]
    fn margin_sign_agrees_with_membership() {
        let s = set(&[&[2.0, 1.0], &[1.0, 1.5]]);
        let inside = load(&[1.0, 1.0]);
        let outside = load(&[2.0, 2.0]);
        assert!(stability_margin(&inside, &s) > 0.0);
        assert!(is_stabilizable(&inside, &s));
        assert!(stability_margin(&outside, &s) < 0.0);
        assert!(!is_stabilizable(&outside, &s));
    }

    #[test]
    fn non_essential_detects_dominated_vector() {
        let s = set(&[&[2.0, 1.0], &[1.0, 1.5], &[1.0, 1.0]]);
        assert_eq!(non_essential(&s), vec![2]);
        let s = set(&[&[4.0, 0.0], &[3.0, 1.0]]);
        assert!(non_essential(&s).is_empty());
    }

    #[test]
    fn cone_assignment_examples() {
        let s = set(&[&[4.0, 0.0], &[3.0, 1.0]]);
        let d = WeightMatrix::new(vec![1.0, 2.0]).unwrap();
        let x = WorkloadVector::new(vec![2.0 / 3.0, 1.0 / 3.0], 0).unwrap();
        assert_eq!(cone_of(&x, &d, &s).maximizers, vec![0, 1]);

        let d = WeightMatrix::identity(2);
        let x = WorkloadVector::new(vec![1.0, 0.0], 0).unwrap();
        assert_eq!(cone_of(&x, &d, &s).maximizers, vec![0]);

        let x = WorkloadVector::new(vec![0.0, 0.0], 0).unwrap();
        assert_eq!(cone_of(&x, &d, &s).maximizers, vec![0, 1]);
    }

    #[test]
    fn boundary_vector_examples() {
        // Full pair: v proportional to (1, 2), normalized to max 1.
        let s = set(&[&[1.0, 2.0], &[3.0, 1.0]]);
        let b = boundary_vector(&[0, 1], &s).unwrap();
        assert!((b.v[0] - 0.5).abs() < 1e-9);
        assert!((b.v[1] - 1.0).abs() < 1e-9);
        check_boundary(&b, &s);

        // Triple whose equalities force a sign change: no boundary vector.
        let s = set(&[
            &[1.0, 0.0, 1.0],
            &[0.0, 1.0, 1.0],
            &[0.75, 0.75, 2.0],
        ]);
        assert!(boundary_vector(&[0, 1, 2], &s).is_none());

        // Pair inside a 3-vector set; dominance over the third is strict.
        let s = set(&[&[4.0, 0.0], &[3.0, 1.0], &[1.0, 2.0]]);
        let b = boundary_vector(&[0, 1], &s).unwrap();
        assert!((b.v[0] - 1.0).abs() < 1e-9);
        assert!((b.v[1] - 1.0).abs() < 1e-9);
        check_boundary(&b, &s);
    }

    #[test]
    fn relevant_boundaries_three_vector_system() {
        let s = set(&[&[4.0, 0.0], &[3.0, 1.0], &[1.0, 2.0]]);
        let found = relevant_boundaries(&s).unwrap();
        assert_eq!(found.len(), 2);
        assert_eq!(found[0].subset, vec![0, 1]);
        assert!((found[0].v[0] - 1.0).abs() < 1e-9);
        assert!((found[0].v[1] - 1.0).abs() < 1e-9);
        assert_eq!(found[1].subset, vec![1, 2]);
        assert!((found[1].v[0] - 0.5).abs() < 1e-9);
        assert!((found[1].v[1] - 1.0).abs() < 1e-9);
        for b in &found {
            check_boundary(b, &s);
        }
    }

    #[test]
    fn relevant_boundaries_two_vector_system() {
        let s = set(&[&[4.0, 0.0], &[3.0, 1.0]]);
        let found = relevant_boundaries(&s).unwrap();
        assert_eq!(found.len(), 1);
        assert_eq!(found[0].subset, vec![0, 1]);
        assert!((found[0].v[0] - 1.0).abs() < 1e-9);
        assert!((found[0].v[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn relevant_boundaries_orthogonal_system() {
        let s = set(&[&[5.0, 0.0, 0.0], &[0.0, 5.0, 0.0], &[0.0, 0.0, 5.0]]);
        let found = relevant_boundaries(&s).unwrap();
        // Three pair boundaries plus the triple.
        assert_eq!(found.len(), 4);
        let triple = found
            .iter()
            .find(|b| b.subset == vec![0, 1, 2])
            .expect("triple boundary present");
        for q in 0..3 {
            assert!((triple.v[q] - 1.0).abs() < 1e-9);
        }
        // Pair representatives sit strictly inside the face when possible.
        let pair = found.iter().find(|b| b.subset == vec![0, 1]).unwrap();
        assert!((pair.v[0] - 1.0).abs() < 1e-9);
        assert!((pair.v[1] - 1.0).abs() < 1e-9);
        assert!((pair.v[2] - 0.5).abs() < 1e-9);
        for b in &found {
            check_boundary(b, &s);
        }
    }

    #[test]
    fn support_constrained_boundary() {
        let s = set(&[&[4.0, 0.0], &[3.0, 1.0], &[1.0, 2.0]]);
        let full = boundary_vector_with_support(&[0, 1], &s, &[0, 1]).unwrap();
        assert!(full.v.iter().all(|&v| v > 0.0));
        // Forcing v_2 = 0 collapses the pair's equality to v = 0.
        assert!(boundary_vector_with_support(&[0, 1], &s, &[0]).is_none());
    }

    #[test]
    fn enumeration_refuses_large_sets() {
        let rows: Vec<Vec<f64>> = (0..17)
            .map(|i| {
                let mut r = vec![0.0; 17];
                r[i] = 1.0;
                r
            })
            .collect();
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let s = ServiceSet::from_rows(&refs).unwrap();
        assert_eq!(
            relevant_boundaries(&s).unwrap_err(),
            GeometryError::TooManyVectors { n: 17, max: 16 }
        );
    }
}
