//! The backlog growth ray of an overloaded system.
//!
//! Under MaxWeight with weights `D`, an overloaded system's workload grows
//! along the unique ray `eta` minimizing `<e, D e>` over all vectors of the
//! form `e = (rho - sum_m alpha_m S_m)^+` with `alpha >= 0, sum(alpha) <= 1`.
//! Equivalently `eta` is the one fixed point with `sum(alpha) = 1` in which
//! every used service vector maximizes `<eta, D S_m>`.
//!
//! `solve_eta` minimizes the convex objective by projected gradient on the
//! mixture weights, with an active-set refinement step that solves the
//! fixed-point equations exactly once the support has settled. `eta_oracle`
//! is the slow, independent check: exhaustive search over a simplex grid.
//! `maxmin_eta` and `proportional_eta` pick different representatives of the
//! achievable set for the two classical fairness objectives.

use serde::Serialize;
use thiserror::Error;

use crate::geometry::{self, service_scores};
use crate::lp::{solve_linear_system, Lp, LpError, Rel};
use crate::model::{LoadVector, MixtureWeights, ServiceSet, WeightMatrix};

/// Fixed-point residual below which a candidate counts as converged.
pub const TOL_FIX: f64 = 1e-8;

/// Iteration ceiling for the projected-gradient loop.
pub const MAX_ITER: usize = 100_000;

/// Grid-point ceiling for the oracle.
pub const ORACLE_BUDGET: u128 = 600_000_000;

/// Attempt the exact active-set refinement this often.
const POLISH_EVERY: usize = 50;

#[derive(Debug, Error)]
pub enum EtaError {
    #[error("no fixed point within {iterations} iterations (residual {residual:.3e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        best: Box<EtaSolution>,
    },
    #[error("oracle grid has {points} points, over the {budget} budget")]
    BudgetExceeded { points: u128, budget: u128 },
    #[error("load is stabilizable; the requested quantity assumes overload")]
    StableLoad,
    #[error("linear program failed: {0}")]
    Lp(#[from] LpError),
}

/// A solved growth ray with its mixture weights and solver diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct EtaSolution {
    /// Growth ray, jobs per slot per queue.
    pub eta: Vec<f64>,
    /// Mixture weights over the service set at the fixed point.
    pub alpha: MixtureWeights,
    /// `<eta, D eta>` at the solution.
    pub objective: f64,
    /// Largest violated fixed-point condition, relative scale.
    pub kkt_residual: f64,
    /// Projected-gradient iterations used.
    pub iterations: usize,
    /// True when the load turned out stabilizable and the ray is zero.
    pub stable: bool,
}

/// Componentwise `(rho - sum_m alpha_m S_m)^+`.
fn ray_of(alpha: &[f64], rho: &[f64], set: &ServiceSet) -> Vec<f64> {
    let q = rho.len();
    let mut ray = rho.to_vec();
    for (m, s) in set.iter().enumerate() {
        if alpha[m] != 0.0 {
            for queue in 0..q {
                ray[queue] -= alpha[m] * s[queue];
            }
        }
    }
    for v in &mut ray {
        *v = v.max(0.0);
    }
    ray
}

fn objective_of(ray: &[f64], d: &WeightMatrix) -> f64 {
    d.weighted_dot(ray, ray)
}

struct Residual {
    value: f64,
    near_zero: bool,
}

/// Fixed-point residual of a mixture: mass gap, plus the score gap of every
/// meaningfully used service vector against the best score. A ray that is
/// zero to working precision is already optimal (the objective cannot go
/// below zero), so it reports residual zero with the mass condition waived.
fn residual_of(alpha: &[f64], ray: &[f64], scores: &[f64], rho_scale: f64) -> Residual {
    let near_zero = ray.iter().all(|&v| v <= 1e-9 * rho_scale);
    if near_zero {
        return Residual {
            value: 0.0,
            near_zero: true,
        };
    }
    let mass_gap = (alpha.iter().sum::<f64>() - 1.0).abs();
    let best = scores.iter().fold(0.0f64, |a, &v| a.max(v));
    let scale = best.abs().max(1e-12);
    let mut activity_gap = 0.0f64;
    for (m, &a) in alpha.iter().enumerate() {
        if a > TOL_FIX {
            activity_gap = activity_gap.max((best - scores[m]) / scale);
        }
    }
    Residual {
        value: mass_gap.max(activity_gap),
        near_zero: false,
    }
}

/// Euclidean projection onto `{alpha >= 0, sum(alpha) <= 1}`, the feasible
/// set of the mixture weights.
pub fn project_subsimplex(y: &[f64]) -> Vec<f64> {
    let clipped: Vec<f64> = y.iter().map(|v| v.max(0.0)).collect();
    if clipped.iter().sum::<f64>() <= 1.0 {
        return clipped;
    }
    // The mass constraint is active: project onto the unit simplex.
    let mut sorted = y.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut acc = 0.0;
    let mut tau = 0.0;
    for (i, &v) in sorted.iter().enumerate() {
        acc += v;
        let candidate = (acc - 1.0) / (i + 1) as f64;
        if v - candidate > 0.0 {
            tau = candidate;
        } else {
            break;
        }
    }
    y.iter().map(|v| (v - tau).max(0.0)).collect()
}

/// Try to solve the fixed-point equations exactly on the support suggested by
/// `alpha`: equal scores across used vectors, unit mass, and the clipped
/// queues pinned to zero. Returns a refined mixture when the linear system is
/// solvable and the result is a valid improvement.
fn polish(
    alpha: &[f64],
    rho: &[f64],
    set: &ServiceSet,
    d: &WeightMatrix,
    rho_scale: f64,
    support: &[usize],
) -> Option<Vec<f64>> {
    let q = rho.len();
    if support.is_empty() {
        return None;
    }
    let raw: Vec<f64> = {
        let mut r = rho.to_vec();
        for (m, s) in set.iter().enumerate() {
            for queue in 0..q {
                r[queue] -= alpha[m] * s[queue];
            }
        }
        r
    };
    let clipped: Vec<bool> = raw.iter().map(|&v| v < -1e-9 * rho_scale).collect();

    // Scores restricted to unclipped queues are affine in alpha:
    // w_m = c_m - sum_k gram[m][k] alpha_k.
    let dot_unclipped = |a: &[f64], b: &[f64]| -> f64 {
        (0..q)
            .filter(|&queue| !clipped[queue])
            .map(|queue| a[queue] * d[queue] * b[queue])
            .sum()
    };
    let k = support.len();
    let mut matrix = vec![vec![0.0; k]; k];
    let mut rhs = vec![0.0; k];
    let lead = support[0];
    for (row, &j) in support.iter().enumerate().skip(1) {
        for (col, &m) in support.iter().enumerate() {
            matrix[row][col] = dot_unclipped(set[lead].as_slice(), set[m].as_slice())
                - dot_unclipped(set[j].as_slice(), set[m].as_slice());
        }
        rhs[row] = dot_unclipped(set[lead].as_slice(), rho)
            - dot_unclipped(set[j].as_slice(), rho);
    }
    for col in 0..k {
        matrix[0][col] = 1.0;
    }
    rhs[0] = 1.0;

    let solved = solve_linear_system(matrix, rhs)?;
    if solved.iter().any(|&a| a < -1e-10) {
        return None;
    }
    let mut full = vec![0.0; alpha.len()];
    for (i, &m) in support.iter().enumerate() {
        full[m] = solved[i].max(0.0);
    }
    Some(full)
}

/// Solve for the growth ray from the uniform initial mixture.
pub fn solve_eta(
    rho: &LoadVector,
    set: &ServiceSet,
    d: &WeightMatrix,
) -> Result<EtaSolution, EtaError> {
    let n = set.len();
    solve_eta_from(rho, set, d, &vec![1.0 / n as f64; n])
}

/// Solve for the growth ray starting the projected-gradient iteration from
/// `alpha0` (projected onto the feasible set first). The returned ray is the
/// same for every start; only the iteration count differs.
pub fn solve_eta_from(
    rho: &LoadVector,
    set: &ServiceSet,
    d: &WeightMatrix,
    alpha0: &[f64],
) -> Result<EtaSolution, EtaError> {
    let q = set.dim();
    assert_eq!(rho.dim(), q, "load and service dimensions differ");
    assert_eq!(d.dim(), q, "weight and service dimensions differ");
    assert_eq!(alpha0.len(), set.len(), "initial mixture arity mismatch");
    let rho_scale = rho.as_slice().iter().fold(1.0f64, |a, &v| a.max(v));

    // Lipschitz bound for the gradient: 2 * ||S D S^T||_inf.
    let mut lipschitz = 0.0f64;
    for a in set.iter() {
        let row: f64 = set
            .iter()
            .map(|b| d.weighted_dot(a.as_slice(), b.as_slice()).abs())
            .sum();
        lipschitz = lipschitz.max(2.0 * row);
    }
    let mut step = if lipschitz > 0.0 { 1.0 / lipschitz } else { 1.0 };

    let mut alpha = project_subsimplex(alpha0);
    let mut ray = ray_of(&alpha, rho.as_slice(), set);
    let mut value = objective_of(&ray, d);

    let finish = |alpha: Vec<f64>, ray: Vec<f64>, iterations: usize| -> EtaSolution {
        let scores = service_scores(set, d, &ray);
        let res = residual_of(&alpha, &ray, &scores, rho_scale);
        EtaSolution {
            objective: objective_of(&ray, d),
            alpha: MixtureWeights::new(alpha).expect("projected mixture is valid"),
            kkt_residual: res.value,
            iterations,
            stable: res.near_zero,
            eta: ray,
        }
    };

    // Accept an exact active-set refinement when it is itself a fixed point
    // and does not worsen the objective. The support of the optimum is not
    // known during the iteration, so several guesses are tried: weights
    // above a threshold, and vectors whose score is near the maximum.
    let try_polish = |alpha: &[f64], value: f64| -> Option<(Vec<f64>, Vec<f64>)> {
        let ray = ray_of(alpha, rho.as_slice(), set);
        let scores = service_scores(set, d, &ray);
        let best_score = scores.iter().fold(0.0f64, |a, &v| a.max(v));
        let mut guesses: Vec<Vec<usize>> = Vec::new();
        for threshold in [1e-6, 1e-3, 1e-2] {
            let support: Vec<usize> =
                (0..alpha.len()).filter(|&m| alpha[m] > threshold).collect();
            if !support.is_empty() && !guesses.contains(&support) {
                guesses.push(support);
            }
        }
        if best_score > 0.0 {
            for gap in [1e-9, 1e-4, 1e-2] {
                let support: Vec<usize> = (0..alpha.len())
                    .filter(|&m| scores[m] >= best_score * (1.0 - gap))
                    .collect();
                if !support.is_empty() && !guesses.contains(&support) {
                    guesses.push(support);
                }
            }
        }
        for support in &guesses {
            let Some(candidate) = polish(alpha, rho.as_slice(), set, d, rho_scale, support)
            else {
                continue;
            };
            let cray = ray_of(&candidate, rho.as_slice(), set);
            let cvalue = objective_of(&cray, d);
            let cscores = service_scores(set, d, &cray);
            let cres = residual_of(&candidate, &cray, &cscores, rho_scale);
            if cres.value <= TOL_FIX && cvalue <= value + TOL_FIX * value.abs().max(1.0) {
                return Some((candidate, cray));
            }
        }
        None
    };

    for iteration in 0..MAX_ITER {
        let scores = service_scores(set, d, &ray);
        let res = residual_of(&alpha, &ray, &scores, rho_scale);
        if res.value <= TOL_FIX {
            if let Some((calpha, cray)) = try_polish(&alpha, value) {
                return Ok(finish(calpha, cray, iteration));
            }
            return Ok(finish(alpha, ray, iteration));
        }

        if iteration % POLISH_EVERY == POLISH_EVERY - 1 {
            if let Some((calpha, cray)) = try_polish(&alpha, value) {
                return Ok(finish(calpha, cray, iteration + 1));
            }
        }

        // Gradient of <ray, D ray> in alpha: -2 <D ray, S_m>.
        let gradient: Vec<f64> = scores.iter().map(|w| -2.0 * w).collect();

        // Backtracking proximal-gradient step.
        let mut accepted = false;
        for _ in 0..60 {
            let trial: Vec<f64> = alpha
                .iter()
                .zip(&gradient)
                .map(|(a, g)| a - step * g)
                .collect();
            let next = project_subsimplex(&trial);
            let next_ray = ray_of(&next, rho.as_slice(), set);
            let next_value = objective_of(&next_ray, d);
            let delta: f64 = next
                .iter()
                .zip(&alpha)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            let linear: f64 = next
                .iter()
                .zip(&alpha)
                .zip(&gradient)
                .map(|((a, b), g)| (a - b) * g)
                .sum();
            if next_value <= value + linear + delta / (2.0 * step) + 1e-300 {
                alpha = next;
                ray = next_ray;
                value = next_value;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // Step underflow: treat the current iterate as best effort.
            let best = finish(alpha, ray, iteration);
            let residual = best.kkt_residual;
            if residual <= TOL_FIX {
                return Ok(best);
            }
            return Err(EtaError::NonConvergence {
                iterations: iteration,
                residual,
                best: Box::new(best),
            });
        }
        step = (step * 1.3).min(1e6);
    }

    let best = finish(alpha, ray, MAX_ITER);
    let residual = best.kkt_residual;
    if residual <= TOL_FIX {
        return Ok(best);
    }
    Err(EtaError::NonConvergence {
        iterations: MAX_ITER,
        residual,
        best: Box::new(best),
    })
}

/// Residuals of the four fixed-point conditions for a candidate solution.
#[derive(Debug, Clone, Serialize)]
pub struct FixedPointReport {
    pub ok: bool,
    /// `||eta - (rho - sum alpha S)^+||_inf`, relative to the load scale.
    pub recursion: f64,
    /// `|sum(alpha) - 1|`; waived (mass may be below one) for a zero ray.
    pub mass: f64,
    /// Worst score gap of a used service vector against the best score.
    pub activity: f64,
    /// `|<eta,D eta> - (<rho,D eta> - max_S <S,D eta>)|`, relative.
    pub identity: f64,
}

/// Check a candidate `(eta, alpha)` against the fixed-point conditions at
/// tolerance [`TOL_FIX`].
pub fn verify_fixed_point(
    candidate: &EtaSolution,
    rho: &LoadVector,
    set: &ServiceSet,
    d: &WeightMatrix,
) -> FixedPointReport {
    let rho_scale = rho.as_slice().iter().fold(1.0f64, |a, &v| a.max(v));
    let alpha = candidate.alpha.as_slice();
    let implied = ray_of(alpha, rho.as_slice(), set);
    let recursion = candidate
        .eta
        .iter()
        .zip(&implied)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max)
        / rho_scale;

    let near_zero = candidate.eta.iter().all(|&v| v <= TOL_FIX * rho_scale);
    let mass_sum: f64 = alpha.iter().sum();
    let mass = if near_zero {
        (mass_sum - 1.0).max(0.0)
    } else {
        (mass_sum - 1.0).abs()
    };

    let scores = service_scores(set, d, &candidate.eta);
    let best = scores.iter().fold(0.0f64, |a, &v| a.max(v));
    let scale = best.abs().max(1e-12);
    let mut activity = 0.0f64;
    for (m, &a) in alpha.iter().enumerate() {
        if a > TOL_FIX {
            activity = activity.max((best - scores[m]) / scale);
        }
    }

    let lhs = d.weighted_dot(&candidate.eta, &candidate.eta);
    let rhs = d.weighted_dot(rho.as_slice(), &candidate.eta) - best;
    let identity = (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1.0);

    FixedPointReport {
        ok: recursion <= TOL_FIX && mass <= TOL_FIX && activity <= TOL_FIX && identity <= TOL_FIX,
        recursion,
        mass,
        activity,
        identity,
    }
}

/// Exhaustive minimization of `<ray, D ray>` over the mixture simplex gridded
/// at step `1/resolution`. Independent of the gradient solver; used to check
/// it. The best ray is within `O(1/resolution)` of the true minimizer.
pub fn eta_oracle(
    rho: &LoadVector,
    set: &ServiceSet,
    d: &WeightMatrix,
    resolution: usize,
) -> Result<Vec<f64>, EtaError> {
    assert!(resolution >= 1, "resolution must be positive");
    let n = set.len();
    let q = set.dim();
    // Lattice size: C(resolution + n, n).
    let mut points: u128 = 1;
    for i in 1..=n {
        points = points.saturating_mul((resolution + i) as u128) / i as u128;
    }
    if points > ORACLE_BUDGET {
        return Err(EtaError::BudgetExceeded {
            points,
            budget: ORACLE_BUDGET,
        });
    }

    let inv = 1.0 / resolution as f64;
    let steps: Vec<Vec<f64>> = set
        .iter()
        .map(|s| s.as_slice().iter().map(|v| v * inv).collect())
        .collect();

    struct Search<'a> {
        rho: &'a [f64],
        d: &'a [f64],
        steps: &'a [Vec<f64>],
        q: usize,
        resolution: usize,
        counts: Vec<usize>,
        best_value: f64,
        best_counts: Vec<usize>,
    }

    impl Search<'_> {
        fn eval(&self, r: &[f64]) -> f64 {
            let mut acc = 0.0;
            for queue in 0..self.q {
                let v = (self.rho[queue] - r[queue]).max(0.0);
                acc += self.d[queue] * v * v;
            }
            acc
        }

        fn descend(&mut self, depth: usize, remaining: usize, r: &mut Vec<f64>) {
            let saved = r.clone();
            if depth + 1 == self.counts.len() {
                for k in 0..=remaining {
                    if k > 0 {
                        for queue in 0..self.q {
                            r[queue] += self.steps[depth][queue];
                        }
                    }
                    let value = self.eval(r);
                    if value < self.best_value {
                        self.best_value = value;
                        self.counts[depth] = k;
                        self.best_counts.copy_from_slice(&self.counts);
                    }
                }
            } else {
                for k in 0..=remaining {
                    if k > 0 {
                        for queue in 0..self.q {
                            r[queue] += self.steps[depth][queue];
                        }
                    }
                    self.counts[depth] = k;
                    self.descend(depth + 1, remaining - k, r);
                }
            }
            *r = saved;
        }
    }

    let mut search = Search {
        rho: rho.as_slice(),
        d: d.diagonal(),
        steps: &steps,
        q,
        resolution,
        counts: vec![0; n],
        best_value: f64::INFINITY,
        best_counts: vec![0; n],
    };
    let mut r = vec![0.0; q];
    search.descend(0, resolution, &mut r);

    let alpha: Vec<f64> = search
        .best_counts
        .iter()
        .map(|&k| k as f64 / search.resolution as f64)
        .collect();
    Ok(ray_of(&alpha, rho.as_slice(), set))
}

/// The achievable ray minimizing the largest component: solves the linear
/// program `min t` over `ray >= rho - sum alpha S`, `ray <= t`, `alpha` in
/// the sub-simplex, then reports the canonical ray of the optimal mixture.
pub fn maxmin_eta(rho: &LoadVector, set: &ServiceSet) -> Result<Vec<f64>, EtaError> {
    let q = set.dim();
    assert_eq!(rho.dim(), q, "load and service dimensions differ");
    let n = set.len();
    // Variables: ray_0..ray_{q-1}, t, alpha_0..alpha_{n-1}.
    let nv = q + 1 + n;
    let mut objective = vec![0.0; nv];
    objective[q] = 1.0;
    let mut lp = Lp::minimize(&objective);
    for queue in 0..q {
        let mut row = vec![0.0; nv];
        row[queue] = 1.0;
        for (m, s) in set.iter().enumerate() {
            row[q + 1 + m] = s[queue];
        }
        lp.constraint(&row, Rel::Ge, rho[queue]);
        let mut cap = vec![0.0; nv];
        cap[queue] = 1.0;
        cap[q] = -1.0;
        lp.constraint(&cap, Rel::Le, 0.0);
    }
    let mut mass = vec![0.0; nv];
    for m in 0..n {
        mass[q + 1 + m] = 1.0;
    }
    lp.constraint(&mass, Rel::Le, 1.0);
    let sol = lp.solve()?;
    let alpha = &sol.x[q + 1..];
    Ok(ray_of(alpha, rho.as_slice(), set))
}

/// The smallest `K` in `(0, 1)` with `(1 - K) rho` stabilizable, found by
/// bisection; the proportional-fairness ray is then `K rho`. Errors when the
/// load is already stabilizable.
pub fn proportional_eta(rho: &LoadVector, set: &ServiceSet) -> Result<(Vec<f64>, f64), EtaError> {
    assert_eq!(rho.dim(), set.dim(), "load and service dimensions differ");
    if geometry::is_stabilizable(rho, set) {
        return Err(EtaError::StableLoad);
    }
    let feasible = |k: f64| -> bool {
        let scaled: Vec<f64> = rho.as_slice().iter().map(|v| (1.0 - k) * v).collect();
        let q = set.dim();
        let n = set.len();
        let mut lp = Lp::feasibility(n);
        lp.constraint(&vec![1.0; n], Rel::Eq, 1.0);
        for queue in 0..q {
            let row: Vec<f64> = set.iter().map(|s| s[queue]).collect();
            lp.constraint(&row, Rel::Ge, scaled[queue]);
        }
        lp.solve().is_ok()
    };
    let mut lo = 0.0;
    let mut hi = 1.0;
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if feasible(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let ray = rho.as_slice().iter().map(|v| hi * v).collect();
    Ok((ray, hi))
}
