//! Deterministic discrete-time simulation of the workload recursion.
//!
//! Each slot the chosen service vector `S(t)` removes
//! `D_q(t) = min(S_q(t), X_q(t))` jobs and the workload advances by
//! `X(t+1) = X(t) + A(t) - D(t)`. Arrivals come from seeded models built on
//! the pinned [`SplitMix64`](crate::rng::SplitMix64) stream, so a run is a
//! pure function of its configuration: identical configs replay bit for bit.
//! A single run is strictly sequential; batch experiments may run many
//! seeded configurations concurrently since everything shared is immutable.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{LoadVector, ServiceSet, SystemSpec, WeightMatrix, WorkloadVector};
use crate::rng::SplitMix64;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("service index {index} out of range for {n} service vectors")]
    BadServiceIndex { index: usize, n: usize },
    #[error("mixture weights must be non-negative with sum at most one (sum = {sum})")]
    BadMixture { sum: f64 },
    #[error("arrival rates must be finite and non-negative")]
    BadRates,
    #[error("mode-switch period must be at least one slot")]
    BadPeriod,
    #[error("horizon must be at least one slot")]
    BadHorizon,
    #[error("trace {path}: line {line}: {message}")]
    TraceParse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("trace provides {got} slots, horizon needs {need}")]
    TraceTooShort { need: u64, got: u64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// How arrivals are generated each slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ArrivalKind {
    /// Independent uniform draws on `[0, 2 rate_q]`, so the long-run average
    /// per queue is `rate_q`.
    Uniform { rates: Vec<f64> },
    /// Exactly `rate_q` jobs every slot.
    Deterministic { rates: Vec<f64> },
    /// Arrivals read from a CSV file with header `t,a_1,...,a_Q`.
    Trace { path: PathBuf },
    /// Alternate uniform arrivals between two rate vectors, `period` slots
    /// per mode, starting in the stable mode.
    ModeSwitch {
        stable: Vec<f64>,
        unstable: Vec<f64>,
        period: u64,
    },
}

/// A seeded arrival process. With `integer_arrivals` set, each sampled
/// amount is rounded to the nearest integer (which preserves the mean of the
/// uniform models).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrivalModel {
    #[serde(flatten)]
    pub kind: ArrivalKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub integer_arrivals: bool,
}

fn rates_ok(rates: &[f64]) -> bool {
    rates.iter().all(|r| r.is_finite() && *r >= 0.0)
}

impl ArrivalModel {
    fn validate(&self, q: usize, horizon: u64) -> Result<(), SimError> {
        let check_dim = |rates: &Vec<f64>| -> Result<(), SimError> {
            if rates.len() != q {
                return Err(SimError::DimensionMismatch {
                    expected: q,
                    got: rates.len(),
                });
            }
            if !rates_ok(rates) {
                return Err(SimError::BadRates);
            }
            Ok(())
        };
        match &self.kind {
            ArrivalKind::Uniform { rates } | ArrivalKind::Deterministic { rates } => {
                check_dim(rates)
            }
            ArrivalKind::Trace { .. } => {
                let _ = horizon;
                Ok(())
            }
            ArrivalKind::ModeSwitch {
                stable,
                unstable,
                period,
            } => {
                check_dim(stable)?;
                check_dim(unstable)?;
                if *period == 0 {
                    return Err(SimError::BadPeriod);
                }
                Ok(())
            }
        }
    }
}

/// Parse a trace CSV (`t,a_1,...,a_Q`) into per-slot arrival rows.
fn load_trace(path: &Path, q: usize, horizon: u64) -> Result<Vec<Vec<f64>>, SimError> {
    let text = fs::read_to_string(path)?;
    let display = path.display().to_string();
    let mut rows = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if line_no == 0 {
            if !line.starts_with("t,") {
                return Err(SimError::TraceParse {
                    path: display,
                    line: 1,
                    message: "expected header starting with 't,'".into(),
                });
            }
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != q + 1 {
            return Err(SimError::TraceParse {
                path: display,
                line: line_no + 1,
                message: format!("expected {} fields, got {}", q + 1, fields.len()),
            });
        }
        let mut row = Vec::with_capacity(q);
        for field in &fields[1..] {
            let value: f64 = field.trim().parse().map_err(|_| SimError::TraceParse {
                path: display.clone(),
                line: line_no + 1,
                message: format!("bad number {field:?}"),
            })?;
            if !value.is_finite() || value < 0.0 {
                return Err(SimError::TraceParse {
                    path: display.clone(),
                    line: line_no + 1,
                    message: format!("arrival {value} out of range"),
                });
            }
            row.push(value);
        }
        rows.push(row);
    }
    if (rows.len() as u64) < horizon {
        return Err(SimError::TraceTooShort {
            need: horizon,
            got: rows.len() as u64,
        });
    }
    Ok(rows)
}

struct ArrivalSampler {
    kind: ArrivalKind,
    rng: SplitMix64,
    integer: bool,
    trace_rows: Vec<Vec<f64>>,
}

impl ArrivalSampler {
    fn new(model: &ArrivalModel, q: usize, horizon: u64) -> Result<Self, SimError> {
        model.validate(q, horizon)?;
        let trace_rows = match &model.kind {
            ArrivalKind::Trace { path } => load_trace(path, q, horizon)?,
            _ => Vec::new(),
        };
        Ok(Self {
            kind: model.kind.clone(),
            rng: SplitMix64::new(model.seed),
            integer: model.integer_arrivals,
            trace_rows,
        })
    }

    fn sample(&mut self, t: u64, out: &mut Vec<f64>) {
        out.clear();
        match &self.kind {
            ArrivalKind::Uniform { rates } => {
                for &r in rates {
                    out.push(self.rng.uniform(2.0 * r));
                }
            }
            ArrivalKind::Deterministic { rates } => out.extend_from_slice(rates),
            ArrivalKind::Trace { .. } => {
                out.extend_from_slice(&self.trace_rows[t as usize]);
            }
            ArrivalKind::ModeSwitch {
                stable,
                unstable,
                period,
            } => {
                let rates = if (t / period) % 2 == 0 { stable } else { unstable };
                for &r in rates {
                    out.push(self.rng.uniform(2.0 * r));
                }
            }
        }
        if self.integer {
            for v in out.iter_mut() {
                *v = v.round();
            }
        }
    }
}

/// Scheduling policy for a run. MaxWeight reads its weights from the
/// [`SystemSpec`] it runs against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum Policy {
    MaxWeight,
    /// Pick service vector `m` with probability `beta_m`, independently each
    /// slot, from a stream seeded separately from the arrivals. The weights
    /// may sum to less than one; the shortfall is the probability of idling
    /// for the slot.
    StationaryMixture { beta: Vec<f64>, seed: u64 },
    Fixed { index: usize },
}

impl Policy {
    fn validate(&self, n: usize) -> Result<(), SimError> {
        match self {
            Policy::MaxWeight => Ok(()),
            Policy::StationaryMixture { beta, .. } => {
                if beta.len() != n {
                    return Err(SimError::DimensionMismatch {
                        expected: n,
                        got: beta.len(),
                    });
                }
                let sum: f64 = beta.iter().sum();
                if beta.iter().any(|b| !b.is_finite() || *b < 0.0) || sum > 1.0 + 1e-9 {
                    return Err(SimError::BadMixture { sum });
                }
                Ok(())
            }
            Policy::Fixed { index } => {
                if *index >= n {
                    return Err(SimError::BadServiceIndex { index: *index, n });
                }
                Ok(())
            }
        }
    }
}

fn select_weighted(x: &[f64], d: &WeightMatrix, set: &ServiceSet) -> usize {
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (m, s) in set.iter().enumerate() {
        let score = d.weighted_dot(s.as_slice(), x);
        if score > best_score {
            best_score = score;
            best = m;
        }
    }
    best
}

/// The MaxWeight choice at workload `x`: the index maximizing `<S_m, D x>`,
/// lowest index on ties.
pub fn maxweight_select(x: &WorkloadVector, d: &WeightMatrix, set: &ServiceSet) -> usize {
    assert_eq!(x.dim(), set.dim(), "workload and service dimensions differ");
    assert_eq!(d.dim(), set.dim(), "weight and service dimensions differ");
    select_weighted(x.as_slice(), d, set)
}

/// One slot of the workload recursion: departures are capped by the current
/// backlog, and the next workload is `x + arrival - departures`.
pub fn step(x: &[f64], arrival: &[f64], service: &[f64]) -> (Vec<f64>, Vec<f64>) {
    debug_assert_eq!(x.len(), arrival.len());
    debug_assert_eq!(x.len(), service.len());
    let mut next = Vec::with_capacity(x.len());
    let mut departures = Vec::with_capacity(x.len());
    for q in 0..x.len() {
        let dep = service[q].min(x[q]);
        departures.push(dep);
        next.push(x[q] + arrival[q] - dep);
    }
    (next, departures)
}

/// Everything that determined a run, echoed into its trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub service_set: ServiceSet,
    pub rho: LoadVector,
    pub d: WeightMatrix,
    pub policy: Policy,
    pub arrivals: ArrivalModel,
    pub horizon: u64,
    pub x0: Vec<f64>,
}

/// State recorded at the top of one slot, plus what the slot did.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlotRecord {
    pub t: u64,
    /// Workload at the start of the slot.
    pub x: Vec<f64>,
    pub arrival: Vec<f64>,
    /// Index of the service vector used; `None` for an idle slot (only a
    /// sub-stochastic stationary mixture ever idles).
    pub chosen: Option<usize>,
    pub departures: Vec<f64>,
}

/// A complete simulation run: one record per slot and the final workload.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimTrace {
    pub config: RunConfig,
    pub records: Vec<SlotRecord>,
    /// Workload after the last slot, `X(horizon)`.
    pub final_x: Vec<f64>,
}

impl SimTrace {
    pub fn q(&self) -> usize {
        self.final_x.len()
    }

    pub fn horizon(&self) -> u64 {
        self.config.horizon
    }

    /// Workload at slot `t` in `0..=horizon`.
    pub fn workload_at(&self, t: u64) -> &[f64] {
        if t == self.config.horizon {
            &self.final_x
        } else {
            &self.records[t as usize].x
        }
    }

    /// `X(t)/t` at slot `t >= 1`.
    pub fn scaled_at(&self, t: u64) -> Vec<f64> {
        assert!(t >= 1);
        self.workload_at(t).iter().map(|v| v / t as f64).collect()
    }

    /// Backlog shares `X_q(t) / sum_k X_k(t)`, or `None` when empty.
    pub fn ratios_at(&self, t: u64) -> Option<Vec<f64>> {
        let x = self.workload_at(t);
        let total: f64 = x.iter().sum();
        if total <= 1e-12 {
            None
        } else {
            Some(x.iter().map(|v| v / total).collect())
        }
    }
}

/// Simulate `horizon` slots from `x0`. Deterministic given the seeds in the
/// arrival model and policy.
pub fn run(
    spec: &SystemSpec,
    policy: &Policy,
    arrivals: &ArrivalModel,
    horizon: u64,
    x0: &WorkloadVector,
) -> Result<SimTrace, SimError> {
    let q = spec.q();
    if x0.dim() != q {
        return Err(SimError::DimensionMismatch {
            expected: q,
            got: x0.dim(),
        });
    }
    if horizon == 0 {
        return Err(SimError::BadHorizon);
    }
    policy.validate(spec.n())?;
    let mut sampler = ArrivalSampler::new(arrivals, q, horizon)?;
    let mut policy_rng = match policy {
        Policy::StationaryMixture { seed, .. } => Some(SplitMix64::new(*seed)),
        _ => None,
    };

    let mut records = Vec::with_capacity(horizon as usize);
    let mut x = x0.as_slice().to_vec();
    let mut arrival = Vec::with_capacity(q);
    let idle = vec![0.0; q];
    for t in 0..horizon {
        sampler.sample(t, &mut arrival);
        let chosen = match policy {
            Policy::MaxWeight => Some(select_weighted(&x, &spec.d, &spec.service_set)),
            Policy::StationaryMixture { beta, .. } => {
                let u = policy_rng.as_mut().expect("mixture rng").next_f64();
                let mut acc = 0.0;
                let mut pick = None;
                for (m, b) in beta.iter().enumerate() {
                    acc += b;
                    if u < acc {
                        pick = Some(m);
                        break;
                    }
                }
                pick
            }
            Policy::Fixed { index } => Some(*index),
        };
        let service = match chosen {
            Some(m) => spec.service_set[m].as_slice(),
            None => &idle,
        };
        let (next, departures) = step(&x, &arrival, service);
        records.push(SlotRecord {
            t,
            x: x.clone(),
            arrival: arrival.clone(),
            chosen,
            departures,
        });
        x = next;
    }

    Ok(SimTrace {
        config: RunConfig {
            service_set: spec.service_set.clone(),
            rho: spec.rho.clone(),
            d: spec.d.clone(),
            policy: policy.clone(),
            arrivals: arrivals.clone(),
            horizon,
            x0: x0.as_slice().to_vec(),
        },
        records,
        final_x: x,
    })
}

/// Tail-averaged growth estimates of a run.
#[derive(Debug, Clone, Serialize)]
pub struct DirectionEstimate {
    /// Average of `X(t)/t` over the tail window.
    pub eta_hat: Vec<f64>,
    /// Average backlog shares over the tail window; `None` when the tail
    /// backlog is entirely zero (a drained, stable run).
    pub theta_hat: Option<Vec<f64>>,
}

/// Average `X(t)/t` and the backlog shares over the trailing
/// `tail_fraction` of the horizon.
pub fn measure_direction(trace: &SimTrace, tail_fraction: f64) -> DirectionEstimate {
    assert!(
        tail_fraction > 0.0 && tail_fraction < 1.0,
        "tail fraction must lie in (0, 1)"
    );
    let horizon = trace.horizon();
    let q = trace.q();
    let start = ((horizon as f64) * (1.0 - tail_fraction)).ceil() as u64;
    let start = start.clamp(1, horizon);

    let mut eta_hat = vec![0.0; q];
    let mut slots = 0u64;
    let mut shares = vec![0.0; q];
    let mut share_slots = 0u64;
    for t in start..=horizon {
        let scaled = trace.scaled_at(t);
        for (acc, v) in eta_hat.iter_mut().zip(&scaled) {
            *acc += v;
        }
        slots += 1;
        if let Some(r) = trace.ratios_at(t) {
            for (acc, v) in shares.iter_mut().zip(&r) {
                *acc += v;
            }
            share_slots += 1;
        }
    }
    for v in eta_hat.iter_mut() {
        *v /= slots as f64;
    }
    let theta_hat = if share_slots == 0 {
        None
    } else {
        Some(shares.iter().map(|v| v / share_slots as f64).collect())
    };
    DirectionEstimate { eta_hat, theta_hat }
}

/// Per-window summary of a mode-switching run (stable mode first, matching
/// [`ArrivalKind::ModeSwitch`]).
#[derive(Debug, Clone, Serialize)]
pub struct WindowStat {
    pub index: usize,
    /// Window slots `[start, end)`.
    pub start: u64,
    pub end: u64,
    pub stable_mode: bool,
    /// Total backlog at the end of the window.
    pub final_total: f64,
    /// Smallest total backlog seen inside the window.
    pub min_total: f64,
    /// Backlog shares averaged over the window's final quarter, when the
    /// backlog there is nonzero.
    pub tail_ratios: Option<Vec<f64>>,
}

/// Split a run into `period`-slot windows and summarize each.
pub fn mode_window_stats(trace: &SimTrace, period: u64) -> Vec<WindowStat> {
    assert!(period >= 1);
    let horizon = trace.horizon();
    let q = trace.q();
    let mut stats = Vec::new();
    let mut index = 0usize;
    let mut start = 0u64;
    while start < horizon {
        let end = (start + period).min(horizon);
        let mut min_total = f64::INFINITY;
        for t in start..=end {
            let total: f64 = trace.workload_at(t).iter().sum();
            min_total = min_total.min(total);
        }
        let final_total: f64 = trace.workload_at(end).iter().sum();
        let quarter_start = end - (end - start) / 4;
        let mut shares = vec![0.0; q];
        let mut share_slots = 0u64;
        for t in quarter_start..=end {
            if let Some(r) = trace.ratios_at(t) {
                for (acc, v) in shares.iter_mut().zip(&r) {
                    *acc += v;
                }
                share_slots += 1;
            }
        }
        let tail_ratios = if share_slots == 0 {
            None
        } else {
            Some(shares.iter().map(|v| v / share_slots as f64).collect())
        };
        stats.push(WindowStat {
            index,
            start,
            end,
            stable_mode: index % 2 == 0,
            final_total,
            min_total,
            tail_ratios,
        });
        index += 1;
        start = end;
    }
    stats
}

/// Outcome of comparing MaxWeight against stationary mixtures that grow in
/// the same direction.
#[derive(Debug, Clone, Serialize)]
pub struct MinimalityReport {
    /// Tail-averaged MaxWeight ray.
    pub eta_maxweight: Vec<f64>,
    /// `(alternative index, kappa)` for each qualifying mixture, where
    /// `kappa` is the ratio of total growth rates against MaxWeight.
    pub kappa: Vec<(usize, f64)>,
    /// Alternatives whose analytic ray does not match the target direction.
    pub skipped: Vec<usize>,
}

/// Direction-matching filter tolerance for alternatives.
pub const DIRECTION_FILTER_TOL: f64 = 2e-2;

/// Simulate MaxWeight under `spec.d` and each stationary mixture in
/// `alternatives`, keeping only mixtures whose analytic ray
/// `(rho - sum beta S)^+` normalizes to `theta`; report each survivor's
/// total-growth ratio against MaxWeight.
pub fn compare_minimality(
    spec: &SystemSpec,
    theta: &[f64],
    alternatives: &[Vec<f64>],
    arrivals: &ArrivalModel,
    horizon: u64,
    tail_fraction: f64,
) -> Result<MinimalityReport, SimError> {
    let q = spec.q();
    assert_eq!(theta.len(), q, "target and system dimensions differ");
    let x0 = WorkloadVector::new(vec![0.0; q], 0).expect("zero workload");
    let base = run(spec, &Policy::MaxWeight, arrivals, horizon, &x0)?;
    let eta_maxweight = measure_direction(&base, tail_fraction).eta_hat;
    let base_total: f64 = eta_maxweight.iter().sum();

    let mut kappa = Vec::new();
    let mut skipped = Vec::new();
    for (i, beta) in alternatives.iter().enumerate() {
        let mut ray = spec.rho.as_slice().to_vec();
        for (m, s) in spec.service_set.iter().enumerate() {
            for queue in 0..q {
                ray[queue] -= beta[m] * s[queue];
            }
        }
        for v in ray.iter_mut() {
            *v = v.max(0.0);
        }
        let total: f64 = ray.iter().sum();
        let qualifies = total > 0.0
            && ray
                .iter()
                .zip(theta)
                .all(|(r, t)| (r / total - t).abs() <= DIRECTION_FILTER_TOL);
        if !qualifies {
            skipped.push(i);
            continue;
        }
        let policy = Policy::StationaryMixture {
            beta: beta.clone(),
            seed: arrivals.seed.wrapping_add(0x5EED + i as u64),
        };
        let trace = run(spec, &policy, arrivals, horizon, &x0)?;
        let alt = measure_direction(&trace, tail_fraction).eta_hat;
        let alt_total: f64 = alt.iter().sum();
        kappa.push((i, alt_total / base_total));
    }
    Ok(MinimalityReport {
        eta_maxweight,
        kappa,
        skipped,
    })
}
