//! Built-in experiment configurations and the shared batch runner.

use std::path::Path;

use maxweight::control::{check_feasibility, FeasibilityVerdict};
use maxweight::model::{
    validate_system, FairnessTarget, LoadVector, ServiceSet, SystemSpec, WeightMatrix,
    WorkloadVector,
};
use maxweight::sim::{run, ArrivalKind, ArrivalModel, Policy, SimError, SimTrace};

use crate::output::{summarize_run, trace_csv, write_outputs, Summary};

/// One simulation in a batch: a fully resolved system plus its arrivals,
/// start state, and the direction it is expected to grow along (if any).
pub struct ExperimentRun {
    pub name: String,
    pub system: SystemSpec,
    pub arrivals: ArrivalModel,
    pub x0: Vec<f64>,
    pub target: Option<Vec<f64>>,
}

/// Execute a batch concurrently (runs are independent; each owns its seed),
/// write one CSV per run plus `summary.json`, and return the summary.
pub fn execute_runs(
    runs: Vec<ExperimentRun>,
    horizon: u64,
    stride: u64,
    tail_fraction: f64,
    out_dir: &Path,
) -> Result<Summary, SimError> {
    let mut traces: Vec<Option<Result<SimTrace, SimError>>> = Vec::new();
    traces.resize_with(runs.len(), || None);
    std::thread::scope(|scope| {
        for (slot, spec) in traces.iter_mut().zip(&runs) {
            scope.spawn(move || {
                let x0 = WorkloadVector::new(spec.x0.clone(), 0).expect("valid start state");
                *slot = Some(run(
                    &spec.system,
                    &Policy::MaxWeight,
                    &spec.arrivals,
                    horizon,
                    &x0,
                ));
            });
        }
    });

    let mut summary = Summary {
        tail_fraction,
        runs: Vec::new(),
    };
    let mut csvs = Vec::new();
    for (spec, slot) in runs.iter().zip(traces) {
        let trace = slot.expect("run completed")?;
        let csv_name = format!("{}.csv", spec.name);
        csvs.push((csv_name.clone(), trace_csv(&trace, stride)));
        summary.runs.push(summarize_run(
            &spec.name,
            &csv_name,
            &trace,
            spec.target.as_deref(),
            tail_fraction,
        ));
    }
    write_outputs(out_dir, &summary, &csvs)?;
    Ok(summary)
}

fn set(rows: &[&[f64]]) -> ServiceSet {
    ServiceSet::from_rows(rows).expect("built-in service set is valid")
}

fn system(rows: &[&[f64]], rho: &[f64], d: &[f64]) -> SystemSpec {
    validate_system(
        set(rows),
        LoadVector::new(rho.to_vec()).expect("built-in load is valid"),
        WeightMatrix::new(d.to_vec()).expect("built-in weights are valid"),
    )
    .expect("built-in system is consistent")
}

fn uniform(rates: &[f64], seed: u64) -> ArrivalModel {
    ArrivalModel {
        kind: ArrivalKind::Uniform {
            rates: rates.to_vec(),
        },
        seed,
        integer_arrivals: false,
    }
}

/// Synthesize the weights for a built-in target via the feasibility check.
fn weights_for(theta: &[f64], rho: &[f64], rows: &[&[f64]]) -> WeightMatrix {
    let target = FairnessTarget::new(theta.to_vec()).expect("built-in target is valid");
    let load = LoadVector::new(rho.to_vec()).expect("built-in load is valid");
    let report =
        check_feasibility(&target, &load, &set(rows)).expect("built-in geometry is small");
    assert_eq!(
        report.verdict,
        FeasibilityVerdict::Feasible,
        "built-in experiment target must be feasible"
    );
    report.d.expect("feasible report carries weights")
}

/// Two queues, two service vectors, three starting workloads converging to
/// the same growth direction.
pub fn fig3(seed: u64) -> (Vec<ExperimentRun>, u64) {
    let rows: &[&[f64]] = &[&[4.0, 0.0], &[3.0, 1.0]];
    let rho = [4.0, 1.0];
    let theta = [2.0 / 3.0, 1.0 / 3.0];
    let d = weights_for(&theta, &rho, rows);
    let starts: [(&str, [f64; 2]); 3] = [
        ("start_00_00", [0.0, 0.0]),
        ("start_60_00", [60.0, 0.0]),
        ("start_00_20", [0.0, 20.0]),
    ];
    let runs = starts
        .iter()
        .map(|(name, x0)| ExperimentRun {
            name: name.to_string(),
            system: validate_system(
                set(rows),
                LoadVector::new(rho.to_vec()).unwrap(),
                d.clone(),
            )
            .unwrap(),
            arrivals: uniform(&rho, seed),
            x0: x0.to_vec(),
            target: Some(theta.to_vec()),
        })
        .collect();
    (runs, 100)
}

/// Three service vectors, two loads: each load needs its own weights, and
/// the mismatched pairing is included to show the growth direction missing
/// the target.
pub fn fig4(seed: u64) -> (Vec<ExperimentRun>, u64) {
    let rows: &[&[f64]] = &[&[4.0, 0.0], &[3.0, 1.0], &[1.0, 2.0]];
    let theta = [2.0 / 3.0, 1.0 / 3.0];
    let rho1 = [4.0, 1.0];
    let rho2 = [3.0, 2.0];
    let d1 = weights_for(&theta, &rho1, rows);
    let d2 = weights_for(&theta, &rho2, rows);
    let cases = [
        ("rho1_d1", rho1, d1.clone()),
        ("rho2_d2", rho2, d2),
        ("rho2_d1_mismatch", rho2, d1),
    ];
    let runs = cases
        .into_iter()
        .map(|(name, rho, d)| ExperimentRun {
            name: name.to_string(),
            system: validate_system(
                set(rows),
                LoadVector::new(rho.to_vec()).unwrap(),
                d,
            )
            .unwrap(),
            arrivals: uniform(&rho, seed),
            x0: vec![0.0, 0.0],
            target: Some(theta.to_vec()),
        })
        .collect();
    (runs, 100)
}

/// Three orthogonal service vectors with the load alternating between a
/// stable and an unstable mode every 500 slots.
pub fn fig5(seed: u64) -> (Vec<ExperimentRun>, u64) {
    let rows: &[&[f64]] = &[&[5.0, 0.0, 0.0], &[0.0, 5.0, 0.0], &[0.0, 0.0, 5.0]];
    let theta = [0.5, 1.0 / 3.0, 1.0 / 6.0];
    let rho_unstable = [3.0, 2.0, 1.0];
    let d = weights_for(&theta, &rho_unstable, rows);
    let runs = vec![ExperimentRun {
        name: "mode_switch".to_string(),
        system: system(rows, &rho_unstable, d.diagonal()),
        arrivals: ArrivalModel {
            kind: ArrivalKind::ModeSwitch {
                stable: vec![1.0, 0.0, 1.0],
                unstable: rho_unstable.to_vec(),
                period: 500,
            },
            seed,
            integer_arrivals: false,
        },
        x0: vec![0.0, 0.0, 0.0],
        target: Some(theta.to_vec()),
    }];
    (runs, 1)
}

/// Default horizon per experiment.
pub fn default_horizon(name: &str) -> u64 {
    match name {
        "fig5" => 4_000,
        _ => 100_000,
    }
}

pub fn build(name: &str, seed: u64) -> Option<(Vec<ExperimentRun>, u64)> {
    match name {
        "fig3" => Some(fig3(seed)),
        "fig4" => Some(fig4(seed)),
        "fig5" => Some(fig5(seed)),
        _ => None,
    }
}
