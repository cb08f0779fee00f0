//! Experiment orchestration: builds the model and deployment described by a
//! config, simulates data, runs one estimator mode and writes a CSV trace plus
//! a JSON summary.

pub mod config;
pub mod deploy;

use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::{irpe_cycle, rpe_step, IrpeState, JointSource, PredictorSource, RpeState, SensorPredictor};
use crate::gasleak::{cluster_stack, simulate_leak, GasLeakModel};
use crate::gradients::DerivativeOptions;
use crate::lifted::{equivalence_report, lifted_rpe_run, EquivalenceReport};
use crate::statespace::{check_model_admissible, simulate_trajectory, AffineFamily, ModelFamily, ParamBox, Trajectory};

pub use config::{DeploymentConfig, EstimatorConfig, ExperimentConfig, Layout, Mode, ModelConfig, OutputConfig};
pub use deploy::{
    comm_cost, deploy_grid_jittered, deploy_uniform, distance, ring_order, step_costs, tour_length, Cluster, CommMode,
    Deployment, Point,
};

pub const TRACE_FILE: &str = "trace.csv";
pub const LIFTED_TRACE_FILE: &str = "lifted_trace.csv";
pub const SUMMARY_FILE: &str = "summary.json";

/// Largest lifted state dimension `m²q` the lifted check will assemble.
pub const LIFTED_STATE_LIMIT: usize = 1024;

/// Relative deviation above which the lifted check reports a divergence.
pub const EQUIVALENCE_THRESHOLD: f64 = 1e-9;

/// One sub-step (or one centralized step) of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub cycle: usize,
    pub substep: usize,
    /// Sensor index, cluster index in hybrid mode, 0 in centralized mode.
    pub unit: usize,
    pub x: Vec<f64>,
    pub innovation_sq: f64,
    pub alpha: f64,
    pub cum_comm_cost: f64,
}

pub fn trace_header(param_dim: usize) -> Vec<String> {
    let mut h = vec!["cycle".to_string(), "substep".into(), "sensor_or_cluster_id".into()];
    h.extend((1..=param_dim).map(|l| format!("x_hat_{l}")));
    h.extend(["innovation_sq".into(), "alpha".into(), "cum_comm_cost".into()]);
    h
}

pub fn write_trace(path: &Path, param_dim: usize, rows: &[TraceRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(trace_header(param_dim))?;
    for r in rows {
        let mut rec = vec![r.cycle.to_string(), r.substep.to_string(), r.unit.to_string()];
        rec.extend(r.x.iter().map(|v| v.to_string()));
        rec.extend([r.innovation_sq.to_string(), r.alpha.to_string(), r.cum_comm_cost.to_string()]);
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    pub mode: Mode,
    pub cycle: usize,
    pub sensor: Option<usize>,
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub mode: Mode,
    pub requested_cycles: usize,
    pub completed_cycles: usize,
    pub seed: u64,
    pub sensors: usize,
    /// Sensors, clusters or 1, depending on the mode.
    pub units: usize,
    pub ring: Vec<usize>,
    pub x_start: Vec<f64>,
    pub x_true: Vec<f64>,
    pub x_final: Vec<f64>,
    pub distance_to_truth: f64,
    pub total_comm_cost: f64,
    /// Trace column `innovation_sq` holds per-step squared innovations, a
    /// cheap proxy for the empirical cost.
    pub cost_column: &'static str,
    pub admissibility_warnings: Vec<String>,
    pub equivalence: Option<EquivalenceReport>,
    pub failure: Option<Failure>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub summary: RunSummary,
    pub rows: Vec<TraceRow>,
    pub lifted_rows: Option<Vec<TraceRow>>,
    pub wall_time: Duration,
}

enum Built {
    Gas(GasLeakModel),
    Affine(AffineFamily),
}

impl Built {
    fn family(&self) -> &dyn ModelFamily {
        match self {
            Built::Gas(m) => m,
            Built::Affine(m) => m,
        }
    }
}

struct Prepared {
    model: Built,
    deployment: Deployment,
    truth: Vec<f64>,
    /// Measurements of every physical sensor.
    trajectory: Trajectory,
}

fn region(cfg: &ExperimentConfig, size: Option<[f64; 2]>) -> [f64; 2] {
    size.unwrap_or(match &cfg.model {
        ModelConfig::Gasleak { scenario } => scenario.size,
        _ => [1.0, 1.0],
    })
}

fn model_sensor_count(model: &ModelConfig) -> Option<usize> {
    match model {
        ModelConfig::Gasleak { .. } => None,
        ModelConfig::RandomLinear { sensors, .. } => Some(*sensors),
        ModelConfig::Custom { sensors, .. } => Some(sensors.len()),
    }
}

fn build_deployment(cfg: &ExperimentConfig) -> Result<Deployment> {
    let dep = &cfg.deployment;
    let mut d = match &dep.layout {
        Layout::GridJittered {
            grid,
            extras_per_grid,
            jitter_radius,
            seed,
            size,
        } => deploy_grid_jittered(*grid, *extras_per_grid, *jitter_radius, region(cfg, *size), *seed)?,
        Layout::Uniform { seed, count, size } => {
            let m = count
                .or_else(|| model_sensor_count(&cfg.model))
                .ok_or_else(|| Error::Config("uniform layout for the gas-leak model needs a sensor count".into()))?;
            deploy_uniform(m, region(cfg, *size), *seed)?
        }
        Layout::Explicit { positions, clusters } => {
            let size = region(cfg, None);
            let clusters = clusters.as_ref().map(|cs| {
                cs.iter()
                    .map(|members| Cluster {
                        head: members.first().copied().unwrap_or(usize::MAX),
                        members: members.clone(),
                    })
                    .collect()
            });
            Deployment::new(positions.clone(), clusters, [size[0] / 2.0, size[1] / 2.0])?
        }
    };
    if let Some(ring) = &dep.ring {
        d = d.with_ring(ring.clone())?;
    }
    if let Some(c) = dep.fusion_center {
        d.fusion_center = c;
    }
    Ok(d)
}

fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    let deployment = build_deployment(cfg)?;
    let est = &cfg.estimator;
    let (model, truth, trajectory) = match &cfg.model {
        ModelConfig::Gasleak { scenario } => {
            let model = GasLeakModel::new(scenario.clone(), deployment.positions.clone())?;
            let run = simulate_leak(&model, est.cycles, est.seed)?;
            (Built::Gas(model), scenario.source.to_vec(), run.trajectory)
        }
        ModelConfig::RandomLinear {
            sensors,
            state_dim,
            obs_dim,
            param_dim,
            model_seed,
            truth,
        } => {
            let model = AffineFamily::random(
                crate::statespace::RandomFamilySpec {
                    sensors: *sensors,
                    state_dim: *state_dim,
                    obs_dim: *obs_dim,
                    param_dim: *param_dim,
                },
                *model_seed,
            );
            let traj = simulate_trajectory(&model, truth, est.cycles, est.seed)?;
            (Built::Affine(model), truth.clone(), traj)
        }
        ModelConfig::Custom {
            sensors,
            lower,
            upper,
            truth,
        } => {
            let model = config::build_custom(sensors, lower, upper)?;
            let traj = simulate_trajectory(&model, truth, est.cycles, est.seed)?;
            (Built::Affine(model), truth.clone(), traj)
        }
    };
    if deployment.sensor_count() != model.family().sensor_count() {
        return Err(Error::Config(format!(
            "deployment has {} sensors, model has {}",
            deployment.sensor_count(),
            model.family().sensor_count()
        )));
    }
    Ok(Prepared {
        model,
        deployment,
        truth,
        trajectory,
    })
}

fn admissibility_warnings(model: &dyn ModelFamily, points: &[(&str, &[f64])]) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for (label, x) in points {
        let report = check_model_admissible(model, x)?;
        let failing = |pick: fn(&crate::statespace::Admissibility) -> bool| -> Vec<usize> {
            report.iter().enumerate().filter(|(_, a)| !pick(a)).map(|(i, _)| i).collect()
        };
        for (what, list) in [
            ("not stable", failing(|a| a.stable)),
            ("not observable", failing(|a| a.observable)),
            ("not controllable", failing(|a| a.controllable)),
        ] {
            if !list.is_empty() {
                out.push(format!("at {label}: {what} for sensors {list:?}"));
            }
        }
    }
    Ok(out)
}

/// Stops a run at `cycle` (1-based) with `error`.
struct Aborted {
    cycle: usize,
    error: Error,
}

struct RunLog {
    rows: Vec<TraceRow>,
    x: DVector<f64>,
    completed: usize,
}

#[allow(clippy::too_many_arguments)]
fn run_incremental<S: PredictorSource>(
    sources: &[S],
    trajectory: &Trajectory,
    ring: &[usize],
    costs: &[f64],
    est: &EstimatorConfig,
    x_start: DVector<f64>,
    bounds: &ParamBox,
    log: &mut RunLog,
) -> std::result::Result<(), Aborted> {
    let schedule = crate::estimators::StepSchedule::new(est.mu, est.k0).map_err(|error| Aborted { cycle: 0, error })?;
    let mut state = IrpeState::new(x_start, sources, ring.to_vec())
        .map_err(|error| Aborted { cycle: 0, error })?
        .with_refresh_stride(est.refresh_stride);
    let mut cum = 0.0;
    for k in 0..est.cycles {
        let alpha = schedule.alpha(k as u64 + 1);
        let rec = irpe_cycle(&mut state, sources, &trajectory.slot(k), alpha, bounds)
            .map_err(|error| Aborted { cycle: k + 1, error })?;
        for (j, s) in rec.substeps.into_iter().enumerate() {
            cum += costs[j];
            log.rows.push(TraceRow {
                cycle: k + 1,
                substep: j + 1,
                unit: s.sensor,
                x: s.z.iter().copied().collect(),
                innovation_sq: s.innovation_sq,
                alpha,
                cum_comm_cost: cum,
            });
        }
        log.x = state.x.clone();
        log.completed = k + 1;
    }
    Ok(())
}

fn run_centralized(
    source: &dyn PredictorSource,
    trajectory: &Trajectory,
    cost: f64,
    est: &EstimatorConfig,
    x_start: DVector<f64>,
    bounds: &ParamBox,
    log: &mut RunLog,
) -> std::result::Result<(), Aborted> {
    let schedule = crate::estimators::StepSchedule::new(est.mu, est.k0).map_err(|error| Aborted { cycle: 0, error })?;
    let mut state = RpeState::new(x_start, source);
    for k in 0..est.cycles {
        let alpha = schedule.alpha(k as u64 + 1);
        let e = rpe_step(&mut state, source, &trajectory.measurements[0][k], alpha, bounds)
            .map_err(|error| Aborted { cycle: k + 1, error })?;
        log.rows.push(TraceRow {
            cycle: k + 1,
            substep: 1,
            unit: 0,
            x: state.x.iter().copied().collect(),
            innovation_sq: e,
            alpha,
            cum_comm_cost: cost * (k + 1) as f64,
        });
        log.x = state.x.clone();
        log.completed = k + 1;
    }
    Ok(())
}

/// Runs the configured experiment and writes its outputs to `cfg.output.dir`.
///
/// On an estimator failure the partial trace and a summary recording the
/// failing mode, cycle and sensor are still written before the error is returned.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    let started = Instant::now();
    let est = &cfg.estimator;
    if est.cycles == 0 {
        return Err(Error::Config("cycles must be at least 1".into()));
    }
    let prepared = prepare(cfg)?;
    let family = prepared.model.family();
    let bounds = family.feasible_box().clone();
    let d = family.param_dim();
    let x_start = est.x_start.clone().unwrap_or_else(|| bounds.centroid());
    if x_start.len() != d || !bounds.contains(&x_start) {
        return Err(Error::Config(format!("x_start {x_start:?} is not a point of the feasible box")));
    }
    if prepared.truth.len() != d || !bounds.contains(&prepared.truth) {
        return Err(Error::Config("true parameter is not a point of the feasible box".into()));
    }
    let warnings = admissibility_warnings(family, &[("x_start", &x_start), ("x_true", &prepared.truth)])?;

    let opts = DerivativeOptions::default();
    let dep = &prepared.deployment;
    let all: Vec<usize> = (0..dep.sensor_count()).collect();
    let x0 = DVector::from_vec(x_start.clone());
    let mut log = RunLog {
        rows: Vec::new(),
        x: x0.clone(),
        completed: 0,
    };
    let mut lifted_rows = None;
    let mut equivalence = None;

    let (units, ring, result) = match est.mode {
        Mode::Irpe | Mode::LiftedCheck => {
            let sources = SensorPredictor::all(family, opts);
            let costs = step_costs(dep, CommMode::Incremental)?;
            let result = run_incremental(&sources, &prepared.trajectory, &dep.ring, &costs, est, x0.clone(), &bounds, &mut log);
            if est.mode == Mode::LiftedCheck && result.is_ok() {
                let (rows, report) = lifted_check(family, &sources, &prepared.trajectory, dep, &costs, est, x0, &log.rows)?;
                lifted_rows = Some(rows);
                equivalence = Some(report);
            }
            (dep.sensor_count(), dep.ring.clone(), result)
        }
        Mode::Hybrid => {
            let Built::Gas(gas) = &prepared.model else {
                return Err(Error::Config("hybrid mode needs the gas-leak model".into()));
            };
            let groups = dep
                .cluster_groups()
                .ok_or_else(|| Error::Config("hybrid mode needs clusters in the deployment".into()))?;
            let stacked = cluster_stack(gas, &groups)?;
            let traj = prepared.trajectory.stack_groups(&groups);
            let ring = dep.cluster_ring().expect("clusters present");
            let costs = step_costs(dep, CommMode::Hybrid)?;
            let sources = SensorPredictor::all(&stacked, opts);
            let result = run_incremental(&sources, &traj, &ring, &costs, est, x0, &bounds, &mut log);
            (groups.len(), ring, result)
        }
        Mode::Centralized => {
            let traj = prepared.trajectory.stack_groups(std::slice::from_ref(&all));
            let cost = step_costs(dep, CommMode::Centralized)?[0];
            let result = match &prepared.model {
                Built::Gas(gas) => {
                    let stacked = cluster_stack(gas, std::slice::from_ref(&all))?;
                    let source = SensorPredictor::new(&stacked, 0, opts);
                    run_centralized(&source, &traj, cost, est, x0, &bounds, &mut log)
                }
                Built::Affine(model) => {
                    let parts = SensorPredictor::all(model, opts);
                    let joint = JointSource::new(&parts)?;
                    run_centralized(&joint, &traj, cost, est, x0, &bounds, &mut log)
                }
            };
            (1, vec![0], result)
        }
    };

    let failure = result.as_ref().err().map(|a| Failure {
        mode: est.mode,
        cycle: a.cycle,
        sensor: a.error.sensor(),
        kind: a.error.kind().to_string(),
        message: a.error.to_string(),
    });
    let x_final: Vec<f64> = log.x.iter().copied().collect();
    let summary = RunSummary {
        mode: est.mode,
        requested_cycles: est.cycles,
        completed_cycles: log.completed,
        seed: est.seed,
        sensors: dep.sensor_count(),
        units,
        ring,
        distance_to_truth: x_final
            .iter()
            .zip(&prepared.truth)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt(),
        x_start,
        x_true: prepared.truth.clone(),
        x_final,
        total_comm_cost: log.rows.last().map_or(0.0, |r| r.cum_comm_cost),
        cost_column: "innovation_sq is the squared innovation of each step",
        admissibility_warnings: warnings,
        equivalence,
        failure,
    };

    let dir = &cfg.output.dir;
    fs::create_dir_all(dir)?;
    write_trace(&dir.join(TRACE_FILE), d, &log.rows)?;
    if let Some(rows) = &lifted_rows {
        write_trace(&dir.join(LIFTED_TRACE_FILE), d, rows)?;
    }
    let mut json = serde_json::to_string_pretty(&summary)?;
    json.push('\n');
    fs::write(dir.join(SUMMARY_FILE), json)?;

    if let Err(a) = result {
        return Err(a.error);
    }
    Ok(RunOutcome {
        summary,
        rows: log.rows,
        lifted_rows,
        wall_time: started.elapsed(),
    })
}

#[allow(clippy::too_many_arguments)]
fn lifted_check(
    family: &dyn ModelFamily,
    sources: &[SensorPredictor<'_>],
    trajectory: &Trajectory,
    dep: &Deployment,
    costs: &[f64],
    est: &EstimatorConfig,
    x_start: DVector<f64>,
    irpe_rows: &[TraceRow],
) -> Result<(Vec<TraceRow>, EquivalenceReport)> {
    let m = sources.len();
    let lifted_dim = m * m * family.state_dim();
    if lifted_dim > LIFTED_STATE_LIMIT {
        return Err(Error::Config(format!(
            "lifted state dimension {lifted_dim} exceeds {LIFTED_STATE_LIMIT}; use a smaller instance"
        )));
    }
    let ring = &dep.ring;
    let ordered: Vec<_> = ring.iter().map(|&i| sources[i]).collect();
    let initial: Vec<_> = ordered
        .iter()
        .map(|s| crate::gradients::PredictorGradientState::zeros(s.state_dim(), s.param_dim(), &s.observation()))
        .collect();
    let slots: Vec<Vec<DVector<f64>>> = (0..est.cycles)
        .map(|k| ring.iter().map(|&i| trajectory.measurements[i][k].clone()).collect())
        .collect();
    let schedule = crate::estimators::StepSchedule::new(est.mu, est.k0)?;
    let lifted = lifted_rpe_run(&ordered, &slots, schedule, x_start, &initial, family.feasible_box())?;
    let irpe: Vec<DVector<f64>> = irpe_rows.iter().map(|r| DVector::from_vec(r.x.clone())).collect();
    let report = equivalence_report(&irpe, &lifted.iterates, EQUIVALENCE_THRESHOLD)?;
    let mut cum = 0.0;
    let rows = lifted
        .iterates
        .iter()
        .zip(&lifted.innovation_sq)
        .enumerate()
        .map(|(n, (x, &e))| {
            let (k, j) = (n / m, n % m);
            cum += costs[j];
            TraceRow {
                cycle: k + 1,
                substep: j + 1,
                unit: ring[j],
                x: x.iter().copied().collect(),
                innovation_sq: e,
                alpha: schedule.alpha(k as u64 + 1),
                cum_comm_cost: cum,
            }
        })
        .collect();
    Ok((rows, report))
}
