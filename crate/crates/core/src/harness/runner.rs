//! Expands a config into runs, executes them and writes the outputs.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::agent::{AgentError, AgentTrace};
use crate::baselines::{self, RMaxOutcome};
use crate::env::FidelityChain;
use crate::gp::GpSnapshot;
use crate::gp_vi::{self, GpViOutcome};
use crate::gpq::{self, GpqOutcome};
use crate::mdp::value_iteration;

use super::config::{AgentKind, ExperimentConfig, SweepPoint};
use super::metrics::{greedy_path, path_means, trace_series, MetricRow};
use super::output::{
    heatmap_csv, metrics_csv, parse_metrics, parse_runs, runs_csv, summarize, trace_csv, write_atomic, RunStatus,
    Summary,
};
use super::HarnessError;

/// `run` executes the base point only; `sweep` the full grid of sweep axes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Run,
    Sweep,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunSpec {
    pub agent: AgentKind,
    pub point: SweepPoint,
    pub seed: u64,
}

impl RunSpec {
    pub fn dir(&self, out: &Path) -> PathBuf {
        out.join("runs")
            .join(self.agent.as_str())
            .join(self.point.label())
            .join(format!("seed{}", self.seed))
    }
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub spec: RunSpec,
    pub status: RunStatus,
    pub rows: Vec<MetricRow>,
}

/// Every (sweep point × agent × seed) combination, in output order.
pub fn plan(cfg: &ExperimentConfig, mode: Mode) -> Result<Vec<RunSpec>, HarnessError> {
    let points = match mode {
        Mode::Run => vec![SweepPoint::default()],
        Mode::Sweep if cfg.sweep.is_empty() => {
            return Err(HarnessError::Config {
                line: None,
                message: "sweep: no sweep axes configured".into(),
            })
        }
        Mode::Sweep => cfg.sweep.points(),
    };
    let mut out = Vec::new();
    for point in points {
        for &agent in &cfg.agent {
            for &seed in &cfg.seeds {
                out.push(RunSpec { agent, point, seed });
            }
        }
    }
    Ok(out)
}

/// Result of one agent run, whichever family it belongs to.
pub enum Outcome {
    GpVi(GpViOutcome),
    Gpq(GpqOutcome),
    RMax(RMaxOutcome),
}

impl Outcome {
    pub fn trace(&self) -> &AgentTrace {
        match self {
            Outcome::GpVi(o) => &o.trace,
            Outcome::Gpq(o) => &o.trace,
            Outcome::RMax(o) => &o.trace,
        }
    }
}

/// Runs one agent without touching the filesystem.
pub fn run_agent(cfg: &ExperimentConfig, spec: &RunSpec, chain: &FidelityChain) -> Result<Outcome, AgentError> {
    let point = &spec.point;
    let seed = spec.seed;
    Ok(match spec.agent {
        AgentKind::GpViMfrl => Outcome::GpVi(gp_vi::run(chain, &cfg.gp_vi_at(point), seed)?),
        AgentKind::GpVi => {
            let p = cfg.gp_vi_at(point);
            let p = if p.kernels.len() == 1 { p } else { baselines::gp_vi_direct_params(&p) };
            Outcome::GpVi(baselines::gp_vi_direct(chain, &p, seed)?)
        }
        AgentKind::GpqMfrl => Outcome::Gpq(gpq::run(chain, &cfg.gpq_at(point), seed)?),
        AgentKind::GpqDirect => Outcome::Gpq(baselines::gpq_direct(chain, &cfg.gpq_at(point), seed)?),
        AgentKind::Frozen => Outcome::Gpq(baselines::frozen_policy(chain, &cfg.gpq_at(point), cfg.sim_samples, seed)?),
        AgentKind::Transferred => {
            Outcome::Gpq(baselines::transferred_policy(chain, &cfg.gpq_at(point), cfg.sim_samples, seed)?)
        }
        AgentKind::RmaxMfrl => Outcome::RMax(baselines::rmax_mfrl(chain, &cfg.rmax_params(), seed)?),
        AgentKind::Rmax => Outcome::RMax(baselines::rmax(chain, &cfg.rmax_params(), seed)?),
    })
}

/// Optimal start value of the top level under its reference model.
pub fn optimal_start_value(chain: &FidelityChain, gamma: f64) -> Option<f64> {
    let top = chain.level(chain.depth() - 1);
    let layout = top.layout()?;
    let mdp = top.reference_mdp(gamma)?.ok()?;
    let q = value_iteration(&mdp, 1e-9).ok()?;
    Some(q.state_value(layout.index(layout.start())))
}

fn gamma_of(cfg: &ExperimentConfig, spec: &RunSpec) -> f64 {
    match spec.agent.family() {
        super::config::Family::GpVi => cfg.gp_vi.gamma,
        super::config::Family::Gpq => cfg.gpq.gamma,
        super::config::Family::RMax => cfg.rmax.gamma,
    }
}

/// Per-run files plus the metric points of one run.
fn collect(
    cfg: &ExperimentConfig,
    spec: &RunSpec,
    chain: &FidelityChain,
    outcome: &Outcome,
    dir: &Path,
) -> Result<Vec<(String, f64, f64)>, HarnessError> {
    let trace = outcome.trace();
    let v_star = optimal_start_value(chain, gamma_of(cfg, spec));
    let mut points = trace_series(trace, cfg.epoch, &cfg.targets, v_star);
    if cfg.write_traces {
        write_atomic(&dir.join("trace.csv"), &trace_csv(trace)?)?;
    }
    match outcome {
        Outcome::GpVi(o) => {
            let top = o.models.len() - 1;
            let offset = chain.depth() - o.models.len();
            for (i, model) in o.models.iter().enumerate() {
                let layout = chain.level(offset + i).layout().expect("grid level");
                let heat = gp_vi::variance_heatmap(model, &o.q[i], layout)?;
                if i == top {
                    let (on, off) = path_means(&heat, layout, &greedy_path(layout, &o.q[i]));
                    points.push(("heatmap_path_mean".into(), 0.0, on));
                    points.push(("heatmap_off_path_mean".into(), 0.0, off));
                }
                if cfg.heatmaps {
                    write_atomic(&dir.join(format!("heatmap_l{}.csv", offset + i + 1)), &heatmap_csv(&heat, layout.width())?)?;
                }
                if cfg.snapshots {
                    for axis in 0..2 {
                        let mut buf = Vec::new();
                        GpSnapshot::of(model.gp(axis)).write_to(&mut buf)?;
                        write_atomic(&dir.join(format!("gp_l{}_axis{axis}.json", offset + i + 1)), &buf)?;
                    }
                }
            }
        }
        Outcome::Gpq(o) if cfg.snapshots => {
            let offset = chain.depth() - o.learners.len();
            for (i, learner) in o.learners.iter().enumerate() {
                let mut buf = Vec::new();
                GpSnapshot::of(learner.gp()).write_to(&mut buf)?;
                write_atomic(&dir.join(format!("qgp_l{}.json", offset + i + 1)), &buf)?;
            }
        }
        _ => {}
    }
    Ok(points)
}

/// Executes one run, recording failures (including panics) in its status.
pub fn execute(cfg: &ExperimentConfig, spec: &RunSpec, out: &Path) -> RunResult {
    let dir = spec.dir(out);
    let attempt = || -> Result<(Vec<(String, f64, f64)>, AgentTrace), HarnessError> {
        let chain = cfg.chain_at(&spec.point)?;
        let outcome = run_agent(cfg, spec, &chain)?;
        let points = collect(cfg, spec, &chain, &outcome, &dir)?;
        let trace = match outcome {
            Outcome::GpVi(o) => o.trace,
            Outcome::Gpq(o) => o.trace,
            Outcome::RMax(o) => o.trace,
        };
        Ok((points, trace))
    };
    let result = catch_unwind(AssertUnwindSafe(attempt)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into());
        Err(HarnessError::Run(msg))
    });
    let mut status = RunStatus {
        agent: spec.agent.to_string(),
        point: spec.point.label(),
        seed: spec.seed,
        status: "ok".into(),
        stop: String::new(),
        samples_total: 0,
        samples_top: 0,
        error: String::new(),
    };
    let rows = match result {
        Ok((points, trace)) => {
            status.stop = trace.stop.map_or("", |s| s.as_str()).to_string();
            status.samples_total = trace.records.len();
            status.samples_top = trace.top_samples();
            points
                .into_iter()
                .map(|(series, x, y)| MetricRow {
                    agent: status.agent.clone(),
                    point: status.point.clone(),
                    series,
                    seed: spec.seed,
                    x,
                    y,
                })
                .collect()
        }
        Err(e) => {
            status.status = "failed".into();
            status.error = e.to_string();
            Vec::new()
        }
    };
    RunResult {
        spec: spec.clone(),
        status,
        rows,
    }
}

/// Runs every planned combination on `cfg.workers` threads, then writes
/// metrics.csv, runs.csv and summary.json in one pass.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    mode: Mode,
    progress: &(dyn Fn(&RunResult) + Sync),
) -> Result<Summary, HarnessError> {
    cfg.check()?;
    let specs = plan(cfg, mode)?;
    let out = cfg.out_path();
    write_atomic(&out.join("config.json"), cfg.to_json().as_bytes())?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers.unwrap_or(0))
        .build()
        .map_err(|e| HarnessError::Run(e.to_string()))?;
    let results: Vec<RunResult> = pool.install(|| {
        specs
            .par_iter()
            .map(|spec| {
                let r = execute(cfg, spec, &out);
                progress(&r);
                r
            })
            .collect()
    });
    let rows: Vec<MetricRow> = results.iter().flat_map(|r| r.rows.iter().cloned()).collect();
    let runs: Vec<RunStatus> = results.into_iter().map(|r| r.status).collect();
    write_atomic(&out.join("metrics.csv"), &metrics_csv(&rows)?)?;
    write_atomic(&out.join("runs.csv"), &runs_csv(&runs)?)?;
    report(&out)
}

/// Recomputes summary.json from metrics.csv and runs.csv.
pub fn report(out: &Path) -> Result<Summary, HarnessError> {
    let read = |name: &str| {
        let p = out.join(name);
        std::fs::read(&p).map_err(|e| HarnessError::Io(format!("{}: {e}", p.display())))
    };
    let rows = parse_metrics(&read("metrics.csv")?)?;
    let runs = parse_runs(&read("runs.csv")?)?;
    let summary = summarize(&rows, &runs);
    write_atomic(&out.join("summary.json"), summary.to_json().as_bytes())?;
    Ok(summary)
}
