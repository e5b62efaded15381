//! Experiment configuration.
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "name": "grid21-ordering",
//!   "agent": ["gp_vi_mfrl", "gp_vi", "rmax_mfrl", "rmax"],
//!   "chain": "grid21",
//!   "seeds": [0, 1, 2, 3, 4],
//!   "out_dir": "out/grid21-ordering",
//!   "gp_vi": { "sigma_th": 0.1 },
//!   "sweep": { "slip_prob": [0.0, 0.1, 0.2, 0.3] }
//! }
//! ```
//!
//! Relative paths (`chain` files and `out_dir`) resolve against the directory
//! holding the config file.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize};

use crate::agent::Budget;
use crate::baselines::{RMaxParams, DEFAULT_SIM_SAMPLES};
use crate::env::{ChainSpec, FidelityChain, LevelSpec};
use crate::gp_vi::GpViParams;
use crate::gpq::GpqParams;

use super::HarnessError;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    GpViMfrl,
    GpqMfrl,
    Rmax,
    RmaxMfrl,
    GpVi,
    GpqDirect,
    Frozen,
    Transferred,
}

/// Which parameter block an agent reads.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Family {
    GpVi,
    Gpq,
    RMax,
}

impl AgentKind {
    pub const ALL: [AgentKind; 8] = [
        AgentKind::GpViMfrl,
        AgentKind::GpqMfrl,
        AgentKind::Rmax,
        AgentKind::RmaxMfrl,
        AgentKind::GpVi,
        AgentKind::GpqDirect,
        AgentKind::Frozen,
        AgentKind::Transferred,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            AgentKind::GpViMfrl => "gp_vi_mfrl",
            AgentKind::GpqMfrl => "gpq_mfrl",
            AgentKind::Rmax => "rmax",
            AgentKind::RmaxMfrl => "rmax_mfrl",
            AgentKind::GpVi => "gp_vi",
            AgentKind::GpqDirect => "gpq_direct",
            AgentKind::Frozen => "frozen",
            AgentKind::Transferred => "transferred",
        }
    }

    pub fn family(&self) -> Family {
        match self {
            AgentKind::GpViMfrl | AgentKind::GpVi => Family::GpVi,
            AgentKind::GpqMfrl | AgentKind::GpqDirect | AgentKind::Frozen | AgentKind::Transferred => Family::Gpq,
            AgentKind::Rmax | AgentKind::RmaxMfrl => Family::RMax,
        }
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for AgentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AgentKind::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| format!("unknown agent {s:?}"))
    }
}

/// A built-in chain name, a path to a chain file, or an inline chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ChainRef {
    Named(String),
    Inline(ChainSpec),
}

/// Values to sweep; the run grid is their cartesian product.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepAxes {
    /// Slip probability of the lowest level.
    pub slip_prob: Vec<f64>,
    pub sigma_th: Vec<f64>,
    pub sigma_sum_th: Vec<f64>,
}

impl SweepAxes {
    pub fn is_empty(&self) -> bool {
        self.slip_prob.is_empty() && self.sigma_th.is_empty() && self.sigma_sum_th.is_empty()
    }

    pub fn points(&self) -> Vec<SweepPoint> {
        let axis = |v: &[f64]| -> Vec<Option<f64>> {
            if v.is_empty() {
                vec![None]
            } else {
                v.iter().copied().map(Some).collect()
            }
        };
        let mut out = Vec::new();
        for slip_prob in axis(&self.slip_prob) {
            for sigma_th in axis(&self.sigma_th) {
                for sigma_sum_th in axis(&self.sigma_sum_th) {
                    out.push(SweepPoint {
                        slip_prob,
                        sigma_th,
                        sigma_sum_th,
                    });
                }
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SweepPoint {
    pub slip_prob: Option<f64>,
    pub sigma_th: Option<f64>,
    pub sigma_sum_th: Option<f64>,
}

impl SweepPoint {
    /// `base` when nothing is swept, else `axis=value` pairs joined by `;`.
    pub fn label(&self) -> String {
        let parts: Vec<String> = [
            ("slip_prob", self.slip_prob),
            ("sigma_th", self.sigma_th),
            ("sigma_sum_th", self.sigma_sum_th),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.map(|v| format!("{k}={v}")))
        .collect();
        if parts.is_empty() {
            "base".into()
        } else {
            parts.join(";")
        }
    }
}

/// How traces are cut into epochs for the per-epoch sample counts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpochRule {
    /// Reset to reset, at any level.
    #[default]
    Episode,
    /// Fixed windows of this many steps.
    Steps(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Targets {
    /// The start value counts as converged once it stays within this
    /// fraction of the true optimum.
    pub value_fraction: f64,
    /// Average cumulative top-level reward the model-free agents aim for.
    pub avg_reward: f64,
}

impl Default for Targets {
    fn default() -> Self {
        Self {
            value_fraction: 0.9,
            avg_reward: 28.0,
        }
    }
}

fn one_or_many<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<AgentKind>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        One(AgentKind),
        Many(Vec<AgentKind>),
    }
    Ok(match OneOrMany::deserialize(d)? {
        OneOrMany::One(a) => vec![a],
        OneOrMany::Many(v) => v,
    })
}

fn default_sim_samples() -> usize {
    DEFAULT_SIM_SAMPLES
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub name: String,
    #[serde(deserialize_with = "one_or_many")]
    pub agent: Vec<AgentKind>,
    pub chain: ChainRef,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    #[serde(default)]
    pub workers: Option<usize>,
    /// Replaces the budget of every parameter block when set.
    #[serde(default)]
    pub budget: Option<Budget>,
    #[serde(default)]
    pub gp_vi: GpViParams,
    #[serde(default)]
    pub gpq: GpqParams,
    #[serde(default)]
    pub rmax: RMaxParams,
    /// Lowest-level samples for the frozen and transferred policies.
    #[serde(default = "default_sim_samples")]
    pub sim_samples: usize,
    #[serde(default)]
    pub sweep: SweepAxes,
    #[serde(default)]
    pub epoch: EpochRule,
    #[serde(default)]
    pub targets: Targets,
    #[serde(default = "yes")]
    pub write_traces: bool,
    #[serde(default)]
    pub heatmaps: bool,
    #[serde(default)]
    pub snapshots: bool,
    /// Directory relative paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

/// Command-line overrides applied after loading.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seeds: Option<Vec<u64>>,
    pub workers: Option<usize>,
    pub out_dir: Option<PathBuf>,
    pub budget_sigma2: Option<usize>,
}

/// Parses `3`, `0..5` or `1,4,9`.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>, String> {
    let text = text.trim();
    let num = |s: &str| s.trim().parse::<u64>().map_err(|e| format!("bad seed {s:?}: {e}"));
    if let Some((a, b)) = text.split_once("..") {
        let (a, b) = (num(a)?, num(b)?);
        if a >= b {
            return Err(format!("empty seed range {text:?}"));
        }
        return Ok((a..b).collect());
    }
    text.split(',').map(num).collect()
}

/// 1-based line of the first occurrence of `"key"` in `text`.
fn line_of(text: &str, key: &str) -> Option<usize> {
    let needle = format!("\"{key}\"");
    text.lines().position(|l| l.contains(&needle)).map(|i| i + 1)
}

impl ExperimentConfig {
    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self, HarnessError> {
        let mut cfg: Self = serde_json::from_str(text).map_err(|e| HarnessError::Config {
            line: Some(e.line()),
            message: e.to_string(),
        })?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.validate().map_err(|(key, message)| HarnessError::Config {
            line: line_of(text, key),
            message: format!("{key}: {message}"),
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_json(&text, &base)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<(), HarnessError> {
        if let Some(seeds) = &o.seeds {
            self.seeds = seeds.clone();
        }
        if let Some(w) = o.workers {
            self.workers = Some(w);
        }
        if let Some(out) = &o.out_dir {
            self.out_dir = out.clone();
        }
        if let Some(n) = o.budget_sigma2 {
            self.gp_vi.budget.max_top_samples = Some(n);
            self.gpq.budget.max_top_samples = Some(n);
            self.rmax.budget.max_top_samples = Some(n);
            if let Some(b) = &mut self.budget {
                b.max_top_samples = Some(n);
            }
        }
        self.validate().map_err(|(key, message)| HarnessError::Config {
            line: None,
            message: format!("{key}: {message}"),
        })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn out_path(&self) -> PathBuf {
        self.resolve(&self.out_dir)
    }

    pub fn chain_spec(&self) -> Result<ChainSpec, HarnessError> {
        match &self.chain {
            ChainRef::Inline(spec) => Ok(spec.clone()),
            ChainRef::Named(name) => match ChainSpec::builtin(name) {
                Some(spec) => Ok(spec),
                None => Ok(ChainSpec::load(&self.resolve(Path::new(name)))?),
            },
        }
    }

    /// The chain at one sweep point.
    pub fn chain_at(&self, point: &SweepPoint) -> Result<FidelityChain, HarnessError> {
        let mut spec = self.chain_spec()?;
        if let Some(p) = point.slip_prob {
            match spec.levels.first_mut() {
                Some(LevelSpec::Grid(g)) => g.slip_prob = p,
                _ => {
                    return Err(HarnessError::Config {
                        line: None,
                        message: "sweep.slip_prob: lowest level is not a grid".into(),
                    })
                }
            }
        }
        Ok(spec.build()?)
    }

    pub fn gp_vi_at(&self, point: &SweepPoint) -> GpViParams {
        let mut p = self.gp_vi.clone();
        if let Some(b) = self.budget {
            p.budget = b;
        }
        if let Some(v) = point.sigma_th {
            p.sigma_th = v;
        }
        if let Some(v) = point.sigma_sum_th {
            p.sigma_sum_th = v;
        }
        p
    }

    pub fn gpq_at(&self, point: &SweepPoint) -> GpqParams {
        let mut p = self.gpq.clone();
        if let Some(b) = self.budget {
            p.budget = b;
        }
        if let Some(v) = point.sigma_th {
            p.sigma_th = v;
        }
        if let Some(v) = point.sigma_sum_th {
            p.sigma_sum_th = v;
        }
        p
    }

    pub fn rmax_params(&self) -> RMaxParams {
        let mut p = self.rmax.clone();
        if let Some(b) = self.budget {
            p.budget = b;
        }
        p
    }

    /// Range checks that need no file access. Errors name the offending key.
    fn validate(&self) -> Result<(), (&'static str, String)> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return Err((
                "schema_version",
                format!("unsupported version {} (expected {CONFIG_SCHEMA_VERSION})", self.schema_version),
            ));
        }
        if self.name.trim().is_empty() {
            return Err(("name", "must not be empty".into()));
        }
        if self.agent.is_empty() {
            return Err(("agent", "at least one agent is required".into()));
        }
        if self.seeds.is_empty() {
            return Err(("seeds", "seed list is empty".into()));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(("seeds", "duplicate seed".into()));
        }
        if self.workers == Some(0) {
            return Err(("workers", "must be at least 1".into()));
        }
        let budgets = [
            ("budget", self.budget),
            ("gp_vi", Some(self.gp_vi.budget)),
            ("gpq", Some(self.gpq.budget)),
            ("rmax", Some(self.rmax.budget)),
        ];
        for (key, b) in budgets {
            if let Some(b) = b {
                if b.max_total_samples == 0 || b.max_top_samples == Some(0) {
                    return Err((key, "budgets must be positive".into()));
                }
            }
        }
        let switching = [
            ("gp_vi", self.gp_vi.sigma_th, self.gp_vi.sigma_sum_th, self.gp_vi.window_len),
            ("gpq", self.gpq.sigma_th, self.gpq.sigma_sum_th, self.gpq.window_len),
        ];
        for (key, th, sum, window) in switching {
            if !(th > 0.0) || !(sum > 0.0) {
                return Err((key, "sigma_th and sigma_sum_th must be positive".into()));
            }
            if window == 0 {
                return Err((key, "window_len must be at least 1".into()));
            }
        }
        for (key, eps) in [("gp_vi", self.gp_vi.epsilon), ("gpq", self.gpq.epsilon)] {
            if !(0.0..=1.0).contains(&eps) {
                return Err((key, format!("epsilon {eps} outside [0, 1]")));
            }
        }
        for (key, g) in [("gp_vi", self.gp_vi.gamma), ("gpq", self.gpq.gamma), ("rmax", self.rmax.gamma)] {
            if !(0.0..1.0).contains(&g) {
                return Err((key, format!("gamma {g} outside [0, 1)")));
            }
        }
        if self.rmax.m == 0 {
            return Err(("rmax", "m must be at least 1".into()));
        }
        if self.sweep.slip_prob.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(("slip_prob", "values must lie in [0, 1]".into()));
        }
        if self.sweep.sigma_th.iter().chain(&self.sweep.sigma_sum_th).any(|v| !(*v > 0.0)) {
            return Err(("sweep", "thresholds must be positive".into()));
        }
        if self.epoch == EpochRule::Steps(0) {
            return Err(("epoch", "step windows must be at least 1".into()));
        }
        if !(self.targets.value_fraction > 0.0 && self.targets.value_fraction <= 1.0) {
            return Err(("value_fraction", "must lie in (0, 1]".into()));
        }
        Ok(())
    }

    /// Checks that need the chain: files exist, every sweep point builds and
    /// every agent can run on it.
    pub fn check(&self) -> Result<(), HarnessError> {
        for point in self.sweep.points() {
            let chain = self.chain_at(&point)?;
            for agent in &self.agent {
                let grid_only = matches!(agent.family(), Family::GpVi | Family::RMax);
                if grid_only && chain.levels().iter().any(|e| e.layout().is_none()) {
                    return Err(HarnessError::Config {
                        line: None,
                        message: format!("agent {agent} needs grid-based levels"),
                    });
                }
                if agent.family() == Family::Gpq && self.gpq.kernel.dim() != chain.state_dim() + 1 {
                    return Err(HarnessError::Config {
                        line: None,
                        message: format!(
                            "gpq.kernel has {} lengthscales, chain needs {}",
                            self.gpq.kernel.dim(),
                            chain.state_dim() + 1
                        ),
                    });
                }
                if *agent == AgentKind::GpViMfrl && self.gp_vi.kernels.len() < chain.depth() {
                    return Err(HarnessError::Config {
                        line: None,
                        message: format!("gp_vi.kernels has {} entries, chain has {} levels", self.gp_vi.kernels.len(), chain.depth()),
                    });
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> &'static str {
        r#"{
  "schema_version": 1,
  "name": "t",
  "agent": "rmax",
  "chain": "grid5",
  "seeds": [0],
  "out_dir": "out"
}"#
    }

    #[test]
    fn minimal_config_parses() {
        let cfg = ExperimentConfig::from_json(minimal(), Path::new("/tmp")).unwrap();
        assert_eq!(cfg.agent, vec![AgentKind::Rmax]);
        assert_eq!(cfg.out_path(), PathBuf::from("/tmp/out"));
        assert_eq!(cfg.sim_samples, DEFAULT_SIM_SAMPLES);
        cfg.check().unwrap();
    }

    #[test]
    fn unknown_fields_are_rejected_with_a_line() {
        let text = minimal().replace("\"seeds\"", "\"sedes\": [1],\n  \"seeds\"");
        match ExperimentConfig::from_json(&text, Path::new(".")) {
            Err(HarnessError::Config { line: Some(6), .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn range_errors_point_at_the_key() {
        let text = minimal().replace("[0]", "[]");
        match ExperimentConfig::from_json(&text, Path::new(".")) {
            Err(HarnessError::Config { line: Some(6), message }) => assert!(message.contains("seeds")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn seed_syntax() {
        assert_eq!(parse_seeds("0..3").unwrap(), vec![0, 1, 2]);
        assert_eq!(parse_seeds("4, 7").unwrap(), vec![4, 7]);
        assert_eq!(parse_seeds("9").unwrap(), vec![9]);
        assert!(parse_seeds("3..3").is_err());
        assert!(parse_seeds("x").is_err());
    }

    #[test]
    fn sweep_is_a_cartesian_product() {
        let axes = SweepAxes {
            slip_prob: vec![0.0, 0.1],
            sigma_th: vec![0.1, 0.2, 0.3],
            sigma_sum_th: vec![],
        };
        let points = axes.points();
        assert_eq!(points.len(), 6);
        assert_eq!(points[1].label(), "slip_prob=0;sigma_th=0.2");
        assert_eq!(SweepPoint::default().label(), "base");
    }

    #[test]
    fn slip_sweep_touches_only_the_lowest_level() {
        let cfg = ExperimentConfig::from_json(minimal(), Path::new(".")).unwrap();
        let point = SweepPoint {
            slip_prob: Some(0.3),
            ..SweepPoint::default()
        };
        let chain = cfg.chain_at(&point).unwrap();
        let slip = |i: usize| match chain.level(i) {
            crate::env::Env::Grid(g) => g.slip_prob(),
            _ => unreachable!(),
        };
        assert_eq!((slip(0), slip(1)), (0.3, 0.0));
    }

    #[test]
    fn budget_override_reaches_every_block() {
        let mut cfg = ExperimentConfig::from_json(minimal(), Path::new(".")).unwrap();
        cfg.apply(&Overrides {
            budget_sigma2: Some(77),
            ..Overrides::default()
        })
        .unwrap();
        let p = SweepPoint::default();
        assert_eq!(cfg.gp_vi_at(&p).budget.max_top_samples, Some(77));
        assert_eq!(cfg.gpq_at(&p).budget.max_top_samples, Some(77));
        assert_eq!(cfg.rmax_params().budget.max_top_samples, Some(77));
    }
}
