//! Pieces shared by every agent: the level-switching rule, step budgets and
//! the per-run trace.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::EnvError;
use crate::gp::GpError;
use crate::mdp::MdpError;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Gp(#[from] GpError),
    #[error(transparent)]
    Mdp(#[from] MdpError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("agent configuration: {0}")]
    Config(String),
}

/// Descend/ascend rule driven by predictive standard deviations.
#[derive(Clone, Debug)]
pub struct SwitchController {
    sigma_th: f64,
    sigma_sum_th: f64,
    window_len: usize,
    window: VecDeque<f64>,
}

impl SwitchController {
    pub fn new(sigma_th: f64, sigma_sum_th: f64, window_len: usize) -> Self {
        Self {
            sigma_th,
            sigma_sum_th,
            window_len: window_len.max(1),
            window: VecDeque::with_capacity(window_len.max(1)),
        }
    }

    pub fn sigma_th(&self) -> f64 {
        self.sigma_th
    }

    pub fn sigma_sum_th(&self) -> f64 {
        self.sigma_sum_th
    }

    pub fn window_len(&self) -> usize {
        self.window_len
    }

    pub fn window(&self) -> impl Iterator<Item = f64> + '_ {
        self.window.iter().copied()
    }

    /// Records the σ of the step just taken, dropping the oldest entry once
    /// the window is full.
    pub fn push(&mut self, sigma: f64) {
        if self.window.len() == self.window_len {
            self.window.pop_front();
        }
        self.window.push_back(sigma);
    }

    pub fn clear(&mut self) {
        self.window.clear();
    }

    /// Switch down when the level below is not confident about the pair.
    pub fn should_descend(&self, sigma_below: f64) -> bool {
        sigma_below >= self.sigma_th
    }

    /// Switch up once a full window sums to at most σ_th^sum.
    pub fn should_ascend(&self) -> bool {
        self.window.len() == self.window_len && self.window.iter().sum::<f64>() <= self.sigma_sum_th
    }
}

/// Sample limits for a run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Budget {
    /// Samples over all levels.
    pub max_total_samples: usize,
    /// Samples at the highest-fidelity level.
    #[serde(default)]
    pub max_top_samples: Option<usize>,
}

impl Default for Budget {
    fn default() -> Self {
        Self {
            max_total_samples: 20_000,
            max_top_samples: None,
        }
    }
}

impl Budget {
    pub fn exhausted(&self, total: usize, top: usize) -> Option<StopReason> {
        if total >= self.max_total_samples {
            Some(StopReason::TotalBudget)
        } else if self.max_top_samples.is_some_and(|m| top >= m) {
            Some(StopReason::TopBudget)
        } else {
            None
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    TotalBudget,
    TopBudget,
}

impl StopReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            StopReason::Converged => "converged",
            StopReason::TotalBudget => "total_budget",
            StopReason::TopBudget => "top_budget",
        }
    }
}

/// One environment step as seen by the agent.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRecord {
    /// Step index over all levels, from 0.
    pub t: usize,
    /// Fidelity level, 1-based (1 is the lowest fidelity).
    pub level: usize,
    pub state: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    /// Predictive standard deviation of the acting level at `(state, action)`
    /// before the step was learned from.
    pub sigma: f64,
    pub terminal: bool,
}

/// Append-only record of a run plus named `(x, y)` series an agent wants
/// reported (for example the start-state value against top-level samples).
#[derive(Clone, Debug, Default)]
pub struct AgentTrace {
    pub records: Vec<TraceRecord>,
    pub series: BTreeMap<String, Vec<(f64, f64)>>,
    pub stop: Option<StopReason>,
    pub depth: usize,
}

impl AgentTrace {
    pub fn new(depth: usize) -> Self {
        Self {
            depth,
            ..Self::default()
        }
    }

    pub fn push_point(&mut self, series: &str, x: f64, y: f64) {
        self.series.entry(series.to_string()).or_default().push((x, y));
    }

    pub fn samples_at(&self, level: usize) -> usize {
        self.records.iter().filter(|r| r.level == level).count()
    }

    pub fn top_samples(&self) -> usize {
        self.samples_at(self.depth)
    }
}

/// Shared relative-change test for value-function convergence.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Convergence {
    /// Top-level samples between checks.
    pub check_every: usize,
    /// Largest relative L1 change of the value function that counts as
    /// unchanged.
    pub rel_tol: f64,
    /// Consecutive unchanged checks required to stop.
    pub patience: usize,
}

impl Default for Convergence {
    fn default() -> Self {
        Self {
            check_every: 50,
            rel_tol: 0.1,
            patience: 3,
        }
    }
}

/// Tracks successive value-function snapshots for [`Convergence`].
#[derive(Clone, Debug, Default)]
pub struct ConvergenceMonitor {
    last: Option<Vec<f64>>,
    streak: usize,
}

impl ConvergenceMonitor {
    /// Feeds one snapshot; returns true once the criterion is met.
    pub fn observe(&mut self, rule: &Convergence, values: Vec<f64>) -> bool {
        if let Some(prev) = &self.last {
            let diff: f64 = prev.iter().zip(&values).map(|(a, b)| (a - b).abs()).sum();
            let scale: f64 = prev.iter().map(|a| a.abs()).sum();
            let rel = if scale > 0.0 { diff / scale } else { f64::INFINITY };
            if rel <= rule.rel_tol {
                self.streak += 1;
            } else {
                self.streak = 0;
            }
        }
        self.last = Some(values);
        self.streak >= rule.patience
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ascend_needs_a_full_window() {
        let mut c = SwitchController::new(0.1, 0.4, 5);
        for _ in 0..4 {
            c.push(0.0);
            assert!(!c.should_ascend());
        }
        c.push(0.0);
        assert!(c.should_ascend());
        c.clear();
        assert!(!c.should_ascend());
    }

    #[test]
    fn ascend_threshold_arithmetic() {
        let mut c = SwitchController::new(0.1, 0.4, 5);
        for _ in 0..5 {
            c.push(0.05);
        }
        assert!(c.should_ascend());
        c.push(0.3);
        assert!(!c.should_ascend());
    }

    #[test]
    fn descend_is_inclusive() {
        let c = SwitchController::new(0.1, 0.4, 5);
        assert!(c.should_descend(0.1));
        assert!(!c.should_descend(0.0999));
    }

    #[test]
    fn convergence_requires_patience() {
        let rule = Convergence {
            check_every: 1,
            rel_tol: 0.1,
            patience: 2,
        };
        let mut m = ConvergenceMonitor::default();
        assert!(!m.observe(&rule, vec![10.0, 10.0]));
        assert!(!m.observe(&rule, vec![10.5, 10.0]));
        assert!(m.observe(&rule, vec![10.5, 10.2]));
    }
}
