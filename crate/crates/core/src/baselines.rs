//! Comparison agents: tabular RMax, its multi-fidelity variant, and the
//! single-level and hand-off variants of the GP agents.

use serde::{Deserialize, Serialize};

use crate::agent::{
    AgentError, AgentTrace, Budget, Convergence, ConvergenceMonitor, StopReason, TraceRecord,
};
use crate::env::{ChainSession, FidelityChain, GridLayout};
use crate::gp_vi::{self, GpViOutcome, GpViParams};
use crate::gpq::{self, GpqOutcome, GpqParams, Schedule};
use crate::mdp::{argmax, value_iteration_from, DiscreteMdp, Outcome, QTable};

/// Visit-count model of one level. A pair is known after `m` visits; until
/// then it leads to an absorbing sink with an optimistic one-off reward.
#[derive(Clone, Debug)]
pub struct RMaxModel {
    n_states: usize,
    n_actions: usize,
    m: u32,
    counts: Vec<u32>,
    /// Per pair: (next state or sink, visits, summed reward).
    outcomes: Vec<Vec<(usize, u32, f64)>>,
}

impl RMaxModel {
    pub fn new(n_states: usize, n_actions: usize, m: u32) -> Self {
        Self {
            n_states,
            n_actions,
            m: m.max(1),
            counts: vec![0; n_states * n_actions],
            outcomes: vec![Vec::new(); n_states * n_actions],
        }
    }

    /// Index of the absorbing sink in the planner MDP.
    pub fn sink(&self) -> usize {
        self.n_states
    }

    pub fn visits(&self, s: usize, a: usize) -> u32 {
        self.counts[s * self.n_actions + a]
    }

    pub fn is_known(&self, s: usize, a: usize) -> bool {
        self.visits(s, a) >= self.m
    }

    /// Records a transition; `next = None` marks a terminal one. Returns true
    /// when this visit made the pair known. Known pairs are not updated.
    pub fn record(&mut self, s: usize, a: usize, next: Option<usize>, reward: f64) -> bool {
        if self.is_known(s, a) {
            return false;
        }
        let k = s * self.n_actions + a;
        let target = next.unwrap_or(self.n_states);
        match self.outcomes[k].iter_mut().find(|o| o.0 == target) {
            Some(o) => {
                o.1 += 1;
                o.2 += reward;
            }
            None => self.outcomes[k].push((target, 1, reward)),
        }
        self.counts[k] += 1;
        self.is_known(s, a)
    }

    /// Empirical MDP over the states plus the sink; unknown pairs jump to the
    /// sink collecting `optimistic(s, a)`.
    pub fn planner_mdp(&self, gamma: f64, optimistic: impl Fn(usize, usize) -> f64) -> Result<DiscreteMdp, AgentError> {
        let sink = self.sink();
        let mut rows = Vec::with_capacity((self.n_states + 1) * self.n_actions);
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                let k = s * self.n_actions + a;
                if self.is_known(s, a) {
                    let total = self.counts[k] as f64;
                    rows.push(
                        self.outcomes[k]
                            .iter()
                            .map(|&(next, c, r)| Outcome {
                                next,
                                prob: c as f64 / total,
                                reward: r / c as f64,
                            })
                            .collect(),
                    );
                } else {
                    rows.push(vec![Outcome {
                        next: sink,
                        prob: 1.0,
                        reward: optimistic(s, a),
                    }]);
                }
            }
        }
        for _ in 0..self.n_actions {
            rows.push(vec![Outcome {
                next: sink,
                prob: 1.0,
                reward: 0.0,
            }]);
        }
        Ok(DiscreteMdp::new(self.n_states + 1, self.n_actions, gamma, rows)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RMaxParams {
    /// Visits before a pair counts as known.
    pub m: u32,
    /// Largest one-step reward; unknown pairs are worth `r_max / (1 − γ)`.
    pub r_max: f64,
    pub gamma: f64,
    pub vi_tol: f64,
    /// Ascend after this many consecutive steps on known pairs.
    pub window_len: usize,
    /// Off by default: optimistic values move too little per check for a
    /// relative-change rule to mean anything.
    pub convergence: Option<Convergence>,
    pub budget: Budget,
}

impl Default for RMaxParams {
    fn default() -> Self {
        Self {
            m: 5,
            r_max: 100.0,
            gamma: 0.95,
            vi_tol: 0.1,
            window_len: 5,
            convergence: None,
            budget: Budget::default(),
        }
    }
}

impl RMaxParams {
    pub fn v_max(&self) -> f64 {
        self.r_max / (1.0 - self.gamma)
    }
}

#[derive(Clone, Debug)]
pub struct RMaxOutcome {
    pub trace: AgentTrace,
    pub models: Vec<RMaxModel>,
    pub q: Vec<QTable>,
}

struct RMaxLevels<'a> {
    layouts: Vec<&'a GridLayout>,
    chain: &'a FidelityChain,
    params: &'a RMaxParams,
}

impl RMaxLevels<'_> {
    fn cell(&self, level: usize, s: &[f64]) -> usize {
        let l = self.layouts[level];
        l.index(l.nearest_cell([s[0], s[1]]))
    }

    /// Replans `level`; unknown pairs above the first level inherit the
    /// lower level's Q at the mapped cell.
    fn plan(&self, level: usize, models: &[RMaxModel], q: &[QTable]) -> Result<QTable, AgentError> {
        let v_max = self.params.v_max();
        let layout = self.layouts[level];
        let optimistic = |s: usize, a: usize| {
            if level == 0 {
                return v_max;
            }
            let c = GridLayout::center(layout.cell(s));
            let lower = self.cell(level - 1, &self.chain.rho(level, &c));
            q[level - 1].get(lower, a)
        };
        let mdp = models[level].planner_mdp(self.params.gamma, optimistic)?;
        Ok(value_iteration_from(&mdp, self.params.vi_tol, q[level].clone())?)
    }
}

/// RMax on every level of `chain` with multi-fidelity switching: descend
/// when the chosen pair is unknown below, ascend after a window of known
/// pairs. A one-level chain is plain RMax.
pub fn rmax_mfrl(chain: &FidelityChain, params: &RMaxParams, seed: u64) -> Result<RMaxOutcome, AgentError> {
    if chain.levels().iter().any(|e| e.layout().is_none()) {
        return Err(AgentError::Config("RMax needs grid-based levels".into()));
    }
    if !(0.0..1.0).contains(&params.gamma) {
        return Err(AgentError::Config(format!("gamma {} outside [0, 1)", params.gamma)));
    }
    let d = chain.depth();
    let top = d - 1;
    let levels = RMaxLevels {
        layouts: chain.levels().iter().map(|e| e.layout().expect("checked")).collect(),
        chain,
        params,
    };
    let n_actions = chain.n_actions();
    let mut models: Vec<RMaxModel> = levels
        .layouts
        .iter()
        .map(|l| RMaxModel::new(l.n_cells(), n_actions, params.m))
        .collect();
    let mut q: Vec<QTable> = levels
        .layouts
        .iter()
        .map(|l| QTable::zeros(l.n_cells() + 1, n_actions))
        .collect();
    for i in 0..d {
        q[i] = levels.plan(i, &models, &q)?;
    }
    let mut stale = vec![false; d];

    let mut session = ChainSession::new(chain.clone(), seed);
    let mut monitor = ConvergenceMonitor::default();
    let mut trace = AgentTrace::new(d);
    let top_start = levels.layouts[top].index(levels.layouts[top].start());
    trace.push_point("v_start", 0.0, q[top].state_value(top_start));

    let mut level = 0;
    let mut s = session.observe(0);
    let mut streak = 0usize;
    let mut t = 0;
    let stop = loop {
        if let Some(reason) = params.budget.exhausted(session.total_samples(), session.samples(top)) {
            break reason;
        }
        let mut cell = levels.cell(level, &s);
        let mut a = argmax(q[level].row(cell));
        while level > 0 {
            let below = levels.cell(level - 1, &chain.rho(level, &s));
            if models[level - 1].is_known(below, a) {
                break;
            }
            s = session.switch_down(level);
            level -= 1;
            streak = 0;
            cell = levels.cell(level, &s);
            a = argmax(q[level].row(cell));
        }

        let known = models[level].is_known(cell, a);
        let out = session.step(level, a);
        trace.records.push(TraceRecord {
            t,
            level: level + 1,
            state: s.clone(),
            action: a,
            reward: out.reward,
            sigma: if known { 0.0 } else { 1.0 },
            terminal: out.terminal,
        });
        t += 1;
        let next = (!out.terminal).then(|| levels.cell(level, &out.next));
        if models[level].record(cell, a, next, out.reward) {
            q[level] = levels.plan(level, &models, &q)?;
            for flag in stale.iter_mut().skip(level + 1) {
                *flag = true;
            }
        }
        s = if out.terminal { session.observe(level) } else { out.next };
        streak = if known { streak + 1 } else { 0 };

        if level == top {
            let n = session.samples(top);
            trace.push_point("v_start", n as f64, q[top].state_value(top_start));
            if let Some(rule) = &params.convergence {
                if n % rule.check_every.max(1) == 0 {
                    let values = (0..levels.layouts[top].n_cells()).map(|c| q[top].state_value(c)).collect();
                    if monitor.observe(rule, values) {
                        break StopReason::Converged;
                    }
                }
            }
        } else if streak >= params.window_len {
            s = session.switch_up(level);
            level += 1;
            streak = 0;
            if stale[level] {
                q[level] = levels.plan(level, &models, &q)?;
                stale[level] = false;
            }
        }
    };
    trace.stop = Some(stop);
    Ok(RMaxOutcome { trace, models, q })
}

/// RMax on the highest-fidelity level alone.
pub fn rmax(chain: &FidelityChain, params: &RMaxParams, seed: u64) -> Result<RMaxOutcome, AgentError> {
    rmax_mfrl(&chain.top_only(), params, seed)
}

/// Single-level GP-VI on the highest-fidelity level. The default transition
/// kernel is the unchained one.
pub fn gp_vi_direct(chain: &FidelityChain, params: &GpViParams, seed: u64) -> Result<GpViOutcome, AgentError> {
    gp_vi::run(&chain.top_only(), params, seed)
}

/// Parameters for [`gp_vi_direct`] derived from the multi-fidelity ones.
pub fn gp_vi_direct_params(base: &GpViParams) -> GpViParams {
    GpViParams {
        kernels: vec![gp_vi::standalone_kernel(0.0025)],
        ..base.clone()
    }
}

/// GP Q-learning on the highest-fidelity level alone.
pub fn gpq_direct(chain: &FidelityChain, params: &GpqParams, seed: u64) -> Result<GpqOutcome, AgentError> {
    gpq::run(&chain.top_only(), params, seed)
}

/// Samples collected in the simulator before the policy moves on.
pub const DEFAULT_SIM_SAMPLES: usize = 100;

/// Learns `n_sim` samples at the lowest level, then acts greedily at the top
/// without further learning.
pub fn frozen_policy(chain: &FidelityChain, params: &GpqParams, n_sim: usize, seed: u64) -> Result<GpqOutcome, AgentError> {
    let params = GpqParams {
        schedule: Schedule::Handoff {
            lower_samples: n_sim,
            learn_top: false,
        },
        ..params.clone()
    };
    gpq::run(chain, &params, seed)
}

/// Same warm start as [`frozen_policy`] but keeps learning at the top.
pub fn transferred_policy(
    chain: &FidelityChain,
    params: &GpqParams,
    n_sim: usize,
    seed: u64,
) -> Result<GpqOutcome, AgentError> {
    let params = GpqParams {
        schedule: Schedule::Handoff {
            lower_samples: n_sim,
            learn_top: true,
        },
        ..params.clone()
    };
    gpq::run(chain, &params, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{ChainSpec, LevelSpec};
    use crate::mdp::value_iteration;

    fn grid3() -> ChainSpec {
        let mut spec = ChainSpec::builtin("grid5").unwrap();
        for level in &mut spec.levels {
            if let LevelSpec::Grid(g) = level {
                g.width = 3;
                g.height = 3;
                g.start = [0, 0];
                g.goal = [2, 2];
                g.walls = vec![[1, 1, 1, 1]];
            }
        }
        spec
    }

    #[test]
    fn unvisited_values_are_v_max() {
        let params = RMaxParams::default();
        let model = RMaxModel::new(4, 5, 5);
        let mdp = model.planner_mdp(params.gamma, |_, _| params.v_max()).unwrap();
        let q = value_iteration(&mdp, 0.1).unwrap();
        for s in 0..4 {
            for a in 0..5 {
                assert!((q.get(s, a) - 2000.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn rmax_solves_a_deterministic_3x3() {
        let chain = grid3().build().unwrap();
        let params = RMaxParams {
            m: 1,
            convergence: None,
            budget: Budget {
                max_total_samples: 400,
                max_top_samples: None,
            },
            ..RMaxParams::default()
        };
        let out = rmax(&chain, &params, 0).unwrap();
        let env = chain.level(1);
        let layout = env.layout().unwrap();
        let truth = value_iteration(&env.reference_mdp(0.95).unwrap().unwrap(), 1e-9).unwrap();
        let start = layout.index(layout.start());
        let learned = out.q[0].state_value(start);
        assert!((learned - truth.state_value(start)).abs() < 0.5, "{learned}");

        // Every pair reachable before the goal was tried at least once.
        for c in 0..layout.n_cells() {
            let cell = layout.cell(c);
            if layout.is_blocked(cell) || cell == layout.goal() {
                continue;
            }
            for a in 0..5 {
                assert!(out.models[0].visits(c, a) >= 1, "cell {cell:?} action {a}");
            }
        }
    }

    #[test]
    fn identical_levels_match_single_level_rmax() {
        let chain = grid3().build().unwrap();
        let params = RMaxParams {
            convergence: None,
            budget: Budget {
                max_total_samples: 1500,
                max_top_samples: None,
            },
            ..RMaxParams::default()
        };
        let single = rmax(&chain, &params, 1).unwrap();
        let multi = rmax_mfrl(&chain, &params, 1).unwrap();
        assert_eq!(multi.trace.records[0].level, 1);
        let layout = chain.level(1).layout().unwrap();
        let start = layout.index(layout.start());
        let a = single.q[0].state_value(start);
        let b = multi.q[1].state_value(start);
        assert!((a - b).abs() < 0.5, "{a} vs {b}");
    }

    #[test]
    fn frozen_learner_does_not_change_at_the_top() {
        let chain = ChainSpec::builtin("corridor").unwrap().build().unwrap();
        let params = GpqParams {
            plateau: None,
            budget: Budget {
                max_total_samples: 10_000,
                max_top_samples: Some(30),
            },
            ..GpqParams::default()
        };
        let out = frozen_policy(&chain, &params, 20, 0).unwrap();
        assert_eq!(out.trace.samples_at(1), 20);
        assert_eq!(out.trace.samples_at(2), 30);
        assert!(out.learners[1].is_empty());
        assert_eq!(out.learners[0].len(), 20);
        let warm = transferred_policy(&chain, &params, 20, 0).unwrap();
        assert_eq!(warm.learners[1].len(), 30);
    }
}
