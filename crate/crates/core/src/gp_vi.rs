//! Model-based multi-fidelity agent.
//!
//! Each level learns its displacement `(Δx, Δy)` with two independent GPs,
//! `Δx = f_x(x, y, a_x)` and `Δy = f_y(x, y, a_y)`. A level above the first
//! uses the posterior mean of the level below (at the ρ-mapped input) as its
//! prior mean, so it starts from everything learned lower down. Planning
//! discretizes each predicted Gaussian onto the cell grid and runs value
//! iteration; the agent re-plans after every step.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{
    AgentError, AgentTrace, Budget, Convergence, ConvergenceMonitor, StopReason, SwitchController, TraceRecord,
};
use crate::env::{ChainSession, FidelityChain, GridLayout, Rewards, MOVES};
use crate::gp::{fit_hyperparameters_masked, GpModel, KernelParams, PriorMean, QueryCache, TrainingSet};
use crate::mdp::{epsilon_greedy, greedy_policy, value_iteration, value_iteration_from, DiscreteMdp, Outcome, Policy, QTable};

/// Which action the descend test looks at.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DescendCheck {
    /// The ε-greedy action about to be executed.
    Chosen,
    /// The greedy action of the current plan.
    Greedy,
}

/// Which transition-kernel hyperparameters an online refit may change.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefitScope {
    /// The two spatial lengthscales only.
    Spatial,
    /// Every hyperparameter.
    All,
}

impl RefitScope {
    fn mask(self) -> Vec<bool> {
        match self {
            RefitScope::Spatial => vec![false, true, true, false, false],
            RefitScope::All => vec![true; 5],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GpViParams {
    pub sigma_th: f64,
    pub sigma_sum_th: f64,
    pub window_len: usize,
    pub epsilon: f64,
    pub gamma: f64,
    pub vi_tol: f64,
    /// Kernel of each level's transition GPs over `(x, y, a)`; the last entry
    /// is reused for deeper chains.
    pub kernels: Vec<KernelParams>,
    pub descend_check: DescendCheck,
    /// `None` runs until the budget is spent.
    pub convergence: Option<Convergence>,
    pub budget: Budget,
    /// Start each re-plan from the previous Q instead of zero.
    pub warm_start: bool,
    /// Refit kernel hyperparameters every this many samples at a level.
    pub refit_every: Option<usize>,
    pub refit_budget: usize,
    pub refit_scope: RefitScope,
    /// Hyperparameters are fitted on at most this many most recent samples.
    pub refit_window: usize,
    /// Fitted lengthscales are clamped to at most this many cells.
    pub refit_max_lengthscale: f64,
    /// Also refit levels whose prior is chained to the level below.
    pub refit_chained: bool,
    pub capacity: usize,
}

impl Default for GpViParams {
    fn default() -> Self {
        Self {
            sigma_th: 0.1,
            sigma_sum_th: 0.4,
            window_len: 5,
            epsilon: 0.1,
            gamma: 0.95,
            vi_tol: 0.1,
            kernels: default_kernels(),
            descend_check: DescendCheck::Chosen,
            convergence: Some(Convergence::default()),
            budget: Budget::default(),
            warm_start: true,
            refit_every: Some(25),
            refit_budget: 30,
            refit_scope: RefitScope::Spatial,
            refit_window: 300,
            refit_max_lengthscale: 2.0,
            refit_chained: false,
            capacity: crate::gp::DEFAULT_CAPACITY,
        }
    }
}

/// Level 1 learns whole displacements; higher levels learn small residuals
/// on top of the chained prior.
pub fn default_kernels() -> Vec<KernelParams> {
    vec![
        KernelParams::new(1.0, vec![1.0, 1.0, 0.5], 0.001).expect("valid kernel"),
        KernelParams::new(0.2, vec![0.5, 0.5, 0.5], 0.0025).expect("valid kernel"),
    ]
}

/// Kernel for a level that learns from scratch without a chained prior.
pub fn standalone_kernel(noise_var: f64) -> KernelParams {
    KernelParams::new(1.0, vec![1.0, 1.0, 0.5], noise_var).expect("valid kernel")
}

/// Predicted displacement at one state-action pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransitionPrediction {
    pub mean: [f64; 2],
    /// Predictive variances, observation noise included.
    pub var: [f64; 2],
}

impl TransitionPrediction {
    pub fn std(&self) -> [f64; 2] {
        [self.var[0].sqrt(), self.var[1].sqrt()]
    }

    /// Scalar spread used by the switching thresholds: √(σ_x² + σ_y²).
    pub fn sigma(&self) -> f64 {
        (self.var[0] + self.var[1]).sqrt()
    }
}

fn gp_input(s: &[f64], a: usize, axis: usize) -> Vec<f64> {
    vec![s[0], s[1], MOVES[a][axis] as f64]
}

fn cell_center(width: usize, height: usize, p: [f64; 2]) -> [f64; 2] {
    let round = |v: f64, n: usize| ((v - 0.5).ceil().max(0.0) as usize).min(n - 1) as f64;
    [round(p[0], width), round(p[1], height)]
}

/// Transition GPs of one level plus their cached posteriors at every
/// `(cell, action)` pair.
#[derive(Clone, Debug)]
pub struct TransitionModel {
    width: usize,
    height: usize,
    gps: [GpModel; 2],
    caches: [QueryCache; 2],
}

impl TransitionModel {
    pub fn new(kernel: KernelParams, width: usize, height: usize, capacity: usize) -> Result<Self, AgentError> {
        if kernel.dim() != 3 {
            return Err(AgentError::Config(format!("transition kernel needs 3 lengthscales, got {}", kernel.dim())));
        }
        let gp = GpModel::new(kernel)?.with_capacity(Some(capacity))?;
        let gps = [gp.clone(), gp];
        let caches = [
            QueryCache::new(&gps[0], Self::queries(width, height, 0))?,
            QueryCache::new(&gps[1], Self::queries(width, height, 1))?,
        ];
        Ok(Self {
            width,
            height,
            gps,
            caches,
        })
    }

    /// Query `c · 5 + a` is cell `c` (row-major) under action `a`.
    fn queries(width: usize, height: usize, axis: usize) -> Vec<Vec<f64>> {
        let mut q = Vec::with_capacity(width * height * MOVES.len());
        for c in 0..width * height {
            let s = [(c % width) as f64, (c / width) as f64];
            for a in 0..MOVES.len() {
                q.push(gp_input(&s, a, axis));
            }
        }
        q
    }

    pub fn len(&self) -> usize {
        self.gps[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.gps[0].is_empty()
    }

    pub fn gp(&self, axis: usize) -> &GpModel {
        &self.gps[axis]
    }

    /// Chains this level to `lower`: the prior mean becomes the lower
    /// posterior mean at the nearest lower-level cell.
    pub fn chain_to(&mut self, lower: &TransitionModel) {
        for axis in 0..2 {
            let below = Arc::new(lower.gps[axis].clone());
            let (w, h) = (lower.width, lower.height);
            let prior = PriorMean::Function(Arc::new(move |x: &[f64]| {
                let c = cell_center(w, h, [x[0], x[1]]);
                below.predict_mean(&[c[0], c[1], x[2]]).expect("finite chained input")
            }));
            let gp = std::mem::replace(&mut self.gps[axis], GpModel::new(lower.gps[axis].params().clone()).expect("valid"));
            self.gps[axis] = gp.with_prior(prior);
            self.caches[axis].sync(&self.gps[axis]);
        }
    }

    /// Learns from one observed transition `s →a→ next`.
    pub fn observe(&mut self, s: &[f64], a: usize, next: &[f64]) -> Result<(), AgentError> {
        for axis in 0..2 {
            self.gps[axis].push(gp_input(s, a, axis), next[axis] - s[axis])?;
            self.caches[axis].sync(&self.gps[axis]);
        }
        Ok(())
    }

    pub fn predict(&self, s: &[f64], a: usize) -> Result<TransitionPrediction, AgentError> {
        let px = self.gps[0].predict(&gp_input(s, a, 0))?;
        let py = self.gps[1].predict(&gp_input(s, a, 1))?;
        Ok(TransitionPrediction {
            mean: [px.mean, py.mean],
            var: [px.variance, py.variance],
        })
    }

    /// Cached prediction at the centre of cell `c` (row-major index).
    pub fn at_cell(&self, c: usize, a: usize) -> TransitionPrediction {
        let q = c * MOVES.len() + a;
        TransitionPrediction {
            mean: [self.caches[0].mean(q), self.caches[1].mean(q)],
            var: [self.caches[0].variance(q), self.caches[1].variance(q)],
        }
    }

    /// Refits both GPs' hyperparameters on their residuals from the prior.
    pub fn refit(&mut self, budget: usize, scope: RefitScope, window: usize, max_lengthscale: f64) -> Result<(), AgentError> {
        for axis in 0..2 {
            let gp = &self.gps[axis];
            if gp.len() < 2 {
                continue;
            }
            let data = gp.data();
            let from = data.len().saturating_sub(window.max(2));
            let inputs = data.inputs[from..].to_vec();
            let residual = inputs
                .iter()
                .zip(&data.outputs[from..])
                .map(|(x, y)| y - gp.prior().eval(x))
                .collect();
            let set = TrainingSet::new(inputs, residual)?;
            let mut fit = fit_hyperparameters_masked(&set, gp.params(), budget, &scope.mask())?;
            for l in &mut fit.params.lengthscales {
                *l = l.min(max_lengthscale);
            }
            let gp = std::mem::replace(&mut self.gps[axis], GpModel::new(fit.params.clone())?);
            self.gps[axis] = gp.with_params(fit.params)?;
            self.caches[axis].sync(&self.gps[axis]);
        }
        Ok(())
    }

    /// Planner MDP: each `(cell, action)` row is the discretized predicted
    /// next-cell distribution with rewards from the known reward function;
    /// the goal is absorbing.
    pub fn planner_mdp(&self, layout: &GridLayout, rewards: &Rewards, gamma: f64) -> Result<DiscreteMdp, AgentError> {
        let (w, h) = (self.width, self.height);
        let n = w * h;
        let goal = layout.index(layout.goal());
        let mut rows = Vec::with_capacity(n * MOVES.len());
        for c in 0..n {
            let cell = layout.cell(c);
            for a in 0..MOVES.len() {
                if c == goal {
                    rows.push(vec![Outcome {
                        next: c,
                        prob: 1.0,
                        reward: 0.0,
                    }]);
                    continue;
                }
                let p = self.at_cell(c, a);
                let mean = [cell[0] as f64 + p.mean[0], cell[1] as f64 + p.mean[1]];
                let row = discretize_transitions(mean, p.std(), w, h)
                    .into_iter()
                    .map(|(next, prob)| Outcome {
                        next,
                        prob,
                        reward: layout.known_reward(rewards, cell, a, layout.cell(next)),
                    })
                    .collect();
                rows.push(row);
            }
        }
        Ok(DiscreteMdp::new(n, MOVES.len(), gamma, rows)?)
    }
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Mass of `N(mu, sigma²)` truncated to `mu ± 3σ` over the unit cells
/// `0..n` (cell `k` covers `[k − ½, k + ½]`; the edge cells absorb
/// everything beyond the grid). `sigma = 0` puts all mass on the
/// containing cell.
pub fn discretize_axis(mu: f64, sigma: f64, n: usize) -> Vec<(usize, f64)> {
    let nearest = |v: f64| ((v - 0.5).ceil().max(0.0) as usize).min(n - 1);
    if !(sigma > 0.0) || !sigma.is_finite() {
        return vec![(nearest(mu), 1.0)];
    }
    let (lo, hi) = (mu - 3.0 * sigma, mu + 3.0 * sigma);
    let (first, last) = (nearest(lo), nearest(hi));
    let mut out = Vec::with_capacity(last - first + 1);
    let mut total = 0.0;
    for k in first..=last {
        let a = if k == 0 { lo } else { (k as f64 - 0.5).max(lo) };
        let b = if k == n - 1 { hi } else { (k as f64 + 0.5).min(hi) };
        if b > a {
            let m = std_normal_cdf((b - mu) / sigma) - std_normal_cdf((a - mu) / sigma);
            if m > 0.0 {
                out.push((k, m));
                total += m;
            }
        }
    }
    if total <= 0.0 {
        return vec![(nearest(mu), 1.0)];
    }
    for (_, m) in &mut out {
        *m /= total;
    }
    out
}

/// Next-cell distribution (row-major cell index, probability) for a
/// Gaussian with independent axes over a `width × height` grid.
pub fn discretize_transitions(mean: [f64; 2], std: [f64; 2], width: usize, height: usize) -> Vec<(usize, f64)> {
    let px = discretize_axis(mean[0], std[0], width);
    let py = discretize_axis(mean[1], std[1], height);
    let mut out = Vec::with_capacity(px.len() * py.len());
    for (iy, wy) in &py {
        for (ix, wx) in &px {
            out.push((iy * width + ix, wx * wy));
        }
    }
    out
}

/// Everything a finished run leaves behind.
#[derive(Clone, Debug)]
pub struct GpViOutcome {
    pub trace: AgentTrace,
    pub models: Vec<TransitionModel>,
    pub q: Vec<QTable>,
    pub policies: Vec<Policy>,
}

struct Planner<'a> {
    layouts: Vec<&'a GridLayout>,
    rewards: Vec<&'a Rewards>,
    gamma: f64,
    tol: f64,
    warm: bool,
}

impl Planner<'_> {
    fn plan(&self, level: usize, model: &TransitionModel, prev: Option<&QTable>) -> Result<QTable, AgentError> {
        let mdp = model.planner_mdp(self.layouts[level], self.rewards[level], self.gamma)?;
        Ok(match prev {
            Some(q) if self.warm => value_iteration_from(&mdp, self.tol, q.clone())?,
            _ => value_iteration(&mdp, self.tol)?,
        })
    }
}

fn validate(chain: &FidelityChain, params: &GpViParams) -> Result<(), AgentError> {
    if chain.levels().iter().any(|e| e.layout().is_none()) {
        return Err(AgentError::Config("the model-based agent needs grid-based levels".into()));
    }
    if params.kernels.is_empty() {
        return Err(AgentError::Config("at least one transition kernel is required".into()));
    }
    if !(0.0..=1.0).contains(&params.epsilon) {
        return Err(AgentError::Config(format!("epsilon {} outside [0, 1]", params.epsilon)));
    }
    if params.window_len == 0 {
        return Err(AgentError::Config("window_len must be positive".into()));
    }
    Ok(())
}

/// Runs the model-based multi-fidelity agent on `chain`. A one-level chain
/// is plain single-simulator GP-VI.
pub fn run(chain: &FidelityChain, params: &GpViParams, seed: u64) -> Result<GpViOutcome, AgentError> {
    validate(chain, params)?;
    let d = chain.depth();
    let top = d - 1;
    let layouts: Vec<&GridLayout> = chain.levels().iter().map(|e| e.layout().expect("validated")).collect();
    let planner = Planner {
        rewards: chain.levels().iter().map(|e| e.rewards().expect("validated")).collect(),
        layouts: layouts.clone(),
        gamma: params.gamma,
        tol: params.vi_tol,
        warm: params.warm_start,
    };
    let kernel = |i: usize| params.kernels[i.min(params.kernels.len() - 1)].clone();

    let mut models = Vec::with_capacity(d);
    for (i, layout) in layouts.iter().enumerate() {
        let mut m = TransitionModel::new(kernel(i), layout.width(), layout.height(), params.capacity)?;
        if i > 0 {
            m.chain_to(&models[i - 1]);
        }
        models.push(m);
    }
    let mut q = Vec::with_capacity(d);
    for (i, m) in models.iter().enumerate() {
        q.push(planner.plan(i, m, None)?);
    }
    let mut stale = vec![false; d];
    let mut since_refit = vec![0usize; d];

    let mut session = ChainSession::new(chain.clone(), seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut switch = SwitchController::new(params.sigma_th, params.sigma_sum_th, params.window_len);
    let mut monitor = ConvergenceMonitor::default();
    let mut trace = AgentTrace::new(d);
    let top_start = layouts[top].index(layouts[top].start());
    trace.push_point("v_start", 0.0, q[top].state_value(top_start));

    let mut level = 0;
    let mut s = session.observe(0);
    let mut t = 0;
    let stop = loop {
        if let Some(reason) = params.budget.exhausted(session.total_samples(), session.samples(top)) {
            break reason;
        }
        let cell_of = |level: usize, s: &[f64]| layouts[level].index(layouts[level].nearest_cell([s[0], s[1]]));
        let a = epsilon_greedy(q[level].row(cell_of(level, &s)), params.epsilon, &mut rng);

        while level > 0 {
            let probe = match params.descend_check {
                DescendCheck::Chosen => a,
                DescendCheck::Greedy => q[level].greedy_action(cell_of(level, &s)),
            };
            let mapped = chain.rho(level, &s);
            let below = models[level - 1].at_cell(cell_of(level - 1, &mapped), probe).sigma();
            if !switch.should_descend(below) {
                break;
            }
            s = session.switch_down(level);
            level -= 1;
            switch.clear();
        }

        let sigma = models[level].predict(&s, a)?.sigma();
        let out = session.step(level, a);
        trace.records.push(TraceRecord {
            t,
            level: level + 1,
            state: s.clone(),
            action: a,
            reward: out.reward,
            sigma,
            terminal: out.terminal,
        });
        t += 1;

        models[level].observe(&s, a, &out.next)?;
        since_refit[level] += 1;
        if let Some(every) = params.refit_every.filter(|_| level == 0 || params.refit_chained) {
            if since_refit[level] >= every {
                models[level].refit(
                    params.refit_budget,
                    params.refit_scope,
                    params.refit_window,
                    params.refit_max_lengthscale,
                )?;
                since_refit[level] = 0;
            }
        }
        for flag in stale.iter_mut().skip(level + 1) {
            *flag = true;
        }
        q[level] = planner.plan(level, &models[level], Some(&q[level]))?;
        s = if out.terminal { session.observe(level) } else { out.next };
        switch.push(sigma);

        if level == top {
            let n = session.samples(top);
            trace.push_point("v_start", n as f64, q[top].state_value(top_start));
            if let Some(rule) = &params.convergence {
                if n % rule.check_every.max(1) == 0 {
                    let values = (0..q[top].n_states()).map(|c| q[top].state_value(c)).collect();
                    if monitor.observe(rule, values) {
                        break StopReason::Converged;
                    }
                }
            }
        } else if switch.should_ascend() {
            s = session.switch_up(level);
            level += 1;
            switch.clear();
            if stale[level] {
                let (lower, upper) = models.split_at_mut(level);
                upper[0].chain_to(&lower[level - 1]);
                q[level] = planner.plan(level, &models[level], Some(&q[level]))?;
                stale[level] = false;
            }
        }
    };
    trace.stop = Some(stop);
    let policies = q.iter().map(greedy_policy).collect();
    Ok(GpViOutcome {
        trace,
        models,
        q,
        policies,
    })
}

/// √(σ_x² + σ_y²) at every cell for the planner's greedy action, row-major,
/// from direct GP predictions.
pub fn variance_heatmap(model: &TransitionModel, q: &QTable, layout: &GridLayout) -> Result<Vec<f64>, AgentError> {
    (0..layout.n_cells())
        .map(|c| {
            let center = GridLayout::center(layout.cell(c));
            Ok(model.predict(&center, q.greedy_action(c))?.sigma())
        })
        .collect()
}
