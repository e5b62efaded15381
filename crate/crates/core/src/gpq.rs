//! Model-free multi-fidelity agent: Q-learning with a GP over
//! `(state, action)` inputs.
//!
//! Every step the whole target set `y_j = r_j + γ max_a Q̂(s'_j, a)` is
//! rebuilt from the current Q̂ and the GP is refit on it. The state part of
//! the kernel between each stored `s'_j` and every stored `s_i` is cached,
//! so a full rebuild costs `O(n²)`, the same order as the refit itself.

use std::sync::Arc;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{AgentError, AgentTrace, Budget, StopReason, SwitchController, TraceRecord};
use crate::env::corridor::{turn_rate, N_TURNS};
use crate::env::{ChainSession, FidelityChain};
use crate::gp::{fit_hyperparameters, GpModel, KernelParams, Prediction, PriorMean, TrainingSet};
use crate::mdp::{argmax, epsilon_greedy};

/// One stored transition.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next: Vec<f64>,
    /// No bootstrapping from `next` when set.
    pub terminal: bool,
}

/// Rebuild only part of the target set once the dataset is large.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialRefresh {
    /// Dataset size above which partial refreshes start.
    pub above: usize,
    /// Fraction of rows refreshed per step (the newest row always is).
    pub fraction: f64,
}

impl Default for PartialRefresh {
    fn default() -> Self {
        Self {
            above: 500,
            fraction: 0.25,
        }
    }
}

fn sq_dist_scaled(a: &[f64], b: &[f64], inv_l2: &[f64]) -> f64 {
    a.iter().zip(b).zip(inv_l2).map(|((x, y), w)| (x - y) * (x - y) * w).sum()
}

/// Kernel pieces shared by a learner and its prior snapshots: the state part
/// `exp(−½ Σ_{d<D} (Δ_d / l_d)²)` and a table of the action part.
#[derive(Clone, Debug)]
struct SplitKernel {
    signal_var: f64,
    state_inv_l2: Vec<f64>,
    action_table: Vec<Vec<f64>>,
}

impl SplitKernel {
    fn new(params: &KernelParams, action_coords: &[f64]) -> Self {
        let d = params.dim() - 1;
        let la = params.lengthscales[d];
        let action_table = action_coords
            .iter()
            .map(|a| action_coords.iter().map(|b| (-0.5 * ((a - b) / la).powi(2)).exp()).collect())
            .collect();
        Self {
            signal_var: params.signal_var(),
            state_inv_l2: params.lengthscales[..d].iter().map(|l| 1.0 / (l * l)).collect(),
            action_table,
        }
    }

    fn state(&self, a: &[f64], b: &[f64]) -> f64 {
        (-0.5 * sq_dist_scaled(a, b, &self.state_inv_l2)).exp()
    }

    /// `Σ_i k((s, a), x_i) α_i` for every action `a`, given the state-kernel
    /// row `k_s(s, s_i)` and the action index of each `x_i`.
    fn weighted_sums(&self, srow: &[f64], alpha: &[f64], actions: &[usize]) -> Vec<f64> {
        let n_actions = self.action_table.len();
        let mut grouped = vec![0.0; n_actions];
        for ((k, a), b) in srow.iter().zip(alpha).zip(actions) {
            grouped[*b] += k * a;
        }
        self.action_table
            .iter()
            .map(|row| self.signal_var * row.iter().zip(&grouped).map(|(t, g)| t * g).sum::<f64>())
            .collect()
    }
}

/// Maps a state of one level to the matching state of the level below.
pub type StateMap = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// Frozen copy of a lower level's Q̂, evaluated at mapped states.
#[derive(Clone)]
pub struct QPrior {
    gp: Arc<GpModel>,
    actions: Arc<Vec<usize>>,
    kernel: Arc<SplitKernel>,
    action_coords: Arc<Vec<f64>>,
    map: StateMap,
}

impl std::fmt::Debug for QPrior {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("QPrior").field("rows", &self.gp.len()).finish()
    }
}

impl QPrior {
    /// Q̂ of the lower level at `map(s)` for every action.
    pub fn values(&self, s: &[f64]) -> Vec<f64> {
        let mapped = (self.map)(s);
        let d = mapped.len();
        let srow: Vec<f64> = self.gp.data().inputs.iter().map(|x| self.kernel.state(&mapped, &x[..d])).collect();
        let sums = self.kernel.weighted_sums(&srow, self.gp.alpha(), &self.actions);
        sums.iter()
            .zip(self.action_coords.iter())
            .map(|(v, w)| v + self.gp.prior().eval(&with_action(&mapped, *w)))
            .collect()
    }

    pub fn value(&self, s: &[f64], a: usize) -> f64 {
        let mapped = (self.map)(s);
        self.gp
            .predict_mean(&with_action(&mapped, self.action_coords[a]))
            .expect("prior inputs are finite and correctly sized")
    }
}

fn with_action(s: &[f64], w: f64) -> Vec<f64> {
    let mut x = Vec::with_capacity(s.len() + 1);
    x.extend_from_slice(s);
    x.push(w);
    x
}

/// GP Q-function of one level together with its dataset and target cache.
#[derive(Clone, Debug)]
pub struct QLearner {
    params: KernelParams,
    action_coords: Arc<Vec<f64>>,
    kernel: Arc<SplitKernel>,
    gamma: f64,
    capacity: usize,
    gp: GpModel,
    rows: Vec<Transition>,
    actions: Vec<usize>,
    /// `next_kernel[j][i] = k_s(s'_j, s_i)`.
    next_kernel: Vec<Vec<f64>>,
    /// Prior mean at `(s'_j, a)` for every action.
    next_prior: Vec<Vec<f64>>,
    prior: Option<QPrior>,
    generation: u64,
}

impl QLearner {
    /// `params` covers the state coordinates followed by one action
    /// coordinate; `action_coords[a]` is the value fed for action `a`.
    pub fn new(params: KernelParams, action_coords: Vec<f64>, gamma: f64, capacity: usize) -> Result<Self, AgentError> {
        params.validate()?;
        if params.dim() < 2 {
            return Err(AgentError::Config("Q kernel needs at least one state and one action lengthscale".into()));
        }
        if action_coords.is_empty() {
            return Err(AgentError::Config("empty action set".into()));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(AgentError::Config(format!("gamma {gamma} outside [0, 1)")));
        }
        let kernel = Arc::new(SplitKernel::new(&params, &action_coords));
        Ok(Self {
            gp: GpModel::new(params.clone())?,
            params,
            action_coords: Arc::new(action_coords),
            kernel,
            gamma,
            capacity: capacity.max(2),
            rows: Vec::new(),
            actions: Vec::new(),
            next_kernel: Vec::new(),
            next_prior: Vec::new(),
            prior: None,
            generation: 0,
        })
    }

    /// Learner over lidar readings and the 19 turn rates.
    pub fn corridor(params: KernelParams, gamma: f64, capacity: usize) -> Result<Self, AgentError> {
        Self::new(params, (0..N_TURNS).map(turn_rate).collect(), gamma, capacity)
    }

    pub fn n_actions(&self) -> usize {
        self.action_coords.len()
    }

    pub fn state_dim(&self) -> usize {
        self.params.dim() - 1
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[Transition] {
        &self.rows
    }

    pub fn gp(&self) -> &GpModel {
        &self.gp
    }

    /// Increments whenever Q̂ changes.
    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn input(&self, s: &[f64], a: usize) -> Vec<f64> {
        with_action(s, self.action_coords[a])
    }

    /// Snapshot of the current Q̂ for use as the prior of the level above.
    pub fn snapshot(&self, map: StateMap) -> QPrior {
        QPrior {
            gp: Arc::new(self.gp.clone()),
            actions: Arc::new(self.actions.clone()),
            kernel: self.kernel.clone(),
            action_coords: self.action_coords.clone(),
            map,
        }
    }

    /// Replaces the prior mean and refits on targets recomputed under it.
    pub fn set_prior(&mut self, prior: Option<QPrior>) -> Result<(), AgentError> {
        let mean = match &prior {
            Some(p) => {
                let p = p.clone();
                let d = self.state_dim();
                PriorMean::Function(Arc::new(move |x: &[f64]| {
                    let mapped = (p.map)(&x[..d]);
                    p.gp.predict_mean(&with_action(&mapped, x[d])).expect("prior inputs are finite and correctly sized")
                }))
            }
            None => PriorMean::Zero,
        };
        self.next_prior = match &prior {
            Some(p) => self.rows.iter().map(|r| p.values(&r.next)).collect(),
            None => vec![vec![0.0; self.n_actions()]; self.rows.len()],
        };
        self.prior = prior;
        let gp = std::mem::replace(&mut self.gp, GpModel::new(self.params.clone())?);
        self.gp = gp.with_prior(mean);
        self.refresh()?;
        Ok(())
    }

    fn prior_values(&self, s: &[f64]) -> Vec<f64> {
        match &self.prior {
            Some(p) => p.values(s),
            None => vec![0.0; self.n_actions()],
        }
    }

    fn values_from_row(&self, srow: &[f64], prior: &[f64]) -> Vec<f64> {
        let sums = self.kernel.weighted_sums(srow, self.gp.alpha(), &self.actions);
        sums.iter().zip(prior).map(|(v, p)| v + p).collect()
    }

    /// Posterior mean of Q̂(s, a) for every action.
    pub fn values(&self, s: &[f64]) -> Vec<f64> {
        let srow: Vec<f64> = self.rows.iter().map(|r| self.kernel.state(s, &r.state)).collect();
        self.values_from_row(&srow, &self.prior_values(s))
    }

    /// Greedy action (lowest index on ties) and its value.
    pub fn q_max(&self, s: &[f64]) -> (usize, f64) {
        let v = self.values(s);
        let a = argmax(&v);
        (a, v[a])
    }

    pub fn predict(&self, s: &[f64], a: usize) -> Result<Prediction, AgentError> {
        Ok(self.gp.predict(&self.input(s, a))?)
    }

    /// Targets `r + γ max_a Q̂(s', a)` for `rows` under the current Q̂, with
    /// the rows' cached kernel entries; `only` restricts which rows are
    /// recomputed (others return `None`).
    fn targets(&self, only: Option<&[bool]>) -> Vec<Option<f64>> {
        let n = self.gp.len();
        self.rows
            .iter()
            .enumerate()
            .map(|(j, row)| {
                if only.is_some_and(|m| !m[j]) {
                    return None;
                }
                if row.terminal || self.gamma == 0.0 {
                    return Some(row.reward);
                }
                let v = self.values_from_row(&self.next_kernel[j][..n], &self.next_prior[j]);
                Some(row.reward + self.gamma * v.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            })
            .collect()
    }

    /// Target set recomputed from scratch under the current Q̂.
    pub fn recompute_targets(&self) -> Vec<f64> {
        self.targets(None).into_iter().map(|y| y.expect("all rows requested")).collect()
    }

    /// One more pass of target recomputation and refit on the stored rows.
    pub fn refresh(&mut self) -> Result<(), AgentError> {
        if self.rows.is_empty() {
            return Ok(());
        }
        let y = self.recompute_targets();
        let gp = std::mem::replace(&mut self.gp, GpModel::new(self.params.clone())?);
        self.gp = gp.with_outputs(y)?;
        self.generation += 1;
        Ok(())
    }

    /// Appends `t`, rebuilds the targets under the Q̂ from before `t` and
    /// refits. With `partial`, large datasets refresh only a random subset of
    /// the older rows.
    pub fn learn<R: Rng + ?Sized>(
        &mut self,
        t: Transition,
        partial: Option<&PartialRefresh>,
        rng: &mut R,
    ) -> Result<(), AgentError> {
        if t.state.len() != self.state_dim() || t.next.len() != self.state_dim() || t.action >= self.n_actions() {
            return Err(AgentError::Config(format!(
                "transition does not match the learner ({} state dims, {} actions)",
                self.state_dim(),
                self.n_actions()
            )));
        }
        for (j, row) in self.rows.iter().enumerate() {
            let k = self.kernel.state(&row.next, &t.state);
            self.next_kernel[j].push(k);
        }
        let mut own: Vec<f64> = self.rows.iter().map(|r| self.kernel.state(&t.next, &r.state)).collect();
        own.push(self.kernel.state(&t.next, &t.state));
        self.next_kernel.push(own);
        self.next_prior.push(self.prior_values(&t.next));
        let input = self.input(&t.state, t.action);
        self.actions.push(t.action);
        self.rows.push(t);

        let n = self.rows.len();
        let mask = partial.filter(|p| n > p.above).map(|p| {
            let older = n - 1;
            let k = ((older as f64 * p.fraction).round() as usize).min(older);
            let mut m = vec![false; n];
            for i in sample(rng, older, k) {
                m[i] = true;
            }
            m[n - 1] = true;
            m
        });
        let fresh = self.targets(mask.as_deref());
        let old = &self.gp.data().outputs;
        let y: Vec<f64> = fresh
            .iter()
            .enumerate()
            .map(|(j, y)| y.unwrap_or_else(|| old[j]))
            .collect();

        self.gp.push(input, y[n - 1])?;
        let gp = std::mem::replace(&mut self.gp, GpModel::new(self.params.clone())?);
        self.gp = gp.with_outputs(y)?;
        if n > self.capacity {
            self.evict()?;
        }
        self.generation += 1;
        Ok(())
    }

    /// Drops the oldest tenth of the rows and refactors.
    fn evict(&mut self) -> Result<(), AgentError> {
        let keep = self.capacity * 9 / 10;
        let drop = self.rows.len() - keep;
        self.rows.drain(..drop);
        self.actions.drain(..drop);
        self.next_kernel.drain(..drop);
        for row in &mut self.next_kernel {
            row.drain(..drop);
        }
        self.next_prior.drain(..drop);
        let data = self.gp.data();
        let set = TrainingSet::new(data.inputs[drop..].to_vec(), data.outputs[drop..].to_vec())?;
        let prior = self.gp.prior().clone();
        self.gp = GpModel::new(self.params.clone())?.with_prior(prior).with_data(set)?;
        Ok(())
    }

    /// Refits the kernel hyperparameters on the current targets (residuals
    /// from the prior).
    pub fn refit_hyperparameters(&mut self, budget: usize) -> Result<(), AgentError> {
        if self.rows.len() < 2 {
            return Ok(());
        }
        let data = self.gp.data();
        let residual = data
            .inputs
            .iter()
            .zip(&data.outputs)
            .map(|(x, y)| y - self.gp.prior().eval(x))
            .collect();
        let fit = fit_hyperparameters(&TrainingSet::new(data.inputs.clone(), residual)?, &self.params, budget)?;
        self.params = fit.params.clone();
        self.kernel = Arc::new(SplitKernel::new(&self.params, &self.action_coords));
        for (j, row) in self.rows.iter().enumerate() {
            for (i, other) in self.rows.iter().enumerate() {
                self.next_kernel[j][i] = self.kernel.state(&row.next, &other.state);
            }
        }
        let gp = std::mem::replace(&mut self.gp, GpModel::new(self.params.clone())?);
        self.gp = gp.with_params(fit.params)?;
        self.generation += 1;
        Ok(())
    }
}

/// The 3⁷ lidar probe states `{0.5, 2.5, 4.5}⁷`.
pub fn probe_states() -> Vec<Vec<f64>> {
    const LEVELS: [f64; 3] = [0.5, 2.5, 4.5];
    (0..3usize.pow(7))
        .map(|mut k| {
            (0..7)
                .map(|_| {
                    let v = LEVELS[k % 3];
                    k /= 3;
                    v
                })
                .collect()
        })
        .collect()
}

/// Greedy values at each probe state and the summed predictive variance at
/// the greedy actions.
pub fn probe_values(learner: &QLearner, probes: &[Vec<f64>]) -> Result<(Vec<f64>, f64), AgentError> {
    let mut values = Vec::with_capacity(probes.len());
    let mut variance = 0.0;
    for s in probes {
        let (a, v) = learner.q_max(s);
        values.push(v);
        variance += learner.predict(s, a)?.variance;
    }
    Ok((values, variance))
}

/// Sums over `probes` of the greedy value and of the predictive variance at
/// the greedy action.
pub fn probe_sums(learner: &QLearner, probes: &[Vec<f64>]) -> Result<(f64, f64), AgentError> {
    let (values, variance) = probe_values(learner, probes)?;
    Ok((values.iter().sum(), variance))
}

/// How the agent moves between levels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum Schedule {
    /// Variance-driven switching in both directions.
    Adaptive,
    /// Learn at the lowest level for a fixed number of samples, then move to
    /// the top for good; `learn_top = false` acts greedily there without
    /// learning.
    Handoff { lower_samples: usize, learn_top: bool },
}

/// Stop once the average cumulative top-level reward settles.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Plateau {
    pub every: usize,
    pub rel_tol: f64,
}

impl Default for Plateau {
    fn default() -> Self {
        Self {
            every: 200,
            rel_tol: 0.02,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GpqParams {
    pub sigma_th: f64,
    pub sigma_sum_th: f64,
    pub window_len: usize,
    pub epsilon: f64,
    pub gamma: f64,
    pub kernel: KernelParams,
    pub schedule: Schedule,
    pub plateau: Option<Plateau>,
    pub budget: Budget,
    pub partial_refresh: Option<PartialRefresh>,
    /// Refit hyperparameters every this many samples at a level.
    pub refit_every: Option<usize>,
    pub refit_budget: usize,
    pub capacity: usize,
    /// Record probe-set value and variance sums every this many top samples.
    pub probe_every: Option<usize>,
}

impl Default for GpqParams {
    fn default() -> Self {
        Self {
            sigma_th: 15.0,
            sigma_sum_th: 60.0,
            window_len: 5,
            epsilon: 0.1,
            gamma: 0.7,
            kernel: KernelParams::lidar_q_defaults(),
            schedule: Schedule::Adaptive,
            plateau: Some(Plateau::default()),
            budget: Budget::default(),
            partial_refresh: None,
            refit_every: None,
            refit_budget: 30,
            capacity: crate::gp::DEFAULT_CAPACITY,
            probe_every: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GpqOutcome {
    pub trace: AgentTrace,
    pub learners: Vec<QLearner>,
}

fn rho_map(chain: &FidelityChain, upper: usize) -> StateMap {
    let chain = chain.clone();
    Arc::new(move |s: &[f64]| chain.rho(upper, s))
}

/// Runs the model-free agent. A one-level chain is plain GP Q-learning.
pub fn run(chain: &FidelityChain, params: &GpqParams, seed: u64) -> Result<GpqOutcome, AgentError> {
    if !(0.0..=1.0).contains(&params.epsilon) {
        return Err(AgentError::Config(format!("epsilon {} outside [0, 1]", params.epsilon)));
    }
    if params.kernel.dim() != chain.state_dim() + 1 {
        return Err(AgentError::Config(format!(
            "Q kernel has {} lengthscales, chain needs {}",
            params.kernel.dim(),
            chain.state_dim() + 1
        )));
    }
    let d = chain.depth();
    let top = d - 1;
    let coords: Vec<f64> = match chain.n_actions() {
        N_TURNS => (0..N_TURNS).map(turn_rate).collect(),
        n => (0..n).map(|a| a as f64).collect(),
    };
    let mut learners = Vec::with_capacity(d);
    for _ in 0..d {
        learners.push(QLearner::new(params.kernel.clone(), coords.clone(), params.gamma, params.capacity)?);
    }
    let mut stale = vec![false; d];
    let mut since_refit = vec![0usize; d];

    let mut session = ChainSession::new(chain.clone(), seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut switch = SwitchController::new(params.sigma_th, params.sigma_sum_th, params.window_len);
    let mut trace = AgentTrace::new(d);
    let probes = params.probe_every.map(|_| probe_states());

    let mut level = 0;
    let mut s = session.observe(0);
    let mut top_reward = 0.0;
    let mut last_avg: Option<f64> = None;
    let mut last_probe: Option<Vec<f64>> = None;
    let mut t = 0;

    let rechain = |learners: &mut Vec<QLearner>, upper: usize| -> Result<(), AgentError> {
        let prior = learners[upper - 1].snapshot(rho_map(chain, upper));
        learners[upper].set_prior(Some(prior))
    };

    let stop = loop {
        if let Some(reason) = params.budget.exhausted(session.total_samples(), session.samples(top)) {
            break reason;
        }
        if let Schedule::Handoff { lower_samples, .. } = params.schedule {
            while level < top && session.samples(0) >= lower_samples {
                s = session.switch_up(level);
                level += 1;
                rechain(&mut learners, level)?;
            }
        }
        let frozen = matches!(params.schedule, Schedule::Handoff { learn_top: false, .. }) && level == top && d > 1;
        let values = learners[level].values(&s);
        let a = if frozen {
            argmax(&values)
        } else {
            epsilon_greedy(&values, params.epsilon, &mut rng)
        };

        if params.schedule == Schedule::Adaptive {
            while level > 0 {
                let mapped = chain.rho(level, &s);
                let below = learners[level - 1].predict(&mapped, a)?.std();
                if !switch.should_descend(below) {
                    break;
                }
                s = session.switch_down(level);
                level -= 1;
                switch.clear();
            }
        }

        let sigma = learners[level].predict(&s, a)?.std();
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

        if !frozen {
            let row = Transition {
                state: s.clone(),
                action: a,
                reward: out.reward,
                next: out.next.clone(),
                terminal: out.terminal,
            };
            learners[level].learn(row, params.partial_refresh.as_ref(), &mut rng)?;
            since_refit[level] += 1;
            if let Some(every) = params.refit_every {
                if since_refit[level] >= every {
                    learners[level].refit_hyperparameters(params.refit_budget)?;
                    since_refit[level] = 0;
                }
            }
            for flag in stale.iter_mut().skip(level + 1) {
                *flag = true;
            }
        }
        s = if out.terminal { session.observe(level) } else { out.next };
        switch.push(sigma);

        if level == top {
            let n = session.samples(top);
            top_reward += out.reward;
            let avg = top_reward / n as f64;
            trace.push_point("avg_reward", n as f64, avg);
            if let (Some(every), Some(probes)) = (params.probe_every, &probes) {
                if n % every.max(1) == 0 {
                    let (values, var) = probe_values(&learners[top], probes)?;
                    if let Some(prev) = &last_probe {
                        let change: f64 = values.iter().zip(prev).map(|(a, b)| (a - b).abs()).sum();
                        trace.push_point("probe_abs_change", n as f64, change);
                    }
                    trace.push_point("probe_value", n as f64, values.iter().sum());
                    trace.push_point("probe_variance", n as f64, var);
                    last_probe = Some(values);
                }
            }
            if let Some(rule) = &params.plateau {
                if n % rule.every.max(1) == 0 {
                    let settled = last_avg.is_some_and(|prev| (avg - prev).abs() <= rule.rel_tol * prev.abs());
                    last_avg = Some(avg);
                    if settled {
                        break StopReason::Converged;
                    }
                }
            }
        } else if params.schedule == Schedule::Adaptive && switch.should_ascend() {
            s = session.switch_up(level);
            level += 1;
            switch.clear();
            if stale[level] {
                rechain(&mut learners, level)?;
                stale[level] = false;
            }
        }
    };
    trace.stop = Some(stop);
    Ok(GpqOutcome { trace, learners })
}
