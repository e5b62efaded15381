//! Simulators of increasing fidelity and the chains that link them.

pub mod continuous;
pub mod corridor;
pub mod geometry;
pub mod grid;
pub mod spec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use continuous::ContinuousNav;
pub use corridor::{CorridorParams, CorridorWorld};
pub use grid::{Cell, GridLayout, GridWorld, Rewards, MOVES, STAY};
pub use spec::{ChainSpec, LevelSpec, CHAIN_SCHEMA_VERSION};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("invalid environment: {0}")]
    Invalid(String),
    #[error("levels {lower} and {upper} cannot be chained: {reason}")]
    Incompatible { lower: usize, upper: usize, reason: String },
    #[error("chain definition: {0}")]
    Spec(String),
}

/// Result of one environment step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    /// State reached by the transition, before any reset.
    pub next: Vec<f64>,
    pub reward: f64,
    pub collision: bool,
    /// The episode ended; the environment has already reset to its start.
    pub terminal: bool,
}

/// Any of the simulators a chain level can hold.
#[derive(Clone, Debug)]
pub enum Env {
    Grid(GridWorld),
    Continuous(ContinuousNav),
    Corridor(CorridorWorld),
}

impl Env {
    /// Current state as seen by the agent: cell coordinates, a position, or
    /// the 7 lidar readings.
    pub fn observe(&self) -> Vec<f64> {
        match self {
            Env::Grid(g) => GridLayout::center(g.position()).to_vec(),
            Env::Continuous(c) => c.position().to_vec(),
            Env::Corridor(w) => w.scan().to_vec(),
        }
    }

    pub fn step<R: Rng + ?Sized>(&mut self, a: usize, rng: &mut R) -> StepOutcome {
        match self {
            Env::Grid(g) => g.step(a, rng),
            Env::Continuous(c) => c.step(a, rng),
            Env::Corridor(w) => w.step(a, rng),
        }
    }

    pub fn reset(&mut self) {
        match self {
            Env::Grid(g) => g.reset(),
            Env::Continuous(c) => c.reset(),
            Env::Corridor(w) => w.reset(),
        }
    }

    pub fn n_actions(&self) -> usize {
        match self {
            Env::Grid(_) | Env::Continuous(_) => MOVES.len(),
            Env::Corridor(_) => corridor::N_TURNS,
        }
    }

    pub fn state_dim(&self) -> usize {
        match self {
            Env::Grid(_) | Env::Continuous(_) => 2,
            Env::Corridor(_) => corridor::N_RAYS,
        }
    }

    /// Full simulator pose, enough to resume this level later.
    pub fn pose(&self) -> Vec<f64> {
        match self {
            Env::Grid(g) => GridLayout::center(g.position()).to_vec(),
            Env::Continuous(c) => c.position().to_vec(),
            Env::Corridor(w) => w.pose().to_vec(),
        }
    }

    pub fn set_pose(&mut self, pose: &[f64]) {
        match self {
            Env::Grid(g) => {
                let c = g.layout().nearest_cell([pose[0], pose[1]]);
                g.set_position(c);
            }
            Env::Continuous(c) => c.set_position([pose[0], pose[1]]),
            Env::Corridor(w) => w.set_pose([pose[0], pose[1], pose[2]]),
        }
    }

    /// Cell layout of the grid-based worlds.
    pub fn layout(&self) -> Option<&GridLayout> {
        match self {
            Env::Grid(g) => Some(g.layout()),
            Env::Continuous(c) => Some(c.layout()),
            Env::Corridor(_) => None,
        }
    }

    /// Reward constants of the grid-based worlds.
    pub fn rewards(&self) -> Option<&Rewards> {
        match self {
            Env::Grid(g) => Some(g.rewards()),
            Env::Continuous(c) => Some(c.rewards()),
            Env::Corridor(_) => None,
        }
    }

    /// Deterministic reference MDP of the noise-free dynamics of a grid-based
    /// world.
    pub fn reference_mdp(&self, gamma: f64) -> Option<Result<crate::mdp::DiscreteMdp, EnvError>> {
        match self {
            Env::Grid(g) => Some(g.true_mdp(gamma)),
            Env::Continuous(c) => Some(c.layout().deterministic_mdp(c.rewards(), gamma)),
            Env::Corridor(_) => None,
        }
    }

    fn family(&self) -> &'static str {
        match self {
            Env::Grid(_) | Env::Continuous(_) => "grid",
            Env::Corridor(_) => "corridor",
        }
    }
}

/// Ordered simulators Σ₁..Σ_d (index 0 is the lowest fidelity).
#[derive(Clone, Debug)]
pub struct FidelityChain {
    levels: Vec<Env>,
    lidar_resolution: f64,
}

impl FidelityChain {
    pub fn new(levels: Vec<Env>, lidar_resolution: f64) -> Result<Self, EnvError> {
        if levels.is_empty() {
            return Err(EnvError::Invalid("a chain needs at least one level".into()));
        }
        if !(lidar_resolution > 0.0) {
            return Err(EnvError::Invalid(format!("lidar resolution {lidar_resolution} must be positive")));
        }
        for i in 1..levels.len() {
            let (lo, hi) = (&levels[i - 1], &levels[i]);
            let bad = |reason: String| EnvError::Incompatible {
                lower: i - 1,
                upper: i,
                reason,
            };
            if lo.family() != hi.family() {
                return Err(bad(format!("{} world above {} world", hi.family(), lo.family())));
            }
            if lo.n_actions() != hi.n_actions() {
                return Err(bad("action sets differ".into()));
            }
            if let (Some(a), Some(b)) = (lo.layout(), hi.layout()) {
                if a.width() != b.width() || a.height() != b.height() {
                    return Err(bad("grid dimensions differ".into()));
                }
                if a.start() != b.start() || a.goal() != b.goal() {
                    return Err(bad("start or goal differ".into()));
                }
            }
        }
        Ok(Self {
            levels,
            lidar_resolution,
        })
    }

    /// A single simulator as a one-level chain.
    pub fn single(env: Env) -> Self {
        Self {
            levels: vec![env],
            lidar_resolution: corridor::DEFAULT_RESOLUTION,
        }
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    pub fn level(&self, i: usize) -> &Env {
        &self.levels[i]
    }

    pub fn level_mut(&mut self, i: usize) -> &mut Env {
        &mut self.levels[i]
    }

    pub fn levels(&self) -> &[Env] {
        &self.levels
    }

    pub fn lidar_resolution(&self) -> f64 {
        self.lidar_resolution
    }

    pub fn n_actions(&self) -> usize {
        self.levels[0].n_actions()
    }

    pub fn state_dim(&self) -> usize {
        self.levels[0].state_dim()
    }

    /// A chain made of only the top level.
    pub fn top_only(&self) -> Self {
        Self {
            levels: vec![self.levels[self.levels.len() - 1].clone()],
            lidar_resolution: self.lidar_resolution,
        }
    }

    /// ρ: maps a state of level `upper` to a state of level `upper − 1`.
    ///
    /// Grid-based worlds map to the nearest cell centre; lidar states are
    /// rounded to the chain's resolution.
    pub fn rho(&self, upper: usize, s: &[f64]) -> Vec<f64> {
        assert!(upper >= 1 && upper < self.depth(), "rho needs an upper level index >= 1");
        match &self.levels[upper - 1] {
            Env::Grid(g) => GridLayout::center(g.layout().nearest_cell([s[0], s[1]])).to_vec(),
            Env::Continuous(c) => GridLayout::center(c.layout().nearest_cell([s[0], s[1]])).to_vec(),
            Env::Corridor(w) => corridor::round_readings(s, self.lidar_resolution, w.params().max_range),
        }
    }
}

/// Live run over a chain: per-level random streams and sample counters.
///
/// Every step goes through [`ChainSession::step`], so sample accounting is
/// done on the environment side and is identical for every agent.
#[derive(Clone, Debug)]
pub struct ChainSession {
    chain: FidelityChain,
    rngs: Vec<ChaCha8Rng>,
    samples: Vec<usize>,
    saved: Vec<Option<Vec<f64>>>,
}

impl ChainSession {
    /// Level `i` draws from stream `i + 1` of a ChaCha8 generator keyed by
    /// `seed`; stream 0 is left for the agent.
    pub fn new(chain: FidelityChain, seed: u64) -> Self {
        let d = chain.depth();
        let rngs = (0..d)
            .map(|i| {
                let mut r = ChaCha8Rng::seed_from_u64(seed);
                r.set_stream(i as u64 + 1);
                r
            })
            .collect();
        Self {
            chain,
            rngs,
            samples: vec![0; d],
            saved: vec![None; d],
        }
    }

    pub fn chain(&self) -> &FidelityChain {
        &self.chain
    }

    pub fn depth(&self) -> usize {
        self.chain.depth()
    }

    pub fn observe(&self, level: usize) -> Vec<f64> {
        self.chain.level(level).observe()
    }

    pub fn step(&mut self, level: usize, a: usize) -> StepOutcome {
        self.samples[level] += 1;
        let (env, rng) = (&mut self.chain.levels[level], &mut self.rngs[level]);
        env.step(a, rng)
    }

    pub fn samples(&self, level: usize) -> usize {
        self.samples[level]
    }

    pub fn sample_counts(&self) -> &[usize] {
        &self.samples
    }

    pub fn total_samples(&self) -> usize {
        self.samples.iter().sum()
    }

    /// Leaves level `from` for `from − 1`, landing at ρ(s). A lidar world is
    /// rebuilt around the rounded readings. Returns the new state.
    pub fn switch_down(&mut self, from: usize) -> Vec<f64> {
        assert!(from >= 1);
        let s = self.observe(from);
        self.saved[from] = Some(self.chain.level(from).pose());
        let mapped = self.chain.rho(from, &s);
        let res = self.chain.lidar_resolution;
        match self.chain.level_mut(from - 1) {
            Env::Corridor(w) => w.morph(&mapped, res),
            env => env.set_pose(&mapped),
        }
        self.observe(from - 1)
    }

    /// Leaves level `from` for `from + 1`, resuming where that level was
    /// last left, or at its start if it was never visited.
    pub fn switch_up(&mut self, from: usize) -> Vec<f64> {
        let to = from + 1;
        self.saved[from] = Some(self.chain.level(from).pose());
        match self.saved[to].clone() {
            Some(p) => self.chain.level_mut(to).set_pose(&p),
            None => self.chain.level_mut(to).reset(),
        }
        self.observe(to)
    }
}
