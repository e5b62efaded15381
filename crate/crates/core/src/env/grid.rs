//! Discrete grid world with slip noise, plus the cell layout shared with the
//! continuous navigation world.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::geometry::Point;
use super::{EnvError, StepOutcome};
use crate::mdp::{DiscreteMdp, Outcome};

/// Unit moves in cell coordinates: +x, −x, +y, −y, stay.
pub const MOVES: [[i64; 2]; 5] = [[1, 0], [-1, 0], [0, 1], [0, -1], [0, 0]];
pub const STAY: usize = 4;

pub type Cell = [usize; 2];

/// Reward constants shared by the grid and continuous worlds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rewards {
    pub step: f64,
    pub collision: f64,
    pub goal: f64,
}

impl Default for Rewards {
    fn default() -> Self {
        Self {
            step: 1.0,
            collision: -10.0,
            goal: 100.0,
        }
    }
}

/// Rectangular cell workspace with blocked cells, a start and a goal.
///
/// Cell `(i, j)` is centred at `(i, j)` in world coordinates and covers
/// `[i − ½, i + ½] × [j − ½, j + ½]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridLayout {
    width: usize,
    height: usize,
    blocked: Vec<bool>,
    start: Cell,
    goal: Cell,
}

impl GridLayout {
    /// `walls` are inclusive cell rectangles `[x0, y0, x1, y1]`.
    pub fn new(width: usize, height: usize, walls: &[[usize; 4]], start: Cell, goal: Cell) -> Result<Self, EnvError> {
        if width == 0 || height == 0 {
            return Err(EnvError::Invalid("grid must have at least one cell".into()));
        }
        let mut blocked = vec![false; width * height];
        for w in walls {
            let [x0, y0, x1, y1] = *w;
            if x0 > x1 || y0 > y1 || x1 >= width || y1 >= height {
                return Err(EnvError::Invalid(format!("wall rectangle {w:?} outside {width}x{height} grid")));
            }
            for y in y0..=y1 {
                for x in x0..=x1 {
                    blocked[y * width + x] = true;
                }
            }
        }
        let layout = Self {
            width,
            height,
            blocked,
            start,
            goal,
        };
        for (name, c) in [("start", start), ("goal", goal)] {
            if c[0] >= width || c[1] >= height {
                return Err(EnvError::Invalid(format!("{name} {c:?} outside the grid")));
            }
            if layout.is_blocked(c) {
                return Err(EnvError::Invalid(format!("{name} {c:?} is inside a wall")));
            }
        }
        Ok(layout)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn n_cells(&self) -> usize {
        self.width * self.height
    }

    pub fn start(&self) -> Cell {
        self.start
    }

    pub fn goal(&self) -> Cell {
        self.goal
    }

    pub fn index(&self, c: Cell) -> usize {
        c[1] * self.width + c[0]
    }

    pub fn cell(&self, index: usize) -> Cell {
        [index % self.width, index / self.width]
    }

    pub fn is_blocked(&self, c: Cell) -> bool {
        self.blocked[self.index(c)]
    }

    /// Blocked cells as maximal horizontal runs `[x0, y, x1, y]`.
    pub fn blocked_runs(&self) -> Vec<[usize; 4]> {
        let mut runs = Vec::new();
        for y in 0..self.height {
            let mut x = 0;
            while x < self.width {
                if self.is_blocked([x, y]) {
                    let x0 = x;
                    while x + 1 < self.width && self.is_blocked([x + 1, y]) {
                        x += 1;
                    }
                    runs.push([x0, y, x, y]);
                }
                x += 1;
            }
        }
        runs
    }

    /// Result of a deterministic move: the landing cell and whether the move
    /// was blocked by a wall or the boundary.
    pub fn apply_move(&self, c: Cell, a: usize) -> (Cell, bool) {
        let [dx, dy] = MOVES[a];
        let (x, y) = (c[0] as i64 + dx, c[1] as i64 + dy);
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            return (c, true);
        }
        let next = [x as usize, y as usize];
        if self.is_blocked(next) {
            (c, true)
        } else {
            (next, false)
        }
    }

    /// Nearest cell centre; exact half-way points go to the lower index.
    pub fn nearest_cell(&self, p: Point) -> Cell {
        let round = |v: f64, n: usize| ((v - 0.5).ceil().max(0.0) as usize).min(n - 1);
        [round(p[0], self.width), round(p[1], self.height)]
    }

    pub fn center(c: Cell) -> Point {
        [c[0] as f64, c[1] as f64]
    }

    /// Reward of `s →a→ s′` as a known function: goal entry, a commanded
    /// move that runs into a wall or the border, or an ordinary step.
    pub fn known_reward(&self, rewards: &Rewards, s: Cell, a: usize, next: Cell) -> f64 {
        if next == self.goal {
            rewards.goal
        } else if self.apply_move(s, a).1 {
            rewards.collision
        } else {
            rewards.step
        }
    }

    /// Deterministic MDP over all cells: goal absorbing with zero reward,
    /// blocked cells as unreachable self-loops.
    pub fn deterministic_mdp(&self, rewards: &Rewards, gamma: f64) -> Result<DiscreteMdp, EnvError> {
        let n = self.n_cells();
        let mut rows = Vec::with_capacity(n * MOVES.len());
        for s in 0..n {
            let c = self.cell(s);
            for a in 0..MOVES.len() {
                if c == self.goal || self.is_blocked(c) {
                    rows.push(vec![Outcome {
                        next: s,
                        prob: 1.0,
                        reward: 0.0,
                    }]);
                    continue;
                }
                let (next, _) = self.apply_move(c, a);
                rows.push(vec![Outcome {
                    next: self.index(next),
                    prob: 1.0,
                    reward: self.known_reward(rewards, c, a, next),
                }]);
            }
        }
        DiscreteMdp::new(n, MOVES.len(), gamma, rows).map_err(|e| EnvError::Invalid(e.to_string()))
    }
}

/// Grid world whose commanded move slips to a different neighbour with
/// probability `slip_prob`.
#[derive(Clone, Debug)]
pub struct GridWorld {
    layout: GridLayout,
    slip_prob: f64,
    rewards: Rewards,
    pos: Cell,
}

impl GridWorld {
    pub fn new(layout: GridLayout, slip_prob: f64, rewards: Rewards) -> Result<Self, EnvError> {
        if !(0.0..=1.0).contains(&slip_prob) {
            return Err(EnvError::Invalid(format!("slip_prob {slip_prob} outside [0, 1]")));
        }
        let pos = layout.start();
        Ok(Self {
            layout,
            slip_prob,
            rewards,
            pos,
        })
    }

    pub fn layout(&self) -> &GridLayout {
        &self.layout
    }

    pub fn rewards(&self) -> &Rewards {
        &self.rewards
    }

    pub fn slip_prob(&self) -> f64 {
        self.slip_prob
    }

    pub fn position(&self) -> Cell {
        self.pos
    }

    pub fn set_position(&mut self, c: Cell) {
        self.pos = c;
    }

    pub fn reset(&mut self) {
        self.pos = self.layout.start();
    }

    /// Moves the slip can substitute for `a`: the other directions, or all
    /// four directions when `a` is stay.
    fn slip_targets(a: usize) -> impl Iterator<Item = usize> {
        (0..STAY).filter(move |&b| b != a)
    }

    /// One transition. Always draws `u`; a slip draws a second uniform index.
    pub fn step<R: Rng + ?Sized>(&mut self, a: usize, rng: &mut R) -> StepOutcome {
        let u: f64 = rng.random();
        let actual = if u < self.slip_prob {
            let options: Vec<usize> = Self::slip_targets(a).collect();
            options[rng.random_range(0..options.len())]
        } else {
            a
        };
        let (next, collision) = self.layout.apply_move(self.pos, actual);
        let terminal = next == self.layout.goal();
        let reward = if terminal {
            self.rewards.goal
        } else if collision {
            self.rewards.collision
        } else {
            self.rewards.step
        };
        self.pos = if terminal { self.layout.start() } else { next };
        StepOutcome {
            next: GridLayout::center(next).to_vec(),
            reward,
            collision,
            terminal,
        }
    }

    /// Exact outcome distribution `(next, prob, reward)` of `a` in `c`, with
    /// coinciding landing cells merged.
    pub fn outcome_distribution(&self, c: Cell, a: usize) -> Vec<(Cell, f64, f64)> {
        let mut out: Vec<(Cell, f64, f64)> = Vec::new();
        let mut add = |b: usize, p: f64| {
            if p == 0.0 {
                return;
            }
            let (next, collision) = self.layout.apply_move(c, b);
            let reward = if next == self.layout.goal() {
                self.rewards.goal
            } else if collision {
                self.rewards.collision
            } else {
                self.rewards.step
            };
            match out.iter_mut().find(|(n, _, r)| *n == next && *r == reward) {
                Some(entry) => entry.1 += p,
                None => out.push((next, p, reward)),
            }
        };
        add(a, 1.0 - self.slip_prob);
        let targets: Vec<usize> = Self::slip_targets(a).collect();
        for b in &targets {
            add(*b, self.slip_prob / targets.len() as f64);
        }
        out
    }

    /// The true MDP of this world (goal absorbing with zero reward).
    pub fn true_mdp(&self, gamma: f64) -> Result<DiscreteMdp, EnvError> {
        let layout = &self.layout;
        let n = layout.n_cells();
        let mut rows = Vec::with_capacity(n * MOVES.len());
        for s in 0..n {
            let c = layout.cell(s);
            for a in 0..MOVES.len() {
                if c == layout.goal() || layout.is_blocked(c) {
                    rows.push(vec![Outcome {
                        next: s,
                        prob: 1.0,
                        reward: 0.0,
                    }]);
                } else {
                    rows.push(
                        self.outcome_distribution(c, a)
                            .into_iter()
                            .map(|(next, prob, reward)| Outcome {
                                next: layout.index(next),
                                prob,
                                reward,
                            })
                            .collect(),
                    );
                }
            }
        }
        DiscreteMdp::new(n, MOVES.len(), gamma, rows).map_err(|e| EnvError::Invalid(e.to_string()))
    }
}
