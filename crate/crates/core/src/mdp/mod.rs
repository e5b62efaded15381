//! Tabular MDPs, value iteration, and greedy / ε-greedy action selection.

use rand::Rng;
use thiserror::Error;

/// Convergence threshold on the per-sweep max change used by the planner.
pub const DEFAULT_TOL: f64 = 0.1;
pub const DEFAULT_GAMMA: f64 = 0.95;
pub const DEFAULT_EPSILON: f64 = 0.1;

const MAX_SWEEPS: usize = 1_000_000;
const STOCHASTIC_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MdpError {
    #[error("outgoing probabilities of (state {state}, action {action}) sum to {sum}")]
    NotStochastic { state: usize, action: usize, sum: f64 },
    #[error("invalid transition entry at (state {state}, action {action}): {reason}")]
    InvalidEntry {
        state: usize,
        action: usize,
        reason: String,
    },
    #[error("discount factor must lie in [0, 1), got {0}")]
    InvalidGamma(f64),
    #[error("tolerance must be positive, got {0}")]
    InvalidTolerance(f64),
    #[error("expected {expected} transition rows, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("value iteration did not converge within {0} sweeps")]
    NoConvergence(usize),
}

/// One possible successor of a state-action pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Outcome {
    pub next: usize,
    pub prob: f64,
    pub reward: f64,
}

/// Finite MDP stored as sparse rows of `(s′, P[s][a][s′], R[s][a][s′])`.
#[derive(Clone, Debug)]
pub struct DiscreteMdp {
    n_states: usize,
    n_actions: usize,
    gamma: f64,
    rows: Vec<Vec<Outcome>>,
}

impl DiscreteMdp {
    /// `rows[s * n_actions + a]` lists the outcomes of taking `a` in `s`.
    pub fn new(n_states: usize, n_actions: usize, gamma: f64, rows: Vec<Vec<Outcome>>) -> Result<Self, MdpError> {
        if !(0.0..1.0).contains(&gamma) {
            return Err(MdpError::InvalidGamma(gamma));
        }
        if rows.len() != n_states * n_actions {
            return Err(MdpError::Shape {
                expected: n_states * n_actions,
                got: rows.len(),
            });
        }
        for (idx, row) in rows.iter().enumerate() {
            let (state, action) = (idx / n_actions, idx % n_actions);
            let bad = |reason: String| MdpError::InvalidEntry { state, action, reason };
            let mut sum = 0.0;
            for o in row {
                if o.next >= n_states {
                    return Err(bad(format!("successor {} out of range", o.next)));
                }
                if !(0.0..=1.0).contains(&o.prob) {
                    return Err(bad(format!("probability {} outside [0, 1]", o.prob)));
                }
                if !o.reward.is_finite() {
                    return Err(bad("non-finite reward".into()));
                }
                sum += o.prob;
            }
            if (sum - 1.0).abs() > STOCHASTIC_TOL {
                return Err(MdpError::NotStochastic { state, action, sum });
            }
        }
        Ok(Self {
            n_states,
            n_actions,
            gamma,
            rows,
        })
    }

    /// Builds from dense `P[s][a][s′]` and `R[s][a][s′]` tensors, dropping
    /// zero-probability successors.
    pub fn from_dense(p: &[Vec<Vec<f64>>], r: &[Vec<Vec<f64>>], gamma: f64) -> Result<Self, MdpError> {
        let n_states = p.len();
        let n_actions = p.first().map_or(0, Vec::len);
        let mut rows = Vec::with_capacity(n_states * n_actions);
        for s in 0..n_states {
            if p[s].len() != n_actions || r.get(s).map_or(true, |rs| rs.len() != n_actions) {
                return Err(MdpError::Shape {
                    expected: n_actions,
                    got: p[s].len(),
                });
            }
            for a in 0..n_actions {
                if p[s][a].len() != n_states || r[s][a].len() != n_states {
                    return Err(MdpError::Shape {
                        expected: n_states,
                        got: p[s][a].len(),
                    });
                }
                rows.push(
                    (0..n_states)
                        .filter(|&t| p[s][a][t] != 0.0)
                        .map(|t| Outcome {
                            next: t,
                            prob: p[s][a][t],
                            reward: r[s][a][t],
                        })
                        .collect(),
                );
            }
        }
        Self::new(n_states, n_actions, gamma, rows)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn outcomes(&self, s: usize, a: usize) -> &[Outcome] {
        &self.rows[s * self.n_actions + a]
    }

    /// One synchronous application of the Bellman optimality operator.
    pub fn bellman_backup(&self, q: &QTable) -> QTable {
        let v: Vec<f64> = (0..self.n_states).map(|s| q.state_value(s)).collect();
        let values = self
            .rows
            .iter()
            .map(|row| row.iter().map(|o| o.prob * (o.reward + self.gamma * v[o.next])).sum())
            .collect();
        QTable {
            n_states: self.n_states,
            n_actions: self.n_actions,
            values,
        }
    }
}

/// Action values `Q[s][a]`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct QTable {
    n_states: usize,
    n_actions: usize,
    values: Vec<f64>,
}

impl QTable {
    pub fn filled(n_states: usize, n_actions: usize, value: f64) -> Self {
        Self {
            n_states,
            n_actions,
            values: vec![value; n_states * n_actions],
        }
    }

    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        Self::filled(n_states, n_actions, 0.0)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.n_actions + a]
    }

    pub fn set(&mut self, s: usize, a: usize, v: f64) {
        self.values[s * self.n_actions + a] = v;
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.n_actions..(s + 1) * self.n_actions]
    }

    /// V(s) = max_a Q(s, a).
    pub fn state_value(&self, s: usize) -> f64 {
        self.row(s).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn greedy_action(&self, s: usize) -> usize {
        argmax(self.row(s))
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// max_{s,a} |self − other|.
    pub fn max_abs_diff(&self, other: &QTable) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Deterministic policy: one action index per state.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Policy(pub Vec<usize>);

impl Policy {
    pub fn action(&self, s: usize) -> usize {
        self.0[s]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate().skip(1) {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

pub fn greedy_policy(q: &QTable) -> Policy {
    Policy((0..q.n_states()).map(|s| q.greedy_action(s)).collect())
}

/// ε-greedy selection over one row of action values.
///
/// Always draws one uniform `u ∈ [0, 1)`; when `u < ε` a second draw picks an
/// action uniformly from the whole row, otherwise the argmax is returned.
pub fn epsilon_greedy<R: Rng + ?Sized>(row: &[f64], epsilon: f64, rng: &mut R) -> usize {
    assert!(!row.is_empty(), "epsilon_greedy needs at least one action");
    let u: f64 = rng.random();
    if u < epsilon {
        rng.random_range(0..row.len())
    } else {
        argmax(row)
    }
}

/// Synchronous value iteration from Q ≡ 0 until the largest per-entry change
/// of a sweep is at most `tol`.
pub fn value_iteration(mdp: &DiscreteMdp, tol: f64) -> Result<QTable, MdpError> {
    value_iteration_traced(mdp, tol).map(|(q, _)| q)
}

/// [`value_iteration`] that also returns the max change of every sweep.
pub fn value_iteration_traced(mdp: &DiscreteMdp, tol: f64) -> Result<(QTable, Vec<f64>), MdpError> {
    sweep_until(mdp, tol, QTable::zeros(mdp.n_states, mdp.n_actions))
}

/// Value iteration started from `init` instead of zero. Converges to the
/// same fixed point; used when re-planning after a small model change.
pub fn value_iteration_from(mdp: &DiscreteMdp, tol: f64, init: QTable) -> Result<QTable, MdpError> {
    if init.n_states != mdp.n_states || init.n_actions != mdp.n_actions {
        return Err(MdpError::Shape {
            expected: mdp.n_states * mdp.n_actions,
            got: init.values.len(),
        });
    }
    sweep_until(mdp, tol, init).map(|(q, _)| q)
}

fn sweep_until(mdp: &DiscreteMdp, tol: f64, mut q: QTable) -> Result<(QTable, Vec<f64>), MdpError> {
    if !(tol > 0.0) {
        return Err(MdpError::InvalidTolerance(tol));
    }
    let mut v: Vec<f64> = (0..mdp.n_states).map(|s| q.state_value(s)).collect();
    let mut deltas = Vec::new();
    for _ in 0..MAX_SWEEPS {
        let mut delta: f64 = 0.0;
        for (slot, row) in q.values.iter_mut().zip(&mdp.rows) {
            let new: f64 = row.iter().map(|o| o.prob * (o.reward + mdp.gamma * v[o.next])).sum();
            delta = delta.max((new - *slot).abs());
            *slot = new;
        }
        for (s, vs) in v.iter_mut().enumerate() {
            *vs = q.state_value(s);
        }
        deltas.push(delta);
        if delta <= tol {
            return Ok((q, deltas));
        }
    }
    Err(MdpError::NoConvergence(MAX_SWEEPS))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn det(next: usize, reward: f64) -> Vec<Outcome> {
        vec![Outcome { next, prob: 1.0, reward }]
    }

    #[test]
    fn self_loop_geometric_series() {
        let mdp = DiscreteMdp::new(1, 1, 0.9, vec![det(0, 1.0)]).unwrap();
        let q = value_iteration(&mdp, 1e-6).unwrap();
        assert!((q.get(0, 0) - 10.0).abs() < 1e-5);
    }

    #[test]
    fn two_state_chain_matches_linear_solve() {
        // s0 -> s1 with reward 0; s1 absorbing with reward 1; gamma 0.5.
        // Linear solve: Q(s1) = 1 / (1 - 0.5) = 2, Q(s0) = 0 + 0.5 * 2 = 1.
        let mdp = DiscreteMdp::new(2, 1, 0.5, vec![det(1, 0.0), det(1, 1.0)]).unwrap();
        let tol = 1e-9;
        let q = value_iteration(&mdp, tol).unwrap();
        assert!((q.get(0, 0) - 1.0).abs() <= 2.0 * tol);
        assert!((q.get(1, 0) - 2.0).abs() <= 2.0 * tol);
    }

    #[test]
    fn default_tolerance_is_one_tenth() {
        assert_eq!(DEFAULT_TOL, 0.1);
        assert_eq!(DEFAULT_EPSILON, 0.1);
    }

    #[test]
    fn rejects_non_stochastic_rows() {
        let rows = vec![vec![Outcome {
            next: 0,
            prob: 0.7,
            reward: 0.0,
        }]];
        assert!(matches!(
            DiscreteMdp::new(1, 1, 0.9, rows),
            Err(MdpError::NotStochastic { .. })
        ));
        assert!(matches!(
            DiscreteMdp::new(1, 1, 1.0, vec![det(0, 0.0)]),
            Err(MdpError::InvalidGamma(_))
        ));
    }

    #[test]
    fn argmax_and_ties() {
        assert_eq!(argmax(&[1.0, 3.0, 2.0]), 1);
        assert_eq!(argmax(&[5.0, 5.0]), 0);
    }

    #[test]
    fn greedy_policy_is_shift_invariant() {
        let mut q = QTable::zeros(3, 3);
        for (i, v) in [0.3, -1.0, 2.0, 4.0, 4.0, 1.0, -3.0, -2.0, -2.5].into_iter().enumerate() {
            q.set(i / 3, i % 3, v);
        }
        let mut shifted = q.clone();
        for s in 0..3 {
            for a in 0..3 {
                shifted.set(s, a, q.get(s, a) + 17.25);
            }
        }
        assert_eq!(greedy_policy(&q), greedy_policy(&shifted));
        assert_eq!(greedy_policy(&q).0, vec![2, 0, 1]);
    }

    #[test]
    fn epsilon_zero_is_greedy() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            assert_eq!(epsilon_greedy(&[0.0, 2.0, 1.0], 0.0, &mut rng), 1);
        }
    }

    #[test]
    fn epsilon_one_is_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 100_000;
        let mut counts = [0usize; 19];
        let row = [0.0; 19];
        for _ in 0..n {
            counts[epsilon_greedy(&row, 1.0, &mut rng)] += 1;
        }
        let p = 1.0 / 19.0;
        let mean = n as f64 * p;
        let sd = (n as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - mean).abs() <= 3.0 * sd, "count {c} vs {mean}±{sd}");
        }
    }

    #[test]
    fn sweeps_contract() {
        let rows = vec![
            vec![
                Outcome { next: 0, prob: 0.5, reward: 1.0 },
                Outcome { next: 1, prob: 0.5, reward: 0.0 },
            ],
            det(2, 2.0),
            det(0, -1.0),
            det(1, 0.5),
            det(2, 0.0),
            det(2, 3.0),
        ];
        let mdp = DiscreteMdp::new(3, 2, 0.8, rows).unwrap();
        let (q, deltas) = value_iteration_traced(&mdp, 1e-8).unwrap();
        for w in deltas.windows(2) {
            assert!(w[1] <= 0.8 * w[0] + 1e-12);
        }
        let residual = q.max_abs_diff(&mdp.bellman_backup(&q));
        assert!(residual <= 1e-8);
        let warm = value_iteration_from(&mdp, 1e-8, QTable::filled(3, 2, 50.0)).unwrap();
        assert!(warm.max_abs_diff(&q) < 1e-6);
    }
}
