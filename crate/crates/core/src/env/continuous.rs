//! Continuous point-robot world over the same workspace as the grid world.
//!
//! Actions are the grid's unit velocity vectors; each step adds Gaussian
//! actuation noise per axis. Blocked cells become solid boxes and the robot
//! stops just short of the first face it would cross.

use rand::Rng;
use rand_distr::StandardNormal;

use super::geometry::{exit_fraction, Aabb, Point};
use super::grid::{GridLayout, Rewards, MOVES};
use super::{EnvError, StepOutcome};

const CONTACT_BACKOFF: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct ContinuousNav {
    layout: GridLayout,
    noise_std: f64,
    rewards: Rewards,
    boxes: Vec<Aabb>,
    pos: Point,
}

impl ContinuousNav {
    pub fn new(layout: GridLayout, noise_std: f64, rewards: Rewards) -> Result<Self, EnvError> {
        if !(noise_std >= 0.0) || !noise_std.is_finite() {
            return Err(EnvError::Invalid(format!("actuation noise std {noise_std} must be finite and >= 0")));
        }
        let boxes = layout
            .blocked_runs()
            .into_iter()
            .map(|[x0, y0, x1, y1]| Aabb {
                min: [x0 as f64 - 0.5, y0 as f64 - 0.5],
                max: [x1 as f64 + 0.5, y1 as f64 + 0.5],
            })
            .collect();
        let pos = GridLayout::center(layout.start());
        Ok(Self {
            layout,
            noise_std,
            rewards,
            boxes,
            pos,
        })
    }

    pub fn layout(&self) -> &GridLayout {
        &self.layout
    }

    pub fn rewards(&self) -> &Rewards {
        &self.rewards
    }

    pub fn noise_std(&self) -> f64 {
        self.noise_std
    }

    pub fn position(&self) -> Point {
        self.pos
    }

    pub fn set_position(&mut self, p: Point) {
        self.pos = p;
    }

    pub fn reset(&mut self) {
        self.pos = GridLayout::center(self.layout.start());
    }

    fn bounds(&self) -> (Point, Point) {
        (
            [-0.5, -0.5],
            [self.layout.width() as f64 - 0.5, self.layout.height() as f64 - 0.5],
        )
    }

    /// Resolves the move `p → p + delta` against walls and bounds.
    pub fn resolve_motion(&self, p: Point, delta: Point) -> (Point, bool) {
        let (lo, hi) = self.bounds();
        let mut hit = exit_fraction(lo, hi, p, delta);
        for b in &self.boxes {
            if let Some(t) = b.entry_fraction(p, delta) {
                hit = Some(hit.map_or(t, |h: f64| h.min(t)));
            }
        }
        match hit {
            None => ([p[0] + delta[0], p[1] + delta[1]], false),
            Some(t) => {
                let len = (delta[0] * delta[0] + delta[1] * delta[1]).sqrt();
                let t = (t - CONTACT_BACKOFF / len).max(0.0);
                let q = [p[0] + t * delta[0], p[1] + t * delta[1]];
                ([q[0].clamp(lo[0], hi[0]), q[1].clamp(lo[1], hi[1])], true)
            }
        }
    }

    /// One transition. Draws the x noise then the y noise, always.
    pub fn step<R: Rng + ?Sized>(&mut self, a: usize, rng: &mut R) -> StepOutcome {
        let nx: f64 = rng.sample(StandardNormal);
        let ny: f64 = rng.sample(StandardNormal);
        let [mx, my] = MOVES[a];
        let delta = [mx as f64 + self.noise_std * nx, my as f64 + self.noise_std * ny];
        let (next, collision) = self.resolve_motion(self.pos, delta);
        let terminal = self.layout.nearest_cell(next) == self.layout.goal();
        let reward = if terminal {
            self.rewards.goal
        } else if collision {
            self.rewards.collision
        } else {
            self.rewards.step
        };
        self.pos = if terminal {
            GridLayout::center(self.layout.start())
        } else {
            next
        };
        StepOutcome {
            next: next.to_vec(),
            reward,
            collision,
            terminal,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn world(noise: f64) -> ContinuousNav {
        let layout = GridLayout::new(21, 21, &[[5, 0, 5, 20]], [2, 2], [18, 18]).unwrap();
        ContinuousNav::new(layout, noise, Rewards::default()).unwrap()
    }

    #[test]
    fn free_move() {
        let mut w = world(0.0);
        w.set_position([3.0, 3.0]);
        let o = w.step(0, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(o.next, vec![4.0, 3.0]);
        assert_eq!(o.reward, 1.0);
    }

    #[test]
    fn wall_clamps_at_face() {
        // The blocked column x=5 occupies [4.5, 5.5].
        let mut w = world(0.0);
        w.set_position([4.0, 3.0]);
        let o = w.step(0, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(o.collision);
        assert_eq!(o.reward, -10.0);
        assert!((o.next[0] - 4.5).abs() < 1e-5 && o.next[0] < 4.5);
        assert_eq!(o.next[1], 3.0);
    }

    #[test]
    fn bounds_clamp() {
        let mut w = world(0.0);
        w.set_position([0.0, 3.0]);
        let o = w.step(1, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(o.collision);
        assert!(o.next[0] >= -0.5 && o.next[0] < -0.49);
    }

    #[test]
    fn noise_std_is_recovered() {
        let mut w = world(0.2);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 10_000;
        let (mut dx, mut dy) = (Vec::with_capacity(n), Vec::with_capacity(n));
        for _ in 0..n {
            w.set_position([10.0, 10.0]);
            let o = w.step(4, &mut rng);
            dx.push(o.next[0] - 10.0);
            dy.push(o.next[1] - 10.0);
        }
        for d in [dx, dy] {
            let m = d.iter().sum::<f64>() / n as f64;
            let sd = (d.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
            assert!((sd - 0.2).abs() <= 0.05 * 0.2, "sd {sd}");
        }
    }
}
