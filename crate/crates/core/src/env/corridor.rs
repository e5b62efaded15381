//! Unicycle robot with a 7-ray planar lidar, driving at constant speed and
//! choosing among 19 turn rates.

use std::f64::consts::{FRAC_PI_8, PI};

use rand::Rng;
use rand_distr::StandardNormal;

use super::geometry::{cast_ray, Point, Segment};
use super::{EnvError, StepOutcome};

pub const N_RAYS: usize = 7;
pub const N_TURNS: usize = 19;
pub const RAY_SPACING: f64 = FRAC_PI_8;
pub const MAX_TURN: f64 = PI / 9.0;
pub const DEFAULT_MAX_RANGE: f64 = 5.0;
pub const DEFAULT_SPEED: f64 = 0.2;
pub const DEFAULT_COLLISION_REWARD: f64 = -50.0;
pub const DEFAULT_COLLISION_RADIUS: f64 = 0.15;
pub const DEFAULT_RESOLUTION: f64 = 0.5;

/// Half-width of a synthetic wall as seen from the robot, kept below the ray
/// spacing so that neighbouring rays never graze it.
const MORPH_HALF_ANGLE: f64 = 0.45 * RAY_SPACING;
const MORPH_ENCLOSURE: f64 = 5.5;

/// Angular velocity of each action: evenly spaced over `[−π/9, π/9]`.
pub fn turn_rate(action: usize) -> f64 {
    -MAX_TURN + action as f64 * (2.0 * MAX_TURN) / (N_TURNS - 1) as f64
}

/// Ray angles relative to the heading, from −3π/8 to 3π/8.
pub fn ray_offsets() -> [f64; N_RAYS] {
    std::array::from_fn(|k| (k as f64 - 3.0) * RAY_SPACING)
}

/// Robot pose `(x, y, heading)`.
pub type Pose = [f64; 3];

/// Readings of the 7 rays at `pose`, each clipped to `max_range`.
pub fn lidar_scan(walls: &[Segment], pose: Pose, max_range: f64) -> [f64; N_RAYS] {
    let origin = [pose[0], pose[1]];
    ray_offsets().map(|off| cast_ray(walls, origin, pose[2] + off, max_range))
}

/// Rounds each reading to the nearest multiple of `resolution`, kept within
/// `[resolution, max_range]`.
pub fn round_readings(readings: &[f64], resolution: f64, max_range: f64) -> Vec<f64> {
    readings
        .iter()
        .map(|r| ((r / resolution).round() * resolution).clamp(resolution, max_range))
        .collect()
}

/// Walls around the origin that reproduce `readings` for a robot at the
/// origin facing +x: one flat wall perpendicular to each short ray, plus an
/// enclosure beyond the sensor range.
pub fn synthetic_walls(readings: &[f64], max_range: f64) -> Vec<Segment> {
    let mut walls = Vec::with_capacity(N_RAYS + 4);
    for (r, off) in readings.iter().zip(ray_offsets()) {
        if *r < max_range {
            let (c, s) = (off.cos(), off.sin());
            let half = r * MORPH_HALF_ANGLE.tan();
            let mid = [r * c, r * s];
            walls.push(Segment::new(
                [mid[0] + half * s, mid[1] - half * c],
                [mid[0] - half * s, mid[1] + half * c],
            ));
        }
    }
    let e = MORPH_ENCLOSURE.max(max_range + 0.5);
    let corners = [[-e, -e], [e, -e], [e, e], [-e, e]];
    for k in 0..4 {
        walls.push(Segment::new(corners[k], corners[(k + 1) % 4]));
    }
    walls
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorridorParams {
    pub speed: f64,
    pub dt: f64,
    pub heading_noise_std: f64,
    pub collision_radius: f64,
    pub collision_reward: f64,
    pub max_range: f64,
}

impl Default for CorridorParams {
    fn default() -> Self {
        Self {
            speed: DEFAULT_SPEED,
            dt: 1.0,
            heading_noise_std: 0.0,
            collision_radius: DEFAULT_COLLISION_RADIUS,
            collision_reward: DEFAULT_COLLISION_REWARD,
            max_range: DEFAULT_MAX_RANGE,
        }
    }
}

#[derive(Clone, Debug)]
pub struct CorridorWorld {
    params: CorridorParams,
    walls: Vec<Segment>,
    start: Pose,
    pose: Pose,
}

impl CorridorWorld {
    pub fn new(walls: Vec<Segment>, start: Pose, params: CorridorParams) -> Result<Self, EnvError> {
        let p = &params;
        let positive = [p.speed, p.dt, p.max_range];
        if positive.iter().any(|v| !(*v > 0.0) || !v.is_finite())
            || !(p.heading_noise_std >= 0.0)
            || !(p.collision_radius >= 0.0)
            || !p.collision_reward.is_finite()
        {
            return Err(EnvError::Invalid(format!("invalid corridor parameters {params:?}")));
        }
        let world = Self {
            params,
            walls,
            start,
            pose: start,
        };
        if world.clearance([start[0], start[1]]) <= world.params.collision_radius {
            return Err(EnvError::Invalid(format!("start pose {start:?} is in collision")));
        }
        Ok(world)
    }

    pub fn params(&self) -> &CorridorParams {
        &self.params
    }

    pub fn walls(&self) -> &[Segment] {
        &self.walls
    }

    pub fn pose(&self) -> Pose {
        self.pose
    }

    pub fn set_pose(&mut self, pose: Pose) {
        self.pose = pose;
    }

    pub fn start(&self) -> Pose {
        self.start
    }

    pub fn reset(&mut self) {
        self.pose = self.start;
    }

    pub fn scan(&self) -> [f64; N_RAYS] {
        lidar_scan(&self.walls, self.pose, self.params.max_range)
    }

    fn clearance(&self, p: Point) -> f64 {
        self.walls.iter().map(|w| w.distance_to(p)).fold(f64::INFINITY, f64::min)
    }

    /// Replaces the map with synthetic walls matching the rounded `readings`
    /// and places the robot at the origin facing +x. Collisions afterwards
    /// reset to that pose.
    pub fn morph(&mut self, readings: &[f64], resolution: f64) {
        let rounded = round_readings(readings, resolution, self.params.max_range);
        self.walls = synthetic_walls(&rounded, self.params.max_range);
        self.start = [0.0, 0.0, 0.0];
        self.pose = self.start;
    }

    /// One transition. Always draws one normal for the heading noise.
    ///
    /// The reward is the sum of the new readings, or the collision reward
    /// (terminal, resets to the start pose) when the motion crosses a wall or
    /// ends within the collision radius.
    pub fn step<R: Rng + ?Sized>(&mut self, a: usize, rng: &mut R) -> StepOutcome {
        let n: f64 = rng.sample(StandardNormal);
        let p = &self.params;
        let heading = self.pose[2] + turn_rate(a) * p.dt + p.heading_noise_std * n;
        let heading = (heading + PI).rem_euclid(2.0 * PI) - PI;
        let from = [self.pose[0], self.pose[1]];
        let to = [
            from[0] + p.speed * p.dt * heading.cos(),
            from[1] + p.speed * p.dt * heading.sin(),
        ];
        let crossed = self.walls.iter().any(|w| w.intersects(from, to));
        if crossed || self.clearance(to) <= p.collision_radius {
            let next = lidar_scan(&self.walls, self.pose, p.max_range).to_vec();
            self.reset();
            return StepOutcome {
                next,
                reward: self.params.collision_reward,
                collision: true,
                terminal: true,
            };
        }
        self.pose = [to[0], to[1], heading];
        let next = self.scan();
        StepOutcome {
            reward: next.iter().sum(),
            next: next.to_vec(),
            collision: false,
            terminal: false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn empty_map_reads_max_range() {
        assert_eq!(lidar_scan(&[], [0.0, 0.0, 0.3], 5.0), [5.0; 7]);
    }

    #[test]
    fn turn_rates_span_plus_minus_pi_over_9() {
        assert!((turn_rate(0) + PI / 9.0).abs() < 1e-15);
        assert!((turn_rate(18) - PI / 9.0).abs() < 1e-15);
        assert!(turn_rate(9).abs() < 1e-15);
    }

    #[test]
    fn free_space_reward_is_35() {
        let walls = synthetic_walls(&[5.0; 7], 5.0);
        let mut w = CorridorWorld::new(walls, [0.0, 0.0, 0.0], CorridorParams::default()).unwrap();
        w.set_pose([0.0, 0.0, 0.0]);
        // Enclosure is 5.5 away; after moving 0.2 forward every ray still
        // reaches at least 5.3 > 5.
        let o = w.step(9, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(o.reward, 35.0);
    }

    #[test]
    fn morph_reproduces_rounded_readings() {
        let readings = [1.24, 5.0, 2.0, 2.6, 4.9, 0.3, 3.74];
        let rounded = round_readings(&readings, 0.5, 5.0);
        assert_eq!(rounded, vec![1.0, 5.0, 2.0, 2.5, 5.0, 0.5, 3.5]);
        let mut w = CorridorWorld::new(vec![], [0.0, 0.0, 0.0], CorridorParams::default()).unwrap();
        w.morph(&readings, 0.5);
        let scan = w.scan();
        for (s, r) in scan.iter().zip(&rounded) {
            assert!((s - r).abs() < 1e-12, "{scan:?} vs {rounded:?}");
        }
    }

    #[test]
    fn crossing_a_wall_is_a_terminal_collision() {
        let wall = Segment::new([0.3, -5.0], [0.3, 5.0]);
        let mut w = CorridorWorld::new(vec![wall], [0.0, 0.0, 0.0], CorridorParams::default()).unwrap();
        let o = w.step(9, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(o.collision && o.terminal);
        assert_eq!(o.reward, -50.0);
        assert_eq!(w.pose(), [0.0, 0.0, 0.0]);
    }
}
