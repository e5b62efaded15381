//! JSON chain definitions and the built-in layouts.
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "lidar_resolution": 0.5,
//!   "levels": [
//!     { "type": "grid", "width": 5, "height": 5, "start": [0, 2], "goal": [4, 2],
//!       "walls": [[2, 1, 2, 3]], "slip_prob": 0.0 },
//!     { "type": "continuous", "width": 5, "height": 5, "start": [0, 2], "goal": [4, 2],
//!       "walls": [[2, 1, 2, 3]], "actuation_noise_std": 0.05 }
//!   ]
//! }
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::corridor::{self, CorridorParams};
use super::geometry::Segment;
use super::{ContinuousNav, CorridorWorld, Env, EnvError, FidelityChain, GridLayout, GridWorld, Rewards};

pub const CHAIN_SCHEMA_VERSION: u32 = 1;

fn default_resolution() -> f64 {
    corridor::DEFAULT_RESOLUTION
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSpec {
    pub schema_version: u32,
    #[serde(default = "default_resolution")]
    pub lidar_resolution: f64,
    pub levels: Vec<LevelSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LevelSpec {
    Grid(GridSpec),
    Continuous(ContinuousSpec),
    Corridor(CorridorSpec),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub width: usize,
    pub height: usize,
    pub start: [usize; 2],
    pub goal: [usize; 2],
    /// Inclusive blocked-cell rectangles `[x0, y0, x1, y1]`.
    #[serde(default)]
    pub walls: Vec<[usize; 4]>,
    #[serde(default)]
    pub slip_prob: f64,
    #[serde(default)]
    pub rewards: Rewards,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContinuousSpec {
    pub width: usize,
    pub height: usize,
    pub start: [usize; 2],
    pub goal: [usize; 2],
    #[serde(default)]
    pub walls: Vec<[usize; 4]>,
    #[serde(default)]
    pub actuation_noise_std: f64,
    #[serde(default)]
    pub rewards: Rewards,
}

fn default_speed() -> f64 {
    corridor::DEFAULT_SPEED
}
fn default_dt() -> f64 {
    1.0
}
fn default_radius() -> f64 {
    corridor::DEFAULT_COLLISION_RADIUS
}
fn default_collision_reward() -> f64 {
    corridor::DEFAULT_COLLISION_REWARD
}
fn default_max_range() -> f64 {
    corridor::DEFAULT_MAX_RANGE
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorridorSpec {
    /// Wall segments `[x0, y0, x1, y1]` in metres.
    pub walls: Vec<[f64; 4]>,
    /// `[x, y, heading]`.
    pub start: [f64; 3],
    #[serde(default)]
    pub heading_noise_std: f64,
    #[serde(default = "default_speed")]
    pub speed: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_radius")]
    pub collision_radius: f64,
    #[serde(default = "default_collision_reward")]
    pub collision_reward: f64,
    #[serde(default = "default_max_range")]
    pub max_range: f64,
}

impl LevelSpec {
    pub fn build(&self) -> Result<Env, EnvError> {
        Ok(match self {
            LevelSpec::Grid(g) => {
                let layout = GridLayout::new(g.width, g.height, &g.walls, g.start, g.goal)?;
                Env::Grid(GridWorld::new(layout, g.slip_prob, g.rewards)?)
            }
            LevelSpec::Continuous(c) => {
                let layout = GridLayout::new(c.width, c.height, &c.walls, c.start, c.goal)?;
                Env::Continuous(ContinuousNav::new(layout, c.actuation_noise_std, c.rewards)?)
            }
            LevelSpec::Corridor(c) => {
                let walls = c.walls.iter().map(|w| Segment::new([w[0], w[1]], [w[2], w[3]])).collect();
                let params = CorridorParams {
                    speed: c.speed,
                    dt: c.dt,
                    heading_noise_std: c.heading_noise_std,
                    collision_radius: c.collision_radius,
                    collision_reward: c.collision_reward,
                    max_range: c.max_range,
                };
                Env::Corridor(CorridorWorld::new(walls, c.start, params)?)
            }
        })
    }
}

impl ChainSpec {
    pub fn from_json(text: &str) -> Result<Self, EnvError> {
        let spec: Self = serde_json::from_str(text).map_err(|e| EnvError::Spec(e.to_string()))?;
        if spec.schema_version != CHAIN_SCHEMA_VERSION {
            return Err(EnvError::Spec(format!(
                "unsupported schema_version {} (expected {CHAIN_SCHEMA_VERSION})",
                spec.schema_version
            )));
        }
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self, EnvError> {
        let text = std::fs::read_to_string(path).map_err(|e| EnvError::Spec(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("chain spec serializes")
    }

    pub fn build(&self) -> Result<FidelityChain, EnvError> {
        let levels = self.levels.iter().map(LevelSpec::build).collect::<Result<Vec<_>, _>>()?;
        FidelityChain::new(levels, self.lidar_resolution)
    }

    /// Names accepted by [`ChainSpec::builtin`].
    pub const BUILTINS: [&'static str; 3] = ["grid5", "grid21", "corridor"];

    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "grid5" => Some(grid5()),
            "grid21" => Some(grid21()),
            "corridor" => Some(corridor_chain()),
            _ => None,
        }
    }

    /// Sets the slip probability of every grid level.
    pub fn set_slip_prob(&mut self, p: f64) {
        for level in &mut self.levels {
            if let LevelSpec::Grid(g) = level {
                g.slip_prob = p;
            }
        }
    }
}

/// Two identical deterministic 5×5 grids.
fn grid5() -> ChainSpec {
    let g = GridSpec {
        width: 5,
        height: 5,
        start: [0, 2],
        goal: [4, 2],
        walls: vec![[2, 1, 2, 3]],
        slip_prob: 0.0,
        rewards: Rewards::default(),
    };
    ChainSpec {
        schema_version: CHAIN_SCHEMA_VERSION,
        lidar_resolution: default_resolution(),
        levels: vec![LevelSpec::Grid(g.clone()), LevelSpec::Grid(g)],
    }
}

/// 21×21 grid world below a continuous world with two extra walls.
fn grid21() -> ChainSpec {
    let outer = vec![[6, 0, 6, 7], [14, 13, 14, 20]];
    let mut inner = outer.clone();
    inner.extend([[10, 5, 10, 15], [8, 3, 12, 3]]);
    ChainSpec {
        schema_version: CHAIN_SCHEMA_VERSION,
        lidar_resolution: default_resolution(),
        levels: vec![
            LevelSpec::Grid(GridSpec {
                width: 21,
                height: 21,
                start: [2, 10],
                goal: [18, 10],
                walls: outer,
                slip_prob: 0.0,
                rewards: Rewards::default(),
            }),
            LevelSpec::Continuous(ContinuousSpec {
                width: 21,
                height: 21,
                start: [2, 10],
                goal: [18, 10],
                walls: inner,
                actuation_noise_std: 0.05,
                rewards: Rewards::default(),
            }),
        ],
    }
}

fn square(cx: f64, cy: f64, h: f64) -> [[f64; 4]; 4] {
    [
        [cx - h, cy - h, cx + h, cy - h],
        [cx + h, cy - h, cx + h, cy + h],
        [cx + h, cy + h, cx - h, cy + h],
        [cx - h, cy + h, cx - h, cy - h],
    ]
}

/// A 1 m wide, 4 m long corridor opening into a 20 m hall; the upper level
/// adds pillars and heading noise.
fn corridor_chain() -> ChainSpec {
    let walls = vec![
        [-1.0, -0.5, -1.0, 0.5],
        [-1.0, 0.5, 3.0, 0.5],
        [-1.0, -0.5, 3.0, -0.5],
        [3.0, 0.5, 3.0, 10.0],
        [3.0, -0.5, 3.0, -10.0],
        [3.0, 10.0, 23.0, 10.0],
        [23.0, 10.0, 23.0, -10.0],
        [23.0, -10.0, 3.0, -10.0],
    ];
    let mut detailed = walls.clone();
    for (x, y) in [(6.0, 6.5), (6.0, -6.5), (19.5, 7.0), (19.5, -7.0), (13.0, 8.0)] {
        detailed.extend(square(x, y, 0.3));
    }
    let level = |walls: Vec<[f64; 4]>, noise: f64| {
        LevelSpec::Corridor(CorridorSpec {
            walls,
            start: [0.0, 0.0, 0.0],
            heading_noise_std: noise,
            speed: default_speed(),
            dt: 1.0,
            collision_radius: default_radius(),
            collision_reward: default_collision_reward(),
            max_range: default_max_range(),
        })
    };
    ChainSpec {
        schema_version: CHAIN_SCHEMA_VERSION,
        lidar_resolution: default_resolution(),
        levels: vec![level(walls, 0.0), level(detailed, 0.05)],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::value_iteration;

    #[test]
    fn builtins_build_and_round_trip() {
        for name in ChainSpec::BUILTINS {
            let spec = ChainSpec::builtin(name).unwrap();
            let back = ChainSpec::from_json(&spec.to_json()).unwrap();
            assert_eq!(back, spec);
            let chain = spec.build().unwrap();
            assert_eq!(chain.depth(), 2);
        }
    }

    #[test]
    fn unknown_fields_and_versions_are_rejected() {
        let mut v: serde_json::Value = serde_json::from_str(&ChainSpec::builtin("grid5").unwrap().to_json()).unwrap();
        v["levels"][0]["colour"] = "red".into();
        assert!(ChainSpec::from_json(&v.to_string()).is_err());
        let mut v: serde_json::Value = serde_json::from_str(&ChainSpec::builtin("grid5").unwrap().to_json()).unwrap();
        v["extra"] = 1.into();
        assert!(ChainSpec::from_json(&v.to_string()).is_err());
        let mut v: serde_json::Value = serde_json::from_str(&ChainSpec::builtin("grid5").unwrap().to_json()).unwrap();
        v["schema_version"] = 2.into();
        assert!(ChainSpec::from_json(&v.to_string()).is_err());
    }

    #[test]
    fn grid21_reference_values() {
        let chain = ChainSpec::builtin("grid21").unwrap().build().unwrap();
        let gamma: f64 = 0.95;
        // Straight 16-step path below, 28-step detour above.
        let expect = |k: i32| (1.0 - gamma.powi(k - 1)) / (1.0 - gamma) + gamma.powi(k - 1) * 100.0;
        for (level, steps) in [(0, 16), (1, 28)] {
            let env = chain.level(level);
            let layout = env.layout().unwrap();
            let q = value_iteration(&env.reference_mdp(gamma).unwrap().unwrap(), 1e-9).unwrap();
            let v0 = q.state_value(layout.index(layout.start()));
            assert!((v0 - expect(steps)).abs() < 1e-6, "level {level}: {v0}");
        }
    }

    #[test]
    fn corridor_start_readings() {
        let chain = ChainSpec::builtin("corridor").unwrap().build().unwrap();
        let s = chain.level(1).observe();
        assert_eq!(s.len(), 7);
        assert!(s.iter().all(|r| *r > 0.0 && *r <= 5.0));
        assert_eq!(s[3], 5.0);
    }
}
