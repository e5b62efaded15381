//! Walks the grid chain: the same action sequence at each level,
//! then a hand-off between levels through the state map.
use gp_mfrl::env::{ChainSession, ChainSpec, Env};

fn kind(env: &Env) -> String {
    match env {
        Env::Grid(g) => format!("grid world, slip {}", g.slip_prob()),
        Env::Continuous(c) => format!("continuous world, noise std {}", c.noise_std()),
        Env::Corridor(_) => "lidar corridor".into(),
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut spec = ChainSpec::builtin("grid21").expect("builtin chain");
    spec.set_slip_prob(0.2);
    let chain = spec.build()?;
    for (i, env) in chain.levels().iter().enumerate() {
        println!("level {}: {} with {} actions, state dim {}", i + 1, kind(env), env.n_actions(), env.state_dim());
    }

    let mut session = ChainSession::new(chain, 3);
    let actions = [0, 0, 2, 2, 0, 0];
    for level in 0..session.depth() {
        let mut path = vec![session.observe(level)];
        let mut reward = 0.0;
        for &a in &actions {
            let out = session.step(level, a);
            reward += out.reward;
            path.push(out.next);
        }
        let shown: Vec<String> = path.iter().map(|s| format!("({:.2},{:.2})", s[0], s[1])).collect();
        println!("level {}: reward {reward:>5.1} path {}", level + 1, shown.join(" "));
    }

    let up = session.switch_up(0);
    println!("switching up from level 1 resumes level 2 at {up:?}");
    let down = session.switch_down(1);
    println!("switching back down lands on level 1 at {down:?}");
    println!("samples per level {:?}, total {}", session.sample_counts(), session.total_samples());
    Ok(())
}
