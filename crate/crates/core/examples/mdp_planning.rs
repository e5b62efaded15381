//! Solves the 21x21 maze under its known deterministic model and prints the
//! greedy route from start to goal.
use gp_mfrl::env::ChainSpec;
use gp_mfrl::mdp::{greedy_policy, value_iteration_traced};

/// Glyphs for right, left, up, down and stay.
const ARROWS: [char; 5] = ['>', '<', '^', 'v', '.'];

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let chain = ChainSpec::builtin("grid21").expect("builtin chain").build()?;
    let top = chain.level(chain.depth() - 1);
    let layout = top.layout().expect("grid level");
    let mdp = top.reference_mdp(0.95).expect("grid level")?;

    let (q, residuals) = value_iteration_traced(&mdp, 1e-9)?;
    println!("{} sweeps, final residual {:.1e}", residuals.len(), residuals.last().copied().unwrap_or(0.0));
    let start = layout.index(layout.start());
    println!("V(start) = {:.3}", q.state_value(start));

    let policy = greedy_policy(&q);
    let (mut cell, mut steps) = (layout.start(), 0);
    while cell != layout.goal() && steps < layout.n_cells() {
        cell = layout.apply_move(cell, policy.action(layout.index(cell))).0;
        steps += 1;
    }
    println!("greedy route reaches {:?} in {steps} moves", cell);

    for y in (0..layout.height()).rev() {
        let row: String = (0..layout.width())
            .map(|x| {
                let c = [x, y];
                if layout.is_blocked(c) {
                    '#'
                } else if c == layout.goal() {
                    'G'
                } else {
                    ARROWS[policy.action(layout.index(c))]
                }
            })
            .collect();
        println!("{row}");
    }
    Ok(())
}
