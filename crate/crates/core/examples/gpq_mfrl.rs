//! Model-free multi-fidelity agent on the lidar corridor, against learning
//! on the top level alone.
use gp_mfrl::baselines::gpq_direct;
use gp_mfrl::env::ChainSpec;
use gp_mfrl::gpq::{run, GpqOutcome, GpqParams};

fn report(name: &str, out: &GpqOutcome) {
    let t = &out.trace;
    let top = t.records.iter().filter(|r| r.level == t.depth).count();
    let avg = t.series.get("avg_reward").and_then(|s| s.last()).map_or(f64::NAN, |p| p.1);
    println!("{name:<10} {:>6} samples, {top:>5} at the top, final average reward {avg:.2}", t.records.len());
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let budget = std::env::args().nth(1).map_or(Ok(600), |s| s.parse())?;
    let chain = ChainSpec::builtin("corridor").expect("builtin chain").build()?;
    let mut params = GpqParams::default();
    params.plateau = None;
    params.budget.max_top_samples = Some(budget);

    report("gpq_mfrl", &run(&chain, &params, 0)?);
    report("direct", &gpq_direct(&chain, &params, 0)?);
    Ok(())
}
