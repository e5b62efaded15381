//! Tabular R-max with and without the simulator chain, and the
//! single-level GP planner, on the 5x5 grid.
use gp_mfrl::baselines::{gp_vi_direct, gp_vi_direct_params, rmax, rmax_mfrl, RMaxParams};
use gp_mfrl::agent::AgentTrace;
use gp_mfrl::env::ChainSpec;
use gp_mfrl::gp_vi::GpViParams;

fn report(name: &str, t: &AgentTrace) {
    let v = t.series.get("v_start").and_then(|s| s.last()).map_or(f64::NAN, |p| p.1);
    println!("{name:<10} {:>6} samples, {:>5} at the top, V(start) {v:.2}, {:?}", t.records.len(), t.top_samples(), t.stop);
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let chain = ChainSpec::builtin("grid5").expect("builtin chain").build()?;
    let params = RMaxParams::default();
    report("rmax_mfrl", &rmax_mfrl(&chain, &params, 0)?.trace);
    report("rmax", &rmax(&chain, &params, 0)?.trace);
    report("gp_vi", &gp_vi_direct(&chain, &gp_vi_direct_params(&GpViParams::default()), 0)?.trace);
    Ok(())
}
