//! Model-based multi-fidelity agent on the 5x5 grid chain: per-level sample
//! counts, the value it converges to and the top-level variance map.
use gp_mfrl::env::ChainSpec;
use gp_mfrl::gp_vi::{run, variance_heatmap, GpViParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed = std::env::args().nth(1).map_or(Ok(0), |s| s.parse())?;
    let chain = ChainSpec::builtin("grid5").expect("builtin chain").build()?;
    let out = run(&chain, &GpViParams::default(), seed)?;
    let trace = &out.trace;

    let mut per_level = vec![0; trace.depth];
    let mut switches = 0;
    for (i, r) in trace.records.iter().enumerate() {
        per_level[r.level - 1] += 1;
        if i > 0 && trace.records[i - 1].level != r.level {
            switches += 1;
        }
    }
    println!("stopped: {:?}", trace.stop);
    println!("samples per level {per_level:?}, {switches} switches");
    if let Some((x, v)) = trace.series.get("v_start").and_then(|s| s.last()) {
        println!("V(start) {v:.2} after {x} samples");
    }

    let top = out.models.len() - 1;
    let layout = chain.level(chain.depth() - 1).layout().expect("grid level");
    let heat = variance_heatmap(&out.models[top], &out.q[top], layout)?;
    println!("predictive std of the greedy action, top level:");
    for y in (0..layout.height()).rev() {
        let row: Vec<String> = (0..layout.width()).map(|x| format!("{:5.3}", heat[layout.index([x, y])])).collect();
        println!("  {}", row.join(" "));
    }
    Ok(())
}
