//! Runs an experiment config end to end and lists what it wrote.
//!
//! `cargo run --example harness -- configs/smoke.json /tmp/smoke`
use std::path::PathBuf;

use gp_mfrl::harness::{run_experiment, ExperimentConfig, Mode, Overrides};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let config = args.next().map_or_else(|| PathBuf::from("configs/smoke.json"), PathBuf::from);
    let out = args.next().map_or_else(|| std::env::temp_dir().join("mfrl-harness-example"), PathBuf::from);

    let mut cfg = ExperimentConfig::load(&config)?;
    cfg.apply(&Overrides {
        out_dir: Some(out.clone()),
        ..Overrides::default()
    })?;
    let summary = run_experiment(&cfg, Mode::Run, &|r| eprintln!("{} seed {}: {}", r.status.agent, r.status.seed, r.status.status))?;

    for s in summary.series.iter().filter(|s| s.series == "samples_top") {
        println!("{:<12} median Σ2 samples {}", s.agent, s.bands[0].median);
    }
    let mut files: Vec<_> = walk(&out);
    files.sort();
    for f in files {
        println!("{}", f.strip_prefix(&out).unwrap_or(&f).display());
    }
    Ok(())
}

fn walk(dir: &std::path::Path) -> Vec<PathBuf> {
    let Ok(entries) = std::fs::read_dir(dir) else {
        return Vec::new();
    };
    entries
        .flatten()
        .flat_map(|e| {
            let p = e.path();
            if p.is_dir() {
                walk(&p)
            } else {
                vec![p]
            }
        })
        .collect()
}
