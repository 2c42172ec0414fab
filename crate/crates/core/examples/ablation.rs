//! ASE against the four alternative ways of making unknown training rows.
//!
//!     cargo run --release --example ablation -- 0 1 2

use zsosr::ase::VariantStrategy;
use zsosr::pipeline::{run_experiment, RunConfig};

fn main() -> zsosr::Result<()> {
    let seeds: Vec<u64> = std::env::args().skip(1).filter_map(|s| s.parse().ok()).collect();
    let seeds = if seeds.is_empty() { vec![0] } else { seeds };
    let mut cfg = RunConfig::desk_scale();
    cfg.baselines.clear();
    let mut names = vec!["ase"];
    names.extend(VariantStrategy::ALL.iter().map(|v| v.as_str()));
    let mut sums = vec![0.0; names.len()];
    for &seed in &seeds {
        let out = run_experiment(&cfg, seed)?;
        for (i, n) in names.iter().enumerate() {
            sums[i] += out.report(n).map_or(f64::NAN, |r| r.auroc);
        }
    }
    for (n, s) in names.iter().zip(sums) {
        println!("{n:<22} mean auroc {:.3}", s / seeds.len() as f64);
    }
    Ok(())
}
