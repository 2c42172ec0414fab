//! Full protocol on the oracle world: ASE, five baselines and four variants.
//!
//!     cargo run --release --example end_to_end -- 0 1 2 3 4

use std::time::Instant;

use zsosr::evalkit::MeanStd;
use zsosr::pipeline::{run_experiment, RunConfig};

fn main() -> zsosr::Result<()> {
    let seeds: Vec<u64> = std::env::args().skip(1).filter_map(|s| s.parse().ok()).collect();
    let seeds = if seeds.is_empty() { vec![0] } else { seeds };
    let cfg = RunConfig::desk_scale();
    let mut by_method: Vec<(String, Vec<f64>)> = Vec::new();
    for &seed in &seeds {
        let t = Instant::now();
        let out = run_experiment(&cfg, seed)?;
        let tuning = out.tuning.as_ref().expect("desk scale tunes on validation");
        println!(
            "seed {seed} ({:.1}s): beta {} (validation {:?}), odin eps {}",
            t.elapsed().as_secs_f64(),
            tuning.beta,
            tuning.beta_auroc,
            tuning.odin_eps
        );
        for r in &out.reports {
            println!("  {:<22} auroc {:.3}  fpr95 {:.3}  acc {:.3}", r.method, r.auroc, r.fpr95, r.acc);
            match by_method.iter_mut().find(|(m, _)| *m == r.method) {
                Some((_, v)) => v.push(r.auroc),
                None => by_method.push((r.method.clone(), vec![r.auroc])),
            }
        }
    }
    println!("mean AUROC over {} seeds", seeds.len());
    for (m, v) in by_method {
        let s = MeanStd::of(&v);
        println!("  {m:<22} {:.3} ± {:.3}", s.mean, s.std);
    }
    Ok(())
}
