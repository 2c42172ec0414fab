//! The two other evaluation settings: seen classes in the test pool
//! (generalized) and unknowns from another dataset (ood).
//!
//!     cargo run --release --example generalized_and_ood

use zsosr::datasets::SynthConfig;
use zsosr::pipeline::{run_experiment, DatasetSource, Mode, RunConfig};

fn main() -> zsosr::Result<()> {
    let mut cfg = RunConfig::desk_scale();
    cfg.variants.clear();
    cfg.tuning.enabled = false;
    cfg.ase.beta = 0.01;

    cfg.mode = Mode::Generalized;
    let out = run_experiment(&cfg, 0)?;
    for r in &out.reports {
        println!("generalized {:<10} auroc {:.3} acc {:.3} ({} seen test rows)", r.method, r.auroc, r.acc, r.n_seen_samples);
    }

    cfg.mode = Mode::Ood {
        other: DatasetSource::Synthetic {
            config: SynthConfig { n_seen: 5, n_unseen: 5, n_unknown: 5, ..Default::default() },
            world_seed: Some(99),
        },
        n_unknown: 5,
    };
    let out = run_experiment(&cfg, 0)?;
    for r in &out.reports {
        println!("ood         {:<10} auroc {:.3}", r.method, r.auroc);
    }
    Ok(())
}
