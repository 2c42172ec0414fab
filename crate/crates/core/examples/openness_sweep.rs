//! Openness sweep on a world with 50 non-seen classes: 10 unseen classes and
//! 10, 20, 30, 40 unknown ones.
//!
//!     cargo run --release --example openness_sweep

use zsosr::datasets::SynthConfig;
use zsosr::pipeline::{run_openness_sweep, DatasetSource, RunConfig};

fn main() -> zsosr::Result<()> {
    let mut cfg = RunConfig::desk_scale();
    cfg.dataset = DatasetSource::Synthetic {
        config: SynthConfig {
            n_seen: 30,
            n_unseen: 10,
            n_unknown: 40,
            samples_per_class: 60,
            ..Default::default()
        },
        world_seed: Some(1),
    };
    cfg.seeds = vec![0];
    cfg.variants.clear();
    cfg.tuning.enabled = false;
    cfg.ase.beta = 0.01;
    cfg.outdir = std::env::temp_dir().join("zsosr-openness");
    for row in run_openness_sweep(&cfg, 10, &[10, 20, 30, 40])? {
        let auroc = |m: &str| row.aggregate.iter().find(|a| a.method == m).map_or(f64::NAN, |a| a.auroc.mean);
        println!(
            "unknown {:>2}: openness {:.1}%  ase {:.3}  msp {:.3}",
            row.k_unknown,
            100.0 * row.openness,
            auroc("ase"),
            auroc("msp")
        );
    }
    Ok(())
}
