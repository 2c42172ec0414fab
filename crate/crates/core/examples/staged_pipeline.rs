//! Runs the pipeline stage by stage with checkpoints on disk, then shows
//! what happens when a prerequisite is missing or stale.
//!
//!     cargo run --release --example staged_pipeline

use zsosr::pipeline::{RunConfig, Runner, Stage};

fn main() -> zsosr::Result<()> {
    let dir = std::env::temp_dir().join("zsosr-staged");
    let _ = std::fs::remove_dir_all(&dir);
    let mut cfg = RunConfig::desk_scale();
    cfg.variants.clear();
    cfg.tuning.enabled = false;
    cfg.set("ase.beta=0.01")?;

    let runner = Runner::new(&cfg, 0, &dir)?;
    match runner.run(Stage::Eval) {
        Err(e) => println!("eval before score: {e}"),
        Ok(_) => unreachable!("eval needs the score stage"),
    }
    for stage in Stage::ALL {
        if stage == Stage::Ablation {
            continue;
        }
        let out = runner.run(stage)?;
        println!("{stage:<13} -> {}", out.display());
    }
    let reports: Vec<zsosr::evalkit::MetricsReport> =
        serde_json::from_str(&std::fs::read_to_string(dir.join("eval/reports.json")).map_err(|e| zsosr::Error::Io { path: dir.clone(), source: e })?)?;
    for r in &reports {
        println!("{:<10} auroc {:.3}", r.method, r.auroc);
    }

    // A different open-classifier config invalidates train-open and below.
    let mut changed = cfg.clone();
    changed.open.unknown_weight = Some(0.5);
    match Runner::new(&changed, 0, &dir)?.run(Stage::Score) {
        Err(e) => println!("score after config change: {e}"),
        Ok(_) => unreachable!("train-open checkpoint is stale"),
    }
    Ok(())
}
