//! Learns adversarial semantic embeddings around the unseen anchors and
//! shows how β trades anchor distance against free energy.
//!
//!     cargo run --release --example adversarial_embeddings

use zsosr::ase::{init_embeddings, learn_embeddings, mean_adv_energy, AnchorMode, AnchorSet, AseConfig};
use zsosr::datasets::{synth_world, SplitMode, SynthConfig};
use zsosr::zslgen::{synthesize_features, train_closed_classifier, train_generator, ClassifierConfig, GeneratorConfig};

fn main() -> zsosr::Result<()> {
    let world = synth_world(&SynthConfig::default(), 5)?;
    let split = world.bundle.make_split(&SplitMode::ZsOsr, 5)?;
    let view = split.training();
    let g = train_generator(view, &GeneratorConfig { hidden: 128, seed: 5, ..Default::default() })?.generator;
    let unseen = synthesize_features(&g, view.unseen_ids(), view.unseen_attributes(), 300, 5)?;
    let ccfg = ClassifierConfig { epochs: 60, lr: 0.01, seed: 5, ..Default::default() };
    let phi = train_closed_classifier(&unseen, view.unseen_ids(), &ccfg)?.classifier;
    println!("mean free-energy term of synthesized unseen features: {:.3}", mean_adv_energy(&phi, &unseen.features, 1.0)?);

    let anchors = AnchorSet::from_view(view, AnchorMode::UnseenOnly)?;
    for beta in [0.01, 1.0, 10.0] {
        let cfg = AseConfig { beta, ..Default::default() };
        let init = init_embeddings(&anchors, &cfg, 5)?;
        let set = learn_embeddings(&init, &g, &phi, &cfg, 5)?;
        let first = set.trace.first().expect("trace has the initial point");
        let last = set.trace.last().expect("trace is non-empty");
        println!(
            "beta {beta:>5}: L_adv {:.3} -> {:.3}, mean distance {:.3}, trend ok {}",
            first.adv,
            last.adv,
            set.mean_distance(),
            set.trend_ok
        );
    }
    Ok(())
}
