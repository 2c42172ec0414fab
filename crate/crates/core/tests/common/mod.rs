use zsosr::datasets::SynthConfig;
use zsosr::pipeline::{DatasetSource, RunConfig};

/// Small enough that a full staged run takes a few seconds.
pub fn tiny_config() -> RunConfig {
    let mut cfg = RunConfig::desk_scale();
    cfg.dataset = DatasetSource::Synthetic {
        config: SynthConfig {
            n_seen: 8,
            n_unseen: 2,
            n_unknown: 2,
            attr_dim: 4,
            feature_dim: 8,
            samples_per_class: 30,
            ..Default::default()
        },
        world_seed: None,
    };
    cfg.generator.hidden = 16;
    cfg.generator.steps = 100;
    cfg.synth_per_class = 40;
    cfg.classifier.epochs = 5;
    cfg.open.classifier.epochs = 5;
    cfg.ase.embeddings_per_anchor = 4;
    cfg.ase.steps = 10;
    cfg.ase.noise_samples = 2;
    cfg.variant.count_per_anchor = 40;
    cfg.variant.adv_steps = 5;
    cfg.tuning.beta_grid = vec![0.1, 1.0];
    cfg
}
