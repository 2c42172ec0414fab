//! Adversarial semantic embeddings for unknown classes, the `K+1` open-set
//! classifier trained on them, and the ablation strategies that replace the
//! learned embeddings with simpler unknown-feature sources.

mod embeddings;
mod open;
mod variants;

pub use crate::evalkit::ScoredPrediction;
pub use embeddings::{
    adv_energy, ase_loss, dis_loss, generate_unknown_features, init_embeddings, learn_embeddings,
    resolve_init_noise, AdversarialEmbeddingSet, AnchorMode, AnchorSet, AseConfig, AseLoss, AseStep,
};
pub use open::{
    open_score, score_logits, score_open, train_open_classifier, OpenClassifierConfig, OpenSetClassifier,
    OpenTraining,
};
pub use variants::{
    adversarial_features, mean_adv_energy, mixup, variant_unknowns, VariantConfig, VariantInputs, VariantStrategy,
};
