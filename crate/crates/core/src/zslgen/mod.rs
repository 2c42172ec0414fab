//! Generative zero-shot stage: a conditional feature generator trained on
//! seen classes, unseen-class feature synthesis, and the closed-set
//! classifier trained on the synthesized features.

mod classifier;
mod generator;

pub use classifier::{
    train_closed_classifier, zsl_accuracy, ClassifierConfig, ClosedSetClassifier, LogitModel, TrainedClassifier,
};
pub(crate) use classifier::{class_targets, fit_linear, train_closed_with_loss};
pub use generator::{
    synthesize_features, train_generator, Discriminator, Generator, GeneratorConfig, GeneratorMode, GeneratorOutcome,
    Provenance, SyntheticDataset,
};

#[cfg(test)]
mod tests;
