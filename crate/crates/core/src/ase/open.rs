use serde::{Deserialize, Serialize};

use crate::datasets::Label;
use crate::evalkit::{closed_acc, ScoredPrediction};
use crate::ndcore::{argmax, softmax, LossSpec, Matrix, Mlp};
use crate::zslgen::{fit_linear, ClassifierConfig, LogitModel, SyntheticDataset};
use crate::{Error, Result};

/// Linear `d → K+1` classifier; output `K` is "unknown".
#[derive(Debug, Clone, PartialEq)]
pub struct OpenSetClassifier {
    pub net: Mlp,
    /// Ids of the `K` known classes in output order.
    pub class_ids: Vec<usize>,
}

impl LogitModel for OpenSetClassifier {
    fn net(&self) -> &Mlp {
        &self.net
    }

    fn known_class_ids(&self) -> &[usize] {
        &self.class_ids
    }
}

impl OpenSetClassifier {
    pub fn unknown_index(&self) -> usize {
        self.class_ids.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OpenClassifierConfig {
    #[serde(flatten)]
    pub classifier: ClassifierConfig,
    /// Loss weight of unknown rows relative to known rows. `None` is 1.
    pub unknown_weight: Option<f32>,
}

impl Default for OpenClassifierConfig {
    fn default() -> Self {
        OpenClassifierConfig {
            classifier: ClassifierConfig::default(),
            unknown_weight: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OpenTraining {
    pub classifier: OpenSetClassifier,
    /// Per-class mean accuracy over known rows, argmax over the first `K`.
    pub known_accuracy: f64,
    /// Fraction of unknown rows whose argmax over all `K+1` outputs is `K`.
    pub unknown_recall: f64,
    pub loss_trace: Vec<f64>,
}

/// Cross-entropy training of the `K+1` head on `[unseen ⊕ unknown]`.
pub fn train_open_classifier(
    unseen: &SyntheticDataset,
    unknown: &SyntheticDataset,
    class_order: &[usize],
    config: &OpenClassifierConfig,
) -> Result<OpenTraining> {
    if unknown.is_empty() {
        return Err(Error::Config(
            "the K+1 classifier needs unknown rows; the unknown group is empty".into(),
        ));
    }
    if unseen.is_empty() {
        return Err(Error::Config("the K+1 classifier needs known rows; the unseen group is empty".into()));
    }
    if unknown.labels.iter().any(|l| *l != Label::Unknown) {
        return Err(Error::Disjointness("unknown training rows carry class labels".into()));
    }
    let k = class_order.len();
    let mut targets = crate::zslgen::class_targets(unseen, class_order)?;
    targets.extend(std::iter::repeat_n(k, unknown.len()));
    let features = Matrix::vstack(&[&unseen.features, &unknown.features])?;
    let weights: Option<Vec<f32>> = config.unknown_weight.map(|w| {
        std::iter::repeat_n(1.0, unseen.len())
            .chain(std::iter::repeat_n(w, unknown.len()))
            .collect()
    });
    if let Some(w) = config.unknown_weight {
        if !(w > 0.0) {
            return Err(Error::Config(format!("unknown_weight must be positive, got {w}")));
        }
    }
    let (net, loss_trace) = fit_linear(
        &features,
        &targets,
        weights.as_deref(),
        k + 1,
        &LossSpec::cross_entropy(),
        &config.classifier,
        "open-classifier",
    )?;
    let classifier = OpenSetClassifier {
        net,
        class_ids: class_order.to_vec(),
    };
    let known = score_open(&classifier, &unseen.features)?;
    let predicted: Vec<usize> = known.iter().map(|s| s.predicted).collect();
    let known_accuracy = closed_acc(&predicted, &unseen.class_labels(), class_order)?;
    let logits = classifier.logits(&unknown.features)?;
    let hits = logits.iter_rows().filter(|r| argmax(r) == k).count();
    let unknown_recall = hits as f64 / unknown.len() as f64;
    log::info!("open classifier: known acc {known_accuracy:.4}, unknown recall {unknown_recall:.4}");
    Ok(OpenTraining {
        classifier,
        known_accuracy,
        unknown_recall,
        loss_trace,
    })
}

/// Softmax probability of the unknown output; prediction is the argmax over
/// the first `K` logits.
pub fn score_logits(logits: &[f32], class_ids: &[usize]) -> ScoredPrediction {
    let k = class_ids.len();
    let wide: Vec<f64> = logits.iter().map(|&v| f64::from(v)).collect();
    let p = softmax(&wide);
    ScoredPrediction {
        score: p[k],
        predicted: class_ids[argmax(&logits[..k])],
        logits: logits.to_vec(),
    }
}

pub fn open_score(classifier: &OpenSetClassifier, x: &[f32]) -> Result<ScoredPrediction> {
    let row = Matrix::from_vec(1, x.len(), x.to_vec())?;
    Ok(score_open(classifier, &row)?.remove(0))
}

pub fn score_open(classifier: &OpenSetClassifier, features: &Matrix) -> Result<Vec<ScoredPrediction>> {
    let logits = classifier.logits(features)?;
    Ok(logits.iter_rows().map(|r| score_logits(r, &classifier.class_ids)).collect())
}
