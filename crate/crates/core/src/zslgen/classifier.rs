use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::generator::SyntheticDataset;
use crate::evalkit::closed_acc;
use crate::ndcore::{
    adam_step, argmax, loss_and_grads, Activation, AdamConfig, AdamState, LossSpec, Matrix, Mlp, Targets,
};
use crate::rng::{derive_seed, stage_rng};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    pub epochs: usize,
    pub batch: usize,
    pub lr: f32,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            epochs: 30,
            batch: 64,
            lr: 1e-3,
            seed: 0,
        }
    }
}

/// A model whose first `known_count()` outputs are logits of known classes.
pub trait LogitModel {
    fn net(&self) -> &Mlp;

    /// Class ids of the known-class outputs, in output order.
    fn known_class_ids(&self) -> &[usize];

    fn known_count(&self) -> usize {
        self.known_class_ids().len()
    }

    fn logits(&self, features: &Matrix) -> Result<Matrix> {
        self.net().forward(features)
    }
}

/// Single linear layer `φ(x) = Wx + b` over `K` classes.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedSetClassifier {
    pub net: Mlp,
    pub class_ids: Vec<usize>,
}

impl LogitModel for ClosedSetClassifier {
    fn net(&self) -> &Mlp {
        &self.net
    }

    fn known_class_ids(&self) -> &[usize] {
        &self.class_ids
    }
}

impl ClosedSetClassifier {
    pub fn predict(&self, features: &Matrix) -> Result<Vec<usize>> {
        let logits = self.logits(features)?;
        Ok(logits.iter_rows().map(|r| self.class_ids[argmax(r)]).collect())
    }
}

#[derive(Debug, Clone)]
pub struct TrainedClassifier<C> {
    pub classifier: C,
    pub train_accuracy: f64,
    pub loss_trace: Vec<f64>,
}

/// Mini-batch Adam on a linear layer. `targets` index output columns.
pub(crate) fn fit_linear(
    features: &Matrix,
    targets: &[usize],
    weights: Option<&[f32]>,
    n_out: usize,
    loss: &LossSpec,
    cfg: &ClassifierConfig,
    stage: &str,
) -> Result<(Mlp, Vec<f64>)> {
    if cfg.epochs == 0 || cfg.batch == 0 {
        return Err(Error::Config("classifier epochs and batch must be positive".into()));
    }
    let mut net = Mlp::new(
        &[features.cols(), n_out],
        &[Activation::Identity],
        derive_seed(cfg.seed, stage, 0),
    )?;
    let mut opt = AdamState::for_model(&net, AdamConfig::with_lr(cfg.lr))?;
    let mut rng = stage_rng(cfg.seed, stage, 1);
    let mut order: Vec<usize> = (0..features.rows()).collect();
    let mut trace = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0f64;
        for chunk in order.chunks(cfg.batch) {
            let x = features.select_rows(chunk);
            let y: Vec<usize> = chunk.iter().map(|&i| targets[i]).collect();
            let w: Option<Vec<f32>> = weights.map(|w| chunk.iter().map(|&i| w[i]).collect());
            let t = match &w {
                Some(w) => Targets::WeightedClasses(&y, w),
                None => Targets::Classes(&y),
            };
            let lg = loss_and_grads(&net, &x, t, loss, false)?;
            epoch_loss += lg.loss * chunk.len() as f64;
            adam_step(&mut net, &lg.params, &mut opt)?;
        }
        trace.push(epoch_loss / features.rows() as f64);
    }
    Ok((net, trace))
}

/// Checks every class in `class_order` has samples and maps rows to output
/// indices.
pub(crate) fn class_targets(data: &SyntheticDataset, class_order: &[usize]) -> Result<Vec<usize>> {
    if class_order.is_empty() {
        return Err(Error::Empty("classifier class list".into()));
    }
    let labels = data.class_labels();
    if labels.len() != data.len() {
        return Err(Error::Config("closed-set training data contains unlabelled rows".into()));
    }
    for &c in class_order {
        if !labels.contains(&c) {
            return Err(Error::Empty(format!("training data for class {c}")));
        }
    }
    labels
        .iter()
        .map(|l| {
            class_order
                .iter()
                .position(|c| c == l)
                .ok_or_else(|| Error::Config(format!("class {l} is not in the classifier's class list")))
        })
        .collect()
}

/// Trains `φ^closed` with cross-entropy. Output column `k` is `class_order[k]`.
pub fn train_closed_classifier(
    data: &SyntheticDataset,
    class_order: &[usize],
    cfg: &ClassifierConfig,
) -> Result<TrainedClassifier<ClosedSetClassifier>> {
    train_closed_with_loss(data, class_order, &LossSpec::cross_entropy(), cfg, "closed-classifier")
}

pub(crate) fn train_closed_with_loss(
    data: &SyntheticDataset,
    class_order: &[usize],
    loss: &LossSpec,
    cfg: &ClassifierConfig,
    stage: &str,
) -> Result<TrainedClassifier<ClosedSetClassifier>> {
    let targets = class_targets(data, class_order)?;
    let (net, loss_trace) = fit_linear(&data.features, &targets, None, class_order.len(), loss, cfg, stage)?;
    let classifier = ClosedSetClassifier {
        net,
        class_ids: class_order.to_vec(),
    };
    let train_accuracy = zsl_accuracy(&classifier, &data.features, &data.class_labels())?;
    log::info!("{stage}: train accuracy {train_accuracy:.4}");
    Ok(TrainedClassifier {
        classifier,
        train_accuracy,
        loss_trace,
    })
}

/// Mean over classes of per-class top-1 accuracy.
pub fn zsl_accuracy(classifier: &ClosedSetClassifier, features: &Matrix, labels: &[usize]) -> Result<f64> {
    let predictions = classifier.predict(features)?;
    closed_acc(&predictions, labels, &classifier.class_ids)
}
