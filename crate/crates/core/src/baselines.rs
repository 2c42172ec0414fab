//! Open-set scorers stacked on the closed-set classifier: the "combine a
//! zero-shot model with an off-the-shelf OSR method" baselines.
//!
//! Every scorer returns higher values for samples that look more unknown.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::evalkit::ScoredPrediction;
use crate::ndcore::{argmax, log_sum_exp, loss_and_grads, softmax, LossSpec, Matrix, Targets};
use crate::zslgen::{
    train_closed_with_loss, ClassifierConfig, ClosedSetClassifier, LogitModel, SyntheticDataset, TrainedClassifier,
};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineKind {
    Msp,
    MaxLogit,
    Energy,
    Odin,
    LogitNorm,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 5] = [
        BaselineKind::Msp,
        BaselineKind::MaxLogit,
        BaselineKind::Energy,
        BaselineKind::Odin,
        BaselineKind::LogitNorm,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BaselineKind::Msp => "msp",
            BaselineKind::MaxLogit => "maxlogit",
            BaselineKind::Energy => "energy",
            BaselineKind::Odin => "odin",
            BaselineKind::LogitNorm => "logitnorm",
        }
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BaselineKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown baseline `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineSpec {
    pub kind: BaselineKind,
    pub temperature: f32,
    /// ODIN input-perturbation magnitude.
    pub odin_eps: f32,
    /// LogitNorm temperature.
    pub tau: f32,
}

/// ODIN perturbation magnitudes searched on the validation split.
pub const ODIN_EPS_GRID: [f32; 3] = [0.0, 0.0014, 0.005];

impl BaselineSpec {
    pub fn new(kind: BaselineKind) -> Self {
        let temperature = if kind == BaselineKind::Odin { 1000.0 } else { 1.0 };
        BaselineSpec {
            kind,
            temperature,
            odin_eps: if kind == BaselineKind::Odin { 0.0014 } else { 0.0 },
            tau: 0.04,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0) {
            return Err(Error::Config(format!("baseline temperature must be > 0, got {}", self.temperature)));
        }
        if !(self.odin_eps >= 0.0) {
            return Err(Error::Config(format!("odin eps must be >= 0, got {}", self.odin_eps)));
        }
        if !(self.tau > 0.0) {
            return Err(Error::Config(format!("logitnorm tau must be > 0, got {}", self.tau)));
        }
        Ok(())
    }
}

impl FromStr for BaselineSpec {
    type Err = Error;

    /// `kind` or `kind:value`, where the value is T (msp, energy, odin) or
    /// τ (logitnorm).
    fn from_str(s: &str) -> Result<Self> {
        let (name, value) = match s.split_once(':') {
            Some((n, v)) => (n, Some(v)),
            None => (s, None),
        };
        let mut spec = BaselineSpec::new(name.parse()?);
        if let Some(v) = value {
            let v: f32 = v
                .parse()
                .map_err(|_| Error::Config(format!("bad baseline parameter in `{s}`")))?;
            match spec.kind {
                BaselineKind::LogitNorm => spec.tau = v,
                BaselineKind::MaxLogit => {
                    return Err(Error::Config("maxlogit takes no parameter".into()));
                }
                _ => spec.temperature = v,
            }
        }
        spec.validate()?;
        Ok(spec)
    }
}

fn wide(logits: &[f32]) -> Vec<f64> {
    logits.iter().map(|&v| f64::from(v)).collect()
}

/// `1 − max softmax`.
pub fn score_msp(logits: &[f32]) -> f64 {
    score_msp_known(logits, logits.len())
}

/// `1 − max_{j < known} softmax_j`, with the softmax over every output.
/// On a `K+1` head this is MSP restricted to the known classes.
pub fn score_msp_known(logits: &[f32], known: usize) -> f64 {
    let p = softmax(&wide(logits));
    1.0 - p[..known].iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// `−max logit`.
pub fn score_maxlogit(logits: &[f32]) -> f64 {
    -f64::from(logits.iter().copied().fold(f32::NEG_INFINITY, f32::max))
}

/// Free energy `−T · ln Σ exp(z/T)`.
pub fn score_energy(logits: &[f32], temperature: f32) -> Result<f64> {
    if !(temperature > 0.0) {
        return Err(Error::Config(format!("temperature must be > 0, got {temperature}")));
    }
    let t = f64::from(temperature);
    let z: Vec<f64> = logits.iter().map(|&v| f64::from(v) / t).collect();
    Ok(-t * log_sum_exp(&z))
}

fn sign(v: f32) -> f32 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// ODIN: step each input against the gradient of the tempered max-softmax
/// log-probability, then score tempered MSP. Uses the first
/// `known_count()` outputs for the target class and the score.
pub fn score_odin<M: LogitModel + ?Sized>(
    model: &M,
    features: &Matrix,
    temperature: f32,
    eps: f32,
) -> Result<Vec<f64>> {
    if !(temperature > 0.0) || !(eps >= 0.0) {
        return Err(Error::Config(format!("odin needs T > 0 and eps >= 0, got T={temperature}, eps={eps}")));
    }
    let k = model.known_count();
    let tempered = |logits: &Matrix| -> Vec<f64> {
        logits
            .iter_rows()
            .map(|r| {
                let scaled: Vec<f32> = r.iter().map(|&v| v / temperature).collect();
                score_msp_known(&scaled, k)
            })
            .collect()
    };
    if eps == 0.0 || features.rows() == 0 {
        return Ok(tempered(&model.logits(features)?));
    }
    let logits = model.logits(features)?;
    let targets: Vec<usize> = logits.iter_rows().map(|r| argmax(&r[..k])).collect();
    // ∂/∂x of −ln softmax_target(z/T), i.e. tempered cross-entropy.
    let spec = LossSpec::SoftmaxCrossEntropy { temperature };
    let grads = loss_and_grads(model.net(), features, Targets::Classes(&targets), &spec, true)?;
    let grad = grads.input.expect("requested input gradient");
    let mut shifted = features.clone();
    for (x, g) in shifted.as_mut_slice().iter_mut().zip(grad.as_slice()) {
        *x -= eps * sign(*g);
    }
    Ok(tempered(&model.logits(&shifted)?))
}

/// Trains `φ^closed` with cross-entropy on `z / (‖z‖ τ)`; score it with MSP
/// on the raw logits.
pub fn train_logitnorm_classifier(
    data: &SyntheticDataset,
    class_order: &[usize],
    tau: f32,
    config: &ClassifierConfig,
) -> Result<TrainedClassifier<ClosedSetClassifier>> {
    if !(tau > 0.0) {
        return Err(Error::Config(format!("logitnorm tau must be > 0, got {tau}")));
    }
    train_closed_with_loss(data, class_order, &LossSpec::NormalizedLogitCe { tau }, config, "logitnorm-classifier")
}

/// One prediction per row: the baseline's open score and the argmax over the
/// known-class logits.
pub fn run_baseline<M: LogitModel + ?Sized>(
    spec: &BaselineSpec,
    model: &M,
    features: &Matrix,
) -> Result<Vec<ScoredPrediction>> {
    spec.validate()?;
    let logits = model.logits(features)?;
    let k = model.known_count();
    let ids = model.known_class_ids();
    let scores: Vec<f64> = match spec.kind {
        BaselineKind::Msp | BaselineKind::LogitNorm => {
            let t = if spec.kind == BaselineKind::Msp { spec.temperature } else { 1.0 };
            logits
                .iter_rows()
                .map(|r| score_msp_known(&r.iter().map(|&v| v / t).collect::<Vec<_>>(), k))
                .collect()
        }
        BaselineKind::MaxLogit => logits.iter_rows().map(|r| score_maxlogit(&r[..k])).collect(),
        BaselineKind::Energy => logits
            .iter_rows()
            .map(|r| score_energy(&r[..k], spec.temperature))
            .collect::<Result<_>>()?,
        BaselineKind::Odin => score_odin(model, features, spec.temperature, spec.odin_eps)?,
    };
    Ok(logits
        .iter_rows()
        .zip(scores)
        .map(|(r, score)| ScoredPrediction {
            score,
            predicted: ids[argmax(&r[..k])],
            logits: r.to_vec(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ase::adv_energy;
    use crate::ndcore::{finite_diff_check, Activation, Mlp};
    use proptest::prelude::*;

    fn linear(w: &[[f32; 2]], b: &[f32], ids: Vec<usize>) -> ClosedSetClassifier {
        let mut net = Mlp::new(&[2, w.len()], &[Activation::Identity], 0).unwrap();
        net.layers_mut()[0].weight = Matrix::from_rows(w).unwrap();
        net.layers_mut()[0].bias = b.to_vec();
        ClosedSetClassifier { net, class_ids: ids }
    }

    #[test]
    fn msp_examples() {
        assert!(score_msp(&[50.0, 0.0, 0.0]) < 1e-12);
        assert!((score_msp(&[0.3; 4]) - 0.75).abs() < 1e-12);
        let e = std::f64::consts::E;
        let expect = 1.0 - e * e / (e * e + e + 1.0);
        assert!((score_msp(&[2.0, 1.0, 0.0]) - expect).abs() < 1e-9);
        assert!((score_msp(&[2.0, 1.0, 0.0]) - 0.3348).abs() < 1e-4);
    }

    #[test]
    fn maxlogit_examples() {
        assert_eq!(score_maxlogit(&[5.0, 0.0]), -5.0);
        assert_eq!(score_maxlogit(&[8.0, 3.0]), -8.0);
        let batch: Vec<Vec<f32>> = vec![vec![1.0, 4.0], vec![3.0, 0.0], vec![-1.0, 2.5], vec![7.0, 7.0]];
        let mut by_score: Vec<usize> = (0..4).collect();
        by_score.sort_by(|&a, &b| score_maxlogit(&batch[a]).total_cmp(&score_maxlogit(&batch[b])));
        let mut by_max: Vec<usize> = (0..4).collect();
        let maxof = |v: &Vec<f32>| v.iter().copied().fold(f32::MIN, f32::max);
        by_max.sort_by(|&a, &b| maxof(&batch[b]).total_cmp(&maxof(&batch[a])));
        assert_eq!(by_score, by_max);
    }

    #[test]
    fn energy_examples() {
        assert!((score_energy(&[0.0, 0.0], 1.0).unwrap() + std::f64::consts::LN_2).abs() < 1e-12);
        assert!(score_energy(&[50.0, 0.0], 1.0).unwrap() < -49.9);
        assert!(score_energy(&[1.0], 0.0).is_err());
    }

    #[test]
    fn odin_without_perturbation_is_msp() {
        let clf = linear(&[[1.0, -0.5], [0.2, 0.9], [-0.7, 0.1]], &[0.1, 0.0, -0.2], vec![3, 4, 5]);
        let x = Matrix::from_rows(&[[0.5, 1.0], [-1.0, 0.2], [2.0, -0.3]]).unwrap();
        let odin = score_odin(&clf, &x, 1.0, 0.0).unwrap();
        let logits = clf.logits(&x).unwrap();
        for (o, r) in odin.iter().zip(logits.iter_rows()) {
            assert!((o - score_msp(r)).abs() < 1e-12);
        }
        let a = score_odin(&clf, &x, 1000.0, 0.005).unwrap();
        assert_eq!(a, score_odin(&clf, &x, 1000.0, 0.005).unwrap());
        assert!(a.iter().all(|s| (0.0..=1.0).contains(s)));
    }

    #[test]
    fn odin_perturbation_raises_confidence() {
        let clf = linear(&[[1.0, 0.0], [0.0, 1.0]], &[0.0, 0.0], vec![0, 1]);
        let x = Matrix::from_rows(&[[0.6, 0.4]]).unwrap();
        let before = score_odin(&clf, &x, 1.0, 0.0).unwrap()[0];
        let after = score_odin(&clf, &x, 1.0, 0.1).unwrap()[0];
        assert!(after < before);
    }

    #[test]
    fn odin_rows_are_independent() {
        let clf = linear(&[[1.0, -0.5], [0.2, 0.9]], &[0.1, 0.0], vec![0, 1]);
        let x = Matrix::from_rows(&[[0.5, 1.0], [-1.0, 0.2], [2.0, -0.3]]).unwrap();
        let all = score_odin(&clf, &x, 1000.0, 0.0014).unwrap();
        for r in 0..3 {
            let one = score_odin(&clf, &x.select_rows(&[r]), 1000.0, 0.0014).unwrap();
            assert_eq!(one[0], all[r]);
        }
    }

    #[test]
    fn logitnorm_normalized_logits_have_norm_one_over_tau() {
        let z = [3.0f64, -1.0, 0.5];
        let tau = 0.04;
        let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        let u: Vec<f64> = z.iter().map(|v| v / (norm * tau)).collect();
        let un = u.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((un - 1.0 / tau).abs() < 1e-9);
    }

    #[test]
    fn logitnorm_gradient_matches_finite_differences() {
        let net = Mlp::new(&[4, 3], &[Activation::Identity], 7).unwrap();
        let x = crate::rng::gaussian_matrix(&mut crate::rng::seeded(2), 5, 4, 1.0);
        let y = [0usize, 2, 1, 1, 0];
        let err = finite_diff_check(&net, &x, Targets::Classes(&y), &LossSpec::NormalizedLogitCe { tau: 0.5 }, 1e-4, true)
            .unwrap();
        assert!(err < 1e-3, "{err}");
    }

    #[test]
    fn logitnorm_fits_separable_toy_data() {
        let features = Matrix::from_rows(&[[2.0, 0.1], [1.5, -0.2], [-2.0, 0.3], [-1.0, 0.0]]).unwrap();
        let data = SyntheticDataset {
            features,
            labels: vec![0, 0, 1, 1].into_iter().map(crate::datasets::Label::Class).collect(),
            sources: vec![0, 0, 1, 1],
            provenance: crate::zslgen::Provenance::Unseen,
        };
        let cfg = ClassifierConfig {
            epochs: 200,
            batch: 4,
            lr: 0.05,
            seed: 0,
        };
        let t = train_logitnorm_classifier(&data, &[0, 1], 0.04, &cfg).unwrap();
        assert_eq!(t.train_accuracy, 1.0);
        assert!(train_logitnorm_classifier(&data, &[0, 1], 0.0, &cfg).is_err());
    }

    #[test]
    fn run_baseline_shapes_and_ids() {
        let clf = linear(&[[1.0, -0.5], [0.2, 0.9], [-0.7, 0.1]], &[0.1, 0.0, -0.2], vec![7, 8, 9]);
        let x = crate::rng::gaussian_matrix(&mut crate::rng::seeded(1), 11, 2, 1.0);
        for kind in BaselineKind::ALL {
            let out = run_baseline(&BaselineSpec::new(kind), &clf, &x).unwrap();
            assert_eq!(out.len(), 11);
            assert!(out.iter().all(|p| [7, 8, 9].contains(&p.predicted)));
        }
    }

    #[test]
    fn spec_parsing() {
        let s: BaselineSpec = "energy:2".parse().unwrap();
        assert_eq!((s.kind, s.temperature), (BaselineKind::Energy, 2.0));
        let s: BaselineSpec = "logitnorm:0.1".parse().unwrap();
        assert_eq!(s.tau, 0.1);
        assert_eq!("odin".parse::<BaselineSpec>().unwrap().temperature, 1000.0);
        assert!("openmax".parse::<BaselineSpec>().is_err());
        assert!("energy:0".parse::<BaselineSpec>().is_err());
    }

    fn logits() -> impl Strategy<Value = Vec<f32>> {
        prop::collection::vec(-20f32..20.0, 1..12)
    }

    proptest! {
        #[test]
        fn energy_is_negated_adv_energy(z in logits(), t in 0.05f32..50.0) {
            prop_assert_eq!(score_energy(&z, t).unwrap(), -adv_energy(&z, t).unwrap());
        }

        #[test]
        fn shift_behaviour(z in logits(), c in -5f32..5.0) {
            let shifted: Vec<f32> = z.iter().map(|v| v + c).collect();
            prop_assert!((score_msp(&z) - score_msp(&shifted)).abs() < 1e-6);
            prop_assert!((score_maxlogit(&shifted) - (score_maxlogit(&z) - f64::from(c))).abs() < 1e-4);
            let e = score_energy(&z, 1.0).unwrap() - score_energy(&shifted, 1.0).unwrap();
            prop_assert!((e - f64::from(c)).abs() < 1e-4);
            prop_assert!((0.0..=1.0).contains(&score_msp(&z)));
        }
    }
}
