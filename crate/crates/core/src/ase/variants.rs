//! Alternative ways to fabricate unknown-class training features, used as
//! ablations against the learned embeddings.

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::embeddings::{adv_energy, resolve_init_noise, AnchorSet, AseStep};
use crate::datasets::Label;
use crate::ndcore::{loss_on_outputs, AdamConfig, AdamState, LossSpec, Matrix, Targets};
use crate::rng::{gaussian_matrix, stage_rng};
use crate::zslgen::{ClosedSetClassifier, Generator, Provenance, SyntheticDataset};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VariantStrategy {
    Mixup,
    UniformNoise,
    SemanticNoise,
    AdversarialFeatures,
}

impl VariantStrategy {
    pub const ALL: [VariantStrategy; 4] = [
        VariantStrategy::Mixup,
        VariantStrategy::UniformNoise,
        VariantStrategy::SemanticNoise,
        VariantStrategy::AdversarialFeatures,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            VariantStrategy::Mixup => "mixup",
            VariantStrategy::UniformNoise => "uniform-noise",
            VariantStrategy::SemanticNoise => "semantic-noise",
            VariantStrategy::AdversarialFeatures => "adversarial-features",
        }
    }
}

impl fmt::Display for VariantStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for VariantStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        VariantStrategy::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown variant strategy `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VariantConfig {
    /// Rows generated per anchor class.
    pub count_per_anchor: usize,
    /// Range of the mixing coefficient λ.
    pub mixup_range: (f32, f32),
    /// Std of the Gaussian added to anchor embeddings. `None` falls back to
    /// the ASE init scale.
    pub semantic_noise_scale: Option<f32>,
    pub adv_steps: usize,
    pub adv_lr: f32,
    /// Weight of the L2 pull back to the starting feature.
    pub adv_beta: f32,
    pub temperature: f32,
}

impl Default for VariantConfig {
    fn default() -> Self {
        VariantConfig {
            count_per_anchor: 1000,
            mixup_range: (0.3, 0.7),
            semantic_noise_scale: None,
            adv_steps: 200,
            adv_lr: 0.01,
            adv_beta: 1.0,
            temperature: 1.0,
        }
    }
}

/// Everything any strategy may draw on.
#[derive(Debug, Clone, Copy)]
pub struct VariantInputs<'a> {
    pub unseen_synth: &'a SyntheticDataset,
    pub generator: &'a Generator,
    pub phi_closed: &'a ClosedSetClassifier,
    pub anchors: &'a AnchorSet,
}

/// `λ x_i + (1 − λ) x_j`.
pub fn mixup(x_i: &[f32], x_j: &[f32], lambda: f32) -> Vec<f32> {
    x_i.iter().zip(x_j).map(|(&a, &b)| lambda * a + (1.0 - lambda) * b).collect()
}

fn labelled(features: Matrix, sources: Vec<usize>, strategy: VariantStrategy) -> Result<SyntheticDataset> {
    if features.rows() != sources.len() {
        return Err(Error::shape("variant rows", sources.len(), features.rows()));
    }
    Ok(SyntheticDataset {
        labels: vec![Label::Unknown; sources.len()],
        features,
        sources,
        provenance: Provenance::Variant(strategy.as_str().to_string()),
    })
}

pub fn variant_unknowns(
    strategy: VariantStrategy,
    inputs: &VariantInputs<'_>,
    config: &VariantConfig,
    seed: u64,
) -> Result<SyntheticDataset> {
    if config.count_per_anchor == 0 {
        return Err(Error::Config("count_per_anchor must be >= 1".into()));
    }
    match strategy {
        VariantStrategy::Mixup => mixup_unknowns(inputs, config, seed),
        VariantStrategy::UniformNoise => uniform_unknowns(inputs, config, seed),
        VariantStrategy::SemanticNoise => semantic_unknowns(inputs, config, seed),
        VariantStrategy::AdversarialFeatures => Ok(adversarial_features(inputs, config, seed)?.0),
    }
}

fn total_rows(inputs: &VariantInputs<'_>, config: &VariantConfig) -> usize {
    inputs.anchors.len() * config.count_per_anchor
}

fn mixup_unknowns(inputs: &VariantInputs<'_>, config: &VariantConfig, seed: u64) -> Result<SyntheticDataset> {
    let data = inputs.unseen_synth;
    let (lo, hi) = config.mixup_range;
    if !(0.0..=1.0).contains(&lo) || !(lo..=1.0).contains(&hi) {
        return Err(Error::Config(format!("mixup range must satisfy 0 <= lo <= hi <= 1, got ({lo}, {hi})")));
    }
    let first = *data.sources.first().ok_or_else(|| Error::Empty("unseen features for mixup".into()))?;
    if data.sources.iter().all(|&s| s == first) {
        return Err(Error::Config("mixup needs features from at least two classes".into()));
    }
    let mut rng = stage_rng(seed, "variant/mixup", 0);
    let n = total_rows(inputs, config);
    let mut out = Vec::with_capacity(n * data.features.cols());
    let mut sources = Vec::with_capacity(n);
    for _ in 0..n {
        let i = rng.random_range(0..data.len());
        let j = loop {
            let j = rng.random_range(0..data.len());
            if data.sources[j] != data.sources[i] {
                break j;
            }
        };
        let lambda = if hi > lo { rng.random_range(lo..hi) } else { lo };
        out.extend(mixup(data.features.row(i), data.features.row(j), lambda));
        sources.push(data.sources[i]);
    }
    labelled(Matrix::from_vec(n, data.features.cols(), out)?, sources, VariantStrategy::Mixup)
}

fn uniform_unknowns(inputs: &VariantInputs<'_>, config: &VariantConfig, seed: u64) -> Result<SyntheticDataset> {
    let data = inputs.unseen_synth;
    if data.is_empty() {
        return Err(Error::Empty("unseen features for uniform noise".into()));
    }
    let d = data.features.cols();
    let mut lo = vec![f32::INFINITY; d];
    let mut hi = vec![f32::NEG_INFINITY; d];
    for row in data.features.iter_rows() {
        for j in 0..d {
            lo[j] = lo[j].min(row[j]);
            hi[j] = hi[j].max(row[j]);
        }
    }
    let mut rng = stage_rng(seed, "variant/uniform", 0);
    let n = total_rows(inputs, config);
    let mut out = Vec::with_capacity(n * d);
    for _ in 0..n {
        for j in 0..d {
            out.push(if hi[j] > lo[j] { rng.random_range(lo[j]..hi[j]) } else { lo[j] });
        }
    }
    let sources = (0..n).map(|r| inputs.anchors.class_ids[r / config.count_per_anchor]).collect();
    labelled(Matrix::from_vec(n, d, out)?, sources, VariantStrategy::UniformNoise)
}

/// `G(ã + σ·N(0, I), ε)`. The `ε` stream per anchor is the one
/// `synthesize_features` uses, so `σ = 0` reproduces it exactly.
fn semantic_unknowns(inputs: &VariantInputs<'_>, config: &VariantConfig, seed: u64) -> Result<SyntheticDataset> {
    let g = inputs.generator;
    let anchors = inputs.anchors;
    let sigma = match config.semantic_noise_scale {
        Some(s) if s >= 0.0 => s,
        Some(s) => return Err(Error::Config(format!("semantic noise scale must be >= 0, got {s}"))),
        None => resolve_init_noise(anchors, &Default::default()),
    };
    let per = config.count_per_anchor;
    let mut out = Vec::with_capacity(anchors.len() * per * g.feature_dim());
    for (i, &c) in anchors.class_ids.iter().enumerate() {
        let eps = gaussian_matrix(&mut stage_rng(seed, "synthesize", c as u64), per, g.noise_dim, 1.0);
        let shift = gaussian_matrix(&mut stage_rng(seed, "variant/semantic", c as u64), per, g.attr_dim, sigma);
        let mut emb = anchors.attributes.select_rows(&vec![i; per]);
        emb.as_mut_slice().iter_mut().zip(shift.as_slice()).for_each(|(e, s)| *e += s);
        out.extend_from_slice(g.generate(&emb, &eps)?.as_slice());
    }
    let sources = anchors.class_ids.iter().flat_map(|&c| std::iter::repeat_n(c, per)).collect();
    labelled(
        Matrix::from_vec(anchors.len() * per, g.feature_dim(), out)?,
        sources,
        VariantStrategy::SemanticNoise,
    )
}

/// Starts at randomly drawn synthesized unseen features and descends
/// `T·lse(φ(x)/T) + β‖x − x₀‖` directly in feature space. Returns the rows
/// and the per-step mean terms.
pub fn adversarial_features(
    inputs: &VariantInputs<'_>,
    config: &VariantConfig,
    seed: u64,
) -> Result<(SyntheticDataset, Vec<AseStep>)> {
    let data = inputs.unseen_synth;
    let phi = inputs.phi_closed;
    if data.is_empty() {
        return Err(Error::Empty("unseen features for adversarial features".into()));
    }
    if !(config.temperature > 0.0) || !(config.adv_lr > 0.0) || !(config.adv_beta >= 0.0) {
        return Err(Error::Config("adversarial features need T > 0, lr > 0 and beta >= 0".into()));
    }
    let n = total_rows(inputs, config);
    let mut rng = stage_rng(seed, "variant/adv-features", 0);
    let picks: Vec<usize> = (0..n).map(|_| rng.random_range(0..data.len())).collect();
    let start = data.features.select_rows(&picks);
    let mut x = start.clone();
    let d = x.cols();
    let spec = LossSpec::FreeEnergy {
        temperature: config.temperature,
    };
    let beta = f64::from(config.adv_beta);
    let mut opt = AdamState::new(AdamConfig::with_lr(config.adv_lr), &[n * d])?;
    let mut trace = Vec::with_capacity(config.adv_steps + 1);
    for step in 0..=config.adv_steps {
        let t = phi.net.forward_cached(&x)?;
        let (adv_mean, mut g_logits) = loss_on_outputs(&spec, t.output(), Targets::None)?;
        g_logits.as_mut_slice().iter_mut().for_each(|v| *v *= n as f32);
        let (_, mut grad) = phi.net.backward(&t, &g_logits)?;
        let mut dis_sum = 0.0;
        for r in 0..n {
            let diff: Vec<f64> = x.row(r).iter().zip(start.row(r)).map(|(&a, &b)| f64::from(a - b)).collect();
            let dist = diff.iter().map(|v| v * v).sum::<f64>().sqrt();
            dis_sum += dist;
            if dist > 0.0 {
                for (g, v) in grad.row_mut(r).iter_mut().zip(&diff) {
                    *g += (beta * v / dist) as f32;
                }
            }
        }
        let dis = dis_sum / n as f64;
        if !adv_mean.is_finite() || !grad.all_finite() {
            return Err(Error::Diverged {
                step,
                message: "non-finite adversarial-feature loss".into(),
            });
        }
        trace.push(AseStep {
            total: adv_mean + beta * dis,
            adv: adv_mean,
            dis,
        });
        if step < config.adv_steps {
            opt.update(vec![x.as_mut_slice()], &[grad.as_slice()])?;
        }
    }
    let sources = picks.iter().map(|&i| data.sources[i]).collect();
    Ok((labelled(x, sources, VariantStrategy::AdversarialFeatures)?, trace))
}

/// Mean `T·lse(φ(x)/T)` over rows, i.e. the negated mean free energy.
pub fn mean_adv_energy(phi: &ClosedSetClassifier, features: &Matrix, temperature: f32) -> Result<f64> {
    let logits = phi.net.forward(features)?;
    let mut sum = 0.0;
    for row in logits.iter_rows() {
        sum += adv_energy(row, temperature)?;
    }
    Ok(sum / logits.rows().max(1) as f64)
}
