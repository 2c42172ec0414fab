use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::datasets::{Label, TrainingView};
use crate::ndcore::{log_sum_exp, loss_on_outputs, l2_norm, AdamConfig, AdamState, LossSpec, Matrix, Targets};
use crate::rng::{gaussian_matrix, stage_rng};
use crate::zslgen::{ClosedSetClassifier, Generator, Provenance, SyntheticDataset};
use crate::{Error, Result};

/// Which class embeddings the adversarial embeddings are grown around.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnchorMode {
    #[default]
    UnseenOnly,
    SeenAndUnseen,
}

impl FromStr for AnchorMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unseen-only" | "unseen" => Ok(AnchorMode::UnseenOnly),
            "seen-and-unseen" | "all" => Ok(AnchorMode::SeenAndUnseen),
            other => Err(Error::Config(format!("unknown anchor mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AseConfig {
    /// Weight of the distance term.
    pub beta: f32,
    pub temperature: f32,
    pub embeddings_per_anchor: usize,
    pub steps: usize,
    pub lr: f32,
    /// Std of the Gaussian around each anchor at init. `None` means
    /// 0.05 × mean anchor norm.
    pub init_noise_scale: Option<f32>,
    /// Noise draws `ε` per embedding per loss evaluation.
    pub noise_samples: usize,
    pub anchors: AnchorMode,
    /// Unknown features generated per learned embedding.
    pub per_embedding: usize,
    /// Optional per-coordinate clamp `[lo, hi]` applied after every step.
    pub box_bounds: Option<(f32, f32)>,
}

impl Default for AseConfig {
    fn default() -> Self {
        AseConfig {
            beta: 1.0,
            temperature: 1.0,
            embeddings_per_anchor: 50,
            steps: 200,
            lr: 0.01,
            init_noise_scale: None,
            noise_samples: 8,
            anchors: AnchorMode::UnseenOnly,
            per_embedding: 20,
            box_bounds: None,
        }
    }
}

impl AseConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return Err(Error::Config(format!("beta must be finite and >= 0, got {}", self.beta)));
        }
        if !(self.temperature > 0.0) {
            return Err(Error::Config(format!("temperature must be > 0, got {}", self.temperature)));
        }
        if self.embeddings_per_anchor == 0 || self.noise_samples == 0 || self.per_embedding == 0 {
            return Err(Error::Config(
                "embeddings_per_anchor, noise_samples and per_embedding must be >= 1".into(),
            ));
        }
        if !(self.lr > 0.0) {
            return Err(Error::Config(format!("ase lr must be positive, got {}", self.lr)));
        }
        if let Some(s) = self.init_noise_scale {
            if !(s >= 0.0) {
                return Err(Error::Config(format!("init_noise_scale must be >= 0, got {s}")));
            }
        }
        if let Some((lo, hi)) = self.box_bounds {
            if !(lo < hi) {
                return Err(Error::Config(format!("box bounds need lo < hi, got [{lo}, {hi}]")));
            }
        }
        Ok(())
    }
}

/// Class embeddings that adversarial embeddings are anchored to.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorSet {
    pub class_ids: Vec<usize>,
    pub attributes: Matrix,
}

impl AnchorSet {
    pub fn new(class_ids: Vec<usize>, attributes: Matrix) -> Result<Self> {
        if class_ids.is_empty() {
            return Err(Error::Empty("anchor set".into()));
        }
        if attributes.rows() != class_ids.len() {
            return Err(Error::shape("anchor attribute rows", class_ids.len(), attributes.rows()));
        }
        Ok(AnchorSet { class_ids, attributes })
    }

    pub fn from_view(view: &TrainingView, mode: AnchorMode) -> Result<Self> {
        match mode {
            AnchorMode::UnseenOnly => Self::new(view.unseen_ids().to_vec(), view.unseen_attributes().clone()),
            AnchorMode::SeenAndUnseen => {
                let mut ids = view.seen_ids().to_vec();
                ids.extend_from_slice(view.unseen_ids());
                let attrs = Matrix::vstack(&[view.seen_attributes(), view.unseen_attributes()])?;
                Self::new(ids, attrs)
            }
        }
    }

    pub fn len(&self) -> usize {
        self.class_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.class_ids.is_empty()
    }

    pub fn mean_norm(&self) -> f64 {
        self.attributes.iter_rows().map(l2_norm).sum::<f64>() / self.len() as f64
    }
}

/// `T · ln Σ exp(z_i / T)`, the negated free energy of one logit row.
pub fn adv_energy(logits: &[f32], temperature: f32) -> Result<f64> {
    if !(temperature > 0.0) {
        return Err(Error::Config(format!("temperature must be > 0, got {temperature}")));
    }
    if logits.is_empty() {
        return Err(Error::Empty("logit vector".into()));
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("logits".into()));
    }
    let t = f64::from(temperature);
    let z: Vec<f64> = logits.iter().map(|&v| f64::from(v) / t).collect();
    Ok(t * log_sum_exp(&z))
}

/// `‖â − ã‖₂`.
pub fn dis_loss(a_hat: &[f32], a_anchor: &[f32]) -> Result<f64> {
    if a_hat.len() != a_anchor.len() {
        return Err(Error::shape("embedding width", a_anchor.len(), a_hat.len()));
    }
    Ok(a_hat
        .iter()
        .zip(a_anchor)
        .map(|(&a, &b)| (f64::from(a) - f64::from(b)).powi(2))
        .sum::<f64>()
        .sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct AseLoss {
    pub total: f64,
    pub adv: f64,
    pub dis: f64,
    /// `∂L_ase/∂â`.
    pub grad: Vec<f32>,
}

/// Per-embedding terms and gradients for a batch of embeddings.
struct BatchObjective {
    adv: Vec<f64>,
    dis: Vec<f64>,
    grad: Matrix,
}

/// Evaluates `L_adv + β L_dis` for every row of `embeddings`. `noise` holds
/// `samples` consecutive rows per embedding. Gradients reach the embeddings
/// through `G` and `φ` without touching their parameters.
fn batch_objective(
    embeddings: &Matrix,
    anchors: &Matrix,
    generator: &Generator,
    phi: &ClosedSetClassifier,
    beta: f32,
    temperature: f32,
    noise: &Matrix,
    samples: usize,
) -> Result<BatchObjective> {
    let n = embeddings.rows();
    if anchors.shape() != embeddings.shape() {
        return Err(Error::shape(
            "anchor rows",
            format!("{}x{}", n, embeddings.cols()),
            format!("{}x{}", anchors.rows(), anchors.cols()),
        ));
    }
    if noise.rows() != n * samples {
        return Err(Error::shape("noise rows", n * samples, noise.rows()));
    }
    let m = generator.attr_dim;
    let repeated: Vec<usize> = (0..n).flat_map(|i| std::iter::repeat_n(i, samples)).collect();
    let input = generator.input(&embeddings.select_rows(&repeated), noise)?;
    let g_trace = generator.net.forward_cached(&input)?;
    let phi_trace = phi.net.forward_cached(g_trace.output())?;
    let logits = phi_trace.output();
    let spec = LossSpec::FreeEnergy { temperature };
    let (_, mut g_logits) = loss_on_outputs(&spec, logits, Targets::None)?;
    // The loss is a mean over all n·samples rows; rescale so each embedding's
    // gradient is that of its own mean over samples.
    g_logits.as_mut_slice().iter_mut().for_each(|v| *v *= n as f32);
    let (_, g_features) = phi.net.backward(&phi_trace, &g_logits)?;
    let (_, g_input) = generator.net.backward(&g_trace, &g_features)?;

    let mut adv = vec![0f64; n];
    for (r, row) in logits.iter_rows().enumerate() {
        adv[r / samples] += adv_energy(row, temperature)? / samples as f64;
    }
    let mut grad = Matrix::zeros(n, m);
    for r in 0..n * samples {
        let src = &g_input.row(r)[..m];
        for (g, &s) in grad.row_mut(r / samples).iter_mut().zip(src) {
            *g += s;
        }
    }
    let mut dis = vec![0f64; n];
    for i in 0..n {
        let d = dis_loss(embeddings.row(i), anchors.row(i))?;
        dis[i] = d;
        if d > 0.0 && beta > 0.0 {
            let (e, a) = (embeddings.row(i).to_vec(), anchors.row(i).to_vec());
            for ((g, ei), ai) in grad.row_mut(i).iter_mut().zip(e).zip(a) {
                *g += (f64::from(beta) * (f64::from(ei) - f64::from(ai)) / d) as f32;
            }
        }
    }
    Ok(BatchObjective { adv, dis, grad })
}

/// `L_ase = L_adv + β L_dis` for one embedding, with `L_adv` averaged over
/// the rows of `noise`.
pub fn ase_loss(
    a_hat: &[f32],
    a_anchor: &[f32],
    generator: &Generator,
    phi_closed: &ClosedSetClassifier,
    config: &AseConfig,
    noise: &Matrix,
) -> Result<AseLoss> {
    config.validate()?;
    if a_hat.len() != generator.attr_dim {
        return Err(Error::shape("embedding width", generator.attr_dim, a_hat.len()));
    }
    if noise.rows() == 0 {
        return Err(Error::Empty("noise batch".into()));
    }
    let e = Matrix::from_vec(1, a_hat.len(), a_hat.to_vec())?;
    let a = Matrix::from_vec(1, a_anchor.len(), a_anchor.to_vec())?;
    let obj = batch_objective(&e, &a, generator, phi_closed, config.beta, config.temperature, noise, noise.rows())?;
    Ok(AseLoss {
        total: obj.adv[0] + f64::from(config.beta) * obj.dis[0],
        adv: obj.adv[0],
        dis: obj.dis[0],
        grad: obj.grad.row(0).to_vec(),
    })
}

/// Mean loss terms over all embeddings at one optimisation step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AseStep {
    pub total: f64,
    pub adv: f64,
    pub dis: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdversarialEmbeddingSet {
    /// Anchor class of each embedding row.
    pub anchor_ids: Vec<usize>,
    /// Anchor attribute vector of each embedding row.
    pub anchors: Matrix,
    pub embeddings: Matrix,
    /// Per-embedding loss terms after learning; empty before.
    pub final_adv: Vec<f64>,
    pub final_dis: Vec<f64>,
    pub trace: Vec<AseStep>,
    /// Trailing-window mean of the trace is at most the leading-window mean.
    pub trend_ok: bool,
}

impl AdversarialEmbeddingSet {
    pub fn len(&self) -> usize {
        self.anchor_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchor_ids.is_empty()
    }

    pub fn attr_dim(&self) -> usize {
        self.embeddings.cols()
    }

    pub fn distances(&self) -> Vec<f64> {
        (0..self.len())
            .map(|i| dis_loss(self.embeddings.row(i), self.anchors.row(i)).expect("same width"))
            .collect()
    }

    pub fn mean_distance(&self) -> f64 {
        self.distances().iter().sum::<f64>() / self.len().max(1) as f64
    }

    pub fn rows_for_anchor(&self, class: usize) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.anchor_ids[i] == class).collect()
    }
}

/// Default init noise when the config leaves it open.
pub fn resolve_init_noise(anchors: &AnchorSet, config: &AseConfig) -> f32 {
    config
        .init_noise_scale
        .unwrap_or_else(|| (0.05 * anchors.mean_norm()) as f32)
}

/// `embeddings_per_anchor` copies of each anchor plus isotropic Gaussian noise.
pub fn init_embeddings(anchors: &AnchorSet, config: &AseConfig, seed: u64) -> Result<AdversarialEmbeddingSet> {
    config.validate()?;
    if anchors.is_empty() {
        return Err(Error::Empty("anchor set".into()));
    }
    let per = config.embeddings_per_anchor;
    let scale = resolve_init_noise(anchors, config);
    let rows: Vec<usize> = (0..anchors.len()).flat_map(|i| std::iter::repeat_n(i, per)).collect();
    let anchor_rows = anchors.attributes.select_rows(&rows);
    let mut embeddings = anchor_rows.clone();
    for (i, &c) in anchors.class_ids.iter().enumerate() {
        let mut rng = stage_rng(seed, "ase/init", c as u64);
        let noise = gaussian_matrix(&mut rng, per, anchors.attributes.cols(), scale);
        for k in 0..per {
            for (e, z) in embeddings.row_mut(i * per + k).iter_mut().zip(noise.row(k)) {
                *e += z;
            }
        }
    }
    Ok(AdversarialEmbeddingSet {
        anchor_ids: rows.iter().map(|&i| anchors.class_ids[i]).collect(),
        anchors: anchor_rows,
        embeddings,
        final_adv: Vec::new(),
        final_dis: Vec::new(),
        trace: Vec::new(),
        trend_ok: true,
    })
}

fn check_finite(obj: &BatchObjective, step: usize) -> Result<()> {
    let bad = (0..obj.adv.len()).find(|&i| {
        !obj.adv[i].is_finite() || !obj.dis[i].is_finite() || obj.grad.row(i).iter().any(|g| !g.is_finite())
    });
    match bad {
        Some(i) => Err(Error::Diverged {
            step,
            message: format!("non-finite ASE loss for embedding {i}"),
        }),
        None => Ok(()),
    }
}

fn check_embeddings(embeddings: &Matrix, step: usize) -> Result<()> {
    match embeddings.iter_rows().position(|r| r.iter().any(|v| !v.is_finite())) {
        Some(i) => Err(Error::Diverged {
            step,
            message: format!("embedding {i} is non-finite"),
        }),
        None => Ok(()),
    }
}

fn step_summary(obj: &BatchObjective, beta: f32) -> AseStep {
    let n = obj.adv.len() as f64;
    let adv = obj.adv.iter().sum::<f64>() / n;
    let dis = obj.dis.iter().sum::<f64>() / n;
    AseStep {
        total: adv + f64::from(beta) * dis,
        adv,
        dis,
    }
}

/// Minimises `L_ase` over every embedding with Adam. `G` and `φ^closed` are
/// borrowed immutably and cannot change.
pub fn learn_embeddings(
    init: &AdversarialEmbeddingSet,
    generator: &Generator,
    phi_closed: &ClosedSetClassifier,
    config: &AseConfig,
    seed: u64,
) -> Result<AdversarialEmbeddingSet> {
    config.validate()?;
    if init.attr_dim() != generator.attr_dim {
        return Err(Error::shape("embedding width", generator.attr_dim, init.attr_dim()));
    }
    if phi_closed.net.in_dim() != generator.feature_dim() {
        return Err(Error::shape("closed classifier input", generator.feature_dim(), phi_closed.net.in_dim()));
    }
    let n = init.len();
    let s = config.noise_samples;
    let mut out = init.clone();
    let mut opt = AdamState::new(AdamConfig::with_lr(config.lr), &[n * out.attr_dim()])?;
    let mut trace = Vec::with_capacity(config.steps);
    for step in 0..config.steps {
        check_embeddings(&out.embeddings, step)?;
        let noise = gaussian_matrix(&mut stage_rng(seed, "ase/noise", step as u64), n * s, generator.noise_dim, 1.0);
        let obj = batch_objective(
            &out.embeddings,
            &out.anchors,
            generator,
            phi_closed,
            config.beta,
            config.temperature,
            &noise,
            s,
        )?;
        check_finite(&obj, step)?;
        trace.push(step_summary(&obj, config.beta));
        opt.update(vec![out.embeddings.as_mut_slice()], &[obj.grad.as_slice()])?;
        if let Some((lo, hi)) = config.box_bounds {
            out.embeddings.as_mut_slice().iter_mut().for_each(|v| *v = v.clamp(lo, hi));
        }
    }
    check_embeddings(&out.embeddings, config.steps)?;
    let noise = gaussian_matrix(&mut stage_rng(seed, "ase/final", 0), n * s, generator.noise_dim, 1.0);
    let fin = batch_objective(
        &out.embeddings,
        &out.anchors,
        generator,
        phi_closed,
        config.beta,
        config.temperature,
        &noise,
        s,
    )?;
    check_finite(&fin, config.steps)?;
    out.final_adv = fin.adv;
    out.final_dis = fin.dis;
    out.trend_ok = trend_holds(&trace);
    if !out.trend_ok {
        log::warn!("ASE loss did not decrease over {} steps", config.steps);
    }
    out.trace = trace;
    Ok(out)
}

/// Trailing-window mean of `L_ase` is at most the leading-window mean.
fn trend_holds(trace: &[AseStep]) -> bool {
    if trace.len() < 2 {
        return true;
    }
    let w = (trace.len() / 10).max(1);
    let mean = |s: &[AseStep]| s.iter().map(|t| t.total).sum::<f64>() / s.len() as f64;
    mean(&trace[trace.len() - w..]) <= mean(&trace[..w])
}

/// `per_embedding` features `G(â, ε)` per learned embedding, all labelled
/// unknown. `sources` records each row's anchor class.
pub fn generate_unknown_features(
    generator: &Generator,
    set: &AdversarialEmbeddingSet,
    per_embedding: usize,
    seed: u64,
) -> Result<SyntheticDataset> {
    if per_embedding == 0 {
        return Err(Error::Config("per_embedding must be >= 1".into()));
    }
    if set.attr_dim() != generator.attr_dim {
        return Err(Error::shape("embedding width", generator.attr_dim, set.attr_dim()));
    }
    let total = set.len() * per_embedding;
    let mut data = Vec::with_capacity(total * generator.feature_dim());
    for i in 0..set.len() {
        let noise = gaussian_matrix(
            &mut stage_rng(seed, "ase/unknown-synth", i as u64),
            per_embedding,
            generator.noise_dim,
            1.0,
        );
        let x = generator.generate(&set.embeddings.select_rows(&vec![i; per_embedding]), &noise)?;
        data.extend_from_slice(x.as_slice());
    }
    Ok(SyntheticDataset {
        features: Matrix::from_vec(total, generator.feature_dim(), data)?,
        labels: vec![Label::Unknown; total],
        sources: set
            .anchor_ids
            .iter()
            .flat_map(|&c| std::iter::repeat_n(c, per_embedding))
            .collect(),
        provenance: Provenance::Unknown,
    })
}
