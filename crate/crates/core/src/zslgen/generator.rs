use std::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::datasets::{Label, TrainingView};
use crate::ndcore::{
    adam_step, loss_on_outputs, Activation, AdamConfig, AdamState, LossSpec, Matrix, Mlp, Targets,
};
use crate::rng::{derive_seed, gaussian_matrix, stage_rng, Rng};
use crate::{Error, Result};

/// Clamp on the encoder's log-variance output.
const LOGVAR_LIMIT: f32 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorMode {
    /// Conditional WGAN with weight clipping on the critic.
    WganClip,
    /// Conditional VAE; the decoder is the generator.
    Cvae,
}

impl FromStr for GeneratorMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wgan-clip" => Ok(GeneratorMode::WganClip),
            "cvae" => Ok(GeneratorMode::Cvae),
            other => Err(Error::Config(format!("unknown generator mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub mode: GeneratorMode,
    pub hidden: usize,
    /// Defaults to the attribute dimension.
    pub noise_dim: Option<usize>,
    pub steps: usize,
    pub critic_steps: usize,
    pub clip: f32,
    pub batch: usize,
    pub lr: f32,
    pub kl_weight: f32,
    /// Hidden activation of the generator network.
    pub activation: Activation,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            mode: GeneratorMode::Cvae,
            hidden: 1024,
            noise_dim: None,
            steps: 2000,
            critic_steps: 5,
            clip: 0.01,
            batch: 64,
            lr: 1e-3,
            kl_weight: 1.0,
            activation: Activation::LeakyRelu,
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.batch == 0 {
            return Err(Error::Config("generator hidden width and batch must be positive".into()));
        }
        if self.noise_dim == Some(0) {
            return Err(Error::Config("generator noise_dim must be positive".into()));
        }
        if !(self.lr > 0.0) {
            return Err(Error::Config(format!("generator lr must be positive, got {}", self.lr)));
        }
        if self.mode == GeneratorMode::WganClip {
            if !(self.clip > 0.0) {
                return Err(Error::Config(format!(
                    "wgan-clip needs a positive clip value (got {}); a zero clip freezes the critic at zero",
                    self.clip
                )));
            }
            if self.critic_steps == 0 {
                return Err(Error::Config("wgan-clip needs at least one critic step".into()));
            }
        }
        if self.mode == GeneratorMode::Cvae && self.kl_weight < 0.0 {
            return Err(Error::Config("kl_weight must be non-negative".into()));
        }
        Ok(())
    }
}

/// `G(a, ε)`: input is `[a ⊕ ε]`, output a feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub net: Mlp,
    pub attr_dim: usize,
    pub noise_dim: usize,
}

impl Generator {
    pub fn new(attr_dim: usize, noise_dim: usize, hidden: usize, feature_dim: usize, seed: u64) -> Result<Self> {
        Self::with_activation(attr_dim, noise_dim, hidden, feature_dim, Activation::LeakyRelu, seed)
    }

    pub fn with_activation(
        attr_dim: usize,
        noise_dim: usize,
        hidden: usize,
        feature_dim: usize,
        activation: Activation,
        seed: u64,
    ) -> Result<Self> {
        let net = Mlp::new(
            &[attr_dim + noise_dim, hidden, feature_dim],
            &[activation, Activation::Identity],
            seed,
        )?;
        Ok(Generator {
            net,
            attr_dim,
            noise_dim,
        })
    }

    pub fn from_net(net: Mlp, attr_dim: usize) -> Result<Self> {
        let noise_dim = net
            .in_dim()
            .checked_sub(attr_dim)
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::shape("generator input", format!("> {attr_dim}"), net.in_dim()))?;
        Ok(Generator {
            net,
            attr_dim,
            noise_dim,
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.net.out_dim()
    }

    pub fn input(&self, attributes: &Matrix, noise: &Matrix) -> Result<Matrix> {
        if attributes.cols() != self.attr_dim {
            return Err(Error::shape("generator attribute width", self.attr_dim, attributes.cols()));
        }
        if noise.cols() != self.noise_dim {
            return Err(Error::shape("generator noise width", self.noise_dim, noise.cols()));
        }
        attributes.hstack(noise)
    }

    pub fn generate(&self, attributes: &Matrix, noise: &Matrix) -> Result<Matrix> {
        self.net.forward(&self.input(attributes, noise)?)
    }
}

/// `D(x, a)`: input is `[x ⊕ a]`, output a scalar.
#[derive(Debug, Clone, PartialEq)]
pub struct Discriminator {
    pub net: Mlp,
}

impl Discriminator {
    pub fn score(&self, features: &Matrix, attributes: &Matrix) -> Result<Matrix> {
        self.net.forward(&features.hstack(attributes)?)
    }
}

#[derive(Debug, Clone)]
pub struct GeneratorOutcome {
    pub generator: Generator,
    pub discriminator: Option<Discriminator>,
    /// Per step: reconstruction error (cvae) or critic estimate of
    /// `E[D(x, a)] − E[D(x̃, a)]` (wgan-clip).
    pub trace: Vec<f64>,
}

struct Batcher<'a> {
    view: &'a TrainingView,
    attrs_by_row: Matrix,
    rng: Rng,
}

impl<'a> Batcher<'a> {
    fn new(view: &'a TrainingView, seed: u64) -> Result<Self> {
        let attrs_by_row = view.attributes_for(view.labels())?;
        Ok(Batcher {
            view,
            attrs_by_row,
            rng: stage_rng(seed, "generator/batches", 0),
        })
    }

    fn sample(&mut self, n: usize) -> (Matrix, Matrix) {
        let rows = self.view.features().rows();
        let idx: Vec<usize> = (0..n).map(|_| self.rng.random_range(0..rows)).collect();
        (self.view.features().select_rows(&idx), self.attrs_by_row.select_rows(&idx))
    }
}

/// Trains a conditional generator on the seen classes of `view`.
pub fn train_generator(view: &TrainingView, config: &GeneratorConfig) -> Result<GeneratorOutcome> {
    config.validate()?;
    if view.features().rows() == 0 {
        return Err(Error::Empty("seen-class training view".into()));
    }
    match config.mode {
        GeneratorMode::Cvae => train_cvae(view, config),
        GeneratorMode::WganClip => train_wgan(view, config),
    }
}

fn train_cvae(view: &TrainingView, cfg: &GeneratorConfig) -> Result<GeneratorOutcome> {
    let (m, d) = (view.attr_dim(), view.feature_dim());
    let nz = cfg.noise_dim.unwrap_or(m);
    let mut decoder = Generator::with_activation(m, nz, cfg.hidden, d, cfg.activation, derive_seed(cfg.seed, "cvae/decoder", 0))?;
    let mut encoder = Mlp::new(
        &[d + m, cfg.hidden, 2 * nz],
        &[Activation::LeakyRelu, Activation::Identity],
        derive_seed(cfg.seed, "cvae/encoder", 0),
    )?;
    let adam = AdamConfig::with_lr(cfg.lr);
    let mut dec_opt = AdamState::for_model(&decoder.net, adam)?;
    let mut enc_opt = AdamState::for_model(&encoder, adam)?;
    let mut batcher = Batcher::new(view, cfg.seed)?;
    let mut noise_rng = stage_rng(cfg.seed, "cvae/noise", 0);
    let b = cfg.batch;
    let kl_w = cfg.kl_weight;
    let mut trace = Vec::with_capacity(cfg.steps);

    for step in 0..cfg.steps {
        let (x, a) = batcher.sample(b);
        let enc_trace = encoder.forward_cached(&x.hstack(&a)?)?;
        let stats = enc_trace.output();
        let eps = gaussian_matrix(&mut noise_rng, b, nz, 1.0);
        let mut z = Matrix::zeros(b, nz);
        let mut kl = 0f64;
        for r in 0..b {
            for j in 0..nz {
                let mu = stats.get(r, j);
                let lv = stats.get(r, nz + j).clamp(-LOGVAR_LIMIT, LOGVAR_LIMIT);
                z.set(r, j, mu + (0.5 * lv).exp() * eps.get(r, j));
                kl += -0.5 * f64::from(1.0 + lv - mu * mu - lv.exp());
            }
        }
        kl /= b as f64;

        let dec_trace = decoder.net.forward_cached(&a.hstack(&z)?)?;
        let (recon, grad_out) = loss_on_outputs(&LossSpec::MeanSquared, dec_trace.output(), Targets::Values(&x))?;
        let total = recon + f64::from(kl_w) * kl;
        if !total.is_finite() {
            return Err(Error::Diverged {
                step,
                message: "cvae loss is not finite".into(),
            });
        }
        trace.push(recon);

        let (dec_grads, dec_in) = decoder.net.backward(&dec_trace, &grad_out)?;
        let mut enc_out_grad = Matrix::zeros(b, 2 * nz);
        let inv_b = 1.0 / b as f32;
        for r in 0..b {
            for j in 0..nz {
                let mu = stats.get(r, j);
                let raw_lv = stats.get(r, nz + j);
                let lv = raw_lv.clamp(-LOGVAR_LIMIT, LOGVAR_LIMIT);
                let gz = dec_in.get(r, m + j);
                let sigma = (0.5 * lv).exp();
                enc_out_grad.set(r, j, gz + kl_w * mu * inv_b);
                let glv = if raw_lv.abs() < LOGVAR_LIMIT {
                    gz * eps.get(r, j) * 0.5 * sigma + kl_w * 0.5 * (lv.exp() - 1.0) * inv_b
                } else {
                    0.0
                };
                enc_out_grad.set(r, nz + j, glv);
            }
        }
        let (enc_grads, _) = encoder.backward(&enc_trace, &enc_out_grad)?;
        adam_step(&mut decoder.net, &dec_grads, &mut dec_opt)?;
        adam_step(&mut encoder, &enc_grads, &mut enc_opt)?;
    }
    if !decoder.net.all_finite() {
        return Err(Error::Diverged {
            step: cfg.steps,
            message: "decoder parameters are not finite".into(),
        });
    }
    Ok(GeneratorOutcome {
        generator: decoder,
        discriminator: None,
        trace,
    })
}

fn train_wgan(view: &TrainingView, cfg: &GeneratorConfig) -> Result<GeneratorOutcome> {
    let (m, d) = (view.attr_dim(), view.feature_dim());
    let nz = cfg.noise_dim.unwrap_or(m);
    let mut gen = Generator::with_activation(m, nz, cfg.hidden, d, cfg.activation, derive_seed(cfg.seed, "wgan/generator", 0))?;
    let mut critic = Discriminator {
        net: Mlp::new(
            &[d + m, cfg.hidden, 1],
            &[Activation::LeakyRelu, Activation::Identity],
            derive_seed(cfg.seed, "wgan/critic", 0),
        )?,
    };
    critic.net.clip_params(cfg.clip);
    let adam = AdamConfig {
        lr: cfg.lr,
        beta1: 0.5,
        beta2: 0.9,
        eps: 1e-8,
    };
    let mut gen_opt = AdamState::for_model(&gen.net, adam)?;
    let mut critic_opt = AdamState::for_model(&critic.net, adam)?;
    let mut batcher = Batcher::new(view, cfg.seed)?;
    let mut noise_rng = stage_rng(cfg.seed, "wgan/noise", 0);
    let b = cfg.batch;
    let inv_b = 1.0 / b as f32;
    let mut trace = Vec::with_capacity(cfg.steps);

    // Minimizing Σ w_r D_r with w = −1/B on real rows and +1/B on fake rows
    // maximizes E[D(x, a)] − E[D(x̃, a)].
    let critic_weights: Vec<f32> = (0..2 * b).map(|r| if r < b { -inv_b } else { inv_b }).collect();
    let gen_weights = vec![-inv_b; b];

    for step in 0..cfg.steps {
        let mut estimate = 0f64;
        for _ in 0..cfg.critic_steps {
            let (x, a) = batcher.sample(b);
            let eps = gaussian_matrix(&mut noise_rng, b, nz, 1.0);
            let fake = gen.generate(&a, &eps)?;
            let input = Matrix::vstack(&[&x.hstack(&a)?, &fake.hstack(&a)?])?;
            let tr = critic.net.forward_cached(&input)?;
            let (loss, g) = loss_on_outputs(&LossSpec::CriticDifference, tr.output(), Targets::RowWeights(&critic_weights))?;
            let (grads, _) = critic.net.backward(&tr, &g)?;
            adam_step(&mut critic.net, &grads, &mut critic_opt)?;
            critic.net.clip_params(cfg.clip);
            estimate = -loss;
        }
        if !estimate.is_finite() {
            return Err(Error::Diverged {
                step,
                message: "critic objective is not finite".into(),
            });
        }
        trace.push(estimate);

        let (_, a) = batcher.sample(b);
        let eps = gaussian_matrix(&mut noise_rng, b, nz, 1.0);
        let g_trace = gen.net.forward_cached(&gen.input(&a, &eps)?)?;
        let d_trace = critic.net.forward_cached(&g_trace.output().hstack(&a)?)?;
        let (_, g) = loss_on_outputs(&LossSpec::CriticDifference, d_trace.output(), Targets::RowWeights(&gen_weights))?;
        let (_, d_in) = critic.net.backward(&d_trace, &g)?;
        let (grads, _) = gen.net.backward(&g_trace, &d_in.columns(0, d))?;
        adam_step(&mut gen.net, &grads, &mut gen_opt)?;
    }
    if !gen.net.all_finite() {
        return Err(Error::Diverged {
            step: cfg.steps,
            message: "generator parameters are not finite".into(),
        });
    }
    Ok(GeneratorOutcome {
        generator: gen,
        discriminator: Some(critic),
        trace,
    })
}

/// Where a synthetic dataset came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Provenance {
    Unseen,
    Unknown,
    Variant(String),
}

/// Generated features. `sources[r]` is the class (or anchor class) row `r`
/// was generated from.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub features: Matrix,
    pub labels: Vec<Label>,
    pub sources: Vec<usize>,
    pub provenance: Provenance,
}

impl SyntheticDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Class ids of labelled rows, in row order.
    pub fn class_labels(&self) -> Vec<usize> {
        self.labels.iter().filter_map(|l| l.class()).collect()
    }

    /// Appends rows of `other`; provenance of `self` is kept.
    pub fn extend(&mut self, other: &SyntheticDataset) -> Result<()> {
        self.features = Matrix::vstack(&[&self.features, &other.features])?;
        self.labels.extend_from_slice(&other.labels);
        self.sources.extend_from_slice(&other.sources);
        Ok(())
    }
}

/// `n_per_class` samples `G(a_c, ε)` for each class, fresh `ε ~ N(0, I)` per
/// row. Each class draws noise from its own derived stream.
pub fn synthesize_features(
    generator: &Generator,
    class_ids: &[usize],
    attributes: &Matrix,
    n_per_class: usize,
    seed: u64,
) -> Result<SyntheticDataset> {
    if attributes.rows() != class_ids.len() {
        return Err(Error::shape("synthesis attribute rows", class_ids.len(), attributes.rows()));
    }
    if attributes.cols() != generator.attr_dim {
        return Err(Error::shape("synthesis attribute width", generator.attr_dim, attributes.cols()));
    }
    let mut data = Vec::with_capacity(class_ids.len() * n_per_class * generator.feature_dim());
    let mut labels = Vec::with_capacity(class_ids.len() * n_per_class);
    let mut sources = Vec::with_capacity(class_ids.len() * n_per_class);
    for (i, &c) in class_ids.iter().enumerate() {
        let mut rng = stage_rng(seed, "synthesize", c as u64);
        let noise = gaussian_matrix(&mut rng, n_per_class, generator.noise_dim, 1.0);
        let x = generator.generate(&attributes.select_rows(&vec![i; n_per_class]), &noise)?;
        data.extend_from_slice(x.as_slice());
        labels.extend(std::iter::repeat_n(Label::Class(c), n_per_class));
        sources.extend(std::iter::repeat_n(c, n_per_class));
    }
    let features = Matrix::from_vec(labels.len(), generator.feature_dim(), data)?;
    Ok(SyntheticDataset {
        features,
        labels,
        sources,
        provenance: Provenance::Unseen,
    })
}
