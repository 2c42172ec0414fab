use std::collections::BTreeMap;

use log::{debug, info};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::config::{hash_json, DatasetSource, Mode, RunConfig};
use crate::ase::{
    generate_unknown_features, init_embeddings, learn_embeddings, score_open, train_open_classifier,
    variant_unknowns, AdversarialEmbeddingSet, AnchorMode, AnchorSet, AseConfig, OpenTraining, VariantInputs,
    VariantStrategy,
};
use crate::baselines::{run_baseline, train_logitnorm_classifier, BaselineKind, BaselineSpec};
use crate::datasets::{
    load_bundle, synth_world, DatasetBundle, Label, SplitKind, SplitMode, SplitSpec, SplitView, TrainingView,
};
use crate::evalkit::{auroc, make_report, MetricsReport, RunMeta, ScoredPrediction};
use crate::ndcore::Matrix;
use crate::rng::{derive_seed, stage_rng};
use crate::zslgen::{
    synthesize_features, train_closed_classifier, train_generator, ClassifierConfig, ClosedSetClassifier,
    Generator, GeneratorConfig, Provenance, SyntheticDataset,
};
use crate::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Names of the per-stage seeds derived from a master seed.
pub const SUB_SEED_NAMES: [&str; 13] = [
    "world",
    "world-ood",
    "split",
    "generator",
    "synthesize",
    "closed",
    "validation",
    "ase-init",
    "ase-learn",
    "unknown-synth",
    "open",
    "baselines",
    "variants",
];

pub fn sub_seed(master: u64, name: &str) -> u64 {
    derive_seed(master, &format!("pipeline/{name}"), 0)
}

pub fn sub_seeds(master: u64) -> BTreeMap<String, u64> {
    SUB_SEED_NAMES.iter().map(|n| (n.to_string(), sub_seed(master, n))).collect()
}

/// Config hash of every stage for one master seed. Each hash covers the
/// config slice the stage reads plus its parent's hash, so a change anywhere
/// upstream changes every hash below it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageHashes {
    pub synth_data: String,
    pub split: String,
    pub train_gen: String,
    pub train_closed: String,
    pub learn_ase: String,
    pub train_open: String,
    pub score: String,
    pub baseline: String,
    pub ablation: String,
    pub eval: String,
}

fn chain(stage: &str, parent: Option<&str>, slice: serde_json::Value) -> Result<String> {
    hash_json(&json!({ "stage": stage, "parent": parent, "slice": slice, "version": VERSION }))
}

impl StageHashes {
    pub fn of(cfg: &RunConfig, seed: u64) -> Result<Self> {
        let other = match &cfg.mode {
            Mode::Ood { other, .. } => Some(other),
            _ => None,
        };
        let synth_data = chain("synth-data", None, json!({ "dataset": cfg.dataset, "other": other, "seed": seed }))?;
        let split = chain("split", Some(&synth_data), json!({ "mode": cfg.mode }))?;
        let train_gen = chain("train-gen", Some(&split), json!({ "generator": cfg.generator }))?;
        let train_closed = chain(
            "train-closed",
            Some(&train_gen),
            json!({ "synth_per_class": cfg.synth_per_class, "classifier": cfg.classifier }),
        )?;
        let learn_ase = chain(
            "learn-ase",
            Some(&train_closed),
            json!({ "ase": cfg.ase, "tuning": cfg.tuning, "open": cfg.open }),
        )?;
        let train_open = chain("train-open", Some(&learn_ase), json!({ "open": cfg.open }))?;
        let score = chain("score", Some(&train_open), json!({}))?;
        let baseline = chain(
            "baseline",
            Some(&train_closed),
            json!({ "baselines": cfg.baselines, "tuning": cfg.tuning }),
        )?;
        let ablation = chain(
            "ablation",
            Some(&train_closed),
            json!({ "variants": cfg.variants, "variant": cfg.variant, "ase": cfg.ase, "open": cfg.open }),
        )?;
        let eval = chain(
            "eval",
            Some(&score),
            json!({
                "baseline": baseline,
                "ablation": ablation,
                "bins": cfg.bins,
                "fpr95_positive": cfg.fpr95_positive,
            }),
        )?;
        Ok(StageHashes {
            synth_data,
            split,
            train_gen,
            train_closed,
            learn_ase,
            train_open,
            score,
            baseline,
            ablation,
            eval,
        })
    }
}

/// Loads or generates one dataset. `slot` picks the world seed stream so the
/// OOD dataset differs from the primary one.
pub fn load_source(source: &DatasetSource, seed: u64, slot: &str) -> Result<DatasetBundle> {
    match source {
        DatasetSource::Manifest { path } => load_bundle(path),
        DatasetSource::Synthetic { config, world_seed } => {
            let s = world_seed.unwrap_or_else(|| sub_seed(seed, slot));
            Ok(synth_world(config, s)?.bundle)
        }
    }
}

pub fn make_split(cfg: &RunConfig, bundle: &DatasetBundle, other: Option<&DatasetBundle>, seed: u64) -> Result<SplitView> {
    let s = sub_seed(seed, "split");
    match &cfg.mode {
        Mode::ZsOsr => bundle.make_split(&SplitMode::ZsOsr, s),
        Mode::Generalized => bundle.make_split(&SplitMode::Generalized, s),
        Mode::Openness { k_unseen, k_unknown } => bundle.make_split(
            &SplitMode::Openness {
                k_unseen: *k_unseen,
                k_unknown: *k_unknown,
            },
            s,
        ),
        Mode::Ood { n_unknown, .. } => {
            let other = other.ok_or_else(|| Error::Config("ood mode needs the other dataset".into()))?;
            bundle.make_split(
                &SplitMode::Ood {
                    other,
                    n_unknown: *n_unknown,
                },
                s,
            )
        }
    }
}

/// Loads the dataset(s) for `seed` and splits them.
pub fn prepare_split(cfg: &RunConfig, seed: u64) -> Result<SplitView> {
    let bundle = load_source(&cfg.dataset, seed, "world")?;
    let other = match &cfg.mode {
        Mode::Ood { other, .. } => Some(load_source(other, seed, "world-ood")?),
        _ => None,
    };
    make_split(cfg, &bundle, other.as_ref(), seed)
}

pub fn fit_generator(cfg: &GeneratorConfig, view: &TrainingView, seed: u64) -> Result<Generator> {
    let gcfg = GeneratorConfig {
        seed: sub_seed(seed, "generator"),
        ..cfg.clone()
    };
    Ok(train_generator(view, &gcfg)?.generator)
}

/// Training data of the known classes and their output order. In
/// generalized mode real seen-class features join the synthesized unseen ones.
pub fn known_training_set(
    kind: SplitKind,
    view: &TrainingView,
    generator: &Generator,
    per_class: usize,
    seed: u64,
) -> Result<(SyntheticDataset, Vec<usize>)> {
    let synth = synthesize_features(
        generator,
        view.unseen_ids(),
        view.unseen_attributes(),
        per_class,
        sub_seed(seed, "synthesize"),
    )?;
    if kind != SplitKind::Generalized {
        return Ok((synth, view.unseen_ids().to_vec()));
    }
    let mut known = SyntheticDataset {
        features: view.features().clone(),
        labels: view.labels().iter().map(|&c| Label::Class(c)).collect(),
        sources: view.labels().to_vec(),
        provenance: Provenance::Unseen,
    };
    known.extend(&synth)?;
    let order = view.seen_ids().iter().chain(view.unseen_ids()).copied().collect();
    Ok((known, order))
}

pub fn fit_closed(cfg: &ClassifierConfig, known: &SyntheticDataset, order: &[usize], seed: u64) -> Result<ClosedSetClassifier> {
    let ccfg = ClassifierConfig {
        seed: sub_seed(seed, "closed"),
        ..cfg.clone()
    };
    Ok(train_closed_classifier(known, order, &ccfg)?.classifier)
}

/// Generator, known-class training set and `φ^closed` of one split.
#[derive(Debug, Clone)]
pub struct Front {
    pub generator: Generator,
    pub known: SyntheticDataset,
    pub order: Vec<usize>,
    pub closed: ClosedSetClassifier,
}

pub fn fit_front(cfg: &RunConfig, split: &SplitView, seed: u64) -> Result<Front> {
    let view = split.training();
    let generator = fit_generator(&cfg.generator, view, seed)?;
    let (known, order) = known_training_set(split.kind, view, &generator, cfg.synth_per_class, seed)?;
    let closed = fit_closed(&cfg.classifier, &known, &order, seed)?;
    Ok(Front {
        generator,
        known,
        order,
        closed,
    })
}

/// Generalized runs grow embeddings around seen and unseen anchors.
pub fn effective_ase_config(cfg: &RunConfig, kind: SplitKind, beta: f32) -> AseConfig {
    let mut ase = cfg.ase.clone();
    ase.beta = beta;
    if kind == SplitKind::Generalized {
        ase.anchors = AnchorMode::SeenAndUnseen;
    }
    ase
}

pub fn learn_ase(ase: &AseConfig, view: &TrainingView, front: &Front, seed: u64) -> Result<AdversarialEmbeddingSet> {
    let anchors = AnchorSet::from_view(view, ase.anchors)?;
    let init = init_embeddings(&anchors, ase, sub_seed(seed, "ase-init"))?;
    learn_embeddings(&init, &front.generator, &front.closed, ase, sub_seed(seed, "ase-learn"))
}

pub fn train_ase_open(
    cfg: &RunConfig,
    ase: &AseConfig,
    front: &Front,
    set: &AdversarialEmbeddingSet,
    seed: u64,
) -> Result<(SyntheticDataset, OpenTraining)> {
    let unknown = generate_unknown_features(&front.generator, set, ase.per_embedding, sub_seed(seed, "unknown-synth"))?;
    let open = train_open(cfg, front, &unknown, seed)?;
    Ok((unknown, open))
}

fn train_open(cfg: &RunConfig, front: &Front, unknown: &SyntheticDataset, seed: u64) -> Result<OpenTraining> {
    let mut ocfg = cfg.open.clone();
    ocfg.classifier.seed = sub_seed(seed, "open");
    train_open_classifier(&front.known, unknown, &front.order, &ocfg)
}

/// `spec` with the tuned ODIN `eps` applied, or unchanged.
pub fn tuned_spec(spec: &BaselineSpec, tuning: Option<&Tuning>) -> BaselineSpec {
    let mut s = spec.clone();
    if let (BaselineKind::Odin, Some(t)) = (s.kind, tuning) {
        s.odin_eps = t.odin_eps;
    }
    s
}

pub fn baseline_predictions(
    cfg: &RunConfig,
    spec: &BaselineSpec,
    front: &Front,
    features: &Matrix,
    seed: u64,
) -> Result<Vec<ScoredPrediction>> {
    if spec.kind == BaselineKind::LogitNorm {
        let ccfg = ClassifierConfig {
            seed: sub_seed(seed, "baselines"),
            ..cfg.classifier.clone()
        };
        let model = train_logitnorm_classifier(&front.known, &front.order, spec.tau, &ccfg)?.classifier;
        return run_baseline(spec, &model, features);
    }
    run_baseline(spec, &front.closed, features)
}

pub fn variant_open(
    cfg: &RunConfig,
    strategy: VariantStrategy,
    kind: SplitKind,
    view: &TrainingView,
    front: &Front,
    seed: u64,
) -> Result<OpenTraining> {
    let ase = effective_ase_config(cfg, kind, cfg.ase.beta);
    let anchors = AnchorSet::from_view(view, ase.anchors)?;
    let inputs = VariantInputs {
        unseen_synth: &front.known,
        generator: &front.generator,
        phi_closed: &front.closed,
        anchors: &anchors,
    };
    let unknown = variant_unknowns(strategy, &inputs, &cfg.variant, sub_seed(seed, "variants"))?;
    train_open(cfg, front, &unknown, seed)
}

/// Hyperparameters picked on the validation split, with the AUROC of every
/// grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tuning {
    pub beta: f32,
    pub odin_eps: f32,
    pub beta_auroc: Vec<(f32, f64)>,
    pub odin_auroc: Vec<(f32, f64)>,
    pub val_seen: usize,
    pub val_unseen: usize,
    pub val_unknown: usize,
}

/// Re-partitions the seen classes of `view` into a validation problem with
/// the same shape as the real one. Only data visible in `view` is used.
pub fn validation_split(view: &TrainingView, n_unseen: usize, n_unknown: usize, seed: u64) -> Result<SplitView> {
    let seen = view.seen_ids();
    if seen.len() < 3 {
        return Err(Error::Config(format!(
            "validation needs at least 3 seen classes, the split has {}",
            seen.len()
        )));
    }
    let cap = (seen.len() / 4).max(1);
    let v_unseen = n_unseen.clamp(1, cap);
    let v_unknown = n_unknown.clamp(1, cap);
    let mut local: Vec<usize> = (0..seen.len()).collect();
    rand::seq::SliceRandom::shuffle(local.as_mut_slice(), &mut stage_rng(seed, "validation/classes", 0));
    let part = |r: std::ops::Range<usize>| {
        let mut ids = local[r].to_vec();
        ids.sort_unstable();
        ids
    };
    let spec = SplitSpec {
        unseen: part(0..v_unseen),
        unknown: part(v_unseen..v_unseen + v_unknown),
        seen: part(v_unseen + v_unknown..seen.len()),
        seen_test: None,
    };
    let position: BTreeMap<usize, usize> = seen.iter().enumerate().map(|(i, &c)| (c, i)).collect();
    let labels = view.labels().iter().map(|c| position[c]).collect();
    let names = seen.iter().map(|c| format!("class-{c}")).collect();
    let bundle = DatasetBundle::new(view.features().clone(), labels, view.seen_attributes().clone(), names, spec)?;
    bundle.make_split(&SplitMode::ZsOsr, seed)
}

fn pool_auroc(split: &SplitView, scored: &[ScoredPrediction]) -> Result<f64> {
    let mut known = Vec::new();
    let mut unknown = Vec::new();
    for (s, l) in scored.iter().zip(&split.test_pool().labels) {
        match l {
            Label::Unknown => unknown.push(s.score),
            Label::Class(_) => known.push(s.score),
        }
    }
    auroc(&known, &unknown)
}

fn best<T: Copy>(grid: &[(T, f64)]) -> Option<T> {
    grid.iter()
        .fold(None, |acc: Option<(T, f64)>, &(v, a)| match acc {
            Some((_, b)) if b >= a => acc,
            _ => Some((v, a)),
        })
        .map(|(v, _)| v)
}

/// The validation problem of one split. Its closed classifier is trained
/// on features the main generator synthesizes for the validation-unseen
/// classes.
#[derive(Debug, Clone)]
pub struct Validation {
    pub split: SplitView,
    pub front: Front,
    seed: u64,
}

impl Validation {
    pub fn new(cfg: &RunConfig, split: &SplitView, main: &Front, seed: u64) -> Result<Self> {
        let vseed = sub_seed(seed, "validation");
        let vsplit = validation_split(split.training(), split.unseen.len(), split.unknown.len(), vseed)?;
        let generator = main.generator.clone();
        let (known, order) =
            known_training_set(SplitKind::ZsOsr, vsplit.training(), &generator, cfg.synth_per_class, vseed)?;
        let closed = fit_closed(&cfg.classifier, &known, &order, vseed)?;
        Ok(Validation {
            split: vsplit,
            front: Front {
                generator,
                known,
                order,
                closed,
            },
            seed: vseed,
        })
    }

    /// Validation AUROC of the ASE pipeline for every β of the grid.
    pub fn beta_grid(&self, cfg: &RunConfig) -> Result<Vec<(f32, f64)>> {
        let pool = &self.split.test_pool().features;
        let mut out = Vec::new();
        for &beta in &cfg.tuning.beta_grid {
            let ase = effective_ase_config(cfg, SplitKind::ZsOsr, beta);
            let set = learn_ase(&ase, self.split.training(), &self.front, self.seed)?;
            let (_, open) = train_ase_open(cfg, &ase, &self.front, &set, self.seed)?;
            let a = pool_auroc(&self.split, &score_open(&open.classifier, pool)?)?;
            debug!("validation beta {beta}: auroc {a:.4}");
            out.push((beta, a));
        }
        Ok(out)
    }

    /// Validation AUROC of ODIN for every `eps` of the grid; empty when no
    /// ODIN baseline is configured.
    pub fn odin_grid(&self, cfg: &RunConfig) -> Result<Vec<(f32, f64)>> {
        let Some(odin) = cfg.baselines.iter().find(|b| b.kind == BaselineKind::Odin) else {
            return Ok(Vec::new());
        };
        let pool = &self.split.test_pool().features;
        let mut out = Vec::new();
        for &eps in &cfg.tuning.odin_eps_grid {
            let spec = BaselineSpec { odin_eps: eps, ..odin.clone() };
            let a = pool_auroc(&self.split, &run_baseline(&spec, &self.front.closed, pool)?)?;
            debug!("validation odin eps {eps}: auroc {a:.4}");
            out.push((eps, a));
        }
        Ok(out)
    }

    /// Packs grid results; a skipped grid keeps the configured value.
    pub fn tuning(&self, cfg: &RunConfig, beta_auroc: Vec<(f32, f64)>, odin_auroc: Vec<(f32, f64)>) -> Tuning {
        let default_eps = cfg
            .baselines
            .iter()
            .find(|b| b.kind == BaselineKind::Odin)
            .map_or(0.0, |b| b.odin_eps);
        Tuning {
            beta: best(&beta_auroc).unwrap_or(cfg.ase.beta),
            odin_eps: best(&odin_auroc).unwrap_or(default_eps),
            beta_auroc,
            odin_auroc,
            val_seen: self.split.seen.len(),
            val_unseen: self.split.unseen.len(),
            val_unknown: self.split.unknown.len(),
        }
    }
}

/// Grid search of β and the ODIN `eps` by validation AUROC. Ties keep the
/// earlier grid value.
pub fn tune(cfg: &RunConfig, split: &SplitView, front: &Front, seed: u64) -> Result<Tuning> {
    let v = Validation::new(cfg, split, front, seed)?;
    let betas = v.beta_grid(cfg)?;
    let eps = v.odin_grid(cfg)?;
    Ok(v.tuning(cfg, betas, eps))
}

pub fn run_meta(cfg: &RunConfig, split: &SplitView, method: &str, seed: u64, hash: &str) -> RunMeta {
    RunMeta {
        method: method.to_string(),
        seed,
        config_hash: hash.to_string(),
        sub_seeds: sub_seeds(seed),
        n_known_classes: split.known_test_classes().len(),
        n_unknown_classes: split.unknown.len(),
        version: VERSION.to_string(),
        fpr95_positive: cfg.fpr95_positive,
    }
}

pub fn report_for(
    cfg: &RunConfig,
    split: &SplitView,
    method: &str,
    scored: &[ScoredPrediction],
    seed: u64,
    hash: &str,
) -> Result<MetricsReport> {
    let pool = split.test_pool();
    make_report(scored, &pool.labels, &pool.groups, cfg.bins, &run_meta(cfg, split, method, seed, hash))
}

/// Summary of the learned embedding set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AseSummary {
    pub beta: f32,
    pub n_embeddings: usize,
    pub mean_distance: f64,
    pub min_distance: f64,
    pub mean_final_adv: f64,
    pub trend_ok: bool,
    pub n_unknown_rows: usize,
    pub open_known_accuracy: f64,
    pub open_unknown_recall: f64,
}

impl AseSummary {
    pub fn new(beta: f32, set: &AdversarialEmbeddingSet, unknown_rows: usize, open: &OpenTraining) -> Self {
        let d = set.distances();
        let n = set.final_adv.len().max(1) as f64;
        AseSummary {
            beta,
            n_embeddings: set.len(),
            mean_distance: set.mean_distance(),
            min_distance: d.iter().copied().fold(f64::INFINITY, f64::min),
            mean_final_adv: set.final_adv.iter().sum::<f64>() / n,
            trend_ok: set.trend_ok,
            n_unknown_rows: unknown_rows,
            open_known_accuracy: open.known_accuracy,
            open_unknown_recall: open.unknown_recall,
        }
    }
}

/// Everything one seed of the protocol produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutcome {
    pub seed: u64,
    pub sub_seeds: BTreeMap<String, u64>,
    pub tuning: Option<Tuning>,
    pub ase: AseSummary,
    /// `ase` first, then baselines, then variants, in config order.
    pub reports: Vec<MetricsReport>,
}

impl ExperimentOutcome {
    pub fn report(&self, method: &str) -> Option<&MetricsReport> {
        self.reports.iter().find(|r| r.method == method)
    }
}

/// Runs the whole protocol for one master seed, in memory.
pub fn run_experiment(cfg: &RunConfig, seed: u64) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let hashes = StageHashes::of(cfg, seed)?;
    let split = prepare_split(cfg, seed)?;
    let view = split.training();
    let front = fit_front(cfg, &split, seed)?;
    let tuning = if cfg.tuning.enabled { Some(tune(cfg, &split, &front, seed)?) } else { None };
    let beta = tuning.as_ref().map_or(cfg.ase.beta, |t| t.beta);
    info!("seed {seed}: beta {beta}");

    let ase = effective_ase_config(cfg, split.kind, beta);
    let set = learn_ase(&ase, view, &front, seed)?;
    let (unknown, open) = train_ase_open(cfg, &ase, &front, &set, seed)?;
    let pool = &split.test_pool().features;

    let mut reports = vec![report_for(cfg, &split, "ase", &score_open(&open.classifier, pool)?, seed, &hashes.eval)?];
    for spec in &cfg.baselines {
        let spec = tuned_spec(spec, tuning.as_ref());
        let scored = baseline_predictions(cfg, &spec, &front, pool, seed)?;
        reports.push(report_for(cfg, &split, spec.kind.as_str(), &scored, seed, &hashes.eval)?);
    }
    for &strategy in &cfg.variants {
        let vopen = variant_open(cfg, strategy, split.kind, view, &front, seed)?;
        let scored = score_open(&vopen.classifier, pool)?;
        reports.push(report_for(cfg, &split, strategy.as_str(), &scored, seed, &hashes.eval)?);
    }
    Ok(ExperimentOutcome {
        seed,
        sub_seeds: sub_seeds(seed),
        tuning,
        ase: AseSummary::new(beta, &set, unknown.len(), &open),
        reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::SynthConfig;

    fn tiny() -> RunConfig {
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

    #[test]
    fn sub_seeds_are_distinct_and_stable() {
        let a = sub_seeds(3);
        assert_eq!(a.len(), SUB_SEED_NAMES.len());
        let uniq: std::collections::BTreeSet<_> = a.values().collect();
        assert_eq!(uniq.len(), a.len());
        assert_eq!(a, sub_seeds(3));
        assert_ne!(a, sub_seeds(4));
    }

    #[test]
    fn hash_chain_propagates_downstream_only() {
        let cfg = tiny();
        let h = StageHashes::of(&cfg, 0).unwrap();
        let mut c2 = cfg.clone();
        c2.open.unknown_weight = Some(0.5);
        let h2 = StageHashes::of(&c2, 0).unwrap();
        assert_eq!(h.train_closed, h2.train_closed);
        assert_eq!(h.baseline, h2.baseline);
        assert_ne!(h.learn_ase, h2.learn_ase);
        assert_ne!(h.train_open, h2.train_open);
        assert_ne!(h.eval, h2.eval);
        let mut c3 = cfg.clone();
        c3.generator.steps += 1;
        let h3 = StageHashes::of(&c3, 0).unwrap();
        assert_eq!(h.split, h3.split);
        assert_ne!(h.train_gen, h3.train_gen);
        assert_ne!(h.baseline, h3.baseline);
        assert_ne!(h.split, StageHashes::of(&cfg, 1).unwrap().split);
    }

    #[test]
    fn validation_split_only_uses_seen_classes() {
        let cfg = tiny();
        let split = prepare_split(&cfg, 0).unwrap();
        let v = validation_split(split.training(), 2, 2, 9).unwrap();
        assert_eq!((v.seen.len(), v.unseen.len(), v.unknown.len()), (4, 2, 2));
        // Validation ids are positions in the real seen list.
        let n = split.training().seen_ids().len();
        assert!(v.seen.iter().chain(&v.unseen).chain(&v.unknown).all(|&c| c < n));
        assert_eq!(v.training().features().rows() + v.test_pool().len(), split.training().features().rows());
        assert_eq!(v, validation_split(split.training(), 2, 2, 9).unwrap());
    }

    #[test]
    fn best_prefers_first_on_ties() {
        assert_eq!(best(&[(1, 0.5), (2, 0.7), (3, 0.7)]), Some(2));
        assert_eq!(best::<u8>(&[]), None);
    }

    #[test]
    fn tiny_run_reports_every_method_and_is_deterministic() {
        let cfg = tiny();
        let out = run_experiment(&cfg, 1).unwrap();
        let names: Vec<&str> = out.reports.iter().map(|r| r.method.as_str()).collect();
        assert_eq!(
            names,
            [
                "ase",
                "msp",
                "maxlogit",
                "energy",
                "odin",
                "logitnorm",
                "mixup",
                "uniform-noise",
                "semantic-noise",
                "adversarial-features"
            ]
        );
        let t = out.tuning.as_ref().unwrap();
        assert_eq!(t.beta_auroc.len(), 2);
        assert_eq!(t.odin_auroc.len(), 3);
        assert!(cfg.tuning.beta_grid.contains(&t.beta));
        assert_eq!(out.ase.n_embeddings, 2 * 4);
        assert_eq!(out.ase.n_unknown_rows, 2 * 4 * 20);
        for r in &out.reports {
            assert!((0.0..=1.0).contains(&r.auroc), "{}: {}", r.method, r.auroc);
            assert_eq!(r.n_unseen_samples, 60);
            assert_eq!(r.n_unknown_samples, 60);
        }
        assert_eq!(out, run_experiment(&cfg, 1).unwrap());
    }

    #[test]
    fn generalized_mode_uses_all_known_classes() {
        let mut cfg = tiny();
        cfg.mode = Mode::Generalized;
        cfg.tuning.enabled = false;
        cfg.variants.clear();
        cfg.baselines = vec![BaselineSpec::new(BaselineKind::Msp)];
        let out = run_experiment(&cfg, 0).unwrap();
        assert!(out.tuning.is_none());
        // 8 seen + 2 unseen anchors.
        assert_eq!(out.ase.n_embeddings, 10 * 4);
        let r = out.report("ase").unwrap();
        assert_eq!(r.n_seen_samples, 8 * 6);
        assert!((r.openness - (1.0 - (10.0f64 / 12.0).sqrt())).abs() < 1e-12);
    }

    #[test]
    fn ood_mode_draws_unknowns_from_the_other_world() {
        let mut cfg = tiny();
        let other = cfg.dataset.clone();
        cfg.mode = Mode::Ood { other, n_unknown: 3 };
        cfg.tuning.enabled = false;
        cfg.variants.clear();
        cfg.baselines.clear();
        let out = run_experiment(&cfg, 0).unwrap();
        assert_eq!(out.report("ase").unwrap().n_unknown_samples, 3 * 30);
    }
}
